//! The original Porter (1980) suffix-stripping stemmer.
//!
//! Follows the algorithm as originally defined (`abli -> able`, no `logi`
//! rule) and applies it to every word, including ones of one or two letters.

/// Stems a lowercase ASCII word. Words containing anything other than
/// `a-z` are returned unchanged.
pub fn stem(word: &str) -> String {
    if word.is_empty() || !word.bytes().all(|b| b.is_ascii_lowercase()) {
        return word.to_string();
    }
    let mut stemmer = Stemmer {
        b: word.as_bytes().to_vec(),
        j: 0,
    };
    stemmer.step1a();
    stemmer.step1b();
    stemmer.step1c();
    stemmer.step2();
    stemmer.step3();
    stemmer.step4();
    stemmer.step5();
    // Only ASCII bytes were ever written.
    String::from_utf8(stemmer.b).expect("ascii")
}

struct Stemmer {
    b: Vec<u8>,
    /// Length of the stem preceding the suffix matched by the last `ends`.
    j: usize,
}

impl Stemmer {
    fn len(&self) -> usize {
        self.b.len()
    }

    /// Is `b[i]` a consonant? `y` counts as a consonant at the start of the
    /// word and after a vowel.
    fn cons(&self, i: usize) -> bool {
        match self.b[i] {
            b'a' | b'e' | b'i' | b'o' | b'u' => false,
            b'y' => i == 0 || !self.cons(i - 1),
            _ => true,
        }
    }

    /// Number of VC sequences in `b[..end]`.
    fn measure(&self, end: usize) -> usize {
        let mut n = 0;
        let mut i = 0;
        while i < end && self.cons(i) {
            i += 1;
        }
        loop {
            while i < end && !self.cons(i) {
                i += 1;
            }
            if i >= end {
                return n;
            }
            while i < end && self.cons(i) {
                i += 1;
            }
            n += 1;
        }
    }

    fn m(&self) -> usize {
        self.measure(self.j)
    }

    fn vowel_in_stem(&self) -> bool {
        (0..self.j).any(|i| !self.cons(i))
    }

    /// Ends in a double consonant at position `i`?
    fn double_cons(&self, i: usize) -> bool {
        i >= 1 && self.b[i] == self.b[i - 1] && self.cons(i)
    }

    /// consonant-vowel-consonant ending at `i`, last consonant not w, x or y.
    fn cvc(&self, i: usize) -> bool {
        if i < 2 || !self.cons(i) || self.cons(i - 1) || !self.cons(i - 2) {
            return false;
        }
        !matches!(self.b[i], b'w' | b'x' | b'y')
    }

    fn ends(&mut self, suffix: &str) -> bool {
        let s = suffix.as_bytes();
        if s.len() > self.len() || !self.b.ends_with(s) {
            return false;
        }
        self.j = self.len() - s.len();
        true
    }

    fn set_to(&mut self, replacement: &str) {
        self.b.truncate(self.j);
        self.b.extend_from_slice(replacement.as_bytes());
    }

    /// Replaces the matched suffix if the stem has m > 0.
    fn replace_if_measured(&mut self, replacement: &str) {
        if self.m() > 0 {
            self.set_to(replacement);
        }
    }

    /// Applies the first rule whose suffix matches; later rules are not
    /// tried even when the first one's condition fails.
    fn apply_first(&mut self, rules: &[(&str, &str)]) {
        for (suffix, replacement) in rules {
            if self.ends(suffix) {
                self.replace_if_measured(replacement);
                return;
            }
        }
    }

    fn step1a(&mut self) {
        if self.ends("sses") || self.ends("ies") {
            let keep = self.len() - 2;
            self.b.truncate(keep);
        } else if !self.ends("ss") && self.ends("s") {
            self.b.pop();
        }
    }

    fn step1b(&mut self) {
        if self.ends("eed") {
            if self.m() > 0 {
                self.b.pop();
            }
            return;
        }
        if !((self.ends("ed") || self.ends("ing")) && self.vowel_in_stem()) {
            return;
        }
        self.b.truncate(self.j);
        let k = self.len();
        if self.ends("at") || self.ends("bl") || self.ends("iz") {
            self.b.push(b'e');
        } else if self.double_cons(k - 1) {
            if !matches!(self.b[k - 1], b'l' | b's' | b'z') {
                self.b.pop();
            }
        } else {
            self.j = k;
            if self.m() == 1 && self.cvc(k - 1) {
                self.b.push(b'e');
            }
        }
    }

    fn step1c(&mut self) {
        if self.ends("y") && self.vowel_in_stem() {
            let k = self.len();
            self.b[k - 1] = b'i';
        }
    }

    fn step2(&mut self) {
        if self.len() < 2 {
            return;
        }
        let rules: &[(&str, &str)] = match self.b[self.len() - 2] {
            b'a' => &[("ational", "ate"), ("tional", "tion")],
            b'c' => &[("enci", "ence"), ("anci", "ance")],
            b'e' => &[("izer", "ize")],
            b'l' => &[
                ("abli", "able"),
                ("alli", "al"),
                ("entli", "ent"),
                ("eli", "e"),
                ("ousli", "ous"),
            ],
            b'o' => &[("ization", "ize"), ("ation", "ate"), ("ator", "ate")],
            b's' => &[
                ("alism", "al"),
                ("iveness", "ive"),
                ("fulness", "ful"),
                ("ousness", "ous"),
            ],
            b't' => &[("aliti", "al"), ("iviti", "ive"), ("biliti", "ble")],
            _ => return,
        };
        self.apply_first(rules);
    }

    fn step3(&mut self) {
        let Some(&last) = self.b.last() else { return };
        let rules: &[(&str, &str)] = match last {
            b'e' => &[("icate", "ic"), ("ative", ""), ("alize", "al")],
            b'i' => &[("iciti", "ic")],
            b'l' => &[("ical", "ic"), ("ful", "")],
            b's' => &[("ness", "")],
            _ => return,
        };
        self.apply_first(rules);
    }

    fn step4(&mut self) {
        if self.len() < 2 {
            return;
        }
        let suffixes: &[&str] = match self.b[self.len() - 2] {
            b'a' => &["al"],
            b'c' => &["ance", "ence"],
            b'e' => &["er"],
            b'i' => &["ic"],
            b'l' => &["able", "ible"],
            b'n' => &["ant", "ement", "ment", "ent"],
            b'o' => {
                if self.ends("ion") && self.j > 0 && matches!(self.b[self.j - 1], b's' | b't') {
                    &["ion"]
                } else {
                    &["ou"]
                }
            }
            b's' => &["ism"],
            b't' => &["ate", "iti"],
            b'u' => &["ous"],
            b'v' => &["ive"],
            b'z' => &["ize"],
            _ => return,
        };
        for suffix in suffixes {
            if self.ends(suffix) {
                if self.m() > 1 {
                    self.b.truncate(self.j);
                }
                return;
            }
        }
    }

    fn step5(&mut self) {
        let k = self.len();
        if k == 0 {
            return;
        }
        if self.b[k - 1] == b'e' {
            self.j = k - 1;
            let m = self.m();
            if m > 1 || (m == 1 && !self.cvc(k - 2)) {
                self.b.pop();
            }
        }
        let k = self.len();
        if k > 0 && self.b[k - 1] == b'l' && self.double_cons(k - 1) {
            self.j = k;
            if self.m() > 1 {
                self.b.pop();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::stem;

    #[test]
    fn classic_examples() {
        for (word, expected) in [
            ("caresses", "caress"),
            ("ponies", "poni"),
            ("ties", "ti"),
            ("caress", "caress"),
            ("cats", "cat"),
            ("feed", "feed"),
            ("agreed", "agre"),
            ("plastered", "plaster"),
            ("motoring", "motor"),
            ("sing", "sing"),
            ("conflated", "conflat"),
            ("hopping", "hop"),
            ("falling", "fall"),
            ("filing", "file"),
            ("happy", "happi"),
            ("relational", "relat"),
            ("generalizations", "gener"),
            ("oscillators", "oscil"),
            ("sanitize", "sanit"),
            ("parser", "parser"),
            ("vulnerability", "vulner"),
        ] {
            assert_eq!(stem(word), expected, "{word}");
        }
    }

    #[test]
    fn non_alphabetic_passes_through() {
        assert_eq!(stem("x9"), "x9");
        assert_eq!(stem("sha256"), "sha256");
        assert_eq!(stem("404"), "404");
        assert_eq!(stem(""), "");
    }
}
