"""Smoke test for the commitsift Python module.

    cd crates/py && maturin develop --release
    python python/smoke_test.py
"""

import json
import os
import tempfile

import commitsift as cs

PATCH = """diff --git a/src/auth.c b/src/auth.c
--- a/src/auth.c
+++ b/src/auth.c
@@ -1,3 +1,3 @@
 int check(void) {
-    return strcmp(userPassword, input);
+    return constantTimeCompare(userPassword, input);
 }
"""


def main():
    assert cs.stem("vulnerabilities") == "vulner"
    assert cs.split_composite("parseHTTPHeader") == ["parse", "http", "header"]
    assert cs.changed_lines(PATCH) == [
        "    return strcmp(userPassword, input);",
        "    return constantTimeCompare(userPassword, input);",
    ]
    tokens = cs.tokenize_patch(PATCH)
    assert "compar" in tokens and "check" not in tokens, tokens
    assert "xss" in cs.tokenize_message("Fix XSS in the login form")

    data = cs.Dataset.synthetic(positives=40, negatives=200, seed=3)
    assert len(data) == 240 and data.count("positive") == 40

    model = cs.CommitClassifier.train(data, w_p=0.6)
    with tempfile.TemporaryDirectory() as tmp:
        data_path = os.path.join(tmp, "data.jsonl")
        model_path = os.path.join(tmp, "model.json")
        data.save(data_path)
        model.save(model_path)
        assert len(cs.Dataset.load(data_path)) == 240
        reloaded = cs.CommitClassifier.load(model_path)

    commits = data.commits()
    for a, b in zip(model.classify_dataset(data), map(reloaded.classify, commits)):
        assert (a.msg_score, a.patch_score, a.joint_label) == (b.msg_score, b.patch_score, b.joint_label)

    report = cs.cross_validate(data, w_p=0.6, folds=5)
    joint = report["joint"]
    assert joint["tp"] + joint["fp"] + joint["fn"] + joint["tn"] == 240

    points, selected = cs.sweep_weights(data, grid="0.2:0.8:0.3", folds=5)
    assert [p["w_p"] for p in points] == [0.2, 0.5, 0.8]
    print(json.dumps({"joint_cv": joint, "selected_w_p": selected and selected["w_p"]}))
    print("smoke test passed")


if __name__ == "__main__":
    main()
