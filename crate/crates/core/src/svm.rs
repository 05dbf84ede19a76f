//! Class-weighted linear SVM with hinge loss and L2 regularization.
//!
//! Training minimizes
//!
//! ```text
//! J(w, b) = ½‖w‖² + C · Σᵢ m(yᵢ) · max(0, 1 − yᵢ(w·xᵢ + b))
//! ```
//!
//! with `m(+1) = w_p`, `m(−1) = 1 − w_p` and an unregularized bias.
//!
//! The solver works on the dual (box constraints `0 ≤ αᵢ ≤ C·m(yᵢ)` plus
//! `Σ yᵢαᵢ = 0`), handling the equality constraint with an augmented
//! Lagrangian: each epoch is one coordinate-descent pass over a seeded
//! permutation followed by a multiplier update. The primal point implied by
//! the pass (`w = Σ αᵢyᵢxᵢ`, bias chosen exactly for that `w`) is then used
//! as a search direction from the current primal iterate, with an exact line
//! search on `J`. The primal objective therefore never increases from one
//! epoch to the next.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::features::SparseVector;

/// Anything that can be read as a sparse real vector.
pub trait FeatureRow {
    fn dim(&self) -> usize;
    fn values(&self) -> impl Iterator<Item = (usize, f64)> + '_;
}

impl FeatureRow for SparseVector {
    fn dim(&self) -> usize {
        SparseVector::dim(self)
    }

    fn values(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries().iter().map(|&(i, c)| (i as usize, c as f64))
    }
}

impl<R: FeatureRow> FeatureRow for &R {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn values(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (**self).values()
    }
}

/// A count vector scaled to unit L2 norm (the zero vector stays zero).
#[derive(Debug, Clone, Copy)]
pub struct Normalized<'a>(pub &'a SparseVector);

impl FeatureRow for Normalized<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn values(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let norm = self.0.norm();
        let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
        self.0
            .entries()
            .iter()
            .map(move |&(i, c)| (i as usize, c as f64 * scale))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Misclassification weight of the positive class; the negative class
    /// gets `1 − w_p`.
    pub w_p: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub tol: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            w_p: 0.5,
            c: 1.0,
            tol: 1e-4,
            max_epochs: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_w_p(self, w_p: f64) -> Self {
        TrainConfig { w_p, ..self }
    }

    pub fn w_n(&self) -> f64 {
        1.0 - self.w_p
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w_p > 0.0 && self.w_p < 1.0) {
            return Err(Error::Config(format!("w_p must lie in (0, 1), got {}", self.w_p)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        Ok(())
    }

    /// `C · m(label)`, the hinge multiplier of one example.
    pub fn penalty(&self, label: Label) -> f64 {
        match label {
            Label::Positive => self.c * self.w_p,
            Label::Negative => self.c * self.w_n(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    weights: Vec<f64>,
    bias: f64,
    config: TrainConfig,
    vocab_fingerprint: String,
}

impl LinearModel {
    pub fn new(
        weights: Vec<f64>,
        bias: f64,
        config: TrainConfig,
        vocab_fingerprint: impl Into<String>,
    ) -> Result<Self> {
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Train("model parameters must be finite".into()));
        }
        Ok(LinearModel {
            weights,
            bias,
            config,
            vocab_fingerprint: vocab_fingerprint.into(),
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn vocab_fingerprint(&self) -> &str {
        &self.vocab_fingerprint
    }

    pub fn with_vocab_fingerprint(mut self, fingerprint: impl Into<String>) -> Self {
        self.vocab_fingerprint = fingerprint.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }
}

/// Examples packed row-wise (CSR).
struct Design {
    indptr: Vec<usize>,
    index: Vec<usize>,
    value: Vec<f64>,
    dim: usize,
}

impl Design {
    fn new<R: FeatureRow>(rows: &[R], dim: usize) -> Result<Self> {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut index = Vec::new();
        let mut value = Vec::new();
        indptr.push(0);
        for row in rows {
            if row.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: row.dim(),
                });
            }
            for (i, v) in row.values() {
                if !v.is_finite() {
                    return Err(Error::Train("non-finite feature value".into()));
                }
                index.push(i);
                value.push(v);
            }
            indptr.push(index.len());
        }
        Ok(Design {
            indptr,
            index,
            value,
            dim,
        })
    }

    fn len(&self) -> usize {
        self.indptr.len() - 1
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.index[span.clone()]
            .iter()
            .copied()
            .zip(self.value[span].iter().copied())
    }

    fn dot(&self, i: usize, w: &[f64]) -> f64 {
        self.row(i).map(|(j, v)| w[j] * v).sum()
    }

    fn axpy(&self, i: usize, scale: f64, w: &mut [f64]) {
        for (j, v) in self.row(i) {
            w[j] += scale * v;
        }
    }

    fn sq_norm(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v * v).sum()
    }
}

/// Per-example sign and hinge multiplier.
struct Problem {
    design: Design,
    sign: Vec<f64>,
    cost: Vec<f64>,
}

impl Problem {
    fn new<R: FeatureRow>(x: &[R], y: &[Label], cfg: &TrainConfig, dim: usize) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Length {
                left: x.len(),
                right: y.len(),
            });
        }
        Ok(Problem {
            design: Design::new(x, dim)?,
            sign: y.iter().map(|l| l.sign()).collect(),
            cost: y.iter().map(|&l| cfg.penalty(l)).collect(),
        })
    }

    fn objective(&self, w: &[f64], b: f64) -> f64 {
        let reg = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
        let loss: f64 = (0..self.design.len())
            .map(|i| {
                let margin = self.sign[i] * (self.design.dot(i, w) + b);
                self.cost[i] * (1.0 - margin).max(0.0)
            })
            .sum();
        reg + loss
    }

    /// The bias minimizing `J(w, ·)` for fixed `w`. Where the optimum is a
    /// flat interval, its midpoint.
    fn best_bias(&self, w: &[f64]) -> f64 {
        let n = self.design.len();
        // Hinge i changes slope by +cost[i] at b = y_i − w·x_i.
        let mut breaks: Vec<(f64, f64)> = (0..n)
            .map(|i| (self.sign[i] - self.design.dot(i, w), self.cost[i]))
            .collect();
        breaks.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = self.cost.iter().sum();
        let eps = 1e-12 * total.max(1.0);
        let mut slope: f64 = -(0..n)
            .filter(|&i| self.sign[i] > 0.0)
            .map(|i| self.cost[i])
            .sum::<f64>();
        if slope >= -eps {
            // No positives: any bias at or below the lowest breakpoint works.
            return breaks.first().map_or(0.0, |b| b.0);
        }
        for (k, &(at, c)) in breaks.iter().enumerate() {
            slope += c;
            if slope > eps {
                return at;
            }
            if slope >= -eps {
                return match breaks.get(k + 1) {
                    Some(&(next, _)) => 0.5 * (at + next),
                    None => at,
                };
            }
        }
        breaks.last().map_or(0.0, |b| b.0)
    }

    /// Minimizes `J((w0, b0) + t·(dw, db))` over `t ∈ [0, 1]` exactly.
    fn line_search(&self, w0: &[f64], b0: f64, dw: &[f64], db: f64) -> f64 {
        let n = self.design.len();
        let a: f64 = w0.iter().zip(dw).map(|(w, d)| w * d).sum();
        let dd: f64 = dw.iter().map(|d| d * d).sum();

        // Term i is active while u_i(t) = u0 − t·du > 0.
        let mut slope_h = 0.0;
        let mut events: Vec<(f64, f64)> = Vec::new();
        for i in 0..n {
            let u0 = 1.0 - self.sign[i] * (self.design.dot(i, w0) + b0);
            let du = self.sign[i] * (self.design.dot(i, dw) + db);
            let contribution = -self.cost[i] * du;
            if du == 0.0 {
                if u0 > 0.0 {
                    slope_h += contribution;
                }
                continue;
            }
            let active_now = u0 > 0.0 || (u0 == 0.0 && du < 0.0);
            if active_now {
                slope_h += contribution;
            }
            let t = u0 / du;
            if t > 0.0 && t < 1.0 {
                // Crossing toggles the term.
                let delta = if active_now { -contribution } else { contribution };
                events.push((t, delta));
            }
        }
        events.sort_by(|x, y| x.0.total_cmp(&y.0));

        let derivative = |t: f64, h: f64| a + dd * t + h;
        let mut start = 0.0;
        let mut h = slope_h;
        for (at, delta) in events {
            if derivative(start, h) >= 0.0 {
                return start;
            }
            if derivative(at, h) > 0.0 {
                return -(a + h) / dd;
            }
            h += delta;
            start = at;
        }
        if derivative(start, h) >= 0.0 {
            start
        } else if derivative(1.0, h) > 0.0 {
            -(a + h) / dd
        } else {
            1.0
        }
    }

    fn solve(&self, cfg: &TrainConfig) -> (Vec<f64>, f64, Vec<f64>) {
        let n = self.design.len();
        let d = self.design.dim;
        let q: Vec<f64> = (0..n).map(|i| self.design.sq_norm(i)).collect();
        let rho = (q.iter().sum::<f64>() / n.max(1) as f64).max(1.0);
        let kkt_tol = cfg.tol.sqrt();

        let mut alpha = vec![0.0; n];
        let mut v = vec![0.0; d];
        let mut residual = 0.0; // Σ yᵢαᵢ
        let mut multiplier = 0.0;

        let mut w = vec![0.0; d];
        let mut b = self.best_bias(&w);
        let mut j = self.objective(&w, b);
        let mut history = vec![j];

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..n).collect();
        let mut dw = vec![0.0; d];

        for _ in 0..cfg.max_epochs {
            order.shuffle(&mut rng);
            let mut max_violation: f64 = 0.0;
            for &i in &order {
                let y = self.sign[i];
                let g = y * (self.design.dot(i, &v) + multiplier + rho * residual) - 1.0;
                let pg = if alpha[i] <= 0.0 {
                    g.min(0.0)
                } else if alpha[i] >= self.cost[i] {
                    g.max(0.0)
                } else {
                    g
                };
                max_violation = max_violation.max(pg.abs());
                if pg == 0.0 {
                    continue;
                }
                let updated = (alpha[i] - g / (q[i] + rho)).clamp(0.0, self.cost[i]);
                let delta = updated - alpha[i];
                if delta != 0.0 {
                    alpha[i] = updated;
                    self.design.axpy(i, delta * y, &mut v);
                    residual += delta * y;
                }
            }
            multiplier += rho * residual;

            let proposal_bias = self.best_bias(&v);
            for k in 0..d {
                dw[k] = v[k] - w[k];
            }
            let db = proposal_bias - b;
            let t = self.line_search(&w, b, &dw, db);
            let w_next: Vec<f64> = w.iter().zip(&dw).map(|(w, d)| w + t * d).collect();
            let b_next = b + t * db;
            let j_next = self.objective(&w_next, b_next);

            let previous = j;
            if j_next < j {
                w = w_next;
                b = b_next;
                j = j_next;
            }
            history.push(j);

            let improvement = (previous - j) / previous.abs().max(f64::MIN_POSITIVE);
            let dual_converged = max_violation < kkt_tol && (rho * residual).abs() < kkt_tol;
            if improvement < cfg.tol && dual_converged {
                break;
            }
        }
        (w, b, history)
    }
}

fn check_training_input<R: FeatureRow>(x: &[R], y: &[Label]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::Length {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Train("need at least two examples".into()));
    }
    if !(y.contains(&Label::Positive) && y.contains(&Label::Negative)) {
        return Err(Error::Train("training data must contain both classes".into()));
    }
    Ok(x[0].dim())
}

/// Trains a model and returns the primal objective after every epoch
/// (index 0 is the starting point).
pub fn train_with_history<R: FeatureRow>(x: &[R], y: &[Label], cfg: &TrainConfig) -> Result<(LinearModel, Vec<f64>)> {
    cfg.validate()?;
    let dim = check_training_input(x, y)?;
    let problem = Problem::new(x, y, cfg, dim)?;
    let (weights, bias, history) = problem.solve(cfg);
    let model = LinearModel::new(weights, bias, *cfg, "")?;
    Ok((model, history))
}

pub fn train<R: FeatureRow>(x: &[R], y: &[Label], cfg: &TrainConfig) -> Result<LinearModel> {
    train_with_history(x, y, cfg).map(|(model, _)| model)
}

/// `w·x + b`.
pub fn decision<R: FeatureRow>(model: &LinearModel, x: &R) -> Result<f64> {
    if x.dim() != model.weights.len() {
        return Err(Error::Dimension {
            expected: model.weights.len(),
            found: x.dim(),
        });
    }
    Ok(x.values().map(|(i, v)| model.weights[i] * v).sum::<f64>() + model.bias)
}

/// Positive iff the decision value is strictly greater than zero.
pub fn predict<R: FeatureRow>(model: &LinearModel, x: &R) -> Result<Label> {
    decision(model, x).map(label_of_score)
}

pub fn label_of_score(score: f64) -> Label {
    if score > 0.0 {
        Label::Positive
    } else {
        Label::Negative
    }
}

/// `J(w, b)` at arbitrary parameters.
pub fn objective_at<R: FeatureRow>(weights: &[f64], bias: f64, x: &[R], y: &[Label], cfg: &TrainConfig) -> Result<f64> {
    let problem = Problem::new(x, y, cfg, weights.len())?;
    Ok(problem.objective(weights, bias))
}

pub fn objective<R: FeatureRow>(model: &LinearModel, x: &[R], y: &[Label], cfg: &TrainConfig) -> Result<f64> {
    objective_at(&model.weights, model.bias, x, y, cfg)
}

/// A subgradient of `J` at `(weights, bias)`; hinge terms sitting exactly on
/// the margin contribute zero. Returns `(∂J/∂w, ∂J/∂b)`.
pub fn subgradient<R: FeatureRow>(
    weights: &[f64],
    bias: f64,
    x: &[R],
    y: &[Label],
    cfg: &TrainConfig,
) -> Result<(Vec<f64>, f64)> {
    let problem = Problem::new(x, y, cfg, weights.len())?;
    let mut grad_w = weights.to_vec();
    let mut grad_b = 0.0;
    for i in 0..problem.design.len() {
        let margin = problem.sign[i] * (problem.design.dot(i, weights) + bias);
        if margin < 1.0 {
            let scale = -problem.cost[i] * problem.sign[i];
            problem.design.axpy(i, scale, &mut grad_w);
            grad_b += scale;
        }
    }
    Ok((grad_w, grad_b))
}
