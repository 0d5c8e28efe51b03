//! Single-hidden-layer perceptron: ReLU hidden units, softmax output,
//! trained by mini-batch SGD on categorical cross-entropy.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dimred::FeatureMatrix;
use crate::labels::ClassId;
use crate::rng;

/// Hidden-layer sizes swept in experiments.
pub const HIDDEN_SWEEP: [usize; 4] = [50, 100, 150, 350];

const PROB_FLOOR: f64 = 1e-15;

#[derive(Debug, Error, PartialEq)]
pub enum MlpError {
    #[error("input has length {got}, model expects {expected}")]
    InputLength { expected: usize, got: usize },
    #[error("label {label} outside 1..={classes}")]
    Label { label: ClassId, classes: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub m: usize,
    pub h: usize,
    pub o: usize,
    /// `h x m`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `o x h`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 200,
            batch_size: 32,
            seed: rng::DEFAULT_SEED,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), MlpError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(MlpError::Config(format!("learning rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(MlpError::Config("batch size 0".into()));
        }
        Ok(())
    }
}

/// Glorot-uniform weights, zero biases.
pub fn mlp_init(m: usize, h: usize, o: usize, seed: u64) -> MlpModel {
    let mut r = rng::rng(seed);
    let mut glorot = |fan_in: usize, fan_out: usize| -> Vec<f64> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        (0..fan_in * fan_out).map(|_| r.random_range(-limit..limit)).collect()
    };
    let w1 = glorot(m, h);
    let w2 = glorot(h, o);
    MlpModel {
        m,
        h,
        o,
        w1,
        b1: vec![0.0; h],
        w2,
        b2: vec![0.0; o],
    }
}

/// Softmax with max subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy `-ln p[label]`, probability floored at 1e-15. Labels are 1-based.
pub fn loss(probs: &[f64], label: ClassId) -> Result<f64, MlpError> {
    if label == 0 || label > probs.len() {
        return Err(MlpError::Label {
            label,
            classes: probs.len(),
        });
    }
    Ok(-probs[label - 1].max(PROB_FLOOR).ln())
}

/// Index of the maximum, lowest index on ties.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

struct Activations {
    pre_hidden: Vec<f64>,
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

impl MlpModel {
    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Parameter `i` in the flat order w1, b1, w2, b2.
    pub fn param(&self, i: usize) -> f64 {
        *self.param_ref(i)
    }

    pub fn set_param(&mut self, i: usize, v: f64) {
        *self.param_mut(i) = v;
    }

    fn param_ref(&self, mut i: usize) -> &f64 {
        for part in [&self.w1, &self.b1, &self.w2, &self.b2] {
            if i < part.len() {
                return &part[i];
            }
            i -= part.len();
        }
        panic!("parameter index out of range")
    }

    fn param_mut(&mut self, mut i: usize) -> &mut f64 {
        for part in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            if i < part.len() {
                return &mut part[i];
            }
            i -= part.len();
        }
        panic!("parameter index out of range")
    }

    fn check_input(&self, x: &[f64]) -> Result<(), MlpError> {
        if x.len() != self.m {
            return Err(MlpError::InputLength {
                expected: self.m,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn activations(&self, x: &[f64]) -> Activations {
        let pre_hidden: Vec<f64> = (0..self.h)
            .map(|j| {
                let row = &self.w1[j * self.m..(j + 1) * self.m];
                row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[j]
            })
            .collect();
        let hidden: Vec<f64> = pre_hidden.iter().map(|&z| z.max(0.0)).collect();
        let logits: Vec<f64> = (0..self.o)
            .map(|k| {
                let row = &self.w2[k * self.h..(k + 1) * self.h];
                row.iter().zip(&hidden).map(|(w, a)| w * a).sum::<f64>() + self.b2[k]
            })
            .collect();
        Activations {
            pre_hidden,
            hidden,
            probs: softmax(&logits),
        }
    }

    /// Hidden pre-activations `w1 x + b1`.
    pub fn pre_activations(&self, x: &[f64]) -> Result<Vec<f64>, MlpError> {
        self.check_input(x)?;
        Ok(self.activations(x).pre_hidden)
    }

    /// `(hidden activations, class probabilities)`.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), MlpError> {
        self.check_input(x)?;
        let a = self.activations(x);
        Ok((a.hidden, a.probs))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>, MlpError> {
        self.forward(x).map(|(_, p)| p)
    }

    /// 1-based class id of the most probable class, lowest id on ties.
    pub fn predict(&self, x: &[f64]) -> Result<ClassId, MlpError> {
        self.predict_proba(x).map(|p| argmax(&p) + 1)
    }

    /// Mean loss over a batch and its gradient, flat in `param` order.
    pub fn batch_gradient(&self, xs: &[&[f64]], labels: &[ClassId]) -> Result<(f64, Vec<f64>), MlpError> {
        if xs.len() != labels.len() || xs.is_empty() {
            return Err(MlpError::Shape(format!("{} inputs, {} labels", xs.len(), labels.len())));
        }
        let (m, h, o) = (self.m, self.h, self.o);
        let mut grad = vec![0.0; self.param_count()];
        let (gw1, rest) = grad.split_at_mut(h * m);
        let (gb1, rest) = rest.split_at_mut(h);
        let (gw2, gb2) = rest.split_at_mut(o * h);
        let mut total = 0.0;
        let mut d_hidden = vec![0.0; h];
        for (x, &label) in xs.iter().zip(labels) {
            self.check_input(x)?;
            let a = self.activations(x);
            total += loss(&a.probs, label)?;
            // d loss / d logits = p - onehot
            let mut d_logits = a.probs;
            d_logits[label - 1] -= 1.0;
            d_hidden.iter_mut().for_each(|v| *v = 0.0);
            for (k, &dz) in d_logits.iter().enumerate() {
                gb2[k] += dz;
                let wrow = &self.w2[k * h..(k + 1) * h];
                let grow = &mut gw2[k * h..(k + 1) * h];
                for j in 0..h {
                    grow[j] += dz * a.hidden[j];
                    d_hidden[j] += dz * wrow[j];
                }
            }
            for j in 0..h {
                if a.pre_hidden[j] <= 0.0 {
                    continue;
                }
                let dz = d_hidden[j];
                gb1[j] += dz;
                let grow = &mut gw1[j * m..(j + 1) * m];
                grow.iter_mut().zip(x.iter()).for_each(|(g, v)| *g += dz * v);
            }
        }
        let n = xs.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((total / n, grad))
    }

    /// Mean loss over a batch.
    pub fn batch_loss(&self, xs: &[&[f64]], labels: &[ClassId]) -> Result<f64, MlpError> {
        let mut total = 0.0;
        for (x, &label) in xs.iter().zip(labels) {
            total += loss(&self.predict_proba(x)?, label)?;
        }
        Ok(total / xs.len() as f64)
    }

    fn apply(&mut self, grad: &[f64], lr: f64) {
        let parts = [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2];
        let mut offset = 0;
        for part in parts {
            for (p, g) in part.iter_mut().zip(&grad[offset..]) {
                *p -= lr * g;
            }
            offset += part.len();
        }
    }
}

/// Mini-batch SGD. Returns the model after the final epoch.
pub fn train(model: &MlpModel, x: &FeatureMatrix, labels: &[ClassId], cfg: &TrainConfig) -> Result<MlpModel, MlpError> {
    cfg.validate()?;
    if x.rows() != labels.len() {
        return Err(MlpError::Shape(format!("{} rows, {} labels", x.rows(), labels.len())));
    }
    if x.cols() != model.m {
        return Err(MlpError::Shape(format!(
            "{} feature columns, model input {}",
            x.cols(),
            model.m
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l == 0 || l > model.o) {
        return Err(MlpError::Label {
            label: bad,
            classes: model.o,
        });
    }
    let mut model = model.clone();
    if x.rows() == 0 {
        return Ok(model);
    }
    let mut r = rng::rng(cfg.seed);
    let mut order: Vec<usize> = (0..x.rows()).collect();
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut r);
        }
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let xs: Vec<&[f64]> = idx.iter().map(|&i| x.row(i)).collect();
            let ys: Vec<ClassId> = idx.iter().map(|&i| labels[i]).collect();
            let (l, grad) = model.batch_gradient(&xs, &ys)?;
            if !l.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(MlpError::Diverged { epoch, batch, loss: l });
            }
            model.apply(&grad, cfg.learning_rate);
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn zero_model(m: usize, h: usize, o: usize) -> MlpModel {
        MlpModel {
            m,
            h,
            o,
            w1: vec![0.0; h * m],
            b1: vec![0.0; h],
            w2: vec![0.0; o * h],
            b2: vec![0.0; o],
        }
    }

    #[test]
    fn init_shapes_and_determinism() {
        let a = mlp_init(100, 100, 14, 1);
        assert_eq!(a.param_count(), 11514);
        assert!(a.b1.iter().chain(&a.b2).all(|&b| b == 0.0));
        let limit = (6.0f64 / 200.0).sqrt();
        assert!(a.w1.iter().all(|w| w.abs() <= limit));
        assert_eq!(a, mlp_init(100, 100, 14, 1));
        assert_ne!(a.w1, mlp_init(100, 100, 14, 2).w1);
    }

    #[test]
    fn zero_model_is_uniform_and_predicts_class_one() {
        let m = zero_model(3, 4, 14);
        let (_, p) = m.forward(&[1.0, 2.0, 3.0]).unwrap();
        for v in &p {
            assert!((v - 1.0 / 14.0).abs() < 1e-15);
        }
        assert_eq!(m.predict(&[1.0, 2.0, 3.0]).unwrap(), 1);
    }

    #[test]
    fn relu_toy_and_nonnegativity() {
        let m = MlpModel {
            m: 1,
            h: 1,
            o: 2,
            w1: vec![2.0],
            b1: vec![-1.0],
            w2: vec![1.0, -1.0],
            b2: vec![0.0, 0.0],
        };
        assert_eq!(m.forward(&[2.0]).unwrap().0, vec![3.0]);
        assert_eq!(m.forward(&[-2.0]).unwrap().0, vec![0.0]);
        let big = mlp_init(10, 30, 14, 5);
        let (hid, p) = big.forward(&[-3.0; 10]).unwrap();
        assert!(hid.iter().all(|&v| v >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(big.forward(&[0.0; 9]).is_err());
    }

    #[test]
    fn loss_values() {
        let mut p = vec![0.0; 14];
        p[6] = 1.0;
        assert_eq!(loss(&p, 7).unwrap(), 0.0);
        assert!((loss(&[1.0 / 14.0; 14], 3).unwrap() - 14f64.ln()).abs() < 1e-12);
        assert!((loss(&[0.5, 0.5], 1).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((loss(&[0.0, 1.0], 1).unwrap() - 1e-15f64.ln().abs()).abs() < 1e-9);
        assert!(loss(&[0.5, 0.5], 0).is_err());
        assert!(loss(&[0.5, 0.5], 3).is_err());
    }

    #[test]
    fn predict_is_argmax_of_proba() {
        let mut m = zero_model(2, 2, 14);
        m.b2[6] = 5.0;
        assert_eq!(m.predict(&[0.0, 0.0]).unwrap(), 7);
        let r = mlp_init(4, 6, 14, 3);
        for i in 0..20 {
            let x = [i as f64 * 0.3, -1.0, 0.5, i as f64 * -0.1];
            assert_eq!(r.predict(&x).unwrap(), argmax(&r.predict_proba(&x).unwrap()) + 1);
        }
    }

    #[test]
    fn softmax_extreme_logits_stay_finite() {
        let p = softmax(&[1000.0, 0.0, -1000.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    fn blobs(seed: u64, per_class: usize) -> (FeatureMatrix, Vec<ClassId>) {
        let mut r = rng::rng(seed);
        let noise = Normal::new(0.0, 0.4).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (label, cx) in [(1, -2.0), (2, 2.0)] {
            for _ in 0..per_class {
                rows.push(vec![cx + noise.sample(&mut r), noise.sample(&mut r)]);
                labels.push(label);
            }
        }
        (FeatureMatrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn separable_blobs_reach_full_training_accuracy() {
        let (x, y) = blobs(11, 20);
        let cfg = TrainConfig {
            learning_rate: 0.05,
            epochs: 100,
            batch_size: 8,
            seed: 3,
            shuffle: true,
        };
        let model = train(&mlp_init(2, 8, 2, 1), &x, &y, &cfg).unwrap();
        let correct = x
            .iter_rows()
            .zip(&y)
            .filter(|(r, &l)| model.predict(r).unwrap() == l)
            .count();
        assert_eq!(correct, 40);
    }

    #[test]
    fn zero_epochs_leaves_model_unchanged() {
        let (x, y) = blobs(1, 5);
        let m0 = mlp_init(2, 4, 2, 9);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert_eq!(train(&m0, &x, &y, &cfg).unwrap(), m0);
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = blobs(2, 10);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 3,
            ..TrainConfig::default()
        };
        let a = train(&mlp_init(2, 5, 2, 4), &x, &y, &cfg).unwrap();
        let b = train(&mlp_init(2, 5, 2, 4), &x, &y, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_batch_loss_non_increasing_at_small_lr() {
        let (x, y) = blobs(5, 15);
        let xs: Vec<&[f64]> = x.iter_rows().collect();
        let mut model = mlp_init(2, 6, 2, 8);
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            epochs: 1,
            batch_size: x.rows(),
            seed: 0,
            shuffle: false,
        };
        let mut prev = model.batch_loss(&xs, &y).unwrap();
        for _ in 0..50 {
            model = train(&model, &x, &y, &cfg).unwrap();
            let cur = model.batch_loss(&xs, &y).unwrap();
            assert!(cur <= prev, "{cur} > {prev}");
            prev = cur;
        }
    }

    #[test]
    fn train_rejects_bad_inputs() {
        let (x, y) = blobs(1, 3);
        let m = mlp_init(2, 3, 2, 1);
        assert!(matches!(
            train(&m, &x, &y[..5], &TrainConfig::default()),
            Err(MlpError::Shape(_))
        ));
        let bad = vec![3; 6];
        assert!(matches!(
            train(&m, &x, &bad, &TrainConfig::default()),
            Err(MlpError::Label { .. })
        ));
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&m, &x, &y, &cfg), Err(MlpError::Config(_))));
        let cfg = TrainConfig {
            learning_rate: 1e308,
            epochs: 3,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&m, &x, &y, &cfg), Err(MlpError::Diverged { .. })));
    }
}
