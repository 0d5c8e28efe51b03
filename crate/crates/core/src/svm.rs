//! Kernel SVM: SMO for the binary dual, one-vs-one multiclass voting and
//! grid search over `(C, gamma)` with stratified k-fold cross-validation.
//!
//! The SMO solver picks the maximal-violating index `i` and the partner
//! `j` with the largest second-order gain, then solves the two-variable
//! subproblem in closed form with box clipping. It stops once the KKT gap
//! `max_{I_up} -y G - min_{I_low} -y G` falls below `tol`. One "pass" is `n`
//! pair updates; the solver gives up after `10 n` passes.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dimred::{dot, FeatureMatrix};
use crate::labels::ClassId;
use crate::rng;

/// Curvature floor for non-PSD kernels (sigmoid).
const TAU: f64 = 1e-12;
pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_C_GRID: [f64; 5] = [0.5, 2.0, 8.0, 32.0, 128.0];
pub const DEFAULT_GAMMA_GRID: [f64; 5] = [1.0 / 512.0, 1.0 / 128.0, 1.0 / 32.0, 1.0 / 8.0, 1.0 / 2.0];
pub const DEFAULT_FOLDS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum SvmError {
    #[error("vector length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("training set needs both classes (got {pos} positive, {neg} negative)")]
    SingleClass { pos: usize, neg: usize },
    #[error("SMO did not converge after {iterations} updates (KKT gap {gap:.3e}, tol {tol:.1e})")]
    NotConverged { iterations: usize, gap: f64, tol: f64 },
    #[error("zero margin: the two classes are not distinguishable in feature space (|w|^2 = {norm_sq:.3e})")]
    ZeroMargin { norm_sq: f64 },
    #[error("class {class} has no samples for pair ({a}, {b})")]
    MissingClass { class: ClassId, a: ClassId, b: ClassId },
    #[error("class {class} has {count} samples, fewer than {folds} folds")]
    Stratification { class: ClassId, count: usize, folds: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
    Polynomial { gamma: f64, coef0: f64, degree: u32 },
    Sigmoid { gamma: f64, coef0: f64 },
}

impl Kernel {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(x, y),
            Kernel::Rbf { gamma } => (-gamma * sq_dist(x, y)).exp(),
            Kernel::Polynomial { gamma, coef0, degree } => (gamma * dot(x, y) + coef0).powi(degree as i32),
            Kernel::Sigmoid { gamma, coef0 } => (gamma * dot(x, y) + coef0).tanh(),
        }
    }

    fn validate(&self) -> Result<(), SvmError> {
        let gamma = match *self {
            Kernel::Linear => return Ok(()),
            Kernel::Rbf { gamma } | Kernel::Polynomial { gamma, .. } | Kernel::Sigmoid { gamma, .. } => gamma,
        };
        if gamma > 0.0 && gamma.is_finite() {
            Ok(())
        } else {
            Err(SvmError::Param(format!("gamma must be positive, got {gamma}")))
        }
    }
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `exp(-gamma * |x - y|^2)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64, SvmError> {
    if x.len() != y.len() {
        return Err(SvmError::Length(x.len(), y.len()));
    }
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(SvmError::Param(format!("gamma must be positive, got {gamma}")));
    }
    Ok(Kernel::Rbf { gamma }.eval(x, y))
}

/// Full dual solution, kept for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    /// One multiplier per training sample, in `[0, C]`.
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// `sum(alpha) - 1/2 alpha^T Q alpha`.
    pub objective: f64,
    pub iterations: usize,
    /// Final KKT gap.
    pub gap: f64,
}

/// Solve the binary soft-margin dual. Labels are `+1` / `-1`.
pub fn smo_solve(x: &[&[f64]], y: &[i8], c: f64, kernel: Kernel, tol: f64) -> Result<SmoSolution, SvmError> {
    let n = x.len();
    if y.len() != n {
        return Err(SvmError::Length(n, y.len()));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(SvmError::Param(format!("C must be positive, got {c}")));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(SvmError::Param(format!("tol must be positive, got {tol}")));
    }
    kernel.validate()?;
    if let Some(&bad) = y.iter().find(|&&v| v != 1 && v != -1) {
        return Err(SvmError::Param(format!("labels must be +1/-1, got {bad}")));
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == n {
        return Err(SvmError::SingleClass { pos, neg: n - pos });
    }
    if let Some(row) = x.iter().find(|r| r.len() != x[0].len()) {
        return Err(SvmError::Length(x[0].len(), row.len()));
    }

    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let mut kmat = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = kernel.eval(x[i], x[j]);
            kmat[i * n + j] = k;
            kmat[j * n + i] = k;
        }
    }
    let q = |i: usize, j: usize| yf[i] * yf[j] * kmat[i * n + j];

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = (10 * n * n).max(100);
    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    let mut iterations = 0;
    let gap = loop {
        // Working set selection.
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        for t in 0..n {
            if in_up(alpha[t], yf[t]) && -yf[t] * grad[t] > g_max {
                g_max = -yf[t] * grad[t];
                i = t;
            }
        }
        let mut g_min = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best_gain = f64::INFINITY;
        for t in 0..n {
            if !in_low(alpha[t], yf[t]) {
                continue;
            }
            let v = -yf[t] * grad[t];
            g_min = g_min.min(v);
            if i != usize::MAX {
                let b = g_max - v;
                if b > 0.0 {
                    let mut a = kmat[i * n + i] + kmat[t * n + t] - 2.0 * kmat[i * n + t];
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let gain = -(b * b) / a;
                    if gain < best_gain {
                        best_gain = gain;
                        j = t;
                    }
                }
            }
        }
        let gap = g_max - g_min;
        if gap < tol || i == usize::MAX || j == usize::MAX {
            break gap.max(0.0);
        }
        if iterations >= max_iter {
            return Err(SvmError::NotConverged { iterations, gap, tol });
        }
        iterations += 1;

        // Two-variable update.
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if yf[i] != yf[j] {
            let mut quad = kmat[i * n + i] + kmat[j * n + j] + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = kmat[i * n + i] + kmat[j * n + j] - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    };

    // Bias: mean of y G over free multipliers, else midpoint of the feasible range.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = yf[t] * grad[t];
        if alpha[t] >= c {
            if yf[t] < 0.0 {
                ub = ub.min(yg)
            } else {
                lb = lb.max(yg)
            }
        } else if alpha[t] <= 0.0 {
            if yf[t] > 0.0 {
                ub = ub.min(yg)
            } else {
                lb = lb.max(yg)
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    };

    // alpha^T Q alpha = alpha^T (G + 1).
    let quad: f64 = alpha.iter().zip(&grad).map(|(a, g)| a * (g + 1.0)).sum();
    if quad <= 1e-12 {
        return Err(SvmError::ZeroMargin { norm_sq: quad });
    }
    let objective = alpha.iter().sum::<f64>() - 0.5 * quad;
    Ok(SmoSolution {
        alpha,
        bias: -rho,
        objective,
        iterations,
        gap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub kernel: Kernel,
    pub c: f64,
    pub bias: f64,
    pub dim: usize,
    /// Row-major support vectors, `alphas.len() x dim`.
    pub support_vectors: Vec<f64>,
    /// `alpha_i * y_i` per support vector.
    pub alphas: Vec<f64>,
}

impl BinarySvm {
    pub fn n_support(&self) -> usize {
        self.alphas.len()
    }

    pub fn support_vector(&self, i: usize) -> &[f64] {
        &self.support_vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        (0..self.n_support())
            .map(|i| self.alphas[i] * self.kernel.eval(self.support_vector(i), x))
            .sum::<f64>()
            + self.bias
    }

    /// `+1` when the decision value is non-negative, else `-1`.
    pub fn predict(&self, x: &[f64]) -> i8 {
        if self.decision(x) >= 0.0 {
            1
        } else {
            -1
        }
    }
}

/// Train a binary machine; keeps samples with `alpha > 0` as support vectors.
pub fn smo_train(x: &[&[f64]], y: &[i8], c: f64, kernel: Kernel, tol: f64) -> Result<BinarySvm, SvmError> {
    let sol = smo_solve(x, y, c, kernel, tol)?;
    let dim = x[0].len();
    let mut support_vectors = Vec::new();
    let mut alphas = Vec::new();
    for (t, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.extend_from_slice(x[t]);
            alphas.push(a * f64::from(y[t]));
        }
    }
    Ok(BinarySvm {
        kernel,
        c,
        bias: sol.bias,
        dim,
        support_vectors,
        alphas,
    })
}

/// Machine for the pair `(positive, negative)`, `positive < negative`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMachine {
    pub positive: ClassId,
    pub negative: ClassId,
    pub svm: BinarySvm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub classes: Vec<ClassId>,
    pub kernel: Kernel,
    pub c: f64,
    pub dim: usize,
    pub machines: Vec<PairMachine>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: Kernel,
    pub tol: f64,
}

impl SvmParams {
    pub fn rbf(c: f64, gamma: f64) -> Self {
        Self {
            c,
            kernel: Kernel::Rbf { gamma },
            tol: DEFAULT_TOL,
        }
    }
}

/// One-vs-one training over an explicit class list; every class must have samples.
pub fn ovo_train_classes(
    x: &FeatureMatrix,
    labels: &[ClassId],
    classes: &[ClassId],
    params: SvmParams,
) -> Result<SvmModel, SvmError> {
    if x.rows() != labels.len() {
        return Err(SvmError::Length(x.rows(), labels.len()));
    }
    let mut pairs = Vec::new();
    for (ai, &a) in classes.iter().enumerate() {
        for &b in &classes[ai + 1..] {
            pairs.push((a.min(b), a.max(b)));
        }
    }
    let machines = pairs
        .par_iter()
        .map(|&(a, b)| {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (row, &l) in x.iter_rows().zip(labels) {
                if l == a {
                    xs.push(row);
                    ys.push(1i8);
                } else if l == b {
                    xs.push(row);
                    ys.push(-1i8);
                }
            }
            for class in [a, b] {
                let want = if class == a { 1 } else { -1 };
                if !ys.contains(&want) {
                    return Err(SvmError::MissingClass { class, a, b });
                }
            }
            let svm = smo_train(&xs, &ys, params.c, params.kernel, params.tol)?;
            Ok(PairMachine {
                positive: a,
                negative: b,
                svm,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut sorted = classes.to_vec();
    sorted.sort_unstable();
    Ok(SvmModel {
        classes: sorted,
        kernel: params.kernel,
        c: params.c,
        dim: x.cols(),
        machines,
    })
}

/// One-vs-one training over the classes present in `labels`.
pub fn ovo_train(x: &FeatureMatrix, labels: &[ClassId], params: SvmParams) -> Result<SvmModel, SvmError> {
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(SvmError::SingleClass {
            pos: labels.len(),
            neg: 0,
        });
    }
    ovo_train_classes(x, labels, &classes, params)
}

impl SvmModel {
    /// Majority vote; ties go to the larger summed |decision| of won
    /// contests, then to the lowest class id.
    pub fn predict(&self, x: &[f64]) -> Result<ClassId, SvmError> {
        if x.len() != self.dim {
            return Err(SvmError::Length(self.dim, x.len()));
        }
        let idx = |c: ClassId| self.classes.binary_search(&c).expect("machine class in model");
        let mut votes = vec![0usize; self.classes.len()];
        let mut margin = vec![0.0f64; self.classes.len()];
        for m in &self.machines {
            let f = m.svm.decision(x);
            let winner = if f >= 0.0 { m.positive } else { m.negative };
            votes[idx(winner)] += 1;
            margin[idx(winner)] += f.abs();
        }
        let mut best = 0;
        for k in 1..self.classes.len() {
            if votes[k] > votes[best] || (votes[k] == votes[best] && margin[k] > margin[best]) {
                best = k;
            }
        }
        Ok(self.classes[best])
    }
}

pub fn ovo_predict(model: &SvmModel, x: &[f64]) -> Result<ClassId, SvmError> {
    model.predict(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub c_values: Vec<f64>,
    pub gamma_values: Vec<f64>,
    pub folds: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            c_values: DEFAULT_C_GRID.to_vec(),
            gamma_values: DEFAULT_GAMMA_GRID.to_vec(),
            folds: DEFAULT_FOLDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub c: f64,
    pub gamma: f64,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best_c: f64,
    pub best_gamma: f64,
    pub best_accuracy: f64,
    /// One row per `(C, gamma)`, C-major in candidate order.
    pub table: Vec<GridCell>,
}

/// Fold index per sample: each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[ClassId], folds: usize, seed: u64) -> Result<Vec<usize>, SvmError> {
    if folds < 2 {
        return Err(SvmError::Param(format!("need at least 2 folds, got {folds}")));
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut r = rng::rng(seed);
    let mut assign = vec![0; labels.len()];
    for class in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < folds {
            return Err(SvmError::Stratification {
                class,
                count: idx.len(),
                folds,
            });
        }
        idx.shuffle(&mut r);
        for (pos, i) in idx.into_iter().enumerate() {
            assign[i] = pos % folds;
        }
    }
    Ok(assign)
}

/// Stratified k-fold grid search over RBF `(C, gamma)`.
///
/// Best cell maximizes CV accuracy; ties go to smaller C, then smaller gamma.
pub fn grid_search(x: &FeatureMatrix, labels: &[ClassId], spec: &GridSpec, seed: u64) -> Result<GridResult, SvmError> {
    if spec.c_values.is_empty() || spec.gamma_values.is_empty() {
        return Err(SvmError::Param("empty candidate list".into()));
    }
    if x.rows() != labels.len() {
        return Err(SvmError::Length(x.rows(), labels.len()));
    }
    let fold_of = stratified_folds(labels, spec.folds, seed)?;
    let cells: Vec<(f64, f64)> = spec
        .c_values
        .iter()
        .flat_map(|&c| spec.gamma_values.iter().map(move |&g| (c, g)))
        .collect();
    let table = cells
        .par_iter()
        .map(|&(c, gamma)| {
            let mut correct = 0;
            for fold in 0..spec.folds {
                let train: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] != fold).collect();
                let test: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] == fold).collect();
                let train_labels: Vec<ClassId> = train.iter().map(|&i| labels[i]).collect();
                let model = ovo_train(&x.select_rows(&train), &train_labels, SvmParams::rbf(c, gamma))?;
                for &i in &test {
                    if model.predict(x.row(i))? == labels[i] {
                        correct += 1;
                    }
                }
            }
            Ok(GridCell {
                c,
                gamma,
                correct,
                total: labels.len(),
                accuracy: correct as f64 / labels.len() as f64,
            })
        })
        .collect::<Result<Vec<_>, SvmError>>()?;
    let mut best = &table[0];
    for cell in &table[1..] {
        let better = cell.correct > best.correct
            || (cell.correct == best.correct && (cell.c < best.c || (cell.c == best.c && cell.gamma < best.gamma)));
        if better {
            best = cell;
        }
    }
    Ok(GridResult {
        best_c: best.c,
        best_gamma: best.gamma,
        best_accuracy: best.accuracy,
        table: table.clone(),
    })
}
