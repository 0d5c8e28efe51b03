//! Independent reference computations shared by integration and acceptance tests.
#![allow(dead_code)]

use hwr_core::dimred::FeatureMatrix;
use hwr_core::labels::ClassId;
use hwr_core::mlp::MlpModel;

/// Rows of (label, precision, recall, f1, support) as printed for the
/// 100-neuron MLP.
pub const MLP_TABLE: [(u32, f64, f64, f64, u32); 14] = [
    (1, 0.75, 1.00, 0.86, 6),
    (2, 0.80, 0.92, 0.86, 13),
    (3, 0.88, 0.88, 0.88, 8),
    (4, 1.00, 0.92, 0.96, 13),
    (5, 1.00, 0.93, 0.96, 14),
    (6, 1.00, 0.92, 0.96, 12),
    (7, 0.91, 0.83, 0.87, 12),
    (8, 1.00, 1.00, 1.00, 7),
    (9, 0.92, 0.86, 0.89, 14),
    (10, 0.90, 1.00, 0.95, 9),
    (11, 0.91, 1.00, 0.95, 10),
    (12, 0.90, 1.00, 0.95, 9),
    (13, 1.00, 0.88, 0.93, 8),
    (14, 0.83, 0.77, 0.80, 13),
];

/// Same layout, RBF SVM.
pub const SVM_TABLE: [(u32, f64, f64, f64, u32); 14] = [
    (1, 0.86, 1.00, 0.92, 6),
    (2, 1.00, 1.00, 1.00, 13),
    (3, 1.00, 1.00, 1.00, 8),
    (4, 1.00, 0.92, 0.96, 13),
    (5, 1.00, 1.00, 1.00, 14),
    (6, 0.92, 0.92, 0.92, 12),
    (7, 1.00, 1.00, 1.00, 12),
    (8, 1.00, 1.00, 1.00, 7),
    (9, 1.00, 0.93, 0.96, 14),
    (10, 0.90, 1.00, 0.95, 9),
    (11, 0.91, 1.00, 0.95, 10),
    (12, 1.00, 1.00, 1.00, 9),
    (13, 1.00, 0.88, 0.93, 8),
    (14, 0.92, 0.92, 0.92, 13),
];

/// Recall as an exact fraction of the support: the nearest `tp / support`.
pub fn exact_recall(printed: f64, support: u32) -> f64 {
    (printed * f64::from(support)).round() / f64::from(support)
}

/// Mean cross-entropy, written out directly from the definition.
pub fn reference_loss(model: &MlpModel, xs: &[Vec<f64>], labels: &[ClassId]) -> f64 {
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(labels) {
        let hidden: Vec<f64> = (0..model.h)
            .map(|j| {
                let z: f64 = (0..model.m).map(|i| model.w1[j * model.m + i] * x[i]).sum::<f64>() + model.b1[j];
                z.max(0.0)
            })
            .collect();
        let logits: Vec<f64> = (0..model.o)
            .map(|k| (0..model.h).map(|j| model.w2[k * model.h + j] * hidden[j]).sum::<f64>() + model.b2[k])
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
        total += log_sum - logits[y - 1];
    }
    total / xs.len() as f64
}

/// Central differences of `reference_loss` for every parameter.
pub fn numeric_gradient(model: &MlpModel, xs: &[Vec<f64>], labels: &[ClassId], delta: f64) -> Vec<f64> {
    let mut m = model.clone();
    (0..model.param_count())
        .map(|i| {
            let p = model.param(i);
            m.set_param(i, p + delta);
            let up = reference_loss(&m, xs, labels);
            m.set_param(i, p - delta);
            let down = reference_loss(&m, xs, labels);
            m.set_param(i, p);
            (up - down) / (2.0 * delta)
        })
        .collect()
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn rbf(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    (-gamma * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).exp()
}

pub fn dual_objective(q: &[Vec<f64>], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * q[i][j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

pub fn q_matrix(x: &[Vec<f64>], y: &[i8], gamma: f64) -> Vec<Vec<f64>> {
    x.iter()
        .zip(y)
        .map(|(xi, &yi)| {
            x.iter()
                .zip(y)
                .map(|(xj, &yj)| f64::from(yi) * f64::from(yj) * rbf(xi, xj, gamma))
                .collect()
        })
        .collect()
}

/// Euclidean projection onto `{0 <= a <= c, sum y a = 0}` by bisection on
/// the multiplier of the equality constraint.
fn project(v: &[f64], y: &[i8], c: f64) -> Vec<f64> {
    let at = |nu: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(&vi, &yi)| (vi - nu * f64::from(yi)).clamp(0.0, c))
            .collect()
    };
    let balance = |a: &[f64]| a.iter().zip(y).map(|(ai, &yi)| ai * f64::from(yi)).sum::<f64>();
    let bound = v.iter().map(|x| x.abs()).fold(0.0, f64::max) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if balance(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Maximize the soft-margin dual by accelerated projected gradient ascent.
pub fn brute_force_dual(q: &[Vec<f64>], y: &[i8], c: f64, iterations: usize) -> (Vec<f64>, f64) {
    let n = y.len();
    let lipschitz = q
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let step = 1.0 / lipschitz;
    let mut a = vec![0.0; n];
    let mut z = a.clone();
    let mut t = 1.0f64;
    for _ in 0..iterations {
        let grad: Vec<f64> = (0..n)
            .map(|i| 1.0 - (0..n).map(|j| q[i][j] * z[j]).sum::<f64>())
            .collect();
        let v: Vec<f64> = z.iter().zip(&grad).map(|(zi, gi)| zi + step * gi).collect();
        let next = project(&v, y, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next
            .iter()
            .zip(&a)
            .map(|(nx, ax)| nx + (t - 1.0) / t_next * (nx - ax))
            .collect();
        a = next;
        t = t_next;
    }
    let obj = dual_objective(q, &a);
    (a, obj)
}

/// Largest violation of the soft-margin KKT conditions at `(alpha, bias)`.
pub fn kkt_residual(x: &[Vec<f64>], y: &[i8], alpha: &[f64], bias: f64, c: f64, gamma: f64) -> f64 {
    let bound = 1e-12 * c.max(1.0);
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let f: f64 = (0..x.len())
            .map(|j| alpha[j] * f64::from(y[j]) * rbf(&x[j], &x[i], gamma))
            .sum::<f64>()
            + bias;
        let margin = f64::from(y[i]) * f;
        let v = if alpha[i] <= bound {
            (1.0 - margin).max(0.0)
        } else if alpha[i] >= c - bound {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(v);
    }
    let eq: f64 = alpha.iter().zip(y).map(|(a, &yi)| a * f64::from(yi)).sum();
    worst.max(eq.abs())
}

pub fn gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    1.0 - counts.iter().map(|&c| (c as f64 / n as f64).powi(2)).sum::<f64>()
}

fn counts_of(labels: &[ClassId]) -> Vec<usize> {
    let mut c = vec![0; 15];
    for &l in labels {
        c[l] += 1;
    }
    c
}

/// Best `(gain, feature, threshold)` over every midpoint of every listed
/// feature, trying each candidate independently.
pub fn exhaustive_split(x: &FeatureMatrix, labels: &[ClassId], features: &[usize]) -> Option<(f64, usize, f64)> {
    let n = labels.len() as f64;
    let parent = gini(&counts_of(labels));
    let mut best: Option<(f64, usize, f64)> = None;
    for &f in features {
        let mut vals: Vec<f64> = x.iter_rows().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (mut l, mut r) = (Vec::new(), Vec::new());
            for (row, &lab) in x.iter_rows().zip(labels) {
                if row[f] <= t {
                    l.push(lab)
                } else {
                    r.push(lab)
                }
            }
            let child = (l.len() as f64 * gini(&counts_of(&l)) + r.len() as f64 * gini(&counts_of(&r))) / n;
            let gain = parent - child;
            if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g + 1e-15) {
                best = Some((gain, f, t));
            }
        }
    }
    best
}

/// District table as printed: name and its Python unicode mapping.
pub const DISTRICT_TABLE: [(&str, &str); 14] = [
    (
        "കാസർഗോട്",
        r"u\u0D15'+u\u0D3E'+u\u0D38'+u\u0D7C'+u\u0D15'+u\u0D4B'+u\u0D1F'+u\u0D4D'",
    ),
    ("കണ്ണൂർ", r"u\u0D15'+u\u0D23'+u\u0D4D'+u\u0D23'+u\u0D42'+u\u0D7C'"),
    ("വയനാട്", r"u\u0D35'+u\u0D2F'+u\u0D28'+u\u0D3E'+u\u0D1F'+u\u0D4D'"),
    (
        "കോഴിക്കോട്",
        r"u\u0D15'+u\u0D4B'+u\u0D34'+u\u0D3F'+u\u0D15'+u\u0D4D'+u\u0D15'+u\u0D4B'+u\u0D1F'+u\u0D4D'",
    ),
    (
        "മലപ്പുറം",
        r"u\u0D2E'+u\u0D32'+u\u0D2A'+u\u0D4D'+u\u0D2A'+u\u0D41'+u\u0D31'+u\u0D02'",
    ),
    (
        "എറണാകുളം",
        r"u\u0D0E'+u\u0D31'+u\u0D23'+u\u0D3E'+u\u0D15'+u\u0D41'+u\u0D33'+u\u0D02'",
    ),
    (
        "ഇടുക്കി",
        r"u\u0D07'+u\u0D1F'+u\u0D41'+u\u0D15'+u\u0D4D'+u\u0D15'+u\u0D3F'",
    ),
    (
        "കോട്ടയം",
        r"u\u0D15'+u\u0D4B'+u\u0D1F'+u\u0D4D'+u\u0D1F'+u\u0D2F'+u\u0D02'",
    ),
    (
        "പത്തനംതിട്ട",
        r"u\u0D2A'+u\u0D24'+u\u0D4D'+u\u0D24'+u\u0D28'+u\u0D02'+u\u0D24'+u\u0D3F'+u\u0D1F'+u\u0D4D'+u\u0D1F'",
    ),
    (
        "തിരുവനന്തപുരം",
        r"u\u0D24'+u\u0D3F'+u\u0D30'+u\u0D41'+u\u0D35'+u\u0D28'+u\u0D28'+u\u0D4D'+u\u0D24'+u\u0D2A'+u\u0D41'+u\u0D30'+u\u0D02'",
    ),
    (
        "ആലപ്പുഴ",
        r"u\u0D06'+u\u0D32'+u\u0D2A'+u\u0D4D'+u\u0D2A'+u\u0D42'+u\u0D34'",
    ),
    (
        "പാലക്കാട്",
        r"u\u0D2A'+u\u0D3E'+u\u0D32'+u\u0D15'+u\u0D4D'+u\u0D15'+u\u0D3E'+u\u0D1F'+u\u0D4D'",
    ),
    ("തൃശ്ശൂർ", r"u\u0D24'+u\u0D43'+u\u0D36'+u\u0D42'+u\u0D7C'"),
    ("കൊല്ലം", r"u\u0D15'+u\u0D4A'+u\u0D32'+u\u0D4D'+u\u0D32'+u\u0D02'"),
];

/// Codepoints from a mapping cell such as `u\u0D15'+u\u0D3E'`.
pub fn parse_mapping(cell: &str) -> Vec<u32> {
    cell.split('+')
        .map(|part| {
            let hex = part.trim().trim_start_matches("u\\u").trim_end_matches('\'');
            u32::from_str_radix(hex, 16).expect("four hex digits")
        })
        .collect()
}
