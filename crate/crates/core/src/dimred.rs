//! Dimensionality reduction: PCA and Gaussian / sparse random projections.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum DimredError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("parameter error: {0}")]
    Param(String),
    #[error("non-finite value at row {row}, col {col}")]
    NonFinite { row: usize, col: usize },
    #[error("SVD did not converge")]
    Svd,
    #[error("projection matrix checksum mismatch (stored {stored}, regenerated {regenerated}); generator changed?")]
    Checksum { stored: String, regenerated: String },
}

/// Dense row-major sample-by-feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, DimredError> {
        if values.len() != rows * cols {
            return Err(DimredError::Dimension(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DimredError::NonFinite {
                row: i / cols.max(1),
                col: i % cols.max(1),
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, DimredError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.as_ref().len() != cols {
                return Err(DimredError::Dimension(format!(
                    "row {i} has {} values, expected {cols}",
                    r.as_ref().len()
                )));
            }
            values.extend_from_slice(r.as_ref());
        }
        Self::new(rows.len(), cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            rows: indices.len(),
            cols: self.cols,
            values,
        }
    }

    /// `a * self + b * other`, elementwise.
    pub fn lin_comb(&self, a: f64, other: &FeatureMatrix, b: f64) -> FeatureMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        FeatureMatrix {
            rows: self.rows,
            cols: self.cols,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.cols];
        for r in self.iter_rows() {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= self.rows as f64);
        mean
    }
}

// ---------------------------------------------------------------------------
// PCA

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub d: usize,
    pub k: usize,
    pub mean: Vec<f64>,
    /// `k x d`, row-major, rows orthonormal.
    pub components: Vec<f64>,
    /// Per-component sample variance (n-1 convention), non-increasing.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i * self.d..(i + 1) * self.d]
    }

    /// Project onto the principal axes: `(X - mean) * components^T`.
    pub fn transform(&self, x: &FeatureMatrix) -> Result<FeatureMatrix, DimredError> {
        if x.cols() != self.d {
            return Err(DimredError::Dimension(format!(
                "input has {} columns, PCA model expects {}",
                x.cols(),
                self.d
            )));
        }
        let mut out = Vec::with_capacity(x.rows() * self.k);
        let mut centered = vec![0.0; self.d];
        for row in x.iter_rows() {
            centered
                .iter_mut()
                .zip(row.iter().zip(&self.mean))
                .for_each(|(c, (v, m))| *c = v - m);
            for j in 0..self.k {
                out.push(dot(&centered, self.component(j)));
            }
        }
        FeatureMatrix::new(x.rows(), self.k, out)
    }

    /// `Z * components + mean`.
    pub fn inverse_transform(&self, z: &FeatureMatrix) -> Result<FeatureMatrix, DimredError> {
        if z.cols() != self.k {
            return Err(DimredError::Dimension(format!(
                "input has {} columns, PCA model has {} components",
                z.cols(),
                self.k
            )));
        }
        let mut out = Vec::with_capacity(z.rows() * self.d);
        for row in z.iter_rows() {
            let mut x = self.mean.clone();
            for (j, &coef) in row.iter().enumerate() {
                x.iter_mut().zip(self.component(j)).for_each(|(xi, c)| *xi += coef * c);
            }
            out.extend(x);
        }
        FeatureMatrix::new(z.rows(), self.d, out)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fit the top-`k` principal axes from the SVD of the centered data.
///
/// Each axis is sign-normalized so its largest-magnitude entry (first one
/// on ties) is positive.
pub fn pca_fit(x: &FeatureMatrix, k: usize) -> Result<PcaModel, DimredError> {
    let (n, d) = (x.rows(), x.cols());
    if n < 2 {
        return Err(DimredError::Dimension(format!("PCA needs at least 2 samples, got {n}")));
    }
    let max_k = (n - 1).min(d);
    if k == 0 || k > max_k {
        return Err(DimredError::Dimension(format!(
            "k = {k} outside 1..={max_k} for {n} samples of dimension {d}"
        )));
    }
    let mean = x.column_means();
    let centered = DMatrix::from_fn(n, d, |i, j| x.row(i)[j] - mean[j]);
    // Decompose whichever orientation is tall; the right singular vectors of
    // X are the left singular vectors of X^T.
    let (singular, axes): (Vec<f64>, DMatrix<f64>) = if n >= d {
        let svd = nalgebra::SVD::try_new(centered, false, true, f64::EPSILON, 0).ok_or(DimredError::Svd)?;
        let vt = svd.v_t.ok_or(DimredError::Svd)?;
        (svd.singular_values.iter().copied().collect(), vt.transpose())
    } else {
        let svd = nalgebra::SVD::try_new(centered.transpose(), true, false, f64::EPSILON, 0).ok_or(DimredError::Svd)?;
        let u = svd.u.ok_or(DimredError::Svd)?;
        (svd.singular_values.iter().copied().collect(), u)
    };
    // axes: d x min(n,d), one axis per column.
    let mut order: Vec<usize> = (0..singular.len()).collect();
    order.sort_by(|&a, &b| singular[b].total_cmp(&singular[a]).then(a.cmp(&b)));

    let mut components = Vec::with_capacity(k * d);
    let mut explained_variance = Vec::with_capacity(k);
    for &col in order.iter().take(k) {
        let mut axis: Vec<f64> = axes.column(col).iter().copied().collect();
        let mut pivot = 0;
        for (i, v) in axis.iter().enumerate() {
            if v.abs() > axis[pivot].abs() {
                pivot = i;
            }
        }
        if axis[pivot] < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        components.extend(axis);
        explained_variance.push(singular[col] * singular[col] / (n - 1) as f64);
    }
    Ok(PcaModel {
        d,
        k,
        mean,
        components,
        explained_variance,
    })
}

pub fn pca_transform(model: &PcaModel, x: &FeatureMatrix) -> Result<FeatureMatrix, DimredError> {
    model.transform(x)
}

// ---------------------------------------------------------------------------
// Random projections

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionKind {
    Gaussian,
    Sparse,
}

#[derive(Debug, Clone, PartialEq)]
enum Entries {
    /// `k x d`, row-major.
    Dense(Vec<f64>),
    /// Per output row: `(column, positive?)` for each nonzero.
    Sparse(Vec<Vec<(u32, bool)>>),
}

/// Random `k x d` projection matrix.
///
/// Gaussian entries are i.i.d. N(0, 1/k). Sparse entries are
/// `+sqrt(3/k)`, `0`, `-sqrt(3/k)` with probabilities 1/6, 2/3, 1/6.
/// Entries are drawn row-major from one seeded stream, so the matrix is a
/// pure function of `(kind, d, k, seed)`. Serialized files store only those
/// parameters plus a checksum, and regenerate the entries on load.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    kind: ProjectionKind,
    d: usize,
    k: usize,
    seed: u64,
    entries: Entries,
}

impl ProjectionMatrix {
    pub fn kind(&self) -> ProjectionKind {
        self.kind
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn sparse_scale(&self) -> f64 {
        (3.0 / self.k as f64).sqrt()
    }

    /// Entry at `(row, col)`.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        match &self.entries {
            Entries::Dense(v) => v[row * self.d + col],
            Entries::Sparse(rows) => rows[row]
                .iter()
                .find(|(c, _)| *c as usize == col)
                .map_or(
                    0.0,
                    |&(_, pos)| if pos { self.sparse_scale() } else { -self.sparse_scale() },
                ),
        }
    }

    /// Row-major dense copy of the entries.
    pub fn to_dense(&self) -> Vec<f64> {
        match &self.entries {
            Entries::Dense(v) => v.clone(),
            Entries::Sparse(rows) => {
                let s = self.sparse_scale();
                let mut out = vec![0.0; self.k * self.d];
                for (r, nz) in rows.iter().enumerate() {
                    for &(c, pos) in nz {
                        out[r * self.d + c as usize] = if pos { s } else { -s };
                    }
                }
                out
            }
        }
    }

    /// Build a dense matrix from explicit entries (tests and tooling).
    pub fn from_dense(d: usize, k: usize, values: Vec<f64>) -> Result<Self, DimredError> {
        if values.len() != d * k {
            return Err(DimredError::Dimension(format!(
                "{} values for a {k}x{d} projection",
                values.len()
            )));
        }
        Ok(Self {
            kind: ProjectionKind::Gaussian,
            d,
            k,
            seed: 0,
            entries: Entries::Dense(values),
        })
    }

    /// Hex SHA-256 of the row-major little-endian f64 entries.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for v in self.to_dense() {
            h.update(v.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn project(&self, x: &FeatureMatrix) -> Result<FeatureMatrix, DimredError> {
        if x.cols() != self.d {
            return Err(DimredError::Dimension(format!(
                "input has {} columns, projection expects {}",
                x.cols(),
                self.d
            )));
        }
        let mut out = Vec::with_capacity(x.rows() * self.k);
        match &self.entries {
            Entries::Dense(v) => {
                for row in x.iter_rows() {
                    for j in 0..self.k {
                        out.push(dot(row, &v[j * self.d..(j + 1) * self.d]));
                    }
                }
            }
            Entries::Sparse(rows) => {
                let s = self.sparse_scale();
                for row in x.iter_rows() {
                    for nz in rows {
                        let mut acc = 0.0;
                        for &(c, pos) in nz {
                            let v = row[c as usize];
                            if pos {
                                acc += v;
                            } else {
                                acc -= v;
                            }
                        }
                        out.push(acc * s);
                    }
                }
            }
        }
        FeatureMatrix::new(x.rows(), self.k, out)
    }
}

/// Draw a projection matrix; deterministic in `(kind, d, k, seed)`.
pub fn rp_fit(kind: ProjectionKind, d: usize, k: usize, seed: u64) -> Result<ProjectionMatrix, DimredError> {
    if d == 0 || k == 0 {
        return Err(DimredError::Param(format!(
            "projection needs d >= 1 and k >= 1, got d={d} k={k}"
        )));
    }
    let mut r = rng::rng(seed);
    let entries = match kind {
        ProjectionKind::Gaussian => {
            let scale = 1.0 / (k as f64).sqrt();
            Entries::Dense((0..k * d).map(|_| r.sample::<f64, _>(StandardNormal) * scale).collect())
        }
        ProjectionKind::Sparse => Entries::Sparse(
            (0..k)
                .map(|_| {
                    (0..d as u32)
                        .filter_map(|c| match r.random_range(0u32..6) {
                            0 => Some((c, true)),
                            1 => Some((c, false)),
                            _ => None,
                        })
                        .collect()
                })
                .collect(),
        ),
    };
    Ok(ProjectionMatrix {
        kind,
        d,
        k,
        seed,
        entries,
    })
}

pub fn project(p: &ProjectionMatrix, x: &FeatureMatrix) -> Result<FeatureMatrix, DimredError> {
    p.project(x)
}

#[derive(Serialize, Deserialize)]
struct ProjectionFile {
    kind: ProjectionKind,
    d: usize,
    k: usize,
    seed: u64,
    generator: String,
    checksum: String,
}

impl Serialize for ProjectionMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ProjectionFile {
            kind: self.kind,
            d: self.d,
            k: self.k,
            seed: self.seed,
            generator: rng::GENERATOR.to_string(),
            checksum: self.checksum(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ProjectionMatrix {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let f = ProjectionFile::deserialize(de)?;
        if f.generator != rng::GENERATOR {
            return Err(D::Error::custom(format!(
                "projection drawn with generator {:?}, this build uses {:?}",
                f.generator,
                rng::GENERATOR
            )));
        }
        let p = rp_fit(f.kind, f.d, f.k, f.seed).map_err(D::Error::custom)?;
        let regenerated = p.checksum();
        if regenerated != f.checksum {
            return Err(D::Error::custom(DimredError::Checksum {
                stored: f.checksum,
                regenerated,
            }));
        }
        Ok(p)
    }
}

// ---------------------------------------------------------------------------

/// Johnson-Lindenstrauss target dimension: `floor(4 ln n / (eps^2/2 - eps^3/3))`.
pub fn jl_min_dim(n: usize, eps: f64) -> Result<usize, DimredError> {
    if n < 2 {
        return Err(DimredError::Param(format!("need n >= 2, got {n}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(DimredError::Param(format!("eps must lie in (0, 1), got {eps}")));
    }
    let denom = eps * eps / 2.0 - eps * eps * eps / 3.0;
    Ok((4.0 * (n as f64).ln() / denom).floor() as usize)
}

/// A fitted reducer of either family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Reducer {
    Pca(PcaModel),
    Projection(ProjectionMatrix),
}

impl Reducer {
    pub fn input_dim(&self) -> usize {
        match self {
            Reducer::Pca(m) => m.d,
            Reducer::Projection(p) => p.d(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Reducer::Pca(m) => m.k,
            Reducer::Projection(p) => p.k(),
        }
    }

    pub fn transform(&self, x: &FeatureMatrix) -> Result<FeatureMatrix, DimredError> {
        match self {
            Reducer::Pca(m) => m.transform(x),
            Reducer::Projection(p) => p.project(x),
        }
    }
}
