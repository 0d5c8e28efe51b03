//! Glue between stages: image to feature vector, manifest-wide
//! extraction, and the persisted model bundle.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{self, DatasetError, Manifest};
use crate::dimred::{DimredError, FeatureMatrix, Reducer};
use crate::features::{hog, scalar_features, FeatureError, HogParams, HOG_LENGTH};
use crate::forest::{ForestError, ForestModel};
use crate::imaging::{decode_pgm, preprocess, GrayImage, ImageError, DEFAULT_DILATION_RADIUS};
use crate::labels::ClassId;
use crate::mlp::{MlpError, MlpModel};
use crate::svm::{GridResult, SvmError, SvmModel};

pub const BUNDLE_FORMAT: &str = "hwr-model/1";
pub const SCALAR_COUNT: usize = 3;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Dimred(#[from] DimredError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error("feature dimension {got} does not match model input {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Width of a raw feature vector.
pub fn raw_dim(scalars: bool) -> usize {
    HOG_LENGTH + if scalars { SCALAR_COUNT } else { 0 }
}

/// Preprocess, describe, and optionally append the three scalar features.
pub fn word_features(img: &GrayImage, scalars: bool) -> Result<Vec<f64>, PipelineError> {
    let word = preprocess(img, DEFAULT_DILATION_RADIUS)?;
    let mut v = hog(&word.canonical, &HogParams::default())?;
    if scalars {
        let s = scalar_features(&word.ink, word.bbox.width);
        v.extend(s.normalized(word.ink.height(), word.ink.width()));
    }
    Ok(v)
}

pub fn image_features(bytes: &[u8], scalars: bool) -> Result<Vec<f64>, PipelineError> {
    word_features(&decode_pgm(bytes)?, scalars)
}

#[derive(Debug)]
pub struct Extraction {
    /// Rows for the images that succeeded, in manifest order.
    pub matrix: Option<FeatureMatrix>,
    pub labels: Vec<ClassId>,
    pub failures: Vec<(PathBuf, PipelineError)>,
}

/// Features for every manifest record. Failed images are skipped and
/// reported; output order follows the manifest.
pub fn extract_manifest(manifest: &Manifest, scalars: bool) -> Extraction {
    let results: Vec<(PathBuf, ClassId, Result<Vec<f64>, PipelineError>)> = manifest
        .records
        .par_iter()
        .map(|rec| {
            let path = manifest.resolve(rec);
            let res = std::fs::read(&path)
                .map_err(|source| {
                    PipelineError::Dataset(DatasetError::Io {
                        path: path.clone(),
                        source,
                    })
                })
                .and_then(|bytes| image_features(&bytes, scalars));
            (path, rec.label, res)
        })
        .collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut failures = Vec::new();
    for (path, label, res) in results {
        match res {
            Ok(v) => {
                rows.push(v);
                labels.push(label);
            }
            Err(e) => failures.push((path, e)),
        }
    }
    let matrix = if rows.is_empty() {
        None
    } else {
        Some(FeatureMatrix::from_rows(&rows).expect("descriptors are finite"))
    };
    Extraction {
        matrix,
        labels,
        failures,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Classifier {
    Mlp { model: MlpModel },
    Svm { model: SvmModel, grid: Option<GridResult> },
    Rf { model: ForestModel },
}

impl Classifier {
    pub fn input_dim(&self) -> usize {
        match self {
            Classifier::Mlp { model } => model.m,
            Classifier::Svm { model, .. } => model.dim,
            Classifier::Rf { model } => model.d,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Classifier::Mlp { .. } => "mlp",
            Classifier::Svm { .. } => "svm",
            Classifier::Rf { .. } => "rf",
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<ClassId, PipelineError> {
        Ok(match self {
            Classifier::Mlp { model } => model.predict(x)?,
            Classifier::Svm { model, .. } => model.predict(x)?,
            Classifier::Rf { model } => model.predict(x)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub n: usize,
    pub ratio: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl SplitInfo {
    pub fn apply(&self, labels: &[ClassId]) -> Result<dataset::SplitResult, DatasetError> {
        if self.stratified {
            dataset::split_stratified(labels, self.ratio, self.seed)
        } else {
            dataset::split(self.n, self.ratio, self.seed)
        }
    }
}

/// Everything `predict` needs to go from an image to a class id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format: String,
    pub classifier: Classifier,
    /// Width the classifier consumes.
    pub input_dim: usize,
    /// Width of the unreduced feature vector.
    pub raw_dim: usize,
    pub scalars: bool,
    pub reducer: Option<Reducer>,
    pub split: SplitInfo,
    pub n_classes: usize,
}

impl ModelBundle {
    /// Rows ready for the classifier: used as-is at `input_dim`, passed
    /// through the stored reducer at `raw_dim`.
    pub fn prepare(&self, x: FeatureMatrix) -> Result<FeatureMatrix, PipelineError> {
        if x.cols() == self.input_dim {
            return Ok(x);
        }
        match &self.reducer {
            Some(r) if x.cols() == self.raw_dim => Ok(r.transform(&x)?),
            _ => Err(PipelineError::Dimension {
                expected: self.input_dim,
                got: x.cols(),
            }),
        }
    }

    pub fn predict_image(&self, img: &GrayImage) -> Result<ClassId, PipelineError> {
        let v = word_features(img, self.scalars)?;
        let x = self.prepare(FeatureMatrix::new(1, v.len(), v)?)?;
        self.classifier.predict(x.row(0))
    }
}
