//! Holistic handwritten word recognition.
//!
//! A word image is located, cropped and resized to a 64x128 raster,
//! described by a 3780-value HOG vector, optionally reduced (PCA or random
//! projection) and classified by an MLP, an RBF SVM or a random forest.
//! Class ids 1..=14 map to Malayalam district names.

pub mod dataset;
pub mod dimred;
pub mod eval;
pub mod features;
pub mod forest;
pub mod imaging;
pub mod labels;
pub mod mlp;
pub mod pipeline;
pub mod rng;
pub mod svm;

/// Parse JSON without the default nesting limit; tree models nest one
/// level per split.
pub fn from_json<T: serde::de::DeserializeOwned>(s: &str) -> serde_json::Result<T> {
    let mut de = serde_json::Deserializer::from_str(s);
    de.disable_recursion_limit();
    let value = T::deserialize(&mut de)?;
    de.end()?;
    Ok(value)
}
