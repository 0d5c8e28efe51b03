//! HOG descriptor and the scalar word features.
//!
//! Descriptor layout (model files depend on it): blocks row-major
//! (top-to-bottom, then left-to-right), the 2x2 cells inside a block
//! row-major, then orientation bins in ascending angle.

use crate::imaging::{BinaryImage, GrayImage, CANONICAL_WIDTH};
use thiserror::Error;

/// Descriptor length for the canonical 64x128 raster with default parameters.
pub const HOG_LENGTH: usize = 3780;

const L2HYS_EPS: f64 = 1e-5;
const L2HYS_CLIP: f64 = 0.2;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("invalid HOG parameters: {0}")]
    Params(String),
    #[error("image is {got_h}x{got_w}, expected {want_h}x{want_w}")]
    Dimensions {
        want_h: usize,
        want_w: usize,
        got_h: usize,
        got_w: usize,
    },
}

/// HOG geometry. Sizes are `(rows, cols)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HogParams {
    pub cell: (usize, usize),
    pub block: (usize, usize),
    pub stride: (usize, usize),
    pub bins: usize,
    /// Signed (0-360) orientations. Only unsigned is supported.
    pub signed: bool,
}

impl Default for HogParams {
    fn default() -> Self {
        Self {
            cell: (8, 8),
            block: (16, 16),
            stride: (8, 8),
            bins: 9,
            signed: false,
        }
    }
}

/// Derived grid sizes for one image shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HogLayout {
    pub cells_y: usize,
    pub cells_x: usize,
    pub cells_per_block: (usize, usize),
    pub stride_cells: (usize, usize),
    pub blocks_y: usize,
    pub blocks_x: usize,
    pub bins: usize,
}

impl HogLayout {
    pub fn descriptor_len(&self) -> usize {
        self.blocks_y * self.blocks_x * self.cells_per_block.0 * self.cells_per_block.1 * self.bins
    }
}

impl HogParams {
    pub fn layout(&self, height: usize, width: usize) -> Result<HogLayout, FeatureError> {
        let err = |m: String| Err(FeatureError::Params(m));
        if self.signed {
            return err("signed orientations are not supported".into());
        }
        if self.bins < 2 {
            return err(format!("need at least 2 bins, got {}", self.bins));
        }
        let (ch, cw) = self.cell;
        let (bh, bw) = self.block;
        let (sh, sw) = self.stride;
        if ch == 0 || cw == 0 || sh == 0 || sw == 0 {
            return err("cell and stride sizes must be positive".into());
        }
        if bh == 0 || bw == 0 || bh % ch != 0 || bw % cw != 0 {
            return err(format!(
                "block {:?} is not a multiple of cell {:?}",
                self.block, self.cell
            ));
        }
        if sh % ch != 0 || sw % cw != 0 {
            return err(format!(
                "stride {:?} is not a multiple of cell {:?}",
                self.stride, self.cell
            ));
        }
        if height < bh || width < bw || !height.is_multiple_of(ch) || !width.is_multiple_of(cw) {
            return err(format!(
                "image {height}x{width} does not tile into cells {:?} with block {:?}",
                self.cell, self.block
            ));
        }
        if !(height - bh).is_multiple_of(sh) || !(width - bw).is_multiple_of(sw) {
            return err(format!(
                "stride {:?} does not cover image {height}x{width} with block {:?}",
                self.stride, self.block
            ));
        }
        Ok(HogLayout {
            cells_y: height / ch,
            cells_x: width / cw,
            cells_per_block: (bh / ch, bw / cw),
            stride_cells: (sh / ch, sw / cw),
            blocks_y: (height - bh) / sh + 1,
            blocks_x: (width - bw) / sw + 1,
            bins: self.bins,
        })
    }
}

/// Per-cell orientation histograms, `cells_y * cells_x * bins`, cell-row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    pub cells_y: usize,
    pub cells_x: usize,
    pub bins: usize,
    pub values: Vec<f64>,
}

impl CellGrid {
    pub fn cell(&self, cy: usize, cx: usize) -> &[f64] {
        let start = (cy * self.cells_x + cx) * self.bins;
        &self.values[start..start + self.bins]
    }
}

/// Orientation histograms over the cell grid, before block normalization.
///
/// Gradients are centered differences with edge replication. The unsigned
/// angle in [0, 180) is split linearly between the two nearest bin centers
/// (bin `i` is centered at `i * 180 / bins` degrees, wrapping around), with
/// weight equal to the gradient magnitude.
pub fn cell_histograms(img: &GrayImage, params: &HogParams) -> Result<CellGrid, FeatureError> {
    let layout = params.layout(img.height(), img.width())?;
    let (h, w) = (img.height(), img.width());
    let (ch, cw) = params.cell;
    let bins = params.bins;
    let bin_width = 180.0 / bins as f64;
    let px = |r: usize, c: usize| f64::from(img.get(r, c));

    let mut values = vec![0.0; layout.cells_y * layout.cells_x * bins];
    for r in 0..h {
        let (up, down) = (r.saturating_sub(1), (r + 1).min(h - 1));
        for c in 0..w {
            let (left, right) = (c.saturating_sub(1), (c + 1).min(w - 1));
            let gx = px(r, right) - px(r, left);
            let gy = px(down, c) - px(up, c);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            if angle >= 180.0 {
                angle -= 180.0;
            }
            let pos = angle / bin_width;
            let lo = pos.floor();
            let frac = pos - lo;
            let lo = (lo as usize) % bins;
            let hi = (lo + 1) % bins;
            let base = ((r / ch) * layout.cells_x + c / cw) * bins;
            values[base + lo] += mag * (1.0 - frac);
            if frac > 0.0 {
                values[base + hi] += mag * frac;
            }
        }
    }
    Ok(CellGrid {
        cells_y: layout.cells_y,
        cells_x: layout.cells_x,
        bins,
        values,
    })
}

fn l2_hys(block: &mut [f64]) {
    let normalize = |v: &mut [f64]| {
        let norm = (v.iter().map(|x| x * x).sum::<f64>() + L2HYS_EPS * L2HYS_EPS).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
    };
    normalize(block);
    block.iter_mut().for_each(|x| *x = x.min(L2HYS_CLIP));
    normalize(block);
}

/// HOG descriptor of an image whose shape fits `params`.
pub fn hog_any(img: &GrayImage, params: &HogParams) -> Result<Vec<f64>, FeatureError> {
    let layout = params.layout(img.height(), img.width())?;
    let grid = cell_histograms(img, params)?;
    let (cpb_y, cpb_x) = layout.cells_per_block;
    let block_len = cpb_y * cpb_x * layout.bins;
    let mut out = Vec::with_capacity(layout.descriptor_len());
    let mut block = Vec::with_capacity(block_len);
    for by in 0..layout.blocks_y {
        for bx in 0..layout.blocks_x {
            block.clear();
            let (cy0, cx0) = (by * layout.stride_cells.0, bx * layout.stride_cells.1);
            for cy in cy0..cy0 + cpb_y {
                for cx in cx0..cx0 + cpb_x {
                    block.extend_from_slice(grid.cell(cy, cx));
                }
            }
            l2_hys(&mut block);
            out.extend_from_slice(&block);
        }
    }
    Ok(out)
}

/// HOG descriptor of a canonical 64x128 word image: 3780 values with default params.
pub fn hog(img: &GrayImage, params: &HogParams) -> Result<Vec<f64>, FeatureError> {
    use crate::imaging::CANONICAL_HEIGHT;
    if img.height() != CANONICAL_HEIGHT || img.width() != CANONICAL_WIDTH {
        return Err(FeatureError::Dimensions {
            want_h: CANONICAL_HEIGHT,
            want_w: CANONICAL_WIDTH,
            got_h: img.height(),
            got_w: img.width(),
        });
    }
    hog_any(img, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalarFeatures {
    pub upper_black: usize,
    pub lower_black: usize,
    /// Word width in source pixels, before resizing.
    pub length: usize,
}

impl ScalarFeatures {
    /// Values appended to a descriptor: ink fractions of each half and
    /// the length divided by the canonical width.
    pub fn normalized(&self, height: usize, width: usize) -> [f64; 3] {
        let upper_rows = height / 2;
        let upper_area = (upper_rows * width).max(1) as f64;
        let lower_area = ((height - upper_rows) * width).max(1) as f64;
        [
            self.upper_black as f64 / upper_area,
            self.lower_black as f64 / lower_area,
            self.length as f64 / CANONICAL_WIDTH as f64,
        ]
    }
}

/// Ink counts of the upper rows `[0, h/2)` and lower rows `[h/2, h)`.
pub fn scalar_features(bin_img: &BinaryImage, original_width: usize) -> ScalarFeatures {
    let split = bin_img.height() / 2;
    let w = bin_img.width();
    let (upper, lower) = bin_img.pixels().split_at(split * w);
    ScalarFeatures {
        upper_black: upper.iter().filter(|&&p| p).count(),
        lower_black: lower.iter().filter(|&&p| p).count(),
        length: original_width,
    }
}
