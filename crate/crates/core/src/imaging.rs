//! Word-image rasters and the preprocessing chain.
//!
//! Everything downstream consumes a 64-row by 128-column grayscale raster.
//! The chain that produces it is: Otsu binarization, square dilation to
//! merge strokes, bounding box of the dilated ink, crop of the *original*
//! grayscale at that box, and bicubic resampling to the canonical size.

use thiserror::Error;

/// Canonical raster height (rows).
pub const CANONICAL_HEIGHT: usize = 64;
/// Canonical raster width (columns).
pub const CANONICAL_WIDTH: usize = 128;
/// Default dilation radius (3x3 square).
pub const DEFAULT_DILATION_RADIUS: usize = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("invalid image dimensions {height}x{width}")]
    Dimensions { height: usize, width: usize },
    #[error("pixel buffer holds {got} values, expected {expected}")]
    BufferLength { expected: usize, got: usize },
    #[error("PGM decode: bad {field}: {detail}")]
    Header { field: &'static str, detail: String },
    #[error("PGM decode: truncated pixel data, expected {expected} bytes, found {got}")]
    Truncated { expected: usize, got: usize },
    #[error("image has no content (no ink pixels)")]
    NoContent,
    #[error("rect {rect:?} exceeds image bounds {height}x{width}")]
    OutOfBounds { rect: Rect, height: usize, width: usize },
}

/// 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if height == 0 || width == 0 {
            return Err(ImageError::Dimensions { height, width });
        }
        if pixels.len() != height * width {
            return Err(ImageError::BufferLength {
                expected: height * width,
                got: pixels.len(),
            });
        }
        Ok(Self { height, width, pixels })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Result<Self, ImageError> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self, ImageError> {
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    /// Rotate by 180 degrees.
    pub fn rotate180(&self) -> GrayImage {
        let mut pixels = self.pixels.clone();
        pixels.reverse();
        GrayImage {
            height: self.height,
            width: self.width,
            pixels,
        }
    }
}

/// Ink mask, row-major; `true` is ink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    height: usize,
    width: usize,
    pixels: Vec<bool>,
}

impl BinaryImage {
    pub fn new(height: usize, width: usize, pixels: Vec<bool>) -> Result<Self, ImageError> {
        if height == 0 || width == 0 {
            return Err(ImageError::Dimensions { height, width });
        }
        if pixels.len() != height * width {
            return Err(ImageError::BufferLength {
                expected: height * width,
                got: pixels.len(),
            });
        }
        Ok(Self { height, width, pixels })
    }

    /// All-background mask.
    pub fn empty(height: usize, width: usize) -> Result<Self, ImageError> {
        Self::new(height, width, vec![false; height * width])
    }

    /// Mask with ink at the listed `(row, col)` positions.
    pub fn with_ink(height: usize, width: usize, ink: &[(usize, usize)]) -> Result<Self, ImageError> {
        let mut img = Self::empty(height, width)?;
        for &(r, c) in ink {
            img.set(r, c, true);
        }
        Ok(img)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[bool] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ink: bool) {
        self.pixels[row * self.width + col] = ink;
    }

    pub fn ink_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    pub fn crop(&self, r: Rect) -> Result<BinaryImage, ImageError> {
        r.check_within(self.height, self.width)?;
        let mut pixels = Vec::with_capacity(r.height * r.width);
        for row in r.top..r.top + r.height {
            let start = row * self.width + r.left;
            pixels.extend_from_slice(&self.pixels[start..start + r.width]);
        }
        BinaryImage::new(r.height, r.width, pixels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn new(top: usize, left: usize, height: usize, width: usize) -> Self {
        Self {
            top,
            left,
            height,
            width,
        }
    }

    pub fn contains(&self, other: &Rect) -> bool {
        other.top >= self.top
            && other.left >= self.left
            && other.top + other.height <= self.top + self.height
            && other.left + other.width <= self.left + self.width
    }

    fn check_within(&self, height: usize, width: usize) -> Result<(), ImageError> {
        let ok =
            self.height >= 1 && self.width >= 1 && self.top + self.height <= height && self.left + self.width <= width;
        if ok {
            Ok(())
        } else {
            Err(ImageError::OutOfBounds {
                rect: *self,
                height,
                width,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// PGM (P5, maxval 255)

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, field: &'static str) -> Result<usize, ImageError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageError::Header {
                field,
                detail: "expected a decimal number".into(),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::Header {
                field,
                detail: "number out of range".into(),
            })
    }
}

/// Decode a binary PGM (`P5`, maxval 255).
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(ImageError::Header {
            field: "magic",
            detail: "expected \"P5\"".into(),
        });
    }
    let mut rd = HeaderReader { bytes, pos: 2 };
    let width = rd.number("width")?;
    let height = rd.number("height")?;
    let maxval = rd.number("maxval")?;
    if width == 0 {
        return Err(ImageError::Header {
            field: "width",
            detail: "must be at least 1".into(),
        });
    }
    if height == 0 {
        return Err(ImageError::Header {
            field: "height",
            detail: "must be at least 1".into(),
        });
    }
    if maxval != 255 {
        return Err(ImageError::Header {
            field: "maxval",
            detail: format!("{maxval} (only 255 is supported)"),
        });
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(rd.pos) {
        Some(b) if b.is_ascii_whitespace() => rd.pos += 1,
        _ => {
            return Err(ImageError::Header {
                field: "maxval",
                detail: "missing whitespace before pixel data".into(),
            })
        }
    }
    let expected = width * height;
    let data = &bytes[rd.pos..];
    if data.len() < expected {
        return Err(ImageError::Truncated {
            expected,
            got: data.len(),
        });
    }
    GrayImage::new(height, width, data[..expected].to_vec())
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

/// Luma conversion of interleaved RGB, weights 0.299/0.587/0.114, rounded half-up.
pub fn rgb_to_gray(height: usize, width: usize, rgb: &[u8]) -> Result<GrayImage, ImageError> {
    if rgb.len() != height * width * 3 {
        return Err(ImageError::BufferLength {
            expected: height * width * 3,
            got: rgb.len(),
        });
    }
    let pixels = rgb
        .chunks_exact(3)
        .map(|p| {
            let y = 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]);
            (y + 0.5).floor().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::new(height, width, pixels)
}

// ---------------------------------------------------------------------------
// Binarization, dilation, bounding box, crop

/// Otsu threshold over the 256-bin histogram.
///
/// Returns `t` such that ink is `intensity < t`, or `None` when the
/// histogram has a single occupied bin (no separation possible). Among
/// thresholds with equal between-class variance the lowest wins.
pub fn otsu_threshold(img: &GrayImage) -> Option<u16> {
    let mut hist = [0u64; 256];
    for &p in &img.pixels {
        hist[p as usize] += 1;
    }
    let total = img.pixels.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();

    let mut best: Option<(u16, f64)> = None;
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    // t ranges over 1..=255: class 0 holds intensities < t.
    for t in 1..256usize {
        w0 += hist[t - 1] as f64;
        sum0 += (t - 1) as f64 * hist[t - 1] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if best.is_none_or(|(_, v)| between > v) {
            best = Some((t as u16, between));
        }
    }
    best.filter(|&(_, v)| v > 0.0).map(|(t, _)| t)
}

pub fn binarize_otsu(img: &GrayImage) -> BinaryImage {
    let pixels = match otsu_threshold(img) {
        Some(t) => img.pixels.iter().map(|&p| u16::from(p) < t).collect(),
        None => vec![false; img.pixels.len()],
    };
    BinaryImage {
        height: img.height,
        width: img.width,
        pixels,
    }
}

/// Square dilation with a `(2*radius+1)^2` structuring element, clipped at the borders.
pub fn dilate(img: &BinaryImage, radius: usize) -> BinaryImage {
    if radius == 0 {
        return img.clone();
    }
    let (h, w) = (img.height, img.width);
    // The square element is separable: horizontal pass, then vertical.
    let mut horiz = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            let lo = c.saturating_sub(radius);
            let hi = (c + radius).min(w - 1);
            horiz[r * w + c] = img.pixels[r * w + lo..=r * w + hi].iter().any(|&p| p);
        }
    }
    let mut out = vec![false; h * w];
    for r in 0..h {
        let lo = r.saturating_sub(radius);
        let hi = (r + radius).min(h - 1);
        for c in 0..w {
            out[r * w + c] = (lo..=hi).any(|rr| horiz[rr * w + c]);
        }
    }
    BinaryImage {
        height: h,
        width: w,
        pixels: out,
    }
}

/// Tightest rectangle covering every ink pixel.
pub fn bounding_box(img: &BinaryImage) -> Result<Rect, ImageError> {
    let mut top = usize::MAX;
    let mut left = usize::MAX;
    let mut bottom = 0;
    let mut right = 0;
    for r in 0..img.height {
        for c in 0..img.width {
            if img.get(r, c) {
                top = top.min(r);
                bottom = bottom.max(r);
                left = left.min(c);
                right = right.max(c);
            }
        }
    }
    if top == usize::MAX {
        return Err(ImageError::NoContent);
    }
    Ok(Rect::new(top, left, bottom - top + 1, right - left + 1))
}

pub fn crop(img: &GrayImage, r: Rect) -> Result<GrayImage, ImageError> {
    r.check_within(img.height, img.width)?;
    let mut pixels = Vec::with_capacity(r.height * r.width);
    for row in r.top..r.top + r.height {
        let start = row * img.width + r.left;
        pixels.extend_from_slice(&img.pixels[start..start + r.width]);
    }
    GrayImage::new(r.height, r.width, pixels)
}

// ---------------------------------------------------------------------------
// Bicubic resampling

const CUBIC_A: f64 = -0.5;

/// Cubic convolution kernel with `a = -0.5`.
pub fn cubic_kernel(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((CUBIC_A + 2.0) * x - (CUBIC_A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((CUBIC_A * x - 5.0 * CUBIC_A) * x + 8.0 * CUBIC_A) * x - 4.0 * CUBIC_A
    } else {
        0.0
    }
}

/// Per output index: first source tap (may be negative) and four weights.
fn resample_taps(n_in: usize, n_out: usize) -> Vec<(isize, [f64; 4])> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|i| {
            let src = (i as f64 + 0.5) * scale - 0.5;
            let base = src.floor();
            let t = src - base;
            let w = [
                cubic_kernel(t + 1.0),
                cubic_kernel(t),
                cubic_kernel(1.0 - t),
                cubic_kernel(2.0 - t),
            ];
            (base as isize - 1, w)
        })
        .collect()
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Bicubic resize with edge-clamped sampling; outputs clamped to [0,255] and rounded half-up.
pub fn resize_bicubic(img: &GrayImage, out_h: usize, out_w: usize) -> Result<GrayImage, ImageError> {
    if out_h == 0 || out_w == 0 {
        return Err(ImageError::Dimensions {
            height: out_h,
            width: out_w,
        });
    }
    let (h, w) = (img.height, img.width);
    let xs = resample_taps(w, out_w);
    let ys = resample_taps(h, out_h);

    let mut horiz = vec![0.0f64; h * out_w];
    for r in 0..h {
        let row = &img.pixels[r * w..(r + 1) * w];
        for (c, (start, wts)) in xs.iter().enumerate() {
            let mut acc = 0.0;
            for (k, wt) in wts.iter().enumerate() {
                acc += wt * f64::from(row[clamp_index(start + k as isize, w)]);
            }
            horiz[r * out_w + c] = acc;
        }
    }

    let mut pixels = Vec::with_capacity(out_h * out_w);
    for (start, wts) in &ys {
        for c in 0..out_w {
            let mut acc = 0.0;
            for (k, wt) in wts.iter().enumerate() {
                acc += wt * horiz[clamp_index(start + k as isize, h) * out_w + c];
            }
            pixels.push((acc + 0.5).floor().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(out_h, out_w, pixels)
}

// ---------------------------------------------------------------------------
// Preprocessing chain

/// Result of locating and normalizing a word.
#[derive(Debug, Clone)]
pub struct WordImage {
    /// 64x128 raster fed to the descriptor.
    pub canonical: GrayImage,
    /// Otsu ink mask (undilated) cropped to the word box.
    pub ink: BinaryImage,
    /// Word box in source coordinates.
    pub bbox: Rect,
}

/// binarize -> dilate -> bbox -> crop original grayscale -> resize to 64x128.
pub fn preprocess(img: &GrayImage, dilation_radius: usize) -> Result<WordImage, ImageError> {
    let mask = binarize_otsu(img);
    let bbox = bounding_box(&dilate(&mask, dilation_radius))?;
    let word = crop(img, bbox)?;
    let canonical = resize_bicubic(&word, CANONICAL_HEIGHT, CANONICAL_WIDTH)?;
    Ok(WordImage {
        canonical,
        ink: mask.crop(bbox)?,
        bbox,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pgm(header: &str, data: &[u8]) -> Vec<u8> {
        let mut v = header.as_bytes().to_vec();
        v.extend_from_slice(data);
        v
    }

    #[test]
    fn decode_direct_encoding() {
        let img = decode_pgm(&pgm("P5\n2 2\n255\n", &[0, 255, 128, 64])).unwrap();
        assert_eq!((img.height(), img.width()), (2, 2));
        assert_eq!(img.pixels(), &[0, 255, 128, 64]);
    }

    #[test]
    fn decode_minimal_and_comments() {
        let img = decode_pgm(&pgm("P5 1 1 255\n", &[7])).unwrap();
        assert_eq!(img.pixels(), &[7]);
        let img = decode_pgm(&pgm("P5\n# scanner\n1 1\n255\n", &[9])).unwrap();
        assert_eq!(img.pixels(), &[9]);
    }

    #[test]
    fn decode_errors_name_field() {
        let err = decode_pgm(&pgm("P5\n4 4\n255\n", &[0; 8])).unwrap_err();
        assert_eq!(err, ImageError::Truncated { expected: 16, got: 8 });
        assert!(matches!(
            decode_pgm(b"P2\n1 1\n255\n0"),
            Err(ImageError::Header { field: "magic", .. })
        ));
        assert!(matches!(
            decode_pgm(&pgm("P5\n1 1\n65535\n", &[0, 0])),
            Err(ImageError::Header { field: "maxval", .. })
        ));
        assert!(matches!(
            decode_pgm(b"P5\nx 1\n255\n"),
            Err(ImageError::Header { field: "width", .. })
        ));
        assert!(matches!(
            decode_pgm(b"P5\n1\n"),
            Err(ImageError::Header { field: "height", .. })
        ));
    }

    #[test]
    fn otsu_bimodal() {
        let px: Vec<u8> = (0..20).map(|i| if i % 2 == 0 { 10 } else { 240 }).collect();
        let img = GrayImage::new(4, 5, px.clone()).unwrap();
        let b = binarize_otsu(&img);
        for (g, ink) in px.iter().zip(b.pixels()) {
            assert_eq!(*ink, *g == 10);
        }
    }

    #[test]
    fn otsu_constant_is_background() {
        let img = GrayImage::filled(3, 3, 200).unwrap();
        assert_eq!(binarize_otsu(&img).ink_count(), 0);
    }

    /// Exhaustive scan computing the between-class variance straight from
    /// the pixel list, independent of the histogram recurrence.
    fn brute_otsu_ink(px: &[u8]) -> usize {
        let mut best = (0u16, 0.0f64);
        for t in 1..=255u16 {
            let lo: Vec<f64> = px.iter().filter(|&&p| u16::from(p) < t).map(|&p| p as f64).collect();
            let hi: Vec<f64> = px.iter().filter(|&&p| u16::from(p) >= t).map(|&p| p as f64).collect();
            if lo.is_empty() || hi.is_empty() {
                continue;
            }
            let n = px.len() as f64;
            let (w0, w1) = (lo.len() as f64 / n, hi.len() as f64 / n);
            let m0 = lo.iter().sum::<f64>() / lo.len() as f64;
            let m1 = hi.iter().sum::<f64>() / hi.len() as f64;
            let v = w0 * w1 * (m0 - m1).powi(2);
            if v > best.1 {
                best = (t, v);
            }
        }
        px.iter().filter(|&&p| u16::from(p) < best.0).count()
    }

    #[test]
    fn otsu_six_pixels_matches_exhaustive_scan() {
        let px = [0u8, 0, 0, 255, 255, 255];
        assert_eq!(brute_otsu_ink(&px), 3);
        let img = GrayImage::new(1, 6, px.to_vec()).unwrap();
        assert_eq!(binarize_otsu(&img).ink_count(), 3);
    }

    #[test]
    fn dilate_cases() {
        let single = BinaryImage::with_ink(5, 5, &[(2, 2)]).unwrap();
        assert_eq!(dilate(&single, 0), single);
        let d = dilate(&single, 1);
        for r in 0..5 {
            for c in 0..5 {
                assert_eq!(d.get(r, c), (1..=3).contains(&r) && (1..=3).contains(&c));
            }
        }
        // Two pixels three columns apart merge into a 3x5 block.
        let two = BinaryImage::with_ink(5, 7, &[(2, 2), (2, 4)]).unwrap();
        let d = dilate(&two, 1);
        assert_eq!(d.ink_count(), 15);
        assert_eq!(bounding_box(&d).unwrap(), Rect::new(1, 1, 3, 5));
        // Corner pixel: neighborhood is clipped.
        let corner = BinaryImage::with_ink(4, 4, &[(0, 0)]).unwrap();
        assert_eq!(dilate(&corner, 1).ink_count(), 4);
    }

    #[test]
    fn bounding_box_cases() {
        let b = BinaryImage::with_ink(6, 6, &[(2, 3)]).unwrap();
        assert_eq!(bounding_box(&b).unwrap(), Rect::new(2, 3, 1, 1));
        let b = BinaryImage::with_ink(5, 8, &[(0, 0), (4, 7)]).unwrap();
        assert_eq!(bounding_box(&b).unwrap(), Rect::new(0, 0, 5, 8));
        let b = BinaryImage::empty(3, 3).unwrap();
        assert_eq!(bounding_box(&b), Err(ImageError::NoContent));
    }

    #[test]
    fn crop_cases() {
        let img = GrayImage::from_fn(3, 4, |r, c| (r * 4 + c) as u8).unwrap();
        assert_eq!(crop(&img, Rect::new(0, 0, 3, 4)).unwrap(), img);
        assert_eq!(crop(&img, Rect::new(0, 0, 1, 1)).unwrap().pixels(), &[0]);
        assert_eq!(crop(&img, Rect::new(1, 1, 2, 2)).unwrap().pixels(), &[5, 6, 9, 10]);
        assert!(matches!(
            crop(&img, Rect::new(0, 2, 1, 3)),
            Err(ImageError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn kernel_interpolates_nodes() {
        assert_eq!(cubic_kernel(0.0), 1.0);
        assert_eq!(cubic_kernel(1.0), 0.0);
        assert_eq!(cubic_kernel(2.0), 0.0);
        assert_eq!(cubic_kernel(-1.0), 0.0);
    }

    #[test]
    fn resize_constant_and_identity() {
        let img = GrayImage::filled(7, 13, 77).unwrap();
        let out = resize_bicubic(&img, 64, 128).unwrap();
        assert!(out.pixels().iter().all(|&p| p == 77));
        let img = GrayImage::from_fn(9, 11, |r, c| ((r * 37 + c * 91) % 256) as u8).unwrap();
        assert_eq!(resize_bicubic(&img, 9, 11).unwrap(), img);
    }

    #[test]
    fn resize_ramp_matches_hand_evaluation() {
        // Columns 0,40,80,120 in every row.
        let img = GrayImage::from_fn(4, 4, |_, c| (c * 40) as u8).unwrap();
        let out = resize_bicubic(&img, 8, 8).unwrap();
        // Hand evaluation: output col j samples src = (j+0.5)/2 - 0.5.
        // Weights for t = 0.25: k(1.25), k(0.25), k(0.75), k(1.75)
        //   = -0.0703125, 0.8671875, 0.2265625, -0.0234375
        // Weights for t = 0.75 are the mirror image.
        let k = |x: f64| -> f64 {
            let a = -0.5;
            let x = x.abs();
            if x <= 1.0 {
                (a + 2.0) * x.powi(3) - (a + 3.0) * x.powi(2) + 1.0
            } else {
                a * x.powi(3) - 5.0 * a * x.powi(2) + 8.0 * a * x - 4.0 * a
            }
        };
        assert!((k(1.25) - -0.0703125).abs() < 1e-15);
        assert!((k(0.25) - 0.8671875).abs() < 1e-15);
        // j = 0: src = -0.25 -> taps at -2,-1,0,1 clamped to 0,0,0,1; t = 0.75.
        let v0 = k(1.75) * 0.0 + k(0.75) * 0.0 + k(0.25) * 0.0 + k(1.25) * 40.0;
        // j = 3: src = 1.25 -> taps 0,1,2,3, t = 0.25.
        let v3 = k(1.25) * 0.0 + k(0.25) * 40.0 + k(0.75) * 80.0 + k(1.75) * 120.0;
        // j = 7: src = 3.25 -> taps 2,3,4,5 clamped to 2,3,3,3.
        let v7 = k(1.25) * 80.0 + k(0.25) * 120.0 + k(0.75) * 120.0 + k(1.75) * 120.0;
        let round = |v: f64| (v + 0.5).floor().clamp(0.0, 255.0) as u8;
        for r in 0..8 {
            assert_eq!(out.get(r, 0), round(v0));
            assert_eq!(out.get(r, 3), round(v3));
            assert_eq!(out.get(r, 7), round(v7));
            for c in 1..8 {
                assert!(out.get(r, c) >= out.get(r, c - 1));
            }
        }
        assert_eq!(round(v3), 50);
    }

    #[test]
    fn preprocess_yields_canonical_raster() {
        let img = GrayImage::from_fn(40, 90, |r, c| {
            if (10..20).contains(&r) && (30..70).contains(&c) {
                20
            } else {
                230
            }
        })
        .unwrap();
        let w = preprocess(&img, 1).unwrap();
        assert_eq!((w.canonical.height(), w.canonical.width()), (64, 128));
        assert_eq!(w.bbox, Rect::new(9, 29, 12, 42));
        assert_eq!(w.ink.ink_count(), 400);
    }

    #[test]
    fn luma_conversion() {
        let g = rgb_to_gray(1, 3, &[255, 255, 255, 255, 0, 0, 0, 0, 255]).unwrap();
        assert_eq!(g.pixels(), &[255, 76, 29]);
    }
}
