//! Manifests, train/test splits, the FMX1 matrix container and the
//! synthetic word-image generator.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use thiserror::Error;

use crate::dimred::{DimredError, FeatureMatrix};
use crate::imaging::{encode_pgm, GrayImage, ImageError};
use crate::labels::{self, ClassId, NUM_CLASSES};
use crate::rng;

pub const MANIFEST_HEADER: [&str; 2] = ["path", "label"];
pub const MANIFEST_NAME: &str = "manifest.csv";
pub const FMX_MAGIC: &[u8; 4] = b"FMX1";
pub const DEFAULT_RATIO: f64 = 0.8;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {message}")]
    Manifest { line: u64, message: String },
    #[error("FMX1: {0}")]
    Fmx(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    /// Path as written in the manifest.
    pub path: String,
    pub label: ClassId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    /// Directory relative paths resolve against.
    pub root: PathBuf,
    pub records: Vec<Record>,
}

impl Manifest {
    pub fn resolve(&self, record: &Record) -> PathBuf {
        self.root.join(&record.path)
    }

    pub fn labels(&self) -> Vec<ClassId> {
        self.records.iter().map(|r| r.label).collect()
    }
}

/// A label cell: integer id or the district name.
pub fn parse_label(cell: &str) -> Result<ClassId, String> {
    let cell = cell.trim();
    if let Ok(id) = cell.parse::<usize>() {
        return labels::codepoints(id).map(|_| id).map_err(|e| e.to_string());
    }
    labels::unicode_to_label(cell).map_err(|e| e.to_string())
}

pub fn parse_manifest(text: &str, root: &Path) -> Result<Manifest, DatasetError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| DatasetError::Manifest {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().map(str::trim).ne(MANIFEST_HEADER) {
        return Err(DatasetError::Manifest {
            line: 1,
            message: format!(
                "header must be \"path,label\", got {:?}",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| DatasetError::Manifest {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let path = row[0].trim();
        if path.is_empty() {
            return Err(DatasetError::Manifest {
                line,
                message: "empty path".into(),
            });
        }
        let label = parse_label(&row[1]).map_err(|message| DatasetError::Manifest { line, message })?;
        records.push(Record {
            path: path.to_string(),
            label,
        });
    }
    Ok(Manifest {
        root: root.to_path_buf(),
        records,
    })
}

pub fn load_manifest(path: &Path) -> Result<Manifest, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, &root)
}

pub fn render_manifest(records: &[Record]) -> String {
    let mut out = String::from("path,label\n");
    for r in records {
        out.push_str(&format!("{},{}\n", r.path, r.label));
    }
    out
}

// ---------------------------------------------------------------------------
// Split

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    pub ratio: f64,
}

fn check_split(n: usize, ratio: f64) -> Result<(), DatasetError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::Param(format!("ratio must be in (0, 1), got {ratio}")));
    }
    if n < 2 {
        return Err(DatasetError::Param(format!("need at least 2 samples, got {n}")));
    }
    Ok(())
}

pub fn train_count(n: usize, ratio: f64) -> usize {
    (ratio * n as f64).floor() as usize
}

/// Shuffle `0..n` and cut after `floor(ratio * n)`.
pub fn split(n: usize, ratio: f64, seed: u64) -> Result<SplitResult, DatasetError> {
    check_split(n, ratio)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::rng(seed));
    let test = idx.split_off(train_count(n, ratio));
    Ok(SplitResult {
        train: idx,
        test,
        seed,
        ratio,
    })
}

/// Per-class split with the same total train count; leftover train slots
/// go to the classes with the largest fractional quota, lower id first.
pub fn split_stratified(labels: &[ClassId], ratio: f64, seed: u64) -> Result<SplitResult, DatasetError> {
    let n = labels.len();
    check_split(n, ratio)?;
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut r = rng::rng(seed);
    let mut members = Vec::new();
    let mut quota = Vec::new();
    for &c in &classes {
        let mut idx: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut r);
        let exact = ratio * idx.len() as f64;
        quota.push((exact.floor() as usize, exact - exact.floor()));
        members.push(idx);
    }
    let mut deficit = train_count(n, ratio) - quota.iter().map(|q| q.0).sum::<usize>();
    let mut order: Vec<usize> = (0..classes.len()).collect();
    order.sort_by(|&a, &b| quota[b].1.total_cmp(&quota[a].1).then(a.cmp(&b)));
    for k in order {
        if deficit == 0 {
            break;
        }
        if quota[k].0 < members[k].len() {
            quota[k].0 += 1;
            deficit -= 1;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (idx, (q, _)) in members.iter().zip(&quota) {
        train.extend_from_slice(&idx[..*q]);
        test.extend_from_slice(&idx[*q..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitResult {
        train,
        test,
        seed,
        ratio,
    })
}

// ---------------------------------------------------------------------------
// FMX1

pub fn encode_fmx(m: &FeatureMatrix) -> Result<Vec<u8>, DatasetError> {
    if m.rows() == 0 {
        return Err(DatasetError::Fmx("refusing to write a matrix with 0 rows".into()));
    }
    let rows = u32::try_from(m.rows()).map_err(|_| DatasetError::Fmx("too many rows".into()))?;
    let cols = u32::try_from(m.cols()).map_err(|_| DatasetError::Fmx("too many columns".into()))?;
    let mut out = Vec::with_capacity(12 + 8 * m.values().len());
    out.extend_from_slice(FMX_MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for v in m.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_fmx(bytes: &[u8]) -> Result<FeatureMatrix, DatasetError> {
    if bytes.len() < 12 || &bytes[..4] != FMX_MAGIC {
        return Err(DatasetError::Fmx("bad magic".into()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[12..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| DatasetError::Fmx("shape overflows".into()))?;
    if payload.len() != expected {
        return Err(DatasetError::Fmx(format!(
            "{rows}x{cols} needs {expected} payload bytes, found {}",
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureMatrix::new(rows, cols, values).map_err(|e| match e {
        DimredError::NonFinite { row, col } => DatasetError::Fmx(format!("non-finite value at ({row}, {col})")),
        other => DatasetError::Fmx(other.to_string()),
    })
}

pub fn write_fmx(m: &FeatureMatrix, path: &Path) -> Result<(), DatasetError> {
    let bytes = encode_fmx(m)?;
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_fmx(path: &Path) -> Result<FeatureMatrix, DatasetError> {
    decode_fmx(&fs::read(path).map_err(io_err(path))?)
}

/// One class id per line, aligned with matrix rows.
pub fn write_labels(labels: &[ClassId], path: &Path) -> Result<(), DatasetError> {
    let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_labels(path: &Path) -> Result<Vec<ClassId>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            parse_label(l).map_err(|message| DatasetError::Manifest {
                line: i as u64 + 1,
                message: format!("{}: {message}", path.display()),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Synthetic words

pub type Stroke = Vec<(f64, f64)>;

const GLYPH_PITCH: f64 = 28.0;
/// Vertical bands on the 64-row canvas.
const ASCENDER: f64 = 10.0;
const X_TOP: f64 = 22.0;
const MID: f64 = 33.0;
const BASE: f64 = 44.0;
const DESCENDER: f64 = 54.0;

/// Glyph strings per class, index `id - 1`.
pub const ARCHETYPES: [&str; NUM_CLASSES] = [
    "oxn", "nvzn", "xouzt", "zlcvo", "coxl", "nlvce", "vje", "ujtz", "sjoln", "tsuex", "elsv", "zexvu", "cnx", "xtoj",
];

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, from_deg: f64, to_deg: f64) -> Stroke {
    let steps = ((to_deg - from_deg).abs() / 6.0).ceil().max(1.0) as usize;
    (0..=steps)
        .map(|i| {
            let t = (from_deg + (to_deg - from_deg) * i as f64 / steps as f64).to_radians();
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

fn glyph(ch: char, cx: f64) -> Vec<Stroke> {
    let (rx, ry) = (10.0, 11.0);
    let (l, r) = (cx - rx, cx + rx);
    match ch {
        'o' => vec![arc(cx, MID, rx, ry, 0.0, 360.0)],
        'c' => vec![arc(cx, MID, rx, ry, 45.0, 315.0)],
        'u' => {
            let mut s = vec![(l, X_TOP)];
            s.extend(arc(cx, MID, rx, ry, 180.0, 0.0));
            s.push((r, X_TOP));
            vec![s]
        }
        'n' => {
            let mut s = vec![(l, BASE)];
            s.extend(arc(cx, MID, rx, ry, 180.0, 360.0));
            s.push((r, BASE));
            vec![s]
        }
        'l' => vec![vec![(cx, ASCENDER), (cx, BASE)]],
        'j' => {
            let mut s = vec![(cx + 4.0, X_TOP), (cx + 4.0, DESCENDER - 5.0)];
            s.extend(arc(cx - 2.0, DESCENDER - 5.0, 6.0, 5.0, 0.0, 180.0));
            vec![s]
        }
        'z' => vec![vec![(l, X_TOP), (r, X_TOP), (l, BASE), (r, BASE)]],
        'v' => vec![vec![(l, X_TOP), (cx, BASE), (r, X_TOP)]],
        'x' => vec![vec![(l, X_TOP), (r, BASE)], vec![(r, X_TOP), (l, BASE)]],
        'e' => vec![arc(cx, MID, rx, ry, 0.0, 320.0), vec![(l, MID), (r, MID)]],
        's' => {
            let mut s = arc(cx, X_TOP + 5.5, rx * 0.8, 5.5, 330.0, 90.0);
            s.extend(arc(cx, BASE - 5.5, rx * 0.8, 5.5, 270.0, 510.0));
            vec![s]
        }
        't' => vec![vec![(cx, ASCENDER), (cx, BASE)], vec![(l, X_TOP), (r, X_TOP)]],
        other => panic!("no glyph for {other:?}"),
    }
}

/// Strokes of a class archetype, centered on the canvas.
pub fn archetype(class: ClassId, canvas_width: usize) -> Vec<Stroke> {
    let word = ARCHETYPES[class - 1];
    let n = word.chars().count() as f64;
    let start = canvas_width as f64 / 2.0 - GLYPH_PITCH * (n - 1.0) / 2.0;
    word.chars()
        .enumerate()
        .flat_map(|(i, ch)| glyph(ch, start + GLYPH_PITCH * i as f64))
        .collect()
}

/// Per-sample geometric jitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jitter {
    pub rotation_deg: f64,
    pub scale: f64,
    pub dx: f64,
    pub dy: f64,
    pub thickness: f64,
}

impl Jitter {
    pub const NONE: Jitter = Jitter {
        rotation_deg: 0.0,
        scale: 1.0,
        dx: 0.0,
        dy: 0.0,
        thickness: 3.5,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub per_class: usize,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub max_rotation_deg: f64,
    pub scale_range: (f64, f64),
    pub max_translation: f64,
    pub thickness_range: (f64, f64),
    /// Chance that a pixel is forced to white.
    pub salt: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            per_class: 56,
            seed: rng::DEFAULT_SEED,
            height: 64,
            width: 192,
            max_rotation_deg: 5.0,
            scale_range: (0.9, 1.1),
            max_translation: 4.0,
            thickness_range: (2.0, 5.0),
            salt: 0.005,
        }
    }
}

fn segment_distance(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - a.0) * vx + (py - a.1) * vy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * vx - px, a.1 + t * vy - py);
    (qx * qx + qy * qy).sqrt()
}

/// Dark strokes on white, anti-aliased by distance to the stroke centerline.
pub fn render(strokes: &[Stroke], jitter: &Jitter, height: usize, width: usize) -> Result<GrayImage, ImageError> {
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let (sin, cos) = jitter.rotation_deg.to_radians().sin_cos();
    let map = |(x, y): (f64, f64)| {
        let (ux, uy) = ((x - cx) * jitter.scale, (y - cy) * jitter.scale);
        (
            cx + cos * ux - sin * uy + jitter.dx,
            cy + sin * ux + cos * uy + jitter.dy,
        )
    };
    let half = jitter.thickness / 2.0;
    let mut cover = vec![0.0f64; height * width];
    for stroke in strokes {
        let pts: Vec<(f64, f64)> = stroke.iter().copied().map(map).collect();
        for seg in pts.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let reach = half + 1.0;
            let r0 = (a.1.min(b.1) - reach).floor().max(0.0) as usize;
            let r1 = ((a.1.max(b.1) + reach).ceil().max(0.0) as usize).min(height);
            let c0 = (a.0.min(b.0) - reach).floor().max(0.0) as usize;
            let c1 = ((a.0.max(b.0) + reach).ceil().max(0.0) as usize).min(width);
            for r in r0..r1 {
                for c in c0..c1 {
                    let d = segment_distance(c as f64 + 0.5, r as f64 + 0.5, a, b);
                    let v = (half + 0.5 - d).clamp(0.0, 1.0);
                    let slot = &mut cover[r * width + c];
                    if v > *slot {
                        *slot = v;
                    }
                }
            }
        }
    }
    let pixels = cover.iter().map(|&v| (255.0 * (1.0 - v)).round() as u8).collect();
    GrayImage::new(height, width, pixels)
}

/// Sample `index` of `class`, fully determined by the spec seed.
pub fn render_sample(spec: &SynthSpec, class: ClassId, index: usize) -> Result<GrayImage, ImageError> {
    let mut r = rng::stream(spec.seed, ((class as u64) << 32) | index as u64);
    let jitter = Jitter {
        rotation_deg: r.random_range(-spec.max_rotation_deg..=spec.max_rotation_deg),
        scale: r.random_range(spec.scale_range.0..=spec.scale_range.1),
        dx: r.random_range(-spec.max_translation..=spec.max_translation),
        dy: r.random_range(-spec.max_translation..=spec.max_translation),
        thickness: r.random_range(spec.thickness_range.0..=spec.thickness_range.1),
    };
    let img = render(&archetype(class, spec.width), &jitter, spec.height, spec.width)?;
    let mut pixels = img.into_pixels();
    for p in &mut pixels {
        if r.random::<f64>() < spec.salt {
            *p = 255;
        }
    }
    GrayImage::new(spec.height, spec.width, pixels)
}

pub fn synth_filename(class: ClassId, index: usize) -> String {
    format!("c{class:02}_{index:03}.pgm")
}

/// Write `14 * per_class` PGM images plus `manifest.csv` into `out`.
pub fn synth_generate(spec: &SynthSpec, out: &Path) -> Result<Manifest, DatasetError> {
    if spec.per_class == 0 {
        return Err(DatasetError::Param("per_class must be at least 1".into()));
    }
    if !(0.0..=0.005).contains(&spec.salt) {
        return Err(DatasetError::Param(format!(
            "salt probability {} above 0.005",
            spec.salt
        )));
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut records = Vec::with_capacity(NUM_CLASSES * spec.per_class);
    for class in 1..=NUM_CLASSES {
        for index in 0..spec.per_class {
            let name = synth_filename(class, index);
            let img = render_sample(spec, class, index)?;
            let path = out.join(&name);
            fs::write(&path, encode_pgm(&img)).map_err(io_err(&path))?;
            records.push(Record {
                path: name,
                label: class,
            });
        }
    }
    let manifest_path = out.join(MANIFEST_NAME);
    let mut f = fs::File::create(&manifest_path).map_err(io_err(&manifest_path))?;
    f.write_all(render_manifest(&records).as_bytes())
        .map_err(io_err(&manifest_path))?;
    Ok(Manifest {
        root: out.to_path_buf(),
        records,
    })
}
