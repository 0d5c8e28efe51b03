//! `hwr`: synth -> features -> reduce -> train -> eval -> predict.
//!
//! Exit codes: 0 success, 1 runtime or I/O failure, 2 usage or dimension error.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use hwr_core::dataset::{self, SynthSpec};
use hwr_core::dimred::{self, DimredError, FeatureMatrix, ProjectionKind, Reducer};
use hwr_core::eval::{self, Average};
use hwr_core::forest::{self, Voting};
use hwr_core::imaging::decode_pgm;
use hwr_core::labels::{self, ClassId, NUM_CLASSES};
use hwr_core::mlp::{self, TrainConfig};
use hwr_core::pipeline::{self, Classifier, ModelBundle, PipelineError, SplitInfo, BUNDLE_FORMAT};
use hwr_core::rng::{stage_seed, DEFAULT_SEED};
use hwr_core::svm::{self, GridSpec, SvmParams};

#[derive(Parser)]
#[command(name = "hwr", version, about = "Holistic handwritten word recognition pipeline")]
struct Cli {
    /// Master seed; every stage derives its own seed from it.
    #[arg(long, global = true, env = "HWR_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic word images and a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 56)]
        per_class: usize,
    },
    /// Extract HOG features for every manifest image.
    Features {
        #[arg(long)]
        manifest: PathBuf,
        /// FMX1 output; labels go next to it with a .labels extension.
        #[arg(long)]
        out: PathBuf,
        /// Append upper/lower ink fractions and word length.
        #[arg(long)]
        scalars: bool,
    },
    /// Fit PCA or draw a random projection and reduce a feature matrix.
    Reduce {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        dim: usize,
        /// Reducer JSON output.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a classifier on the training split.
    Train {
        #[arg(long = "in")]
        input: PathBuf,
        /// Defaults to the input path with a .labels extension.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, value_enum)]
        classifier: ClassifierKind,
        /// Reducer that produced the input; embedded so predict can run on images.
        #[arg(long)]
        reducer: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 100)]
        hidden: usize,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long, value_enum, default_value_t = VotingArg::Soft)]
        voting: VotingArg,
        /// SVM box constraint; with --gamma skips the grid search.
        #[arg(long, requires = "gamma")]
        c: Option<f64>,
        #[arg(long, requires = "c")]
        gamma: Option<f64>,
        /// SVM grid; only "default" is defined.
        #[arg(long, default_value = "default")]
        grid: String,
        #[arg(long, default_value_t = svm::DEFAULT_FOLDS)]
        folds: usize,
        #[arg(long, default_value_t = dataset::DEFAULT_RATIO)]
        ratio: f64,
        /// Split seed; derived from --seed when absent.
        #[arg(long)]
        split_seed: Option<u64>,
        #[arg(long)]
        stratified: bool,
    },
    /// Evaluate a model on the test split it was trained against.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Write the text report here as well as stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// JSON twin of the report.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Evaluate every row instead of the stored test split.
        #[arg(long)]
        all: bool,
        /// Unweighted class averages in the footer.
        #[arg(long = "macro")]
        macro_avg: bool,
    },
    /// Classify one image with the full stored pipeline.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Also print the district name.
        #[arg(long)]
        interpret: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Pca,
    Grp,
    Srp,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassifierKind {
    Mlp,
    Svm,
    Rf,
}

#[derive(Clone, Copy, ValueEnum)]
enum VotingArg {
    Soft,
    Hard,
}

/// Errors that exit with status 2.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("{}: no such file", path.display());
    }
    Ok(())
}

fn require_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => {
            bail!("{}: output directory does not exist", p.display())
        }
        _ => Ok(()),
    }
}

fn labels_path(fmx: &Path) -> PathBuf {
    fmx.with_extension("labels")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn dimred_err(e: DimredError) -> anyhow::Error {
    match e {
        DimredError::Dimension(m) | DimredError::Param(m) => usage(m),
        other => other.into(),
    }
}

fn pipeline_err(e: PipelineError) -> anyhow::Error {
    match e {
        PipelineError::Dimension { expected, got } => usage(format!(
            "feature dimension {got} does not match model input dimension {expected}"
        )),
        other => other.into(),
    }
}

fn load_matrix(input: &Path, labels: Option<&Path>) -> Result<(FeatureMatrix, Vec<ClassId>)> {
    let labels_file = labels.map_or_else(|| labels_path(input), Path::to_path_buf);
    require_file(input)?;
    require_file(&labels_file)?;
    let x = dataset::read_fmx(input)?;
    let y = dataset::read_labels(&labels_file)?;
    if x.rows() != y.len() {
        return Err(usage(format!(
            "{} has {} rows but {} has {} labels",
            input.display(),
            x.rows(),
            labels_file.display(),
            y.len()
        )));
    }
    Ok((x, y))
}

fn cmd_synth(seed: u64, out: &Path, per_class: usize) -> Result<()> {
    if per_class == 0 {
        return Err(usage("--per-class must be at least 1"));
    }
    let spec = SynthSpec {
        per_class,
        seed: stage_seed(seed, "synth"),
        ..SynthSpec::default()
    };
    let manifest = dataset::synth_generate(&spec, out)?;
    println!("{} images written", manifest.records.len());
    println!("manifest: {}", out.join(dataset::MANIFEST_NAME).display());
    Ok(())
}

fn cmd_features(manifest: &Path, out: &Path, scalars: bool) -> Result<()> {
    require_file(manifest)?;
    require_parent(out)?;
    let m = dataset::load_manifest(manifest)?;
    let ex = pipeline::extract_manifest(&m, scalars);
    for (path, err) in &ex.failures {
        eprintln!("failed: {}: {err}", path.display());
    }
    if let Some(x) = &ex.matrix {
        dataset::write_fmx(x, out)?;
        dataset::write_labels(&ex.labels, &labels_path(out))?;
        println!("{}x{} matrix written to {}", x.rows(), x.cols(), out.display());
    }
    if !ex.failures.is_empty() {
        bail!("{} of {} images failed", ex.failures.len(), m.records.len());
    }
    Ok(())
}

fn cmd_reduce(seed: u64, input: &Path, method: Method, dim: usize, model: &Path, out: &Path) -> Result<()> {
    if dim == 0 {
        return Err(usage("--dim must be at least 1"));
    }
    require_file(input)?;
    require_parent(model)?;
    require_parent(out)?;
    let x = dataset::read_fmx(input)?;
    let reducer_seed = stage_seed(seed, "reduce");
    let reducer = match method {
        Method::Pca => Reducer::Pca(dimred::pca_fit(&x, dim).map_err(dimred_err)?),
        Method::Grp | Method::Srp => {
            let kind = if matches!(method, Method::Grp) {
                ProjectionKind::Gaussian
            } else {
                ProjectionKind::Sparse
            };
            Reducer::Projection(dimred::rp_fit(kind, x.cols(), dim, reducer_seed).map_err(dimred_err)?)
        }
    };
    let z = reducer.transform(&x).map_err(dimred_err)?;
    write_text(model, &(serde_json::to_string(&reducer)? + "\n"))?;
    dataset::write_fmx(&z, out)?;
    let labels = labels_path(input);
    if labels.is_file() {
        fs::copy(&labels, labels_path(out)).with_context(|| format!("copying {}", labels.display()))?;
    }
    println!(
        "{}x{} -> {}x{} written to {}",
        x.rows(),
        x.cols(),
        z.rows(),
        z.cols(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(seed: u64, cmd: &Command) -> Result<()> {
    let Command::Train {
        input,
        labels,
        classifier,
        reducer,
        model,
        hidden,
        epochs,
        lr,
        batch,
        trees,
        voting,
        c,
        gamma,
        grid,
        folds,
        ratio,
        split_seed,
        stratified,
    } = cmd
    else {
        unreachable!()
    };
    if grid != "default" {
        return Err(usage(format!("unknown grid {grid:?}; only \"default\" is defined")));
    }
    require_parent(model)?;
    let (x, y) = load_matrix(input, labels.as_deref())?;
    let reducer: Option<Reducer> = match reducer {
        Some(p) => {
            require_file(p)?;
            Some(hwr_core::from_json(&read_text(p)?).with_context(|| format!("parsing {}", p.display()))?)
        }
        None => None,
    };
    let raw_dim = match &reducer {
        Some(r) if r.output_dim() != x.cols() => {
            return Err(usage(format!(
                "reducer output dimension {} does not match feature dimension {}",
                r.output_dim(),
                x.cols()
            )))
        }
        Some(r) => r.input_dim(),
        None => x.cols(),
    };
    let split = SplitInfo {
        n: x.rows(),
        ratio: *ratio,
        seed: split_seed.unwrap_or_else(|| stage_seed(seed, "split")),
        stratified: *stratified,
    };
    let parts = split.apply(&y).map_err(|e| usage(e.to_string()))?;
    let xt = x.select_rows(&parts.train);
    let yt: Vec<ClassId> = parts.train.iter().map(|&i| y[i]).collect();

    let trained = match classifier {
        ClassifierKind::Mlp => {
            if *hidden == 0 {
                return Err(usage("--hidden must be at least 1"));
            }
            let init = mlp::mlp_init(x.cols(), *hidden, NUM_CLASSES, stage_seed(seed, "mlp-init"));
            let cfg = TrainConfig {
                learning_rate: *lr,
                epochs: *epochs,
                batch_size: *batch,
                seed: stage_seed(seed, "mlp-train"),
                shuffle: true,
            };
            Classifier::Mlp {
                model: mlp::train(&init, &xt, &yt, &cfg)?,
            }
        }
        ClassifierKind::Svm => {
            let (params, grid) = match (c, gamma) {
                (Some(c), Some(g)) => (SvmParams::rbf(*c, *g), None),
                _ => {
                    let spec = GridSpec {
                        folds: *folds,
                        ..GridSpec::default()
                    };
                    let g = svm::grid_search(&xt, &yt, &spec, stage_seed(seed, "svm-grid"))?;
                    println!(
                        "grid: best C = {}, gamma = {}, cv accuracy = {:.4}",
                        g.best_c, g.best_gamma, g.best_accuracy
                    );
                    (SvmParams::rbf(g.best_c, g.best_gamma), Some(g))
                }
            };
            Classifier::Svm {
                model: svm::ovo_train(&xt, &yt, params)?,
                grid,
            }
        }
        ClassifierKind::Rf => {
            let mut model = forest::rf_train(&xt, &yt, *trees, stage_seed(seed, "forest"))?;
            model.voting = match voting {
                VotingArg::Soft => Voting::Soft,
                VotingArg::Hard => Voting::Hard,
            };
            Classifier::Rf { model }
        }
    };
    let bundle = ModelBundle {
        format: BUNDLE_FORMAT.into(),
        input_dim: trained.input_dim(),
        raw_dim,
        scalars: raw_dim == pipeline::raw_dim(true),
        classifier: trained,
        reducer,
        split,
        n_classes: NUM_CLASSES,
    };
    write_text(model, &(serde_json::to_string(&bundle)? + "\n"))?;
    println!(
        "trained {} on {} of {} samples ({} features), model written to {}",
        bundle.classifier.name(),
        parts.train.len(),
        x.rows(),
        x.cols(),
        model.display()
    );
    Ok(())
}

fn load_bundle(path: &Path) -> Result<ModelBundle> {
    require_file(path)?;
    let b: ModelBundle =
        hwr_core::from_json(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
    if b.format != BUNDLE_FORMAT {
        bail!("{}: unsupported model format {:?}", path.display(), b.format);
    }
    Ok(b)
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    model: &Path,
    input: &Path,
    labels: Option<&Path>,
    report: Option<&Path>,
    json: Option<&Path>,
    all: bool,
    macro_avg: bool,
) -> Result<()> {
    for p in [report, json].into_iter().flatten() {
        require_parent(p)?;
    }
    let bundle = load_bundle(model)?;
    let (x, y) = load_matrix(input, labels)?;
    let rows: Vec<usize> = if all {
        (0..x.rows()).collect()
    } else {
        if x.rows() != bundle.split.n {
            return Err(usage(format!(
                "{} has {} rows but the model's split covers {} rows",
                input.display(),
                x.rows(),
                bundle.split.n
            )));
        }
        bundle.split.apply(&y).map_err(|e| usage(e.to_string()))?.test
    };
    let x = bundle.prepare(x.select_rows(&rows)).map_err(pipeline_err)?;
    let truth: Vec<ClassId> = rows.iter().map(|&i| y[i]).collect();
    let pred = x
        .iter_rows()
        .map(|r| bundle.classifier.predict(r))
        .collect::<Result<Vec<_>, _>>()
        .map_err(pipeline_err)?;
    let cm = eval::confusion(&truth, &pred)?;
    let r = eval::report_with(&cm, if macro_avg { Average::Macro } else { Average::Weighted });
    let text = eval::render_report(&r);
    print!("{text}");
    if let Some(p) = report {
        write_text(p, &text)?;
    }
    if let Some(p) = json {
        write_text(p, &eval::report_json(&cm, &r))?;
    }
    Ok(())
}

fn cmd_predict(model: &Path, image: &Path, interpret: bool) -> Result<()> {
    let bundle = load_bundle(model)?;
    require_file(image)?;
    let bytes = fs::read(image).with_context(|| format!("reading {}", image.display()))?;
    let img = decode_pgm(&bytes).with_context(|| format!("decoding {}", image.display()))?;
    let id = bundle.predict_image(&img).map_err(pipeline_err)?;
    if interpret {
        println!("{id} {}", labels::label_to_unicode(id)?);
    } else {
        println!("{id}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::Synth { out, per_class } => cmd_synth(seed, out, *per_class),
        Command::Features { manifest, out, scalars } => cmd_features(manifest, out, *scalars),
        Command::Reduce {
            input,
            method,
            dim,
            model,
            out,
        } => cmd_reduce(seed, input, *method, *dim, model, out),
        cmd @ Command::Train { .. } => cmd_train(seed, cmd),
        Command::Eval {
            model,
            input,
            labels,
            report,
            json,
            all,
            macro_avg,
        } => cmd_eval(
            model,
            input,
            labels.as_deref(),
            report.as_deref(),
            json.as_deref(),
            *all,
            *macro_avg,
        ),
        Command::Predict {
            model,
            image,
            interpret,
        } => cmd_predict(model, image, *interpret),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
