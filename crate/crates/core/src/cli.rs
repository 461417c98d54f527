//! Command-line surface: train, project, eval, sweep, plot, and replay.
//! Every command resolves its defaults, stamps a TOML manifest next to its
//! outputs, and produces byte-identical files for identical flags, seeds,
//! and inputs. Exit codes: 0 success, 2 usage/validation, 3 numerical abort.

use crate::artifact::{dataset_fingerprint, load_model, save_model, ModelArtifact};
use crate::cluster::LabelSource;
use crate::data::{apply_minmax, load_csv, load_idx, scale_minmax, subsample, Dataset};
use crate::error::{Error, Result};
use crate::manifest::RunManifest;
use crate::metrics;
use crate::network::{train_with_arch, Architecture, ClassifierAttachment, L2Mode, TrainConfig};
use crate::plot::{scatter_svg, PlotOptions, PALETTE};
use crate::sampling::{regular_polygon, DirichletGradientPath, SamplingScheme};
use crate::tensor::Tensor;
use clap::{Args, Parser, Subcommand};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

#[derive(Parser, Debug)]
#[command(
    name = "sharp",
    version,
    about = "Shape-regularized neural projection: train 2D embeddings, project, evaluate, sweep, plot"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a projection model and save it with a run manifest
    Train(TrainArgs),
    /// Project data through a trained model into a CSV of 2D points
    Project(ProjectArgs),
    /// Compute projection quality metrics for a projection CSV
    Eval(EvalArgs),
    /// Train and evaluate across a grid of regularization strengths
    Sweep(SweepArgs),
    /// Render a projection CSV as an SVG scatterplot
    Plot(PlotArgs),
    /// Re-run a command from its manifest
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Input data: numeric CSV with a header, or an IDX image file when
    /// --idx-labels is given
    #[arg(long)]
    pub data: PathBuf,
    /// Header name of the CSV label column
    #[arg(long)]
    pub label_column: Option<String>,
    /// IDX label file; switches --data to the IDX image format
    #[arg(long)]
    pub idx_labels: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        match &self.idx_labels {
            Some(labels) => load_idx(&self.data, labels),
            None => load_csv(&self.data, self.label_column.as_deref()),
        }
    }

    fn stamp(&self, manifest: &mut RunManifest) -> Result<()> {
        manifest.input("data", &self.data)?;
        manifest.arg("data", self.data.display());
        if let Some(c) = &self.label_column {
            manifest.arg("label-column", c);
        }
        if let Some(p) = &self.idx_labels {
            manifest.input("idx-labels", p)?;
            manifest.arg("idx-labels", p.display());
        }
        Ok(())
    }
}

#[derive(Args, Debug, Clone)]
pub struct TrainOpts {
    /// Label source: gt, kmeans[:K], or agglo[:K] (K defaults to the
    /// ground-truth class count)
    #[arg(long, default_value = "gt")]
    pub labels: String,
    /// Cluster shape: gaussian, gennorm:OMEGA, or polygon:V[:no-translate]
    #[arg(long, default_value = "gaussian")]
    pub shape: String,
    /// Shape-regularization strength
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    /// Classification loss weight
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Encoder hidden widths, comma-separated; the decoder mirrors them
    #[arg(long, default_value = "512,128,32")]
    pub widths: String,
    /// Train on a stratified subsample of this many rows
    #[arg(long)]
    pub subsample: Option<usize>,
    /// Replace the stochastic bottleneck with a plain dense layer
    #[arg(long, default_value_t = false)]
    pub deterministic: bool,
    #[arg(long, default_value_t = 1e-3, hide = true)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.5, hide = true)]
    pub l2: f64,
    /// Penalize bottleneck activations instead of bottleneck weights
    #[arg(long, default_value_t = false, hide = true)]
    pub l2_activity: bool,
    /// Attach the classifier head to the bottleneck instead of the last
    /// decoder hidden layer
    #[arg(long, default_value_t = false, hide = true)]
    pub classifier_bottleneck: bool,
    /// Score-function gradients for the polygon scheme's KL term
    #[arg(long, default_value_t = false, hide = true)]
    pub score_function: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub opts: TrainOpts,
    /// Where to write the model file
    #[arg(long, default_value = "model.sharp")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ProjectArgs {
    /// Trained model file
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Where to write the projection CSV (index,x,y[,label])
    #[arg(long, default_value = "projection.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Projection CSV produced by `sharp project`
    #[arg(long)]
    pub projection: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Neighborhood size for rank-based metrics
    #[arg(long, default_value_t = 7)]
    pub k: usize,
    /// Model file to cross-check the data fingerprint against
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Where to write the metrics CSV (metric,value)
    #[arg(long, default_value = "metrics.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub opts: TrainOpts,
    /// Regularization grid, comma-separated
    #[arg(long, default_value = "0,0.05,0.1,0.25,0.5,1.0")]
    pub betas: String,
    /// Neighborhood size for rank-based metrics
    #[arg(long, default_value_t = 7)]
    pub k: usize,
    /// Where to write the per-beta metrics table
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Projection CSV produced by `sharp project`
    #[arg(long)]
    pub projection: PathBuf,
    /// Draw each class's convex hull for shape inspection
    #[arg(long, default_value_t = false)]
    pub per_class_hull: bool,
    /// Where to write the SVG
    #[arg(long, default_value = "projection.svg")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    /// Manifest written by a previous run
    #[arg(long)]
    pub manifest: PathBuf,
}

/// Run a parsed command; the binary maps errors to exit codes.
pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Project(args) => cmd_project(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Plot(args) => cmd_plot(&args),
        Command::Replay(args) => cmd_replay(&args),
    }
}

// --- flag parsing -------------------------------------------------------

fn parse_widths(spec: &str) -> Result<Vec<usize>> {
    spec.split(',')
        .map(|w| {
            w.trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("bad width {w:?} in --widths {spec:?}")))
        })
        .collect()
}

fn parse_betas(spec: &str) -> Result<Vec<f64>> {
    let betas: Vec<f64> = spec
        .split(',')
        .map(|b| {
            b.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad value {b:?} in --betas {spec:?}")))
        })
        .collect::<Result<_>>()?;
    if betas.is_empty() {
        return Err(Error::invalid("--betas needs at least one value"));
    }
    Ok(betas)
}

fn parse_label_source(spec: &str, dataset: &Dataset) -> Result<LabelSource> {
    let (kind, count) = match spec.split_once(':') {
        Some((kind, count)) => {
            let k = count
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("bad cluster count in --labels {spec:?}")))?;
            (kind, Some(k))
        }
        None => (spec, None),
    };
    let default_k = || {
        dataset.class_count().ok_or_else(|| {
            Error::invalid(format!(
                "--labels {kind} needs an explicit cluster count ({kind}:K) because the dataset has no labels"
            ))
        })
    };
    match kind {
        "gt" => {
            if count.is_some() {
                return Err(Error::invalid("--labels gt takes no cluster count"));
            }
            Ok(LabelSource::GroundTruth)
        }
        "kmeans" => Ok(LabelSource::KMeans(match count {
            Some(k) => k,
            None => default_k()?,
        })),
        "agglo" => Ok(LabelSource::Agglomerative(match count {
            Some(k) => k,
            None => default_k()?,
        })),
        other => Err(Error::invalid(format!(
            "unknown label source {other:?}: expected gt, kmeans[:K], or agglo[:K]"
        ))),
    }
}

/// Parse a shape spec (`gaussian`, `gennorm:OMEGA`, `polygon:V[:no-translate]`)
/// into a sampling scheme. Shared by the CLI and the Python bindings.
pub fn parse_shape(spec: &str, score_function: bool) -> Result<SamplingScheme> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts[0] {
        "gaussian" => {
            if parts.len() > 1 {
                return Err(Error::invalid("--shape gaussian takes no parameter"));
            }
            Ok(SamplingScheme::Gaussian)
        }
        "gennorm" => {
            if parts.len() != 2 {
                return Err(Error::invalid("expected --shape gennorm:OMEGA"));
            }
            let omega = parts[1]
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad omega in --shape {spec:?}")))?;
            Ok(SamplingScheme::GeneralizedNormal { omega })
        }
        "polygon" => {
            let (v, translation) = match parts.len() {
                2 => (parts[1], true),
                3 if parts[2] == "no-translate" => (parts[1], false),
                _ => return Err(Error::invalid("expected --shape polygon:V[:no-translate]")),
            };
            let v = v
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("bad vertex count in --shape {spec:?}")))?;
            Ok(SamplingScheme::DirichletPolygon {
                vertices: regular_polygon(v)?,
                translation,
                gradient_path: if score_function {
                    DirichletGradientPath::ScoreFunction
                } else {
                    DirichletGradientPath::ImplicitReparam
                },
            })
        }
        other => Err(Error::invalid(format!(
            "unknown shape {other:?}: expected gaussian, gennorm:OMEGA, or polygon:V[:no-translate]"
        ))),
    }
}

// --- shared plumbing ----------------------------------------------------

struct PreparedRun {
    dataset: Dataset,
    labels: Vec<usize>,
    arch: Architecture,
    config: TrainConfig,
}

/// Load, scale, subsample, and label a training set per the shared flags.
fn prepare(data: &DataArgs, opts: &TrainOpts, beta: f64) -> Result<PreparedRun> {
    let mut dataset = scale_minmax(data.load()?);
    if let Some(target) = opts.subsample {
        dataset = subsample(&dataset, target, opts.seed)?;
    }
    let source = parse_label_source(&opts.labels, &dataset)?;
    let labels = source.resolve(&dataset.x, dataset.y.as_deref(), opts.seed)?;
    let class_count = labels.iter().max().map_or(0, |&l| l + 1).max(2);
    let scheme = parse_shape(&opts.shape, opts.score_function)?;
    let config = TrainConfig {
        rho: opts.rho,
        beta,
        batch_size: opts.batch_size,
        epochs: opts.epochs,
        seed: opts.seed,
        l2_bottleneck: opts.l2,
        l2_mode: if opts.l2_activity { L2Mode::Activity } else { L2Mode::Kernel },
        scheme,
        deterministic_bottleneck: opts.deterministic,
        classifier: if opts.classifier_bottleneck {
            ClassifierAttachment::Bottleneck
        } else {
            ClassifierAttachment::DecoderLast
        },
        learning_rate: opts.lr,
    };
    let arch = Architecture {
        input_dim: dataset.dim(),
        encoder_widths: parse_widths(&opts.widths)?,
        class_count,
    };
    Ok(PreparedRun { dataset, labels, arch, config })
}

fn stamp_train_opts(manifest: &mut RunManifest, opts: &TrainOpts) {
    manifest
        .arg("labels", &opts.labels)
        .arg("shape", &opts.shape)
        .arg("rho", opts.rho)
        .arg("epochs", opts.epochs)
        .arg("batch-size", opts.batch_size)
        .arg("seed", opts.seed)
        .arg("widths", &opts.widths)
        .arg("deterministic", opts.deterministic)
        .arg("lr", opts.lr)
        .arg("l2", opts.l2)
        .arg("l2-activity", opts.l2_activity)
        .arg("classifier-bottleneck", opts.classifier_bottleneck)
        .arg("score-function", opts.score_function);
    if let Some(s) = opts.subsample {
        manifest.arg("subsample", s);
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map_or_else(|| "out".into(), |n| n.to_os_string());
    name.push(".manifest.toml");
    out.with_file_name(name)
}

/// Projection CSV: index,x,y with an optional trailing label column.
fn read_projection(path: &Path) -> Result<(Tensor, Option<Vec<usize>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?
        .clone();
    let expect = ["index", "x", "y"];
    let got: Vec<&str> = headers.iter().take(3).collect();
    if got != expect {
        return Err(Error::format(format!(
            "{}: projection header must start with index,x,y (got {})",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let labeled = headers.len() >= 4 && &headers[3] == "label";
    let mut coords = Vec::new();
    let mut labels = Vec::new();
    for (ri, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(format!("{}: row {}: {e}", path.display(), ri + 1)))?;
        for col in [1, 2] {
            let cell = record.get(col).unwrap_or("");
            coords.push(cell.parse::<f64>().map_err(|_| {
                Error::format(format!("{}: row {}: bad coordinate {cell:?}", path.display(), ri + 1))
            })?);
        }
        if labeled {
            let cell = record.get(3).unwrap_or("");
            labels.push(cell.parse::<usize>().map_err(|_| {
                Error::format(format!("{}: row {}: bad label {cell:?}", path.display(), ri + 1))
            })?);
        }
    }
    let rows = coords.len() / 2;
    if rows == 0 {
        return Err(Error::invalid(format!("{}: projection has no rows", path.display())));
    }
    Ok((Tensor::matrix(rows, 2, coords)?, labeled.then_some(labels)))
}

fn projection_csv(p: &Tensor, labels: Option<&[usize]>) -> String {
    let mut out = String::new();
    out.push_str(if labels.is_some() { "index,x,y,label\n" } else { "index,x,y\n" });
    for i in 0..p.rows() {
        match labels {
            Some(y) => writeln!(out, "{i},{},{},{}", p.at2(i, 0), p.at2(i, 1), y[i]),
            None => writeln!(out, "{i},{},{}", p.at2(i, 0), p.at2(i, 1)),
        }
        .expect("write to string");
    }
    out
}

// --- commands -----------------------------------------------------------

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let run = prepare(&args.data, &args.opts, args.opts.beta)?;
    let (model, history) = train_with_arch(&run.dataset.x, &run.labels, &run.config, run.arch)?;
    let final_loss = history.last().map_or(f64::NAN, |b| b.total);
    let fingerprint = dataset_fingerprint(&run.dataset.x, Some(&run.labels));
    let artifact = ModelArtifact::new(
        model,
        run.config,
        run.dataset.feature_min.clone(),
        run.dataset.feature_max.clone(),
        fingerprint,
    );
    save_model(&artifact, &args.out)?;

    let mut manifest = RunManifest::new("train", args.opts.seed);
    args.data.stamp(&mut manifest)?;
    stamp_train_opts(&mut manifest, &args.opts);
    manifest.arg("beta", args.opts.beta).arg("out", args.out.display());
    manifest.output(&args.out);
    manifest.save(manifest_path(&args.out))?;
    eprintln!(
        "trained on {} rows for {} epochs; final loss {final_loss:.6}; model at {}",
        run.dataset.rows(),
        args.opts.epochs,
        args.out.display()
    );
    Ok(())
}

fn cmd_project(args: &ProjectArgs) -> Result<()> {
    let artifact = load_model(&args.model)?;
    let dataset = args.data.load()?;
    let x = match (&artifact.feature_min, &artifact.feature_max) {
        (Some(min), Some(max)) => apply_minmax(&dataset.x, min, max)?,
        _ => dataset.x.clone(),
    };
    if x.cols() != artifact.model.arch.input_dim {
        return Err(Error::invalid(format!(
            "model expects {}-dimensional data, {} has {} features",
            artifact.model.arch.input_dim,
            args.data.data.display(),
            x.cols()
        )));
    }
    let p = artifact.model.project(&x)?;
    write_text(&args.out, &projection_csv(&p, dataset.y.as_deref()))?;

    let mut manifest = RunManifest::new("project", artifact.train_config.seed);
    manifest.input("model", &args.model)?;
    manifest.arg("model", args.model.display());
    args.data.stamp(&mut manifest)?;
    manifest.arg("out", args.out.display());
    manifest.output(&args.out);
    manifest.save(manifest_path(&args.out))?;
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let (p, proj_labels) = read_projection(&args.projection)?;
    let dataset = scale_minmax(args.data.load()?);
    if dataset.rows() != p.rows() {
        return Err(Error::invalid(format!(
            "{} projects {} rows but {} has {}",
            args.projection.display(),
            p.rows(),
            args.data.data.display(),
            dataset.rows()
        )));
    }
    let labels = proj_labels.or_else(|| dataset.y.clone());

    if let Some(model_path) = &args.model {
        let artifact = load_model(model_path)?;
        if artifact.data_fingerprint != dataset_fingerprint(&dataset.x, labels.as_deref()) {
            eprintln!(
                "warning: {} was trained on different data than {}; metrics describe this data, not the training run",
                model_path.display(),
                args.data.data.display()
            );
        }
    }

    let mut out = String::from("metric,value\n");
    writeln!(out, "trustworthiness,{}", metrics::trustworthiness(&dataset.x, &p, args.k)?)
        .expect("write to string");
    writeln!(out, "continuity,{}", metrics::continuity(&dataset.x, &p, args.k)?).expect("write to string");
    writeln!(out, "shepard_correlation,{}", metrics::shepard_correlation(&dataset.x, &p)?)
        .expect("write to string");
    writeln!(out, "normalized_stress,{}", metrics::normalized_stress(&dataset.x, &p)?)
        .expect("write to string");
    match &labels {
        Some(y) => {
            writeln!(out, "neighborhood_hit,{}", metrics::neighborhood_hit(&p, y, args.k)?)
                .expect("write to string");
            writeln!(out, "distance_consistency,{}", metrics::distance_consistency(&p, y)?)
                .expect("write to string");
        }
        None => eprintln!("warning: no labels; neighborhood_hit and distance_consistency omitted"),
    }
    writeln!(out, "k,{}", args.k).expect("write to string");
    write_text(&args.out, &out)?;

    let mut manifest = RunManifest::new("eval", 0);
    manifest.input("projection", &args.projection)?;
    manifest.arg("projection", args.projection.display());
    args.data.stamp(&mut manifest)?;
    manifest.arg("k", args.k).arg("out", args.out.display());
    if let Some(m) = &args.model {
        manifest.input("model", m)?;
        manifest.arg("model", m.display());
    }
    manifest.output(&args.out);
    manifest.save(manifest_path(&args.out))?;
    Ok(())
}

/// Worker cap: SHARP_THREADS when set, available parallelism otherwise.
fn thread_cap() -> usize {
    std::env::var("SHARP_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from))
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let betas = parse_betas(&args.betas)?;
    let base = prepare(&args.data, &args.opts, 0.0)?;
    let workers = thread_cap().min(betas.len());

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<metrics::MetricsReport>>>> =
        Mutex::new((0..betas.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let job = next.fetch_add(1, Ordering::Relaxed);
                if job >= betas.len() {
                    break;
                }
                let config = TrainConfig { beta: betas[job], ..base.config.clone() };
                let report = train_with_arch(&base.dataset.x, &base.labels, &config, base.arch.clone())
                    .and_then(|(model, _)| model.project(&base.dataset.x))
                    .and_then(|p| metrics::evaluate_all(&base.dataset.x, &p, &base.labels, args.k));
                slots.lock().expect("no poisoned workers")[job] = Some(report);
            });
        }
    });

    let mut out = String::from(
        "beta,trustworthiness,continuity,shepard_correlation,normalized_stress,neighborhood_hit,distance_consistency\n",
    );
    let results = slots.into_inner().expect("no poisoned workers");
    for (beta, slot) in betas.iter().zip(results) {
        let r = slot.expect("every job ran")?;
        writeln!(
            out,
            "{beta},{},{},{},{},{},{}",
            r.trustworthiness,
            r.continuity,
            r.shepard_correlation,
            r.normalized_stress,
            r.neighborhood_hit,
            r.distance_consistency
        )
        .expect("write to string");
    }
    write_text(&args.out, &out)?;

    let mut manifest = RunManifest::new("sweep", args.opts.seed);
    args.data.stamp(&mut manifest)?;
    stamp_train_opts(&mut manifest, &args.opts);
    manifest
        .arg("betas", &args.betas)
        .arg("k", args.k)
        .arg("out", args.out.display());
    manifest.output(&args.out);
    manifest.save(manifest_path(&args.out))?;
    Ok(())
}

fn cmd_plot(args: &PlotArgs) -> Result<()> {
    let (p, labels) = read_projection(&args.projection)?;
    if let Some(y) = &labels {
        let classes = y.iter().max().map_or(0, |&m| m + 1);
        if classes > PALETTE.len() {
            eprintln!(
                "warning: {classes} classes but only {} palette colors; colors will repeat",
                PALETTE.len()
            );
        }
    }
    let svg = scatter_svg(&p, labels.as_deref(), PlotOptions { per_class_hull: args.per_class_hull })?;
    write_text(&args.out, &svg)?;

    let mut manifest = RunManifest::new("plot", 0);
    manifest.input("projection", &args.projection)?;
    manifest
        .arg("projection", args.projection.display())
        .arg("per-class-hull", args.per_class_hull)
        .arg("out", args.out.display());
    manifest.output(&args.out);
    manifest.save(manifest_path(&args.out))?;
    Ok(())
}

fn cmd_replay(args: &ReplayArgs) -> Result<()> {
    let manifest = RunManifest::load(&args.manifest)?;
    manifest.verify_inputs()?;
    let mut argv: Vec<String> = vec!["sharp".into(), manifest.command.clone()];
    for (key, value) in &manifest.args {
        match value.as_str() {
            "true" => argv.push(format!("--{key}")),
            "false" => {}
            v => {
                argv.push(format!("--{key}"));
                argv.push(v.into());
            }
        }
    }
    let cli = Cli::try_parse_from(&argv)
        .map_err(|e| Error::invalid(format!("manifest does not parse back into a command: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(Error::invalid("refusing to replay a replay"));
    }
    dispatch(cli)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob_dataset() -> Dataset {
        let (x, y) = crate::synth::gaussian_blobs(10, 2, 3, 8.0, 3).unwrap();
        let labels = y;
        Dataset::from_parts("blobs", x, Some(labels)).unwrap()
    }

    #[test]
    fn label_source_specs_parse_with_defaults_from_the_dataset() {
        let ds = blob_dataset();
        assert_eq!(parse_label_source("gt", &ds).unwrap(), LabelSource::GroundTruth);
        assert_eq!(parse_label_source("kmeans", &ds).unwrap(), LabelSource::KMeans(2));
        assert_eq!(parse_label_source("kmeans:5", &ds).unwrap(), LabelSource::KMeans(5));
        assert_eq!(parse_label_source("agglo:4", &ds).unwrap(), LabelSource::Agglomerative(4));
        assert!(parse_label_source("gt:3", &ds).is_err());
        assert!(parse_label_source("dbscan", &ds).is_err());
        let unlabeled = Dataset::from_parts("u", ds.x.clone(), None).unwrap();
        assert!(parse_label_source("kmeans", &unlabeled).is_err());
    }

    #[test]
    fn shape_specs_parse_into_schemes() {
        assert_eq!(parse_shape("gaussian", false).unwrap(), SamplingScheme::Gaussian);
        assert_eq!(
            parse_shape("gennorm:10", false).unwrap(),
            SamplingScheme::GeneralizedNormal { omega: 10.0 }
        );
        match parse_shape("polygon:3", false).unwrap() {
            SamplingScheme::DirichletPolygon { vertices, translation, gradient_path } => {
                assert_eq!(vertices.shape(), &[2, 3]);
                assert!(translation);
                assert_eq!(gradient_path, DirichletGradientPath::ImplicitReparam);
            }
            other => panic!("wrong scheme {other:?}"),
        }
        match parse_shape("polygon:5:no-translate", true).unwrap() {
            SamplingScheme::DirichletPolygon { vertices, translation, gradient_path } => {
                assert_eq!(vertices.shape(), &[2, 5]);
                assert!(!translation);
                assert_eq!(gradient_path, DirichletGradientPath::ScoreFunction);
            }
            other => panic!("wrong scheme {other:?}"),
        }
        assert!(parse_shape("gennorm", false).is_err());
        assert!(parse_shape("polygon:2", false).is_err());
        assert!(parse_shape("square", false).is_err());
    }

    #[test]
    fn projection_csv_round_trips() {
        let p = Tensor::matrix(3, 2, vec![0.25, -1.5, 2.0, 0.125, -3.75, 4.5]).unwrap();
        let labels = [2usize, 0, 1];
        let file = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(file.path(), projection_csv(&p, Some(&labels))).unwrap();
        let (back, back_labels) = read_projection(file.path()).unwrap();
        assert_eq!(back.data(), p.data());
        assert_eq!(back_labels.as_deref(), Some(&labels[..]));

        std::fs::write(file.path(), projection_csv(&p, None)).unwrap();
        let (_, no_labels) = read_projection(file.path()).unwrap();
        assert!(no_labels.is_none());
    }

    #[test]
    fn widths_and_betas_parse_or_reject() {
        assert_eq!(parse_widths("512,128,32").unwrap(), vec![512, 128, 32]);
        assert!(parse_widths("512,abc").is_err());
        assert_eq!(parse_betas("0,0.5").unwrap(), vec![0.0, 0.5]);
        assert!(parse_betas("0,x").is_err());
    }
}
