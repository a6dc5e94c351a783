//! `cae`: audit, train, evaluate, encode and inspect convolutional
//! autoencoders described in `.net` files.
//!
//! Exit codes: 0 ok, 1 I/O or data error, 2 net or solver spec error,
//! 3 checkpoint/net mismatch, 4 numeric abort.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cae::checkpoint::{Checkpoint, CheckpointError};
use cae::data::{self, DataError, Dataset, Split};
use cae::init::seeded_rng;
use cae::inspect::{self, SaturationLimits};
use cae::netspec::{self, Activation, NetSpec, NetSpecError};
use cae::network::{Network, NetworkError};
use cae::solver::{self, ConfigError, SolverConfig, SolverError, TrainOptions, Watchdog};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cae", version, about = "Convolutional autoencoder toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print per-layer parameter counts, totals, CAE size and symmetry verdict.
    Audit {
        netspec: PathBuf,
        /// Number of scalar training elements; adds a data-ratio line.
        #[arg(long)]
        data_elements: Option<u64>,
    },
    /// Train a net with SGD and write checkpoints, a loss CSV and a manifest.
    Train(TrainArgs),
    /// Report per-image cross-entropy and Euclidean loss of a checkpoint.
    Eval {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 100)]
        batch_size: usize,
        /// Also write eval.csv and a manifest here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        overwrite: bool,
    },
    /// Write latent codes of a split as CSV (`label,c0,...`).
    Encode {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Output directory; receives latent.csv and a manifest.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        overwrite: bool,
    },
    /// Dump every layer's activations for one sample as PGM maps.
    Inspect {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Sample index within the split.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        overwrite: bool,
    },
}

#[derive(Args)]
struct TrainArgs {
    netspec: PathBuf,
    /// Flat `key: value` solver file (base_lr, lr_policy, gamma, stepsize,
    /// momentum, weight_decay, max_iter, batch_size, test_interval,
    /// snapshot_interval, seed). Defaults to the fixed-rate CAE config.
    #[arg(long)]
    solver: Option<PathBuf>,
    #[arg(long)]
    max_iter: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Directory holding the four MNIST IDX files (optionally gzipped).
    #[arg(long, default_value = "data/mnist")]
    data_dir: PathBuf,
    /// Use only the first N training images.
    #[arg(long)]
    max_samples: Option<usize>,
    /// Use only the first N test images for periodic evaluation.
    #[arg(long)]
    test_samples: Option<usize>,
    /// Skip periodic test evaluation.
    #[arg(long)]
    no_test: bool,
    /// Put a sigmoid on the latent layer.
    #[arg(long)]
    latent_sigmoid: bool,
    /// Iterations between activation saturation checks; 0 disables.
    #[arg(long, default_value_t = 100)]
    watchdog: u64,
    #[arg(long)]
    out: PathBuf,
    /// Replace existing checkpoints and logs in the output directory.
    #[arg(long)]
    overwrite: bool,
}

#[derive(Args)]
struct ModelArgs {
    netspec: PathBuf,
    checkpoint: PathBuf,
    /// Put a sigmoid on the latent layer (must match training).
    #[arg(long)]
    latent_sigmoid: bool,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    #[arg(long, default_value = "data/mnist")]
    data_dir: PathBuf,
    /// Explicit image file; overrides --data-dir.
    #[arg(long, requires = "labels")]
    images: Option<PathBuf>,
    /// Explicit label file; overrides --data-dir.
    #[arg(long, requires = "images")]
    labels: Option<PathBuf>,
    #[arg(long)]
    max_samples: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug)]
enum CliError {
    Spec(String),
    Pairing(String),
    Abort(String),
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Other(_) => 1,
            CliError::Spec(_) => 2,
            CliError::Pairing(_) => 3,
            CliError::Abort(_) => 4,
        }
    }
}

impl From<NetSpecError> for CliError {
    fn from(e: NetSpecError) -> Self {
        CliError::Spec(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Spec(e.to_string())
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::Spec(e) => e.into(),
            NetworkError::Config(m) => CliError::Spec(m),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io(e) => CliError::Other(e.to_string()),
            other => CliError::Pairing(other.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<inspect::ExportError> for CliError {
    fn from(e: inspect::ExportError) -> Self {
        match e {
            inspect::ExportError::Network(e) => e.into(),
            inspect::ExportError::Io(e) => e.into(),
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Config(e) => e.into(),
            SolverError::Network(e) => e.into(),
            SolverError::Data(e) => e.into(),
            SolverError::Io(e) => e.into(),
            SolverError::Abort(a) => CliError::Abort(a.report.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Audit { netspec, data_elements } => cmd_audit(&netspec, data_elements),
        Command::Train(args) => cmd_train(&args),
        Command::Eval {
            model,
            data,
            batch_size,
            out,
            overwrite,
        } => cmd_eval(&model, &data, batch_size, out.as_deref(), overwrite),
        Command::Encode {
            model,
            data,
            out,
            overwrite,
        } => cmd_encode(&model, &data, &out, overwrite),
        Command::Inspect {
            model,
            data,
            index,
            out,
            overwrite,
        } => cmd_inspect(&model, &data, index, &out, overwrite),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (CliError::Spec(m) | CliError::Pairing(m) | CliError::Abort(m) | CliError::Other(m)) = &e;
            eprintln!("error: {m}");
            ExitCode::from(e.code())
        }
    }
}

fn load_spec(path: &Path, latent_sigmoid: bool) -> Result<NetSpec> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    let mut spec = netspec::parse_netspec(&text)?.infer_shapes()?;
    if latent_sigmoid {
        let i = netspec::latent_index(&spec)?;
        spec.layers[i].activation = Activation::Sigmoid;
    }
    Ok(spec)
}

fn load_model(args: &ModelArgs) -> Result<Network> {
    let mut net = Network::new(load_spec(&args.netspec, args.latent_sigmoid)?)?;
    let bytes = fs::read(&args.checkpoint).map_err(|e| CliError::Other(format!("{}: {e}", args.checkpoint.display())))?;
    Checkpoint::from_bytes(&bytes)?.apply_to(&mut net)?;
    Ok(net)
}

/// Resolves the IDX pair of a split in `dir`, accepting a `.gz` suffix.
fn split_files(dir: &Path, split: Split) -> (PathBuf, PathBuf) {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    let pick = |stem: String| {
        let plain = dir.join(&stem);
        let gz = dir.join(format!("{stem}.gz"));
        if !plain.exists() && gz.exists() {
            gz
        } else {
            plain
        }
    };
    (pick(format!("{prefix}-images-idx3-ubyte")), pick(format!("{prefix}-labels-idx1-ubyte")))
}

fn load_split(dir: &Path, split: Split, max: Option<usize>) -> Result<(Dataset, PathBuf, PathBuf)> {
    let (images, labels) = split_files(dir, split);
    load_files(&images, &labels, split, max)
}

fn load_files(images: &Path, labels: &Path, split: Split, max: Option<usize>) -> Result<(Dataset, PathBuf, PathBuf)> {
    let mut data = data::load_idx(images, labels, split)?;
    if let Some(n) = max {
        data = data.truncated(n);
    }
    Ok((data, images.to_path_buf(), labels.to_path_buf()))
}

fn load_data(args: &DataArgs) -> Result<(Dataset, PathBuf, PathBuf)> {
    let split = args.split.into();
    match (&args.images, &args.labels) {
        (Some(i), Some(l)) => load_files(i, l, split, args.max_samples),
        _ => load_split(&args.data_dir, split, args.max_samples),
    }
}

/// Creates `dir` and refuses to replace any of `outputs` unless allowed.
fn prepare_out(dir: &Path, outputs: &[&str], overwrite: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    if overwrite {
        return Ok(());
    }
    let mut existing: Vec<String> = outputs
        .iter()
        .filter(|f| dir.join(f).exists())
        .map(|f| f.to_string())
        .collect();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if name.ends_with(".caef") || name.ends_with(".pgm") {
            existing.push(name);
        }
    }
    if existing.is_empty() {
        Ok(())
    } else {
        existing.sort();
        Err(CliError::Other(format!(
            "{} already holds {}; pass --overwrite to replace",
            dir.display(),
            existing.join(", ")
        )))
    }
}

fn write_manifest(dir: &Path, command: &str, lines: &[(&str, String)]) -> Result<()> {
    let mut text = format!("command: {command}\n");
    for (k, v) in lines {
        let _ = writeln!(text, "{k}: {v}");
    }
    fs::write(dir.join("manifest.txt"), text)?;
    Ok(())
}

fn cmd_audit(path: &Path, data_elements: Option<u64>) -> Result<()> {
    let spec = load_spec(path, false)?;
    let report = netspec::count_params(&spec)?;
    print!("{report}");
    if let Some(n) = data_elements {
        println!("data ratio: {}", netspec::data_ratio(n, &report)?);
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut cfg = match &args.solver {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| CliError::Other(format!("{}: {e}", p.display())))?
            .parse::<SolverConfig>()?,
        None => SolverConfig::cae(),
    };
    if let Some(v) = args.max_iter {
        cfg.max_iter = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    cfg.validate()?;

    let spec = load_spec(&args.netspec, args.latent_sigmoid)?;
    let mut net = Network::initialized(spec, &mut seeded_rng(cfg.seed))?;
    let (train, train_images, train_labels) = load_split(&args.data_dir, Split::Train, args.max_samples)?;
    let test = if args.no_test {
        None
    } else {
        Some(load_split(&args.data_dir, Split::Test, args.test_samples)?)
    };

    prepare_out(&args.out, &["loss.csv", "manifest.txt", "abort_report.txt"], args.overwrite)?;
    fs::write(args.out.join("solver.txt"), cfg.to_text())?;
    let mut manifest = vec![
        ("netspec", args.netspec.display().to_string()),
        ("net", net.name().to_string()),
        ("latent_sigmoid", args.latent_sigmoid.to_string()),
        ("train_images", train_images.display().to_string()),
        ("train_labels", train_labels.display().to_string()),
        ("train_samples", train.len().to_string()),
    ];
    if let Some((t, i, l)) = &test {
        manifest.push(("test_images", i.display().to_string()));
        manifest.push(("test_labels", l.display().to_string()));
        manifest.push(("test_samples", t.len().to_string()));
    }
    manifest.push(("watchdog_interval", args.watchdog.to_string()));
    let solver_text = cfg.to_text();
    for line in solver_text.lines() {
        if let Some((k, v)) = line.split_once(": ") {
            manifest.push((k, v.trim_matches('"').to_string()));
        }
    }
    write_manifest(&args.out, "train", &manifest)?;

    let opts = TrainOptions {
        test: test.as_ref().map(|(t, _, _)| t),
        snapshot_dir: Some(args.out.clone()),
        watchdog: (args.watchdog > 0).then(|| Watchdog {
            interval: args.watchdog,
            limits: SaturationLimits::default(),
        }),
    };
    match solver::train(&mut net, &train, &cfg, &opts) {
        Ok(state) => {
            write_history(&args.out, &state)?;
            let tail = state.records(Split::Train).last();
            println!(
                "trained {} iterations; last batch loss {}",
                state.iter,
                tail.map_or("n/a".to_string(), |r| inspect::sig9(r.total))
            );
            if let Some(r) = state.records(Split::Test).last() {
                println!(
                    "test at iteration {}: sce {} euclidean {}",
                    r.iter,
                    inspect::sig9(r.sce),
                    inspect::sig9(r.euclidean)
                );
            }
            for p in &state.snapshots {
                println!("checkpoint {}", p.display());
            }
            Ok(())
        }
        Err(SolverError::Abort(abort)) => {
            write_history(&args.out, &abort.state)?;
            let last_good = args.out.join("last_good.caef");
            let mut f = BufWriter::new(fs::File::create(&last_good)?);
            abort.last_good.write_to(&mut f)?;
            f.flush()?;
            let report = args.out.join("abort_report.txt");
            fs::write(&report, abort.report.to_string())?;
            eprintln!("saturation report: {}", report.display());
            eprintln!("last good checkpoint: {}", last_good.display());
            Err(CliError::Abort(format!(
                "numeric abort at iteration {} ({}) in layer `{}`",
                abort.report.iter, abort.report.cause, abort.report.layer
            )))
        }
        Err(e) => Err(e.into()),
    }
}

fn write_history(dir: &Path, state: &solver::TrainState) -> Result<()> {
    let mut f = BufWriter::new(fs::File::create(dir.join("loss.csv"))?);
    state.write_csv(&mut f)?;
    f.flush()?;
    Ok(())
}

fn model_manifest(model: &ModelArgs, images: &Path, labels: &Path, data: &Dataset) -> Vec<(&'static str, String)> {
    vec![
        ("netspec", model.netspec.display().to_string()),
        ("checkpoint", model.checkpoint.display().to_string()),
        ("latent_sigmoid", model.latent_sigmoid.to_string()),
        ("split", data.split.to_string()),
        ("images", images.display().to_string()),
        ("labels", labels.display().to_string()),
        ("samples", data.len().to_string()),
    ]
}

fn cmd_eval(model: &ModelArgs, args: &DataArgs, batch_size: usize, out: Option<&Path>, overwrite: bool) -> Result<()> {
    if let Some(dir) = out {
        prepare_out(dir, &["eval.csv", "manifest.txt"], overwrite)?;
    }
    let net = load_model(model)?;
    let (data, images, labels) = load_data(args)?;
    let pair = solver::evaluate(&net, &data, batch_size)?;
    println!("split: {}", data.split);
    println!("samples: {}", data.len());
    println!("sce: {}", inspect::sig9(pair.sce));
    println!("euclidean: {}", inspect::sig9(pair.euclidean));
    if let Some(dir) = out {
        fs::write(
            dir.join("eval.csv"),
            format!("split,samples,sce,euclidean\n{},{},{},{}\n", data.split, data.len(), inspect::sig9(pair.sce), inspect::sig9(pair.euclidean)),
        )?;
        let mut m = model_manifest(model, &images, &labels, &data);
        m.push(("batch_size", batch_size.to_string()));
        write_manifest(dir, "eval", &m)?;
    }
    Ok(())
}

fn cmd_encode(model: &ModelArgs, args: &DataArgs, out: &Path, overwrite: bool) -> Result<()> {
    let net = load_model(model)?;
    let (data, images, labels) = load_data(args)?;
    prepare_out(out, &["latent.csv", "manifest.txt"], overwrite)?;
    let path = out.join("latent.csv");
    let mut f = BufWriter::new(fs::File::create(&path)?);
    let rows = inspect::export_latent(&net, &data, &mut f)?;
    f.flush()?;
    write_manifest(out, "encode", &model_manifest(model, &images, &labels, &data))?;
    println!("wrote {rows} rows to {}", path.display());
    Ok(())
}

fn cmd_inspect(model: &ModelArgs, args: &DataArgs, index: usize, out: &Path, overwrite: bool) -> Result<()> {
    let net = load_model(model)?;
    let (data, images, labels) = load_data(args)?;
    if index >= data.len() {
        return Err(CliError::Other(format!("sample {index} out of range ({} samples)", data.len())));
    }
    prepare_out(out, &["traces.txt", "saturation.txt", "manifest.txt"], overwrite)?;
    let sample = data.slice(index, index + 1);
    let traces = inspect::trace_all(&net, &sample.images)?;
    inspect::render_grid(&traces, out)?;
    let mut listing = String::new();
    for t in &traces {
        let _ = writeln!(listing, "{}", t.summary_line());
    }
    fs::write(out.join("traces.txt"), &listing)?;
    print!("{listing}");
    let warnings = inspect::saturation_report(&traces, &SaturationLimits::default());
    let mut report = String::new();
    for w in &warnings {
        let _ = writeln!(report, "{w}");
    }
    if warnings.is_empty() {
        report.push_str("no saturation warnings\n");
    }
    fs::write(out.join("saturation.txt"), &report)?;
    eprint!("{report}");
    let mut m = model_manifest(model, &images, &labels, &data);
    m.push(("index", index.to_string()));
    m.push(("label", sample.labels[0].to_string()));
    write_manifest(out, "inspect", &m)?;
    Ok(())
}
