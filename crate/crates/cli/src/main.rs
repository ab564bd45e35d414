mod config;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use cellflow::analysis::{cluster_bins, CellOutcome, GridCell, GRID_BIN_SIZES, GRID_K, GRID_MAX_ITER};
use cellflow::dataset::WindowConfig;
use cellflow::experiment::{
    label_synthetic, prepare_split, run, run_forecast, score_classifier, session_windows, split_sessions,
    write_clusters, write_evaluation_files, write_forecast, write_scores, ClusterGridReport,
    ClassifyConfig, ExperimentConfig, ExperimentReport, ForecastPlan, Replication, SynthKind, SynthSpec,
};
use cellflow::features::{bin_packets, interarrival, read_bins, write_bins, zero_fraction, zero_pad, Feature, Padding};
use cellflow::ingest::{
    infer_endpoints, label_direction, parse_capture, parse_capture_lenient, write_capture, CaptureSchema, EndpointMap,
    LabeledPacket, PacketRecord,
};
use cellflow::lstm::{load_model, save_model, train, HeadKind, LstmModel, TrainConfig, TrainOutcome};
use cellflow::synth::{self, read_labels, write_labels};
use cellflow::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use crate::config::ConfigFile;

const OUT_DIR_ENV: &str = "CELLFLOW_OUT_DIR";

#[derive(Parser)]
#[command(name = "cellflow", version, about = "Cellular traffic featurization, LSTM forecasting and clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic capture.
    Synth(SynthArgs),
    /// Bin a capture into per-interval features.
    Featurize(FeaturizeArgs),
    /// Histogram of gaps between consecutive packets.
    Interarrival(InterarrivalArgs),
    /// Train an LSTM on a bin file.
    Train(TrainArgs),
    /// Score a saved model on a bin file.
    Evaluate(EvaluateArgs),
    /// k-means over bin series at one or more bin sizes.
    Cluster(ClusterArgs),
    /// Run a named replication, or an explicit plan, end to end.
    Experiment(ExperimentArgs),
}

/// Where packets come from and who the tower is.
#[derive(Args)]
struct CaptureArgs {
    /// Capture CSV; `-` reads standard input.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[command(flatten)]
    endpoints: EndpointArgs,
}

#[derive(Args, Default)]
struct EndpointArgs {
    /// Tower address; inferred from the capture when omitted.
    #[arg(long)]
    tower: Option<String>,
    /// User addresses (repeat or comma-separate); defaults to every peer of the tower.
    #[arg(long = "user", value_delimiter = ',')]
    users: Vec<String>,
    /// Drop malformed capture rows instead of failing.
    #[arg(long)]
    drop_bad_rows: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// surfing, video, voice, streaming, mixed or bursty.
    #[arg(long)]
    profile: String,
    /// Trace length in seconds.
    #[arg(long)]
    duration: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Session length for mixed and bursty traces, in seconds.
    #[arg(long, default_value_t = SynthSpec::DEFAULT_SESSION_LEN)]
    session_len: f64,
    /// Capture CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Session label CSV.
    #[arg(long)]
    labels_out: Option<PathBuf>,
}

#[derive(Args)]
struct FeaturizeArgs {
    #[command(flatten)]
    capture: CaptureArgs,
    /// Bin width in seconds.
    #[arg(long, default_value_t = 1.0)]
    bin_size: f64,
    #[arg(long, value_enum, default_value_t = PaddingMode::None)]
    padding: PaddingMode,
    /// Longest zero run inserted by pro padding.
    #[arg(long, default_value_t = Padding::DEFAULT_MAX_RUN)]
    max_run: u64,
    /// Bin CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PaddingMode {
    None,
    Zero,
    Pro,
}

impl PaddingMode {
    fn with_max_run(self, max_run: u64) -> Padding {
        match self {
            PaddingMode::None => Padding::None,
            PaddingMode::Zero => Padding::Zero,
            PaddingMode::Pro => Padding::Pro { max_run },
        }
    }
}

#[derive(Args)]
struct InterarrivalArgs {
    #[command(flatten)]
    capture: CaptureArgs,
    /// Histogram bucket width in seconds.
    #[arg(long, default_value_t = 0.01)]
    bucket_width: f64,
    /// Histogram CSV; standard output when omitted, with the summary on stderr.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Optimizer settings; unset fields fall back to the config file, then to defaults.
#[derive(Args, Default)]
struct TrainFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// LSTM hidden units.
    #[arg(long)]
    hidden: Option<usize>,
    /// Global gradient-norm cap; 0 disables clipping.
    #[arg(long)]
    clip_norm: Option<f64>,
}

impl TrainFlags {
    fn resolve(&self, cfg: &ConfigFile, base: TrainConfig) -> Result<TrainConfig> {
        let clip = match self.clip_norm.or(cfg.get("clip-norm")?) {
            None => base.clip_norm,
            Some(0.0) => None,
            Some(c) => Some(c),
        };
        let out = TrainConfig {
            epochs: self.epochs.or(cfg.get("epochs")?).unwrap_or(base.epochs),
            learning_rate: self.learning_rate.or(cfg.get("learning-rate")?).unwrap_or(base.learning_rate),
            batch_size: self.batch_size.or(cfg.get("batch-size")?).unwrap_or(base.batch_size),
            hidden_size: self.hidden.or(cfg.get("hidden")?).unwrap_or(base.hidden_size),
            clip_norm: clip,
            seed: base.seed,
        };
        out.validate()?;
        Ok(out)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HeadArg {
    Regression,
    Softmax,
}

#[derive(Args)]
struct TrainArgs {
    /// Bin CSV from `featurize`.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Forecasting replication whose bin size and history to use.
    #[arg(long, conflicts_with = "history")]
    preset: Option<String>,
    /// Bins of history per window.
    #[arg(long)]
    history: Option<usize>,
    /// Bin width in seconds; inferred from the bin file when omitted.
    #[arg(long)]
    bin_size: Option<f64>,
    /// Comma-separated input features.
    #[arg(long)]
    features: Option<String>,
    /// Regression target feature.
    #[arg(long)]
    target: Option<String>,
    /// Keep only windows whose target is non-zero.
    #[arg(long)]
    nonzero_filter: bool,
    #[arg(long, value_enum, default_value_t = HeadArg::Regression)]
    head: HeadArg,
    /// Session label CSV; required for the softmax head.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = ExperimentConfig::DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    model_out: PathBuf,
    /// Per-epoch loss CSV.
    #[arg(long)]
    loss_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Bin CSV from `featurize`.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Comma-separated input features; defaults to those the model was trained on.
    #[arg(long)]
    features: Option<String>,
    #[arg(long, default_value_t = ExperimentConfig::DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
    #[arg(long)]
    nonzero_filter: bool,
    /// Session label CSV; required for softmax models.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Output directory; defaults to $CELLFLOW_OUT_DIR.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    capture: CaptureArgs,
    /// Comma-separated bin widths in seconds.
    #[arg(long, value_delimiter = ',', default_values_t = GRID_BIN_SIZES)]
    bin_sizes: Vec<f64>,
    /// Cluster on uplink/downlink counts plus their ratio.
    #[arg(long)]
    with_ratio: bool,
    #[arg(long, default_value_t = GRID_K)]
    k: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = GRID_MAX_ITER)]
    max_iter: usize,
    /// Output directory; defaults to $CELLFLOW_OUT_DIR.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// 1x60, 3x20, 60x1, propad-1x10, nonzero-1x10 or cluster-grid; omit to
    /// run the plan given by --bin-size, --history and --padding.
    name: Option<String>,
    /// `key = value` settings file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Capture CSV; the bundled synthetic trace is used when neither this nor --synth is set.
    #[arg(long = "in", value_name = "PATH", conflicts_with = "synth")]
    input: Option<PathBuf>,
    /// Synthetic profile to generate instead of reading a capture.
    #[arg(long)]
    synth: Option<String>,
    /// Synthetic trace length in seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    session_len: Option<f64>,
    #[command(flatten)]
    endpoints: EndpointArgs,
    #[arg(long)]
    bin_size: Option<f64>,
    #[arg(long)]
    history: Option<usize>,
    #[arg(long, value_enum)]
    padding: Option<PaddingMode>,
    #[arg(long)]
    max_run: Option<u64>,
    #[arg(long)]
    nonzero_filter: bool,
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[command(flatten)]
    train: TrainFlags,
    /// Clusters for cluster-grid.
    #[arg(long)]
    k: Option<usize>,
    /// Output directory; defaults to $CELLFLOW_OUT_DIR.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(a),
        Command::Featurize(a) => cmd_featurize(a),
        Command::Interarrival(a) => cmd_interarrival(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Experiment(a) => cmd_experiment(a),
    }
}

fn require_seed(seed: Option<u64>) -> Result<u64> {
    seed.ok_or_else(|| anyhow!("a seed is required (--seed); runs are never seeded from the clock"))
}

fn open_input(path: &Path) -> Result<Box<dyn Read>> {
    if path == Path::new("-") {
        return Ok(Box::new(io::stdin().lock()));
    }
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Box::new(BufReader::new(file)))
}

fn create_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        None => Ok(Box::new(io::stdout().lock())),
        Some(p) if p == Path::new("-") => Ok(Box::new(io::stdout().lock())),
        Some(p) => {
            let file = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            Ok(Box::new(BufWriter::new(file)))
        }
    }
}

fn out_dir(flag: Option<PathBuf>, config: Option<PathBuf>) -> Result<PathBuf> {
    flag.or(config)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .ok_or_else(|| anyhow!("no output directory: pass --out or set {OUT_DIR_ENV}"))
}

fn parse_features(list: Option<&str>, target: Option<&str>, window: &mut WindowConfig) -> Result<()> {
    if let Some(list) = list {
        window.features = Feature::parse_list(list)?;
    }
    if let Some(t) = target {
        window.target = t.parse()?;
    }
    Ok(())
}

/// The synthetic generator writes a single user/tower flow, which tower
/// inference cannot disambiguate; such captures get the generator's own map.
fn resolve_endpoints(records: &[PacketRecord], args: &EndpointArgs) -> Result<EndpointMap> {
    if let Some(tower) = &args.tower {
        let users: Vec<String> = if args.users.is_empty() {
            let mut peers: Vec<String> = records
                .iter()
                .filter_map(|r| {
                    if r.src == *tower {
                        Some(r.dst.clone())
                    } else if r.dst == *tower {
                        Some(r.src.clone())
                    } else {
                        None
                    }
                })
                .collect();
            peers.sort();
            peers.dedup();
            peers
        } else {
            args.users.clone()
        };
        return Ok(EndpointMap::new(tower.clone(), users)?);
    }
    if !args.users.is_empty() {
        bail!("--user needs --tower");
    }
    match infer_endpoints(records) {
        Err(Error::AmbiguousEndpoints(_)) if is_synthetic_flow(records) => {
            info!("single synthetic flow; tower is {}", synth::TOWER_ADDR);
            Ok(synth::endpoints())
        }
        other => Ok(other?),
    }
}

fn is_synthetic_flow(records: &[PacketRecord]) -> bool {
    let pair = |a: &str, b: &str| a == synth::USER_ADDR && b == synth::TOWER_ADDR;
    records.iter().all(|r| pair(&r.src, &r.dst) || pair(&r.dst, &r.src))
}

fn load_packets(input: &Path, endpoints: &EndpointArgs) -> Result<Vec<LabeledPacket>> {
    let schema = CaptureSchema::default();
    let source = open_input(input)?;
    let records = if endpoints.drop_bad_rows {
        let capture = parse_capture_lenient(source, &schema)?;
        for bad in &capture.dropped {
            warn!("dropped line {}: {}", bad.line, bad.message);
        }
        capture.records
    } else {
        parse_capture(source, &schema)?
    };
    let map = resolve_endpoints(&records, endpoints)?;
    let labeling = label_direction(&records, &map);
    if labeling.skipped > 0 {
        warn!("skipped {} packets not involving a user", labeling.skipped);
    }
    if labeling.packets.is_empty() {
        bail!("no packets between the tower and a user in {}", input.display());
    }
    Ok(labeling.packets)
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let seed = require_seed(a.seed)?;
    let spec = SynthSpec {
        kind: a.profile.parse()?,
        duration: a.duration,
        session_len: a.session_len,
    };
    let trace = spec.generate(seed)?;
    let mut out = create_output(a.out.as_deref())?;
    write_capture(&mut out, &trace.packets, &CaptureSchema::default())?;
    out.flush()?;
    if let Some(path) = &a.labels_out {
        write_labels(create_output(Some(path))?, &trace.sessions)?;
    }
    info!("{} packets in {} sessions", trace.packets.len(), trace.sessions.len());
    Ok(())
}

fn cmd_featurize(a: FeaturizeArgs) -> Result<()> {
    let packets = load_packets(&a.capture.input, &a.capture.endpoints)?;
    let bins = a
        .padding
        .with_max_run(a.max_run)
        .apply(&bin_packets(&packets, a.bin_size)?, a.bin_size)?;
    info!("{} bins, zero fraction {}", bins.len(), zero_fraction(&bins));
    let mut out = create_output(a.out.as_deref())?;
    write_bins(&mut out, &bins)?;
    out.flush()?;
    Ok(())
}

fn cmd_interarrival(a: InterarrivalArgs) -> Result<()> {
    let packets = load_packets(&a.capture.input, &a.capture.endpoints)?;
    let stats = interarrival(&packets, a.bucket_width)?;
    let summary = format!(
        "gaps={}\nmean={}\nvariance={}\nmin={}\nmax={}\n",
        stats.deltas.len(),
        stats.mean,
        stats.variance,
        stats.min,
        stats.max
    );
    let mut out = create_output(a.out.as_deref())?;
    writeln!(out, "bucket_upper,count")?;
    for (upper, count) in &stats.histogram {
        writeln!(out, "{upper},{count}")?;
    }
    out.flush()?;
    if a.out.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    Ok(())
}

fn read_bin_file(path: &Path) -> Result<Vec<cellflow::features::BinnedSample>> {
    read_bins(open_input(path)?).with_context(|| format!("reading bins from {}", path.display()))
}

/// Bin width implied by the first two bins of a file.
fn infer_bin_size(bins: &[cellflow::features::BinnedSample]) -> Result<f64> {
    match bins {
        [a, b, ..] if b.bin_index > a.bin_index => Ok((b.bin_start - a.bin_start) / (b.bin_index - a.bin_index) as f64),
        _ => bail!("cannot infer the bin size from fewer than two bins; pass --bin-size"),
    }
}

fn forecast_plan(name: &str, max_run: u64) -> Result<ForecastPlan> {
    let rep: Replication = name.parse()?;
    rep.plan(max_run)
        .ok_or_else(|| anyhow!("`{rep}` is a clustering replication and trains no model"))
}

fn write_loss(path: &Path, outcome: &TrainOutcome) -> Result<()> {
    let mut out = create_output(Some(path))?;
    writeln!(out, "epoch,loss")?;
    for (i, l) in outcome.loss_history.iter().enumerate() {
        writeln!(out, "{},{l}", i + 1)?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let seed = require_seed(a.seed)?;
    let bins = read_bin_file(&a.input)?;
    let data_bin_size = match a.bin_size {
        Some(b) => b,
        None => infer_bin_size(&bins)?,
    };

    let (mut window, mut nonzero) = match (&a.preset, a.history) {
        (Some(name), _) => {
            let plan = forecast_plan(name, Padding::DEFAULT_MAX_RUN)?;
            if plan.window.bin_size != data_bin_size {
                bail!(
                    "preset {name} uses {} s bins but the bin file has {data_bin_size} s bins",
                    plan.window.bin_size
                );
            }
            (plan.window, plan.nonzero_only)
        }
        (None, Some(h)) => (WindowConfig::new(data_bin_size, h), false),
        (None, None) => bail!("pass --preset or --history"),
    };
    nonzero |= a.nonzero_filter;
    parse_features(a.features.as_deref(), a.target.as_deref(), &mut window)?;
    let base = match a.head {
        HeadArg::Regression => ExperimentConfig::schedule(nonzero, seed),
        HeadArg::Softmax => ClassifyConfig::with_seed(seed).train,
    };
    let cfg = a.train.resolve(&ConfigFile::default(), base)?;

    let outcome = match a.head {
        HeadArg::Regression => {
            let (train_ds, test_ds, filter) = prepare_split(&bins, &window, nonzero, a.train_fraction)?;
            if let Some(f) = filter {
                println!("windows_kept={}\nwindows_removed={}", f.kept, f.removed);
            }
            println!("train_windows={}\ntest_windows={}", train_ds.len(), test_ds.len());
            train(&train_ds, &cfg, HeadKind::Regression)?
        }
        HeadArg::Softmax => {
            if nonzero {
                bail!("the non-zero filter applies to regression targets only");
            }
            let labels = a.labels.as_deref().ok_or_else(|| anyhow!("--head softmax needs --labels"))?;
            let sessions = read_labels(open_input(labels)?)?;
            let per_session = session_windows(&bins, &sessions, &window)?;
            let (train_ds, test_ds, n) = split_sessions(&per_session, &window, a.train_fraction)?;
            println!("train_sessions={n}\ntrain_windows={}\ntest_windows={}", train_ds.len(), test_ds.len());
            train(&train_ds, &cfg, HeadKind::Softmax4)?
        }
    };
    println!("epochs={}", outcome.loss_history.len());
    println!("final_loss={}", outcome.loss_history.last().copied().unwrap_or(f64::NAN));
    save_model(&a.model_out, &outcome.model)?;
    if let Some(path) = &a.loss_out {
        write_loss(path, &outcome)?;
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let model: LstmModel =
        load_model(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let bins = read_bin_file(&a.input)?;
    let dir = out_dir(a.out, None)?;
    let mut window = model.window.clone();
    parse_features(a.features.as_deref(), None, &mut window)?;
    let expected = model.network.input_size();
    if window.features.len() != expected {
        return Err(Error::FeatureDimension {
            model: expected,
            data: window.features.len(),
        }
        .into());
    }

    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut summary = Vec::new();
    writeln!(summary, "model={}", a.model.display())?;
    writeln!(summary, "head={}", model.kind().name())?;
    match model.kind() {
        HeadKind::Regression => {
            let (train_ds, test_ds, _) = prepare_split(&bins, &window, a.nonzero_filter, a.train_fraction)?;
            let e = cellflow::experiment::evaluate(&model, &train_ds, &test_ds)?;
            write_scores(&mut summary, &e)?;
            write_evaluation_files(&dir, &e)?;
        }
        HeadKind::Softmax4 => {
            let labels = a.labels.as_deref().ok_or_else(|| anyhow!("softmax models need --labels"))?;
            let sessions = read_labels(open_input(labels)?)?;
            let per_session = session_windows(&bins, &sessions, &window)?;
            let (_, test_ds, _) = split_sessions(&per_session, &window, a.train_fraction)?;
            let (accuracy, confusion) = score_classifier(&model, &test_ds)?;
            writeln!(summary, "test_windows={}", test_ds.len())?;
            writeln!(summary, "accuracy={accuracy}")?;
            for (actual, row) in confusion.iter().enumerate() {
                let app = synth::App::from_class(actual).map_or("?", |a| a.name());
                let cells: Vec<String> = row.iter().map(u64::to_string).collect();
                writeln!(summary, "confusion_{app}={}", cells.join(","))?;
            }
        }
    }
    std::fs::write(dir.join("summary.txt"), &summary)?;
    io::stdout().write_all(&summary)?;
    Ok(())
}

fn cmd_cluster(a: ClusterArgs) -> Result<()> {
    let seed = require_seed(a.seed)?;
    let dir = out_dir(a.out, None)?;
    let packets = load_packets(&a.capture.input, &a.capture.endpoints)?;
    let mut features = vec![Feature::UplinkCount, Feature::DownlinkCount];
    if a.with_ratio {
        features.push(Feature::UdRatio);
    }
    let mut series = Vec::with_capacity(a.bin_sizes.len());
    let mut cells = Vec::with_capacity(a.bin_sizes.len());
    for (stream, &size) in a.bin_sizes.iter().enumerate() {
        let bins = zero_pad(&bin_packets(&packets, size)?, size)?;
        let real = bins.iter().filter(|b| !b.is_padding).count();
        let outcome = if real < a.k {
            CellOutcome::Skipped {
                reason: format!("{real} non-padding bins, need at least {}", a.k),
            }
        } else {
            CellOutcome::Clustered(cluster_bins(&bins, &features, a.k, seed, stream as u64, a.max_iter)?)
        };
        cells.push(GridCell {
            bin_size: size,
            features: features.clone(),
            outcome,
        });
        series.push((size, bins));
    }
    let grid = ClusterGridReport { series, cells };
    let written = write_clusters(&dir, "cluster", seed, &grid)?;
    print_summary(&dir, written.len())
}

fn print_summary(dir: &Path, files: usize) -> Result<()> {
    let summary = std::fs::read_to_string(dir.join("summary.txt"))?;
    print!("{summary}");
    info!("wrote {files} files to {}", dir.display());
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let seed = require_seed(a.seed.or(cfg.get("seed")?))?;
    let dir = out_dir(a.out.clone(), cfg.get("out")?)?;

    let name = a.name.clone().or(cfg.get("preset")?);
    let rep: Option<Replication> = name.as_deref().map(str::parse).transpose()?;
    let nonzero = a.nonzero_filter || cfg.flag("nonzero-filter")?;
    let filtered = nonzero || rep.and_then(|r| r.plan(Padding::DEFAULT_MAX_RUN)).is_some_and(|p| p.nonzero_only);

    let mut exp = ExperimentConfig::with_seed(seed);
    exp.train = a.train.resolve(&cfg, ExperimentConfig::schedule(filtered, seed))?;
    exp.train_fraction = a.train_fraction.or(cfg.get("train-fraction")?).unwrap_or(exp.train_fraction);
    exp.max_run = a.max_run.or(cfg.get("max-run")?).unwrap_or(exp.max_run);
    exp.k = a.k.or(cfg.get("k")?).unwrap_or(exp.k);

    let explicit = a.bin_size.is_some()
        || a.history.is_some()
        || a.padding.is_some()
        || ["bin-size", "history", "padding"].iter().any(|k| cfg.raw(k).is_some());
    let features = a.features.clone().or(cfg.get("features")?);
    let target = a.target.clone().or(cfg.get("target")?);

    let packets = experiment_packets(&a, &cfg, seed)?;

    let report = match rep {
        Some(rep) => {
            if explicit {
                bail!("`{rep}` fixes bin size, history and padding; drop the explicit plan settings");
            }
            match rep.plan(exp.max_run) {
                Some(mut plan) => {
                    plan.nonzero_only |= nonzero;
                    parse_features(features.as_deref(), target.as_deref(), &mut plan.window)?;
                    ExperimentReport::Forecast(Box::new(run_forecast(&plan, &packets, &exp)?))
                }
                None => run(rep, &packets, &exp)?,
            }
        }
        None => {
            let bin_size = a
                .bin_size
                .or(cfg.get("bin-size")?)
                .ok_or_else(|| anyhow!("name a replication or give --bin-size and --history"))?;
            let history = a
                .history
                .or(cfg.get("history")?)
                .ok_or_else(|| anyhow!("an explicit plan needs --history"))?;
            let padding = match a.padding {
                Some(p) => p.with_max_run(exp.max_run),
                None => match cfg.raw("padding") {
                    Some(mode) => Padding::parse(mode, exp.max_run)?,
                    None => Padding::Zero,
                },
            };
            let mut plan = ForecastPlan {
                window: WindowConfig::new(bin_size, history),
                padding,
                nonzero_only: nonzero,
            };
            parse_features(features.as_deref(), target.as_deref(), &mut plan.window)?;
            ExperimentReport::Forecast(Box::new(run_forecast(&plan, &packets, &exp)?))
        }
    };
    let label = rep.map_or("custom", Replication::name);
    let written = match &report {
        ExperimentReport::Forecast(r) => write_forecast(&dir, label, seed, r)?,
        ExperimentReport::Clusters(grid) => write_clusters(&dir, label, seed, grid)?,
    };
    print_summary(&dir, written.len())
}

fn experiment_packets(a: &ExperimentArgs, cfg: &ConfigFile, seed: u64) -> Result<Vec<LabeledPacket>> {
    let input: Option<PathBuf> = a.input.clone().or(cfg.get("in")?);
    let synth_kind: Option<String> = a.synth.clone().or(cfg.get("synth")?);
    let endpoints = EndpointArgs {
        tower: a.endpoints.tower.clone().or(cfg.get("tower")?),
        users: if a.endpoints.users.is_empty() {
            cfg.raw("user")
                .map(|u| u.split(',').map(|s| s.trim().to_string()).collect())
                .unwrap_or_default()
        } else {
            a.endpoints.users.clone()
        },
        drop_bad_rows: a.endpoints.drop_bad_rows,
    };
    match (input, synth_kind) {
        (Some(_), Some(_)) => bail!("give either an input capture or a synthetic profile, not both"),
        (Some(path), None) => load_packets(&path, &endpoints),
        (None, kind) => {
            let bundled = SynthSpec::bundled();
            let kind: SynthKind = match kind {
                Some(k) => k.parse()?,
                None => bundled.kind,
            };
            let spec = SynthSpec {
                kind,
                duration: a.duration.or(cfg.get("duration")?).unwrap_or(bundled.duration),
                session_len: a.session_len.or(cfg.get("session-len")?).unwrap_or(bundled.session_len),
            };
            info!("generating {} s of {} traffic", spec.duration, spec.kind);
            Ok(label_synthetic(&spec.generate(seed)?))
        }
    }
}
