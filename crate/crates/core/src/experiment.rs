//! Named replications run end to end, and the files they leave behind.
//!
//! Every forecasting replication follows the same path: bin, pad, window,
//! optionally drop zero targets, split chronologically, train a regression
//! LSTM, then score it against a constant-mean predictor and the burst
//! threshold. `cluster-grid` runs k-means over the fixed bin-size grid
//! instead. Application classification trains the softmax head on labeled
//! synthetic sessions.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::analysis::{
    burst_report, classification_report, cluster_grid, grid_subsets, label_bursts, rmse, BurstReport, CellOutcome,
    GridCell, GRID_BIN_SIZES,
};
use crate::dataset::{
    filter_nonzero_targets, make_labeled_windows, make_windows, split, FilterReport, Target, WindowConfig,
    WindowedDataset,
};
use crate::error::{Error, Result};
use crate::features::{bin_packets, write_bins, zero_fraction, zero_pad, BinnedSample, Feature, Padding};
use crate::ingest::{label_direction, LabeledPacket};
use crate::lstm::{predict, save_model, train, HeadKind, LstmModel, TrainConfig, TrainOutcome, NUM_CLASSES};
use crate::synth::{self, generate, generate_mixed, App, MixSpec, SynthTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Replication {
    Lstm1x60,
    Lstm3x20,
    Lstm60x1,
    ProPad1x10,
    NonZero1x10,
    ClusterGrid,
}

impl Replication {
    pub const ALL: [Replication; 6] = [
        Replication::Lstm1x60,
        Replication::Lstm3x20,
        Replication::Lstm60x1,
        Replication::ProPad1x10,
        Replication::NonZero1x10,
        Replication::ClusterGrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Replication::Lstm1x60 => "1x60",
            Replication::Lstm3x20 => "3x20",
            Replication::Lstm60x1 => "60x1",
            Replication::ProPad1x10 => "propad-1x10",
            Replication::NonZero1x10 => "nonzero-1x10",
            Replication::ClusterGrid => "cluster-grid",
        }
    }

    /// Windowing and padding for forecasting replications; `None` for the
    /// clustering grid.
    pub fn plan(self, max_run: u64) -> Option<ForecastPlan> {
        let (bin_size, history_len, padding, nonzero_only) = match self {
            Replication::Lstm1x60 => (1.0, 60, Padding::Zero, false),
            Replication::Lstm3x20 => (3.0, 20, Padding::Zero, false),
            Replication::Lstm60x1 => (60.0, 1, Padding::Zero, false),
            Replication::ProPad1x10 => (1.0, 10, Padding::Pro { max_run }, false),
            Replication::NonZero1x10 => (1.0, 10, Padding::Zero, true),
            Replication::ClusterGrid => return None,
        };
        Some(ForecastPlan {
            window: WindowConfig::new(bin_size, history_len),
            padding,
            nonzero_only,
        })
    }
}

impl fmt::Display for Replication {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Replication {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Replication::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Replication::ALL.iter().map(|r| r.name()).collect();
                Error::unknown("experiment", s, &names)
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastPlan {
    pub window: WindowConfig,
    pub padding: Padding,
    /// Train and evaluate only on windows whose target is non-zero.
    pub nonzero_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthKind {
    App(App),
    /// Default profiles, equal weight, one application per session.
    Mixed,
    /// Bursty profiles, equal weight, one application per session.
    Bursty,
}

impl SynthKind {
    pub fn name(self) -> &'static str {
        match self {
            SynthKind::App(a) => a.name(),
            SynthKind::Mixed => "mixed",
            SynthKind::Bursty => "bursty",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixed" => Ok(SynthKind::Mixed),
            "bursty" => Ok(SynthKind::Bursty),
            _ => s.parse().map(SynthKind::App).map_err(|_| {
                let mut names: Vec<&str> = App::ALL.iter().map(|a| a.name()).collect();
                names.extend(["mixed", "bursty"]);
                Error::unknown("synthetic profile", s, &names)
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub duration: f64,
    /// Session length for mixed and bursty traces.
    pub session_len: f64,
}

impl SynthSpec {
    pub const DEFAULT_SESSION_LEN: f64 = 120.0;

    /// The trace experiments use when no capture is given: four hours of
    /// bursty mixed sessions.
    pub fn bundled() -> Self {
        Self {
            kind: SynthKind::Bursty,
            duration: 14_400.0,
            session_len: Self::DEFAULT_SESSION_LEN,
        }
    }

    pub fn generate(&self, seed: u64) -> Result<SynthTrace> {
        match self.kind {
            SynthKind::App(a) => generate(&a.profile(), self.duration, seed),
            SynthKind::Mixed => generate_mixed(&MixSpec::uniform(self.session_len), self.duration, seed),
            SynthKind::Bursty => generate_mixed(&MixSpec::bursty(self.session_len), self.duration, seed),
        }
    }
}

/// Labels a synthetic trace with its fixed endpoints.
pub fn label_synthetic(trace: &SynthTrace) -> Vec<LabeledPacket> {
    label_direction(&trace.packets, &synth::endpoints()).packets
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub train_fraction: f64,
    /// Longest zero run kept by pro padding.
    pub max_run: u64,
    /// Cluster count for the clustering grid.
    pub k: usize,
}

impl ExperimentConfig {
    pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

    pub fn with_seed(seed: u64) -> Self {
        Self {
            train: TrainConfig::with_seed(seed),
            train_fraction: Self::DEFAULT_TRAIN_FRACTION,
            max_run: Padding::DEFAULT_MAX_RUN,
            k: crate::analysis::GRID_K,
        }
    }

    /// Defaults for one replication: the training schedule depends on
    /// whether zero targets are filtered out.
    pub fn for_replication(rep: Replication, seed: u64) -> Self {
        let nonzero_only = rep.plan(Padding::DEFAULT_MAX_RUN).is_some_and(|p| p.nonzero_only);
        Self {
            train: Self::schedule(nonzero_only, seed),
            ..Self::with_seed(seed)
        }
    }

    /// 10 epochs in batches of 8 over every window, or 300 epochs in
    /// batches of 4 over non-zero targets only; 32 hidden units, rate 0.05.
    pub fn schedule(nonzero_only: bool, seed: u64) -> TrainConfig {
        let (epochs, batch_size) = if nonzero_only { (300, 4) } else { (10, 8) };
        TrainConfig {
            hidden_size: 32,
            learning_rate: 0.05,
            epochs,
            batch_size,
            ..TrainConfig::with_seed(seed)
        }
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }
}

/// Scores of a regression model on a chronological train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub train_bins: Vec<u64>,
    pub train_actual: Vec<f64>,
    pub train_predicted: Vec<f64>,
    pub test_bins: Vec<u64>,
    pub test_actual: Vec<f64>,
    pub test_predicted: Vec<f64>,
    pub train_rmse: f64,
    pub test_rmse: f64,
    /// Test RMSE of always predicting the training-target mean.
    pub baseline_rmse: f64,
    pub prediction_variance: f64,
    pub target_variance: f64,
    pub burst: BurstReport,
    pub all_positive_f1: f64,
    pub all_negative_f1: f64,
}

impl Evaluation {
    /// Test prediction variance over test target variance; 0 when the
    /// targets are constant.
    pub fn variance_ratio(&self) -> f64 {
        if self.target_variance > 0.0 {
            self.prediction_variance / self.target_variance
        } else {
            0.0
        }
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population variance.
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

/// Predicts both halves of a split and scores the test half against the
/// constant-mean predictor and the burst threshold from the training half.
pub fn evaluate(model: &LstmModel, train_ds: &WindowedDataset, test_ds: &WindowedDataset) -> Result<Evaluation> {
    if model.kind() != HeadKind::Regression {
        return Err(Error::invalid("regression scores need a regression model"));
    }
    if train_ds.is_empty() || test_ds.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let train_actual = train_ds.targets();
    let train_predicted = predict(train_ds, model)?;
    let test_actual = test_ds.targets();
    let test_predicted = predict(test_ds, model)?;

    let train_mean = mean(&train_actual);
    let burst = burst_report(&train_actual, &test_predicted, &test_actual)?;
    let actual_labels = label_bursts(&test_actual, burst.threshold);
    let n = test_actual.len();
    Ok(Evaluation {
        train_bins: train_ds.windows.iter().map(|w| w.target_bin).collect(),
        test_bins: test_ds.windows.iter().map(|w| w.target_bin).collect(),
        train_rmse: rmse(&train_predicted, &train_actual)?,
        test_rmse: rmse(&test_predicted, &test_actual)?,
        baseline_rmse: rmse(&vec![train_mean; n], &test_actual)?,
        prediction_variance: variance(&test_predicted),
        target_variance: variance(&test_actual),
        burst,
        all_positive_f1: classification_report(&vec![true; n], &actual_labels)?.f1,
        all_negative_f1: classification_report(&vec![false; n], &actual_labels)?.f1,
        train_actual,
        train_predicted,
        test_actual,
        test_predicted,
    })
}

/// Windows a bin series, optionally drops zero targets, and splits it
/// chronologically.
pub fn prepare_split(
    bins: &[BinnedSample],
    window: &WindowConfig,
    nonzero_only: bool,
    train_fraction: f64,
) -> Result<(WindowedDataset, WindowedDataset, Option<FilterReport>)> {
    let windows = make_windows(bins, window)?;
    let (ds, filter) = if nonzero_only {
        let (kept, report) = filter_nonzero_targets(&windows);
        if report.all_zero() {
            return Err(Error::Empty("non-zero targets"));
        }
        (kept, Some(report))
    } else {
        (windows, None)
    };
    let (train_ds, test_ds) = split(&ds, train_fraction)?;
    Ok((train_ds, test_ds, filter))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastReport {
    pub plan: ForecastPlan,
    /// The padded bin series the windows were cut from.
    pub bins: Vec<BinnedSample>,
    pub zero_fraction: f64,
    pub filter: Option<FilterReport>,
    pub outcome: TrainOutcome,
    pub evaluation: Evaluation,
}

pub fn run_forecast(plan: &ForecastPlan, packets: &[LabeledPacket], cfg: &ExperimentConfig) -> Result<ForecastReport> {
    let bin_size = plan.window.bin_size;
    let bins = plan.padding.apply(&bin_packets(packets, bin_size)?, bin_size)?;
    let (train_ds, test_ds, filter) = prepare_split(&bins, &plan.window, plan.nonzero_only, cfg.train_fraction)?;
    let outcome = train(&train_ds, &cfg.train, HeadKind::Regression)?;
    let evaluation = evaluate(&outcome.model, &train_ds, &test_ds)?;
    Ok(ForecastReport {
        plan: plan.clone(),
        zero_fraction: zero_fraction(&bins),
        bins,
        filter,
        outcome,
        evaluation,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGridReport {
    /// Zero-padded bin series per grid bin size.
    pub series: Vec<(f64, Vec<BinnedSample>)>,
    /// One cell per (bin size, feature subset), bin size major.
    pub cells: Vec<GridCell>,
}

/// Bins at each grid size, zero-padded so padding rows can be told apart,
/// then clusters each (bin size, feature subset) cell.
pub fn run_cluster_grid(packets: &[LabeledPacket], cfg: &ExperimentConfig) -> Result<ClusterGridReport> {
    let series = GRID_BIN_SIZES
        .iter()
        .map(|&size| Ok((size, zero_pad(&bin_packets(packets, size)?, size)?)))
        .collect::<Result<Vec<_>>>()?;
    let cells = cluster_grid(&series, &grid_subsets(), cfg.k, cfg.seed());
    Ok(ClusterGridReport { series, cells })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentReport {
    Forecast(Box<ForecastReport>),
    Clusters(ClusterGridReport),
}

pub fn run(rep: Replication, packets: &[LabeledPacket], cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    match rep.plan(cfg.max_run) {
        Some(plan) => Ok(ExperimentReport::Forecast(Box::new(run_forecast(&plan, packets, cfg)?))),
        None => Ok(ExperimentReport::Clusters(run_cluster_grid(packets, cfg)?)),
    }
}

fn create(dir: &Path, name: &str, written: &mut Vec<PathBuf>) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path)?;
    written.push(path);
    Ok(BufWriter::new(file))
}

fn feature_names(features: &[Feature]) -> String {
    features.iter().map(|f| f.name()).collect::<Vec<_>>().join(",")
}

fn write_burst<W: Write>(w: &mut W, b: &BurstReport) -> Result<()> {
    let r = &b.report;
    writeln!(w, "burst_threshold={}", b.threshold)?;
    writeln!(w, "burst_tp={}", r.confusion.tp)?;
    writeln!(w, "burst_fp={}", r.confusion.fp)?;
    writeln!(w, "burst_fn={}", r.confusion.fn_)?;
    writeln!(w, "burst_tn={}", r.confusion.tn)?;
    writeln!(w, "burst_accuracy={}", r.accuracy)?;
    writeln!(w, "burst_precision={}", r.precision)?;
    writeln!(w, "burst_recall={}", r.recall)?;
    writeln!(w, "burst_f1={}", r.f1)?;
    writeln!(w, "burst_precision_undefined={}", r.precision_undefined)?;
    writeln!(w, "burst_recall_undefined={}", r.recall_undefined)?;
    Ok(())
}

fn write_series<W: Write>(w: W, bins: &[u64], actual: &[f64], predicted: &[f64]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["target_bin", "actual", "predicted"])?;
    for ((b, a), p) in bins.iter().zip(actual).zip(predicted) {
        out.write_record([b.to_string(), a.to_string(), p.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the error, variance and burst lines of an evaluation.
pub fn write_scores<W: Write>(w: &mut W, e: &Evaluation) -> Result<()> {
    writeln!(w, "train_windows={}", e.train_actual.len())?;
    writeln!(w, "test_windows={}", e.test_actual.len())?;
    writeln!(w, "train_rmse={}", e.train_rmse)?;
    writeln!(w, "test_rmse={}", e.test_rmse)?;
    writeln!(w, "baseline_rmse={}", e.baseline_rmse)?;
    writeln!(w, "prediction_variance={}", e.prediction_variance)?;
    writeln!(w, "target_variance={}", e.target_variance)?;
    writeln!(w, "variance_ratio={}", e.variance_ratio())?;
    write_burst(w, &e.burst)?;
    writeln!(w, "baseline_f1_all_positive={}", e.all_positive_f1)?;
    writeln!(w, "baseline_f1_all_negative={}", e.all_negative_f1)?;
    Ok(())
}

/// Writes `burst_report.txt` and the train and test prediction series.
pub fn write_evaluation_files(dir: &Path, e: &Evaluation) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut b = create(dir, "burst_report.txt", &mut written)?;
    write_burst(&mut b, &e.burst)?;
    b.flush()?;
    write_series(
        create(dir, "predictions_train.csv", &mut written)?,
        &e.train_bins,
        &e.train_actual,
        &e.train_predicted,
    )?;
    write_series(
        create(dir, "predictions_test.csv", &mut written)?,
        &e.test_bins,
        &e.test_actual,
        &e.test_predicted,
    )?;
    Ok(written)
}

/// Writes the summary, burst report, loss curve, prediction series, bin
/// series and model of a forecasting run under `dir`.
pub fn write_forecast(dir: &Path, name: &str, seed: u64, r: &ForecastReport) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let win = &r.plan.window;

    let mut s = create(dir, "summary.txt", &mut written)?;
    writeln!(s, "experiment={name}")?;
    writeln!(s, "seed={seed}")?;
    writeln!(s, "bin_size={}", win.bin_size)?;
    writeln!(s, "history_len={}", win.history_len)?;
    writeln!(s, "padding={}", r.plan.padding)?;
    writeln!(s, "nonzero_filter={}", r.plan.nonzero_only)?;
    writeln!(s, "features={}", feature_names(&win.features))?;
    writeln!(s, "target={}", win.target)?;
    writeln!(s, "bins={}", r.bins.len())?;
    writeln!(s, "zero_fraction={}", r.zero_fraction)?;
    if let Some(f) = r.filter {
        writeln!(s, "windows_kept={}", f.kept)?;
        writeln!(s, "windows_removed={}", f.removed)?;
    }
    writeln!(s, "epochs={}", r.outcome.loss_history.len())?;
    writeln!(s, "final_loss={}", r.outcome.loss_history.last().copied().unwrap_or(f64::NAN))?;
    write_scores(&mut s, &r.evaluation)?;
    s.flush()?;

    written.extend(write_evaluation_files(dir, &r.evaluation)?);

    let mut loss = csv::Writer::from_writer(create(dir, "loss.csv", &mut written)?);
    loss.write_record(["epoch", "loss"])?;
    for (i, l) in r.outcome.loss_history.iter().enumerate() {
        loss.write_record([(i + 1).to_string(), l.to_string()])?;
    }
    loss.flush()?;

    write_bins(create(dir, "bins.csv", &mut written)?, &r.bins)?;

    let model_path = dir.join("model.txt");
    save_model(&model_path, &r.outcome.model)?;
    written.push(model_path);
    Ok(written)
}

fn cell_tag(cell: &GridCell) -> String {
    let ratio = if cell.features.contains(&Feature::UdRatio) { "with-ratio" } else { "no-ratio" };
    format!("{}s_{ratio}", cell.bin_size)
}

/// Writes one summary block per grid cell plus, for clustered cells, the
/// clustered points with their labels and the centroids.
pub fn write_clusters(dir: &Path, name: &str, seed: u64, grid: &ClusterGridReport) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut s = create(dir, "summary.txt", &mut written)?;
    writeln!(s, "experiment={name}")?;
    writeln!(s, "seed={seed}")?;
    for cell in &grid.cells {
        let tag = cell_tag(cell);
        writeln!(s, "[{tag}]")?;
        writeln!(s, "bin_size={}", cell.bin_size)?;
        writeln!(s, "features={}", feature_names(&cell.features))?;
        let c = match &cell.outcome {
            CellOutcome::Skipped { reason } => {
                writeln!(s, "skipped={reason}")?;
                continue;
            }
            CellOutcome::Clustered(c) => c,
        };
        writeln!(s, "k={}", c.k)?;
        writeln!(s, "points={}", c.assignments.len())?;
        writeln!(s, "iterations={}", c.iterations)?;
        writeln!(s, "inertia={}", c.inertia)?;
        let sizes: Vec<String> = c.cluster_sizes().iter().map(|n| n.to_string()).collect();
        writeln!(s, "cluster_sizes={}", sizes.join(","))?;

        let names: Vec<&str> = cell.features.iter().map(|f| f.name()).collect();
        let mut cw = csv::Writer::from_writer(create(dir, &format!("centroids_{tag}.csv"), &mut written)?);
        cw.write_record(std::iter::once("cluster").chain(names.iter().copied()))?;
        for (i, centroid) in c.centroids.iter().enumerate() {
            cw.write_record(std::iter::once(i.to_string()).chain(centroid.iter().map(|v| v.to_string())))?;
        }
        cw.flush()?;

        let bins = grid
            .series
            .iter()
            .find(|(size, _)| *size == cell.bin_size)
            .map(|(_, b)| b.as_slice())
            .unwrap_or_default();
        let mut aw = csv::Writer::from_writer(create(dir, &format!("clusters_{tag}.csv"), &mut written)?);
        aw.write_record(std::iter::once("bin_index").chain(names.iter().copied()).chain(["cluster"]))?;
        for (bin, &a) in bins.iter().filter(|b| !b.is_padding).zip(&c.assignments) {
            let mut row = vec![bin.bin_index.to_string()];
            row.extend(cell.features.iter().map(|&f| bin.get(f).to_string()));
            row.push(a.to_string());
            aw.write_record(&row)?;
        }
        aw.flush()?;
    }
    s.flush()?;
    Ok(written)
}

/// Writes every output of a finished replication under `dir`, creating it
/// if needed, and returns the paths written.
pub fn write_report(dir: &Path, rep: Replication, seed: u64, report: &ExperimentReport) -> Result<Vec<PathBuf>> {
    match report {
        ExperimentReport::Forecast(r) => write_forecast(dir, rep.name(), seed, r),
        ExperimentReport::Clusters(grid) => write_clusters(dir, rep.name(), seed, grid),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyConfig {
    pub window: WindowConfig,
    pub train: TrainConfig,
    /// Fraction of sessions, in time order, used for training.
    pub train_fraction: f64,
}

impl ClassifyConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            window: WindowConfig::new(2.0, 10),
            train: TrainConfig {
                hidden_size: 16,
                epochs: 20,
                batch_size: 16,
                learning_rate: 0.1,
                ..TrainConfig::with_seed(seed)
            },
            train_fraction: ExperimentConfig::DEFAULT_TRAIN_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyReport {
    pub outcome: TrainOutcome,
    pub train_sessions: usize,
    pub test_sessions: usize,
    pub train_windows: usize,
    pub test_windows: usize,
    /// `confusion[actual][predicted]` over held-out windows.
    pub confusion: [[u64; NUM_CLASSES]; NUM_CLASSES],
    pub accuracy: f64,
}

/// Cuts one labeled dataset per session out of a bin series: every run of
/// `history_len` bins starting inside the session, labeled with its
/// application.
pub fn session_windows(
    bins: &[BinnedSample],
    sessions: &[synth::Session],
    window: &WindowConfig,
) -> Result<Vec<WindowedDataset>> {
    sessions
        .iter()
        .map(|session| {
            let lo = bins.partition_point(|b| b.bin_start < session.start);
            let hi = bins.partition_point(|b| b.bin_start < session.end);
            make_labeled_windows(&bins[lo..hi], window, session.app.class())
        })
        .collect()
}

/// Accuracy and `confusion[actual][predicted]` of a softmax model.
pub fn score_classifier(
    model: &LstmModel,
    ds: &WindowedDataset,
) -> Result<(f64, [[u64; NUM_CLASSES]; NUM_CLASSES])> {
    if ds.is_empty() {
        return Err(Error::Empty("held-out windows"));
    }
    let predicted = predict(ds, model)?;
    let mut confusion = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    let mut correct = 0usize;
    for (w, p) in ds.windows.iter().zip(&predicted) {
        let Target::Class(actual) = w.target else {
            return Err(Error::invalid("class scores need labeled windows"));
        };
        let p = *p as usize;
        confusion[actual][p] += 1;
        correct += usize::from(actual == p);
    }
    Ok((correct as f64 / ds.len() as f64, confusion))
}

/// Splits per-session datasets chronologically by session.
pub fn split_sessions(
    per_session: &[WindowedDataset],
    window: &WindowConfig,
    train_fraction: f64,
) -> Result<(WindowedDataset, WindowedDataset, usize)> {
    let n = per_session.len();
    let train_sessions = (n as f64 * train_fraction).floor() as usize;
    if train_sessions == 0 || train_sessions == n {
        return Err(Error::invalid(format!(
            "splitting {n} sessions at {train_fraction} leaves one side empty"
        )));
    }
    let mut train_ds = WindowedDataset::empty(window.clone());
    let mut test_ds = WindowedDataset::empty(window.clone());
    for (i, ds) in per_session.iter().enumerate() {
        let side = if i < train_sessions { &mut train_ds } else { &mut test_ds };
        side.windows.extend(ds.windows.iter().cloned());
    }
    Ok((train_ds, test_ds, train_sessions))
}

/// Trains the softmax head on the earlier sessions of a labeled trace and
/// scores it on the later ones. The whole trace is binned and zero-padded
/// once, so silent stretches inside a session are part of its windows.
pub fn classify_sessions(trace: &SynthTrace, cfg: &ClassifyConfig) -> Result<ClassifyReport> {
    let packets = label_synthetic(trace);
    let size = cfg.window.bin_size;
    let bins = zero_pad(&bin_packets(&packets, size)?, size)?;
    let per_session = session_windows(&bins, &trace.sessions, &cfg.window)?;
    let (train_ds, test_ds, train_sessions) = split_sessions(&per_session, &cfg.window, cfg.train_fraction)?;
    let outcome = train(&train_ds, &cfg.train, HeadKind::Softmax4)?;
    let (accuracy, confusion) = score_classifier(&outcome.model, &test_ds)?;
    Ok(ClassifyReport {
        train_sessions,
        test_sessions: per_session.len() - train_sessions,
        train_windows: train_ds.len(),
        test_windows: test_ds.len(),
        accuracy,
        confusion,
        outcome,
    })
}
