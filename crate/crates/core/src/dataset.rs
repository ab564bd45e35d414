//! Sliding-window datasets, chronological splits and min-max scaling.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::{BinnedSample, Feature};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct WindowConfig {
    pub bin_size: f64,
    pub history_len: usize,
    pub features: Vec<Feature>,
    pub target: Feature,
}

impl WindowConfig {
    pub fn new(bin_size: f64, history_len: usize) -> Self {
        Self {
            bin_size,
            history_len,
            features: Feature::DEFAULT_INPUTS.to_vec(),
            target: Feature::UplinkCount,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.history_len == 0 {
            return Err(Error::invalid("history length must be at least 1"));
        }
        if !(self.bin_size.is_finite() && self.bin_size > 0.0) {
            return Err(Error::invalid(format!("bin size must be positive, got {}", self.bin_size)));
        }
        if self.features.is_empty() {
            return Err(Error::invalid("feature list is empty"));
        }
        Ok(())
    }
}

/// The named (bin size, history) configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Cfg1x60,
    Cfg3x20,
    Cfg60x1,
    Cfg1x10,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Cfg1x60, Preset::Cfg3x20, Preset::Cfg60x1, Preset::Cfg1x10];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Cfg1x60 => "cfg-1x60",
            Preset::Cfg3x20 => "cfg-3x20",
            Preset::Cfg60x1 => "cfg-60x1",
            Preset::Cfg1x10 => "cfg-1x10",
        }
    }

    pub fn config(self) -> WindowConfig {
        match self {
            Preset::Cfg1x60 => WindowConfig::new(1.0, 60),
            Preset::Cfg3x20 => WindowConfig::new(3.0, 20),
            Preset::Cfg60x1 => WindowConfig::new(60.0, 1),
            Preset::Cfg1x10 => WindowConfig::new(1.0, 10),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
                Error::unknown("preset", s, &names)
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Value(f64),
    Class(usize),
}

impl Target {
    pub fn value(self) -> Option<f64> {
        match self {
            Target::Value(v) => Some(v),
            Target::Class(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// `history_len` rows, one per bin, oldest first.
    pub history: Matrix,
    pub target: Target,
    /// Index of the bin the target was taken from.
    pub target_bin: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub windows: Vec<Window>,
    pub config: WindowConfig,
}

impl WindowedDataset {
    pub fn empty(config: WindowConfig) -> Self {
        Self {
            windows: Vec::new(),
            config,
        }
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Regression targets; class targets are skipped.
    pub fn targets(&self) -> Vec<f64> {
        self.windows.iter().filter_map(|w| w.target.value()).collect()
    }

    pub fn input_size(&self) -> usize {
        self.config.features.len()
    }
}

fn feature_row(bin: &BinnedSample, features: &[Feature]) -> Vec<f64> {
    features.iter().map(|&f| bin.get(f)).collect()
}

fn history_matrix(bins: &[BinnedSample], features: &[Feature]) -> Matrix {
    let mut m = Matrix::zeros(bins.len(), features.len());
    for (i, b) in bins.iter().enumerate() {
        m.row_mut(i).copy_from_slice(&feature_row(b, features));
    }
    m
}

fn check_ascending(bins: &[BinnedSample]) -> Result<()> {
    for pair in bins.windows(2) {
        if pair[1].bin_index <= pair[0].bin_index {
            return Err(Error::UnsortedBins {
                prev: pair[0].bin_index,
                next: pair[1].bin_index,
            });
        }
    }
    Ok(())
}

/// Window `i` holds the feature rows of bins `i..i + history_len` and the
/// target feature of bin `i + history_len`.
pub fn make_windows(bins: &[BinnedSample], config: &WindowConfig) -> Result<WindowedDataset> {
    config.validate()?;
    check_ascending(bins)?;
    let h = config.history_len;
    if bins.len() <= h {
        return Err(Error::invalid(format!(
            "need more than {h} bins for history length {h}, got {}",
            bins.len()
        )));
    }
    let windows = (0..bins.len() - h)
        .map(|i| {
            let next = &bins[i + h];
            Window {
                history: history_matrix(&bins[i..i + h], &config.features),
                target: Target::Value(next.get(config.target)),
                target_bin: next.bin_index,
            }
        })
        .collect();
    Ok(WindowedDataset {
        windows,
        config: config.clone(),
    })
}

/// Every run of `history_len` consecutive bins becomes one window labeled
/// with `class`. Used for application classification, where the label
/// belongs to the whole session rather than to a future bin.
pub fn make_labeled_windows(
    bins: &[BinnedSample],
    config: &WindowConfig,
    class: usize,
) -> Result<WindowedDataset> {
    config.validate()?;
    check_ascending(bins)?;
    let h = config.history_len;
    if bins.len() < h {
        return Ok(WindowedDataset::empty(config.clone()));
    }
    let windows = (0..=bins.len() - h)
        .map(|i| Window {
            history: history_matrix(&bins[i..i + h], &config.features),
            target: Target::Class(class),
            target_bin: bins[i + h - 1].bin_index,
        })
        .collect();
    Ok(WindowedDataset {
        windows,
        config: config.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterReport {
    pub kept: usize,
    pub removed: usize,
}

impl FilterReport {
    /// Every target was zero, so nothing is left to train on.
    pub fn all_zero(&self) -> bool {
        self.kept == 0 && self.removed > 0
    }
}

/// Keeps only windows whose regression target is non-zero. Histories are
/// left as they are and may contain zero rows.
pub fn filter_nonzero_targets(ds: &WindowedDataset) -> (WindowedDataset, FilterReport) {
    let windows: Vec<Window> = ds
        .windows
        .iter()
        .filter(|w| !matches!(w.target, Target::Value(v) if v == 0.0))
        .cloned()
        .collect();
    let report = FilterReport {
        kept: windows.len(),
        removed: ds.len() - windows.len(),
    };
    if report.all_zero() {
        log::warn!("all {} targets are zero; filtered dataset is empty", report.removed);
    }
    (
        WindowedDataset {
            windows,
            config: ds.config.clone(),
        },
        report,
    )
}

/// Chronological split: the first `floor(n * train_fraction)` windows train.
pub fn split(ds: &WindowedDataset, train_fraction: f64) -> Result<(WindowedDataset, WindowedDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n_train = (ds.len() as f64 * train_fraction).floor() as usize;
    if n_train == 0 || n_train == ds.len() {
        return Err(Error::invalid(format!(
            "splitting {} windows at {train_fraction} leaves one side empty",
            ds.len()
        )));
    }
    let part = |w: &[Window]| WindowedDataset {
        windows: w.to_vec(),
        config: ds.config.clone(),
    };
    Ok((part(&ds.windows[..n_train]), part(&ds.windows[n_train..])))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    fn of(values: impl Iterator<Item = f64>) -> Option<Self> {
        values.fold(None, |acc, v| match acc {
            None => Some(Range { min: v, max: v }),
            Some(r) => Some(Range {
                min: r.min.min(v),
                max: r.max.max(v),
            }),
        })
    }

    pub fn scale(&self, v: f64) -> f64 {
        if self.max > self.min {
            (v - self.min) / (self.max - self.min)
        } else {
            0.0
        }
    }

    pub fn unscale(&self, s: f64) -> f64 {
        self.min + s * (self.max - self.min)
    }
}

/// Per-feature min-max scaling to `[0, 1]`, fitted on training data only.
/// A constant column maps to 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scaler {
    pub features: Vec<Range>,
    /// Absent for classification datasets.
    pub target: Option<Range>,
}

impl Scaler {
    pub fn fit(train: &WindowedDataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("training set"));
        }
        let cols = train.input_size();
        let features = (0..cols)
            .map(|c| {
                Range::of(
                    train
                        .windows
                        .iter()
                        .flat_map(|w| w.history.iter_rows().map(move |r| r[c])),
                )
                .expect("non-empty")
            })
            .collect();
        let target = Range::of(train.windows.iter().filter_map(|w| w.target.value()));
        Ok(Self { features, target })
    }

    pub fn is_fitted(&self) -> bool {
        !self.features.is_empty()
    }

    pub fn apply_history(&self, history: &Matrix) -> Result<Matrix> {
        if !self.is_fitted() {
            return Err(Error::UnfittedScaler);
        }
        if history.cols() != self.features.len() {
            return Err(Error::FeatureDimension {
                model: self.features.len(),
                data: history.cols(),
            });
        }
        let mut out = history.clone();
        for r in 0..out.rows() {
            for (v, range) in out.row_mut(r).iter_mut().zip(&self.features) {
                *v = range.scale(*v);
            }
        }
        Ok(out)
    }

    fn target_range(&self) -> Result<&Range> {
        self.target.as_ref().ok_or(Error::UnfittedScaler)
    }

    pub fn scale_target(&self, y: f64) -> Result<f64> {
        Ok(self.target_range()?.scale(y))
    }

    pub fn invert_target(&self, s: f64) -> Result<f64> {
        Ok(self.target_range()?.unscale(s))
    }

    /// Scales every history and every regression target.
    pub fn apply(&self, ds: &WindowedDataset) -> Result<WindowedDataset> {
        let windows = ds
            .windows
            .iter()
            .map(|w| {
                Ok(Window {
                    history: self.apply_history(&w.history)?,
                    target: match w.target {
                        Target::Value(v) => Target::Value(self.scale_target(v)?),
                        class => class,
                    },
                    target_bin: w.target_bin,
                })
            })
            .collect::<Result<_>>()?;
        Ok(WindowedDataset {
            windows,
            config: ds.config.clone(),
        })
    }
}

/// Debug dump: a `# window` line per window followed by its history rows.
pub fn write_dataset<W: Write>(mut sink: W, ds: &WindowedDataset) -> Result<()> {
    let cfg = &ds.config;
    let names: Vec<&str> = cfg.features.iter().map(|f| f.name()).collect();
    writeln!(
        sink,
        "# bin_size={} history_len={} target={} features={}",
        cfg.bin_size,
        cfg.history_len,
        cfg.target,
        names.join(",")
    )?;
    for (i, w) in ds.windows.iter().enumerate() {
        let target = match w.target {
            Target::Value(v) => v.to_string(),
            Target::Class(c) => format!("class:{c}"),
        };
        writeln!(sink, "# window {i} target_bin={} target={target}", w.target_bin)?;
        for row in w.history.iter_rows() {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            writeln!(sink, "{}", cells.join(","))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bins(up: &[u64]) -> Vec<BinnedSample> {
        up.iter()
            .enumerate()
            .map(|(i, &u)| BinnedSample {
                bin_index: i as u64,
                bin_start: i as f64,
                uplink_count: u,
                downlink_count: 1,
                uplink_bytes: u * 10,
                downlink_bytes: 5,
                ud_ratio: u as f64,
                total_bytes: u * 10 + 5,
                is_padding: false,
            })
            .collect()
    }

    fn cfg(h: usize) -> WindowConfig {
        WindowConfig {
            features: vec![Feature::UplinkCount],
            ..WindowConfig::new(1.0, h)
        }
    }

    fn with_targets(targets: &[f64]) -> WindowedDataset {
        WindowedDataset {
            windows: targets
                .iter()
                .enumerate()
                .map(|(i, &t)| Window {
                    history: Matrix::from_rows(&[vec![i as f64]]).unwrap(),
                    target: Target::Value(t),
                    target_bin: i as u64 + 1,
                })
                .collect(),
            config: cfg(1),
        }
    }

    #[test]
    fn five_bins_history_three() {
        let ds = make_windows(&bins(&[10, 11, 12, 13, 14]), &cfg(3)).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.windows[0].history.as_slice(), &[10.0, 11.0, 12.0]);
        assert_eq!(ds.windows[0].target, Target::Value(13.0));
        assert_eq!(ds.windows[1].history.as_slice(), &[11.0, 12.0, 13.0]);
        assert_eq!(ds.windows[1].target, Target::Value(14.0));
        assert_eq!(ds.windows[1].target_bin, 4);
    }

    #[test]
    fn history_equal_to_length_fails() {
        assert!(make_windows(&bins(&[1, 2, 3]), &cfg(3)).is_err());
        assert!(make_windows(&bins(&[1, 2, 3]), &cfg(0)).is_err());
    }

    #[test]
    fn single_row_history() {
        let ds = make_windows(&bins(&[1; 61]), &cfg(1)).unwrap();
        assert_eq!(ds.len(), 60);
        assert!(ds.windows.iter().all(|w| w.history.rows() == 1));
    }

    #[test]
    fn default_feature_vector_layout() {
        let c = WindowConfig::new(1.0, 1);
        let ds = make_windows(&bins(&[3, 4]), &c).unwrap();
        assert_eq!(ds.windows[0].history.row(0), &[3.0, 1.0, 30.0, 5.0, 3.0]);
    }

    #[test]
    fn labeled_windows_cover_every_run() {
        let ds = make_labeled_windows(&bins(&[1, 2, 3, 4]), &cfg(2), 3).unwrap();
        assert_eq!(ds.len(), 3);
        assert!(ds.windows.iter().all(|w| w.target == Target::Class(3)));
        assert!(make_labeled_windows(&bins(&[1]), &cfg(2), 0).unwrap().is_empty());
    }

    #[test]
    fn nonzero_filter() {
        let (out, rep) = filter_nonzero_targets(&with_targets(&[0.0, 5.0, 0.0, 3.0]));
        assert_eq!(out.targets(), vec![5.0, 3.0]);
        assert_eq!(rep, FilterReport { kept: 2, removed: 2 });

        let ds = with_targets(&[1.0, 2.0]);
        assert_eq!(filter_nonzero_targets(&ds).0, ds);

        let (out, rep) = filter_nonzero_targets(&with_targets(&[0.0, 0.0]));
        assert!(out.is_empty() && rep.all_zero());
    }

    #[test]
    fn split_is_chronological() {
        let ds = with_targets(&vec![1.0; 100]);
        let (train, test) = split(&ds, 0.8).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        assert!(train.windows.last().unwrap().target_bin < test.windows[0].target_bin);

        let (a, b) = split(&with_targets(&[1.0, 2.0]), 0.5).unwrap();
        assert_eq!((a.len(), b.len()), (1, 1));

        assert!(split(&with_targets(&[1.0]), 0.5).is_err());
        assert!(split(&ds, 1.0).is_err());
    }

    #[test]
    fn scaler_arithmetic() {
        let mut ds = with_targets(&[0.0, 10.0]);
        ds.windows[0].history = Matrix::from_rows(&[vec![0.0]]).unwrap();
        ds.windows[1].history = Matrix::from_rows(&[vec![10.0]]).unwrap();
        let s = Scaler::fit(&ds).unwrap();
        let m = s.apply_history(&Matrix::from_rows(&[vec![5.0]]).unwrap()).unwrap();
        assert_eq!(m.as_slice(), &[0.5]);
        assert_eq!(s.scale_target(5.0).unwrap(), 0.5);
        let y = 7.3;
        let back = s.invert_target(s.scale_target(y).unwrap()).unwrap();
        assert!(((back - y) / y).abs() <= 1e-12);
    }

    #[test]
    fn constant_column_scales_to_zero() {
        let ds = with_targets(&[4.0, 4.0, 4.0]);
        let mut constant = ds.clone();
        for w in &mut constant.windows {
            w.history = Matrix::from_rows(&[vec![2.5]]).unwrap();
        }
        let s = Scaler::fit(&constant).unwrap();
        let scaled = s.apply(&constant).unwrap();
        assert!(scaled.windows.iter().all(|w| w.history.as_slice() == [0.0]));
        assert_eq!(scaled.targets(), vec![0.0; 3]);
    }

    #[test]
    fn unfitted_scaler_errors() {
        let s = Scaler::default();
        assert!(matches!(
            s.apply_history(&Matrix::zeros(1, 1)),
            Err(Error::UnfittedScaler)
        ));
        assert!(matches!(s.scale_target(1.0), Err(Error::UnfittedScaler)));
        assert!(Scaler::fit(&WindowedDataset::empty(cfg(1))).is_err());
    }

    #[test]
    fn presets_by_name() {
        let p: Preset = "cfg-3x20".parse().unwrap();
        assert_eq!((p.config().bin_size, p.config().history_len), (3.0, 20));
        let err = "cfg-2x2".parse::<Preset>().unwrap_err().to_string();
        assert!(err.contains("cfg-1x60") && err.contains("cfg-1x10"));
    }

    #[test]
    fn dataset_dump_format() {
        let ds = make_windows(&bins(&[1, 2, 3]), &cfg(2)).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "# bin_size=1 history_len=2 target=uplink_count features=uplink_count\n\
             # window 0 target_bin=2 target=3\n1\n2\n"
        );
    }

    proptest! {
        #[test]
        fn windows_reproduce_each_row(up in prop::collection::vec(0u64..50, 2..40), h in 1usize..6) {
            prop_assume!(up.len() > h);
            let ds = make_windows(&bins(&up), &cfg(h)).unwrap();
            let mut seen = vec![0usize; up.len()];
            for (i, w) in ds.windows.iter().enumerate() {
                prop_assert_eq!(w.history.rows(), h);
                for r in 0..h {
                    prop_assert_eq!(w.history.row(r)[0], up[i + r] as f64);
                    seen[i + r] += 1;
                }
            }
            // The final bin only ever appears as a target.
            prop_assert!(seen[..up.len() - 1].iter().all(|&c| c >= 1 && c <= h));
        }

        #[test]
        fn nonzero_filter_idempotent(t in prop::collection::vec(prop::sample::select(vec![0.0, 1.0, 2.5]), 0..30)) {
            let once = filter_nonzero_targets(&with_targets(&t)).0;
            let twice = filter_nonzero_targets(&once).0;
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn split_preserves_order(n in 2usize..200, f in 0.05f64..0.95) {
            let ds = with_targets(&vec![1.0; n]);
            if let Ok((train, test)) = split(&ds, f) {
                prop_assert_eq!(train.len() + test.len(), n);
                prop_assert!(train.windows.last().unwrap().target_bin < test.windows[0].target_bin);
            }
        }

        #[test]
        fn scaled_training_data_in_unit_interval(t in prop::collection::vec(-1e3f64..1e3, 1..30)) {
            let ds = with_targets(&t);
            let s = Scaler::fit(&ds).unwrap();
            let scaled = s.apply(&ds).unwrap();
            for w in &scaled.windows {
                let v = w.target.value().unwrap();
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
