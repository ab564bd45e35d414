//! Forecast metrics, burst classification and k-means clustering of bins.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{BinnedSample, Feature};

fn check_lengths(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { left, right });
    }
    if left == 0 {
        return Err(Error::Empty("series"));
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(predicted.len(), actual.len())?;
    let sse: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok((sse / predicted.len() as f64).sqrt())
}

/// Mean of the training uplink counts.
pub fn burst_threshold(train_targets: &[f64]) -> Result<f64> {
    if train_targets.is_empty() {
        return Err(Error::Empty("training targets"));
    }
    Ok(train_targets.iter().sum::<f64>() / train_targets.len() as f64)
}

/// A value is a burst when it is strictly above the threshold.
pub fn label_bursts(values: &[f64], threshold: f64) -> Vec<bool> {
    values.iter().map(|&v| v > threshold).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationReport {
    pub confusion: Confusion,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when precision had no predicted positives and was defined as 0.
    pub precision_undefined: bool,
    /// Set when recall had no actual positives and was defined as 0.
    pub recall_undefined: bool,
}

pub fn classification_report(predicted: &[bool], actual: &[bool]) -> Result<ClassificationReport> {
    check_lengths(predicted.len(), actual.len())?;
    let mut c = Confusion::default();
    for (&p, &a) in predicted.iter().zip(actual) {
        match (p, a) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ClassificationReport {
        confusion: c,
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        precision,
        recall,
        f1,
        precision_undefined: c.tp + c.fp == 0,
        recall_undefined: c.tp + c.fn_ == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurstReport {
    pub threshold: f64,
    pub report: ClassificationReport,
}

/// Thresholds predictions and actuals at the mean of the training targets.
pub fn burst_report(train_targets: &[f64], predicted: &[f64], actual: &[f64]) -> Result<BurstReport> {
    let threshold = burst_threshold(train_targets)?;
    let report = classification_report(
        &label_bursts(predicted, threshold),
        &label_bursts(actual, threshold),
    )?;
    Ok(BurstReport { threshold, report })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each centroid update, starting with the initial assignment.
    pub inertia_trace: Vec<f64>,
    pub feature_subset: Vec<Feature>,
}

impl ClusterResult {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(i, c)| (i, squared_distance(point, c)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// Sum of squared distances from each point to its assigned centroid.
pub fn inertia(points: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum()
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = d2.iter().rposition(|&d| d > 0.0).expect("positive total");
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        } else {
            // Every point coincides with a centroid already.
            rng.random_range(0..points.len())
        };
        centroids.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn means(points: &[Vec<f64>], assignments: &[usize], k: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            s.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    (sums, counts)
}

/// Lloyd's algorithm from a seeded k-means++ start. An empty cluster takes
/// over the point farthest from its current centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<ClusterResult> {
    kmeans_with_rng(points, k, &mut ChaCha8Rng::seed_from_u64(seed), max_iter)
}

fn kmeans_with_rng(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng, max_iter: usize) -> Result<ClusterResult> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > points.len() {
        return Err(Error::invalid(format!("k = {k} exceeds the {} points", points.len())));
    }
    let dim = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::Shape {
            what: "cluster point",
            expected: dim.to_string(),
            actual: bad.len().to_string(),
        });
    }

    let mut centroids = plus_plus_init(points, k, rng);
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut trace = Vec::new();
    let mut iterations = 0;

    loop {
        // Re-seed empty clusters with the worst-served point.
        loop {
            let (_, counts) = means(points, &assignments, k, dim);
            let Some(empty) = counts.iter().position(|&n| n == 0) else { break };
            let (far, _) = points
                .iter()
                .enumerate()
                .map(|(i, p)| (i, squared_distance(p, &centroids[assignments[i]])))
                .filter(|&(i, _)| counts[assignments[i]] > 1)
                .fold((usize::MAX, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
            assignments[far] = empty;
            centroids[empty] = points[far].clone();
        }

        centroids = means(points, &assignments, k, dim).0;
        let current = inertia(points, &centroids, &assignments);
        if let Some(&prev) = trace.last() {
            debug_assert!(current <= prev * (1.0 + 1e-12) + 1e-12, "inertia rose from {prev} to {current}");
        }
        trace.push(current);

        if iterations == max_iter {
            break;
        }
        iterations += 1;
        let next: Vec<usize> = points
            .iter()
            .zip(&assignments)
            .map(|(p, &cur)| {
                let (best, d) = nearest(p, &centroids);
                // Keep the current cluster on ties so assignments settle.
                if squared_distance(p, &centroids[cur]) <= d { cur } else { best }
            })
            .collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }

    Ok(ClusterResult {
        k,
        inertia: *trace.last().expect("at least one update"),
        centroids,
        assignments,
        iterations,
        inertia_trace: trace,
        feature_subset: Vec::new(),
    })
}

pub const GRID_BIN_SIZES: [f64; 3] = [1.0, 30.0, 60.0];
pub const GRID_K: usize = 4;
pub const GRID_MAX_ITER: usize = 300;

pub fn grid_subsets() -> [Vec<Feature>; 2] {
    [
        vec![Feature::UplinkCount, Feature::DownlinkCount],
        vec![Feature::UplinkCount, Feature::DownlinkCount, Feature::UdRatio],
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    Clustered(ClusterResult),
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub bin_size: f64,
    pub features: Vec<Feature>,
    pub outcome: CellOutcome,
}

/// Clusters one bin series on a feature subset, ignoring padding rows.
pub fn cluster_bins(
    bins: &[BinnedSample],
    features: &[Feature],
    k: usize,
    seed: u64,
    stream: u64,
    max_iter: usize,
) -> Result<ClusterResult> {
    let points: Vec<Vec<f64>> = bins
        .iter()
        .filter(|b| !b.is_padding)
        .map(|b| features.iter().map(|&f| b.get(f)).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut result = kmeans_with_rng(&points, k, &mut rng, max_iter)?;
    result.feature_subset = features.to_vec();
    Ok(result)
}

/// k-means over every (bin size, feature subset) pair. Each cell draws from
/// its own ChaCha stream, so cells are independent of evaluation order.
pub fn cluster_grid(
    series: &[(f64, Vec<BinnedSample>)],
    subsets: &[Vec<Feature>],
    k: usize,
    seed: u64,
) -> Vec<GridCell> {
    let mut cells = Vec::with_capacity(series.len() * subsets.len());
    for (s, (bin_size, bins)) in series.iter().enumerate() {
        for (f, features) in subsets.iter().enumerate() {
            let stream = (s * subsets.len() + f) as u64;
            let real = bins.iter().filter(|b| !b.is_padding).count();
            let outcome = if real < k {
                CellOutcome::Skipped {
                    reason: format!("{real} non-padding bins, need at least {k}"),
                }
            } else {
                match cluster_bins(bins, features, k, seed, stream, GRID_MAX_ITER) {
                    Ok(r) => CellOutcome::Clustered(r),
                    Err(e) => CellOutcome::Skipped { reason: e.to_string() },
                }
            };
            cells.push(GridCell {
                bin_size: *bin_size,
                features: features.clone(),
                outcome,
            });
        }
    }
    cells
}
