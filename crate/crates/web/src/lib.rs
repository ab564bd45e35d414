//! Browser bindings: generate a synthetic trace and look at it three ways.
//!
//! Each export has a plain Rust twin returning `Result<_, String>` so the
//! logic is testable off the browser.

use cellflow::analysis::cluster_bins;
use cellflow::experiment::{label_synthetic, SynthKind, SynthSpec};
use cellflow::features::{self, bin_packets, zero_fraction, BinnedSample, Feature, Padding};
use cellflow::ingest::LabeledPacket;
use wasm_bindgen::prelude::*;

/// Longest trace the page will generate, in seconds.
pub const MAX_DURATION: f64 = 4.0 * 3600.0;

#[wasm_bindgen(getter_with_clone)]
#[derive(Debug, Clone, PartialEq)]
pub struct BinSeries {
    pub bin_start: Vec<f64>,
    pub uplink: Vec<f64>,
    pub downlink: Vec<f64>,
    /// 1 for rows inserted by padding.
    pub padding: Vec<u8>,
    pub zero_fraction: f64,
    pub packets: usize,
}

#[wasm_bindgen(getter_with_clone)]
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// Upper edge of each non-empty bucket, in seconds.
    pub upper: Vec<f64>,
    pub counts: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub max: f64,
}

#[wasm_bindgen(getter_with_clone)]
#[derive(Debug, Clone, PartialEq)]
pub struct Clusters {
    pub uplink: Vec<f64>,
    pub downlink: Vec<f64>,
    pub labels: Vec<u32>,
    pub centroid_uplink: Vec<f64>,
    pub centroid_downlink: Vec<f64>,
    pub inertia: f64,
    pub iterations: usize,
}

fn packets(profile: &str, duration: f64, seed: u64) -> Result<Vec<LabeledPacket>, String> {
    if !(duration > 0.0 && duration <= MAX_DURATION) {
        return Err(format!("duration must be in (0, {MAX_DURATION}] seconds"));
    }
    let spec = SynthSpec {
        kind: profile.parse::<SynthKind>().map_err(|e| e.to_string())?,
        duration,
        session_len: SynthSpec::DEFAULT_SESSION_LEN,
    };
    let trace = spec.generate(seed).map_err(|e| e.to_string())?;
    Ok(label_synthetic(&trace))
}

fn padding(mode: &str, max_run: u32) -> Result<Padding, String> {
    Padding::parse(mode, u64::from(max_run)).map_err(|e| e.to_string())
}

pub fn bin_series(
    profile: &str,
    duration: f64,
    seed: u64,
    bin_size: f64,
    mode: &str,
    max_run: u32,
) -> Result<BinSeries, String> {
    let pk = packets(profile, duration, seed)?;
    let raw = bin_packets(&pk, bin_size).map_err(|e| e.to_string())?;
    let bins: Vec<BinnedSample> = padding(mode, max_run)?
        .apply(&raw, bin_size)
        .map_err(|e| e.to_string())?;
    Ok(BinSeries {
        bin_start: bins.iter().map(|b| b.bin_start).collect(),
        uplink: bins.iter().map(|b| b.uplink_count as f64).collect(),
        downlink: bins.iter().map(|b| b.downlink_count as f64).collect(),
        padding: bins.iter().map(|b| u8::from(b.is_padding)).collect(),
        zero_fraction: zero_fraction(&bins),
        packets: pk.len(),
    })
}

pub fn interarrival_histogram(
    profile: &str,
    duration: f64,
    seed: u64,
    bucket_width: f64,
) -> Result<Histogram, String> {
    let pk = packets(profile, duration, seed)?;
    let stats = features::interarrival(&pk, bucket_width).map_err(|e| e.to_string())?;
    Ok(Histogram {
        upper: stats.histogram.iter().map(|(u, _)| *u).collect(),
        counts: stats.histogram.iter().map(|(_, c)| *c as f64).collect(),
        mean: stats.mean,
        variance: stats.variance,
        max: stats.max,
    })
}

pub fn kmeans_bins(
    profile: &str,
    duration: f64,
    seed: u64,
    bin_size: f64,
    with_ratio: bool,
    k: usize,
) -> Result<Clusters, String> {
    let pk = packets(profile, duration, seed)?;
    let bins = bin_packets(&pk, bin_size).map_err(|e| e.to_string())?;
    let mut subset = vec![Feature::UplinkCount, Feature::DownlinkCount];
    if with_ratio {
        subset.push(Feature::UdRatio);
    }
    let c = cluster_bins(&bins, &subset, k, seed, 0, cellflow::analysis::GRID_MAX_ITER).map_err(|e| e.to_string())?;
    Ok(Clusters {
        uplink: bins.iter().map(|b| b.uplink_count as f64).collect(),
        downlink: bins.iter().map(|b| b.downlink_count as f64).collect(),
        labels: c.assignments.iter().map(|&a| a as u32).collect(),
        centroid_uplink: c.centroids.iter().map(|v| v[0]).collect(),
        centroid_downlink: c.centroids.iter().map(|v| v[1]).collect(),
        inertia: c.inertia,
        iterations: c.iterations,
    })
}

/// Bins a synthetic trace and pads it with `mode` (`none`, `zero` or `pro`).
#[wasm_bindgen(js_name = binSeries)]
pub fn bin_series_js(
    profile: &str,
    duration: f64,
    seed: u64,
    bin_size: f64,
    mode: &str,
    max_run: u32,
) -> Result<BinSeries, JsError> {
    bin_series(profile, duration, seed, bin_size, mode, max_run).map_err(|e| JsError::new(&e))
}

/// Histogram of gaps between consecutive packets of a synthetic trace.
#[wasm_bindgen(js_name = interarrivalHistogram)]
pub fn interarrival_histogram_js(
    profile: &str,
    duration: f64,
    seed: u64,
    bucket_width: f64,
) -> Result<Histogram, JsError> {
    interarrival_histogram(profile, duration, seed, bucket_width).map_err(|e| JsError::new(&e))
}

/// k-means over the unpadded bins of a synthetic trace.
#[wasm_bindgen(js_name = kmeansBins)]
pub fn kmeans_bins_js(
    profile: &str,
    duration: f64,
    seed: u64,
    bin_size: f64,
    with_ratio: bool,
    k: usize,
) -> Result<Clusters, JsError> {
    kmeans_bins(profile, duration, seed, bin_size, with_ratio, k).map_err(|e| JsError::new(&e))
}
