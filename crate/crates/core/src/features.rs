//! Time-bin aggregation, padding strategies and inter-arrival statistics.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ingest::{Direction, LabeledPacket};

/// Aggregated traffic for one half-open time bin `[bin_start, bin_start + bin_size)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedSample {
    pub bin_index: u64,
    pub bin_start: f64,
    pub uplink_count: u64,
    pub downlink_count: u64,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    pub ud_ratio: f64,
    pub total_bytes: u64,
    /// True for rows inserted by padding rather than observed.
    pub is_padding: bool,
}

impl BinnedSample {
    fn empty(bin_index: u64, bin_start: f64, is_padding: bool) -> Self {
        Self {
            bin_index,
            bin_start,
            uplink_count: 0,
            downlink_count: 0,
            uplink_bytes: 0,
            downlink_bytes: 0,
            ud_ratio: 0.0,
            total_bytes: 0,
            is_padding,
        }
    }

    fn padding(bin_index: u64, bin_start: f64) -> Self {
        Self::empty(bin_index, bin_start, true)
    }

    pub fn get(&self, feature: Feature) -> f64 {
        match feature {
            Feature::UplinkCount => self.uplink_count as f64,
            Feature::DownlinkCount => self.downlink_count as f64,
            Feature::UplinkBytes => self.uplink_bytes as f64,
            Feature::DownlinkBytes => self.downlink_bytes as f64,
            Feature::UdRatio => self.ud_ratio,
            Feature::TotalBytes => self.total_bytes as f64,
        }
    }

    pub fn is_silent(&self) -> bool {
        self.uplink_count == 0 && self.downlink_count == 0
    }
}

/// Uplink count over downlink count, with the denominator floored at one.
pub fn ud_ratio(uplink_count: u64, downlink_count: u64) -> f64 {
    uplink_count as f64 / downlink_count.max(1) as f64
}

/// A numeric column of [`BinnedSample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    UplinkCount,
    DownlinkCount,
    UplinkBytes,
    DownlinkBytes,
    UdRatio,
    TotalBytes,
}

impl Feature {
    pub const ALL: [Feature; 6] = [
        Feature::UplinkCount,
        Feature::DownlinkCount,
        Feature::UplinkBytes,
        Feature::DownlinkBytes,
        Feature::UdRatio,
        Feature::TotalBytes,
    ];

    /// Default per-row input vector for the forecasting model.
    pub const DEFAULT_INPUTS: [Feature; 5] = [
        Feature::UplinkCount,
        Feature::DownlinkCount,
        Feature::UplinkBytes,
        Feature::DownlinkBytes,
        Feature::UdRatio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::UplinkCount => "uplink_count",
            Feature::DownlinkCount => "downlink_count",
            Feature::UplinkBytes => "uplink_bytes",
            Feature::DownlinkBytes => "downlink_bytes",
            Feature::UdRatio => "ud_ratio",
            Feature::TotalBytes => "total_bytes",
        }
    }

    /// Parses a comma-separated feature list.
    pub fn parse_list(s: &str) -> Result<Vec<Feature>> {
        s.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Feature::ALL.iter().map(|f| f.name()).collect();
                Error::unknown("feature", s, &names)
            })
    }
}

fn check_bin_size(bin_size: f64) -> Result<()> {
    if bin_size.is_finite() && bin_size > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("bin size must be positive, got {bin_size}")))
    }
}

/// Groups packets into bins of `bin_size` seconds anchored at the earliest
/// timestamp. Only bins holding at least one packet are returned.
pub fn bin_packets(packets: &[LabeledPacket], bin_size: f64) -> Result<Vec<BinnedSample>> {
    check_bin_size(bin_size)?;
    let Some(t0) = packets.iter().map(LabeledPacket::timestamp).reduce(f64::min) else {
        return Ok(Vec::new());
    };

    let mut bins: std::collections::BTreeMap<u64, BinnedSample> = Default::default();
    for p in packets {
        let index = ((p.timestamp() - t0) / bin_size).floor() as u64;
        let bin = bins
            .entry(index)
            .or_insert_with(|| BinnedSample::empty(index, t0 + index as f64 * bin_size, false));
        match p.direction {
            Direction::Uplink => {
                bin.uplink_count += 1;
                bin.uplink_bytes += p.length();
            }
            Direction::Downlink => {
                bin.downlink_count += 1;
                bin.downlink_bytes += p.length();
            }
        }
    }

    Ok(bins
        .into_values()
        .map(|mut b| {
            b.total_bytes = b.uplink_bytes + b.downlink_bytes;
            b.ud_ratio = ud_ratio(b.uplink_count, b.downlink_count);
            b
        })
        .collect())
}

fn check_sorted(bins: &[BinnedSample]) -> Result<()> {
    for pair in bins.windows(2) {
        let (prev, next) = (pair[0].bin_index, pair[1].bin_index);
        if next == prev {
            return Err(Error::DuplicateBin(next));
        }
        if next < prev {
            return Err(Error::UnsortedBins { prev, next });
        }
    }
    Ok(())
}

/// Fills gaps between observed bins, inserting at most `cap` zero rows per gap.
fn pad(bins: &[BinnedSample], bin_size: f64, cap: u64) -> Result<Vec<BinnedSample>> {
    check_bin_size(bin_size)?;
    check_sorted(bins)?;
    let Some(first) = bins.first() else {
        return Ok(Vec::new());
    };
    let anchor = first.bin_start - first.bin_index as f64 * bin_size;

    let mut out = Vec::with_capacity(bins.len());
    out.push(first.clone());
    for pair in bins.windows(2) {
        let gap_start = pair[0].bin_index + 1;
        let missing = pair[1].bin_index - gap_start;
        for index in gap_start..gap_start + missing.min(cap) {
            out.push(BinnedSample::padding(index, anchor + index as f64 * bin_size));
        }
        out.push(pair[1].clone());
    }
    Ok(out)
}

/// Inserts an all-zero padding row for every missing index between the
/// first and last bin, producing a dense series.
pub fn zero_pad(bins: &[BinnedSample], bin_size: f64) -> Result<Vec<BinnedSample>> {
    pad(bins, bin_size, u64::MAX)
}

/// Like [`zero_pad`], but each run of missing indices is filled with at most
/// `max_run` zero rows (the earliest ones). Retained bins keep their indices,
/// so the output may still have gaps.
pub fn pro_pad(bins: &[BinnedSample], bin_size: f64, max_run: u64) -> Result<Vec<BinnedSample>> {
    if max_run == 0 {
        return Err(Error::invalid("max_run must be at least 1"));
    }
    pad(bins, bin_size, max_run)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    None,
    Zero,
    Pro { max_run: u64 },
}

impl Padding {
    pub const DEFAULT_MAX_RUN: u64 = 2;

    pub fn parse(mode: &str, max_run: u64) -> Result<Self> {
        match mode {
            "none" => Ok(Padding::None),
            "zero" => Ok(Padding::Zero),
            "pro" => Ok(Padding::Pro { max_run }),
            other => Err(Error::unknown("padding mode", other, &["none", "zero", "pro"])),
        }
    }

    pub fn apply(self, bins: &[BinnedSample], bin_size: f64) -> Result<Vec<BinnedSample>> {
        match self {
            Padding::None => {
                check_sorted(bins)?;
                Ok(bins.to_vec())
            }
            Padding::Zero => zero_pad(bins, bin_size),
            Padding::Pro { max_run } => pro_pad(bins, bin_size, max_run),
        }
    }
}

impl fmt::Display for Padding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Padding::None => f.write_str("none"),
            Padding::Zero => f.write_str("zero"),
            Padding::Pro { max_run } => write!(f, "pro(max_run={max_run})"),
        }
    }
}

/// Fraction of rows with no traffic.
pub fn zero_fraction(bins: &[BinnedSample]) -> f64 {
    if bins.is_empty() {
        return 0.0;
    }
    bins.iter().filter(|b| b.is_silent()).count() as f64 / bins.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterArrivalStats {
    pub deltas: Vec<f64>,
    pub mean: f64,
    /// Population variance of the deltas.
    pub variance: f64,
    pub min: f64,
    pub max: f64,
    /// Non-empty buckets `[k*w, (k+1)*w)` as `(upper bound, count)`, ascending.
    pub histogram: Vec<(f64, u64)>,
}

/// Gaps between consecutive packets of either direction.
pub fn interarrival(packets: &[LabeledPacket], bucket_width: f64) -> Result<InterArrivalStats> {
    if !(bucket_width.is_finite() && bucket_width > 0.0) {
        return Err(Error::invalid(format!(
            "bucket width must be positive, got {bucket_width}"
        )));
    }
    if packets.len() < 2 {
        return Err(Error::invalid(format!(
            "inter-arrival analysis needs at least 2 packets, got {}",
            packets.len()
        )));
    }

    let mut deltas = Vec::with_capacity(packets.len() - 1);
    for (i, pair) in packets.windows(2).enumerate() {
        let (prev, next) = (pair[0].timestamp(), pair[1].timestamp());
        if next < prev {
            return Err(Error::DecreasingTimestamps {
                index: i + 1,
                prev,
                next,
            });
        }
        deltas.push(next - prev);
    }

    let n = deltas.len() as f64;
    let mean = deltas.iter().sum::<f64>() / n;
    let variance = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    let min = deltas.iter().copied().fold(f64::INFINITY, f64::min);
    let max = deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut buckets: std::collections::BTreeMap<u64, u64> = Default::default();
    for d in &deltas {
        *buckets.entry((d / bucket_width).floor() as u64).or_default() += 1;
    }
    let histogram = buckets
        .into_iter()
        .map(|(k, c)| ((k + 1) as f64 * bucket_width, c))
        .collect();

    Ok(InterArrivalStats {
        deltas,
        mean,
        variance,
        min,
        max,
        histogram,
    })
}

pub const BIN_COLUMNS: [&str; 9] = [
    "bin_index",
    "bin_start",
    "uplink_count",
    "downlink_count",
    "uplink_bytes",
    "downlink_bytes",
    "ud_ratio",
    "total_bytes",
    "is_padding",
];

pub fn write_bins<W: Write>(sink: W, bins: &[BinnedSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(BIN_COLUMNS)?;
    for b in bins {
        w.write_record([
            b.bin_index.to_string(),
            b.bin_start.to_string(),
            b.uplink_count.to_string(),
            b.downlink_count.to_string(),
            b.uplink_bytes.to_string(),
            b.downlink_bytes.to_string(),
            b.ud_ratio.to_string(),
            b.total_bytes.to_string(),
            b.is_padding.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_bins<R: Read>(source: R) -> Result<Vec<BinnedSample>> {
    let mut r = csv::Reader::from_reader(source);
    let headers = r.headers()?.clone();
    if headers.iter().ne(BIN_COLUMNS) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", BIN_COLUMNS.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |col: &str| Error::Parse {
            line,
            message: format!("invalid {col}"),
        };
        let int = |i: usize| row[i].parse::<u64>().map_err(|_| bad(BIN_COLUMNS[i]));
        let real = |i: usize| row[i].parse::<f64>().map_err(|_| bad(BIN_COLUMNS[i]));
        out.push(BinnedSample {
            bin_index: int(0)?,
            bin_start: real(1)?,
            uplink_count: int(2)?,
            downlink_count: int(3)?,
            uplink_bytes: int(4)?,
            downlink_bytes: int(5)?,
            ud_ratio: real(6)?,
            total_bytes: int(7)?,
            is_padding: row[8].parse::<bool>().map_err(|_| bad(BIN_COLUMNS[8]))?,
        });
    }
    Ok(out)
}
