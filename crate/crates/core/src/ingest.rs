//! Packet-capture ingestion and uplink/downlink labeling.
//!
//! Captures arrive as comma-separated text with a header row, as exported by
//! a packet analyzer. Which column holds which field is configurable through
//! [`CaptureSchema`].

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use crate::error::{Error, Result};

/// One captured packet.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketRecord {
    /// Seconds since the epoch.
    pub timestamp: f64,
    pub src: String,
    pub dst: String,
    /// Frame length in bytes.
    pub length: u64,
    pub protocol: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Uplink,
    Downlink,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPacket {
    pub packet: PacketRecord,
    pub direction: Direction,
}

impl LabeledPacket {
    pub fn timestamp(&self) -> f64 {
        self.packet.timestamp
    }

    pub fn length(&self) -> u64 {
        self.packet.length
    }
}

/// The tower address and the set of user equipment addresses talking to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndpointMap {
    tower: String,
    users: BTreeSet<String>,
}

impl EndpointMap {
    pub fn new<I, S>(tower: impl Into<String>, users: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tower = tower.into();
        let users: BTreeSet<String> = users.into_iter().map(Into::into).collect();
        if users.is_empty() {
            return Err(Error::InvalidEndpoints("no user addresses".into()));
        }
        if users.contains(&tower) {
            return Err(Error::InvalidEndpoints(format!(
                "tower address {tower} is also listed as a user"
            )));
        }
        Ok(Self { tower, users })
    }

    pub fn tower(&self) -> &str {
        &self.tower
    }

    pub fn users(&self) -> &BTreeSet<String> {
        &self.users
    }

    pub fn is_user(&self, addr: &str) -> bool {
        self.users.contains(addr)
    }
}

/// Column names for the logical capture fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureSchema {
    pub time: String,
    pub src: String,
    pub dst: String,
    pub length: String,
    pub protocol: String,
}

impl Default for CaptureSchema {
    fn default() -> Self {
        Self {
            time: "frame.time_epoch".into(),
            src: "ip.src".into(),
            dst: "ip.dst".into(),
            length: "frame.len".into(),
            protocol: "protocol".into(),
        }
    }
}

/// A row that failed to parse and was dropped in lenient mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BadRow {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Capture {
    pub records: Vec<PacketRecord>,
    pub dropped: Vec<BadRow>,
}

/// Parses a capture export, failing on the first malformed row.
pub fn parse_capture<R: Read>(source: R, schema: &CaptureSchema) -> Result<Vec<PacketRecord>> {
    read_capture(source, schema, false).map(|c| c.records)
}

/// Parses a capture export, dropping malformed rows instead of failing.
pub fn parse_capture_lenient<R: Read>(source: R, schema: &CaptureSchema) -> Result<Capture> {
    read_capture(source, schema, true)
}

fn read_capture<R: Read>(source: R, schema: &CaptureSchema, lenient: bool) -> Result<Capture> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);

    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn {
                column: name.to_string(),
            })
    };
    let cols = [
        column(&schema.time)?,
        column(&schema.src)?,
        column(&schema.dst)?,
        column(&schema.length)?,
        column(&schema.protocol)?,
    ];

    let mut capture = Capture::default();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        match parse_row(&row, &cols) {
            Ok(rec) => capture.records.push(rec),
            Err(message) if lenient => capture.dropped.push(BadRow { line, message }),
            Err(message) => return Err(Error::Parse { line, message }),
        }
    }
    Ok(capture)
}

fn parse_row(row: &csv::StringRecord, cols: &[usize; 5]) -> std::result::Result<PacketRecord, String> {
    let field = |i: usize| {
        row.get(cols[i])
            .map(str::trim)
            .ok_or_else(|| format!("row has {} fields, column {} missing", row.len(), cols[i] + 1))
    };

    let ts_raw = field(0)?;
    let timestamp: f64 = ts_raw
        .parse()
        .map_err(|_| format!("invalid timestamp `{ts_raw}`"))?;
    if !timestamp.is_finite() || timestamp < 0.0 {
        return Err(format!("timestamp `{ts_raw}` must be finite and non-negative"));
    }

    let src = field(1)?;
    let dst = field(2)?;
    if src.is_empty() || dst.is_empty() {
        return Err("empty address".into());
    }
    if src == dst {
        return Err(format!("source and destination are both {src}"));
    }

    let len_raw = field(3)?;
    let length: u64 = len_raw
        .parse()
        .map_err(|_| format!("invalid length `{len_raw}`"))?;

    Ok(PacketRecord {
        timestamp,
        src: src.to_string(),
        dst: dst.to_string(),
        length,
        protocol: field(4)?.to_string(),
    })
}

/// Writes records in the capture format using the schema's column names.
///
/// Timestamps use the shortest decimal representation that parses back to the
/// same value, so `parse_capture(write_capture(r)) == r`.
pub fn write_capture<W: Write>(sink: W, records: &[PacketRecord], schema: &CaptureSchema) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record([
        &schema.time,
        &schema.src,
        &schema.dst,
        &schema.length,
        &schema.protocol,
    ])?;
    for r in records {
        writer.write_record([
            r.timestamp.to_string(),
            r.src.clone(),
            r.dst.clone(),
            r.length.to_string(),
            r.protocol.clone(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Picks the address with the most distinct peers as the tower; every peer of
/// the tower is a user. Ties go to the lexicographically smallest address.
pub fn infer_endpoints(records: &[PacketRecord]) -> Result<EndpointMap> {
    if records.is_empty() {
        return Err(Error::Empty("packet list"));
    }

    let mut peers: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in records {
        peers.entry(&r.src).or_default().insert(&r.dst);
        peers.entry(&r.dst).or_default().insert(&r.src);
    }

    // BTreeMap iterates in address order, so the first maximum is the smallest address.
    let (tower, tower_peers) = peers
        .iter()
        .fold(None::<(&str, &BTreeSet<&str>)>, |best, (addr, set)| match best {
            Some((_, b)) if b.len() >= set.len() => best,
            _ => Some((addr, set)),
        })
        .expect("non-empty");

    if tower_peers.len() < 2 {
        return Err(Error::AmbiguousEndpoints(format!(
            "no address talks to more than one peer ({} candidates)",
            peers.len()
        )));
    }

    EndpointMap::new(tower, tower_peers.iter().copied())
}

/// Result of [`label_direction`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Labeling {
    pub packets: Vec<LabeledPacket>,
    pub skipped: usize,
}

impl Labeling {
    pub fn count(&self, direction: Direction) -> usize {
        self.packets.iter().filter(|p| p.direction == direction).count()
    }
}

/// Labels packets sent by a user as uplink and packets addressed to a user as
/// downlink. Anything else is skipped and tallied.
pub fn label_direction(records: &[PacketRecord], endpoints: &EndpointMap) -> Labeling {
    let mut out = Labeling::default();
    for r in records {
        let direction = if endpoints.is_user(&r.src) {
            Direction::Uplink
        } else if endpoints.is_user(&r.dst) {
            Direction::Downlink
        } else {
            out.skipped += 1;
            continue;
        };
        out.packets.push(LabeledPacket {
            packet: r.clone(),
            direction,
        });
    }
    out
}
