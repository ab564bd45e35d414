//! Seeded synthetic cellular traffic.
//!
//! Each application alternates exponentially distributed ON and OFF periods.
//! During ON periods uplink and downlink packets arrive as two independent
//! Poisson processes; packet lengths are 40 bytes plus a geometric excess.
//! Randomness comes from ChaCha8 seeded with a `u64`, with one stream per
//! session in mixed traces.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric};

use crate::error::{Error, Result};
use crate::ingest::{EndpointMap, PacketRecord};

pub const USER_ADDR: &str = "10.0.0.2";
pub const TOWER_ADDR: &str = "172.16.0.1";
pub const MIN_PACKET_LEN: u64 = 40;

pub fn endpoints() -> EndpointMap {
    EndpointMap::new(TOWER_ADDR, [USER_ADDR]).expect("fixed addresses are valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum App {
    Surfing,
    VideoCall,
    VoiceCall,
    Streaming,
}

impl App {
    pub const ALL: [App; 4] = [App::Surfing, App::VideoCall, App::VoiceCall, App::Streaming];

    pub fn name(self) -> &'static str {
        match self {
            App::Surfing => "surfing",
            App::VideoCall => "video",
            App::VoiceCall => "voice",
            App::Streaming => "streaming",
        }
    }

    /// Class index used by the softmax head.
    pub fn class(self) -> usize {
        self as usize
    }

    pub fn from_class(class: usize) -> Option<App> {
        App::ALL.get(class).copied()
    }

    pub fn profile(self) -> AppProfile {
        match self {
            App::Surfing => AppProfile {
                app: self,
                uplink_rate: 6.0,
                downlink_rate: 24.0,
                mean_on: 8.0,
                mean_off: 20.0,
                uplink_len_mean: 120.0,
                downlink_len_mean: 900.0,
                protocol: "TCP",
            },
            App::VideoCall => AppProfile {
                app: self,
                uplink_rate: 120.0,
                downlink_rate: 130.0,
                mean_on: 60.0,
                mean_off: 4.0,
                uplink_len_mean: 900.0,
                downlink_len_mean: 1000.0,
                protocol: "UDP",
            },
            App::VoiceCall => AppProfile {
                app: self,
                uplink_rate: 50.0,
                downlink_rate: 45.0,
                mean_on: 30.0,
                mean_off: 5.0,
                uplink_len_mean: 160.0,
                downlink_len_mean: 160.0,
                protocol: "UDP",
            },
            App::Streaming => AppProfile {
                app: self,
                uplink_rate: 15.0,
                downlink_rate: 250.0,
                mean_on: 20.0,
                mean_off: 8.0,
                uplink_len_mean: 80.0,
                downlink_len_mean: 1400.0,
                protocol: "TCP",
            },
        }
    }
}

impl App {
    /// Sub-second bursts separated by long silences. Burst timing carries no
    /// memory, but each application keeps its own packet rates, so burst
    /// sizes remain informative while most 1 s bins are empty.
    pub fn bursty_profile(self) -> AppProfile {
        let (uplink_rate, downlink_rate) = match self {
            App::Surfing => (4.0, 30.0),
            App::VideoCall => (400.0, 420.0),
            App::VoiceCall => (40.0, 40.0),
            App::Streaming => (12.0, 350.0),
        };
        AppProfile {
            uplink_rate,
            downlink_rate,
            mean_on: 0.5,
            mean_off: 8.0,
            ..self.profile()
        }
    }
}

impl fmt::Display for App {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for App {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        App::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = App::ALL.iter().map(|a| a.name()).collect();
                Error::unknown("application profile", s, &names)
            })
    }
}

/// Traffic shape of one application.
#[derive(Debug, Clone, PartialEq)]
pub struct AppProfile {
    pub app: App,
    /// Packets per second while ON.
    pub uplink_rate: f64,
    pub downlink_rate: f64,
    /// Mean ON and OFF period lengths in seconds.
    pub mean_on: f64,
    pub mean_off: f64,
    /// Mean packet lengths in bytes.
    pub uplink_len_mean: f64,
    pub downlink_len_mean: f64,
    pub protocol: &'static str,
}

impl AppProfile {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.uplink_rate,
            self.downlink_rate,
            self.mean_on,
            self.mean_off,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid(format!("{} profile has a non-positive rate or period", self.app)));
        }
        if self.uplink_len_mean < MIN_PACKET_LEN as f64 || self.downlink_len_mean < MIN_PACKET_LEN as f64 {
            return Err(Error::invalid(format!(
                "{} profile mean packet length is below {MIN_PACKET_LEN} bytes",
                self.app
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub start: f64,
    pub end: f64,
    pub app: App,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTrace {
    pub packets: Vec<PacketRecord>,
    pub sessions: Vec<Session>,
    /// ON periods, clipped to their session.
    pub on_periods: Vec<(f64, f64)>,
    pub duration: f64,
    pub seed: u64,
}

impl SynthTrace {
    pub fn on_time(&self) -> f64 {
        self.on_periods.iter().map(|(a, b)| b - a).sum()
    }
}

fn micros(t: f64) -> f64 {
    (t * 1e6).round() / 1e6
}

struct LengthSampler {
    excess: Option<Geometric>,
}

impl LengthSampler {
    fn new(mean: f64) -> Self {
        let extra = mean - MIN_PACKET_LEN as f64;
        // Geometric(p) has mean (1 - p) / p.
        let excess = (extra > 0.0).then(|| Geometric::new(1.0 / (extra + 1.0)).expect("p in (0, 1]"));
        Self { excess }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        MIN_PACKET_LEN + self.excess.as_ref().map_or(0, |g| g.sample(rng))
    }
}

/// Packets of one profile over `[start, end)`, appended to `out`.
fn emit_session(
    profile: &AppProfile,
    start: f64,
    end: f64,
    rng: &mut ChaCha8Rng,
    packets: &mut Vec<PacketRecord>,
    on_periods: &mut Vec<(f64, f64)>,
) {
    let on = Exp::new(1.0 / profile.mean_on).expect("validated");
    let off = Exp::new(1.0 / profile.mean_off).expect("validated");
    let up_gap = Exp::new(profile.uplink_rate).expect("validated");
    let down_gap = Exp::new(profile.downlink_rate).expect("validated");
    let up_len = LengthSampler::new(profile.uplink_len_mean);
    let down_len = LengthSampler::new(profile.downlink_len_mean);

    let first = packets.len();
    let mut t = start;
    while t < end {
        let on_end = (t + on.sample(rng)).min(end);
        on_periods.push((t, on_end));
        for (gap, len, src, dst) in [
            (&up_gap, &up_len, USER_ADDR, TOWER_ADDR),
            (&down_gap, &down_len, TOWER_ADDR, USER_ADDR),
        ] {
            let mut s = t + gap.sample(rng);
            while s < on_end {
                let ts = micros(s);
                if ts < end {
                    packets.push(PacketRecord {
                        timestamp: ts,
                        src: src.into(),
                        dst: dst.into(),
                        length: len.sample(rng),
                        protocol: profile.protocol.into(),
                    });
                }
                s += gap.sample(rng);
            }
        }
        t = on_end + off.sample(rng);
    }
    packets[first..].sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
}

fn check_duration(duration: f64) -> Result<()> {
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(Error::invalid(format!("duration must be non-negative, got {duration}")));
    }
    Ok(())
}

/// A single-application trace over `[0, duration)`.
pub fn generate(profile: &AppProfile, duration: f64, seed: u64) -> Result<SynthTrace> {
    check_duration(duration)?;
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = SynthTrace {
        packets: Vec::new(),
        sessions: Vec::new(),
        on_periods: Vec::new(),
        duration,
        seed,
    };
    if duration > 0.0 {
        emit_session(profile, 0.0, duration, &mut rng, &mut trace.packets, &mut trace.on_periods);
        trace.sessions.push(Session {
            start: 0.0,
            end: duration,
            app: profile.app,
        });
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixSpec {
    pub profiles: Vec<(AppProfile, f64)>,
    /// Length of each session in seconds; the last one may be shorter.
    pub session_len: f64,
}

impl MixSpec {
    /// All four applications with equal weight.
    pub fn uniform(session_len: f64) -> Self {
        Self {
            profiles: App::ALL.iter().map(|a| (a.profile(), 1.0)).collect(),
            session_len,
        }
    }

    /// All four applications with their bursty profiles, equal weight.
    pub fn bursty(session_len: f64) -> Self {
        Self {
            profiles: App::ALL.iter().map(|a| (a.bursty_profile(), 1.0)).collect(),
            session_len,
        }
    }
}

/// Splits `[0, duration)` into sessions, draws each session's application by
/// weight, and fills it from a per-session ChaCha stream.
pub fn generate_mixed(spec: &MixSpec, duration: f64, seed: u64) -> Result<SynthTrace> {
    check_duration(duration)?;
    if spec.profiles.is_empty() {
        return Err(Error::Empty("profile set"));
    }
    if !(spec.session_len.is_finite() && spec.session_len > 0.0) {
        return Err(Error::invalid(format!("session length must be positive, got {}", spec.session_len)));
    }
    for (p, w) in &spec.profiles {
        p.validate()?;
        if !(w.is_finite() && *w > 0.0) {
            return Err(Error::invalid(format!("weight for {} must be positive, got {w}", p.app)));
        }
    }
    let total_weight: f64 = spec.profiles.iter().map(|(_, w)| w).sum();

    let mut chooser = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = SynthTrace {
        packets: Vec::new(),
        sessions: Vec::new(),
        on_periods: Vec::new(),
        duration,
        seed,
    };
    let mut index = 0u64;
    loop {
        let start = index as f64 * spec.session_len;
        if start >= duration {
            break;
        }
        let end = ((index + 1) as f64 * spec.session_len).min(duration);

        let mut r = chooser.random::<f64>() * total_weight;
        let mut profile = &spec.profiles[spec.profiles.len() - 1].0;
        for (p, w) in &spec.profiles {
            if r < *w {
                profile = p;
                break;
            }
            r -= w;
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index + 1);
        emit_session(profile, start, end, &mut rng, &mut trace.packets, &mut trace.on_periods);
        trace.sessions.push(Session {
            start,
            end,
            app: profile.app,
        });
        index += 1;
    }
    Ok(trace)
}

/// Sidecar label file: `session_start,session_end,app_label`.
pub fn write_labels<W: Write>(sink: W, sessions: &[Session]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["session_start", "session_end", "app_label"])?;
    for s in sessions {
        w.write_record([s.start.to_string(), s.end.to_string(), s.app.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels<R: Read>(source: R) -> Result<Vec<Session>> {
    let mut r = csv::Reader::from_reader(source);
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::Parse {
            line,
            message: format!("invalid {what}"),
        };
        if row.len() != 3 {
            return Err(bad("label row"));
        }
        out.push(Session {
            start: row[0].parse().map_err(|_| bad("session_start"))?,
            end: row[1].parse().map_err(|_| bad("session_end"))?,
            app: row[2].parse()?,
        });
    }
    Ok(out)
}
