//! Plain-text model files.
//!
//! ```text
//! cellflow-model 1
//! input_size=5
//! hidden_size=100
//! head=regression
//! bin_size=1
//! history_len=10
//! features=uplink_count,downlink_count,uplink_bytes,downlink_bytes,ud_ratio
//! target=uplink_count
//! scaler.features=min:max;min:max;...
//! scaler.target=min:max            (or `none`)
//! params
//! lstm.input.W 100 5
//! <one row per line, values space separated>
//! ...
//! end
//! ```
//!
//! Parameter blocks follow [`Network::slices`] order. Values are written in
//! shortest round-trip scientific notation, so loading a saved model gives
//! bit-identical predictions.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Gate, HeadKind, LstmModel, Network};
use crate::dataset::{Range, Scaler, WindowConfig};
use crate::error::{Error, Result};
use crate::features::Feature;

pub const MODEL_FORMAT: &str = "cellflow-model 1";

fn block_names() -> Vec<String> {
    let mut names = Vec::with_capacity(14);
    for g in Gate::ALL {
        for part in ["W", "U", "b"] {
            names.push(format!("lstm.{}.{part}", g.name()));
        }
    }
    names.push("head.W".into());
    names.push("head.b".into());
    names
}

fn block_shapes(net: &Network) -> Vec<(usize, usize)> {
    let (n, h, o) = (net.input_size(), net.hidden_size(), net.kind().output_dim());
    let mut shapes = Vec::with_capacity(14);
    for _ in 0..4 {
        shapes.extend([(h, n), (h, h), (1, h)]);
    }
    shapes.extend([(o, h), (1, o)]);
    shapes
}

fn range_text(r: &Range) -> String {
    format!("{:e}:{:e}", r.min, r.max)
}

pub fn write_model<W: Write>(mut sink: W, model: &LstmModel) -> Result<()> {
    let net = &model.network;
    let win = &model.window;
    writeln!(sink, "{MODEL_FORMAT}")?;
    writeln!(sink, "input_size={}", net.input_size())?;
    writeln!(sink, "hidden_size={}", net.hidden_size())?;
    writeln!(sink, "head={}", net.kind())?;
    writeln!(sink, "bin_size={:e}", win.bin_size)?;
    writeln!(sink, "history_len={}", win.history_len)?;
    let features: Vec<&str> = win.features.iter().map(|f| f.name()).collect();
    writeln!(sink, "features={}", features.join(","))?;
    writeln!(sink, "target={}", win.target)?;
    let ranges: Vec<String> = model.scaler.features.iter().map(range_text).collect();
    writeln!(sink, "scaler.features={}", ranges.join(";"))?;
    match &model.scaler.target {
        Some(r) => writeln!(sink, "scaler.target={}", range_text(r))?,
        None => writeln!(sink, "scaler.target=none")?,
    }
    writeln!(sink, "params")?;
    for ((name, (rows, cols)), data) in block_names().iter().zip(block_shapes(net)).zip(net.slices()) {
        writeln!(sink, "{name} {rows} {cols}")?;
        for row in data.chunks(cols.max(1)) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(sink, "{}", cells.join(" "))?;
        }
    }
    writeln!(sink, "end")?;
    Ok(())
}

pub fn save_model(path: impl AsRef<Path>, model: &LstmModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LstmModel> {
    read_model(BufReader::new(File::open(path)?))
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    number: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String> {
        self.number += 1;
        match self.inner.next() {
            Some(line) => Ok(line?),
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::ModelFormat {
            line: self.number,
            message: message.into(),
        }
    }
}

fn parse_range(s: &str) -> Option<Range> {
    let (min, max) = s.split_once(':')?;
    Some(Range {
        min: min.parse().ok()?,
        max: max.parse().ok()?,
    })
}

pub fn read_model<R: BufRead>(source: R) -> Result<LstmModel> {
    let mut lines = Lines {
        inner: source.lines(),
        number: 0,
    };
    let header = lines.next()?;
    if header.trim() != MODEL_FORMAT {
        return Err(lines.err(format!("expected `{MODEL_FORMAT}`, found `{header}`")));
    }

    let mut keys = BTreeMap::new();
    loop {
        let line = lines.next()?;
        if line.trim() == "params" {
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| lines.err(format!("expected key=value, found `{line}`")))?;
        keys.insert(k.trim().to_string(), (v.trim().to_string(), lines.number));
    }
    let get = |key: &str| {
        keys.get(key).map(|(v, _)| v.as_str()).ok_or_else(|| Error::ModelFormat {
            line: lines.number,
            message: format!("missing key `{key}`"),
        })
    };
    let bad = |key: &str| Error::ModelFormat {
        line: keys.get(key).map_or(0, |(_, n)| *n),
        message: format!("invalid value for `{key}`"),
    };
    let int = |key: &str| get(key)?.parse::<usize>().map_err(|_| bad(key));

    let input_size = int("input_size")?;
    let hidden_size = int("hidden_size")?;
    let kind: HeadKind = get("head")?.parse()?;
    let window = WindowConfig {
        bin_size: get("bin_size")?.parse().map_err(|_| bad("bin_size"))?,
        history_len: int("history_len")?,
        features: Feature::parse_list(get("features")?)?,
        target: get("target")?.parse()?,
    };
    let feature_ranges = get("scaler.features")?
        .split(';')
        .filter(|s| !s.is_empty())
        .map(|s| parse_range(s).ok_or_else(|| bad("scaler.features")))
        .collect::<Result<Vec<_>>>()?;
    let target_range = match get("scaler.target")? {
        "none" => None,
        s => Some(parse_range(s).ok_or_else(|| bad("scaler.target"))?),
    };
    if window.features.len() != input_size || feature_ranges.len() != input_size {
        return Err(Error::ModelFormat {
            line: lines.number,
            message: format!(
                "input_size {input_size} disagrees with {} features and {} scaler ranges",
                window.features.len(),
                feature_ranges.len()
            ),
        });
    }

    let mut network = Network::zeros(input_size, hidden_size, kind);
    let shapes = block_shapes(&network);
    let names = block_names();
    for ((name, (rows, cols)), block) in names.iter().zip(shapes).zip(network.slices_mut()) {
        let header = lines.next()?;
        if header != format!("{name} {rows} {cols}") {
            return Err(lines.err(format!("expected block `{name} {rows} {cols}`, found `{header}`")));
        }
        for r in 0..rows {
            let line = lines.next()?;
            let values = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| lines.err(format!("invalid number `{t}`"))))
                .collect::<Result<Vec<_>>>()?;
            if values.len() != cols {
                return Err(lines.err(format!("expected {cols} values, found {}", values.len())));
            }
            block[r * cols..(r + 1) * cols].copy_from_slice(&values);
        }
    }
    if lines.next()?.trim() != "end" {
        return Err(lines.err("expected `end`"));
    }

    Ok(LstmModel {
        network,
        scaler: Scaler {
            features: feature_ranges,
            target: target_range,
        },
        window,
    })
}
