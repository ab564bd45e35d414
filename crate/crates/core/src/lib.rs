//! Cellular traffic analysis: packet-capture ingestion, time-bin features,
//! LSTM forecasting of uplink intensity, burst detection, application
//! classification and k-means clustering, plus a seeded synthetic traffic
//! generator.

pub mod analysis;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod features;
pub mod ingest;
pub mod lstm;
pub mod matrix;
pub mod synth;

pub use error::{Error, Result};
