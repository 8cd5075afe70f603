//! Subsequence anomaly detection for time series whose normal behaviour
//! drifts over time.
//!
//! Training clusters non-overlapping tiles with [`ahc`], [`model`] turns the
//! clusters into normal patterns, and [`detect`] scores a stream against the
//! currently active patterns while tracking which ones are present.
//! [`bench`] generates labelled synthetic data and evaluates scores.

pub mod ahc;
pub mod bench;
pub mod detect;
pub mod error;
pub mod io;
pub mod model;
pub mod series;

pub use ahc::{run_ahc, AhcConfig, Cluster, Dendrogram};
pub use detect::{detect_offline, detect_online, DetectorConfig, DetectorState, ScoreSeries};
pub use error::{AndriError, Result};
pub use model::{learn_normal_model, ModelConfig, NormalModel, NormalPattern};
pub use series::{
    extract_subsequences, pattern_distance, zeromean_distance, znorm_distance, DistanceKind,
    Subsequence, TimeSeries,
};
