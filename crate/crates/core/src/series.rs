//! Time series containers, subsequence extraction and the distance kernels
//! shared by clustering, modelling and detection.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{AndriError, Result};

/// An ordered, finite, real-valued series with optional 0/1 ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    name: Arc<str>,
    values: Vec<f64>,
    labels: Option<Vec<u8>>,
}

impl TimeSeries {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        Self::build(name.into(), values, None)
    }

    pub fn with_labels(name: impl Into<String>, values: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        Self::build(name.into(), values, Some(labels))
    }

    fn build(name: String, values: Vec<f64>, labels: Option<Vec<u8>>) -> Result<Self> {
        if values.len() < 2 {
            return Err(AndriError::EmptyInput(format!(
                "series `{name}` needs at least 2 points, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(AndriError::NonFiniteInput(i));
        }
        if let Some(labels) = &labels {
            if labels.len() != values.len() {
                return Err(AndriError::LengthMismatch {
                    left: values.len(),
                    right: labels.len(),
                });
            }
            if let Some(i) = labels.iter().position(|&l| l > 1) {
                return Err(AndriError::BadParam(format!("label at {i} is not 0/1")));
            }
        }
        Ok(Self {
            name: name.into(),
            values,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Returns a copy carrying `labels`, replacing any existing ground truth.
    pub fn relabel(&self, labels: Vec<u8>) -> Result<Self> {
        Self::build(self.name.to_string(), self.values.clone(), Some(labels))
    }

    /// Copy of the points in `range`, keeping labels aligned.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        let values = self.values[range.clone()].to_vec();
        let labels = self.labels.as_ref().map(|l| l[range].to_vec());
        Self::build(self.name.to_string(), values, labels)
    }
}

/// A contiguous window of a parent series.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsequence {
    pub start: usize,
    pub values: Vec<f64>,
    pub parent: Arc<str>,
}

impl Subsequence {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Which distance kernel compares subsequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    ZNormalized,
    #[default]
    ZeroMean,
}

impl DistanceKind {
    /// Distance between two equal-length windows. Constant windows are
    /// compared as all-zero vectors under z-normalisation.
    pub fn distance(self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_lengths(a, b)?;
        Ok(match self {
            DistanceKind::ZeroMean => zeromean_unchecked(a, b),
            DistanceKind::ZNormalized => znorm_lenient(a, b),
        })
    }

    /// The vector each member contributes to cluster centroids.
    pub fn transform(self, values: &[f64]) -> Vec<f64> {
        match self {
            DistanceKind::ZeroMean => centered(values),
            DistanceKind::ZNormalized => znormalized(values),
        }
    }

    /// Minimum distance between `short` and any equal-length window of `long`.
    pub fn pattern_distance(self, short: &[f64], long: &[f64]) -> Result<f64> {
        pattern_distance(short, long, self)
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub(crate) fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}

pub(crate) fn centered(values: &[f64]) -> Vec<f64> {
    let m = mean(values);
    values.iter().map(|v| v - m).collect()
}

pub(crate) fn znormalized(values: &[f64]) -> Vec<f64> {
    let m = mean(values);
    let s = std_dev(values);
    if s == 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - m) / s).collect()
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(AndriError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(AndriError::EmptyInput("empty subsequence".into()));
    }
    Ok(())
}

/// Splits `series` into windows of `length` starting every `stride` points.
pub fn extract_subsequences(
    series: &TimeSeries,
    length: usize,
    stride: usize,
) -> Result<Vec<Subsequence>> {
    if stride == 0 {
        return Err(AndriError::BadParam("stride must be at least 1".into()));
    }
    if length == 0 || length > series.len() {
        return Err(AndriError::EmptyInput(format!(
            "subsequence length {length} does not fit a series of {} points",
            series.len()
        )));
    }
    let values = series.values();
    Ok((0..=values.len() - length)
        .step_by(stride)
        .map(|start| Subsequence {
            start,
            values: values[start..start + length].to_vec(),
            parent: series.name.clone(),
        })
        .collect())
}

/// Z-normalised Euclidean distance. Errors on a constant argument.
pub fn znorm_distance(a: &Subsequence, b: &Subsequence) -> Result<f64> {
    check_lengths(&a.values, &b.values)?;
    if std_dev(&a.values) == 0.0 || std_dev(&b.values) == 0.0 {
        return Err(AndriError::DegenerateInput(
            "constant subsequence has no z-normal form".into(),
        ));
    }
    Ok(znorm_lenient(&a.values, &b.values))
}

/// Euclidean distance after removing each argument's mean.
pub fn zeromean_distance(a: &Subsequence, b: &Subsequence) -> Result<f64> {
    check_lengths(&a.values, &b.values)?;
    Ok(zeromean_unchecked(&a.values, &b.values))
}

fn zeromean_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let ma = mean(a);
    let mb = mean(b);
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (x - ma) - (y - mb);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn znorm_lenient(a: &[f64], b: &[f64]) -> f64 {
    let za = znormalized(a);
    let zb = znormalized(b);
    za.iter()
        .zip(&zb)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Minimum distance over every alignment of `short` inside `long`.
pub fn pattern_distance(short: &[f64], long: &[f64], kind: DistanceKind) -> Result<f64> {
    if short.len() > long.len() {
        return Err(AndriError::LengthMismatch {
            left: short.len(),
            right: long.len(),
        });
    }
    if short.is_empty() {
        return Err(AndriError::EmptyInput("empty subsequence".into()));
    }
    let mut best = f64::INFINITY;
    for window in long.windows(short.len()) {
        let d = match kind {
            DistanceKind::ZeroMean => zeromean_unchecked(short, window),
            DistanceKind::ZNormalized => znorm_lenient(short, window),
        };
        if d < best {
            best = d;
        }
    }
    Ok(best)
}

/// A pattern with every alignment window pre-transformed, so repeated
/// comparisons against it only transform the query once.
#[derive(Debug, Clone)]
pub(crate) struct PreparedPattern {
    kind: DistanceKind,
    short_len: usize,
    windows: Vec<Vec<f64>>,
}

impl PreparedPattern {
    pub(crate) fn new(long: &[f64], short_len: usize, kind: DistanceKind) -> Self {
        let windows = long.windows(short_len).map(|w| kind.transform(w)).collect();
        Self {
            kind,
            short_len,
            windows,
        }
    }

    /// Same value as [`pattern_distance`] for a query of length `short_len`.
    pub(crate) fn distance(&self, short: &[f64]) -> f64 {
        debug_assert_eq!(short.len(), self.short_len);
        let q = self.kind.transform(short);
        let mut best = f64::INFINITY;
        for w in &self.windows {
            let d = q.iter().zip(w).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            if d < best {
                best = d;
            }
        }
        best.sqrt()
    }
}
