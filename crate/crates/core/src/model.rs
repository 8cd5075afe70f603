//! The dynamic normal model: patterns learned from clustered training tiles,
//! each with a distance threshold `tau` and a presence threshold `nu`.

use serde::{Deserialize, Serialize};

use crate::ahc::{build_dendrogram, find_cutoff_with, min_pattern_size, AhcConfig, Cluster};
use crate::error::{AndriError, Result};
use crate::series::{mean, std_dev, DistanceKind, PreparedPattern, TimeSeries};

pub const MODEL_FORMAT: &str = "andri-model/1";

/// Decay of the fuzzy membership beyond `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EtaMode {
    /// `ln 2 / max(tau, 1e-9)` per pattern: membership halves one `tau` past it.
    #[default]
    Auto,
    Fixed(f64),
}

impl EtaMode {
    pub fn eta(self, tau: f64) -> f64 {
        match self {
            EtaMode::Auto => std::f64::consts::LN_2 / tau.max(1e-9),
            EtaMode::Fixed(e) => e,
        }
    }
}

impl std::str::FromStr for EtaMode {
    type Err = AndriError;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(EtaMode::Auto);
        }
        match s.parse::<f64>() {
            Ok(e) if e > 0.0 && e.is_finite() => Ok(EtaMode::Fixed(e)),
            _ => Err(AndriError::BadParam(format!(
                "eta must be `auto` or a positive number, got `{s}`"
            ))),
        }
    }
}

impl Serialize for EtaMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EtaMode::Auto => s.serialize_str("auto"),
            EtaMode::Fixed(e) => s.serialize_f64(*e),
        }
    }
}

impl<'de> Deserialize<'de> for EtaMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(e) if e > 0.0 && e.is_finite() => Ok(EtaMode::Fixed(e)),
            Repr::Num(e) => Err(serde::de::Error::custom(format!(
                "eta must be positive, got {e}"
            ))),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalPattern {
    pub id: usize,
    pub centroid: Vec<f64>,
    pub tau: f64,
    pub nu: f64,
    pub active: bool,
    pub born_at: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalModel {
    pub ell: usize,
    pub ell_m: usize,
    /// Currency window in points.
    pub w: usize,
    pub w_max: usize,
    pub distance_kind: DistanceKind,
    pub eta: EtaMode,
    /// Used when the detector clusters a window for a new pattern.
    #[serde(default)]
    pub ahc: AhcConfig,
    pub patterns: Vec<NormalPattern>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub ell: usize,
    pub ell_m: usize,
    pub w_max: usize,
    pub ahc: AhcConfig,
    pub distance_kind: DistanceKind,
    pub eta: EtaMode,
}

impl ModelConfig {
    /// Defaults: `ell_m = 2 ell`, `w_max = 20 ell`, `k = 1`, `r_min = 1%`.
    pub fn new(ell: usize) -> Self {
        ModelConfig {
            ell,
            ell_m: 2 * ell,
            w_max: 20 * ell,
            ahc: AhcConfig::default(),
            distance_kind: DistanceKind::default(),
            eta: EtaMode::Auto,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ell < 2 {
            return Err(AndriError::BadParam("ell must be at least 2".into()));
        }
        if self.ell_m < self.ell {
            return Err(AndriError::BadParam(format!(
                "ell_m ({}) must be at least ell ({})",
                self.ell_m, self.ell
            )));
        }
        if self.w_max < self.ell_m {
            return Err(AndriError::BadParam(format!(
                "w_max ({}) must be at least ell_m ({})",
                self.w_max, self.ell_m
            )));
        }
        if let EtaMode::Fixed(e) = self.eta {
            if !(e > 0.0 && e.is_finite()) {
                return Err(AndriError::BadParam(format!(
                    "eta must be positive, got {e}"
                )));
            }
        }
        self.ahc.validate()
    }
}

/// `1` up to `tau`, then `exp(-eta (d - tau))`.
pub fn membership_from_distance(d: f64, tau: f64, eta: f64) -> f64 {
    if d <= tau {
        1.0
    } else {
        (-eta * (d - tau)).exp()
    }
}

/// Mean over the `ell`-windows of `tile` taken at stride `ell`, each compared
/// to `long` with [`crate::pattern_distance`].
pub fn tile_distance(tile: &[f64], long: &[f64], ell: usize, kind: DistanceKind) -> Result<f64> {
    if tile.len() < ell {
        return Err(AndriError::LengthMismatch {
            left: tile.len(),
            right: ell,
        });
    }
    let mut ds = Vec::new();
    for w in tile.chunks_exact(ell) {
        ds.push(crate::series::pattern_distance(w, long, kind)?);
    }
    Ok(mean(&ds))
}

impl NormalModel {
    pub fn eta_for(&self, p: &NormalPattern) -> f64 {
        self.eta.eta(p.tau)
    }

    /// Number of tiles whose memberships are averaged for presence.
    pub fn window_tiles(&self) -> usize {
        (self.w / self.ell_m).max(1)
    }

    pub fn pattern(&self, id: usize) -> Option<&NormalPattern> {
        self.patterns.iter().find(|p| p.id == id)
    }

    pub fn next_id(&self) -> usize {
        self.patterns.iter().map(|p| p.id + 1).max().unwrap_or(0)
    }

    pub fn active_ids(&self) -> Vec<usize> {
        self.patterns
            .iter()
            .filter(|p| p.active)
            .map(|p| p.id)
            .collect()
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            ell: self.ell,
            ell_m: self.ell_m,
            w_max: self.w_max,
            ahc: self.ahc.clone(),
            distance_kind: self.distance_kind,
            eta: self.eta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config().validate()?;
        if self.w == 0 || self.w > self.w_max {
            return Err(AndriError::FormatError(format!(
                "W = {} must lie in [1, {}]",
                self.w, self.w_max
            )));
        }
        let mut ids: Vec<usize> = self.patterns.iter().map(|p| p.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(AndriError::FormatError("duplicate pattern id".into()));
        }
        for p in &self.patterns {
            if p.centroid.len() != self.ell_m {
                return Err(AndriError::FormatError(format!(
                    "pattern {} centroid has {} values, expected {}",
                    p.id,
                    p.centroid.len(),
                    self.ell_m
                )));
            }
            if p.centroid.iter().any(|v| !v.is_finite()) {
                return Err(AndriError::FormatError(format!(
                    "pattern {} centroid is not finite",
                    p.id
                )));
            }
            if !(p.tau >= 0.0 && p.tau.is_finite()) || !(0.0..=1.0).contains(&p.nu) {
                return Err(AndriError::FormatError(format!(
                    "pattern {} has tau {} / nu {} out of range",
                    p.id, p.tau, p.nu
                )));
            }
        }
        Ok(())
    }
}

/// Fuzzy membership of an `ell`-length subsequence in `p`.
pub fn membership(s: &[f64], p: &NormalPattern, model: &NormalModel) -> Result<f64> {
    if s.len() != model.ell {
        return Err(AndriError::LengthMismatch {
            left: s.len(),
            right: model.ell,
        });
    }
    let d = crate::series::pattern_distance(s, &p.centroid, model.distance_kind)?;
    Ok(membership_from_distance(d, p.tau, model.eta_for(p)))
}

/// Membership of a longer window: the mean over its `ell`-chunks.
pub fn tile_membership(tile: &[f64], p: &NormalPattern, model: &NormalModel) -> Result<f64> {
    if tile.len() < model.ell {
        return Err(AndriError::LengthMismatch {
            left: tile.len(),
            right: model.ell,
        });
    }
    let ms = tile
        .chunks_exact(model.ell)
        .map(|c| membership(c, p, model))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(&ms))
}

/// Mean membership of the window's subsequences in `p`.
pub fn window_presence(
    window: &[crate::Subsequence],
    p: &NormalPattern,
    model: &NormalModel,
) -> Result<f64> {
    if window.is_empty() {
        return Err(AndriError::EmptyInput("empty presence window".into()));
    }
    let ms = window
        .iter()
        .map(|s| tile_membership(&s.values, p, model))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(&ms))
}

/// Everything produced while fitting a model.
#[derive(Debug, Clone)]
pub struct Training {
    pub model: NormalModel,
    /// Clusters that became patterns, in pattern order.
    pub pattern_clusters: Vec<Cluster>,
    /// Clusters too small to be patterns.
    pub anomaly_candidates: Vec<Cluster>,
    pub dendrogram: crate::ahc::Dendrogram,
}

/// Start positions in tiles of the presence windows used for `nu`.
pub(crate) fn nu_window_starts(
    first: usize,
    last: usize,
    w_tiles: usize,
    n_tiles: usize,
) -> Vec<usize> {
    if n_tiles <= w_tiles {
        return vec![0];
    }
    let max_start = n_tiles - w_tiles;
    let lo = first.min(max_start);
    let hi = last.saturating_sub(w_tiles - 1).max(first).min(max_start);
    (lo..=hi).collect()
}

fn incremental_mean<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut m: Vec<f64> = Vec::new();
    for (k, row) in rows.enumerate() {
        if k == 0 {
            m = row.to_vec();
        } else {
            let kf = (k + 1) as f64;
            m.iter_mut().zip(row).for_each(|(m, x)| *m += (x - *m) / kf);
        }
    }
    m
}

/// Fit a model on tiles of length `ell_m`. Returns an empty pattern list
/// when no cluster is large enough.
pub(crate) fn fit_tiles(
    tiles: &[crate::Subsequence],
    config: &ModelConfig,
    born_at: impl Fn(&Cluster) -> usize,
    first_id: usize,
) -> Result<Training> {
    config.validate()?;
    let (ell, kind) = (config.ell, config.distance_kind);
    let dendrogram = build_dendrogram(tiles, &config.ahc, kind)?;
    let clusters = find_cutoff_with(&dendrogram, config.ahc.cutoff);
    let min_size = min_pattern_size(config.ahc.r_min, tiles.len());
    let (pattern_clusters, anomaly_candidates): (Vec<_>, Vec<_>) =
        clusters.into_iter().partition(|c| c.len() >= min_size);

    let smallest = pattern_clusters.iter().map(|c| c.len()).min().unwrap_or(1);
    let w = config.w_max.min(2 * smallest * config.ell_m);
    let w_tiles = (w / config.ell_m).max(1);

    let mut patterns = Vec::with_capacity(pattern_clusters.len());
    for (i, c) in pattern_clusters.iter().enumerate() {
        let centroid = incremental_mean(c.members.iter().map(|&m| tiles[m].values.as_slice()));
        let prepared = PreparedPattern::new(&centroid, ell, kind);
        let tile_ds =
            |t: &[f64]| -> Vec<f64> { t.chunks_exact(ell).map(|w| prepared.distance(w)).collect() };

        let d: Vec<f64> = c
            .members
            .iter()
            .flat_map(|&m| tile_ds(&tiles[m].values))
            .collect();
        let tau = mean(&d) + 3.0 * std_dev(&d);
        let eta = config.eta.eta(tau);

        let tile_m: Vec<f64> = tiles
            .iter()
            .map(|t| {
                let ms: Vec<f64> = tile_ds(&t.values)
                    .into_iter()
                    .map(|d| membership_from_distance(d, tau, eta))
                    .collect();
                mean(&ms)
            })
            .collect();
        let starts = nu_window_starts(
            c.members[0],
            *c.members.last().unwrap(),
            w_tiles,
            tiles.len(),
        );
        let nu = starts
            .iter()
            .map(|&s| mean(&tile_m[s..(s + w_tiles).min(tiles.len())]))
            .fold(f64::INFINITY, f64::min);

        patterns.push(NormalPattern {
            id: first_id + i,
            centroid,
            tau,
            nu: nu.clamp(0.0, 1.0),
            active: true,
            born_at: born_at(c),
        });
    }

    Ok(Training {
        model: NormalModel {
            ell,
            ell_m: config.ell_m,
            w,
            w_max: config.w_max,
            distance_kind: kind,
            eta: config.eta,
            ahc: config.ahc.clone(),
            patterns,
        },
        pattern_clusters,
        anomaly_candidates,
        dendrogram,
    })
}

/// Train on the non-overlapping `ell_m` tiling of `train`.
pub fn train(train: &TimeSeries, config: &ModelConfig) -> Result<Training> {
    config.validate()?;
    if train.len() < 2 * config.ell_m {
        return Err(AndriError::InsufficientData(format!(
            "training needs at least {} points, got {}",
            2 * config.ell_m,
            train.len()
        )));
    }
    let tiles = crate::series::extract_subsequences(train, config.ell_m, config.ell_m)?;
    let ell_m = config.ell_m;
    let t = fit_tiles(&tiles, config, |c| c.start() * ell_m, 0)?;
    if t.model.patterns.is_empty() {
        return Err(AndriError::InsufficientData(format!(
            "no cluster reaches the minimum size of {}",
            min_pattern_size(config.ahc.r_min, tiles.len())
        )));
    }
    Ok(t)
}

pub fn learn_normal_model(series: &TimeSeries, config: &ModelConfig) -> Result<NormalModel> {
    Ok(train(series, config)?.model)
}

#[derive(Serialize)]
struct DocOut<'a> {
    format: &'a str,
    #[serde(flatten)]
    model: &'a NormalModel,
}

#[derive(Deserialize)]
struct DocIn {
    format: String,
    #[serde(flatten)]
    model: NormalModel,
}

pub fn serialize_model(model: &NormalModel) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(&DocOut {
        format: MODEL_FORMAT,
        model,
    })
    .expect("model serializes");
    out.push(b'\n');
    out
}

pub fn deserialize_model(bytes: &[u8]) -> Result<NormalModel> {
    let doc: DocIn =
        serde_json::from_slice(bytes).map_err(|e| AndriError::FormatError(e.to_string()))?;
    if doc.format != MODEL_FORMAT {
        return Err(AndriError::FormatError(format!(
            "unsupported model format `{}`",
            doc.format
        )));
    }
    doc.model.validate()?;
    Ok(doc.model)
}
