//! Online and offline scoring against the dynamic normal model.
//!
//! The detector consumes one point at a time. Every completed `ell_m` tile
//! updates per-pattern presence; when no pattern is present the recent
//! window is clustered and may contribute a new pattern. Each point's score
//! is its distance to the nearest active pattern, minimised over the
//! subsequences covering it, so scores trail the input by `ell - 1` points.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{AndriError, Result};
use crate::model::{
    fit_tiles, membership_from_distance, tile_distance, train, ModelConfig, NormalModel,
    NormalPattern,
};
use crate::series::{mean, PreparedPattern, Subsequence, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    Activated,
    Deactivated,
    NewPattern,
}

impl DriftKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DriftKind::Activated => "activated",
            DriftKind::Deactivated => "deactivated",
            DriftKind::NewPattern => "new_pattern",
        }
    }
}

impl std::str::FromStr for DriftKind {
    type Err = AndriError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "activated" => Ok(DriftKind::Activated),
            "deactivated" => Ok(DriftKind::Deactivated),
            "new_pattern" => Ok(DriftKind::NewPattern),
            _ => Err(AndriError::FormatError(format!("unknown event kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriftEvent {
    pub at: usize,
    pub kind: DriftKind,
    pub pattern_id: usize,
}

/// Per-point scores, the pattern each was scored against, and the event log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSeries {
    pub scores: Vec<f64>,
    pub patterns: Vec<usize>,
    pub events: Vec<DriftEvent>,
}

impl ScoreSeries {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// How the distances of the subsequences covering a point become its score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Min,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    #[serde(default)]
    pub aggregation: Aggregation,
    /// Points to wait after a rejected admission; defaults to `ell_m`.
    #[serde(default)]
    pub cooldown: Option<usize>,
    #[serde(default = "default_true")]
    pub admit: bool,
}

fn default_true() -> bool {
    true
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            aggregation: Aggregation::Min,
            cooldown: None,
            admit: true,
        }
    }
}

/// A finalised score: `(index, score, pattern id)`.
pub type ScoreRecord = (usize, f64, usize);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutput {
    pub score: Option<ScoreRecord>,
    pub events: Vec<DriftEvent>,
}

#[derive(Debug, Clone)]
pub struct DetectorState {
    model: NormalModel,
    config: DetectorConfig,
    prepared: Vec<PreparedPattern>,
    buffer: VecDeque<f64>,
    buffer_cap: usize,
    position: usize,
    /// Distance of each recent `ell`-subsequence to each pattern, newest last.
    dists: Vec<VecDeque<f64>>,
    dist_cap: usize,
    history: Vec<VecDeque<f64>>,
    evaluated: bool,
    retry_at: usize,
    events: Vec<DriftEvent>,
    scores: Vec<f64>,
    score_patterns: Vec<usize>,
    last_q: Option<usize>,
    scratch: Vec<f64>,
}

impl DetectorState {
    pub fn new(model: NormalModel, config: DetectorConfig) -> Result<Self> {
        model.validate()?;
        if model.patterns.is_empty() {
            return Err(AndriError::NoPatterns);
        }
        let prepared = model
            .patterns
            .iter()
            .map(|p| PreparedPattern::new(&p.centroid, model.ell, model.distance_kind))
            .collect();
        let dist_cap = model.ell_m.max(model.ell);
        let buffer_cap = (model.window_tiles() * model.ell_m).max(dist_cap + model.ell);
        let n = model.patterns.len();
        Ok(DetectorState {
            config,
            prepared,
            buffer: VecDeque::with_capacity(buffer_cap + 1),
            buffer_cap,
            position: 0,
            dists: vec![VecDeque::with_capacity(dist_cap + 1); n],
            dist_cap,
            history: vec![VecDeque::new(); n],
            evaluated: false,
            retry_at: 0,
            events: Vec::new(),
            scores: Vec::new(),
            score_patterns: Vec::new(),
            last_q: None,
            scratch: Vec::with_capacity(model.ell),
            model,
        })
    }

    pub fn model(&self) -> &NormalModel {
        &self.model
    }

    /// Points consumed so far.
    pub fn position(&self) -> usize {
        self.position
    }

    pub fn events(&self) -> &[DriftEvent] {
        &self.events
    }

    /// Membership history of pattern `idx` (index into `model().patterns`).
    pub fn membership_history(&self, idx: usize) -> Vec<f64> {
        self.history[idx].iter().copied().collect()
    }

    /// Copy of the scores and events emitted so far.
    pub fn snapshot(&self) -> ScoreSeries {
        ScoreSeries {
            scores: self.scores.clone(),
            patterns: self.score_patterns.clone(),
            events: self.events.clone(),
        }
    }

    fn push_bounded(ring: &mut VecDeque<f64>, v: f64, cap: usize) {
        ring.push_back(v);
        if ring.len() > cap {
            ring.pop_front();
        }
    }

    /// Distance ring value for subsequence `m` and pattern `idx`.
    fn dist(&self, idx: usize, m: usize) -> f64 {
        let newest = self.position - self.model.ell;
        let ring = &self.dists[idx];
        ring[ring.len() - 1 - (newest - m)]
    }

    fn candidates(&self) -> Vec<usize> {
        let active: Vec<usize> = (0..self.model.patterns.len())
            .filter(|&i| self.model.patterns[i].active)
            .collect();
        if active.is_empty() {
            (0..self.model.patterns.len()).collect()
        } else {
            active
        }
    }

    pub fn step(&mut self, x: f64) -> Result<StepOutput> {
        if !x.is_finite() {
            return Err(AndriError::NonFiniteInput(self.position));
        }
        self.buffer.push_back(x);
        if self.buffer.len() > self.buffer_cap {
            self.buffer.pop_front();
        }
        self.position += 1;
        let t = self.position - 1;
        let (ell, ell_m) = (self.model.ell, self.model.ell_m);
        let mut out = StepOutput::default();
        if self.position < ell {
            return Ok(out);
        }

        self.scratch.clear();
        let b = self.buffer.len();
        self.scratch.extend(self.buffer.range(b - ell..));
        for i in 0..self.prepared.len() {
            let d = self.prepared[i].distance(&self.scratch);
            Self::push_bounded(&mut self.dists[i], d, self.dist_cap);
        }

        if self.position.is_multiple_of(ell_m) {
            let before = self.events.len();
            self.complete_tile();
            out.events = self.events[before..].to_vec();
        }

        let m = t + 1 - ell;
        let cands = self.candidates();
        let q = cands
            .iter()
            .copied()
            .min_by(|&a, &b| self.dist(a, m).total_cmp(&self.dist(b, m)))
            .unwrap();
        self.last_q = Some(q);
        let score = self.aggregate(q, m, m);
        self.scores.push(score);
        let id = self.model.patterns[q].id;
        self.score_patterns.push(id);
        out.score = Some((m, score, id));
        Ok(out)
    }

    /// Score point `j` over covering subsequences `m <= last`.
    fn aggregate(&self, q: usize, j: usize, last: usize) -> f64 {
        let lo = (j + 1).saturating_sub(self.model.ell);
        let ds = (lo..=last).map(|m| self.dist(q, m));
        match self.config.aggregation {
            Aggregation::Min => ds.fold(f64::INFINITY, f64::min),
            Aggregation::Mean => {
                let v: Vec<f64> = ds.collect();
                mean(&v)
            }
        }
    }

    fn tile_membership(&self, idx: usize) -> f64 {
        let (ell, ell_m) = (self.model.ell, self.model.ell_m);
        let start = self.position - ell_m;
        let p = &self.model.patterns[idx];
        let eta = self.model.eta_for(p);
        let ms: Vec<f64> = (0..ell_m / ell)
            .map(|c| membership_from_distance(self.dist(idx, start + c * ell), p.tau, eta))
            .collect();
        mean(&ms)
    }

    fn complete_tile(&mut self) {
        let w_tiles = self.model.window_tiles();
        for i in 0..self.model.patterns.len() {
            let m = self.tile_membership(i);
            Self::push_bounded(&mut self.history[i], m, w_tiles);
        }
        self.update_active_set();
        if self.config.admit
            && self.model.patterns.iter().all(|p| !p.active)
            && self.position >= self.retry_at
            && self.admit_new_pattern().is_none()
        {
            self.retry_at = self.position + self.config.cooldown.unwrap_or(self.model.ell_m);
        }
    }

    /// Recompute presence from the membership histories. The first call only
    /// initialises the flags; later calls log and return the changes.
    pub fn update_active_set(&mut self) -> (Vec<usize>, Vec<usize>) {
        let (mut on, mut off) = (Vec::new(), Vec::new());
        let at = self.position.saturating_sub(1);
        for (i, p) in self.model.patterns.iter_mut().enumerate() {
            let h = &self.history[i];
            if h.is_empty() {
                continue;
            }
            let avg = h.iter().sum::<f64>() / h.len() as f64;
            let now = avg >= p.nu;
            if now != p.active && self.evaluated {
                let kind = if now {
                    on.push(p.id);
                    DriftKind::Activated
                } else {
                    off.push(p.id);
                    DriftKind::Deactivated
                };
                self.events.push(DriftEvent {
                    at,
                    kind,
                    pattern_id: p.id,
                });
            }
            p.active = now;
        }
        self.evaluated = true;
        (on, off)
    }

    /// Recent complete tiles, oldest first, at most one currency window.
    fn window_tiles(&self) -> Vec<Subsequence> {
        let ell_m = self.model.ell_m;
        let avail = (self.buffer.len() / ell_m).min(self.position / ell_m);
        let n = avail.min(self.model.window_tiles());
        let b = self.buffer.len();
        let parent: std::sync::Arc<str> = std::sync::Arc::from("window");
        (0..n)
            .map(|k| {
                let end = b - (n - 1 - k) * ell_m;
                Subsequence {
                    start: self.position - (n - k) * ell_m,
                    values: self.buffer.range(end - ell_m..end).copied().collect(),
                    parent: parent.clone(),
                }
            })
            .collect()
    }

    /// Try to learn a new pattern from the current window.
    pub fn admit_new_pattern(&mut self) -> Option<NormalPattern> {
        let tiles = self.window_tiles();
        if tiles.len() < 2 {
            return None;
        }
        let born = self.position - 1;
        let fit = fit_tiles(&tiles, &self.model.config(), |_| born, 0).ok()?;
        let cand = fit
            .model
            .patterns
            .into_iter()
            .reduce(|a, b| if b.nu > a.nu { b } else { a })?;
        let (ell, kind) = (self.model.ell, self.model.distance_kind);
        let dissimilar = self.model.patterns.iter().all(|p| {
            tile_distance(&cand.centroid, &p.centroid, ell, kind).is_ok_and(|d| d > p.tau)
        });
        let min_nu = self
            .model
            .patterns
            .iter()
            .map(|p| p.nu)
            .fold(f64::INFINITY, f64::min);
        if !dissimilar || cand.nu <= min_nu {
            return None;
        }

        let prepared = PreparedPattern::new(&cand.centroid, ell, kind);
        let eta = self.model.eta.eta(cand.tau);
        let history: VecDeque<f64> = tiles
            .iter()
            .map(|t| {
                let ms: Vec<f64> = t
                    .values
                    .chunks_exact(ell)
                    .map(|c| membership_from_distance(prepared.distance(c), cand.tau, eta))
                    .collect();
                mean(&ms)
            })
            .collect();
        let b = self.buffer.len();
        let n_sub = (b + 1 - ell)
            .min(self.dist_cap)
            .min(self.position + 1 - ell);
        let mut dists = VecDeque::with_capacity(self.dist_cap + 1);
        for k in (0..n_sub).rev() {
            let end = b - k;
            let w: Vec<f64> = self.buffer.range(end - ell..end).copied().collect();
            dists.push_back(prepared.distance(&w));
        }

        let mut pattern = cand;
        pattern.id = self.model.next_id();
        pattern.active = true;
        self.model.patterns.push(pattern.clone());
        self.prepared.push(prepared);
        self.history.push(history);
        self.dists.push(dists);
        self.events.push(DriftEvent {
            at: born,
            kind: DriftKind::NewPattern,
            pattern_id: pattern.id,
        });
        self.update_active_set();
        Some(pattern)
    }

    /// Score the trailing points whose covering subsequences are all seen.
    pub fn finish(&mut self) -> Vec<ScoreRecord> {
        let mut out = Vec::new();
        let Some(q) = self.last_q else {
            return out;
        };
        let last = self.position - self.model.ell;
        for j in self.scores.len()..self.position {
            let s = self.aggregate(q, j, last);
            self.scores.push(s);
            let id = self.model.patterns[q].id;
            self.score_patterns.push(id);
            out.push((j, s, id));
        }
        out
    }

    pub fn into_scores(mut self) -> ScoreSeries {
        self.finish();
        ScoreSeries {
            scores: self.scores,
            patterns: self.score_patterns,
            events: self.events,
        }
    }
}

/// Distance from `s` to the nearest active pattern, or to the nearest
/// pattern overall when none is active.
pub fn anomaly_score(state: &DetectorState, s: &[f64]) -> Result<f64> {
    let model = state.model();
    if model.patterns.is_empty() {
        return Err(AndriError::NoPatterns);
    }
    let active: Vec<&NormalPattern> = model.patterns.iter().filter(|p| p.active).collect();
    let pool: Vec<&NormalPattern> = if active.is_empty() {
        model.patterns.iter().collect()
    } else {
        active
    };
    let mut best = f64::INFINITY;
    for p in pool {
        best = best.min(crate::series::pattern_distance(
            s,
            &p.centroid,
            model.distance_kind,
        )?);
    }
    Ok(best)
}

/// Fold [`DetectorState::step`] over `series` starting from `model`.
pub fn detect_online(
    series: &[f64],
    model: &NormalModel,
    config: &DetectorConfig,
) -> Result<ScoreSeries> {
    let mut state = DetectorState::new(model.clone(), config.clone())?;
    for &x in series {
        state.step(x)?;
    }
    Ok(state.into_scores())
}

/// Train on the whole series, then score each point against the patterns
/// present around it in time: those with a training tile within one
/// currency window, or the pattern with the closest tile when there are none.
pub fn detect_offline(
    series: &TimeSeries,
    model_config: &ModelConfig,
    config: &DetectorConfig,
) -> Result<ScoreSeries> {
    let training = train(series, model_config)?;
    let model = &training.model;
    let (ell, ell_m) = (model.ell, model.ell_m);
    let n_tiles = series.len() / ell_m;
    let w_tiles = model.window_tiles();

    let mut nearest = vec![(usize::MAX, 0usize); n_tiles];
    let mut present: Vec<Vec<usize>> = vec![Vec::new(); n_tiles];
    for (pi, c) in training.pattern_clusters.iter().enumerate() {
        for (t, (near, here)) in nearest.iter_mut().zip(present.iter_mut()).enumerate() {
            let g = c
                .members
                .iter()
                .map(|&m| t.abs_diff(m))
                .min()
                .unwrap_or(usize::MAX);
            if g < near.0 {
                *near = (g, pi);
            }
            if g <= w_tiles {
                here.push(pi);
            }
        }
    }
    for (here, near) in present.iter_mut().zip(&nearest) {
        if here.is_empty() {
            here.push(near.1);
        }
    }
    let tile_of = |j: usize| (j / ell_m).min(n_tiles - 1);

    let values = series.values();
    let prepared: Vec<PreparedPattern> = model
        .patterns
        .iter()
        .map(|p| PreparedPattern::new(&p.centroid, ell, model.distance_kind))
        .collect();
    let n_sub = values.len() + 1 - ell;
    let all: Vec<Vec<f64>> = prepared
        .iter()
        .enumerate()
        .map(|(q, p)| {
            if present.iter().any(|h| h.contains(&q)) {
                values.windows(ell).map(|w| p.distance(w)).collect()
            } else {
                Vec::new()
            }
        })
        .collect();

    let mut out = ScoreSeries::default();
    for j in 0..values.len() {
        let m = j.min(n_sub - 1);
        let lo = (j + 1).saturating_sub(ell);
        let agg = |q: usize| {
            let ds = &all[q][lo..=m];
            match config.aggregation {
                Aggregation::Min => ds.iter().copied().fold(f64::INFINITY, f64::min),
                Aggregation::Mean => mean(ds),
            }
        };
        let (score, q) = present[tile_of(j)]
            .iter()
            .map(|&q| (agg(q), q))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("every tile has a pattern");
        out.scores.push(score);
        out.patterns.push(model.patterns[q].id);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ahc::AhcConfig;
    use crate::model::EtaMode;
    use crate::series::DistanceKind;

    fn pattern(id: usize, centroid: Vec<f64>, tau: f64, nu: f64) -> NormalPattern {
        NormalPattern {
            id,
            centroid,
            tau,
            nu,
            active: true,
            born_at: 0,
        }
    }

    fn model(patterns: Vec<NormalPattern>) -> NormalModel {
        NormalModel {
            ell: 2,
            ell_m: 4,
            w: 12,
            w_max: 100,
            distance_kind: DistanceKind::ZeroMean,
            eta: EtaMode::Auto,
            ahc: AhcConfig::default(),
            patterns,
        }
    }

    #[test]
    fn nearest_active_pattern_score() {
        let m = model(vec![
            pattern(0, vec![0.0, 2.5, 0.0, 2.5], 0.1, 0.5),
            pattern(1, vec![0.0, 0.7, 0.0, 0.7], 0.1, 0.5),
            pattern(2, vec![0.0, 4.1, 0.0, 4.1], 0.1, 0.5),
        ]);
        let state = DetectorState::new(m, DetectorConfig::default()).unwrap();
        // distances of [0,0] to the three patterns: 2.5/sqrt2, 0.7/sqrt2, 4.1/sqrt2
        let s = anomaly_score(&state, &[0.0, 0.0]).unwrap();
        assert!((s - 0.7 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn presence_threshold_is_inclusive() {
        let m = model(vec![pattern(0, vec![0.0, 1.0, 0.0, 1.0], 0.0, 0.6)]);
        let mut st = DetectorState::new(m, DetectorConfig::default()).unwrap();
        st.evaluated = true;
        st.history[0] = VecDeque::from(vec![1.0, 0.2]);
        assert_eq!(st.update_active_set(), (vec![], vec![]));
        assert!(st.model.patterns[0].active);
        st.model.patterns[0].nu = 0.5;
        st.history[0] = VecDeque::from(vec![1.0, 0.2, 0.2]);
        assert_eq!(st.update_active_set(), (vec![], vec![0]));
        assert!(!st.model.patterns[0].active);
    }

    #[test]
    fn short_stream_gives_no_scores() {
        let m = model(vec![pattern(0, vec![0.0, 1.0, 0.0, 1.0], 0.0, 0.5)]);
        let s = detect_online(&[1.0], &m, &DetectorConfig::default()).unwrap();
        assert!(s.is_empty());
        assert!(s.events.is_empty());
    }

    #[test]
    fn repeated_centroid_scores_zero() {
        let m = model(vec![pattern(0, vec![0.0, 1.0, 0.0, 1.0], 0.0, 1.0)]);
        let stream: Vec<f64> = (0..40).map(|i| (i % 2) as f64).collect();
        let s = detect_online(&stream, &m, &DetectorConfig::default()).unwrap();
        assert_eq!(s.len(), 40);
        assert!(s.scores.iter().all(|&v| v == 0.0));
        assert!(s.events.is_empty());
    }

    #[test]
    fn non_finite_point_is_rejected() {
        let m = model(vec![pattern(0, vec![0.0, 1.0, 0.0, 1.0], 0.0, 1.0)]);
        let mut st = DetectorState::new(m, DetectorConfig::default()).unwrap();
        st.step(1.0).unwrap();
        assert_eq!(st.step(f64::NAN), Err(AndriError::NonFiniteInput(1)));
    }

    #[test]
    fn empty_model_is_rejected() {
        let m = model(vec![]);
        assert_eq!(
            DetectorState::new(m, DetectorConfig::default()).err(),
            Some(AndriError::NoPatterns)
        );
    }
}
