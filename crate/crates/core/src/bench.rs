//! Synthetic benchmark harness: base signals, anomaly and drift injection,
//! and rank-based evaluation.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{detect_offline, detect_online, DetectorConfig, ScoreSeries};
use crate::error::{AndriError, Result};
use crate::model::{learn_normal_model, ModelConfig};
use crate::series::TimeSeries;

const BASE_STREAM: u64 = 1;
const INJECT_STREAM: u64 = 2;
const DRIFT_STREAM: u64 = 3;

/// A reproducible random stream for one harness component.
pub fn component_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseKind {
    Sine,
    Square,
    MixedHarmonic,
    Sawtooth,
}

impl std::str::FromStr for BaseKind {
    type Err = AndriError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine" => Ok(BaseKind::Sine),
            "square" => Ok(BaseKind::Square),
            "mixed-harmonic" => Ok(BaseKind::MixedHarmonic),
            "sawtooth" => Ok(BaseKind::Sawtooth),
            _ => Err(AndriError::BadParam(format!("unknown base signal `{s}`"))),
        }
    }
}

fn base_value(kind: BaseKind, phase: usize, period: usize) -> f64 {
    let p = phase as f64 / period as f64;
    let tau = std::f64::consts::TAU;
    match kind {
        BaseKind::Sine => (tau * p).sin(),
        BaseKind::Square => {
            if 2 * phase < period {
                1.0
            } else {
                -1.0
            }
        }
        BaseKind::MixedHarmonic => {
            (tau * p).sin() + 0.5 * (2.0 * tau * p + 0.3).sin() + 0.25 * (3.0 * tau * p).sin()
        }
        BaseKind::Sawtooth => 2.0 * p - 1.0,
    }
}

/// A periodic signal plus Gaussian noise. Noise-free outputs repeat exactly.
pub fn generate_base(
    kind: BaseKind,
    period: usize,
    n: usize,
    noise_std: f64,
    seed: u64,
) -> Result<TimeSeries> {
    if period < 4 {
        return Err(AndriError::BadParam("period must be at least 4".into()));
    }
    if n < 2 * period {
        return Err(AndriError::BadParam(format!(
            "length {n} is shorter than two periods"
        )));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(AndriError::BadParam("noise_std must be nonnegative".into()));
    }
    let mut rng = component_rng(seed, BASE_STREAM);
    let noise = Normal::new(0.0, noise_std).map_err(|e| AndriError::BadParam(e.to_string()))?;
    let values = (0..n)
        .map(|i| {
            let v = base_value(kind, i % period, period);
            if noise_std > 0.0 {
                v + noise.sample(&mut rng)
            } else {
                v
            }
        })
        .collect();
    TimeSeries::with_labels(format!("{kind:?}").to_lowercase(), values, vec![0; n])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    Uniform,
    Gaussian,
    Rayleigh,
    InverseRayleigh,
}

impl std::str::FromStr for Placement {
    type Err = AndriError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Placement::Uniform),
            "gaussian" => Ok(Placement::Gaussian),
            "rayleigh" => Ok(Placement::Rayleigh),
            "inverse-rayleigh" => Ok(Placement::InverseRayleigh),
            _ => Err(AndriError::BadParam(format!("unknown placement `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionSpec {
    pub anomaly_fraction: f64,
    pub scale_range: (f64, f64),
    pub placement: Placement,
    pub anomaly_length: usize,
    pub seed: u64,
    /// Rayleigh scale in points; `n / 4` when unset.
    #[serde(default)]
    pub rayleigh_scale: Option<f64>,
}

impl InjectionSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_range;
        if !(self.anomaly_fraction > 0.0 && self.anomaly_fraction < 0.5) {
            return Err(AndriError::BadParam(format!(
                "anomaly_fraction must lie in (0, 0.5), got {}",
                self.anomaly_fraction
            )));
        }
        if !(lo.is_finite() && hi.is_finite() && lo <= hi && (lo > 1.0 || hi < 1.0)) {
            return Err(AndriError::BadParam(format!(
                "scale_range ({lo}, {hi}) must be ordered and exclude 1"
            )));
        }
        if self.anomaly_length == 0 {
            return Err(AndriError::BadParam(
                "anomaly_length must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn rayleigh(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    let u: f64 = rng.random();
    scale * (-2.0 * (1.0 - u).ln()).sqrt()
}

/// Nearest start to `want` whose segment avoids `taken`, ties to the left.
fn nearest_free(taken: &[bool], want: usize, len: usize) -> Option<usize> {
    let last = taken.len() - len;
    let free = |s: usize| !taken[s..s + len].iter().any(|&t| t);
    for off in 0..=last {
        if want >= off && free(want - off) {
            return Some(want - off);
        }
        if want + off <= last && free(want + off) {
            return Some(want + off);
        }
        if want < off && want + off > last {
            break;
        }
    }
    None
}

/// Multiply randomly placed segments by factors drawn from `scale_range`.
/// Labels become 1 on every point whose value changed.
pub fn inject_anomalies(series: &TimeSeries, spec: &InjectionSpec) -> Result<TimeSeries> {
    spec.validate()?;
    let n = series.len();
    let len = spec.anomaly_length;
    if len > n {
        return Err(AndriError::Infeasible(format!(
            "segment of {len} does not fit {n} points"
        )));
    }
    let count = ((spec.anomaly_fraction * n as f64 / len as f64).round() as usize).max(1);
    if count * len > n {
        return Err(AndriError::Infeasible(format!(
            "{count} segments of {len} exceed {n} points"
        )));
    }
    let mut rng = component_rng(spec.seed, INJECT_STREAM);
    let last = (n - len) as f64;
    let scale = spec.rayleigh_scale.unwrap_or(n as f64 / 4.0);
    let gauss = Normal::new(last / 2.0, (last / 6.0).max(1.0)).expect("valid normal");
    let mut taken = vec![false; n];
    let mut values = series.values().to_vec();
    let mut labels = series
        .labels()
        .map(<[u8]>::to_vec)
        .unwrap_or_else(|| vec![0; n]);
    for _ in 0..count {
        let raw = match spec.placement {
            Placement::Uniform => rng.random::<f64>() * last,
            Placement::Gaussian => gauss.sample(&mut rng),
            Placement::Rayleigh => rayleigh(&mut rng, scale),
            Placement::InverseRayleigh => last - rayleigh(&mut rng, scale),
        };
        let want = raw.round().clamp(0.0, last) as usize;
        let start = nearest_free(&taken, want, len).ok_or_else(|| {
            AndriError::Infeasible(format!("no room left for a segment of {len}"))
        })?;
        let factor = rng.random_range(spec.scale_range.0..=spec.scale_range.1);
        for i in start..start + len {
            taken[i] = true;
            let v = values[i] * factor;
            if v != values[i] {
                values[i] = v;
                labels[i] = 1;
            }
        }
    }
    TimeSeries::with_labels(series.name(), values, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftType {
    Abrupt,
    Gradual,
    Recurring,
}

impl DriftType {
    pub fn as_str(self) -> &'static str {
        match self {
            DriftType::Abrupt => "abrupt",
            DriftType::Gradual => "gradual",
            DriftType::Recurring => "recurring",
        }
    }
}

impl std::str::FromStr for DriftType {
    type Err = AndriError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abrupt" => Ok(DriftType::Abrupt),
            "gradual" => Ok(DriftType::Gradual),
            "recurring" => Ok(DriftType::Recurring),
            _ => Err(AndriError::FormatError(format!("unknown drift kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    #[serde(rename = "type")]
    pub kind: DriftType,
    pub n_drifts: usize,
    #[serde(default)]
    pub transition_fraction: f64,
    /// Consecutive points that switch source together during a gradual
    /// transition.
    #[serde(default = "one_point")]
    pub block: usize,
}

fn one_point() -> usize {
    1
}

/// A `[start, end)` span in which the generating pattern changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriftInterval {
    pub start: usize,
    pub end: usize,
    pub kind: DriftType,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftedSeries {
    pub series: TimeSeries,
    pub intervals: Vec<DriftInterval>,
    /// Source index of each segment between cuts.
    pub segments: Vec<usize>,
    pub cuts: Vec<usize>,
}

/// Splice the sources together at `n_drifts` cut points. Every output point
/// is taken from the same position of one of the sources.
pub fn inject_drift(sources: &[TimeSeries], spec: &DriftSpec, seed: u64) -> Result<DriftedSeries> {
    let first = sources
        .first()
        .ok_or_else(|| AndriError::BadParam("no drift sources".into()))?;
    let n = first.len();
    if sources.iter().any(|s| s.len() != n) {
        return Err(AndriError::BadParam(
            "drift sources differ in length".into(),
        ));
    }
    if !(0.0..=0.5).contains(&spec.transition_fraction) {
        return Err(AndriError::BadParam(format!(
            "transition_fraction must lie in [0, 0.5], got {}",
            spec.transition_fraction
        )));
    }
    if spec.n_drifts == 0 {
        return Ok(DriftedSeries {
            series: first.clone(),
            intervals: Vec::new(),
            segments: vec![0],
            cuts: Vec::new(),
        });
    }
    if sources.len() < 2 {
        return Err(AndriError::BadParam(
            "drift needs at least two sources".into(),
        ));
    }
    let segs = spec.n_drifts + 1;
    let seg_len = n / segs;
    if seg_len < 4 {
        return Err(AndriError::BadParam(format!(
            "{} drifts do not fit {n} points",
            spec.n_drifts
        )));
    }
    let mut rng = component_rng(seed, DRIFT_STREAM);
    let jitter = seg_len / 4;
    let cuts: Vec<usize> = (1..segs)
        .map(|i| {
            let j = if jitter > 0 {
                rng.random_range(0..=2 * jitter) as isize - jitter as isize
            } else {
                0
            };
            (i * seg_len) as isize + j
        })
        .map(|c| c as usize)
        .collect();

    let mut segments = Vec::with_capacity(segs);
    for i in 0..segs {
        let src = match spec.kind {
            DriftType::Recurring => i % sources.len(),
            _ if i < 2 => i,
            _ => {
                let prev = segments[i - 1];
                let k = rng.random_range(0..sources.len() - 1);
                if k >= prev {
                    k + 1
                } else {
                    k
                }
            }
        };
        segments.push(src);
    }

    let width = if spec.kind == DriftType::Gradual {
        (spec.transition_fraction * seg_len as f64).round() as usize
    } else {
        0
    };
    let mut source_of = vec![0usize; n];
    let mut seg = 0;
    for (i, s) in source_of.iter_mut().enumerate() {
        while seg < cuts.len() && i >= cuts[seg] {
            seg += 1;
        }
        *s = segments[seg];
    }
    let mut intervals = Vec::with_capacity(cuts.len());
    for (c, &t) in cuts.iter().enumerate() {
        if width == 0 {
            intervals.push(DriftInterval {
                start: t,
                end: t + 1,
                kind: spec.kind,
            });
            continue;
        }
        let lo = t.saturating_sub(width / 2);
        let hi = (lo + width).min(n);
        let (old, new) = (segments[c], segments[c + 1]);
        let block = spec.block.max(1);
        let mut pick = old;
        for (i, s) in source_of.iter_mut().enumerate().take(hi).skip(lo) {
            if (i - lo) % block == 0 {
                let x = (i as f64 - t as f64) / width as f64;
                let p_new = 1.0 / (1.0 + (-8.0 * x).exp());
                pick = if rng.random::<f64>() < p_new {
                    new
                } else {
                    old
                };
            }
            *s = pick;
        }
        intervals.push(DriftInterval {
            start: lo,
            end: hi,
            kind: spec.kind,
        });
    }

    let values = source_of
        .iter()
        .enumerate()
        .map(|(i, &s)| sources[s].values()[i])
        .collect();
    let labels = source_of
        .iter()
        .enumerate()
        .map(|(i, &s)| sources[s].labels().map_or(0, |l| l[i]))
        .collect();
    Ok(DriftedSeries {
        series: TimeSeries::with_labels(format!("{}-drift", first.name()), values, labels)?,
        intervals,
        segments,
        cuts,
    })
}

/// Probability that a random positive outscores a random negative, ties
/// counted one half.
pub fn auc_roc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(AndriError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(AndriError::NonFiniteInput(i));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(AndriError::UndefinedMetric(format!(
            "need both classes, got {pos} positive and {neg} negative"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the Mann-Whitney statistic, kept in integers.
    let mut twice_u: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let (mut p, mut q) = (0u64, 0u64);
        for &k in &order[i..j] {
            if labels[k] == 1 {
                p += 1;
            } else {
                q += 1;
            }
        }
        twice_u += p * (2 * neg_below + q);
        neg_below += q;
        i = j;
    }
    Ok(twice_u as f64 / (2 * pos * neg) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFalsePositives {
    pub start: usize,
    pub end: usize,
    pub kind: DriftType,
    pub false_positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub n_positive: usize,
    pub n_negative: usize,
    /// False positives among the `n_positive` highest scores.
    pub top_k_false_positives: usize,
    pub windows: Vec<WindowFalsePositives>,
}

impl EvalReport {
    /// Share of the top-k false positives falling in drift windows.
    pub fn window_fp_share(&self) -> f64 {
        if self.top_k_false_positives == 0 {
            return 0.0;
        }
        let inside: usize = self.windows.iter().map(|w| w.false_positives).sum();
        inside as f64 / self.top_k_false_positives as f64
    }
}

/// Indices of the `k` highest scores, ties to the earlier index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

pub fn evaluate(scores: &[f64], labels: &[u8], windows: &[DriftInterval]) -> Result<EvalReport> {
    let auc = auc_roc(scores, labels)?;
    let n_positive = labels.iter().filter(|&&l| l == 1).count();
    let fps: Vec<usize> = top_k(scores, n_positive)
        .into_iter()
        .filter(|&i| labels[i] == 0)
        .collect();
    let windows = windows
        .iter()
        .map(|w| WindowFalsePositives {
            start: w.start,
            end: w.end,
            kind: w.kind,
            false_positives: fps.iter().filter(|&&i| i >= w.start && i < w.end).count(),
        })
        .collect();
    Ok(EvalReport {
        auc,
        n_positive,
        n_negative: labels.len() - n_positive,
        top_k_false_positives: fps.len(),
        windows,
    })
}

pub const EXPERIMENT_FORMAT: &str = "andri-exp/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub kind: BaseKind,
    pub period: usize,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectMode {
    #[default]
    Offline,
    Online,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub ell: usize,
    #[serde(default)]
    pub ell_m: Option<usize>,
    #[serde(default)]
    pub w_max: Option<usize>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub r_min: Option<f64>,
    #[serde(default)]
    pub mode: DetectMode,
    /// Fraction of the series used for training in online mode.
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

fn default_train_fraction() -> f64 {
    0.2
}

impl DetectorSpec {
    pub fn model_config(&self) -> ModelConfig {
        let mut c = ModelConfig::new(self.ell);
        if let Some(v) = self.ell_m {
            c.ell_m = v;
        }
        if let Some(v) = self.w_max {
            c.w_max = v;
        }
        if let Some(v) = self.k {
            c.ahc.k = v;
        }
        if let Some(v) = self.r_min {
            c.ahc.r_min = v;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub anomaly_fraction: Option<Vec<f64>>,
    pub n_drifts: Option<Vec<usize>>,
    pub transition_fraction: Option<Vec<f64>>,
    pub seed: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    #[serde(default)]
    pub name: Option<String>,
    pub seed: u64,
    pub length: usize,
    pub generators: Vec<GeneratorSpec>,
    #[serde(default)]
    pub drift: Option<DriftSpec>,
    pub injection: InjectionSpec,
    pub detector: DetectorSpec,
    #[serde(default)]
    pub sweep: Option<Sweep>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let m: Manifest =
            toml::from_str(text).map_err(|e| AndriError::ManifestError(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != EXPERIMENT_FORMAT {
            return Err(AndriError::ManifestError(format!(
                "unsupported manifest format `{}`",
                self.format
            )));
        }
        if self.generators.is_empty() {
            return Err(AndriError::ManifestError("no generators".into()));
        }
        if let Some(s) = &self.sweep {
            let lens = [
                s.anomaly_fraction.as_ref().map(Vec::len),
                s.n_drifts.as_ref().map(Vec::len),
                s.transition_fraction.as_ref().map(Vec::len),
                s.seed.as_ref().map(Vec::len),
            ];
            if lens.iter().all(Option::is_none) || lens.contains(&Some(0)) {
                return Err(AndriError::ManifestError("sweep list is empty".into()));
            }
        }
        Ok(())
    }

    /// Cartesian product of the sweep axes, in axis order.
    pub fn points(&self) -> Vec<SweepPoint> {
        let base = SweepPoint {
            anomaly_fraction: self.injection.anomaly_fraction,
            n_drifts: self.drift.as_ref().map_or(0, |d| d.n_drifts),
            transition_fraction: self.drift.as_ref().map_or(0.0, |d| d.transition_fraction),
            seed: self.seed,
        };
        let mut pts = vec![base];
        let Some(s) = &self.sweep else {
            return pts;
        };
        fn expand<T: Copy>(
            pts: Vec<SweepPoint>,
            axis: &Option<Vec<T>>,
            set: impl Fn(&mut SweepPoint, T),
        ) -> Vec<SweepPoint> {
            let Some(vals) = axis else {
                return pts;
            };
            let set = &set;
            pts.into_iter()
                .flat_map(|p| {
                    vals.iter().map(move |&v| {
                        let mut q = p.clone();
                        set(&mut q, v);
                        q
                    })
                })
                .collect()
        }
        pts = expand(pts, &s.anomaly_fraction, |p, v| p.anomaly_fraction = v);
        pts = expand(pts, &s.n_drifts, |p, v| p.n_drifts = v);
        pts = expand(pts, &s.transition_fraction, |p, v| {
            p.transition_fraction = v
        });
        pts = expand(pts, &s.seed, |p, v| p.seed = v);
        pts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub anomaly_fraction: f64,
    pub n_drifts: usize,
    pub transition_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointOutcome {
    pub point: SweepPoint,
    pub series: TimeSeries,
    pub intervals: Vec<DriftInterval>,
    pub scores: ScoreSeries,
    pub report: EvalReport,
}

/// Generate, inject, detect and evaluate one sweep point.
pub fn run_point(manifest: &Manifest, point: &SweepPoint) -> Result<PointOutcome> {
    let n = manifest.length;
    let sources = manifest
        .generators
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let s = generate_base(
                g.kind,
                g.period,
                n,
                g.noise_std,
                point.seed.wrapping_add(i as u64 * 0x9E37_79B9),
            )?;
            let v: Vec<f64> = s.values().iter().map(|x| x * g.amplitude).collect();
            TimeSeries::with_labels(s.name(), v, vec![0; n])
        })
        .collect::<Result<Vec<_>>>()?;
    let drifted = match &manifest.drift {
        Some(d) => inject_drift(
            &sources,
            &DriftSpec {
                kind: d.kind,
                n_drifts: point.n_drifts,
                transition_fraction: point.transition_fraction,
                block: d.block,
            },
            point.seed,
        )?,
        None => inject_drift(
            &sources[..1],
            &DriftSpec {
                kind: DriftType::Abrupt,
                n_drifts: 0,
                transition_fraction: 0.0,
                block: 1,
            },
            point.seed,
        )?,
    };
    let spec = InjectionSpec {
        anomaly_fraction: point.anomaly_fraction,
        seed: point.seed.wrapping_add(manifest.injection.seed),
        ..manifest.injection.clone()
    };
    let series = inject_anomalies(&drifted.series, &spec)?;
    let mconf = manifest.detector.model_config();
    let det = DetectorConfig::default();
    let scores = match manifest.detector.mode {
        DetectMode::Offline => detect_offline(&series, &mconf, &det)?,
        DetectMode::Online => {
            let cut = ((manifest.detector.train_fraction * n as f64) as usize).clamp(1, n);
            let prefix = series.slice(0..cut)?;
            let model = learn_normal_model(&prefix, &mconf)?;
            detect_online(series.values(), &model, &det)?
        }
    };
    let report = evaluate(
        &scores.scores,
        series.labels().expect("injected series is labeled"),
        &drifted.intervals,
    )?;
    Ok(PointOutcome {
        point: point.clone(),
        series,
        intervals: drifted.intervals,
        scores,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub format: String,
    pub name: Option<String>,
    pub points: Vec<(SweepPoint, EvalReport)>,
}

/// Run every sweep point (in parallel) and write artifacts under `out_dir`.
pub fn run_experiment(manifest: &Manifest, out_dir: &Path) -> Result<ExperimentSummary> {
    manifest.validate()?;
    let points = manifest.points();
    let outcomes: Vec<PointOutcome> = points
        .par_iter()
        .map(|p| run_point(manifest, p))
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out_dir)?;
    for (i, o) in outcomes.iter().enumerate() {
        let dir = out_dir.join(format!("point_{i:03}"));
        std::fs::create_dir_all(&dir)?;
        let mut f = std::fs::File::create(dir.join("series.csv"))?;
        crate::io::write_series(&mut f, &o.series)?;
        let mut f = std::fs::File::create(dir.join("drift.csv"))?;
        crate::io::write_drift(&mut f, &o.intervals)?;
        let mut f = std::fs::File::create(dir.join("scores.csv"))?;
        crate::io::write_scores(&mut f, &o.scores)?;
        let mut f = std::fs::File::create(dir.join("events.csv"))?;
        crate::io::write_events(&mut f, &o.scores.events)?;
        std::fs::write(dir.join("report.json"), crate::io::report_json(&o.report))?;
    }
    let summary = ExperimentSummary {
        format: EXPERIMENT_FORMAT.into(),
        name: manifest.name.clone(),
        points: outcomes.into_iter().map(|o| (o.point, o.report)).collect(),
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(out_dir.join("summary.json"), text + "\n")?;
    Ok(summary)
}
