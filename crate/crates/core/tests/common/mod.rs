#![allow(dead_code)]

use andri::bench::{
    generate_base, inject_anomalies, inject_drift, BaseKind, DriftSpec, DriftType, InjectionSpec,
    Placement,
};
use andri::{extract_subsequences, DistanceKind, Subsequence, TimeSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn trace_tiles() -> Vec<Subsequence> {
    let text = include_str!("../fixtures/trace_tiles.csv");
    let values: Vec<f64> = text.lines().skip(1).map(|l| l.parse().unwrap()).collect();
    let ts = TimeSeries::new("trace", values).unwrap();
    extract_subsequences(&ts, 11, 11).unwrap()
}

pub fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-10.0..10.0)).collect()
}

pub fn subsequences(rows: &[Vec<f64>]) -> Vec<Subsequence> {
    let flat: Vec<f64> = rows.concat();
    let ts = TimeSeries::new("rows", flat).unwrap();
    extract_subsequences(&ts, rows[0].len(), rows[0].len()).unwrap()
}

/// Plain Ward agglomeration over all pairs. Returns merged member sets in
/// merge order.
pub fn brute_ward(rows: &[Vec<f64>], kind: DistanceKind) -> Vec<(Vec<usize>, Vec<usize>)> {
    let x: Vec<Vec<f64>> = rows.iter().map(|r| kind.transform(r)).collect();
    let centroid = |m: &[usize]| -> Vec<f64> {
        let mut c = vec![0.0; x[0].len()];
        for &i in m {
            for (c, v) in c.iter_mut().zip(&x[i]) {
                *c += v;
            }
        }
        c.iter().map(|v| v / m.len() as f64).collect()
    };
    let mut live: Vec<Vec<usize>> = (0..rows.len()).map(|i| vec![i]).collect();
    let mut out = Vec::new();
    while live.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..live.len() {
            for b in a + 1..live.len() {
                let (ca, cb) = (centroid(&live[a]), centroid(&live[b]));
                let (na, nb) = (live[a].len() as f64, live[b].len() as f64);
                let sq: f64 = ca.iter().zip(&cb).map(|(p, q)| (p - q) * (p - q)).sum();
                let d = na * nb / (na + nb) * sq;
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        let (_, a, b) = best.unwrap();
        let (l, r) = (live[a].clone(), live[b].clone());
        let mut m = [l.clone(), r.clone()].concat();
        m.sort_unstable();
        live.remove(b);
        live[a] = m;
        live.sort_by_key(|c| c[0]);
        out.push((l, r));
    }
    out
}

/// Count positive/negative pairs directly.
pub fn auc_oracle(scores: &[f64], labels: &[u8]) -> f64 {
    let mut twice = 0u64;
    let (mut p, mut n) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li == 1 {
            p += 1;
        } else {
            n += 1;
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj == 0 {
                twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    twice as f64 / (2 * p * n) as f64
}

pub fn base(kind: BaseKind, period: usize, n: usize, noise: f64, seed: u64) -> TimeSeries {
    generate_base(kind, period, n, noise, seed).unwrap()
}

/// Sine and sawtooth of period 50 joined by `n_drifts` drifts, then
/// injected with scaled anomalies of length 50.
pub fn two_pattern(
    seed: u64,
    n: usize,
    noise: f64,
    fraction: f64,
    kind: DriftType,
    n_drifts: usize,
    transition_fraction: f64,
) -> (TimeSeries, Vec<andri::bench::DriftInterval>) {
    let a = base(BaseKind::Sine, 50, n, noise, seed);
    let b = base(BaseKind::Sawtooth, 50, n, noise, seed + 1000);
    let spec = DriftSpec {
        kind,
        n_drifts,
        transition_fraction,
        block: 1,
    };
    let d = inject_drift(&[a, b], &spec, seed).unwrap();
    let inj = InjectionSpec {
        anomaly_fraction: fraction,
        scale_range: (1.5, 3.0),
        placement: Placement::Uniform,
        anomaly_length: 50,
        seed,
        rayleigh_scale: None,
    };
    (inject_anomalies(&d.series, &inj).unwrap(), d.intervals)
}

pub fn concat(parts: &[&TimeSeries]) -> TimeSeries {
    let v: Vec<f64> = parts
        .iter()
        .flat_map(|p| p.values().iter().copied())
        .collect();
    TimeSeries::new("concat", v).unwrap()
}
