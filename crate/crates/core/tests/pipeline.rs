mod common;

use andri::ahc::{build_dendrogram, revise_clusters, LevelKind};
use andri::bench::{inject_anomalies, BaseKind, DriftType, InjectionSpec, Placement};
use andri::detect::DriftKind;
use andri::model::{deserialize_model, membership_from_distance, train};
use andri::{
    detect_offline, detect_online, AhcConfig, DetectorConfig, DetectorState, DistanceKind,
    ModelConfig,
};
use common::{base, concat, random_vec, rng, subsequences, two_pattern};

#[test]
fn every_revert_is_triggered_by_a_cheaper_merge() {
    let mut r = rng(11);
    let mut reverts = 0;
    for _ in 0..300 {
        let rows: Vec<Vec<f64>> = (0..12).map(|_| random_vec(&mut r, 5)).collect();
        let data = subsequences(&rows);
        let d = build_dendrogram(&data, &AhcConfig::default(), DistanceKind::ZeroMean).unwrap();
        for lv in d.levels().iter().filter(|l| l.kind == LevelKind::Revert) {
            reverts += 1;
            assert!(lv.trigger.unwrap() < lv.linkage);
            // The undone merge is the one recorded at `undid`.
            let undone = &d.levels()[lv.undid.unwrap() - 1];
            assert_eq!(undone.kind, LevelKind::Merge);
            assert_eq!(undone.node, lv.node);
        }
        let plain = AhcConfig {
            reversion: false,
            ..AhcConfig::default()
        };
        let d = build_dendrogram(&data, &plain, DistanceKind::ZeroMean).unwrap();
        assert!(d.levels().iter().all(|l| l.kind == LevelKind::Merge));
        assert_eq!(d.levels().len(), rows.len() - 1);
    }
    assert!(reverts > 0);
}

#[test]
fn revising_a_plain_dendrogram_inserts_a_revert() {
    let mut r = rng(5);
    let plain = AhcConfig {
        reversion: false,
        ..AhcConfig::default()
    };
    let mut revised = 0;
    for _ in 0..200 {
        let rows: Vec<Vec<f64>> = (0..10).map(|_| random_vec(&mut r, 4)).collect();
        let d = build_dendrogram(&subsequences(&rows), &plain, DistanceKind::ZeroMean).unwrap();
        let lv = d.levels();
        let Some(at) = (1..lv.len()).find(|&i| lv[i].linkage < lv[i - 1].linkage) else {
            assert!(revise_clusters(&d, 1).is_err());
            continue;
        };
        let out = revise_clusters(&d, at + 1).unwrap();
        assert_eq!(&out.levels()[..at], &lv[..at]);
        assert_eq!(out.levels()[at].kind, LevelKind::Revert);
        assert_eq!(out.roots().len(), 1);
        assert_eq!(out.members(out.roots()[0]).len(), rows.len());
        revised += 1;
    }
    assert!(revised > 0);
}

/// Exact square waves with a few scaled periods. A reach of 3 lets the
/// clean stretches on either side of an anomaly join one pattern.
#[test]
fn online_matches_offline_on_one_pattern() {
    let mut checked = 0;
    for seed in 0..8 {
        let s = base(BaseKind::Square, 40, 4000, 0.0, seed);
        let spec = InjectionSpec {
            anomaly_fraction: 0.02,
            scale_range: (1.5, 3.0),
            placement: Placement::Uniform,
            anomaly_length: 40,
            seed,
            rayleigh_scale: None,
        };
        let s = inject_anomalies(&s, &spec).unwrap();
        let mut config = ModelConfig::new(20);
        config.ahc.k = 3;
        let training = train(&s, &config).unwrap();
        if training.model.patterns.len() != 1 {
            continue;
        }
        let det = DetectorConfig::default();
        let off = detect_offline(&s, &config, &det).unwrap();
        let on = detect_online(s.values(), &training.model, &det).unwrap();
        assert_eq!(on.scores, off.scores, "seed {seed}");
        assert!(off.scores.iter().any(|&v| v > 1.0));
        checked += 1;
    }
    assert!(checked >= 5, "only {checked} single-pattern seeds");
}

#[test]
fn active_flags_follow_window_averages() {
    let (series, _) = two_pattern(4, 12_000, 0.05, 0.02, DriftType::Recurring, 3, 0.0);
    let train_part = series.slice(0..6000).unwrap();
    let model = andri::learn_normal_model(&train_part, &ModelConfig::new(25)).unwrap();
    let mut state = DetectorState::new(model, DetectorConfig::default()).unwrap();
    let ell_m = state.model().ell_m;
    let w_tiles = state.model().window_tiles();
    let mut checked = 0;
    for (t, &x) in series.values().iter().enumerate() {
        state.step(x).unwrap();
        if (t + 1) % ell_m != 0 {
            continue;
        }
        let model = state.model().clone();
        for (i, p) in model.patterns.iter().enumerate() {
            let h = state.membership_history(i);
            assert!(h.len() <= w_tiles);
            // Recompute the newest tile membership from scratch.
            let tile = &series.values()[t + 1 - ell_m..=t];
            let expect = andri::model::tile_membership(tile, p, &model).unwrap();
            assert!((h[h.len() - 1] - expect).abs() < 1e-9);
            let avg = h.iter().sum::<f64>() / h.len() as f64;
            assert_eq!(p.active, avg >= p.nu, "pattern {} at {t}", p.id);
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn lifecycle_events_alternate_per_pattern() {
    for seed in 0..6 {
        let a = base(BaseKind::Sine, 25, 2000, 0.02, seed);
        let b = base(BaseKind::Square, 25, 2000, 0.02, seed + 50);
        let model = andri::learn_normal_model(&concat(&[&a, &b]), &ModelConfig::new(25)).unwrap();
        let parts: Vec<_> = (0..6)
            .map(|i| {
                let kind = if i % 2 == 0 {
                    BaseKind::Sine
                } else {
                    BaseKind::Square
                };
                base(kind, 25, 1500, 0.02, seed * 10 + i)
            })
            .collect();
        let refs: Vec<_> = parts.iter().collect();
        let out =
            detect_online(concat(&refs).values(), &model, &DetectorConfig::default()).unwrap();
        assert!(!out.events.is_empty());
        for p in &model.patterns {
            let kinds: Vec<DriftKind> = out
                .events
                .iter()
                .filter(|e| e.pattern_id == p.id && e.kind != DriftKind::NewPattern)
                .map(|e| e.kind)
                .collect();
            assert!(
                kinds.windows(2).all(|w| w[0] != w[1]),
                "seed {seed} pattern {}: {kinds:?}",
                p.id
            );
        }
        assert!(out.events.windows(2).all(|w| w[0].at <= w[1].at));
    }
}

#[test]
fn hand_written_model_loads() {
    let doc = r#"{
  "format": "andri-model/1",
  "ell": 2,
  "ell_m": 4,
  "w": 8,
  "w_max": 40,
  "distance_kind": "zero_mean",
  "eta": 0.5,
  "patterns": [
    {"id": 3, "centroid": [0, 1, 0, -1], "tau": 0.25, "nu": 0.6, "active": true, "born_at": 0}
  ]
}"#;
    let m = deserialize_model(doc.as_bytes()).unwrap();
    assert_eq!(m.w, 8);
    assert_eq!(m.window_tiles(), 2);
    let p = &m.patterns[0];
    assert_eq!((p.id, p.tau, p.nu), (3, 0.25, 0.6));
    assert_eq!(m.eta_for(p), 0.5);
    assert_eq!(
        membership_from_distance(0.25 + 2f64.ln() / 0.5, p.tau, 0.5),
        0.5
    );
    assert_eq!(m.ahc, AhcConfig::default());

    let truncated = &doc[..doc.len() - 20];
    assert!(deserialize_model(truncated.as_bytes()).is_err());
    let bad = doc.replace("[0, 1, 0, -1]", "[0, 1, 0]");
    assert!(deserialize_model(bad.as_bytes()).is_err());
}

#[test]
fn scores_are_causal_and_full_length() {
    let (series, _) = two_pattern(9, 6000, 0.05, 0.05, DriftType::Abrupt, 2, 0.0);
    let model =
        andri::learn_normal_model(&series.slice(0..2000).unwrap(), &ModelConfig::new(25)).unwrap();
    let mut state = DetectorState::new(model.clone(), DetectorConfig::default()).unwrap();
    for (t, &x) in series.values().iter().enumerate() {
        let out = state.step(x).unwrap();
        match out.score {
            Some((j, _, _)) => assert_eq!(j + model.ell, t + 1),
            None => assert!(t + 1 < model.ell),
        }
    }
    let s = state.into_scores();
    assert_eq!(s.len(), series.len());
    assert!(s.scores.iter().all(|v| v.is_finite() && *v >= 0.0));
}
