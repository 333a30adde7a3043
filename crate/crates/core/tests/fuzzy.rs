//! Output fusion, rule generation, inference and evolution.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scefis_core::fuzzy::{
    evolve, fuse_output, generate_rules, infer, prune_rows, subtractive_clustering, zmf,
    JointNormalizer, RuleBase, RuleConfig, TrainingStore,
};

/// Z-shaped membership written from its two quadratic pieces.
fn zmf_oracle(x: f64, a: f64, b: f64) -> f64 {
    let c = (a + b) / 2.0;
    if x <= a {
        1.0
    } else if x >= b {
        0.0
    } else if x <= c {
        1.0 - 2.0 * ((x - a) / (b - a)) * ((x - a) / (b - a))
    } else {
        2.0 * ((b - x) / (b - a)) * ((b - x) / (b - a))
    }
}

fn stats(v: &[f64]) -> (f64, f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let median = if s.len() % 2 == 1 {
        s[s.len() / 2]
    } else {
        (s[s.len() / 2 - 1] + s[s.len() / 2]) / 2.0
    };
    (mean, median, std)
}

#[test]
fn fusion_laws_on_random_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (mut tight, mut wide, mut blended) = (0, 0, 0);
    for i in 0..1000 {
        let len = rng.random_range(2..=12);
        let centre: f64 = rng.random_range(20.0..230.0);
        // Alternate spreads so all three regimes are exercised.
        let spread = centre * [0.02, 0.15, 0.5, 2.0][i % 4];
        let v: Vec<f64> = (0..len).map(|_| centre + rng.random_range(-spread..spread)).collect();
        let (mean, median, std) = stats(&v);
        let f = fuse_output(&v).unwrap();
        assert!((f.mean - mean).abs() < 1e-9 && f.median == median && (f.std - std).abs() < 1e-9);
        let (lo, hi) = (mean.min(median), mean.max(median));
        assert!(f.value >= lo && f.value <= hi, "{v:?}: {} outside [{lo}, {hi}]", f.value);
        if mean > 0.0 && std <= 0.1 * mean {
            assert_eq!(f.value, f.mean);
            tight += 1;
        } else if mean > 0.0 && std >= 0.2 * mean {
            assert_eq!(f.value, f.median);
            wide += 1;
        } else {
            let m = zmf_oracle(std, 0.1 * mean.abs(), 0.2 * mean.abs());
            let want = m * mean + (1.0 - m) * median;
            assert!((f.value - want).abs() < 1e-9, "{} vs {want}", f.value);
            blended += 1;
        }
    }
    assert!(tight > 50 && wide > 50 && blended > 50, "{tight} {wide} {blended}");
}

#[test]
fn fusion_of_a_single_outlier() {
    let mut v = vec![100.0; 7];
    v.push(240.0);
    let f = fuse_output(&v).unwrap();
    assert!((f.std - 49.497).abs() < 1e-3);
    assert_eq!(f.value, 100.0);
    assert_eq!(f.threshold(), 100);
}

proptest! {
    #[test]
    fn zmf_matches_oracle(x in -10.0f64..30.0, a in 0.0f64..10.0, w in 0.01f64..10.0) {
        let got = zmf(x, a, a + w).unwrap();
        prop_assert!((got - zmf_oracle(x, a, a + w)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&got));
    }
}

fn store_from(rows: &[Vec<f64>], outputs: &[f64]) -> TrainingStore {
    let names = (0..rows[0].len()).map(|i| format!("x{i}")).collect();
    let norm = JointNormalizer::fit(rows, outputs).unwrap();
    let mut s = TrainingStore::new(names, norm).unwrap();
    for (x, &y) in rows.iter().zip(outputs) {
        s.push(x.clone(), y).unwrap();
    }
    s
}

#[test]
fn single_row_training_reproduces_its_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for dim in [1, 3, 8, 22] {
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-50.0..50.0)).collect();
        let y: f64 = rng.random_range(0.0..255.0);
        for cfg in [
            RuleConfig::default(),
            RuleConfig {
                slope_ridge: 0.0,
                ..RuleConfig::default()
            },
        ] {
            let rb = generate_rules(&store_from(std::slice::from_ref(&x), &[y]), &cfg, 1).unwrap();
            assert_eq!(rb.rule_count(), 1);
            let got = infer(&rb, &x).unwrap().value;
            assert!((got - y).abs() < 1e-9, "dim {dim}: {got} vs {y}");
        }
    }
}

#[test]
fn three_separated_points_make_three_rules() {
    let rows = vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, 10.0]];
    let outputs = [30.0, 120.0, 210.0];
    let rb = generate_rules(&store_from(&rows, &outputs), &RuleConfig::default(), 1).unwrap();
    assert_eq!(rb.rule_count(), 3);
    for (x, y) in rows.iter().zip(outputs) {
        let got = infer(&rb, x).unwrap().value;
        assert!((got - y).abs() < 1.0, "{x:?}: {got} vs {y}");
    }
}

#[test]
fn tight_group_makes_one_rule() {
    let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![5.0 + 0.01 * i as f64, 2.0]).collect();
    let mut outputs = vec![90.0; 6];
    outputs[5] = 90.5;
    // One far outlier stretches the normalized range.
    let mut rows = rows;
    rows.push(vec![100.0, 50.0]);
    outputs.push(200.0);
    let rb = generate_rules(&store_from(&rows, &outputs), &RuleConfig::default(), 1).unwrap();
    assert_eq!(rb.rule_count(), 2);
}

#[test]
fn clustering_centres_are_distinct_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let pts: Vec<Vec<f64>> = (0..60)
        .map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let c = subtractive_clustering(&pts, &RuleConfig::default());
    assert!(!c.is_empty());
    let mut sorted = c.clone();
    sorted.sort_unstable();
    sorted.dedup();
    assert_eq!(sorted.len(), c.len());
}

fn random_block(rng: &mut ChaCha8Rng, dim: usize, centre: f64) -> Vec<Vec<f64>> {
    (0..8)
        .map(|_| (0..dim).map(|_| centre + rng.random_range(-3.0..3.0)).collect())
        .collect()
}

fn assert_rules_close(a: &RuleBase, b: &RuleBase) {
    assert_eq!(a.rule_count(), b.rule_count());
    for (ra, rb) in a.rules.iter().zip(&b.rules) {
        for (u, v) in ra
            .centers
            .iter()
            .chain(&ra.widths)
            .chain(&ra.coefficients)
            .zip(rb.centers.iter().chain(&rb.widths).chain(&rb.coefficients))
        {
            assert!((u - v).abs() <= 1e-9 * (1.0 + v.abs()), "{u} vs {v}");
        }
    }
}

#[test]
fn sequential_evolution_equals_batch_regeneration() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let dim = 5;
    let blocks: Vec<Vec<Vec<f64>>> = (0..6)
        .map(|i| random_block(&mut rng, dim, 10.0 * i as f64))
        .collect();
    let targets = [40.0, 70.0, 95.0, 130.0, 160.0, 200.0];
    let all_rows: Vec<Vec<f64>> = blocks.concat();
    let norm = JointNormalizer::fit(&all_rows, &targets).unwrap();
    let names: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    let mut store = TrainingStore::new(names, norm).unwrap();
    for x in &blocks[0] {
        store.push(x.clone(), targets[0]).unwrap();
    }
    let cfg = RuleConfig::default();
    let mut rb = generate_rules(&store, &cfg, 1).unwrap();
    for (block, &t) in blocks.iter().zip(&targets).skip(1) {
        let evo = evolve(&rb, &store, block, t, 1.0).unwrap();
        assert_eq!(evo.rule_base.version, rb.version + 1);
        rb = evo.rule_base;
        store = evo.store;
    }
    let batch = generate_rules(&store, &cfg, rb.version).unwrap();
    assert_rules_close(&rb, &batch);
    assert_eq!(rb.training_rows, store.len());
}

#[test]
fn evolving_with_seen_data_changes_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let blocks: Vec<Vec<Vec<f64>>> = (0..3).map(|i| random_block(&mut rng, 4, 8.0 * i as f64)).collect();
    let targets = [60.0, 110.0, 170.0];
    let rows: Vec<Vec<f64>> = blocks.concat();
    let outs: Vec<f64> = targets.iter().flat_map(|&t| [t; 8]).collect();
    let store = store_from(&rows, &outs);
    let rb = generate_rules(&store, &RuleConfig::default(), 3).unwrap();
    for (block, &t) in blocks.iter().zip(&targets) {
        let evo = evolve(&rb, &store, block, t, 0.3).unwrap();
        assert!(evo.kept.is_empty());
        assert!(evo.rule_base.noop);
        assert_eq!(evo.store, store);
        assert_eq!(evo.rule_base.rule_count(), rb.rule_count());
        assert_eq!(evo.rule_base.rules, rb.rules);
    }
}

#[test]
fn far_inputs_fall_back_to_the_nearest_rule() {
    let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
    let rb = generate_rules(&store_from(&rows, &[10.0, 20.0, 30.0]), &RuleConfig::default(), 1).unwrap();
    let out = infer(&rb, &[1e6]).unwrap();
    assert!(out.nearest_rule_fallback);
    assert!(out.value.is_finite());
}

#[test]
fn artifacts_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let rows = vec![vec![0.0, 1.0], vec![4.0, -2.0], vec![9.0, 3.0]];
    let store = store_from(&rows, &[50.0, 90.0, 140.0]);
    let rb = generate_rules(&store, &RuleConfig::default(), 4).unwrap();
    rb.save(dir.path().join("rules.json")).unwrap();
    store.save(dir.path().join("store")).unwrap();
    assert_eq!(RuleBase::load(dir.path().join("rules.json")).unwrap(), rb);
    assert_eq!(TrainingStore::load(dir.path().join("store")).unwrap(), store);
}

proptest! {
    #[test]
    fn pruned_batches_keep_their_distance(
        raw in prop::collection::vec((prop::collection::vec(-3.0f64..3.0, 3), 0.0f64..255.0), 2..30),
        d_min in 0.1f64..2.0,
    ) {
        let rows: Vec<Vec<f64>> = raw.iter().map(|r| r.0.clone()).collect();
        let outs: Vec<f64> = raw.iter().map(|r| r.1).collect();
        let seed = store_from(&rows[..1], &outs[..1]);
        let seed = {
            // Fix the normalizer over every candidate so distances are stable.
            let mut s = TrainingStore::new(seed.input_names.clone(), JointNormalizer::fit(&rows, &outs).unwrap()).unwrap();
            s.push(rows[0].clone(), outs[0]).unwrap();
            s
        };
        let kept = prune_rows(&rows[1..], &outs[1..], &seed, d_min).unwrap();
        let mut store = seed.clone();
        for &i in &kept {
            store.push(rows[i + 1].clone(), outs[i + 1]).unwrap();
        }
        let z: Vec<Vec<f64>> = store.inputs.iter().zip(&store.outputs).map(|(x, &y)| store.normalizer.apply(x, y)).collect();
        for i in 0..z.len() {
            for j in i + 1..z.len() {
                let d: f64 = z[i].iter().zip(&z[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                prop_assert!(d >= d_min - 1e-12);
            }
        }
        // A second pass over the same candidates adds nothing.
        prop_assert!(prune_rows(&rows[1..], &outs[1..], &store, d_min).unwrap().is_empty());
    }
}
