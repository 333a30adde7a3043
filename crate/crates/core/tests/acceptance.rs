//! Acceptance suite. Runs every criterion on the committed synthetic
//! dataset, prints one PASS/FAIL line each, and exits non-zero if any fail.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scefis_core::fuzzy::{evolve, fuse_output, generate_rules, infer, JointNormalizer, RuleBase, TrainingStore};
use scefis_core::imaging::{apply_threshold, histogram, jaccard, GlobalMethod};
use scefis_core::pipeline::{
    cross_validate, image_block, offline_optimal, run_online, self_configure, synth_dataset, train,
    CrossValidation, Dataset, ProjectConfig, ReplayFeedback, SelfConfiguration, SynthConfig,
    ThresholdTable, MAA, PARENT, SC_EFIS,
};
use scefis_core::selection::{
    ensemble_vote, select_features, SelectionMethod, SelectionResult, StackedFeatureMatrix,
};

const HISTOGRAMS: u64 = 50;
const THRESHOLD_LIMIT: Duration = Duration::from_secs(10);
const MAA_LIMIT: Duration = Duration::from_secs(60);
const CASCADE_LIMIT: Duration = Duration::from_secs(5 * 60);
const END_TO_END_LIMIT: Duration = Duration::from_secs(10 * 60);
const F3_ROWS: usize = 8 * 35;
const F3_COLS: usize = 108;
const VOTE_CONFIGS: usize = 200;
const FUSION_VECTORS: usize = 1000;
const FIT_TOL: f64 = 1e-9;
const MIN_MARGIN: f64 = 0.05;
const MIN_RISE_DROP: usize = 8;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    check(
        elapsed < limit,
        format!("{detail}; {:.2}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs()),
    )
}

fn threshold_oracles() -> Outcome {
    let start = Instant::now();
    common::check_threshold_oracles(0..HISTOGRAMS)?;
    within(
        start.elapsed(),
        THRESHOLD_LIMIT,
        format!("{HISTOGRAMS} histograms x 4 methods match brute force"),
    )
}

fn maa_dominance(ds: &Dataset, table: &ThresholdTable, cfg: &ProjectConfig, maa_time: Duration) -> Outcome {
    let start = Instant::now();
    let mut worst = f64::INFINITY;
    for item in ds.iter() {
        let gold = item.gold.as_ref().ok_or("image without gold mask")?;
        let maa = table.get(&item.id).map_err(|e| e.to_string())?.j_max;
        let hist = histogram(&item.image);
        for m in GlobalMethod::ALL {
            let t = m.apply(&hist).threshold;
            let j = jaccard(&apply_threshold(&item.image, t, cfg.orientation), gold)
                .map_err(|e| e.to_string())?
                .jaccard;
            if maa < j {
                return Err(format!("{}: MAA {maa} < {} {j}", item.id, m.name()));
            }
            worst = worst.min(maa - j);
        }
    }
    within(
        maa_time + start.elapsed(),
        MAA_LIMIT,
        format!("{} images, smallest margin {worst:.4}", ds.len()),
    )
}

/// Pearson r from raw sums, independent of the library's implementation.
fn r_from_sums(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    let sab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let saa: f64 = a.iter().map(|x| x * x).sum();
    let sbb: f64 = b.iter().map(|x| x * x).sum();
    (n * sab - sa * sb) / ((n * saa - sa * sa).sqrt() * (n * sbb - sb * sb).sqrt())
}

/// Largest absolute correlation over all column pairs.
fn max_pair_correlation(f: &StackedFeatureMatrix) -> f64 {
    let cols: Vec<Vec<f64>> = (0..f.ncols()).map(|c| f.features().column(c)).collect();
    let mut worst: f64 = 0.0;
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            worst = worst.max(r_from_sums(&cols[i], &cols[j]).abs());
        }
    }
    worst
}

fn feature_cascade(sc: &SelfConfiguration, cfg: &ProjectConfig, sc_time: Duration) -> Outcome {
    let (rows, cols) = (sc.f3.nrows(), sc.f3.ncols());
    if (rows, cols) != (F3_ROWS, F3_COLS) {
        return Err(format!("F3 is {rows}x{cols}, want {F3_ROWS}x{F3_COLS}"));
    }
    let w = &sc.report.widths;
    let widths = [w.n_t, w.n_t1, w.n_t2, w.n_t3, w.n_l];
    if !widths.windows(2).all(|p| p[0] >= p[1]) {
        return Err(format!("widths not monotone: {widths:?}"));
    }
    let out = select_features(&sc.f3, &cfg.selection).map_err(|e| e.to_string())?;
    if out.f_star != sc.f_star {
        return Err("re-running the cascade changed F*".into());
    }
    let (dup, sim) = (cfg.selection.duplicate_threshold, cfg.selection.similarity_threshold);
    let r4 = max_pair_correlation(&out.f4);
    let rs = max_pair_correlation(&sc.f_star);
    if r4 > dup || rs > sim {
        return Err(format!("kept pair above threshold: F4 max |r| {r4} (> {dup}?), F* max |r| {rs} (> {sim}?)"));
    }
    within(
        sc_time,
        CASCADE_LIMIT,
        format!("F3 {rows}x{cols}, widths {widths:?}, max |r| F4 {r4:.4} F* {rs:.4}"),
    )
}

const ALL_SIX: [SelectionMethod; 6] = [
    SelectionMethod::Correlation,
    SelectionMethod::Greedy,
    SelectionMethod::Laplacian,
    SelectionMethod::FeatureSimilarity,
    SelectionMethod::Spectral,
    SelectionMethod::MultiCluster,
];

fn vote_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut fallbacks = 0;
    for case in 0..VOTE_CONFIGS {
        let width = rng.random_range(1..=20);
        let picks: Vec<BTreeSet<usize>> = (0..6)
            .map(|_| {
                let k = rng.random_range(0..=width);
                (0..k).map(|_| rng.random_range(0..width)).collect()
            })
            .collect();
        let results: Vec<SelectionResult> = ALL_SIX
            .iter()
            .zip(&picks)
            .map(|(&method, s)| SelectionResult {
                method,
                indices: s.iter().copied().collect(),
            })
            .collect();
        let out = ensemble_vote(&results, width).map_err(|e| e.to_string())?;
        let want: Vec<usize> = (0..width)
            .filter(|i| picks.iter().filter(|s| s.contains(i)).count() >= 3)
            .collect();
        let expected = if want.is_empty() {
            fallbacks += 1;
            picks[0].iter().copied().collect()
        } else {
            want.clone()
        };
        if out.quorum != 3 || out.indices != expected || out.fell_back_to_correlation != want.is_empty() {
            return Err(format!("case {case}: got {:?} (quorum {}), want {expected:?}", out.indices, out.quorum));
        }
    }
    check(
        true,
        format!("{VOTE_CONFIGS} configurations, quorum 3 of 6, {fallbacks} fallbacks"),
    )
}

fn mean_median_std(v: &[f64]) -> (f64, f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    let median = if s.len() % 2 == 1 { s[m] } else { (s[m - 1] + s[m]) / 2.0 };
    (mean, median, std)
}

fn fusion_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut regimes = [0usize; 3];
    for i in 0..FUSION_VECTORS {
        let len = rng.random_range(2..=16);
        let centre: f64 = rng.random_range(10.0..245.0);
        let spread = centre * [0.03, 0.15, 0.4, 1.5][i % 4];
        let v: Vec<f64> = (0..len).map(|_| centre + rng.random_range(-spread..spread)).collect();
        let (mean, median, std) = mean_median_std(&v);
        let f = fuse_output(&v).map_err(|e| e.to_string())?;
        let (lo, hi) = (mean.min(median), mean.max(median));
        if f.value < lo || f.value > hi {
            return Err(format!("{v:?}: {} outside [{lo}, {hi}]", f.value));
        }
        if std <= 0.10 * mean {
            regimes[0] += 1;
            if f.value != f.mean {
                return Err(format!("{v:?}: tight spread gave {} not the mean {}", f.value, f.mean));
            }
        } else if std >= 0.20 * mean {
            regimes[2] += 1;
            if f.value != f.median {
                return Err(format!("{v:?}: wide spread gave {} not the median {}", f.value, f.median));
            }
        } else {
            regimes[1] += 1;
        }
    }
    check(
        regimes.iter().all(|&c| c > 0),
        format!("{FUSION_VECTORS} vectors; mean/blend/median regimes {regimes:?}"),
    )
}

fn rules_differ(a: &RuleBase, b: &RuleBase) -> Option<f64> {
    if a.rule_count() != b.rule_count() {
        return Some(f64::INFINITY);
    }
    let mut worst: f64 = 0.0;
    for (ra, rb) in a.rules.iter().zip(&b.rules) {
        let pa = ra.centers.iter().chain(&ra.widths).chain(&ra.coefficients);
        let pb = rb.centers.iter().chain(&rb.widths).chain(&rb.coefficients);
        for (u, v) in pa.zip(pb) {
            worst = worst.max((u - v).abs());
        }
    }
    (worst > FIT_TOL).then_some(worst)
}

fn ts_fidelity(
    ds: &Dataset,
    sc: &SelfConfiguration,
    cv: &CrossValidation,
    table: &ThresholdTable,
    cfg: &ProjectConfig,
) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let mut worst_fit: f64 = 0.0;
    for dim in [1, 2, 5, sc.f_star.ncols(), 40] {
        for _ in 0..10 {
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1e3..1e3)).collect();
            let y: f64 = rng.random_range(0.0..255.0);
            let names = (0..dim).map(|i| format!("x{i}")).collect();
            let norm = JointNormalizer::fit(std::slice::from_ref(&x), &[y]).map_err(|e| e.to_string())?;
            let mut store = TrainingStore::new(names, norm).map_err(|e| e.to_string())?;
            store.push(x.clone(), y).map_err(|e| e.to_string())?;
            let rb = generate_rules(&store, &cfg.cluster, 1).map_err(|e| e.to_string())?;
            let got = infer(&rb, &x).map_err(|e| e.to_string())?.value;
            worst_fit = worst_fit.max((got - y).abs());
        }
    }
    if worst_fit > FIT_TOL {
        return Err(format!("single-row fit error {worst_fit:e}"));
    }

    let mut worst_batch: f64 = 0.0;
    for trial in &cv.trials {
        let mut model = train(&sc.f_star, table, &trial.split.train_ids, cfg).map_err(|e| e.to_string())?;
        let mut fb = ReplayFeedback::new(ds);
        run_online(&mut model, &sc.f_star, ds, &trial.split.test_ids, &mut fb, cfg).map_err(|e| e.to_string())?;
        let batch = generate_rules(&model.store, &cfg.cluster, model.rule_base.version).map_err(|e| e.to_string())?;
        if let Some(d) = rules_differ(&model.rule_base, &batch) {
            return Err(format!("trial {}: evolved rules differ from batch by {d:e}", trial.split.trial));
        }
        for (ra, rb) in model.rule_base.rules.iter().zip(&batch.rules) {
            for (u, v) in ra.coefficients.iter().zip(&rb.coefficients) {
                worst_batch = worst_batch.max((u - v).abs());
            }
        }
    }
    check(
        true,
        format!(
            "single-row error {worst_fit:.1e}; evolved vs batch max difference {worst_batch:.1e} over {} trials",
            cv.trials.len()
        ),
    )
}

fn pruning_idempotence(sc: &SelfConfiguration, table: &ThresholdTable, cv: &CrossValidation, cfg: &ProjectConfig) -> Outcome {
    let d_min = cfg.d_min();
    let mut checked = 0;
    for trial in &cv.trials {
        let model = train(&sc.f_star, table, &trial.split.train_ids, cfg).map_err(|e| e.to_string())?;
        for id in &trial.split.train_ids {
            let block = image_block(&sc.f_star, id).map_err(|e| e.to_string())?;
            let t_best = f64::from(table.get(id).map_err(|e| e.to_string())?.t_star);
            let evo = evolve(&model.rule_base, &model.store, &block, t_best, d_min).map_err(|e| e.to_string())?;
            if !evo.kept.is_empty()
                || evo.store != model.store
                || evo.rule_base.rule_count() != model.rule_base.rule_count()
            {
                return Err(format!(
                    "trial {} image {id}: re-feeding kept {} rows",
                    trial.split.trial,
                    evo.kept.len()
                ));
            }
            checked += 1;
        }
    }
    check(true, format!("{checked} seen image blocks re-fed; store and rule count unchanged"))
}

fn end_to_end(cv: &CrossValidation, again: &CrossValidation, cv_time: Duration) -> Outcome {
    if cv != again {
        return Err("two runs with the same seed differ".into());
    }
    let mean = |name: &str| {
        cv.aggregate
            .iter()
            .find(|m| m.method == name)
            .map(|m| m.summary.mean)
            .ok_or(format!("missing method {name}"))
    };
    let (maa, ours, parent) = (mean(MAA)?, mean(SC_EFIS)?, mean(PARENT)?);
    let detail = format!(
        "mean J: {MAA} {:.1}%, {SC_EFIS} {:.1}%, {PARENT} {:.1}%; margin {:.1} pp; deterministic",
        100.0 * maa,
        100.0 * ours,
        100.0 * parent,
        100.0 * (ours - parent)
    );
    if !(maa >= ours && ours >= parent && ours - parent >= MIN_MARGIN) {
        return Err(detail);
    }
    within(cv_time, END_TO_END_LIMIT, detail)
}

fn rise_then_drop(cv: &CrossValidation) -> Outcome {
    let hits = cv.trials.iter().filter(|t| t.rises_then_drops()).count();
    let strict = cv
        .trials
        .iter()
        .filter(|t| {
            let mut full = vec![t.initial_rule_count];
            full.extend(&t.rule_trace);
            let max = *full.iter().max().unwrap_or(&0);
            full.iter().position(|&c| c == max).is_some_and(|p| p > 0 && p + 1 < full.len())
                && full.last() < Some(&max)
        })
        .count();
    let traces: Vec<String> = cv
        .trials
        .iter()
        .map(|t| {
            let tail: Vec<String> = t.rule_trace.iter().map(usize::to_string).collect();
            format!("{}:{}", t.initial_rule_count, tail.join(","))
        })
        .collect();
    check(
        hits >= MIN_RISE_DROP,
        format!(
            "{hits}/{} trials peak before the last test image (need {MIN_RISE_DROP}); \
             {strict} also rise above the initial count; traces {}",
            cv.trials.len(),
            traces.join(" ")
        ),
    )
}

fn main() -> ExitCode {
    let _ = env_logger::builder().is_test(true).try_init();
    let cfg = ProjectConfig::default();
    let mut results: Vec<(&str, Outcome)> = Vec::new();

    results.push(("threshold oracles", threshold_oracles()));

    let setup = (|| -> Result<_, String> {
        let ds = synth_dataset(&SynthConfig::default()).map_err(|e| e.to_string())?;
        let start = Instant::now();
        let table = offline_optimal(&ds, &cfg).map_err(|e| e.to_string())?;
        let maa_time = start.elapsed();
        let start = Instant::now();
        let sc = self_configure(&ds, &cfg).map_err(|e| e.to_string())?;
        let sc_time = start.elapsed();
        Ok((ds, table, maa_time, sc, sc_time))
    })();
    let (ds, table, maa_time, sc, sc_time) = match setup {
        Ok(s) => s,
        Err(e) => {
            println!("FAIL setup: {e}");
            return ExitCode::FAILURE;
        }
    };

    results.push(("MAA dominance", maa_dominance(&ds, &table, &cfg, maa_time)));
    results.push(("feature cascade", feature_cascade(&sc, &cfg, sc_time)));
    results.push(("selection vote law", vote_law()));
    results.push(("fusion laws", fusion_laws()));

    let start = Instant::now();
    let cv = cross_validate(&ds, &sc, &table, &cfg);
    let cv_time = start.elapsed() + sc_time + maa_time;
    let again = cross_validate(&ds, &sc, &table, &cfg);
    match (cv, again) {
        (Ok(cv), Ok(again)) => {
            results.push(("TS fidelity", ts_fidelity(&ds, &sc, &cv, &table, &cfg)));
            results.push(("pruning idempotence", pruning_idempotence(&sc, &table, &cv, &cfg)));
            results.push(("end-to-end ordering", end_to_end(&cv, &again, cv_time)));
            results.push(("rule count rises then drops", rise_then_drop(&cv)));
        }
        (Err(e), _) | (_, Err(e)) => {
            for name in ["TS fidelity", "pruning idempotence", "end-to-end ordering", "rule count rises then drops"] {
                results.push((name, Err(format!("cross-validation failed: {e}"))));
            }
        }
    }

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
