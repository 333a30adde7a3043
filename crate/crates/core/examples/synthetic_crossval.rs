//! Cross-validation on the built-in synthetic dataset.
//!
//! `cargo run --release -p scefis-core --example synthetic_crossval [seed]`
//!
//! For sensitivity sweeps, `RADIUS`, `RIDGE`, `DMIN` and `TEST_FRACTION`
//! override the corresponding defaults.

use scefis_core::pipeline::{
    cross_validate, offline_optimal, self_configure, synth_dataset, ProjectConfig, SynthConfig,
    THRESHOLD_TECHNIQUE,
};

fn main() -> scefis_core::Result<()> {
    env_logger::init();
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok());
    let synth = SynthConfig {
        seed: seed.unwrap_or(SynthConfig::default().seed),
        ..SynthConfig::default()
    };
    let mut cfg = ProjectConfig::default();
    if let Some(r) = std::env::var("RADIUS").ok().and_then(|s| s.parse().ok()) {
        cfg.cluster.radius = r;
    }
    if let Some(l) = std::env::var("RIDGE").ok().and_then(|s| s.parse().ok()) {
        cfg.cluster.slope_ridge = l;
    }
    if let Some(d) = std::env::var("DMIN").ok().and_then(|s| s.parse().ok()) {
        cfg.prune_distances.insert(THRESHOLD_TECHNIQUE.into(), d);
    }
    if let Some(f) = std::env::var("TEST_FRACTION").ok().and_then(|s| s.parse().ok()) {
        cfg.cross_validation.test_fraction = f;
    }
    let ds = synth_dataset(&synth)?;
    let t0 = std::time::Instant::now();
    let sc = self_configure(&ds, &cfg)?;
    println!("self-configuration: {:?} in {:?}", sc.report.widths, t0.elapsed());
    println!("F*: {:?}", sc.report.final_schema);
    let table = offline_optimal(&ds, &cfg)?;
    let cv = cross_validate(&ds, &sc, &table, &cfg)?;
    println!("{}", cv.to_markdown().rsplit("### ").next().unwrap());
    for t in &cv.trials {
        println!(
            "trial {}: rows {} rules {} trace {:?} rise-drop {}",
            t.split.trial + 1,
            t.training_rows,
            t.initial_rule_count,
            t.rule_trace,
            t.rises_then_drops()
        );
    }
    println!("total {:?}", t0.elapsed());
    Ok(())
}
