use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::config::ProjectConfig;
use super::dataset::Dataset;
use super::phases::{run_online, train, OnlineRecord, ReplayFeedback, SelfConfiguration, ThresholdTable};
use crate::error::{Error, Result};
use crate::imaging::{apply_threshold, histogram, jaccard, niblack, GlobalMethod};

pub const MAA: &str = "MAA";
pub const SC_EFIS: &str = "SC-EFIS-THR";
pub const NIBLACK: &str = "Niblack";

/// Row order of the comparison table.
pub fn method_order() -> Vec<&'static str> {
    let mut v = vec![MAA, SC_EFIS, NIBLACK];
    v.extend([
        GlobalMethod::Huang,
        GlobalMethod::Kittler,
        GlobalMethod::Tizhoosh,
        GlobalMethod::Otsu,
    ]
    .map(GlobalMethod::name));
    v
}

/// The method every other row is tested against.
pub const PARENT: &str = "Otsu";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation.
    pub std: f64,
    pub ci95: (f64, f64),
    /// Two-sided paired t-test against the baseline, when one was given.
    pub p_value: Option<f64>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn t_quantile(df: f64) -> Result<f64> {
    let t = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numerical {
        context: format!("student t with {df} degrees of freedom: {e}"),
    })?;
    Ok(t.inverse_cdf(0.975))
}

/// Mean, sample standard deviation, t-based 95% confidence interval, and
/// optionally a paired t-test against `baseline`. If the paired differences
/// are all equal, p is 1 when they are zero and 0 otherwise.
pub fn stats_summary(values: &[f64], baseline: Option<&[f64]>) -> Result<Summary> {
    let n = values.len();
    if n < 2 {
        return Err(Error::EmptyInput(format!("statistics need at least 2 values, got {n}")));
    }
    let (mean, std) = mean_std(values);
    let half = t_quantile((n - 1) as f64)? * std / (n as f64).sqrt();
    let p_value = match baseline {
        None => None,
        Some(b) => {
            if b.len() != n {
                return Err(Error::param("paired test needs equally long samples"));
            }
            let d: Vec<f64> = values.iter().zip(b).map(|(x, y)| x - y).collect();
            let (dm, ds) = mean_std(&d);
            Some(if ds == 0.0 {
                if dm == 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                let t = dm / (ds / (n as f64).sqrt());
                let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::Numerical {
                    context: format!("student t: {e}"),
                })?;
                (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
            })
        }
    };
    Ok(Summary {
        n,
        mean,
        std,
        ci95: (mean - half, mean + half),
        p_value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScores {
    pub method: String,
    /// Jaccard per test image, in test order.
    pub per_image: Vec<f64>,
    pub summary: Summary,
}

/// Jaccard per test image for every baseline and for MAA. SC-EFIS scores
/// are supplied by the caller. Summaries are tested against the parent.
pub fn compare_baselines(
    ds: &Dataset,
    table: &ThresholdTable,
    test_ids: &[String],
    sc_efis: &[f64],
    cfg: &ProjectConfig,
) -> Result<Vec<MethodScores>> {
    if sc_efis.len() != test_ids.len() {
        return Err(Error::param("one SC-EFIS score per test image is required"));
    }
    let mut per_method: Vec<(String, Vec<f64>)> = method_order()
        .into_iter()
        .map(|m| (m.to_string(), Vec::with_capacity(test_ids.len())))
        .collect();
    for (k, id) in test_ids.iter().enumerate() {
        let item = ds.get(id)?;
        let gold = ds.gold(id)?;
        let hist = histogram(&item.image);
        for (name, scores) in per_method.iter_mut() {
            let j = match name.as_str() {
                MAA => table.get(id)?.j_max,
                SC_EFIS => sc_efis[k],
                NIBLACK => {
                    let seg = niblack(&item.image, cfg.niblack.window, cfg.niblack.k, cfg.orientation)?;
                    jaccard(&seg, gold)?.jaccard
                }
                other => {
                    let method = GlobalMethod::ALL
                        .into_iter()
                        .find(|m| m.name() == other)
                        .expect("known method");
                    let t = match method {
                        GlobalMethod::Tizhoosh => {
                            crate::imaging::tizhoosh_interval(&hist, cfg.tizhoosh_alpha).threshold
                        }
                        m => m.apply(&hist).threshold,
                    };
                    jaccard(&apply_threshold(&item.image, t, cfg.orientation), gold)?.jaccard
                }
            };
            scores.push(j);
        }
    }
    let parent = per_method
        .iter()
        .find(|(m, _)| m == PARENT)
        .map(|(_, s)| s.clone())
        .expect("parent row");
    per_method
        .into_iter()
        .map(|(method, per_image)| {
            let baseline = (method != PARENT).then_some(parent.as_slice());
            let summary = stats_summary(&per_image, baseline)?;
            Ok(MethodScores {
                method,
                per_image,
                summary,
            })
        })
        .collect()
}

/// Test split of one trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSplit {
    pub trial: usize,
    pub shuffle: usize,
    pub chunk: usize,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// Seeded leave-n-images-out splits. Each shuffle of the ids is cut into
/// `floor(N / n_test)` disjoint test chunks; trial `k` uses chunk
/// `k mod chunks` of shuffle `k / chunks`, so consecutive trials cover every
/// image before any is tested twice.
pub fn trial_splits(ids: &[String], trials: usize, test_fraction: f64, seed: u64) -> Result<Vec<TrialSplit>> {
    let n = ids.len();
    if n < trials {
        return Err(Error::param(format!("{n} images cannot fill {trials} trials")));
    }
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let chunks = n / n_test;
    let mut shuffles: Vec<Vec<String>> = Vec::new();
    (0..trials)
        .map(|k| {
            let (s, c) = (k / chunks, k % chunks);
            while shuffles.len() <= s {
                let mut order = ids.to_vec();
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(shuffles.len() as u64));
                order.shuffle(&mut rng);
                shuffles.push(order);
            }
            let order = &shuffles[s];
            let test_ids = order[c * n_test..(c + 1) * n_test].to_vec();
            let train_ids = order
                .iter()
                .filter(|id| !test_ids.contains(id))
                .cloned()
                .collect();
            Ok(TrialSplit {
                trial: k,
                shuffle: s,
                chunk: c,
                train_ids,
                test_ids,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub split: TrialSplit,
    pub initial_rule_count: usize,
    pub training_rows: usize,
    /// Rule count after each processed test image.
    pub rule_trace: Vec<usize>,
    pub online: Vec<OnlineRecord>,
    pub methods: Vec<MethodScores>,
}

impl TrialReport {
    pub fn method(&self, name: &str) -> Option<&MethodScores> {
        self.methods.iter().find(|m| m.method == name)
    }

    /// The rule count peaks before the last test image and ends below the
    /// peak.
    pub fn rises_then_drops(&self) -> bool {
        rises_then_drops(&self.rule_trace)
    }
}

pub fn rises_then_drops(trace: &[usize]) -> bool {
    let Some(&max) = trace.iter().max() else {
        return false;
    };
    let first_max = trace.iter().position(|&v| v == max).unwrap();
    first_max + 1 < trace.len() && trace[trace.len() - 1] < max
}

/// Trains on the split's training images, runs the replayed online phase on
/// its test images, and scores every method.
pub fn run_trial(
    ds: &Dataset,
    sc: &SelfConfiguration,
    table: &ThresholdTable,
    split: TrialSplit,
    cfg: &ProjectConfig,
) -> Result<TrialReport> {
    let mut model = train(&sc.f_star, table, &split.train_ids, cfg)?;
    let initial_rule_count = model.rule_base.rule_count();
    let training_rows = model.store.len();
    let mut feedback = ReplayFeedback::new(ds);
    let online = run_online(&mut model, &sc.f_star, ds, &split.test_ids, &mut feedback, cfg)?;
    let rule_trace = online
        .iter()
        .filter_map(|r| r.event.as_ref().map(|e| e.rule_count))
        .collect();
    let sc_scores: Vec<f64> = online
        .iter()
        .map(|r| {
            r.event
                .as_ref()
                .map(|e| e.jaccard)
                .ok_or_else(|| Error::EmptyInput(format!("no feedback for {}", r.image_id)))
        })
        .collect::<Result<_>>()?;
    let methods = compare_baselines(ds, table, &split.test_ids, &sc_scores, cfg)?;
    Ok(TrialReport {
        split,
        initial_rule_count,
        training_rows,
        rule_trace,
        online,
        methods,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub trials: Vec<TrialReport>,
    /// Per-image scores pooled over all trials.
    pub aggregate: Vec<MethodScores>,
}

/// Seeded trials in parallel, then pooled statistics.
pub fn cross_validate(
    ds: &Dataset,
    sc: &SelfConfiguration,
    table: &ThresholdTable,
    cfg: &ProjectConfig,
) -> Result<CrossValidation> {
    let cv = &cfg.cross_validation;
    let splits = trial_splits(&ds.ids(), cv.trials, cv.test_fraction, cv.seed)?;
    let trials = splits
        .into_par_iter()
        .map(|s| run_trial(ds, sc, table, s, cfg))
        .collect::<Result<Vec<_>>>()?;

    let mut pooled: Vec<(String, Vec<f64>)> = method_order()
        .into_iter()
        .map(|m| (m.to_string(), Vec::new()))
        .collect();
    for t in &trials {
        for (name, v) in pooled.iter_mut() {
            v.extend(&t.method(name).expect("every method scored").per_image);
        }
    }
    let parent = pooled.iter().find(|(m, _)| m == PARENT).unwrap().1.clone();
    let aggregate = pooled
        .into_iter()
        .map(|(method, per_image)| {
            let baseline = (method != PARENT).then_some(parent.as_slice());
            Ok(MethodScores {
                summary: stats_summary(&per_image, baseline)?,
                method,
                per_image,
            })
        })
        .collect::<Result<_>>()?;
    Ok(CrossValidation { trials, aggregate })
}

fn pct(v: f64) -> String {
    format!("{:.0}%", 100.0 * v)
}

/// Markdown table: method, `J ± σ`, 95% CI, p-value against the parent.
pub fn render_markdown(title: &str, methods: &[MethodScores]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "### {title}\n");
    let _ = writeln!(s, "| Method | J ± σ_J | CI_J | p vs {PARENT} |");
    let _ = writeln!(s, "|---|---|---|---|");
    for m in methods {
        let p = m
            .summary
            .p_value
            .map_or_else(|| "-".to_string(), |p| if p < 1e-3 { format!("{p:.1e}") } else { format!("{p:.3}") });
        let _ = writeln!(
            s,
            "| {} | {} ± {} | [{} {}] | {} |",
            m.method,
            pct(m.summary.mean),
            pct(m.summary.std),
            pct(m.summary.ci95.0),
            pct(m.summary.ci95.1),
            p
        );
    }
    s
}

impl CrossValidation {
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        for t in &self.trials {
            s.push_str(&render_markdown(&format!("Trial {}", t.split.trial + 1), &t.methods));
            s.push('\n');
        }
        s.push_str(&render_markdown("All trials", &self.aggregate));
        s
    }

    /// `trial,step,image_id,rule_count`, with step 0 the trained rule base.
    pub fn trace_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["trial", "step", "image_id", "rule_count"])?;
        for t in &self.trials {
            let trial = (t.split.trial + 1).to_string();
            w.write_record([trial.as_str(), "0", "", &t.initial_rule_count.to_string()])?;
            let processed = t.online.iter().filter_map(|r| r.event.as_ref());
            for (k, e) in processed.enumerate() {
                w.write_record([
                    trial.as_str(),
                    &(k + 1).to_string(),
                    &e.image_id,
                    &e.rule_count.to_string(),
                ])?;
            }
        }
        w.into_inner().map_err(|e| Error::Numerical {
            context: format!("trace csv: {}", e.error()),
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        crate::write_atomic(&dir.join("crossval.json"), &serde_json::to_vec_pretty(self)?)?;
        crate::write_atomic(&dir.join("crossval.md"), self.to_markdown().as_bytes())?;
        crate::write_atomic(&dir.join("rule_trace.csv"), &self.trace_csv()?)
    }
}
