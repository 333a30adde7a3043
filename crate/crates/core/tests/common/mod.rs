//! Brute-force reference implementations shared by the test targets.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scefis_core::imaging::{
    huang, huang_criterion, kittler, kittler_criterion, otsu, otsu_criterion, tizhoosh_criterion,
    tizhoosh_interval, Histogram, ThresholdOutcome, TIZHOOSH_DEFAULT_ALPHA,
};

/// Class probability, mean and population variance of bins `lo..=hi`.
pub fn class(p: &[f64], lo: usize, hi: usize) -> Option<(f64, f64, f64)> {
    let w: f64 = (lo..=hi).map(|g| p[g]).sum();
    if (lo..=hi).all(|g| p[g] == 0.0) {
        return None;
    }
    let mu = (lo..=hi).map(|g| g as f64 * p[g]).sum::<f64>() / w;
    let var = (lo..=hi).map(|g| (g as f64 - mu).powi(2) * p[g]).sum::<f64>() / w;
    Some((w, mu, var))
}

pub fn probabilities(counts: &[u64; 256]) -> Vec<f64> {
    let n: u64 = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / n as f64).collect()
}

pub fn span(p: &[f64]) -> (usize, usize) {
    let first = p.iter().position(|&v| v > 0.0).unwrap();
    let last = p.iter().rposition(|&v| v > 0.0).unwrap();
    (first, last)
}

pub fn oracle_otsu(p: &[f64], t: usize) -> Option<f64> {
    let (w0, m0, _) = class(p, 0, t)?;
    let (w1, m1, _) = class(p, t + 1, 255).filter(|_| t < 255)?;
    Some(w0 * w1 * (m0 - m1).powi(2))
}

pub fn oracle_kittler(p: &[f64], t: usize) -> Option<f64> {
    let (w0, _, v0) = class(p, 0, t)?;
    let (w1, _, v1) = class(p, t + 1, 255).filter(|_| t < 255)?;
    let s0 = v0.max(1e-6).sqrt();
    let s1 = v1.max(1e-6).sqrt();
    Some(1.0 + 2.0 * (w0 * s0.ln() + w1 * s1.ln()) - 2.0 * (w0 * w0.ln() + w1 * w1.ln()))
}

pub fn oracle_huang(p: &[f64], t: usize) -> Option<f64> {
    let (_, m0, _) = class(p, 0, t)?;
    let (_, m1, _) = class(p, t + 1, 255).filter(|_| t < 255)?;
    let (first, last) = span(p);
    let c = (last - first) as f64;
    let mut e = 0.0;
    for (g, &pg) in p.iter().enumerate() {
        if pg == 0.0 {
            continue;
        }
        let m = if g <= t { m0 } else { m1 };
        let u = 1.0 / (1.0 + (g as f64 - m).abs() / c);
        let h = if u <= 0.0 || u >= 1.0 {
            0.0
        } else {
            -u * u.ln() - (1.0 - u) * (1.0 - u).ln()
        };
        e += pg * h;
    }
    Some(e)
}

/// Zadeh's S-function with support [a, c] and crossover b = (a + c) / 2.
pub fn zadeh_s(x: f64, a: f64, b: f64, c: f64) -> f64 {
    if x <= a {
        0.0
    } else if x <= b {
        2.0 * ((x - a) / (c - a)).powi(2)
    } else if x <= c {
        1.0 - 2.0 * ((x - c) / (c - a)).powi(2)
    } else {
        1.0
    }
}

pub fn oracle_tizhoosh(p: &[f64], t: usize, alpha: f64) -> Option<f64> {
    let (first, last) = span(p);
    if t < first || t >= last {
        return None;
    }
    let half = (last - first) as f64;
    let tf = t as f64;
    Some(
        p.iter()
            .enumerate()
            .filter(|(_, &pg)| pg > 0.0)
            .map(|(g, &pg)| {
                let mu = zadeh_s(g as f64, tf - half, tf, tf + half);
                let upper = mu.powf(1.0 / alpha);
                let lower = mu.powf(alpha);
                pg * (upper - lower)
            })
            .sum(),
    )
}

pub fn argbest(values: &[Option<f64>], maximize: bool) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (t, v) in values.iter().enumerate() {
        let Some(v) = *v else { continue };
        let better = match best {
            None => true,
            Some((_, b)) => {
                if maximize {
                    v > b
                } else {
                    v < b
                }
            }
        };
        if better {
            best = Some((t, v));
        }
    }
    best.map(|(t, _)| t)
}

pub fn random_histogram(seed: u64) -> [u64; 256] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = [0u64; 256];
    match seed % 3 {
        0 => {
            // Two or three Gaussian modes.
            let modes = rng.random_range(2..=3);
            for _ in 0..modes {
                let mu: f64 = rng.random_range(20.0..235.0);
                let sd: f64 = rng.random_range(3.0..30.0);
                let mass: f64 = rng.random_range(500.0..5000.0);
                for (g, c) in counts.iter_mut().enumerate() {
                    let z = (g as f64 - mu) / sd;
                    *c += (mass * (-0.5 * z * z).exp()).round() as u64;
                }
            }
        }
        1 => {
            // Sparse: a handful of populated bins.
            for _ in 0..rng.random_range(3..12) {
                counts[rng.random_range(0..256)] += rng.random_range(1..500);
            }
        }
        _ => {
            // Uniform noise over a random interval.
            let lo = rng.random_range(0..200);
            let hi = rng.random_range(lo + 5..256);
            for c in counts.iter_mut().take(hi).skip(lo) {
                *c = rng.random_range(0..100);
            }
        }
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        counts[10] += 3;
        counts[200] += 5;
    }
    counts
}

pub struct Case {
    pub name: &'static str,
    pub maximize: bool,
    pub ours: fn(&Histogram, usize) -> Option<f64>,
    pub oracle: fn(&[f64], usize) -> Option<f64>,
    pub pick: fn(&Histogram) -> ThresholdOutcome,
}

pub fn tizhoosh_ours(h: &Histogram, t: usize) -> Option<f64> {
    tizhoosh_criterion(h, t, TIZHOOSH_DEFAULT_ALPHA)
}

pub fn tizhoosh_oracle(p: &[f64], t: usize) -> Option<f64> {
    oracle_tizhoosh(p, t, TIZHOOSH_DEFAULT_ALPHA)
}

pub fn tizhoosh_pick(h: &Histogram) -> ThresholdOutcome {
    tizhoosh_interval(h, TIZHOOSH_DEFAULT_ALPHA)
}

pub const CASES: [Case; 4] = [
    Case {
        name: "otsu",
        maximize: true,
        ours: otsu_criterion,
        oracle: oracle_otsu,
        pick: otsu,
    },
    Case {
        name: "kittler",
        maximize: false,
        ours: kittler_criterion,
        oracle: oracle_kittler,
        pick: kittler,
    },
    Case {
        name: "huang",
        maximize: false,
        ours: huang_criterion,
        oracle: oracle_huang,
        pick: huang,
    },
    Case {
        name: "tizhoosh",
        maximize: true,
        ours: tizhoosh_ours,
        oracle: tizhoosh_oracle,
        pick: tizhoosh_pick,
    },
];

/// Checks every criterion value and every unflagged pick against the
/// oracles; returns the first mismatch.
pub fn check_threshold_oracles(seeds: std::ops::Range<u64>) -> Result<(), String> {
    for seed in seeds {
        let counts = random_histogram(seed);
        let hist = Histogram::from_counts(counts);
        let p = probabilities(&counts);
        for case in &CASES {
            let oracle: Vec<Option<f64>> = (0..256).map(|t| (case.oracle)(&p, t)).collect();
            for (t, want) in oracle.iter().enumerate() {
                match ((case.ours)(&hist, t), want) {
                    (None, None) => {}
                    (Some(g), Some(w)) if (g - w).abs() <= 1e-9 => {}
                    (got, _) => {
                        return Err(format!("{} seed {seed} t {t}: {got:?} vs {want:?}", case.name))
                    }
                }
            }
            let out = (case.pick)(&hist);
            if out.flag.is_none() {
                let want = argbest(&oracle, case.maximize).ok_or("no valid threshold")?;
                if out.threshold as usize != want {
                    return Err(format!(
                        "{} seed {seed}: picked {} but the oracle picks {want}",
                        case.name, out.threshold
                    ));
                }
            }
        }
    }
    Ok(())
}
