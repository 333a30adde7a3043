//! Histogram-based global threshold selection.
//!
//! A threshold `t` splits the histogram into the classes `0..=t` and
//! `t+1..=255`. Every method scores each `t` for which both classes are
//! populated and returns the best one, with ties going to the smallest `t`.
//! The per-threshold criteria are public so callers can inspect the curve.

use serde::{Deserialize, Serialize};

use super::Histogram;

pub const KITTLER_VARIANCE_FLOOR: f64 = 1e-6;
pub const TIZHOOSH_DEFAULT_ALPHA: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdFlag {
    /// At most one populated bin; the threshold is that bin.
    Degenerate,
    /// No threshold had a usable criterion value; Otsu was used instead.
    FallbackToOtsu,
    /// The criterion was constant over all thresholds; Otsu was used instead.
    FlatCriterion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdOutcome {
    pub threshold: u8,
    pub flag: Option<ThresholdFlag>,
}

impl ThresholdOutcome {
    fn clean(threshold: usize) -> Self {
        Self {
            threshold: threshold as u8,
            flag: None,
        }
    }

    fn flagged(threshold: usize, flag: ThresholdFlag) -> Self {
        Self {
            threshold: threshold as u8,
            flag: Some(flag),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlobalMethod {
    Otsu,
    Kittler,
    Huang,
    Tizhoosh,
}

impl GlobalMethod {
    pub const ALL: [GlobalMethod; 4] = [
        GlobalMethod::Huang,
        GlobalMethod::Kittler,
        GlobalMethod::Tizhoosh,
        GlobalMethod::Otsu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GlobalMethod::Otsu => "Otsu",
            GlobalMethod::Kittler => "Kittler",
            GlobalMethod::Huang => "Huang",
            GlobalMethod::Tizhoosh => "Tizhoosh",
        }
    }

    pub fn apply(self, hist: &Histogram) -> ThresholdOutcome {
        match self {
            GlobalMethod::Otsu => otsu(hist),
            GlobalMethod::Kittler => kittler(hist),
            GlobalMethod::Huang => huang(hist),
            GlobalMethod::Tizhoosh => tizhoosh_interval(hist, TIZHOOSH_DEFAULT_ALPHA),
        }
    }
}

/// Exact integer class moments for one split.
#[derive(Debug, Clone, Copy)]
struct ClassMoments {
    count: u64,
    sum: u128,
    sum_sq: u128,
}

impl ClassMoments {
    fn mean(&self) -> f64 {
        self.sum as f64 / self.count as f64
    }

    /// Population variance, computed from an exact integer numerator.
    fn variance(&self) -> f64 {
        let n = self.count as u128;
        let num = n * self.sum_sq - self.sum * self.sum;
        num as f64 / (n * n) as f64
    }
}

/// Prefix sums over the histogram, so any split can be scored in O(1).
struct Moments {
    total: ClassMoments,
    prefix: Vec<ClassMoments>,
}

impl Moments {
    fn new(hist: &Histogram) -> Self {
        let mut prefix = Vec::with_capacity(256);
        let mut acc = ClassMoments {
            count: 0,
            sum: 0,
            sum_sq: 0,
        };
        for (g, &c) in hist.counts().iter().enumerate() {
            acc.count += c;
            acc.sum += c as u128 * g as u128;
            acc.sum_sq += c as u128 * (g * g) as u128;
            prefix.push(acc);
        }
        Self {
            total: acc,
            prefix,
        }
    }

    /// Lower and upper class for threshold `t`, or `None` if either is empty.
    fn split(&self, t: usize) -> Option<(ClassMoments, ClassMoments)> {
        let lo = *self.prefix.get(t)?;
        let hi = ClassMoments {
            count: self.total.count - lo.count,
            sum: self.total.sum - lo.sum,
            sum_sq: self.total.sum_sq - lo.sum_sq,
        };
        (lo.count > 0 && hi.count > 0).then_some((lo, hi))
    }
}

/// Scans all 256 thresholds; strict comparison keeps the smallest `t` on ties.
fn best_threshold(
    criterion: impl Fn(usize) -> Option<f64>,
    maximize: bool,
) -> Option<(usize, f64, f64)> {
    let mut best: Option<(usize, f64)> = None;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for t in 0..256 {
        let Some(v) = criterion(t) else { continue };
        if !v.is_finite() {
            continue;
        }
        lo = lo.min(v);
        hi = hi.max(v);
        let better = match best {
            None => true,
            Some((_, b)) if maximize => v > b,
            Some((_, b)) => v < b,
        };
        if better {
            best = Some((t, v));
        }
    }
    best.map(|(t, v)| (t, v, hi - lo))
}

fn single_bin(hist: &Histogram) -> Option<usize> {
    match hist.first_last() {
        None => Some(0),
        Some((f, l)) if f == l => Some(f),
        _ => None,
    }
}

/// Between-class variance `w0 * w1 * (mu0 - mu1)^2` with class probabilities.
pub fn otsu_criterion(hist: &Histogram, t: usize) -> Option<f64> {
    otsu_with(&Moments::new(hist), t)
}

fn otsu_with(m: &Moments, t: usize) -> Option<f64> {
    let (lo, hi) = m.split(t)?;
    let n = m.total.count as f64;
    let w0 = lo.count as f64 / n;
    let w1 = hi.count as f64 / n;
    let d = lo.mean() - hi.mean();
    Some(w0 * w1 * d * d)
}

pub fn otsu(hist: &Histogram) -> ThresholdOutcome {
    if let Some(bin) = single_bin(hist) {
        return ThresholdOutcome::flagged(bin, ThresholdFlag::Degenerate);
    }
    let m = Moments::new(hist);
    match best_threshold(|t| otsu_with(&m, t), true) {
        Some((t, _, _)) => ThresholdOutcome::clean(t),
        None => ThresholdOutcome::flagged(0, ThresholdFlag::Degenerate),
    }
}

/// Kittler-Illingworth minimum-error criterion
/// `1 + 2 (P0 ln s0 + P1 ln s1) - 2 (P0 ln P0 + P1 ln P1)`, with class
/// variances floored at [`KITTLER_VARIANCE_FLOOR`].
pub fn kittler_criterion(hist: &Histogram, t: usize) -> Option<f64> {
    kittler_with(&Moments::new(hist), t)
}

fn kittler_with(m: &Moments, t: usize) -> Option<f64> {
    let (lo, hi) = m.split(t)?;
    let n = m.total.count as f64;
    let p0 = lo.count as f64 / n;
    let p1 = hi.count as f64 / n;
    let v0 = lo.variance().max(KITTLER_VARIANCE_FLOOR);
    let v1 = hi.variance().max(KITTLER_VARIANCE_FLOOR);
    // ln(sigma) = ln(var) / 2
    Some(1.0 + (p0 * v0.ln() + p1 * v1.ln()) - 2.0 * (p0 * p0.ln() + p1 * p1.ln()))
}

pub fn kittler(hist: &Histogram) -> ThresholdOutcome {
    if single_bin(hist).is_some() {
        let fallback = otsu(hist);
        return ThresholdOutcome::flagged(
            fallback.threshold as usize,
            ThresholdFlag::FallbackToOtsu,
        );
    }
    let m = Moments::new(hist);
    match best_threshold(|t| kittler_with(&m, t), false) {
        Some((t, _, _)) => ThresholdOutcome::clean(t),
        None => ThresholdOutcome::flagged(
            otsu(hist).threshold as usize,
            ThresholdFlag::FallbackToOtsu,
        ),
    }
}

/// Membership of gray level `g` in the class whose mean is `mean`:
/// `1 / (1 + |g - mean| / C)` with `C` the populated intensity span.
#[inline]
fn class_membership(g: usize, mean: f64, span: f64) -> f64 {
    1.0 / (1.0 + (g as f64 - mean).abs() / span)
}

#[inline]
fn shannon(u: f64) -> f64 {
    let mut s = 0.0;
    if u > 0.0 && u < 1.0 {
        s -= u * u.ln() + (1.0 - u) * (1.0 - u).ln();
    }
    s
}

fn fuzzy_sum(
    hist: &Histogram,
    m: &Moments,
    t: usize,
    per_level: impl Fn(f64) -> f64,
) -> Option<f64> {
    let (lo, hi) = m.split(t)?;
    let (first, last) = hist.first_last()?;
    let span = (last - first) as f64;
    let (mu0, mu1) = (lo.mean(), hi.mean());
    let mut acc = 0.0;
    for (g, &c) in hist.counts().iter().enumerate() {
        if c == 0 {
            continue;
        }
        let mean = if g <= t { mu0 } else { mu1 };
        acc += c as f64 * per_level(class_membership(g, mean, span));
    }
    Some(acc / m.total.count as f64)
}

/// Huang-Wang fuzziness: mean Shannon entropy of the class memberships.
pub fn huang_criterion(hist: &Histogram, t: usize) -> Option<f64> {
    fuzzy_sum(hist, &Moments::new(hist), t, shannon)
}

pub fn huang(hist: &Histogram) -> ThresholdOutcome {
    if let Some(bin) = single_bin(hist) {
        return ThresholdOutcome::flagged(bin, ThresholdFlag::Degenerate);
    }
    let m = Moments::new(hist);
    match best_threshold(|t| fuzzy_sum(hist, &m, t, shannon), false) {
        Some((t, _, _)) => ThresholdOutcome::clean(t),
        None => ThresholdOutcome::flagged(0, ThresholdFlag::Degenerate),
    }
}

/// S-shaped membership with crossover at `t` and half-width `d`.
fn s_membership(g: f64, t: f64, d: f64) -> f64 {
    let (a, c) = (t - d, t + d);
    if g <= a {
        0.0
    } else if g <= t {
        2.0 * ((g - a) / (c - a)).powi(2)
    } else if g <= c {
        1.0 - 2.0 * ((g - c) / (c - a)).powi(2)
    } else {
        1.0
    }
}

/// Mean ultrafuzziness `u^(1/alpha) - u^alpha` of the interval-valued
/// membership whose primary membership is an S-function crossing 0.5 at `t`,
/// with half-width equal to the populated span of the histogram.
pub fn tizhoosh_criterion(hist: &Histogram, t: usize, alpha: f64) -> Option<f64> {
    let (first, last) = hist.first_last()?;
    if t < first || t >= last {
        return None;
    }
    let d = (last - first) as f64;
    let mut acc = 0.0;
    for (g, &n) in hist.counts().iter().enumerate().take(last + 1).skip(first) {
        if n > 0 {
            let u = s_membership(g as f64, t as f64, d);
            acc += n as f64 * (u.powf(1.0 / alpha) - u.powf(alpha));
        }
    }
    Some(acc / hist.total() as f64)
}

pub fn tizhoosh_interval(hist: &Histogram, alpha: f64) -> ThresholdOutcome {
    if let Some(bin) = single_bin(hist) {
        return ThresholdOutcome::flagged(bin, ThresholdFlag::Degenerate);
    }
    let found = best_threshold(|t| tizhoosh_criterion(hist, t, alpha), true);
    match found {
        Some((_, _, spread)) if spread <= 1e-12 => {
            log::warn!("ultrafuzziness is flat (alpha = {alpha}); falling back to Otsu");
            ThresholdOutcome::flagged(otsu(hist).threshold as usize, ThresholdFlag::FlatCriterion)
        }
        Some((t, _, _)) => ThresholdOutcome::clean(t),
        None => ThresholdOutcome::flagged(0, ThresholdFlag::Degenerate),
    }
}
