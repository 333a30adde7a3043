//! Scalar summaries of patches, transforms and descriptors.

use std::collections::BTreeMap;

use super::matrix::RealMatrix;

const MODE_GRID: f64 = 1e6;

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub(crate) fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Sample (n - 1) variance; 0 for a single value.
pub(crate) fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Most frequent value after snapping to a 1e-6 grid; ties go to the smallest.
pub(crate) fn mode(v: &[f64]) -> f64 {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &x in v {
        *counts.entry((x * MODE_GRID).round() as i64).or_default() += 1;
    }
    let mut best = (i64::MAX, 0usize);
    for (&key, &n) in &counts {
        if n > best.1 {
            best = (key, n);
        }
    }
    best.0 as f64 / MODE_GRID
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

/// Mean of the strictly-upper triangle of the sample covariance matrix of the
/// columns. `None` when there are fewer than two columns or two rows.
pub(crate) fn mean_cross_covariance(m: &RealMatrix) -> Option<f64> {
    let (rows, cols) = (m.rows(), m.cols());
    if cols < 2 || rows < 2 {
        return None;
    }
    let means: Vec<f64> = (0..cols)
        .map(|c| (0..rows).map(|r| m.get(r, c)).sum::<f64>() / rows as f64)
        .collect();
    let mut acc = 0.0;
    let mut pairs = 0usize;
    for a in 0..cols {
        for b in a + 1..cols {
            let cov = (0..rows)
                .map(|r| (m.get(r, a) - means[a]) * (m.get(r, b) - means[b]))
                .sum::<f64>()
                / (rows - 1) as f64;
            acc += cov;
            pairs += 1;
        }
    }
    Some(acc / pairs as f64)
}

/// The eight summary statistics of a matrix, flattened.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats8 {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub covariance: f64,
    pub mode: f64,
    pub range: f64,
    pub min: f64,
    pub max: f64,
    /// The cross-column covariance was undefined and reported as 0.
    pub covariance_undefined: bool,
}

impl Stats8 {
    pub const NAMES: [&'static str; 8] = [
        "mean", "median", "std", "covariance", "mode", "range", "min", "max",
    ];

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.mean,
            self.median,
            self.std,
            self.covariance,
            self.mode,
            self.range,
            self.min,
            self.max,
        ]
    }
}

/// Mean, median, sample standard deviation, mean cross-column covariance,
/// mode, range, minimum and maximum. Panics on an empty matrix.
pub fn stats8(m: &RealMatrix) -> Stats8 {
    assert!(!m.is_empty(), "stats8 of an empty matrix");
    let v = m.values();
    let (min, max) = min_max(v);
    let cov = mean_cross_covariance(m);
    if cov.is_none() {
        log::debug!("covariance undefined for {}x{} matrix", m.rows(), m.cols());
    }
    Stats8 {
        mean: mean(v),
        median: median(v),
        std: sample_variance(v).sqrt(),
        covariance: cov.unwrap_or(0.0),
        mode: mode(v),
        range: max - min,
        min,
        max,
        covariance_undefined: cov.is_none(),
    }
}

/// Summary of a 128-bin descriptor. The minimum is the smallest strictly
/// positive entry, and zeros are counted separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescriptorStats {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub covariance: f64,
    pub range: f64,
    pub min_nonzero: f64,
    pub max: f64,
    pub zero_population: f64,
    /// Every entry was zero; `min_nonzero` is reported as 0.
    pub all_zero: bool,
}

impl DescriptorStats {
    pub const NAMES: [&'static str; 8] = [
        "mean",
        "median",
        "std",
        "covariance",
        "range",
        "min_nonzero",
        "max",
        "zero_population",
    ];

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.mean,
            self.median,
            self.std,
            self.covariance,
            self.range,
            self.min_nonzero,
            self.max,
            self.zero_population,
        ]
    }
}

/// Descriptor reshaped to 16 spatial cells x 8 orientation bins.
pub fn descriptor_matrix(descriptor: &[f64]) -> RealMatrix {
    assert_eq!(descriptor.len(), 128, "descriptor length");
    RealMatrix::new(16, 8, descriptor.to_vec())
}

/// Range is taken over all entries, zeros included.
pub fn descriptor_features(descriptor: &[f64]) -> DescriptorStats {
    let m = descriptor_matrix(descriptor);
    let v = m.values();
    let (min, max) = min_max(v);
    let positive_min = v.iter().copied().filter(|&x| x > 0.0).reduce(f64::min);
    let all_zero = positive_min.is_none();
    if all_zero {
        log::debug!("descriptor has no nonzero entries");
    }
    DescriptorStats {
        mean: mean(v),
        median: median(v),
        std: sample_variance(v).sqrt(),
        covariance: mean_cross_covariance(&m).unwrap_or(0.0),
        range: max - min,
        min_nonzero: positive_min.unwrap_or(0.0),
        max,
        zero_population: v.iter().filter(|&&x| x == 0.0).count() as f64,
        all_zero,
    }
}
