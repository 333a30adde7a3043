use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Z-shaped spline: 1 up to `a`, 0 from `b`, 0.5 at the midpoint.
pub fn zmf(x: f64, a: f64, b: f64) -> Result<f64> {
    if a.is_nan() || b.is_nan() || a >= b {
        return Err(Error::param(format!("zmf needs a < b, got a = {a}, b = {b}")));
    }
    let mid = (a + b) / 2.0;
    let w = b - a;
    Ok(if x <= a {
        1.0
    } else if x <= mid {
        1.0 - 2.0 * ((x - a) / w).powi(2)
    } else if x < b {
        2.0 * ((x - b) / w).powi(2)
    } else {
        0.0
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusedOutput {
    pub value: f64,
    /// Weight of the mean; `1 - weight` goes to the median.
    pub weight: f64,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    /// The mean was zero, so the weight was set to 1.
    pub zero_mean: bool,
}

impl FusedOutput {
    /// The fused value as a usable threshold.
    pub fn threshold(&self) -> u8 {
        self.value.round().clamp(0.0, 255.0) as u8
    }
}

/// Blends mean and median of the per-statistic outputs:
/// `m = zmf(std, 0.1 |mean|, 0.2 |mean|)`, `T* = m mean + (1 - m) median`.
/// A tight spread trusts the mean, a wide one the median. `std` is the
/// sample standard deviation.
pub fn fuse_output(t_o: &[f64]) -> Result<FusedOutput> {
    if t_o.is_empty() {
        return Err(Error::EmptyInput("fuse_output needs at least one value".into()));
    }
    let n = t_o.len() as f64;
    let mean = t_o.iter().sum::<f64>() / n;
    let mut sorted = t_o.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len();
    let median = if k % 2 == 1 {
        sorted[k / 2]
    } else {
        (sorted[k / 2 - 1] + sorted[k / 2]) / 2.0
    };
    let std = if k > 1 {
        (t_o.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let zero_mean = mean == 0.0;
    let weight = if zero_mean {
        log::debug!("fuse_output: zero mean, using the mean");
        1.0
    } else {
        zmf(std, 0.1 * mean.abs(), 0.2 * mean.abs())?
    };
    let value = if weight == 1.0 {
        mean
    } else if weight == 0.0 {
        median
    } else {
        (weight * mean + (1.0 - weight) * median).clamp(mean.min(median), mean.max(median))
    };
    Ok(FusedOutput {
        value,
        weight,
        mean,
        median,
        std,
        zero_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zmf_knots() {
        assert_eq!(zmf(2.0, 2.0, 6.0).unwrap(), 1.0);
        assert_eq!(zmf(6.0, 2.0, 6.0).unwrap(), 0.0);
        assert_eq!(zmf(4.0, 2.0, 6.0).unwrap(), 0.5);
        assert!((zmf(3.0, 2.0, 6.0).unwrap() - 0.875).abs() < 1e-15);
        assert!((zmf(5.0, 2.0, 6.0).unwrap() - 0.125).abs() < 1e-15);
        assert!(zmf(1.0, 3.0, 3.0).is_err());
    }

    #[test]
    fn one_outlier_selects_the_median() {
        let mut t = vec![100.0; 7];
        t.push(240.0);
        let f = fuse_output(&t).unwrap();
        assert_eq!(f.mean, 117.5);
        assert_eq!(f.median, 100.0);
        assert!((f.std - 2450f64.sqrt()).abs() < 1e-12);
        assert_eq!(f.value, 100.0);
        assert_eq!(f.threshold(), 100);
    }

    #[test]
    fn constant_outputs() {
        let f = fuse_output(&[87.25; 8]).unwrap();
        assert_eq!((f.value, f.weight), (87.25, 1.0));
        let z = fuse_output(&[0.0; 8]).unwrap();
        assert!(z.zero_mean);
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn threshold_is_clamped() {
        assert_eq!(fuse_output(&[-20.0; 8]).unwrap().threshold(), 0);
        assert_eq!(fuse_output(&[300.0; 8]).unwrap().threshold(), 255);
    }
}
