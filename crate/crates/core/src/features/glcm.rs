//! Gray-level co-occurrence matrices and the four Haralick properties used
//! as texture features.
//!
//! Matrices are quantized to [`GLCM_LEVELS`] levels by min-max scaling,
//! pairs are taken at distance 1 and counted in both orders (symmetric), and
//! the co-occurrence matrix is normalized to sum to 1.

use serde::{Deserialize, Serialize};

use super::matrix::RealMatrix;

pub const GLCM_LEVELS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GlcmDirection {
    Deg0,
    Deg45,
    Deg90,
    Deg135,
}

impl GlcmDirection {
    pub const ALL: [GlcmDirection; 4] = [
        GlcmDirection::Deg0,
        GlcmDirection::Deg45,
        GlcmDirection::Deg90,
        GlcmDirection::Deg135,
    ];

    /// (row, column) offset of the paired pixel.
    pub fn offset(self) -> (isize, isize) {
        match self {
            GlcmDirection::Deg0 => (0, 1),
            GlcmDirection::Deg45 => (-1, 1),
            GlcmDirection::Deg90 => (-1, 0),
            GlcmDirection::Deg135 => (-1, -1),
        }
    }

    pub fn degrees(self) -> u32 {
        match self {
            GlcmDirection::Deg0 => 0,
            GlcmDirection::Deg45 => 45,
            GlcmDirection::Deg90 => 90,
            GlcmDirection::Deg135 => 135,
        }
    }
}

pub const GLCM_PROPERTIES: [&str; 4] = ["contrast", "correlation", "energy", "homogeneity"];

#[derive(Debug, Clone, PartialEq)]
pub struct GlcmFeatures {
    /// `[contrast, correlation, energy, homogeneity]` per direction, in the
    /// order the directions were requested.
    pub values: Vec<f64>,
    /// Some direction had zero marginal variance (e.g. a constant matrix);
    /// its correlation is reported as 0.
    pub zero_variance: bool,
}

pub fn quantize(m: &RealMatrix) -> Vec<usize> {
    let (lo, hi) = m
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    m.values()
        .iter()
        .map(|&v| {
            if span <= 0.0 {
                0
            } else {
                (((v - lo) / span * GLCM_LEVELS as f64).floor() as usize).min(GLCM_LEVELS - 1)
            }
        })
        .collect()
}

/// Normalized symmetric co-occurrence matrix, `GLCM_LEVELS^2` row-major.
/// All zeros when the matrix has no pixel pair in that direction.
pub fn cooccurrence(m: &RealMatrix, dir: GlcmDirection) -> Vec<f64> {
    let q = quantize(m);
    let (rows, cols) = (m.rows() as isize, m.cols() as isize);
    let (dr, dc) = dir.offset();
    let mut counts = vec![0f64; GLCM_LEVELS * GLCM_LEVELS];
    let mut total = 0f64;
    for r in 0..rows {
        for c in 0..cols {
            let (r2, c2) = (r + dr, c + dc);
            if r2 < 0 || r2 >= rows || c2 < 0 || c2 >= cols {
                continue;
            }
            let a = q[(r * cols + c) as usize];
            let b = q[(r2 * cols + c2) as usize];
            counts[a * GLCM_LEVELS + b] += 1.0;
            counts[b * GLCM_LEVELS + a] += 1.0;
            total += 2.0;
        }
    }
    if total > 0.0 {
        counts.iter_mut().for_each(|p| *p /= total);
    }
    counts
}

/// `[contrast, correlation, energy, homogeneity]` and a zero-variance flag.
pub fn haralick(p: &[f64]) -> ([f64; 4], bool) {
    let n = GLCM_LEVELS;
    if p.iter().all(|&v| v == 0.0) {
        // No pixel pairs: treat like a single-level matrix.
        return ([0.0, 0.0, 1.0, 1.0], true);
    }
    let mut mu_i = 0.0;
    let mut mu_j = 0.0;
    for i in 0..n {
        for j in 0..n {
            mu_i += i as f64 * p[i * n + j];
            mu_j += j as f64 * p[i * n + j];
        }
    }
    let mut var_i = 0.0;
    let mut var_j = 0.0;
    let mut contrast = 0.0;
    let mut cov = 0.0;
    let mut energy = 0.0;
    let mut homogeneity = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = p[i * n + j];
            let d = i as f64 - j as f64;
            var_i += (i as f64 - mu_i).powi(2) * v;
            var_j += (j as f64 - mu_j).powi(2) * v;
            contrast += d * d * v;
            cov += (i as f64 - mu_i) * (j as f64 - mu_j) * v;
            energy += v * v;
            homogeneity += v / (1.0 + d.abs());
        }
    }
    let denom = (var_i * var_j).sqrt();
    let zero_var = denom <= 1e-15;
    let correlation = if zero_var { 0.0 } else { cov / denom };
    ([contrast, correlation, energy, homogeneity], zero_var)
}

pub fn glcm_features(m: &RealMatrix, directions: &[GlcmDirection]) -> GlcmFeatures {
    let mut values = Vec::with_capacity(4 * directions.len());
    let mut zero_variance = false;
    for &dir in directions {
        let (props, zv) = haralick(&cooccurrence(m, dir));
        values.extend_from_slice(&props);
        zero_variance |= zv;
    }
    GlcmFeatures {
        values,
        zero_variance,
    }
}
