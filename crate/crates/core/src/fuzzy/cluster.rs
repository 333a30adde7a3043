//! Subtractive clustering on points already scaled to the unit hypercube.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleConfig {
    /// Neighbourhood radius `ra` in normalized units.
    pub radius: f64,
    /// `rb = squash * ra`, the radius over which an accepted center
    /// suppresses potential.
    pub squash: f64,
    pub accept_ratio: f64,
    pub reject_ratio: f64,
    /// Ridge penalty on the consequent slopes (biases are unpenalized), in
    /// min-max normalized input units.
    #[serde(default = "default_slope_ridge")]
    pub slope_ridge: f64,
}

fn default_slope_ridge() -> f64 {
    RuleConfig::default().slope_ridge
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            radius: 0.5,
            squash: 1.5,
            accept_ratio: 0.5,
            reject_ratio: 0.15,
            slope_ridge: 1e-2,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Initial potentials `P_i = sum_j exp(-4 |x_i - x_j|^2 / ra^2)`.
pub fn potentials(points: &[Vec<f64>], radius: f64) -> Vec<f64> {
    let alpha = 4.0 / (radius * radius);
    points
        .iter()
        .map(|p| points.iter().map(|q| (-alpha * sq_dist(p, q)).exp()).sum())
        .collect()
}

/// Indices of the points chosen as cluster centers, in selection order.
///
/// After each acceptance every potential is reduced by
/// `P_k exp(-4 |x - x_k|^2 / rb^2)`. A candidate above
/// `accept_ratio * P_1` is accepted, one below `reject_ratio * P_1` ends the
/// search, and one in between is accepted only if
/// `d_min / ra + P / P_1 >= 1`; otherwise its potential is zeroed and the
/// next best is tried. Ties go to the lower index.
pub fn subtractive_clustering(points: &[Vec<f64>], cfg: &RuleConfig) -> Vec<usize> {
    if points.is_empty() {
        return Vec::new();
    }
    let beta = 4.0 / (cfg.radius * cfg.squash).powi(2);
    let mut pot = potentials(points, cfg.radius);
    let argmax = |pot: &[f64]| {
        let mut best = 0;
        for (i, &v) in pot.iter().enumerate() {
            if v > pot[best] {
                best = i;
            }
        }
        best
    };

    let first = argmax(&pot);
    let p1 = pot[first];
    let mut centers = vec![first];
    let mut last = first;
    let mut last_pot = p1;
    loop {
        for (i, p) in points.iter().enumerate() {
            pot[i] -= last_pot * (-beta * sq_dist(p, &points[last])).exp();
            if pot[i] < 0.0 {
                pot[i] = 0.0;
            }
        }
        let next = loop {
            let k = argmax(&pot);
            let pk = pot[k];
            if pk <= 0.0 || pk < cfg.reject_ratio * p1 {
                break None;
            }
            if pk > cfg.accept_ratio * p1 {
                break Some(k);
            }
            let d_min = centers
                .iter()
                .map(|&c| sq_dist(&points[k], &points[c]).sqrt())
                .fold(f64::INFINITY, f64::min);
            if d_min / cfg.radius + pk / p1 >= 1.0 {
                break Some(k);
            }
            pot[k] = 0.0;
        };
        match next {
            Some(k) => {
                last_pot = pot[k];
                last = k;
                centers.push(k);
                if centers.len() == points.len() {
                    break;
                }
            }
            None => break,
        }
    }
    centers
}
