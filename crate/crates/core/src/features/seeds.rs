use std::cmp::Ordering;

use super::detector::{SeedPoint, DESCRIPTOR_LEN};
use super::matrix::Patch;
use crate::error::{Error, Result};
use crate::imaging::GrayImage;

fn median(values: &[usize]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

/// Side of the feature window: a tenth of the larger of the median row
/// count and the median column count, rounded, made odd, and at least 3.
pub fn rectangle_size(row_sizes: &[usize], col_sizes: &[usize]) -> Result<usize> {
    if row_sizes.is_empty() || col_sizes.is_empty() {
        return Err(Error::EmptyInput("no image sizes to derive the window from".into()));
    }
    let z = (0.1 * median(row_sizes).max(median(col_sizes))).round() as usize;
    let z = if z.is_multiple_of(2) { z + 1 } else { z };
    Ok(z.max(3))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedSelection {
    pub seeds: Vec<SeedPoint>,
    /// No interest points were available; a single seed at the image center
    /// with an all-zero descriptor was used.
    pub center_fallback: bool,
}

fn salience_order(a: &SeedPoint, b: &SeedPoint) -> Ordering {
    b.salience()
        .total_cmp(&a.salience())
        .then(b.response.total_cmp(&a.response))
        .then((a.y, a.x).cmp(&(b.y, b.x)))
}

/// Greedy spatially separated seed selection.
///
/// Points are visited by decreasing descriptor L1 norm (then response, then
/// raster position) and accepted when their Chebyshev distance to every
/// accepted point is at least `z`.
pub fn select_seeds(points: &[SeedPoint], z: usize, img: &GrayImage) -> Result<SeedSelection> {
    if z < 3 {
        return Err(Error::param(format!("window size must be >= 3, got {z}")));
    }
    if points.is_empty() {
        log::warn!("no interest points; using the image center as the only seed");
        return Ok(SeedSelection {
            seeds: vec![SeedPoint {
                x: img.width() / 2,
                y: img.height() / 2,
                descriptor: vec![0.0; DESCRIPTOR_LEN],
                response: 0.0,
            }],
            center_fallback: true,
        });
    }
    let mut ordered: Vec<&SeedPoint> = points.iter().collect();
    ordered.sort_by(|a, b| salience_order(a, b));

    let mut accepted: Vec<SeedPoint> = Vec::new();
    for p in ordered {
        let separated = accepted
            .iter()
            .all(|q| p.x.abs_diff(q.x).max(p.y.abs_diff(q.y)) >= z);
        if separated {
            accepted.push(p.clone());
        }
    }
    Ok(SeedSelection {
        seeds: accepted,
        center_fallback: false,
    })
}

/// `z x z` window centered on the seed, clipped at the image border.
pub fn extract_patch(img: &GrayImage, seed: &SeedPoint, z: usize) -> Patch {
    let half = z / 2;
    let x0 = seed.x.saturating_sub(half);
    let y0 = seed.y.saturating_sub(half);
    let x1 = (seed.x + half + 1).min(img.width());
    let y1 = (seed.y + half + 1).min(img.height());
    Patch::from_fn(y1 - y0, x1 - x0, |r, c| img.get(x0 + c, y0 + r) as f64)
}
