use serde::{Deserialize, Serialize};

use super::{BinaryMask, GrayImage, Orientation};
use crate::error::{Error, Result};

pub const NIBLACK_DEFAULT_WINDOW: usize = 25;
pub const NIBLACK_DEFAULT_K: f64 = -0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NiblackParams {
    pub window: usize,
    pub k: f64,
}

impl Default for NiblackParams {
    fn default() -> Self {
        Self {
            window: NIBLACK_DEFAULT_WINDOW,
            k: NIBLACK_DEFAULT_K,
        }
    }
}

/// Local threshold `mean + k * std` over a `window x window` neighbourhood.
///
/// The window is clamped at the image border (only in-image pixels are
/// averaged) and the standard deviation is the population one. A window
/// larger than the image is shrunk to the image size with a warning.
pub fn niblack(
    img: &GrayImage,
    window: usize,
    k: f64,
    orientation: Orientation,
) -> Result<BinaryMask> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::param(format!(
            "niblack window must be odd and >= 3, got {window}"
        )));
    }
    let (w, h) = img.dims();
    let longest = w.max(h);
    let window = if window > longest {
        log::warn!("niblack window {window} exceeds image {w}x{h}; clamping");
        if longest % 2 == 0 {
            longest + 1
        } else {
            longest
        }
    } else {
        window
    };
    let half = window / 2;

    // Summed-area tables with a zero guard row/column.
    let stride = w + 1;
    let mut sum = vec![0f64; (h + 1) * stride];
    let mut sum_sq = vec![0f64; (h + 1) * stride];
    for y in 0..h {
        let mut row = 0f64;
        let mut row_sq = 0f64;
        for x in 0..w {
            let v = img.get(x, y) as f64;
            row += v;
            row_sq += v * v;
            sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + row;
            sum_sq[(y + 1) * stride + x + 1] = sum_sq[y * stride + x + 1] + row_sq;
        }
    }
    let rect = |table: &[f64], x0: usize, y0: usize, x1: usize, y1: usize| {
        table[y1 * stride + x1] - table[y0 * stride + x1] - table[y1 * stride + x0]
            + table[y0 * stride + x0]
    };

    BinaryMask::from_fn(w, h, |x, y| {
        let x0 = x.saturating_sub(half);
        let y0 = y.saturating_sub(half);
        let x1 = (x + half + 1).min(w);
        let y1 = (y + half + 1).min(h);
        let n = ((x1 - x0) * (y1 - y0)) as f64;
        let mean = rect(&sum, x0, y0, x1, y1) / n;
        let var = (rect(&sum_sq, x0, y0, x1, y1) / n - mean * mean).max(0.0);
        let t = mean + k * var.sqrt();
        orientation.is_object(img.get(x, y) as f64, t)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_is_all_object_for_dark_orientation() {
        let img = GrayImage::filled(9, 7, 120).unwrap();
        let m = niblack(&img, 3, -0.2, Orientation::DarkObject).unwrap();
        assert_eq!(m.object_count(), 63);
        let m = niblack(&img, 3, -0.2, Orientation::BrightObject).unwrap();
        assert_eq!(m.object_count(), 0);
    }

    #[test]
    fn center_pixel_matches_hand_computation() {
        // 3x3 window at the center covers the whole image.
        let data = vec![10, 20, 30, 40, 52, 60, 70, 80, 90];
        let img = GrayImage::new(3, 3, data.clone()).unwrap();
        let mean = data.iter().map(|&v| v as f64).sum::<f64>() / 9.0;
        let var = data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / 9.0;
        for k in [-0.2, 0.0, 0.3] {
            let t = mean + k * var.sqrt();
            let m = niblack(&img, 3, k, Orientation::DarkObject).unwrap();
            assert_eq!(m.get(1, 1), 52.0 <= t, "k = {k}");
        }
    }

    #[test]
    fn k_zero_thresholds_at_local_mean() {
        let img = GrayImage::from_fn(12, 10, |x, y| ((x * 37 + y * 91) % 256) as u8).unwrap();
        let m = niblack(&img, 5, 0.0, Orientation::DarkObject).unwrap();
        for y in 0..10usize {
            for x in 0..12usize {
                let (x0, x1) = (x.saturating_sub(2), (x + 3).min(12));
                let (y0, y1) = (y.saturating_sub(2), (y + 3).min(10));
                let mut s = 0.0;
                for yy in y0..y1 {
                    for xx in x0..x1 {
                        s += img.get(xx, yy) as f64;
                    }
                }
                let mean = s / ((x1 - x0) * (y1 - y0)) as f64;
                let v = img.get(x, y) as f64;
                if (v - mean).abs() > 1e-6 {
                    assert_eq!(m.get(x, y), v < mean);
                }
            }
        }
    }

    #[test]
    fn rejects_even_or_tiny_windows_and_clamps_large_ones() {
        let img = GrayImage::filled(5, 5, 1).unwrap();
        assert!(niblack(&img, 4, 0.0, Orientation::DarkObject).is_err());
        assert!(niblack(&img, 1, 0.0, Orientation::DarkObject).is_err());
        assert!(niblack(&img, 101, 0.0, Orientation::DarkObject).is_ok());
    }
}
