//! Seeded synthetic ultrasound-like images with exact gold masks.
//!
//! Each image has a bright speckled background with a depth gradient, a
//! dark elliptical lesion (the object) and a band of intermediate intensity
//! along the top. The band pulls variance-based global thresholds away from
//! the lesion, so a good threshold has to be learned rather than computed
//! from the histogram alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, DatasetImage};
use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, GrayImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub count: usize,
    pub seed: u64,
    pub min_side: usize,
    pub max_side: usize,
    /// Shape of the unit-mean gamma speckle; larger is smoother.
    pub speckle_shape: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 35,
            seed: 2016,
            min_side: 110,
            max_side: 170,
            speckle_shape: 10.0,
        }
    }
}

fn blur(buf: &[f64], w: usize, h: usize) -> Vec<f64> {
    const K: [f64; 5] = [0.054_488_7, 0.244_201_3, 0.402_619_9, 0.244_201_3, 0.054_488_7];
    let mut tmp = vec![0.0; buf.len()];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = K
                .iter()
                .enumerate()
                .map(|(i, k)| {
                    let xx = (x as isize + i as isize - 2).clamp(0, w as isize - 1) as usize;
                    k * buf[y * w + xx]
                })
                .sum();
        }
    }
    let mut out = vec![0.0; buf.len()];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = K
                .iter()
                .enumerate()
                .map(|(i, k)| {
                    let yy = (y as isize + i as isize - 2).clamp(0, h as isize - 1) as usize;
                    k * tmp[yy * w + x]
                })
                .sum();
        }
    }
    out
}

/// One image and its gold mask.
pub fn synth_image(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Result<(GrayImage, BinaryMask)> {
    let w = rng.random_range(cfg.min_side..=cfg.max_side);
    let h = rng.random_range(cfg.min_side..=cfg.max_side);
    let background: f64 = rng.random_range(120.0..190.0);
    let depth_gain: f64 = rng.random_range(0.0..0.15);
    let lesion = background - rng.random_range(60.0..100.0);
    let band_level = lesion + rng.random_range(0.35..0.65) * (background - lesion);
    let band_depth = rng.random_range(0.15..0.3) * h as f64;
    let band_wave = rng.random_range(0.02..0.06) * h as f64;
    let band_phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);

    let cx = rng.random_range(0.3..0.7) * w as f64;
    let cy = rng.random_range(0.55..0.75) * h as f64;
    let ax = rng.random_range(0.1..0.22) * w as f64;
    let ay = rng.random_range(0.08..0.16) * h as f64;
    let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (sin, cos) = angle.sin_cos();
    let inside = |x: usize, y: usize| {
        let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
        let u = (dx * cos + dy * sin) / ax;
        let v = (-dx * sin + dy * cos) / ay;
        u * u + v * v <= 1.0
    };

    let speckle = Gamma::new(cfg.speckle_shape, 1.0 / cfg.speckle_shape)
        .map_err(|e| Error::param(format!("speckle: {e}")))?;
    let mut buf = vec![0.0; w * h];
    for y in 0..h {
        let depth = 1.0 - depth_gain * y as f64 / h as f64;
        for x in 0..w {
            let edge = band_depth + band_wave * (x as f64 / w as f64 * 6.0 + band_phase).sin();
            let base = if inside(x, y) {
                lesion
            } else if (y as f64) < edge {
                band_level
            } else {
                background * depth
            };
            buf[y * w + x] = base * speckle.sample(rng);
        }
    }
    let buf = blur(&buf, w, h);
    let img = GrayImage::from_fn(w, h, |x, y| buf[y * w + x].round().clamp(0.0, 255.0) as u8)?;
    let gold = BinaryMask::from_fn(w, h, inside)?;
    Ok((img, gold))
}

/// `cfg.count` images named `img_000`, `img_001`, ...
pub fn synth_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    if cfg.min_side < 32 || cfg.min_side > cfg.max_side {
        return Err(Error::param("synthetic image sides must satisfy 32 <= min <= max"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ds = Dataset::new();
    for i in 0..cfg.count {
        let (image, gold) = synth_image(&mut rng, cfg)?;
        ds.insert(DatasetImage {
            id: format!("img_{i:03}"),
            image,
            gold: Some(gold),
        })?;
    }
    Ok(ds)
}
