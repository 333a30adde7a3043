//! Difference-of-Gaussians interest points with 128-bin gradient descriptors.
//!
//! Follows the usual SIFT recipe: a Gaussian scale space per octave,
//! 26-neighbour extrema of the DoG stack, quadratic sub-pixel refinement,
//! contrast and edge rejection, one dominant orientation per point, and a
//! 4x4x8 orientation-histogram descriptor (normalized, clipped at 0.2,
//! renormalized, scaled by 512 and rounded to integer bins in `0..=255`).
//! There is no initial upsampling. Everything runs single threaded in a fixed
//! order, so output is a pure function of the image and the config.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::GrayImage;

pub const DESCRIPTOR_LEN: usize = 128;
const DESCRIPTOR_HISTS: usize = 4;
const DESCRIPTOR_BINS: usize = 8;
const ORIENTATION_BINS: usize = 36;
const INPUT_BLUR: f32 = 0.5;
const MAX_REFINE_STEPS: usize = 5;
const MIN_SIDE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub octaves: usize,
    pub scales_per_octave: usize,
    pub base_sigma: f32,
    pub contrast_threshold: f32,
    pub edge_ratio: f32,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            octaves: 4,
            scales_per_octave: 3,
            base_sigma: 1.6,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
        }
    }
}

/// Interest point at integer pixel coordinates with its descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedPoint {
    pub x: usize,
    pub y: usize,
    pub descriptor: Vec<f64>,
    pub response: f64,
}

impl SeedPoint {
    /// L1 norm of the descriptor, used to rank seeds.
    pub fn salience(&self) -> f64 {
        self.descriptor.iter().map(|v| v.abs()).sum()
    }
}

#[derive(Debug, Clone)]
struct Plane {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Plane {
    fn from_image(img: &GrayImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            data: img.pixels().iter().map(|&v| v as f32 / 255.0).collect(),
        }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    fn blur(&self, sigma: f32) -> Plane {
        let radius = (3.0 * sigma).ceil().max(1.0) as isize;
        let mut kernel: Vec<f32> = (-radius..=radius)
            .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
            .collect();
        let norm: f32 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= norm);

        let (w, h) = (self.width as isize, self.height as isize);
        let mut tmp = vec![0f32; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0f32;
                for (k, i) in kernel.iter().zip(-radius..=radius) {
                    let xx = (x + i).clamp(0, w - 1);
                    acc += k * self.data[(y * w + xx) as usize];
                }
                tmp[(y * w + x) as usize] = acc;
            }
        }
        let mut out = vec![0f32; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0f32;
                for (k, i) in kernel.iter().zip(-radius..=radius) {
                    let yy = (y + i).clamp(0, h - 1);
                    acc += k * tmp[(yy * w + x) as usize];
                }
                out[(y * w + x) as usize] = acc;
            }
        }
        Plane {
            width: self.width,
            height: self.height,
            data: out,
        }
    }

    fn downsample(&self) -> Plane {
        let width = self.width.div_ceil(2);
        let height = self.height.div_ceil(2);
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(self.at(2 * x, 2 * y));
            }
        }
        Plane {
            width,
            height,
            data,
        }
    }

    fn sub(&self, other: &Plane) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

struct Octave {
    gauss: Vec<Plane>,
    dog: Vec<Plane>,
}

fn build_scale_space(img: &GrayImage, cfg: &DetectorConfig, n_octaves: usize) -> Vec<Octave> {
    let s = cfg.scales_per_octave;
    let k = 2f32.powf(1.0 / s as f32);
    let sigma0 = cfg.base_sigma;
    let initial = (sigma0 * sigma0 - INPUT_BLUR * INPUT_BLUR).max(0.01).sqrt();
    let mut base = Plane::from_image(img).blur(initial);

    let mut octaves = Vec::with_capacity(n_octaves);
    for o in 0..n_octaves {
        if o > 0 {
            let prev: &Octave = &octaves[o - 1];
            base = prev.gauss[s].downsample();
        }
        let mut gauss = vec![base.clone()];
        for i in 1..s + 3 {
            let prev_sigma = sigma0 * k.powi(i as i32 - 1);
            let total = prev_sigma * k;
            let step = (total * total - prev_sigma * prev_sigma).sqrt();
            let next = gauss[i - 1].blur(step);
            gauss.push(next);
        }
        let dog = gauss.windows(2).map(|w| w[1].sub(&w[0])).collect();
        octaves.push(Octave { gauss, dog });
    }
    octaves
}

fn is_extremum(dog: &[Plane], i: usize, x: usize, y: usize) -> bool {
    let v = dog[i].at(x, y);
    let mut is_max = v > 0.0;
    let mut is_min = v < 0.0;
    for plane in &dog[i - 1..=i + 1] {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                let n = plane.at(xx, yy);
                is_max &= v >= n;
                is_min &= v <= n;
            }
        }
        if !is_max && !is_min {
            return false;
        }
    }
    is_max || is_min
}

struct Refined {
    x: f32,
    y: f32,
    layer: f32,
    ix: usize,
    iy: usize,
    il: usize,
    contrast: f32,
}

fn refine(
    dog: &[Plane],
    mut il: usize,
    mut ix: usize,
    mut iy: usize,
    cfg: &DetectorConfig,
) -> Option<Refined> {
    let s = cfg.scales_per_octave;
    let (w, h) = (dog[0].width, dog[0].height);
    for _ in 0..MAX_REFINE_STEPS {
        let d = |l: usize, x: usize, y: usize| dog[l].at(x, y) as f64;
        let v = d(il, ix, iy);
        let grad = Vector3::new(
            (d(il, ix + 1, iy) - d(il, ix - 1, iy)) * 0.5,
            (d(il, ix, iy + 1) - d(il, ix, iy - 1)) * 0.5,
            (d(il + 1, ix, iy) - d(il - 1, ix, iy)) * 0.5,
        );
        let dxx = d(il, ix + 1, iy) + d(il, ix - 1, iy) - 2.0 * v;
        let dyy = d(il, ix, iy + 1) + d(il, ix, iy - 1) - 2.0 * v;
        let dss = d(il + 1, ix, iy) + d(il - 1, ix, iy) - 2.0 * v;
        let dxy = (d(il, ix + 1, iy + 1) - d(il, ix - 1, iy + 1) - d(il, ix + 1, iy - 1)
            + d(il, ix - 1, iy - 1))
            * 0.25;
        let dxs = (d(il + 1, ix + 1, iy) - d(il + 1, ix - 1, iy) - d(il - 1, ix + 1, iy)
            + d(il - 1, ix - 1, iy))
            * 0.25;
        let dys = (d(il + 1, ix, iy + 1) - d(il + 1, ix, iy - 1) - d(il - 1, ix, iy + 1)
            + d(il - 1, ix, iy - 1))
            * 0.25;
        let hess = Matrix3::new(dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss);
        let offset = -(hess.try_inverse()? * grad);

        if offset.iter().all(|o| o.abs() < 0.5) {
            let contrast = v + 0.5 * grad.dot(&offset);
            if (contrast.abs() as f32) * (s as f32) < cfg.contrast_threshold {
                return None;
            }
            // Principal curvature ratio on the 2x2 spatial Hessian.
            let tr = dxx + dyy;
            let det = dxx * dyy - dxy * dxy;
            let r = cfg.edge_ratio as f64;
            if det <= 0.0 || tr * tr * r >= (r + 1.0).powi(2) * det {
                return None;
            }
            return Some(Refined {
                x: ix as f32 + offset[0] as f32,
                y: iy as f32 + offset[1] as f32,
                layer: il as f32 + offset[2] as f32,
                ix,
                iy,
                il,
                contrast: contrast.abs() as f32,
            });
        }
        let nx = ix as f64 + offset[0].round();
        let ny = iy as f64 + offset[1].round();
        let nl = il as f64 + offset[2].round();
        if nx < 1.0
            || ny < 1.0
            || nl < 1.0
            || nx >= (w - 1) as f64
            || ny >= (h - 1) as f64
            || nl > s as f64
        {
            return None;
        }
        ix = nx as usize;
        iy = ny as usize;
        il = nl as usize;
    }
    None
}

fn gradient(plane: &Plane, x: isize, y: isize) -> Option<(f32, f32)> {
    if x < 1 || y < 1 || x >= plane.width as isize - 1 || y >= plane.height as isize - 1 {
        return None;
    }
    let (x, y) = (x as usize, y as usize);
    let dx = plane.at(x + 1, y) - plane.at(x - 1, y);
    let dy = plane.at(x, y + 1) - plane.at(x, y - 1);
    Some((dx, dy))
}

fn dominant_orientation(plane: &Plane, x: usize, y: usize, sigma: f32) -> f32 {
    let sigma_w = 1.5 * sigma;
    let radius = (3.0 * sigma_w).round() as isize;
    let mut hist = [0f32; ORIENTATION_BINS];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let Some((gx, gy)) = gradient(plane, x as isize + dx, y as isize + dy) else {
                continue;
            };
            let weight = (-((dx * dx + dy * dy) as f32) / (2.0 * sigma_w * sigma_w)).exp();
            let angle = gy.atan2(gx).rem_euclid(std::f32::consts::TAU);
            let bin = ((angle / std::f32::consts::TAU * ORIENTATION_BINS as f32).round() as usize)
                % ORIENTATION_BINS;
            hist[bin] += weight * (gx * gx + gy * gy).sqrt();
        }
    }
    // Two passes of [1 4 6 4 1] / 16 circular smoothing.
    for _ in 0..2 {
        let prev = hist;
        for (i, h) in hist.iter_mut().enumerate() {
            let at = |o: isize| prev[(i as isize + o).rem_euclid(ORIENTATION_BINS as isize) as usize];
            *h = (at(-2) + at(2) + 4.0 * (at(-1) + at(1)) + 6.0 * at(0)) / 16.0;
        }
    }
    let mut peak = 0;
    for i in 1..ORIENTATION_BINS {
        if hist[i] > hist[peak] {
            peak = i;
        }
    }
    let l = hist[(peak + ORIENTATION_BINS - 1) % ORIENTATION_BINS];
    let r = hist[(peak + 1) % ORIENTATION_BINS];
    let c = hist[peak];
    let denom = l - 2.0 * c + r;
    let shift = if denom.abs() > f32::EPSILON {
        0.5 * (l - r) / denom
    } else {
        0.0
    };
    ((peak as f32 + shift) / ORIENTATION_BINS as f32 * std::f32::consts::TAU)
        .rem_euclid(std::f32::consts::TAU)
}

fn descriptor(plane: &Plane, x: f32, y: f32, sigma: f32, angle: f32) -> Vec<f64> {
    let d = DESCRIPTOR_HISTS as f32;
    let n = DESCRIPTOR_BINS as f32;
    let hist_width = 3.0 * sigma;
    let radius = (hist_width * std::f32::consts::SQRT_2 * (d + 1.0) * 0.5).round() as isize;
    let (sin_t, cos_t) = angle.sin_cos();
    let mut hist = vec![0f32; (DESCRIPTOR_HISTS + 2) * (DESCRIPTOR_HISTS + 2) * (DESCRIPTOR_BINS + 2)];
    let idx = |r: usize, c: usize, o: usize| {
        (r * (DESCRIPTOR_HISTS + 2) + c) * (DESCRIPTOR_BINS + 2) + o
    };
    let cx = x.round() as isize;
    let cy = y.round() as isize;

    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let c_rot = (cos_t * dx as f32 + sin_t * dy as f32) / hist_width;
            let r_rot = (-sin_t * dx as f32 + cos_t * dy as f32) / hist_width;
            let rbin = r_rot + d / 2.0 - 0.5;
            let cbin = c_rot + d / 2.0 - 0.5;
            if rbin <= -1.0 || rbin >= d || cbin <= -1.0 || cbin >= d {
                continue;
            }
            let Some((gx, gy)) = gradient(plane, cx + dx, cy + dy) else {
                continue;
            };
            let mag = (gx * gx + gy * gy).sqrt();
            let ori = (gy.atan2(gx) - angle).rem_euclid(std::f32::consts::TAU);
            let obin = ori / std::f32::consts::TAU * n;
            let weight = (-(c_rot * c_rot + r_rot * r_rot) / (2.0 * (0.5 * d).powi(2))).exp();
            let v = mag * weight;

            let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
            let (fr, fc, fo) = (rbin - r0, cbin - c0, obin - o0);
            for (ri, wr) in [(0usize, 1.0 - fr), (1, fr)] {
                for (ci, wc) in [(0usize, 1.0 - fc), (1, fc)] {
                    for (oi, wo) in [(0usize, 1.0 - fo), (1, fo)] {
                        let r = (r0 as isize + 1 + ri as isize) as usize;
                        let c = (c0 as isize + 1 + ci as isize) as usize;
                        let o = (o0 as usize + oi) % DESCRIPTOR_BINS;
                        hist[idx(r, c, o)] += v * wr * wc * wo;
                    }
                }
            }
        }
    }

    let mut desc = Vec::with_capacity(DESCRIPTOR_LEN);
    for r in 1..=DESCRIPTOR_HISTS {
        for c in 1..=DESCRIPTOR_HISTS {
            for o in 0..DESCRIPTOR_BINS {
                desc.push(hist[idx(r, c, o)]);
            }
        }
    }
    let norm = desc.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm <= f32::EPSILON {
        return vec![0.0; DESCRIPTOR_LEN];
    }
    let clip = 0.2 * norm;
    desc.iter_mut().for_each(|v| *v = v.min(clip));
    let norm = desc.iter().map(|v| v * v).sum::<f32>().sqrt().max(f32::EPSILON);
    desc.iter()
        .map(|v| (v / norm * 512.0).round().clamp(0.0, 255.0) as f64)
        .collect()
}

/// Detects scale-space extrema and describes them.
///
/// Requires at least a 16x16 image. A constant image has a zero DoG stack and
/// yields no points.
pub fn detect_interest_points(img: &GrayImage, cfg: &DetectorConfig) -> Result<Vec<SeedPoint>> {
    let (w, h) = img.dims();
    if w < MIN_SIDE || h < MIN_SIDE {
        return Err(Error::InvalidImage(format!(
            "interest point detection needs at least {MIN_SIDE}x{MIN_SIDE}, got {w}x{h}"
        )));
    }
    if cfg.scales_per_octave == 0 || cfg.octaves == 0 {
        return Err(Error::param("detector needs at least one octave and one scale"));
    }
    let max_octaves = ((w.min(h) as f32).log2().floor() as usize).saturating_sub(2).max(1);
    let n_octaves = cfg.octaves.min(max_octaves);
    let octaves = build_scale_space(img, cfg, n_octaves);
    let s = cfg.scales_per_octave;
    let prefilter = 0.5 * cfg.contrast_threshold / s as f32;

    let mut points = Vec::new();
    for (o, octave) in octaves.iter().enumerate() {
        let (ow, oh) = (octave.dog[0].width, octave.dog[0].height);
        if ow < 3 || oh < 3 {
            continue;
        }
        let scale = (1usize << o) as f32;
        for il in 1..=s {
            for y in 1..oh - 1 {
                for x in 1..ow - 1 {
                    if octave.dog[il].at(x, y).abs() <= prefilter
                        || !is_extremum(&octave.dog, il, x, y)
                    {
                        continue;
                    }
                    let Some(kp) = refine(&octave.dog, il, x, y, cfg) else {
                        continue;
                    };
                    let sigma_oct = cfg.base_sigma * 2f32.powf(kp.layer / s as f32);
                    let plane = &octave.gauss[kp.il];
                    let angle = dominant_orientation(plane, kp.ix, kp.iy, sigma_oct);
                    let desc = descriptor(plane, kp.x, kp.y, sigma_oct, angle);
                    let px = ((kp.x * scale).round().max(0.0) as usize).min(w - 1);
                    let py = ((kp.y * scale).round().max(0.0) as usize).min(h - 1);
                    points.push(SeedPoint {
                        x: px,
                        y: py,
                        descriptor: desc,
                        response: kp.contrast as f64,
                    });
                }
            }
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob_image(cx: f32, cy: f32, radius: f32) -> GrayImage {
        GrayImage::from_fn(64, 64, |x, y| {
            let d2 = (x as f32 - cx).powi(2) + (y as f32 - cy).powi(2);
            (30.0 + 200.0 * (-d2 / (2.0 * radius * radius)).exp()) as u8
        })
        .unwrap()
    }

    #[test]
    fn constant_image_has_no_points() {
        let img = GrayImage::filled(40, 40, 128).unwrap();
        assert!(detect_interest_points(&img, &DetectorConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn blob_is_detected_inside_its_bounding_box() {
        let (cx, cy, r) = (30.0, 34.0, 4.0);
        let img = blob_image(cx, cy, r);
        let pts = detect_interest_points(&img, &DetectorConfig::default()).unwrap();
        assert!(!pts.is_empty());
        let reach = 2.0 * r;
        assert!(
            pts.iter().any(|p| (p.x as f32 - cx).abs() <= reach && (p.y as f32 - cy).abs() <= reach),
            "no point near blob: {:?}",
            pts.iter().map(|p| (p.x, p.y)).collect::<Vec<_>>()
        );
        for p in &pts {
            assert_eq!(p.descriptor.len(), DESCRIPTOR_LEN);
            assert!(p.descriptor.iter().all(|&v| (0.0..=255.0).contains(&v)));
        }
    }

    #[test]
    fn detection_is_deterministic() {
        let img = GrayImage::from_fn(48, 40, |x, y| {
            (((x * 31 + y * 17) % 97) as f32 * 2.0 + ((x / 8 + y / 8) % 2) as f32 * 40.0) as u8
        })
        .unwrap();
        let a = detect_interest_points(&img, &DetectorConfig::default()).unwrap();
        let b = detect_interest_points(&img, &DetectorConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn small_images_are_rejected() {
        let img = GrayImage::filled(15, 40, 0).unwrap();
        assert!(detect_interest_points(&img, &DetectorConfig::default()).is_err());
    }
}
