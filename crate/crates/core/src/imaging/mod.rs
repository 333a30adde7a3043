//! Raster types, histogram-based global thresholding, Niblack local
//! thresholding, and Jaccard scoring.

mod metrics;
mod niblack;
mod threshold;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use metrics::{jaccard, maa_search, MaaResult, SegmentationScore};
pub use niblack::{niblack, NiblackParams, NIBLACK_DEFAULT_K, NIBLACK_DEFAULT_WINDOW};
pub use threshold::{
    huang, huang_criterion, kittler, kittler_criterion, otsu, otsu_criterion, tizhoosh_interval,
    tizhoosh_criterion, GlobalMethod, ThresholdFlag, ThresholdOutcome, KITTLER_VARIANCE_FLOOR,
    TIZHOOSH_DEFAULT_ALPHA,
};

/// 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "image must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Decodes any format the `image` crate understands (PNG, PGM, ...) and
    /// converts to 8-bit luma.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Codec {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_luma(img.to_luma8())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes)
            .map_err(|e| Error::InvalidImage(format!("cannot decode image: {e}")))?;
        Self::from_luma(img.to_luma8())
    }

    fn from_luma(luma: image::GrayImage) -> Result<Self> {
        let (w, h) = luma.dimensions();
        Self::new(w as usize, h as usize, luma.into_raw())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_luma()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Codec {
                path: path.to_path_buf(),
                source,
            })
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        encode_png(&self.to_luma())
    }

    fn to_luma(&self) -> image::GrayImage {
        image::GrayImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("dimensions checked at construction")
    }
}

/// Which side of a global threshold is labeled object (1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// `intensity <= t` is object. Hypoechoic lesions are darker than tissue.
    #[default]
    DarkObject,
    /// `intensity > t` is object.
    BrightObject,
}

impl Orientation {
    pub fn flipped(self) -> Self {
        match self {
            Orientation::DarkObject => Orientation::BrightObject,
            Orientation::BrightObject => Orientation::DarkObject,
        }
    }

    #[inline]
    pub fn is_object(self, value: f64, threshold: f64) -> bool {
        match self {
            Orientation::DarkObject => value <= threshold,
            Orientation::BrightObject => value > threshold,
        }
    }
}

/// Object/background labeling with 1 = object (white), 0 = background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
    /// Set when the mask came from a global threshold.
    orientation: Option<Orientation>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "mask {width}x{height} has {} labels",
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::InvalidImage("mask labels must be 0 or 1".into()));
        }
        Ok(Self {
            width,
            height,
            labels,
            orientation: None,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let mut labels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                labels.push(f(x, y) as u8);
            }
        }
        Self::new(width, height, labels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn orientation(&self) -> Option<Orientation> {
        self.orientation
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.labels[y * self.width + x] == 1
    }

    pub fn set(&mut self, x: usize, y: usize, object: bool) {
        self.labels[y * self.width + x] = object as u8;
    }

    pub fn object_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            labels: self.labels.iter().map(|&l| 1 - l).collect(),
            orientation: self.orientation.map(Orientation::flipped),
        }
    }

    /// Any nonzero pixel is object, so masks saved as {0,255} or {0,1} both load.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = GrayImage::load(path)?;
        Ok(Self::from_gray(&img))
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        Ok(Self::from_gray(&GrayImage::decode(bytes)?))
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            width: img.width,
            height: img.height,
            labels: img.data.iter().map(|&v| (v > 0) as u8).collect(),
            orientation: None,
        }
    }

    /// Object pixels as 255, background as 0.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.labels.iter().map(|&l| l * 255).collect(),
        }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_gray().save_png(path)
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        self.to_gray().encode_png()
    }
}

fn encode_png(img: &image::GrayImage) -> Result<Vec<u8>> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::InvalidImage(format!("png encoding failed: {e}")))?;
    Ok(out.into_inner())
}

/// 256-bin intensity histogram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    counts: [u64; 256],
}

impl Histogram {
    pub fn from_counts(counts: [u64; 256]) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[u64; 256] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn populated_bins(&self) -> impl Iterator<Item = usize> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, _)| i)
    }

    /// Lowest and highest populated bins.
    pub fn first_last(&self) -> Option<(usize, usize)> {
        let first = self.counts.iter().position(|&c| c > 0)?;
        let last = self.counts.iter().rposition(|&c| c > 0)?;
        Some((first, last))
    }
}

pub fn histogram(img: &GrayImage) -> Histogram {
    let mut counts = [0u64; 256];
    for &v in &img.data {
        counts[v as usize] += 1;
    }
    Histogram { counts }
}

pub fn apply_threshold(img: &GrayImage, t: u8, orientation: Orientation) -> BinaryMask {
    let labels = img
        .data
        .iter()
        .map(|&v| orientation.is_object(v as f64, t as f64) as u8)
        .collect();
    BinaryMask {
        width: img.width,
        height: img.height,
        labels,
        orientation: Some(orientation),
    }
}
