//! Seed points and the per-image feature block.
//!
//! For every seed a `Z x Z` patch is cut out and described by 108 numbers
//! (see [`feature_schema`]); the per-seed rows form `F1`, and eight column
//! statistics of `F1` form the image's block `F2`.

mod detector;
mod glcm;
mod matrix;
mod seeds;
mod stats;
mod transforms;

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::imaging::GrayImage;

pub use detector::{detect_interest_points, DetectorConfig, SeedPoint, DESCRIPTOR_LEN};
pub use glcm::{
    cooccurrence, glcm_features, haralick, quantize, GlcmDirection, GlcmFeatures, GLCM_LEVELS,
    GLCM_PROPERTIES,
};
pub use matrix::{Patch, RealMatrix};
pub use seeds::{extract_patch, rectangle_size, select_seeds, SeedSelection};
pub use stats::{descriptor_features, descriptor_matrix, stats8, DescriptorStats, Stats8};
pub use transforms::{
    dct2, gradient_magnitude, haar_approximation, transform_stack, TransformStack,
};

/// Number of features extracted per seed.
pub const FEATURE_COUNT: usize = 108;

/// Row order of an image block.
pub const STATISTIC_ROWS: [&str; 8] = [
    "mean",
    "median",
    "mode",
    "std",
    "covariance",
    "range",
    "min",
    "max",
];

pub const STATISTIC_COUNT: usize = STATISTIC_ROWS.len();

const SOURCES: [&str; 4] = ["rc", "dc", "ac", "gm"];

/// Column names, in extraction order:
///
/// * `{rc,dc,ac,gm}_{stat}`: [`Stats8`] of the patch (`rc`), its DCT (`dc`),
///   its Haar approximation (`ac`) and its gradient magnitude (`gm`); 32
///   columns. `covariance` is the mean off-diagonal entry of the column
///   covariance matrix.
/// * `ds_{stat}`: [`DescriptorStats`] of the seed descriptor; 8 columns.
/// * `{rc,dc,ac,gm}_glcm{0,45,90,135}_{prop}`: Haralick properties; 64.
/// * `ds_glcm0_{prop}`: Haralick properties of the descriptor as 16x8; 4.
pub fn feature_schema() -> Vec<String> {
    let mut names = Vec::with_capacity(FEATURE_COUNT);
    for src in SOURCES {
        for s in Stats8::NAMES {
            names.push(format!("{src}_{s}"));
        }
    }
    for s in DescriptorStats::NAMES {
        names.push(format!("ds_{s}"));
    }
    for src in SOURCES {
        for dir in GlcmDirection::ALL {
            for p in GLCM_PROPERTIES {
                names.push(format!("{src}_glcm{}_{p}", dir.degrees()));
            }
        }
    }
    for p in GLCM_PROPERTIES {
        names.push(format!("ds_glcm0_{p}"));
    }
    debug_assert_eq!(names.len(), FEATURE_COUNT);
    names
}

/// Real matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    names: Vec<String>,
    data: DMatrix<f64>,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, data: DMatrix<f64>) -> Result<Self> {
        if names.len() != data.ncols() {
            return Err(Error::param(format!(
                "{} column names for {} columns",
                names.len(),
                data.ncols()
            )));
        }
        Ok(Self { names, data })
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = names.len();
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::param("ragged feature rows"));
        }
        let data = DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]);
        Self::new(names, data)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.data.row(r).iter().copied().collect()
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.data.column(c).iter().copied().collect()
    }

    /// Writes a header row of column names, then one line per row. An
    /// optional leading label column is written first when `labels` is given.
    pub fn write_csv(&self, path: impl AsRef<Path>, labels: Option<(&str, &[String])>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = Vec::new();
        if let Some((name, _)) = labels {
            header.push(name.to_string());
        }
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for r in 0..self.nrows() {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            if let Some((_, l)) = labels {
                rec.push(l[r].clone());
            }
            rec.extend(self.data.row(r).iter().map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Reads a file written by [`FeatureMatrix::write_csv`]. With
    /// `label_column`, the first column is returned separately.
    pub fn read_csv(path: impl AsRef<Path>, label_column: bool) -> Result<(Self, Vec<String>)> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)?;
        let header = rdr.headers()?.clone();
        let skip = label_column as usize;
        let names: Vec<String> = header.iter().skip(skip).map(str::to_string).collect();
        let mut labels = Vec::new();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if label_column {
                labels.push(rec.get(0).unwrap_or_default().to_string());
            }
            let row = rec
                .iter()
                .skip(skip)
                .map(|s| {
                    s.parse::<f64>().map_err(|e| Error::Artifact {
                        path: path.to_path_buf(),
                        reason: format!("bad number {s:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok((Self::from_rows(names, &rows)?, labels))
    }
}

fn sanitize(values: &mut [f64], context: &str) {
    for v in values.iter_mut() {
        if !v.is_finite() {
            log::warn!("non-finite feature in {context}; replaced by 0");
            *v = 0.0;
        }
    }
}

/// The 108 features of one seed.
pub fn seed_features(img: &GrayImage, seed: &SeedPoint, z: usize) -> Vec<f64> {
    let patch = extract_patch(img, seed, z);
    let stack = transform_stack(&patch);
    let sources = [&patch, &stack.dct, &stack.approximation, &stack.gradient];

    let mut row = Vec::with_capacity(FEATURE_COUNT);
    for m in sources {
        row.extend(stats8(m).to_array());
    }
    row.extend(descriptor_features(&seed.descriptor).to_array());
    for m in sources {
        row.extend(glcm_features(m, &GlcmDirection::ALL).values);
    }
    let ds = descriptor_matrix(&seed.descriptor);
    row.extend(glcm_features(&ds, &[GlcmDirection::Deg0]).values);
    sanitize(&mut row, "seed features");
    row
}

/// Per-seed feature matrix `F1` (`seeds x 108`).
pub fn build_f1(img: &GrayImage, seeds: &[SeedPoint], z: usize) -> Result<FeatureMatrix> {
    if seeds.is_empty() {
        return Err(Error::EmptyInput("build_f1 needs at least one seed".into()));
    }
    let rows: Vec<Vec<f64>> = seeds.iter().map(|s| seed_features(img, s, z)).collect();
    FeatureMatrix::from_rows(feature_schema(), &rows)
}

/// Eight statistic rows summarizing one image's `F1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatureBlock {
    pub image_id: String,
    pub matrix: FeatureMatrix,
    /// `F1` had a single row, so the spread rows are 0.
    pub single_seed: bool,
}

/// Per-column mean, median, mode, sample std, covariance, range, min and max
/// of `F1`, one statistic per row in [`STATISTIC_ROWS`] order. For a single
/// column the covariance is its sample variance.
pub fn build_f2(image_id: &str, f1: &FeatureMatrix) -> Result<ImageFeatureBlock> {
    if f1.nrows() == 0 {
        return Err(Error::EmptyInput("build_f2 needs a nonempty F1".into()));
    }
    let single_seed = f1.nrows() == 1;
    if single_seed {
        log::debug!("image {image_id}: single seed, spread statistics are 0");
    }
    let ncols = f1.ncols();
    let mut data = DMatrix::zeros(STATISTIC_COUNT, ncols);
    for c in 0..ncols {
        let col = f1.column(c);
        let var = stats::sample_variance(&col);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut values = [
            stats::mean(&col),
            stats::median(&col),
            stats::mode(&col),
            var.sqrt(),
            var,
            hi - lo,
            lo,
            hi,
        ];
        sanitize(&mut values, "image statistics");
        for (r, v) in values.into_iter().enumerate() {
            data[(r, c)] = v;
        }
    }
    Ok(ImageFeatureBlock {
        image_id: image_id.to_string(),
        matrix: FeatureMatrix::new(f1.names().to_vec(), data)?,
        single_seed,
    })
}

/// Everything extracted from one image during self-configuration.
#[derive(Debug, Clone)]
pub struct ImageFeatures {
    pub seeds: Vec<SeedPoint>,
    pub center_fallback: bool,
    pub f1: FeatureMatrix,
    pub f2: ImageFeatureBlock,
}

/// Detect, select seeds, and build `F1` and `F2` for one image.
pub fn extract_image_features(
    image_id: &str,
    img: &GrayImage,
    z: usize,
    cfg: &DetectorConfig,
) -> Result<ImageFeatures> {
    let points = detect_interest_points(img, cfg)?;
    let selection = select_seeds(&points, z, img)?;
    if selection.center_fallback {
        log::warn!("image {image_id}: no interest points, using center seed");
    }
    let f1 = build_f1(img, &selection.seeds, z)?;
    let f2 = build_f2(image_id, &f1)?;
    Ok(ImageFeatures {
        seeds: selection.seeds,
        center_fallback: selection.center_fallback,
        f1,
        f2,
    })
}
