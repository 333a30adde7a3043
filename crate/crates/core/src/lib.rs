//! Image thresholding with fuzzy rules that configure themselves and learn from corrections.
//!
//! The crate learns to predict a per-image global threshold from
//! expert-corrected segmentations:
//!
//! * [`imaging`]: rasters, baseline thresholding methods, Jaccard scoring and
//!   exhaustive optimal-threshold search.
//! * [`features`]: interest points, seed selection and the 108-column feature
//!   vector per seed, aggregated into 8 statistic rows per image.
//! * [`selection`]: correlation pruning, five unsupervised selectors and the
//!   quorum vote producing the final feature set.
//! * [`fuzzy`]: Takagi-Sugeno rule generation by subtractive clustering,
//!   inference, output fusion, row pruning and rule evolution.
//! * [`pipeline`]: phase orchestration, cross-validation and reporting.

pub mod error;
pub mod features;
pub mod fuzzy;
pub mod imaging;
pub mod pipeline;
pub mod selection;

pub use error::{Error, Result};

use std::path::Path;

/// Writes `bytes` to a sibling temporary file and renames it over `path`,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);

    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = dir.join(format!(
        ".{name}.{}.{}.tmp",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
