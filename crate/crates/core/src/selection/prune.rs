use nalgebra::DMatrix;

use super::StackedFeatureMatrix;
use crate::error::{Error, Result};

/// Slack for comparing |r| against a threshold, so exact duplicates are
/// caught at a threshold of 1.
const CORRELATION_SLACK: f64 = 1e-12;

pub(crate) fn is_constant(col: &[f64]) -> bool {
    let (lo, hi) = col
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1.0)
}

/// Pearson correlation; `None` when either column has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub matrix: StackedFeatureMatrix,
    /// Kept column indices into the input, ascending.
    pub kept: Vec<usize>,
    /// Columns dropped for having zero variance.
    pub constant: Vec<usize>,
}

fn columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.ncols())
        .map(|c| m.column(c).iter().copied().collect())
        .collect()
}

/// Drops constant columns, then walks the rest in column order and keeps a
/// column only if its |Pearson r| with every kept column is below
/// `threshold`.
pub fn correlation_prune(f: &StackedFeatureMatrix, threshold: f64) -> Result<PruneOutcome> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::param(format!(
            "correlation threshold must be in (0, 1], got {threshold}"
        )));
    }
    if f.nrows() == 0 || f.ncols() == 0 {
        return Err(Error::EmptyInput("correlation_prune on an empty matrix".into()));
    }
    let cols = columns(f.features().data());
    let constant: Vec<usize> = (0..cols.len()).filter(|&c| is_constant(&cols[c])).collect();
    if constant.len() == cols.len() {
        return Err(Error::NoInformativeFeatures);
    }
    if !constant.is_empty() {
        log::info!("dropping {} constant feature columns", constant.len());
    }

    let mut kept: Vec<usize> = Vec::new();
    for c in 0..cols.len() {
        if constant.binary_search(&c).is_ok() {
            continue;
        }
        let redundant = kept.iter().any(|&k| {
            pearson(&cols[c], &cols[k])
                .is_some_and(|r| r.abs() >= threshold - CORRELATION_SLACK)
        });
        if !redundant {
            kept.push(c);
        }
    }
    Ok(PruneOutcome {
        matrix: f.select_columns(&kept)?,
        kept,
        constant,
    })
}

/// `N_T2` and the matrix `F_C` obtained by pruning `F4` at `threshold`.
pub fn determine_cardinality(f4: &StackedFeatureMatrix, threshold: f64) -> Result<(usize, PruneOutcome)> {
    let out = correlation_prune(f4, threshold)?;
    Ok((out.kept.len(), out))
}

/// Final decorrelation of the voted matrix `F5`.
pub fn finalize(f5: &StackedFeatureMatrix, threshold: f64) -> Result<PruneOutcome> {
    correlation_prune(f5, threshold)
}
