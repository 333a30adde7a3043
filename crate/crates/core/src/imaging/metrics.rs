use serde::{Deserialize, Serialize};

use super::{BinaryMask, GrayImage, Orientation};
use crate::error::{Error, Result};

/// Area overlap `|S n G| / |S u G|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationScore {
    pub jaccard: f64,
    /// Both masks had no object pixels; the score is defined as 1.
    pub both_empty: bool,
}

pub fn jaccard(segment: &BinaryMask, gold: &BinaryMask) -> Result<SegmentationScore> {
    if segment.dims() != gold.dims() {
        return Err(Error::DimensionMismatch {
            expected: gold.dims(),
            actual: segment.dims(),
        });
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&s, &g) in segment.labels().iter().zip(gold.labels()) {
        inter += (s & g) as usize;
        union += (s | g) as usize;
    }
    Ok(score_from_counts(inter, union))
}

fn score_from_counts(inter: usize, union: usize) -> SegmentationScore {
    if union == 0 {
        SegmentationScore {
            jaccard: 1.0,
            both_empty: true,
        }
    } else {
        SegmentationScore {
            jaccard: inter as f64 / union as f64,
            both_empty: false,
        }
    }
}

/// Best achievable global threshold against a gold standard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaaResult {
    pub t_star: u8,
    pub j_max: f64,
    pub orientation: Orientation,
}

/// Exhaustive search over all 256 thresholds (and optionally both
/// orientations). Ties keep the smallest threshold, and the configured
/// orientation wins ties against its flip.
///
/// Runs in `O(pixels + 256)`: the overlap for each `t` is read off the
/// cumulative histograms of all pixels and of gold-object pixels.
pub fn maa_search(
    img: &GrayImage,
    gold: &BinaryMask,
    orientation: Orientation,
    both_orientations: bool,
) -> Result<MaaResult> {
    if img.dims() != gold.dims() {
        return Err(Error::DimensionMismatch {
            expected: img.dims(),
            actual: gold.dims(),
        });
    }
    let mut all = [0usize; 256];
    let mut in_gold = [0usize; 256];
    for (&v, &g) in img.pixels().iter().zip(gold.labels()) {
        all[v as usize] += 1;
        in_gold[v as usize] += g as usize;
    }
    let total = img.pixels().len();
    let gold_count: usize = in_gold.iter().sum();

    let mut orientations = vec![orientation];
    if both_orientations {
        orientations.push(orientation.flipped());
    }

    let mut best: Option<MaaResult> = None;
    for &o in &orientations {
        let mut seg = 0usize;
        let mut inter = 0usize;
        for t in 0..256usize {
            seg += all[t];
            inter += in_gold[t];
            // Dark: object = intensities <= t. Bright: the complement.
            let (s, i) = match o {
                Orientation::DarkObject => (seg, inter),
                Orientation::BrightObject => (total - seg, gold_count - inter),
            };
            let j = score_from_counts(i, s + gold_count - i).jaccard;
            if best.is_none_or(|b| j > b.j_max) {
                best = Some(MaaResult {
                    t_star: t as u8,
                    j_max: j,
                    orientation: o,
                });
            }
        }
    }
    Ok(best.expect("256 thresholds evaluated"))
}
