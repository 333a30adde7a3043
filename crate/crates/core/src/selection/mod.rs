//! Reduces the stacked per-image feature blocks (`F3`) to the final feature
//! set `F*`: a 99% correlation prune (`F4`), a 90% prune that fixes the
//! target count `N_T2` and yields `F_C`, five unsupervised selectors, a
//! majority vote (`F5`) and a last 90% prune.

mod prune;
mod selectors;
mod vote;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, ImageFeatureBlock};

pub use prune::{correlation_prune, determine_cardinality, finalize, pearson, PruneOutcome};
pub use selectors::{
    fs_feature_similarity, fs_greedy, fs_laplacian, fs_mcfs, fs_spectral, laplacian_scores,
    lasso_path, mcfs_scores, mici, spectral_scores, standardize,
};
pub use vote::{ensemble_vote, VoteOutcome};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RowLabel {
    pub image_id: String,
    pub statistic: String,
}

impl RowLabel {
    fn encode(&self) -> String {
        format!("{}:{}", self.image_id, self.statistic)
    }

    fn decode(s: &str) -> Option<Self> {
        let (image_id, statistic) = s.rsplit_once(':')?;
        Some(Self {
            image_id: image_id.to_string(),
            statistic: statistic.to_string(),
        })
    }
}

/// Feature matrix whose rows are (image, statistic) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedFeatureMatrix {
    features: FeatureMatrix,
    rows: Vec<RowLabel>,
}

impl StackedFeatureMatrix {
    pub fn new(features: FeatureMatrix, rows: Vec<RowLabel>) -> Result<Self> {
        if rows.len() != features.nrows() {
            return Err(Error::param(format!(
                "{} row labels for {} rows",
                rows.len(),
                features.nrows()
            )));
        }
        let mut names: Vec<&String> = features.names().iter().collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::param("duplicate feature column names"));
        }
        Ok(Self { features, rows })
    }

    /// Appends image blocks in order. All blocks must share a schema.
    pub fn stack(blocks: &[ImageFeatureBlock]) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::EmptyInput("no image blocks to stack".into()))?;
        let names = first.matrix.names().to_vec();
        let mut data: Vec<Vec<f64>> = Vec::new();
        let mut rows = Vec::new();
        for b in blocks {
            if b.matrix.names() != names.as_slice() {
                return Err(Error::param(format!(
                    "image {} has a different feature schema",
                    b.image_id
                )));
            }
            for (r, stat) in crate::features::STATISTIC_ROWS.iter().enumerate() {
                data.push(b.matrix.row(r));
                rows.push(RowLabel {
                    image_id: b.image_id.clone(),
                    statistic: stat.to_string(),
                });
            }
        }
        Self::new(FeatureMatrix::from_rows(names, &data)?, rows)
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn rows(&self) -> &[RowLabel] {
        &self.rows
    }

    pub fn names(&self) -> &[String] {
        self.features.names()
    }

    pub fn nrows(&self) -> usize {
        self.features.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.features.ncols()
    }

    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.ncols()) {
            return Err(Error::param(format!("column {bad} out of range")));
        }
        let data = self.features.data().select_columns(cols);
        let names = cols.iter().map(|&c| self.names()[c].clone()).collect();
        Self::new(FeatureMatrix::new(names, data)?, self.rows.clone())
    }

    /// Column indices of `names` in this matrix.
    pub fn column_indices(&self, names: &[String]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.names()
                    .iter()
                    .position(|m| m == n)
                    .ok_or_else(|| Error::param(format!("unknown feature column {n}")))
            })
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let labels: Vec<String> = self.rows.iter().map(RowLabel::encode).collect();
        self.features.write_csv(path, Some(("row", &labels)))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (features, labels) = FeatureMatrix::read_csv(path, true)?;
        let rows = labels
            .iter()
            .map(|l| {
                RowLabel::decode(l).ok_or_else(|| Error::Artifact {
                    path: path.to_path_buf(),
                    reason: format!("bad row label {l:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(features, rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    Correlation,
    Laplacian,
    FeatureSimilarity,
    Spectral,
    MultiCluster,
    Greedy,
}

impl SelectionMethod {
    pub const SELECTORS: [SelectionMethod; 5] = [
        SelectionMethod::Greedy,
        SelectionMethod::Laplacian,
        SelectionMethod::FeatureSimilarity,
        SelectionMethod::Spectral,
        SelectionMethod::MultiCluster,
    ];

    pub fn tag(self) -> char {
        match self {
            SelectionMethod::Correlation => 'C',
            SelectionMethod::Laplacian => 'L',
            SelectionMethod::FeatureSimilarity => 'F',
            SelectionMethod::Spectral => 'P',
            SelectionMethod::MultiCluster => 'M',
            SelectionMethod::Greedy => 'G',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SelectionMethod::Correlation => "correlation",
            SelectionMethod::Laplacian => "laplacian_score",
            SelectionMethod::FeatureSimilarity => "feature_similarity",
            SelectionMethod::Spectral => "spectral",
            SelectionMethod::MultiCluster => "multi_cluster",
            SelectionMethod::Greedy => "greedy",
        }
    }
}

/// Column indices (into `F4`) chosen by one method.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub method: SelectionMethod,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectorConfig {
    /// Neighbours in the k-NN graphs.
    pub knn: usize,
    /// Spectral embedding dimension for the multi-cluster method.
    pub mcfs_clusters: usize,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            knn: 5,
            mcfs_clusters: 5,
        }
    }
}

/// Runs one of the five selectors on `F4`.
pub fn run_selector(
    method: SelectionMethod,
    f4: &StackedFeatureMatrix,
    k: usize,
    cfg: &SelectorConfig,
) -> Result<SelectionResult> {
    let x = f4.features().data();
    let indices = match method {
        SelectionMethod::Laplacian => fs_laplacian(x, k, cfg)?,
        SelectionMethod::FeatureSimilarity => fs_feature_similarity(x, k)?,
        SelectionMethod::Spectral => fs_spectral(x, k)?,
        SelectionMethod::MultiCluster => fs_mcfs(x, k, cfg)?,
        SelectionMethod::Greedy => fs_greedy(x, k)?,
        SelectionMethod::Correlation => {
            return Err(Error::param("correlation selection is determine_cardinality"))
        }
    };
    Ok(SelectionResult { method, indices })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Near-duplicate threshold for `F3 -> F4`.
    pub duplicate_threshold: f64,
    /// Similarity threshold for `N_T2` and `F5 -> F*`.
    pub similarity_threshold: f64,
    pub selectors: SelectorConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            duplicate_threshold: 0.99,
            similarity_threshold: 0.90,
            selectors: SelectorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeWidths {
    /// `N_T`: columns of `F3`.
    pub n_t: usize,
    /// `N_T1`: columns of `F4`.
    pub n_t1: usize,
    /// `N_T2`: target count for each selector.
    pub n_t2: usize,
    /// `N_T3`: columns of `F5`.
    pub n_t3: usize,
    /// `N_L`: columns of `F*`.
    pub n_l: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: SelectionMethod,
    pub tag: char,
    /// Selected feature names; empty when the method failed.
    pub features: Vec<String>,
    pub error: Option<String>,
}

/// Everything the selection cascade decided, in a serializable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub widths: CascadeWidths,
    pub constant_features: Vec<String>,
    pub methods: Vec<MethodReport>,
    /// Votes per `F4` feature.
    pub tally: Vec<(String, usize)>,
    pub quorum: usize,
    pub active_methods: usize,
    pub fell_back_to_correlation: bool,
    /// More than `N_T2` features reached the quorum; only the most voted
    /// were kept.
    pub capped_to_n_t2: bool,
    /// Column names of `F*`, in order.
    pub final_schema: Vec<String>,
}

impl SelectionReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_vec_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

#[derive(Debug, Clone)]
pub struct SelectionOutput {
    pub f4: StackedFeatureMatrix,
    pub f5: StackedFeatureMatrix,
    pub f_star: StackedFeatureMatrix,
    pub report: SelectionReport,
}

/// The whole cascade from `F3` to `F*`. Selectors run in parallel; any that
/// fails is left out of the vote and the quorum shrinks accordingly.
pub fn select_features(f3: &StackedFeatureMatrix, cfg: &SelectionConfig) -> Result<SelectionOutput> {
    let p4 = correlation_prune(f3, cfg.duplicate_threshold)?;
    let f4 = p4.matrix;
    let (n_t2, fc) = determine_cardinality(&f4, cfg.similarity_threshold)?;

    let outcomes: Vec<(SelectionMethod, Result<SelectionResult>)> = SelectionMethod::SELECTORS
        .par_iter()
        .map(|&m| (m, run_selector(m, &f4, n_t2, &cfg.selectors)))
        .collect();

    let mut results = vec![SelectionResult {
        method: SelectionMethod::Correlation,
        indices: fc.kept.clone(),
    }];
    let mut methods = vec![MethodReport {
        method: SelectionMethod::Correlation,
        tag: 'C',
        features: fc.kept.iter().map(|&i| f4.names()[i].clone()).collect(),
        error: None,
    }];
    for (m, outcome) in outcomes {
        match outcome {
            Ok(r) => {
                methods.push(MethodReport {
                    method: m,
                    tag: m.tag(),
                    features: r.indices.iter().map(|&i| f4.names()[i].clone()).collect(),
                    error: None,
                });
                results.push(r);
            }
            Err(e) => {
                log::warn!("{} selection failed and is excluded from the vote: {e}", m.name());
                methods.push(MethodReport {
                    method: m,
                    tag: m.tag(),
                    features: Vec::new(),
                    error: Some(e.to_string()),
                });
            }
        }
    }

    let vote = ensemble_vote(&results, f4.ncols())?;
    let mut voted = vote.indices.clone();
    let capped = voted.len() > n_t2;
    if capped {
        // Six sets of N_T2 with a quorum of three can admit up to 2 N_T2
        // columns; keep the N_T2 with the most votes.
        voted.sort_by(|&a, &b| vote.tally[b].cmp(&vote.tally[a]).then(a.cmp(&b)));
        voted.truncate(n_t2);
        voted.sort_unstable();
        log::info!("vote admitted {} features; capped to {n_t2}", vote.indices.len());
    }
    let f5 = f4.select_columns(&voted)?;
    let fin = finalize(&f5, cfg.similarity_threshold)?;
    let f_star = fin.matrix;

    let report = SelectionReport {
        widths: CascadeWidths {
            n_t: f3.ncols(),
            n_t1: f4.ncols(),
            n_t2,
            n_t3: f5.ncols(),
            n_l: f_star.ncols(),
        },
        constant_features: p4.constant.iter().map(|&i| f3.names()[i].clone()).collect(),
        methods,
        tally: f4
            .names()
            .iter()
            .cloned()
            .zip(vote.tally.iter().copied())
            .collect(),
        quorum: vote.quorum,
        active_methods: vote.active_methods,
        fell_back_to_correlation: vote.fell_back_to_correlation,
        capped_to_n_t2: capped,
        final_schema: f_star.names().to_vec(),
    };
    Ok(SelectionOutput {
        f4,
        f5,
        f_star,
        report,
    })
}
