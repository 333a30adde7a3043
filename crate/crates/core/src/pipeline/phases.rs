use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ProjectConfig;
use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::features::{extract_image_features, rectangle_size, ImageFeatureBlock};
use crate::fuzzy::{
    evolve, fuse_output, generate_rules, infer_block, prune_rows, FusedOutput, JointNormalizer,
    RuleBase, TrainingStore,
};
use crate::imaging::{apply_threshold, jaccard, maa_search, BinaryMask, GrayImage, MaaResult};
use crate::selection::{select_features, SelectionReport, StackedFeatureMatrix};

/// Result of self-configuration: the window size, the stacked matrices and
/// the selection decisions.
#[derive(Debug, Clone)]
pub struct SelfConfiguration {
    pub z: usize,
    pub f3: StackedFeatureMatrix,
    pub f_star: StackedFeatureMatrix,
    pub report: SelectionReport,
    pub seed_counts: BTreeMap<String, usize>,
    pub center_fallbacks: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct SelfConfigurationMeta {
    z: usize,
    seed_counts: BTreeMap<String, usize>,
    center_fallbacks: Vec<String>,
}

impl SelfConfiguration {
    /// Writes `f3.csv`, `f_star.csv`, `selection.json` and `self_config.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.f3.write_csv(dir.join("f3.csv"))?;
        self.f_star.write_csv(dir.join("f_star.csv"))?;
        self.report.save(dir.join("selection.json"))?;
        let meta = SelfConfigurationMeta {
            z: self.z,
            seed_counts: self.seed_counts.clone(),
            center_fallbacks: self.center_fallbacks.clone(),
        };
        crate::write_atomic(&dir.join("self_config.json"), &serde_json::to_vec_pretty(&meta)?)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("self_config.json");
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let meta: SelfConfigurationMeta = serde_json::from_slice(&bytes)?;
        Ok(Self {
            z: meta.z,
            f3: StackedFeatureMatrix::read_csv(dir.join("f3.csv"))?,
            f_star: StackedFeatureMatrix::read_csv(dir.join("f_star.csv"))?,
            report: SelectionReport::load(dir.join("selection.json"))?,
            seed_counts: meta.seed_counts,
            center_fallbacks: meta.center_fallbacks,
        })
    }
}

/// Window size from the image sizes, per-image feature blocks, and the
/// selection cascade over all images.
pub fn self_configure(ds: &Dataset, cfg: &ProjectConfig) -> Result<SelfConfiguration> {
    if ds.len() < 2 {
        return Err(Error::EmptyInput("self-configuration needs at least two images".into()));
    }
    let rows: Vec<usize> = ds.iter().map(|d| d.image.height()).collect();
    let cols: Vec<usize> = ds.iter().map(|d| d.image.width()).collect();
    let z = rectangle_size(&rows, &cols)?;
    log::info!("feature window Z = {z}");

    let items: Vec<_> = ds.iter().collect();
    let extracted = items
        .par_iter()
        .map(|d| extract_image_features(&d.id, &d.image, z, &cfg.detector))
        .collect::<Result<Vec<_>>>()?;

    let mut seed_counts = BTreeMap::new();
    let mut center_fallbacks = Vec::new();
    let mut blocks: Vec<ImageFeatureBlock> = Vec::with_capacity(extracted.len());
    for (d, e) in items.iter().zip(extracted) {
        seed_counts.insert(d.id.clone(), e.seeds.len());
        if e.center_fallback {
            center_fallbacks.push(d.id.clone());
        }
        blocks.push(e.f2);
    }
    let f3 = StackedFeatureMatrix::stack(&blocks)?;
    let out = select_features(&f3, &cfg.selection)?;
    log::info!(
        "feature widths: {} -> {} -> {} -> {} -> {}",
        out.report.widths.n_t,
        out.report.widths.n_t1,
        out.report.widths.n_t2,
        out.report.widths.n_t3,
        out.report.widths.n_l
    );
    Ok(SelfConfiguration {
        z,
        f3,
        f_star: out.f_star,
        report: out.report,
        seed_counts,
        center_fallbacks,
    })
}

/// Rows of `F*` belonging to one image, in statistic order.
pub fn image_block(f_star: &StackedFeatureMatrix, id: &str) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<Vec<f64>> = f_star
        .rows()
        .iter()
        .enumerate()
        .filter(|(_, l)| l.image_id == id)
        .map(|(r, _)| f_star.features().row(r))
        .collect();
    if rows.is_empty() {
        return Err(Error::UnknownImage(id.to_string()));
    }
    Ok(rows)
}

/// Best global threshold and its Jaccard index per gold-annotated image.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub entries: BTreeMap<String, MaaResult>,
}

#[derive(Serialize, Deserialize)]
struct TableRow {
    image_id: String,
    t_star: u8,
    j_max: f64,
    orientation: crate::imaging::Orientation,
}

impl ThresholdTable {
    pub fn get(&self, id: &str) -> Result<&MaaResult> {
        self.entries
            .get(id)
            .ok_or_else(|| Error::UnknownImage(id.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for (id, e) in &self.entries {
            w.serialize(TableRow {
                image_id: id.clone(),
                t_star: e.t_star,
                j_max: e.j_max,
                orientation: e.orientation,
            })?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
        crate::write_atomic(path, &bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut entries = BTreeMap::new();
        for row in r.deserialize() {
            let row: TableRow = row?;
            entries.insert(
                row.image_id,
                MaaResult {
                    t_star: row.t_star,
                    j_max: row.j_max,
                    orientation: row.orientation,
                },
            );
        }
        Ok(Self { entries })
    }
}

/// Exhaustive threshold search against each available gold standard.
/// Images without gold are skipped.
pub fn offline_optimal(ds: &Dataset, cfg: &ProjectConfig) -> Result<ThresholdTable> {
    let items: Vec<_> = ds.iter().collect();
    let found = items
        .par_iter()
        .filter_map(|d| match &d.gold {
            Some(g) => Some(maa_search(&d.image, g, cfg.orientation, false).map(|m| (d.id.clone(), m))),
            None => {
                log::warn!("image {} has no gold standard; left out of the table", d.id);
                None
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ThresholdTable {
        entries: found.into_iter().collect(),
    })
}

/// A trained model: the rule base and the rows it was generated from.
#[derive(Debug, Clone)]
pub struct Model {
    pub rule_base: RuleBase,
    pub store: TrainingStore,
}

impl Model {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.store.save(dir.join("store"))?;
        self.rule_base.save(dir.join("rules.json"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Self {
            rule_base: RuleBase::load(dir.join("rules.json"))?,
            store: TrainingStore::load(dir.join("store"))?,
        })
    }
}

/// Builds the store from the training images' `F*` rows, each paired with
/// the image's optimal threshold. The first image is taken whole, later
/// ones only with their novel rows. Rules are generated once at the end.
pub fn train(
    f_star: &StackedFeatureMatrix,
    table: &ThresholdTable,
    train_ids: &[String],
    cfg: &ProjectConfig,
) -> Result<Model> {
    if train_ids.is_empty() {
        return Err(Error::EmptyInput("no training images".into()));
    }
    let all_rows: Vec<Vec<f64>> = (0..f_star.nrows()).map(|r| f_star.features().row(r)).collect();
    let train_t: Vec<f64> = train_ids
        .iter()
        .map(|id| table.get(id).map(|m| m.t_star as f64))
        .collect::<Result<_>>()?;
    let normalizer = JointNormalizer::fit(&all_rows, &train_t)?;
    let mut store = TrainingStore::new(f_star.names().to_vec(), normalizer)?;

    for (id, &t) in train_ids.iter().zip(&train_t) {
        let block = image_block(f_star, id)?;
        let outputs = vec![t; block.len()];
        let kept = prune_rows(&block, &outputs, &store, cfg.d_min())?;
        for i in kept {
            store.push(block[i].clone(), t)?;
        }
    }
    let rule_base = generate_rules(&store, &cfg.cluster, 1)?;
    log::info!(
        "trained {} rules from {} rows of {} images",
        rule_base.rule_count(),
        store.len(),
        train_ids.len()
    );
    Ok(Model { rule_base, store })
}

/// What the system proposes for one image before feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub image_id: String,
    pub outputs: Vec<f64>,
    pub fused: FusedOutput,
    pub threshold: u8,
    pub segment: BinaryMask,
    pub nearest_rule_fallbacks: usize,
}

pub fn propose(
    rb: &RuleBase,
    f_star: &StackedFeatureMatrix,
    id: &str,
    image: &GrayImage,
    cfg: &ProjectConfig,
) -> Result<Proposal> {
    let block = image_block(f_star, id)?;
    let inferred = infer_block(rb, &block)?;
    let outputs: Vec<f64> = inferred.iter().map(|i| i.value).collect();
    let fused = fuse_output(&outputs)?;
    let threshold = fused.threshold();
    Ok(Proposal {
        image_id: id.to_string(),
        outputs,
        fused,
        threshold,
        segment: apply_threshold(image, threshold, cfg.orientation),
        nearest_rule_fallbacks: inferred.iter().filter(|i| i.nearest_rule_fallback).count(),
    })
}

/// Supplies corrected masks for proposed segments.
pub trait FeedbackSource {
    /// `Ok(None)` means no answer arrived in time; the image is skipped.
    fn review(&mut self, image_id: &str, image: &GrayImage, segment: &BinaryMask) -> Result<Option<BinaryMask>>;
}

/// Answers with the stored gold standard, as if the user had corrected the
/// segment perfectly.
pub struct ReplayFeedback<'a> {
    dataset: &'a Dataset,
}

impl<'a> ReplayFeedback<'a> {
    pub fn new(dataset: &'a Dataset) -> Self {
        Self { dataset }
    }
}

impl FeedbackSource for ReplayFeedback<'_> {
    fn review(&mut self, image_id: &str, _: &GrayImage, _: &BinaryMask) -> Result<Option<BinaryMask>> {
        Ok(Some(self.dataset.gold(image_id)?.clone()))
    }
}

/// Writes `{id}.segment.png` into a directory and waits for the user to
/// drop `{id}.corrected.png` next to it.
pub struct DirectoryFeedback {
    pub dir: PathBuf,
    pub timeout: Duration,
    pub poll: Duration,
}

impl FeedbackSource for DirectoryFeedback {
    fn review(&mut self, image_id: &str, image: &GrayImage, segment: &BinaryMask) -> Result<Option<BinaryMask>> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        image.save_png(self.dir.join(format!("{image_id}.image.png")))?;
        segment.save_png(self.dir.join(format!("{image_id}.segment.png")))?;
        let answer = self.dir.join(format!("{image_id}.corrected.png"));
        log::info!("waiting for {}", answer.display());
        let start = Instant::now();
        while start.elapsed() < self.timeout {
            if answer.is_file() {
                return BinaryMask::load(&answer).map(Some);
            }
            std::thread::sleep(self.poll);
        }
        log::warn!("no feedback for {image_id} within {:?}; skipping", self.timeout);
        Ok(None)
    }
}

/// Outcome of one reviewed image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub image_id: String,
    pub proposed_threshold: u8,
    /// Jaccard of the proposed segment against the corrected mask.
    pub jaccard: f64,
    /// Best threshold against the corrected mask.
    pub t_best: u8,
    pub j_best: f64,
    pub rows_added: usize,
    pub version: u64,
    pub rule_count: usize,
    pub noop: bool,
}

/// Scores the proposal against the corrected mask and evolves the model.
pub fn apply_feedback(
    model: &mut Model,
    f_star: &StackedFeatureMatrix,
    image: &GrayImage,
    proposal: &Proposal,
    corrected: &BinaryMask,
    cfg: &ProjectConfig,
) -> Result<FeedbackEvent> {
    let score = jaccard(&proposal.segment, corrected)?;
    let best = maa_search(image, corrected, cfg.orientation, false)?;
    let block = image_block(f_star, &proposal.image_id)?;
    let evo = evolve(&model.rule_base, &model.store, &block, best.t_star as f64, cfg.d_min())?;
    model.rule_base = evo.rule_base;
    model.store = evo.store;
    Ok(FeedbackEvent {
        image_id: proposal.image_id.clone(),
        proposed_threshold: proposal.threshold,
        jaccard: score.jaccard,
        t_best: best.t_star,
        j_best: best.j_max,
        rows_added: evo.kept.len(),
        version: model.rule_base.version,
        rule_count: model.rule_base.rule_count(),
        noop: model.rule_base.noop,
    })
}

/// Online record of one test image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineRecord {
    pub image_id: String,
    pub outputs: Vec<f64>,
    pub fused: FusedOutput,
    pub threshold: u8,
    pub nearest_rule_fallbacks: usize,
    /// `None` when the image was skipped for lack of feedback.
    pub event: Option<FeedbackEvent>,
}

/// Propose, review and evolve, one test image at a time.
pub fn run_online(
    model: &mut Model,
    f_star: &StackedFeatureMatrix,
    ds: &Dataset,
    test_ids: &[String],
    feedback: &mut dyn FeedbackSource,
    cfg: &ProjectConfig,
) -> Result<Vec<OnlineRecord>> {
    let mut records = Vec::with_capacity(test_ids.len());
    for id in test_ids {
        let image = &ds.get(id)?.image;
        let proposal = propose(&model.rule_base, f_star, id, image, cfg)?;
        let event = match feedback.review(id, image, &proposal.segment)? {
            Some(corrected) => Some(apply_feedback(model, f_star, image, &proposal, &corrected, cfg)?),
            None => None,
        };
        records.push(OnlineRecord {
            image_id: id.clone(),
            outputs: proposal.outputs,
            fused: proposal.fused,
            threshold: proposal.threshold,
            nearest_rule_fallbacks: proposal.nearest_rule_fallbacks,
            event,
        });
    }
    Ok(records)
}
