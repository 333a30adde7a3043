//! Directory-per-project storage.
//!
//! Layout under `<root>/<project>/`:
//!
//! ```text
//! project.json            state; rewritten atomically as the last step of every change
//! images/<id>.png         ingested images, grayscale
//! gold/<id>.png           gold masks, when supplied
//! self_config/            F3, F*, selection report
//! optimal.csv             offline threshold table
//! models/v<n>/            one complete model per rule-base version
//! proposals/<id>.png      segment served for review
//! feedback/<id>.json      feedback record
//! feedback/<id>.png       submitted mask, as received
//! ```
//!
//! A model directory is written in full before `project.json` points at it,
//! so an interrupted update leaves the previous version in force.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use scefis_core::fuzzy::{FusedOutput, RuleBase};
use scefis_core::imaging::{BinaryMask, GrayImage};
use scefis_core::pipeline::{
    apply_feedback, offline_optimal, propose, self_configure, train, trial_splits, Dataset,
    DatasetImage, FeedbackEvent, Model, ProjectConfig, SelfConfiguration, ThresholdTable,
};
use scefis_core::selection::CascadeWidths;
use scefis_core::write_atomic;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Created,
    Configured,
    OfflineDone,
    Trained,
    Online,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VersionSource {
    Training { images: usize },
    Feedback { image_id: String },
}

/// One rule-base version and what produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionRecord {
    pub version: u64,
    pub rule_count: usize,
    pub source: VersionSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectState {
    pub id: String,
    pub config: ProjectConfig,
    pub phase: Phase,
    /// Image id to whether a gold mask was supplied.
    pub images: BTreeMap<String, bool>,
    pub train_ids: Vec<String>,
    /// Review queue, in order.
    pub test_ids: Vec<String>,
    pub rule_version: Option<u64>,
    /// Image handed out for review and awaiting feedback.
    pub served: Option<String>,
    pub reviewed: Vec<String>,
    pub history: Vec<VersionRecord>,
}

/// One file of an ingest request.
#[derive(Debug, Clone)]
pub struct ImageUpload {
    pub id: String,
    pub data: Vec<u8>,
    pub gold: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub added: usize,
    pub unchanged: usize,
    pub total: usize,
    pub errors: Vec<FileError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileError {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigureReport {
    pub z: usize,
    pub widths: CascadeWidths,
    pub final_schema: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub version: u64,
    pub rule_count: usize,
    pub training_rows: usize,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// Explicit train/test split; when absent, the first cross-validation trial
/// of the project configuration is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRequest {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReviewNext {
    Item(ReviewItem),
    Empty { reviewed: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReviewItem {
    pub image_id: String,
    /// Zero-based position in the review queue.
    pub position: usize,
    pub remaining: usize,
    pub threshold: u8,
    pub fused: FusedOutput,
    pub outputs: Vec<f64>,
    pub image_png: Vec<u8>,
    pub mask_png: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub event: FeedbackEvent,
    pub previous_version: u64,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub phase: Phase,
    pub rule_version: Option<u64>,
    pub rule_trace: Vec<VersionRecord>,
    pub images: Vec<FeedbackEvent>,
}

pub struct ProjectStore {
    root: PathBuf,
    locks: Mutex<HashMap<String, Arc<RwLock<()>>>>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn check_id(kind: &str, id: &str) -> Result<()> {
    if valid_id(id) {
        Ok(())
    } else {
        Err(ServiceError::BadRequest(format!(
            "invalid {kind} id {id:?}: use letters, digits, '-', '_' or '.'"
        )))
    }
}

fn require(state: &ProjectState, phase: Phase, action: &str) -> Result<()> {
    if state.phase == phase {
        Ok(())
    } else {
        Err(ServiceError::Conflict(format!(
            "{action} needs phase {phase:?}, project {} is {:?}",
            state.id, state.phase
        )))
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            ServiceError::NotFound(format!("{} not found", path.display()))
        } else {
            e.into()
        }
    })
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl ProjectStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn project_dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    fn lock(&self, id: &str) -> Arc<RwLock<()>> {
        let mut map = self.locks.lock().unwrap_or_else(|e| e.into_inner());
        map.entry(id.to_string()).or_default().clone()
    }

    fn load_state(&self, id: &str) -> Result<ProjectState> {
        check_id("project", id)?;
        let path = self.project_dir(id).join("project.json");
        let bytes = read(&path).map_err(|e| match e {
            ServiceError::NotFound(_) => ServiceError::NotFound(format!("no project {id:?}")),
            e => e,
        })?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    fn save_state(&self, state: &ProjectState) -> Result<()> {
        let path = self.project_dir(&state.id).join("project.json");
        write_atomic(&path, &serde_json::to_vec_pretty(state)?)?;
        Ok(())
    }

    /// Runs `f` under the project's shared lock.
    fn reading<T>(&self, id: &str, f: impl FnOnce(ProjectState) -> Result<T>) -> Result<T> {
        check_id("project", id)?;
        let lock = self.lock(id);
        let _guard = lock.read().unwrap_or_else(|e| e.into_inner());
        f(self.load_state(id)?)
    }

    /// Runs `f` under the project's exclusive lock.
    fn writing<T>(&self, id: &str, f: impl FnOnce(ProjectState) -> Result<T>) -> Result<T> {
        check_id("project", id)?;
        let lock = self.lock(id);
        let _guard = lock.write().unwrap_or_else(|e| e.into_inner());
        f(self.load_state(id)?)
    }

    pub fn list_projects(&self) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&self.root)? {
            let path = entry?.path();
            if path.join("project.json").is_file() {
                if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                    out.push(name.to_string());
                }
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn create_project(&self, id: &str, config: ProjectConfig) -> Result<ProjectState> {
        check_id("project", id)?;
        config.validate()?;
        let lock = self.lock(id);
        let _guard = lock.write().unwrap_or_else(|e| e.into_inner());
        let dir = self.project_dir(id);
        if dir.join("project.json").exists() {
            return Err(ServiceError::Conflict(format!("project {id:?} already exists")));
        }
        for sub in ["images", "gold", "models", "proposals", "feedback"] {
            std::fs::create_dir_all(dir.join(sub))?;
        }
        let state = ProjectState {
            id: id.to_string(),
            config,
            phase: Phase::Created,
            images: BTreeMap::new(),
            train_ids: Vec::new(),
            test_ids: Vec::new(),
            rule_version: None,
            served: None,
            reviewed: Vec::new(),
            history: Vec::new(),
        };
        self.save_state(&state)?;
        log::info!("created project {id}");
        Ok(state)
    }

    pub fn project(&self, id: &str) -> Result<ProjectState> {
        self.reading(id, Ok)
    }

    /// Decodes and stores each file. Files that fail are reported and
    /// skipped; re-sending an identical image is a no-op.
    pub fn ingest_images(&self, id: &str, files: Vec<ImageUpload>) -> Result<IngestReport> {
        self.writing(id, |mut state| {
            require(&state, Phase::Created, "ingesting images")?;
            let dir = self.project_dir(id);
            let mut report = IngestReport::default();
            for file in files {
                match self.ingest_one(&dir, &state, &file) {
                    Ok(true) => {
                        report.added += 1;
                        state.images.insert(file.id.clone(), file.gold.is_some());
                    }
                    Ok(false) => report.unchanged += 1,
                    Err(e) => report.errors.push(FileError {
                        id: file.id.clone(),
                        error: e.to_string(),
                    }),
                }
            }
            report.total = state.images.len();
            self.save_state(&state)?;
            Ok(report)
        })
    }

    /// `Ok(true)` when the image was new.
    fn ingest_one(&self, dir: &Path, state: &ProjectState, file: &ImageUpload) -> Result<bool> {
        check_id("image", &file.id)?;
        let image = GrayImage::decode(&file.data)?;
        let gold = file.gold.as_deref().map(BinaryMask::decode).transpose()?;
        if let Some(g) = &gold {
            if g.dims() != image.dims() {
                return Err(scefis_core::Error::DimensionMismatch {
                    expected: image.dims(),
                    actual: g.dims(),
                }
                .into());
            }
        }
        let image_path = dir.join("images").join(format!("{}.png", file.id));
        let gold_path = dir.join("gold").join(format!("{}.png", file.id));
        if let Some(&had_gold) = state.images.get(&file.id) {
            let same_image = GrayImage::load(&image_path)? == image;
            let same_gold = match &gold {
                None => !had_gold,
                Some(g) => had_gold && BinaryMask::load(&gold_path)? == *g,
            };
            return if same_image && same_gold {
                Ok(false)
            } else {
                Err(ServiceError::Conflict(format!(
                    "image {:?} already exists with different content",
                    file.id
                )))
            };
        }
        write_atomic(&image_path, &image.encode_png()?)?;
        if let Some(g) = &gold {
            write_atomic(&gold_path, &g.encode_png()?)?;
        }
        Ok(true)
    }

    fn dataset(&self, state: &ProjectState) -> Result<Dataset> {
        let dir = self.project_dir(&state.id);
        let mut ds = Dataset::new();
        for (id, &has_gold) in &state.images {
            let image = GrayImage::load(dir.join("images").join(format!("{id}.png")))?;
            let gold = if has_gold {
                Some(BinaryMask::load(dir.join("gold").join(format!("{id}.png")))?)
            } else {
                None
            };
            ds.insert(DatasetImage {
                id: id.clone(),
                image,
                gold,
            })?;
        }
        Ok(ds)
    }

    fn image(&self, id: &str, image_id: &str) -> Result<GrayImage> {
        Ok(GrayImage::load(self.project_dir(id).join("images").join(format!("{image_id}.png")))?)
    }

    fn self_config(&self, id: &str) -> Result<SelfConfiguration> {
        Ok(SelfConfiguration::load(&self.project_dir(id).join("self_config"))?)
    }

    fn model_dir(&self, id: &str, version: u64) -> PathBuf {
        self.project_dir(id).join("models").join(format!("v{version}"))
    }

    fn current_model(&self, state: &ProjectState) -> Result<Model> {
        let v = state
            .rule_version
            .ok_or_else(|| ServiceError::Conflict(format!("project {} has no trained model", state.id)))?;
        Ok(Model::load(&self.model_dir(&state.id, v))?)
    }

    fn save_model(&self, id: &str, model: &Model) -> Result<()> {
        let dir = self.model_dir(id, model.rule_base.version);
        if dir.exists() {
            // Left over from an update that never committed.
            std::fs::remove_dir_all(&dir)?;
        }
        model.save(&dir)?;
        Ok(())
    }

    pub fn configure(&self, id: &str) -> Result<ConfigureReport> {
        self.writing(id, |mut state| {
            require(&state, Phase::Created, "configure")?;
            if state.images.len() < 2 {
                return Err(ServiceError::Conflict("configure needs at least two images".into()));
            }
            let ds = self.dataset(&state)?;
            let sc = self_configure(&ds, &state.config)?;
            sc.save(&self.project_dir(id).join("self_config"))?;
            state.phase = Phase::Configured;
            self.save_state(&state)?;
            Ok(ConfigureReport {
                z: sc.z,
                widths: sc.report.widths.clone(),
                final_schema: sc.report.final_schema.clone(),
            })
        })
    }

    pub fn offline(&self, id: &str) -> Result<ThresholdTable> {
        self.writing(id, |mut state| {
            require(&state, Phase::Configured, "offline")?;
            let missing: Vec<&String> = state.images.iter().filter(|(_, &g)| !g).map(|(i, _)| i).collect();
            if !missing.is_empty() {
                return Err(ServiceError::Conflict(format!("images without gold masks: {missing:?}")));
            }
            let table = offline_optimal(&self.dataset(&state)?, &state.config)?;
            table.save(&self.project_dir(id).join("optimal.csv"))?;
            state.phase = Phase::OfflineDone;
            self.save_state(&state)?;
            Ok(table)
        })
    }

    pub fn threshold_table(&self, id: &str) -> Result<ThresholdTable> {
        self.reading(id, |_| Ok(ThresholdTable::load(&self.project_dir(id).join("optimal.csv"))?))
    }

    pub fn train(&self, id: &str, split: Option<SplitRequest>) -> Result<TrainReport> {
        self.writing(id, |mut state| {
            require(&state, Phase::OfflineDone, "train")?;
            let ids: Vec<String> = state.images.keys().cloned().collect();
            let (train_ids, test_ids) = match split {
                Some(s) => {
                    for i in s.train_ids.iter().chain(&s.test_ids) {
                        if !state.images.contains_key(i) {
                            return Err(ServiceError::BadRequest(format!("unknown image {i:?}")));
                        }
                    }
                    if s.train_ids.iter().any(|i| s.test_ids.contains(i)) {
                        return Err(ServiceError::BadRequest("train and test sets overlap".into()));
                    }
                    (s.train_ids, s.test_ids)
                }
                None => {
                    let cv = &state.config.cross_validation;
                    let first = trial_splits(&ids, 1, cv.test_fraction, cv.seed)?
                        .into_iter()
                        .next()
                        .ok_or_else(|| ServiceError::BadRequest("no split available".into()))?;
                    (first.train_ids, first.test_ids)
                }
            };
            let sc = self.self_config(id)?;
            let table = ThresholdTable::load(&self.project_dir(id).join("optimal.csv"))?;
            let model = train(&sc.f_star, &table, &train_ids, &state.config)?;
            self.save_model(id, &model)?;
            let rb = &model.rule_base;
            state.history = vec![VersionRecord {
                version: rb.version,
                rule_count: rb.rule_count(),
                source: VersionSource::Training {
                    images: train_ids.len(),
                },
            }];
            state.rule_version = Some(rb.version);
            state.train_ids = train_ids.clone();
            state.test_ids = test_ids.clone();
            state.phase = Phase::Trained;
            self.save_state(&state)?;
            Ok(TrainReport {
                version: rb.version,
                rule_count: rb.rule_count(),
                training_rows: model.store.len(),
                train_ids,
                test_ids,
            })
        })
    }

    pub fn start_online(&self, id: &str) -> Result<ProjectState> {
        self.writing(id, |mut state| {
            require(&state, Phase::Trained, "online")?;
            if state.test_ids.is_empty() {
                return Err(ServiceError::Conflict("the review queue is empty".into()));
            }
            state.phase = Phase::Online;
            self.save_state(&state)?;
            Ok(state)
        })
    }

    /// The image awaiting feedback, or the next one in the queue. Asking
    /// again before feedback returns the same item.
    pub fn next_review(&self, id: &str) -> Result<ReviewNext> {
        self.writing(id, |mut state| {
            require(&state, Phase::Online, "review")?;
            let position = state.reviewed.len();
            let Some(image_id) = state.test_ids.get(position).cloned() else {
                return Ok(ReviewNext::Empty { reviewed: position });
            };
            let image = self.image(id, &image_id)?;
            let model = self.current_model(&state)?;
            let sc = self.self_config(id)?;
            let proposal = propose(&model.rule_base, &sc.f_star, &image_id, &image, &state.config)?;
            let mask_png = proposal.segment.encode_png()?;
            write_atomic(
                &self.project_dir(id).join("proposals").join(format!("{image_id}.png")),
                &mask_png,
            )?;
            if state.served.as_deref() != Some(image_id.as_str()) {
                state.served = Some(image_id.clone());
                self.save_state(&state)?;
            }
            Ok(ReviewNext::Item(ReviewItem {
                position,
                remaining: state.test_ids.len() - position,
                threshold: proposal.threshold,
                fused: proposal.fused,
                outputs: proposal.outputs,
                image_png: image.encode_png()?,
                mask_png,
                image_id,
            }))
        })
    }

    /// Scores the served proposal against the corrected mask, evolves the
    /// rules and commits the new version.
    pub fn submit_feedback(&self, id: &str, image_id: &str, mask_png: &[u8]) -> Result<FeedbackRecord> {
        check_id("image", image_id)?;
        self.writing(id, |mut state| {
            require(&state, Phase::Online, "feedback")?;
            if state.reviewed.iter().any(|r| r == image_id) {
                return Err(ServiceError::Conflict(format!("image {image_id:?} was already reviewed")));
            }
            if state.served.as_deref() != Some(image_id) {
                return Err(ServiceError::Conflict(format!(
                    "image {image_id:?} is not awaiting feedback (serving {:?})",
                    state.served
                )));
            }
            let corrected = BinaryMask::decode(mask_png)?;
            let image = self.image(id, image_id)?;
            if corrected.dims() != image.dims() {
                return Err(scefis_core::Error::DimensionMismatch {
                    expected: image.dims(),
                    actual: corrected.dims(),
                }
                .into());
            }
            let mut model = self.current_model(&state)?;
            let previous_version = model.rule_base.version;
            let sc = self.self_config(id)?;
            let proposal = propose(&model.rule_base, &sc.f_star, image_id, &image, &state.config)?;
            let event = apply_feedback(&mut model, &sc.f_star, &image, &proposal, &corrected, &state.config)?;
            self.save_model(id, &model)?;

            let record = FeedbackRecord {
                event,
                previous_version,
                timestamp: now(),
            };
            let fb = self.project_dir(id).join("feedback");
            write_atomic(&fb.join(format!("{image_id}.png")), mask_png)?;
            write_atomic(&fb.join(format!("{image_id}.json")), &serde_json::to_vec_pretty(&record)?)?;

            state.history.push(VersionRecord {
                version: record.event.version,
                rule_count: record.event.rule_count,
                source: VersionSource::Feedback {
                    image_id: image_id.to_string(),
                },
            });
            state.rule_version = Some(record.event.version);
            state.served = None;
            state.reviewed.push(image_id.to_string());
            self.save_state(&state)?;
            log::info!(
                "project {id}: feedback on {image_id}, rules v{} -> v{} ({} rules)",
                previous_version,
                record.event.version,
                record.event.rule_count
            );
            Ok(record)
        })
    }

    /// The stored record and the mask exactly as it was submitted.
    pub fn feedback(&self, id: &str, image_id: &str) -> Result<(FeedbackRecord, Vec<u8>)> {
        check_id("image", image_id)?;
        self.reading(id, |state| {
            if !state.reviewed.iter().any(|r| r == image_id) {
                return Err(ServiceError::NotFound(format!("no feedback for image {image_id:?}")));
            }
            let fb = self.project_dir(id).join("feedback");
            let record = serde_json::from_slice(&read(&fb.join(format!("{image_id}.json")))?)?;
            Ok((record, read(&fb.join(format!("{image_id}.png")))?))
        })
    }

    pub fn rules(&self, id: &str) -> Result<RuleBase> {
        self.reading(id, |state| Ok(self.current_model(&state)?.rule_base))
    }

    pub fn metrics(&self, id: &str) -> Result<Metrics> {
        self.reading(id, |state| {
            let fb = self.project_dir(id).join("feedback");
            let images = state
                .reviewed
                .iter()
                .map(|i| {
                    let r: FeedbackRecord = serde_json::from_slice(&read(&fb.join(format!("{i}.json")))?)?;
                    Ok(r.event)
                })
                .collect::<Result<_>>()?;
            Ok(Metrics {
                phase: state.phase,
                rule_version: state.rule_version,
                rule_trace: state.history,
                images,
            })
        })
    }
}
