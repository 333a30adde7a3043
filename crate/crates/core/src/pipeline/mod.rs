//! The phases end to end: self-configuration, the offline threshold table,
//! training, the online loop with feedback, and cross-validated comparison
//! against the baselines.

mod config;
mod dataset;
mod phases;
mod report;
mod synth;

pub use config::{CrossValidationConfig, ProjectConfig, THRESHOLD_TECHNIQUE};
pub use dataset::{Dataset, DatasetImage};
pub use phases::{
    apply_feedback, image_block, offline_optimal, propose, run_online, self_configure, train,
    DirectoryFeedback, FeedbackEvent, FeedbackSource, Model, OnlineRecord, Proposal,
    ReplayFeedback, SelfConfiguration, ThresholdTable,
};
pub use report::{
    compare_baselines, cross_validate, method_order, render_markdown, rises_then_drops,
    run_trial, stats_summary, trial_splits, CrossValidation, MethodScores, Summary, TrialReport,
    TrialSplit, MAA, NIBLACK, PARENT, SC_EFIS,
};
pub use synth::{synth_dataset, synth_image, SynthConfig};
