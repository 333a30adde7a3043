//! Project store and HTTP API for interactive threshold feedback.
//!
//! [`ProjectStore`] keeps each project in its own directory and runs the
//! phases in order: ingest, configure, offline, train, online review.
//! [`router`] exposes it over HTTP under `/v1`.

mod api;
mod error;
mod store;

pub use api::{router, serve, CreateProject, FeedbackRequest, IngestRequest, ReviewResponse, UploadedImage};
pub use error::{Result, ServiceError};
pub use store::{
    ConfigureReport, FeedbackRecord, FileError, ImageUpload, IngestReport, Metrics, Phase, ProjectState,
    ProjectStore, ReviewItem, ReviewNext, SplitRequest, TrainReport, VersionRecord, VersionSource,
};
