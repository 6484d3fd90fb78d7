//! Episode storage, augmented-dataset reconstruction, conditioning-bundle
//! export and dataset validation.

mod bundle;
mod episode;
mod pipeline;
mod run;
mod validate;

use std::path::PathBuf;

pub use bundle::{
    export_bundles, overlay, BundleFiles, BundleKind, BundleView, ConditioningBundle, IdentitySynthesizer, Manifest,
    ManifestEntry, OverlaySynthesizer, SynthesisError, Synthesizer, MANIFEST_FILE,
};
pub use episode::{
    depth_file_name, list_episodes, rgb_file_name, Episode, EpisodeMeta, Frame, FrameState, DEPTH_SIDECAR, EPISODE_FILE,
    FRAMES_FILE,
};
pub use pipeline::{
    augment_episode, relabeled_actions, replacement_indices, AugmentContext, AugmentOutput, AugmentSettings, AuditRecord,
    FrameStatus, SourceMode,
};
pub use run::{augment_dataset, segment_dataset, AugmentSummary, OutputLayout};
pub use validate::{validate_dataset, validate_episode, Issue, ValidationInputs, ValidationReport};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Structure(String),
    #[error(transparent)]
    Buffer(#[from] crate::buffer::BufferError),
    #[error(transparent)]
    Camera(#[from] crate::camera::CameraError),
    #[error(transparent)]
    Kinematics(#[from] crate::geometry::KinematicsError),
    #[error(transparent)]
    Colormap(#[from] crate::render::ColormapError),
    #[error(transparent)]
    Contact(#[from] crate::contact::ContactError),
    #[error(transparent)]
    Sampling(#[from] crate::perturb::SamplingError),
}
