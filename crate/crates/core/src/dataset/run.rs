//! Whole-dataset driver: segment, augment and write every episode.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::bundle::{export_bundles, Synthesizer};
use super::episode::{list_episodes, Episode};
use super::pipeline::{augment_episode, AugmentContext, AugmentSettings, FrameStatus};
use super::DatasetError;
use crate::camera::CameraModel;
use crate::contact::{ContactConfig, EpisodeSegmentation};
use crate::geometry::KinematicChain;
use crate::perturb::PerturbationSource;
use crate::ArmPair;

/// Directory structure of a generated tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn audit(&self) -> PathBuf {
        self.root.join("audit.jsonl")
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn bundles(&self) -> PathBuf {
        self.root.join("bundles")
    }

    pub fn segmentation(&self) -> PathBuf {
        self.root.join("segmentation")
    }

    pub fn segmentation_file(&self, episode_dir: &str) -> PathBuf {
        self.segmentation().join(format!("{episode_dir}.json"))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AugmentSummary {
    pub episodes: usize,
    pub frames: usize,
    pub replaced: usize,
    pub sampling_failed: usize,
    pub synthesis_failed: usize,
    pub bundles: usize,
}

fn write(path: &Path, text: &str) -> Result<(), DatasetError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| DatasetError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn dir_name(dir: &Path) -> String {
    dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Segment every episode under `input`, in directory order.
pub fn segment_dataset(input: &Path, cfg: &ContactConfig) -> Result<Vec<(String, EpisodeSegmentation)>, DatasetError> {
    list_episodes(input)?
        .into_iter()
        .map(|dir| {
            let ep = Episode::load(&dir)?;
            let seg = EpisodeSegmentation::segment(ep.id(), &ep.torques()?, cfg)?;
            Ok((dir_name(&dir), seg))
        })
        .collect()
}

/// Augment every episode under `input` and write the result under `layout`:
/// the reconstructed dataset, per-episode segmentation labels, the
/// conditioning bundles with their manifest, and a JSON-lines audit log.
/// `config_json`, when given, is stored alongside.
#[allow(clippy::too_many_arguments)]
pub fn augment_dataset(
    input: &Path,
    layout: &OutputLayout,
    chains: &ArmPair<KinematicChain>,
    cameras: &[CameraModel],
    sampler: &dyn PerturbationSource,
    synthesizer: &dyn Synthesizer,
    settings: &AugmentSettings,
    contact: &ContactConfig,
    bundle_side: Option<u32>,
    config_json: Option<&str>,
) -> Result<AugmentSummary, DatasetError> {
    let dirs = list_episodes(input)?;
    if dirs.is_empty() {
        return Err(DatasetError::Structure(format!("no episodes under {}", input.display())));
    }
    fs::create_dir_all(&layout.root).map_err(|source| DatasetError::Io {
        path: layout.root.clone(),
        source,
    })?;
    if let Some(text) = config_json {
        write(&layout.config(), text)?;
    }
    let ctx = AugmentContext {
        chains,
        cameras,
        sampler,
        synthesizer,
        settings,
    };

    let mut summary = AugmentSummary::default();
    let mut bundles = Vec::new();
    let mut audit = String::new();
    for dir in &dirs {
        let name = dir_name(dir);
        let ep = Episode::load(dir)?;
        let seg = EpisodeSegmentation::segment(ep.id(), &ep.torques()?, contact)?;
        let label = serde_json::to_string_pretty(&seg.to_label_json()).expect("plain json");
        write(&layout.segmentation_file(&name), &label)?;

        let out = augment_episode(&ep, &seg, &ctx)?;
        out.episode.save(&layout.dataset().join(&name))?;
        summary.episodes += 1;
        summary.frames += ep.len();
        summary.replaced += out.replaced();
        summary.sampling_failed += out.count(FrameStatus::SamplingFailed);
        summary.synthesis_failed += out.count(FrameStatus::SynthesisFailed);
        for rec in &out.audit {
            audit.push_str(&serde_json::to_string(rec).expect("plain struct"));
            audit.push('\n');
        }
        log::info!("{}: {} of {} frames replaced", ep.id(), out.replaced(), out.audit.len());
        bundles.extend(out.bundles);
    }
    summary.bundles = bundles.len();
    export_bundles(&bundles, &layout.bundles(), bundle_side)?;
    write(&layout.audit(), &audit)?;
    Ok(summary)
}
