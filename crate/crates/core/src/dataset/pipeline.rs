//! Every-`k` replacement of episode states with perturbed, relabeled ones.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bundle::{BundleKind, ConditioningBundle, Synthesizer};
use super::episode::{Episode, FrameState};
use super::DatasetError;
use crate::buffer::{DepthMap, ImageBuffer};
use crate::camera::CameraModel;
use crate::contact::{EpisodeSegmentation, Phase};
use crate::geometry::{JointVector, KinematicChain};
use crate::perturb::{frame_rng, PerturbationSample, PerturbationSource};
use crate::render::{build_skeleton_scene, decode_depth_colormap, encode_depth_colormap, render_skeleton, StyleConfig};
use crate::{Arm, ArmPair};

/// Timesteps `k, 2k, 3k, ...` below `len`.
pub fn replacement_indices(len: usize, k: usize) -> Vec<usize> {
    assert!(k >= 1, "stride must be at least 1");
    (k..len).step_by(k).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceMode {
    #[default]
    Rgb,
    /// RGB plus depth: depth is regenerated from its colormap, conditioned
    /// on the generated RGB and the skeleton.
    Rgbd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentSettings {
    pub k: usize,
    pub seed: u64,
    pub mode: SourceMode,
    pub tiling: bool,
    pub style: StyleConfig,
}

impl Default for AugmentSettings {
    fn default() -> Self {
        Self {
            k: 8,
            seed: 0,
            mode: SourceMode::Rgb,
            tiling: false,
            style: StyleConfig::default(),
        }
    }
}

pub struct AugmentContext<'a> {
    pub chains: &'a ArmPair<KinematicChain>,
    pub cameras: &'a [CameraModel],
    pub sampler: &'a dyn PerturbationSource,
    pub synthesizer: &'a dyn Synthesizer,
    pub settings: &'a AugmentSettings,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameStatus {
    Accepted,
    SamplingFailed,
    SynthesisFailed,
}

/// One line of the audit log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditRecord {
    pub episode: String,
    pub frame: usize,
    pub phase: Phase,
    pub status: FrameStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample: Option<PerturbationSample>,
}

pub struct AugmentOutput {
    pub episode: Episode,
    pub bundles: Vec<ConditioningBundle>,
    pub audit: Vec<AuditRecord>,
}

impl AugmentOutput {
    pub fn replaced(&self) -> usize {
        self.audit.iter().filter(|a| a.status == FrameStatus::Accepted).count()
    }

    pub fn count(&self, status: FrameStatus) -> usize {
        self.audit.iter().filter(|a| a.status == status).count()
    }
}

struct Replacement {
    state: FrameState,
    rgb: Vec<ImageBuffer>,
    depth: Option<Vec<DepthMap>>,
    bundles: Vec<ConditioningBundle>,
}

fn check_inputs(ep: &Episode, seg: &EpisodeSegmentation, ctx: &AugmentContext) -> Result<(), DatasetError> {
    let bad = |m: String| Err(DatasetError::Structure(format!("episode {}: {m}", ep.id())));
    if seg.len() != ep.len() {
        return bad(format!("segmentation covers {} frames, episode has {}", seg.len(), ep.len()));
    }
    if ctx.settings.k == 0 {
        return bad("replacement stride must be at least 1".into());
    }
    if ctx.cameras.len() != ep.meta.camera_count {
        return bad(format!("{} cameras configured, episode has {}", ctx.cameras.len(), ep.meta.camera_count));
    }
    for (c, cam) in ctx.cameras.iter().enumerate() {
        if (cam.width, cam.height) != (ep.meta.image_width, ep.meta.image_height) {
            return bad(format!("camera {c} is {}x{}, images are {}x{}", cam.width, cam.height, ep.meta.image_width, ep.meta.image_height));
        }
    }
    if ctx.settings.mode == SourceMode::Rgbd && (!ep.meta.has_depth || ep.depth_range.is_none()) {
        return bad("depth mode needs depth images and a depth range".into());
    }
    for f in ep.frames() {
        for arm in Arm::BOTH {
            let dof = ctx.chains.get(arm).dof();
            let st = f.state();
            if st.action.get(arm).len() != dof || st.joints.get(arm).len() != dof {
                return bad(format!("frame {}: {arm} arm vectors do not match {dof} joints", f.index()));
            }
        }
    }
    Ok(())
}

fn bundle_of(ep: &Episode, t: usize, kind: BundleKind, sample: &PerturbationSample, source: Vec<ImageBuffer>, skeleton: Vec<ImageBuffer>, target: Option<Vec<ImageBuffer>>) -> ConditioningBundle {
    ConditioningBundle {
        episode: ep.id().to_string(),
        goal: ep.meta.goal.clone(),
        frame: t,
        kind,
        phase: sample.phase,
        source,
        skeleton,
        target,
        action: sample.joints.clone(),
        delta: sample.delta,
    }
}

enum FrameOutcome {
    Replaced(Box<Replacement>, AuditRecord),
    Kept(AuditRecord),
}

fn augment_frame(ep: &Episode, seg: &EpisodeSegmentation, t: usize, ctx: &AugmentContext) -> Result<FrameOutcome, DatasetError> {
    let frame = ep.frame(t).expect("index below length");
    let state = frame.state();
    let phase = seg.phase(t);
    let record = |status, reason: Option<String>, sample: Option<PerturbationSample>| AuditRecord {
        episode: ep.id().to_string(),
        frame: t,
        phase,
        status,
        reason,
        sample,
    };

    let mut rng = frame_rng(ctx.settings.seed, ep.id(), t);
    let sample = match ctx.sampler.sample(phase, ctx.chains, &state.action, &mut rng) {
        Ok(s) => s,
        Err(e) if e.is_sampling_failure() => {
            log::info!("{} frame {t}: {e}", ep.id());
            return Ok(FrameOutcome::Kept(record(FrameStatus::SamplingFailed, Some(e.to_string()), None)));
        }
        Err(e) => return Err(e.into()),
    };

    let scene = build_skeleton_scene(ctx.chains, &sample.joints, &ctx.settings.style)?;
    let skeletons: Vec<ImageBuffer> = ctx.cameras.iter().map(|cam| render_skeleton(&scene, cam).0).collect();

    let rgb_bundle = bundle_of(ep, t, BundleKind::Rgb, &sample, frame.rgb().to_vec(), skeletons.clone(), None);
    let rgb = match rgb_bundle.synthesize(ctx.synthesizer, ctx.settings.tiling) {
        Ok(v) => v,
        Err(e) => {
            log::warn!("{} frame {t}: {e}", ep.id());
            return Ok(FrameOutcome::Kept(record(FrameStatus::SynthesisFailed, Some(e.to_string()), Some(sample))));
        }
    };
    let mut bundles = vec![rgb_bundle];

    let depth = match (ctx.settings.mode, frame.depth(), &ep.depth_range) {
        (SourceMode::Rgbd, Some(src), Some(range)) => {
            let colormaps = src
                .iter()
                .map(|d| encode_depth_colormap(d, range.d_min, range.d_max))
                .collect::<Result<Vec<_>, _>>()?;
            let depth_bundle = bundle_of(ep, t, BundleKind::Depth, &sample, colormaps, skeletons, Some(rgb.clone()));
            let out = match depth_bundle.synthesize(ctx.synthesizer, ctx.settings.tiling) {
                Ok(v) => v,
                Err(e) => {
                    log::warn!("{} frame {t}: {e}", ep.id());
                    return Ok(FrameOutcome::Kept(record(FrameStatus::SynthesisFailed, Some(e.to_string()), Some(sample))));
                }
            };
            bundles.push(depth_bundle);
            let maps = out
                .iter()
                .map(|img| decode_depth_colormap(img, range.d_min, range.d_max))
                .collect::<Result<Vec<_>, _>>()?;
            Some(maps)
        }
        _ => frame.depth().map(<[DepthMap]>::to_vec),
    };

    let new_state = FrameState {
        joints: sample.joints.clone(),
        gripper: state.gripper,
        action: sample.joints.clone(),
        torques: state.torques.clone(),
    };
    Ok(FrameOutcome::Replaced(
        Box::new(Replacement {
            state: new_state,
            rgb,
            depth,
            bundles,
        }),
        record(FrameStatus::Accepted, None, Some(sample)),
    ))
}

/// Duplicate `ep`, replacing the frames at the replacement indices with
/// perturbed states: new images from the synthesizer, and the relabeled
/// joints as both joint state and action. Gripper values and torques are
/// kept. Frames whose sampling or synthesis fails stay as they are.
pub fn augment_episode(ep: &Episode, seg: &EpisodeSegmentation, ctx: &AugmentContext) -> Result<AugmentOutput, DatasetError> {
    check_inputs(ep, seg, ctx)?;
    let indices = replacement_indices(ep.len(), ctx.settings.k);
    let outcomes = indices
        .par_iter()
        .map(|&t| augment_frame(ep, seg, t, ctx).map(|o| (t, o)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut episode = ep.clone();
    let mut bundles = Vec::new();
    let mut audit = Vec::with_capacity(outcomes.len());
    for (t, outcome) in outcomes {
        match outcome {
            FrameOutcome::Replaced(r, rec) => {
                episode.frame_mut(t).expect("index below length").replace(r.state, r.rgb, r.depth);
                bundles.extend(r.bundles);
                audit.push(rec);
            }
            FrameOutcome::Kept(rec) => audit.push(rec),
        }
    }
    Ok(AugmentOutput { episode, bundles, audit })
}

/// Relabeled joints of every modified frame against the source, as
/// `(frame, source action, new action)`.
pub fn relabeled_actions(src: &Episode, aug: &Episode) -> Vec<(usize, ArmPair<JointVector>, ArmPair<JointVector>)> {
    src.frames()
        .iter()
        .zip(aug.frames())
        .filter(|(a, b)| a.state() != b.state())
        .map(|(a, b)| (a.index(), a.state().action.clone(), b.state().action.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replacement_index_examples() {
        assert_eq!(replacement_indices(24, 8), vec![8, 16]);
        assert!(replacement_indices(8, 8).is_empty());
        let brute: Vec<usize> = (1..100).filter(|t| t % 8 == 0).collect();
        assert_eq!(replacement_indices(100, 8), brute);
        assert_eq!(brute.len(), 12);
        assert!(replacement_indices(5, 9).is_empty());
        assert_eq!(replacement_indices(4, 1), vec![1, 2, 3]);
    }
}
