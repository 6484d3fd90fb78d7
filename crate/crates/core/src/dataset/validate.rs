//! Structural and locality checks for source and augmented datasets.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::Serialize;

use super::bundle::{BundleKind, Manifest};
use super::episode::{list_episodes, Episode, FrameState};
use super::pipeline::replacement_indices;
use super::DatasetError;
use crate::buffer::ImageBuffer;
use crate::camera::{pad_and_rescale, CameraModel};
use crate::geometry::KinematicChain;
use crate::render::{build_skeleton_scene, render_skeleton, StyleConfig};
use crate::{Arm, ArmPair};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Issue {
    pub episode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame: Option<usize>,
    /// Offending field, such as `action.left` or `images`.
    pub field: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.frame {
            Some(t) => write!(f, "{} frame {t} {}: {}", self.episode, self.field, self.message),
            None => write!(f, "{} {}: {}", self.episode, self.field, self.message),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub episodes: usize,
    pub frames: usize,
    pub modified_frames: usize,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

pub struct ValidationInputs<'a> {
    pub chains: &'a ArmPair<KinematicChain>,
    pub cameras: &'a [CameraModel],
    pub style: &'a StyleConfig,
    /// Replacement stride the augmented dataset was built with.
    pub k: usize,
    /// Source dataset root; enables the locality checks.
    pub source: Option<&'a Path>,
    /// Bundle directory; enables the label-image checks.
    pub bundles: Option<&'a Path>,
}

struct Sink<'a> {
    episode: &'a str,
    issues: Vec<Issue>,
}

impl Sink<'_> {
    fn push(&mut self, frame: Option<usize>, field: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue {
            episode: self.episode.to_string(),
            frame,
            field: field.into(),
            message: message.into(),
        });
    }
}

fn check_state(sink: &mut Sink, t: usize, st: &FrameState, chains: &ArmPair<KinematicChain>) {
    for arm in Arm::BOTH {
        let chain = chains.get(arm);
        let dof = chain.dof();
        for (name, v) in [("joints", st.joints.get(arm)), ("action", st.action.get(arm))] {
            let field = format!("{name}.{arm}");
            if v.len() != dof {
                sink.push(Some(t), field, format!("{} values, arm has {dof} joints", v.len()));
            } else if v.0.iter().any(|x| !x.is_finite()) {
                sink.push(Some(t), field, "non-finite value");
            } else if let Some(j) = chain.first_limit_violation(v) {
                sink.push(Some(t), field, format!("joint {j} outside its limits"));
            }
        }
        let g = *st.gripper.get(arm);
        if !(0.0..=1.0).contains(&g) {
            sink.push(Some(t), format!("gripper.{arm}"), format!("{g} outside [0, 1]"));
        }
        let tau = st.torques.get(arm);
        if tau.len() != dof {
            sink.push(Some(t), format!("torques.{arm}"), format!("{} values, arm has {dof} joints", tau.len()));
        } else if tau.iter().any(|x| !x.is_finite()) {
            sink.push(Some(t), format!("torques.{arm}"), "non-finite value");
        }
    }
}

/// Per-frame structural checks against the arm and camera models.
pub fn validate_episode(ep: &Episode, chains: &ArmPair<KinematicChain>, cameras: &[CameraModel]) -> Vec<Issue> {
    let mut sink = Sink {
        episode: ep.id(),
        issues: Vec::new(),
    };
    if ep.meta.camera_count != cameras.len() {
        sink.push(None, "camera_count", format!("{} cameras in episode, {} configured", ep.meta.camera_count, cameras.len()));
    }
    for (c, cam) in cameras.iter().enumerate() {
        if (cam.width, cam.height) != (ep.meta.image_width, ep.meta.image_height) {
            sink.push(
                None,
                "images",
                format!("camera {c} is {}x{}, images are {}x{}", cam.width, cam.height, ep.meta.image_width, ep.meta.image_height),
            );
        }
    }
    if let Some(r) = &ep.depth_range {
        if !r.is_valid() {
            sink.push(None, "depth_range", format!("invalid range [{}, {}]", r.d_min, r.d_max));
        }
    }
    for f in ep.frames() {
        check_state(&mut sink, f.index(), f.state(), chains);
    }
    sink.issues
}

/// Count of differing samples between two images of equal shape, or
/// `None` when the shapes differ.
fn pixel_mismatch(a: &ImageBuffer, b: &ImageBuffer) -> Option<usize> {
    if a.dimensions() != b.dimensions() || a.channels() != b.channels() {
        return None;
    }
    Some(a.data().iter().zip(b.data()).filter(|(x, y)| x != y).count())
}

/// True when some pixel within one pixel of `(u, v)` is not black.
fn lit_near(img: &ImageBuffer, u: f64, v: f64) -> bool {
    let (w, h) = img.dimensions();
    let (cx, cy) = (u.floor() as i64, v.floor() as i64);
    (-1..=1).any(|dy| {
        (-1..=1).any(|dx| {
            let (x, y) = (cx + dx, cy + dy);
            x >= 0 && y >= 0 && x < w as i64 && y < h as i64 && !img.is_black(x as u32, y as u32)
        })
    })
}

fn check_labels(sink: &mut Sink, t: usize, st: &FrameState, manifest: &Manifest, bundle_dir: &Path, inputs: &ValidationInputs) {
    let Some(entry) = manifest.find(sink.episode, t, BundleKind::Rgb) else {
        sink.push(Some(t), "bundle", "no conditioning bundle for a modified frame");
        return;
    };
    if entry.action != st.action {
        sink.push(Some(t), "bundle", "bundle action differs from the frame action");
    }
    let scene = match build_skeleton_scene(inputs.chains, &st.action, inputs.style) {
        Ok(s) => s,
        Err(e) => {
            sink.push(Some(t), "action", e.to_string());
            return;
        }
    };
    for files in &entry.files {
        let Some(cam) = inputs.cameras.get(files.camera) else {
            sink.push(Some(t), "bundle", format!("camera {} is not configured", files.camera));
            continue;
        };
        let path = bundle_dir.join(&files.skeleton);
        let stored = match ImageBuffer::load_png(&path) {
            Ok(img) => img,
            Err(e) => {
                sink.push(Some(t), "bundle", e.to_string());
                continue;
            }
        };
        let rendered = render_skeleton(&scene, cam).0;
        let native = stored.dimensions() == rendered.dimensions();
        let expected = if native {
            rendered
        } else {
            match pad_and_rescale(&rendered, stored.width()) {
                Ok(img) => img,
                Err(e) => {
                    sink.push(Some(t), "bundle", e.to_string());
                    continue;
                }
            }
        };
        match pixel_mismatch(&expected, &stored) {
            Some(0) => {}
            Some(n) => sink.push(Some(t), "bundle", format!("camera {}: skeleton differs from the action in {n} samples", files.camera)),
            None => sink.push(Some(t), "bundle", format!("camera {}: skeleton image has the wrong shape", files.camera)),
        }
        if !native {
            continue;
        }
        for arm in &scene.arms {
            for j in &arm.joints {
                let Ok(p) = cam.project(&j.position) else { continue };
                if p.u < 0.0 || p.v < 0.0 || p.u >= cam.width as f64 || p.v >= cam.height as f64 {
                    continue;
                }
                if !lit_near(&stored, p.u, p.v) {
                    sink.push(Some(t), "bundle", format!("camera {}: joint at ({:.1}, {:.1}) is not drawn", files.camera, p.u, p.v));
                }
            }
        }
    }
}

fn compare_with_source(sink: &mut Sink, aug: &Episode, src: &Episode, inputs: &ValidationInputs, bundles: Option<(&Manifest, &Path)>) -> usize {
    if aug.meta != src.meta {
        sink.push(None, "episode", "metadata differs from the source episode");
    }
    if aug.len() != src.len() {
        sink.push(None, "frames", format!("{} frames, source has {}", aug.len(), src.len()));
        return 0;
    }
    let replaced: BTreeSet<usize> = replacement_indices(aug.len(), inputs.k.max(1)).into_iter().collect();
    let mut modified = 0;
    for t in 0..aug.len() {
        let (Some(a), Some(s)) = (aug.raw_frame(t), src.raw_frame(t)) else {
            continue;
        };
        let unchanged = a == s;
        if unchanged {
            continue;
        }
        modified += 1;
        if !replaced.contains(&t) {
            sink.push(Some(t), "locality", "frame differs from the source but is not a replacement frame");
            continue;
        }
        let fa = aug.frame(t).expect("index below length").state();
        let fs = src.frame(t).expect("index below length").state();
        if fa.action != fa.joints {
            sink.push(Some(t), "action", "relabeled action differs from the joint state");
        }
        if fa.gripper != fs.gripper {
            sink.push(Some(t), "gripper", "gripper state differs from the source");
        }
        if fa.torques != fs.torques {
            sink.push(Some(t), "torques", "torques differ from the source");
        }
        if let Some((manifest, dir)) = bundles {
            check_labels(sink, t, fa, manifest, dir, inputs);
        }
    }
    modified
}

/// Validate every episode under `root`. Episodes that fail to load become
/// issues; only an unreadable root is an error.
pub fn validate_dataset(root: &Path, inputs: &ValidationInputs) -> Result<ValidationReport, DatasetError> {
    let manifest = inputs.bundles.map(Manifest::load).transpose()?;
    let mut report = ValidationReport::default();
    for dir in list_episodes(root)? {
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        report.episodes += 1;
        let ep = match Episode::load(&dir) {
            Ok(ep) => ep,
            Err(e) => {
                report.issues.push(Issue {
                    episode: name,
                    frame: None,
                    field: "load".into(),
                    message: e.to_string(),
                });
                continue;
            }
        };
        report.frames += ep.len();
        report.issues.extend(validate_episode(&ep, inputs.chains, inputs.cameras));
        let Some(source_root) = inputs.source else { continue };
        let mut sink = Sink {
            episode: ep.id(),
            issues: Vec::new(),
        };
        match Episode::load(&source_root.join(&name)) {
            Ok(src) => {
                let bundles = manifest.as_ref().zip(inputs.bundles);
                report.modified_frames += compare_with_source(&mut sink, &ep, &src, inputs, bundles);
            }
            Err(e) => sink.push(None, "source", e.to_string()),
        }
        report.issues.extend(sink.issues);
    }
    Ok(report)
}
