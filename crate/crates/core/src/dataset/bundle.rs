//! Conditioning bundles handed to an image synthesizer, the synthesizer
//! seam itself, and bundle export.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::buffer::ImageBuffer;
use crate::camera::pad_and_rescale;
use crate::contact::Phase;
use crate::geometry::{JointVector, SE3Pose};
use crate::render::{tile_views, untile_views};
use crate::ArmPair;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
#[error("synthesis failed: {0}")]
pub struct SynthesisError(pub String);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BundleKind {
    /// RGB source, skeleton conditioning.
    Rgb,
    /// Depth colormap source, target RGB plus skeleton conditioning.
    Depth,
}

/// One view of a bundle as seen by a synthesizer.
#[derive(Clone, Copy, Debug)]
pub struct BundleView<'a> {
    pub source: &'a ImageBuffer,
    pub skeleton: &'a ImageBuffer,
    pub target: Option<&'a ImageBuffer>,
}

impl BundleView<'_> {
    /// Skeleton alone, or the 6-channel stack of target RGB then skeleton.
    pub fn conditioning(&self) -> Result<ImageBuffer, DatasetError> {
        match self.target {
            Some(t) => Ok(ImageBuffer::concat_channels(t, self.skeleton)?),
            None => Ok(self.skeleton.clone()),
        }
    }
}

/// Produces the augmented image of one view.
pub trait Synthesizer: Sync {
    fn synthesize(&self, view: &BundleView) -> Result<ImageBuffer, SynthesisError>;
}

/// Skeleton pixels drawn opaquely over the source, black treated as
/// transparent.
pub fn overlay(source: &ImageBuffer, skeleton: &ImageBuffer) -> Result<ImageBuffer, SynthesisError> {
    if source.dimensions() != skeleton.dimensions() || source.channels() != 3 || skeleton.channels() != 3 {
        return Err(SynthesisError(format!(
            "overlay needs two RGB images of one size, got {:?}x{} and {:?}x{}",
            source.dimensions(),
            source.channels(),
            skeleton.dimensions(),
            skeleton.channels()
        )));
    }
    let mut out = source.clone();
    for (dst, src) in out.data_mut().chunks_exact_mut(3).zip(skeleton.data().chunks_exact(3)) {
        if src != [0, 0, 0] {
            dst.copy_from_slice(src);
        }
    }
    Ok(out)
}

/// Reference stand-in for a learned synthesizer.
#[derive(Clone, Copy, Debug, Default)]
pub struct OverlaySynthesizer;

impl Synthesizer for OverlaySynthesizer {
    fn synthesize(&self, view: &BundleView) -> Result<ImageBuffer, SynthesisError> {
        overlay(view.source, view.skeleton)
    }
}

/// Returns the source unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentitySynthesizer;

impl Synthesizer for IdentitySynthesizer {
    fn synthesize(&self, view: &BundleView) -> Result<ImageBuffer, SynthesisError> {
        Ok(view.source.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditioningBundle {
    pub episode: String,
    pub goal: String,
    pub frame: usize,
    pub kind: BundleKind,
    pub phase: Phase,
    /// Per camera.
    pub source: Vec<ImageBuffer>,
    pub skeleton: Vec<ImageBuffer>,
    pub target: Option<Vec<ImageBuffer>>,
    pub action: ArmPair<JointVector>,
    pub delta: ArmPair<SE3Pose>,
}

impl ConditioningBundle {
    pub fn check(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::Structure(format!("bundle {}/{}: {m}", self.episode, self.frame)));
        if self.source.is_empty() || self.source.len() != self.skeleton.len() {
            return bad(format!("{} sources for {} skeleton images", self.source.len(), self.skeleton.len()));
        }
        for (c, (s, k)) in self.source.iter().zip(&self.skeleton).enumerate() {
            if s.dimensions() != k.dimensions() {
                return bad(format!("camera {c}: skeleton {:?} differs from source {:?}", k.dimensions(), s.dimensions()));
            }
        }
        if let Some(t) = &self.target {
            if t.len() != self.source.len() || t.iter().zip(&self.source).any(|(t, s)| t.dimensions() != s.dimensions()) {
                return bad("target images do not match the sources".into());
            }
        }
        Ok(())
    }

    pub fn camera_count(&self) -> usize {
        self.source.len()
    }

    pub fn view(&self, camera: usize) -> BundleView<'_> {
        BundleView {
            source: &self.source[camera],
            skeleton: &self.skeleton[camera],
            target: self.target.as_ref().map(|t| &t[camera]),
        }
    }

    /// Run `synth` on every view, or once on the 2x2 composite of all views
    /// when `tiled`, and return one output per camera.
    pub fn synthesize(&self, synth: &dyn Synthesizer, tiled: bool) -> Result<Vec<ImageBuffer>, SynthesisError> {
        let fail = |e: crate::render::TileError| SynthesisError(e.to_string());
        let outputs = if tiled {
            let source = tile_views(&self.source).map_err(fail)?;
            let skeleton = tile_views(&self.skeleton).map_err(fail)?;
            let target = self.target.as_ref().map(|t| tile_views(t)).transpose().map_err(fail)?;
            let view = BundleView {
                source: &source,
                skeleton: &skeleton,
                target: target.as_ref(),
            };
            let out = synth.synthesize(&view)?;
            if out.dimensions() != source.dimensions() {
                return Err(SynthesisError(format!("composite output is {:?}, expected {:?}", out.dimensions(), source.dimensions())));
            }
            untile_views(&out, self.camera_count()).map_err(fail)?
        } else {
            (0..self.camera_count())
                .map(|c| synth.synthesize(&self.view(c)))
                .collect::<Result<Vec<_>, _>>()?
        };
        for (c, (o, s)) in outputs.iter().zip(&self.source).enumerate() {
            if o.dimensions() != s.dimensions() || o.channels() != 3 {
                return Err(SynthesisError(format!("camera {c}: output {:?}x{} does not match the source", o.dimensions(), o.channels())));
            }
        }
        Ok(outputs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleFiles {
    pub camera: usize,
    pub source: String,
    pub skeleton: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub episode: String,
    pub frame: usize,
    pub kind: BundleKind,
    pub phase: Phase,
    pub goal: String,
    pub files: Vec<BundleFiles>,
    pub action: ArmPair<JointVector>,
    pub delta: ArmPair<SE3Pose>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|source| DatasetError::Io { path: path.clone(), source })?;
        serde_json::from_str(&text).map_err(|e| DatasetError::Format {
            path,
            message: e.to_string(),
        })
    }

    pub fn find(&self, episode: &str, frame: usize, kind: BundleKind) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.episode == episode && e.frame == frame && e.kind == kind)
    }
}

fn kind_name(kind: BundleKind) -> &'static str {
    match kind {
        BundleKind::Rgb => "rgb",
        BundleKind::Depth => "depth",
    }
}

fn write_png(img: &ImageBuffer, side: Option<u32>, path: &Path) -> Result<(), DatasetError> {
    let img = match side {
        Some(s) => pad_and_rescale(img, s)?,
        None => img.clone(),
    };
    img.save_png(path)?;
    Ok(())
}

/// Write every bundle as PNGs under `dir/<episode>/` plus `dir/manifest.json`.
/// Entries are ordered by episode, frame and kind. With `side`, images are
/// zero-padded to a square and rescaled to `side` pixels first.
pub fn export_bundles(bundles: &[ConditioningBundle], dir: &Path, side: Option<u32>) -> Result<Manifest, DatasetError> {
    fs::create_dir_all(dir).map_err(|source| DatasetError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut order: Vec<&ConditioningBundle> = bundles.iter().collect();
    order.sort_by(|a, b| (&a.episode, a.frame, a.kind).cmp(&(&b.episode, b.frame, b.kind)));

    let mut entries = Vec::with_capacity(order.len());
    for b in order {
        b.check()?;
        let ep_dir = dir.join(&b.episode);
        fs::create_dir_all(&ep_dir).map_err(|source| DatasetError::Io { path: ep_dir.clone(), source })?;
        let mut files = Vec::with_capacity(b.camera_count());
        for c in 0..b.camera_count() {
            let stem = format!("{:06}_{}_cam{c}", b.frame, kind_name(b.kind));
            let name = |part: &str| format!("{}/{stem}_{part}.png", b.episode);
            let entry = BundleFiles {
                camera: c,
                source: name("source"),
                skeleton: name("skeleton"),
                target: b.target.as_ref().map(|_| name("target")),
            };
            write_png(&b.source[c], side, &dir.join(&entry.source))?;
            write_png(&b.skeleton[c], side, &dir.join(&entry.skeleton))?;
            if let (Some(t), Some(n)) = (&b.target, &entry.target) {
                write_png(&t[c], side, &dir.join(n))?;
            }
            files.push(entry);
        }
        entries.push(ManifestEntry {
            episode: b.episode.clone(),
            frame: b.frame,
            kind: b.kind,
            phase: b.phase,
            goal: b.goal.clone(),
            files,
            action: b.action.clone(),
            delta: b.delta,
        });
    }
    let manifest = Manifest { entries };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("plain struct");
    fs::write(&path, text).map_err(|source| DatasetError::Io { path, source })?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle(frame: usize, cams: usize) -> ConditioningBundle {
        let src = ImageBuffer::filled(8, 8, &[50, 60, 70]).unwrap();
        let mut sk = ImageBuffer::new(8, 8, 3).unwrap();
        sk.set_pixel(2, 3, &[255, 0, 0]);
        ConditioningBundle {
            episode: "ep".into(),
            goal: "g".into(),
            frame,
            kind: BundleKind::Rgb,
            phase: Phase::Contactless,
            source: vec![src; cams],
            skeleton: vec![sk; cams],
            target: None,
            action: ArmPair::new(JointVector::zeros(2), JointVector::zeros(2)),
            delta: ArmPair::default(),
        }
    }

    #[test]
    fn overlay_cases() {
        let src = ImageBuffer::filled(4, 2, &[9, 9, 9]).unwrap();
        let empty = ImageBuffer::new(4, 2, 3).unwrap();
        assert_eq!(overlay(&src, &empty).unwrap(), src);
        let full = ImageBuffer::filled(4, 2, &[1, 2, 3]).unwrap();
        assert_eq!(overlay(&src, &full).unwrap(), full);
        let mut half = empty.clone();
        for y in 0..2 {
            for x in 0..2 {
                half.set_pixel(x, y, &[200, 0, 0]);
            }
        }
        let out = overlay(&src, &half).unwrap();
        for y in 0..2 {
            for x in 0..4 {
                let expect: &[u8] = if x < 2 { &[200, 0, 0] } else { &[9, 9, 9] };
                assert_eq!(out.pixel(x, y), expect);
            }
        }
    }

    #[test]
    fn six_channel_conditioning_has_two_planes() {
        let mut b = bundle(8, 1);
        b.kind = BundleKind::Depth;
        b.target = Some(vec![ImageBuffer::filled(8, 8, &[1, 1, 1]).unwrap()]);
        let cond = b.view(0).conditioning().unwrap();
        assert_eq!(cond.channels(), 6);
        assert_eq!(cond.channel_planes(0, 3).unwrap(), b.target.as_ref().unwrap()[0]);
        assert_eq!(cond.channel_planes(3, 3).unwrap(), b.skeleton[0]);
    }

    #[test]
    fn tiled_synthesis_matches_per_view() {
        let b = bundle(8, 3);
        let a = b.synthesize(&OverlaySynthesizer, false).unwrap();
        let t = b.synthesize(&OverlaySynthesizer, true).unwrap();
        assert_eq!(a, t);
    }

    #[test]
    fn export_empty_and_two() {
        let dir = tempfile::tempdir().unwrap();
        let m = export_bundles(&[], dir.path(), None).unwrap();
        assert!(m.entries.is_empty());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);

        let dir = tempfile::tempdir().unwrap();
        let m = export_bundles(&[bundle(16, 2), bundle(8, 2)], dir.path(), None).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.entries[0].frame, 8);
        for e in &m.entries {
            for f in &e.files {
                assert!(dir.path().join(&f.source).is_file());
                assert!(dir.path().join(&f.skeleton).is_file());
            }
        }
        let first = fs::read(dir.path().join(MANIFEST_FILE)).unwrap();
        export_bundles(&[bundle(8, 2), bundle(16, 2)], dir.path(), None).unwrap();
        assert_eq!(first, fs::read(dir.path().join(MANIFEST_FILE)).unwrap());
        assert_eq!(Manifest::load(dir.path()).unwrap(), m);
    }

    #[test]
    fn export_rescales_to_side() {
        let dir = tempfile::tempdir().unwrap();
        let m = export_bundles(&[bundle(8, 1)], dir.path(), Some(4)).unwrap();
        let img = ImageBuffer::load_png(&dir.path().join(&m.entries[0].files[0].source)).unwrap();
        assert_eq!(img.dimensions(), (4, 4));
    }
}
