//! On-disk episodes: one directory per episode holding `episode.json`,
//! `frames.jsonl` with one numeric record per frame, and per-camera PNGs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::buffer::{DepthMap, DepthRange, ImageBuffer};
use crate::contact::TorqueTrace;
use crate::geometry::JointVector;
use crate::{Arm, ArmPair};

pub const EPISODE_FILE: &str = "episode.json";
pub const FRAMES_FILE: &str = "frames.jsonl";
pub const DEPTH_SIDECAR: &str = "depth_range.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub id: String,
    pub goal: String,
    pub camera_count: usize,
    pub frame_count: usize,
    pub image_width: u32,
    pub image_height: u32,
    #[serde(default)]
    pub has_depth: bool,
}

/// Numeric state of one timestep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameState {
    pub joints: ArmPair<JointVector>,
    /// Open fraction in `[0, 1]`.
    pub gripper: ArmPair<f64>,
    /// Target joint positions commanded at this step.
    pub action: ArmPair<JointVector>,
    /// Measured motor torques, N m.
    pub torques: ArmPair<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct FrameRecord {
    pub index: usize,
    #[serde(flatten)]
    pub state: FrameState,
    pub images: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<Vec<String>>,
}

/// Bytes of a frame exactly as read from disk.
#[derive(Clone, Debug, PartialEq)]
struct RawFrame {
    line: String,
    images: Vec<(String, Vec<u8>)>,
    depth: Vec<(String, Vec<u8>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    index: usize,
    state: FrameState,
    rgb: Vec<ImageBuffer>,
    depth: Option<Vec<DepthMap>>,
    raw: Option<RawFrame>,
}

pub fn rgb_file_name(camera: usize, frame: usize) -> String {
    format!("cam{camera}_rgb_{frame:06}.png")
}

pub fn depth_file_name(camera: usize, frame: usize) -> String {
    format!("cam{camera}_depth_{frame:06}.png")
}

impl Frame {
    pub fn new(index: usize, state: FrameState, rgb: Vec<ImageBuffer>, depth: Option<Vec<DepthMap>>) -> Self {
        Self {
            index,
            state,
            rgb,
            depth,
            raw: None,
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn state(&self) -> &FrameState {
        &self.state
    }

    pub fn rgb(&self) -> &[ImageBuffer] {
        &self.rgb
    }

    pub fn depth(&self) -> Option<&[DepthMap]> {
        self.depth.as_deref()
    }

    /// True while the frame still carries its source bytes unchanged.
    pub fn is_pristine(&self) -> bool {
        self.raw.is_some()
    }

    /// Replace the content of the frame. The source bytes are dropped, so
    /// the frame is re-encoded on save.
    pub fn replace(&mut self, state: FrameState, rgb: Vec<ImageBuffer>, depth: Option<Vec<DepthMap>>) {
        self.state = state;
        self.rgb = rgb;
        self.depth = depth;
        self.raw = None;
    }

    fn record(&self) -> FrameRecord {
        let cams = self.rgb.len();
        FrameRecord {
            index: self.index,
            state: self.state.clone(),
            images: (0..cams).map(|c| rgb_file_name(c, self.index)).collect(),
            depth: self
                .depth
                .as_ref()
                .map(|d| (0..d.len()).map(|c| depth_file_name(c, self.index)).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub meta: EpisodeMeta,
    pub depth_range: Option<DepthRange>,
    frames: Vec<Frame>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> DatasetError {
    DatasetError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Episode directories under `root` (those holding an `episode.json`),
/// sorted by name.
pub fn list_episodes(root: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        let path = entry.path();
        if path.join(EPISODE_FILE).is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

impl Episode {
    /// Assemble an episode, filling in counts and image size from `frames`.
    pub fn new(id: impl Into<String>, goal: impl Into<String>, frames: Vec<Frame>, depth_range: Option<DepthRange>) -> Result<Self, DatasetError> {
        let first = frames.first().ok_or_else(|| DatasetError::Structure("episode has no frames".into()))?;
        let (w, h) = first
            .rgb
            .first()
            .map(|i| i.dimensions())
            .ok_or_else(|| DatasetError::Structure("frame 0 has no images".into()))?;
        let meta = EpisodeMeta {
            id: id.into(),
            goal: goal.into(),
            camera_count: first.rgb.len(),
            frame_count: frames.len(),
            image_width: w,
            image_height: h,
            has_depth: first.depth.is_some(),
        };
        if meta.has_depth && depth_range.is_none() {
            return Err(DatasetError::Structure("depth images need a depth range".into()));
        }
        let ep = Self { meta, depth_range, frames };
        ep.check_shape()?;
        Ok(ep)
    }

    pub fn id(&self) -> &str {
        &self.meta.id
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> Option<&Frame> {
        self.frames.get(t)
    }

    pub fn frame_mut(&mut self, t: usize) -> Option<&mut Frame> {
        self.frames.get_mut(t)
    }

    /// Torque traces of both arms.
    pub fn torques(&self) -> Result<ArmPair<TorqueTrace>, DatasetError> {
        let trace = |arm: Arm| TorqueTrace::new(self.frames.iter().map(|f| f.state.torques.get(arm).clone()).collect());
        Ok(ArmPair::new(trace(Arm::Left)?, trace(Arm::Right)?))
    }

    /// Camera count, image sizes and frame indices agree with the metadata.
    pub fn check_shape(&self) -> Result<(), DatasetError> {
        let m = &self.meta;
        if self.frames.len() != m.frame_count {
            return Err(DatasetError::Structure(format!("{} frames, metadata says {}", self.frames.len(), m.frame_count)));
        }
        for (t, f) in self.frames.iter().enumerate() {
            if f.index != t {
                return Err(DatasetError::Structure(format!("frame {t} carries index {}", f.index)));
            }
            if f.rgb.len() != m.camera_count {
                return Err(DatasetError::Structure(format!("frame {t} has {} images, expected {}", f.rgb.len(), m.camera_count)));
            }
            for (c, img) in f.rgb.iter().enumerate() {
                if img.dimensions() != (m.image_width, m.image_height) || img.channels() != 3 {
                    return Err(DatasetError::Structure(format!("frame {t} camera {c}: image is not {}x{} RGB", m.image_width, m.image_height)));
                }
            }
            match (&f.depth, m.has_depth) {
                (Some(d), true) => {
                    if d.len() != m.camera_count || d.iter().any(|d| d.dimensions() != (m.image_width, m.image_height)) {
                        return Err(DatasetError::Structure(format!("frame {t}: depth maps do not match the cameras")));
                    }
                }
                (None, false) => {}
                _ => return Err(DatasetError::Structure(format!("frame {t}: depth presence differs from metadata"))),
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let meta_path = dir.join(EPISODE_FILE);
        let meta_text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
        let meta: EpisodeMeta = serde_json::from_str(&meta_text).map_err(|e| format_err(&meta_path, e.to_string()))?;
        let depth_range = if meta.has_depth {
            Some(DepthRange::load_sidecar(&dir.join(DEPTH_SIDECAR))?)
        } else {
            None
        };

        let frames_path = dir.join(FRAMES_FILE);
        let text = fs::read_to_string(&frames_path).map_err(io_err(&frames_path))?;
        let mut frames = Vec::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rec: FrameRecord = serde_json::from_str(line).map_err(|e| format_err(&frames_path, format!("line {}: {e}", n + 1)))?;
            let mut images = Vec::with_capacity(rec.images.len());
            let mut rgb = Vec::with_capacity(rec.images.len());
            for name in &rec.images {
                let p = dir.join(name);
                let bytes = fs::read(&p).map_err(io_err(&p))?;
                rgb.push(ImageBuffer::decode_png(&bytes, &p)?);
                images.push((name.clone(), bytes));
            }
            let mut depth_raw = Vec::new();
            let depth = match (&rec.depth, &depth_range) {
                (Some(names), Some(range)) => {
                    let mut maps = Vec::with_capacity(names.len());
                    for name in names {
                        let p = dir.join(name);
                        let bytes = fs::read(&p).map_err(io_err(&p))?;
                        maps.push(DepthMap::decode_png16(&bytes, range, &p)?);
                        depth_raw.push((name.clone(), bytes));
                    }
                    Some(maps)
                }
                (None, _) => None,
                (Some(_), None) => return Err(format_err(&frames_path, format!("line {}: depth images without a depth range", n + 1))),
            };
            frames.push(Frame {
                index: rec.index,
                state: rec.state,
                rgb,
                depth,
                raw: Some(RawFrame {
                    line: line.to_string(),
                    images,
                    depth: depth_raw,
                }),
            });
        }
        let ep = Self { meta, depth_range, frames };
        ep.check_shape().map_err(|e| format_err(dir, e.to_string()))?;
        Ok(ep)
    }

    /// Write the episode under `dir`. Pristine frames are written back with
    /// their source bytes; modified frames are encoded afresh.
    pub fn save(&self, dir: &Path) -> Result<(), DatasetError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let meta = serde_json::to_string_pretty(&self.meta).expect("plain struct");
        let meta_path = dir.join(EPISODE_FILE);
        fs::write(&meta_path, meta).map_err(io_err(&meta_path))?;
        if let Some(range) = &self.depth_range {
            range.save_sidecar(&dir.join(DEPTH_SIDECAR))?;
        }
        let mut lines = String::new();
        for f in &self.frames {
            match &f.raw {
                Some(raw) => {
                    for (name, bytes) in raw.images.iter().chain(&raw.depth) {
                        let p = dir.join(name);
                        fs::write(&p, bytes).map_err(io_err(&p))?;
                    }
                    lines.push_str(&raw.line);
                }
                None => {
                    let rec = f.record();
                    for (img, name) in f.rgb.iter().zip(&rec.images) {
                        img.save_png(&dir.join(name))?;
                    }
                    if let (Some(maps), Some(names)) = (&f.depth, &rec.depth) {
                        let range = self
                            .depth_range
                            .as_ref()
                            .ok_or_else(|| DatasetError::Structure("depth images need a depth range".into()))?;
                        for (d, name) in maps.iter().zip(names) {
                            d.save_png16(&dir.join(name), range)?;
                        }
                    }
                    lines.push_str(&serde_json::to_string(&rec).expect("plain struct"));
                }
            }
            lines.push('\n');
        }
        let frames_path = dir.join(FRAMES_FILE);
        fs::write(&frames_path, lines).map_err(io_err(&frames_path))
    }

    /// Source bytes of a pristine frame: its JSON line and image files.
    pub fn raw_frame(&self, t: usize) -> Option<(&str, Vec<(&str, &[u8])>)> {
        let raw = self.frames.get(t)?.raw.as_ref()?;
        let files = raw
            .images
            .iter()
            .chain(&raw.depth)
            .map(|(n, b)| (n.as_str(), b.as_slice()))
            .collect();
        Some((raw.line.as_str(), files))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_episode() -> Episode {
        let state = |t: usize| FrameState {
            joints: ArmPair::new(JointVector::new(vec![t as f64 * 0.1]), JointVector::new(vec![0.0])),
            gripper: ArmPair::new(1.0, 0.5),
            action: ArmPair::new(JointVector::new(vec![t as f64 * 0.1 + 0.05]), JointVector::new(vec![0.0])),
            torques: ArmPair::new(vec![0.1], vec![-0.2]),
        };
        let frames = (0..3)
            .map(|t| {
                let img = ImageBuffer::filled(4, 3, &[t as u8, 10, 20]).unwrap();
                let mut d = DepthMap::background(4, 3);
                d.set(1, 1, 1.5);
                Frame::new(t, state(t), vec![img], Some(vec![d]))
            })
            .collect();
        Episode::new("ep0", "stack the cups", frames, Some(DepthRange::new(0.5, 2.5))).unwrap()
    }

    #[test]
    fn save_load_roundtrip_preserves_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let ep = tiny_episode();
        ep.save(dir.path()).unwrap();
        let loaded = Episode::load(dir.path()).unwrap();
        assert_eq!(loaded.meta, ep.meta);
        assert!(loaded.frames().iter().all(Frame::is_pristine));
        assert_eq!(loaded.frame(2).unwrap().state(), ep.frame(2).unwrap().state());
        assert_eq!(loaded.frame(1).unwrap().rgb(), ep.frame(1).unwrap().rgb());
        let d = loaded.frame(0).unwrap().depth().unwrap()[0].get(1, 1);
        assert!((d - 1.5).abs() < 1e-4);

        let out = tempfile::tempdir().unwrap();
        loaded.save(out.path()).unwrap();
        for name in [FRAMES_FILE, "cam0_rgb_000001.png", "cam0_depth_000002.png"] {
            assert_eq!(fs::read(dir.path().join(name)).unwrap(), fs::read(out.path().join(name)).unwrap());
        }
    }

    #[test]
    fn replace_drops_source_bytes() {
        let dir = tempfile::tempdir().unwrap();
        tiny_episode().save(dir.path()).unwrap();
        let mut ep = Episode::load(dir.path()).unwrap();
        let f = ep.frame_mut(1).unwrap();
        let st = f.state().clone();
        let rgb = f.rgb().to_vec();
        f.replace(st, rgb, None);
        assert!(!ep.frame(1).unwrap().is_pristine());
        assert!(ep.raw_frame(1).is_none());
        assert!(ep.check_shape().is_err());
    }

    #[test]
    fn list_is_sorted() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b", "a", "c"] {
            tiny_episode().save(&dir.path().join(name)).unwrap();
        }
        fs::create_dir(dir.path().join("not_an_episode")).unwrap();
        let names: Vec<_> = list_episodes(dir.path())
            .unwrap()
            .into_iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["a", "b", "c"]);
    }

    #[test]
    fn load_reports_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        tiny_episode().save(dir.path()).unwrap();
        fs::remove_file(dir.path().join("cam0_rgb_000001.png")).unwrap();
        let err = Episode::load(dir.path()).unwrap_err();
        assert!(err.to_string().contains("cam0_rgb_000001.png"), "{err}");
    }
}
