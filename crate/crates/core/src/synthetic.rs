//! Deterministic two-arm scene and dataset generator used by the demo
//! binary and the test suites.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use std::path::{Path, PathBuf};

use crate::buffer::{DepthMap, DepthRange, ImageBuffer};
use crate::camera::CameraModel;
use crate::dataset::{DatasetError, Episode, Frame, FrameState};
use crate::geometry::{JointLimits, JointVector, KinematicChain, KinematicsError, RevoluteJoint, SE3Pose};
use crate::render::{build_skeleton_scene, rasterize, StyleConfig};
use crate::ArmPair;

/// Offsets along the local z axis from one joint frame to the next.
const LINK_OFFSETS: [f64; 7] = [0.15, 0.15, 0.2, 0.1, 0.15, 0.1, 0.08];
const TOOL_OFFSET: f64 = 0.1;
const HOME: [f64; 7] = [0.0, 0.5, 0.0, 1.0, 0.0, 0.6, 0.0];

/// 7-DOF arm with alternating yaw and pitch joints, based at `base`.
pub fn seven_dof_arm(name: &str, base: Vector3<f64>) -> KinematicChain {
    let joints = LINK_OFFSETS
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let axis = if i % 2 == 0 { Vector3::z() } else { Vector3::y() };
            let limit = if i % 2 == 0 { 2.9 } else { 2.0 };
            RevoluteJoint::new(
                format!("{name}_joint{}", i + 1),
                axis,
                SE3Pose::from_translation(Vector3::new(0.0, 0.0, *l)),
                JointLimits::new(-limit, limit),
            )
        })
        .collect();
    KinematicChain::new(
        name,
        SE3Pose::from_translation(base),
        joints,
        SE3Pose::from_translation(Vector3::new(0.0, 0.0, TOOL_OFFSET)),
    )
    .expect("fixed chain is valid")
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub chains: ArmPair<KinematicChain>,
    pub home: ArmPair<JointVector>,
    pub cameras: Vec<CameraModel>,
    pub table_height: f64,
}

impl Default for SyntheticScene {
    fn default() -> Self {
        Self::new(1, 128)
    }
}

impl SyntheticScene {
    /// `camera_count` views (1 to 4) of `side`-pixel square images.
    pub fn new(camera_count: usize, side: u32) -> Self {
        assert!((1..=4).contains(&camera_count), "1 to 4 cameras");
        let chains = ArmPair::new(
            seven_dof_arm("left", Vector3::new(0.0, 0.3, 0.0)),
            seven_dof_arm("right", Vector3::new(0.0, -0.3, 0.0)),
        );
        let home = ArmPair::new(JointVector::new(HOME.to_vec()), JointVector::new(HOME.to_vec()));
        let f = 110.0 * side as f64 / 128.0;
        let eyes = [
            Vector3::new(1.6, 0.0, 0.9),
            Vector3::new(1.3, 0.9, 0.8),
            Vector3::new(1.3, -0.9, 0.8),
            Vector3::new(1.9, 0.0, 1.5),
        ];
        let cameras = eyes[..camera_count]
            .iter()
            .map(|eye| CameraModel::look_at(f, f, side, side, *eye, Vector3::new(0.35, 0.0, 0.25), Vector3::z()).expect("fixed camera"))
            .collect();
        Self {
            chains,
            home,
            cameras,
            table_height: 0.0,
        }
    }

    /// Smooth joint trajectory around the home pose.
    pub fn trajectory(&self, len: usize, seed: u64) -> Vec<ArmPair<JointVector>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phases: Vec<f64> = (0..14).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        let period = rng.random_range(40.0..80.0);
        (0..len)
            .map(|t| {
                let w = std::f64::consts::TAU * t as f64 / period;
                let arm = |offset: usize, home: &JointVector| {
                    JointVector::new(home.0.iter().enumerate().map(|(j, h)| h + 0.15 * (w + phases[offset + j]).sin()).collect())
                };
                ArmPair::new(arm(0, &self.home.left), arm(7, &self.home.right))
            })
            .collect()
    }

    pub fn dof(&self) -> ArmPair<usize> {
        self.chains.map(|_, c| c.dof())
    }
}

/// Torque trace of one arm: a smooth load, bounded noise, and chattering
/// contact forces on the given timestep ranges.
pub fn torque_trace(len: usize, dof: usize, contacts: &[std::ops::Range<usize>], rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let phase: Vec<f64> = (0..dof).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    (0..len)
        .map(|t| {
            let in_contact = contacts.iter().any(|r| r.contains(&t));
            (0..dof)
                .map(|j| {
                    let load = 0.8 * (0.05 * t as f64 + phase[j]).sin();
                    let noise = rng.random_range(-0.02..0.02);
                    let contact = if in_contact && j < 3 {
                        if t % 2 == 0 {
                            1.5
                        } else {
                            -1.5
                        }
                    } else {
                        0.0
                    };
                    load + noise + contact
                })
                .collect()
        })
        .collect()
}

/// Material of the rendered robot in source images.
fn robot_style() -> StyleConfig {
    StyleConfig {
        sphere_radius: 0.045,
        cylinder_radius: 0.03,
        left_color: [150, 150, 158],
        right_color: [128, 132, 142],
        stripe_color: [150, 150, 158],
        stripe_count: 1,
    }
}

const TABLE_COLORS: [[u8; 3]; 2] = [[124, 94, 64], [112, 84, 58]];
const WALL_COLOR: [u8; 3] = [62, 70, 80];

impl SyntheticScene {
    /// Camera image and metric depth of the arms at `q` above a
    /// checkered table plane.
    pub fn render_frame(&self, q: &ArmPair<JointVector>, cam: &CameraModel) -> Result<(ImageBuffer, DepthMap), KinematicsError> {
        let scene = build_skeleton_scene(&self.chains, q, &robot_style())?;
        let robot = rasterize(&scene.primitives(), cam);
        let mut rgb = robot.rgb;
        let mut depth = robot.depth;
        let origin = cam.center();
        for y in 0..cam.height {
            for x in 0..cam.width {
                let d = cam.ray_direction(x as f64, y as f64);
                let t = if d.z < 0.0 { (self.table_height - origin.z) / d.z } else { f64::INFINITY };
                let (color, t) = if t.is_finite() && t > 0.0 {
                    let p = origin + d * t;
                    let cell = ((p.x / 0.1).floor() + (p.y / 0.1).floor()).rem_euclid(2.0) as usize;
                    (TABLE_COLORS[cell], t)
                } else {
                    (WALL_COLOR, f64::INFINITY)
                };
                if robot.ids[(y * cam.width + x) as usize].is_none() || (depth.get(x, y) as f64) > t {
                    rgb.set_pixel(x, y, &color);
                    depth.set(x, y, t as f32);
                }
            }
        }
        Ok((rgb, depth))
    }

    /// Write the arm models as `{"left": ..., "right": ...}` JSON.
    pub fn kinematics_json(&self) -> String {
        serde_json::to_string_pretty(&self.chains).expect("plain struct")
    }

    pub fn cameras_json(&self) -> String {
        serde_json::to_string_pretty(&self.cameras).expect("plain struct")
    }

    /// One episode of `len` frames. Actions are the next joint state.
    /// Contact-rich spans get chattering torques on the first joints.
    pub fn episode(&self, id: &str, len: usize, seed: u64, with_depth: bool) -> Result<Episode, DatasetError> {
        let traj = self.trajectory(len, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let dof = self.dof();
        let span = |rng: &mut ChaCha8Rng| {
            let a = rng.random_range(len / 2..=2 * len / 3);
            let b = (a + rng.random_range(len / 10..=len / 4).max(4)).min(len);
            a..b
        };
        let contacts = ArmPair::new(vec![span(&mut rng)], vec![span(&mut rng)]);
        let torques = ArmPair::new(
            torque_trace(len, dof.left, &contacts.left, &mut rng),
            torque_trace(len, dof.right, &contacts.right, &mut rng),
        );
        let grip_phase = rng.random_range(0.0..std::f64::consts::TAU);
        let frames = (0..len)
            .map(|t| {
                let q = &traj[t];
                let next = traj.get(t + 1).unwrap_or(q);
                let g = 0.5 + 0.5 * (0.05 * t as f64 + grip_phase).sin();
                let state = FrameState {
                    joints: q.clone(),
                    gripper: ArmPair::new(g, 1.0 - g),
                    action: next.clone(),
                    torques: ArmPair::new(torques.left[t].clone(), torques.right[t].clone()),
                };
                let mut rgb = Vec::with_capacity(self.cameras.len());
                let mut depth = Vec::with_capacity(self.cameras.len());
                for cam in &self.cameras {
                    let (img, d) = self.render_frame(q, cam)?;
                    rgb.push(img);
                    depth.push(d);
                }
                Ok(Frame::new(t, state, rgb, with_depth.then_some(depth)))
            })
            .collect::<Result<Vec<_>, DatasetError>>()?;
        let goals = ["hand over the cube", "lift the box", "fold the towel", "open the jar"];
        let goal = goals[(seed % goals.len() as u64) as usize];
        Episode::new(id, goal, frames, with_depth.then(DepthRange::default))
    }
}

/// Shape of a generated demo dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DemoSpec {
    pub episodes: usize,
    pub frames: usize,
    pub cameras: usize,
    pub side: u32,
    pub seed: u64,
    pub with_depth: bool,
}

impl Default for DemoSpec {
    fn default() -> Self {
        Self {
            episodes: 2,
            frames: 100,
            cameras: 1,
            side: 96,
            seed: 0,
            with_depth: false,
        }
    }
}

/// Write a complete demo workspace under `root`: `dataset/<episode>/`,
/// `kinematics.json`, `cameras.json` and a `config.json` pointing at them
/// with output in `output/`. Returns the config path.
pub fn write_demo(root: &Path, spec: &DemoSpec) -> Result<PathBuf, DatasetError> {
    let scene = SyntheticScene::new(spec.cameras, spec.side);
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DatasetError::Io { path, source }
    };
    let data = root.join("dataset");
    std::fs::create_dir_all(&data).map_err(io(&data))?;
    for i in 0..spec.episodes {
        let id = format!("episode_{i:03}");
        let ep = scene.episode(&id, spec.frames, spec.seed.wrapping_mul(1000).wrapping_add(i as u64), spec.with_depth)?;
        ep.save(&data.join(&id))?;
    }
    let files = [
        ("kinematics.json", scene.kinematics_json()),
        ("cameras.json", scene.cameras_json()),
        (
            "config.json",
            serde_json::to_string_pretty(&serde_json::json!({
                "paths": {
                    "dataset": "dataset",
                    "output": "output",
                    "kinematics": "kinematics.json",
                    "cameras": "cameras.json",
                },
                "k": 8,
                "seed": spec.seed,
                "mode": if spec.with_depth { "rgbd" } else { "rgb" },
            }))
            .expect("plain json"),
        ),
    ];
    for (name, text) in files {
        let p = root.join(name);
        std::fs::write(&p, text).map_err(io(&p))?;
    }
    Ok(root.join("config.json"))
}
