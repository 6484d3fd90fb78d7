//! Ideal pinhole camera and the zero-pad / rescale image convention.
//!
//! Camera frame: x right, y down, z forward. Integer pixel coordinates
//! `(u, v)` name pixel centers, so pixel `(i, j)` is sampled by the ray
//! through `((i - cx) / fx, (j - cy) / fy, 1)`.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::buffer::ImageBuffer;
use crate::geometry::SE3Pose;

#[derive(Debug, thiserror::Error)]
pub enum CameraError {
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("invalid camera: {0}")]
    Invalid(String),
    #[error("target side length must be positive")]
    ZeroSide,
    #[error("image is empty")]
    EmptyImage,
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Camera pose in the world frame (camera-to-world).
    pub extrinsics: SE3Pose,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    /// Camera-frame z, meters.
    pub depth: f64,
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32, extrinsics: SE3Pose) -> Result<Self, CameraError> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            extrinsics,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`, with world `up` projecting to
    /// the image's upward direction.
    pub fn look_at(
        fx: f64,
        fy: f64,
        width: u32,
        height: u32,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self, CameraError> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(CameraError::Invalid("view direction parallel to up".into()));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[right, down, forward]));
        let extrinsics = SE3Pose::new(UnitQuaternion::from_rotation_matrix(&rot), eye);
        Self::new(fx, fy, width as f64 / 2.0, height as f64 / 2.0, width, height, extrinsics)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || !self.extrinsics.is_finite() {
            return Err(CameraError::Invalid("non-finite parameter".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(CameraError::Invalid("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::Invalid("image size must be nonzero".into()));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(CameraError::Invalid("principal point outside image".into()));
        }
        Ok(())
    }

    pub fn from_path(path: &Path) -> Result<Self, CameraError> {
        let text = std::fs::read_to_string(path).map_err(|e| CameraError::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let cam: CameraModel = serde_json::from_str(&text).map_err(|e| CameraError::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cam.validate().map_err(|e| CameraError::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(cam)
    }

    pub fn center(&self) -> Vector3<f64> {
        self.extrinsics.translation
    }

    pub fn world_to_camera(&self, p_world: &Vector3<f64>) -> Vector3<f64> {
        self.extrinsics.inverse().transform_point(p_world)
    }

    pub fn project(&self, p_world: &Vector3<f64>) -> Result<Projection, CameraError> {
        let p = self.world_to_camera(p_world);
        if !(p.z > 0.0) {
            return Err(CameraError::BehindCamera(p.z));
        }
        Ok(Projection {
            u: self.fx * p.x / p.z + self.cx,
            v: self.fy * p.y / p.z + self.cy,
            depth: p.z,
        })
    }

    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        let p = Vector3::new((u - self.cx) / self.fx * depth, (v - self.cy) / self.fy * depth, depth);
        self.extrinsics.transform_point(&p)
    }

    /// World-frame ray direction through pixel `(u, v)`, scaled so that its
    /// camera-frame z component is 1. A hit at parameter `t` has depth `t`.
    pub fn ray_direction(&self, u: f64, v: f64) -> Vector3<f64> {
        self.extrinsics
            .transform_vector(&Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0))
    }
}

/// Zero-pad symmetrically to a square on the long side, then resample to
/// `side x side` with bilinear interpolation.
pub fn pad_and_rescale(img: &ImageBuffer, side: u32) -> Result<ImageBuffer, CameraError> {
    if side == 0 {
        return Err(CameraError::ZeroSide);
    }
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return Err(CameraError::EmptyImage);
    }
    let square = w.max(h);
    let (ox, oy) = ((square - w) / 2, (square - h) / 2);
    let ch = img.channels();

    let mut padded = ImageBuffer::new(square, square, ch).expect("channel count already valid");
    {
        let row_len = w as usize * ch;
        let src = img.data();
        let dst = padded.data_mut();
        for y in 0..h as usize {
            let d0 = ((y + oy as usize) * square as usize + ox as usize) * ch;
            dst[d0..d0 + row_len].copy_from_slice(&src[y * row_len..(y + 1) * row_len]);
        }
    }
    if square == side {
        return Ok(padded);
    }
    Ok(resize_bilinear(&padded, side, side))
}

/// Two-tap bilinear resampling with pixel-center alignment and edge clamping.
pub fn resize_bilinear(img: &ImageBuffer, out_w: u32, out_h: u32) -> ImageBuffer {
    let (w, h) = img.dimensions();
    let ch = img.channels();
    let sx = w as f64 / out_w as f64;
    let sy = h as f64 / out_h as f64;
    let mut out = ImageBuffer::new(out_w, out_h, ch).expect("channel count already valid");
    let src = img.data();

    let sample_axis = |i: u32, scale: f64, len: u32| -> (usize, usize, f64) {
        let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(len as usize - 1);
        (i0, i1, pos - i0 as f64)
    };

    let dst = out.data_mut();
    for y in 0..out_h {
        let (y0, y1, fy) = sample_axis(y, sy, h);
        for x in 0..out_w {
            let (x0, x1, fx) = sample_axis(x, sx, w);
            let at = |xx: usize, yy: usize, c: usize| src[(yy * w as usize + xx) * ch + c] as f64;
            let o = (y as usize * out_w as usize + x as usize) * ch;
            for c in 0..ch {
                let top = at(x0, y0, c) * (1.0 - fx) + at(x1, y0, c) * fx;
                let bottom = at(x0, y1, c) * (1.0 - fx) + at(x1, y1, c) * fx;
                dst[o + c] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}
