//! Z-buffered rasterization of analytic spheres and capped cylinders.
//!
//! Each primitive is binned to the screen rectangle covering its bounding
//! sphere; pixels inside the rectangle are ray-cast against the primitive
//! and depth-tested. Rows are independent and rendered in parallel.

use nalgebra::Vector3;
use rayon::prelude::*;

use super::scene::{Primitive, SkeletonScene};
use crate::buffer::{DepthMap, ImageBuffer};
use crate::camera::CameraModel;

const MIN_DEPTH: f64 = 1e-9;

pub struct RenderOutput {
    pub rgb: ImageBuffer,
    pub depth: DepthMap,
    /// Index of the visible primitive per pixel.
    pub ids: Vec<Option<u32>>,
}

impl RenderOutput {
    pub fn id_at(&self, x: u32, y: u32) -> Option<u32> {
        self.ids[y as usize * self.rgb.width() as usize + x as usize]
    }
}

/// Nearest positive ray parameter of a sphere hit. The ray is `o + t d`.
pub(crate) fn intersect_sphere(o: &Vector3<f64>, d: &Vector3<f64>, center: &Vector3<f64>, radius: f64) -> Option<f64> {
    let oc = o - center;
    let a = d.dot(d);
    let b = oc.dot(d);
    let c = oc.dot(&oc) - radius * radius;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    // Stable root pair.
    let q = -(b + b.signum() * s);
    let (mut t0, mut t1) = if q != 0.0 { (q / a, c / q) } else { (0.0, 0.0) };
    if t0 > t1 {
        std::mem::swap(&mut t0, &mut t1);
    }
    if t0 > MIN_DEPTH {
        Some(t0)
    } else if t1 > MIN_DEPTH {
        Some(t1)
    } else {
        None
    }
}

/// Nearest positive ray parameter of a capped-cylinder hit.
pub(crate) fn intersect_cylinder(
    o: &Vector3<f64>,
    d: &Vector3<f64>,
    start: &Vector3<f64>,
    end: &Vector3<f64>,
    radius: f64,
) -> Option<f64> {
    let axis = end - start;
    let len = axis.norm();
    if len <= 0.0 {
        return None;
    }
    let w = axis / len;
    let oc = o - start;
    let oc_w = oc.dot(&w);
    let d_w = d.dot(&w);
    let oc_p = oc - w * oc_w;
    let d_p = d - w * d_w;
    let r2 = radius * radius;

    let mut best: Option<f64> = None;
    let mut take = |t: f64| {
        if t > MIN_DEPTH && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };

    let a = d_p.dot(&d_p);
    if a > 0.0 {
        let b = oc_p.dot(&d_p);
        let c = oc_p.dot(&oc_p) - r2;
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let s = disc.sqrt();
            for t in [(-b - s) / a, (-b + s) / a] {
                let h = oc_w + t * d_w;
                if (0.0..=len).contains(&h) {
                    take(t);
                }
            }
        }
    }
    if d_w != 0.0 {
        for cap in [0.0, len] {
            let t = (cap - oc_w) / d_w;
            let rp = oc_p + d_p * t;
            if rp.dot(&rp) <= r2 {
                take(t);
            }
        }
    }
    best
}

/// Inclusive pixel rectangle `(x0, x1, y0, y1)` that may be covered by a
/// primitive, or `None` when it cannot be visible.
fn screen_rect(prim: &Primitive, cam: &CameraModel) -> Option<(u32, u32, u32, u32)> {
    let (center, radius) = prim.bounds();
    let c = cam.world_to_camera(&center);
    let (w, h) = (cam.width, cam.height);
    if c.z + radius <= MIN_DEPTH {
        return None;
    }
    if c.z - radius <= MIN_DEPTH {
        return Some((0, w - 1, 0, h - 1));
    }
    let (mut umin, mut umax, mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                let p = c + Vector3::new(sx, sy, sz) * radius;
                let u = cam.fx * p.x / p.z + cam.cx;
                let v = cam.fy * p.y / p.z + cam.cy;
                umin = umin.min(u);
                umax = umax.max(u);
                vmin = vmin.min(v);
                vmax = vmax.max(v);
            }
        }
    }
    let (x0, x1) = ((umin.floor() - 1.0).max(0.0), (umax.ceil() + 1.0).min((w - 1) as f64));
    let (y0, y1) = ((vmin.floor() - 1.0).max(0.0), (vmax.ceil() + 1.0).min((h - 1) as f64));
    if x0 > x1 || y0 > y1 {
        return None;
    }
    Some((x0 as u32, x1 as u32, y0 as u32, y1 as u32))
}

pub fn rasterize(prims: &[Primitive], cam: &CameraModel) -> RenderOutput {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let rects: Vec<_> = prims.iter().map(|p| screen_rect(p, cam)).collect();
    let origin = cam.center();

    let mut rgb = vec![0u8; w * h * 3];
    let mut depth = vec![f32::INFINITY; w * h];
    let mut ids = vec![None; w * h];

    rgb.par_chunks_mut(w * 3)
        .zip(depth.par_chunks_mut(w))
        .zip(ids.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, ((rgb_row, depth_row), id_row))| {
            let mut zbuf = vec![f64::INFINITY; w];
            for (idx, (prim, rect)) in prims.iter().zip(&rects).enumerate() {
                let Some((x0, x1, y0, y1)) = *rect else { continue };
                if (y as u32) < y0 || (y as u32) > y1 {
                    continue;
                }
                for x in x0 as usize..=x1 as usize {
                    let d = cam.ray_direction(x as f64, y as f64);
                    let hit = match prim {
                        Primitive::Sphere { center, radius, .. } => intersect_sphere(&origin, &d, center, *radius),
                        Primitive::Cylinder { start, end, radius, .. } => intersect_cylinder(&origin, &d, start, end, *radius),
                    };
                    let Some(t) = hit else { continue };
                    if t >= zbuf[x] {
                        continue;
                    }
                    zbuf[x] = t;
                    let color = match prim {
                        Primitive::Sphere { center, stripes, .. } => stripes.color_at(&(origin + d * t - center)),
                        Primitive::Cylinder { color, .. } => *color,
                    };
                    rgb_row[x * 3..x * 3 + 3].copy_from_slice(&color);
                    depth_row[x] = t as f32;
                    id_row[x] = Some(idx as u32);
                }
            }
        });

    RenderOutput {
        rgb: ImageBuffer::from_raw(cam.width, cam.height, 3, rgb).expect("sized above"),
        depth: DepthMap::from_raw(cam.width, cam.height, depth).expect("sized above"),
        ids,
    }
}

/// Skeleton pose image and its depth, at the camera's resolution.
pub fn render_skeleton(scene: &SkeletonScene, cam: &CameraModel) -> (ImageBuffer, DepthMap) {
    let out = rasterize(&scene.primitives(), cam);
    (out.rgb, out.depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SE3Pose;
    use crate::render::scene::{StripePattern, StyleConfig};

    fn cam(size: u32, f: f64) -> CameraModel {
        let c = size as f64 / 2.0;
        CameraModel::new(f, f, c, c, size, size, SE3Pose::identity()).unwrap()
    }

    #[test]
    fn empty_scene_is_black() {
        let (img, depth) = render_skeleton(&SkeletonScene::empty(&StyleConfig::default()), &cam(32, 30.0));
        assert!(img.data().iter().all(|v| *v == 0));
        assert!(depth.data().iter().all(|d| d.is_infinite()));
    }

    #[test]
    fn sphere_projected_radius() {
        let c = cam(128, 100.0);
        let (r, z) = (0.1, 2.0);
        let prims = [Primitive::Sphere {
            center: Vector3::new(0.0, 0.0, z),
            radius: r,
            stripes: StripePattern::solid([255, 0, 0]),
        }];
        let out = rasterize(&prims, &c);
        let expected = c.fx * r / (z * z - r * r).sqrt();
        // Horizontal extent through the principal row.
        let row: Vec<u32> = (0..128).filter(|&x| !out.rgb.is_black(x, 64)).collect();
        let half = (row.len() as f64) / 2.0;
        assert!((half - expected).abs() <= 1.0, "half-width {half} vs {expected}");
        let mid = (row[0] + row[row.len() - 1]) as f64 / 2.0;
        assert!((mid - 64.0).abs() <= 0.5);
        assert!((out.depth.get(64, 64) as f64 - (z - r)).abs() < 1e-6);
    }

    #[test]
    fn nearer_sphere_wins() {
        let c = cam(64, 60.0);
        let prims = [
            Primitive::Sphere {
                center: Vector3::new(0.05, 0.0, 2.0),
                radius: 0.3,
                stripes: StripePattern::solid([0, 0, 255]),
            },
            Primitive::Sphere {
                center: Vector3::new(-0.05, 0.0, 1.0),
                radius: 0.1,
                stripes: StripePattern::solid([255, 0, 0]),
            },
        ];
        let out = rasterize(&prims, &c);
        assert_eq!(out.rgb.pixel(32, 32), &[255, 0, 0]);
        assert_eq!(out.id_at(32, 32), Some(1));
    }

    #[test]
    fn cylinder_cap_and_side() {
        let o = Vector3::zeros();
        // Looking straight down the axis hits the near cap.
        let t = intersect_cylinder(&o, &Vector3::z(), &Vector3::new(0.0, 0.0, 2.0), &Vector3::new(0.0, 0.0, 3.0), 0.2).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
        // Perpendicular axis hits the side.
        let t = intersect_cylinder(&o, &Vector3::z(), &Vector3::new(-1.0, 0.0, 2.0), &Vector3::new(1.0, 0.0, 2.0), 0.2).unwrap();
        assert!((t - 1.8).abs() < 1e-12);
        // Past the end cap: miss.
        assert!(intersect_cylinder(&o, &Vector3::z(), &Vector3::new(0.5, 0.0, 2.0), &Vector3::new(1.0, 0.0, 2.0), 0.2).is_none());
    }

    #[test]
    fn behind_camera_not_drawn() {
        let prims = [Primitive::Sphere {
            center: Vector3::new(0.0, 0.0, -2.0),
            radius: 0.5,
            stripes: StripePattern::solid([9, 9, 9]),
        }];
        let out = rasterize(&prims, &cam(16, 10.0));
        assert!(out.ids.iter().all(|i| i.is_none()));
    }

    #[test]
    fn deterministic() {
        let c = cam(48, 40.0);
        let prims = [
            Primitive::Cylinder {
                start: Vector3::new(-0.3, 0.1, 1.5),
                end: Vector3::new(0.4, -0.2, 1.2),
                radius: 0.05,
                color: [10, 200, 30],
            },
            Primitive::Sphere {
                center: Vector3::new(0.0, 0.0, 1.3),
                radius: 0.1,
                stripes: StripePattern {
                    axis: nalgebra::Unit::new_normalize(Vector3::new(0.2, 1.0, 0.1)),
                    reference: nalgebra::Unit::new_normalize(Vector3::new(1.0, -0.2, 0.0)),
                    bands: 8,
                    primary: [200, 0, 0],
                    secondary: [255, 255, 255],
                },
            },
        ];
        let a = rasterize(&prims, &c);
        let b = rasterize(&prims, &c);
        assert_eq!(a.rgb, b.rgb);
        assert_eq!(a.depth, b.depth);
    }
}
