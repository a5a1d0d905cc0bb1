//! Analytic ray-cast renderer for procedural assets.

use glam::DVec3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::asset::{DynamicAsset, PosedPrimitive, Shape};
use crate::scene::camera::{CameraPose, Intrinsics};
use crate::scene::frame::{FrameImage, OrbitalVideo, DEPTH_SENTINEL};
use crate::scene::trajectory::OrbitTrajectory;

const AMBIENT: f64 = 0.3;
const DIFFUSE: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSettings {
    pub width: usize,
    pub height: usize,
    pub fov_y_deg: f64,
    pub background: [f64; 3],
    /// Samples per pixel along each axis.
    pub supersample: usize,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            fov_y_deg: 50.0,
            background: [0.5; 3],
            supersample: 2,
        }
    }
}

impl RenderSettings {
    pub fn intrinsics(&self) -> Result<Intrinsics> {
        Intrinsics::from_fov(self.width, self.height, self.fov_y_deg)
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics()?;
        if self.supersample == 0 {
            return Err(Error::invalid("supersample must be at least 1"));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid("background color must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    t: f64,
    normal: DVec3,
    color: [f64; 3],
}

/// Nearest entering intersection of the world ray `origin + t * dir` with a
/// posed primitive. `t` is in world units along `dir`.
fn intersect(prim: &PosedPrimitive, origin: DVec3, dir: DVec3) -> Option<Hit> {
    let inv_rot = prim.rotation.transpose();
    let o = inv_rot * (origin - prim.translation) / prim.scale;
    let d = inv_rot * dir / prim.scale;
    let (t, n_obj) = match prim.shape {
        Shape::Sphere => {
            let t = sphere_hit(o, d, DVec3::ZERO, 1.0)?;
            (t, o + t * d)
        }
        Shape::Box => box_hit(o, d)?,
        Shape::Capsule => capsule_hit(o, d, 0.5, 0.5)?,
    };
    let normal = (prim.rotation * (n_obj / prim.scale)).normalize();
    Some(Hit {
        t,
        normal,
        color: prim.color,
    })
}

fn sphere_hit(o: DVec3, d: DVec3, center: DVec3, radius: f64) -> Option<f64> {
    let oc = o - center;
    let a = d.dot(d);
    let b = oc.dot(d);
    let c = oc.dot(oc) - radius * radius;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let t = (-b - disc.sqrt()) / a;
    (t > 1e-9).then_some(t)
}

fn box_hit(o: DVec3, d: DVec3) -> Option<(f64, DVec3)> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut axis = 0;
    for k in 0..3 {
        if d[k].abs() < 1e-300 {
            if o[k].abs() > 1.0 {
                return None;
            }
            continue;
        }
        let t0 = (-1.0 - o[k]) / d[k];
        let t1 = (1.0 - o[k]) / d[k];
        let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
        if lo > t_near {
            t_near = lo;
            axis = k;
        }
        t_far = t_far.min(hi);
    }
    if t_near > t_far || t_near <= 1e-9 {
        return None;
    }
    let mut n = DVec3::ZERO;
    n[axis] = -d[axis].signum();
    Some((t_near, n))
}

/// Capsule as the union of a finite cylinder and two end spheres; the nearest
/// entering hit of a union of convex pieces is the minimum over the pieces.
fn capsule_hit(o: DVec3, d: DVec3, half_len: f64, radius: f64) -> Option<(f64, DVec3)> {
    let mut best: Option<(f64, DVec3)> = None;
    let mut consider = |t: f64, n: DVec3| {
        if best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, n));
        }
    };

    // Cylinder about the y axis.
    let a = d.x * d.x + d.z * d.z;
    if a > 1e-300 {
        let b = o.x * d.x + o.z * d.z;
        let c = o.x * o.x + o.z * o.z - radius * radius;
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let t = (-b - disc.sqrt()) / a;
            let y = o.y + t * d.y;
            if t > 1e-9 && y.abs() <= half_len {
                let p = o + t * d;
                consider(t, DVec3::new(p.x, 0.0, p.z));
            }
        }
    }
    for cap in [half_len, -half_len] {
        let center = DVec3::new(0.0, cap, 0.0);
        if let Some(t) = sphere_hit(o, d, center, radius) {
            consider(t, o + t * d - center);
        }
    }
    best
}

/// Direction towards the fixed world-space light.
pub const LIGHT_DIR: [f64; 3] = [0.267_261_241_912_424_4, 0.801_783_725_737_273_1, 0.534_522_483_824_848_8];

/// View-independent wrapped Lambert shading under the fixed light.
fn shade(hit: &Hit) -> [f64; 3] {
    let wrap = 0.5 * (1.0 + hit.normal.dot(DVec3::from(LIGHT_DIR)));
    hit.color.map(|c| c * (AMBIENT + DIFFUSE * wrap))
}

fn trace(prims: &[PosedPrimitive], origin: DVec3, dir: DVec3) -> Option<Hit> {
    prims
        .iter()
        .filter_map(|p| intersect(p, origin, dir))
        .fold(None, |best: Option<Hit>, h| match best {
            Some(b) if b.t <= h.t => Some(b),
            _ => Some(h),
        })
}

/// Render `asset` at normalized time `tau` from `pose`.
///
/// Each pixel averages `supersample²` stratified rays: alpha is the covered
/// fraction, rgb composites shaded hits over the background and depth is the
/// mean camera-space z of the covered rays.
pub fn render_frame(
    asset: &DynamicAsset,
    pose: &CameraPose,
    tau: f64,
    settings: &RenderSettings,
) -> Result<FrameImage> {
    settings.validate()?;
    let intr = settings.intrinsics()?;
    let prims = asset.posed(tau);
    let eye = pose.eye();
    let cam_to_world = pose.rotation().transpose();
    let (w, h, ss) = (settings.width, settings.height, settings.supersample);
    let n = (ss * ss) as f64;
    let bg = settings.background;

    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut rgb = Vec::with_capacity(w * 3);
            let mut alpha = Vec::with_capacity(w);
            let mut depth = Vec::with_capacity(w);
            for x in 0..w {
                let mut covered = 0usize;
                let mut color = [0.0; 3];
                let mut z_sum = 0.0;
                for sy in 0..ss {
                    for sx in 0..ss {
                        let u = x as f64 + (sx as f64 + 0.5) / ss as f64;
                        let v = y as f64 + (sy as f64 + 0.5) / ss as f64;
                        let ray_cam = intr.ray(u, v);
                        let dir = cam_to_world * ray_cam;
                        if let Some(hit) = trace(&prims, eye, dir) {
                            covered += 1;
                            let c = shade(&hit);
                            for k in 0..3 {
                                color[k] += c[k];
                            }
                            z_sum += hit.t * ray_cam.z;
                        }
                    }
                }
                let uncovered = (ss * ss - covered) as f64;
                for k in 0..3 {
                    rgb.push((color[k] + uncovered * bg[k]) / n);
                }
                alpha.push(covered as f64 / n);
                depth.push(if covered > 0 {
                    z_sum / covered as f64
                } else {
                    DEPTH_SENTINEL
                });
            }
            (rgb, alpha, depth)
        })
        .collect();

    let mut frame = FrameImage {
        width: w,
        height: h,
        rgb: Vec::with_capacity(w * h * 3),
        alpha: Vec::with_capacity(w * h),
        depth: Vec::with_capacity(w * h),
    };
    for (rgb, alpha, depth) in rows {
        frame.rgb.extend(rgb);
        frame.alpha.extend(alpha);
        frame.depth.extend(depth);
    }
    Ok(frame)
}

/// Render every pose of `traj`; with `animate == false` time is frozen at the
/// first timestamp, producing the static counterpart.
pub fn render_orbital(
    asset: &DynamicAsset,
    traj: &OrbitTrajectory,
    animate: bool,
    settings: &RenderSettings,
) -> Result<OrbitalVideo> {
    if traj.is_empty() || traj.poses.len() != traj.timestamps.len() {
        return Err(Error::invalid("trajectory poses and timestamps disagree"));
    }
    let tau_first = traj.timestamps[0];
    let frames = traj
        .poses
        .par_iter()
        .zip(traj.timestamps.par_iter())
        .map(|(pose, &tau)| {
            render_frame(asset, pose, if animate { tau } else { tau_first }, settings)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OrbitalVideo {
        frames,
        trajectory: traj.clone(),
        is_static: !animate,
    })
}
