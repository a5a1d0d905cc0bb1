//! Tile-based front-to-back compositing of projected Gaussians and its
//! reverse-mode adjoint.

use glam::{DMat3, DVec3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{CameraPose, FrameImage, Intrinsics};
use crate::splat::gaussian::{
    motion_basis, offset, quat_backward, Gaussian3D, GaussianCloud4D, BASIS_LEN, PARAMS_PER_GAUSSIAN,
};
use crate::splat::project::{project, project_backward, Projected, ScreenGrad};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RasterSettings {
    /// Screen-space variance added to every footprint (pixels²).
    pub blur: f64,
    pub alpha_max: f64,
    pub alpha_min: f64,
    /// Footprints are cut at this many standard deviations.
    pub cutoff_sigma: f64,
    /// Stop compositing once transmittance drops below this.
    pub early_stop: Option<f64>,
    pub tile: usize,
}

impl Default for RasterSettings {
    fn default() -> Self {
        Self {
            blur: 0.3,
            alpha_max: 0.99,
            alpha_min: 1.0 / 255.0,
            cutoff_sigma: 3.0,
            early_stop: Some(1e-4),
            tile: 16,
        }
    }
}

impl RasterSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.blur >= 0.0) {
            return Err(Error::invalid("blur must be non-negative"));
        }
        if !(self.alpha_min >= 0.0 && self.alpha_min < self.alpha_max && self.alpha_max < 1.0) {
            return Err(Error::invalid("alpha bounds must satisfy 0 <= min < max < 1"));
        }
        if !(self.cutoff_sigma > 0.0) || self.tile == 0 {
            return Err(Error::invalid("cutoff and tile size must be positive"));
        }
        Ok(())
    }

    fn power_floor(&self) -> f64 {
        -0.5 * self.cutoff_sigma * self.cutoff_sigma
    }
}

/// Per-view state kept from the forward pass.
#[derive(Debug, Clone)]
pub struct RasterCache {
    gaussians: Vec<Gaussian3D>,
    projected: Vec<Option<Projected>>,
    /// Gaussian indices per tile, front to back.
    tiles: Vec<Vec<u32>>,
    tiles_x: usize,
    final_t: Vec<f64>,
    /// Number of tile-list entries visited by each pixel.
    visited: Vec<u32>,
    alpha: Vec<f64>,
    depth_sum: Vec<f64>,
}

/// Loss gradients w.r.t. a rendered frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGrad {
    pub rgb: Vec<f64>,
    pub alpha: Vec<f64>,
    pub depth: Vec<f64>,
}

impl FrameGrad {
    pub fn zeros(pixels: usize) -> Self {
        Self {
            rgb: vec![0.0; pixels * 3],
            alpha: vec![0.0; pixels],
            depth: vec![0.0; pixels],
        }
    }
}

struct Sample {
    alpha: f64,
    gauss: f64,
    dx: f64,
    dy: f64,
}

#[inline]
fn evaluate(p: &Projected, opacity: f64, px: f64, py: f64, s: &RasterSettings) -> Option<Sample> {
    let dx = px - p.mean[0];
    let dy = py - p.mean[1];
    let [a, b, c] = p.conic;
    let power = -0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy);
    if power < s.power_floor() {
        return None;
    }
    let gauss = power.exp();
    let alpha = (opacity * gauss).min(s.alpha_max);
    if alpha < s.alpha_min {
        return None;
    }
    Some(Sample { alpha, gauss, dx, dy })
}

fn tile_bounds(t: usize, tiles_x: usize, tile: usize, intr: &Intrinsics) -> (usize, usize, usize, usize) {
    let (tx, ty) = (t % tiles_x, t / tiles_x);
    let x0 = tx * tile;
    let y0 = ty * tile;
    (x0, y0, (x0 + tile).min(intr.width), (y0 + tile).min(intr.height))
}

/// Render the cloud at time `tau` from `pose`.
pub fn render(
    cloud: &GaussianCloud4D,
    pose: &CameraPose,
    tau: f64,
    intr: &Intrinsics,
    settings: &RasterSettings,
) -> FrameImage {
    render_with_cache(cloud, pose, tau, intr, settings).0
}

pub fn render_with_cache(
    cloud: &GaussianCloud4D,
    pose: &CameraPose,
    tau: f64,
    intr: &Intrinsics,
    settings: &RasterSettings,
) -> (FrameImage, RasterCache) {
    let (w, h) = (intr.width, intr.height);
    let gaussians: Vec<Gaussian3D> = cloud.gaussians.par_iter().map(|g| g.deform(tau)).collect();
    let projected: Vec<Option<Projected>> = gaussians
        .par_iter()
        .map(|g| project(g, pose, intr, settings.blur))
        .collect();

    let mut order: Vec<usize> = (0..gaussians.len()).filter(|&i| projected[i].is_some()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (projected[i].unwrap().depth, projected[j].unwrap().depth);
        a.total_cmp(&b).then(i.cmp(&j))
    });

    let tile = settings.tile;
    let tiles_x = w.div_ceil(tile);
    let tiles_y = h.div_ceil(tile);
    let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
    for &i in &order {
        let p = projected[i].unwrap();
        let r = settings.cutoff_sigma * p.max_std;
        let lo = |m: f64| ((m - r - 0.5).floor().max(0.0)) as usize;
        let hi = |m: f64, n: usize| (((m + r - 0.5).ceil()).max(-1.0) as i64).min(n as i64 - 1);
        let (x0, y0) = (lo(p.mean[0]), lo(p.mean[1]));
        let (x1, y1) = (hi(p.mean[0], w), hi(p.mean[1], h));
        if x1 < x0 as i64 || y1 < y0 as i64 {
            continue;
        }
        for ty in y0 / tile..=(y1 as usize) / tile {
            for tx in x0 / tile..=(x1 as usize) / tile {
                tiles[ty * tiles_x + tx].push(i as u32);
            }
        }
    }

    struct PixelOut {
        idx: usize,
        color: [f64; 3],
        t: f64,
        z: f64,
        visited: u32,
    }
    let bg = cloud.background;
    let per_tile: Vec<Vec<PixelOut>> = (0..tiles.len())
        .into_par_iter()
        .map(|t| {
            let (x0, y0, x1, y1) = tile_bounds(t, tiles_x, tile, intr);
            let list = &tiles[t];
            let mut out = Vec::with_capacity((x1 - x0) * (y1 - y0));
            for y in y0..y1 {
                for x in x0..x1 {
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    let mut tr = 1.0;
                    let mut color = [0.0; 3];
                    let mut z = 0.0;
                    let mut visited = 0u32;
                    for (k, &gi) in list.iter().enumerate() {
                        let g = &gaussians[gi as usize];
                        let p = projected[gi as usize].as_ref().unwrap();
                        let Some(s) = evaluate(p, g.opacity, px, py, settings) else {
                            continue;
                        };
                        let wgt = tr * s.alpha;
                        for ch in 0..3 {
                            color[ch] += wgt * g.color[ch];
                        }
                        z += wgt * p.depth;
                        tr *= 1.0 - s.alpha;
                        visited = k as u32 + 1;
                        if settings.early_stop.is_some_and(|e| tr < e) {
                            break;
                        }
                    }
                    out.push(PixelOut { idx: y * w + x, color, t: tr, z, visited });
                }
            }
            out
        })
        .collect();

    let mut frame = FrameImage::background(w, h, bg);
    let mut final_t = vec![1.0; w * h];
    let mut visited = vec![0u32; w * h];
    let mut depth_sum = vec![0.0; w * h];
    for px in per_tile.into_iter().flatten() {
        let q = px.idx;
        for ch in 0..3 {
            frame.rgb[3 * q + ch] = px.color[ch] + px.t * bg[ch];
        }
        let a = 1.0 - px.t;
        frame.alpha[q] = a;
        frame.depth[q] = if a > 0.0 { px.z / a } else { 0.0 };
        final_t[q] = px.t;
        visited[q] = px.visited;
        depth_sum[q] = px.z;
    }
    let cache = RasterCache {
        gaussians,
        projected,
        tiles,
        tiles_x,
        final_t,
        visited,
        alpha: frame.alpha.clone(),
        depth_sum,
    };
    (frame, cache)
}

/// Per-Gaussian screen-space gradient slots.
const SLOTS: usize = 10;
const S_MEAN: usize = 0;
const S_CONIC: usize = 2;
const S_OPACITY: usize = 5;
const S_COLOR: usize = 6;
const S_DEPTH: usize = 9;

/// Accumulate the parameter gradient of a frame loss into `out`, laid out
/// like [`GaussianCloud4D::to_params`].
#[allow(clippy::too_many_arguments)]
pub fn render_backward(
    cloud: &GaussianCloud4D,
    pose: &CameraPose,
    tau: f64,
    intr: &Intrinsics,
    settings: &RasterSettings,
    cache: &RasterCache,
    grad: &FrameGrad,
    out: &mut [f64],
) -> Result<()> {
    let n = cloud.len();
    let pixels = intr.width * intr.height;
    if out.len() != n * PARAMS_PER_GAUSSIAN || cache.gaussians.len() != n {
        return Err(Error::invalid("gradient buffer does not match the cloud"));
    }
    if grad.rgb.len() != 3 * pixels || grad.alpha.len() != pixels || grad.depth.len() != pixels {
        return Err(Error::invalid("frame gradient does not match the image size"));
    }
    let w = intr.width;
    let bg = cloud.background;
    let tile = settings.tile;

    let per_tile: Vec<Vec<[f64; SLOTS]>> = (0..cache.tiles.len())
        .into_par_iter()
        .map(|t| {
            let (x0, y0, x1, y1) = tile_bounds(t, cache.tiles_x, tile, intr);
            let list = &cache.tiles[t];
            let mut acc = vec![[0.0; SLOTS]; list.len()];
            for y in y0..y1 {
                for x in x0..x1 {
                    let q = y * w + x;
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    let t_final = cache.final_t[q];
                    let a_tot = cache.alpha[q];
                    let g_rgb = [grad.rgb[3 * q], grad.rgb[3 * q + 1], grad.rgb[3 * q + 2]];
                    let (g_z, g_a) = if a_tot > 0.0 {
                        let z = cache.depth_sum[q];
                        (grad.depth[q] / a_tot, grad.alpha[q] - grad.depth[q] * z / (a_tot * a_tot))
                    } else {
                        (0.0, grad.alpha[q])
                    };
                    let mut tr = t_final;
                    let mut s_col = bg;
                    let mut s_z = 0.0;
                    for k in (0..cache.visited[q] as usize).rev() {
                        let gi = list[k] as usize;
                        let g = &cache.gaussians[gi];
                        let p = cache.projected[gi].as_ref().unwrap();
                        let Some(s) = evaluate(p, g.opacity, px, py, settings) else {
                            continue;
                        };
                        let one_minus = 1.0 - s.alpha;
                        tr /= one_minus;
                        let wgt = tr * s.alpha;
                        let slot = &mut acc[k];
                        let mut g_alpha = 0.0;
                        for ch in 0..3 {
                            slot[S_COLOR + ch] += wgt * g_rgb[ch];
                            g_alpha += g_rgb[ch] * (g.color[ch] - s_col[ch]);
                        }
                        g_alpha *= tr;
                        g_alpha += tr * g_z * (p.depth - s_z);
                        g_alpha += g_a * t_final / one_minus;
                        slot[S_DEPTH] += wgt * g_z;
                        for ch in 0..3 {
                            s_col[ch] = s.alpha * g.color[ch] + one_minus * s_col[ch];
                        }
                        s_z = s.alpha * p.depth + one_minus * s_z;

                        if g.opacity * s.gauss >= settings.alpha_max {
                            continue;
                        }
                        slot[S_OPACITY] += g_alpha * s.gauss;
                        let g_power = g_alpha * s.alpha;
                        let [a, b, c] = p.conic;
                        slot[S_MEAN] += g_power * (a * s.dx + b * s.dy);
                        slot[S_MEAN + 1] += g_power * (b * s.dx + c * s.dy);
                        slot[S_CONIC] += g_power * (-0.5 * s.dx * s.dx);
                        slot[S_CONIC + 1] += g_power * (-s.dx * s.dy);
                        slot[S_CONIC + 2] += g_power * (-0.5 * s.dy * s.dy);
                    }
                }
            }
            acc
        })
        .collect();

    let mut screen = vec![[0.0; SLOTS]; n];
    for (t, acc) in per_tile.iter().enumerate() {
        for (k, slot) in acc.iter().enumerate() {
            let dst = &mut screen[cache.tiles[t][k] as usize];
            for (d, v) in dst.iter_mut().zip(slot) {
                *d += v;
            }
        }
    }

    let phi = motion_basis(tau);
    out.par_chunks_mut(PARAMS_PER_GAUSSIAN)
        .enumerate()
        .for_each(|(i, dst)| {
            let Some(p) = cache.projected[i].as_ref() else {
                return;
            };
            let sg = &screen[i];
            let g3 = &cache.gaussians[i];
            let g4 = &cloud.gaussians[i];
            let screen_grad = ScreenGrad {
                mean: [sg[S_MEAN], sg[S_MEAN + 1]],
                conic: [sg[S_CONIC], sg[S_CONIC + 1], sg[S_CONIC + 2]],
                depth: sg[S_DEPTH],
            };
            let (g_mean, g_cov) = project_backward(g3, pose, intr, p, &screen_grad);
            for ax in 0..3 {
                dst[offset::POSITION + ax] += g_mean[ax];
                for (k, f) in phi.iter().enumerate().take(BASIS_LEN) {
                    dst[offset::MOTION + 3 * k + ax] += f * g_mean[ax];
                }
            }
            let r = g4.rotation_matrix();
            let scale = DVec3::from(g4.log_scale.map(f64::exp));
            let m = r * DMat3::from_diagonal(scale);
            let g_m = (g_cov + g_cov.transpose()) * m;
            let g_r = g_m * DMat3::from_diagonal(scale);
            for c in 0..3 {
                dst[offset::LOG_SCALE + c] += g_m.col(c).dot(r.col(c)) * scale[c];
            }
            let gq = quat_backward(g4.rotation, &g_r);
            for k in 0..4 {
                dst[offset::ROTATION + k] += gq[k];
            }
            let o = g3.opacity;
            dst[offset::OPACITY] += sg[S_OPACITY] * o * (1.0 - o);
            for ch in 0..3 {
                dst[offset::COLOR + ch] += sg[S_COLOR + ch];
            }
        });
    Ok(())
}
