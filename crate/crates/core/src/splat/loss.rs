//! Photometric + structural + depth-smoothness loss on rendered frames.

use serde::{Deserialize, Serialize};

use crate::curator::ssim::{ssim_interleaved_with_grad, SsimParams};
use crate::error::{Error, Result};
use crate::scene::FrameImage;
use crate::splat::raster::FrameGrad;

/// Charbonnier width for the depth term.
pub const CHARBONNIER_EPS: f64 = 1e-3;
/// Only pixels rendered with more coverage than this take part in the depth term.
pub const DEPTH_ALPHA_MIN: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplatLossWeights {
    pub lambda_l1: f64,
    pub lambda_perc: f64,
    pub lambda_depth: f64,
    pub ssim: SsimParams,
}

impl Default for SplatLossWeights {
    fn default() -> Self {
        Self {
            lambda_l1: 1.0,
            lambda_perc: 10.0,
            lambda_depth: 1.0,
            ssim: SsimParams::default(),
        }
    }
}

impl SplatLossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_l1", self.lambda_l1),
            ("lambda_perc", self.lambda_perc),
            ("lambda_depth", self.lambda_depth),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        self.ssim.validate()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SplatLossParts {
    pub l1: f64,
    pub perceptual: f64,
    pub depth: f64,
    pub total: f64,
}

/// `√(x² + ε²) − ε`, zero at the origin.
pub fn charbonnier(x: f64) -> f64 {
    (x * x + CHARBONNIER_EPS * CHARBONNIER_EPS).sqrt() - CHARBONNIER_EPS
}

fn charbonnier_grad(x: f64) -> f64 {
    x / (x * x + CHARBONNIER_EPS * CHARBONNIER_EPS).sqrt()
}

/// Start indices and stride of every valid second-difference triplet.
fn depth_triplets(render: &FrameImage) -> Vec<(usize, usize)> {
    let (w, h) = (render.width, render.height);
    let ok = |q: usize| render.alpha[q] > DEPTH_ALPHA_MIN;
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let q = y * w + x;
            if x + 2 < w && ok(q) && ok(q + 1) && ok(q + 2) {
                out.push((q, 1));
            }
            if y + 2 < h && ok(q) && ok(q + w) && ok(q + 2 * w) {
                out.push((q, w));
            }
        }
    }
    out
}

pub fn splat_loss(render: &FrameImage, target: &FrameImage, w: &SplatLossWeights) -> Result<SplatLossParts> {
    Ok(evaluate(render, target, w, false)?.0)
}

/// Loss value and its gradient w.r.t. the rendered rgb and depth. The
/// validity mask of the depth term is treated as constant.
pub fn splat_loss_with_grad(
    render: &FrameImage,
    target: &FrameImage,
    w: &SplatLossWeights,
) -> Result<(SplatLossParts, FrameGrad)> {
    let (parts, grad) = evaluate(render, target, w, true)?;
    Ok((parts, grad.unwrap()))
}

fn evaluate(
    render: &FrameImage,
    target: &FrameImage,
    w: &SplatLossWeights,
    want_grad: bool,
) -> Result<(SplatLossParts, Option<FrameGrad>)> {
    render.same_dims(target)?;
    w.validate()?;
    let px = render.pixel_count();
    let mut grad = want_grad.then(|| FrameGrad::zeros(px));

    let n = render.rgb.len() as f64;
    let l1 = render.rgb.iter().zip(&target.rgb).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    if let Some(g) = grad.as_mut() {
        if w.lambda_l1 != 0.0 {
            for ((d, a), b) in g.rgb.iter_mut().zip(&render.rgb).zip(&target.rgb) {
                if a != b {
                    *d += w.lambda_l1 * (a - b).signum() / n;
                }
            }
        }
    }

    let mut perceptual = 0.0;
    if w.lambda_perc != 0.0 {
        let (s, sg) = ssim_interleaved_with_grad(&render.rgb, &target.rgb, render.width, render.height, 3, &w.ssim)?;
        perceptual = 1.0 - s;
        if let Some(g) = grad.as_mut() {
            for (d, v) in g.rgb.iter_mut().zip(&sg) {
                *d -= w.lambda_perc * v;
            }
        }
    }

    let triplets = depth_triplets(render);
    let mut depth = 0.0;
    if !triplets.is_empty() {
        let inv = 1.0 / triplets.len() as f64;
        let d = &render.depth;
        for &(q, s) in &triplets {
            let second = d[q] - 2.0 * d[q + s] + d[q + 2 * s];
            depth += charbonnier(second);
            if let Some(g) = grad.as_mut() {
                let c = w.lambda_depth * inv * charbonnier_grad(second);
                g.depth[q] += c;
                g.depth[q + s] -= 2.0 * c;
                g.depth[q + 2 * s] += c;
            }
        }
        depth *= inv;
    }

    let total = w.lambda_l1 * l1 + w.lambda_perc * perceptual + w.lambda_depth * depth;
    Ok((SplatLossParts { l1, perceptual, depth, total }, grad))
}
