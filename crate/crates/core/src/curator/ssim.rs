//! Structural similarity with a uniform (box) window.
//!
//! The score is the mean of the local SSIM map over every fully contained
//! `window × window` patch, computed per channel and averaged over channels.
//! Window statistics use population (1/n) moments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::FrameImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsimParams {
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "ssim window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0 && self.dynamic_range > 0.0) {
            return Err(Error::invalid("ssim constants must be positive"));
        }
        Ok(())
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

/// Sums over every fully contained `k × k` window of an `h × w` plane.
fn window_sums(plane: &[f64], w: usize, h: usize, k: usize) -> Vec<f64> {
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = src[x..x + k].iter().sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|j| rows[(y + j) * ow + x]).sum();
        }
    }
    out
}

/// Adjoint of [`window_sums`]: spreads each window value over its pixels.
fn window_scatter(coeffs: &[f64], w: usize, h: usize, k: usize) -> Vec<f64> {
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut cols = vec![0.0; h * ow];
    for y in 0..h {
        let lo = y.saturating_sub(k - 1);
        let hi = y.min(oh - 1);
        for x in 0..ow {
            cols[y * ow + x] = (lo..=hi).map(|wy| coeffs[wy * ow + x]).sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(k - 1);
            let hi = x.min(ow - 1);
            out[y * w + x] = (lo..=hi).map(|wx| cols[y * ow + wx]).sum();
        }
    }
    out
}

fn channel_plane(img: &[f64], channels: usize, c: usize) -> Vec<f64> {
    img.iter().skip(c).step_by(channels).copied().collect()
}

fn check_inputs(a: &[f64], b: &[f64], w: usize, h: usize, channels: usize, p: &SsimParams) -> Result<()> {
    p.validate()?;
    if a.len() != w * h * channels || b.len() != a.len() {
        return Err(Error::invalid(format!(
            "ssim inputs of length {} and {} do not match {w}x{h}x{channels}",
            a.len(),
            b.len()
        )));
    }
    if w < p.window || h < p.window {
        return Err(Error::invalid(format!(
            "image {w}x{h} smaller than ssim window {}",
            p.window
        )));
    }
    Ok(())
}

struct ChannelTerms {
    mean: f64,
    grad: Option<Vec<f64>>,
}

fn channel_ssim(x: &[f64], y: &[f64], w: usize, h: usize, p: &SsimParams, want_grad: bool) -> ChannelTerms {
    let k = p.window;
    let n = (k * k) as f64;
    let (c1, c2) = (p.c1(), p.c2());
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let sx = window_sums(x, w, h, k);
    let sy = window_sums(y, w, h, k);
    let sxx = window_sums(&xx, w, h, k);
    let syy = window_sums(&yy, w, h, k);
    let sxy = window_sums(&xy, w, h, k);

    let windows = sx.len();
    let mut total = 0.0;
    let (mut ga, mut gb, mut gc) = if want_grad {
        (vec![0.0; windows], vec![0.0; windows], vec![0.0; windows])
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    for i in 0..windows {
        let mx = sx[i] / n;
        let my = sy[i] / n;
        let vx = sxx[i] / n - mx * mx;
        let vy = syy[i] / n - my * my;
        let cxy = sxy[i] / n - mx * my;
        let a1 = 2.0 * mx * my + c1;
        let a2 = 2.0 * cxy + c2;
        let b1 = mx * mx + my * my + c1;
        let b2 = vx + vy + c2;
        let s = (a1 * a2) / (b1 * b2);
        total += s;
        if want_grad {
            let ds_dmx = 2.0 * my * a2 / (b1 * b2) - s * 2.0 * mx / b1;
            let ds_dvx = -s / b2;
            let ds_dcxy = 2.0 * a1 / (b1 * b2);
            let ds_dmx_total = ds_dmx - 2.0 * mx * ds_dvx - my * ds_dcxy;
            ga[i] = ds_dmx_total / n;
            gb[i] = 2.0 * ds_dvx / n;
            gc[i] = ds_dcxy / n;
        }
    }
    let grad = want_grad.then(|| {
        let inv = 1.0 / windows as f64;
        let sa = window_scatter(&ga, w, h, k);
        let sb = window_scatter(&gb, w, h, k);
        let sc = window_scatter(&gc, w, h, k);
        (0..w * h)
            .map(|q| inv * (sa[q] + sb[q] * x[q] + sc[q] * y[q]))
            .collect()
    });
    ChannelTerms {
        mean: total / windows as f64,
        grad,
    }
}

/// Mean SSIM of two interleaved `h × w × channels` images.
pub fn ssim_interleaved(
    a: &[f64],
    b: &[f64],
    width: usize,
    height: usize,
    channels: usize,
    params: &SsimParams,
) -> Result<f64> {
    check_inputs(a, b, width, height, channels, params)?;
    let sum: f64 = (0..channels)
        .map(|c| {
            let x = channel_plane(a, channels, c);
            let y = channel_plane(b, channels, c);
            channel_ssim(&x, &y, width, height, params, false).mean
        })
        .sum();
    Ok(sum / channels as f64)
}

/// Mean SSIM and its gradient with respect to every value of `a`.
pub fn ssim_interleaved_with_grad(
    a: &[f64],
    b: &[f64],
    width: usize,
    height: usize,
    channels: usize,
    params: &SsimParams,
) -> Result<(f64, Vec<f64>)> {
    check_inputs(a, b, width, height, channels, params)?;
    let mut grad = vec![0.0; a.len()];
    let mut sum = 0.0;
    for c in 0..channels {
        let x = channel_plane(a, channels, c);
        let y = channel_plane(b, channels, c);
        let terms = channel_ssim(&x, &y, width, height, params, true);
        sum += terms.mean;
        for (q, g) in terms.grad.unwrap().into_iter().enumerate() {
            grad[q * channels + c] = g / channels as f64;
        }
    }
    Ok((sum / channels as f64, grad))
}

/// SSIM between the rgb channels of two frames.
pub fn ssim(a: &FrameImage, b: &FrameImage, params: &SsimParams) -> Result<f64> {
    a.same_dims(b)?;
    ssim_interleaved(&a.rgb, &b.rgb, a.width, a.height, 3, params)
}
