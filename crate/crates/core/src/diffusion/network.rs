//! Small convolutional noise predictor with hand-written backpropagation.
//!
//! Each block applies a 3×3 spatial convolution within every frame plus a
//! circular ±1-frame temporal convolution, adds a per-channel bias projected
//! from the conditioning embedding, and (except the last block) a SiLU. The
//! embedding is the sum of a sinusoidal step encoding, a label table row and
//! the output of a two-layer motion-magnitude MLP.
//!
//! The convolutional trunk sees a preconditioned input: with `a = √ᾱ_t`,
//! `b = √(1 − ᾱ_t)`, `σ = b / a` and the latent centred on `data_mean`,
//! `x = z_t / a − μ` is scaled by `c_in = 1 / √(σ² + σ_d²)`. The trunk output
//! `F` forms the clean estimate `D = c_skip · x + c_out · F` and the returned
//! noise is `(x − D) / σ`.
//!
//! Input features per latent position are `[c_in · x | condition − μ | mask]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::latent::{LatentShape, LatentVideo};
use crate::diffusion::schedule::{NoiseSchedule, ScheduleConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiserConfig {
    pub channels: usize,
    pub hidden: usize,
    pub emb_dim: usize,
    pub blocks: usize,
    pub num_labels: usize,
    /// Marks the static (3D-only) model, which never sees a motion input.
    pub static_mode: bool,
    pub data_mean: f64,
    pub data_std: f64,
    pub schedule: ScheduleConfig,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            channels: 3,
            hidden: 8,
            emb_dim: 8,
            blocks: 4,
            num_labels: 8,
            static_mode: false,
            data_mean: 0.5,
            data_std: 0.25,
            schedule: ScheduleConfig::default(),
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.hidden == 0 {
            return Err(Error::invalid("denoiser channels and width must be positive"));
        }
        if self.emb_dim < 2 || !self.emb_dim.is_multiple_of(2) {
            return Err(Error::invalid("embedding width must be even and >= 2"));
        }
        if self.blocks < 2 {
            return Err(Error::invalid("denoiser needs at least 2 blocks"));
        }
        if !(self.data_std > 0.0 && self.data_std.is_finite() && self.data_mean.is_finite()) {
            return Err(Error::invalid("data statistics must be finite with positive std"));
        }
        NoiseSchedule::new(self.schedule).map(|_| ())
    }

    pub fn input_channels(&self) -> usize {
        2 * self.channels + 1
    }

    /// Stable hash of the architecture, stored in checkpoints.
    pub fn architecture_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    fn block_dims(&self, b: usize) -> (usize, usize) {
        let cin = if b == 0 { self.input_channels() } else { self.hidden };
        let cout = if b + 1 == self.blocks { self.channels } else { self.hidden };
        (cin, cout)
    }
}

/// What the denoiser is conditioned on.
#[derive(Debug, Clone, PartialEq)]
pub enum ConditionSignal {
    None,
    Label(u32),
    /// Latent of a single reference frame, broadcast over time.
    Image(LatentVideo),
    /// Latent of the static orbital video.
    StaticVideo(LatentVideo),
}

#[derive(Debug, Clone, Copy)]
struct BlockLayout {
    cin: usize,
    cout: usize,
    spatial: usize,
    temporal: usize,
    bias: usize,
    emb_proj: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    blocks: Vec<BlockLayout>,
    labels: usize,
    motion_w1: usize,
    motion_b1: usize,
    motion_w2: usize,
    motion_b2: usize,
    total: usize,
}

impl Layout {
    fn new(cfg: &DenoiserConfig) -> Self {
        let d = cfg.emb_dim;
        let mut off = 0;
        let mut take = |n: usize| {
            let o = off;
            off += n;
            o
        };
        let blocks = (0..cfg.blocks)
            .map(|b| {
                let (cin, cout) = cfg.block_dims(b);
                BlockLayout {
                    cin,
                    cout,
                    spatial: take(9 * cin * cout),
                    temporal: take(2 * cin * cout),
                    bias: take(cout),
                    emb_proj: take(cout * d),
                }
            })
            .collect();
        let labels = take((cfg.num_labels + 1) * d);
        let motion_w1 = take(d);
        let motion_b1 = take(d);
        let motion_w2 = take(d * d);
        let motion_b2 = take(d);
        Self {
            blocks,
            labels,
            motion_w1,
            motion_b1,
            motion_w2,
            motion_b2,
            total: off,
        }
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    shape: LatentShape,
    /// `dε̂/dF`.
    out_gain: f64,
    label_row: usize,
    motion: Option<(f64, Vec<f64>)>,
    emb: Vec<f64>,
    block_inputs: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    pub config: DenoiserConfig,
    pub params: Vec<f64>,
    /// Optimizer steps taken; zero means untrained.
    pub trained_steps: usize,
    /// Raw motion magnitude that maps to 1.0 at the motion MLP input.
    pub motion_scale: f64,
    layout: LayoutHandle,
}

#[derive(Debug, Clone)]
struct LayoutHandle(Layout, NoiseSchedule);

impl PartialEq for LayoutHandle {
    fn eq(&self, other: &Self) -> bool {
        self.0.total == other.0.total && self.1 == other.1
    }
}

/// Preconditioning coefficients at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Precondition {
    pub a: f64,
    pub sigma: f64,
    pub c_in: f64,
    pub c_skip: f64,
    pub c_out: f64,
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

/// Sinusoidal encoding of the integer diffusion step.
pub fn step_encoding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for k in 0..half {
        let freq = (-(10_000f64).ln() * k as f64 / half as f64).exp();
        out[k] = (t as f64 * freq).sin();
        out[half + k] = (t as f64 * freq).cos();
    }
    out
}

impl Denoiser {
    pub fn new(config: DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.emb_dim;
        let mut fill = |params: &mut [f64], std: f64| {
            let normal = Normal::new(0.0, std).expect("positive std");
            params.iter_mut().for_each(|p| *p = normal.sample(&mut rng));
        };
        for (b, bl) in layout.blocks.iter().enumerate() {
            let fan_in = (11 * bl.cin) as f64;
            let gain = if b + 1 == config.blocks { 0.1 } else { 1.0 };
            fill(&mut params[bl.spatial..bl.temporal], gain / fan_in.sqrt());
            fill(&mut params[bl.temporal..bl.bias], gain / fan_in.sqrt());
            fill(&mut params[bl.emb_proj..bl.emb_proj + bl.cout * d], 0.1 / (d as f64).sqrt());
        }
        fill(&mut params[layout.labels..layout.motion_w1], 0.1);
        fill(&mut params[layout.motion_w1..layout.motion_b1], 1.0);
        fill(&mut params[layout.motion_w2..layout.motion_b2], 1.0 / (d as f64).sqrt());
        Ok(Self {
            config,
            params,
            trained_steps: 0,
            motion_scale: 1.0,
            layout: LayoutHandle(layout, NoiseSchedule::new(config.schedule)?),
        })
    }

    pub fn from_params(config: DenoiserConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(Error::invalid(format!(
                "architecture needs {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Self {
            config,
            params,
            trained_steps: 0,
            motion_scale: 1.0,
            layout: LayoutHandle(layout, NoiseSchedule::new(config.schedule)?),
        })
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.layout.1
    }

    pub fn precondition(&self, t: usize) -> Result<Precondition> {
        let n = self.layout.1.train_steps();
        if t == 0 || t > n {
            return Err(Error::invalid(format!("denoiser step {t} outside [1, {n}]")));
        }
        let ab = self.layout.1.alpha_bar(t);
        let a = ab.sqrt();
        let sigma = (1.0 - ab).sqrt() / a;
        let sd = self.config.data_std;
        let r = (sigma * sigma + sd * sd).sqrt();
        Ok(Precondition {
            a,
            sigma,
            c_in: 1.0 / r,
            c_skip: sd * sd / (r * r),
            c_out: sigma * sd / r,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn is_trained(&self) -> bool {
        self.trained_steps > 0
    }

    /// Map a raw (pixel-space) motion magnitude to the MLP input range.
    pub fn normalize_motion(&self, raw: f64) -> f64 {
        (raw / self.motion_scale).clamp(0.0, 1.0)
    }

    fn input_features(
        &self,
        z_t: &LatentVideo,
        pc: &Precondition,
        cond: &ConditionSignal,
    ) -> Result<(Vec<f64>, usize)> {
        let cfg = &self.config;
        let s = z_t.shape;
        if s.channels != cfg.channels {
            return Err(Error::invalid(format!(
                "latent has {} channels, denoiser expects {}",
                s.channels, cfg.channels
            )));
        }
        let null_label = cfg.num_labels;
        let (cond_latent, label_row): (Option<&LatentVideo>, usize) = match cond {
            ConditionSignal::None => (None, null_label),
            ConditionSignal::Label(id) => {
                if *id as usize >= cfg.num_labels {
                    return Err(Error::invalid(format!(
                        "label {id} outside the {} known labels",
                        cfg.num_labels
                    )));
                }
                (None, *id as usize)
            }
            ConditionSignal::Image(z) => {
                let want = LatentShape { frames: 1, ..s };
                if z.shape != want {
                    return Err(Error::invalid(format!(
                        "image condition shape {:?}, expected {want:?}",
                        z.shape
                    )));
                }
                (Some(z), null_label)
            }
            ConditionSignal::StaticVideo(z) => {
                z_t.same_shape(z)?;
                (Some(z), null_label)
            }
        };
        let c = cfg.channels;
        let cin = cfg.input_channels();
        let positions = s.frames * s.height * s.width;
        let per_frame = s.height * s.width;
        let mu = cfg.data_mean;
        let mut feats = vec![0.0; positions * cin];
        for p in 0..positions {
            let dst = &mut feats[p * cin..(p + 1) * cin];
            for k in 0..c {
                dst[k] = pc.c_in * (z_t.data[p * c + k] / pc.a - mu);
            }
            if let Some(z) = cond_latent {
                let q = if z.shape.frames == 1 { p % per_frame } else { p };
                for k in 0..c {
                    dst[c + k] = z.data[q * c + k] - mu;
                }
                dst[2 * c] = 1.0;
            }
        }
        Ok((feats, label_row))
    }

    fn embedding(&self, t: usize, label_row: usize, motion: Option<f64>) -> (Vec<f64>, Option<(f64, Vec<f64>)>) {
        let l = &self.layout.0;
        let d = self.config.emb_dim;
        let p = &self.params;
        let mut emb = step_encoding(t, d);
        let row = &p[l.labels + label_row * d..l.labels + (label_row + 1) * d];
        emb.iter_mut().zip(row).for_each(|(e, r)| *e += r);
        let motion = motion.filter(|_| !self.config.static_mode);
        let motion_cache = motion.map(|m| {
            let pre: Vec<f64> = (0..d).map(|k| p[l.motion_w1 + k] * m + p[l.motion_b1 + k]).collect();
            for (o, e) in emb.iter_mut().enumerate() {
                let mut acc = p[l.motion_b2 + o];
                for (k, &h) in pre.iter().enumerate() {
                    acc += p[l.motion_w2 + o * d + k] * silu(h);
                }
                *e += acc;
            }
            (m, pre)
        });
        (emb, motion_cache)
    }

    /// Predict the noise in `z_t`. `motion` is the normalized magnitude or
    /// `None` to drop the motion input.
    pub fn forward(
        &self,
        z_t: &LatentVideo,
        t: usize,
        cond: &ConditionSignal,
        motion: Option<f64>,
    ) -> Result<LatentVideo> {
        Ok(self.forward_cached(z_t, t, cond, motion)?.0)
    }

    pub fn forward_cached(
        &self,
        z_t: &LatentVideo,
        t: usize,
        cond: &ConditionSignal,
        motion: Option<f64>,
    ) -> Result<(LatentVideo, ForwardCache)> {
        let pc = self.precondition(t)?;
        let (feats, label_row) = self.input_features(z_t, &pc, cond)?;
        let (emb, motion_cache) = self.embedding(t, label_row, motion);
        let s = z_t.shape;
        let l = &self.layout.0;
        let d = self.config.emb_dim;
        let mut block_inputs = Vec::with_capacity(l.blocks.len());
        let mut pre_activations = Vec::with_capacity(l.blocks.len());
        let mut h = feats;
        for (b, bl) in l.blocks.iter().enumerate() {
            let bias: Vec<f64> = (0..bl.cout)
                .map(|o| {
                    let proj = &self.params[bl.emb_proj + o * d..bl.emb_proj + (o + 1) * d];
                    self.params[bl.bias + o] + proj.iter().zip(&emb).map(|(a, e)| a * e).sum::<f64>()
                })
                .collect();
            let pre = conv_forward(&h, &self.params, bl, &bias, s);
            let last = b + 1 == l.blocks.len();
            let next = if last { pre.clone() } else { pre.iter().map(|&u| silu(u)).collect() };
            block_inputs.push(std::mem::replace(&mut h, next));
            pre_activations.push(pre);
        }
        let mu = self.config.data_mean;
        let eps_hat: Vec<f64> = h
            .iter()
            .zip(&z_t.data)
            .map(|(&f, &z)| {
                let x = z / pc.a - mu;
                ((1.0 - pc.c_skip) * x - pc.c_out * f) / pc.sigma
            })
            .collect();
        let out = LatentVideo::from_data(s, eps_hat)?;
        Ok((
            out,
            ForwardCache {
                shape: s,
                out_gain: -pc.c_out / pc.sigma,
                label_row,
                motion: motion_cache,
                emb,
                block_inputs,
                pre_activations,
            },
        ))
    }

    /// Accumulate `dL/dθ` into `grads` given `dL/d(output)`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64], grads: &mut [f64]) {
        let l = &self.layout.0;
        let d = self.config.emb_dim;
        let s = cache.shape;
        let mut g_emb = vec![0.0; d];
        let mut g: Vec<f64> = grad_out.iter().map(|v| v * cache.out_gain).collect();
        for (b, bl) in l.blocks.iter().enumerate().rev() {
            let last = b + 1 == l.blocks.len();
            if !last {
                for (gv, &u) in g.iter_mut().zip(&cache.pre_activations[b]) {
                    *gv *= silu_grad(u);
                }
            }
            let want_input_grad = b > 0;
            let (g_bias, g_in) = conv_backward(&cache.block_inputs[b], &self.params, bl, &g, s, grads, want_input_grad);
            for o in 0..bl.cout {
                grads[bl.bias + o] += g_bias[o];
                for k in 0..d {
                    grads[bl.emb_proj + o * d + k] += g_bias[o] * cache.emb[k];
                    g_emb[k] += g_bias[o] * self.params[bl.emb_proj + o * d + k];
                }
            }
            if let Some(gi) = g_in {
                g = gi;
            }
        }
        for k in 0..d {
            grads[l.labels + cache.label_row * d + k] += g_emb[k];
        }
        if let Some((m, pre)) = &cache.motion {
            for k in 0..d {
                grads[l.motion_b2 + k] += g_emb[k];
            }
            for (j, &h) in pre.iter().enumerate() {
                let mut g_act = 0.0;
                for o in 0..d {
                    grads[l.motion_w2 + o * d + j] += g_emb[o] * silu(h);
                    g_act += g_emb[o] * self.params[l.motion_w2 + o * d + j];
                }
                let g_pre = g_act * silu_grad(h);
                grads[l.motion_w1 + j] += g_pre * m;
                grads[l.motion_b1 + j] += g_pre;
            }
        }
    }
}

const TAPS: [(isize, isize); 9] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 0),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Neighbour position indices of `(f, y, x)`: nine spatial taps (or `None`
/// outside the frame) followed by the previous and next frame, wrapping.
fn neighbours(s: LatentShape, f: usize, y: usize, x: usize) -> [Option<usize>; 11] {
    let mut out = [None; 11];
    for (k, (dy, dx)) in TAPS.iter().enumerate() {
        let yy = y as isize + dy;
        let xx = x as isize + dx;
        if yy >= 0 && xx >= 0 && (yy as usize) < s.height && (xx as usize) < s.width {
            out[k] = Some((f * s.height + yy as usize) * s.width + xx as usize);
        }
    }
    let prev = (f + s.frames - 1) % s.frames;
    let next = (f + 1) % s.frames;
    out[9] = Some((prev * s.height + y) * s.width + x);
    out[10] = Some((next * s.height + y) * s.width + x);
    out
}

fn tap_weights<'a>(params: &'a [f64], bl: &BlockLayout, tap: usize) -> &'a [f64] {
    let n = bl.cin * bl.cout;
    if tap < 9 {
        &params[bl.spatial + tap * n..bl.spatial + (tap + 1) * n]
    } else {
        let k = tap - 9;
        &params[bl.temporal + k * n..bl.temporal + (k + 1) * n]
    }
}

fn tap_offset(bl: &BlockLayout, tap: usize) -> usize {
    let n = bl.cin * bl.cout;
    if tap < 9 {
        bl.spatial + tap * n
    } else {
        bl.temporal + (tap - 9) * n
    }
}

fn conv_forward(input: &[f64], params: &[f64], bl: &BlockLayout, bias: &[f64], s: LatentShape) -> Vec<f64> {
    let (cin, cout) = (bl.cin, bl.cout);
    let positions = s.frames * s.height * s.width;
    let mut out = vec![0.0; positions * cout];
    for f in 0..s.frames {
        for y in 0..s.height {
            for x in 0..s.width {
                let p = (f * s.height + y) * s.width + x;
                let acc = &mut out[p * cout..(p + 1) * cout];
                acc.copy_from_slice(bias);
                for (tap, nb) in neighbours(s, f, y, x).iter().enumerate() {
                    let Some(q) = nb else { continue };
                    let src = &input[q * cin..(q + 1) * cin];
                    let w = tap_weights(params, bl, tap);
                    for (i, &v) in src.iter().enumerate() {
                        if v == 0.0 {
                            continue;
                        }
                        let row = &w[i * cout..(i + 1) * cout];
                        for (a, &wv) in acc.iter_mut().zip(row) {
                            *a += v * wv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns the bias gradient and, when requested, the input gradient; weight
/// gradients are accumulated into `grads`.
fn conv_backward(
    input: &[f64],
    params: &[f64],
    bl: &BlockLayout,
    g_out: &[f64],
    s: LatentShape,
    grads: &mut [f64],
    want_input_grad: bool,
) -> (Vec<f64>, Option<Vec<f64>>) {
    let (cin, cout) = (bl.cin, bl.cout);
    let positions = s.frames * s.height * s.width;
    let mut g_bias = vec![0.0; cout];
    let mut g_in = want_input_grad.then(|| vec![0.0; positions * cin]);
    for f in 0..s.frames {
        for y in 0..s.height {
            for x in 0..s.width {
                let p = (f * s.height + y) * s.width + x;
                let g = &g_out[p * cout..(p + 1) * cout];
                for (gb, &gv) in g_bias.iter_mut().zip(g) {
                    *gb += gv;
                }
                for (tap, nb) in neighbours(s, f, y, x).iter().enumerate() {
                    let Some(q) = nb else { continue };
                    let src = &input[q * cin..(q + 1) * cin];
                    let off = tap_offset(bl, tap);
                    for (i, &v) in src.iter().enumerate() {
                        if v != 0.0 {
                            let gw = &mut grads[off + i * cout..off + (i + 1) * cout];
                            for (a, &gv) in gw.iter_mut().zip(g) {
                                *a += v * gv;
                            }
                        }
                    }
                    if let Some(gi) = g_in.as_mut() {
                        let w = &params[off..off + cin * cout];
                        let dst = &mut gi[q * cin..(q + 1) * cin];
                        for (i, di) in dst.iter_mut().enumerate() {
                            let row = &w[i * cout..(i + 1) * cout];
                            *di += row.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                }
            }
        }
    }
    (g_bias, g_in)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny() -> DenoiserConfig {
        DenoiserConfig {
            channels: 3,
            hidden: 4,
            emb_dim: 4,
            blocks: 3,
            num_labels: 2,
            ..Default::default()
        }
    }

    fn random_latent(shape: LatentShape, seed: u64) -> LatentVideo {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LatentVideo::from_data(shape, (0..shape.numel()).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
    }

    const SHAPE: LatentShape = LatentShape { frames: 3, height: 4, width: 4, channels: 3 };

    #[test]
    fn output_shape_and_determinism() {
        let net = Denoiser::new(tiny(), 1).unwrap();
        let z = random_latent(SHAPE, 2);
        let cond = ConditionSignal::StaticVideo(random_latent(SHAPE, 3));
        let a = net.forward(&z, 10, &cond, Some(0.5)).unwrap();
        let b = net.forward(&z, 10, &cond, Some(0.5)).unwrap();
        assert_eq!(a.shape, SHAPE);
        assert_eq!(a, b);
        assert_ne!(a, net.forward(&z, 10, &cond, Some(1.0)).unwrap());
    }

    #[test]
    fn static_mode_ignores_motion() {
        let mut cfg = tiny();
        cfg.static_mode = true;
        let net = Denoiser::new(cfg, 1).unwrap();
        let z = random_latent(SHAPE, 2);
        let a = net.forward(&z, 10, &ConditionSignal::Label(1), Some(0.1)).unwrap();
        let b = net.forward(&z, 10, &ConditionSignal::Label(1), Some(0.9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_conditions() {
        let net = Denoiser::new(tiny(), 1).unwrap();
        let z = random_latent(SHAPE, 2);
        assert!(net.forward(&z, 1, &ConditionSignal::Label(5), None).is_err());
        let wrong = random_latent(LatentShape { frames: 2, ..SHAPE }, 3);
        assert!(net.forward(&z, 1, &ConditionSignal::StaticVideo(wrong), None).is_err());
        let img = random_latent(LatentShape { frames: 1, ..SHAPE }, 3);
        assert!(net.forward(&z, 1, &ConditionSignal::Image(img), None).is_ok());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let net = Denoiser::new(tiny(), 5).unwrap();
        let z = random_latent(SHAPE, 6);
        let target = random_latent(SHAPE, 7);
        let img = random_latent(LatentShape { frames: 1, ..SHAPE }, 8);
        for (cond, motion) in [
            (ConditionSignal::Image(img), Some(0.7)),
            (ConditionSignal::Label(1), None),
        ] {
            let loss = |n: &Denoiser| {
                let out = n.forward(&z, 37, &cond, motion).unwrap();
                out.data.iter().zip(&target.data).map(|(a, b)| 0.5 * (a - b).powi(2)).sum::<f64>()
            };
            let (out, cache) = net.forward_cached(&z, 37, &cond, motion).unwrap();
            let g_out: Vec<f64> = out.data.iter().zip(&target.data).map(|(a, b)| a - b).collect();
            let mut grads = vec![0.0; net.param_count()];
            net.backward(&cache, &g_out, &mut grads);
            let h = 1e-6;
            let mut checked = 0;
            for i in 0..net.param_count() {
                let mut p = net.clone();
                p.params[i] += h;
                let up = loss(&p);
                p.params[i] -= 2.0 * h;
                let down = loss(&p);
                let num = (up - down) / (2.0 * h);
                let err = (num - grads[i]).abs();
                assert!(err <= 1e-5 * num.abs().max(grads[i].abs()) + 1e-7, "param {i}: {num} vs {}", grads[i]);
                if grads[i] != 0.0 {
                    checked += 1;
                }
            }
            assert!(checked > net.param_count() / 2);
        }
    }
}
