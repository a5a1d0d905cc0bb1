//! Image metrics, motion-fidelity checks and serializable reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::curator::{motion_magnitude, ssim, SsimParams};
use crate::error::{Error, Result};
use crate::scene::{FrameImage, OrbitalVideo};

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Peak signal-to-noise ratio of the rgb channels, data range [0, 1].
pub fn psnr(a: &FrameImage, b: &FrameImage) -> Result<f64> {
    a.same_dims(b)?;
    let mse = a
        .rgb
        .iter()
        .zip(&b.rgb)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.rgb.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// 1-based ranks with ties sharing their average rank.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let r = 0.5 * (start + end + 1) as f64;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("spearman needs two equal-length samples of size >= 2"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("spearman inputs must be finite"));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("spearman is undefined for a constant sample"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Rank correlation between conditioned and measured motion magnitudes.
pub fn motion_monotonicity(samples: &[(f64, f64)]) -> Result<f64> {
    let mut levels: Vec<f64> = samples.iter().map(|s| s.0).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    if levels.len() < 3 {
        return Err(Error::invalid(format!(
            "motion monotonicity needs at least 3 conditioning levels, got {}",
            levels.len()
        )));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = samples.iter().copied().unzip();
    spearman(&x, &y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewMetric {
    pub index: usize,
    pub azimuth: f64,
    pub tau: f64,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionFidelity {
    pub target: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seeds: BTreeMap<String, u64>,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub views: Vec<ViewMetric>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub motion: Option<MotionFidelity>,
    /// Metrics that need pretrained networks; always null here.
    pub clip_f: Option<f64>,
    pub clip_o: Option<f64>,
    pub lpips: Option<f64>,
    pub fvd: Option<f64>,
    pub meta: RunMeta,
}

impl MetricReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("<report>", e))
    }

    /// Hex sha256 of the JSON encoding.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }

    /// Pool several reports: views are concatenated and renumbered, means
    /// are taken over all views and motion magnitudes are averaged.
    pub fn merge(parts: &[MetricReport], meta: RunMeta) -> Result<MetricReport> {
        let views: Vec<ViewMetric> = parts
            .iter()
            .flat_map(|r| r.views.iter().cloned())
            .enumerate()
            .map(|(i, v)| ViewMetric { index: i, ..v })
            .collect();
        if views.is_empty() {
            return Err(Error::invalid("nothing to merge"));
        }
        let n = views.len() as f64;
        let motions: Vec<MotionFidelity> = parts.iter().filter_map(|r| r.motion).collect();
        let motion = (motions.len() == parts.len()).then(|| {
            let k = motions.len() as f64;
            MotionFidelity {
                target: motions.iter().map(|m| m.target).sum::<f64>() / k,
                reference: motions.iter().map(|m| m.reference).sum::<f64>() / k,
            }
        });
        Ok(MetricReport {
            schema_version: REPORT_SCHEMA_VERSION,
            mean_psnr: views.iter().map(|v| v.psnr).sum::<f64>() / n,
            mean_ssim: views.iter().map(|v| v.ssim).sum::<f64>() / n,
            views,
            motion,
            clip_f: None,
            clip_o: None,
            lpips: None,
            fvd: None,
            meta,
        })
    }
}

/// One CSV row per method with the implemented metrics.
pub fn csv_table(rows: &[(&str, &MetricReport)]) -> String {
    let mut out = String::from("method,ssim,psnr\n");
    for (name, r) in rows {
        out.push_str(&format!("{name},{:.4},{:.4}\n", r.mean_ssim, r.mean_psnr));
    }
    out
}

/// Compare `targets` against `references` view by view. With `statics`, the
/// report also carries the motion magnitude of each video against its static
/// counterpart `(target_static, reference_static)`.
pub fn evaluate_pair(
    targets: &OrbitalVideo,
    references: &OrbitalVideo,
    statics: Option<(&OrbitalVideo, &OrbitalVideo)>,
    ssim_params: &SsimParams,
    meta: RunMeta,
) -> Result<MetricReport> {
    if targets.is_empty() || !targets.trajectory.same_as(&references.trajectory) {
        return Err(Error::invalid("target and reference trajectories differ"));
    }
    if targets.len() != references.len() {
        return Err(Error::invalid("target and reference frame counts differ"));
    }
    let traj = &targets.trajectory;
    let views = targets
        .frames
        .iter()
        .zip(&references.frames)
        .enumerate()
        .map(|(i, (t, r))| {
            Ok(ViewMetric {
                index: i,
                azimuth: traj.poses[i].azimuth,
                tau: traj.timestamps[i],
                psnr: psnr(t, r)?,
                ssim: ssim(t, r, ssim_params)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = views.len() as f64;
    let motion = match statics {
        Some((ts, rs)) => Some(MotionFidelity {
            target: motion_magnitude(targets, ts)?,
            reference: motion_magnitude(references, rs)?,
        }),
        None => None,
    };
    Ok(MetricReport {
        schema_version: REPORT_SCHEMA_VERSION,
        mean_psnr: views.iter().map(|v| v.psnr).sum::<f64>() / n,
        mean_ssim: views.iter().map(|v| v.ssim).sum::<f64>() / n,
        views,
        motion,
        clip_f: None,
        clip_o: None,
        lpips: None,
        fvd: None,
        meta,
    })
}
