//! Dataset curation: SSIM probe filtering, alpha-map boundary rejection and
//! the 3D-to-4D motion magnitude.

pub mod ssim;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{render_frame, render_orbital, DynamicAsset, FrameImage, OrbitSetup, OrbitalVideo};

pub use ssim::{ssim, SsimParams};

/// Mean squared difference between paired frames: per-frame mean over
/// pixels and channels, averaged over frames.
pub fn motion_magnitude_frames(frames: &[FrameImage], reference: &[FrameImage]) -> Result<f64> {
    if frames.len() != reference.len() || frames.is_empty() {
        return Err(Error::invalid(format!(
            "motion magnitude needs equal non-empty frame counts, got {} and {}",
            frames.len(),
            reference.len()
        )));
    }
    let mut total = 0.0;
    for (a, b) in frames.iter().zip(reference) {
        a.same_dims(b)?;
        let sq: f64 = a.rgb.iter().zip(&b.rgb).map(|(x, y)| (x - y) * (x - y)).sum();
        total += sq / a.rgb.len() as f64;
    }
    Ok(total / frames.len() as f64)
}

/// 3D-to-4D motion magnitude of a dynamic orbit against its static
/// counterpart rendered at the same poses.
pub fn motion_magnitude(video: &OrbitalVideo, static_video: &OrbitalVideo) -> Result<f64> {
    if !static_video.is_static {
        return Err(Error::invalid("reference video must be the static counterpart"));
    }
    if video.trajectory != static_video.trajectory {
        return Err(Error::invalid("videos were rendered on different trajectories"));
    }
    motion_magnitude_frames(&video.frames, &static_video.frames)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurationRule {
    pub s_high: f64,
    pub s_low: f64,
    /// Frame indices of the three front-view probes; scores pair the first
    /// with each of the other two.
    pub probe_indices: [usize; 3],
    pub boundary_margin: usize,
}

impl CurationRule {
    /// Thresholds 0.95 / 0.4 with probes at `0, T/4, T/2`.
    pub fn for_frames(frames: usize) -> Self {
        Self {
            s_high: 0.95,
            s_low: 0.4,
            probe_indices: [0, frames / 4, frames / 2],
            boundary_margin: 1,
        }
    }

    pub fn validate(&self, frames: usize) -> Result<()> {
        if !(0.0 <= self.s_low && self.s_low < self.s_high && self.s_high <= 1.0) {
            return Err(Error::invalid(format!(
                "need 0 <= s_low < s_high <= 1, got s_low={} s_high={}",
                self.s_low, self.s_high
            )));
        }
        let [a, b, c] = self.probe_indices;
        if a == b || a == c || b == c {
            return Err(Error::invalid("probe indices must be distinct"));
        }
        if self.probe_indices.iter().any(|&i| i >= frames) {
            return Err(Error::invalid(format!(
                "probe indices {:?} out of range for {frames} frames",
                self.probe_indices
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Kept,
    TooStatic,
    TooDistorted,
    OutOfBoundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationVerdict {
    pub asset_id: String,
    pub kept: bool,
    pub reason: Verdict,
    pub ssim_scores: [f64; 2],
    pub motion_magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationFailure {
    pub asset_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationReport {
    pub verdicts: Vec<CurationVerdict>,
    pub rule: CurationRule,
    pub counts: BTreeMap<Verdict, usize>,
    #[serde(default)]
    pub failures: Vec<CurationFailure>,
}

impl CurationReport {
    pub fn from_results(
        rule: CurationRule,
        results: Vec<(String, Result<CurationVerdict>)>,
    ) -> Self {
        let mut verdicts = Vec::new();
        let mut failures = Vec::new();
        for (asset_id, r) in results {
            match r {
                Ok(v) => verdicts.push(v),
                Err(e) => failures.push(CurationFailure {
                    asset_id,
                    error: e.to_string(),
                }),
            }
        }
        let mut counts = BTreeMap::new();
        for v in &verdicts {
            *counts.entry(v.reason).or_insert(0) += 1;
        }
        Self {
            verdicts,
            rule,
            counts,
            failures,
        }
    }

    pub fn kept(&self) -> impl Iterator<Item = &CurationVerdict> {
        self.verdicts.iter().filter(|v| v.kept)
    }

    pub fn verdict(&self, asset_id: &str) -> Option<&CurationVerdict> {
        self.verdicts.iter().find(|v| v.asset_id == asset_id)
    }
}

/// Decide from three front-view probes whether an asset moves enough without
/// degenerating. Returns the verdict and both scores.
pub fn dynamic_filter(
    probes: [&FrameImage; 3],
    rule: &CurationRule,
    params: &SsimParams,
) -> Result<(bool, Verdict, [f64; 2])> {
    let scores = [
        ssim(probes[0], probes[1], params)?,
        ssim(probes[0], probes[2], params)?,
    ];
    Ok(classify_scores(scores, rule))
}

pub fn classify_scores(scores: [f64; 2], rule: &CurationRule) -> (bool, Verdict, [f64; 2]) {
    let verdict = if scores.iter().all(|&s| s > rule.s_high) {
        Verdict::TooStatic
    } else if scores.iter().any(|&s| s < rule.s_low) {
        Verdict::TooDistorted
    } else {
        Verdict::Kept
    };
    (verdict == Verdict::Kept, verdict, scores)
}

/// True when any frame has coverage within `margin` pixels of an image border.
pub fn boundary_check(video: &OrbitalVideo, margin: usize) -> bool {
    video.frames.iter().any(|f| frame_touches_border(f, margin))
}

pub fn frame_touches_border(frame: &FrameImage, margin: usize) -> bool {
    let (w, h) = (frame.width, frame.height);
    (0..h).any(|y| {
        (0..w).any(|x| {
            let near = x < margin || y < margin || x + margin >= w || y + margin >= h;
            near && frame.alpha[y * w + x] > 0.0
        })
    })
}

/// Curate one asset: probe filter, then boundary check on the dynamic orbit.
/// Scores and motion magnitude are recorded whatever the outcome.
pub fn curate_asset(
    asset_id: &str,
    asset: &DynamicAsset,
    setup: &OrbitSetup,
    rule: &CurationRule,
    params: &SsimParams,
) -> Result<CurationVerdict> {
    rule.validate(setup.frames)?;
    let front = setup.front_pose();
    let probes = rule
        .probe_indices
        .map(|i| render_frame(asset, &front, i as f64 / setup.frames as f64, &setup.render));
    let [p0, p1, p2] = probes;
    let probes = [p0?, p1?, p2?];
    let (mut kept, mut reason, scores) =
        dynamic_filter([&probes[0], &probes[1], &probes[2]], rule, params)?;

    let traj = setup.trajectory(0.0)?;
    let video = render_orbital(asset, &traj, true, &setup.render)?;
    let frozen = render_orbital(asset, &traj, false, &setup.render)?;
    if kept && boundary_check(&video, rule.boundary_margin) {
        kept = false;
        reason = Verdict::OutOfBoundary;
    }
    Ok(CurationVerdict {
        asset_id: asset_id.to_string(),
        kept,
        reason,
        ssim_scores: scores,
        motion_magnitude: motion_magnitude(&video, &frozen)?,
    })
}

/// Curate a batch. Per-asset failures are reported without aborting the rest.
pub fn curate(
    assets: &[(String, DynamicAsset)],
    setup: &OrbitSetup,
    rule: &CurationRule,
    params: &SsimParams,
) -> Result<CurationReport> {
    rule.validate(setup.frames)?;
    params.validate()?;
    let results = assets
        .par_iter()
        .map(|(id, asset)| (id.clone(), curate_asset(id, asset, setup, rule, params)))
        .collect();
    Ok(CurationReport::from_results(*rule, results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{build_trajectory, sample_asset, RenderSettings};

    fn small_setup() -> OrbitSetup {
        OrbitSetup {
            frames: 8,
            elevation: 0.0,
            distance: 2.0,
            render: RenderSettings {
                width: 32,
                height: 32,
                ..Default::default()
            },
        }
    }

    #[test]
    fn motion_magnitude_identity_and_scaling() {
        let setup = small_setup();
        let traj = build_trajectory(8, 0.0, 2.0, 0.0).unwrap();
        let asset = sample_asset(4, 1.0, 0);
        let v = render_orbital(&asset, &traj, true, &setup.render).unwrap();
        let s = render_orbital(&asset, &traj, false, &setup.render).unwrap();
        let mut same = v.clone();
        same.is_static = true;
        assert_eq!(motion_magnitude(&v, &same).unwrap(), 0.0);

        let m = motion_magnitude(&v, &s).unwrap();
        assert!(m > 0.0);
        // Doubling every frame difference quadruples the metric.
        let mut doubled = v.clone();
        for (f, r) in doubled.frames.iter_mut().zip(&s.frames) {
            for (x, y) in f.rgb.iter_mut().zip(&r.rgb) {
                *x = y + 2.0 * (*x - y);
            }
        }
        let m2 = motion_magnitude(&doubled, &s).unwrap();
        assert!((m2 - 4.0 * m).abs() <= 1e-12 * m2);
    }

    #[test]
    fn single_pixel_difference() {
        let traj = build_trajectory(24, 0.0, 2.0, 0.0).unwrap();
        let frame = FrameImage::background(64, 64, [0.0; 3]);
        let frames = vec![frame; 24];
        let reference = OrbitalVideo {
            frames: frames.clone(),
            trajectory: traj.clone(),
            is_static: true,
        };
        let mut video = OrbitalVideo {
            frames,
            trajectory: traj,
            is_static: false,
        };
        video.frames[5].rgb[100] = 1.0;
        let m = motion_magnitude(&video, &reference).unwrap();
        assert!((m - 1.0 / 24.0 / 12288.0).abs() < 1e-18);
        assert!((m - 3.392e-6).abs() < 2e-3 * 3.392e-6);
    }

    #[test]
    fn mismatched_trajectories_rejected() {
        let a = OrbitalVideo {
            frames: vec![FrameImage::background(4, 4, [0.5; 3]); 4],
            trajectory: build_trajectory(4, 0.0, 2.0, 0.0).unwrap(),
            is_static: false,
        };
        let mut b = a.clone();
        b.is_static = true;
        b.trajectory = build_trajectory(4, 0.0, 2.0, 10.0).unwrap();
        assert!(motion_magnitude(&a, &b).is_err());
    }

    #[test]
    fn score_thresholds() {
        let rule = CurationRule::for_frames(24);
        assert_eq!(classify_scores([1.0, 1.0], &rule).1, Verdict::TooStatic);
        assert_eq!(classify_scores([0.97, 0.80], &rule).1, Verdict::Kept);
        assert_eq!(classify_scores([0.35, 0.90], &rule).1, Verdict::TooDistorted);
        // Strict inequality: exactly s_high is not "higher than".
        assert_eq!(classify_scores([0.95, 0.99], &rule).1, Verdict::Kept);
        assert_eq!(classify_scores([0.4, 0.5], &rule).1, Verdict::Kept);
    }

    #[test]
    fn identical_probes_are_too_static() {
        let f = render_frame(
            &sample_asset(1, 1.0, 0),
            &crate::scene::CameraPose::orbit(0.0, 0.0, 2.0),
            0.0,
            &small_setup().render,
        )
        .unwrap();
        let (keep, reason, scores) =
            dynamic_filter([&f, &f, &f], &CurationRule::for_frames(24), &SsimParams::default())
                .unwrap();
        assert!(!keep);
        assert_eq!(reason, Verdict::TooStatic);
        assert_eq!(scores, [1.0, 1.0]);
    }

    #[test]
    fn corrupted_probe_is_too_distorted() {
        use rand::{Rng, SeedableRng};
        let setup = small_setup();
        let clean = render_frame(
            &sample_asset(2, 1.0, 0),
            &setup.front_pose(),
            0.0,
            &setup.render,
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut noisy = clean.clone();
        for v in noisy.rgb.iter_mut() {
            *v = rng.random_range(0.0..1.0);
        }
        let params = SsimParams::default();
        let bad = ssim(&clean, &noisy, &params).unwrap();
        assert!(bad < 0.4, "{bad}");
        let mut mild = clean.clone();
        for v in mild.rgb.iter_mut().take(200) {
            *v = 1.0 - *v;
        }
        let (keep, reason, _) =
            dynamic_filter([&clean, &noisy, &mild], &CurationRule::for_frames(24), &params).unwrap();
        assert!(!keep);
        assert_eq!(reason, Verdict::TooDistorted);
    }

    #[test]
    fn boundary_margins() {
        let mut f = FrameImage::background(16, 16, [0.5; 3]);
        let traj = build_trajectory(2, 0.0, 2.0, 0.0).unwrap();
        let empty = OrbitalVideo {
            frames: vec![f.clone(), f.clone()],
            trajectory: traj.clone(),
            is_static: false,
        };
        assert!(!boundary_check(&empty, 1));
        f.alpha[8 * 16 + 8] = 1.0;
        assert!(!frame_touches_border(&f, 2));
        f.alpha[8 * 16 + 1] = 0.25;
        assert!(!frame_touches_border(&f, 1));
        assert!(frame_touches_border(&f, 2));
        f.alpha[15 * 16 + 3] = 0.5;
        assert!(frame_touches_border(&f, 1));
        assert!(!frame_touches_border(&f, 0));
    }

    #[test]
    fn centered_sphere_is_in_bounds() {
        let setup = small_setup();
        let mut asset = sample_asset(0, 0.0, 0);
        asset.primitives.truncate(1);
        asset.primitives[0].shape = crate::scene::Shape::Sphere;
        asset.primitives[0].base_transform.scale = [0.3; 3];
        let traj = setup.trajectory(0.0).unwrap();
        let v = render_orbital(&asset, &traj, true, &setup.render).unwrap();
        assert!(!boundary_check(&v, 2));
    }

    #[test]
    fn zero_motion_corpus_is_too_static() {
        let setup = small_setup();
        let rule = CurationRule::for_frames(setup.frames);
        let assets: Vec<_> = (0..4)
            .map(|s| (format!("a{s}"), sample_asset(s, 0.0, 0)))
            .collect();
        let report = curate(&assets, &setup, &rule, &SsimParams::default()).unwrap();
        assert_eq!(report.counts.get(&Verdict::TooStatic), Some(&4));
        assert!(report.verdicts.iter().all(|v| v.motion_magnitude == 0.0));
    }

    #[test]
    fn invalid_rules_rejected() {
        let mut rule = CurationRule::for_frames(24);
        rule.s_low = 0.96;
        assert!(rule.validate(24).is_err());
        let mut rule = CurationRule::for_frames(24);
        rule.probe_indices = [0, 6, 6];
        assert!(rule.validate(24).is_err());
        let rule = CurationRule::for_frames(24);
        assert!(rule.validate(10).is_err());
    }
}
