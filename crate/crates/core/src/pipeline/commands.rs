//! Stage commands over a workspace.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curator::{curate, CurationReport, Verdict};
use crate::diffusion::latent::clamp_frames;
use crate::diffusion::{
    decode, encode, load_checkpoint, sample, save_checkpoint, train_with_progress, ConditionSignal, Denoiser,
    LatentShape, NoiseSchedule, SampleConfig, TrainConfig, TrainExample, TrainReport,
};
use crate::error::{Error, Result};
use crate::eval::{csv_table, evaluate_pair, MetricReport, RunMeta};
use crate::pipeline::config::{PipelineConfig, ReconstructSource};
use crate::pipeline::workspace::{derive_seed, load_json, save_json, MarkerStatus, Stage, Workspace};
use crate::scene::io::{read_video, write_video};
use crate::scene::{render_orbital, sample_asset, DynamicAsset, OrbitalVideo, VideoMeta, DEPTH_SENTINEL};
use crate::splat::{construct_with_progress, render, render_sweep, save_cloud, write_png, ConstructConfig, ConstructReport};

/// The four renders stored per asset.
pub const VIDEO_KINDS: [&str; 4] = ["front", "front_static", "random", "random_static"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Rerun even when a valid marker exists.
    pub force: bool,
    /// Print the plan without touching the workspace.
    pub dry_run: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    Skipped,
    Planned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: String,
    pub seed: u64,
    pub motion_scale: f64,
    pub label: u32,
    /// Start azimuth of the second orbit, degrees.
    pub random_azimuth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub assets: Vec<DatasetEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub examples: Vec<String>,
    pub dynamic: TrainReport,
    #[serde(rename = "static")]
    pub static_model: TrainReport,
}

impl TrainSummary {
    /// Ratio of the mean total loss over the first and last tenth of the
    /// dynamic model's curve.
    pub fn loss_drop(&self) -> Option<f64> {
        let c = &self.dynamic.curve;
        let k = (c.len() / 10).max(1);
        if c.len() < 2 * k {
            return None;
        }
        let mean = |s: &[crate::diffusion::LossParts]| s.iter().map(|p| p.total).sum::<f64>() / s.len() as f64;
        Some(mean(&c[..k]) / mean(&c[c.len() - k..]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct E2eSummary {
    pub stages: Vec<(Stage, StageOutcome, f64)>,
    pub assets: usize,
    pub counts: BTreeMap<Verdict, usize>,
    pub loss_drop: Option<f64>,
    pub report: Option<MetricReport>,
    pub report_hash: Option<String>,
}

impl E2eSummary {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<14} {:>9} {:>10}", "stage", "status", "seconds");
        for (stage, outcome, secs) in &self.stages {
            let status = match outcome {
                StageOutcome::Ran => "ran",
                StageOutcome::Skipped => "skipped",
                StageOutcome::Planned => "planned",
            };
            let _ = writeln!(s, "{:<14} {:>9} {:>10.1}", stage.name(), status, secs);
        }
        if self.stages.iter().all(|(_, o, _)| *o == StageOutcome::Planned) {
            return s;
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<28} value", "check");
        let kept = self.counts.get(&Verdict::Kept).copied().unwrap_or(0);
        let _ = writeln!(s, "{:<28} {kept}/{}", "assets kept", self.assets);
        for (v, n) in &self.counts {
            if *v != Verdict::Kept {
                let _ = writeln!(s, "{:<28} {n}", format!("rejected {v:?}").to_lowercase());
            }
        }
        if let Some(d) = self.loss_drop {
            let _ = writeln!(s, "{:<28} {d:.2}x", "denoiser loss drop");
        }
        if let Some(r) = &self.report {
            let _ = writeln!(s, "{:<28} {:.3} dB", "held-out psnr", r.mean_psnr);
            let _ = writeln!(s, "{:<28} {:.4}", "held-out ssim", r.mean_ssim);
            if let Some(m) = r.motion {
                let _ = writeln!(s, "{:<28} {:.3e} / {:.3e}", "motion gt / reconstructed", m.target, m.reference);
            }
        }
        if let Some(h) = &self.report_hash {
            let _ = writeln!(s, "{:<28} {h}", "report sha256");
        }
        s
    }
}

fn asset_id(i: usize) -> String {
    format!("asset_{i:04}")
}

fn unit_azimuth(seed: u64) -> f64 {
    ChaCha8Rng::seed_from_u64(seed).random_range(0.0..360.0)
}

struct Ctx<'a> {
    ws: &'a Workspace,
    cfg: &'a PipelineConfig,
    hash: String,
}

impl Ctx<'_> {
    fn seed(&self, label: &str) -> u64 {
        derive_seed(self.cfg.seed, label)
    }

    fn index(&self) -> Result<DatasetIndex> {
        load_json(&self.ws.dataset_index())
    }

    fn curation(&self) -> Result<CurationReport> {
        load_json(&self.ws.curation_report())
    }

    fn kept(&self) -> Result<Vec<DatasetEntry>> {
        let report = self.curation()?;
        let kept: Vec<DatasetEntry> = self
            .index()?
            .assets
            .into_iter()
            .filter(|e| report.verdict(&e.id).is_some_and(|v| v.kept))
            .collect();
        if kept.is_empty() {
            return Err(Error::InvalidState("no asset passed curation".into()));
        }
        Ok(kept)
    }

    fn video(&self, id: &str, kind: &str) -> Result<OrbitalVideo> {
        read_video(&self.ws.video(id, kind)).map(|(v, _)| v)
    }

    fn meta(&self, e: &DatasetEntry) -> VideoMeta {
        VideoMeta {
            seed: e.seed,
            motion_scale: e.motion_scale,
            label: e.label,
        }
    }
}

fn ensure_parent(path: &std::path::Path) -> Result<()> {
    match path.parent() {
        Some(dir) => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        None => Ok(()),
    }
}

fn push_video(out: &mut Vec<PathBuf>, path: PathBuf) {
    out.push(crate::scene::io::sidecar_path(&path));
    out.push(path);
}

fn gen_dataset(c: &Ctx) -> Result<Vec<PathBuf>> {
    let cfg = c.cfg;
    let ds = &cfg.dataset;
    let mut outputs = Vec::new();
    let mut entries = Vec::with_capacity(ds.assets);
    for i in 0..ds.assets {
        let id = asset_id(i);
        let entry = DatasetEntry {
            id: id.clone(),
            seed: c.seed(&format!("asset/{i}")),
            motion_scale: ds.motion_scales[i % ds.motion_scales.len()],
            label: i as u32 % ds.labels,
            random_azimuth: unit_azimuth(c.seed(&format!("azimuth/{i}"))),
        };
        let asset = sample_asset(entry.seed, entry.motion_scale, entry.label);
        let asset_path = c.ws.asset_file(&id);
        save_json(&asset_path, &asset)?;
        outputs.push(asset_path);
        for (start, name) in [(0.0, "front"), (entry.random_azimuth, "random")] {
            let traj = cfg.scene.trajectory(start)?;
            for animate in [true, false] {
                let video = render_orbital(&asset, &traj, animate, &cfg.scene.render)?;
                let kind = if animate { name.to_string() } else { format!("{name}_static") };
                let path = c.ws.video(&id, &kind);
                write_video(&path, &video, &c.meta(&entry))?;
                push_video(&mut outputs, path);
            }
        }
        info!("rendered {id} (motion scale {})", entry.motion_scale);
        entries.push(entry);
    }
    let index_path = c.ws.dataset_index();
    save_json(&index_path, &DatasetIndex { assets: entries })?;
    outputs.push(index_path);
    Ok(outputs)
}

fn curate_stage(c: &Ctx) -> Result<Vec<PathBuf>> {
    let cfg = c.cfg;
    let mut assets = Vec::new();
    for e in c.index()?.assets {
        let asset: DynamicAsset = load_json(&c.ws.asset_file(&e.id))?;
        assets.push((e.id, asset));
    }
    let rule = cfg.curation.rule(cfg.scene.frames);
    let report = curate(&assets, &cfg.scene, &rule, &cfg.curation.ssim)?;
    for f in &report.failures {
        log::warn!("curation failed on {}: {}", f.asset_id, f.error);
    }
    info!("curation kept {}/{}", report.kept().count(), assets.len());
    let path = c.ws.curation_report();
    save_json(&path, &report)?;
    Ok(vec![path])
}

fn train_stage(c: &Ctx) -> Result<Vec<PathBuf>> {
    let cfg = &c.cfg.diffusion;
    let report = c.curation()?;
    let mut data = Vec::new();
    for e in c.kept()? {
        data.push(TrainExample {
            z0: encode(&c.video(&e.id, "front")?)?,
            z0_static: encode(&c.video(&e.id, "front_static")?)?,
            label: e.label,
            motion: report.verdict(&e.id).map(|v| v.motion_magnitude).unwrap_or(0.0),
            id: e.id,
        });
    }
    let schedule = NoiseSchedule::new(cfg.denoiser.schedule)?;
    let mut reports = Vec::new();
    for (which, static_mode) in [("dynamic", false), ("static", true)] {
        let arch = crate::diffusion::DenoiserConfig { static_mode, ..cfg.denoiser };
        let mut net = Denoiser::new(arch, c.seed(&format!("init/{which}")))?;
        let examples: Vec<TrainExample> = if static_mode { data.iter().map(|e| e.frozen()).collect() } else { data.clone() };
        let tc = TrainConfig { seed: c.seed(&format!("train/{which}")), ..cfg.train };
        let every = (tc.iterations / 10).max(1);
        let rep = train_with_progress(&mut net, &schedule, &examples, &tc, |it, p| {
            if it % every == 0 || it + 1 == tc.iterations {
                info!("train {which} {it}/{}: total {:.5}", tc.iterations, p.total);
            }
        })?;
        ensure_parent(&c.ws.model(which))?;
        save_checkpoint(&c.ws.model(which), &net, &cfg.denoiser.schedule)?;
        reports.push(rep);
    }
    let static_model = reports.pop().expect("two reports");
    let dynamic = reports.pop().expect("two reports");
    let summary = TrainSummary {
        examples: data.iter().map(|e| e.id.clone()).collect(),
        dynamic,
        static_model,
    };
    save_json(&c.ws.train_report(), &summary)?;
    let mut outputs = vec![c.ws.train_report()];
    for which in ["dynamic", "static"] {
        let p = c.ws.model(which);
        outputs.push(crate::diffusion::checkpoint::header_path(&p));
        outputs.push(p);
    }
    Ok(outputs)
}

fn sample_stage(c: &Ctx) -> Result<Vec<PathBuf>> {
    let cfg = &c.cfg.diffusion;
    let (dynamic, schedule_cfg) = load_checkpoint(&c.ws.model("dynamic"))?;
    let (static_net, _) = load_checkpoint(&c.ws.model("static"))?;
    let schedule = NoiseSchedule::new(schedule_cfg)?;
    let report = c.curation()?;
    let r = &c.cfg.scene.render;
    let mut outputs = Vec::new();
    for e in c.kept()? {
        let front_static = c.video(&e.id, "front_static")?;
        let cond = ConditionSignal::StaticVideo(encode(&front_static)?);
        let measured = report.verdict(&e.id).map(|v| v.motion_magnitude).unwrap_or(0.0);
        let motion = cfg.motion.unwrap_or_else(|| dynamic.normalize_motion(measured));
        let shape = LatentShape::for_video(c.cfg.scene.frames, r.height, r.width)?;
        let sc = SampleConfig { seed: c.seed(&format!("sample/{}", e.id)), ..cfg.sample };
        let latent = sample(&dynamic, &static_net, &schedule, shape, &cond, motion, &sc)?;
        let mut frames = decode(&latent);
        clamp_frames(&mut frames);
        // The decoder has no alpha channel; the static render's silhouette
        // stands in for it so construction samples the object.
        for (f, s) in frames.iter_mut().zip(&front_static.frames) {
            f.alpha.clone_from(&s.alpha);
            f.depth.fill(DEPTH_SENTINEL);
        }
        let video = OrbitalVideo {
            frames,
            trajectory: front_static.trajectory.clone(),
            is_static: false,
        };
        let path = c.ws.sample_video(&e.id);
        ensure_parent(&path)?;
        write_video(&path, &video, &c.meta(&e))?;
        info!("sampled {} at motion {motion:.3}", e.id);
        push_video(&mut outputs, path);
    }
    Ok(outputs)
}

/// `video` re-rendered with every frame at the first timestamp.
fn frozen_sweep(cloud: &crate::splat::GaussianCloud4D, traj: &crate::scene::OrbitTrajectory, c: &Ctx) -> Result<OrbitalVideo> {
    let intr = c.cfg.scene.render.intrinsics()?;
    let raster = &c.cfg.splat.construct.optimize.raster;
    let t0 = traj.timestamps[0];
    Ok(OrbitalVideo {
        frames: traj.poses.iter().map(|p| render(cloud, p, t0, &intr, raster)).collect(),
        trajectory: traj.clone(),
        is_static: true,
    })
}

fn reconstruct_stage(c: &Ctx) -> Result<Vec<PathBuf>> {
    let cfg = &c.cfg.splat;
    let intr = c.cfg.scene.render.intrinsics()?;
    let mut outputs = Vec::new();
    for e in c.kept()? {
        let v = match cfg.source {
            ReconstructSource::Sample => read_video(&c.ws.sample_video(&e.id))?.0,
            ReconstructSource::GroundTruth => c.video(&e.id, "front")?,
        };
        let v_static = c.video(&e.id, "front_static")?;
        let cc = ConstructConfig { seed: c.seed(&format!("construct/{}", e.id)), ..cfg.construct };
        let t = Instant::now();
        let (cloud, rep): (_, ConstructReport) = construct_with_progress(&v, &v_static, &intr, &cc, |stage, it, loss| {
            if it % 500 == 0 {
                info!("construct {} {stage} {it}: loss {loss:.5}", e.id);
            }
        })?;
        info!("constructed {} in {:.1}s", e.id, t.elapsed().as_secs_f64());
        let dir = c.ws.reconstruct_dir(&e.id);
        fs::create_dir_all(&dir).map_err(|err| Error::io(&dir, err))?;
        let cloud_path = dir.join("cloud.orb4d");
        save_cloud(&cloud_path, &cloud)?;
        push_video(&mut outputs, cloud_path);
        let rep_path = dir.join("construct_report.json");
        save_json(&rep_path, &rep)?;
        outputs.push(rep_path);

        let held_out = c.video(&e.id, "random")?.trajectory;
        let sweep = render_sweep(&cloud, &held_out, &intr, &cc.optimize.raster);
        let frozen = frozen_sweep(&cloud, &held_out, c)?;
        for (video, name) in [(&sweep, "render"), (&frozen, "render_static")] {
            let path = dir.join(format!("{name}.orb4d"));
            write_video(&path, video, &c.meta(&e))?;
            push_video(&mut outputs, path);
        }
        let previews = dir.join("previews");
        fs::create_dir_all(&previews).map_err(|err| Error::io(&previews, err))?;
        for &i in &cfg.previews {
            let path = previews.join(format!("frame_{i:02}.png"));
            write_png(&path, &sweep.frames[i])?;
            outputs.push(path);
        }
    }
    Ok(outputs)
}

fn eval_stage(c: &Ctx) -> Result<Vec<PathBuf>> {
    let mut seeds = BTreeMap::new();
    seeds.insert("run".to_string(), c.cfg.seed);
    let mut parts = Vec::new();
    let mut outputs = Vec::new();
    for e in c.kept()? {
        let dir = c.ws.reconstruct_dir(&e.id);
        let target = c.video(&e.id, "random")?;
        let target_static = c.video(&e.id, "random_static")?;
        let (render, _) = read_video(&dir.join("render.orb4d"))?;
        let (render_static, _) = read_video(&dir.join("render_static.orb4d"))?;
        let construct_seed = c.seed(&format!("construct/{}", e.id));
        let meta = RunMeta {
            seeds: [("run".to_string(), c.cfg.seed), ("construct".to_string(), construct_seed)].into(),
            config_hash: c.hash.clone(),
        };
        seeds.insert(format!("construct/{}", e.id), construct_seed);
        let report = evaluate_pair(
            &target,
            &render,
            Some((&target_static, &render_static)),
            &c.cfg.eval.ssim,
            meta,
        )?;
        let path = c.ws.eval_asset_report(&e.id);
        ensure_parent(&path)?;
        fs::write(&path, report.to_json()?).map_err(|err| Error::io(&path, err))?;
        outputs.push(path);
        parts.push((e.id, report));
    }
    let reports: Vec<MetricReport> = parts.iter().map(|(_, r)| r.clone()).collect();
    let merged = MetricReport::merge(
        &reports,
        RunMeta {
            seeds,
            config_hash: c.hash.clone(),
        },
    )?;
    let path = c.ws.eval_report();
    fs::write(&path, merged.to_json()?).map_err(|err| Error::io(&path, err))?;
    outputs.push(path);
    let mut rows: Vec<(&str, &MetricReport)> = vec![("ours", &merged)];
    rows.extend(parts.iter().map(|(id, r)| (id.as_str(), r)));
    let csv = c.ws.eval_csv();
    fs::write(&csv, csv_table(&rows)).map_err(|err| Error::io(&csv, err))?;
    outputs.push(csv);
    info!("held-out psnr {:.3} dB, ssim {:.4}", merged.mean_psnr, merged.mean_ssim);
    Ok(outputs)
}

fn plan_line(c: &Ctx, stage: Stage) -> String {
    let cfg = c.cfg;
    match stage {
        Stage::GenDataset => format!(
            "render {} assets x {} videos of {} frames at {}x{}",
            cfg.dataset.assets,
            VIDEO_KINDS.len(),
            cfg.scene.frames,
            cfg.scene.render.width,
            cfg.scene.render.height
        ),
        Stage::Curate => format!(
            "probe filter (s_high {}, s_low {}) and boundary check (margin {})",
            cfg.curation.s_high, cfg.curation.s_low, cfg.curation.boundary_margin
        ),
        Stage::Train => format!(
            "train dynamic and static denoisers for {} iterations (lr {}, omega {})",
            cfg.diffusion.train.iterations, cfg.diffusion.train.learning_rate, cfg.diffusion.train.omega
        ),
        Stage::Sample => format!(
            "DDIM {} steps with guidance w1 {} w2 {}",
            cfg.diffusion.sample.steps, cfg.diffusion.sample.weights.w1, cfg.diffusion.sample.weights.w2
        ),
        Stage::Reconstruct => format!(
            "construct {} gaussians, {} coarse + {} fine iterations ({:?})",
            cfg.splat.construct.gaussians,
            cfg.splat.construct.coarse_iterations,
            cfg.splat.construct.fine_iterations,
            cfg.splat.construct.stages
        ),
        Stage::Eval => "psnr / ssim / motion against the held-out orbit".to_string(),
    }
}

/// Decide whether `stage` must run. `planned` lists stages an enclosing
/// dry run would already have executed.
fn check_stage(c: &Ctx, stage: Stage, opts: RunOptions, planned: &[Stage]) -> Result<bool> {
    for &up in stage.upstream() {
        if planned.contains(&up) {
            continue;
        }
        if !matches!(c.ws.marker_status(up, &c.hash)?, MarkerStatus::Valid(_)) {
            c.ws.require_upstream(stage, &c.hash)?;
        }
    }
    if opts.force {
        return Ok(true);
    }
    Ok(!matches!(c.ws.marker_status(stage, &c.hash)?, MarkerStatus::Valid(_)))
}

fn execute(c: &Ctx, stage: Stage) -> Result<()> {
    c.ws.invalidate(stage)?;
    let outputs = match stage {
        Stage::GenDataset => gen_dataset(c)?,
        Stage::Curate => curate_stage(c)?,
        Stage::Train => train_stage(c)?,
        Stage::Sample => sample_stage(c)?,
        Stage::Reconstruct => reconstruct_stage(c)?,
        Stage::Eval => eval_stage(c)?,
    };
    c.ws.complete_stage(stage, &c.hash, c.cfg.seed, &outputs)?;
    Ok(())
}

fn run_one(c: &Ctx, stage: Stage, opts: RunOptions, planned: &mut Vec<Stage>, out: &mut dyn std::io::Write) -> Result<StageOutcome> {
    let needed = check_stage(c, stage, opts, planned)?;
    let io = |e| Error::io("<stdout>", e);
    if !needed {
        writeln!(out, "{stage}: complete, skipping (use --force to rerun)").map_err(io)?;
        return Ok(StageOutcome::Skipped);
    }
    if opts.dry_run {
        writeln!(out, "{stage}: planned, {}", plan_line(c, stage)).map_err(io)?;
        planned.push(stage);
        return Ok(StageOutcome::Planned);
    }
    info!("{stage}: {}", plan_line(c, stage));
    execute(c, stage)?;
    writeln!(out, "{stage}: done").map_err(io)?;
    Ok(StageOutcome::Ran)
}

/// Run one stage. Progress lines go to `out`.
pub fn run_stage(
    ws: &Workspace,
    cfg: &PipelineConfig,
    stage: Stage,
    opts: RunOptions,
    out: &mut dyn std::io::Write,
) -> Result<StageOutcome> {
    cfg.validate()?;
    let c = Ctx { ws, cfg, hash: cfg.hash() };
    let _lock = if opts.dry_run { None } else { Some(ws.lock()?) };
    run_one(&c, stage, opts, &mut Vec::new(), out)
}

/// Every stage in order, then the summary table.
pub fn run_e2e(
    ws: &Workspace,
    cfg: &PipelineConfig,
    opts: RunOptions,
    out: &mut dyn std::io::Write,
) -> Result<E2eSummary> {
    cfg.validate()?;
    let c = Ctx { ws, cfg, hash: cfg.hash() };
    let _lock = if opts.dry_run { None } else { Some(ws.lock()?) };
    let mut planned = Vec::new();
    let mut stages = Vec::new();
    for stage in Stage::ALL {
        let t = Instant::now();
        let outcome = run_one(&c, stage, opts, &mut planned, out)?;
        stages.push((stage, outcome, t.elapsed().as_secs_f64()));
    }
    let mut summary = E2eSummary {
        stages,
        assets: cfg.dataset.assets,
        counts: BTreeMap::new(),
        loss_drop: None,
        report: None,
        report_hash: None,
    };
    if !opts.dry_run {
        summary.counts = c.curation()?.counts;
        summary.loss_drop = load_json::<TrainSummary>(&ws.train_report())?.loss_drop();
        let report: MetricReport = load_json(&ws.eval_report())?;
        summary.report_hash = Some(report.hash()?);
        summary.report = Some(report);
    }
    write!(out, "\n{}", summary.table()).map_err(|e| Error::io("<stdout>", e))?;
    Ok(summary)
}
