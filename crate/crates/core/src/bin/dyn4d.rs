use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dyn4d::pipeline::{run_e2e, run_stage, PipelineConfig, RunOptions, Stage, Workspace};
use dyn4d::Result;

#[derive(Parser)]
#[command(name = "dyn4d", version, about = "Orbital-video 4D generation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render dynamic and static orbital videos for procedural assets.
    GenDataset(Common),
    /// Filter assets by motion and boundary checks.
    Curate(Common),
    /// Train the dynamic and static denoisers on curated assets.
    Train(Common),
    /// Generate orbital videos conditioned on each static video.
    Sample(Common),
    /// Fit a 4D Gaussian cloud per asset and render the held-out orbit.
    Reconstruct(Common),
    /// Score reconstructions against the held-out orbit.
    Eval(Common),
    /// Run every stage in order and print the summary.
    E2e(Common),
    /// Print the default configuration as JSON.
    DefaultConfig,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "DYN4D_WORKSPACE", default_value = "workspace")]
    workspace: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Rerun stages that are already complete.
    #[arg(long)]
    force: bool,
    /// Print the plan without writing anything.
    #[arg(long)]
    dry_run: bool,
}

impl Common {
    fn load(&self) -> Result<(Workspace, PipelineConfig, RunOptions)> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        let opts = RunOptions {
            force: self.force,
            dry_run: self.dry_run,
        };
        Ok((Workspace::new(&self.workspace), cfg, opts))
    }
}

fn run(cli: Cli) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let (stage, common) = match cli.command {
        Command::DefaultConfig => {
            let text = PipelineConfig::default().to_json()?;
            writeln!(out, "{text}").map_err(|e| dyn4d::Error::io("<stdout>", e))?;
            return Ok(());
        }
        Command::E2e(c) => {
            let (ws, cfg, opts) = c.load()?;
            run_e2e(&ws, &cfg, opts, &mut out)?;
            return Ok(());
        }
        Command::GenDataset(c) => (Stage::GenDataset, c),
        Command::Curate(c) => (Stage::Curate, c),
        Command::Train(c) => (Stage::Train, c),
        Command::Sample(c) => (Stage::Sample, c),
        Command::Reconstruct(c) => (Stage::Reconstruct, c),
        Command::Eval(c) => (Stage::Eval, c),
    };
    let (ws, cfg, opts) = common.load()?;
    run_stage(&ws, &cfg, stage, opts, &mut out)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
