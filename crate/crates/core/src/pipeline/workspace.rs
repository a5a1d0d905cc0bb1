//! Workspace layout, content-hash stage markers, provenance manifest and the
//! writer lock.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;
const LOCK_FILE: &str = ".lock";

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    GenDataset,
    Curate,
    Train,
    Sample,
    Reconstruct,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::GenDataset,
        Stage::Curate,
        Stage::Train,
        Stage::Sample,
        Stage::Reconstruct,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::GenDataset => "gen-dataset",
            Stage::Curate => "curate",
            Stage::Train => "train",
            Stage::Sample => "sample",
            Stage::Reconstruct => "reconstruct",
            Stage::Eval => "eval",
        }
    }

    /// Stages whose markers must be present before this one runs.
    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::GenDataset => &[],
            Stage::Curate => &[Stage::GenDataset],
            Stage::Train => &[Stage::GenDataset, Stage::Curate],
            Stage::Sample => &[Stage::GenDataset, Stage::Curate, Stage::Train],
            Stage::Reconstruct => &[Stage::GenDataset, Stage::Curate, Stage::Sample],
            Stage::Eval => &[Stage::GenDataset, Stage::Curate, Stage::Reconstruct],
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    /// Relative to the workspace root, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageMarker {
    pub stage: Stage,
    pub config_hash: String,
    pub seed: u64,
    pub outputs: Vec<OutputDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkspaceManifest {
    pub version: u32,
    pub config_hash: String,
    /// Completed stages and the marker file recording each.
    pub stages: BTreeMap<Stage, String>,
    /// Every produced file, keyed by relative path.
    pub files: BTreeMap<String, ProvenanceEntry>,
}

impl WorkspaceManifest {
    fn new(config_hash: &str) -> Self {
        Self {
            version: MANIFEST_VERSION,
            config_hash: config_hash.to_string(),
            stages: BTreeMap::new(),
            files: BTreeMap::new(),
        }
    }
}

/// Marker state of one stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MarkerStatus {
    Missing,
    /// Present and every output verifies.
    Valid(StageMarker),
    /// Present but produced under another config.
    Stale(StageMarker),
    /// Present but an output is missing or its checksum changed.
    Corrupt(String),
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Stage seed derived from the run seed, so stages draw independent streams.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let d = Sha256::digest(format!("{seed}:{label}").as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    write_atomic(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Write via a sibling temp file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn rel(&self, path: &Path) -> String {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        rel.components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/")
    }

    pub fn asset_dir(&self, id: &str) -> PathBuf {
        self.root.join("dataset").join(id)
    }

    pub fn asset_file(&self, id: &str) -> PathBuf {
        self.asset_dir(id).join("asset.json")
    }

    /// `kind` is one of `front`, `front_static`, `random`, `random_static`.
    pub fn video(&self, id: &str, kind: &str) -> PathBuf {
        self.asset_dir(id).join(format!("{kind}.orb4d"))
    }

    pub fn dataset_index(&self) -> PathBuf {
        self.root.join("dataset").join("index.json")
    }

    pub fn curation_report(&self) -> PathBuf {
        self.root.join("curation").join("report.json")
    }

    pub fn model(&self, which: &str) -> PathBuf {
        self.root.join("model").join(format!("{which}.orb4d"))
    }

    pub fn train_report(&self) -> PathBuf {
        self.root.join("model").join("train_report.json")
    }

    pub fn sample_video(&self, id: &str) -> PathBuf {
        self.root.join("samples").join(id).join("sample.orb4d")
    }

    pub fn reconstruct_dir(&self, id: &str) -> PathBuf {
        self.root.join("reconstruct").join(id)
    }

    pub fn eval_report(&self) -> PathBuf {
        self.root.join("eval").join("report.json")
    }

    pub fn eval_asset_report(&self, id: &str) -> PathBuf {
        self.root.join("eval").join(format!("{id}.json"))
    }

    pub fn eval_csv(&self) -> PathBuf {
        self.root.join("eval").join("report.csv")
    }

    pub fn marker_path(&self, stage: Stage) -> PathBuf {
        self.root.join("markers").join(format!("{}.json", stage.name()))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn read_marker(&self, stage: Stage) -> Result<Option<StageMarker>> {
        let p = self.marker_path(stage);
        if !p.exists() {
            return Ok(None);
        }
        read_json(&p).map(Some)
    }

    /// A marker is valid when its config hash matches and every recorded
    /// output still hashes to its checksum.
    pub fn marker_status(&self, stage: Stage, config_hash: &str) -> Result<MarkerStatus> {
        let Some(marker) = self.read_marker(stage)? else {
            return Ok(MarkerStatus::Missing);
        };
        for o in &marker.outputs {
            let p = self.path(&o.path);
            if !p.is_file() {
                return Ok(MarkerStatus::Corrupt(format!("{} is missing", o.path)));
            }
            if sha256_file(&p)? != o.sha256 {
                return Ok(MarkerStatus::Corrupt(format!("{} changed after {stage} completed", o.path)));
            }
        }
        if marker.config_hash != config_hash {
            return Ok(MarkerStatus::Stale(marker));
        }
        Ok(MarkerStatus::Valid(marker))
    }

    /// Fail with a precondition error naming the first absent or invalid
    /// upstream marker.
    pub fn require_upstream(&self, stage: Stage, config_hash: &str) -> Result<()> {
        for &up in stage.upstream() {
            let why = match self.marker_status(up, config_hash)? {
                MarkerStatus::Valid(_) => continue,
                MarkerStatus::Missing => "is absent",
                MarkerStatus::Stale(_) => "was produced with a different config",
                MarkerStatus::Corrupt(_) => "no longer matches its outputs",
            };
            return Err(Error::Precondition(format!(
                "{stage} needs the {up} stage; marker {} {why}",
                self.rel(&self.marker_path(up))
            )));
        }
        Ok(())
    }

    /// Hash `outputs`, write the stage marker and record provenance.
    pub fn complete_stage(&self, stage: Stage, config_hash: &str, seed: u64, outputs: &[PathBuf]) -> Result<StageMarker> {
        let mut digests = Vec::with_capacity(outputs.len());
        for p in outputs {
            digests.push(OutputDigest {
                path: self.rel(p),
                sha256: sha256_file(p)?,
            });
        }
        digests.sort_by(|a, b| a.path.cmp(&b.path));
        let marker = StageMarker {
            stage,
            config_hash: config_hash.to_string(),
            seed,
            outputs: digests,
        };
        let mut manifest = self.manifest()?.unwrap_or_else(|| WorkspaceManifest::new(config_hash));
        manifest.config_hash = config_hash.to_string();
        manifest.files.retain(|_, e| e.command != stage.name());
        for o in &marker.outputs {
            manifest.files.insert(
                o.path.clone(),
                ProvenanceEntry {
                    command: stage.name().to_string(),
                    config_hash: config_hash.to_string(),
                    seed,
                    sha256: o.sha256.clone(),
                },
            );
        }
        manifest.stages.insert(stage, self.rel(&self.marker_path(stage)));
        write_json(&self.marker_path(stage), &marker)?;
        write_json(&self.manifest_path(), &manifest)?;
        Ok(marker)
    }

    /// Remove a stage marker before its outputs are rewritten, so a failed
    /// rerun never leaves a marker over partial outputs.
    pub fn invalidate(&self, stage: Stage) -> Result<()> {
        let p = self.marker_path(stage);
        if p.exists() {
            fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
        if let Some(mut m) = self.manifest()? {
            m.stages.remove(&stage);
            write_json(&self.manifest_path(), &m)?;
        }
        Ok(())
    }

    pub fn manifest(&self) -> Result<Option<WorkspaceManifest>> {
        let p = self.manifest_path();
        if !p.exists() {
            return Ok(None);
        }
        read_json(&p).map(Some)
    }

    /// Take the single-writer lock.
    pub fn lock(&self) -> Result<WorkspaceLock> {
        fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let path = self.root.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(WorkspaceLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

/// Held for the duration of a command; removes the lock file on drop.
#[derive(Debug)]
pub struct WorkspaceLock {
    path: PathBuf,
}

impl Drop for WorkspaceLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub(crate) fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json(path, value)
}

pub(crate) fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    read_json(path)
}
