//! Artifact directories and run manifests.
//!
//! Every stage owns `<root>/<stage>/` and rewrites it from scratch. Its
//! `manifest.json` is written last, through a rename, and lists the resolved
//! config, input and output digests and the stage's wall-clock time. Stages
//! find their predecessors' files through those manifests and check the
//! digests before reading.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use exportshock::util::sha256_hex;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::Failure;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Generate,
    Featurize,
    Descriptives,
    Train,
    Evaluate,
    Superlearner,
    Effects,
    Placebo,
    Tree,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Featurize => "featurize",
            Stage::Descriptives => "descriptives",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Superlearner => "superlearner",
            Stage::Effects => "effects",
            Stage::Placebo => "placebo",
            Stage::Tree => "tree",
            Stage::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the artifact root for artifacts, as given for external
    /// inputs.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_clock_seconds: f64,
}

pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn new(root: PathBuf) -> Self {
        Store { root }
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.root.join(stage.name())
    }

    /// Loads the manifest of `stage`, failing with exit code 2 when the stage
    /// has not run.
    pub fn require(&self, stage: Stage, needed_by: Stage, config: &Config) -> Result<Upstream> {
        let path = self.stage_dir(stage).join(MANIFEST);
        if !path.is_file() {
            return Err(Failure::MissingStage { stage: stage.name(), needed_by: needed_by.name() }.into());
        }
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Failure::Data(format!("{} is not a valid manifest: {e}", path.display())))?;
        if manifest.config_hash != config.hash() {
            log::warn!(
                "`{}` ran with a different configuration (hash {}); its artifacts may be stale",
                stage.name(),
                &manifest.config_hash[..12]
            );
        }
        Ok(Upstream { root: self.root.clone(), manifest })
    }

    /// Clears the stage's directory and starts recording.
    pub fn begin(&self, stage: Stage) -> Result<StageRun> {
        let dir = self.stage_dir(stage);
        if dir.exists() {
            fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
        }
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        log::info!("{}: writing to {}", stage.name(), dir.display());
        Ok(StageRun { stage, root: self.root.clone(), dir, started: Instant::now(), inputs: Vec::new(), outputs: Vec::new() })
    }
}

/// A finished predecessor.
pub struct Upstream {
    root: PathBuf,
    pub manifest: Manifest,
}

impl Upstream {
    /// Path of the output named `name`, after checking its digest.
    pub fn output(&self, name: &str) -> Result<PathBuf> {
        let rel = format!("{}/{name}", self.manifest.stage);
        let entry = self.manifest.outputs.iter().find(|o| o.path == rel).ok_or_else(|| {
            Failure::Data(format!("manifest of `{}` lists no output `{name}`", self.manifest.stage))
        })?;
        let path = self.root.join(&entry.path);
        verify(&path, entry)?;
        Ok(path)
    }

    pub fn input(&self, index: usize) -> Result<(PathBuf, &FileDigest)> {
        let entry = self
            .manifest
            .inputs
            .get(index)
            .ok_or_else(|| Failure::Data(format!("manifest of `{}` lists no input {index}", self.manifest.stage)))?;
        let path = PathBuf::from(&entry.path);
        let path = if path.is_absolute() { path } else { self.root.join(path) };
        verify(&path, entry)?;
        Ok((path, entry))
    }
}

fn verify(path: &Path, entry: &FileDigest) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
    if sha256_hex(&bytes) != entry.sha256 {
        return Err(Failure::Data(format!("{} changed since it was written (digest mismatch)", path.display())).into());
    }
    Ok(())
}

pub struct StageRun {
    stage: Stage,
    root: PathBuf,
    dir: PathBuf,
    started: Instant,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

impl StageRun {
    /// Writes an output file, creating subdirectories as needed.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(FileDigest {
            path: format!("{}/{name}", self.stage.name()),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Records a file read by this stage.
    pub fn input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
        let shown = match path.strip_prefix(&self.root) {
            Ok(rel) => rel.display().to_string(),
            Err(_) => fs::canonicalize(path)?.display().to_string(),
        };
        self.inputs.push(FileDigest { path: shown, sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 });
        Ok(bytes)
    }

    /// Writes the manifest atomically and returns it.
    pub fn finish(self, config: &Config) -> Result<Manifest> {
        let manifest = Manifest {
            stage: self.stage.name().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            seed: config.seed,
            config: config.canonical_json(),
            inputs: self.inputs,
            outputs: self.outputs,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let tmp = self.dir.join(format!("{MANIFEST}.tmp"));
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&tmp, text)?;
        fs::rename(&tmp, self.dir.join(MANIFEST))?;
        log::info!("{}: done in {:.1}s", manifest.stage, manifest.wall_clock_seconds);
        Ok(manifest)
    }
}
