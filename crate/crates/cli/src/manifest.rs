//! Run manifests: what was run, with which configuration, on which inputs,
//! producing which files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub cwd: PathBuf,
    pub deterministic: bool,
    pub threads: usize,
    /// Effective configuration after applying flags, as TOML.
    pub config: String,
    pub seeds: Vec<(String, u64)>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub timings: Vec<StageTime>,
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(leaning_core::sha256_hex(&bytes))
}

/// Collects a manifest while a subcommand runs.
pub struct Recorder {
    manifest: RunManifest,
    started: Instant,
}

impl Recorder {
    pub fn new(command: &str, ctx: &crate::Context) -> Self {
        Recorder {
            manifest: RunManifest {
                tool: "leaning".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                argv: ctx.argv.clone(),
                cwd: std::env::current_dir().unwrap_or_default(),
                deterministic: ctx.deterministic,
                threads: ctx.threads,
                config: String::new(),
                seeds: Vec::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                timings: Vec::new(),
            },
            started: Instant::now(),
        }
    }

    pub fn config(&mut self, toml: String) {
        self.manifest.config = toml;
    }

    pub fn seed(&mut self, stage: &str, seed: u64) {
        self.manifest.seeds.push((stage.into(), seed));
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let sha256 = file_sha256(path)?;
        self.manifest.inputs.push(FileDigest {
            path: absolute(path),
            sha256,
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<(), CliError> {
        let sha256 = file_sha256(path)?;
        self.manifest.outputs.push(FileDigest {
            path: absolute(path),
            sha256,
        });
        Ok(())
    }

    /// Run `f` and record its wall time under `stage`.
    pub fn time<R>(&mut self, stage: &str, f: impl FnOnce() -> R) -> R {
        let t = Instant::now();
        let r = f();
        self.manifest.timings.push(StageTime {
            stage: stage.into(),
            seconds: t.elapsed().as_secs_f64(),
        });
        r
    }

    pub fn elapsed(&mut self, stage: &str, since: Instant) {
        self.manifest.timings.push(StageTime {
            stage: stage.into(),
            seconds: since.elapsed().as_secs_f64(),
        });
    }

    pub fn finish(mut self, path: &Path) -> Result<RunManifest, CliError> {
        self.manifest.timings.push(StageTime {
            stage: "total".into(),
            seconds: self.started.elapsed().as_secs_f64(),
        });
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        write_file(path, text.as_bytes())?;
        Ok(self.manifest)
    }
}

fn absolute(path: &Path) -> PathBuf {
    fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::data(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

/// Manifest written next to a single output file.
pub fn manifest_path_for(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

pub fn load(path: &Path) -> Result<RunManifest, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Recompute every recorded digest. Returns the mismatching or missing paths.
pub fn verify(m: &RunManifest) -> Vec<String> {
    let mut bad = Vec::new();
    for f in m.inputs.iter().chain(&m.outputs) {
        match file_sha256(&f.path) {
            Ok(d) if d == f.sha256 => {}
            Ok(_) => bad.push(format!("{}: digest mismatch", f.path.display())),
            Err(_) => bad.push(format!("{}: missing", f.path.display())),
        }
    }
    bad
}
