//! Per-run manifest: resolved config, its hash, seeds, code version and a
//! hash of every artifact the run wrote. No timestamps, so re-running the
//! same invocation reproduces the manifest byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub code_version: &'static str,
    pub git_revision: Option<&'static str>,
    pub subcommand: String,
    pub arguments: Vec<String>,
    pub config_sha256: String,
    pub seeds: BTreeMap<&'static str, u64>,
    pub config: RunConfig,
    /// Relative path to SHA-256, for every file the run produced.
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Hash of the resolved config with the output location blanked, so the
/// same experiment written to two directories hashes the same.
pub fn config_hash(cfg: &RunConfig) -> String {
    let cfg = RunConfig { out: PathBuf::new(), ..cfg.clone() };
    sha256_hex(&serde_json::to_vec(&cfg).expect("config serializes"))
}

fn collect(path: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if path.is_dir() {
        for e in fs::read_dir(path)? {
            collect(&e?.path(), out)?;
        }
    } else if path.is_file() {
        out.push(path.to_path_buf());
    }
    Ok(())
}

/// Files and directories written by one run, relative to the output root.
pub struct Artifacts {
    root: PathBuf,
    produced: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf(), produced: Vec::new() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Registers a file or a whole directory tree.
    pub fn add(&mut self, path: impl Into<PathBuf>) {
        self.produced.push(path.into());
    }

    pub fn hashes(&self) -> std::io::Result<BTreeMap<String, String>> {
        let mut files = Vec::new();
        for p in &self.produced {
            collect(p, &mut files)?;
        }
        let mut out = BTreeMap::new();
        for f in files {
            let rel = f.strip_prefix(&self.root).unwrap_or(&f);
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            out.insert(key, sha256_hex(&fs::read(&f)?));
        }
        Ok(out)
    }
}

pub fn seeds(cfg: &RunConfig) -> BTreeMap<&'static str, u64> {
    BTreeMap::from([
        ("folds", cfg.seed),
        ("network", cfg.network.seed),
        ("training", cfg.training.seed),
        ("synthetic", cfg.synthetic.seed),
    ])
}

/// Writes `<out>/manifest_<subcommand>.json`.
pub fn write_manifest(
    subcommand: &str,
    arguments: Vec<String>,
    cfg: &RunConfig,
    artifacts: &Artifacts,
) -> std::io::Result<PathBuf> {
    let m = Manifest {
        tool: "plexseg",
        code_version: CODE_VERSION,
        git_revision: option_env!("PLEXSEG_GIT_REVISION"),
        subcommand: subcommand.to_string(),
        arguments,
        config_sha256: config_hash(cfg),
        seeds: seeds(cfg),
        config: cfg.clone(),
        artifacts: artifacts.hashes()?,
    };
    let path = artifacts.root().join(format!("manifest_{subcommand}.json"));
    let mut body = serde_json::to_string_pretty(&m).expect("manifest serializes");
    body.push('\n');
    fs::write(&path, body)?;
    Ok(path)
}
