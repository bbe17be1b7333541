//! Output directory resolution, overwrite protection and the per-command
//! reproducibility record.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use soundlm::Digest;

use crate::Failure;

pub const OUT_ENV: &str = "SOUNDLM_OUT";
pub const DEFAULT_OUT: &str = "soundlm-out";

/// `--out`, then the config's `output_dir`, then `$SOUNDLM_OUT`, then `./soundlm-out`.
pub fn resolve_out(flag: Option<&Path>, config: Option<&Path>) -> PathBuf {
    if let Some(p) = flag.or(config) {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(DEFAULT_OUT),
    }
}

#[derive(Serialize)]
struct Record<'a> {
    command: &'a str,
    version: &'a str,
    argv: &'a [String],
    seed: Option<u64>,
    config_digest: Option<String>,
    inputs: &'a BTreeMap<String, String>,
    outputs: &'a BTreeMap<String, String>,
}

pub struct Session {
    pub dir: PathBuf,
    command: &'static str,
    record: String,
    force: bool,
    argv: Vec<String>,
    pub seed: Option<u64>,
    pub config_digest: Option<Digest>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::runtime("io", format!("{}: {e}", path.display()))
}

pub fn file_digest(path: &Path) -> Result<Digest, Failure> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(Digest::of(&bytes))
}

impl Session {
    pub fn new(command: &'static str, dir: PathBuf, force: bool, argv: &[String]) -> Result<Self, Failure> {
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(Self {
            dir,
            command,
            record: command.to_string(),
            force,
            argv: argv.to_vec(),
            seed: None,
            config_digest: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    /// Distinguishes repeated runs of one command into the same directory.
    pub fn set_record_name(&mut self, name: String) {
        self.record = name;
    }

    fn record_path(&self) -> PathBuf {
        self.dir.join(format!("{}.repro.json", self.record))
    }

    /// Checks every artifact the command will write before any work starts.
    pub fn claim(&self, names: &[&str]) -> Result<Vec<PathBuf>, Failure> {
        let paths: Vec<PathBuf> = names.iter().map(|n| self.dir.join(n)).collect();
        if !self.force {
            for p in paths.iter().chain(std::iter::once(&self.record_path())) {
                if p.exists() {
                    return Err(Failure::runtime(
                        "output",
                        format!("{} exists; pass --force to replace it", p.display()),
                    ));
                }
            }
        }
        Ok(paths)
    }

    pub fn input(&mut self, path: &Path) -> Result<(), Failure> {
        let d = file_digest(path)?;
        self.inputs.insert(path.display().to_string(), d.hex());
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<(), Failure> {
        let d = file_digest(path)?;
        self.outputs.insert(path.display().to_string(), d.hex());
        Ok(())
    }

    pub fn write_text(&mut self, path: &Path, text: &str) -> Result<(), Failure> {
        soundlm::io::write_atomic(path, text.as_bytes()).map_err(|e| Failure::runtime("io", e))?;
        self.output(path)
    }

    pub fn finish(self) -> Result<(), Failure> {
        let record = Record {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            argv: &self.argv,
            seed: self.seed,
            config_digest: self.config_digest.map(|d| d.hex()),
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let text = serde_json::to_string_pretty(&record).expect("record serializes");
        let path = self.record_path();
        soundlm::io::write_atomic(&path, text.as_bytes()).map_err(|e| Failure::runtime("io", e))
    }
}
