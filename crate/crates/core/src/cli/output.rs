//! Artifact writing and run manifests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ModelConfig;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ERROR_FILE: &str = "error.json";

/// Fixed 17-significant-digit float formatting for every CSV we write.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Write through a temporary sibling and rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    let tmp = path.with_file_name(name);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Rows to CSV bytes.
pub fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Machine-readable failure report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

impl ErrorReport {
    pub fn from_error(e: &Error) -> Self {
        let dbg = format!("{e:?}");
        let kind = dbg
            .split(|c: char| !c.is_alphanumeric())
            .next()
            .unwrap_or("Error")
            .to_string();
        ErrorReport {
            kind,
            message: e.to_string(),
            exit_code: exit_code(e),
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: Option<ModelConfig>,
    pub inputs: Vec<InputDigest>,
    pub seed: Option<u64>,
    pub started: String,
    pub finished: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorReport>,
    pub artifacts: Vec<String>,
    pub version: String,
}

/// One command invocation writing into an output directory.
pub struct Run {
    pub out: PathBuf,
    pub manifest: RunManifest,
}

impl Run {
    pub fn start(command: &str, out: &Path) -> Result<Self> {
        std::fs::create_dir_all(out)?;
        Ok(Run {
            out: out.to_path_buf(),
            manifest: RunManifest {
                command: command.to_string(),
                args: std::env::args().skip(1).collect(),
                config: None,
                inputs: Vec::new(),
                seed: None,
                started: chrono::Utc::now().to_rfc3339(),
                finished: String::new(),
                status: "running".into(),
                error: None,
                artifacts: Vec::new(),
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let sha256 = sha256_file(path)?;
        self.manifest.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn set_config(&mut self, config: &ModelConfig) {
        self.manifest.seed = Some(config.seed);
        self.manifest.config = Some(config.clone());
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Register an artifact written by other means.
    pub fn artifact(&mut self, name: &str) {
        if !self.manifest.artifacts.iter().any(|a| a == name) {
            self.manifest.artifacts.push(name.to_string());
        }
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        write_atomic(&path, bytes)?;
        self.artifact(name);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    /// Record the outcome, write the manifest (and the error report), return the exit code.
    pub fn finish(mut self, result: Result<()>) -> i32 {
        let code = match &result {
            Ok(()) => {
                self.manifest.status = "ok".into();
                0
            }
            Err(e) => {
                let report = ErrorReport::from_error(e);
                eprintln!("{}", serde_json::to_string(&report).unwrap_or_default());
                let _ = self.write_json(ERROR_FILE, &report);
                self.manifest.status = "error".into();
                let code = report.exit_code;
                self.manifest.error = Some(report);
                code
            }
        };
        self.manifest.finished = chrono::Utc::now().to_rfc3339();
        let manifest = self.manifest.clone();
        if let Err(e) = self.write_json(MANIFEST_FILE, &manifest) {
            eprintln!("could not write manifest: {e}");
            return if code == 0 { 2 } else { code };
        }
        code
    }
}
