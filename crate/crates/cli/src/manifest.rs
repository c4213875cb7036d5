use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
}

/// Per-trace details: the damping coefficient, the number of dissipation
/// insertions actually scheduled and, where one was fitted, λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub insertions: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    pub duration_s: f64,
    pub exit_code: i32,
    pub runs: Vec<RunRecord>,
    pub outputs: Vec<OutputRecord>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Writes `manifest.json` into `dir` through a temporary file and a rename.
    pub fn write_atomic(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let target = dir.join(MANIFEST_FILE);
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_error(dir, e))?;
        serde_json::to_writer_pretty(&mut tmp, self)
            .map_err(|e| CliError::Engine(e.to_string()))?;
        tmp.write_all(b"\n").map_err(|e| io_error(dir, e))?;
        tmp.as_file().sync_all().map_err(|e| io_error(dir, e))?;
        tmp.persist(&target)
            .map_err(|e| io_error(&target, e.error))?;
        Ok(target)
    }
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut f = fs::File::open(path).map_err(|e| io_error(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| io_error(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn checksums(dir: &Path, names: &[String]) -> Result<Vec<OutputRecord>, CliError> {
    names
        .iter()
        .map(|n| {
            Ok(OutputRecord {
                path: n.clone(),
                sha256: sha256_file(&dir.join(n))?,
            })
        })
        .collect()
}

pub(crate) fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        fs::write(&p, b"abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest {
            command: "coherent".into(),
            version: "0.1.0".into(),
            config: RunConfig::default(),
            duration_s: 0.5,
            exit_code: 0,
            runs: vec![RunRecord {
                file: "a.csv".into(),
                d: Some(2.0),
                insertions: Some(12),
                lambda: None,
            }],
            outputs: vec![],
        };
        let p = m.write_atomic(dir.path()).unwrap();
        assert_eq!(RunManifest::load(&p).unwrap(), m);
        let leftovers = fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(leftovers, 1);
    }
}
