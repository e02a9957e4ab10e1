//! Run manifest: command, effective settings and artifact checksums.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::settings::Settings;

pub const MANIFEST_NAME: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub settings: BTreeMap<String, String>,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Manifest {
    /// Hashes every artifact (paths relative to `dir`) and writes the manifest there.
    pub fn write(
        command: &str,
        settings: &Settings,
        dir: &Path,
        files: &[PathBuf],
    ) -> anyhow::Result<PathBuf> {
        let mut artifacts = Vec::with_capacity(files.len());
        for file in files {
            let data = fs::read(file)?;
            let rel = file.strip_prefix(dir).unwrap_or(file);
            artifacts.push(Artifact {
                path: rel.to_string_lossy().into_owned(),
                bytes: data.len() as u64,
                sha256: sha256_hex(&data),
            });
        }
        artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        let mut settings = settings.map().clone();
        // the output directory is not part of the run's identity
        settings.remove("out");
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            settings,
            artifacts,
        };
        let path = dir.join(MANIFEST_NAME);
        fs::write(&path, toml::to_string(&manifest)?)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        Ok(toml::from_str(&fs::read_to_string(path)?)?)
    }
}
