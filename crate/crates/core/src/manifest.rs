//! Run manifests: a TOML sidecar written next to every command output that
//! records the fully resolved configuration, seed, input-file hashes, and
//! tool version. Feeding one back through `replay` reproduces the outputs.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileStamp {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub created_unix: u64,
    pub seed: u64,
    /// Every flag of the command with defaults materialized, keyed by its
    /// long CLI name.
    pub args: BTreeMap<String, String>,
    pub inputs: Vec<FileStamp>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        RunManifest {
            tool: "sharp".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            created_unix,
            seed,
            args: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn arg(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.args.insert(key.into(), value.to_string());
        self
    }

    pub fn input(&mut self, role: &str, path: impl AsRef<Path>) -> Result<&mut Self> {
        let path = path.as_ref();
        self.inputs.push(FileStamp {
            role: role.into(),
            path: path.to_string_lossy().into_owned(),
            sha256: file_sha256(path)?,
        });
        Ok(self)
    }

    pub fn output(&mut self, path: impl AsRef<Path>) -> &mut Self {
        self.outputs.push(path.as_ref().to_string_lossy().into_owned());
        self
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::format(format!("manifest serialization: {e}")))?;
        std::fs::write(path.as_ref(), text)
            .map_err(|e| Error::format(format!("{}: {e}", path.as_ref().display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::format(format!("{}: {e}", path.as_ref().display())))?;
        toml::from_str(&text).map_err(|e| Error::format(format!("{}: {e}", path.as_ref().display())))
    }

    /// Confirm every recorded input still hashes the same, so a replay
    /// really reproduces the original run.
    pub fn verify_inputs(&self) -> Result<()> {
        for stamp in &self.inputs {
            let now = file_sha256(Path::new(&stamp.path))?;
            if now != stamp.sha256 {
                return Err(Error::invalid(format!(
                    "input {} ({}) changed since the manifest was written",
                    stamp.path, stamp.role
                )));
            }
        }
        Ok(())
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().fold(String::with_capacity(64), |mut s, b| {
        use std::fmt::Write;
        write!(s, "{b:02x}").expect("write to string");
        s
    }))
}
