//! On-disk model bundles.
//!
//! A bundle is a directory holding `manifest.json` and one
//! `member-NN.json` checkpoint per ensemble member. Floats are written with
//! round-trip precision, so a reloaded bundle reproduces every forward
//! output bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::model::Verifier;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    /// Stage-one epoch the parameters were taken from.
    pub epoch: usize,
    pub metrics: BTreeMap<String, f64>,
    pub model: Verifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config_hash: String,
    pub members: Vec<String>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub manifest: Manifest,
    pub members: Vec<Checkpoint>,
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

fn member_file(k: usize) -> String {
    format!("member-{k:02}.json")
}

impl Bundle {
    pub fn new(config_hash: &str, members: Vec<Checkpoint>) -> Self {
        Self {
            manifest: Manifest {
                format_version: FORMAT_VERSION,
                config_hash: config_hash.to_string(),
                members: (0..members.len()).map(member_file).collect(),
                seeds: members.iter().map(|m| m.seed).collect(),
            },
            members,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, m) in self.manifest.members.iter().zip(&self.members) {
            write_json(&dir.join(name), m)?;
        }
        write_json(&dir.join(MANIFEST), &self.manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "bundle format {} is not supported (expected {FORMAT_VERSION})",
                manifest.format_version
            )));
        }
        let members = manifest
            .members
            .iter()
            .map(|name| read_json::<Checkpoint>(&dir.join(name)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { manifest, members })
    }

    pub fn member_paths(&self, dir: &Path) -> Vec<PathBuf> {
        self.manifest.members.iter().map(|m| dir.join(m)).collect()
    }

    pub fn ensemble(&self) -> Result<Ensemble> {
        Ensemble::new(self.members.iter().map(|m| m.model.clone()).collect())
    }
}
