//! Training configuration and its content hash.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataprep::SubsetQuotas;
use crate::dml::Thresholds;
use crate::encoder::Featurizer;
use crate::error::{Error, Result};
use crate::model::{InitScales, ModelDims};
use crate::params::AdamConfig;

/// Hex SHA-256 prefix (16 digits) of a value's JSON form.
pub fn content_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("value serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without improvement of the development score before stopping.
    pub patience: usize,
    pub optimizer: AdamConfig,
    pub dims: ModelDims,
    pub init: InitScales,
    pub featurizer: Featurizer,
    pub beta: f64,
    pub thresholds: Thresholds,
    /// Train the kernel's gamma and alpha; when false they stay at their
    /// initial values.
    pub train_kernel: bool,
    pub epsilon: f64,
    pub epsilon_grid: Vec<f64>,
    pub o2d2_epochs: usize,
    pub ensemble_size: usize,
    /// Worker threads for ensemble members.
    pub jobs: usize,
    pub train_quotas: SubsetQuotas,
    pub probe_fandom: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 20,
            batch_size: 32,
            patience: 5,
            optimizer: AdamConfig::default(),
            dims: ModelDims::default(),
            init: InitScales::default(),
            featurizer: Featurizer::default(),
            beta: 0.1,
            thresholds: Thresholds::default(),
            train_kernel: true,
            epsilon: 0.1,
            epsilon_grid: vec![0.05, 0.075, 0.1, 0.125, 0.15],
            o2d2_epochs: 200,
            ensemble_size: 5,
            jobs: 1,
            train_quotas: SubsetQuotas::training(),
            probe_fandom: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.patience == 0 {
            return bad("patience must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.ensemble_size == 0 || self.ensemble_size.is_multiple_of(2) {
            return Err(Error::EvenEnsemble(self.ensemble_size));
        }
        if self.jobs == 0 {
            return bad("jobs must be positive".into());
        }
        if !(self.optimizer.learning_rate > 0.0) {
            return bad(format!(
                "learning rate must be positive, got {}",
                self.optimizer.learning_rate
            ));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::InvalidHyperparam(format!("beta must be non-negative, got {}", self.beta)));
        }
        self.thresholds.validate()?;
        self.featurizer.validate()?;
        crate::o2d2::validate_epsilon(self.epsilon)?;
        for &e in &self.epsilon_grid {
            crate::o2d2::validate_epsilon(e)?;
        }
        let d = self.dims;
        if [d.d_emb, d.d_lev, d.d_bfs, d.d_ual, d.d_h1, d.d_h2].contains(&0) {
            return bad(format!("all layer sizes must be positive, got {d:?}"));
        }
        Ok(())
    }

    /// Read a TOML file; missing keys take their defaults.
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn hash(&self) -> String {
        content_hash(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_hash_is_stable() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!(c.hash(), TrainConfig::default().hash());
        assert_eq!(c.hash().len(), 16);
        let other = TrainConfig {
            seed: 1,
            ..Default::default()
        };
        assert_ne!(c.hash(), other.hash());
    }

    #[test]
    fn toml_overrides_defaults() {
        let c: TrainConfig = toml::from_str("epochs = 3\n[dims]\nd_emb = 16\nd_lev = 8\nd_bfs = 4\nd_ual = 4\nd_h1 = 4\nd_h2 = 4\n").unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.dims.d_emb, 16);
        assert_eq!(c.batch_size, 32);
        assert!(toml::from_str::<TrainConfig>("epochz = 3").is_err());
    }

    #[test]
    fn rejects_even_ensemble() {
        let c = TrainConfig {
            ensemble_size: 2,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::EvenEnsemble(2))));
    }
}
