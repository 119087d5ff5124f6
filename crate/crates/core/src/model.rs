//! A single verification model: featurizer, encoder, metric-learning layer,
//! Bayes-factor scorer, uncertainty adaptation and (after the second
//! training stage) the out-of-distribution detector.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bfs::{self, BfsParams};
use crate::dml::{self, DmlParams, Lev};
use crate::encoder::{self, Document, EncoderParams, FeatureVector, Featurizer};
use crate::error::Result;
use crate::o2d2::{self, O2d2Params};
use crate::ual::{self, ConfusionMatrix, UalParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelDims {
    pub d_emb: usize,
    pub d_lev: usize,
    pub d_bfs: usize,
    pub d_ual: usize,
    pub d_h1: usize,
    pub d_h2: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            d_emb: 128,
            d_lev: 64,
            d_bfs: 16,
            d_ual: 32,
            d_h1: 64,
            d_h2: 32,
        }
    }
}

/// Initialization scales for the stage-one layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitScales {
    pub encoder_gain: f64,
    pub dml_gain: f64,
    pub bfs_reduce: f64,
}

impl Default for InitScales {
    fn default() -> Self {
        Self {
            encoder_gain: 1.0,
            dml_gain: 1.0,
            bfs_reduce: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verifier {
    pub featurizer: Featurizer,
    pub encoder: EncoderParams,
    pub dml: DmlParams,
    pub bfs: BfsParams,
    pub ual: UalParams,
    pub o2d2: Option<O2d2Params>,
}

/// Every intermediate output for one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairScore {
    pub p_dml: f64,
    pub llr: f64,
    pub p_bfs: f64,
    pub confusion: ConfusionMatrix,
    pub p_ual_h1: f64,
    /// Present once the detector has been trained.
    pub p_h2: Option<f64>,
}

impl Verifier {
    pub fn init(featurizer: Featurizer, dims: ModelDims, scales: InitScales, beta: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = EncoderParams::init(dims.d_emb, featurizer.d_feat, scales.encoder_gain, &mut rng);
        let dml = DmlParams::init(dims.d_lev, dims.d_emb, scales.dml_gain, &mut rng);
        let bfs = BfsParams::init(dims.d_bfs, dims.d_lev, scales.bfs_reduce, &mut rng);
        let ual = UalParams::init(dims.d_ual, dims.d_lev, beta, &mut rng);
        Self {
            featurizer,
            encoder,
            dml,
            bfs,
            ual,
            o2d2: None,
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            d_emb: self.encoder.weight.rows(),
            d_lev: self.dml.weight.rows(),
            d_bfs: self.bfs.dim(),
            d_ual: self.ual.fuse_weight.rows(),
            d_h1: self.o2d2.as_ref().map_or(0, |o| o.w1.rows()),
            d_h2: self.o2d2.as_ref().map_or(0, |o| o.w2.rows()),
        }
    }

    pub fn embed(&self, f: &[f64]) -> Result<Vec<f64>> {
        encoder::encode(f, &self.encoder)
    }

    pub fn lev(&self, f: &[f64]) -> Result<Lev> {
        dml::project(&self.embed(f)?, &self.dml)
    }

    pub fn featurize(&self, doc: &Document) -> Result<FeatureVector> {
        self.featurizer.featurize(doc)
    }

    /// Score a pair from precomputed LEVs.
    pub fn score_levs(&self, y1: &[f64], y2: &[f64]) -> Result<PairScore> {
        let d = dml::distance(y1, y2)?;
        let p_dml = dml::kernel_prob(d, self.dml.gamma(), self.dml.alpha())?;
        let y1r = bfs::reduce(y1, &self.bfs)?;
        let y2r = bfs::reduce(y2, &self.bfs)?;
        let (h1, h0) = bfs::log_likelihoods(&y1r, &y2r, &self.bfs)?;
        let llr = h1 - h0;
        let p_bfs = bfs::bfs_posterior(llr);
        let fused = ual::fuse(y1, y2, &self.ual)?;
        let confusion = ual::confusion(&fused, &self.ual)?;
        let p_ual_h1 = ual::ual_posterior(&confusion, p_bfs)[1];
        let p_h2 = match &self.o2d2 {
            Some(det) => Some(o2d2::o2d2_prob(&o2d2::build_input(y1, y2, &confusion)?, det)?),
            None => None,
        };
        Ok(PairScore {
            p_dml,
            llr,
            p_bfs,
            confusion,
            p_ual_h1,
            p_h2,
        })
    }

    pub fn score_features(&self, f1: &[f64], f2: &[f64]) -> Result<PairScore> {
        self.score_levs(&self.lev(f1)?, &self.lev(f2)?)
    }

    pub fn score_documents(&self, d1: &Document, d2: &Document) -> Result<PairScore> {
        self.score_features(&self.featurize(d1)?, &self.featurize(d2)?)
    }
}
