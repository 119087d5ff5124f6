//! Document featurization and the document-embedding layer.
//!
//! Documents are turned into hashed character n-gram profiles: each n-gram's
//! UTF-8 bytes are hashed with 64-bit FNV-1a (offset basis
//! `0xcbf29ce484222325`, prime `0x100000001b3`), the hash is reduced modulo
//! the feature dimension, bucket counts are log-scaled as `ln(1 + count)` and
//! the vector is L2-normalized. The result is identical on every platform.
//!
//! The embedding layer is a single `tanh(W f + b)` map. Anything implementing
//! [`DocumentEncoder`] can stand in for it; downstream components only see
//! the embedding vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;
use crate::params::ParamSet;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub author_id: String,
    pub fandom_id: String,
}

impl Document {
    pub fn token_count(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl std::ops::Deref for FeatureVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Featurizer {
    pub n_grams: Vec<usize>,
    pub d_feat: usize,
    pub min_tokens: usize,
}

impl Default for Featurizer {
    fn default() -> Self {
        Self {
            n_grams: vec![2, 3, 4, 5],
            d_feat: 4096,
            min_tokens: 32,
        }
    }
}

impl Featurizer {
    pub fn validate(&self) -> Result<()> {
        if self.n_grams.is_empty() || self.n_grams.iter().any(|n| !(2..=5).contains(n)) {
            return Err(Error::InvalidConfig(format!(
                "n-gram orders must be a non-empty subset of {{2,3,4,5}}, got {:?}",
                self.n_grams
            )));
        }
        if self.d_feat < 64 {
            return Err(Error::InvalidConfig(format!(
                "feature dimension must be at least 64, got {}",
                self.d_feat
            )));
        }
        Ok(())
    }

    pub fn featurize(&self, doc: &Document) -> Result<FeatureVector> {
        let tokens = doc.token_count();
        if tokens < self.min_tokens {
            return Err(Error::DocumentTooShort {
                id: doc.id.clone(),
                tokens,
                min: self.min_tokens,
            });
        }
        Ok(self.featurize_text(&doc.text))
    }

    /// Featurize raw text without the token-count check.
    pub fn featurize_text(&self, text: &str) -> FeatureVector {
        let mut counts = vec![0u32; self.d_feat];
        let bounds: Vec<usize> = text
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(text.len()))
            .collect();
        let n_chars = bounds.len() - 1;
        let bytes = text.as_bytes();
        for &n in &self.n_grams {
            if n > n_chars {
                continue;
            }
            for start in 0..=n_chars - n {
                let gram = &bytes[bounds[start]..bounds[start + n]];
                let bucket = (fnv1a64(gram) % self.d_feat as u64) as usize;
                counts[bucket] += 1;
            }
        }
        let mut values: Vec<f64> = counts.iter().map(|&c| (c as f64).ln_1p()).collect();
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        FeatureVector(values)
    }
}

/// Maps a feature vector to a fixed-length document embedding.
pub trait DocumentEncoder {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn embed(&self, features: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl EncoderParams {
    pub fn zeros(d_emb: usize, d_feat: usize) -> Self {
        Self {
            weight: Matrix::zeros(d_emb, d_feat),
            bias: vec![0.0; d_emb],
        }
    }

    /// Uniform Glorot-style initialization scaled by `gain`.
    pub fn init(d_emb: usize, d_feat: usize, gain: f64, rng: &mut impl Rng) -> Self {
        let bound = gain * (6.0 / (d_emb + d_feat) as f64).sqrt();
        Self {
            weight: Matrix::from_fn(d_emb, d_feat, |_, _| rng.gen_range(-bound..bound)),
            bias: vec![0.0; d_emb],
        }
    }
}

impl ParamSet for EncoderParams {
    fn slices(&self) -> Vec<&[f64]> {
        vec![self.weight.as_slice(), &self.bias]
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.as_mut_slice(), &mut self.bias]
    }
}

impl DocumentEncoder for EncoderParams {
    fn input_dim(&self) -> usize {
        self.weight.cols()
    }
    fn output_dim(&self) -> usize {
        self.weight.rows()
    }
    fn embed(&self, features: &[f64]) -> Result<Vec<f64>> {
        encode(features, self)
    }
}

/// `tanh(weight · f + bias)`
pub fn encode(f: &[f64], p: &EncoderParams) -> Result<Vec<f64>> {
    check_dim("encode input", p.weight.cols(), f.len())?;
    check_dim("encode bias", p.weight.rows(), p.bias.len())?;
    let nz = nonzeros(f);
    Ok((0..p.weight.rows())
        .map(|r| {
            let row = p.weight.row(r);
            let s: f64 = nz.iter().map(|&j| row[j] * f[j]).sum();
            (s + p.bias[r]).tanh()
        })
        .collect())
}

/// Parameter-only backward of [`encode`] for inputs that need no gradient.
pub fn encode_backward_params(
    f: &[f64],
    output: &[f64],
    upstream: &[f64],
    grads: &mut EncoderParams,
) -> Result<()> {
    check_dim("encode input", grads.weight.cols(), f.len())?;
    check_dim("encode output", grads.weight.rows(), output.len())?;
    check_dim("encode upstream", grads.weight.rows(), upstream.len())?;
    let nz = nonzeros(f);
    let cols = grads.weight.cols();
    let gw = grads.weight.as_mut_slice();
    for (r, (g, y)) in upstream.iter().zip(output).enumerate() {
        let delta = g * (1.0 - y * y);
        if delta == 0.0 {
            continue;
        }
        grads.bias[r] += delta;
        let row = &mut gw[r * cols..(r + 1) * cols];
        for &j in &nz {
            row[j] += delta * f[j];
        }
    }
    Ok(())
}

// Hashed profiles are mostly empty buckets; skipping them leaves every sum
// numerically identical to the dense loop.
fn nonzeros(f: &[f64]) -> Vec<usize> {
    f.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Backward pass of [`encode`]. `output` is the cached forward result.
///
/// Parameter gradients are accumulated into `grads`; the gradient with
/// respect to the input features is returned.
pub fn encode_backward(
    f: &[f64],
    p: &EncoderParams,
    output: &[f64],
    upstream: &[f64],
    grads: &mut EncoderParams,
) -> Result<Vec<f64>> {
    check_dim("encode input", p.weight.cols(), f.len())?;
    check_dim("encode output", p.weight.rows(), output.len())?;
    check_dim("encode upstream", p.weight.rows(), upstream.len())?;
    Ok(affine_tanh_backward(
        &p.weight,
        f,
        output,
        upstream,
        &mut grads.weight,
        &mut grads.bias,
    ))
}

pub(crate) fn affine_tanh(w: &Matrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = w.matvec(x);
    for (o, bi) in out.iter_mut().zip(b) {
        *o = (*o + bi).tanh();
    }
    out
}

/// Shared backward for every `tanh(W x + b)` layer in the model.
pub(crate) fn affine_tanh_backward(
    w: &Matrix,
    x: &[f64],
    y: &[f64],
    upstream: &[f64],
    gw: &mut Matrix,
    gb: &mut [f64],
) -> Vec<f64> {
    let delta: Vec<f64> = upstream
        .iter()
        .zip(y)
        .map(|(g, yi)| g * (1.0 - yi * yi))
        .collect();
    gw.add_outer(&delta, x, 1.0);
    for (b, d) in gb.iter_mut().zip(&delta) {
        *b += d;
    }
    w.tr_matvec(&delta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> Document {
        Document {
            id: "d".into(),
            text: text.into(),
            author_id: "a".into(),
            fandom_id: "f".into(),
        }
    }

    fn relaxed(n_grams: Vec<usize>, d_feat: usize) -> Featurizer {
        Featurizer {
            n_grams,
            d_feat,
            min_tokens: 1,
        }
    }

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn single_distinct_ngram_is_unit_vector() {
        let fz = Featurizer {
            d_feat: 64,
            ..relaxed(vec![2], 64)
        };
        let f = fz.featurize(&doc("aaaa")).unwrap();
        let nz: Vec<_> = f.iter().enumerate().filter(|(_, v)| **v != 0.0).collect();
        assert_eq!(nz.len(), 1);
        assert_eq!(nz[0].0, (fnv1a64(b"aa") % 64) as usize);
        assert!((nz[0].1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn abab_bigram_profile() {
        let fz = relaxed(vec![2], 1024);
        let ab = (fnv1a64(b"ab") % 1024) as usize;
        let ba = (fnv1a64(b"ba") % 1024) as usize;
        assert_ne!(ab, ba);
        let f = fz.featurize(&doc("abab")).unwrap();
        // ln 3 and ln 2, normalized by sqrt(ln²3 + ln²2)
        let norm = (3f64.ln().powi(2) + 2f64.ln().powi(2)).sqrt();
        assert!((f[ab] - 3f64.ln() / norm).abs() < 1e-12);
        assert!((f[ba] - 2f64.ln() / norm).abs() < 1e-12);
        assert!((f[ab] - 0.8457).abs() < 1e-4);
        assert!((f[ba] - 0.5336).abs() < 1e-4);
    }

    #[test]
    fn short_documents_are_rejected() {
        let fz = Featurizer::default();
        let err = fz.featurize(&doc("too short")).unwrap_err();
        assert!(matches!(err, Error::DocumentTooShort { tokens: 2, .. }));
    }

    #[test]
    fn featurizer_validation() {
        assert!(relaxed(vec![1], 128).validate().is_err());
        assert!(relaxed(vec![2, 6], 128).validate().is_err());
        assert!(relaxed(vec![3], 32).validate().is_err());
        assert!(relaxed(vec![2, 3], 64).validate().is_ok());
    }

    #[test]
    fn encode_zero_params_gives_zero() {
        let p = EncoderParams::zeros(4, 8);
        let f = vec![0.3; 8];
        assert_eq!(encode(&f, &p).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn encode_row_of_ones() {
        let mut p = EncoderParams::zeros(2, 3);
        for c in 0..3 {
            p.weight[(0, c)] = 1.0;
        }
        let x = encode(&[1.0, 0.0, 0.0], &p).unwrap();
        assert!((x[0] - 0.7615941559557649).abs() < 1e-15);
        assert_eq!(x[1], 0.0);
    }

    #[test]
    fn encode_dimension_mismatch() {
        let p = EncoderParams::zeros(2, 3);
        assert!(matches!(
            encode(&[1.0, 2.0], &p),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn scalar_backward_by_hand() {
        let p = EncoderParams::zeros(1, 1);
        let out = encode(&[1.0], &p).unwrap();
        let mut g = p.zeros_like();
        let gf = encode_backward(&[1.0], &p, &out, &[1.0], &mut g).unwrap();
        assert_eq!(g.weight[(0, 0)], 1.0);
        assert_eq!(g.bias[0], 1.0);
        assert_eq!(gf[0], 0.0);
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let mut rng = rand::thread_rng();
        let p = EncoderParams::init(3, 5, 1.0, &mut rng);
        let f = [0.1, -0.2, 0.3, 0.0, 0.5];
        let out = encode(&f, &p).unwrap();
        let mut g = p.zeros_like();
        let gf = encode_backward(&f, &p, &out, &[0.0; 3], &mut g).unwrap();
        assert!(g.flatten().iter().all(|v| *v == 0.0));
        assert!(gf.iter().all(|v| *v == 0.0));
    }
}
