//! Out-of-distribution detector: a small feed-forward net that predicts
//! whether a trial is undecidable.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bfs::{bce_logit_slope, sigmoid, POSTERIOR_CLAMP};
use crate::encoder::{affine_tanh, affine_tanh_backward};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, Matrix};
use crate::params::ParamSet;
use crate::ual::ConfusionMatrix;

pub const EPSILON_RANGE: (f64, f64) = (0.05, 0.15);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct O2d2Params {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: [f64; 1],
    /// Half-width of the near-0.5 band used for labels; not trained.
    pub epsilon: f64,
}

impl O2d2Params {
    pub fn zeros(d_in: usize, d_h1: usize, d_h2: usize) -> Self {
        Self {
            w1: Matrix::zeros(d_h1, d_in),
            b1: vec![0.0; d_h1],
            w2: Matrix::zeros(d_h2, d_h1),
            b2: vec![0.0; d_h2],
            w3: vec![0.0; d_h2],
            b3: [0.0],
            epsilon: 0.1,
        }
    }

    pub fn init(d_in: usize, d_h1: usize, d_h2: usize, rng: &mut impl Rng) -> Self {
        let glorot = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
        let (g1, g2, g3) = (glorot(d_in, d_h1), glorot(d_h1, d_h2), glorot(d_h2, 1));
        Self {
            w1: Matrix::from_fn(d_h1, d_in, |_, _| rng.gen_range(-g1..g1)),
            b1: vec![0.0; d_h1],
            w2: Matrix::from_fn(d_h2, d_h1, |_, _| rng.gen_range(-g2..g2)),
            b2: vec![0.0; d_h2],
            w3: (0..d_h2).map(|_| rng.gen_range(-g3..g3)).collect(),
            b3: [0.0],
            epsilon: 0.1,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn set_epsilon(&mut self, epsilon: f64) {
        self.epsilon = epsilon.clamp(EPSILON_RANGE.0, EPSILON_RANGE.1);
    }
}

impl ParamSet for O2d2Params {
    fn slices(&self) -> Vec<&[f64]> {
        vec![
            self.w1.as_slice(),
            &self.b1,
            self.w2.as_slice(),
            &self.b2,
            &self.w3,
            &self.b3,
        ]
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ]
    }
}

pub fn validate_epsilon(epsilon: f64) -> Result<()> {
    if (EPSILON_RANGE.0..=EPSILON_RANGE.1).contains(&epsilon) {
        Ok(())
    } else {
        Err(Error::InvalidEpsilon(epsilon))
    }
}

/// 1 when the trial was misclassified or its adapted posterior lies within
/// `epsilon` of 0.5.
pub fn o2d2_label(same_author: bool, predicted_same: bool, p_ual_h1: f64, epsilon: f64) -> Result<bool> {
    validate_epsilon(epsilon)?;
    Ok(same_author != predicted_same || (p_ual_h1 - 0.5).abs() <= epsilon)
}

/// `[(y1 - y2)∘², (y1 + y2)∘², flattened confusion matrix]`
pub fn build_input(y1: &[f64], y2: &[f64], cm: &ConfusionMatrix) -> Result<Vec<f64>> {
    check_dim("o2d2 input", y1.len(), y2.len())?;
    let mut v = Vec::with_capacity(2 * y1.len() + 4);
    v.extend(y1.iter().zip(y2).map(|(a, b)| {
        let d = a - b;
        d * d
    }));
    v.extend(y1.iter().zip(y2).map(|(a, b)| {
        let s = a + b;
        s * s
    }));
    v.extend_from_slice(&cm.flatten());
    Ok(v)
}

#[derive(Debug, Clone)]
pub struct O2d2Forward {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub prob: f64,
}

pub fn o2d2_forward(v: &[f64], p: &O2d2Params) -> Result<O2d2Forward> {
    check_dim("o2d2 forward", p.w1.cols(), v.len())?;
    let h1 = affine_tanh(&p.w1, &p.b1, v);
    let h2 = affine_tanh(&p.w2, &p.b2, &h1);
    let prob = sigmoid(dot(&p.w3, &h2) + p.b3[0]);
    Ok(O2d2Forward { h1, h2, prob })
}

/// Probability that the trial is undecidable.
pub fn o2d2_prob(v: &[f64], p: &O2d2Params) -> Result<f64> {
    Ok(o2d2_forward(v, p)?.prob)
}

/// Binary cross-entropy between the detector output and its label.
pub fn o2d2_loss(prob: f64, label: bool) -> f64 {
    crate::bfs::bfs_loss(prob.clamp(POSTERIOR_CLAMP, 1.0 - POSTERIOR_CLAMP), label)
}

/// Accumulate `weight · dLoss/dΓ` into `grads`.
pub fn o2d2_backward(
    v: &[f64],
    fwd: &O2d2Forward,
    p: &O2d2Params,
    label: bool,
    weight: f64,
    grads: &mut O2d2Params,
) {
    let dz = weight * bce_logit_slope(fwd.prob, label);
    if dz == 0.0 {
        return;
    }
    grads.b3[0] += dz;
    for (g, h) in grads.w3.iter_mut().zip(&fwd.h2) {
        *g += dz * h;
    }
    let up2: Vec<f64> = p.w3.iter().map(|w| dz * w).collect();
    let up1 = affine_tanh_backward(&p.w2, &fwd.h1, &fwd.h2, &up2, &mut grads.w2, &mut grads.b2);
    affine_tanh_backward(&p.w1, v, &fwd.h1, &up1, &mut grads.w1, &mut grads.b1);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_examples() {
        assert!(!o2d2_label(true, true, 0.9, 0.1).unwrap());
        assert!(o2d2_label(true, false, 0.99, 0.1).unwrap());
        assert!(o2d2_label(true, true, 0.55, 0.1).unwrap());
        assert!(matches!(
            o2d2_label(true, true, 0.55, 0.2),
            Err(Error::InvalidEpsilon(_))
        ));
        assert!(o2d2_label(true, true, 0.5, 0.0).is_err());
    }

    #[test]
    fn labels_are_monotone_in_epsilon() {
        let grid = [0.05, 0.075, 0.1, 0.125, 0.15];
        for k in 0..=100 {
            let p = k as f64 / 100.0;
            let labels: Vec<bool> = grid
                .iter()
                .map(|&e| o2d2_label(true, p > 0.5, p, e).unwrap())
                .collect();
            for w in labels.windows(2) {
                assert!(w[1] || !w[0]);
            }
        }
    }

    #[test]
    fn input_layout() {
        let v = build_input(&[1.0, 0.0], &[0.0, 1.0], &ConfusionMatrix::uniform()).unwrap();
        assert_eq!(v, vec![1.0, 1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.5]);
        let same = build_input(&[0.3, 0.2], &[0.3, 0.2], &ConfusionMatrix::uniform()).unwrap();
        assert_eq!(&same[..2], &[0.0, 0.0]);
        let a = build_input(&[0.1, -0.7], &[0.4, 0.2], &ConfusionMatrix::identity()).unwrap();
        let b = build_input(&[0.4, 0.2], &[0.1, -0.7], &ConfusionMatrix::identity()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_examples() {
        let p = O2d2Params::zeros(8, 4, 3);
        assert_eq!(o2d2_prob(&[0.2; 8], &p).unwrap(), 0.5);

        let mut s = O2d2Params::zeros(1, 1, 1);
        s.w1[(0, 0)] = 1.0;
        s.w2[(0, 0)] = 1.0;
        s.w3[0] = 1.0;
        let prob = o2d2_prob(&[1.0], &s).unwrap();
        assert!((prob - sigmoid(1f64.tanh().tanh())).abs() < 1e-15);
        assert!((prob - 0.6552).abs() < 1e-4);
    }

    #[test]
    fn loss_examples() {
        assert!(o2d2_loss(1.0, true) < 1e-11);
        assert!((o2d2_loss(0.5, true) - 2f64.ln()).abs() < 1e-15);
        assert!((o2d2_loss(0.25, false) + 0.75f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn epsilon_is_clamped() {
        let mut p = O2d2Params::zeros(4, 2, 2);
        p.set_epsilon(0.4);
        assert_eq!(p.epsilon, 0.15);
        p.set_epsilon(0.0);
        assert_eq!(p.epsilon, 0.05);
    }
}
