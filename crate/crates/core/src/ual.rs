//! Uncertainty adaptation: an input-dependent 2×2 confusion matrix that
//! re-calibrates the scoring-layer posterior.
//!
//! Entry `(i, j)` is `p(H_j | Ĥ_i)`, the probability that hypothesis `j` is
//! true given that the scorer assigned `i`. Each row is a softmax over the
//! true hypothesis `j`, so the adapted posterior is a proper distribution.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{affine_tanh, affine_tanh_backward};
use crate::error::{check_dim, Result};
use crate::linalg::{dot, Matrix};
use crate::params::ParamSet;

/// Row index `2·i + j` of the logit layer for entry `p(H_j | Ĥ_i)`.
#[inline]
fn slot(i: usize, j: usize) -> usize {
    2 * i + j
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UalParams {
    pub fuse_weight: Matrix,
    pub fuse_bias: Vec<f64>,
    /// Rows are the vectors `w_ji`, ordered by `2·i + j`.
    pub logit_weight: Matrix,
    pub logit_bias: Vec<f64>,
    /// Weight of the entropy regularizer; not trained.
    pub beta: f64,
}

impl UalParams {
    pub fn zeros(d_ual: usize, d_lev: usize, beta: f64) -> Self {
        Self {
            fuse_weight: Matrix::zeros(d_ual, d_lev),
            fuse_bias: vec![0.0; d_ual],
            logit_weight: Matrix::zeros(4, d_ual),
            logit_bias: vec![0.0; 4],
            beta,
        }
    }

    /// Random fuse/logit weights; the logit biases start the confusion matrix
    /// near the identity so the layer initially passes posteriors through.
    pub fn init(d_ual: usize, d_lev: usize, beta: f64, rng: &mut impl Rng) -> Self {
        let fb = (6.0 / (d_ual + d_lev) as f64).sqrt();
        let lb = 0.1 * (6.0 / (d_ual + 4) as f64).sqrt();
        let diag = 2.0;
        Self {
            fuse_weight: Matrix::from_fn(d_ual, d_lev, |_, _| rng.gen_range(-fb..fb)),
            fuse_bias: vec![0.0; d_ual],
            logit_weight: Matrix::from_fn(4, d_ual, |_, _| rng.gen_range(-lb..lb)),
            logit_bias: vec![diag, 0.0, 0.0, diag],
            beta,
        }
    }
}

impl ParamSet for UalParams {
    fn slices(&self) -> Vec<&[f64]> {
        vec![
            self.fuse_weight.as_slice(),
            &self.fuse_bias,
            self.logit_weight.as_slice(),
            &self.logit_bias,
        ]
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.fuse_weight.as_mut_slice(),
            &mut self.fuse_bias,
            self.logit_weight.as_mut_slice(),
            &mut self.logit_bias,
        ]
    }
}

/// `entries[i][j] = p(H_j | Ĥ_i)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub entries: [[f64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn identity() -> Self {
        Self {
            entries: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    pub fn uniform() -> Self {
        Self {
            entries: [[0.5, 0.5], [0.5, 0.5]],
        }
    }

    /// Row-major flattening: `[p(H0|Ĥ0), p(H1|Ĥ0), p(H0|Ĥ1), p(H1|Ĥ1)]`.
    pub fn flatten(&self) -> [f64; 4] {
        let e = &self.entries;
        [e[0][0], e[0][1], e[1][0], e[1][1]]
    }

    /// `Σ p log p` over all four entries (zero entries contribute nothing).
    pub fn neg_entropy(&self) -> f64 {
        self.flatten()
            .iter()
            .map(|&c| if c > 0.0 { c * c.ln() } else { 0.0 })
            .sum()
    }
}

/// `tanh(W (y1 - y2)∘² + b)`
pub fn fuse(y1: &[f64], y2: &[f64], p: &UalParams) -> Result<Vec<f64>> {
    check_dim("ual fuse", y1.len(), y2.len())?;
    check_dim("ual fuse input", p.fuse_weight.cols(), y1.len())?;
    Ok(affine_tanh(&p.fuse_weight, &p.fuse_bias, &sq_diff(y1, y2)))
}

fn sq_diff(y1: &[f64], y2: &[f64]) -> Vec<f64> {
    y1.iter()
        .zip(y2)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .collect()
}

pub fn confusion(fused: &[f64], p: &UalParams) -> Result<ConfusionMatrix> {
    check_dim("ual confusion input", p.logit_weight.cols(), fused.len())?;
    let z: Vec<f64> = (0..4)
        .map(|k| dot(p.logit_weight.row(k), fused) + p.logit_bias[k])
        .collect();
    Ok(confusion_from_logits(&z))
}

fn confusion_from_logits(z: &[f64]) -> ConfusionMatrix {
    let mut entries = [[0.0; 2]; 2];
    for (i, row) in entries.iter_mut().enumerate() {
        let (a, b) = (z[slot(i, 0)], z[slot(i, 1)]);
        let m = a.max(b);
        let (ea, eb) = ((a - m).exp(), (b - m).exp());
        let s = ea + eb;
        *row = [ea / s, eb / s];
    }
    ConfusionMatrix { entries }
}

/// `p_UAL(H_j) = Σ_i p(H_j | Ĥ_i) · p_BFS(Ĥ_i)`, returned as `[p(H0), p(H1)]`.
pub fn ual_posterior(cm: &ConfusionMatrix, p_bfs_h1: f64) -> [f64; 2] {
    let q = [1.0 - p_bfs_h1, p_bfs_h1];
    let e = &cm.entries;
    [
        e[0][0] * q[0] + e[1][0] * q[1],
        e[0][1] * q[0] + e[1][1] * q[1],
    ]
}

pub fn ual_loss(p_ual: &[f64; 2], cm: &ConfusionMatrix, same_author: bool, beta: f64) -> f64 {
    let t = same_author as usize;
    -p_ual[t].max(crate::bfs::POSTERIOR_CLAMP).ln() + beta * cm.neg_entropy()
}

#[derive(Debug, Clone)]
pub struct UalForward {
    pub sq_diff: Vec<f64>,
    pub fused: Vec<f64>,
    pub confusion: ConfusionMatrix,
    pub posterior: [f64; 2],
    pub loss: f64,
}

pub fn ual_forward(
    y1: &[f64],
    y2: &[f64],
    p_bfs_h1: f64,
    p: &UalParams,
    same_author: bool,
) -> Result<UalForward> {
    let fused = fuse(y1, y2, p)?;
    let cm = confusion(&fused, p)?;
    let posterior = ual_posterior(&cm, p_bfs_h1);
    let loss = ual_loss(&posterior, &cm, same_author, p.beta);
    Ok(UalForward {
        sq_diff: sq_diff(y1, y2),
        fused,
        confusion: cm,
        posterior,
        loss,
    })
}

/// Gradients of the adapted loss with respect to the layer's own parameters.
/// Inputs (LEVs and the scorer posterior) are treated as constants.
pub fn ual_backward(fwd: &UalForward, p_bfs_h1: f64, p: &UalParams, same_author: bool, grads: &mut UalParams) {
    let t = same_author as usize;
    let q = [1.0 - p_bfs_h1, p_bfs_h1];
    let c = &fwd.confusion.entries;
    let p_t = fwd.posterior[t];
    let nll_active = p_t > crate::bfs::POSTERIOR_CLAMP;
    let mut g_fused = vec![0.0; fwd.fused.len()];
    for i in 0..2 {
        let mut g = [0.0; 2];
        for (j, gj) in g.iter_mut().enumerate() {
            if j == t && nll_active {
                *gj -= q[i] / p_t;
            }
            if c[i][j] > 0.0 {
                *gj += p.beta * (c[i][j].ln() + 1.0);
            }
        }
        let mean = c[i][0] * g[0] + c[i][1] * g[1];
        for j in 0..2 {
            let dz = c[i][j] * (g[j] - mean);
            let k = slot(i, j);
            grads.logit_bias[k] += dz;
            let row = p.logit_weight.row(k);
            for (gf, w) in g_fused.iter_mut().zip(row) {
                *gf += dz * w;
            }
            let n = fwd.fused.len();
            let gw = &mut grads.logit_weight.as_mut_slice()[k * n..(k + 1) * n];
            for (gwv, u) in gw.iter_mut().zip(&fwd.fused) {
                *gwv += dz * u;
            }
        }
    }
    affine_tanh_backward(
        &p.fuse_weight,
        &fwd.sq_diff,
        &fwd.fused,
        &g_fused,
        &mut grads.fuse_weight,
        &mut grads.fuse_bias,
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fuse_examples() {
        let mut p = UalParams::zeros(2, 2, 0.1);
        p.fuse_bias = vec![0.3, -0.2];
        let y = [0.4, 0.1];
        let f = fuse(&y, &y, &p).unwrap();
        assert_eq!(f, vec![0.3f64.tanh(), (-0.2f64).tanh()]);

        let mut s = UalParams::zeros(1, 1, 0.1);
        s.fuse_weight[(0, 0)] = 1.0;
        assert!((fuse(&[1.0], &[0.0], &s).unwrap()[0] - 1f64.tanh()).abs() < 1e-15);
        assert_eq!(
            fuse(&[0.2, 0.9], &[-0.5, 0.1], &p).unwrap(),
            fuse(&[-0.5, 0.1], &[0.2, 0.9], &p).unwrap()
        );
    }

    #[test]
    fn zero_logits_give_uniform_matrix() {
        let p = UalParams::zeros(3, 2, 0.1);
        let cm = confusion(&[0.1, 0.2, 0.3], &p).unwrap();
        assert_eq!(cm, ConfusionMatrix::uniform());
    }

    #[test]
    fn logit_softmax_example() {
        let z = [9f64.ln(), 0.0, 0.0, 0.0];
        let cm = confusion_from_logits(&z);
        assert!((cm.entries[0][0] - 0.9).abs() < 1e-15);
        assert!((cm.entries[0][1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn posterior_examples() {
        let p = ual_posterior(&ConfusionMatrix::identity(), 0.37);
        assert_eq!(p[1], 0.37);
        let p = ual_posterior(&ConfusionMatrix::uniform(), 0.91);
        assert_eq!(p[1], 0.5);
        let cm = ConfusionMatrix {
            entries: [[0.9, 0.1], [0.2, 0.8]],
        };
        let p = ual_posterior(&cm, 0.7);
        assert!((p[1] - 0.59).abs() < 1e-15);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn loss_examples() {
        let cm = ConfusionMatrix::uniform();
        let l = ual_loss(&[0.41, 0.59], &cm, true, 0.0);
        assert!((l - 0.5276327420823719).abs() < 1e-12);
        assert!((cm.neg_entropy() + 2.0 * 2f64.ln()).abs() < 1e-15);
        let sharp = ConfusionMatrix {
            entries: [[1.0 - 1e-12, 1e-12], [1e-12, 1.0 - 1e-12]],
        };
        assert!(sharp.neg_entropy() < 0.0 && sharp.neg_entropy() > -1e-9);
    }

    #[test]
    fn regularizer_gradient_is_linear_in_beta() {
        let mut rng = rand::thread_rng();
        let base = UalParams::init(3, 4, 0.0, &mut rng);
        let y1 = [0.3, -0.2, 0.5, 0.1];
        let y2 = [-0.1, 0.4, 0.2, 0.0];
        let grad = |beta: f64| {
            let mut p = base.clone();
            p.beta = beta;
            let fwd = ual_forward(&y1, &y2, 0.6, &p, true).unwrap();
            let mut g = p.zeros_like();
            ual_backward(&fwd, 0.6, &p, true, &mut g);
            g.flatten()
        };
        let g0 = grad(0.0);
        let g1 = grad(1.0);
        let g3 = grad(3.0);
        for ((a, b), c) in g0.iter().zip(&g1).zip(&g3) {
            assert!(((c - a) - 3.0 * (b - a)).abs() < 1e-12);
        }
    }
}
