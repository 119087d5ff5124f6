//! Metric-learning layer: projects document embeddings to linguistic
//! embedding vectors (LEVs) and scores pairs with a distance kernel.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{affine_tanh, affine_tanh_backward};
use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;
use crate::params::ParamSet;

/// Fixed-length stylometric representation of one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lev(pub Vec<f64>);

impl std::ops::Deref for Lev {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Projection weights plus the kernel parameters.
///
/// `gamma` and `alpha` are stored as logarithms so that gradient steps keep
/// them positive; `alpha` is additionally kept at or above one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmlParams {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    /// `[ln gamma, ln alpha]`
    pub log_kernel: [f64; 2],
}

impl DmlParams {
    pub fn zeros(d_lev: usize, d_emb: usize) -> Self {
        Self {
            weight: Matrix::zeros(d_lev, d_emb),
            bias: vec![0.0; d_lev],
            log_kernel: [0.0, 0.0],
        }
    }

    pub fn init(d_lev: usize, d_emb: usize, gain: f64, rng: &mut impl Rng) -> Self {
        let bound = gain * (6.0 / (d_lev + d_emb) as f64).sqrt();
        Self {
            weight: Matrix::from_fn(d_lev, d_emb, |_, _| rng.gen_range(-bound..bound)),
            bias: vec![0.0; d_lev],
            log_kernel: [0.0, 0.0],
        }
    }

    pub fn with_kernel(mut self, gamma: f64, alpha: f64) -> Self {
        self.log_kernel = [gamma.ln(), alpha.ln()];
        self
    }

    pub fn gamma(&self) -> f64 {
        self.log_kernel[0].exp()
    }

    pub fn alpha(&self) -> f64 {
        self.log_kernel[1].exp()
    }

    /// Keep `alpha >= 1`; below one the kernel gradient diverges at `d = 0`.
    pub fn clamp_alpha(&mut self) {
        if self.log_kernel[1] < 0.0 {
            self.log_kernel[1] = 0.0;
        }
    }
}

impl ParamSet for DmlParams {
    fn slices(&self) -> Vec<&[f64]> {
        vec![self.weight.as_slice(), &self.bias, &self.log_kernel]
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.weight.as_mut_slice(),
            &mut self.bias,
            &mut self.log_kernel,
        ]
    }
}

/// Hinge thresholds of the contrastive loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub tau_s: f64,
    pub tau_d: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            tau_s: 0.91,
            tau_d: 0.09,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        let Thresholds { tau_s, tau_d } = *self;
        if 0.0 <= tau_d && tau_d < tau_s && tau_s <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidThresholds { tau_s, tau_d })
        }
    }
}

pub fn project(x: &[f64], p: &DmlParams) -> Result<Lev> {
    check_dim("dml input", p.weight.cols(), x.len())?;
    check_dim("dml bias", p.weight.rows(), p.bias.len())?;
    Ok(Lev(affine_tanh(&p.weight, &p.bias, x)))
}

/// Squared Euclidean distance.
pub fn distance(y1: &[f64], y2: &[f64]) -> Result<f64> {
    check_dim("distance", y1.len(), y2.len())?;
    Ok(y1
        .iter()
        .zip(y2)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum())
}

/// `exp(-gamma · d^alpha)`
pub fn kernel_prob(d: f64, gamma: f64, alpha: f64) -> Result<f64> {
    if !(gamma > 0.0) || !(alpha > 0.0) {
        return Err(Error::InvalidHyperparam(format!(
            "kernel needs gamma > 0 and alpha > 0, got gamma={gamma}, alpha={alpha}"
        )));
    }
    if !(d >= 0.0) {
        return Err(Error::InvalidHyperparam(format!(
            "distance must be non-negative, got {d}"
        )));
    }
    Ok((-gamma * d.powf(alpha)).exp())
}

pub fn dml_loss(p: f64, same_author: bool, th: Thresholds) -> Result<f64> {
    th.validate()?;
    Ok(loss_and_slope(p, same_author, th).0)
}

fn loss_and_slope(p: f64, same_author: bool, th: Thresholds) -> (f64, f64) {
    if same_author {
        let gap = (th.tau_s - p).max(0.0);
        (gap * gap, -2.0 * gap)
    } else {
        let gap = (p - th.tau_d).max(0.0);
        (gap * gap, 2.0 * gap)
    }
}

/// Cached forward state for one pair.
#[derive(Debug, Clone)]
pub struct DmlForward {
    pub y1: Lev,
    pub y2: Lev,
    pub distance: f64,
    pub prob: f64,
    pub loss: f64,
}

pub fn dml_forward(
    x1: &[f64],
    x2: &[f64],
    p: &DmlParams,
    same_author: bool,
    th: Thresholds,
) -> Result<DmlForward> {
    let y1 = project(x1, p)?;
    let y2 = project(x2, p)?;
    let distance = distance(&y1, &y2)?;
    let prob = kernel_prob(distance, p.gamma(), p.alpha())?;
    let (loss, _) = loss_and_slope(prob, same_author, th);
    Ok(DmlForward {
        y1,
        y2,
        distance,
        prob,
        loss,
    })
}

/// Gradients of the contrastive loss for one pair.
///
/// Parameter gradients (projection and log-kernel) are accumulated into
/// `grads`; the gradients with respect to both document embeddings are
/// returned so the caller can continue into the encoder.
pub fn dml_backward(
    x1: &[f64],
    x2: &[f64],
    fwd: &DmlForward,
    p: &DmlParams,
    same_author: bool,
    th: Thresholds,
    grads: &mut DmlParams,
) -> (Vec<f64>, Vec<f64>) {
    let (_, dl_dp) = loss_and_slope(fwd.prob, same_author, th);
    if dl_dp == 0.0 {
        return (vec![0.0; x1.len()], vec![0.0; x2.len()]);
    }
    let (gamma, alpha) = (p.gamma(), p.alpha());
    let d = fwd.distance;
    let prob = fwd.prob;
    let d_alpha = d.powf(alpha);
    // dp/dd = -gamma · alpha · d^(alpha-1) · p
    let dp_dd = if d > 0.0 {
        -gamma * alpha * d.powf(alpha - 1.0) * prob
    } else if alpha == 1.0 {
        -gamma * prob
    } else {
        0.0
    };
    grads.log_kernel[0] += dl_dp * (-gamma * d_alpha * prob);
    if d > 0.0 {
        grads.log_kernel[1] += dl_dp * (-gamma * d_alpha * d.ln() * alpha * prob);
    }
    let dl_dd = dl_dp * dp_dd;
    let g1: Vec<f64> = fwd
        .y1
        .iter()
        .zip(fwd.y2.iter())
        .map(|(a, b)| 2.0 * dl_dd * (a - b))
        .collect();
    let g2: Vec<f64> = g1.iter().map(|g| -g).collect();
    let gx1 = affine_tanh_backward(&p.weight, x1, &fwd.y1, &g1, &mut grads.weight, &mut grads.bias);
    let gx2 = affine_tanh_backward(&p.weight, x2, &fwd.y2, &g2, &mut grads.weight, &mut grads.bias);
    (gx1, gx2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_project_to_zero() {
        let p = DmlParams::zeros(3, 2);
        assert_eq!(project(&[0.4, -0.1], &p).unwrap().0, vec![0.0; 3]);
    }

    #[test]
    fn scalar_projection() {
        let mut p = DmlParams::zeros(1, 1);
        p.weight[(0, 0)] = 1.0;
        let y = project(&[0.5], &p).unwrap();
        assert!((y[0] - 0.46211715726000974).abs() < 1e-15);
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(&[0.3, 0.2], &[0.3, 0.2]).unwrap(), 0.0);
        assert_eq!(distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert!(distance(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(kernel_prob(0.0, 1.0, 1.0).unwrap(), 1.0);
        assert!((kernel_prob(2f64.ln(), 1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((kernel_prob(2.0, 0.5, 2.0).unwrap() - (-2f64).exp()).abs() < 1e-15);
        assert!(matches!(
            kernel_prob(1.0, 0.0, 1.0),
            Err(Error::InvalidHyperparam(_))
        ));
        assert!(kernel_prob(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn loss_examples() {
        let th = Thresholds::default();
        assert_eq!(dml_loss(0.95, true, th).unwrap(), 0.0);
        assert!((dml_loss(0.81, true, th).unwrap() - 0.01).abs() < 1e-15);
        assert!((dml_loss(0.29, false, th).unwrap() - 0.04).abs() < 1e-15);
        let bad = Thresholds {
            tau_s: 0.1,
            tau_d: 0.5,
        };
        assert!(matches!(
            dml_loss(0.5, true, bad),
            Err(Error::InvalidThresholds { .. })
        ));
    }

    #[test]
    fn inactive_hinge_has_zero_gradient() {
        let mut rng = rand::thread_rng();
        let p = DmlParams::init(3, 4, 0.1, &mut rng);
        let x = [0.1, 0.2, -0.1, 0.05];
        let x2 = [0.1, 0.2, -0.1, 0.06];
        let th = Thresholds::default();
        let fwd = dml_forward(&x, &x2, &p, true, th).unwrap();
        assert!(fwd.prob >= th.tau_s);
        let mut g = p.zeros_like();
        let (g1, g2) = dml_backward(&x, &x2, &fwd, &p, true, th, &mut g);
        assert!(g.flatten().iter().all(|v| *v == 0.0));
        assert!(g1.iter().chain(&g2).all(|v| *v == 0.0));
    }

    #[test]
    fn identical_levs_have_zero_embedding_gradient() {
        let mut rng = rand::thread_rng();
        let p = DmlParams::init(3, 4, 1.0, &mut rng).with_kernel(1.0, 1.0);
        let x = [0.3, -0.2, 0.7, 0.1];
        // tau_s = 1 keeps the hinge active at p = 1
        let th = Thresholds {
            tau_s: 1.0,
            tau_d: 0.09,
        };
        let fwd = dml_forward(&x, &x, &p, true, th).unwrap();
        assert_eq!(fwd.distance, 0.0);
        let mut g = p.zeros_like();
        let (g1, g2) = dml_backward(&x, &x, &fwd, &p, true, th, &mut g);
        assert!(g1.iter().chain(&g2).all(|v| *v == 0.0));
        assert!(g.weight.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn clamp_alpha_keeps_it_at_least_one() {
        let mut p = DmlParams::zeros(1, 1).with_kernel(1.0, 0.5);
        p.clamp_alpha();
        assert_eq!(p.alpha(), 1.0);
    }
}
