//! Bayes-factor scoring of LEV pairs under the two-covariance model.
//!
//! A reduced LEV is modelled as `y = s + n` with the author style
//! `s ~ N(mu, B⁻¹)` and the per-document noise `n ~ N(0, W⁻¹)`, where `W` and
//! `B` are the within- and between-author precision matrices. Under the
//! different-author hypothesis the two LEVs are independent draws from
//! `N(mu, B⁻¹ + W⁻¹)`; under the same-author hypothesis they share one `s`.
//!
//! Integrating `s` out in precision form gives, for one or two observations,
//!
//! ```text
//! log p = const + k/2·log|W| + 1/2·log|B| - 1/2·log|Λ| - 1/2·(Σ yᵀWy + μᵀBμ) + 1/2·hᵀΛ⁻¹h
//! Λ = kW + B,   h = W·Σy + Bμ
//! ```
//!
//! with `k` the number of observations. Every determinant and solve goes
//! through a Cholesky factor; no matrix is inverted on the forward path.
//!
//! `W` and `B` are parameterized by lower-triangular factors whose diagonals
//! pass through a softplus, so any parameter value yields SPD matrices.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{affine_tanh, affine_tanh_backward};
use crate::error::{check_dim, Result};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::params::ParamSet;

pub const POSTERIOR_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BfsParams {
    pub reduce_weight: Matrix,
    pub reduce_bias: Vec<f64>,
    pub mu: Vec<f64>,
    /// Raw lower factor of the within-author precision `W`.
    pub within_raw: Matrix,
    /// Raw lower factor of the between-author precision `B`.
    pub between_raw: Matrix,
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn softplus_inv(y: f64) -> f64 {
    y.exp_m1().ln()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl BfsParams {
    /// `mu = 0`, `W = B = I`, reduction weights uniform in `±scale`.
    pub fn init(d_bfs: usize, d_lev: usize, scale: f64, rng: &mut impl Rng) -> Self {
        Self {
            reduce_weight: Matrix::from_fn(d_bfs, d_lev, |_, _| rng.gen_range(-scale..scale)),
            reduce_bias: vec![0.0; d_bfs],
            mu: vec![0.0; d_bfs],
            within_raw: raw_factor_of(&Matrix::identity(d_bfs)),
            between_raw: raw_factor_of(&Matrix::identity(d_bfs)),
        }
    }

    /// Build parameters with explicit precision matrices (identity reduction
    /// is not implied; the reduction layer is zero).
    pub fn from_precisions(
        d_lev: usize,
        mu: Vec<f64>,
        within: &Matrix,
        between: &Matrix,
    ) -> Result<Self> {
        let n = mu.len();
        check_dim("within precision", n, within.rows())?;
        check_dim("between precision", n, between.rows())?;
        let lw = Cholesky::new(within, "within precision")?;
        let lb = Cholesky::new(between, "between precision")?;
        Ok(Self {
            reduce_weight: Matrix::zeros(n, d_lev),
            reduce_bias: vec![0.0; n],
            mu,
            within_raw: raw_factor_of(lw.lower()),
            between_raw: raw_factor_of(lb.lower()),
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn within_factor(&self) -> Matrix {
        factor_from_raw(&self.within_raw)
    }

    pub fn between_factor(&self) -> Matrix {
        factor_from_raw(&self.between_raw)
    }

    pub fn within_precision(&self) -> Matrix {
        self.within_factor().gram_lower()
    }

    pub fn between_precision(&self) -> Matrix {
        self.between_factor().gram_lower()
    }

    /// Check both precisions factorize; used as a post-update assertion.
    pub fn check_spd(&self) -> Result<()> {
        Cholesky::new(&self.within_precision(), "within precision")?;
        Cholesky::new(&self.between_precision(), "between precision")?;
        Ok(())
    }
}

impl ParamSet for BfsParams {
    fn slices(&self) -> Vec<&[f64]> {
        vec![
            self.reduce_weight.as_slice(),
            &self.reduce_bias,
            &self.mu,
            self.within_raw.as_slice(),
            self.between_raw.as_slice(),
        ]
    }
    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.reduce_weight.as_mut_slice(),
            &mut self.reduce_bias,
            &mut self.mu,
            self.within_raw.as_mut_slice(),
            self.between_raw.as_mut_slice(),
        ]
    }
}

fn factor_from_raw(raw: &Matrix) -> Matrix {
    let n = raw.rows();
    Matrix::from_fn(n, n, |r, c| match r.cmp(&c) {
        std::cmp::Ordering::Greater => raw[(r, c)],
        std::cmp::Ordering::Equal => softplus(raw[(r, c)]),
        std::cmp::Ordering::Less => 0.0,
    })
}

fn raw_factor_of(lower: &Matrix) -> Matrix {
    let n = lower.rows();
    Matrix::from_fn(n, n, |r, c| match r.cmp(&c) {
        std::cmp::Ordering::Greater => lower[(r, c)],
        std::cmp::Ordering::Equal => softplus_inv(lower[(r, c)]),
        std::cmp::Ordering::Less => 0.0,
    })
}

pub fn reduce(y: &[f64], p: &BfsParams) -> Result<Vec<f64>> {
    check_dim("bfs reduce input", p.reduce_weight.cols(), y.len())?;
    Ok(affine_tanh(&p.reduce_weight, &p.reduce_bias, y))
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// `(log p(y1, y2 | same author), log p(y1, y2 | different authors))` for
/// explicit precision matrices.
pub fn two_cov_log_likelihoods(
    y1: &[f64],
    y2: &[f64],
    mu: &[f64],
    within: &Matrix,
    between: &Matrix,
) -> Result<(f64, f64)> {
    let n = mu.len();
    check_dim("log-likelihood y1", n, y1.len())?;
    check_dim("log-likelihood y2", n, y2.len())?;
    let chol_w = Cholesky::new(within, "within precision")?;
    let chol_b = Cholesky::new(between, "between precision")?;
    let ld_w = chol_w.log_det();
    let ld_b = chol_b.log_det();
    let lam1 = Cholesky::new(&within.scaled_add(1.0, between, 1.0), "W + B")?;
    let lam2 = Cholesky::new(&within.scaled_add(2.0, between, 1.0), "2W + B")?;
    let b_mu = between.matvec(mu);
    let q_mu = dot(mu, &b_mu);
    let ln2pi = (2.0 * PI).ln();
    let d = n as f64;

    let u = add(y1, y2);
    let h2 = add(&within.matvec(&u), &b_mu);
    let m2 = lam2.solve(&h2);
    let q1 = within.quad_form(y1);
    let q2 = within.quad_form(y2);
    let log_h1 = -d * ln2pi + ld_w + 0.5 * ld_b - 0.5 * lam2.log_det() - 0.5 * ((q1 + q2) + q_mu)
        + 0.5 * dot(&h2, &m2);

    let single = |y: &[f64], q: f64| {
        let h = add(&within.matvec(y), &b_mu);
        let m = lam1.solve(&h);
        -0.5 * d * ln2pi + 0.5 * ld_w + 0.5 * ld_b - 0.5 * lam1.log_det() - 0.5 * (q + q_mu)
            + 0.5 * dot(&h, &m)
    };
    let log_h0 = single(y1, q1) + single(y2, q2);
    Ok((log_h1, log_h0))
}

pub fn log_likelihoods(y1r: &[f64], y2r: &[f64], p: &BfsParams) -> Result<(f64, f64)> {
    two_cov_log_likelihoods(
        y1r,
        y2r,
        &p.mu,
        &p.within_precision(),
        &p.between_precision(),
    )
}

/// Posterior of the same-author hypothesis under equal priors.
pub fn bfs_posterior(llr: f64) -> f64 {
    sigmoid(llr)
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(POSTERIOR_CLAMP, 1.0 - POSTERIOR_CLAMP)
}

/// Binary cross-entropy (negated log-likelihood of the ground truth).
pub fn bfs_loss(posterior: f64, same_author: bool) -> f64 {
    let p = clamp_prob(posterior);
    if same_author {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Derivative of [`bfs_loss`] with respect to the log-likelihood ratio.
pub(crate) fn bce_logit_slope(posterior: f64, target: bool) -> f64 {
    if posterior != clamp_prob(posterior) {
        return 0.0;
    }
    posterior - if target { 1.0 } else { 0.0 }
}

#[derive(Debug, Clone)]
pub struct BfsForward {
    pub y1r: Vec<f64>,
    pub y2r: Vec<f64>,
    pub log_h1: f64,
    pub log_h0: f64,
    pub llr: f64,
    pub posterior: f64,
}

pub fn bfs_forward(y1: &[f64], y2: &[f64], p: &BfsParams) -> Result<BfsForward> {
    let y1r = reduce(y1, p)?;
    let y2r = reduce(y2, p)?;
    let (log_h1, log_h0) = log_likelihoods(&y1r, &y2r, p)?;
    let llr = log_h1 - log_h0;
    Ok(BfsForward {
        y1r,
        y2r,
        log_h1,
        log_h0,
        llr,
        posterior: bfs_posterior(llr),
    })
}

/// Gradient of the log-likelihood ratio with respect to its inputs.
#[derive(Debug, Clone)]
pub struct LlrGrad {
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub mu: Vec<f64>,
    /// Entry-wise gradient with respect to `W` (not symmetrized).
    pub within: Matrix,
    /// Entry-wise gradient with respect to `B` (not symmetrized).
    pub between: Matrix,
}

/// Analytic gradient of `log p(H1) - log p(H0)`.
///
/// The `log|W|` and `yᵀWy` terms cancel between the hypotheses, leaving
///
/// ```text
/// llr = -1/2 log|B| - 1/2 log|Λ2| + log|Λ1| + 1/2 μᵀBμ + 1/2 h2ᵀm2 - 1/2 Σk h1kᵀm1k
/// ```
///
/// with `m = Λ⁻¹h`.
pub fn llr_gradient(
    y1: &[f64],
    y2: &[f64],
    mu: &[f64],
    within: &Matrix,
    between: &Matrix,
) -> Result<LlrGrad> {
    let n = mu.len();
    check_dim("llr gradient y1", n, y1.len())?;
    check_dim("llr gradient y2", n, y2.len())?;
    let chol_b = Cholesky::new(between, "between precision")?;
    let lam1 = Cholesky::new(&within.scaled_add(1.0, between, 1.0), "W + B")?;
    let lam2 = Cholesky::new(&within.scaled_add(2.0, between, 1.0), "2W + B")?;
    let lam1_inv = lam1.inverse();
    let lam2_inv = lam2.inverse();
    let b_inv = chol_b.inverse();
    let b_mu = between.matvec(mu);

    let u = add(y1, y2);
    let m2 = lam2.solve(&add(&within.matvec(&u), &b_mu));
    let m11 = lam1.solve(&add(&within.matvec(y1), &b_mu));
    let m12 = lam1.solve(&add(&within.matvec(y2), &b_mu));

    let mut gw = lam1_inv.scaled_add(1.0, &lam2_inv, -1.0);
    gw.add_outer(&m2, &u, 1.0);
    gw.add_outer(&m2, &m2, -1.0);
    gw.add_outer(&m11, y1, -1.0);
    gw.add_outer(&m11, &m11, 0.5);
    gw.add_outer(&m12, y2, -1.0);
    gw.add_outer(&m12, &m12, 0.5);

    let mut gb = b_inv.scaled_add(-0.5, &lam2_inv, -0.5);
    gb = gb.scaled_add(1.0, &lam1_inv, 1.0);
    gb.add_outer(mu, mu, 0.5);
    gb.add_outer(&m2, mu, 1.0);
    gb.add_outer(&m2, &m2, -0.5);
    gb.add_outer(&m11, mu, -1.0);
    gb.add_outer(&m11, &m11, 0.5);
    gb.add_outer(&m12, mu, -1.0);
    gb.add_outer(&m12, &m12, 0.5);

    let w_m2 = within.matvec(&m2);
    let gy1 = w_m2
        .iter()
        .zip(within.matvec(&m11))
        .map(|(a, b)| a - b)
        .collect();
    let gy2 = w_m2
        .iter()
        .zip(within.matvec(&m12))
        .map(|(a, b)| a - b)
        .collect();
    let m_sum: Vec<f64> = mu
        .iter()
        .zip(&m2)
        .zip(m11.iter().zip(&m12))
        .map(|((a, b), (c, d))| a + b - c - d)
        .collect();
    let gmu = between.matvec(&m_sum);

    Ok(LlrGrad {
        y1: gy1,
        y2: gy2,
        mu: gmu,
        within: gw,
        between: gb,
    })
}

/// Chain an entry-wise gradient `G` w.r.t. `P = L Lᵀ` back to the raw factor.
fn raw_factor_grad(g: &Matrix, raw: &Matrix, lower: &Matrix, scale: f64, out: &mut Matrix) {
    let n = g.rows();
    let sym = g.scaled_add(1.0, &g.transpose(), 1.0);
    let gl = sym.matmul(lower);
    for r in 0..n {
        for c in 0..=r {
            let v = if r == c {
                gl[(r, c)] * sigmoid(raw[(r, c)])
            } else {
                gl[(r, c)]
            };
            out[(r, c)] += scale * v;
        }
    }
}

/// Backward pass of the scoring layer for one pair.
///
/// `upstream` is `dLoss/dllr`. Parameter gradients are accumulated into
/// `grads`; gradients w.r.t. the input LEVs are returned for diagnostics
/// (the trainer stops them).
pub fn bfs_backward(
    y1: &[f64],
    y2: &[f64],
    fwd: &BfsForward,
    p: &BfsParams,
    upstream: f64,
    grads: &mut BfsParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if upstream == 0.0 {
        return Ok((vec![0.0; y1.len()], vec![0.0; y2.len()]));
    }
    let lw = p.within_factor();
    let lb = p.between_factor();
    let g = llr_gradient(&fwd.y1r, &fwd.y2r, &p.mu, &lw.gram_lower(), &lb.gram_lower())?;
    for (m, gm) in grads.mu.iter_mut().zip(&g.mu) {
        *m += upstream * gm;
    }
    raw_factor_grad(&g.within, &p.within_raw, &lw, upstream, &mut grads.within_raw);
    raw_factor_grad(&g.between, &p.between_raw, &lb, upstream, &mut grads.between_raw);
    let up1: Vec<f64> = g.y1.iter().map(|v| upstream * v).collect();
    let up2: Vec<f64> = g.y2.iter().map(|v| upstream * v).collect();
    let gy1 = affine_tanh_backward(
        &p.reduce_weight,
        y1,
        &fwd.y1r,
        &up1,
        &mut grads.reduce_weight,
        &mut grads.reduce_bias,
    );
    let gy2 = affine_tanh_backward(
        &p.reduce_weight,
        y2,
        &fwd.y2r,
        &up2,
        &mut grads.reduce_weight,
        &mut grads.reduce_bias,
    );
    Ok((gy1, gy2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eye1() -> Matrix {
        Matrix::identity(1)
    }

    #[test]
    fn reduce_examples() {
        let mut rng = rand::thread_rng();
        let mut p = BfsParams::init(1, 1, 0.1, &mut rng);
        p.reduce_weight[(0, 0)] = 0.0;
        assert_eq!(reduce(&[0.7], &p).unwrap(), vec![0.0]);
        p.reduce_weight[(0, 0)] = 2.0;
        assert!((reduce(&[0.25], &p).unwrap()[0] - 0.46211715726000974).abs() < 1e-15);
    }

    #[test]
    fn scalar_llr_at_origin() {
        let (h1, h0) = two_cov_log_likelihoods(&[0.0], &[0.0], &[0.0], &eye1(), &eye1()).unwrap();
        let expect = 0.5 * (4.0f64 / 3.0).ln();
        assert!((h1 - h0 - expect).abs() < 1e-12);
        assert!((h1 - h0 - 0.1438).abs() < 1e-4);
    }

    #[test]
    fn scalar_llr_far_apart() {
        let (h1, h0) =
            two_cov_log_likelihoods(&[2.0], &[-2.0], &[0.0], &eye1(), &eye1()).unwrap();
        assert!((h1 - h0 - (0.5 * (4.0f64 / 3.0).ln() - 2.0)).abs() < 1e-12);
    }

    #[test]
    fn scalar_gradient_by_hand() {
        // d llr / d y1 = -y1 + (y1 + y2)/3 + y1/2 for W = B = 1, mu = 0
        for (a, b) in [(0.0, 0.0), (2.0, -2.0), (0.3, 0.9)] {
            let g = llr_gradient(&[a], &[b], &[0.0], &eye1(), &eye1()).unwrap();
            let expect = -a + (a + b) / 3.0 + a / 2.0;
            assert!((g.y1[0] - expect).abs() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn mu_gradient_vanishes_at_mu() {
        let w = Matrix::from_vec(2, 2, vec![2.0, 0.3, 0.3, 1.0]);
        let b = Matrix::from_vec(2, 2, vec![1.5, -0.2, -0.2, 0.8]);
        let mu = [0.2, -0.4];
        let g = llr_gradient(&mu, &mu, &mu, &w, &b).unwrap();
        assert!(g.mu.iter().all(|v| v.abs() < 1e-12), "{:?}", g.mu);
    }

    #[test]
    fn posterior_and_loss_examples() {
        assert_eq!(bfs_posterior(0.0), 0.5);
        assert_eq!(bfs_posterior(1e4), 1.0);
        assert!((bfs_posterior(0.1438) - 0.5359).abs() < 1e-4);
        assert!(bfs_loss(1.0, true) < 1e-11);
        assert!((bfs_loss(0.5, true) - 2f64.ln()).abs() < 1e-15);
        assert!((bfs_loss(0.9, false) + 0.1f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn swap_leaves_likelihoods_unchanged() {
        let w = Matrix::from_vec(2, 2, vec![2.0, 0.3, 0.3, 1.0]);
        let b = Matrix::from_vec(2, 2, vec![1.5, -0.2, -0.2, 0.8]);
        let y1 = [0.3, -0.7];
        let y2 = [-0.1, 0.45];
        let a = two_cov_log_likelihoods(&y1, &y2, &[0.1, 0.0], &w, &b).unwrap();
        let s = two_cov_log_likelihoods(&y2, &y1, &[0.1, 0.0], &w, &b).unwrap();
        assert_eq!(a, s);
    }

    #[test]
    fn init_precisions_are_identity() {
        let mut rng = rand::thread_rng();
        let p = BfsParams::init(3, 5, 0.1, &mut rng);
        for (a, b) in p
            .within_precision()
            .as_slice()
            .iter()
            .zip(Matrix::identity(3).as_slice())
        {
            assert!((a - b).abs() < 1e-12);
        }
        p.check_spd().unwrap();
    }
}
