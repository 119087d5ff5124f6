//! Finite-difference verification of every hand-written backward pass.
//!
//! Each case draws a small random instance (all sizes at most 8), computes
//! the analytic parameter gradient of one component loss and compares it
//! with central differences. The error of a case is
//! `‖analytic − numeric‖ / (‖analytic‖ + ‖numeric‖)`, taken as 0 when both
//! norms vanish.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bfs::{self, BfsParams};
use crate::dml::{self, DmlParams, Thresholds};
use crate::encoder::{self, EncoderParams};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::o2d2::{self, O2d2Params};
use crate::params::ParamSet;
use crate::ual::{self, ConfusionMatrix, UalParams};

pub const FD_STEP: f64 = 1e-5;

pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let denom = norm(analytic) + norm(numeric);
    if denom < 1e-300 {
        0.0
    } else {
        norm(&diff) / denom
    }
}

/// Compare an analytic gradient with central differences of `f` at `x`.
pub fn check_gradient(analytic: &[f64], f: impl Fn(&[f64]) -> f64, x: &[f64]) -> f64 {
    relative_error(analytic, &numeric_gradient(f, x, FD_STEP))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub component: String,
    pub cases: usize,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub components: Vec<ComponentReport>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.components.iter().map(|c| c.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error() < tol
    }
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, a: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-a..a)).collect()
}

fn randomize<P: ParamSet>(p: &mut P, rng: &mut ChaCha8Rng, a: f64) {
    for s in p.slices_mut() {
        s.iter_mut().for_each(|v| *v = rng.gen_range(-a..a));
    }
}

fn dim(rng: &mut ChaCha8Rng) -> usize {
    rng.gen_range(2..=8)
}

/// Encoder and projection through the metric loss.
pub fn dml_case(rng: &mut ChaCha8Rng) -> Result<f64> {
    let th = Thresholds::default();
    let (d_feat, d_emb, d_lev) = (dim(rng), dim(rng), dim(rng));
    loop {
        let mut enc = EncoderParams::zeros(d_emb, d_feat);
        randomize(&mut enc, rng, 1.0);
        let mut dp = DmlParams::zeros(d_lev, d_emb);
        randomize(&mut dp, rng, 1.0);
        dp.log_kernel = [rng.gen_range(-1.5..0.7), rng.gen_range(0.0..0.5)];
        let f1 = uniform_vec(rng, d_feat, 1.0);
        let f2 = uniform_vec(rng, d_feat, 1.0);

        let e1 = encoder::encode(&f1, &enc)?;
        let e2 = encoder::encode(&f2, &enc)?;
        let p = dml::dml_forward(&e1, &e2, &dp, true, th)?.prob;
        // A saturated kernel leaves the loss flat below the resolution of
        // central differences.
        if !(1e-3..=1.0 - 1e-3).contains(&p) {
            continue;
        }
        // Keep away from the hinge kinks.
        let can_same = p < th.tau_s - 1e-3;
        let can_diff = p > th.tau_d + 1e-3;
        let same = match (can_same, can_diff) {
            (true, true) => rng.gen_bool(0.5),
            (true, false) => true,
            (false, true) => false,
            (false, false) => continue,
        };
        let fwd = dml::dml_forward(&e1, &e2, &dp, same, th)?;
        let mut g_enc = enc.zeros_like();
        let mut g_dml = dp.zeros_like();
        let (g1, g2) = dml::dml_backward(&e1, &e2, &fwd, &dp, same, th, &mut g_dml);
        encoder::encode_backward_params(&f1, &e1, &g1, &mut g_enc)?;
        encoder::encode_backward_params(&f2, &e2, &g2, &mut g_enc)?;

        let mut analytic = g_enc.flatten();
        analytic.extend(g_dml.flatten());
        let mut x = enc.flatten();
        let n_enc = x.len();
        x.extend(dp.flatten());
        let loss = |flat: &[f64]| {
            let mut e = enc.clone();
            e.assign_flat(&flat[..n_enc]);
            let mut d = dp.clone();
            d.assign_flat(&flat[n_enc..]);
            let e1 = encoder::encode(&f1, &e).unwrap();
            let e2 = encoder::encode(&f2, &e).unwrap();
            dml::dml_forward(&e1, &e2, &d, same, th).unwrap().loss
        };
        return Ok(check_gradient(&analytic, loss, &x));
    }
}

fn random_lower(rng: &mut ChaCha8Rng, raw: &mut Matrix) {
    let n = raw.rows();
    for r in 0..n {
        for c in 0..r {
            raw[(r, c)] = rng.gen_range(-0.5..0.5);
        }
        raw[(r, r)] = rng.gen_range(-0.5..1.5);
    }
}

/// Scorer parameters through the cross-entropy on the posterior.
pub fn bfs_case(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (d_lev, d_bfs) = (dim(rng), rng.gen_range(1..=8));
    loop {
        let mut p = BfsParams::init(d_bfs, d_lev, 1.0, rng);
        p.reduce_bias = uniform_vec(rng, d_bfs, 0.5);
        p.mu = uniform_vec(rng, d_bfs, 0.5);
        random_lower(rng, &mut p.within_raw);
        random_lower(rng, &mut p.between_raw);
        let y1 = uniform_vec(rng, d_lev, 1.0);
        let y2 = uniform_vec(rng, d_lev, 1.0);
        let same = rng.gen_bool(0.5);
        let fwd = bfs::bfs_forward(&y1, &y2, &p)?;
        if fwd.llr.abs() > 20.0 {
            continue;
        }
        let mut g = p.zeros_like();
        let slope = bfs::bce_logit_slope(fwd.posterior, same);
        bfs::bfs_backward(&y1, &y2, &fwd, &p, slope, &mut g)?;
        let loss = |flat: &[f64]| {
            let mut q = p.clone();
            q.assign_flat(flat);
            let f = bfs::bfs_forward(&y1, &y2, &q).unwrap();
            bfs::bfs_loss(f.posterior, same)
        };
        return Ok(check_gradient(&g.flatten(), loss, &p.flatten()));
    }
}

/// Adaptation layer through its regularized likelihood loss.
pub fn ual_case(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (d_lev, d_ual) = (dim(rng), dim(rng));
    let mut p = UalParams::zeros(d_ual, d_lev, rng.gen_range(0.0..1.0));
    randomize(&mut p, rng, 1.0);
    let y1 = uniform_vec(rng, d_lev, 1.0);
    let y2 = uniform_vec(rng, d_lev, 1.0);
    let p_bfs = rng.gen_range(0.05..0.95);
    let same = rng.gen_bool(0.5);
    let fwd = ual::ual_forward(&y1, &y2, p_bfs, &p, same)?;
    let mut g = p.zeros_like();
    ual::ual_backward(&fwd, p_bfs, &p, same, &mut g);
    let loss = |flat: &[f64]| {
        let mut q = p.clone();
        q.assign_flat(flat);
        ual::ual_forward(&y1, &y2, p_bfs, &q, same).unwrap().loss
    };
    Ok(check_gradient(&g.flatten(), loss, &p.flatten()))
}

/// Detector through the weighted cross-entropy.
pub fn o2d2_case(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (d_lev, d_h1, d_h2) = (dim(rng), dim(rng), dim(rng));
    let mut p = O2d2Params::zeros(2 * d_lev + 4, d_h1, d_h2);
    randomize(&mut p, rng, 1.0);
    let y1 = uniform_vec(rng, d_lev, 1.0);
    let y2 = uniform_vec(rng, d_lev, 1.0);
    let a = rng.gen_range(0.0..1.0);
    let b = rng.gen_range(0.0..1.0);
    let cm = ConfusionMatrix {
        entries: [[a, 1.0 - a], [b, 1.0 - b]],
    };
    let v = o2d2::build_input(&y1, &y2, &cm)?;
    let label = rng.gen_bool(0.5);
    let weight = rng.gen_range(0.5..2.0);
    let fwd = o2d2::o2d2_forward(&v, &p)?;
    let mut g = p.zeros_like();
    o2d2::o2d2_backward(&v, &fwd, &p, label, weight, &mut g);
    let loss = |flat: &[f64]| {
        let mut q = p.clone();
        q.assign_flat(flat);
        weight * o2d2::o2d2_loss(o2d2::o2d2_prob(&v, &q).unwrap(), label)
    };
    Ok(check_gradient(&g.flatten(), loss, &p.flatten()))
}

type CaseFn = fn(&mut ChaCha8Rng) -> Result<f64>;

pub const COMPONENTS: [(&str, CaseFn); 4] = [
    ("dml", dml_case),
    ("bfs", bfs_case),
    ("ual", ual_case),
    ("o2d2", o2d2_case),
];

pub fn grad_check_all(n_cases: usize, seed: u64) -> Result<GradCheckReport> {
    let mut components = Vec::new();
    for (k, (name, case)) in COMPONENTS.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let mut max: f64 = 0.0;
        let mut sum = 0.0;
        for _ in 0..n_cases {
            let e = case(&mut rng)?;
            max = max.max(e);
            sum += e;
        }
        components.push(ComponentReport {
            component: name.to_string(),
            cases: n_cases,
            max_rel_error: max,
            mean_rel_error: sum / n_cases.max(1) as f64,
        });
    }
    Ok(GradCheckReport { components })
}
