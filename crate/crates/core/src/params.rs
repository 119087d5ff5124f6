//! Trainable parameter sets and the adaptive-moment optimizer.

use serde::{Deserialize, Serialize};

/// A bundle of trainable tensors that can be visited as flat slices.
///
/// Gradient buffers use the same type as the parameters they belong to, so
/// `zeros_like` doubles as the gradient constructor.
pub trait ParamSet: Clone {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for s in z.slices_mut() {
            s.fill(0.0);
        }
        z
    }

    fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    fn assign_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for s in self.slices_mut() {
            let n = s.len();
            s.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len(), "flat parameter length");
    }

    /// `self += scale · other`
    fn axpy(&mut self, scale: f64, other: &Self) {
        for (d, s) in self.slices_mut().into_iter().zip(other.slices()) {
            for (a, b) in d.iter_mut().zip(s) {
                *a += scale * b;
            }
        }
    }

    fn scale(&mut self, a: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= a);
        }
    }

    fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam state for one parameter set.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new<P: ParamSet>(cfg: AdamConfig, params: &P) -> Self {
        let n = params.num_params();
        Self {
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step<P: ParamSet>(&mut self, params: &mut P, grads: &P) {
        self.t += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t);
        let bc2 = 1.0 - beta2.powi(self.t);
        let mut i = 0;
        for (p, g) in params.slices_mut().into_iter().zip(grads.slices()) {
            for (w, &gw) in p.iter_mut().zip(g) {
                let m = &mut self.m[i];
                let v = &mut self.v[i];
                *m = beta1 * *m + (1.0 - beta1) * gw;
                *v = beta2 * *v + (1.0 - beta2) * gw * gw;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + eps);
                i += 1;
            }
        }
    }
}
