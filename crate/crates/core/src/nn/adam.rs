use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are allocated on the first step
/// to mirror the parameter shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    config: AdamConfig,
    t: u64,
    m: Vec<Matrix<T>>,
    v: Vec<Matrix<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    /// Updates `params` in place. Every gradient is checked for finiteness
    /// before any parameter is touched.
    pub fn step(&mut self, params: Vec<&mut Matrix<T>>, grads: &[Matrix<T>], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::InvalidArgument(format!(
                "adam got {} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::shape("adam step", p.shape(), g.shape()));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of parameter {k} has non-finite entries")));
            }
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Matrix::zeros(g.rows(), g.cols())).collect();
            self.v = self.m.clone();
        } else if self.m.len() != grads.len() || self.m.iter().zip(grads).any(|(m, g)| m.shape() != g.shape()) {
            return Err(Error::InvalidArgument("adam state does not match the parameter list".into()));
        }

        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.t as i32;
        let bc1 = T::of(1.0 - beta1.powi(t));
        let bc2 = T::of(1.0 - beta2.powi(t));
        let (b1, b2) = (T::of(beta1), T::of(beta2));
        let (one_b1, one_b2) = (T::of(1.0 - beta1), T::of(1.0 - beta2));
        let (lr, eps) = (T::of(lr), T::of(eps));

        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let iter = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((theta, &g), (m, v)) in iter {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
