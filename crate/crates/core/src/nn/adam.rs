use super::mlp::Mlp;
use crate::error::{Error, Result};
use crate::real::Real;

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid Adam settings {self:?}"
            )))
        }
    }
}

/// Moment estimates and step counter for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Real = f64> {
    pub config: AdamConfig,
    pub m: Mlp<T>,
    pub v: Mlp<T>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &Mlp<T>, config: AdamConfig) -> Self {
        AdamState {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut Mlp<T>, grads: &Mlp<T>) -> Result<()> {
        if params.n_params() != grads.n_params() || params.n_params() != self.m.n_params() {
            return Err(Error::ShapeMismatch {
                expected: params.n_params(),
                got: grads.n_params(),
            });
        }
        self.step += 1;
        let c = self.config;
        let b1 = T::of(c.beta1);
        let b2 = T::of(c.beta2);
        let one = T::one();
        let bc1 = 1.0 - c.beta1.powf(self.step as f64);
        let bc2 = 1.0 - c.beta2.powf(self.step as f64);
        // lr * m_hat / (sqrt(v_hat) + eps) rewritten with the corrections folded in
        let step_size = T::of(c.lr * bc2.sqrt() / bc1);
        let eps_hat = T::of(c.eps * bc2.sqrt());
        for (((p, g), m), v) in params
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
        {
            let update = |p: &mut T, g: &T, m: &mut T, v: &mut T| {
                *m = b1 * *m + (one - b1) * *g;
                *v = b2 * *v + (one - b2) * *g * *g;
                *p -= step_size * *m / (v.sqrt() + eps_hat);
            };
            ndarray::Zip::from(&mut p.w)
                .and(&g.w)
                .and(&mut m.w)
                .and(&mut v.w)
                .for_each(update);
            ndarray::Zip::from(&mut p.b)
                .and(&g.b)
                .and(&mut m.b)
                .and(&mut v.b)
                .for_each(update);
        }
        Ok(())
    }
}
