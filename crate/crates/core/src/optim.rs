//! AdamW with decoupled weight decay.

use crate::config::OptimizerConfig;
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// A gradient was not finite and the update was skipped.
    Skipped,
}

#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub cfg: OptimizerConfig,
    /// Skip the step with a warning instead of failing on non-finite gradients.
    pub warn_nonfinite: bool,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: Element> AdamW<T> {
    pub fn new(cfg: OptimizerConfig, store: &ParamStore<T>) -> Self {
        let zeros = || store.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
        Self { cfg, warn_nonfinite: false, m: zeros(), v: zeros(), t: 0 }
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update with `grads` given in parameter order:
    /// `θ ← θ − lr·m̂/(√v̂ + eps) − lr·wd·θ`.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Tensor<T>]) -> Result<StepOutcome> {
        if grads.len() != store.len() || grads.len() != self.m.len() {
            return Err(Error::Usage(format!(
                "optimizer got {} gradients for {} parameters",
                grads.len(),
                store.len()
            )));
        }
        let mut sq = 0.0f64;
        for (id, g) in store.ids().zip(grads) {
            if g.shape() != store.value(id).shape() {
                return Err(Error::shape("adamw_step", store.value(id).shape(), g.shape()));
            }
            if !g.all_finite() {
                let name = store.name(id);
                if self.warn_nonfinite {
                    log::warn!("non-finite gradient for {name}; update skipped");
                    return Ok(StepOutcome::Skipped);
                }
                return Err(Error::NonFinite { op: format!("gradient of {name}") });
            }
            if self.cfg.clip_norm > 0.0 {
                sq += g.data().iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>();
            }
        }
        let clip = if self.cfg.clip_norm > 0.0 && sq.sqrt() > self.cfg.clip_norm {
            T::of(self.cfg.clip_norm / sq.sqrt())
        } else {
            T::one()
        };

        self.t += 1;
        let c = &self.cfg;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let bc1 = T::one() - T::of(c.beta1.powi(self.t as i32));
        let bc2 = T::one() - T::of(c.beta2.powi(self.t as i32));
        let (lr, eps, decay) = (T::of(c.lr), T::of(c.eps), T::of(c.lr * c.weight_decay));
        for (i, id) in store.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let theta = store.value_mut(id).data_mut();
            for (j, &g) in grads[i].data().iter().enumerate() {
                let g = g * clip;
                m[j] = b1 * m[j] + (T::one() - b1) * g;
                v[j] = b2 * v[j] + (T::one() - b2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                let old = theta[j];
                theta[j] = old - lr * m_hat / (v_hat.sqrt() + eps) - decay * old;
            }
        }
        Ok(StepOutcome::Applied)
    }
}
