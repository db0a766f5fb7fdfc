//! Adam optimizer with bias correction.

use super::params::ParamSet;
use super::tensor::Tensor;
use super::NnError;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state: step count plus first/second moment accumulators,
/// one pair per parameter, in parameter order.
pub struct Adam {
    cfg: AdamConfig,
    step: u64,
    moments: Vec<(String, Tensor, Tensor)>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &ParamSet) -> Self {
        let moments = params
            .iter()
            .map(|(n, t)| (n.to_string(), Tensor::zeros(t.shape()), Tensor::zeros(t.shape())))
            .collect();
        Self {
            cfg,
            step: 0,
            moments,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update. `grads` must align with the parameter set
    /// by name and order; a NaN gradient aborts before touching any state.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[(String, Tensor)]) -> Result<(), NnError> {
        if grads.len() != self.moments.len() {
            return Err(NnError::shape(
                "adam_step",
                format!("{} grads for {} params", grads.len(), self.moments.len()),
            ));
        }
        for (name, g) in grads {
            if g.data().iter().any(|v| v.is_nan()) {
                return Err(NnError::PoisonedState(name.clone()));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);

        for (slot, (gname, grad)) in self.moments.iter_mut().zip(grads) {
            let (name, m, v) = slot;
            if name != gname {
                return Err(NnError::UnknownParam(gname.clone()));
            }
            let param = params
                .get_mut(name)
                .ok_or_else(|| NnError::UnknownParam(name.clone()))?;
            if param.shape() != grad.shape() {
                return Err(NnError::shape(
                    "adam_step",
                    format!("param '{}' {:?} vs grad {:?}", name, param.shape(), grad.shape()),
                ));
            }
            let pd = param.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                let g = grad.data()[i];
                md[i] = self.cfg.beta1 * md[i] + (1.0 - self.cfg.beta1) * g;
                vd[i] = self.cfg.beta2 * vd[i] + (1.0 - self.cfg.beta2) * g * g;
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pd[i] -= self.cfg.learning_rate * m_hat / (v_hat.sqrt() + self.cfg.epsilon);
            }
        }
        Ok(())
    }
}
