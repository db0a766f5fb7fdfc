//! Finite-difference verification of reverse-mode gradients.

use super::params::{BoundParams, ParamSet};
use super::tape::{Tape, Var};
use super::NnError;

const FD_STEP: f64 = 1e-4;

/// Per-parameter maximum relative error between analytic and
/// central-finite-difference gradients.
#[derive(Debug)]
pub struct GradCheckReport {
    pub entries: Vec<(String, f64)>,
    pub max_rel: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel.is_finite() && self.max_rel < self.tolerance
    }
}

/// Check `d f / d params` for a deterministic scalar-valued builder `f`.
///
/// `f` is invoked with a fresh tape each time; the analytic gradient comes
/// from one backward pass, the numeric one from central differences with
/// step 1e-4 per component. Relative error per component is
/// `|a - n| / max(|a| + |n|, 1e-6)`.
pub fn grad_check<F>(params: &ParamSet, tolerance: f64, f: F) -> Result<GradCheckReport, NnError>
where
    F: Fn(&mut Tape, &BoundParams) -> Result<Var, NnError>,
{
    let eval = |p: &ParamSet| -> Result<f64, NnError> {
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let y = f(&mut tape, &bound)?;
        if tape.value(y).numel() != 1 {
            return Err(NnError::shape("grad_check", "objective must be scalar"));
        }
        Ok(tape.value(y).item())
    };

    // Analytic pass.
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let y = f(&mut tape, &bound)?;
    let grads = tape.backward(y)?;
    let analytic = bound.collect_grads(&tape, &grads);

    let mut entries = Vec::with_capacity(analytic.len());
    let mut max_rel = 0.0f64;
    for (name, a_grad) in &analytic {
        let mut param_max = 0.0f64;
        for i in 0..a_grad.numel() {
            let mut plus = params.clone();
            plus.get_mut(name).unwrap().data_mut()[i] += FD_STEP;
            let mut minus = params.clone();
            minus.get_mut(name).unwrap().data_mut()[i] -= FD_STEP;
            let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * FD_STEP);
            let a = a_grad.data()[i];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
            param_max = param_max.max(rel);
        }
        max_rel = max_rel.max(param_max);
        entries.push((name.clone(), param_max));
    }

    Ok(GradCheckReport {
        entries,
        max_rel,
        tolerance,
    })
}
