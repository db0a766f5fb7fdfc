//! Named, ordered parameter collections.
//!
//! Iteration order is insertion order everywhere (binding, gradients,
//! optimizer state, checkpoints), which keeps whole-run behavior
//! reproducible down to the bit.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::NnError;

#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<(), NnError> {
        let name = name.into();
        if self.entries.iter().any(|(n, _)| *n == name) {
            return Err(NnError::DuplicateParam(name));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    /// Total scalar parameter count.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Register every parameter as a trainable leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let vars = self
            .entries
            .iter()
            .map(|(n, t)| (n.clone(), tape.leaf(t.clone())))
            .collect();
        BoundParams { vars }
    }
}

/// Per-pass mapping from parameter names to tape variables.
pub struct BoundParams {
    vars: Vec<(String, Var)>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Var {
        self.vars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .unwrap_or_else(|| panic!("parameter '{name}' not bound"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(n, v)| (n.as_str(), *v))
    }

    /// Collect gradients for every bound parameter in binding order,
    /// substituting zeros for parameters the loss never touched.
    pub fn collect_grads(
        &self,
        tape: &Tape,
        grads: &super::tape::Gradients,
    ) -> Vec<(String, Tensor)> {
        self.vars
            .iter()
            .map(|(n, v)| {
                let shape = tape.value(*v).shape().to_vec();
                (n.clone(), grads.get_or_zeros(*v, &shape))
            })
            .collect()
    }
}
