use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, PatError, Result};

/// Parameter gradients, one entry per trainable layer, in registry order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSet(pub Vec<Vec<f64>>);

impl GradientSet {
    pub fn flatten(&self) -> Vec<f64> {
        self.0.iter().flatten().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        self.0.iter_mut().flatten().for_each(|v| *v *= factor);
    }
}

/// Extra gradient flowing into a monitored layer's input and parameters,
/// e.g. from a bound-constraint penalty on the physical controls.
#[derive(Debug, Clone)]
pub struct Injection {
    pub input: Option<Array2<f64>>,
    pub params: Option<Array1<f64>>,
}

/// Mutable state threaded through a reverse pass.
#[derive(Debug)]
pub struct BackwardContext<'a> {
    grads: Vec<Option<Array1<f64>>>,
    injections: &'a [Option<Injection>],
}

impl<'a> BackwardContext<'a> {
    pub fn new(n_slots: usize, injections: &'a [Option<Injection>]) -> Self {
        BackwardContext {
            grads: vec![None; n_slots],
            injections,
        }
    }

    pub fn injection(&self, control_slot: usize) -> Option<&Injection> {
        self.injections.get(control_slot).and_then(Option::as_ref)
    }

    pub fn deposit(&mut self, slot: usize, grad: Array1<f64>) -> Result<()> {
        let entry = self
            .grads
            .get_mut(slot)
            .ok_or_else(|| PatError::Usage(format!("parameter slot {slot} out of range")))?;
        match entry {
            Some(existing) => *existing += &grad,
            None => *entry = Some(grad),
        }
        Ok(())
    }

    pub fn finish(self, expected_lens: &[usize]) -> Result<GradientSet> {
        check_len("gradient slots", expected_lens.len(), self.grads.len())?;
        self.grads
            .into_iter()
            .zip(expected_lens)
            .enumerate()
            .map(|(slot, (g, &len))| {
                let g = g.ok_or_else(|| PatError::Usage(format!("no gradient reached parameter slot {slot}")))?;
                check_len("gradient entry", len, g.len())?;
                Ok(g.to_vec())
            })
            .collect::<Result<Vec<_>>>()
            .map(GradientSet)
    }
}

/// A layer that can propagate a cotangent backward through its own tape.
pub trait StackLayer {
    type Tape;

    /// Returns the cotangent at the layer input and deposits parameter
    /// gradients into `ctx`.
    fn backward(&self, tape: &Self::Tape, g_y: Array2<f64>, ctx: &mut BackwardContext<'_>) -> Result<Array2<f64>>;
}

/// Reverse pass over an ordered layer stack, last layer first.
pub fn backprop_stack<L: StackLayer>(
    layers: &[L],
    tapes: &[L::Tape],
    g_final: Array2<f64>,
    ctx: &mut BackwardContext<'_>,
) -> Result<Array2<f64>> {
    if layers.len() != tapes.len() {
        return Err(PatError::Usage(format!(
            "{} layers but {} tapes; run a complete forward pass first",
            layers.len(),
            tapes.len()
        )));
    }
    layers
        .iter()
        .zip(tapes)
        .rev()
        .try_fold(g_final, |g, (layer, tape)| layer.backward(tape, g, ctx))
}
