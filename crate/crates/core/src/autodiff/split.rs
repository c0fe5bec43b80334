use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{check_len, PatError, Result};
use crate::physics::PhysicalSystem;

/// An autodiff node whose forward evaluation and backward Jacobian come from
/// two different functions with identical signatures.
///
/// With `forward_fn` the physical transformation and `backward_fn` a
/// differentiable digital model, this is the node that physics-aware
/// training inserts for every physical layer.
#[derive(Clone)]
pub struct SplitFunction {
    forward_fn: Arc<dyn PhysicalSystem>,
    backward_fn: Arc<dyn PhysicalSystem>,
}

impl std::fmt::Debug for SplitFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SplitFunction")
            .field("forward_fn", &self.forward_fn.name())
            .field("backward_fn", &self.backward_fn.name())
            .finish()
    }
}

impl SplitFunction {
    pub fn new(forward_fn: Arc<dyn PhysicalSystem>, backward_fn: Arc<dyn PhysicalSystem>) -> Result<Self> {
        check_len("split input dim", forward_fn.input_dim(), backward_fn.input_dim())?;
        check_len("split param dim", forward_fn.param_dim(), backward_fn.param_dim())?;
        check_len("split output dim", forward_fn.output_dim(), backward_fn.output_dim())?;
        Ok(SplitFunction { forward_fn, backward_fn })
    }

    /// Ordinary autodiff node: forward and backward use the same function.
    pub fn same(f: Arc<dyn PhysicalSystem>) -> Self {
        SplitFunction {
            forward_fn: f.clone(),
            backward_fn: f,
        }
    }

    pub fn forward_fn(&self) -> &Arc<dyn PhysicalSystem> {
        &self.forward_fn
    }

    pub fn backward_fn(&self) -> &Arc<dyn PhysicalSystem> {
        &self.backward_fn
    }

    pub fn input_dim(&self) -> usize {
        self.forward_fn.input_dim()
    }

    pub fn param_dim(&self) -> usize {
        self.forward_fn.param_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.forward_fn.output_dim()
    }
}

/// Values saved at forward time. Jacobians in the backward pass are always
/// evaluated at `saved_input` / `saved_params`.
#[derive(Debug, Clone, PartialEq)]
pub struct TapeNode {
    pub layer_id: usize,
    pub saved_input: Array2<f64>,
    pub saved_params: Array1<f64>,
    pub saved_output: Array2<f64>,
}

pub fn forward_split(
    node: &SplitFunction,
    layer_id: usize,
    x: ArrayView2<f64>,
    theta: ArrayView1<f64>,
) -> Result<(Array2<f64>, TapeNode)> {
    check_len("split forward input", node.input_dim(), x.ncols())?;
    check_len("split forward params", node.param_dim(), theta.len())?;
    let y = node.forward_fn.forward(x, theta)?;
    check_len("split forward output", node.output_dim(), y.ncols())?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(PatError::NonFinite {
            layer: format!("layer {layer_id} ({})", node.forward_fn.name()),
        });
    }
    let tape = TapeNode {
        layer_id,
        saved_input: x.to_owned(),
        saved_params: theta.to_owned(),
        saved_output: y.clone(),
    };
    Ok((y, tape))
}

/// `(g_x, g_θ) = ((∂f_m/∂x)ᵀ g_y, (∂f_m/∂θ)ᵀ g_y)` at the taped point.
pub fn backward_split(node: &SplitFunction, tape: Option<&TapeNode>, g_y: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let tape = tape.ok_or_else(|| PatError::Usage("backward_split called without a forward tape".into()))?;
    check_len("split cotangent width", node.output_dim(), g_y.ncols())?;
    check_len("split cotangent rows", tape.saved_input.nrows(), g_y.nrows())?;
    node.backward_fn
        .vjp(tape.saved_input.view(), tape.saved_params.view(), g_y)
}
