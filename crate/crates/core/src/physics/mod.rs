//! Simulated physical systems.
//!
//! Everything that can sit inside a physical layer implements
//! [`PhysicalSystem`]: a map `(x, θ) → y` over batches. Systems that are
//! differentiable (the surrogates here, fitted digital models) also provide
//! an exact VJP; real hardware would not, and the default `vjp` reports
//! that.

mod noise;
mod plate;
mod powerlaw;
mod shg;

pub use noise::{MixingFn, NoiseSource, NoiseWrapper};
pub use plate::{plate_forward, PlateConvolution};
pub use powerlaw::{powerlaw_apply, PowerLawPair, Which};
pub use shg::{shg_forward, ShgSurrogate};

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::autodiff::ops::{self, Chain};
use crate::error::{check_len, PatError, Result};

pub trait PhysicalSystem: Send + Sync {
    fn name(&self) -> &str;
    fn input_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    /// Batch forward: one output row per input row, parameters shared.
    fn forward(&self, x: ArrayView2<f64>, theta: ArrayView1<f64>) -> Result<Array2<f64>>;

    /// `((∂f/∂x)ᵀ g_y, Σ_rows (∂f/∂θ)ᵀ g_y)` at `(x, θ)`.
    fn vjp(&self, _x: ArrayView2<f64>, _theta: ArrayView1<f64>, _g_y: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
        Err(PatError::Unsupported(self.name().to_string()))
    }

    /// Single-sample convenience wrapper around [`PhysicalSystem::forward`].
    fn apply(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        check_len("input", self.input_dim(), x.len())?;
        let xb = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        let y = self.forward(xb, ArrayView1::from(theta))?;
        Ok(y.row(0).to_vec())
    }
}

impl std::fmt::Debug for dyn PhysicalSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}({}+{}→{})",
            self.name(),
            self.input_dim(),
            self.param_dim(),
            self.output_dim()
        )
    }
}

/// A differentiable map `f(concat(x, θ))` described by a primitive chain.
#[derive(Debug, Clone)]
pub struct MapSystem {
    name: String,
    input_dim: usize,
    param_dim: usize,
    output_dim: usize,
    chain: Chain,
}

impl MapSystem {
    pub fn new(name: impl Into<String>, input_dim: usize, param_dim: usize, chain: Chain) -> Result<Self> {
        let output_dim = chain.output_dim(input_dim + param_dim)?;
        Ok(MapSystem {
            name: name.into(),
            input_dim,
            param_dim,
            output_dim,
            chain,
        })
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn into_arc(self) -> Arc<dyn PhysicalSystem> {
        Arc::new(self)
    }
}

impl PhysicalSystem for MapSystem {
    fn name(&self) -> &str {
        &self.name
    }
    fn input_dim(&self) -> usize {
        self.input_dim
    }
    fn param_dim(&self) -> usize {
        self.param_dim
    }
    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn forward(&self, x: ArrayView2<f64>, theta: ArrayView1<f64>) -> Result<Array2<f64>> {
        check_len(&self.name, self.input_dim, x.ncols())?;
        check_len(&self.name, self.param_dim, theta.len())?;
        self.chain.forward(ops::concat_params(x, theta).view())
    }

    fn vjp(&self, x: ArrayView2<f64>, theta: ArrayView1<f64>, g_y: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
        check_len(&self.name, self.input_dim, x.ncols())?;
        check_len(&self.name, self.param_dim, theta.len())?;
        ops::vjp(&self.chain, x, theta, g_y)
    }
}

/// `y = x`, ignoring parameters. Useful as a stub physical layer.
#[derive(Debug, Clone)]
pub struct Identity {
    pub dim: usize,
    pub param_dim: usize,
}

impl PhysicalSystem for Identity {
    fn name(&self) -> &str {
        "identity"
    }
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn param_dim(&self) -> usize {
        self.param_dim
    }
    fn output_dim(&self) -> usize {
        self.dim
    }
    fn forward(&self, x: ArrayView2<f64>, theta: ArrayView1<f64>) -> Result<Array2<f64>> {
        check_len("identity input", self.dim, x.ncols())?;
        check_len("identity params", self.param_dim, theta.len())?;
        Ok(x.to_owned())
    }
    fn vjp(&self, x: ArrayView2<f64>, _theta: ArrayView1<f64>, g_y: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
        check_len("identity cotangent", x.ncols(), g_y.ncols())?;
        Ok((g_y.to_owned(), Array1::zeros(self.param_dim)))
    }
}

/// Elementwise clamp to `[0, 1]`.
pub fn clamp01(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| ops::clamp01(x)).collect()
}

pub use crate::autodiff::ops::autocorrelate;
