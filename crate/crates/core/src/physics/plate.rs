use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::PhysicalSystem;
use crate::error::{check_len, PatError, Result};

/// Linear plate modeled as a causal convolution: the lower-triangular
/// Toeplitz matrix `T[k][j] = c[k - j]` for `j <= k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateConvolution {
    kernel: Vec<f64>,
    /// `Tᵀ`, so that a batch forward is one `X · Tᵀ` product.
    t_transpose: Array2<f64>,
}

impl PlateConvolution {
    pub fn new(kernel: Vec<f64>) -> Result<Self> {
        if kernel.is_empty() {
            return Err(PatError::Config("plate kernel must be non-empty".into()));
        }
        if kernel.iter().any(|v| !v.is_finite()) {
            return Err(PatError::Config("plate kernel must be finite".into()));
        }
        let d = kernel.len();
        let t_transpose = Array2::from_shape_fn((d, d), |(j, k)| if j <= k { kernel[k - j] } else { 0.0 });
        Ok(PlateConvolution { kernel, t_transpose })
    }

    /// Damped cosine kernel `exp(-k/decay)·cos(2πk/period)`.
    pub fn damped_oscillator(d: usize, decay: f64, period: f64) -> Result<Self> {
        let kernel = (0..d)
            .map(|k| {
                let k = k as f64;
                (-k / decay).exp() * (std::f64::consts::TAU * k / period).cos()
            })
            .collect();
        Self::new(kernel)
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn dim(&self) -> usize {
        self.kernel.len()
    }

    /// The full transformation matrix.
    pub fn matrix(&self) -> Array2<f64> {
        self.t_transpose.t().to_owned()
    }
}

/// Single-sample plate forward.
pub fn plate_forward(sys: &PlateConvolution, x: &[f64]) -> Result<Vec<f64>> {
    sys.apply(x, &[])
}

impl PhysicalSystem for PlateConvolution {
    fn name(&self) -> &str {
        "plate"
    }
    fn input_dim(&self) -> usize {
        self.dim()
    }
    fn param_dim(&self) -> usize {
        0
    }
    fn output_dim(&self) -> usize {
        self.dim()
    }

    fn forward(&self, x: ArrayView2<f64>, theta: ArrayView1<f64>) -> Result<Array2<f64>> {
        check_len("plate input", self.dim(), x.ncols())?;
        check_len("plate params", 0, theta.len())?;
        Ok(x.dot(&self.t_transpose))
    }

    fn vjp(&self, x: ArrayView2<f64>, _theta: ArrayView1<f64>, g_y: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
        check_len("plate input", self.dim(), x.ncols())?;
        check_len("plate cotangent", self.dim(), g_y.ncols())?;
        Ok((g_y.dot(&self.t_transpose.t()), Array1::zeros(0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel() {
        let p = PlateConvolution::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(plate_forward(&p, &[0.3, -1.0, 2.0, 5.0]).unwrap(), vec![0.3, -1.0, 2.0, 5.0]);
    }

    #[test]
    fn one_step_delay() {
        let p = PlateConvolution::new(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(plate_forward(&p, &[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn impulse_response_is_kernel() {
        let c = vec![0.5, -0.25, 0.125, 2.0];
        let p = PlateConvolution::new(c.clone()).unwrap();
        assert_eq!(plate_forward(&p, &[1.0, 0.0, 0.0, 0.0]).unwrap(), c);
    }

    #[test]
    fn matrix_is_lower_toeplitz() {
        let p = PlateConvolution::new(vec![1.0, 2.0, 3.0]).unwrap();
        let m = p.matrix();
        assert_eq!(m, ndarray::array![[1.0, 0.0, 0.0], [2.0, 1.0, 0.0], [3.0, 2.0, 1.0]]);
    }
}
