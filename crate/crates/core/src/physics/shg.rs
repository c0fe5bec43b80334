use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::PhysicalSystem;
use crate::autodiff::ops::{self, Chain, Primitive};
use crate::error::{check_len, PatError, Result};

/// Autocorrelation surrogate for a second-harmonic-generation stage.
///
/// `q = clamp01([x, θ])`, `s = autocorrelate(q)`, then the central
/// `output_dim` entries of `s` are kept. In normalized mode the crop is
/// rescaled to `a·s/max(s) + c`; the raw mode returns the crop as is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShgSurrogate {
    pub input_dim: usize,
    pub param_dim: usize,
    pub output_dim: usize,
    pub a: f64,
    pub c: f64,
    pub normalized: bool,
    #[serde(skip)]
    name: String,
}

impl ShgSurrogate {
    /// The square case: `n` inputs, `n` parameters, `n` outputs.
    pub fn new(n: usize, a: f64, c: f64) -> Result<Self> {
        Self::general(n, n, n, a, c, true)
    }

    /// Unnormalized variant, e.g. 50 inputs + 50 parameters → 50 outputs.
    pub fn raw(input_dim: usize, param_dim: usize, output_dim: usize) -> Result<Self> {
        Self::general(input_dim, param_dim, output_dim, 1.0, 0.0, false)
    }

    pub fn general(input_dim: usize, param_dim: usize, output_dim: usize, a: f64, c: f64, normalized: bool) -> Result<Self> {
        let m = input_dim + param_dim;
        if output_dim == 0 || output_dim > m {
            return Err(PatError::Config(format!(
                "shg output dim {output_dim} must be in 1..={m}"
            )));
        }
        Ok(ShgSurrogate {
            input_dim,
            param_dim,
            output_dim,
            a,
            c,
            normalized,
            name: format!("shg{input_dim}"),
        })
    }

    /// Zero-based start of the central crop.
    pub fn crop_start(&self) -> usize {
        (self.input_dim + self.param_dim - self.output_dim) / 2
    }

    pub fn chain(&self) -> Chain {
        let mut ops = vec![
            Primitive::Clamp01,
            Primitive::Autocorrelate,
            Primitive::Crop {
                start: self.crop_start(),
                len: self.output_dim,
            },
        ];
        if self.normalized {
            ops.push(Primitive::MaxNormalize);
            ops.push(Primitive::ScaleShift {
                scale: self.a,
                shift: self.c,
            });
        }
        Chain::new(ops)
    }
}

/// Single-sample SHG forward.
pub fn shg_forward(sys: &ShgSurrogate, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    sys.apply(x, theta)
}

impl PhysicalSystem for ShgSurrogate {
    fn name(&self) -> &str {
        if self.name.is_empty() {
            "shg"
        } else {
            &self.name
        }
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
        check_len("shg input", self.input_dim, x.ncols())?;
        check_len("shg params", self.param_dim, theta.len())?;
        self.chain().forward(ops::concat_params(x, theta).view())
    }

    fn vjp(&self, x: ArrayView2<f64>, theta: ArrayView1<f64>, g_y: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
        check_len("shg input", self.input_dim, x.ncols())?;
        check_len("shg params", self.param_dim, theta.len())?;
        ops::vjp(&self.chain(), x, theta, g_y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reversing_controls_reverses_output() {
        let sys = ShgSurrogate::new(6, 1.0, 0.0).unwrap();
        let x = [0.1, 0.9, 0.4, 0.3, 0.8, 0.2];
        let th = [0.6, 0.5, 0.7, 0.35, 0.45, 0.55];
        let y = shg_forward(&sys, &x, &th).unwrap();
        let rx: Vec<f64> = th.iter().rev().copied().collect();
        let rt: Vec<f64> = x.iter().rev().copied().collect();
        let mut ry = shg_forward(&sys, &rx, &rt).unwrap();
        ry.reverse();
        for (a, b) in y.iter().zip(&ry) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn half_inputs_give_flat_crop() {
        // q = [.5; 4], s = [.25, .5, .5, .25], crop [.5, .5]
        let sys = ShgSurrogate::new(2, 1.0, 0.0).unwrap();
        let y = shg_forward(&sys, &[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert_eq!(y, vec![1.0, 1.0]);
    }

    #[test]
    fn crop_start_is_half_n() {
        assert_eq!(ShgSurrogate::new(24, 1.0, 0.0).unwrap().crop_start(), 12);
        assert_eq!(ShgSurrogate::raw(50, 50, 50).unwrap().crop_start(), 25);
    }

    #[test]
    fn zero_scale_gives_offset() {
        let sys = ShgSurrogate::new(4, 0.0, 0.3).unwrap();
        let y = shg_forward(&sys, &[0.1, 0.9, 0.4, 0.2], &[0.6, 0.3, 0.5, 0.8]).unwrap();
        assert!(y.iter().all(|&v| v == 0.3));
    }

    #[test]
    fn max_is_a_plus_c() {
        let sys = ShgSurrogate::new(6, 1.7, -0.2).unwrap();
        let y = shg_forward(&sys, &[0.1, 0.9, 0.4, 0.2, 0.7, 0.3], &[0.6, 0.3, 0.5, 0.8, 0.1, 0.2]).unwrap();
        let max = y.iter().cloned().fold(f64::MIN, f64::max);
        assert_abs_diff_eq!(max, 1.5, epsilon = 1e-15);
    }

    #[test]
    fn all_zero_control_is_degenerate() {
        let sys = ShgSurrogate::new(3, 1.0, 0.0).unwrap();
        let err = shg_forward(&sys, &[0.0; 3], &[-1.0; 3]).unwrap_err();
        assert!(matches!(err, PatError::DegenerateMax));
    }

    #[test]
    fn output_invariant_under_control_scaling() {
        // s is quadratic in q, so rescaling q inside [0,1] leaves s/max(s) fixed.
        let sys = ShgSurrogate::new(3, 1.0, 0.0).unwrap();
        let y1 = shg_forward(&sys, &[0.2, 0.4, 0.6], &[0.8, 0.2, 0.4]).unwrap();
        let y2 = shg_forward(&sys, &[0.1, 0.2, 0.3], &[0.4, 0.1, 0.2]).unwrap();
        for (a, b) in y1.iter().zip(&y2) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }
}
