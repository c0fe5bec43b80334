use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::ops::{swish, swish_grad};
use crate::error::{check_len, PatError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Swish,
}

/// Fully connected network with swish hidden units and a linear output,
/// followed by a fixed per-output affine `y = z·out_scale + out_shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpDoc", into = "MlpDoc")]
pub struct Mlp {
    layer_dims: Vec<usize>,
    activation: Activation,
    /// `weights[l]` is `out × in`.
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    out_scale: Array1<f64>,
    out_shift: Array1<f64>,
}

/// Parameter gradients with the same layout as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Pre-activations of every layer from one batch forward pass.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    input: Array2<f64>,
    pre: Vec<Array2<f64>>,
}

impl Mlp {
    /// Uniform `±1/√fan_in` initialization.
    pub fn new<R: Rng>(layer_dims: &[usize], rng: &mut R) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(PatError::Config(format!("invalid MLP layer dims {layer_dims:?}")));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            weights.push(Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-bound..bound)));
            biases.push(Array1::from_shape_fn(fan_out, |_| rng.gen_range(-bound..bound)));
        }
        let out = *layer_dims.last().expect("non-empty");
        Ok(Mlp {
            layer_dims: layer_dims.to_vec(),
            activation: Activation::Swish,
            weights,
            biases,
            out_scale: Array1::ones(out),
            out_shift: Array1::zeros(out),
        })
    }

    /// A single linear layer `y = W x + b`.
    pub fn linear(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        check_len("linear bias", weight.nrows(), bias.len())?;
        let (out, inp) = weight.dim();
        Ok(Mlp {
            layer_dims: vec![inp, out],
            activation: Activation::Swish,
            weights: vec![weight],
            biases: vec![bias],
            out_scale: Array1::ones(out),
            out_shift: Array1::zeros(out),
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("non-empty")
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn set_output_affine(&mut self, scale: Array1<f64>, shift: Array1<f64>) -> Result<()> {
        check_len("output scale", self.output_dim(), scale.len())?;
        check_len("output shift", self.output_dim(), shift.len())?;
        self.out_scale = scale;
        self.out_shift = shift;
        Ok(())
    }

    /// Absorb an input standardization `(x − mean) / scale` into the first layer,
    /// so a network trained on standardized inputs accepts raw ones.
    pub fn fold_input_affine(&mut self, mean: &Array1<f64>, scale: &Array1<f64>) -> Result<()> {
        check_len("input mean", self.input_dim(), mean.len())?;
        check_len("input scale", self.input_dim(), scale.len())?;
        let w = &mut self.weights[0];
        for (j, mut col) in w.columns_mut().into_iter().enumerate() {
            col /= scale[j];
        }
        let shift = w.dot(mean);
        self.biases[0] -= &shift;
        Ok(())
    }

    /// Mutable views of every parameter array, weights then bias per layer.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_trace(x)?.0)
    }

    pub fn forward_trace(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, MlpTrace)> {
        check_len("mlp input", self.input_dim(), x.ncols())?;
        let last = self.weights.len() - 1;
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut a = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = a.dot(&w.t()) + b;
            a = if l == last { z.clone() } else { z.mapv(swish) };
            pre.push(z);
        }
        let y = a * &self.out_scale + &self.out_shift;
        Ok((
            y,
            MlpTrace {
                input: x.to_owned(),
                pre,
            },
        ))
    }

    /// Reverse pass. Returns the input cotangent and, when `with_params`,
    /// the parameter gradients summed over rows.
    pub fn backward(&self, trace: &MlpTrace, g_y: ArrayView2<f64>, with_params: bool) -> Result<(Array2<f64>, Option<MlpGrads>)> {
        check_len("mlp cotangent", self.output_dim(), g_y.ncols())?;
        check_len("mlp cotangent rows", trace.input.nrows(), g_y.nrows())?;
        let n = self.weights.len();
        let mut gw = Vec::new();
        let mut gb = Vec::new();
        let mut g = &g_y * &self.out_scale;
        for l in (0..n).rev() {
            if l != n - 1 {
                Zip::from(&mut g).and(&trace.pre[l]).for_each(|gv, &z| *gv *= swish_grad(z));
            }
            if with_params {
                let a_prev = if l == 0 { trace.input.clone() } else { trace.pre[l - 1].mapv(swish) };
                gw.push(g.t().dot(&a_prev));
                gb.push(g.sum_axis(Axis(0)));
            }
            g = g.dot(&self.weights[l]);
        }
        let grads = with_params.then(|| {
            gw.reverse();
            gb.reverse();
            MlpGrads { weights: gw, biases: gb }
        });
        Ok((g, grads))
    }

    /// `(∂f/∂input)ᵀ g_y` row by row.
    pub fn input_vjp(&self, x: ArrayView2<f64>, g_y: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (_, trace) = self.forward_trace(x)?;
        Ok(self.backward(&trace, g_y, false)?.0)
    }
}

impl MlpGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MlpDoc {
    layer_dims: Vec<usize>,
    activation: Activation,
    /// Row-major `out × in` per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    out_scale: Vec<f64>,
    out_shift: Vec<f64>,
}

impl From<Mlp> for MlpDoc {
    fn from(m: Mlp) -> Self {
        MlpDoc {
            layer_dims: m.layer_dims,
            activation: m.activation,
            weights: m.weights.into_iter().map(|w| w.iter().copied().collect()).collect(),
            biases: m.biases.into_iter().map(|b| b.to_vec()).collect(),
            out_scale: m.out_scale.to_vec(),
            out_shift: m.out_shift.to_vec(),
        }
    }
}

impl TryFrom<MlpDoc> for Mlp {
    type Error = PatError;

    fn try_from(d: MlpDoc) -> Result<Self> {
        if d.layer_dims.len() < 2 {
            return Err(PatError::Config("MLP needs at least two layer dims".into()));
        }
        let n = d.layer_dims.len() - 1;
        check_len("mlp weight arrays", n, d.weights.len())?;
        check_len("mlp bias arrays", n, d.biases.len())?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, (w, b)) in d.weights.into_iter().zip(d.biases).enumerate() {
            let (inp, out) = (d.layer_dims[l], d.layer_dims[l + 1]);
            check_len("mlp weight entries", inp * out, w.len())?;
            check_len("mlp bias entries", out, b.len())?;
            weights.push(Array2::from_shape_vec((out, inp), w).expect("checked length"));
            biases.push(Array1::from(b));
        }
        let out = d.layer_dims[n];
        check_len("mlp output scale", out, d.out_scale.len())?;
        check_len("mlp output shift", out, d.out_shift.len())?;
        Ok(Mlp {
            layer_dims: d.layer_dims,
            activation: d.activation,
            weights,
            biases,
            out_scale: Array1::from(d.out_scale),
            out_shift: Array1::from(d.out_shift),
        })
    }
}
