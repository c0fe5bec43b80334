//! Differentiable primitives over row-major batches.
//!
//! Every primitive maps a batch `(rows = samples, cols = features)` to a new
//! batch and knows its exact vector-Jacobian product. A [`Chain`] composes
//! primitives and runs reverse mode over the recorded intermediates.

use std::fmt;
use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::error::{check_len, PatError, Result};

/// How [`Primitive::Repeat`] lays out the copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepeatMode {
    /// `[x1, x1, x2, x2, ...]`
    Interleave,
    /// `[x1, x2, ..., x1, x2, ...]`
    Tile,
}

pub type OpaqueFn = Arc<dyn Fn(ArrayView1<f64>) -> Array1<f64> + Send + Sync>;

#[derive(Clone)]
pub enum Primitive {
    /// `y = W x + b` with `W` stored as `out × in`.
    Affine { weight: Array2<f64>, bias: Array1<f64> },
    /// `y = a x + c` with scalar `a`, `c`.
    ScaleShift { scale: f64, shift: f64 },
    /// `x · sigmoid(x)`
    Swish,
    Clamp01,
    Crop { start: usize, len: usize },
    Repeat { times: usize, mode: RepeatMode },
    BinSum { width: usize, average: bool },
    /// `s / max(s)`, ties broken toward the lowest index.
    MaxNormalize,
    Softmax,
    Autocorrelate,
    /// A black-box map with no derivative information.
    Opaque { name: String, out_dim: usize, func: OpaqueFn },
}

impl fmt::Debug for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Primitive::Affine { weight, .. } => write!(f, "Affine({}x{})", weight.nrows(), weight.ncols()),
            Primitive::ScaleShift { scale, shift } => write!(f, "ScaleShift({scale}, {shift})"),
            Primitive::Swish => f.write_str("Swish"),
            Primitive::Clamp01 => f.write_str("Clamp01"),
            Primitive::Crop { start, len } => write!(f, "Crop({start}, {len})"),
            Primitive::Repeat { times, mode } => write!(f, "Repeat({times}, {mode:?})"),
            Primitive::BinSum { width, average } => write!(f, "BinSum({width}, avg={average})"),
            Primitive::MaxNormalize => f.write_str("MaxNormalize"),
            Primitive::Softmax => f.write_str("Softmax"),
            Primitive::Autocorrelate => f.write_str("Autocorrelate"),
            Primitive::Opaque { name, .. } => write!(f, "Opaque({name})"),
        }
    }
}

impl Primitive {
    pub fn output_dim(&self, in_dim: usize) -> Result<usize> {
        match self {
            Primitive::Affine { weight, bias } => {
                check_len("affine input", weight.ncols(), in_dim)?;
                check_len("affine bias", weight.nrows(), bias.len())?;
                Ok(weight.nrows())
            }
            Primitive::ScaleShift { .. }
            | Primitive::Swish
            | Primitive::Clamp01
            | Primitive::MaxNormalize
            | Primitive::Softmax
            | Primitive::Autocorrelate => Ok(in_dim),
            Primitive::Crop { start, len } => {
                if start + len > in_dim {
                    return Err(PatError::dims("crop window end", in_dim, start + len));
                }
                Ok(*len)
            }
            Primitive::Repeat { times, .. } => Ok(in_dim * times),
            Primitive::BinSum { width, .. } => {
                if *width == 0 || in_dim % width != 0 {
                    return Err(PatError::Usage(format!(
                        "bin width {width} does not divide input dimension {in_dim}"
                    )));
                }
                Ok(in_dim / width)
            }
            Primitive::Opaque { out_dim, .. } => Ok(*out_dim),
        }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let out_dim = self.output_dim(x.ncols())?;
        let y = match self {
            Primitive::Affine { weight, bias } => x.dot(&weight.t()) + bias,
            Primitive::ScaleShift { scale, shift } => x.mapv(|v| scale * v + shift),
            Primitive::Swish => x.mapv(swish),
            Primitive::Clamp01 => x.mapv(clamp01),
            Primitive::Crop { start, len } => x.slice(s![.., *start..start + len]).to_owned(),
            Primitive::Repeat { times, mode } => {
                let d = x.ncols();
                Array2::from_shape_fn((x.nrows(), out_dim), |(r, c)| match mode {
                    RepeatMode::Interleave => x[[r, c / times]],
                    RepeatMode::Tile => x[[r, c % d]],
                })
            }
            Primitive::BinSum { width, average } => {
                let norm = if *average { *width as f64 } else { 1.0 };
                Array2::from_shape_fn((x.nrows(), out_dim), |(r, k)| {
                    x.slice(s![r, k * width..(k + 1) * width]).sum() / norm
                })
            }
            Primitive::MaxNormalize => {
                let mut y = x.to_owned();
                for mut row in y.rows_mut() {
                    let (_, m) = argmax(row.view());
                    if m == 0.0 {
                        return Err(PatError::DegenerateMax);
                    }
                    row.mapv_inplace(|v| v / m);
                }
                y
            }
            Primitive::Softmax => {
                let mut y = x.to_owned();
                for mut row in y.rows_mut() {
                    softmax_inplace(row.as_slice_mut().expect("owned rows are contiguous"));
                }
                y
            }
            Primitive::Autocorrelate => {
                let mut y = Array2::zeros(x.raw_dim());
                for (src, mut dst) in x.rows().into_iter().zip(y.rows_mut()) {
                    let q = src.to_vec();
                    dst.assign(&Array1::from(autocorrelate(&q)));
                }
                y
            }
            Primitive::Opaque { func, out_dim, .. } => {
                let mut y = Array2::zeros((x.nrows(), *out_dim));
                for (src, mut dst) in x.rows().into_iter().zip(y.rows_mut()) {
                    let out = func(src);
                    check_len("opaque output", *out_dim, out.len())?;
                    dst.assign(&out);
                }
                y
            }
        };
        Ok(y)
    }

    /// Vector-Jacobian product at input `x` (with cached output `y`).
    pub fn vjp(&self, x: ArrayView2<f64>, y: ArrayView2<f64>, g: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_len("cotangent rows", y.nrows(), g.nrows())?;
        check_len("cotangent width", y.ncols(), g.ncols())?;
        let gx = match self {
            Primitive::Affine { weight, .. } => g.dot(weight),
            Primitive::ScaleShift { scale, .. } => g.mapv(|v| v * scale),
            Primitive::Swish => {
                let mut gx = g.to_owned();
                Zip::from(&mut gx).and(x).for_each(|gi, &xi| *gi *= swish_grad(xi));
                gx
            }
            Primitive::Clamp01 => {
                let mut gx = g.to_owned();
                // Subgradient 0 at the kinks 0 and 1.
                Zip::from(&mut gx).and(x).for_each(|gi, &xi| {
                    if !(xi > 0.0 && xi < 1.0) {
                        *gi = 0.0;
                    }
                });
                gx
            }
            Primitive::Crop { start, len } => {
                let mut gx = Array2::zeros(x.raw_dim());
                gx.slice_mut(s![.., *start..start + len]).assign(&g);
                gx
            }
            Primitive::Repeat { times, mode } => {
                let d = x.ncols();
                let mut gx = Array2::zeros(x.raw_dim());
                for ((r, c), &gv) in g.indexed_iter() {
                    let src = match mode {
                        RepeatMode::Interleave => c / times,
                        RepeatMode::Tile => c % d,
                    };
                    gx[[r, src]] += gv;
                }
                gx
            }
            Primitive::BinSum { width, average } => {
                let norm = if *average { *width as f64 } else { 1.0 };
                Array2::from_shape_fn(x.raw_dim(), |(r, c)| g[[r, c / width]] / norm)
            }
            Primitive::MaxNormalize => {
                let mut gx = Array2::zeros(x.raw_dim());
                for ((xr, gr), mut out) in x.rows().into_iter().zip(g.rows()).zip(gx.rows_mut()) {
                    let (k, m) = argmax(xr);
                    if m == 0.0 {
                        return Err(PatError::DegenerateMax);
                    }
                    let dot: f64 = gr.iter().zip(xr.iter()).map(|(a, b)| a * b).sum();
                    out.assign(&gr.mapv(|v| v / m));
                    out[k] -= dot / (m * m);
                }
                gx
            }
            Primitive::Softmax => {
                let mut gx = Array2::zeros(x.raw_dim());
                for ((yr, gr), mut out) in y.rows().into_iter().zip(g.rows()).zip(gx.rows_mut()) {
                    let dot = yr.dot(&gr);
                    Zip::from(&mut out)
                        .and(yr)
                        .and(gr)
                        .for_each(|o, &yi, &gi| *o = yi * (gi - dot));
                }
                gx
            }
            Primitive::Autocorrelate => {
                let mut gx = Array2::zeros(x.raw_dim());
                for ((xr, gr), mut out) in x.rows().into_iter().zip(g.rows()).zip(gx.rows_mut()) {
                    let q = xr.to_vec();
                    let gs = gr.to_vec();
                    out.assign(&Array1::from(autocorrelate_vjp(&q, &gs)));
                }
                gx
            }
            Primitive::Opaque { name, .. } => return Err(PatError::Unsupported(name.clone())),
        };
        Ok(gx)
    }
}

/// A sequential composition of primitives.
#[derive(Debug, Clone, Default)]
pub struct Chain {
    pub ops: Vec<Primitive>,
}

impl Chain {
    pub fn new(ops: Vec<Primitive>) -> Self {
        Chain { ops }
    }

    pub fn output_dim(&self, in_dim: usize) -> Result<usize> {
        self.ops.iter().try_fold(in_dim, |d, op| op.output_dim(d))
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut cur = x.to_owned();
        for op in &self.ops {
            cur = op.forward(cur.view())?;
        }
        Ok(cur)
    }

    /// Returns the input followed by every intermediate output.
    pub fn forward_trace(&self, x: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        let mut trace = Vec::with_capacity(self.ops.len() + 1);
        trace.push(x.to_owned());
        for op in &self.ops {
            let next = op.forward(trace.last().expect("non-empty").view())?;
            trace.push(next);
        }
        Ok(trace)
    }

    pub fn vjp(&self, x: ArrayView2<f64>, g: ArrayView2<f64>) -> Result<Array2<f64>> {
        let trace = self.forward_trace(x)?;
        let mut cot = g.to_owned();
        for (i, op) in self.ops.iter().enumerate().rev() {
            cot = op.vjp(trace[i].view(), trace[i + 1].view(), cot.view())?;
        }
        Ok(cot)
    }
}

/// Reverse-mode VJP of `f(concat(x, θ))`, split back into the `x` and `θ`
/// parts. The `θ` gradient is summed over batch rows.
pub fn vjp(f: &Chain, x: ArrayView2<f64>, theta: ArrayView1<f64>, v: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let q = concat_params(x, theta);
    let gq = f.vjp(q.view(), v)?;
    Ok(split_grad(gq, x.ncols()))
}

/// Appends `θ` to every row of `x`.
pub fn concat_params(x: ArrayView2<f64>, theta: ArrayView1<f64>) -> Array2<f64> {
    let (n, d) = x.dim();
    let mut q = Array2::zeros((n, d + theta.len()));
    q.slice_mut(s![.., ..d]).assign(&x);
    q.slice_mut(s![.., d..]).assign(&theta.broadcast((n, theta.len())).expect("broadcast rows"));
    q
}

/// Splits a gradient over `concat(x, θ)` into the `x` block and the
/// row-summed `θ` block.
pub fn split_grad(gq: Array2<f64>, x_dim: usize) -> (Array2<f64>, Array1<f64>) {
    let g_theta = gq.slice(s![.., x_dim..]).sum_axis(Axis(0));
    let g_x = gq.slice(s![.., ..x_dim]).to_owned();
    (g_x, g_theta)
}

pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn swish_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s + x * s * (1.0 - s)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn clamp01(v: f64) -> f64 {
    v.min(1.0).max(0.0)
}

/// Index and value of the largest entry; ties resolve to the lowest index.
pub fn argmax(v: ArrayView1<f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &x) in v.iter().enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

pub fn softmax_inplace(v: &mut [f64]) {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

/// `s_j = Σ_{i=0}^{min(j, m-j-1)} q_{j-i} q_{j+i}` over the full length `m`.
pub fn autocorrelate(q: &[f64]) -> Vec<f64> {
    let m = q.len();
    (0..m)
        .map(|j| {
            let reach = j.min(m - j - 1);
            (0..=reach).map(|i| q[j - i] * q[j + i]).sum()
        })
        .collect()
}

pub fn autocorrelate_vjp(q: &[f64], g: &[f64]) -> Vec<f64> {
    let m = q.len();
    let mut gq = vec![0.0; m];
    for j in 0..m {
        let gj = g[j];
        if gj == 0.0 {
            continue;
        }
        for i in 0..=j.min(m - j - 1) {
            let (a, b) = (j - i, j + i);
            gq[a] += gj * q[b];
            gq[b] += gj * q[a];
        }
    }
    gq
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn autocorrelate_hand_values() {
        assert_eq!(autocorrelate(&[1.0, 0.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(autocorrelate(&[1.0, 1.0]), vec![1.0, 1.0]);
        let (a, b, c) = (0.3, -1.7, 2.2);
        let s = autocorrelate(&[a, b, c]);
        assert_eq!(s, vec![a * a, b * b + a * c, c * c]);
    }

    #[test]
    fn affine_vjp_is_transpose_row() {
        let op = Primitive::Affine {
            weight: array![[1.0, 2.0], [3.0, 4.0]],
            bias: array![0.0, 0.0],
        };
        let x = array![[0.5, -0.5]];
        let y = op.forward(x.view()).unwrap();
        let g = op.vjp(x.view(), y.view(), array![[1.0, 0.0]].view()).unwrap();
        assert_eq!(g, array![[1.0, 2.0]]);
    }

    #[test]
    fn softmax_vjp_at_uniform_point() {
        let op = Primitive::Softmax;
        let x = array![[0.0, 0.0]];
        let y = op.forward(x.view()).unwrap();
        let g = op.vjp(x.view(), y.view(), array![[1.0, -1.0]].view()).unwrap();
        assert!((g[[0, 0]] - 0.5).abs() < 1e-15);
        assert!((g[[0, 1]] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn clamp_kinks_use_zero_subgradient() {
        let x = array![[0.0, 1.0, 0.5, -0.2, 1.3]];
        let y = Primitive::Clamp01.forward(x.view()).unwrap();
        assert_eq!(y, array![[0.0, 1.0, 0.5, 0.0, 1.0]]);
        let g = Primitive::Clamp01.vjp(x.view(), y.view(), Array2::ones((1, 5)).view()).unwrap();
        assert_eq!(g, array![[0.0, 0.0, 1.0, 0.0, 0.0]]);
    }

    #[test]
    fn max_normalize_ties_go_to_lowest_index() {
        let x = array![[2.0, 2.0, 1.0]];
        let y = Primitive::MaxNormalize.forward(x.view()).unwrap();
        let g = Primitive::MaxNormalize
            .vjp(x.view(), y.view(), array![[0.0, 1.0, 0.0]].view())
            .unwrap();
        // d(x1/x0)/dx0 = -x1/x0^2 = -0.5, d/dx1 = 1/x0 = 0.5
        assert_eq!(g, array![[-0.5, 0.5, 0.0]]);
    }

    #[test]
    fn max_normalize_rejects_zero() {
        let x = Array2::<f64>::zeros((1, 3));
        assert!(matches!(Primitive::MaxNormalize.forward(x.view()), Err(PatError::DegenerateMax)));
    }

    #[test]
    fn repeat_layouts() {
        let x = array![[1.0, 2.0]];
        let inter = Primitive::Repeat { times: 2, mode: RepeatMode::Interleave };
        let tile = Primitive::Repeat { times: 2, mode: RepeatMode::Tile };
        assert_eq!(inter.forward(x.view()).unwrap(), array![[1.0, 1.0, 2.0, 2.0]]);
        assert_eq!(tile.forward(x.view()).unwrap(), array![[1.0, 2.0, 1.0, 2.0]]);
    }

    #[test]
    fn opaque_has_no_vjp() {
        let op = Primitive::Opaque {
            name: "lab-bench".into(),
            out_dim: 1,
            func: Arc::new(|v: ArrayView1<f64>| Array1::from(vec![v.sum().round()])),
        };
        let x = array![[0.4, 0.4]];
        let y = op.forward(x.view()).unwrap();
        assert_eq!(y, array![[1.0]]);
        let err = op.vjp(x.view(), y.view(), array![[1.0]].view()).unwrap_err();
        assert!(matches!(err, PatError::Unsupported(_)));
    }

    #[test]
    fn bin_sum_requires_divisible_width() {
        let op = Primitive::BinSum { width: 4, average: false };
        assert!(op.output_dim(10).is_err());
        assert_eq!(op.output_dim(12).unwrap(), 3);
    }
}
