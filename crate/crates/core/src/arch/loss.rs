use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::layer::ControlRecord;
use crate::autodiff::ops::softmax_inplace;
use crate::autodiff::Injection;
use crate::error::{check_len, PatError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimaryLoss {
    CrossEntropy,
    Mse,
}

/// What a bound constraint penalizes at each control point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintTarget {
    /// The data input `x`.
    Inputs,
    /// The trainable parameters `θ`.
    Params,
    /// Both, i.e. the full control vector `[x, θ]`.
    Controls,
}

/// `λ · Σ_z (max(z − v_max, 0) + max(v_min − z, 0))`, divided by the
/// number of entries when `averaged`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintTerm {
    pub target: ConstraintTarget,
    pub lambda: f64,
    #[serde(default)]
    pub v_min: f64,
    #[serde(default = "one")]
    pub v_max: f64,
    #[serde(default)]
    pub averaged: bool,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub primary: PrimaryLoss,
    #[serde(default)]
    pub constraints: Vec<ConstraintTerm>,
}

impl LossSpec {
    pub fn cross_entropy() -> Self {
        LossSpec {
            primary: PrimaryLoss::CrossEntropy,
            constraints: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.constraints {
            if !(c.lambda >= 0.0) {
                return Err(PatError::Config(format!("constraint λ must be non-negative, got {}", c.lambda)));
            }
            if !(c.v_min < c.v_max) {
                return Err(PatError::Config(format!("constraint needs v_min < v_max, got [{}, {}]", c.v_min, c.v_max)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Values(Array2<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(v) => v.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Classes(c) => Targets::Classes(idx.iter().map(|&i| c[i]).collect()),
            Targets::Values(v) => Targets::Values(v.select(Axis(0), idx)),
        }
    }
}

/// Per-sample bound penalty and its subgradient.
pub fn bound_penalty(z: &[f64], v_min: f64, v_max: f64) -> (f64, Vec<f64>) {
    let mut total = 0.0;
    let grad = z
        .iter()
        .map(|&v| {
            if v > v_max {
                total += v - v_max;
                1.0
            } else if v < v_min {
                total += v_min - v;
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    (total, grad)
}

/// Primary loss per sample and its gradient with respect to the output.
pub fn primary_loss(kind: PrimaryLoss, output: ArrayView2<f64>, targets: &Targets) -> Result<(Array1<f64>, Array2<f64>)> {
    check_len("loss targets", output.nrows(), targets.len())?;
    let (n, k) = output.dim();
    let mut losses = Array1::zeros(n);
    let mut g = Array2::zeros((n, k));
    match (kind, targets) {
        (PrimaryLoss::CrossEntropy, Targets::Classes(cls)) => {
            for (i, row) in output.rows().into_iter().enumerate() {
                let t = cls[i];
                if t >= k {
                    return Err(PatError::InvalidClass { index: t, classes: k });
                }
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                losses[i] = lse - row[t];
                let mut p = row.to_vec();
                softmax_inplace(&mut p);
                p[t] -= 1.0;
                g.row_mut(i).assign(&Array1::from(p));
            }
        }
        (PrimaryLoss::Mse, Targets::Values(y)) => {
            check_len("mse target width", k, y.ncols())?;
            let diff = &output - y;
            losses = diff.mapv(|v| v * v).sum_axis(Axis(1));
            g = diff * 2.0;
        }
        (PrimaryLoss::CrossEntropy, Targets::Values(_)) => {
            return Err(PatError::Config("cross-entropy needs class targets".into()))
        }
        (PrimaryLoss::Mse, Targets::Classes(_)) => return Err(PatError::Config("mse needs value targets".into())),
    }
    Ok((losses, g))
}

/// Batch loss and backward seeds.
#[derive(Debug, Clone)]
pub struct LossEval {
    /// Mean over the batch of primary + constraint terms.
    pub loss: f64,
    pub primary: f64,
    pub penalty: f64,
    /// `∂L/∂output`, already divided by the batch size.
    pub g_output: Array2<f64>,
    /// Extra gradients for each control point.
    pub injections: Vec<Option<Injection>>,
}

/// Full loss for a batch: primary term plus bound constraints on every
/// recorded control point. The batch loss is the mean over samples.
pub fn loss_and_error_vector(
    spec: &LossSpec,
    output: ArrayView2<f64>,
    targets: &Targets,
    controls: &[Option<ControlRecord>],
) -> Result<LossEval> {
    let n = output.nrows();
    if n == 0 {
        return Err(PatError::InsufficientData { needed: 1, got: 0 });
    }
    let inv_n = 1.0 / n as f64;
    let (losses, g) = primary_loss(spec.primary, output, targets)?;
    let primary = losses.sum() * inv_n;
    let mut penalty = 0.0;
    let mut injections: Vec<Option<Injection>> = vec![None; controls.len()];

    for term in &spec.constraints {
        for (ci, rec) in controls.iter().enumerate() {
            let Some(rec) = rec else { continue };
            let x_dim = rec.input.ncols();
            let p_dim = rec.params.len();
            let (use_x, use_p) = match term.target {
                ConstraintTarget::Inputs => (true, false),
                ConstraintTarget::Params => (false, true),
                ConstraintTarget::Controls => (true, true),
            };
            let n_z = (if use_x { x_dim } else { 0 }) + (if use_p { p_dim } else { 0 });
            if n_z == 0 {
                continue;
            }
            let scale = term.lambda * if term.averaged { 1.0 / n_z as f64 } else { 1.0 };
            let inj = injections[ci].get_or_insert(Injection {
                input: None,
                params: None,
            });
            if use_x {
                let mut gi = Array2::zeros((n, x_dim));
                for (i, row) in rec.input.rows().into_iter().enumerate() {
                    let (pen, sub) = bound_penalty(row.as_slice().expect("standard layout"), term.v_min, term.v_max);
                    penalty += scale * pen * inv_n;
                    gi.row_mut(i).assign(&(Array1::from(sub) * (scale * inv_n)));
                }
                inj.input = Some(match inj.input.take() {
                    Some(prev) => prev + gi,
                    None => gi,
                });
            }
            if use_p {
                // Shared by every sample, so its batch mean is itself.
                let (pen, sub) = bound_penalty(rec.params.as_slice().expect("standard layout"), term.v_min, term.v_max);
                penalty += scale * pen;
                let gp = Array1::from(sub) * scale;
                inj.params = Some(match inj.params.take() {
                    Some(prev) => prev + gp,
                    None => gp,
                });
            }
        }
    }
    Ok(LossEval {
        loss: primary + penalty,
        primary,
        penalty,
        g_output: g * inv_n,
        injections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn mse_example() {
        let (l, g) = primary_loss(PrimaryLoss::Mse, array![[1.0, 2.0]].view(), &Targets::Values(array![[0.0, 0.0]])).unwrap();
        assert_eq!(l[0], 5.0);
        assert_eq!(g, array![[2.0, 4.0]]);
    }

    #[test]
    fn uniform_cross_entropy() {
        let (l, g) = primary_loss(PrimaryLoss::CrossEntropy, Array2::zeros((1, 7)).view(), &Targets::Classes(vec![0])).unwrap();
        assert!((l[0] - 7f64.ln()).abs() < 1e-15);
        assert!((g[[0, 0]] - (1.0 / 7.0 - 1.0)).abs() < 1e-15);
        for j in 1..7 {
            assert!((g[[0, j]] - 1.0 / 7.0).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_class() {
        let r = primary_loss(PrimaryLoss::CrossEntropy, Array2::zeros((1, 3)).view(), &Targets::Classes(vec![3]));
        assert!(matches!(r, Err(PatError::InvalidClass { index: 3, classes: 3 })));
    }

    #[test]
    fn bound_example() {
        let (p, g) = bound_penalty(&[-0.1, 0.5, 1.2], 0.0, 1.0);
        assert!((p - 0.3).abs() < 1e-15);
        assert_eq!(g, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn constraint_on_controls() {
        let spec = LossSpec {
            primary: PrimaryLoss::Mse,
            constraints: vec![ConstraintTerm {
                target: ConstraintTarget::Controls,
                lambda: 1.0,
                v_min: 0.0,
                v_max: 1.0,
                averaged: false,
            }],
        };
        let rec = ControlRecord {
            input: array![[-0.1, 0.5]],
            params: array![1.2],
        };
        let out = array![[0.0]];
        let e = loss_and_error_vector(&spec, out.view(), &Targets::Values(array![[0.0]]), &[Some(rec)]).unwrap();
        assert!((e.loss - 0.3).abs() < 1e-15);
        let inj = e.injections[0].as_ref().unwrap();
        assert_eq!(inj.input.as_ref().unwrap(), &array![[-1.0, 0.0]]);
        assert_eq!(inj.params.as_ref().unwrap(), &array![1.0]);
    }
}
