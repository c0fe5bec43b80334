use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fit::{fit_regression, FitConfig, FitReport};
use super::mlp::Mlp;
use crate::autodiff::ops::concat_params;
use crate::error::{check_len, PatError, Result};
use crate::physics::PhysicalSystem;

const PSD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub mean: Array1<f64>,
    pub cov: Array2<f64>,
    pub n_samples: usize,
}

/// Sample mean and unbiased covariance of the rows of `samples`.
pub fn estimate_covariance(samples: ArrayView2<f64>) -> Result<CovarianceEstimate> {
    let n = samples.nrows();
    if n < 2 {
        return Err(PatError::InsufficientData { needed: 2, got: n });
    }
    // Shift by the first sample so constant data gives an exactly zero result.
    let x0 = samples.row(0);
    let mean = &x0 + &(&samples - &x0).mean_axis(Axis(0)).expect("non-empty");
    let centered = &samples - &mean;
    let mut cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    // exact symmetry
    let d = cov.nrows();
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (cov[[i, j]] + cov[[j, i]]);
            cov[[i, j]] = v;
            cov[[j, i]] = v;
        }
    }
    Ok(CovarianceEstimate { mean, cov, n_samples: n })
}

/// `A = U √D` restricted to the `n_lambda` largest eigenvalues, so `A Aᵀ`
/// is the best rank-`n_lambda` approximation of the covariance. Each column
/// is signed so its largest-magnitude entry is positive.
pub fn build_mixing_matrix(est: &CovarianceEstimate, n_lambda: usize) -> Result<Array2<f64>> {
    mixing_from_cov(est.cov.view(), n_lambda)
}

pub fn mixing_from_cov(cov: ArrayView2<f64>, n_lambda: usize) -> Result<Array2<f64>> {
    let d = cov.nrows();
    check_len("covariance columns", d, cov.ncols())?;
    if n_lambda == 0 || n_lambda > d {
        return Err(PatError::Config(format!("n_lambda must be in 1..={d}, got {n_lambda}")));
    }
    let m = DMatrix::from_fn(d, d, |i, j| cov[[i, j]]);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOLERANCE {
        return Err(PatError::NotPsd { min_eigenvalue: min });
    }
    let mut a = Array2::zeros((d, n_lambda));
    for (col, &k) in order.iter().take(n_lambda).enumerate() {
        let lambda = eig.eigenvalues[k].max(0.0);
        let root = lambda.sqrt();
        let v = eig.eigenvectors.column(k);
        let mut pivot = 0;
        for i in 1..d {
            if v[i].abs() > v[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            a[[i, col]] = sign * root * v[i];
        }
    }
    Ok(a)
}

pub fn frobenius(m: ArrayView2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `‖a − b‖_F / ‖b‖_F`, or the absolute error when `b` is zero.
pub fn frobenius_relative(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let num = frobenius((&a - &b).view());
    let den = frobenius(b);
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Predicts the mixing matrix `A(x, θ)` of an input-dependent noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub out_dim: usize,
    pub n_lambda: usize,
    pub n_repeat: usize,
    pub predictor: Mlp,
}

impl NoiseModel {
    pub fn predict_mixing(&self, q: ArrayView1<f64>) -> Result<Array2<f64>> {
        check_len("noise model input", self.predictor.input_dim(), q.len())?;
        let flat = self.predictor.forward(q.insert_axis(Axis(0)))?;
        Ok(flat
            .into_shape_with_order((self.out_dim, self.n_lambda))
            .expect("predictor output is out_dim × n_lambda"))
    }

    pub fn predict_covariance(&self, q: ArrayView1<f64>) -> Result<Array2<f64>> {
        let a = self.predict_mixing(q)?;
        Ok(a.dot(&a.t()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseFitConfig {
    pub n_repeat: usize,
    pub n_lambda: usize,
    pub fit: FitConfig,
}

impl Default for NoiseFitConfig {
    fn default() -> Self {
        NoiseFitConfig {
            n_repeat: 40,
            n_lambda: 1,
            fit: FitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseFitReport {
    pub fit: FitReport,
    /// Mean Frobenius relative error of predicted vs. measured covariance on held-out probes.
    pub val_cov_relative_error: f64,
}

/// Measure the noise covariance at each probe `(x, θ)` by repeated
/// evaluation, build per-probe mixing targets, and regress them on the input.
pub fn fit_noise_model(
    system: &dyn PhysicalSystem,
    probes_x: ArrayView2<f64>,
    theta: ArrayView1<f64>,
    cfg: &NoiseFitConfig,
) -> Result<(NoiseModel, NoiseFitReport)> {
    check_len("noise probe input", system.input_dim(), probes_x.ncols())?;
    check_len("noise probe params", system.param_dim(), theta.len())?;
    if cfg.n_repeat < 2 {
        return Err(PatError::InsufficientData {
            needed: 2,
            got: cfg.n_repeat,
        });
    }
    let out_dim = system.output_dim();
    let n_probes = probes_x.nrows();
    let q = concat_params(probes_x, theta);
    let mut targets = Array2::zeros((n_probes, out_dim * cfg.n_lambda));
    for (i, x) in probes_x.rows().into_iter().enumerate() {
        let rep = x.broadcast((cfg.n_repeat, x.len())).expect("row broadcast").to_owned();
        let y = system.forward(rep.view(), theta)?;
        let est = estimate_covariance(y.view())?;
        let a = build_mixing_matrix(&est, cfg.n_lambda)?;
        targets.row_mut(i).assign(&Array1::from_iter(a.iter().copied()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.fit.seed);
    let mut order: Vec<usize> = (0..n_probes).collect();
    order.shuffle(&mut rng);
    let n_val = ((n_probes as f64) * cfg.fit.val_fraction).round() as usize;
    let (val_idx, train_idx) = order.split_at(n_val);
    let (xt, yt) = (q.select(Axis(0), train_idx), targets.select(Axis(0), train_idx));
    let (xv, yv) = (q.select(Axis(0), val_idx), targets.select(Axis(0), val_idx));
    let (predictor, fit) = fit_regression(xt.view(), yt.view(), xv.view(), yv.view(), &cfg.fit, &mut rng)?;
    fit.check_gate(cfg.fit.gate)?;
    let model = NoiseModel {
        out_dim,
        n_lambda: cfg.n_lambda,
        n_repeat: cfg.n_repeat,
        predictor,
    };

    let mut err = 0.0;
    for (i, qi) in xv.rows().into_iter().enumerate() {
        let pred = model.predict_covariance(qi)?;
        let a_t = yv.slice(s![i, ..]).to_owned().into_shape_with_order((out_dim, cfg.n_lambda)).expect("target shape");
        err += frobenius_relative(pred.view(), a_t.dot(&a_t.t()).view());
    }
    let val_cov_relative_error = if n_val > 0 { err / n_val as f64 } else { 0.0 };
    Ok((model, NoiseFitReport { fit, val_cov_relative_error }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn two_point_covariance() {
        let e = estimate_covariance(array![[1.0, 0.0], [-1.0, 0.0]].view()).unwrap();
        assert_eq!(e.mean, array![0.0, 0.0]);
        assert_eq!(e.cov, array![[2.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn identical_samples_zero_cov() {
        let e = estimate_covariance(array![[0.3, 0.4], [0.3, 0.4], [0.3, 0.4]].view()).unwrap();
        assert!(e.cov.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_sample_rejected() {
        assert!(matches!(
            estimate_covariance(array![[1.0]].view()),
            Err(PatError::InsufficientData { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn rank_one_mixing() {
        let cov = array![[9.0, 12.0], [12.0, 16.0]];
        let a = mixing_from_cov(cov.view(), 1).unwrap();
        assert_abs_diff_eq!(a[[0, 0]], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a[[1, 0]], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_mixing() {
        let a = mixing_from_cov(Array2::<f64>::eye(2).view(), 2).unwrap();
        let r = a.dot(&a.t());
        assert!(frobenius((&r - &Array2::<f64>::eye(2)).view()) < 1e-15);
    }

    #[test]
    fn negative_eigenvalue_rejected() {
        let cov = array![[1.0, 0.0], [0.0, -1e-6]];
        assert!(matches!(mixing_from_cov(cov.view(), 2), Err(PatError::NotPsd { .. })));
        let tiny = array![[1.0, 0.0], [0.0, -1e-12]];
        assert!(mixing_from_cov(tiny.view(), 2).is_ok());
    }

    #[test]
    fn eigenvalues_descending() {
        let cov = array![[1.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 2.0]];
        let a = mixing_from_cov(cov.view(), 3).unwrap();
        let norms: Vec<f64> = a.columns().into_iter().map(|c| c.dot(&c)).collect();
        assert_abs_diff_eq!(norms[0], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(norms[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(norms[2], 1.0, epsilon = 1e-12);
    }
}
