use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use crate::autodiff::ops::{concat_params, split_grad};
use crate::error::{check_len, PatError, Result};
use crate::physics::PhysicalSystem;
use crate::train::optim::{Optimizer, OptimizerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub n_samples: usize,
    /// Inputs and parameters are drawn uniformly from `[input_low, input_high]`.
    pub input_low: f64,
    pub input_high: f64,
    pub val_fraction: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
    pub hidden: Vec<usize>,
    /// Maximum acceptable validation MSE.
    pub gate: Option<f64>,
    pub seed: u64,
    /// Clamp the fitted model's inputs to the sampled box.
    pub clamp_inputs: bool,
    /// Also train on every sample with `[x, θ]` and `y` reversed. Only valid
    /// for systems with that mirror symmetry, such as the SHG surrogate.
    pub reversal_augment: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            n_samples: 2000,
            input_low: 0.0,
            input_high: 1.0,
            val_fraction: 0.2,
            lr: 1e-3,
            batch_size: 64,
            epochs: 200,
            patience: Some(30),
            hidden: vec![256, 128, 64],
            gate: None,
            seed: 0,
            clamp_inputs: true,
            reversal_augment: false,
        }
    }
}

impl FitConfig {
    /// Wide hidden layers `[1000, 500, 300]`, for when samples are plentiful.
    pub fn wide(mut self) -> Self {
        self.hidden = vec![1000, 500, 300];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(PatError::InsufficientData {
                needed: 2,
                got: self.n_samples,
            });
        }
        if !(self.input_high > self.input_low) {
            return Err(PatError::Config("input_high must exceed input_low".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(PatError::Config("val_fraction must be in [0, 1)".into()));
        }
        if self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(PatError::Config("batch_size and lr must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub n_train: usize,
    pub n_val: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    /// Validation RMSE divided by the target standard deviation, averaged over outputs.
    pub val_relative_rmse: f64,
}

impl FitReport {
    pub fn check_gate(&self, gate: Option<f64>) -> Result<()> {
        match gate {
            Some(g) if !(self.val_mse <= g) => Err(PatError::FitQuality {
                achieved: self.val_mse,
                gate: g,
            }),
            _ => Ok(()),
        }
    }
}

/// A fitted MLP standing in for a physical system: `f_m(x, θ) = mlp([x, θ])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DigitalModel {
    pub name: String,
    pub input_dim: usize,
    pub param_dim: usize,
    pub mlp: Mlp,
    /// Inputs are clamped to `[lo, hi]` before the network sees them.
    #[serde(default)]
    pub clamp: Option<[f64; 2]>,
    #[serde(default)]
    pub report: Option<FitReport>,
}

impl DigitalModel {
    pub fn new(name: impl Into<String>, input_dim: usize, param_dim: usize, mlp: Mlp) -> Result<Self> {
        check_len("digital model input", input_dim + param_dim, mlp.input_dim())?;
        Ok(DigitalModel {
            name: name.into(),
            input_dim,
            param_dim,
            mlp,
            clamp: None,
            report: None,
        })
    }

    /// `[x, θ]`, clamped if the model was fitted with a bounded input box.
    pub fn controls(&self, x: ArrayView2<f64>, theta: ArrayView1<f64>) -> Array2<f64> {
        let mut q = concat_params(x, theta);
        if let Some([lo, hi]) = self.clamp {
            q.mapv_inplace(|v| v.clamp(lo, hi));
        }
        q
    }

    /// Copy with every weight multiplied by `1 + level·z`, `z ~ N(0, 1)`.
    pub fn corrupted(&self, level: f64, seed: u64) -> Self {
        let mut out = self.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in out.mlp.params_mut() {
            for v in p.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v *= 1.0 + level * z;
            }
        }
        out.name = format!("{}-corrupt{level}", self.name);
        out
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| PatError::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PatError::io(path, e))?;
        let m: DigitalModel = serde_json::from_str(&text)?;
        check_len("digital model input", m.input_dim + m.param_dim, m.mlp.input_dim())?;
        Ok(m)
    }
}

impl PhysicalSystem for DigitalModel {
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
        self.mlp.output_dim()
    }
    fn forward(&self, x: ArrayView2<f64>, theta: ArrayView1<f64>) -> Result<Array2<f64>> {
        check_len("digital model input", self.input_dim, x.ncols())?;
        check_len("digital model params", self.param_dim, theta.len())?;
        self.mlp.forward(self.controls(x, theta).view())
    }
    fn vjp(&self, x: ArrayView2<f64>, theta: ArrayView1<f64>, g_y: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
        check_len("digital model input", self.input_dim, x.ncols())?;
        check_len("digital model params", self.param_dim, theta.len())?;
        let q = concat_params(x, theta);
        let mut gq = self.mlp.input_vjp(self.controls(x, theta).view(), g_y)?;
        if let Some([lo, hi]) = self.clamp {
            // same convention as the clamp primitive: no gradient at or beyond the bounds
            ndarray::Zip::from(&mut gq).and(&q).for_each(|g, &v| {
                if !(v > lo && v < hi) {
                    *g = 0.0;
                }
            });
        }
        Ok(split_grad(gq, self.input_dim))
    }
}

/// `(∂mlp/∂x)ᵀ g_y` and `(∂mlp/∂θ)ᵀ g_y` for an MLP on `concat(x, θ)`.
pub fn mlp_vjp(model: &Mlp, x: ArrayView2<f64>, theta: ArrayView1<f64>, g_y: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    check_len("mlp input", model.input_dim(), x.ncols() + theta.len())?;
    let gq = model.input_vjp(concat_params(x, theta).view(), g_y)?;
    Ok(split_grad(gq, x.ncols()))
}

/// Draw `(x, θ)` pairs uniformly and record the system's outputs.
/// Returns `(q, y)` with `q = [x, θ]` per row.
pub fn sample_system(system: &dyn PhysicalSystem, cfg: &FitConfig, rng: &mut ChaCha8Rng) -> Result<(Array2<f64>, Array2<f64>)> {
    let (nx, np) = (system.input_dim(), system.param_dim());
    let q = Array2::from_shape_fn((cfg.n_samples, nx + np), |_| rng.gen_range(cfg.input_low..cfg.input_high));
    let mut y = Array2::zeros((cfg.n_samples, system.output_dim()));
    for (i, row) in q.rows().into_iter().enumerate() {
        let x = row.slice(s![..nx]).insert_axis(Axis(0));
        let out = system.forward(x, row.slice(s![nx..]))?;
        y.row_mut(i).assign(&out.row(0));
    }
    Ok((q, y))
}

/// Fit the mean digital model without enforcing the quality gate.
pub fn fit_mean_model_unchecked(system: &dyn PhysicalSystem, cfg: &FitConfig) -> Result<DigitalModel> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (q, y) = sample_system(system, cfg, &mut rng)?;
    let n_val = ((cfg.n_samples as f64) * cfg.val_fraction).round() as usize;
    let n_train = cfg.n_samples - n_val;
    let (mut q_train, mut y_train) = (q.slice(s![..n_train, ..]).to_owned(), y.slice(s![..n_train, ..]).to_owned());
    if cfg.reversal_augment {
        let flip = |a: &Array2<f64>| a.slice(s![.., ..;-1]).to_owned();
        q_train = ndarray::concatenate![Axis(0), q_train, flip(&q_train)];
        y_train = ndarray::concatenate![Axis(0), y_train, flip(&y_train)];
    }
    let (mlp, mut report) = fit_regression(
        q_train.view(),
        y_train.view(),
        q.slice(s![n_train.., ..]),
        y.slice(s![n_train.., ..]),
        cfg,
        &mut rng,
    )?;
    report.n_train = n_train;
    log::info!(
        "fitted {} model: train MSE {:.3e}, val MSE {:.3e} after {} epochs",
        system.name(),
        report.train_mse,
        report.val_mse,
        report.epochs_run
    );
    let mut model = DigitalModel::new(format!("model-{}", system.name()), system.input_dim(), system.param_dim(), mlp)?;
    model.report = Some(report);
    if cfg.clamp_inputs {
        model.clamp = Some([cfg.input_low, cfg.input_high]);
    }
    Ok(model)
}

/// Fit `f_m` to samples of `system`; fails if the validation MSE exceeds `cfg.gate`.
pub fn fit_mean_model(system: &dyn PhysicalSystem, cfg: &FitConfig) -> Result<DigitalModel> {
    let model = fit_mean_model_unchecked(system, cfg)?;
    model.report.as_ref().expect("set by fit").check_gate(cfg.gate)?;
    Ok(model)
}

/// Mean-squared error over all entries.
pub fn mse(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    (&pred - &target).mapv(|v| v * v).mean().unwrap_or(0.0)
}

/// Minibatch Adam on standardized targets with early stopping on validation MSE.
pub(crate) fn fit_regression(
    x_train: ArrayView2<f64>,
    y_train: ArrayView2<f64>,
    x_val: ArrayView2<f64>,
    y_val: ArrayView2<f64>,
    cfg: &FitConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Mlp, FitReport)> {
    let n_train = x_train.nrows();
    if n_train == 0 {
        return Err(PatError::InsufficientData { needed: 1, got: 0 });
    }
    let out_dim = y_train.ncols();
    let mut dims = vec![x_train.ncols()];
    dims.extend(&cfg.hidden);
    dims.push(out_dim);
    let mut mlp = Mlp::new(&dims, rng)?;

    // Train on standardized inputs and fold the affine into the first layer at the end.
    let in_mean = x_train.mean_axis(Axis(0)).expect("non-empty");
    let in_std = x_train
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > 1e-12 { s } else { 1.0 });
    let xs_train = (&x_train - &in_mean) / &in_std;
    let xs_val = (&x_val - &in_mean) / &in_std;

    let mean = y_train.mean_axis(Axis(0)).expect("non-empty");
    let std = y_train
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > 1e-12 { s } else { 1.0 });
    mlp.set_output_affine(std.clone(), mean)?;
    let inv_var = std.mapv(|s| 1.0 / (s * s));

    let has_val = x_val.nrows() > 0;
    let eval_val = |m: &Mlp| -> Result<f64> {
        if has_val {
            Ok(mse(m.forward(xs_val.view())?.view(), y_val))
        } else {
            Ok(mse(m.forward(xs_train.view())?.view(), y_train))
        }
    };

    let mut opt = Optimizer::new(OptimizerConfig::adam(cfg.lr), 2 * (dims.len() - 1));
    let mut best = (eval_val(&mlp)?, mlp.clone(), 0usize);
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut epochs_run = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let xb = xs_train.select(Axis(0), chunk);
            let yb = y_train.select(Axis(0), chunk);
            let (pred, trace) = mlp.forward_trace(xb.view())?;
            // Loss is the mean over batch and outputs of the standardized squared error.
            let scale = 2.0 / (chunk.len() * out_dim) as f64;
            let g = (&pred - &yb) * &inv_var * scale;
            let grads = mlp.backward(&trace, g.view(), true)?.1.expect("requested");
            let slices = grads.slices();
            for (slot, p) in mlp.params_mut().into_iter().enumerate() {
                opt.step(slot, p, slices[slot])?;
            }
        }
        epochs_run = epoch;
        let v = eval_val(&mlp)?;
        if !v.is_finite() {
            return Err(PatError::NanLoss);
        }
        if v < best.0 {
            best = (v, mlp.clone(), epoch);
        } else if cfg.patience.is_some_and(|p| epoch - best.2 >= p) {
            break;
        }
    }
    let (_, mut mlp, best_epoch) = best;
    mlp.fold_input_affine(&in_mean, &in_std)?;
    let train_mse = mse(mlp.forward(x_train)?.view(), y_train);
    let val_mse = if has_val { mse(mlp.forward(x_val)?.view(), y_val) } else { train_mse };
    let val_relative_rmse = if has_val {
        let err = &mlp.forward(x_val)? - &y_val;
        let per_out = err.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty");
        (per_out.mapv(f64::sqrt) / &std).mean().unwrap_or(0.0)
    } else {
        0.0
    };
    Ok((
        mlp,
        FitReport {
            n_train,
            n_val: x_val.nrows(),
            epochs_run,
            best_epoch,
            train_mse,
            val_mse,
            val_relative_rmse,
        },
    ))
}
