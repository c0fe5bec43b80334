//! Training loops: ideal backpropagation, in-silico training, and
//! physics-aware training over any [`PnnModel`].

pub mod optim;
mod trace;

pub use optim::{scheduled_lr, Optimizer, OptimizerConfig, OptimizerKind};
pub use trace::{fingerprint, hex, RunSummary, TraceRow, TrainingTrace, TRACE_CSV_VERSION};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{primary_loss, Mode, PnnModel, System, Targets};
use crate::autodiff::ops::argmax;
use crate::error::{check_len, PatError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "ideal")]
    IdealBp,
    #[serde(rename = "insilico")]
    InSilico,
    #[serde(rename = "pat")]
    Pat,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Pat, Algorithm::InSilico, Algorithm::IdealBp];

    pub fn mode(self) -> Mode {
        match self {
            Algorithm::IdealBp => Mode::IDEAL,
            Algorithm::InSilico => Mode::IN_SILICO,
            Algorithm::Pat => Mode::PAT,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::IdealBp => "ideal",
            Algorithm::InSilico => "insilico",
            Algorithm::Pat => "pat",
        }
    }

    pub fn needs_model(self) -> bool {
        self != Algorithm::IdealBp
    }
}

impl std::str::FromStr for Algorithm {
    type Err = PatError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ideal" | "idealbp" | "ideal_bp" => Ok(Algorithm::IdealBp),
            "insilico" | "in_silico" => Ok(Algorithm::InSilico),
            "pat" => Ok(Algorithm::Pat),
            other => Err(PatError::Config(format!("unknown algorithm '{other}' (expected pat, insilico or ideal)"))),
        }
    }
}

/// Examples as rows of `x` with matching targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Targets,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Targets) -> Result<Self> {
        check_len("dataset targets", x.nrows(), y.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PatError::NonFinite { layer: "dataset features".into() });
        }
        Ok(Dataset { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), idx),
            y: self.y.select(idx),
        }
    }

    pub fn classes(&self) -> Option<&[usize]> {
        match &self.y {
            Targets::Classes(c) => Some(c),
            Targets::Values(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// `None` trains full-batch.
    #[serde(default = "default_batch")]
    pub batch_size: Option<usize>,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
}

fn default_batch() -> Option<usize> {
    Some(32)
}
fn default_eval_every() -> usize {
    10
}

impl TrainConfig {
    pub fn new(epochs: usize, optimizer: OptimizerConfig, seed: u64) -> Self {
        TrainConfig {
            epochs,
            batch_size: default_batch(),
            optimizer,
            seed,
            eval_every: default_eval_every(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.batch_size == Some(0) {
            return Err(PatError::Config("batch_size must be positive".into()));
        }
        if self.eval_every == 0 {
            return Err(PatError::Config("eval_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Mean primary loss (no constraint terms).
    pub loss: f64,
    pub accuracy: f64,
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
}

/// Mean loss, argmax accuracy and confusion matrix with `which` in every physical layer.
pub fn evaluate(model: &PnnModel, data: &Dataset, which: System) -> Result<Evaluation> {
    let out = model.predict(data.x.view(), which)?;
    evaluate_outputs(model, out.view(), &data.y)
}

fn evaluate_outputs(model: &PnnModel, out: ArrayView2<f64>, y: &Targets) -> Result<Evaluation> {
    let (losses, _) = primary_loss(model.loss_spec().primary, out, y)?;
    let loss = losses.mean().unwrap_or(0.0);
    let (accuracy, confusion) = match y {
        Targets::Classes(cls) => {
            let k = out.ncols();
            let mut confusion = vec![vec![0usize; k]; k];
            let mut correct = 0;
            for (row, &t) in out.rows().into_iter().zip(cls) {
                let p = argmax(row).0;
                confusion[t][p] += 1;
                if p == t {
                    correct += 1;
                }
            }
            (correct as f64 / cls.len().max(1) as f64, confusion)
        }
        Targets::Values(_) => (0.0, Vec::new()),
    };
    Ok(Evaluation { loss, accuracy, confusion })
}

fn training_error(epoch: usize, batch: usize, e: PatError) -> PatError {
    match e {
        PatError::Training { .. } => e,
        other => PatError::Training {
            epoch,
            batch,
            source: Box::new(other),
        },
    }
}

/// One optimizer step on a batch. Returns the batch loss.
pub fn train_step(model: &mut PnnModel, opt: &mut Optimizer, x: ArrayView2<f64>, y: &Targets, alg: Algorithm) -> Result<f64> {
    let eval = model.gradients(x, y, alg.mode())?;
    for (slot, g) in eval.grads.0.iter().enumerate() {
        if model.is_frozen(slot) {
            continue;
        }
        let p = model.params_mut()[slot].as_slice_mut().expect("standard layout");
        opt.step(slot, p, g)?;
    }
    Ok(eval.loss.loss)
}

/// Mini-batch training of `model` on `train` with `alg`, evaluating on
/// `test` every `eval_every` epochs (and at the start and end).
pub fn train(model: &mut PnnModel, train: &Dataset, test: &Dataset, alg: Algorithm, cfg: &TrainConfig) -> Result<TrainingTrace> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(PatError::InsufficientData { needed: 1, got: 0 });
    }
    if alg.needs_model() && model.physical_layers().iter().any(|p| p.f_m.is_none()) {
        return Err(PatError::Usage(format!("{} training needs a digital model on every physical layer", alg.tag())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, model.params().len());
    let batch = cfg.batch_size.unwrap_or(train.len()).min(train.len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut trace = TrainingTrace::new(alg, cfg.seed);

    let record = |model: &PnnModel, epoch: usize, lr: f64, train_loss: Option<f64>, trace: &mut TrainingTrace| -> Result<()> {
        let truth = evaluate(model, test, System::Physical).map_err(|e| training_error(epoch, 0, e))?;
        let predicted = if alg == Algorithm::InSilico {
            Some(evaluate(model, test, System::Model).map_err(|e| training_error(epoch, 0, e))?)
        } else {
            None
        };
        trace.rows.push(TraceRow {
            epoch,
            lr,
            train_loss,
            test_loss: truth.loss,
            test_accuracy: truth.accuracy,
            model_test_loss: predicted.as_ref().map(|p| p.loss),
            model_test_accuracy: predicted.as_ref().map(|p| p.accuracy),
        });
        Ok(())
    };

    record(model, 0, opt.lr(), None, &mut trace)?;
    for epoch in 0..cfg.epochs {
        opt.schedule_lr(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut n_batches = 0;
        for (b, chunk) in order.chunks(batch).enumerate() {
            let xb = train.x.select(Axis(0), chunk);
            let yb = train.y.select(chunk);
            let loss = train_step(model, &mut opt, xb.view(), &yb, alg).map_err(|e| training_error(epoch + 1, b, e))?;
            if !loss.is_finite() {
                return Err(training_error(epoch + 1, b, PatError::NanLoss));
            }
            total += loss;
            n_batches += 1;
        }
        let done = epoch + 1;
        if done % cfg.eval_every == 0 || done == cfg.epochs {
            record(model, done, opt.lr(), Some(total / n_batches as f64), &mut trace)?;
        }
    }
    log::info!(
        "{} finished: test accuracy {:.3}",
        alg.tag(),
        trace.rows.last().map(|r| r.test_accuracy).unwrap_or(0.0)
    );
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_parsing() {
        assert_eq!("PAT".parse::<Algorithm>().unwrap(), Algorithm::Pat);
        assert_eq!("insilico".parse::<Algorithm>().unwrap(), Algorithm::InSilico);
        assert_eq!("ideal".parse::<Algorithm>().unwrap(), Algorithm::IdealBp);
        assert!("sgd".parse::<Algorithm>().is_err());
    }

    #[test]
    fn assignment_rule() {
        assert_eq!(Algorithm::Pat.mode(), Mode { forward: System::Physical, backward: System::Model });
        assert_eq!(Algorithm::InSilico.mode(), Mode { forward: System::Model, backward: System::Model });
        assert_eq!(Algorithm::IdealBp.mode(), Mode { forward: System::Physical, backward: System::Physical });
    }
}
