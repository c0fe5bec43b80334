use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{backward_tapes, forward_stack, stack_output_dim, ControlRecord, Layer, LayerTape, Mode, PhysicalLayer, Recorder};
use super::loss::{loss_and_error_vector, LossEval, LossSpec, Targets};
use super::spec::{ArchSpec, LayerSpec};
use crate::autodiff::ops::argmax;
use crate::autodiff::{BackwardContext, GradientSet};
use crate::error::{PatError, Result};
use crate::physics::PhysicalSystem;

/// A physical neural network: an ordered layer stack plus its parameters.
#[derive(Debug, Clone)]
pub struct PnnModel {
    spec: ArchSpec,
    layers: Vec<Layer>,
    params: Vec<Array1<f64>>,
    slot_names: Vec<String>,
    frozen: Vec<bool>,
    n_controls: usize,
    n_physical: usize,
    output_dim: usize,
}

/// Everything recorded by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub output: Array2<f64>,
    pub tapes: Vec<LayerTape>,
    pub controls: Vec<Option<ControlRecord>>,
    /// Input to each physical layer, by layer id.
    pub physical_inputs: Vec<Array2<f64>>,
}

/// Loss, gradients and the forward pass they came from.
#[derive(Debug, Clone)]
pub struct GradientEval {
    pub loss: LossEval,
    pub grads: GradientSet,
    pub g_input: Array2<f64>,
    pub pass: ForwardPass,
}

struct Builder {
    rng: ChaCha8Rng,
    params: Vec<Array1<f64>>,
    names: Vec<String>,
    n_controls: usize,
    n_physical: usize,
}

impl Builder {
    fn slot(&mut self, name: String, values: Array1<f64>) -> usize {
        self.params.push(values);
        self.names.push(name);
        self.params.len() - 1
    }

    fn uniform(&mut self, n: usize, range: [f64; 2]) -> Array1<f64> {
        Array1::from_shape_fn(n, |_| self.rng.gen_range(range[0]..range[1]))
    }

    fn stack(&mut self, specs: &[LayerSpec], mut dim: usize) -> Result<(Vec<Layer>, usize)> {
        let mut out = Vec::with_capacity(specs.len());
        for spec in specs {
            let (layer, d) = self.layer(spec, dim)?;
            out.push(layer);
            dim = d;
        }
        Ok((out, dim))
    }

    fn layer(&mut self, spec: &LayerSpec, dim: usize) -> Result<(Layer, usize)> {
        let idx = self.params.len();
        let layer = match spec {
            LayerSpec::Repeat { times, mode } => Layer::Repeat {
                times: *times,
                mode: *mode,
            },
            LayerSpec::ScalarRescale { a, b } => Layer::ScalarRescale {
                slot: self.slot(format!("scalar_rescale.{idx}"), Array1::from(vec![*a, *b])),
            },
            LayerSpec::ElementwiseRescale { a, b } => {
                let mut v = Array1::from_elem(2 * dim, *b);
                v.slice_mut(ndarray::s![..dim]).fill(*a);
                Layer::ElementwiseRescale {
                    slot: self.slot(format!("elementwise_rescale.{idx}"), v),
                }
            }
            LayerSpec::ConcatParams { n, init, monitored } => {
                let theta = self.uniform(*n, *init);
                let control = monitored.then(|| {
                    self.n_controls += 1;
                    self.n_controls - 1
                });
                Layer::ConcatParams {
                    slot: self.slot(format!("theta.{idx}"), theta),
                    control,
                }
            }
            LayerSpec::Physical {
                system,
                init,
                affine,
                monitored,
            } => {
                let f_p = system.build()?;
                let id = self.n_physical;
                self.n_physical += 1;
                let param_slot = (f_p.param_dim() > 0).then(|| {
                    let theta = self.uniform(f_p.param_dim(), *init);
                    self.slot(format!("physical{id}.theta"), theta)
                });
                let affine_slot = affine.then(|| self.slot(format!("physical{id}.affine"), Array1::from(vec![1.0, 0.0])));
                let control = monitored.then(|| {
                    self.n_controls += 1;
                    self.n_controls - 1
                });
                Layer::Physical(PhysicalLayer {
                    id,
                    f_p,
                    f_m: None,
                    param_slot,
                    affine_slot,
                    control,
                })
            }
            LayerSpec::RenormRescale { a, b } => Layer::RenormRescale {
                slot: self.slot(format!("renorm_rescale.{idx}"), Array1::from(vec![*a, *b])),
            },
            LayerSpec::Crop { first, last } => {
                if *first == 0 || last < first {
                    return Err(PatError::Config(format!("crop range {first}..{last} is not a one-based inclusive range")));
                }
                Layer::Crop {
                    start: first - 1,
                    len: last - first + 1,
                }
            }
            LayerSpec::BinSum { width, average } => Layer::BinSum {
                width: *width,
                average: *average,
            },
            LayerSpec::SkipAdd { inner, weight } => {
                let slot = self.slot(format!("skip.{idx}"), Array1::from(vec![*weight]));
                let (inner, _) = self.stack(inner, dim)?;
                Layer::SkipAdd { inner, slot }
            }
            LayerSpec::SoftmaxT { temperature } => Layer::SoftmaxT {
                slot: self.slot(format!("temperature.{idx}"), Array1::from(vec![*temperature])),
            },
            LayerSpec::EnsembleSum { branches, weights, bias } => {
                let n = branches.len();
                let w = match weights {
                    Some(w) if w.len() == n => w.clone(),
                    Some(w) => return Err(PatError::dims("ensemble weights", n, w.len())),
                    None => vec![1.0 / n.max(1) as f64; n],
                };
                let mut p = w;
                p.push(*bias);
                let slot = self.slot(format!("ensemble.{idx}"), Array1::from(p));
                let mut built = Vec::with_capacity(n);
                for b in branches {
                    built.push(self.stack(b, dim)?.0);
                }
                Layer::EnsembleSum { branches: built, slot }
            }
        };
        let out = layer.output_dim(dim, &self.params)?;
        Ok((layer, out))
    }
}

fn visit_physical<'a>(layers: &'a [Layer], out: &mut Vec<&'a PhysicalLayer>) {
    for l in layers {
        if let Layer::Physical(p) = l {
            out.push(p);
        }
        for c in l.children() {
            visit_physical(c, out);
        }
    }
}

fn visit_physical_mut(layers: &mut [Layer], f: &mut dyn FnMut(&mut PhysicalLayer)) {
    for l in layers {
        if let Layer::Physical(p) = l {
            f(p);
        }
        for c in l.children_mut() {
            visit_physical_mut(c, f);
        }
    }
}

impl PnnModel {
    pub fn build(spec: &ArchSpec) -> Result<Self> {
        spec.validate()?;
        let mut b = Builder {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            params: Vec::new(),
            names: Vec::new(),
            n_controls: 0,
            n_physical: 0,
        };
        let (layers, output_dim) = b.stack(&spec.layers, spec.input_dim)?;
        let n = b.params.len();
        Ok(PnnModel {
            spec: spec.clone(),
            layers,
            params: b.params,
            slot_names: b.names,
            frozen: vec![false; n],
            n_controls: b.n_controls,
            n_physical: b.n_physical,
            output_dim,
        })
    }

    pub fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn loss_spec(&self) -> &LossSpec {
        &self.spec.loss
    }

    pub fn set_loss_spec(&mut self, loss: LossSpec) -> Result<()> {
        loss.validate()?;
        self.spec.loss = loss;
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn params(&self) -> &[Array1<f64>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<Array1<f64>>) -> Result<()> {
        crate::error::check_len("parameter slots", self.params.len(), params.len())?;
        for (old, new) in self.params.iter().zip(&params) {
            crate::error::check_len("parameter slot length", old.len(), new.len())?;
        }
        self.params = params;
        Ok(())
    }

    pub fn slot_names(&self) -> &[String] {
        &self.slot_names
    }

    pub fn n_params(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    /// Number of entries across all physical parameter vectors `θ`.
    pub fn n_physical_params(&self) -> usize {
        self.slot_names
            .iter()
            .zip(&self.params)
            .filter(|(n, _)| n.starts_with("theta.") || n.ends_with(".theta"))
            .map(|(_, p)| p.len())
            .sum()
    }

    pub fn is_frozen(&self, slot: usize) -> bool {
        self.frozen.get(slot).copied().unwrap_or(false)
    }

    pub fn freeze(&mut self, slot: usize) {
        if let Some(f) = self.frozen.get_mut(slot) {
            *f = true;
        }
    }

    pub fn freeze_matching(&mut self, prefix: &str) {
        for (i, n) in self.slot_names.iter().enumerate() {
            if n.starts_with(prefix) {
                self.frozen[i] = true;
            }
        }
    }

    pub fn n_physical(&self) -> usize {
        self.n_physical
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    pub fn physical_layers(&self) -> Vec<&PhysicalLayer> {
        let mut out = Vec::new();
        visit_physical(&self.layers, &mut out);
        out
    }

    /// Attach the same digital model to every physical layer.
    pub fn attach_digital_model(&mut self, f_m: Arc<dyn PhysicalSystem>) -> Result<()> {
        let mut err = None;
        visit_physical_mut(&mut self.layers, &mut |p| {
            if let Err(e) = check_same_dims(p.f_p.as_ref(), f_m.as_ref()) {
                err.get_or_insert(e);
            }
            p.f_m = Some(f_m.clone());
        });
        err.map_or(Ok(()), Err)
    }

    /// Attach a digital model to one physical layer.
    pub fn attach_digital_model_to(&mut self, id: usize, f_m: Arc<dyn PhysicalSystem>) -> Result<()> {
        let mut result = Err(PatError::Usage(format!("no physical layer with id {id}")));
        visit_physical_mut(&mut self.layers, &mut |p| {
            if p.id == id {
                result = check_same_dims(p.f_p.as_ref(), f_m.as_ref()).map(|_| p.f_m = Some(f_m.clone()));
            }
        });
        result
    }

    /// Replace the physical transformation of every layer.
    pub fn replace_physical(&mut self, f_p: Arc<dyn PhysicalSystem>) -> Result<()> {
        let mut err = None;
        visit_physical_mut(&mut self.layers, &mut |p| {
            if let Err(e) = check_same_dims(p.f_p.as_ref(), f_p.as_ref()) {
                err.get_or_insert(e);
            }
            p.f_p = f_p.clone();
        });
        err.map_or(Ok(()), Err)
    }

    pub fn forward(&self, x: ArrayView2<f64>, mode: Mode) -> Result<ForwardPass> {
        forward_model(self, x, mode)
    }

    /// Output only, evaluated with `which` in every physical layer.
    pub fn predict(&self, x: ArrayView2<f64>, which: super::layer::System) -> Result<Array2<f64>> {
        let mode = Mode {
            forward: which,
            backward: which,
        };
        Ok(forward_model(self, x, mode)?.output)
    }

    /// Loss and parameter gradients on one batch under `mode`.
    pub fn gradients(&self, x: ArrayView2<f64>, targets: &Targets, mode: Mode) -> Result<GradientEval> {
        let pass = forward_model(self, x, mode)?;
        let loss = loss_and_error_vector(&self.spec.loss, pass.output.view(), targets, &pass.controls)?;
        if !loss.loss.is_finite() {
            return Err(PatError::NanLoss);
        }
        let mut ctx = BackwardContext::new(self.params.len(), &loss.injections);
        let g_input = backward_tapes(&pass.tapes, loss.g_output.clone(), &mut ctx)?;
        let lens: Vec<usize> = self.params.iter().map(|p| p.len()).collect();
        let grads = ctx.finish(&lens)?;
        Ok(GradientEval {
            loss,
            grads,
            g_input,
            pass,
        })
    }

    /// Class predictions from `argmax(o)`.
    pub fn classify(&self, x: ArrayView2<f64>, which: super::layer::System) -> Result<Vec<usize>> {
        let out = self.predict(x, which)?;
        Ok(out.rows().into_iter().map(|r| argmax(r).0).collect())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            slots: self.slot_names.clone(),
            params: self.params.iter().map(|p| p.to_vec()).collect(),
        }
    }

    pub fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        if ck.slots != self.slot_names {
            return Err(PatError::Config(format!(
                "checkpoint slots {:?} do not match architecture slots {:?}",
                ck.slots, self.slot_names
            )));
        }
        let params = ck.params.iter().map(|p| Array1::from(p.clone())).collect();
        self.set_params(params)
    }
}

fn check_same_dims(a: &dyn PhysicalSystem, b: &dyn PhysicalSystem) -> Result<()> {
    crate::error::check_len("model input dim", a.input_dim(), b.input_dim())?;
    crate::error::check_len("model param dim", a.param_dim(), b.param_dim())?;
    crate::error::check_len("model output dim", a.output_dim(), b.output_dim())
}

/// Parameters by slot name, for saving and restoring a trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub slots: Vec<String>,
    pub params: Vec<Vec<f64>>,
}

impl Checkpoint {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| PatError::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PatError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Run every layer with the functions selected by `mode`, recording tapes,
/// constrained control vectors, and the input of every physical layer.
pub fn forward_model(model: &PnnModel, x: ArrayView2<f64>, mode: Mode) -> Result<ForwardPass> {
    crate::error::check_len("model input", model.input_dim(), x.ncols())?;
    let mut rec = Recorder::new(model.n_controls, model.n_physical);
    let (output, tapes) = forward_stack(&model.layers, x.to_owned(), &model.params, mode, &mut rec)?;
    let physical_inputs = rec
        .physical_inputs
        .into_iter()
        .map(|p| p.unwrap_or_else(|| Array2::zeros((0, 0))))
        .collect();
    Ok(ForwardPass {
        output,
        tapes,
        controls: rec.controls,
        physical_inputs,
    })
}

/// Validate the dimension chain of a spec without running data.
pub fn check_dims(spec: &ArchSpec) -> Result<usize> {
    let m = PnnModel::build(spec)?;
    stack_output_dim(&m.layers, spec.input_dim, &m.params)
}
