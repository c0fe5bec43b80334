use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::autodiff::ops::{concat_params, Primitive, RepeatMode};
use crate::autodiff::{backprop_stack, backward_split, forward_split, BackwardContext, SplitFunction, StackLayer, TapeNode};
use crate::error::{check_len, PatError, Result};
use crate::physics::PhysicalSystem;

/// Which function a physical layer uses in a given pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    /// The physical transformation `f_p`.
    Physical,
    /// The digital model `f_m`.
    Model,
}

/// Function assignment for the forward and backward passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mode {
    pub forward: System,
    pub backward: System,
}

impl Mode {
    pub const IDEAL: Mode = Mode {
        forward: System::Physical,
        backward: System::Physical,
    };
    pub const PAT: Mode = Mode {
        forward: System::Physical,
        backward: System::Model,
    };
    pub const IN_SILICO: Mode = Mode {
        forward: System::Model,
        backward: System::Model,
    };
}

/// A physical stage `y = a·f(x, θ) + c`.
///
/// `θ` lives in `param_slot` (absent for parameter-free systems) and the
/// optional digital gain/offset `(a, c)` in `affine_slot`.
#[derive(Clone)]
pub struct PhysicalLayer {
    pub id: usize,
    pub f_p: Arc<dyn PhysicalSystem>,
    pub f_m: Option<Arc<dyn PhysicalSystem>>,
    pub param_slot: Option<usize>,
    pub affine_slot: Option<usize>,
    /// Index into the control records when `(x, θ)` is subject to bound constraints.
    pub control: Option<usize>,
}

impl std::fmt::Debug for PhysicalLayer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PhysicalLayer")
            .field("id", &self.id)
            .field("f_p", &self.f_p.name())
            .field("f_m", &self.f_m.as_ref().map(|m| m.name().to_string()))
            .field("param_slot", &self.param_slot)
            .field("affine_slot", &self.affine_slot)
            .field("control", &self.control)
            .finish()
    }
}

impl PhysicalLayer {
    fn system(&self, which: System) -> Result<Arc<dyn PhysicalSystem>> {
        match which {
            System::Physical => Ok(self.f_p.clone()),
            System::Model => self
                .f_m
                .clone()
                .ok_or_else(|| PatError::Usage(format!("physical layer {} has no digital model attached", self.id))),
        }
    }

    pub fn split(&self, mode: Mode) -> Result<SplitFunction> {
        SplitFunction::new(self.system(mode.forward)?, self.system(mode.backward)?)
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Repeat {
        times: usize,
        mode: RepeatMode,
    },
    /// `y = a·x + b` with scalar `(a, b)`.
    ScalarRescale {
        slot: usize,
    },
    /// `y_i = a_i·x_i + b_i`; the slot holds `[a..., b...]`.
    ElementwiseRescale {
        slot: usize,
    },
    /// `y = [x, θ]`.
    ConcatParams {
        slot: usize,
        control: Option<usize>,
    },
    Physical(PhysicalLayer),
    /// `y = a·s/max(s) + b` per sample.
    RenormRescale {
        slot: usize,
    },
    Crop {
        start: usize,
        len: usize,
    },
    BinSum {
        width: usize,
        average: bool,
    },
    /// `y = inner(x) + a·x`.
    SkipAdd {
        inner: Vec<Layer>,
        slot: usize,
    },
    /// `y = softmax(x / T)`.
    SoftmaxT {
        slot: usize,
    },
    /// `y = Σ w_i·branch_i(x) + b`; the slot holds `[w..., b]`.
    EnsembleSum {
        branches: Vec<Vec<Layer>>,
        slot: usize,
    },
}

/// Forward-time values a layer needs for its backward pass.
#[derive(Debug, Clone)]
pub enum LayerTape {
    Primitive {
        op: Primitive,
        x: Array2<f64>,
        y: Array2<f64>,
    },
    ScalarRescale {
        x: Array2<f64>,
        a: f64,
        slot: usize,
    },
    ElementwiseRescale {
        x: Array2<f64>,
        a: Array1<f64>,
        slot: usize,
    },
    ConcatParams {
        x_dim: usize,
        slot: usize,
        control: Option<usize>,
    },
    Physical {
        split: SplitFunction,
        node: TapeNode,
        param_slot: Option<usize>,
        /// `(a, slot)` when the layer has a digital gain/offset.
        affine: Option<(f64, usize)>,
        control: Option<usize>,
    },
    RenormRescale {
        s: Array2<f64>,
        normalized: Array2<f64>,
        a: f64,
        slot: usize,
    },
    SkipAdd {
        x: Array2<f64>,
        inner: Vec<LayerTape>,
        a: f64,
        slot: usize,
    },
    SoftmaxT {
        x: Array2<f64>,
        y: Array2<f64>,
        t: f64,
        slot: usize,
    },
    EnsembleSum {
        branches: Vec<Vec<LayerTape>>,
        outputs: Vec<Array2<f64>>,
        w: Array1<f64>,
        slot: usize,
    },
}

/// Inputs and parameters seen at a constrained control point.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlRecord {
    pub input: Array2<f64>,
    pub params: Array1<f64>,
}

/// Side records collected during a forward pass.
#[derive(Debug, Clone, Default)]
pub struct Recorder {
    pub controls: Vec<Option<ControlRecord>>,
    /// Input to each physical layer, indexed by layer id.
    pub physical_inputs: Vec<Option<Array2<f64>>>,
}

impl Recorder {
    pub fn new(n_controls: usize, n_physical: usize) -> Self {
        Recorder {
            controls: vec![None; n_controls],
            physical_inputs: vec![None; n_physical],
        }
    }

    fn control(&mut self, idx: usize, input: ArrayView2<f64>, params: ArrayView1<f64>) -> Result<()> {
        let slot = self
            .controls
            .get_mut(idx)
            .ok_or_else(|| PatError::Usage(format!("control index {idx} out of range")))?;
        *slot = Some(ControlRecord {
            input: input.to_owned(),
            params: params.to_owned(),
        });
        Ok(())
    }
}

fn param(params: &[Array1<f64>], slot: usize) -> Result<&Array1<f64>> {
    params
        .get(slot)
        .ok_or_else(|| PatError::Usage(format!("parameter slot {slot} out of range")))
}

impl Layer {
    /// Output width for an input of width `in_dim`.
    pub fn output_dim(&self, in_dim: usize, params: &[Array1<f64>]) -> Result<usize> {
        Ok(match self {
            Layer::Repeat { times, mode } => Primitive::Repeat { times: *times, mode: *mode }.output_dim(in_dim)?,
            Layer::ScalarRescale { slot } | Layer::RenormRescale { slot } => {
                check_len("rescale params", 2, param(params, *slot)?.len())?;
                in_dim
            }
            Layer::ElementwiseRescale { slot } => {
                check_len("elementwise rescale params", 2 * in_dim, param(params, *slot)?.len())?;
                in_dim
            }
            Layer::ConcatParams { slot, .. } => in_dim + param(params, *slot)?.len(),
            Layer::Physical(p) => {
                check_len("physical layer input", p.f_p.input_dim(), in_dim)?;
                let theta_len = p.param_slot.map(|s| param(params, s).map(|v| v.len())).transpose()?.unwrap_or(0);
                check_len("physical layer params", p.f_p.param_dim(), theta_len)?;
                if let Some(s) = p.affine_slot {
                    check_len("physical affine params", 2, param(params, s)?.len())?;
                }
                p.f_p.output_dim()
            }
            Layer::Crop { start, len } => Primitive::Crop { start: *start, len: *len }.output_dim(in_dim)?,
            Layer::BinSum { width, average } => Primitive::BinSum {
                width: *width,
                average: *average,
            }
            .output_dim(in_dim)?,
            Layer::SkipAdd { inner, slot } => {
                check_len("skip weight", 1, param(params, *slot)?.len())?;
                let out = stack_output_dim(inner, in_dim, params)?;
                check_len("skip branch output", in_dim, out)?;
                in_dim
            }
            Layer::SoftmaxT { slot } => {
                check_len("temperature", 1, param(params, *slot)?.len())?;
                in_dim
            }
            Layer::EnsembleSum { branches, slot } => {
                check_len("ensemble weights", branches.len() + 1, param(params, *slot)?.len())?;
                let mut out = None;
                for b in branches {
                    let d = stack_output_dim(b, in_dim, params)?;
                    if let Some(prev) = out {
                        check_len("ensemble branch output", prev, d)?;
                    }
                    out = Some(d);
                }
                out.ok_or_else(|| PatError::Config("ensemble needs at least one branch".into()))?
            }
        })
    }

    pub fn forward(
        &self,
        x: Array2<f64>,
        params: &[Array1<f64>],
        mode: Mode,
        rec: &mut Recorder,
    ) -> Result<(Array2<f64>, LayerTape)> {
        match self {
            Layer::Repeat { times, mode: m } => primitive(Primitive::Repeat { times: *times, mode: *m }, x),
            Layer::Crop { start, len } => primitive(Primitive::Crop { start: *start, len: *len }, x),
            Layer::BinSum { width, average } => primitive(
                Primitive::BinSum {
                    width: *width,
                    average: *average,
                },
                x,
            ),
            Layer::ScalarRescale { slot } => {
                let p = param(params, *slot)?;
                let (a, b) = (p[0], p[1]);
                let y = x.mapv(|v| a * v + b);
                Ok((y, LayerTape::ScalarRescale { x, a, slot: *slot }))
            }
            Layer::ElementwiseRescale { slot } => {
                let p = param(params, *slot)?;
                let d = x.ncols();
                check_len("elementwise rescale params", 2 * d, p.len())?;
                let a = p.slice(s![..d]).to_owned();
                let b = p.slice(s![d..]);
                let y = &x * &a + &b;
                Ok((y, LayerTape::ElementwiseRescale { x, a, slot: *slot }))
            }
            Layer::ConcatParams { slot, control } => {
                let theta = param(params, *slot)?;
                if let Some(c) = control {
                    rec.control(*c, x.view(), theta.view())?;
                }
                let y = concat_params(x.view(), theta.view());
                Ok((
                    y,
                    LayerTape::ConcatParams {
                        x_dim: x.ncols(),
                        slot: *slot,
                        control: *control,
                    },
                ))
            }
            Layer::Physical(p) => {
                let empty = Array1::zeros(0);
                let theta = match p.param_slot {
                    Some(s) => param(params, s)?,
                    None => &empty,
                };
                if let Some(c) = p.control {
                    rec.control(c, x.view(), theta.view())?;
                }
                if let Some(entry) = rec.physical_inputs.get_mut(p.id) {
                    *entry = Some(x.clone());
                }
                let split = p.split(mode)?;
                let (core, node) = forward_split(&split, p.id, x.view(), theta.view())?;
                let (y, affine) = match p.affine_slot {
                    Some(s) => {
                        let ac = param(params, s)?;
                        let (a, c) = (ac[0], ac[1]);
                        (core.mapv(|v| a * v + c), Some((a, s)))
                    }
                    None => (core, None),
                };
                Ok((
                    y,
                    LayerTape::Physical {
                        split,
                        node,
                        param_slot: p.param_slot,
                        affine,
                        control: p.control,
                    },
                ))
            }
            Layer::RenormRescale { slot } => {
                let p = param(params, *slot)?;
                let (a, b) = (p[0], p[1]);
                let normalized = Primitive::MaxNormalize.forward(x.view())?;
                let y = normalized.mapv(|v| a * v + b);
                Ok((
                    y,
                    LayerTape::RenormRescale {
                        s: x,
                        normalized,
                        a,
                        slot: *slot,
                    },
                ))
            }
            Layer::SkipAdd { inner, slot } => {
                let a = param(params, *slot)?[0];
                let (inner_y, inner_tapes) = forward_stack(inner, x.clone(), params, mode, rec)?;
                check_len("skip branch output", x.ncols(), inner_y.ncols())?;
                let y = inner_y + &(&x * a);
                Ok((
                    y,
                    LayerTape::SkipAdd {
                        x,
                        inner: inner_tapes,
                        a,
                        slot: *slot,
                    },
                ))
            }
            Layer::SoftmaxT { slot } => {
                let t = param(params, *slot)?[0];
                let scaled = x.mapv(|v| v / t);
                let y = Primitive::Softmax.forward(scaled.view())?;
                Ok((y.clone(), LayerTape::SoftmaxT { x, y, t, slot: *slot }))
            }
            Layer::EnsembleSum { branches, slot } => {
                let p = param(params, *slot)?;
                check_len("ensemble weights", branches.len() + 1, p.len())?;
                let w = p.slice(s![..branches.len()]).to_owned();
                let bias = p[branches.len()];
                let mut tapes = Vec::with_capacity(branches.len());
                let mut outputs = Vec::with_capacity(branches.len());
                for branch in branches {
                    let (out, t) = forward_stack(branch, x.clone(), params, mode, rec)?;
                    tapes.push(t);
                    outputs.push(out);
                }
                let mut y = Array2::from_elem(outputs[0].raw_dim(), bias);
                for (wi, out) in w.iter().zip(&outputs) {
                    y.scaled_add(*wi, out);
                }
                Ok((
                    y,
                    LayerTape::EnsembleSum {
                        branches: tapes,
                        outputs,
                        w,
                        slot: *slot,
                    },
                ))
            }
        }
    }

    /// Sub-stacks nested inside this layer, for traversal.
    pub fn children(&self) -> Vec<&[Layer]> {
        match self {
            Layer::SkipAdd { inner, .. } => vec![inner.as_slice()],
            Layer::EnsembleSum { branches, .. } => branches.iter().map(Vec::as_slice).collect(),
            _ => Vec::new(),
        }
    }

    pub fn children_mut(&mut self) -> Vec<&mut Vec<Layer>> {
        match self {
            Layer::SkipAdd { inner, .. } => vec![inner],
            Layer::EnsembleSum { branches, .. } => branches.iter_mut().collect(),
            _ => Vec::new(),
        }
    }
}

fn primitive(op: Primitive, x: Array2<f64>) -> Result<(Array2<f64>, LayerTape)> {
    let y = op.forward(x.view())?;
    Ok((y.clone(), LayerTape::Primitive { op, x, y }))
}

pub fn stack_output_dim(layers: &[Layer], in_dim: usize, params: &[Array1<f64>]) -> Result<usize> {
    layers.iter().try_fold(in_dim, |d, l| l.output_dim(d, params))
}

pub fn forward_stack(
    layers: &[Layer],
    x: Array2<f64>,
    params: &[Array1<f64>],
    mode: Mode,
    rec: &mut Recorder,
) -> Result<(Array2<f64>, Vec<LayerTape>)> {
    let mut tapes = Vec::with_capacity(layers.len());
    let mut h = x;
    for layer in layers {
        let (y, t) = layer.forward(h, params, mode, rec)?;
        tapes.push(t);
        h = y;
    }
    Ok((h, tapes))
}

/// Tapes carry everything needed, so the reverse pass runs over tapes alone.
#[derive(Debug, Clone, Copy)]
pub struct TapeStep;

impl StackLayer for TapeStep {
    type Tape = LayerTape;

    fn backward(&self, tape: &LayerTape, g_y: Array2<f64>, ctx: &mut BackwardContext<'_>) -> Result<Array2<f64>> {
        backward_tape(tape, g_y, ctx)
    }
}

pub fn backward_tapes(tapes: &[LayerTape], g: Array2<f64>, ctx: &mut BackwardContext<'_>) -> Result<Array2<f64>> {
    let steps = vec![TapeStep; tapes.len()];
    backprop_stack(&steps, tapes, g, ctx)
}

fn add_injection_input(g: &mut Array2<f64>, ctx: &BackwardContext<'_>, control: Option<usize>) -> Result<()> {
    if let Some(inj) = control.and_then(|c| ctx.injection(c)) {
        if let Some(gi) = &inj.input {
            check_len("injected input gradient", g.ncols(), gi.ncols())?;
            *g += gi;
        }
    }
    Ok(())
}

fn add_injection_params(g: &mut Array1<f64>, ctx: &BackwardContext<'_>, control: Option<usize>) -> Result<()> {
    if let Some(inj) = control.and_then(|c| ctx.injection(c)) {
        if let Some(gp) = &inj.params {
            check_len("injected parameter gradient", g.len(), gp.len())?;
            *g += gp;
        }
    }
    Ok(())
}

fn backward_tape(tape: &LayerTape, g: Array2<f64>, ctx: &mut BackwardContext<'_>) -> Result<Array2<f64>> {
    match tape {
        LayerTape::Primitive { op, x, y } => op.vjp(x.view(), y.view(), g.view()),
        LayerTape::ScalarRescale { x, a, slot } => {
            let ga = (&g * x).sum();
            let gb = g.sum();
            ctx.deposit(*slot, Array1::from(vec![ga, gb]))?;
            Ok(g * *a)
        }
        LayerTape::ElementwiseRescale { x, a, slot } => {
            let ga = (&g * x).sum_axis(Axis(0));
            let gb = g.sum_axis(Axis(0));
            let mut gp = Array1::zeros(2 * a.len());
            gp.slice_mut(s![..a.len()]).assign(&ga);
            gp.slice_mut(s![a.len()..]).assign(&gb);
            ctx.deposit(*slot, gp)?;
            Ok(g * a)
        }
        LayerTape::ConcatParams { x_dim, slot, control } => {
            let mut gx = g.slice(s![.., ..*x_dim]).to_owned();
            let mut gt = g.slice(s![.., *x_dim..]).sum_axis(Axis(0));
            add_injection_input(&mut gx, ctx, *control)?;
            add_injection_params(&mut gt, ctx, *control)?;
            ctx.deposit(*slot, gt)?;
            Ok(gx)
        }
        LayerTape::Physical {
            split,
            node,
            param_slot,
            affine,
            control,
        } => {
            let g_core = match affine {
                Some((a, slot)) => {
                    let ga = (&g * &node.saved_output).sum();
                    let gc = g.sum();
                    ctx.deposit(*slot, Array1::from(vec![ga, gc]))?;
                    g * *a
                }
                None => g,
            };
            let (mut gx, mut gt) = backward_split(split, Some(node), g_core.view())?;
            add_injection_input(&mut gx, ctx, *control)?;
            if let Some(slot) = param_slot {
                add_injection_params(&mut gt, ctx, *control)?;
                ctx.deposit(*slot, gt)?;
            }
            Ok(gx)
        }
        LayerTape::RenormRescale { s, normalized, a, slot } => {
            let ga = (&g * normalized).sum();
            let gb = g.sum();
            ctx.deposit(*slot, Array1::from(vec![ga, gb]))?;
            let gn = g * *a;
            Primitive::MaxNormalize.vjp(s.view(), normalized.view(), gn.view())
        }
        LayerTape::SkipAdd { x, inner, a, slot } => {
            let ga = (&g * x).sum();
            ctx.deposit(*slot, Array1::from(vec![ga]))?;
            let gx_inner = backward_tapes(inner, g.clone(), ctx)?;
            Ok(gx_inner + &(g * *a))
        }
        LayerTape::SoftmaxT { x, y, t, slot } => {
            let scaled = x.mapv(|v| v / t);
            let gu = Primitive::Softmax.vjp(scaled.view(), y.view(), g.view())?;
            let mut gt = 0.0;
            Zip::from(&gu).and(x).for_each(|&gv, &xv| gt += gv * (-xv / (t * t)));
            ctx.deposit(*slot, Array1::from(vec![gt]))?;
            Ok(gu / *t)
        }
        LayerTape::EnsembleSum {
            branches,
            outputs,
            w,
            slot,
        } => {
            let mut gp = Array1::zeros(w.len() + 1);
            for (i, out) in outputs.iter().enumerate() {
                gp[i] = (&g * out).sum();
            }
            gp[w.len()] = g.sum();
            ctx.deposit(*slot, gp)?;
            let mut gx: Option<Array2<f64>> = None;
            for (wi, tapes) in w.iter().zip(branches) {
                let gb = backward_tapes(tapes, &g * *wi, ctx)?;
                gx = Some(match gx {
                    Some(acc) => acc + gb,
                    None => gb,
                });
            }
            gx.ok_or_else(|| PatError::Config("ensemble needs at least one branch".into()))
        }
    }
}
