use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::loss::{ConstraintTarget, ConstraintTerm, LossSpec, PrimaryLoss};
use crate::autodiff::RepeatMode;
use crate::error::{PatError, Result};
use crate::physics::{Identity, PhysicalSystem, PlateConvolution, ShgSurrogate};

/// Declarative description of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub input_dim: usize,
    pub layers: Vec<LayerSpec>,
    pub loss: LossSpec,
    /// Seed for parameter initialization.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Repeat {
        times: usize,
        #[serde(default = "interleave")]
        mode: RepeatMode,
    },
    ScalarRescale {
        #[serde(default = "one")]
        a: f64,
        #[serde(default)]
        b: f64,
    },
    ElementwiseRescale {
        #[serde(default = "one")]
        a: f64,
        #[serde(default)]
        b: f64,
    },
    ConcatParams {
        n: usize,
        #[serde(default = "init_range")]
        init: [f64; 2],
        #[serde(default)]
        monitored: bool,
    },
    Physical {
        system: SystemSpec,
        #[serde(default = "init_range")]
        init: [f64; 2],
        /// Trainable digital gain and offset applied to the output.
        #[serde(default)]
        affine: bool,
        #[serde(default)]
        monitored: bool,
    },
    RenormRescale {
        #[serde(default = "one")]
        a: f64,
        #[serde(default)]
        b: f64,
    },
    /// One-based inclusive range.
    Crop {
        first: usize,
        last: usize,
    },
    BinSum {
        width: usize,
        #[serde(default)]
        average: bool,
    },
    SkipAdd {
        inner: Vec<LayerSpec>,
        #[serde(default = "one")]
        weight: f64,
    },
    SoftmaxT {
        #[serde(default = "one")]
        temperature: f64,
    },
    EnsembleSum {
        branches: Vec<Vec<LayerSpec>>,
        /// Defaults to equal weights `1/n`.
        #[serde(default)]
        weights: Option<Vec<f64>>,
        #[serde(default)]
        bias: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Shg {
        input_dim: usize,
        param_dim: usize,
        output_dim: usize,
        #[serde(default = "yes")]
        normalized: bool,
    },
    Plate {
        kernel: KernelSpec,
    },
    Identity {
        dim: usize,
        #[serde(default)]
        param_dim: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Values { values: Vec<f64> },
    /// `c_k = exp(-k/decay)·cos(2πk/period)`, `k = 0..d`.
    DampedCosine { d: usize, decay: f64, period: f64 },
    Impulse { d: usize },
}

fn interleave() -> RepeatMode {
    RepeatMode::Interleave
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn init_range() -> [f64; 2] {
    [0.3, 0.7]
}

impl KernelSpec {
    pub fn build(&self) -> Result<PlateConvolution> {
        match self {
            KernelSpec::Values { values } => PlateConvolution::new(values.clone()),
            KernelSpec::DampedCosine { d, decay, period } => PlateConvolution::damped_oscillator(*d, *decay, *period),
            KernelSpec::Impulse { d } => {
                let mut v = vec![0.0; *d];
                if let Some(first) = v.first_mut() {
                    *first = 1.0;
                }
                PlateConvolution::new(v)
            }
        }
    }
}

impl SystemSpec {
    pub fn build(&self) -> Result<Arc<dyn PhysicalSystem>> {
        Ok(match self {
            SystemSpec::Shg {
                input_dim,
                param_dim,
                output_dim,
                normalized,
            } => Arc::new(ShgSurrogate::general(*input_dim, *param_dim, *output_dim, 1.0, 0.0, *normalized)?),
            SystemSpec::Plate { kernel } => Arc::new(kernel.build()?),
            SystemSpec::Identity { dim, param_dim } => Arc::new(Identity {
                dim: *dim,
                param_dim: *param_dim,
            }),
        })
    }
}

impl ArchSpec {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.input_dim == 0 || self.layers.is_empty() {
            return Err(PatError::Config("architecture needs an input dim and at least one layer".into()));
        }
        Ok(())
    }
}

/// The numerical vowel network: input repeated twice to 24 entries,
/// `n_layers` normalized SHG stages with digital gain/offset, then
/// `o_i = y_{2i+3} + y_{2i+4}` (one-based) for seven classes.
pub fn vowel_numerical_spec(n_layers: usize, seed: u64) -> ArchSpec {
    let mut layers = vec![LayerSpec::Repeat {
        times: 2,
        mode: RepeatMode::Interleave,
    }];
    for _ in 0..n_layers {
        layers.push(LayerSpec::Physical {
            system: SystemSpec::Shg {
                input_dim: 24,
                param_dim: 24,
                output_dim: 24,
                normalized: true,
            },
            init: init_range(),
            affine: true,
            monitored: true,
        });
    }
    layers.push(LayerSpec::Crop { first: 5, last: 18 });
    layers.push(LayerSpec::BinSum { width: 2, average: false });
    ArchSpec {
        input_dim: 12,
        layers,
        loss: LossSpec {
            primary: PrimaryLoss::CrossEntropy,
            constraints: vec![ConstraintTerm {
                target: ConstraintTarget::Controls,
                lambda: 0.02,
                v_min: 0.0,
                v_max: 1.0,
                averaged: false,
            }],
        },
        seed,
    }
}

/// Five-stage SHG vowel network with 52 + 4×50 physical parameters.
pub fn shg_vowel_spec(n_layers: usize, seed: u64) -> ArchSpec {
    let shg = || SystemSpec::Shg {
        input_dim: 100,
        param_dim: 0,
        output_dim: 50,
        normalized: false,
    };
    let mut layers = vec![
        LayerSpec::ScalarRescale { a: 1.0, b: 0.0 },
        LayerSpec::Repeat {
            times: 4,
            mode: RepeatMode::Interleave,
        },
    ];
    for l in 0..n_layers {
        layers.push(LayerSpec::ConcatParams {
            n: if l == 0 { 52 } else { 50 },
            init: init_range(),
            monitored: true,
        });
        layers.push(LayerSpec::Physical {
            system: shg(),
            init: init_range(),
            affine: false,
            monitored: false,
        });
        layers.push(LayerSpec::RenormRescale { a: 1.0, b: 0.0 });
    }
    layers.push(LayerSpec::Crop { first: 12, last: 32 });
    layers.push(LayerSpec::BinSum { width: 3, average: false });
    ArchSpec {
        input_dim: 12,
        layers,
        loss: LossSpec {
            primary: PrimaryLoss::CrossEntropy,
            constraints: vec![
                ConstraintTerm {
                    target: ConstraintTarget::Params,
                    lambda: 0.5,
                    v_min: 0.0,
                    v_max: 1.0,
                    averaged: true,
                },
                ConstraintTerm {
                    target: ConstraintTarget::Inputs,
                    lambda: 2.0,
                    v_min: 0.0,
                    v_max: 1.0,
                    averaged: true,
                },
            ],
        },
        seed,
    }
}

/// Three rescale + plate stages, then outputs `d−60 … d−11` (one-based)
/// averaged in bins of five. At `d = 784` this is outputs 724 … 773.
pub fn plate_spec(kernel: KernelSpec, d: usize, seed: u64) -> Result<ArchSpec> {
    if d < 61 {
        return Err(PatError::Config(format!("plate classifier needs d ≥ 61, got {d}")));
    }
    let mut layers = Vec::new();
    for _ in 0..3 {
        layers.push(LayerSpec::ElementwiseRescale { a: 1.0, b: 0.0 });
        layers.push(LayerSpec::Physical {
            system: SystemSpec::Plate { kernel: kernel.clone() },
            init: init_range(),
            affine: false,
            monitored: false,
        });
    }
    layers.push(LayerSpec::Crop {
        first: d - 60,
        last: d - 11,
    });
    layers.push(LayerSpec::BinSum { width: 5, average: true });
    Ok(ArchSpec {
        input_dim: d,
        layers,
        loss: LossSpec::cross_entropy(),
        seed,
    })
}
