//! Layer primitives, losses, and the concrete network architectures.

mod layer;
mod loss;
mod model;
mod spec;

pub use layer::{
    backward_tapes, forward_stack, stack_output_dim, ControlRecord, Layer, LayerTape, Mode, PhysicalLayer, Recorder,
    System,
};
pub use loss::{
    bound_penalty, loss_and_error_vector, primary_loss, ConstraintTarget, ConstraintTerm, LossEval, LossSpec,
    PrimaryLoss, Targets,
};
pub use model::{check_dims, forward_model, Checkpoint, ForwardPass, GradientEval, PnnModel};
pub use spec::{plate_spec, shg_vowel_spec, vowel_numerical_spec, ArchSpec, KernelSpec, LayerSpec, SystemSpec};

use crate::error::Result;
use crate::physics::PlateConvolution;

/// Vowel network with `n_layers` SHG stages (three by default).
pub fn build_vowel_numerical(n_layers: usize, seed: u64) -> Result<PnnModel> {
    if n_layers == 0 {
        return Err(crate::PatError::Config("need at least one physical layer".into()));
    }
    PnnModel::build(&vowel_numerical_spec(n_layers, seed))
}

pub fn build_shg_vowel(n_layers: usize, seed: u64) -> Result<PnnModel> {
    if n_layers == 0 {
        return Err(crate::PatError::Config("need at least one physical layer".into()));
    }
    PnnModel::build(&shg_vowel_spec(n_layers, seed))
}

pub fn build_plate_classifier(plate: &PlateConvolution, seed: u64) -> Result<PnnModel> {
    let kernel = KernelSpec::Values {
        values: plate.kernel().to_vec(),
    };
    PnnModel::build(&plate_spec(kernel, plate.dim(), seed)?)
}
