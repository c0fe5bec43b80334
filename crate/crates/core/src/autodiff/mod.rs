//! Reverse-mode differentiation over ordered layer stacks.
//!
//! The engine is deliberately small: primitives with exact VJPs
//! ([`ops`]), a split node whose forward and backward functions may differ
//! ([`split`]), and a reverse pass over a stack of layers ([`stack`]).

pub mod ops;
pub mod split;
pub mod stack;

pub use ops::{vjp, Chain, Primitive, RepeatMode};
pub use split::{backward_split, forward_split, SplitFunction, TapeNode};
pub use stack::{backprop_stack, BackwardContext, GradientSet, Injection, StackLayer};
