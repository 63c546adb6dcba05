//! Minimal reverse-mode differentiation substrate.
//!
//! Arrays are dense and row-major. A [`Tape`] records the forward pass of the
//! handful of primitives the network needs and replays it backwards in
//! reverse creation order, which keeps gradient accumulation deterministic.

mod adam;
mod array;
mod checkpoint;
mod gradcheck;
mod mlp;
mod params;
mod scalar;
mod tape;

pub use adam::{adam_step, AdamConfig};
pub use array::Array;
pub use checkpoint::{decode_checkpoint, encode_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport};
pub use mlp::{glorot_uniform, init_mlp, mlp_forward, Activation, MlpSpec};
pub use params::{ParamGrads, ParamStore};
pub use scalar::Scalar;
pub use tape::{sigmoid, OpKind, Tape, Var};
