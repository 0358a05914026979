//! Double-precision reverse-mode differentiation with the layers the models need.

pub mod activation;
pub mod adam;
pub mod checkpoint;
pub mod fd;
pub mod mlp;
pub mod params;
pub mod tape;
pub mod tcn;

pub use activation::{activation, Activation};
pub use adam::{adam_step, AdamState};
pub use fd::{finite_difference_coordinate, finite_difference_gradient, five_point_coordinate, relative_error};
pub use mlp::{mlp_forward, Mlp};
pub use params::{ParamSlice, ParameterStore};
pub use tape::{Adjoints, ConvRef, DenseRef, Tape, Var};
pub use tcn::{causal_conv1d, min_blocks, receptive_field, tcn_forward, Tcn};
