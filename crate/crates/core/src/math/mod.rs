//! Dense networks, the Adam optimizer and policy distribution heads.

pub mod adam;
pub mod dist;
pub mod net;

pub use adam::AdamState;
pub use dist::{DistGrad, HeadKind, PolicyDistribution};
pub use net::{param_count, Activation, DenseNet, ForwardCache, GradientTape};
