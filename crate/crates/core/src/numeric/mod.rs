//! Dense f64 building blocks: parameter blocks, MLPs with explicit backward
//! passes, Adam, finite-difference checks and checkpoint serialization.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod mlp;
pub mod param;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::Checkpoint;
pub use mlp::{Linear, Mlp, MlpCache};
pub use param::{clip_grad_norm, ParamBlock, Params};
