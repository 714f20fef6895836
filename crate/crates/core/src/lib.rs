//! Long-tail item recommendation with dual transfer learning.
//!
//! A two-tower base learner is trained on the full interaction set (the
//! many-shot model) and, jointly with an affine meta-mapper, on a curriculum
//! set where head items are capped at `k` interactions (the few-shot model).
//! The mapper learns how final-layer tower parameters move from few-shot to
//! many-shot; predictions blend the many-shot and the mapped model.

pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numeric;
pub mod training;

pub use error::{Error, Result};
