//! Many-shot pretraining, the joint few-shot/meta-mapper stage, and every
//! baseline and ablation regime.

mod artifacts;
mod config;
mod curve;
mod regime;
mod stream;
mod trainer;

pub use artifacts::{config_hash, load_run, read_manifest, write_run, RunManifest, CURVE_FILE, RUN_MANIFEST};
pub use config::{ThetaInit, TrainingConfig};
pub use curve::{curve_tsv, CurvePoint, SliceAccumulator, SliceLosses};
pub use regime::{class_balance_weights, train_baseline, train_regime, validation_rows, Regime, TrainOutcome, TrainedModel};
pub use stream::{epoch_stream, StreamPolicy};
pub use trainer::{derive_seed, train_many_shot, train_mirec, train_stages, validation_losses, Stage, TrainedBundle, TrainingData};
