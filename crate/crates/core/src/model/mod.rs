//! The two-tower base learner, its softmax loss, the meta-mapper and the
//! blended predictor.

mod loss;
mod meta;
mod predict;
mod tower;
mod two_tower;

pub use loss::{corrected_score, softmax_batch_loss, softmax_batch_loss_grad, BatchLoss, CandidateMode, LossConfig, SoftmaxSpec};
pub use meta::{final_units, joint_loss, joint_loss_grad, meta_map, overwrite_with_mapped, AffineMap, JointLoss, MapperKind, MetaMapper};
pub use predict::{predict_mirec, EmbeddingTable, Scorer};
pub use tower::{SegmentShape, Tower, TowerCache, TowerSpec};
pub use two_tower::{FrozenParams, ModelSpec, TwoTowerParams};
