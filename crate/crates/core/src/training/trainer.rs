use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{TrainingConfig, ThetaInit};
use super::curve::{CurvePoint, SliceAccumulator, SliceLosses};
use super::stream::{epoch_stream, StreamPolicy};
use crate::data::{compute_popularity, EncodedFeatures, HeadTailSplit, Interaction};
use crate::error::{Error, Result};
use crate::model::{
    joint_loss_grad, meta_map, overwrite_with_mapped, softmax_batch_loss, softmax_batch_loss_grad, CandidateMode, FrozenParams, MetaMapper,
    ModelSpec, SoftmaxSpec, TwoTowerParams,
};
use crate::numeric::{clip_grad_norm, Adam, AdamConfig, ParamBlock, Params};

/// Read-only inputs shared by every training routine.
#[derive(Clone, Copy, Debug)]
pub struct TrainingData<'a> {
    pub features: &'a EncodedFeatures,
    pub validation: &'a [Interaction],
    pub head_tail: &'a HeadTailSplit,
}

/// Independent seed for a named purpose, derived from the run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.gen()
}

pub(crate) mod streams {
    pub const THETA_STAR_INIT: u64 = 1;
    pub const THETA_FEW_INIT: u64 = 2;
    pub const SECOND_BACKBONE_INIT: u64 = 3;
    pub const SHUFFLE: u64 = 16;
}

/// One phase of base-learner training on a fixed row set.
#[derive(Clone, Debug)]
pub struct Stage<'a> {
    pub name: String,
    pub rows: &'a [Interaction],
    pub policy: StreamPolicy,
    pub epochs: usize,
    pub lr: f64,
    /// λ_c of the logQ correction, computed from this stage's rows.
    pub logq: Option<f64>,
    pub item_weights: Option<Vec<f64>>,
}

/// Mean validation loss per slice under full-catalog softmax, no logQ.
pub fn validation_losses(theta: &TwoTowerParams, data: &TrainingData) -> Result<SliceLosses> {
    if data.validation.is_empty() {
        return Ok(SliceLosses::default());
    }
    let mut acc = SliceAccumulator::default();
    for chunk in data.validation.chunks(4096) {
        let l = softmax_batch_loss(theta, data.features, chunk, &SoftmaxSpec::plain(CandidateMode::FullCatalog))?;
        acc.add(chunk, &l.row_losses, data.head_tail);
    }
    Ok(acc.finish())
}

fn diverged(e: Error, epoch: usize, step: usize) -> Error {
    match e {
        Error::Diverged { loss, .. } => Error::Diverged { epoch, step, loss },
        other => other,
    }
}

fn clip(blocks: &mut [&mut ParamBlock], cfg: &TrainingConfig) {
    if let Some(c) = cfg.grad_clip {
        clip_grad_norm(blocks, c);
    }
}

/// Trains `theta` through `stages` in order; one Adam state carries over
/// between stages with its step size replaced by each stage's `lr`.
/// Appends one curve record per epoch, labelled `model`.
pub fn train_stages(
    theta: &mut TwoTowerParams,
    stages: &[Stage],
    data: &TrainingData,
    cfg: &TrainingConfig,
    model: &str,
    curve: &mut Vec<CurvePoint>,
) -> Result<()> {
    theta.check_features(data.features)?;
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.alpha), &theta.blocks());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, streams::SHUFFLE));
    let n_items = data.features.items.n_rows();
    let mut epoch_index = curve.iter().filter(|p| p.model == model).count();
    for (si, stage) in stages.iter().enumerate() {
        if stage.epochs == 0 {
            continue;
        }
        if stage.rows.is_empty() {
            return Err(Error::EmptyTrainingSplit);
        }
        adam.set_lr(stage.lr);
        let probs = match stage.logq {
            Some(_) => Some(compute_popularity(stage.rows, n_items)?.probabilities),
            None => None,
        };
        let spec = SoftmaxSpec {
            mode: cfg.candidates,
            logq: probs.as_deref().zip(stage.logq),
            item_weights: stage.item_weights.as_deref(),
        };
        let mut best: Option<(f64, TwoTowerParams)> = None;
        let mut since_best = 0;
        for _ in 0..stage.epochs {
            epoch_index += 1;
            let stream = epoch_stream(stage.rows, stage.policy, &data.head_tail.is_head, &mut rng);
            let mut train = SliceAccumulator::default();
            let mut objective = 0.0;
            let mut n_batches = 0;
            for (step, batch) in stream.chunks(cfg.batch_size).enumerate() {
                let l = softmax_batch_loss_grad(theta, data.features, batch, &spec, 1.0).map_err(|e| diverged(e, epoch_index, step))?;
                let mut blocks = theta.blocks_mut();
                clip(&mut blocks, cfg);
                adam.step(&mut blocks)?;
                train.add(batch, &l.row_losses, data.head_tail);
                objective += l.loss;
                n_batches += 1;
            }
            let validation = if cfg.track_validation || cfg.early_stopping_patience.is_some() {
                validation_losses(theta, data)?
            } else {
                SliceLosses::default()
            };
            curve.push(CurvePoint {
                epoch: epoch_index,
                stage: si + 1,
                stage_name: stage.name.clone(),
                model: model.to_string(),
                objective: objective / n_batches.max(1) as f64,
                train: train.finish(),
                validation,
                distance: None,
            });
            log::info!("{model} {} epoch {epoch_index}: objective {:.5}", stage.name, objective / n_batches.max(1) as f64);
            if let (Some(patience), Some(v)) = (cfg.early_stopping_patience, validation.overall) {
                if best.as_ref().is_none_or(|(b, _)| v < *b) {
                    best = Some((v, theta.clone()));
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= patience {
                        log::info!("{model}: early stop after epoch {epoch_index}");
                        break;
                    }
                }
            }
        }
        if let Some((_, p)) = best {
            *theta = p;
        }
    }
    Ok(())
}

/// Many-shot training on `rows` for `epochs` epochs from a fresh seeded
/// initialization.
pub fn train_many_shot(
    rows: &[Interaction],
    data: &TrainingData,
    spec: &ModelSpec,
    cfg: &TrainingConfig,
    epochs: usize,
    logq: Option<f64>,
    curve: &mut Vec<CurvePoint>,
) -> Result<TwoTowerParams> {
    let mut theta = TwoTowerParams::new(spec, derive_seed(cfg.seed, streams::THETA_STAR_INIT))?;
    let stage = Stage {
        name: "omega_star".into(),
        rows,
        policy: StreamPolicy::Plain,
        epochs,
        lr: cfg.alpha,
        logq,
        item_weights: None,
    };
    train_stages(&mut theta, &[stage], data, cfg, "theta_star", curve)?;
    Ok(theta)
}

/// Output of the joint stage.
#[derive(Clone, Debug)]
pub struct TrainedBundle {
    pub theta_star: FrozenParams,
    pub theta_few: TwoTowerParams,
    pub mapper: MetaMapper,
    pub curve: Vec<CurvePoint>,
}

/// Joint training of θ and w on `omega_k` against the frozen θ*.
///
/// Per batch: `local_update_steps` Adam(β) steps on θ, then one Adam(γ)
/// step on both w and θ, all on the joint objective.
pub fn train_mirec(
    omega_k: &[Interaction],
    theta_star: FrozenParams,
    data: &TrainingData,
    cfg: &TrainingConfig,
    epochs: usize,
    mut curve: Vec<CurvePoint>,
) -> Result<TrainedBundle> {
    theta_star.verify()?;
    let star = theta_star.get();
    star.check_features(data.features)?;
    let mut theta = match cfg.theta_init {
        ThetaInit::ManyShot => star.clone(),
        ThetaInit::Random => TwoTowerParams::new(&star.spec(), derive_seed(cfg.seed, streams::THETA_FEW_INIT))?,
    };
    theta.zero_grad();
    let mut w = MetaMapper::identity(&theta, cfg.mapper);
    if omega_k.is_empty() && epochs > 0 {
        return Err(Error::EmptyTrainingSplit);
    }

    let mut local = Adam::new(AdamConfig::with_lr(cfg.beta), &theta.blocks());
    let mut global_theta = Adam::new(AdamConfig::with_lr(cfg.gamma), &theta.blocks());
    let mut global_w = Adam::new(AdamConfig::with_lr(cfg.gamma), &w.blocks());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, streams::SHUFFLE + 1));
    let probs = if cfg.logq_on_few_shot && cfg.loss.use_logq {
        Some(compute_popularity(omega_k, data.features.items.n_rows())?.probabilities)
    } else {
        None
    };
    let spec = SoftmaxSpec {
        mode: cfg.candidates,
        logq: probs.as_deref().map(|p| (p, cfg.loss.effective_logq())),
        item_weights: None,
    };
    let lambda = cfg.loss.lambda_reg;
    let first_epoch = curve.iter().filter(|p| p.model == "theta_few").count();

    for e in 0..epochs {
        let epoch_index = first_epoch + e + 1;
        let stream = epoch_stream(omega_k, StreamPolicy::Plain, &data.head_tail.is_head, &mut rng);
        let mut train = SliceAccumulator::default();
        let (mut objective, mut distance, mut n_batches) = (0.0, 0.0, 0usize);
        for (step, batch) in stream.chunks(cfg.batch_size).enumerate() {
            for _ in 0..cfg.local_update_steps {
                if cfg.overwrite_with_mapped {
                    overwrite_with_mapped(&mut theta, &w)?;
                }
                joint_loss_grad(&mut w, &mut theta, star, data.features, batch, &spec, lambda).map_err(|e| diverged(e, epoch_index, step))?;
                w.zero_grad();
                let mut blocks = theta.blocks_mut();
                clip(&mut blocks, cfg);
                local.step(&mut blocks)?;
            }
            let l = joint_loss_grad(&mut w, &mut theta, star, data.features, batch, &spec, lambda).map_err(|e| diverged(e, epoch_index, step))?;
            if !l.total.is_finite() {
                return Err(Error::Diverged {
                    epoch: epoch_index,
                    step,
                    loss: l.total,
                });
            }
            {
                let mut all = w.blocks_mut();
                all.extend(theta.blocks_mut());
                clip(&mut all, cfg);
            }
            global_w.step(&mut w.blocks_mut())?;
            global_theta.step(&mut theta.blocks_mut())?;
            train.add(batch, &l.row_losses, data.head_tail);
            objective += l.total;
            distance += l.distance;
            n_batches += 1;
        }
        theta_star.verify()?;
        let mapped = meta_map(&theta, &w)?;
        let validation = if cfg.track_validation {
            validation_losses(&mapped, data)?
        } else {
            SliceLosses::default()
        };
        let nb = n_batches.max(1) as f64;
        curve.push(CurvePoint {
            epoch: epoch_index,
            stage: 2,
            stage_name: "omega_k".into(),
            model: "theta_few".into(),
            objective: objective / nb,
            train: train.finish(),
            validation,
            distance: Some(distance / nb),
        });
        log::info!("theta_few omega_k epoch {epoch_index}: objective {:.5} distance {:.5}", objective / nb, distance / nb);
    }
    theta_star.verify()?;
    Ok(TrainedBundle {
        theta_star,
        theta_few: theta,
        mapper: w,
        curve,
    })
}
