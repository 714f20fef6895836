use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::TrainingConfig;
use super::curve::CurvePoint;
use super::stream::StreamPolicy;
use super::trainer::{derive_seed, streams, train_mirec, train_stages, Stage, TrainingData};
use crate::data::{head_only_curriculum_sets, Interaction, ProcessedDataset};
use crate::error::{Error, Result};
use crate::model::{meta_map, EmbeddingTable, FrozenParams, MetaMapper, ModelSpec, Scorer, TwoTowerParams};
use crate::data::EncodedFeatures;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    TwoTower,
    Oversample,
    Undersample,
    ClassBalance,
    Logq,
    Head2tail,
    Tail2head,
    TwoTower2,
    MirecM,
    MirecC,
    Mirec,
}

impl Regime {
    pub const ALL: [Regime; 11] = [
        Regime::TwoTower,
        Regime::Oversample,
        Regime::Undersample,
        Regime::ClassBalance,
        Regime::Logq,
        Regime::Head2tail,
        Regime::Tail2head,
        Regime::TwoTower2,
        Regime::MirecM,
        Regime::MirecC,
        Regime::Mirec,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::TwoTower => "two_tower",
            Regime::Oversample => "oversample",
            Regime::Undersample => "undersample",
            Regime::ClassBalance => "class_balance",
            Regime::Logq => "logq",
            Regime::Head2tail => "head2tail",
            Regime::Tail2head => "tail2head",
            Regime::TwoTower2 => "two_tower_2",
            Regime::MirecM => "mirec_m",
            Regime::MirecC => "mirec_c",
            Regime::Mirec => "mirec",
        }
    }

    /// Regimes trained as two stages of `epochs_per_stage` each; the rest
    /// run `2 × epochs_per_stage` epochs.
    pub fn is_curriculum(self) -> bool {
        matches!(
            self,
            Regime::Head2tail | Regime::Tail2head | Regime::MirecM | Regime::MirecC | Regime::Mirec
        )
    }

    pub fn names() -> Vec<&'static str> {
        Self::ALL.iter().map(|r| r.as_str()).collect()
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::UnknownRegime {
                given: s.to_string(),
                valid: Self::names().join(", "),
            })
    }
}

/// Trained parameters of one regime.
#[derive(Clone, Debug)]
pub enum TrainedModel {
    Single(TwoTowerParams),
    /// Two independently initialized backbones mixed at score level.
    Pair(TwoTowerParams, TwoTowerParams),
    Mirec {
        theta_star: TwoTowerParams,
        theta_few: TwoTowerParams,
        mapper: MetaMapper,
    },
}

impl TrainedModel {
    /// Scorer over all users and items. `lambda_p` weighs the many-shot
    /// (or first) model in the two-component kinds.
    pub fn scorer(&self, features: &EncodedFeatures, lambda_p: f64) -> Result<Scorer> {
        match self {
            TrainedModel::Single(t) => Ok(Scorer::single(EmbeddingTable::compute(t, features)?)),
            TrainedModel::Pair(a, b) => {
                let ta = (lambda_p != 0.0).then(|| EmbeddingTable::compute(a, features)).transpose()?;
                let tb = (lambda_p != 1.0).then(|| EmbeddingTable::compute(b, features)).transpose()?;
                blend(lambda_p, ta, tb)
            }
            TrainedModel::Mirec {
                theta_star,
                theta_few,
                mapper,
            } => {
                let ta = (lambda_p != 0.0).then(|| EmbeddingTable::compute(theta_star, features)).transpose()?;
                let tb = if lambda_p != 1.0 {
                    Some(EmbeddingTable::compute(&meta_map(theta_few, mapper)?, features)?)
                } else {
                    None
                };
                blend(lambda_p, ta, tb)
            }
        }
    }
}

fn blend(lambda_p: f64, a: Option<EmbeddingTable>, b: Option<EmbeddingTable>) -> Result<Scorer> {
    match (a, b) {
        (Some(a), Some(b)) => Scorer::blend(lambda_p, a, b),
        (Some(a), None) => Ok(Scorer::single(a)),
        (None, Some(b)) => Ok(Scorer::single(b)),
        (None, None) => unreachable!("λ_p cannot be both 0 and 1"),
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub regime: Regime,
    pub model: TrainedModel,
    pub curve: Vec<CurvePoint>,
    /// Parameters at the end of the first stage, for staged regimes.
    pub stage_snapshots: Vec<(String, TwoTowerParams)>,
}

/// Class-balanced weights `(1 − β) / (1 − β^n_i)` for items with `n_i > 0`,
/// scaled so they sum to the number of such items. Items without rows get 0.
pub fn class_balance_weights(counts: &[u64], beta: f64) -> Vec<f64> {
    let raw: Vec<f64> = counts
        .iter()
        .map(|&n| if n == 0 { 0.0 } else { (1.0 - beta) / (1.0 - beta.powf(n as f64)) })
        .collect();
    let present = counts.iter().filter(|&&n| n > 0).count() as f64;
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w * present / total).collect()
}

fn filter_rows(rows: &[Interaction], keep: impl Fn(&Interaction) -> bool) -> Vec<Interaction> {
    rows.iter().copied().filter(|r| keep(r)).collect()
}

fn single_stage<'a>(name: &str, rows: &'a [Interaction], epochs: usize, lr: f64) -> Stage<'a> {
    Stage {
        name: name.into(),
        rows,
        policy: StreamPolicy::Plain,
        epochs,
        lr,
        logq: None,
        item_weights: None,
    }
}

/// Trains any regime by its documented recipe.
pub fn train_regime(regime: Regime, dataset: &ProcessedDataset, spec: &ModelSpec, cfg: &TrainingConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = TrainingData {
        features: &dataset.features,
        validation: &validation_rows(dataset),
        head_tail: &dataset.head_tail,
    };
    let train = &dataset.split.train;
    let e = cfg.epochs_per_stage;
    let a = cfg.alpha;
    let a2 = cfg.alpha * cfg.decay_between_stages;
    let many_shot_logq = cfg.loss.use_logq.then_some(cfg.loss.lambda_logq);
    let few_shot_logq = (cfg.loss.use_logq && cfg.logq_on_few_shot).then_some(cfg.loss.lambda_logq);
    let is_head = &dataset.head_tail.is_head;
    let mut curve = Vec::new();
    let mut snapshots = Vec::new();
    let fresh = |stream| TwoTowerParams::new(spec, derive_seed(cfg.seed, stream));

    let model = match regime {
        Regime::TwoTower | Regime::Oversample | Regime::Undersample | Regime::ClassBalance | Regime::Logq => {
            let mut stage = single_stage("omega_star", train, 2 * e, a);
            match regime {
                Regime::Oversample => stage.policy = StreamPolicy::Oversample,
                Regime::Undersample => stage.policy = StreamPolicy::Undersample,
                Regime::ClassBalance => {
                    stage.item_weights = Some(class_balance_weights(&dataset.popularity.counts, cfg.class_balance_beta))
                }
                Regime::Logq => stage.logq = Some(cfg.loss.lambda_logq),
                _ => {}
            }
            let mut theta = fresh(streams::THETA_STAR_INIT)?;
            train_stages(&mut theta, &[stage], &data, cfg, "model", &mut curve)?;
            TrainedModel::Single(theta)
        }
        Regime::Head2tail | Regime::Tail2head => {
            let head = filter_rows(train, |r| is_head[r.item as usize]);
            let tail = filter_rows(train, |r| !is_head[r.item as usize]);
            let (first, second, names) = if regime == Regime::Head2tail {
                (&head, &tail, ("head", "tail"))
            } else {
                (&tail, &head, ("tail", "head"))
            };
            let mut theta = fresh(streams::THETA_STAR_INIT)?;
            train_stages(&mut theta, &[single_stage(names.0, first, e, a)], &data, cfg, "model", &mut curve)?;
            snapshots.push(("stage1".to_string(), theta.clone()));
            let mut cfg2 = cfg.clone();
            cfg2.seed = derive_seed(cfg.seed, streams::SHUFFLE + 2);
            let mark = curve.len();
            train_stages(&mut theta, &[single_stage(names.1, second, e, a2)], &data, &cfg2, "model", &mut curve)?;
            mark_second_stage(&mut curve[mark..]);
            TrainedModel::Single(theta)
        }
        Regime::TwoTower2 => {
            let mut stage = single_stage("omega_star", train, 2 * e, a);
            stage.logq = many_shot_logq;
            let mut first = fresh(streams::THETA_STAR_INIT)?;
            train_stages(&mut first, &[stage.clone()], &data, cfg, "model_a", &mut curve)?;
            let mut second = fresh(streams::SECOND_BACKBONE_INIT)?;
            train_stages(&mut second, &[stage], &data, cfg, "model_b", &mut curve)?;
            TrainedModel::Pair(first, second)
        }
        Regime::MirecC => {
            let mut theta = fresh(streams::THETA_STAR_INIT)?;
            let mut s1 = single_stage("omega_star", &dataset.curriculum.omega_star, e, a);
            s1.logq = many_shot_logq;
            train_stages(&mut theta, &[s1], &data, cfg, "model", &mut curve)?;
            snapshots.push(("stage1".to_string(), theta.clone()));
            let mut s2 = single_stage("omega_k", &dataset.curriculum.omega_k, e, a2);
            s2.logq = few_shot_logq;
            let mut cfg2 = cfg.clone();
            cfg2.seed = derive_seed(cfg.seed, streams::SHUFFLE + 2);
            let mark = curve.len();
            train_stages(&mut theta, &[s2], &data, &cfg2, "model", &mut curve)?;
            mark_second_stage(&mut curve[mark..]);
            TrainedModel::Single(theta)
        }
        Regime::Mirec | Regime::MirecM => {
            let head_only;
            let sets = if regime == Regime::MirecM {
                head_only = head_only_curriculum_sets(train, &dataset.head_tail, dataset.manifest.curriculum_seed)?;
                &head_only
            } else {
                &dataset.curriculum
            };
            let mut theta_star = fresh(streams::THETA_STAR_INIT)?;
            let mut s1 = single_stage("omega_star", &sets.omega_star, e, a);
            s1.logq = many_shot_logq;
            train_stages(&mut theta_star, &[s1], &data, cfg, "theta_star", &mut curve)?;
            let bundle = train_mirec(&sets.omega_k, FrozenParams::new(theta_star), &data, cfg, e, curve)?;
            curve = bundle.curve;
            let (theta_star, _) = bundle.theta_star.into_parts();
            TrainedModel::Mirec {
                theta_star,
                theta_few: bundle.theta_few,
                mapper: bundle.mapper,
            }
        }
    };
    Ok(TrainOutcome {
        regime,
        model,
        curve,
        stage_snapshots: snapshots,
    })
}

fn mark_second_stage(points: &mut [CurvePoint]) {
    for p in points {
        p.stage = 2;
    }
}

/// Looks the regime up by name, then trains it.
pub fn train_baseline(name: &str, dataset: &ProcessedDataset, spec: &ModelSpec, cfg: &TrainingConfig) -> Result<TrainOutcome> {
    train_regime(name.parse()?, dataset, spec, cfg)
}

/// Validation pairs as interaction rows, ordered by user.
pub fn validation_rows(dataset: &ProcessedDataset) -> Vec<Interaction> {
    dataset
        .split
        .validation
        .iter()
        .map(|(&u, &i)| Interaction::positive(u, i, None))
        .collect()
}
