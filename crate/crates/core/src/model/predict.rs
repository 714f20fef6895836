use ndarray::{Array1, Array2};

use super::meta::{meta_map, MetaMapper};
use super::two_tower::TwoTowerParams;
use crate::data::EncodedFeatures;
use crate::error::{Error, Result};

/// Tower outputs of one parameter set for every user and item.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub users: Array2<f64>,
    pub items: Array2<f64>,
}

impl EmbeddingTable {
    pub fn compute(theta: &TwoTowerParams, features: &EncodedFeatures) -> Result<Self> {
        theta.check_features(features)?;
        Ok(EmbeddingTable {
            users: theta.user.embed_all(&features.users)?,
            items: theta.item.embed_all(&features.items)?,
        })
    }
}

/// Score-level blend `Σ_c w_c · ⟨q_c(u), e_c(i)⟩` of several parameter sets.
/// Components with zero weight are never evaluated, so a single component
/// with weight 1 reproduces that model's scores exactly.
#[derive(Clone, Debug)]
pub struct Scorer {
    parts: Vec<(f64, EmbeddingTable)>,
}

impl Scorer {
    pub fn single(table: EmbeddingTable) -> Self {
        Scorer { parts: vec![(1.0, table)] }
    }

    /// `λ_p · s(θ*) + (1 − λ_p) · s(F(θ; w))`.
    pub fn blend(lambda_p: f64, many_shot: EmbeddingTable, mapped: EmbeddingTable) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda_p) {
            return Err(Error::Config(format!("lambda_pred must lie in [0, 1], got {lambda_p}")));
        }
        let parts = [(lambda_p, many_shot), (1.0 - lambda_p, mapped)]
            .into_iter()
            .filter(|(w, _)| *w != 0.0)
            .collect();
        Ok(Scorer { parts })
    }

    pub fn n_users(&self) -> usize {
        self.parts[0].1.users.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.parts[0].1.items.nrows()
    }

    /// Scores of `user` against every item.
    pub fn user_scores(&self, user: usize) -> Array1<f64> {
        if let [(w, t)] = self.parts.as_slice() {
            if *w == 1.0 {
                return t.items.dot(&t.users.row(user));
            }
        }
        let mut out = Array1::zeros(self.n_items());
        for (w, t) in &self.parts {
            out.scaled_add(*w, &t.items.dot(&t.users.row(user)));
        }
        out
    }

    pub fn score(&self, user: usize, item: usize) -> f64 {
        let mut s = 0.0;
        for (w, t) in &self.parts {
            let v = t.users.row(user).dot(&t.items.row(item));
            s = if self.parts.len() == 1 && *w == 1.0 { v } else { s + w * v };
        }
        s
    }
}

/// Blended MIRec score of one pair.
pub fn predict_mirec(
    features: &EncodedFeatures,
    user: u32,
    item: u32,
    theta_star: &TwoTowerParams,
    theta_few: &TwoTowerParams,
    w: &MetaMapper,
    lambda_p: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda_p) {
        return Err(Error::Config(format!("lambda_pred must lie in [0, 1], got {lambda_p}")));
    }
    let mut s = 0.0;
    if lambda_p != 0.0 {
        s += lambda_p * theta_star.score(features, user, item)?;
    }
    if lambda_p != 1.0 {
        let mapped = meta_map(theta_few, w)?;
        s += (1.0 - lambda_p) * mapped.score(features, user, item)?;
    }
    Ok(s)
}
