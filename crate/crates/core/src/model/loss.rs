use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::tower::TowerCache;
use super::two_tower::TwoTowerParams;
use crate::data::{EncodedFeatures, Interaction};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Weight λ of the base-learner loss inside the joint objective.
    pub lambda_reg: f64,
    /// Weight λ_c of the logQ correction.
    pub lambda_logq: f64,
    /// Blend λ_p of the many-shot model at prediction time.
    pub lambda_pred: f64,
    pub use_logq: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_reg: 0.001,
            lambda_logq: 0.1,
            lambda_pred: 0.5,
            use_logq: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_reg", self.lambda_reg),
            ("lambda_logq", self.lambda_logq),
            ("lambda_pred", self.lambda_pred),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if self.lambda_pred > 1.0 {
            return Err(Error::Config(format!("lambda_pred must lie in [0, 1], got {}", self.lambda_pred)));
        }
        Ok(())
    }

    /// Correction weight actually applied to logits.
    pub fn effective_logq(&self) -> f64 {
        if self.use_logq {
            self.lambda_logq
        } else {
            0.0
        }
    }
}

/// `s + λ_c · ln p`.
pub fn corrected_score(s: f64, p: f64, lambda_logq: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Data(format!("item probability {p} outside (0, 1]")));
    }
    Ok(s + lambda_logq * p.ln())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateMode {
    /// Softmax over the distinct items of the batch.
    InBatch,
    /// Softmax over every item.
    FullCatalog,
}

/// Everything besides θ and the batch that the softmax loss depends on.
#[derive(Clone, Copy, Debug)]
pub struct SoftmaxSpec<'a> {
    pub mode: CandidateMode,
    /// Item probabilities and λ_c, when the logQ correction is on.
    pub logq: Option<(&'a [f64], f64)>,
    /// Per-item multiplier of each row's loss term.
    pub item_weights: Option<&'a [f64]>,
}

impl<'a> SoftmaxSpec<'a> {
    pub fn plain(mode: CandidateMode) -> Self {
        SoftmaxSpec {
            mode,
            logq: None,
            item_weights: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchLoss {
    /// `(1/|batch|) Σ w_b r_b ℓ_b`.
    pub loss: f64,
    /// Unweighted `−log p(i_b | u_b)` per batch row.
    pub row_losses: Vec<f64>,
    /// In-batch softmax with a single candidate.
    pub degenerate: bool,
}

struct Forward {
    users: Vec<usize>,
    user_pos: Vec<usize>,
    item_pos: Vec<usize>,
    q: Array2<f64>,
    e: Array2<f64>,
    q_cache: TowerCache,
    e_cache: TowerCache,
    /// Row-wise softmax probabilities over candidates.
    probs: Array2<f64>,
    row_losses: Vec<f64>,
    loss: f64,
    degenerate: bool,
}

/// Sorted distinct ids and each input's position among them.
fn dedup(ids: impl Iterator<Item = usize>) -> (Vec<usize>, Vec<usize>) {
    let ids: Vec<usize> = ids.collect();
    let mut index = BTreeMap::new();
    for &i in &ids {
        index.insert(i, 0);
    }
    for (pos, v) in index.values_mut().enumerate() {
        *v = pos;
    }
    let distinct = index.keys().copied().collect();
    let pos = ids.iter().map(|i| index[i]).collect();
    (distinct, pos)
}

fn forward(theta: &TwoTowerParams, features: &EncodedFeatures, batch: &[Interaction], spec: &SoftmaxSpec) -> Result<Forward> {
    if batch.is_empty() {
        return Err(Error::Data("softmax loss over an empty batch".into()));
    }
    let n_items = features.items.n_rows();
    let (users, user_pos) = dedup(batch.iter().map(|r| r.user as usize));
    let (items, item_pos) = match spec.mode {
        CandidateMode::InBatch => dedup(batch.iter().map(|r| r.item as usize)),
        CandidateMode::FullCatalog => ((0..n_items).collect(), batch.iter().map(|r| r.item as usize).collect()),
    };
    let (q, q_cache) = theta.user.forward(&features.users, &users)?;
    let (e, e_cache) = theta.item.forward(&features.items, &items)?;

    let mut logits = q.dot(&e.t());
    if let Some((probs, lambda)) = spec.logq {
        let mut offset = Array1::zeros(items.len());
        for (j, &i) in items.iter().enumerate() {
            let p = *probs.get(i).ok_or_else(|| Error::shape("popularity table", n_items, probs.len()))?;
            if p <= 0.0 {
                return Err(Error::NonPositiveProbability(i as u32));
            }
            offset[j] = lambda * p.ln();
        }
        logits += &offset;
    }

    // row-wise softmax over candidates, one row per distinct user
    let mut probs = logits.clone();
    let mut lse = Vec::with_capacity(users.len());
    for mut row in probs.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - m).exp());
        let z = row.sum();
        row /= z;
        lse.push(m + z.ln());
    }

    let b = batch.len() as f64;
    let mut loss = 0.0;
    let mut row_losses = Vec::with_capacity(batch.len());
    for (k, r) in batch.iter().enumerate() {
        let (u, j) = (user_pos[k], item_pos[k]);
        let l = lse[u] - logits[[u, j]];
        row_losses.push(l);
        let w = spec.item_weights.map_or(1.0, |w| w[r.item as usize]);
        loss += w * r.reward as f64 * l / b;
    }
    if !loss.is_finite() {
        return Err(Error::Diverged {
            epoch: 0,
            step: 0,
            loss,
        });
    }
    let degenerate = spec.mode == CandidateMode::InBatch && items.len() == 1;
    if degenerate {
        log::debug!("in-batch softmax with a single distinct item; loss is 0");
    }
    Ok(Forward {
        users,
        user_pos,
        item_pos,
        q,
        e,
        q_cache,
        e_cache,
        probs,
        row_losses,
        loss,
        degenerate,
    })
}

/// Base-learner loss `−(1/|B|) Σ r log p(i | u)` without gradients.
pub fn softmax_batch_loss(theta: &TwoTowerParams, features: &EncodedFeatures, batch: &[Interaction], spec: &SoftmaxSpec) -> Result<BatchLoss> {
    let f = forward(theta, features, batch, spec)?;
    Ok(BatchLoss {
        loss: f.loss,
        row_losses: f.row_losses,
        degenerate: f.degenerate,
    })
}

/// Same loss; adds `scale · ∂L/∂θ` into θ's gradient accumulators.
pub fn softmax_batch_loss_grad(
    theta: &mut TwoTowerParams,
    features: &EncodedFeatures,
    batch: &[Interaction],
    spec: &SoftmaxSpec,
    scale: f64,
) -> Result<BatchLoss> {
    let f = forward(theta, features, batch, spec)?;
    // ∂L/∂logits[u, ·] = Σ_{rows of u} (w r / B)(softmax − onehot)
    let b = batch.len() as f64;
    let mut coef = vec![0.0; f.users.len()];
    let mut g = Array2::zeros(f.probs.raw_dim());
    for (k, r) in batch.iter().enumerate() {
        let w = spec.item_weights.map_or(1.0, |w| w[r.item as usize]);
        let c = scale * w * r.reward as f64 / b;
        coef[f.user_pos[k]] += c;
        g[[f.user_pos[k], f.item_pos[k]]] -= c;
    }
    for (u, mut row) in g.rows_mut().into_iter().enumerate() {
        row.scaled_add(coef[u], &f.probs.row(u));
    }
    let dq = g.dot(&f.e);
    let de = g.t().dot(&f.q);
    theta.user.backward(&features.users, &f.q_cache, dq.view())?;
    theta.item.backward(&features.items, &f.e_cache, de.view())?;
    Ok(BatchLoss {
        loss: f.loss,
        row_losses: f.row_losses,
        degenerate: f.degenerate,
    })
}
