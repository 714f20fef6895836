use serde::{Deserialize, Serialize};

use super::{Interaction, ItemId};
use crate::error::{Error, Result};

/// Positive-interaction counts and sampling probabilities per item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopularityTable {
    /// `counts[i]` is n_i, indexed by item id over the full catalog.
    pub counts: Vec<u64>,
    pub total: u64,
    /// p_i = n_i / total; zero for items absent from training.
    pub probabilities: Vec<f64>,
}

impl PopularityTable {
    pub fn n_items(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, item: ItemId) -> u64 {
        self.counts[item as usize]
    }

    pub fn probability(&self, item: ItemId) -> f64 {
        self.probabilities[item as usize]
    }
}

/// Tallies item frequencies of `train` over a catalog of `n_items` items.
pub fn compute_popularity(train: &[Interaction], n_items: usize) -> Result<PopularityTable> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSplit);
    }
    let mut counts = vec![0u64; n_items];
    for r in train {
        let slot = counts
            .get_mut(r.item as usize)
            .ok_or_else(|| Error::Data(format!("item {} outside catalog of {n_items}", r.item)))?;
        *slot += u64::from(r.reward);
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyTrainingSplit);
    }
    let probabilities = counts.iter().map(|&c| c as f64 / total as f64).collect();
    Ok(PopularityTable {
        counts,
        total,
        probabilities,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slice {
    Overall,
    Head,
    Tail,
}

impl Slice {
    pub const ALL: [Slice; 3] = [Slice::Overall, Slice::Head, Slice::Tail];

    pub fn as_str(self) -> &'static str {
        match self {
            Slice::Overall => "overall",
            Slice::Head => "head",
            Slice::Tail => "tail",
        }
    }
}

impl std::fmt::Display for Slice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Partition of the catalog into head items I_h(k) and tail items I_t(k).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadTailSplit {
    pub head_fraction: f64,
    /// Training count of the least frequent head item.
    pub k_threshold: u64,
    pub head_items: Vec<ItemId>,
    pub tail_items: Vec<ItemId>,
    /// `is_head[i]` for every catalog item.
    pub is_head: Vec<bool>,
}

impl HeadTailSplit {
    pub fn slice_of(&self, item: ItemId) -> Slice {
        if self.is_head[item as usize] {
            Slice::Head
        } else {
            Slice::Tail
        }
    }

    pub fn n_items(&self) -> usize {
        self.is_head.len()
    }

    /// Checks the partition against the popularity table it was built from.
    ///
    /// Tail items may tie with `k_threshold` when the boundary falls inside
    /// a run of equal counts; the id tie rule then decides membership.
    pub fn validate(&self, pop: &PopularityTable) -> Result<()> {
        if self.head_items.len() + self.tail_items.len() != self.n_items() {
            return Err(Error::Data("head/tail sets do not cover the catalog".into()));
        }
        for &i in &self.head_items {
            if !self.is_head[i as usize] || pop.count(i) < self.k_threshold {
                return Err(Error::Data(format!("head item {i} below k = {}", self.k_threshold)));
            }
        }
        for &i in &self.tail_items {
            if self.is_head[i as usize] || pop.count(i) > self.k_threshold {
                return Err(Error::Data(format!("tail item {i} above k = {}", self.k_threshold)));
            }
        }
        Ok(())
    }
}

/// Takes the ⌈fraction·|catalog|⌉ most frequent items as head (ties by
/// ascending item id); k is the count of the last head item.
pub fn split_head_tail(pop: &PopularityTable, head_fraction: f64) -> Result<HeadTailSplit> {
    if !(head_fraction > 0.0 && head_fraction < 1.0) {
        return Err(Error::Config(format!("head_fraction must lie in (0, 1), got {head_fraction}")));
    }
    let n = pop.n_items();
    let mut order: Vec<ItemId> = (0..n as ItemId).collect();
    order.sort_by(|&a, &b| pop.count(b).cmp(&pop.count(a)).then(a.cmp(&b)));
    let n_head = ((head_fraction * n as f64).ceil() as usize).min(n);
    let mut is_head = vec![false; n];
    for &i in &order[..n_head] {
        is_head[i as usize] = true;
    }
    let k_threshold = order[..n_head].last().map_or(0, |&i| pop.count(i));
    let mut head_items: Vec<ItemId> = order[..n_head].to_vec();
    let mut tail_items: Vec<ItemId> = order[n_head..].to_vec();
    head_items.sort_unstable();
    tail_items.sort_unstable();
    Ok(HeadTailSplit {
        head_fraction,
        k_threshold,
        head_items,
        tail_items,
        is_head,
    })
}
