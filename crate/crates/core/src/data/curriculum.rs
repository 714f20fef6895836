use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HeadTailSplit, Interaction};
use crate::error::{Error, Result};

/// The many-shot set Ω* and the few-shot set Ω(k).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumDatasets {
    pub omega_star: Vec<Interaction>,
    pub omega_k: Vec<Interaction>,
    pub k: u64,
    pub sampling_seed: u64,
}

/// Row positions of `rows` grouped by item id.
fn positions_by_item(rows: &[Interaction], n_items: usize) -> Vec<Vec<usize>> {
    let mut by_item = vec![Vec::new(); n_items];
    for (pos, r) in rows.iter().enumerate() {
        by_item[r.item as usize].push(pos);
    }
    by_item
}

/// Keeps exactly `k` uniformly drawn rows of every head item. Rows of
/// items for which `keep_all` returns true are kept whole; other items are
/// dropped. Output preserves input order.
fn cap_head_items(
    rows: &[Interaction],
    split: &HeadTailSplit,
    seed: u64,
    keep_all: impl Fn(u32) -> bool,
) -> Result<Vec<Interaction>> {
    let k = split.k_threshold as usize;
    let by_item = positions_by_item(rows, split.n_items());
    let mut keep = vec![false; rows.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (item, positions) in by_item.iter().enumerate() {
        if split.is_head[item] {
            if positions.len() < k {
                return Err(Error::Data(format!(
                    "head item {item} has {} training rows, fewer than k = {k}",
                    positions.len()
                )));
            }
            for j in sample(&mut rng, positions.len(), k).into_iter() {
                keep[positions[j]] = true;
            }
        } else if keep_all(item as u32) {
            for &p in positions {
                keep[p] = true;
            }
        }
    }
    Ok(rows
        .iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(*r))
        .collect())
}

/// Ω* is the training split verbatim. Ω(k) keeps a seeded uniform sample of
/// exactly k rows for each head item and every row of each tail item.
pub fn build_curriculum_sets(train: &[Interaction], split: &HeadTailSplit, seed: u64) -> Result<CurriculumDatasets> {
    let omega_k = cap_head_items(train, split, seed, |_| true)?;
    let sets = CurriculumDatasets {
        omega_star: train.to_vec(),
        omega_k,
        k: split.k_threshold,
        sampling_seed: seed,
    };
    let tail_rows = train.iter().filter(|r| !split.is_head[r.item as usize]).count();
    let expected = split.k_threshold as usize * split.head_items.len() + tail_rows;
    assert_eq!(sets.omega_k.len(), expected, "|Ω(k)| must equal k·|I_h| + Σ tail counts");
    assert_eq!(sets.omega_star.len(), train.len());
    Ok(sets)
}

/// Head-only variant: Ω* holds every row of the head items and Ω(k) a
/// seeded sample of k rows per head item; tail items are absent from both.
pub fn head_only_curriculum_sets(train: &[Interaction], split: &HeadTailSplit, seed: u64) -> Result<CurriculumDatasets> {
    let omega_star: Vec<Interaction> = train.iter().filter(|r| split.is_head[r.item as usize]).copied().collect();
    let omega_k = cap_head_items(&omega_star, split, seed, |_| false)?;
    Ok(CurriculumDatasets {
        omega_star,
        omega_k,
        k: split.k_threshold,
        sampling_seed: seed,
    })
}
