use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ItemId, UserId};
use crate::model::Scorer;

/// Which items a test item competes against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CandidatePolicy {
    /// Every catalog item except the user's train and validation items.
    #[default]
    FullCatalog,
    /// `n` seeded draws from the items the user never interacted with.
    Sampled { n: usize, seed: u64 },
}

impl fmt::Display for CandidatePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CandidatePolicy::FullCatalog => f.write_str("full_catalog"),
            CandidatePolicy::Sampled { n, seed } => write!(f, "sampled({n}, seed={seed})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingResult {
    pub user: UserId,
    pub test_item: ItemId,
    /// 1-based; ties go to the smaller item id.
    pub rank: usize,
    pub n_candidates: usize,
    pub k: usize,
}

/// Candidate items for one user, ascending by id, always containing
/// `test_item`. `seen` must be sorted.
pub fn candidates_for_user(policy: CandidatePolicy, user: UserId, test_item: ItemId, seen: &[ItemId], n_items: usize) -> Vec<ItemId> {
    let unseen = (0..n_items as ItemId).filter(|i| *i == test_item || seen.binary_search(i).is_err());
    match policy {
        CandidatePolicy::FullCatalog => unseen.collect(),
        CandidatePolicy::Sampled { n, seed } => {
            let pool: Vec<ItemId> = unseen.filter(|&i| i != test_item).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(u64::from(user));
            let mut out: Vec<ItemId> = sample(&mut rng, pool.len(), n.min(pool.len()))
                .into_iter()
                .map(|j| pool[j])
                .collect();
            out.push(test_item);
            out.sort_unstable();
            out
        }
    }
}

/// 1 + the number of candidates scoring above the test item, counting
/// equal scores on smaller ids as above.
///
/// # Panics
/// If `test_item` is not among `candidates`.
pub fn rank_of(scores: &[f64], candidates: &[ItemId], test_item: ItemId) -> usize {
    assert!(candidates.contains(&test_item), "test item {test_item} missing from the candidate set");
    let s_t = scores[test_item as usize];
    1 + candidates
        .iter()
        .filter(|&&j| {
            let s = scores[j as usize];
            s > s_t || (s == s_t && j < test_item)
        })
        .count()
}

pub fn rank_for_user(
    scorer: &Scorer,
    user: UserId,
    test_item: ItemId,
    seen: &[ItemId],
    policy: CandidatePolicy,
    k: usize,
) -> RankingResult {
    let scores = scorer.user_scores(user as usize);
    let candidates = candidates_for_user(policy, user, test_item, seen, scorer.n_items());
    RankingResult {
        user,
        test_item,
        rank: rank_of(scores.as_slice().expect("contiguous scores"), &candidates, test_item),
        n_candidates: candidates.len(),
        k,
    }
}
