use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ranking::{rank_for_user, CandidatePolicy, RankingResult};
use crate::data::{HeadTailSplit, ProcessedDataset, Slice};
use crate::error::{Error, Result};
use crate::model::Scorer;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceMetrics {
    pub slice: Slice,
    /// `None` when no test item falls in the slice.
    pub hr_at_k: Option<f64>,
    pub ndcg_at_k: Option<f64>,
    pub n_users: usize,
}

pub fn hit(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0
    } else {
        0.0
    }
}

pub fn ndcg_gain(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

/// HR@K and NDCG@K on the overall, head and tail slices, in that order.
pub fn hr_ndcg(results: &[RankingResult], k: usize, split: &HeadTailSplit) -> Result<[SliceMetrics; 3]> {
    if let Some(r) = results.iter().find(|r| r.k != k) {
        return Err(Error::Config(format!("ranking for user {} was cut at K = {}, expected {k}", r.user, r.k)));
    }
    let mut sums = [(0.0, 0.0, 0usize); 3];
    for r in results {
        let (h, n) = (hit(r.rank, k), ndcg_gain(r.rank, k));
        let s = if split.is_head[r.test_item as usize] { 1 } else { 2 };
        for idx in [0, s] {
            sums[idx].0 += h;
            sums[idx].1 += n;
            sums[idx].2 += 1;
        }
    }
    let make = |slice, (h, n, c): (f64, f64, usize)| SliceMetrics {
        slice,
        hr_at_k: (c > 0).then(|| h / c as f64),
        ndcg_at_k: (c > 0).then(|| n / c as f64),
        n_users: c,
    };
    Ok([
        make(Slice::Overall, sums[0]),
        make(Slice::Head, sums[1]),
        make(Slice::Tail, sums[2]),
    ])
}

/// Ranks the test item of every test user.
pub fn rank_test_users(scorer: &Scorer, dataset: &ProcessedDataset, policy: CandidatePolicy, k: usize) -> Vec<RankingResult> {
    let seen = dataset.split.seen_items(dataset.n_users());
    dataset
        .split
        .test
        .iter()
        .map(|(&u, &i)| rank_for_user(scorer, u, i, &seen[u as usize], policy, k))
        .collect()
}

/// Persisted evaluation outcome. Holds nothing that depends on how the
/// scorer was assembled, so equal rankings give equal bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricFile {
    pub regime: String,
    pub dataset_hash: String,
    pub k: usize,
    pub candidate_policy: CandidatePolicy,
    pub slices: Vec<SliceMetrics>,
}

impl MetricFile {
    pub fn slice(&self, slice: Slice) -> Option<&SliceMetrics> {
        self.slices.iter().find(|s| s.slice == slice)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Ranks every test user under `scorer` and summarizes the three slices.
pub fn evaluate_scorer(
    scorer: &Scorer,
    dataset: &ProcessedDataset,
    regime: &str,
    policy: CandidatePolicy,
    k: usize,
) -> Result<MetricFile> {
    if k == 0 {
        return Err(Error::Config("evaluation.k must be at least 1".into()));
    }
    if scorer.n_items() != dataset.n_items() || scorer.n_users() != dataset.n_users() {
        return Err(Error::shape(
            "scorer vs dataset",
            format!("{} users × {} items", dataset.n_users(), dataset.n_items()),
            format!("{} users × {} items", scorer.n_users(), scorer.n_items()),
        ));
    }
    let results = rank_test_users(scorer, dataset, policy, k);
    Ok(MetricFile {
        regime: regime.to_string(),
        dataset_hash: dataset.hash().to_string(),
        k,
        candidate_policy: policy,
        slices: hr_ndcg(&results, k, &dataset.head_tail)?.to_vec(),
    })
}
