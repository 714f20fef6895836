use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Interaction;

/// How the rows of a stage are turned into one epoch's stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamPolicy {
    /// Every row once, shuffled.
    Plain,
    /// The smaller of the head/tail groups is drawn with replacement up to
    /// the size of the larger one.
    Oversample,
    /// The larger of the head/tail groups is subsampled without replacement
    /// down to the size of the smaller one.
    Undersample,
}

/// Builds one epoch's shuffled stream from `rows`.
pub fn epoch_stream<R: Rng + ?Sized>(rows: &[Interaction], policy: StreamPolicy, is_head: &[bool], rng: &mut R) -> Vec<Interaction> {
    let mut out = match policy {
        StreamPolicy::Plain => rows.to_vec(),
        StreamPolicy::Oversample | StreamPolicy::Undersample => {
            let (head, tail): (Vec<Interaction>, Vec<Interaction>) = rows.iter().partition(|r| is_head[r.item as usize]);
            let (small, large) = if head.len() <= tail.len() { (head, tail) } else { (tail, head) };
            if small.is_empty() {
                large
            } else if policy == StreamPolicy::Oversample {
                let mut v = large;
                let n = v.len();
                v.extend_from_slice(&small);
                for _ in small.len()..n {
                    v.push(small[rng.gen_range(0..small.len())]);
                }
                v
            } else {
                let mut v = small;
                let n = v.len();
                for j in sample(rng, large.len(), n).into_iter() {
                    v.push(large[j]);
                }
                v
            }
        }
    };
    out.shuffle(rng);
    out
}
