use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Interaction, ItemId, RawDataset, UserId};

/// Leave-one-out partition of the interactions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<Interaction>,
    pub validation: BTreeMap<UserId, ItemId>,
    pub test: BTreeMap<UserId, ItemId>,
    /// Users with fewer than three usable interactions.
    pub dropped_users: usize,
}

impl DatasetSplit {
    /// Per-user set of items seen in train or validation.
    pub fn seen_items(&self, n_users: usize) -> Vec<Vec<ItemId>> {
        let mut seen = vec![Vec::new(); n_users];
        for r in &self.train {
            seen[r.user as usize].push(r.item);
        }
        for (&u, &i) in &self.validation {
            seen[u as usize].push(i);
        }
        for s in &mut seen {
            s.sort_unstable();
            s.dedup();
        }
        seen
    }
}

pub const MIN_USER_INTERACTIONS: usize = 3;

/// Holds out one test and one validation item per user.
///
/// With timestamps the most recent item is the test item and the second most
/// recent the validation item (ties by ascending item id). Without
/// timestamps both are drawn uniformly at random from a seeded stream that
/// visits users in ascending id order.
pub fn leave_one_out_split(interactions: &[Interaction], has_timestamps: bool, seed: u64) -> DatasetSplit {
    let mut by_user: BTreeMap<UserId, Vec<Interaction>> = BTreeMap::new();
    for r in interactions {
        by_user.entry(r.user).or_default().push(*r);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = DatasetSplit::default();

    for (user, mut rows) in by_user {
        if rows.len() < MIN_USER_INTERACTIONS {
            split.dropped_users += 1;
            continue;
        }
        let (test, val) = if has_timestamps {
            rows.sort_by_key(|r| (r.timestamp.unwrap_or(i64::MIN), r.item));
            let test = rows[rows.len() - 1].item;
            match rows.iter().rev().find(|r| r.item != test) {
                Some(v) => (test, v.item),
                None => {
                    split.dropped_users += 1;
                    continue;
                }
            }
        } else {
            let test = rows[rng.gen_range(0..rows.len())].item;
            let others: Vec<ItemId> = rows.iter().map(|r| r.item).filter(|&i| i != test).collect();
            match others.choose(&mut rng) {
                Some(&v) => (test, v),
                None => {
                    split.dropped_users += 1;
                    continue;
                }
            }
        };
        let before = split.train.len();
        split
            .train
            .extend(rows.iter().filter(|r| r.item != test && r.item != val));
        if split.train.len() == before {
            split.dropped_users += 1;
            continue;
        }
        split.test.insert(user, test);
        split.validation.insert(user, val);
    }
    split
}

/// Drops users removed by the split and items left without any interaction,
/// then renumbers both densely, preserving relative order.
pub fn compact(raw: &RawDataset, split: &DatasetSplit) -> (RawDataset, DatasetSplit) {
    let mut user_map = vec![None; raw.n_users()];
    let mut item_used = vec![false; raw.n_items()];
    for (&u, &i) in split.test.iter().chain(split.validation.iter()) {
        user_map[u as usize] = Some(0);
        item_used[i as usize] = true;
    }
    for r in &split.train {
        item_used[r.item as usize] = true;
    }
    let mut next = 0u32;
    for slot in user_map.iter_mut() {
        if slot.is_some() {
            *slot = Some(next);
            next += 1;
        }
    }
    let mut item_map = vec![None; raw.n_items()];
    let mut next = 0u32;
    for (i, used) in item_used.iter().enumerate() {
        if *used {
            item_map[i] = Some(next);
            next += 1;
        }
    }

    let remap = |r: &Interaction| -> Option<Interaction> {
        Some(Interaction {
            user: user_map[r.user as usize]?,
            item: item_map[r.item as usize]?,
            ..*r
        })
    };

    let out_raw = RawDataset {
        format: raw.format,
        user_schema: raw.user_schema.clone(),
        item_schema: raw.item_schema.clone(),
        users: raw
            .users
            .iter()
            .enumerate()
            .filter(|(u, _)| user_map[*u].is_some())
            .map(|(_, e)| e.clone())
            .collect(),
        items: raw
            .items
            .iter()
            .enumerate()
            .filter(|(i, _)| item_map[*i].is_some())
            .map(|(_, e)| e.clone())
            .collect(),
        interactions: raw.interactions.iter().filter_map(remap).collect(),
        report: {
            let mut rep = raw.report.clone();
            rep.users_below_min_interactions = split.dropped_users;
            rep
        },
    };
    let remap_table = |t: &BTreeMap<UserId, ItemId>| -> BTreeMap<UserId, ItemId> {
        t.iter()
            .map(|(&u, &i)| (user_map[u as usize].unwrap(), item_map[i as usize].unwrap()))
            .collect()
    };
    let out_split = DatasetSplit {
        train: split.train.iter().filter_map(remap).collect(),
        validation: remap_table(&split.validation),
        test: remap_table(&split.test),
        dropped_users: split.dropped_users,
    };
    (out_raw, out_split)
}
