//! Dataset ingestion, feature encoding, leave-one-out splitting, popularity
//! statistics and construction of the two curriculum training sets.
//!
//! The pipeline used by `mirec prepare` is
//! [`parse_dataset`] → [`leave_one_out_split`] → [`compact`] →
//! [`encode_features`] → [`compute_popularity`] → [`split_head_tail`] →
//! [`build_curriculum_sets`], and the result is persisted with
//! [`ProcessedDataset::write`].

mod bookcrossing;
mod curriculum;
mod encode;
mod movielens;
mod popularity;
mod split;
mod store;
pub mod synthetic;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use curriculum::{build_curriculum_sets, head_only_curriculum_sets, CurriculumDatasets};
pub use encode::{encode_features, EncodedFeatures, FeatureMatrix, Layout, Segment, SegmentKind};
pub use popularity::{compute_popularity, split_head_tail, HeadTailSplit, PopularityTable, Slice};
pub use split::{compact, leave_one_out_split, DatasetSplit};
pub use store::{CdfPoint, DatasetManifest, PrepareOptions, ProcessedDataset};

use crate::error::{Error, Result};

pub type UserId = u32;
pub type ItemId = u32;

/// One `(user, item, reward)` training triplet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interaction {
    pub user: UserId,
    pub item: ItemId,
    /// Binary reward, 0 or 1.
    pub reward: u8,
    /// Seconds since the epoch; absent for Bookcrossing.
    pub timestamp: Option<i64>,
}

impl Interaction {
    pub fn positive(user: UserId, item: ItemId, timestamp: Option<i64>) -> Self {
        Interaction {
            user,
            item,
            reward: 1,
            timestamp,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    #[serde(alias = "movielens", alias = "ml1m")]
    Movielens1m,
    Bookcrossing,
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "movielens1m" | "movielens" | "ml1m" => Ok(DatasetFormat::Movielens1m),
            "bookcrossing" => Ok(DatasetFormat::Bookcrossing),
            other => Err(Error::Config(format!(
                "unknown dataset format `{other}` (expected movielens1m or bookcrossing)"
            ))),
        }
    }
}

/// How a raw attribute is turned into a feature segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrKind {
    /// Single categorical value, one-hot with an out-of-vocabulary slot.
    Categorical,
    /// A set of categorical values (movie genres), indicator bag with an
    /// out-of-vocabulary slot.
    MultiCategorical,
    /// Real value, z-score normalised.
    Continuous,
    /// Free text, bag-of-words over the most frequent tokens.
    Text,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttrDef {
    pub name: String,
    pub kind: AttrKind,
}

impl AttrDef {
    fn new(name: &str, kind: AttrKind) -> Self {
        AttrDef {
            name: name.to_string(),
            kind,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RawValue {
    Category(String),
    Categories(Vec<String>),
    Number(f64),
    Text(String),
}

/// A user or an item with its raw attributes, aligned with the side's
/// attribute schema.
#[derive(Clone, Debug, PartialEq)]
pub struct RawEntity {
    pub raw_id: String,
    pub values: Vec<RawValue>,
    /// Human-readable columns carried through to embedding exports.
    pub metadata: Vec<(String, String)>,
}

/// Row and drop tallies collected while ingesting raw files.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rating_rows: usize,
    pub malformed_rows: usize,
    pub users_missing_features: usize,
    pub items_missing_features: usize,
    pub interactions_dropped_missing_features: usize,
    pub interactions_dropped_implicit: usize,
    pub users_below_min_interactions: usize,
}

/// Parsed dataset with dense user/item ids: `users[u]` describes user `u`.
#[derive(Clone, Debug)]
pub struct RawDataset {
    pub format: DatasetFormat,
    pub user_schema: Vec<AttrDef>,
    pub item_schema: Vec<AttrDef>,
    pub users: Vec<RawEntity>,
    pub items: Vec<RawEntity>,
    pub interactions: Vec<Interaction>,
    pub report: IngestReport,
}

impl RawDataset {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOptions {
    /// Drop Bookcrossing rows with rating 0 instead of treating them as
    /// positive feedback.
    pub drop_implicit_ratings: bool,
}

/// Reads one of the supported raw dataset layouts from `dir`.
pub fn parse_dataset(dir: &Path, format: DatasetFormat, options: ParseOptions) -> Result<RawDataset> {
    match format {
        DatasetFormat::Movielens1m => movielens::parse(dir),
        DatasetFormat::Bookcrossing => bookcrossing::parse(dir, options),
    }
}

/// Decodes Latin-1 bytes; every byte maps to the code point of equal value.
pub(crate) fn latin1(bytes: &[u8]) -> String {
    bytes.iter().map(|&b| b as char).collect()
}

pub(crate) fn read_latin1(path: &Path) -> Result<String> {
    std::fs::read(path)
        .map(|b| latin1(&b))
        .map_err(|source| Error::Ingest {
            path: path.to_path_buf(),
            source,
        })
}

/// Sort key giving numeric order for numeric ids and lexical order otherwise.
fn id_order(raw: &str) -> (u8, u64, &str) {
    match raw.parse::<u64>() {
        Ok(n) => (0, n, raw),
        Err(_) => (1, 0, raw),
    }
}

/// Builds the dense-id dataset from raw keyed tables. Interactions whose user
/// or item is absent from the attribute tables are dropped and tallied;
/// entities without any interaction are left out of the catalogs.
pub(crate) fn assemble(
    format: DatasetFormat,
    user_schema: Vec<AttrDef>,
    item_schema: Vec<AttrDef>,
    users: std::collections::HashMap<String, RawEntity>,
    items: std::collections::HashMap<String, RawEntity>,
    ratings: Vec<(String, String, Option<i64>)>,
    mut report: IngestReport,
) -> RawDataset {
    use std::collections::{BTreeSet, HashMap};

    let mut used_users = BTreeSet::new();
    let mut used_items = BTreeSet::new();
    let mut kept = Vec::with_capacity(ratings.len());
    for (u, i, ts) in ratings {
        if users.contains_key(&u) && items.contains_key(&i) {
            used_users.insert(u.clone());
            used_items.insert(i.clone());
            kept.push((u, i, ts));
        } else {
            report.interactions_dropped_missing_features += 1;
        }
    }

    let mut user_ids: Vec<String> = used_users.into_iter().collect();
    user_ids.sort_by(|a, b| id_order(a).cmp(&id_order(b)));
    let mut item_ids: Vec<String> = used_items.into_iter().collect();
    item_ids.sort_by(|a, b| id_order(a).cmp(&id_order(b)));

    let user_index: HashMap<&str, u32> = user_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i as u32))
        .collect();
    let item_index: HashMap<&str, u32> = item_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i as u32))
        .collect();

    let interactions = kept
        .iter()
        .map(|(u, i, ts)| Interaction::positive(user_index[u.as_str()], item_index[i.as_str()], *ts))
        .collect();

    let mut users = users;
    let mut items = items;
    RawDataset {
        format,
        user_schema,
        item_schema,
        users: user_ids.iter().map(|id| users.remove(id).expect("user")).collect(),
        items: item_ids.iter().map(|id| items.remove(id).expect("item")).collect(),
        interactions,
        report,
    }
}
