//! On-disk processed dataset.
//!
//! A processed dataset directory contains:
//!
//! | file              | columns                                              |
//! |-------------------|------------------------------------------------------|
//! | `manifest.json`   | counts, drop tallies, head/tail summary, hash, CDF   |
//! | `layout.json`     | `{"user": Layout, "item": Layout}`                   |
//! | `users.tsv`       | `user raw_id features`                               |
//! | `items.tsv`       | `item raw_id features <metadata columns>`            |
//! | `train.tsv`       | `user item reward timestamp` (Ω*)                    |
//! | `validation.tsv`  | `user item`                                          |
//! | `test.tsv`        | `user item`                                          |
//! | `omega_k.tsv`     | `user item reward timestamp` (Ω(k))                  |
//! | `popularity.tsv`  | `item count probability slice`                       |
//! | `cdf.tsv`         | `item_fraction interaction_share`                    |
//!
//! All tables are tab-separated with a header row. `features` is a
//! space-separated list of `column:value` pairs; empty timestamps mean
//! "absent". The dataset hash is the SHA-256 of every file except the
//! manifest, each prefixed by its name, in the order listed above.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    build_curriculum_sets, compact, compute_popularity, encode_features, leave_one_out_split, parse_dataset,
    split_head_tail, CurriculumDatasets, DatasetFormat, DatasetSplit, EncodedFeatures, FeatureMatrix, HeadTailSplit,
    IngestReport, Interaction, Layout, ParseOptions, PopularityTable, RawDataset,
};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
const HASHED_FILES: [&str; 8] = [
    "layout.json",
    "users.tsv",
    "items.tsv",
    "train.tsv",
    "validation.tsv",
    "test.tsv",
    "omega_k.tsv",
    "popularity.tsv",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    /// Fraction of the catalog, most popular items first.
    pub item_fraction: f64,
    /// Share of training interactions covered by those items.
    pub interaction_share: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: DatasetFormat,
    pub dataset_hash: String,
    pub n_users: usize,
    pub n_items: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub ingest: IngestReport,
    pub title_vocab_size: usize,
    pub split_seed: u64,
    pub head_fraction: f64,
    pub k_threshold: u64,
    pub n_head_items: usize,
    pub n_tail_items: usize,
    pub omega_star_rows: usize,
    pub omega_k_rows: usize,
    pub curriculum_seed: u64,
    pub cdf: Vec<CdfPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepareOptions {
    pub format: DatasetFormat,
    pub path: PathBuf,
    pub head_fraction: f64,
    pub title_vocab_size: usize,
    pub drop_implicit_ratings: bool,
    pub split_seed: u64,
    pub curriculum_seed: u64,
}

/// Everything the training and evaluation stages read.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessedDataset {
    pub manifest: DatasetManifest,
    pub features: EncodedFeatures,
    pub split: DatasetSplit,
    pub popularity: PopularityTable,
    pub head_tail: HeadTailSplit,
    pub curriculum: CurriculumDatasets,
    pub user_raw_ids: Vec<String>,
    pub item_raw_ids: Vec<String>,
    pub item_metadata_columns: Vec<String>,
    pub item_metadata: Vec<Vec<String>>,
}

const CDF_FRACTIONS: [f64; 10] = [0.001, 0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 1.0];

fn cdf_summary(pop: &PopularityTable) -> Vec<CdfPoint> {
    let mut counts = pop.counts.clone();
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let n = counts.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0u64);
    for c in &counts {
        prefix.push(prefix.last().unwrap() + c);
    }
    CDF_FRACTIONS
        .iter()
        .map(|&f| {
            let top = ((f * n as f64).ceil() as usize).min(n);
            CdfPoint {
                item_fraction: f,
                interaction_share: prefix[top] as f64 / pop.total.max(1) as f64,
            }
        })
        .collect()
}

impl ProcessedDataset {
    /// Runs the full preparation pipeline on a raw dataset directory.
    pub fn prepare(opts: &PrepareOptions) -> Result<Self> {
        let raw = parse_dataset(
            &opts.path,
            opts.format,
            ParseOptions {
                drop_implicit_ratings: opts.drop_implicit_ratings,
            },
        )?;
        Self::from_raw(&raw, opts)
    }

    pub fn from_raw(raw: &RawDataset, opts: &PrepareOptions) -> Result<Self> {
        let has_timestamps = !raw.interactions.is_empty() && raw.interactions.iter().all(|r| r.timestamp.is_some());
        let split = leave_one_out_split(&raw.interactions, has_timestamps, opts.split_seed);
        let (raw, split) = compact(raw, &split);
        if split.train.is_empty() {
            return Err(Error::EmptyTrainingSplit);
        }
        let features = encode_features(&raw, opts.title_vocab_size, Some(&split.train))?;
        let popularity = compute_popularity(&split.train, raw.n_items())?;
        let head_tail = split_head_tail(&popularity, opts.head_fraction)?;
        head_tail.validate(&popularity)?;
        let curriculum = build_curriculum_sets(&split.train, &head_tail, opts.curriculum_seed)?;

        let item_metadata_columns: Vec<String> = raw
            .items
            .first()
            .map(|e| e.metadata.iter().map(|(k, _)| k.clone()).collect())
            .unwrap_or_default();
        let item_metadata = raw
            .items
            .iter()
            .map(|e| e.metadata.iter().map(|(_, v)| v.clone()).collect())
            .collect();

        let manifest = DatasetManifest {
            format: raw.format,
            dataset_hash: String::new(),
            n_users: raw.n_users(),
            n_items: raw.n_items(),
            n_train: split.train.len(),
            n_validation: split.validation.len(),
            n_test: split.test.len(),
            ingest: raw.report.clone(),
            title_vocab_size: opts.title_vocab_size,
            split_seed: opts.split_seed,
            head_fraction: opts.head_fraction,
            k_threshold: head_tail.k_threshold,
            n_head_items: head_tail.head_items.len(),
            n_tail_items: head_tail.tail_items.len(),
            omega_star_rows: curriculum.omega_star.len(),
            omega_k_rows: curriculum.omega_k.len(),
            curriculum_seed: opts.curriculum_seed,
            cdf: cdf_summary(&popularity),
        };
        let mut ds = ProcessedDataset {
            manifest,
            features,
            split,
            popularity,
            head_tail,
            curriculum,
            user_raw_ids: raw.users.iter().map(|e| e.raw_id.clone()).collect(),
            item_raw_ids: raw.items.iter().map(|e| e.raw_id.clone()).collect(),
            item_metadata_columns,
            item_metadata,
        };
        ds.manifest.dataset_hash = hash_files(&ds.render_files()?);
        Ok(ds)
    }

    pub fn n_users(&self) -> usize {
        self.manifest.n_users
    }

    pub fn n_items(&self) -> usize {
        self.manifest.n_items
    }

    pub fn hash(&self) -> &str {
        &self.manifest.dataset_hash
    }

    fn render_files(&self) -> Result<Vec<(&'static str, String)>> {
        let layout = serde_json::to_string_pretty(&BTreeMap::from([
            ("item", &self.features.items.layout),
            ("user", &self.features.users.layout),
        ]))?;
        let mut users = String::from("user\traw_id\tfeatures\n");
        for u in 0..self.n_users() {
            let _ = writeln!(users, "{u}\t{}\t{}", clean(&self.user_raw_ids[u]), features_cell(&self.features.users, u));
        }
        let mut items = String::from("item\traw_id\tfeatures");
        for c in &self.item_metadata_columns {
            items.push('\t');
            items.push_str(c);
        }
        items.push('\n');
        for i in 0..self.n_items() {
            let _ = write!(items, "{i}\t{}\t{}", clean(&self.item_raw_ids[i]), features_cell(&self.features.items, i));
            for v in &self.item_metadata[i] {
                items.push('\t');
                items.push_str(&clean(v));
            }
            items.push('\n');
        }
        let held_out = |t: &BTreeMap<u32, u32>| {
            let mut s = String::from("user\titem\n");
            for (u, i) in t {
                let _ = writeln!(s, "{u}\t{i}");
            }
            s
        };
        let mut pop = String::from("item\tcount\tprobability\tslice\n");
        for i in 0..self.n_items() {
            let _ = writeln!(
                pop,
                "{i}\t{}\t{}\t{}",
                self.popularity.counts[i],
                self.popularity.probabilities[i],
                self.head_tail.slice_of(i as u32)
            );
        }
        Ok(vec![
            ("layout.json", layout),
            ("users.tsv", users),
            ("items.tsv", items),
            ("train.tsv", interactions_table(&self.split.train)),
            ("validation.tsv", held_out(&self.split.validation)),
            ("test.tsv", held_out(&self.split.test)),
            ("omega_k.tsv", interactions_table(&self.curriculum.omega_k)),
            ("popularity.tsv", pop),
        ])
    }

    /// Writes the dataset into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in self.render_files()? {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        let mut cdf = String::from("item_fraction\tinteraction_share\n");
        for c in &self.manifest.cdf {
            let _ = writeln!(cdf, "{}\t{}", c.item_fraction, c.interaction_share);
        }
        let p = dir.join("cdf.tsv");
        fs::write(&p, cdf).map_err(|e| Error::io(&p, e))?;
        let p = dir.join(MANIFEST_FILE);
        fs::write(&p, serde_json::to_string_pretty(&self.manifest)? + "\n").map_err(|e| Error::io(&p, e))?;
        Ok(())
    }

    /// Loads a processed dataset and verifies its hash.
    pub fn read(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<String> {
            let p = dir.join(name);
            fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
        };
        let manifest: DatasetManifest = serde_json::from_str(&read(MANIFEST_FILE)?)?;
        let bodies: Vec<(&'static str, String)> = HASHED_FILES
            .iter()
            .map(|&n| read(n).map(|b| (n, b)))
            .collect::<Result<_>>()?;
        let actual = hash_files(&bodies);
        if actual != manifest.dataset_hash {
            return Err(Error::HashMismatch(format!(
                "{} records {} but its files hash to {actual}",
                dir.join(MANIFEST_FILE).display(),
                manifest.dataset_hash
            )));
        }
        let file = |n: &str| dir.join(n);
        let mut layouts: BTreeMap<String, Layout> = serde_json::from_str(&bodies[0].1)?;
        let user_layout = layouts.remove("user").ok_or_else(|| Error::Data("layout.json lacks `user`".into()))?;
        let item_layout = layouts.remove("item").ok_or_else(|| Error::Data("layout.json lacks `item`".into()))?;

        let (user_raw_ids, users, _) = parse_feature_table(&file("users.tsv"), &bodies[1].1, user_layout)?;
        let (item_raw_ids, items, (item_metadata_columns, item_metadata)) =
            parse_feature_table(&file("items.tsv"), &bodies[2].1, item_layout)?;
        let train = parse_interactions(&file("train.tsv"), &bodies[3].1)?;
        let validation = parse_held_out(&file("validation.tsv"), &bodies[4].1)?;
        let test = parse_held_out(&file("test.tsv"), &bodies[5].1)?;
        let omega_k = parse_interactions(&file("omega_k.tsv"), &bodies[6].1)?;

        let popularity = compute_popularity(&train, manifest.n_items)?;
        let head_tail = split_head_tail(&popularity, manifest.head_fraction)?;
        let curriculum = CurriculumDatasets {
            omega_star: train.clone(),
            omega_k,
            k: head_tail.k_threshold,
            sampling_seed: manifest.curriculum_seed,
        };
        Ok(ProcessedDataset {
            split: DatasetSplit {
                train,
                validation,
                test,
                dropped_users: manifest.ingest.users_below_min_interactions,
            },
            manifest,
            features: EncodedFeatures { users, items },
            popularity,
            head_tail,
            curriculum,
            user_raw_ids,
            item_raw_ids,
            item_metadata_columns,
            item_metadata,
        })
    }
}

fn hash_files(files: &[(&str, String)]) -> String {
    let mut h = Sha256::new();
    for (name, body) in files {
        h.update(name.as_bytes());
        h.update([0u8]);
        h.update((body.len() as u64).to_le_bytes());
        h.update(body.as_bytes());
    }
    hex::encode(h.finalize())
}

fn clean(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

fn features_cell(m: &FeatureMatrix, r: usize) -> String {
    let (idx, val) = m.row(r);
    let mut s = String::new();
    for (k, (i, v)) in idx.iter().zip(val).enumerate() {
        if k > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{i}:{v}");
    }
    s
}

fn interactions_table(rows: &[Interaction]) -> String {
    let mut s = String::from("user\titem\treward\ttimestamp\n");
    for r in rows {
        match r.timestamp {
            Some(t) => {
                let _ = writeln!(s, "{}\t{}\t{}\t{t}", r.user, r.item, r.reward);
            }
            None => {
                let _ = writeln!(s, "{}\t{}\t{}\t", r.user, r.item, r.reward);
            }
        }
    }
    s
}

fn bad(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn num<T: std::str::FromStr>(path: &Path, line: usize, s: &str) -> Result<T> {
    s.parse().map_err(|_| bad(path, line, format!("not a number: `{s}`")))
}

type FeatureTable = (Vec<String>, FeatureMatrix, (Vec<String>, Vec<Vec<String>>));

fn parse_feature_table(path: &Path, body: &str, layout: Layout) -> Result<FeatureTable> {
    let mut lines = body.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split('\t').collect();
    let meta_cols: Vec<String> = header.iter().skip(3).map(|s| s.to_string()).collect();
    let mut ids = Vec::new();
    let mut meta = Vec::new();
    let mut m = FeatureMatrix::new(layout);
    let mut entries = Vec::new();
    for (n, line) in lines.enumerate() {
        let ln = n + 2;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 3 {
            return Err(bad(path, ln, "expected at least 3 columns"));
        }
        if num::<usize>(path, ln, cols[0])? != ids.len() {
            return Err(bad(path, ln, "rows must be numbered consecutively from 0"));
        }
        ids.push(cols[1].to_string());
        entries.clear();
        for pair in cols[2].split(' ').filter(|p| !p.is_empty()) {
            let (c, v) = pair.split_once(':').ok_or_else(|| bad(path, ln, format!("bad feature `{pair}`")))?;
            entries.push((num(path, ln, c)?, num(path, ln, v)?));
        }
        m.push_row(&entries);
        meta.push(cols[3..].iter().map(|s| s.to_string()).collect());
    }
    Ok((ids, m, (meta_cols, meta)))
}

fn parse_interactions(path: &Path, body: &str) -> Result<Vec<Interaction>> {
    body.lines()
        .enumerate()
        .skip(1)
        .map(|(n, line)| {
            let ln = n + 1;
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(bad(path, ln, "expected 4 columns"));
            }
            Ok(Interaction {
                user: num(path, ln, cols[0])?,
                item: num(path, ln, cols[1])?,
                reward: num(path, ln, cols[2])?,
                timestamp: if cols[3].is_empty() { None } else { Some(num(path, ln, cols[3])?) },
            })
        })
        .collect()
}

fn parse_held_out(path: &Path, body: &str) -> Result<BTreeMap<u32, u32>> {
    body.lines()
        .enumerate()
        .skip(1)
        .map(|(n, line)| {
            let ln = n + 1;
            let (u, i) = line.split_once('\t').ok_or_else(|| bad(path, ln, "expected 2 columns"))?;
            Ok((num(path, ln, u)?, num(path, ln, i)?))
        })
        .collect()
}
