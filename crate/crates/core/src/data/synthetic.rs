//! Small synthetic datasets in the MovieLens-1M file layout, for tests and
//! demos. Item popularity follows a Zipf law and each user prefers one genre
//! tied to their occupation, so the features carry real signal.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EncodedFeatures, FeatureMatrix, Layout, Segment, SegmentKind};
use crate::error::{Error, Result};

const GENRES: [&str; 6] = ["Action", "Comedy", "Drama", "Horror", "Romance", "Sci-Fi"];
const WORDS: [&[&str]; 6] = [
    &["fist", "fury", "strike", "chase"],
    &["laugh", "silly", "party", "goof"],
    &["tears", "river", "silent", "house"],
    &["night", "blood", "scream", "grave"],
    &["heart", "kiss", "letters", "summer"],
    &["star", "galaxy", "robot", "planet"],
];

#[derive(Clone, Debug)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub min_per_user: usize,
    pub max_per_user: usize,
    pub zipf_exponent: f64,
    /// Multiplicative weight of items in the user's preferred genre.
    pub genre_affinity: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn small(seed: u64) -> Self {
        SyntheticConfig {
            n_users: 60,
            n_items: 40,
            min_per_user: 5,
            max_per_user: 15,
            zipf_exponent: 1.0,
            genre_affinity: 6.0,
            seed,
        }
    }
}

/// Writes `ratings.dat`, `users.dat` and `movies.dat` into `dir`.
pub fn write_movielens_like(dir: &Path, cfg: &SyntheticConfig) -> Result<()> {
    if cfg.max_per_user > cfg.n_items || cfg.min_per_user > cfg.max_per_user {
        return Err(Error::Config("synthetic: per-user interaction bounds do not fit the catalog".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut movies = String::new();
    let mut item_genre = Vec::with_capacity(cfg.n_items);
    for i in 0..cfg.n_items {
        let g = rng.gen_range(0..GENRES.len());
        let mut genres = vec![GENRES[g]];
        if rng.gen_bool(0.3) {
            let g2 = (g + 1 + rng.gen_range(0..GENRES.len() - 1)) % GENRES.len();
            genres.push(GENRES[g2]);
        }
        let w = WORDS[g];
        let title = format!("{} {} {}", w[rng.gen_range(0..w.len())], w[rng.gen_range(0..w.len())], i);
        let year = 1960 + rng.gen_range(0..60);
        let _ = writeln!(movies, "{}::{} ({year})::{}", i + 1, title, genres.join("|"));
        item_genre.push(g);
    }

    let mut users = String::new();
    let mut ratings = String::new();
    let base: Vec<f64> = (0..cfg.n_items)
        .map(|r| 1.0 / ((r + 1) as f64).powf(cfg.zipf_exponent))
        .collect();
    for u in 0..cfg.n_users {
        let occupation = rng.gen_range(0..12usize);
        let preferred = occupation % GENRES.len();
        let gender = if rng.gen_bool(0.5) { "M" } else { "F" };
        let age = [1, 18, 25, 35, 45, 50, 56][rng.gen_range(0..7)];
        let zip = 10000 + rng.gen_range(0..20) * 1000;
        let _ = writeln!(users, "{}::{gender}::{age}::{occupation}::{zip}", u + 1);

        let m = rng.gen_range(cfg.min_per_user..=cfg.max_per_user);
        let mut weights: Vec<f64> = base
            .iter()
            .zip(&item_genre)
            .map(|(&b, &g)| if g == preferred { b * cfg.genre_affinity } else { b })
            .collect();
        let mut ts = 978_300_000 + rng.gen_range(0..100_000i64);
        for _ in 0..m {
            let dist = WeightedIndex::new(&weights).expect("positive weights");
            let item = dist.sample(&mut rng);
            weights[item] = 0.0;
            ts += rng.gen_range(1..5000);
            let _ = writeln!(ratings, "{}::{}::{}::{ts}", u + 1, item + 1, rng.gen_range(1..=5));
        }
    }

    for (name, body) in [("ratings.dat", ratings), ("users.dat", users), ("movies.dat", movies)] {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

fn segment(name: &str, kind: SegmentKind, offset: usize, width: usize) -> Segment {
    Segment {
        name: name.into(),
        kind,
        offset,
        width,
        vocabulary: (0..width).map(|i| i.to_string()).collect(),
        has_oov: false,
        mean: None,
        std: None,
    }
}

/// Hand-sized feature matrices with every segment kind: users carry an id
/// one-hot and one continuous column; items an id one-hot, a three-token
/// bag and one continuous column.
pub fn toy_features(n_users: usize, n_items: usize, seed: u64) -> EncodedFeatures {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let user_layout = Layout {
        segments: vec![
            segment("user_id", SegmentKind::CategoricalOnehot, 0, n_users),
            segment("age", SegmentKind::Continuous, n_users, 1),
        ],
    };
    let item_layout = Layout {
        segments: vec![
            segment("item_id", SegmentKind::CategoricalOnehot, 0, n_items),
            segment("tags", SegmentKind::BagOfWords, n_items, 3),
            segment("year", SegmentKind::Continuous, n_items + 3, 1),
        ],
    };
    let mut users = FeatureMatrix::new(user_layout);
    for u in 0..n_users {
        users.push_row(&[(u as u32, 1.0), (n_users as u32, rng.gen_range(-1.5..1.5))]);
    }
    let mut items = FeatureMatrix::new(item_layout);
    for i in 0..n_items {
        let mut row = vec![(i as u32, 1.0)];
        for t in 0..3u32 {
            let c = rng.gen_range(0..3u32);
            if c > 0 {
                row.push((n_items as u32 + t, c as f64));
            }
        }
        row.push((n_items as u32 + 3, rng.gen_range(-1.5..1.5)));
        items.push_row(&row);
    }
    EncodedFeatures { users, items }
}
