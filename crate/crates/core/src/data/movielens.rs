//! MovieLens-1M layout: `ratings.dat`, `users.dat`, `movies.dat`, fields
//! separated by `::`, Latin-1 text.

use std::collections::HashMap;
use std::path::Path;

use log::warn;

use super::{assemble, read_latin1, AttrDef, AttrKind, DatasetFormat, IngestReport, RawDataset, RawEntity, RawValue};
use crate::error::Result;

pub const RATINGS_FILE: &str = "ratings.dat";
pub const USERS_FILE: &str = "users.dat";
pub const MOVIES_FILE: &str = "movies.dat";

pub(crate) fn user_schema() -> Vec<AttrDef> {
    vec![
        AttrDef::new("user_id", AttrKind::Categorical),
        AttrDef::new("gender", AttrKind::Categorical),
        AttrDef::new("age", AttrKind::Continuous),
        AttrDef::new("occupation", AttrKind::Categorical),
        AttrDef::new("zipcode", AttrKind::Categorical),
    ]
}

pub(crate) fn item_schema() -> Vec<AttrDef> {
    vec![
        AttrDef::new("item_id", AttrKind::Categorical),
        AttrDef::new("title", AttrKind::Text),
        AttrDef::new("genres", AttrKind::MultiCategorical),
        AttrDef::new("year", AttrKind::Continuous),
    ]
}

fn non_empty(s: &str) -> Option<&str> {
    let s = s.trim();
    (!s.is_empty()).then_some(s)
}

fn parse_user(fields: &[&str]) -> Option<RawEntity> {
    let [id, gender, age, occupation, zip] = fields else {
        return None;
    };
    let id = non_empty(id)?;
    let age: f64 = non_empty(age)?.parse().ok().filter(|a: &f64| a.is_finite())?;
    Some(RawEntity {
        raw_id: id.to_string(),
        values: vec![
            RawValue::Category(id.to_string()),
            RawValue::Category(non_empty(gender)?.to_string()),
            RawValue::Number(age),
            RawValue::Category(non_empty(occupation)?.to_string()),
            RawValue::Category(non_empty(zip)?.to_string()),
        ],
        metadata: Vec::new(),
    })
}

/// Splits `"Toy Story (1995)"` into `("Toy Story", 1995)`.
pub(crate) fn split_title_year(title: &str) -> Option<(String, f64)> {
    let t = title.trim_end();
    let open = t.rfind('(')?;
    let inner = t[open + 1..].strip_suffix(')')?;
    if inner.len() != 4 || !inner.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let year: f64 = inner.parse().ok()?;
    Some((t[..open].trim_end().to_string(), year))
}

fn parse_movie(fields: &[&str]) -> Option<RawEntity> {
    let [id, title, genres] = fields else {
        return None;
    };
    let id = non_empty(id)?;
    let (title, year) = split_title_year(non_empty(title)?)?;
    let genre_list: Vec<String> = non_empty(genres)?
        .split('|')
        .filter_map(non_empty)
        .map(str::to_string)
        .collect();
    if genre_list.is_empty() {
        return None;
    }
    Some(RawEntity {
        raw_id: id.to_string(),
        metadata: vec![
            ("title".to_string(), title.clone()),
            ("genres".to_string(), genre_list.join("|")),
        ],
        values: vec![
            RawValue::Category(id.to_string()),
            RawValue::Text(title),
            RawValue::Categories(genre_list),
            RawValue::Number(year),
        ],
    })
}

pub(crate) fn parse(dir: &Path) -> Result<RawDataset> {
    let ratings_path = dir.join(RATINGS_FILE);
    let users_path = dir.join(USERS_FILE);
    let movies_path = dir.join(MOVIES_FILE);
    let ratings_text = read_latin1(&ratings_path)?;
    let users_text = read_latin1(&users_path)?;
    let movies_text = read_latin1(&movies_path)?;

    let mut report = IngestReport::default();

    let mut users = HashMap::new();
    for (lineno, line) in users_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        match parse_user(&fields) {
            Some(u) => {
                users.insert(u.raw_id.clone(), u);
            }
            None => {
                report.users_missing_features += 1;
                warn!("{}:{}: user dropped (missing or invalid attributes)", users_path.display(), lineno + 1);
            }
        }
    }

    let mut items = HashMap::new();
    for (lineno, line) in movies_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        match parse_movie(&fields) {
            Some(m) => {
                items.insert(m.raw_id.clone(), m);
            }
            None => {
                report.items_missing_features += 1;
                warn!("{}:{}: movie dropped (missing or invalid attributes)", movies_path.display(), lineno + 1);
            }
        }
    }

    let mut ratings = Vec::new();
    for (lineno, line) in ratings_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        report.rating_rows += 1;
        let fields: Vec<&str> = line.split("::").collect();
        let parsed = match fields.as_slice() {
            [u, i, r, ts] => {
                let ok = r.trim().parse::<f64>().is_ok();
                match (non_empty(u), non_empty(i), ts.trim().parse::<i64>()) {
                    (Some(u), Some(i), Ok(ts)) if ok => Some((u.to_string(), i.to_string(), Some(ts))),
                    _ => None,
                }
            }
            _ => None,
        };
        match parsed {
            Some(row) => ratings.push(row),
            None => {
                report.malformed_rows += 1;
                warn!("{}:{}: malformed rating row skipped", ratings_path.display(), lineno + 1);
            }
        }
    }
    if report.malformed_rows > 0 {
        warn!("{} malformed rating rows skipped", report.malformed_rows);
    }

    Ok(assemble(
        DatasetFormat::Movielens1m,
        user_schema(),
        item_schema(),
        users,
        items,
        ratings,
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, ratings: &str, users: &str, movies: &str) {
        fs::write(dir.join(RATINGS_FILE), ratings).unwrap();
        fs::write(dir.join(USERS_FILE), users).unwrap();
        fs::write(dir.join(MOVIES_FILE), movies).unwrap();
    }

    #[test]
    fn rated_pair_becomes_positive() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "1::10::4::978300760\n",
            "1::F::25::10::48067\n",
            "10::Heat (1995)::Action|Crime\n",
        );
        let ds = parse(dir.path()).unwrap();
        assert_eq!(ds.interactions.len(), 1);
        assert_eq!(ds.interactions[0].reward, 1);
        assert_eq!(ds.interactions[0].timestamp, Some(978300760));
    }

    #[test]
    fn user_with_missing_age_loses_all_pairs() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "1::10::4::1\n1::11::2::2\n2::10::5::3\n",
            "1::F::::10::48067\n2::M::35::7::55117\n",
            "10::Heat (1995)::Action\n11::Up (2009)::Animation\n",
        );
        let ds = parse(dir.path()).unwrap();
        assert_eq!(ds.n_users(), 1);
        assert_eq!(ds.users[0].raw_id, "2");
        assert_eq!(ds.interactions.len(), 1);
        assert_eq!(ds.report.users_missing_features, 1);
        assert_eq!(ds.report.interactions_dropped_missing_features, 2);
        // item 11 only had pairs from the dropped user
        assert_eq!(ds.n_items(), 1);
    }

    #[test]
    fn empty_ratings_is_not_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "", "1::F::25::10::48067\n", "10::Heat (1995)::Action\n");
        let ds = parse(dir.path()).unwrap();
        assert!(ds.interactions.is_empty());
        assert_eq!(ds.n_users(), 0);
    }

    #[test]
    fn malformed_rows_are_tallied() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "1::10::4::1\nnot a row\n1::10::x::2\n",
            "1::F::25::10::48067\n",
            "10::Heat (1995)::Action\n",
        );
        let ds = parse(dir.path()).unwrap();
        assert_eq!(ds.interactions.len(), 1);
        assert_eq!(ds.report.malformed_rows, 2);
    }

    #[test]
    fn missing_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(RATINGS_FILE), "").unwrap();
        fs::write(dir.path().join(MOVIES_FILE), "").unwrap();
        let err = parse(dir.path()).unwrap_err().to_string();
        assert!(err.contains("users.dat"), "{err}");
    }

    #[test]
    fn title_year_split() {
        assert_eq!(split_title_year("Toy Story (1995)"), Some(("Toy Story".into(), 1995.0)));
        assert_eq!(
            split_title_year("City of Lost Children, The (Cité des enfants perdus, La) (1995)"),
            Some(("City of Lost Children, The (Cité des enfants perdus, La)".into(), 1995.0))
        );
        assert_eq!(split_title_year("unknown"), None);
    }

    #[test]
    fn latin1_is_decoded() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(RATINGS_FILE), "1::10::4::1\n").unwrap();
        fs::write(dir.path().join(USERS_FILE), "1::F::25::10::48067\n").unwrap();
        let mut movie = b"10::Cit".to_vec();
        movie.push(0xE9);
        movie.extend_from_slice(b" (1995)::Drama\n");
        fs::write(dir.path().join(MOVIES_FILE), movie).unwrap();
        let ds = parse(dir.path()).unwrap();
        assert_eq!(ds.items[0].metadata[0].1, "Cité");
    }
}
