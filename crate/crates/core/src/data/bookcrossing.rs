//! Book-Crossing layout: `BX-Book-Ratings.csv`, `BX-Users.csv`,
//! `BX-Books.csv`; `;`-separated, double-quoted, Latin-1.

use std::collections::HashMap;
use std::path::Path;

use log::warn;

use super::{assemble, read_latin1, AttrDef, AttrKind, DatasetFormat, IngestReport, ParseOptions, RawDataset, RawEntity, RawValue};
use crate::error::Result;

pub const RATINGS_FILE: &str = "BX-Book-Ratings.csv";
pub const USERS_FILE: &str = "BX-Users.csv";
pub const BOOKS_FILE: &str = "BX-Books.csv";

pub(crate) fn user_schema() -> Vec<AttrDef> {
    vec![
        AttrDef::new("user_id", AttrKind::Categorical),
        AttrDef::new("location", AttrKind::Categorical),
        AttrDef::new("age", AttrKind::Continuous),
    ]
}

pub(crate) fn item_schema() -> Vec<AttrDef> {
    vec![
        AttrDef::new("item_id", AttrKind::Categorical),
        AttrDef::new("title", AttrKind::Text),
        AttrDef::new("author", AttrKind::Categorical),
        AttrDef::new("year", AttrKind::Continuous),
        AttrDef::new("publisher", AttrKind::Categorical),
    ]
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .delimiter(b';')
        .has_headers(true)
        .flexible(true)
        .escape(Some(b'\\'))
        .double_quote(true)
        .from_reader(text.as_bytes())
}

fn field(rec: &csv::StringRecord, i: usize) -> Option<&str> {
    rec.get(i).map(str::trim).filter(|s| !s.is_empty() && !s.eq_ignore_ascii_case("null"))
}

fn parse_user(rec: &csv::StringRecord) -> Option<RawEntity> {
    let id = field(rec, 0)?;
    let location = field(rec, 1)?;
    let age: f64 = field(rec, 2)?.parse().ok().filter(|a: &f64| a.is_finite())?;
    Some(RawEntity {
        raw_id: id.to_string(),
        values: vec![
            RawValue::Category(id.to_string()),
            RawValue::Category(location.to_string()),
            RawValue::Number(age),
        ],
        metadata: Vec::new(),
    })
}

fn parse_book(rec: &csv::StringRecord) -> Option<RawEntity> {
    let isbn = field(rec, 0)?;
    let title = field(rec, 1)?;
    let author = field(rec, 2)?;
    // year 0 marks an unknown publication year in the raw dump
    let year: f64 = field(rec, 3)?.parse().ok().filter(|y: &f64| *y > 0.0)?;
    let publisher = field(rec, 4)?;
    Some(RawEntity {
        raw_id: isbn.to_string(),
        metadata: vec![
            ("title".to_string(), title.to_string()),
            ("author".to_string(), author.to_string()),
        ],
        values: vec![
            RawValue::Category(isbn.to_string()),
            RawValue::Text(title.to_string()),
            RawValue::Category(author.to_string()),
            RawValue::Number(year),
            RawValue::Category(publisher.to_string()),
        ],
    })
}

fn records(path: &Path, text: &str, mut each: impl FnMut(usize, Option<csv::StringRecord>)) {
    let mut rdr = reader(text);
    for (i, rec) in rdr.records().enumerate() {
        match rec {
            Ok(r) => each(i + 2, Some(r)),
            Err(e) => {
                warn!("{}:{}: {e}", path.display(), i + 2);
                each(i + 2, None)
            }
        }
    }
}

pub(crate) fn parse(dir: &Path, options: ParseOptions) -> Result<RawDataset> {
    let ratings_path = dir.join(RATINGS_FILE);
    let users_path = dir.join(USERS_FILE);
    let books_path = dir.join(BOOKS_FILE);
    let ratings_text = read_latin1(&ratings_path)?;
    let users_text = read_latin1(&users_path)?;
    let books_text = read_latin1(&books_path)?;

    let mut report = IngestReport::default();

    let mut users = HashMap::new();
    records(&users_path, &users_text, |_, rec| match rec.as_ref().and_then(parse_user) {
        Some(u) => {
            users.insert(u.raw_id.clone(), u);
        }
        None => report.users_missing_features += 1,
    });

    let mut items = HashMap::new();
    records(&books_path, &books_text, |_, rec| match rec.as_ref().and_then(parse_book) {
        Some(b) => {
            items.insert(b.raw_id.clone(), b);
        }
        None => report.items_missing_features += 1,
    });

    let mut ratings = Vec::new();
    let mut malformed = 0usize;
    records(&ratings_path, &ratings_text, |line, rec| {
        report.rating_rows += 1;
        let parsed = rec.as_ref().and_then(|r| {
            let rating: f64 = field(r, 2)?.parse().ok()?;
            Some((field(r, 0)?.to_string(), field(r, 1)?.to_string(), rating))
        });
        match parsed {
            Some((_, _, rating)) if rating == 0.0 && options.drop_implicit_ratings => {
                report.interactions_dropped_implicit += 1;
            }
            Some((u, i, _)) => ratings.push((u, i, None)),
            None => {
                malformed += 1;
                warn!("{}:{line}: malformed rating row skipped", ratings_path.display());
            }
        }
    });
    report.malformed_rows = malformed;

    Ok(assemble(
        DatasetFormat::Bookcrossing,
        user_schema(),
        item_schema(),
        users,
        items,
        ratings,
        report,
    ))
}
