use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::MetricFile;
use crate::data::Slice;
use crate::error::{Error, Result};
use crate::training::Regime;

const COLUMNS: [(Slice, bool); 6] = [
    (Slice::Overall, true),
    (Slice::Overall, false),
    (Slice::Head, true),
    (Slice::Head, false),
    (Slice::Tail, true),
    (Slice::Tail, false),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub regime: String,
    /// Overall, head, tail × HR, NDCG.
    pub values: [Option<f64>; 6],
    /// Column maxima; all false for a single-row report.
    pub best: [bool; 6],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub dataset_hash: String,
    pub k: usize,
    pub candidate_policy: String,
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
}

fn column_name((slice, hr): (Slice, bool), k: usize) -> String {
    format!("{}_{}@{k}", slice.as_str(), if hr { "hr" } else { "ndcg" })
}

/// Side-by-side table of several metric files. Rows follow the canonical
/// regime order; labels that are not regime names come last, in input order.
pub fn compare_report(files: &[MetricFile]) -> Result<ComparisonReport> {
    let first = files.first().ok_or_else(|| Error::Config("report needs at least one metric file".into()))?;
    for f in files {
        if f.dataset_hash != first.dataset_hash {
            return Err(Error::HashMismatch(format!(
                "`{}` was evaluated on dataset {} but `{}` on {}; metrics from different datasets cannot be compared",
                f.regime, f.dataset_hash, first.regime, first.dataset_hash
            )));
        }
        if f.k != first.k || f.candidate_policy != first.candidate_policy {
            return Err(Error::Config(format!(
                "`{}` uses K = {} with {}, `{}` uses K = {} with {}",
                f.regime, f.k, f.candidate_policy, first.regime, first.k, first.candidate_policy
            )));
        }
    }
    let mut ordered: Vec<&MetricFile> = files.iter().collect();
    ordered.sort_by_key(|f| f.regime.parse::<Regime>().map_or(usize::MAX, |r| Regime::ALL.iter().position(|x| *x == r).unwrap()));

    let mut rows: Vec<ReportRow> = ordered
        .iter()
        .map(|f| {
            let mut values = [None; 6];
            for (c, &(slice, hr)) in COLUMNS.iter().enumerate() {
                values[c] = f.slice(slice).and_then(|m| if hr { m.hr_at_k } else { m.ndcg_at_k });
            }
            ReportRow {
                regime: f.regime.clone(),
                values,
                best: [false; 6],
            }
        })
        .collect();
    if rows.len() > 1 {
        for c in 0..6 {
            let max = rows.iter().filter_map(|r| r.values[c]).fold(f64::NEG_INFINITY, f64::max);
            for r in &mut rows {
                r.best[c] = r.values[c] == Some(max);
            }
        }
    }
    Ok(ComparisonReport {
        dataset_hash: first.dataset_hash.clone(),
        k: first.k,
        candidate_policy: first.candidate_policy.to_string(),
        columns: COLUMNS.iter().map(|&c| column_name(c, first.k)).collect(),
        rows,
    })
}

impl ComparisonReport {
    /// Fixed-width text table in percent; `*` marks the best value per column.
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.regime.len()).max().unwrap_or(0).max("regime".len());
        let k = self.k;
        let mut out = String::new();
        let _ = writeln!(out, "dataset {}  K = {k}  candidates {}", self.dataset_hash, self.candidate_policy);
        let _ = writeln!(
            out,
            "{:width$}  {:^21}  {:^21}  {:^21}",
            "", "Overall", "Head", "Tail"
        );
        let _ = write!(out, "{:width$}", "regime");
        for _ in 0..3 {
            let _ = write!(out, "  {:>10} {:>10}", format!("HR@{k}"), format!("NDCG@{k}"));
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{:width$}", r.regime);
            for c in 0..6 {
                let cell = match r.values[c] {
                    Some(v) => format!("{:.2}{}", 100.0 * v, if r.best[c] { "*" } else { " " }),
                    None => "- ".to_string(),
                };
                let _ = write!(out, "{}{cell:>10}", if c % 2 == 0 { "  " } else { " " });
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}
