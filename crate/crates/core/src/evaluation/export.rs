use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ItemId, ProcessedDataset};
use crate::error::{Error, Result};
use crate::model::{meta_map, TwoTowerParams};
use crate::training::TrainedModel;

/// Which items to export.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemFilter {
    #[default]
    All,
    Head,
    Tail,
}

/// Which parameter set of a trained model provides the item tower.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportSource {
    /// The single model, the first backbone of a pair, or F(θ; w).
    #[default]
    Primary,
    ThetaStar,
    ThetaFew,
    Mapped,
    /// Second backbone of a pair.
    Second,
}

impl std::str::FromStr for ExportSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown export source `{s}` (primary, theta_star, theta_few, mapped, second)")))
    }
}

impl std::str::FromStr for ItemFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown item filter `{s}` (all, head, tail)")))
    }
}

pub fn export_params(model: &TrainedModel, source: ExportSource) -> Result<TwoTowerParams> {
    let unavailable = || Error::Config(format!("export source {source:?} does not exist for this model"));
    match (model, source) {
        (TrainedModel::Single(t), ExportSource::Primary) => Ok(t.clone()),
        (TrainedModel::Pair(a, _), ExportSource::Primary) => Ok(a.clone()),
        (TrainedModel::Pair(_, b), ExportSource::Second) => Ok(b.clone()),
        (TrainedModel::Mirec { theta_few, mapper, .. }, ExportSource::Primary | ExportSource::Mapped) => meta_map(theta_few, mapper),
        (TrainedModel::Mirec { theta_star, .. }, ExportSource::ThetaStar) => Ok(theta_star.clone()),
        (TrainedModel::Mirec { theta_few, .. }, ExportSource::ThetaFew) => Ok(theta_few.clone()),
        _ => Err(unavailable()),
    }
}

/// Item-tower embeddings as tab-separated text: `item_id`, `raw_id`, the
/// dataset's item metadata columns, then `e0..e{d-1}`.
///
/// `items` restricts the export to the listed ids; ids outside the catalog
/// are skipped with a warning.
pub fn export_embeddings(theta: &TwoTowerParams, dataset: &ProcessedDataset, filter: ItemFilter, items: Option<&[ItemId]>) -> Result<String> {
    theta.check_features(&dataset.features)?;
    let n = dataset.n_items();
    let selected: Vec<ItemId> = match items {
        Some(ids) => ids
            .iter()
            .copied()
            .filter(|&i| {
                let known = (i as usize) < n;
                if !known {
                    log::warn!("export: item {i} is not in the catalog, skipped");
                }
                known
            })
            .collect(),
        None => (0..n as ItemId).collect(),
    };
    let selected: Vec<ItemId> = selected
        .into_iter()
        .filter(|&i| match filter {
            ItemFilter::All => true,
            ItemFilter::Head => dataset.head_tail.is_head[i as usize],
            ItemFilter::Tail => !dataset.head_tail.is_head[i as usize],
        })
        .collect();
    let rows: Vec<usize> = selected.iter().map(|&i| i as usize).collect();
    let emb = theta.item.embed(&dataset.features.items, &rows)?;

    let mut out = String::from("item_id\traw_id");
    for c in &dataset.item_metadata_columns {
        out.push('\t');
        out.push_str(c);
    }
    for j in 0..emb.ncols() {
        let _ = write!(out, "\te{j}");
    }
    out.push('\n');
    for (r, &i) in selected.iter().enumerate() {
        let _ = write!(out, "{i}\t{}", dataset.item_raw_ids[i as usize]);
        for v in dataset.item_metadata.get(i as usize).into_iter().flatten() {
            out.push('\t');
            out.push_str(&v.replace(['\t', '\n'], " "));
        }
        for v in emb.row(r) {
            let _ = write!(out, "\t{v:?}");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Reads `(item_id, embedding)` pairs back from an export.
pub fn read_embeddings(path: &Path) -> Result<Vec<(ItemId, Vec<f64>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split('\t').collect();
    let first = header.iter().position(|h| *h == "e0").ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: "no embedding columns".into(),
    })?;
    lines
        .enumerate()
        .map(|(ln, line)| {
            let bad = |m: &str| Error::Parse {
                path: path.to_path_buf(),
                line: ln + 2,
                message: m.to_string(),
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != header.len() {
                return Err(bad("column count differs from header"));
            }
            let id = cols[0].parse().map_err(|_| bad("bad item id"))?;
            let v = cols[first..]
                .iter()
                .map(|c| c.parse::<f64>().map_err(|_| bad("bad embedding value")))
                .collect::<Result<_>>()?;
            Ok((id, v))
        })
        .collect()
}
