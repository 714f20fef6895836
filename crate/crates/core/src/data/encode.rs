use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{AttrKind, Interaction, RawDataset, RawEntity, RawValue};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    CategoricalOnehot,
    Continuous,
    BagOfWords,
}

/// One contiguous block of a feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub kind: SegmentKind,
    pub offset: usize,
    pub width: usize,
    /// Vocabulary for categorical and bag-of-words segments. When the
    /// segment has an out-of-vocabulary slot it is the last position and is
    /// not listed here.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vocabulary: Vec<String>,
    #[serde(default)]
    pub has_oov: bool,
    /// Normalisation statistics of a continuous segment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub segments: Vec<Segment>,
}

impl Layout {
    pub fn width(&self) -> usize {
        self.segments.last().map_or(0, |s| s.offset + s.width)
    }

    /// Maps each global column to `(segment index, column within segment)`.
    pub fn column_owner(&self) -> Vec<(u16, u32)> {
        let mut out = Vec::with_capacity(self.width());
        for (si, s) in self.segments.iter().enumerate() {
            for c in 0..s.width {
                out.push((si as u16, c as u32));
            }
        }
        out
    }
}

/// Sparse row storage (CSR) of dense feature vectors that share a layout.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub layout: Layout,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(layout: Layout) -> Self {
        FeatureMatrix {
            layout,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn width(&self) -> usize {
        self.layout.width()
    }

    pub fn push_row(&mut self, entries: &[(u32, f64)]) {
        for &(i, v) in entries {
            self.indices.push(i);
            self.values.push(v);
        }
        self.indptr.push(self.indices.len());
    }

    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn dense_row(&self, r: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.width()];
        let (idx, val) = self.row(r);
        for (&i, &v) in idx.iter().zip(val) {
            out[i as usize] += v;
        }
        out
    }

    /// Checks the per-segment invariants of every row.
    pub fn validate(&self) -> Result<()> {
        let owner = self.layout.column_owner();
        for r in 0..self.n_rows() {
            let dense = self.dense_row(r);
            for s in &self.layout.segments {
                let seg = &dense[s.offset..s.offset + s.width];
                let ok = match s.kind {
                    SegmentKind::CategoricalOnehot => {
                        seg.iter().filter(|&&v| v == 1.0).count() == 1 && seg.iter().all(|&v| v == 0.0 || v == 1.0)
                    }
                    SegmentKind::Continuous => seg.iter().all(|v| v.is_finite()),
                    SegmentKind::BagOfWords => seg.iter().all(|&v| v >= 0.0 && v.fract() == 0.0),
                };
                if !ok {
                    return Err(Error::Data(format!("row {r}: segment `{}` violates its encoding", s.name)));
                }
            }
            let (idx, _) = self.row(r);
            if idx.iter().any(|&i| i as usize >= owner.len()) {
                return Err(Error::Data(format!("row {r}: column out of range")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EncodedFeatures {
    pub users: FeatureMatrix,
    pub items: FeatureMatrix,
}

/// Lowercase alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

enum Encoder {
    Category { index: HashMap<String, u32>, oov: u32 },
    Categories { index: HashMap<String, u32>, oov: u32 },
    Number { mean: f64, std: f64 },
    Words { index: HashMap<String, u32> },
}

fn build_side(
    schema: &[super::AttrDef],
    entities: &[RawEntity],
    population: &[bool],
    title_vocab_size: usize,
) -> Result<FeatureMatrix> {
    let members: Vec<&RawEntity> = entities
        .iter()
        .zip(population)
        .filter(|(_, &p)| p)
        .map(|(e, _)| e)
        .collect();

    let mut layout = Layout::default();
    let mut encoders = Vec::with_capacity(schema.len());
    let mut offset = 0usize;

    for (a, attr) in schema.iter().enumerate() {
        let (segment, encoder) = match attr.kind {
            AttrKind::Categorical | AttrKind::MultiCategorical => {
                let mut vocab = BTreeSet::new();
                for e in &members {
                    match &e.values[a] {
                        RawValue::Category(v) => {
                            vocab.insert(v.clone());
                        }
                        RawValue::Categories(vs) => vocab.extend(vs.iter().cloned()),
                        _ => return Err(Error::Data(format!("attribute `{}` is not categorical", attr.name))),
                    }
                }
                let vocabulary: Vec<String> = vocab.into_iter().collect();
                let index: HashMap<String, u32> =
                    vocabulary.iter().enumerate().map(|(i, v)| (v.clone(), i as u32)).collect();
                let oov = vocabulary.len() as u32;
                let multi = attr.kind == AttrKind::MultiCategorical;
                let seg = Segment {
                    name: attr.name.clone(),
                    kind: if multi { SegmentKind::BagOfWords } else { SegmentKind::CategoricalOnehot },
                    offset,
                    width: vocabulary.len() + 1,
                    vocabulary,
                    has_oov: true,
                    mean: None,
                    std: None,
                };
                let enc = if multi {
                    Encoder::Categories { index, oov }
                } else {
                    Encoder::Category { index, oov }
                };
                (seg, enc)
            }
            AttrKind::Continuous => {
                let xs: Vec<f64> = members
                    .iter()
                    .map(|e| match e.values[a] {
                        RawValue::Number(x) => Ok(x),
                        _ => Err(Error::Data(format!("attribute `{}` is not numeric", attr.name))),
                    })
                    .collect::<Result<_>>()?;
                let n = xs.len().max(1) as f64;
                let mean = xs.iter().sum::<f64>() / n;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                let std = if var > 0.0 { var.sqrt() } else { 1.0 };
                let seg = Segment {
                    name: attr.name.clone(),
                    kind: SegmentKind::Continuous,
                    offset,
                    width: 1,
                    vocabulary: Vec::new(),
                    has_oov: false,
                    mean: Some(mean),
                    std: Some(std),
                };
                (seg, Encoder::Number { mean, std })
            }
            AttrKind::Text => {
                let mut freq: BTreeMap<String, usize> = BTreeMap::new();
                for e in &members {
                    let RawValue::Text(t) = &e.values[a] else {
                        return Err(Error::Data(format!("attribute `{}` is not text", attr.name)));
                    };
                    for tok in tokenize(t) {
                        *freq.entry(tok).or_default() += 1;
                    }
                }
                let mut ranked: Vec<(String, usize)> = freq.into_iter().collect();
                ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                ranked.truncate(title_vocab_size);
                let vocabulary: Vec<String> = ranked.into_iter().map(|(t, _)| t).collect();
                let index = vocabulary.iter().enumerate().map(|(i, v)| (v.clone(), i as u32)).collect();
                let seg = Segment {
                    name: attr.name.clone(),
                    kind: SegmentKind::BagOfWords,
                    offset,
                    width: vocabulary.len(),
                    vocabulary,
                    has_oov: false,
                    mean: None,
                    std: None,
                };
                (seg, Encoder::Words { index })
            }
        };
        offset += segment.width;
        layout.segments.push(segment);
        encoders.push(encoder);
    }

    let mut matrix = FeatureMatrix::new(layout);
    let mut entries: Vec<(u32, f64)> = Vec::new();
    for e in entities {
        entries.clear();
        for (a, enc) in encoders.iter().enumerate() {
            let base = matrix.layout.segments[a].offset as u32;
            match (enc, &e.values[a]) {
                (Encoder::Category { index, oov }, RawValue::Category(v)) => {
                    entries.push((base + index.get(v).copied().unwrap_or(*oov), 1.0));
                }
                (Encoder::Categories { index, oov }, RawValue::Categories(vs)) => {
                    let mut cols: BTreeSet<u32> = BTreeSet::new();
                    for v in vs {
                        cols.insert(index.get(v).copied().unwrap_or(*oov));
                    }
                    entries.extend(cols.into_iter().map(|c| (base + c, 1.0)));
                }
                (Encoder::Number { mean, std }, RawValue::Number(x)) => {
                    entries.push((base, (x - mean) / std));
                }
                (Encoder::Words { index }, RawValue::Text(t)) => {
                    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
                    for tok in tokenize(t) {
                        if let Some(&c) = index.get(&tok) {
                            *counts.entry(c).or_default() += 1.0;
                        }
                    }
                    entries.extend(counts.into_iter().map(|(c, v)| (base + c, v)));
                }
                _ => return Err(Error::Data(format!("entity `{}` does not match its schema", e.raw_id))),
            }
        }
        matrix.push_row(&entries);
    }
    Ok(matrix)
}

/// Encodes user and item attributes into feature vectors.
///
/// Vocabularies and normalisation statistics are computed from the entities
/// that occur in `train` (all entities when `train` is `None`); anything
/// unseen there falls into the out-of-vocabulary slot.
pub fn encode_features(raw: &RawDataset, title_vocab_size: usize, train: Option<&[Interaction]>) -> Result<EncodedFeatures> {
    if title_vocab_size == 0 {
        return Err(Error::Config("title_vocab_size must be at least 1".into()));
    }
    let (user_pop, item_pop) = match train {
        Some(rows) => {
            let mut u = vec![false; raw.n_users()];
            let mut i = vec![false; raw.n_items()];
            for r in rows {
                u[r.user as usize] = true;
                i[r.item as usize] = true;
            }
            (u, i)
        }
        None => (vec![true; raw.n_users()], vec![true; raw.n_items()]),
    };
    Ok(EncodedFeatures {
        users: build_side(&raw.user_schema, &raw.users, &user_pop, title_vocab_size)?,
        items: build_side(&raw.item_schema, &raw.items, &item_pop, title_vocab_size)?,
    })
}
