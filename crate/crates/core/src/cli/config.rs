use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{DatasetFormat, PrepareOptions};
use crate::error::{Error, Result};
use crate::evaluation::CandidatePolicy;
use crate::model::LossConfig;
use crate::training::TrainingConfig;

pub const OUTPUT_ROOT_ENV: &str = "MIREC_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub format: DatasetFormat,
    pub path: PathBuf,
    #[serde(default = "default_head_fraction")]
    pub head_fraction: f64,
    #[serde(default = "default_title_vocab")]
    pub title_vocab_size: usize,
    /// Bookcrossing only: drop rating-0 rows instead of keeping them as
    /// implicit positives.
    #[serde(default)]
    pub drop_implicit_ratings: bool,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "default_curriculum_seed")]
    pub curriculum_seed: u64,
}

fn default_head_fraction() -> f64 {
    0.2
}

fn default_title_vocab() -> usize {
    5000
}

fn default_curriculum_seed() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub embedding_dim: usize,
    /// Width of each categorical or bag embedding before the MLP.
    pub field_dim: usize,
    /// Hidden layers per tower; widths halve towards the output.
    pub depth: usize,
    pub lambda_reg: f64,
    pub lambda_logq: f64,
    pub lambda_pred: f64,
    pub use_logq: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let loss = LossConfig::default();
        ModelSection {
            embedding_dim: 64,
            field_dim: 16,
            depth: 2,
            lambda_reg: loss.lambda_reg,
            lambda_logq: loss.lambda_logq,
            lambda_pred: loss.lambda_pred,
            use_logq: loss.use_logq,
        }
    }
}

impl ModelSection {
    pub fn loss(&self) -> LossConfig {
        LossConfig {
            lambda_reg: self.lambda_reg,
            lambda_logq: self.lambda_logq,
            lambda_pred: self.lambda_pred,
            use_logq: self.use_logq,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub k: usize,
    pub candidates: CandidatePolicy,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            k: 10,
            candidates: CandidatePolicy::FullCatalog,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub evaluation: EvaluationSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Applies one `section.key=value` override. The value is read as a TOML
/// value, falling back to a bare string.
fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form key=value")))?;
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, sections) = parts.split_last().expect("split yields one part");
    let mut table = doc;
    for s in sections {
        table = table
            .entry(s.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{s}` is not a section")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Parses `text`, applies overrides, and validates the result.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(doc).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.training.loss = cfg.model.loss();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if !(d.head_fraction > 0.0 && d.head_fraction < 1.0) {
            return Err(Error::Config(format!("dataset.head_fraction must lie in (0, 1), got {}", d.head_fraction)));
        }
        if d.title_vocab_size == 0 {
            return Err(Error::Config("dataset.title_vocab_size must be at least 1".into()));
        }
        let m = &self.model;
        if m.embedding_dim == 0 || m.field_dim == 0 {
            return Err(Error::Config("model.embedding_dim and model.field_dim must be at least 1".into()));
        }
        if m.depth > 8 {
            return Err(Error::Config(format!("model.depth {} is too deep (max 8)", m.depth)));
        }
        if m.lambda_pred > 1.0 {
            return Err(Error::Config(format!("model.lambda_pred must lie in [0, 1], got {}", m.lambda_pred)));
        }
        self.training.validate()?;
        if self.evaluation.k == 0 {
            return Err(Error::Config("evaluation.k must be at least 1".into()));
        }
        if let CandidatePolicy::Sampled { n: 0, .. } = self.evaluation.candidates {
            return Err(Error::Config("evaluation.candidates.n must be at least 1".into()));
        }
        Ok(())
    }

    pub fn prepare_options(&self) -> PrepareOptions {
        PrepareOptions {
            format: self.dataset.format,
            path: self.dataset.path.clone(),
            head_fraction: self.dataset.head_fraction,
            title_vocab_size: self.dataset.title_vocab_size,
            drop_implicit_ratings: self.dataset.drop_implicit_ratings,
            split_seed: self.dataset.split_seed,
            curriculum_seed: self.dataset.curriculum_seed,
        }
    }

    /// Output root: `MIREC_OUTPUT_ROOT` when set, else `output_dir`.
    pub fn output_root(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.output_dir.clone(),
        }
    }

    /// JSON snapshot recorded in run manifests.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
