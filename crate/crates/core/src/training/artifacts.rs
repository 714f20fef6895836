//! On-disk layout of a training run.
//!
//! ```text
//! run.json          manifest: regime, dataset hash, seeds, config snapshot
//! curve.tsv         one record per epoch and model
//! model.ckpt        single-model regimes
//! model_a.ckpt      two_tower_2, first backbone
//! model_b.ckpt      two_tower_2, second backbone
//! theta_star.ckpt   mirec / mirec_m many-shot parameters
//! theta_few.ckpt    mirec / mirec_m few-shot parameters
//! mapper.ckpt       mirec / mirec_m meta-mapper
//! stage1.ckpt       staged regimes, parameters after the first stage
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::config::TrainingConfig;
use super::curve::curve_tsv;
use super::regime::{Regime, TrainOutcome, TrainedModel};
use crate::error::{Error, Result};
use crate::model::{LossConfig, MapperKind, MetaMapper, ModelSpec, TwoTowerParams};
use crate::numeric::Checkpoint;

pub const RUN_MANIFEST: &str = "run.json";
pub const CURVE_FILE: &str = "curve.tsv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub regime: Regime,
    pub dataset_hash: String,
    pub seed: u64,
    pub model_spec: ModelSpec,
    pub mapper: MapperKind,
    pub training: TrainingConfig,
    pub loss: LossConfig,
    /// Snapshot of the full run configuration as given by the caller.
    pub config: serde_json::Value,
    /// SHA-256 of the canonical JSON of `config`.
    pub config_hash: String,
    pub checkpoints: Vec<String>,
    pub epochs_recorded: usize,
}

pub fn config_hash(config: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(config.to_string().as_bytes()))
}

fn save_params(dir: &Path, file: &str, role: &str, manifest: &RunManifest, params: &TwoTowerParams) -> Result<()> {
    let mut ck = Checkpoint::new(metadata(role, manifest)?);
    params.write_to(&mut ck, "");
    ck.save(&dir.join(file))
}

fn metadata(role: &str, m: &RunManifest) -> Result<serde_json::Value> {
    Ok(json!({
        "role": role,
        "regime": m.regime,
        "dataset_hash": m.dataset_hash,
        "config_hash": m.config_hash,
        "seed": m.seed,
        "model_spec": serde_json::to_value(&m.model_spec)?,
        "mapper": m.mapper,
    }))
}

/// Writes checkpoints, curve and manifest of `outcome` into `dir`.
pub fn write_run(
    dir: &Path,
    outcome: &TrainOutcome,
    dataset_hash: &str,
    spec: &ModelSpec,
    cfg: &TrainingConfig,
    config: serde_json::Value,
) -> Result<RunManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let checkpoints: Vec<&str> = match &outcome.model {
        TrainedModel::Single(_) => vec!["model.ckpt"],
        TrainedModel::Pair(..) => vec!["model_a.ckpt", "model_b.ckpt"],
        TrainedModel::Mirec { .. } => vec!["theta_star.ckpt", "theta_few.ckpt", "mapper.ckpt"],
    };
    let mut all: Vec<String> = checkpoints.iter().map(|s| s.to_string()).collect();
    all.extend(outcome.stage_snapshots.iter().map(|(name, _)| format!("{name}.ckpt")));
    let manifest = RunManifest {
        regime: outcome.regime,
        dataset_hash: dataset_hash.to_string(),
        seed: cfg.seed,
        model_spec: spec.clone(),
        mapper: cfg.mapper,
        training: cfg.clone(),
        loss: cfg.loss,
        config_hash: config_hash(&config),
        config,
        checkpoints: all,
        epochs_recorded: outcome.curve.len(),
    };
    match &outcome.model {
        TrainedModel::Single(t) => save_params(dir, "model.ckpt", "model", &manifest, t)?,
        TrainedModel::Pair(a, b) => {
            save_params(dir, "model_a.ckpt", "model_a", &manifest, a)?;
            save_params(dir, "model_b.ckpt", "model_b", &manifest, b)?;
        }
        TrainedModel::Mirec {
            theta_star,
            theta_few,
            mapper,
        } => {
            save_params(dir, "theta_star.ckpt", "theta_star", &manifest, theta_star)?;
            save_params(dir, "theta_few.ckpt", "theta_few", &manifest, theta_few)?;
            let mut ck = Checkpoint::new(metadata("mapper", &manifest)?);
            mapper.write_to(&mut ck);
            ck.save(&dir.join("mapper.ckpt"))?;
        }
    }
    for (name, params) in &outcome.stage_snapshots {
        save_params(dir, &format!("{name}.ckpt"), name, &manifest, params)?;
    }
    write_text(&dir.join(CURVE_FILE), &curve_tsv(&outcome.curve))?;
    write_text(&dir.join(RUN_MANIFEST), &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    Ok(manifest)
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(RUN_MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn load_checked(dir: &Path, file: &str, manifest: &RunManifest) -> Result<Checkpoint> {
    let ck = Checkpoint::load(&dir.join(file))?;
    let hash = ck.metadata.get("dataset_hash").and_then(|v| v.as_str()).unwrap_or_default();
    if hash != manifest.dataset_hash {
        return Err(Error::HashMismatch(format!(
            "{file} was trained on dataset {hash}, run manifest says {}",
            manifest.dataset_hash
        )));
    }
    Ok(ck)
}

/// Loads the trained parameters of a run directory.
pub fn load_run(dir: &Path) -> Result<(RunManifest, TrainedModel)> {
    let manifest = read_manifest(dir)?;
    let spec = &manifest.model_spec;
    let params = |file: &str| TwoTowerParams::read_from(&load_checked(dir, file, &manifest)?, "", spec);
    let model = match manifest.regime {
        Regime::TwoTower2 => TrainedModel::Pair(params("model_a.ckpt")?, params("model_b.ckpt")?),
        Regime::Mirec | Regime::MirecM => {
            let theta_star = params("theta_star.ckpt")?;
            let theta_few = params("theta_few.ckpt")?;
            let mapper = MetaMapper::read_from(&load_checked(dir, "mapper.ckpt", &manifest)?, &theta_few, manifest.mapper)?;
            TrainedModel::Mirec {
                theta_star,
                theta_few,
                mapper,
            }
        }
        _ => TrainedModel::Single(params("model.ckpt")?),
    };
    Ok((manifest, model))
}
