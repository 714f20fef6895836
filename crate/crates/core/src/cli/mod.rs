//! `mirec` command-line driver.
//!
//! Every command reads one TOML run config. Outputs live under the output
//! root (`output_dir`, or `$MIREC_OUTPUT_ROOT` when set):
//!
//! ```text
//! dataset/            processed dataset (prepare)
//! runs/<regime>/      checkpoints, run.json, curve.tsv (train)
//! metrics/<label>.json
//! embeddings/<regime>-<source>-<filter>.tsv
//! report.txt, report.json
//! ```

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use config::{DatasetSection, EvaluationSection, ModelSection, RunConfig, OUTPUT_ROOT_ENV};

use crate::data::ProcessedDataset;
use crate::error::{Error, Result};
use crate::evaluation::{compare_report, evaluate_model, export_embeddings, export_params, ExportSource, ItemFilter, MetricFile};
use crate::model::ModelSpec;
use crate::training::{load_run, train_regime, write_run, Regime};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_TRAINING: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "mirec", version, about = "Long-tail two-tower recommendation with few-shot to many-shot meta-mapping")]
pub struct Cli {
    /// Log progress (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set training.alpha=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse, split and encode the raw dataset.
    Prepare {
        #[command(flatten)]
        common: Common,
    },
    /// Train one regime on the prepared dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        regime: String,
        /// Run directory; defaults to `runs/<regime>` under the output root.
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Rank every test user and write a metric file.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        regime: String,
        #[arg(long)]
        run_dir: Option<PathBuf>,
        /// Weight of the many-shot model; defaults to `model.lambda_pred`.
        #[arg(long)]
        lambda_p: Option<f64>,
        /// Row label in metric files and reports; defaults to the regime.
        #[arg(long)]
        label: Option<String>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Write item-tower embeddings with item metadata.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        regime: String,
        #[arg(long)]
        run_dir: Option<PathBuf>,
        /// primary, theta_star, theta_few, mapped or second.
        #[arg(long, default_value = "primary")]
        source: ExportSource,
        /// all, head or tail.
        #[arg(long, default_value = "all")]
        filter: ItemFilter,
        /// Comma-separated item ids to restrict the export to.
        #[arg(long, value_delimiter = ',')]
        items: Option<Vec<u32>>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Compare metric files side by side.
    Report {
        #[command(flatten)]
        common: Common,
        /// Metric files; defaults to every file in `metrics/`.
        files: Vec<PathBuf>,
        /// Output prefix; `.txt` and `.json` are appended.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::UnknownRegime { .. } => EXIT_USAGE,
        Error::Diverged { .. }
        | Error::NonFiniteGradient(_)
        | Error::FrozenParamsModified
        | Error::NonPositiveProbability(_)
        | Error::MissingForwardCache(_)
        | Error::Shape { .. } => EXIT_TRAINING,
        _ => EXIT_DATA,
    }
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(c: &Common) -> Result<RunConfig> {
    RunConfig::load(&c.config, &c.overrides)
}

fn load_dataset(root: &Path) -> Result<ProcessedDataset> {
    ProcessedDataset::read(&root.join("dataset"))
}

fn run_dir(root: &Path, regime: Regime, given: Option<PathBuf>) -> PathBuf {
    given.unwrap_or_else(|| root.join("runs").join(regime.as_str()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(p) => fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        None => Ok(()),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare { common } => {
            let cfg = load_config(&common)?;
            let ds = ProcessedDataset::prepare(&cfg.prepare_options())?;
            let dir = cfg.output_root().join("dataset");
            ds.write(&dir)?;
            print!("{}", prepare_summary(&ds, &dir));
        }
        Command::Train { common, regime, run_dir: dir } => {
            let cfg = load_config(&common)?;
            let regime: Regime = regime.parse()?;
            let root = cfg.output_root();
            let ds = load_dataset(&root)?;
            let spec = ModelSpec::for_features(&ds.features, cfg.model.embedding_dim, cfg.model.field_dim, cfg.model.depth);
            let outcome = train_regime(regime, &ds, &spec, &cfg.training)?;
            let dir = run_dir(&root, regime, dir);
            let manifest = write_run(&dir, &outcome, ds.hash(), &spec, &cfg.training, cfg.snapshot())?;
            println!("trained {regime}: {} epochs recorded", manifest.epochs_recorded);
            for c in &manifest.checkpoints {
                println!("  {}", dir.join(c).display());
            }
        }
        Command::Evaluate {
            common,
            regime,
            run_dir: dir,
            lambda_p,
            label,
            out,
        } => {
            let cfg = load_config(&common)?;
            let regime: Regime = regime.parse()?;
            let root = cfg.output_root();
            let lambda_p = lambda_p.unwrap_or(cfg.model.lambda_pred);
            if !(0.0..=1.0).contains(&lambda_p) {
                return Err(Error::Config(format!("--lambda-p must lie in [0, 1], got {lambda_p}")));
            }
            let ds = load_dataset(&root)?;
            let (manifest, model) = load_run(&run_dir(&root, regime, dir))?;
            if manifest.dataset_hash != ds.hash() {
                return Err(Error::HashMismatch(format!(
                    "run was trained on dataset {}, the prepared dataset is {}",
                    manifest.dataset_hash,
                    ds.hash()
                )));
            }
            let label = label.unwrap_or_else(|| regime.to_string());
            let metrics = evaluate_model(&model, &ds, &label, lambda_p, cfg.evaluation.candidates, cfg.evaluation.k)?;
            let out = out.unwrap_or_else(|| root.join("metrics").join(format!("{label}.json")));
            ensure_parent(&out)?;
            metrics.write(&out)?;
            print!("{}", compare_report(std::slice::from_ref(&metrics))?.to_text());
            println!("wrote {}", out.display());
        }
        Command::Export {
            common,
            regime,
            run_dir: dir,
            source,
            filter,
            items,
            out,
        } => {
            let cfg = load_config(&common)?;
            let regime: Regime = regime.parse()?;
            let root = cfg.output_root();
            let ds = load_dataset(&root)?;
            let (manifest, model) = load_run(&run_dir(&root, regime, dir))?;
            if manifest.dataset_hash != ds.hash() {
                return Err(Error::HashMismatch(format!(
                    "run was trained on dataset {}, the prepared dataset is {}",
                    manifest.dataset_hash,
                    ds.hash()
                )));
            }
            let theta = export_params(&model, source)?;
            let text = export_embeddings(&theta, &ds, filter, items.as_deref())?;
            let name = |v: &dyn std::fmt::Debug| format!("{v:?}").to_lowercase();
            let out = out.unwrap_or_else(|| root.join("embeddings").join(format!("{regime}-{}-{}.tsv", name(&source), name(&filter))));
            ensure_parent(&out)?;
            fs::write(&out, text).map_err(|e| Error::io(&out, e))?;
            println!("wrote {}", out.display());
        }
        Command::Report { common, files, out } => {
            let cfg = load_config(&common)?;
            let root = cfg.output_root();
            let files = if files.is_empty() { metric_files(&root.join("metrics"))? } else { files };
            let metrics = files.iter().map(|f| MetricFile::read(f)).collect::<Result<Vec<_>>>()?;
            let report = compare_report(&metrics)?;
            let prefix = out.unwrap_or_else(|| root.join("report"));
            ensure_parent(&prefix)?;
            let txt = prefix.with_extension("txt");
            let json = prefix.with_extension("json");
            fs::write(&txt, report.to_text()).map_err(|e| Error::io(&txt, e))?;
            fs::write(&json, report.to_json()?).map_err(|e| Error::io(&json, e))?;
            print!("{}", report.to_text());
        }
    }
    Ok(())
}

fn metric_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    out.sort();
    Ok(out)
}

fn prepare_summary(ds: &ProcessedDataset, dir: &Path) -> String {
    use std::fmt::Write as _;
    let m = &ds.manifest;
    let mut s = String::new();
    let _ = writeln!(s, "dataset {}  hash {}", dir.display(), m.dataset_hash);
    let _ = writeln!(s, "users {}  items {}", m.n_users, m.n_items);
    let _ = writeln!(s, "train {}  validation {}  test {}", m.n_train, m.n_validation, m.n_test);
    let _ = writeln!(
        s,
        "head items {}  tail items {}  k = {}  |omega*| = {}  |omega(k)| = {}",
        m.n_head_items, m.n_tail_items, m.k_threshold, m.omega_star_rows, m.omega_k_rows
    );
    let _ = writeln!(s, "item_fraction\tinteraction_share");
    for c in &m.cdf {
        let _ = writeln!(s, "{}\t{:.4}", c.item_fraction, c.interaction_share);
    }
    s
}
