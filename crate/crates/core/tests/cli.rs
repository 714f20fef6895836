use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mirec::data::synthetic::{write_movielens_like, SyntheticConfig};
use mirec::evaluation::MetricFile;

struct Workspace {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

fn workspace() -> Workspace {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_path_buf();
    write_movielens_like(&root.join("raw"), &SyntheticConfig::small(11)).unwrap();
    let config = root.join("run.toml");
    fs::write(
        &config,
        format!(
            r#"output_dir = "{out}"

[dataset]
format = "movielens1m"
path = "{raw}"
title_vocab_size = 50

[model]
embedding_dim = 4
field_dim = 2
depth = 1

[training]
alpha = 0.01
beta = 0.01
gamma = 0.01
batch_size = 64
epochs_per_stage = 2
"#,
            out = root.join("out").display(),
            raw = root.join("raw").display()
        ),
    )
    .unwrap();
    Workspace { _tmp: tmp, root, config }
}

fn mirec(ws: &Workspace, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mirec"))
        .args(args)
        .arg("--config")
        .arg(&ws.config)
        .env_remove("MIREC_OUTPUT_ROOT")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn dataset_hash(ws: &Workspace) -> String {
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(ws.root.join("out/dataset/manifest.json")).unwrap()).unwrap();
    m["dataset_hash"].as_str().unwrap().to_string()
}

#[test]
fn prepare_is_idempotent() {
    let ws = workspace();
    let first = ok(&mirec(&ws, &["prepare"]));
    assert!(first.contains("item_fraction"));
    let h1 = dataset_hash(&ws);
    ok(&mirec(&ws, &["prepare"]));
    assert_eq!(dataset_hash(&ws), h1);
}

#[test]
fn missing_users_file_is_a_data_error() {
    let ws = workspace();
    fs::remove_file(ws.root.join("raw/users.dat")).unwrap();
    let out = mirec(&ws, &["prepare"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("users.dat"), "{}", stderr(&out));
}

#[test]
fn config_errors_exit_one_without_output() {
    let ws = workspace();
    let out = mirec(&ws, &["prepare", "--set", "training.alpah=0.1"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("alpah"));
    let out = mirec(&ws, &["prepare", "--set", "dataset.head_fraction=1.5"]);
    assert_eq!(code(&out), 1);
    assert!(!ws.root.join("out").exists());
    assert_eq!(code(&mirec(&ws, &["frobnicate"])), 1);
}

#[test]
fn invalid_regime_lists_valid_ones() {
    let ws = workspace();
    ok(&mirec(&ws, &["prepare"]));
    let out = mirec(&ws, &["train", "--regime", "focal_loss"]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("two_tower") && err.contains("mirec_c"), "{err}");
}

#[test]
fn train_evaluate_export_report() {
    let ws = workspace();
    ok(&mirec(&ws, &["prepare"]));
    ok(&mirec(&ws, &["train", "--regime", "two_tower"]));
    ok(&mirec(&ws, &["train", "--regime", "mirec"]));
    let ckpts = |r: &str| {
        let mut v: Vec<String> = fs::read_dir(ws.root.join("out/runs").join(r))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n.ends_with(".ckpt"))
            .collect();
        v.sort();
        v
    };
    assert_eq!(ckpts("two_tower"), ["model.ckpt"]);
    assert_eq!(ckpts("mirec"), ["mapper.ckpt", "theta_few.ckpt", "theta_star.ckpt"]);

    ok(&mirec(&ws, &["evaluate", "--regime", "two_tower"]));
    ok(&mirec(&ws, &["evaluate", "--regime", "mirec"]));
    let m = MetricFile::read(&ws.root.join("out/metrics/two_tower.json")).unwrap();
    assert_eq!(m.slices.len(), 3);
    assert!(m.slices.iter().all(|s| s.hr_at_k.is_some() && s.ndcg_at_k.is_some()));

    let report = ok(&mirec(&ws, &["report"]));
    assert!(report.contains("two_tower") && report.contains("mirec") && report.contains('*'));
    assert!(ws.root.join("out/report.json").exists());

    ok(&mirec(&ws, &["export", "--regime", "mirec", "--filter", "tail"]));
    let text = fs::read_to_string(ws.root.join("out/embeddings/mirec-primary-tail.tsv")).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(ws.root.join("out/dataset/manifest.json")).unwrap()).unwrap();
    assert_eq!(text.lines().count() - 1, manifest["n_tail_items"].as_u64().unwrap() as usize);
}

#[test]
fn corrupted_checkpoint_is_refused() {
    let ws = workspace();
    ok(&mirec(&ws, &["prepare"]));
    ok(&mirec(&ws, &["train", "--regime", "two_tower"]));
    let ck = ws.root.join("out/runs/two_tower/model.ckpt");
    let mut bytes = fs::read(&ck).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    fs::write(&ck, bytes).unwrap();
    let out = mirec(&ws, &["evaluate", "--regime", "two_tower"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("checksum"), "{}", stderr(&out));
}

#[test]
fn report_refuses_mixed_datasets() {
    let ws = workspace();
    ok(&mirec(&ws, &["prepare"]));
    ok(&mirec(&ws, &["train", "--regime", "two_tower"]));
    ok(&mirec(&ws, &["evaluate", "--regime", "two_tower"]));
    let a = ws.root.join("out/metrics/two_tower.json");
    let mut other = MetricFile::read(&a).unwrap();
    other.regime = "logq".into();
    other.dataset_hash = "0000".into();
    let b = ws.root.join("other.json");
    other.write(&b).unwrap();
    let out = mirec(&ws, &["report", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("dataset"), "{}", stderr(&out));
}

#[test]
fn output_root_from_environment() {
    let ws = workspace();
    let alt = ws.root.join("alt");
    let out = Command::new(env!("CARGO_BIN_EXE_mirec"))
        .args(["prepare", "--config"])
        .arg(&ws.config)
        .env("MIREC_OUTPUT_ROOT", &alt)
        .output()
        .unwrap();
    ok(&out);
    assert!(Path::new(&alt.join("dataset/manifest.json")).exists());
    assert!(!ws.root.join("out").exists());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            mirec::cli::RunConfig::load(&path, &[]).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 3);
}
