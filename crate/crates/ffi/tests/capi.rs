use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use mirec::data::synthetic::{write_movielens_like, SyntheticConfig};
use mirec::data::{DatasetFormat, PrepareOptions, ProcessedDataset};
use mirec::model::ModelSpec;
use mirec::training::{train_regime, write_run, Regime, TrainingConfig};
use mirec_ffi::*;

struct Fixture {
    _tmp: tempfile::TempDir,
    dataset: CString,
    run: CString,
    ds: ProcessedDataset,
}

fn fixture(regime: Regime) -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw");
    write_movielens_like(&raw, &SyntheticConfig::small(4)).unwrap();
    let ds = ProcessedDataset::prepare(&PrepareOptions {
        format: DatasetFormat::Movielens1m,
        path: raw,
        head_fraction: 0.2,
        title_vocab_size: 50,
        drop_implicit_ratings: false,
        split_seed: 0,
        curriculum_seed: 1,
    })
    .unwrap();
    let dataset_dir = tmp.path().join("dataset");
    ds.write(&dataset_dir).unwrap();
    let spec = ModelSpec::for_features(&ds.features, 4, 2, 1);
    let cfg = TrainingConfig {
        epochs_per_stage: 1,
        batch_size: 64,
        ..TrainingConfig::default()
    };
    let outcome = train_regime(regime, &ds, &spec, &cfg).unwrap();
    let run_dir = tmp.path().join("run");
    write_run(&run_dir, &outcome, ds.hash(), &spec, &cfg, serde_json::json!({})).unwrap();
    Fixture {
        dataset: cstr(&dataset_dir),
        run: cstr(&run_dir),
        _tmp: tmp,
        ds,
    }
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(mirec_last_error_message()) }.to_string_lossy().into_owned()
}

fn open(f: &Fixture, lambda_p: f64) -> *mut MirecModel {
    let mut m = ptr::null_mut();
    let s = unsafe { mirec_model_open(f.dataset.as_ptr(), f.run.as_ptr(), lambda_p, &mut m) };
    assert_eq!(s, MirecStatus::Ok, "{}", last_error());
    m
}

#[test]
fn open_score_and_free() {
    let f = fixture(Regime::Mirec);
    let m = open(&f, 0.5);
    unsafe {
        assert_eq!(mirec_model_num_users(m) as usize, f.ds.n_users());
        assert_eq!(mirec_model_num_items(m) as usize, f.ds.n_items());
        assert_eq!(mirec_model_embedding_dim(m), 4);
        let mut s = f64::NAN;
        assert_eq!(mirec_model_score(m, 0, 1, &mut s), MirecStatus::Ok);
        assert!(s.is_finite());
        assert_eq!(last_error(), "");
        mirec_model_free(m);
    }
}

#[test]
fn top_k_is_sorted_and_skips_seen_items() {
    let f = fixture(Regime::TwoTower);
    let m = open(&f, 0.5);
    let k = 5;
    let (mut items, mut scores, mut n) = (vec![0u32; k], vec![0f64; k], 0usize);
    let seen = f.ds.split.seen_items(f.ds.n_users());
    unsafe {
        assert_eq!(mirec_model_top_k(m, 2, k, true, items.as_mut_ptr(), scores.as_mut_ptr(), &mut n), MirecStatus::Ok);
        assert_eq!(n, k);
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
        assert!(items.iter().all(|i| !seen[2].contains(i)));
        for j in 0..k {
            let mut s = 0.0;
            mirec_model_score(m, 2, items[j], &mut s);
            assert_eq!(s, scores[j]);
        }
        mirec_model_free(m);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let f = fixture(Regime::TwoTower);
    let m = open(&f, 0.5);
    unsafe {
        let mut s = 0.0;
        assert_eq!(mirec_model_score(m, 100_000, 0, &mut s), MirecStatus::OutOfRange);
        assert!(last_error().contains("user 100000"));
        assert_eq!(mirec_model_score(ptr::null(), 0, 0, &mut s), MirecStatus::NullPointer);
        assert_eq!(mirec_model_score(m, 0, 0, ptr::null_mut()), MirecStatus::NullPointer);
        assert_eq!(mirec_model_num_items(ptr::null()), 0);
        mirec_model_free(m);
        mirec_model_free(ptr::null_mut());

        let mut out = ptr::null_mut();
        let missing = CString::new("/nonexistent/run").unwrap();
        assert_eq!(mirec_model_open(f.dataset.as_ptr(), missing.as_ptr(), 0.5, &mut out), MirecStatus::Io);
        assert!(out.is_null());
        assert_eq!(mirec_model_open(f.dataset.as_ptr(), f.run.as_ptr(), 1.5, &mut out), MirecStatus::InvalidArgument);
        assert_eq!(mirec_model_open(ptr::null(), f.run.as_ptr(), 0.5, &mut out), MirecStatus::NullPointer);
    }
}

#[test]
fn corrupted_checkpoint_reports_checkpoint_status() {
    let f = fixture(Regime::TwoTower);
    let ck = Path::new(f.run.to_str().unwrap()).join("model.ckpt");
    let mut bytes = std::fs::read(&ck).unwrap();
    bytes[20] ^= 1;
    std::fs::write(&ck, bytes).unwrap();
    let mut out = ptr::null_mut();
    let s = unsafe { mirec_model_open(f.dataset.as_ptr(), f.run.as_ptr(), 0.5, &mut out) };
    assert_eq!(s, MirecStatus::Checkpoint);
    assert!(last_error().contains("checksum"));
}

#[test]
fn corrected_score_and_version() {
    let mut out = 0.0;
    unsafe {
        assert_eq!(mirec_corrected_score(2.0, 1.0, 0.1, &mut out), MirecStatus::Ok);
        assert_eq!(out, 2.0);
        assert_eq!(mirec_corrected_score(2.0, 0.0, 0.1, &mut out), MirecStatus::InvalidArgument);
        assert!(!CStr::from_ptr(mirec_version()).to_bytes().is_empty());
    }
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/mirec.h")).unwrap();
    for name in [
        "MirecStatus",
        "MIREC_STATUS_OK",
        "typedef struct MirecModel MirecModel",
        "mirec_model_open",
        "mirec_model_top_k",
        "mirec_corrected_score",
        "mirec_last_error_message",
    ] {
        assert!(h.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"mirec.h\"\nint main(void) { MirecModel *m = 0; size_t n = 0; return (int)mirec_model_top_k(m, 0, 0, true, 0, 0, &n); }\n",
    )
    .unwrap();
    let out = match std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", include])
        .arg(&src)
        .output()
    {
        Ok(o) => o,
        Err(_) => {
            eprintln!("no C compiler on PATH; header compile check skipped");
            return;
        }
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
