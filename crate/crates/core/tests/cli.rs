use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ccnet::cli::RunConfig;
use ccnet::data::manifest::write_manifest;
use ccnet::data::{DatasetManifest, Sample, Split};
use ccnet::model::InputKind;
use tempfile::TempDir;

fn run(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ccnet"));
    cmd.args(args).env_remove("CCNET_SEED");
    if let Some(s) = env_seed {
        cmd.env("CCNET_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    run(args, None).status.code().unwrap()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn lines(p: impl AsRef<Path>) -> Vec<String> {
    fs::read_to_string(p).unwrap().lines().map(String::from).collect()
}

fn last_field(p: impl AsRef<Path>) -> f64 {
    lines(p).last().unwrap().rsplit(',').next().unwrap().parse().unwrap()
}

#[test]
fn train_writes_checkpoint_log_and_echo() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "t");
    assert_eq!(code(&["train", "--loss", "cdc", "--norm", "alnu", "--seed", "7", "--out", &out]), 0);
    for f in ["config.json", "model.ccnl", "train_log.csv", "embeddings.ccnf"] {
        assert!(Path::new(&out).join(f).is_file(), "{f} missing");
    }
    let log = lines(Path::new(&out).join("train_log.csv"));
    assert_eq!(log[0], "epoch,lr,L_ce,L_cdc_s,L_cdc_m,L_total,intra_sample_dist,intra_modality_dist");
    assert_eq!(log.len() - 1, 120);
    let echo = RunConfig::load(&Path::new(&out).join("config.json")).unwrap();
    assert_eq!(echo.seed, Some(7));
    assert_eq!(echo.train.seed, 7);
}

#[test]
fn cdc_shrinks_modality_centers_relative_to_ce_only() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "ce"), path(&dir, "cdc"));
    assert_eq!(code(&["train", "--loss", "ce_only", "--seed", "3", "--out", &a]), 0);
    assert_eq!(code(&["train", "--loss", "cdc", "--seed", "3", "--out", &b]), 0);
    let ce = last_field(Path::new(&a).join("train_log.csv"));
    let cdc = last_field(Path::new(&b).join("train_log.csv"));
    assert!(cdc < ce, "cdc {cdc} vs ce_only {ce}");
}

#[test]
fn zero_lambda_log_equals_ce_only() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "ce"), path(&dir, "l0"));
    assert_eq!(code(&["train", "--loss", "ce_only", "--epochs", "8", "--out", &a]), 0);
    assert_eq!(code(&["train", "--loss", "cdc", "--lambda", "0", "--epochs", "8", "--out", &b]), 0);
    assert_eq!(
        fs::read(Path::new(&a).join("train_log.csv")).unwrap(),
        fs::read(Path::new(&b).join("train_log.csv")).unwrap()
    );
}

#[test]
fn eval_grid_from_checkpoint_and_embeddings() {
    let dir = TempDir::new().unwrap();
    let t = path(&dir, "t");
    assert_eq!(code(&["train", "--epochs", "5", "--out", &t]), 0);
    let ckpt = format!("{t}/model.ccnl");
    let emb = format!("{t}/embeddings.ccnf");
    let e1 = path(&dir, "e1");
    let args = ["eval", "--protocol", "time_label", "--set", "eval.masked_center=false"];
    let mut a1 = args.to_vec();
    a1.extend(["--checkpoint", &ckpt, "--out", &e1]);
    assert_eq!(code(&a1), 0);
    let rows = lines(Path::new(&e1).join("metrics.csv"));
    assert_eq!(rows.len(), 8);
    let subsets: Vec<&str> = rows[1..].iter().map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(subsets, ["R", "N", "T", "R+N", "R+T", "N+T", "R+N+T"]);
    assert!(Path::new(&e1).join("metrics.svg").is_file());

    let e2 = path(&dir, "e2");
    assert_eq!(code(&["eval", "--embeddings", &emb, "--out", &e2]), 0);
    assert_eq!(lines(Path::new(&e2).join("metrics.csv")).len(), 1 + 2 * 8);
}

#[test]
fn missing_rows_match_eval_center_and_rerun() {
    let dir = TempDir::new().unwrap();
    let t = path(&dir, "t");
    assert_eq!(code(&["train", "--epochs", "5", "--out", &t]), 0);
    let ckpt = format!("{t}/model.ccnl");
    let (m1, m2, e) = (path(&dir, "m1"), path(&dir, "m2"), path(&dir, "e"));
    assert_eq!(code(&["missing", "--checkpoint", &ckpt, "--out", &m1]), 0);
    assert_eq!(code(&["missing", "--checkpoint", &ckpt, "--out", &m2]), 0);
    let a = fs::read(Path::new(&m1).join("missing.csv")).unwrap();
    assert_eq!(a, fs::read(Path::new(&m2).join("missing.csv")).unwrap());
    let rows = lines(Path::new(&m1).join("missing.csv"));
    assert_eq!(rows.len(), 6);
    assert!(rows[1..].iter().all(|r| r.split(',').nth(3) == Some("10")));

    assert_eq!(code(&["eval", "--checkpoint", &ckpt, "--protocol", "time_label", "--out", &e]), 0);
    let center = lines(Path::new(&e).join("metrics.csv")).into_iter().find(|r| r.starts_with("time_label,center,")).unwrap();
    let tail = |r: &str| r.split(',').skip(4).collect::<Vec<_>>().join(",");
    assert_eq!(tail(&rows[1]), tail(&center));
}

#[test]
fn protocol_toggle_on_duplicate_fixture() {
    let dir = TempDir::new().unwrap();
    let mut samples = Vec::new();
    for id in 0..4u64 {
        let base = id as f64 * 10.0;
        for (t, split, dx) in [(0, Split::Query, 0.0), (0, Split::Gallery, 0.01), (1, Split::Gallery, 3.0)] {
            let v = vec![base + dx, t as f64 * 4.0];
            samples.push(Sample::new(id, t, split, vec![Some(v.clone()), Some(v.clone()), Some(v)]).unwrap());
        }
        let imp = vec![base + 1.5, 0.0];
        samples.push(Sample::new(id + 50, 0, Split::Gallery, vec![Some(imp.clone()), Some(imp.clone()), Some(imp)]).unwrap());
        samples.push(Sample::new(id + 60, 0, Split::Train, vec![Some(vec![0.0, 0.0]); 3]).unwrap());
    }
    let manifest = path(&dir, "dup.jsonl");
    write_manifest(&DatasetManifest::new(samples).unwrap(), Path::new(&manifest)).unwrap();
    let mut cfg = RunConfig::default();
    cfg.model.input = InputKind::Vector { dim: 2 };
    cfg.data.manifest = Some(PathBuf::from(&manifest));
    cfg.eval.raw_features = true;
    cfg.eval.subsets = vec!["R+N+T".into()];
    cfg.eval.masked_center = false;
    let cfg_path = path(&dir, "cfg.json");
    fs::write(&cfg_path, cfg.to_json().unwrap()).unwrap();
    let out = path(&dir, "e");
    assert_eq!(code(&["eval", "--config", &cfg_path, "--out", &out]), 0);
    let rows = lines(Path::new(&out).join("metrics.csv"));
    assert_eq!(rows.len(), 3);
    let field = |r: &str, i: usize| -> f64 { r.split(',').nth(i).unwrap().parse().unwrap() };
    assert!(rows[1].starts_with("none,") && rows[2].starts_with("time_label,"));
    assert!(field(&rows[2], 4) < field(&rows[1], 4));
    assert!(field(&rows[2], 5) <= field(&rows[1], 5));
}

#[test]
fn sweep_grid_sizes() {
    let dir = TempDir::new().unwrap();
    let (s1, s2) = (path(&dir, "s1"), path(&dir, "s20"));
    let one = ["sweep", "--epochs", "2", "--set", "sweep.lambdas=[0.3]", "--set", "sweep.alphas=[]", "--out", &s1];
    assert_eq!(code(&one), 0);
    let rows = lines(Path::new(&s1).join("sweep.csv"));
    assert_eq!(rows, vec!["param,lambda,alpha,mAP,rank1,rank5,rank10".to_string(), rows[1].clone()]);
    assert!(rows[1].starts_with("lambda,0.30,0.60,"));
    assert_eq!(code(&["sweep", "--epochs", "1", "--out", &s2]), 0);
    let rows = lines(Path::new(&s2).join("sweep.csv"));
    assert_eq!(rows.len(), 21);
    assert_eq!(rows[1..].iter().filter(|r| r.starts_with("lambda,")).count(), 10);
    assert!(rows[11..].iter().all(|r| r.starts_with("alpha,0.30,")));
}

#[test]
fn gradcheck_passes_and_fault_fails_with_offender() {
    let dir = TempDir::new().unwrap();
    let quick = ["--set", "gradcheck.batches=5", "--set", "gradcheck.trials=1"];
    let mut ok = vec!["gradcheck"];
    let g = path(&dir, "g");
    ok.extend(quick);
    ok.extend(["--out", &g]);
    assert_eq!(code(&ok), 0);
    let rows = lines(Path::new(&g).join("gradcheck.csv"));
    assert_eq!(rows[0], "check,max_rel_error,tolerance,status");
    assert!(rows[1..].iter().all(|r| r.ends_with(",pass")));

    let bad = path(&dir, "bad");
    let mut args = vec!["gradcheck", "--inject-fault"];
    args.extend(quick);
    args.extend(["--out", &bad]);
    let o = run(&args, None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("worst offender cdc"));
    assert!(lines(Path::new(&bad).join("gradcheck.csv")).iter().any(|r| r.ends_with(",fail")));
}

#[test]
fn exit_codes_and_seed_fallback() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "x");
    assert_eq!(code(&["eval", "--checkpoint", "/nonexistent/model.ccnl", "--out", &out]), 3);
    assert_eq!(code(&["train", "--loss", "nope", "--out", &out]), 2);
    assert_eq!(code(&["train", "--set", "train.epochs=0", "--out", &out]), 2);
    assert_eq!(code(&["missing", "--out", &out]), 2);
    let bad = path(&dir, "bad.json");
    fs::write(&bad, "{\"train\": {\"epochs\": \"many\"}}").unwrap();
    assert_eq!(code(&["train", "--config", &bad, "--out", &out]), 2);

    let g = path(&dir, "g");
    let o = run(&["gradcheck", "--set", "gradcheck.batches=1", "--set", "gradcheck.trials=1", "--out", &g], Some("41"));
    assert_eq!(o.status.code(), Some(0));
    let echo = RunConfig::load(&Path::new(&g).join("config.json")).unwrap();
    assert_eq!(echo.seed, Some(41));
    assert_eq!(echo.gradcheck.seed, 41);
}
