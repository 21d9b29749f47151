use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hyperseq::dataio::{load_sessions_path, ExclusionMode};
use hyperseq::eval::OracleModel;
use hyperseq::Model;

fn hyperseq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperseq"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        o.status,
        stdout(&o),
        stderr(&o)
    );
    o
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen_small(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("data.jsonl");
    let mut args = vec![
        "gen",
        "--users",
        "5",
        "--sessions",
        "3",
        "--length",
        "40",
        "--out",
        p(&out),
    ];
    args.extend_from_slice(extra);
    ok(hyperseq(&args));
    out
}

#[test]
fn gen_defaults_to_21_users_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    ok(hyperseq(&["gen", "--seed", "3", "--out", p(&a)]));
    ok(hyperseq(&["gen", "--seed", "3", "--out", p(&b)]));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let d = load_sessions_path(&a, &Default::default(), ExclusionMode::Splice).unwrap();
    assert_eq!(d.users().len(), 21);
    assert_eq!(d.len(), 21 * 5);
}

#[test]
fn gen_rejects_zero_users() {
    let dir = tempfile::tempdir().unwrap();
    let o = hyperseq(&["gen", "--users", "0", "--out", p(&dir.path().join("x.jsonl"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("users"));
}

#[test]
fn train_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path(), &[]);
    let model = dir.path().join("m.hsq");
    let out = ok(hyperseq(&[
        "train",
        "--data",
        p(&data),
        "--out",
        p(&model),
        "--dim",
        "2000",
    ]));

    let d = load_sessions_path(&data, &Default::default(), ExclusionMode::Splice).unwrap();
    let windows = OracleModel::build(d.sessions(), 3).total_count();
    assert!(stdout(&out).contains(&format!("train_ngram_count: {windows}")));

    let m = Model::load_from_path(&model).unwrap();
    assert_eq!(m.config().dim, 2000);
    assert_eq!(m.train_ngram_count(), windows);

    let o = ok(hyperseq(&["predict", "--model", p(&model), "--prefix", "s0,s1"]));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 9);
    let scores: Vec<(&str, f64)> = lines[1..]
        .iter()
        .map(|l| {
            let (label, s) = l.split_once('\t').unwrap();
            (label, s.parse().unwrap())
        })
        .collect();
    assert_eq!(lines[0], scores[0].0);
    assert!(scores.windows(2).all(|w| w[0].1 >= w[1].1));
    assert_eq!(lines[0], m.predict_next(&["s0", "s1"]).unwrap().predicted);
}

#[test]
fn predict_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path(), &[]);
    let model = dir.path().join("m.hsq");
    ok(hyperseq(&[
        "train",
        "--data",
        p(&data),
        "--out",
        p(&model),
        "--dim",
        "500",
        "--ngram",
        "4",
    ]));

    let o = hyperseq(&["predict", "--model", p(&model), "--prefix", "s0,s1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("n-1 = 3"), "{}", stderr(&o));

    let o = hyperseq(&["predict", "--model", p(&model), "--prefix", "s0,s1,nope"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope"));

    let o = hyperseq(&["predict", "--model", p(&dir.path().join("missing")), "--prefix", "a"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn data_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let short = dir.path().join("short.jsonl");
    fs::write(&short, "{\"user\":\"u\",\"session\":0,\"states\":[\"a\",\"b\"]}\n").unwrap();
    let o = hyperseq(&["train", "--data", p(&short), "--out", p(&dir.path().join("m"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"user\":\"u\",\"session\":0,\"states\":[\"a\"]}\nnot json\n").unwrap();
    let o = hyperseq(&["train", "--data", p(&bad), "--out", p(&dir.path().join("m"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"));

    let model = dir.path().join("junk.hsq");
    fs::write(&model, b"HSEQ not really a model").unwrap();
    let o = hyperseq(&["predict", "--model", p(&model), "--prefix", "a,b"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path(), &[]);
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"dim": 700, "ngram": 4, "entry_bits": 16}"#).unwrap();
    let model = dir.path().join("m.hsq");
    ok(hyperseq(&[
        "train",
        "--config",
        p(&cfg),
        "--dim",
        "900",
        "--data",
        p(&data),
        "--out",
        p(&model),
    ]));
    let m = Model::load_from_path(&model).unwrap();
    assert_eq!(
        (m.config().dim, m.config().n, m.config().entry_bits.bits()),
        (900, 4, 16)
    );

    fs::write(&cfg, r#"{"dimension": 700}"#).unwrap();
    let o = hyperseq(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&model)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_is_idempotent_and_writes_series_when_adaptive() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path(), &["--perturbation", "0.5"]);
    let model = dir.path().join("m.hsq");
    ok(hyperseq(&[
        "train",
        "--data",
        p(&data),
        "--out",
        p(&model),
        "--dim",
        "1000",
    ]));

    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(hyperseq(&[
            "eval",
            "--model",
            p(&model),
            "--data",
            p(&data),
            "--out",
            p(out),
        ]));
    }
    for f in ["eval.csv", "events.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    assert!(!a.join("series.json").exists());

    let c = dir.path().join("c");
    ok(hyperseq(&[
        "eval",
        "--data",
        p(&data),
        "--strategy",
        "disjoint",
        "--dim",
        "1000",
        "--adaptive",
        "--window",
        "30",
        "--out",
        p(&c),
    ]));
    let series: serde_json::Value = serde_json::from_slice(&fs::read(c.join("series.json")).unwrap()).unwrap();
    let users = series.as_array().unwrap();
    assert!(!users.is_empty());
    let first = &users[0];
    assert!(first["user"].is_string());
    let points = first["series"].as_array().unwrap();
    // 3 sessions of 40 states give 114 events per user.
    assert_eq!(points.len(), 114 - 29);
    assert_eq!(points[0][0], 29);
}

#[test]
fn kfold_eval_reports_each_fold_and_the_mean() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path(), &[]);
    let out = dir.path().join("ev");
    ok(hyperseq(&[
        "eval",
        "--data",
        p(&data),
        "--strategy",
        "kfold",
        "--dim",
        "800",
        "--out",
        p(&out),
    ]));
    let mut rdr = csv::Reader::from_path(out.join("eval.csv")).unwrap();
    let folds: Vec<String> = rdr.records().map(|r| r.unwrap()[0].to_owned()).collect();
    assert_eq!(folds, ["0", "1", "2", "3", "4", "mean", "pooled"]);
}

#[test]
fn eval_without_model_or_strategy_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path(), &[]);
    let o = hyperseq(&["eval", "--data", p(&data), "--out", p(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_skips_invalid_cells_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path(), &[]);
    let cfg = dir.path().join("grid.json");
    fs::write(
        &cfg,
        r#"{"grid": {"dims": [64, 256], "ngram_lengths": [9], "shifts": [8], "adaptive": [false, true],
            "strategies": ["disjoint"], "seeds": [0]}}"#,
    )
    .unwrap();
    let out = dir.path().join("sweep");
    let o = ok(hyperseq(&[
        "sweep",
        "--config",
        p(&cfg),
        "--data",
        p(&data),
        "--out",
        p(&out),
    ]));
    assert!(
        stdout(&o).contains("cells: 4 (4 computed, 0 already done, 2 skipped)"),
        "{}",
        stdout(&o)
    );

    let mut rdr = csv::Reader::from_path(out.join("results.csv")).unwrap();
    let status: Vec<String> = rdr.records().map(|r| r.unwrap()[11].to_owned()).collect();
    assert_eq!(status, ["skipped", "skipped", "ok", "ok"]);
    assert!(out
        .join("series")
        .join("seed0_d256_n9_s8_adaptive_disjoint.json")
        .exists());

    let o = ok(hyperseq(&[
        "sweep",
        "--config",
        p(&cfg),
        "--data",
        p(&data),
        "--out",
        p(&out),
    ]));
    assert!(stdout(&o).contains("(0 computed, 4 already done"));
}

#[test]
fn committed_full_grid_config_has_288_cells() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/full_grid.json");
    let v: serde_json::Value = serde_json::from_slice(&fs::read(path).unwrap()).unwrap();
    let g = &v["grid"];
    let cells: usize = ["dims", "ngram_lengths", "shifts", "adaptive", "strategies", "seeds"]
        .iter()
        .map(|k| g[k].as_array().unwrap().len())
        .product();
    assert_eq!(cells, 288);
}
