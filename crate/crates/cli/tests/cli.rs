use std::path::Path;
use std::process::{Command, Output};

fn ncmsg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncmsg")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn kl_of_a_point_with_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = ncmsg(&["simulate", "--p", "3", "--n", "20", "--seed", "4", "--out", path(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let truth = data.join("truth.json");
    for extra in [None, Some("--symmetric")] {
        let mut args = vec!["kl", "--a", path(&truth), "--b", path(&truth)];
        args.extend(extra);
        let o = ncmsg(&args);
        assert_eq!(o.status.code(), Some(0));
        assert_eq!(stdout(&o).trim().parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn fit_then_barycenter() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = ncmsg(&["simulate", "--p", "2", "--n", "30", "--batches", "2", "--seed", "5", "--out", path(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fitted = dir.path().join("theta.json");
    let o = ncmsg(&["fit", "--data", path(&data), "--beta", "0.1", "--out", path(&fitted)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = dir.path().join("theta.00000.json");
    let b = dir.path().join("theta.00001.json");
    assert!(dir.path().join("theta.00000.report.csv").exists());
    let center = dir.path().join("center.json");
    let o = ncmsg(&["barycenter", "--inputs", path(&a), path(&b), "--out", path(&center)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = ncmsg(&["kl", "--a", path(&a), "--b", path(&center), "--symmetric"]);
    let to_center: f64 = stdout(&o).trim().parse().unwrap();
    let o = ncmsg(&["kl", "--a", path(&a), "--b", path(&b), "--symmetric"]);
    let between: f64 = stdout(&o).trim().parse().unwrap();
    assert!(to_center < between);
}

#[test]
fn exit_codes() {
    let o = ncmsg(&["kl", "--a", "x.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--b"));

    let o = ncmsg(&["kl", "--a", "missing.json", "--b", "missing.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("load parameters"), "{}", stderr(&o));

    let o = ncmsg(&["--help"]);
    assert_eq!(o.status.code(), Some(0));

    // Identical rows leave nothing to estimate a scatter from.
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("manifest.json"),
        r#"{"version": 1, "p": 2, "n": 3, "classes": 0, "batches": [{"file": "b.csv"}]}"#,
    )
    .unwrap();
    std::fs::write(dir.path().join("b.csv"), "1.0,2.0\n1.0,2.0\n1.0,2.0\n").unwrap();
    let out = dir.path().join("theta.json");
    let o = ncmsg(&["fit", "--data", path(dir.path()), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("error in fit"), "{}", stderr(&o));

    let o = Command::new(env!("CARGO_BIN_EXE_ncmsg"))
        .args(["kl", "--a", "x", "--b", "x"])
        .env("NCMSG_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("NCMSG_THREADS"));
}

#[test]
fn classification_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train");
    let test = dir.path().join("test");
    for (d, seed) in [(&train, "6"), (&test, "6")] {
        let o = ncmsg(&[
            "simulate", "--p", "3", "--n", "40", "--classes", "2", "--batches", "5", "--seed", seed, "--out", path(d),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let model = dir.path().join("model.json");
    let o = ncmsg(&["classify", "train", "--data", path(&train), "--out", path(&model)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = ncmsg(&["classify", "predict", "--model", path(&model), "--data", path(&test)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 10);
    let o = ncmsg(&["classify", "eval", "--model", path(&model), "--data", path(&test)]);
    let f1: f64 = stdout(&o).trim().parse().unwrap();
    assert!((0.0..=1.0).contains(&f1));
    let o = ncmsg(&["classify", "train", "--data", path(&train), "--descriptor", "nope", "--out", path(&model)]);
    assert_eq!(o.status.code(), Some(1));
    let o = ncmsg(&[
        "classify", "tune", "--train", path(&train), "--validation", path(&test), "--betas", "1e-3,0.1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 3);
}

const SMALL_ROBUSTNESS: [&str; 12] = [
    "--p", "3", "--n", "20", "--classes", "2", "--train-batches", "4", "--test-batches", "4", "--seed", "8",
];

fn robustness(extra: &[&str]) -> String {
    let mut args = vec!["bench", "robustness"];
    args.extend(SMALL_ROBUSTNESS);
    args.extend(extra);
    let o = ncmsg(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    stdout(&o)
}

fn rows_at(csv: &str, t: &str) -> Vec<String> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .filter(|l| l.split(',').nth(1) == Some(t))
        .map(String::from)
        .collect()
}

#[test]
fn robustness_at_zero_matches_an_untransformed_run() {
    let swept = robustness(&["--mode", "rotation", "--t-grid", "0,1"]);
    let plain = robustness(&["--mode", "rotation", "--t-grid", "0"]);
    let shifted = robustness(&["--mode", "both", "--t-grid", "0"]);
    let zero = rows_at(&swept, "0");
    assert_eq!(zero.len(), 6);
    assert_eq!(zero, rows_at(&plain, "0"));
    assert_eq!(zero, rows_at(&shifted, "0"));
}

#[test]
fn bench_outputs_are_self_describing_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = ncmsg(&[
            "bench", "mse", "--n-grid", "30", "--trials", "3", "--p", "2", "--seed", "9", "--out", path(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    let first = String::from_utf8(text).unwrap().lines().next().unwrap().to_string();
    assert!(first.starts_with("# config") && first.contains("\"seed\":9"), "{first}");

    let o = ncmsg(&[
        "bench", "convergence", "--beta", "1e-3", "--optimizer", "fim,product", "--p", "2", "--n", "10",
        "--max-iter", "50",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let again = ncmsg(&[
        "bench", "convergence", "--beta", "1e-3", "--optimizer", "fim,product", "--p", "2", "--n", "10",
        "--max-iter", "50",
    ]);
    assert_eq!(o.stdout, again.stdout);
    assert!(stdout(&o).starts_with("# config"));

    let csv = robustness(&["--t-grid", "0,0.5"]);
    assert!(csv.starts_with("# config"));
    assert_eq!(csv, robustness(&["--t-grid", "0,0.5"]));
}
