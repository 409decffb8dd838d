use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_nhsvm");

fn nhsvm(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const CHAIN: &str = "0 1\n1 2\n";
const STAR: &str = "0 1\n0 2\n0 3\n";

#[test]
fn alpha_writes_one_line_per_node() {
    let dir = tempfile::tempdir().unwrap();
    let h = write(dir.path(), "h.txt", CHAIN);
    let o = nhsvm(&["alpha", "--hierarchy", p(&h), "--scheme", "rho", "--rho", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let lines: Vec<(u64, f64)> = stdout(&o)
        .lines()
        .map(|l| {
            let (a, b) = l.split_once(' ').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(lines.len(), 3);
    // single path of three nodes: uniform 1/3 under rho = 2
    for (_, w) in &lines {
        assert!((w - 1.0 / 3.0).abs() < 1e-6);
    }
}

#[test]
fn alpha_to_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let h = write(dir.path(), "h.txt", STAR);
    let out = dir.path().join("alpha.txt");
    let a = nhsvm(&["alpha", "--hierarchy", p(&h), "--alpha-scheme", "maximin", "--out", p(&out)]);
    assert_eq!(a.status.code(), Some(0));
    assert!(a.stdout.is_empty());
    let b = nhsvm(&["alpha", "--hierarchy", p(&h), "--alpha-scheme", "maximin"]);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), stdout(&b));
}

#[test]
fn missing_hierarchy_is_a_usage_error() {
    let o = nhsvm(&["train", "--train", "x", "--out", "m.json"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("--hierarchy"), "{err}");
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = nhsvm(&["alpha", "--hierarchy", "h", "--bogus", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let o = nhsvm(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("bench"));
}

#[test]
fn invalid_rho_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let h = write(dir.path(), "h.txt", CHAIN);
    let o = nhsvm(&["alpha", "--hierarchy", p(&h), "--rho", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn malformed_hierarchy_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let h = write(dir.path(), "h.txt", "0 1\n1 0\n");
    let o = nhsvm(&["alpha", "--hierarchy", p(&h)]);
    assert_eq!(o.status.code(), Some(2));
    let missing = nhsvm(&["alpha", "--hierarchy", p(&dir.path().join("nope"))]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn label_on_internal_node_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let h = write(dir.path(), "h.txt", STAR);
    write(dir.path(), "d.features", "0:1.0\n");
    write(dir.path(), "d.labels", "0\n");
    let out = dir.path().join("m.json");
    let o = nhsvm(&[
        "train", "--hierarchy", p(&h), "--train", p(&dir.path().join("d")), "--out", p(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}

#[test]
fn synth_train_predict_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("u");
    let s = nhsvm(&[
        "synth", "--suite", "unbalanced", "--d", "10", "--depth", "4", "--n", "400",
        "--split", "0.5,0.25,0.25", "--seed", "3", "--out", p(&prefix),
    ]);
    assert_eq!(s.status.code(), Some(0), "{}", String::from_utf8_lossy(&s.stderr));
    let h = dir.path().join("u.hierarchy");
    let model = dir.path().join("m.json");
    let t = nhsvm(&[
        "train", "--hierarchy", p(&h), "--train", p(&dir.path().join("u.train")),
        "--holdout", p(&dir.path().join("u.holdout")), "--lambdas", "1e-4,1e-2,1",
        "--epochs", "10", "--objective", "nhsvm", "--out", p(&model), "-q",
    ]);
    assert_eq!(t.status.code(), Some(0), "{}", String::from_utf8_lossy(&t.stderr));
    assert!(t.stderr.is_empty());

    let test = dir.path().join("u.test");
    let pr = nhsvm(&["predict", "--model", p(&model), "--hierarchy", p(&h), "--data", p(&test)]);
    assert_eq!(pr.status.code(), Some(0));
    let truth = std::fs::read_to_string(dir.path().join("u.test.labels")).unwrap();
    let predicted = stdout(&pr);
    assert_eq!(predicted.lines().count(), truth.lines().count());
    let hits = predicted.lines().zip(truth.lines()).filter(|(a, b)| a == b).count();

    let ev = nhsvm(&[
        "evaluate", "--model", p(&model), "--hierarchy", p(&h), "--data", p(&test), "--format", "kv",
    ]);
    assert_eq!(ev.status.code(), Some(0));
    let kv = stdout(&ev);
    let acc: f64 = kv
        .lines()
        .find_map(|l| l.strip_prefix("accuracy="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((acc - hits as f64 / truth.lines().count() as f64).abs() < 1e-12);
    assert!(acc > 0.5, "accuracy {acc}");
}

#[test]
fn same_seed_same_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let prefix = dir.path().join(name);
        let s = nhsvm(&["synth", "--suite", "balanced", "--d", "5", "--n", "100", "--seed", "9", "--out", p(&prefix)]);
        assert_eq!(s.status.code(), Some(0));
        let model = dir.path().join(format!("{name}.json"));
        let h = dir.path().join(format!("{name}.hierarchy"));
        let t = nhsvm(&[
            "train", "--hierarchy", p(&h), "--train", p(&prefix), "--epochs", "3", "--out", p(&model), "-q",
        ]);
        assert_eq!(t.status.code(), Some(0));
        (
            std::fs::read(dir.path().join(format!("{name}.features"))).unwrap(),
            std::fs::read(&model).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn model_rejects_other_hierarchy() {
    let dir = tempfile::tempdir().unwrap();
    let h = write(dir.path(), "h.txt", STAR);
    let other = write(dir.path(), "o.txt", "0 1\n0 2\n");
    write(dir.path(), "d.features", "0:1\n0:-1\n1:1\n");
    write(dir.path(), "d.labels", "1\n2\n3\n");
    let model = dir.path().join("m.json");
    let data = dir.path().join("d");
    let t = nhsvm(&["train", "--hierarchy", p(&h), "--train", p(&data), "--out", p(&model), "-q"]);
    assert_eq!(t.status.code(), Some(0));
    let o = nhsvm(&["predict", "--model", p(&model), "--hierarchy", p(&other), "--data", p(&data)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let h = write(dir.path(), "h.txt", STAR);
    let cfg = write(dir.path(), "c.conf", "# weights\nalpha-scheme = rho\nrho = 3\ndirectional = false\n");
    let from_file = nhsvm(&["alpha", "--hierarchy", p(&h), "--config", p(&cfg)]);
    let direct = nhsvm(&["alpha", "--hierarchy", p(&h), "--rho", "3"]);
    assert_eq!(from_file.status.code(), Some(0), "{}", String::from_utf8_lossy(&from_file.stderr));
    assert_eq!(stdout(&from_file), stdout(&direct));

    let overridden = nhsvm(&["alpha", "--hierarchy", p(&h), "--config", p(&cfg), "--alpha-scheme", "flat"]);
    let flat = nhsvm(&["alpha", "--hierarchy", p(&h), "--alpha-scheme", "flat"]);
    assert_eq!(stdout(&overridden), stdout(&flat));

    let bad = write(dir.path(), "bad.conf", "unknown-key = 1\n");
    let o = nhsvm(&["alpha", "--hierarchy", p(&h), "--config", p(&bad)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn norms_prints_every_report() {
    let dir = tempfile::tempdir().unwrap();
    let h = write(dir.path(), "h.txt", STAR);
    let m = write(dir.path(), "u.txt", "1 -2 2\n1 -2 2\n1 -2 2\n");
    let o = nhsvm(&["norms", "--matrix", p(&m), "--hierarchy", p(&h)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 6);
    let structured: f64 = text
        .lines()
        .find(|l| l.starts_with("shared_structured"))
        .unwrap()
        .split_whitespace()
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!((structured - 3.0).abs() < 1e-4);

    let wrong = write(dir.path(), "w.txt", "1 2\n");
    let o = nhsvm(&["norms", "--matrix", p(&wrong), "--hierarchy", p(&h)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn tiny_bench_reports_every_method() {
    let o = nhsvm(&[
        "bench", "--suite", "unbalanced", "--seeds", "2", "--d", "8", "--n", "120", "--depth", "3",
        "--epochs", "2", "--inner-epochs", "2", "--outer-rounds", "2", "--lambdas", "1e-2,1", "-q",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let header = text.lines().next().unwrap();
    for m in ["flat", "hsvm", "nhsvm", "ssvm"] {
        assert!(header.split_whitespace().any(|h| h == m), "{header}");
    }
    assert!(text.lines().last().unwrap().starts_with("median"));
}

#[test]
fn parse_config_rejects_garbage() {
    assert!(nhsvm_cli::parse_config("novalue\n").is_err());
    let kv = nhsvm_cli::parse_config("a = 1\n\n# c\nb=2\n").unwrap();
    assert_eq!(kv, vec![("a".into(), "1".into()), ("b".into(), "2".into())]);
}
