use std::fs;
use std::process::{Command, Output};

fn minpat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_minpat")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const NEVADA: &str = "2,10,4,2\n3,8,4,6\n13,5,3,9\n20,36,19,20\n";

#[test]
fn region_prints_bounds() {
    let o = minpat(&["region", "--mean", "99.484", "--alpha", "1e-4"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let fields: Vec<&str> = out.split_whitespace().collect();
    assert_eq!(&fields[..2], &["63", "140"]);
    assert!(fields[2].parse::<f64>().unwrap() > 0.0);
}

#[test]
fn pattern_counts() {
    let o = minpat(&["patterns", "--count", "--model", "independence", "--dims", "4,4"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("minimal 9552"), "{out}");
    assert!(out.contains("strictly_minimal 4096"), "{out}");
}

#[test]
fn pattern_sampling_is_seeded() {
    let a = minpat(&["patterns", "--sample", "20", "--seed", "4", "--dims", "5,5"]);
    let b = minpat(&["patterns", "--sample", "20", "--seed", "4", "--dims", "5,5", "--threads", "1"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().count(), 20);
    assert!(stdout(&a).lines().all(|l| l.split_whitespace().count() == 13));
}

#[test]
fn detect_nevada_ompc() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("nevada.csv");
    fs::write(&input, NEVADA).unwrap();
    let report = dir.path().join("report.json");
    let args = [
        "detect", "--method", "ompc", "--alpha", "0.001", "--model", "independence",
        "--input", input.to_str().unwrap(), "--out", report.to_str().unwrap(),
    ];
    let o = minpat(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("solution 1: (3,1) (3,2)"), "{}", stdout(&o));
    let first = fs::read(&report).unwrap();
    let json: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(json["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(json["config"]["method"], "ompc");
    assert_eq!(json["report"]["r"][0], 4179);
    let flags = json["report"]["flags"][0].as_array().unwrap();
    let flagged: Vec<usize> = (0..16).filter(|&j| flags[j] == true).collect();
    assert_eq!(flagged, vec![8, 9]);

    assert!(minpat(&args).status.success());
    assert_eq!(fs::read(&report).unwrap(), first);
}

#[test]
fn detect_oltcs_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("nevada.csv");
    fs::write(&input, NEVADA).unwrap();
    let run = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let o = minpat(&[
            "--threads", threads, "detect", "--method", "oltcs", "--alpha", "0.001", "--seed", "5",
            "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        fs::read(out).unwrap()
    };
    let a = run("1", "a.json");
    let b = run("3", "b.json");
    let strip = |v: Vec<u8>| {
        let mut j: serde_json::Value = serde_json::from_slice(&v).unwrap();
        j["config"]["out"] = serde_json::Value::Null;
        j
    };
    assert_eq!(strip(a), strip(b));
}

#[test]
fn fit_subset() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t.csv");
    fs::write(&input, NEVADA).unwrap();
    let o = minpat(&["fit", "--input", input.to_str().unwrap(), "--cells", "0,1,2,3,4,8,12"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with("converged true"));
    // a saturated fit reproduces its cells
    assert!(out.contains("(1,1) 2 2.0000"), "{out}");
}

#[test]
fn casestudy_glass() {
    let o = minpat(&["casestudy", "glass"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.lines().filter(|l| l.trim_end().ends_with("yes")).count() >= 5, "{out}");
}

#[test]
fn simulate_scenario_csv() {
    let o = minpat(&["simulate", "--scenario", "1", "--method", "ol1", "--replications", "10", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "scenario,planted,method,outliers,inliers,replications");
    assert!(lines[1].starts_with("\"1: antitype\",62,ol1,"));
    assert!(lines[2].starts_with("\"1: type\",141,ol1,"));
}

#[test]
fn cutoff_study_csv() {
    let o = minpat(&["simulate", "--cutoff-study", "--sizes", "3", "--tables", "20", "--seed", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("3x3,M0,"));
    assert_eq!(lines[2].split(',').count(), 11);
}

#[test]
fn exit_codes() {
    assert_eq!(minpat(&["detect"]).status.code(), Some(1));
    assert_eq!(minpat(&["region", "--mean", "5", "--alpha", "2"]).status.code(), Some(1));
    assert_eq!(minpat(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let ragged = dir.path().join("bad.csv");
    fs::write(&ragged, "1,2,3\n4,5\n").unwrap();
    let o = minpat(&["detect", "--method", "omp", "--alpha", "0.01", "--input", ragged.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let missing = dir.path().join("nope.csv");
    let o = minpat(&["detect", "--method", "omp", "--alpha", "0.01", "--input", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    // a single nonzero cell leaves every pattern fit unusable
    let zeros = dir.path().join("zeros.csv");
    fs::write(&zeros, "0,0,0\n0,0,0\n0,0,7\n").unwrap();
    let o = minpat(&["detect", "--method", "ompc", "--alpha", "0.01", "--input", zeros.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
