use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const QUARTET: &str = "country,p_1,p_2,q_1,q_2\nA,5,9,8,6\nB,7,7,7,10\nC,10,10,1,9\nD,10,4,10,2\n";
const CONSISTENT: &str = "country,p_1,p_2,q_1,q_2\n1,1,1,1,2\n2,10,0.1,1,100\n3,0.1,10,1000,10\n";
const CYCLIC: &str =
    "country,p_1,p_2,p_3,q_1,q_2,q_3\n1,2.5,4.5,2,5,3.5,1\n2,3.5,1,5.5,3.5,4,2.5\n3,5.5,3,2.5,3.5,2,5.5\n";
const AUX: &str = "country,population,market_rate\nA,10,1\nB,20,1.1\nC,5,0.9\nD,40,2\n";

fn refcons(args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_refcons"));
    for (k, _) in std::env::vars() {
        if k.starts_with("REFCONS_") {
            cmd.env_remove(k);
        }
    }
    cmd.args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn consistent_data_exits_zero() {
    let dir = TempDir::new().unwrap();
    let data = write(dir.path(), "a.csv", CONSISTENT);
    let o = refcons(&["check", "--data", &data]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("SATISFIED"));
}

#[test]
fn violation_exits_one_with_cycle() {
    let dir = TempDir::new().unwrap();
    let data = write(dir.path(), "b.csv", CYCLIC);
    let o = refcons(&["check", "--data", &data]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    let cycle = out.lines().find(|l| l.starts_with("cycle:")).unwrap();
    assert_eq!(cycle.matches("->").count(), 3, "{cycle}");
}

#[test]
fn bounds_refuse_inconsistent_data() {
    let dir = TempDir::new().unwrap();
    let data = write(dir.path(), "d.csv", QUARTET);
    let o = refcons(&["bounds", "--data", &data]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("A -> D -> A"));
}

#[test]
fn input_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let empty = write(dir.path(), "e.csv", "country,p_1,q_1\n");
    let data = write(dir.path(), "d.csv", QUARTET);
    let missing = dir.path().join("missing.csv").display().to_string();
    let ragged = write(dir.path(), "r.csv", "country,p_1,q_1\nA,1\n");
    let negative = write(dir.path(), "n.csv", "country,p_1,q_1\nA,-1,2\n");
    for args in [
        vec!["check", "--data", empty.as_str()],
        vec!["check", "--data", missing.as_str()],
        vec!["check", "--data", ragged.as_str()],
        vec!["check", "--data", negative.as_str()],
        vec!["aggregate", "--data", data.as_str(), "--method", "bogus"],
        vec!["check", "--data", data.as_str(), "--base", "Z"],
        vec!["check", "--bogus-flag"],
    ] {
        let o = refcons(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn aggregate_without_populations_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let data = write(dir.path(), "d.csv", QUARTET);
    let o = refcons(&["aggregate", "--data", &data, "--method", "geks"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("population"));
}

fn pipeline(dir: &Path, out: &str, threads: &str) -> PathBuf {
    let data = write(dir, "quartet.csv", QUARTET);
    let aux = write(dir, "aux.csv", AUX);
    let out = dir.join(out);
    let o = refcons(&[
        "--threads",
        threads,
        "pipeline",
        "--data",
        &data,
        "--aux",
        &aux,
        "--out",
        &out.display().to_string(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn pipeline_writes_the_star_extension() {
    let dir = TempDir::new().unwrap();
    let out = pipeline(dir.path(), "out", "1");
    let matrix = fs::read_to_string(out.join("gss_matrix.csv")).unwrap();
    assert_eq!(matrix.lines().next().unwrap(), "i,j,lower,upper,value");
    let row = matrix.lines().find(|l| l.starts_with("A,D,")).unwrap();
    let value: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert!((value - 1.399).abs() < 1e-3, "{row}");
    let forecasts = fs::read_to_string(out.join("gss_forecasts.csv")).unwrap();
    assert!(forecasts.contains('D'));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["failures"].as_array().unwrap().len(), 0);
    for name in ["lorenz.csv", "aggregates.json", "comparison.txt", "indices.csv"] {
        assert!(manifest["outputs"][name].is_string(), "{name} missing from manifest");
        assert!(out.join(name).exists());
    }
}

#[test]
fn pipeline_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = pipeline(dir.path(), "a", "1");
    let b = pipeline(dir.path(), "b", "4");
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 10);
    for name in names {
        assert_eq!(
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap(),
            "{name:?} differs"
        );
    }
}

#[test]
fn environment_supplies_arguments() {
    let dir = TempDir::new().unwrap();
    let data = write(dir.path(), "a.csv", CONSISTENT);
    let o = Command::new(env!("CARGO_BIN_EXE_refcons"))
        .arg("check")
        .env("REFCONS_DATA", &data)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn ingest_round_trips_into_check() {
    let dir = TempDir::new().unwrap();
    let ppp = write(dir.path(), "ppp.csv", "heading,USA,CHN\nh1,1,4\nh2,1,3\n");
    let exp = write(dir.path(), "exp.csv", "heading,USA,CHN\nh1,100,80\nh2,50,60\n");
    let out = dir.path().join("ingested");
    let o = refcons(&[
        "ingest",
        "--ppp",
        &ppp,
        "--expenditure",
        &exp,
        "--base",
        "USA",
        "--out",
        &out.display().to_string(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let direct = out.join("dataset.csv").display().to_string();
    let text = fs::read_to_string(&direct).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("USA,"));
    let o = refcons(&["check", "--data", &direct]);
    assert!(matches!(o.status.code(), Some(0 | 1)));
    assert!(stdout(&o).contains("GARP"));
}
