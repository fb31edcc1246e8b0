use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn nplink(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nplink")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = nplink(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &TempDir, name: &str, nodes: usize, steps: usize, seed: u64) -> PathBuf {
    let p = path(dir, name);
    ok(&[
        "simulate",
        "--preset",
        "seasonal",
        "--nodes",
        &nodes.to_string(),
        "--steps",
        &steps.to_string(),
        "--seed",
        &seed.to_string(),
        "-o",
        s(&p),
    ]);
    p
}

#[test]
fn simulate_reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let a = simulate(&dir, "a.txt", 30, 8, 3);
    let b = simulate(&dir, "b.txt", 30, 8, 3);
    let c = simulate(&dir, "c.txt", 30, 8, 4);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(path(&dir, "a.txt.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "simulate");
    assert_eq!(manifest["parameters"]["seed"], 3);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(nplink(&["simulate"]).status.code(), Some(2));
    assert_eq!(nplink(&["simulate", "-o", "x.txt", "--bogus"]).status.code(), Some(2));
    assert_eq!(nplink(&["frobnicate"]).status.code(), Some(2));
    let out = nplink(&["predict", "-i", "x.txt", "-o", "y.csv", "--bandwidth", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("(0, 1)"));
}

#[test]
fn runtime_failures_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let missing = path(&dir, "missing.txt");
    let out = nplink(&["predict", "-i", s(&missing), "-o", s(&path(&dir, "p.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.txt"));
    let bad = path(&dir, "bad.txt");
    fs::write(&bad, "1 0 1\nnot an edge\n").unwrap();
    let out = nplink(&["predict", "-i", s(&bad), "-o", s(&path(&dir, "p.csv"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn evaluate_output_does_not_depend_on_thread_count() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str, threads: Option<&str>| {
        let out = path(&dir, name);
        let mut args = vec![
            "evaluate",
            "--preset",
            "seasonal",
            "--nodes",
            "40",
            "--steps",
            "8",
            "--seeds",
            "0,1",
            "--method",
            "nonparam,ll,cn,katz-all",
            "--bandwidth",
            "0.5",
            "-o",
            s(&out),
        ];
        let per = path(&dir, &format!("{name}.per"));
        args.extend(["--per-source", s(&per)]);
        if let Some(t) = threads {
            args.extend(["--threads", t]);
        }
        ok(&args);
        (fs::read(&out).unwrap(), fs::read(&per).unwrap())
    };
    let one = run("one.csv", Some("1"));
    let many = run("many.csv", None);
    assert_eq!(one, many);
    let rows = String::from_utf8(one.0).unwrap();
    assert_eq!(rows.lines().count(), 1 + 4 * 2);
    assert!(rows.starts_with("method,seed,mean_auc"));
}

#[test]
fn bench_writes_one_row_per_length_and_mode() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "bench.csv");
    ok(&[
        "bench-lsh",
        "--preset",
        "seasonal",
        "--nodes",
        "30",
        "--steps-sweep",
        "6,10",
        "--queries",
        "10",
        "-o",
        s(&out),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    let mut keys: Vec<(&str, &str)> = rows.iter().map(|r| (r[0], r[1])).collect();
    keys.sort_unstable();
    keys.dedup();
    assert_eq!(keys.len(), 4);
    assert!(path(&dir, "bench.csv.manifest.json").exists());
}

#[test]
fn holdout_predictions_ignore_the_last_snapshot() {
    let dir = TempDir::new().unwrap();
    let g = simulate(&dir, "g.txt", 30, 8, 1);
    let text = fs::read_to_string(&g).unwrap();
    let mutated: String = text
        .lines()
        .filter(|l| !l.starts_with("8 ") || l.ends_with(" -") || l.len() % 3 == 0)
        .map(|l| format!("{l}\n"))
        .collect();
    assert_ne!(mutated, text);
    let h = path(&dir, "h.txt");
    fs::write(&h, &mutated).unwrap();
    for method in ["nonparam", "ll", "aa-all"] {
        let run = |input: &Path, name: &str| {
            let out = path(&dir, name);
            ok(&[
                "predict",
                "-i",
                s(input),
                "--holdout",
                "--method",
                method,
                "--exact",
                "--bandwidth",
                "0.5",
                "-o",
                s(&out),
            ]);
            fs::read_to_string(out).unwrap()
        };
        let a = run(&g, "a.csv");
        let b = run(&h, "b.csv");
        let scores = |csv: &str| -> Vec<(String, String, String)> {
            csv.lines()
                .map(|l| {
                    let f: Vec<&str> = l.split(',').collect();
                    (f[0].into(), f[1].into(), f[2].into())
                })
                .collect()
        };
        let (sa, sb) = (scores(&a), scores(&b));
        for row in &sb {
            assert!(sa.contains(row), "{method}: {row:?} changed");
        }
    }
}

#[test]
fn predictions_reuse_a_saved_index() {
    let dir = TempDir::new().unwrap();
    let g = simulate(&dir, "g.txt", 30, 10, 2);
    let prefix = path(&dir, "model");
    ok(&["train-index", "-i", s(&g), "--bandwidth", "0.5", "--k", "6", "-o", s(&prefix)]);
    assert!(path(&dir, "model.cubes").exists());
    assert!(path(&dir, "model.lsh").exists());
    let fresh = path(&dir, "fresh.csv");
    let saved = path(&dir, "saved.csv");
    ok(&["predict", "-i", s(&g), "--bandwidth", "0.5", "--k", "6", "-o", s(&fresh)]);
    ok(&["predict", "-i", s(&g), "--bandwidth", "0.5", "--k", "6", "--index", s(&prefix), "-o", s(&saved)]);
    assert_eq!(fs::read(&fresh).unwrap(), fs::read(&saved).unwrap());
    let rows = fs::read_to_string(&saved).unwrap();
    assert_eq!(rows.lines().next(), Some("source,target,score,rank"));
    assert!(rows.lines().count() > 1);
}
