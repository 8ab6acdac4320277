use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mafe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mafe"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = mafe(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn small_scene(dir: &Path) {
    ok(dir, &["synth", "--classes", "3", "--per-class", "12", "--bands", "6", "--seed", "4", "-o", "px.csv"]);
    ok(dir, &["graph", "-i", "px.csv", "--k", "5", "-o", "g.csv"]);
}

#[test]
fn embedding_shape_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_scene(d);
    ok(d, &["embed", "-g", "g.csv", "--dim", "3", "--max-iter", "50", "--trajectory", "t.csv", "-o", "z.csv"]);
    let z = fs::read_to_string(d.join("z.csv")).unwrap();
    let mut lines = z.lines();
    assert_eq!(lines.next().unwrap(), "id,z1,z2,z3");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 36);
    assert!(rows.iter().all(|r| r.split(',').count() == 4));

    let manifest = fs::read_to_string(d.join("z.csv.manifest")).unwrap();
    for key in ["model=mafe-br", "p=", "xi_a=", "xi_r=", "cadence=1", "termination="] {
        assert!(manifest.contains(key), "{key} missing from\n{manifest}");
    }
    let graph_manifest = fs::read_to_string(d.join("g.csv.manifest")).unwrap();
    assert!(graph_manifest.contains("sigma_s=") && graph_manifest.contains("smt_rotations=12"));
}

#[test]
fn eval_and_sweep_report() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_scene(d);
    ok(d, &["embed", "-g", "g.csv", "--max-iter", "200", "-o", "z.csv"]);
    let out = ok(d, &["eval", "-e", "z.csv", "-p", "px.csv", "--runs", "3", "-o", "r.csv"]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains('±'), "{table}");
    assert!(fs::read_to_string(d.join("r.csv")).unwrap().contains("overall"));

    ok(d, &["sweep", "-g", "g.csv", "-p", "px.csv", "--dims", "1,2", "--max-iter", "50", "--runs", "2", "-o", "s.csv"]);
    let sweep = fs::read_to_string(d.join("s.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);
}

#[test]
fn validation_errors_exit_one_and_write_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_scene(d);
    let cases: &[&[&str]] = &[
        &["embed", "-g", "g.csv", "--xi-a", "-1", "-o", "bad.csv"],
        &["embed", "-g", "g.csv", "--model", "nope", "-o", "bad.csv"],
        &["embed", "-g", "g.csv", "--dim", "0", "-o", "bad.csv"],
        &["embed", "-g", "missing.csv", "-o", "bad.csv"],
        &["embed", "-g", "g.csv", "--unknown-flag", "-o", "bad.csv"],
        &["graph", "-i", "px.csv", "--kernel", "gaussian", "--sigma-s", "2", "-o", "bad.csv"],
        &["graph", "-i", "px.csv", "--k", "0", "-o", "bad.csv"],
        &["eval", "-e", "g.csv", "-p", "px.csv", "--train-frac", "1.5", "-o", "bad.csv"],
        &["sweep", "-g", "g.csv", "-p", "px.csv", "--dims", "x..y", "-o", "bad.csv"],
        &["synth", "--classes", "1", "-o", "bad.csv"],
    ];
    for args in cases {
        let out = mafe(d, args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!d.join("bad.csv").exists(), "{args:?} wrote output");
        assert!(!d.join("bad.csv.manifest").exists());
    }
}

#[test]
fn eval_refuses_unlabeled_pixels() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("px.csv"), "row,col,b0,b1\n0,0,1,2\n0,1,2,1\n1,0,0.5,0.5\n1,1,3,3\n").unwrap();
    fs::write(d.join("z.csv"), "id,z1\n0,1\n1,2\n2,3\n3,4\n").unwrap();
    let out = mafe(d, &["eval", "-e", "z.csv", "-p", "px.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("label"));
}

#[test]
fn numerical_failure_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    // identical spectra: no bandwidth gives entropy ln 2 over five neighbors
    let mut px = String::from("row,col,b0,b1\n");
    for i in 0..6 {
        px.push_str(&format!("0,{i},0.5,0.5\n"));
    }
    fs::write(d.join("flat.csv"), px).unwrap();
    let out = mafe(d, &["graph", "-i", "flat.csv", "--kernel", "gaussian", "--k", "2", "-o", "g.csv"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!d.join("g.csv").exists());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_scene(d);
    fs::write(d.join("run.cfg"), "# engine\nmax_iter = 5\nxi_r = 2e-4\nno_backtracking = false\n").unwrap();
    ok(d, &["--config", "run.cfg", "embed", "-g", "g.csv", "--max-iter", "3", "-o", "z.csv"]);
    let manifest = fs::read_to_string(d.join("z.csv.manifest")).unwrap();
    assert!(manifest.contains("max_iter=3"), "{manifest}");
    assert!(manifest.contains("iterations=3"));
    assert!(manifest.contains("xi_r=2.0000000000000001e-4") || manifest.contains("xi_r=2e-4"), "{manifest}");
    assert!(manifest.contains("backtracking=true"));
}

#[test]
fn help_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mafe(tmp.path(), &["embed", "--help"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("--xi-a"));
}
