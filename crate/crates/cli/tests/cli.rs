//! End-to-end checks of the command-line interface: output equivalence
//! with the library, exit codes, and byte determinism.

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_graph-recovery");

fn write_file(dir: &Path, name: &str, content: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(content.as_bytes()).unwrap();
    path
}

fn path4(dir: &Path) -> std::path::PathBuf {
    write_file(
        dir,
        "path4.mtx",
        "%%MatrixMarket matrix coordinate pattern symmetric\n4 4 3\n2 1\n3 2\n4 3\n",
    )
}

fn labels(dir: &Path) -> std::path::PathBuf {
    write_file(dir, "labels.csv", "vertex_index,value\n0,0.2\n3,0.9\n")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

#[test]
fn recover_matches_library_to_17_digits() {
    let dir = tempfile::tempdir().unwrap();
    let graph_path = path4(dir.path());
    let labels_path = labels(dir.path());
    let out = run(&[
        "recover",
        "--graph",
        graph_path.to_str().unwrap(),
        "--labels",
        labels_path.to_str().unwrap(),
        "--tau",
        "0.5",
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();

    // Library-side computation of the same estimate.
    let graph = graph_recovery::Graph::from_edges(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)])
        .unwrap();
    let bundle = graph_recovery::build_laplacian(&graph).unwrap();
    let obs = graph_recovery::Observation::new(
        vec![0, 3],
        nalgebra::DVector::from_column_slice(&[0.2, 0.9]),
        4,
    )
    .unwrap();
    let f = graph_recovery::regularize(&bundle, &obs, 0.5).unwrap();
    let expected = format!(
        "index,estimate\n1,{}\n2,{}\n",
        graph_recovery::io::format_float(f[1]),
        graph_recovery::io::format_float(f[2]),
    );
    assert_eq!(stdout, expected);
}

#[test]
fn missing_required_flag_exits_one_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let graph_path = path4(dir.path());
    let labels_path = labels(dir.path());
    let out = run(&[
        "select-global",
        "--graph",
        graph_path.to_str().unwrap(),
        "--labels",
        labels_path.to_str().unwrap(),
        "--eps",
        "1.0",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("--eta"), "stderr should name the flag: {stderr}");
}

#[test]
fn unknown_flag_exits_one_with_usage() {
    let out = run(&["recover", "--bogus", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.to_lowercase().contains("usage") || stderr.contains("--bogus"));
}

#[test]
fn select_global_on_k2_toy_prints_half() {
    let dir = tempfile::tempdir().unwrap();
    let graph_path = write_file(
        dir.path(),
        "k2.mtx",
        "%%MatrixMarket matrix coordinate pattern symmetric\n2 2 1\n2 1\n",
    );
    let labels_path = write_file(dir.path(), "k2.csv", "vertex_index,value\n0,1.0\n");
    let out = run(&[
        "select-global",
        "--graph",
        graph_path.to_str().unwrap(),
        "--labels",
        labels_path.to_str().unwrap(),
        "--eps",
        "1",
        "--eta",
        "1",
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let tau_line = stdout
        .lines()
        .find(|l| l.starts_with("tau_flat="))
        .unwrap();
    let tau: f64 = tau_line.trim_start_matches("tau_flat=").parse().unwrap();
    assert!((tau - 0.5).abs() <= 1e-6);
    let bound_line = stdout
        .lines()
        .find(|l| l.starts_with("gwce_sq_bound="))
        .unwrap();
    let bound: f64 = bound_line
        .trim_start_matches("gwce_sq_bound=")
        .parse()
        .unwrap();
    assert!((bound - 4.0).abs() <= 1e-6);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let graph_path = path4(dir.path());
    let labels_path = labels(dir.path());
    let args = [
        "select-local",
        "--graph",
        graph_path.to_str().unwrap(),
        "--labels",
        labels_path.to_str().unwrap(),
        "--eps",
        "1.0",
        "--eta",
        "0.5",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn experiment_writes_schema_exact_csv() {
    let dir = tempfile::tempdir().unwrap();
    let graph_path = path4(dir.path());
    let config_path = write_file(
        dir.path(),
        "config.json",
        &format!(
            r#"{{"dataset_path":"{}","eta":0.3,"seed":3,"n_labeled_grid":[2,3],
                "tau_grid_size":40,"trials":1}}"#,
            graph_path.to_str().unwrap().replace('\\', "/"),
        ),
    );
    let out_path = dir.path().join("results.csv");
    let out = run(&[
        "experiment",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(&out_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n_labeled,method,trial,seed,tau,prediction_error,certified_bound,runtime_ms"
    );
    // 2 label counts x 4 methods x 1 trial.
    assert_eq!(lines.count(), 8);
}

#[test]
fn experiment_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let graph_path = path4(dir.path());
    let config_path = write_file(
        dir.path(),
        "config.json",
        &format!(
            r#"{{"dataset_path":"{}","eta":0.3,"seed":11,"n_labeled_grid":[2,3],
                "tau_grid_size":40,"trials":2}}"#,
            graph_path.to_str().unwrap().replace('\\', "/"),
        ),
    );
    let out_a = dir.path().join("a.csv");
    let out_b = dir.path().join("b.csv");
    for out in [&out_a, &out_b] {
        let run = run(&[
            "experiment",
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(run.status.success());
    }
    assert_eq!(
        std::fs::read(&out_a).unwrap(),
        std::fs::read(&out_b).unwrap(),
        "identical configs must give byte-identical CSV"
    );
}

#[test]
fn synth_is_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let graph_path = path4(dir.path());
    let args = [
        "synth",
        "--graph",
        graph_path.to_str().unwrap(),
        "--seed",
        "42",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert_eq!(text.lines().next().unwrap(), "vertex,value");
}

#[test]
fn bad_labels_header_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let graph_path = path4(dir.path());
    let labels_path = write_file(dir.path(), "bad.csv", "vertex,value\n0,0.2\n");
    let out = run(&[
        "recover",
        "--graph",
        graph_path.to_str().unwrap(),
        "--labels",
        labels_path.to_str().unwrap(),
        "--tau",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("vertex_index,value"));
}

#[test]
fn tau_out_of_range_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let graph_path = path4(dir.path());
    let labels_path = labels(dir.path());
    let out = run(&[
        "recover",
        "--graph",
        graph_path.to_str().unwrap(),
        "--labels",
        labels_path.to_str().unwrap(),
        "--tau",
        "1.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn lwce_curve_emits_tau_gamma_csv() {
    let dir = tempfile::tempdir().unwrap();
    let graph_path = path4(dir.path());
    let labels_path = labels(dir.path());
    let out = run(&[
        "lwce-curve",
        "--graph",
        graph_path.to_str().unwrap(),
        "--labels",
        labels_path.to_str().unwrap(),
        "--eps",
        "1.0",
        "--eta",
        "0.5",
        "--tau-grid",
        "4",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "tau,gamma,c,d");
    assert_eq!(lines.len(), 5);
    for line in &lines[1..] {
        assert_eq!(line.split(',').count(), 4);
    }
}
