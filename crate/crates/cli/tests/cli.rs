use std::path::Path;
use std::process::{Command, Output};

use nodespec_core::data::Dataset;
use nodespec_core::{Graph, Matrix};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nodespec"));
    c.env("NODESPEC_THREADS", "1");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Two communities with class-indicative features, written in the on-disk layout.
fn write_fixture(dir: &Path) {
    let n = 48;
    let labels: Vec<usize> = (0..n).map(|v| (v * 7 % 3) % 2).collect();
    let mut edges = vec![];
    for i in 0..n {
        for j in i + 1..n {
            if labels[i] == labels[j] && (i * 31 + j * 17) % 9 == 0 {
                edges.push((i, j));
            }
        }
    }
    let graph = Graph::from_edges(&edges, n).unwrap();
    let features = Matrix::from_shape_fn((n, 4), |(i, j)| {
        let signal = if j == labels[i] { 1.0 } else { 0.0 };
        signal + ((i * 13 + j * 5) % 7) as f64 / 20.0
    });
    Dataset::new("fixture", graph, features, labels, 2).unwrap().save(dir).unwrap();
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["train", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&["prop-sim", "--alpha", "x", "--classes", "3"]).status.code(), Some(2));
    let help = run(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    for sub in ["analyze", "prop-sim", "train", "eval", "filter-response", "oracle-check", "sweep", "timing"] {
        assert!(stdout(&help).contains(sub), "help lacks {sub}");
    }
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().env("NODESPEC_DATA_DIR", dir.path()).args(["analyze", "--dataset", "missing"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not found"));
    assert_eq!(run(&["prop-sim", "--alpha", "0.4", "--classes", "1"]).status.code(), Some(1));
}

#[test]
fn prop_sim_matches_closed_form() {
    let o = run(&["prop-sim", "--alpha", "0.4", "--classes", "5", "--samples", "1000000", "--seed", "3"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let exact = v["epsilon_prop1"].as_f64().unwrap();
    assert!((exact + 0.5).abs() < 1e-12);
    let mc = &v["mc"]["epsilon_prop1"];
    let (mean, se) = (mc["mean"].as_f64().unwrap(), mc["std_error"].as_f64().unwrap());
    assert!((mean - exact).abs() <= 3.0 * se, "{mean} vs {exact} (se {se})");
}

#[test]
fn oracle_check_passes() {
    let o = run(&["oracle-check", "--n", "32", "--trials", "50"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["passed"], true);
}

#[test]
fn train_eval_and_reports_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("fixture");
    write_fixture(&data);
    let data_s = data.to_str().unwrap();
    let mut outputs = vec![];
    for run_id in 0..2 {
        let out = dir.path().join(format!("run{run_id}"));
        let o = run(&[
            "train", "--data-dir", data_s, "--mode", "appnp", "--K", "4", "--d", "1", "--seed", "7", "--epochs", "40",
            "--hidden", "8", "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert!(summary["test_accuracy"].as_f64().unwrap() >= 0.0);
        outputs.push((
            std::fs::read(out.join("history.csv")).unwrap(),
            std::fs::read(out.join("model.ckpt")).unwrap(),
            std::fs::read(out.join("split.json")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let history = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert!(history.starts_with("epoch,train_loss,train_accuracy,val_loss,val_accuracy,test_accuracy\n"));

    let run0 = dir.path().join("run0");
    let ckpt = run0.join("model.ckpt");
    let reports = dir.path().join("reports");
    let o = run(&[
        "eval", "--data-dir", data_s, "--checkpoint", ckpt.to_str().unwrap(), "--split-file",
        run0.join("split.json").to_str().unwrap(), "--out", reports.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["bins"]["counts"].as_array().unwrap().len(), 5);
    assert!(reports.join("homophily_bins.csv").is_file());
    assert!(reports.join("coefficient_distance.csv").is_file());

    let o = run(&["filter-response", "--data-dir", data_s, "--checkpoint", ckpt.to_str().unwrap(), "--nodes", "0,3", "--points", "11"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "lambda,base_0,node_0,node_3");
    assert_eq!(lines.len(), 12);
}

#[test]
fn analyze_writes_csvs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("fixture");
    write_fixture(&data);
    let out = dir.path().join("analysis");
    let args = ["analyze", "--data-dir", data.to_str().unwrap(), "--out", out.to_str().unwrap()];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["graph_homophily"].as_f64(), Some(1.0));
    assert!(std::fs::read_to_string(out.join("per_node.csv")).unwrap().starts_with("node,h1,h_within2,s1,s_within2"));
    assert!(out.join("histograms.csv").is_file());
}

#[test]
fn sweep_and_timing_produce_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("fixture");
    write_fixture(&data);
    let d = data.to_str().unwrap();
    let o = run(&["sweep", "--data-dir", d, "--Ks", "1,2", "--ds", "1,2", "--runs", "2", "--epochs", "10", "--hidden", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("K,d,runs,mean,half_width"));
    let o = run(&["timing", "--data-dir", d, "--mode", "sgc", "--timed-epochs", "3", "--hidden", "4", "--K", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("mode,basis,K,d,epochs,precompute_seconds,seconds_per_epoch"));
}
