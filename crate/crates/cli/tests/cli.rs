use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hdc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdc-hwcal")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn invalid_family_exits_2_naming_the_field() {
    let o = hdc(&["kernel", "--hw.family", "sigmoid"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("hw.family"), "{}", stderr(&o));
}

#[test]
fn unknown_key_and_bad_values_exit_2() {
    let o = hdc(&["graph-recon", "--graph.colour", "red"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("graph.colour"));
    let o = hdc(&["graph-recon", "--dim", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dim"));
    let o = hdc(&["classify", "--opt.step", "-0.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("opt.step"));
}

#[test]
fn missing_dataset_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("nothing-here");
    let out = dir.path().join("out");
    let o = hdc(&["classify", "--data.root", root.to_str().unwrap(), "--out_dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let o = hdc(&["node-classify", "--data.root", root.to_str().unwrap(), "--out_dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn kernel_defaults_write_five_artifacts_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("k");
    let o = hdc(&["kernel", "--opt.iterations", "20", "--out_dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["kernel_A.csv", "kernel_B.csv", "kernel_C.csv", "kernel_D.csv", "kernel_errors.json", "run_manifest.json"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    let a = std::fs::read_to_string(out.join("kernel_A.csv")).unwrap();
    assert_eq!(a.lines().count(), 20);
    assert!(a.lines().all(|l| l.split(',').count() == 20));
    assert!(a.starts_with("1,"));

    let report = json(&out.join("kernel_errors.json"));
    assert_eq!(report["experiment"], "kernel");
    assert!(report["B"].as_f64().unwrap() > 0.0);
    assert_eq!(report["config"]["opt"]["iterations"], 20);
    assert!(report["config"].get("out_dir").is_none());

    let manifest = json(&out.join("run_manifest.json"));
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["repeat_seeds"], serde_json::json!([0]));
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 5);
    assert!(manifest["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn config_file_then_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("g.conf");
    std::fs::write(&conf, "# small graph\nseed = 3\n[graph]\nnodes = 12\nedges = 6\n[hw]\nfamily = identity\n").unwrap();
    let out = dir.path().join("g");
    let o = hdc(&["graph-recon", "-c", conf.to_str().unwrap(), "--graph.edges=8", "--dim", "1024", "--out_dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = json(&out.join("recon_metrics.json"));
    assert_eq!((m["config"]["seed"].as_u64(), m["config"]["graph"]["nodes"].as_u64()), (Some(3), Some(12)));
    assert_eq!(m["true_edges"], 8);
    assert_eq!(m["config"]["hw"]["family"], "identity");
    assert_eq!(m["f1"], 1.0);
    let edges = std::fs::read_to_string(out.join("recon_edges.csv")).unwrap();
    assert_eq!(edges.lines().next(), Some("i,j"));
    assert_eq!(edges.lines().count(), 9);
    let hist = std::fs::read_to_string(out.join("simdist.csv")).unwrap();
    assert_eq!(hist.lines().count(), 51);
}

#[test]
fn compare_reports() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let write = |name: &str, v: Value| std::fs::write(p(name), v.to_string()).unwrap();
    write("naive.json", serde_json::json!({"experiment": "classify", "mean_accuracy": 0.366}));
    write("opt.json", serde_json::json!({"experiment": "classify", "mean_accuracy": 0.725}));
    write("graph.json", serde_json::json!({"experiment": "graph-recon", "f1": 1.0, "edge_density": 0.05}));
    write("broken.json", serde_json::json!({"experiment": "classify", "accuracy": 0.5}));
    let s = |name: &str| p(name).to_str().unwrap().to_string();

    let out = s("same.json");
    let o = hdc(&["compare", &s("opt.json"), &s("opt.json"), "--out", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let c = json(Path::new(&out));
    assert_eq!(c["deltas"][0]["delta"], 0.0);
    assert_eq!(c["regressions"], 0);

    let out = s("gain.json");
    assert!(hdc(&["compare", &s("naive.json"), &s("opt.json"), "--out", &out]).status.success());
    let d = json(Path::new(&out))["deltas"][0]["delta"].as_f64().unwrap();
    assert!((d - 0.359).abs() < 1e-12);
    let o = hdc(&["compare", &s("opt.json"), &s("naive.json"), "--out", &out]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("REGRESSION"));

    let o = hdc(&["compare", &s("opt.json"), &s("graph.json"), "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mismatch"));
    let o = hdc(&["compare", &s("opt.json"), &s("broken.json"), "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`mean_accuracy`"));
}
