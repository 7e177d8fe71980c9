//! Acceptance suite: one test per criterion. Every check writes a
//! `[PASS]`/`[FAIL]` line to stderr directly so it survives output capture.
//! Dataset-backed criteria read `HDC_HWCAL_DATA` and fail when data is absent.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use hdc_hwcal::calibrate::{self, KernelExperimentConfig, KernelMatrix};
use hdc_hwcal::classify;
use hdc_hwcal::data::{self, DATA_ENV};
use hdc_hwcal::encoder::{self, Activation, Objective, Pipeline};
use hdc_hwcal::graph::{self, RelationContext};
use hdc_hwcal::hv::{self, Hypervector};
use hdc_hwcal::hw::{self, Calibration, DistortionSpec, Family, Mode};
use hdc_hwcal::seed;
use hdc_hwcal_cli::config::{DatasetName, Experiment, ExperimentConfig};
use hdc_hwcal_cli::run;
use ndarray::Array2;
use serde_json::Value;

fn line(criterion: &str, ok: bool, detail: impl AsRef<str>) -> bool {
    let tag = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{tag}] {criterion}: {}", detail.as_ref());
    ok
}

fn data_root() -> PathBuf {
    std::env::var_os(DATA_ENV).map(PathBuf::from).unwrap_or_else(data::default_root)
}

fn within(v: f64, center: f64, tol: f64) -> bool {
    (v - center).abs() <= tol
}

fn off_diagonal_mean(k: &KernelMatrix) -> f64 {
    let v = k.values();
    let n = v.nrows();
    (v.sum() - v.diag().sum()) / (n * (n - 1)) as f64
}

fn run_report(c: ExperimentConfig, report: &str) -> Value {
    let dir = tempfile::tempdir().unwrap();
    let c = ExperimentConfig { out_dir: Some(dir.path().to_path_buf()), ..c };
    run::run(&c).unwrap_or_else(|e| panic!("{} run failed: {e}", c.experiment));
    serde_json::from_str(&std::fs::read_to_string(dir.path().join(report)).unwrap()).unwrap()
}

fn num(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or_else(|| panic!("report lacks `{key}`"))
}

#[test]
fn c1_kernel_ordering() {
    let mut all = true;
    for family in [Family::Tanh, Family::Exp, Family::Log] {
        let started = Instant::now();
        let (mut ordered, mut undervalued, mut total) = (0, 0, 0);
        let mut worst_margin = f64::INFINITY;
        for pipeline in [Pipeline::SearchOnly, Pipeline::EncodeAndSearch] {
            for s in 0..10 {
                let cfg = KernelExperimentConfig {
                    spec: DistortionSpec::new(family, 1.0).unwrap(),
                    pipeline,
                    seed: s,
                    ..Default::default()
                };
                let k = calibrate::kernel_experiment(&cfg).unwrap();
                let e = k.errors;
                total += 1;
                if e.d < e.c && e.c < e.b {
                    ordered += 1;
                }
                worst_margin = worst_margin.min((e.c - e.d).min(e.b - e.c));
                if off_diagonal_mean(&k.b) < off_diagonal_mean(&k.a) {
                    undervalued += 1;
                }
            }
        }
        let elapsed = started.elapsed();
        all &= line(
            "C1 ordering",
            ordered == total,
            format!("{family}: D < C < B in {ordered}/{total} runs, smallest gap {worst_margin:.2e}"),
        );
        all &= line(
            "C1 tail",
            undervalued == total,
            format!("{family}: off-diagonal mean of B below A in {undervalued}/{total} runs"),
        );
        all &= line("C1 runtime", elapsed < Duration::from_secs(120), format!("{family}: {:.1}s", elapsed.as_secs_f64()));
    }
    assert!(all, "criterion 1 not met");
}

fn classify_case(name: &str, dataset: DatasetName, optimized_target: f64, naive_target: f64) -> bool {
    let dir = data_root().join(name);
    if !dir.is_dir() {
        return line("C2", false, format!("{name}: dataset not found at {}", dir.display()));
    }
    let started = Instant::now();
    let base = ExperimentConfig::preset(Experiment::Classify);
    let cfg = |optimized| ExperimentConfig {
        optimized,
        data: hdc_hwcal_cli::config::DataSection { root: data_root(), dataset, ..base.data.clone() },
        ..base.clone()
    };
    let naive = run_report(cfg(false), "classify_report.json");
    let opt = run_report(cfg(true), "classify_report.json");
    let (n, o) = (num(&naive, "mean_accuracy"), num(&opt, "mean_accuracy"));
    let flag = if opt["subsampled"].as_bool() == Some(true) { " (desk-scale subsample)" } else { "" };
    let mut ok = line("C2", within(o, optimized_target, 0.05), format!("{name} optimized {o:.4}, want {optimized_target} +- 0.05{flag}"));
    ok &= line("C2", within(n, naive_target, 0.08), format!("{name} naive {n:.4}, want {naive_target} +- 0.08{flag}"));
    let elapsed = started.elapsed();
    ok &= line("C2 runtime", elapsed < Duration::from_secs(900), format!("{name}: {:.0}s", elapsed.as_secs_f64()));
    ok
}

#[test]
fn c2_classification_under_tanh() {
    let isolet = classify_case("isolet", DatasetName::Isolet, 0.84, 0.37);
    let fmnist = classify_case("fmnist", DatasetName::Fmnist, 0.73, 0.36);
    assert!(isolet && fmnist, "criterion 2 not met");
}

fn recon(seed: u64, family: Family, optimized: bool) -> Value {
    let mut c = ExperimentConfig::preset(Experiment::GraphRecon);
    c.seed = seed;
    c.optimized = optimized;
    c.hw.family = family;
    c.hw.seed = seed;
    run_report(c, "recon_metrics.json")
}

#[test]
fn c3_graph_reconstruction() {
    let started = Instant::now();
    let (mut exact, mut dense, mut recovered) = (0, 0, 0);
    let mut densities = Vec::new();
    for s in 0..10 {
        if num(&recon(s, Family::Identity, false), "f1") == 1.0 {
            exact += 1;
        }
        let d = num(&recon(s, Family::Tanh, false), "edge_density");
        densities.push(d);
        if d > 0.9 {
            dense += 1;
        }
        if num(&recon(s, Family::Tanh, true), "f1") == 1.0 {
            recovered += 1;
        }
    }
    let min_density = densities.iter().copied().fold(f64::INFINITY, f64::min);
    let mut ok = line("C3a", exact == 10, format!("Identity F1 = 1 in {exact}/10 seeds"));
    ok &= line("C3b", dense == 10, format!("naive Tanh edge density > 0.9 in {dense}/10 seeds (min {min_density:.3})"));
    ok &= line("C3c", recovered >= 9, format!("optimized Tanh F1 = 1 in {recovered}/10 seeds, need >= 9"));
    let elapsed = started.elapsed();
    ok &= line("C3 runtime", elapsed < Duration::from_secs(300), format!("{:.1}s", elapsed.as_secs_f64()));
    assert!(ok, "criterion 3 not met");
}

#[test]
fn c4_similarity_distributions() {
    let spec = graph::graph_hw_preset();
    let (mut naive_ok, mut opt_ok) = (0, 0);
    let (mut naive_min, mut worst_gap) = (f64::INFINITY, 0.0f64);
    for s in 0..10u64 {
        let h = graph::random_node_vectors(20, 2048, seed::derive(s, 1)).unwrap();
        let naive = graph::similarity_distribution(&h, &spec, &mut seed::rng(s)).unwrap().mean;
        let ideal = graph::similarity_distribution(&h, &DistortionSpec::identity(), &mut seed::rng(s)).unwrap().mean;
        let nv = graph::optimize_node_vectors(20, 2048, &spec, &graph::node_vector_opt(s)).unwrap();
        let opt = graph::similarity_distribution(&nv.vectors, &spec, &mut seed::rng(s)).unwrap().mean;
        naive_min = naive_min.min(naive);
        worst_gap = worst_gap.max((opt - ideal).abs());
        naive_ok += (naive > 0.9) as usize;
        opt_ok += ((opt - ideal).abs() <= 0.1) as usize;
    }
    let mut ok = line("C4", naive_ok == 10, format!("naive Tanh mean > 0.9 in {naive_ok}/10 seeds (min {naive_min:.4})"));
    ok &= line("C4", opt_ok == 10, format!("optimized mean within 0.1 of Identity in {opt_ok}/10 seeds (max gap {worst_gap:.4})"));
    assert!(ok, "criterion 4 not met");
}

fn relhd(dim: usize, family: Family, optimized: bool) -> f64 {
    let mut c = ExperimentConfig::preset(Experiment::NodeClassify);
    c.dim = dim;
    c.opt.step_size = graph::RelhdCalibration::for_dim(dim).opt.step_size;
    c.optimized = optimized;
    c.hw.family = family;
    c.data.root = data_root();
    num(&run_report(c, "relhd_report.json"), "mean_accuracy")
}

#[test]
fn c5_relhd_on_cora() {
    let dir = data_root().join("cora");
    if !dir.is_dir() {
        line("C5", false, format!("cora: dataset not found at {}", dir.display()));
        panic!("criterion 5 not met: no dataset");
    }
    let started = Instant::now();
    let mut ok = true;
    for (dim, target) in [(512, 0.67), (2048, 0.70)] {
        let base = relhd(dim, Family::Identity, false);
        let naive = relhd(dim, Family::Tanh, false);
        let opt = relhd(dim, Family::Tanh, true);
        ok &= line("C5", within(opt, target, 0.05), format!("D={dim} optimized {opt:.4}, want {target} +- 0.05"));
        ok &= line("C5", naive <= opt / 3.0, format!("D={dim} naive {naive:.4} <= optimized / 3 = {:.4}", opt / 3.0));
        ok &= line("C5", base - opt <= 0.12, format!("D={dim} loss vs Identity baseline {base:.4}: {:.4} <= 0.12", base - opt));
    }
    let elapsed = started.elapsed();
    ok &= line("C5 runtime", elapsed < Duration::from_secs(1200), format!("{:.0}s", elapsed.as_secs_f64()));
    assert!(ok, "criterion 5 not met");
}

fn algebra_holds() -> bool {
    let d = 2048;
    (0..20u64).all(|s| {
        let (a, b, c) = (
            hv::random_bipolar(d, seed::derive(s, 1)).unwrap(),
            hv::random_bipolar(d, seed::derive(s, 2)).unwrap(),
            hv::random_bipolar(d, seed::derive(s, 3)).unwrap(),
        );
        let (p, q) = (hv::random_phase(d, seed::derive(s, 4)).unwrap(), hv::random_phase(d, seed::derive(s, 5)).unwrap());
        let bind = |x: &Hypervector, y: &Hypervector| hv::bind(x, y).unwrap();
        let cos = |x: &Hypervector, y: &Hypervector| hv::cosine_sim(x, y).unwrap();
        let self_inverse = bind(&a, &a).data().iter().all(|&v| v == 1.0);
        let bipolar_unbind = hv::unbind(&bind(&a, &b), &b).unwrap() == a;
        let phase_unbind = cos(&hv::unbind(&bind(&p, &q), &q).unwrap(), &p) > 1.0 - 1e-9;
        let commutes = bind(&a, &b) == bind(&b, &a) && cos(&bind(&p, &q), &bind(&q, &p)) > 1.0 - 1e-9;
        let associates = bind(&bind(&a, &b), &c) == bind(&a, &bind(&b, &c));
        let preserves = (cos(&bind(&a, &c), &bind(&b, &c)) - cos(&a, &b)).abs() < 1e-12;
        let quasi_orthogonal = cos(&a, &b).abs() < 4.0 / (d as f64).sqrt();
        let hamming = {
            let (qa, qb) = (hv::quantize_sign(&a).unwrap(), hv::quantize_sign(&b).unwrap());
            (hv::hamming_sim(&qa, &qb).unwrap() - (cos(&a, &b) + 1.0) / 2.0).abs() < 1e-12
        };
        self_inverse && bipolar_unbind && phase_unbind && commutes && associates && preserves && quasi_orthogonal && hamming
    })
}

fn gradient_error(activation: Activation, family: Family, mode: Mode, pipeline: Pipeline) -> f64 {
    let (n, f, d, h) = (5, 4, 16, 1e-5);
    let x = Array2::from_shape_fn((n, f), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.4);
    let mut params = encoder::random_projection_params(f, d, 3).unwrap();
    params.activation = activation;
    let spec = DistortionSpec::new(family, 1.5).unwrap().with_mode(mode);
    let t = KernelMatrix::new(Array2::from_shape_fn((n, n), |(i, j)| if i == j { 1.0 } else { 0.2 })).unwrap();
    let obj = Objective { target: &t, spec: &spec, pipeline, alpha: 1.0, beta: 0.05 };
    let cal = Calibration { gain: 1.1, bias: -0.05 };
    let value = |p: &encoder::EncoderParams, c: Calibration| {
        encoder::objective_and_gradient(p, c, x.view(), &obj, &mut seed::rng(0)).unwrap().0
    };
    let (_, grad) = encoder::objective_and_gradient(&params, cal, x.view(), &obj, &mut seed::rng(0)).unwrap();
    let mut analytic: Vec<f64> = grad.weights.iter().copied().collect();
    analytic.extend([grad.calibration.gain, grad.calibration.bias]);
    let mut numeric = Vec::new();
    for idx in 0..params.weights.len() {
        let mut p = params.clone();
        p.weights.as_slice_mut().unwrap()[idx] += h;
        let up = value(&p, cal);
        p.weights.as_slice_mut().unwrap()[idx] -= 2.0 * h;
        numeric.push((up - value(&p, cal)) / (2.0 * h));
    }
    for (dg, db) in [(h, 0.0), (0.0, h)] {
        let plus = Calibration { gain: cal.gain + dg, bias: cal.bias + db };
        let minus = Calibration { gain: cal.gain - dg, bias: cal.bias - db };
        numeric.push((value(&params, plus) - value(&params, minus)) / (2.0 * h));
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-12)
}

fn worst_gradient_error() -> f64 {
    let mut worst = 0.0f64;
    for act in [Activation::None, Activation::Tanh, Activation::PhaseMap] {
        for fam in Family::ALL {
            for mode in [Mode::OutputNonlinear, Mode::AccumulateNonlinear] {
                for pipe in [Pipeline::SearchOnly, Pipeline::EncodeAndSearch] {
                    worst = worst.max(gradient_error(act, fam, mode, pipe));
                }
            }
        }
    }
    worst
}

fn identity_is_cosine() -> f64 {
    let mut worst = 0.0f64;
    let mut rng = seed::rng(5);
    for s in 0..50u64 {
        let a = Hypervector::dense((0..256).map(|k| ((s * 31 + k) as f64 * 0.37).sin()).collect()).unwrap();
        let b = hv::random_bipolar(256, s).unwrap();
        let hw = hw::hw_similarity(&a, &b, &DistortionSpec::identity(), &mut rng).unwrap();
        worst = worst.max((hw - hv::cosine_sim(&a, &b).unwrap()).abs());
    }
    worst
}

fn argmax_invariant() -> (usize, usize) {
    let all = data::gen_blobs(40, 4, 20, 0.5, 3).unwrap();
    let params = encoder::random_projection_params(20, 512, 4).unwrap();
    let model = classify::train(&all, &params, &DistortionSpec::identity(), 3, &mut seed::rng(1)).unwrap();
    let mut same = 0;
    for gain in [0.5, 1.0, 3.0] {
        let spec = DistortionSpec::new(Family::Tanh, gain).unwrap();
        for row in all.features.rows() {
            let a = classify::predict(&model, row, &params, &DistortionSpec::identity(), &mut seed::rng(0)).unwrap();
            let b = classify::predict(&model, row, &params, &spec, &mut seed::rng(0)).unwrap();
            same += (a == b) as usize;
        }
    }
    (same, 3 * all.len())
}

/// Cases `(k, r)` where unbinding role r from I_k is strictly closer to
/// component r than to either other component. Zero components and exactly
/// collinear pairs (M2_k = H_k for an isolated edge) have no strict order.
fn omega_isolation() -> (usize, usize) {
    let d = 2048;
    let (mut hit, mut total) = (0, 0);
    for s in 0..20u64 {
        for edges in [10, 30] {
            let g = data::gen_random_graph(20, edges, seed::derive(s, edges as u64)).unwrap();
            let h = graph::random_node_vectors(20, d, seed::derive(s, 100)).unwrap();
            let ctx = RelationContext::new(d, seed::derive(s, 200)).unwrap();
            let (m1, m2) = graph::relhd_neighbors(&g, &h).unwrap();
            let rel = graph::relhd_encode(&g, &h, &ctx).unwrap();
            for k in 0..20 {
                let parts = [&h[k], &m1[k], &m2[k]];
                for r in 0..3 {
                    if parts[r].norm() == 0.0 {
                        continue;
                    }
                    let q = hv::hadamard(&rel[k], &ctx.omega[r]).unwrap();
                    let own = hv::cosine_sim(&q, parts[r]).unwrap();
                    let mut strict = true;
                    let mut counted = false;
                    for o in (0..3).filter(|&o| o != r && parts[o].norm() > 0.0) {
                        if hv::cosine_sim(parts[r], parts[o]).unwrap() > 1.0 - 1e-12 {
                            continue;
                        }
                        counted = true;
                        strict &= own > hv::cosine_sim(&q, parts[o]).unwrap();
                    }
                    if counted {
                        total += 1;
                        hit += strict as usize;
                    }
                }
            }
        }
    }
    (hit, total)
}

fn cli(args: &[&str], out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_hdc-hwcal"))
        .args(args)
        .arg("--out_dir")
        .arg(out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
}

fn strip_wall_clock(text: &str) -> Value {
    let mut v: Value = serde_json::from_str(text).unwrap();
    v.as_object_mut().unwrap().remove("wall_clock_seconds");
    v
}

/// Every artifact of two runs of the same config, byte for byte; the manifest
/// is compared without its wall-clock field.
fn reports_identical() -> Vec<String> {
    let tmp = tempfile::tempdir().unwrap();
    let conf = tmp.path().join("run.conf");
    std::fs::write(&conf, "seed = 5\n[opt]\niterations = 60\n[classify]\nepochs = 2\n").unwrap();
    let conf = conf.to_str().unwrap();
    let mut diffs = Vec::new();
    for sub in ["kernel", "graph-recon", "classify"] {
        let extra: &[&str] = match sub {
            "graph-recon" => &["--optimized"],
            "classify" => &["--data.dataset", "blobs", "--repeats", "3", "--optimized"],
            _ => &[],
        };
        let (a, b) = (tmp.path().join(format!("{sub}-a")), tmp.path().join(format!("{sub}-b")));
        for out in [&a, &b] {
            let mut args = vec![sub, "--config", conf];
            args.extend_from_slice(extra);
            cli(&args, out);
        }
        let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        for name in names {
            let (x, y) = (std::fs::read_to_string(a.join(&name)).unwrap(), std::fs::read_to_string(b.join(&name)).unwrap());
            let same = if name == "run_manifest.json" { strip_wall_clock(&x) == strip_wall_clock(&y) } else { x == y };
            if !same {
                diffs.push(format!("{sub}/{}", name.to_string_lossy()));
            }
        }
    }
    diffs
}

#[test]
fn c6_property_suite() {
    let started = Instant::now();
    let mut ok = line("C6", algebra_holds(), "binding self-inverse, unbind, commutative, associative, similarity-preserving, quasi-orthogonal, Hamming = (cos + 1) / 2");
    let g = worst_gradient_error();
    ok &= line("C6", g <= 1e-4, format!("gradient vs central differences: worst relative error {g:.2e} over 48 combinations"));
    let c = identity_is_cosine();
    ok &= line("C6", c < 1e-12, format!("hw_similarity = cosine under Identity, worst gap {c:.1e}"));
    let (same, n) = argmax_invariant();
    ok &= line("C6", same == n, format!("predict argmax unchanged under Tanh output in {same}/{n} queries"));
    let (hit, total) = omega_isolation();
    let rate = hit as f64 / total as f64;
    ok &= line("C6", rate >= 0.99, format!("omega isolation {hit}/{total} = {:.2}% at D=2048", 100.0 * rate));
    let diffs = reports_identical();
    ok &= line("C6", diffs.is_empty(), format!("byte-identical reports under a fixed seed; differing: {diffs:?}"));
    let elapsed = started.elapsed();
    ok &= line("C6 runtime", elapsed < Duration::from_secs(180), format!("{:.1}s", elapsed.as_secs_f64()));
    assert!(ok, "criterion 6 not met");
}
