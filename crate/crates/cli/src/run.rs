//! One function per experiment; each writes its artifacts and returns the
//! per-repeat seeds for the manifest.

use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use hdc_hwcal::calibrate::{self, KernelErrors, KernelExperimentConfig, KernelMatrix};
use hdc_hwcal::classify::{self, ClassifyConfig, EncoderCalibration};
use hdc_hwcal::data::{self, Dataset, IngestReport};
use hdc_hwcal::graph::{self, GraphSpec, RelhdCalibration, RelhdConfig};
use hdc_hwcal::hw::DistortionSpec;
use hdc_hwcal::seed;
use serde::Serialize;

use crate::config::{DatasetName, Experiment, ExperimentConfig};
use crate::error::Result;
use crate::report::{fmt_g9, OutDir};

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: Experiment,
    version: &'static str,
    config: &'a ExperimentConfig,
    repeat_seeds: Vec<u64>,
    outputs: Vec<String>,
    wall_clock_seconds: f64,
}

#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub headline: String,
}

pub fn default_out_dir(c: &ExperimentConfig) -> PathBuf {
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    PathBuf::from("runs").join(format!("{}-{}-{stamp}", c.experiment, c.seed))
}

pub fn run(c: &ExperimentConfig) -> Result<RunSummary> {
    c.validate()?;
    let started = Instant::now();
    let mut out = OutDir::create(c.out_dir.clone().unwrap_or_else(|| default_out_dir(c)))?;
    let (repeat_seeds, headline) = match c.experiment {
        Experiment::Kernel => kernel(c, &mut out)?,
        Experiment::Classify => classify(c, &mut out)?,
        Experiment::GraphRecon => graph_recon(c, &mut out)?,
        Experiment::NodeClassify => node_classify(c, &mut out)?,
    };
    let manifest = Manifest {
        experiment: c.experiment,
        version: hdc_hwcal::VERSION,
        config: c,
        repeat_seeds,
        outputs: out.written.clone(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    out.json("run_manifest.json", &manifest)?;
    Ok(RunSummary { out_dir: out.path, headline })
}

fn off_diagonal_mean(k: &KernelMatrix) -> f64 {
    let v = k.values();
    let n = v.nrows();
    (v.sum() - v.diag().sum()) / (n * (n - 1)) as f64
}

#[derive(Serialize)]
struct OffDiagonal {
    #[serde(rename = "A")]
    a: f64,
    #[serde(rename = "B")]
    b: f64,
    #[serde(rename = "C")]
    c: f64,
    #[serde(rename = "D")]
    d: f64,
}

#[derive(Serialize)]
struct KernelReport<'a> {
    experiment: Experiment,
    #[serde(flatten)]
    errors: KernelErrors,
    off_diagonal_mean: OffDiagonal,
    calibration_c: hdc_hwcal::hw::Calibration,
    calibration_d: hdc_hwcal::hw::Calibration,
    config: &'a ExperimentConfig,
}

fn kernel(c: &ExperimentConfig, out: &mut OutDir) -> Result<(Vec<u64>, String)> {
    let k = calibrate::kernel_experiment(&KernelExperimentConfig {
        spec: c.hw,
        pipeline: c.kernel.pipeline,
        dim: c.dim,
        n_points: c.kernel.points,
        opt: c.opt.clone(),
        seed: c.seed,
    })?;
    for (name, m) in [("A", &k.a), ("B", &k.b), ("C", &k.c), ("D", &k.d)] {
        out.matrix(&format!("kernel_{name}.csv"), m.values())?;
    }
    let e = k.errors;
    out.json(
        "kernel_errors.json",
        &KernelReport {
            experiment: c.experiment,
            errors: e,
            off_diagonal_mean: OffDiagonal {
                a: off_diagonal_mean(&k.a),
                b: off_diagonal_mean(&k.b),
                c: off_diagonal_mean(&k.c),
                d: off_diagonal_mean(&k.d),
            },
            calibration_c: k.calibration_c,
            calibration_d: k.calibration_d,
            config: c,
        },
    )?;
    Ok((vec![c.seed], format!("frobenius error B {} C {} D {}", fmt_g9(e.b), fmt_g9(e.c), fmt_g9(e.d))))
}

#[derive(Serialize)]
struct Ingest {
    train: IngestReport,
    test: IngestReport,
}

fn load_classification(c: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let root = &c.data.root;
    Ok(match c.data.dataset {
        DatasetName::Isolet => data::load_isolet(&root.join("isolet"))?,
        DatasetName::Fmnist => data::load_fmnist(&root.join("fmnist"))?,
        _ => {
            let all = data::gen_blobs(200, 5, 40, 0.4, seed::derive(c.seed, 5))?;
            let even: Vec<usize> = (0..all.len()).step_by(2).collect();
            let odd: Vec<usize> = (1..all.len()).step_by(2).collect();
            (all.select(&even)?, all.select(&odd)?)
        }
    })
}

/// Stratified reduction unless `data.full`; returns whether rows were dropped.
fn subsample(ds: Dataset, n: usize, full: bool, seed: u64) -> Result<(Dataset, bool)> {
    if full || n >= ds.len() {
        return Ok((ds, false));
    }
    Ok((data::stratified_subsample(&ds, n, seed)?, true))
}

#[derive(Serialize)]
struct ClassifyReport<'a> {
    experiment: Experiment,
    dataset: DatasetName,
    hw: DistortionSpec,
    optimized: bool,
    mean_accuracy: f64,
    per_repeat: Vec<f64>,
    seed: u64,
    subsampled: bool,
    train_rows: usize,
    test_rows: usize,
    warnings: Vec<String>,
    config: &'a ExperimentConfig,
}

fn classify(c: &ExperimentConfig, out: &mut OutDir) -> Result<(Vec<u64>, String)> {
    let (train, test) = load_classification(c)?;
    let (train, cut_train) = subsample(train, c.data.train_size, c.data.full, seed::derive(c.seed, 11))?;
    let (test, cut_test) = subsample(test, c.data.test_size, c.data.full, seed::derive(c.seed, 12))?;
    out.json(
        &format!("ingest_{}.json", dataset_slug(c.data.dataset)),
        &Ingest { train: IngestReport::of(&train), test: IngestReport::of(&test) },
    )?;
    let outcome = classify::run_classification(
        &train,
        &test,
        &ClassifyConfig {
            dim: c.dim,
            spec: c.hw,
            optimized: c.optimized,
            epochs: c.classify.epochs,
            repeats: c.repeats,
            seed: c.seed,
            calibration: EncoderCalibration { batch: c.classify.batch, opt: c.opt.clone() },
        },
    )?;
    let acc = outcome.evaluation.mean_accuracy;
    out.json(
        "classify_report.json",
        &ClassifyReport {
            experiment: c.experiment,
            dataset: c.data.dataset,
            hw: c.hw,
            optimized: c.optimized,
            mean_accuracy: acc,
            per_repeat: outcome.evaluation.per_repeat,
            seed: c.seed,
            subsampled: cut_train || cut_test,
            train_rows: train.len(),
            test_rows: test.len(),
            warnings: outcome.warnings,
            config: c,
        },
    )?;
    Ok((outcome.repeat_seeds, format!("mean accuracy {}", fmt_g9(acc))))
}

fn dataset_slug(d: DatasetName) -> &'static str {
    match d {
        DatasetName::Isolet => "isolet",
        DatasetName::Fmnist => "fmnist",
        DatasetName::Blobs => "blobs",
        DatasetName::Cora => "cora",
        DatasetName::Synthetic => "synthetic",
    }
}

#[derive(Serialize)]
struct ReconReport<'a> {
    experiment: Experiment,
    optimized: bool,
    #[serde(flatten)]
    metrics: graph::EdgeMetrics,
    threshold: f64,
    true_edges: usize,
    predicted_edges: usize,
    mean_similarity: f64,
    config: &'a ExperimentConfig,
}

fn graph_recon(c: &ExperimentConfig, out: &mut OutDir) -> Result<(Vec<u64>, String)> {
    let g = data::gen_random_graph(c.graph.nodes, c.graph.edges, c.seed)?;
    let vectors = if c.optimized {
        let opt = hdc_hwcal::calibrate::OptimizeConfig { seed: seed::derive(c.seed, 1), ..c.opt.clone() };
        graph::optimize_node_vectors(c.graph.nodes, c.dim, &c.hw, &opt)?.vectors
    } else {
        graph::random_node_vectors(c.graph.nodes, c.dim, seed::derive(c.seed, 1))?
    };
    let r = graph::reconstruct_graph(&g, &vectors, &c.hw, c.graph.threshold, &mut seed::rng(seed::derive(c.seed, 2)))?;
    let hist = graph::similarity_distribution(&vectors, &c.hw, &mut seed::rng(seed::derive(c.seed, 3)))?;
    let metrics = graph::edge_metrics(&g, &r.edges);
    out.csv("recon_edges.csv", "i,j", r.edges.iter().map(|&(i, j)| vec![i.to_string(), j.to_string()]))?;
    out.json(
        "recon_metrics.json",
        &ReconReport {
            experiment: c.experiment,
            optimized: c.optimized,
            metrics,
            threshold: r.threshold,
            true_edges: g.edges.len(),
            predicted_edges: r.edges.len(),
            mean_similarity: hist.mean,
            config: c,
        },
    )?;
    out.csv(
        "simdist.csv",
        "bin_center,count",
        hist.centers.iter().zip(&hist.counts).map(|(x, n)| vec![fmt_g9(*x), n.to_string()]),
    )?;
    Ok((vec![c.seed], format!("f1 {} edge density {}", fmt_g9(metrics.f1), fmt_g9(metrics.edge_density))))
}

/// Parameters of the Cora-sized planted-partition stand-in.
fn synthetic_citation_graph(seed: u64) -> Result<GraphSpec> {
    Ok(data::gen_labeled_graph(2708, 7, 0.0082, 0.00032, 1433, 18, 0.3, seed)?)
}

#[derive(Serialize)]
struct RelhdReport<'a> {
    experiment: Experiment,
    dataset: DatasetName,
    hw: DistortionSpec,
    optimized: bool,
    dim: usize,
    /// What the calibration fits: the node feature encoder, not the graph roles.
    calibrated: &'static str,
    mean_accuracy: f64,
    per_repeat: Vec<f64>,
    seed: u64,
    train_nodes: usize,
    test_nodes: usize,
    config: &'a ExperimentConfig,
}

fn node_classify(c: &ExperimentConfig, out: &mut OutDir) -> Result<(Vec<u64>, String)> {
    let g = match c.data.dataset {
        DatasetName::Cora => {
            let cora = data::load_cora(&c.data.root.join("cora"))?;
            out.json("ingest_cora.json", &cora.report())?;
            cora.graph
        }
        _ => synthetic_citation_graph(seed::derive(c.seed, 5))?,
    };
    let (train, test) = data::planetoid_split(&g, c.data.per_class, c.data.test_nodes)?;
    let outcome = graph::relhd_classify(
        &g,
        &train,
        &test,
        &RelhdConfig {
            dim: c.dim,
            spec: c.hw,
            optimized: c.optimized,
            repeats: c.repeats,
            seed: c.seed,
            calibration: RelhdCalibration { labeled: c.relhd.labeled, random: c.relhd.random, opt: c.opt.clone() },
        },
    )?;
    let acc = outcome.evaluation.mean_accuracy;
    out.json(
        "relhd_report.json",
        &RelhdReport {
            experiment: c.experiment,
            dataset: c.data.dataset,
            hw: c.hw,
            optimized: c.optimized,
            dim: c.dim,
            calibrated: "feature-encoder",
            mean_accuracy: acc,
            per_repeat: outcome.evaluation.per_repeat,
            seed: c.seed,
            train_nodes: train.iter().filter(|&&t| t).count(),
            test_nodes: test.iter().filter(|&&t| t).count(),
            config: c,
        },
    )?;
    Ok((outcome.repeat_seeds, format!("mean accuracy {}", fmt_g9(acc))))
}
