//! Flat `key = value` configuration with dotted sections.
//!
//! Resolution order: experiment preset, then the config file, then command
//! line overrides. Every key is validated before any work starts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hdc_hwcal::calibrate::OptimizeConfig;
use hdc_hwcal::classify::EncoderCalibration;
use hdc_hwcal::encoder::Pipeline;
use hdc_hwcal::graph::{self, ThresholdPolicy};
use hdc_hwcal::hw::{DistortionSpec, Family, HardwareEnsemble, Mode};
use hdc_hwcal::{data, seed};
use serde::Serialize;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Kernel,
    Classify,
    GraphRecon,
    NodeClassify,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Kernel => "kernel",
            Experiment::Classify => "classify",
            Experiment::GraphRecon => "graph-recon",
            Experiment::NodeClassify => "node-classify",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        [Experiment::Kernel, Experiment::Classify, Experiment::GraphRecon, Experiment::NodeClassify]
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| "expected kernel, classify, graph-recon or node-classify".into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Isolet,
    Fmnist,
    Blobs,
    Cora,
    Synthetic,
}

impl FromStr for DatasetName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "isolet" => DatasetName::Isolet,
            "fmnist" => DatasetName::Fmnist,
            "blobs" => DatasetName::Blobs,
            "cora" => DatasetName::Cora,
            "synthetic" => DatasetName::Synthetic,
            _ => return Err("expected isolet, fmnist, blobs, cora or synthetic".into()),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DataSection {
    pub root: PathBuf,
    pub dataset: DatasetName,
    /// Stratified subsample sizes; ignored when `full`.
    pub train_size: usize,
    pub test_size: usize,
    pub full: bool,
    /// Node classification split: labeled nodes per class and test nodes.
    pub per_class: usize,
    pub test_nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelSection {
    pub pipeline: Pipeline,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphSection {
    pub nodes: usize,
    pub edges: usize,
    pub threshold: ThresholdPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassifySection {
    pub epochs: usize,
    pub batch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RelhdSection {
    pub labeled: usize,
    pub random: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub dim: usize,
    pub repeats: usize,
    pub optimized: bool,
    pub hw: DistortionSpec,
    pub opt: OptimizeConfig,
    pub data: DataSection,
    pub kernel: KernelSection,
    pub graph: GraphSection,
    pub classify: ClassifySection,
    pub relhd: RelhdSection,
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

pub const KEYS: &[&str] = &[
    "seed",
    "dim",
    "repeats",
    "optimized",
    "out_dir",
    "hw.family",
    "hw.gain",
    "hw.shift",
    "hw.input_noise",
    "hw.output_noise",
    "hw.mode",
    "opt.step",
    "opt.iterations",
    "opt.alpha",
    "opt.beta",
    "opt.ensemble",
    "opt.ensemble_draws",
    "ensemble.families",
    "ensemble.gain_lo",
    "ensemble.gain_hi",
    "ensemble.noise_lo",
    "ensemble.noise_hi",
    "data.root",
    "data.dataset",
    "data.train_size",
    "data.test_size",
    "data.full",
    "data.per_class",
    "data.test_nodes",
    "kernel.pipeline",
    "kernel.points",
    "graph.nodes",
    "graph.edges",
    "graph.threshold",
    "classify.epochs",
    "classify.batch",
    "relhd.labeled",
    "relhd.random",
];

/// Raw settings in application order; later layers replace earlier ones.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings(BTreeMap<String, String>);

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(CliError::config(format!("unknown key `{key}`")));
        }
        self.0.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn merge(&mut self, other: &Settings) {
        self.0.extend(other.0.iter().map(|(k, v)| (k.clone(), v.clone())));
    }

    /// `key = value` lines; `[section]` headers prefix the keys that follow.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut out = Settings::default();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let at = || format!("{}:{}", origin.display(), n + 1);
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| CliError::config(format!("{}: expected `key = value`", at())))?;
            let key = if section.is_empty() { k.trim().to_string() } else { format!("{section}.{}", k.trim()) };
            out.set(&key, v).map_err(|e| CliError::config(format!("{}: {e}", at())))?;
        }
        Ok(out)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Settings::parse(&text, path)
    }

    /// `--key value`, `--key=value`, or a bare `--flag` meaning `true`.
    pub fn from_args(args: &[String]) -> Result<Self> {
        let mut out = Settings::default();
        let mut i = 0;
        while i < args.len() {
            let arg = &args[i];
            let body = arg
                .strip_prefix("--")
                .ok_or_else(|| CliError::config(format!("unexpected argument `{arg}`")))?;
            if let Some((k, v)) = body.split_once('=') {
                out.set(k, v)?;
                i += 1;
            } else if args.get(i + 1).is_some_and(|next| !next.starts_with("--")) {
                out.set(body, &args[i + 1])?;
                i += 2;
            } else {
                out.set(body, "true")?;
                i += 1;
            }
        }
        Ok(out)
    }
}

fn parse<T: FromStr>(s: &Settings, key: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    s.get(key)
        .map(|v| v.parse::<T>().map_err(|e| CliError::config(format!("invalid value for `{key}`: `{v}` ({e})"))))
        .transpose()
}

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    s.parse::<Family>().map_err(|_| "expected tanh, exp, log or identity".to_string())
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse::<Mode>().map_err(|_| "expected output or accumulate".to_string())
}

fn parse_with<T>(s: &Settings, key: &str, f: impl Fn(&str) -> std::result::Result<T, String>) -> Result<Option<T>> {
    s.get(key)
        .map(|v| f(v).map_err(|e| CliError::config(format!("invalid value for `{key}`: `{v}` ({e})"))))
        .transpose()
}

fn parse_pipeline(s: &str) -> std::result::Result<Pipeline, String> {
    match s {
        "search-only" => Ok(Pipeline::SearchOnly),
        "encode-and-search" => Ok(Pipeline::EncodeAndSearch),
        _ => Err("expected search-only or encode-and-search".into()),
    }
}

fn parse_threshold(s: &str) -> std::result::Result<ThresholdPolicy, String> {
    if s == "bimodal" {
        return Ok(ThresholdPolicy::default());
    }
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(|value| ThresholdPolicy::Fixed { value })
        .ok_or_else(|| "expected bimodal or a number".into())
}

fn parse_families(s: &str) -> std::result::Result<Vec<Family>, String> {
    s.split(',').map(|f| parse_family(f.trim())).collect()
}

impl ExperimentConfig {
    /// Defaults that reproduce each experiment's reference setting.
    pub fn preset(experiment: Experiment) -> Self {
        let tanh = DistortionSpec::new(Family::Tanh, 1.0).unwrap();
        let (dim, repeats, hw, opt) = match experiment {
            Experiment::Kernel => (512, 1, tanh, OptimizeConfig { step_size: 0.0005, ..OptimizeConfig::default() }),
            Experiment::Classify => (512, 10, tanh.with_noise(0.0, 0.08), EncoderCalibration::default().opt),
            Experiment::GraphRecon => (2048, 1, graph::graph_hw_preset(), graph::node_vector_opt(0)),
            Experiment::NodeClassify => {
                (2048, 10, graph::graph_hw_preset(), graph::RelhdCalibration::for_dim(2048).opt)
            }
        };
        let dataset = match experiment {
            Experiment::NodeClassify => DatasetName::Cora,
            _ => DatasetName::Fmnist,
        };
        ExperimentConfig {
            experiment,
            seed: 0,
            dim,
            repeats,
            optimized: false,
            hw,
            opt,
            data: DataSection {
                root: std::env::var_os(data::DATA_ENV).map(PathBuf::from).unwrap_or_else(data::default_root),
                dataset,
                train_size: 10_000,
                test_size: 2_000,
                full: false,
                per_class: 20,
                test_nodes: 1000,
            },
            kernel: KernelSection { pipeline: Pipeline::SearchOnly, points: data::KERNEL_POINTS },
            graph: GraphSection { nodes: 20, edges: 10, threshold: ThresholdPolicy::default() },
            classify: ClassifySection { epochs: 20, batch: EncoderCalibration::default().batch },
            relhd: RelhdSection { labeled: 64, random: 64 },
            out_dir: None,
        }
    }

    pub fn resolve(experiment: Experiment, s: &Settings) -> Result<Self> {
        let mut c = ExperimentConfig::preset(experiment);
        if let Some(v) = parse(s, "seed")? {
            c.seed = v;
        }
        if let Some(v) = parse(s, "dim")? {
            c.dim = v;
            if experiment == Experiment::NodeClassify {
                c.opt.step_size = graph::RelhdCalibration::for_dim(v).opt.step_size;
            }
        }
        if let Some(v) = parse(s, "repeats")? {
            c.repeats = v;
        }
        if let Some(v) = parse(s, "optimized")? {
            c.optimized = v;
        }
        c.out_dir = s.get("out_dir").map(PathBuf::from);

        if let Some(v) = parse_with(s, "hw.family", parse_family)? {
            c.hw.family = v;
        }
        if let Some(v) = parse(s, "hw.gain")? {
            c.hw.gain = v;
        }
        if let Some(v) = parse(s, "hw.shift")? {
            c.hw.shift = v;
        }
        if let Some(v) = parse(s, "hw.input_noise")? {
            c.hw.input_noise_std = v;
        }
        if let Some(v) = parse(s, "hw.output_noise")? {
            c.hw.output_noise_std = v;
        }
        if let Some(v) = parse_with(s, "hw.mode", parse_mode)? {
            c.hw.mode = v;
        }
        c.hw.seed = c.seed;

        if let Some(v) = parse(s, "opt.step")? {
            c.opt.step_size = v;
        }
        if let Some(v) = parse(s, "opt.iterations")? {
            c.opt.iterations = v;
        }
        if let Some(v) = parse(s, "opt.alpha")? {
            c.opt.alpha = v;
        }
        if let Some(v) = parse(s, "opt.beta")? {
            c.opt.beta = v;
        }
        if let Some(v) = parse(s, "opt.ensemble_draws")? {
            c.opt.ensemble_draws = v;
        }
        if parse(s, "opt.ensemble")?.unwrap_or(false) {
            let mut e = HardwareEnsemble::new(vec![Family::Tanh, Family::Exp, Family::Log], (0.5, 2.0), (0.0, 0.05));
            if let Some(v) = parse_with(s, "ensemble.families", parse_families)? {
                e.family_pool = v;
            }
            if let Some(v) = parse(s, "ensemble.gain_lo")? {
                e.gain_range.0 = v;
            }
            if let Some(v) = parse(s, "ensemble.gain_hi")? {
                e.gain_range.1 = v;
            }
            if let Some(v) = parse(s, "ensemble.noise_lo")? {
                e.noise_range.0 = v;
            }
            if let Some(v) = parse(s, "ensemble.noise_hi")? {
                e.noise_range.1 = v;
            }
            e.shift = c.hw.shift;
            e.mode = c.hw.mode;
            e.seed = seed::derive(c.seed, 7);
            c.opt.ensemble = Some(e);
        }

        if let Some(v) = parse::<PathBuf>(s, "data.root")? {
            c.data.root = v;
        }
        if let Some(v) = parse(s, "data.dataset")? {
            c.data.dataset = v;
        }
        if let Some(v) = parse(s, "data.train_size")? {
            c.data.train_size = v;
        }
        if let Some(v) = parse(s, "data.test_size")? {
            c.data.test_size = v;
        }
        if let Some(v) = parse(s, "data.full")? {
            c.data.full = v;
        }
        if let Some(v) = parse(s, "data.per_class")? {
            c.data.per_class = v;
        }
        if let Some(v) = parse(s, "data.test_nodes")? {
            c.data.test_nodes = v;
        }
        if let Some(v) = parse_with(s, "kernel.pipeline", parse_pipeline)? {
            c.kernel.pipeline = v;
        }
        if let Some(v) = parse(s, "kernel.points")? {
            c.kernel.points = v;
        }
        if let Some(v) = parse(s, "graph.nodes")? {
            c.graph.nodes = v;
        }
        if let Some(v) = parse(s, "graph.edges")? {
            c.graph.edges = v;
        }
        if let Some(v) = parse_with(s, "graph.threshold", parse_threshold)? {
            c.graph.threshold = v;
        }
        if let Some(v) = parse(s, "classify.epochs")? {
            c.classify.epochs = v;
        }
        if let Some(v) = parse(s, "classify.batch")? {
            c.classify.batch = v;
        }
        if let Some(v) = parse(s, "relhd.labeled")? {
            c.relhd.labeled = v;
        }
        if let Some(v) = parse(s, "relhd.random")? {
            c.relhd.random = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(CliError::config("`dim` must be at least 1"));
        }
        if self.repeats == 0 {
            return Err(CliError::config("`repeats` must be at least 1"));
        }
        self.hw.validate()?;
        self.opt.validate()?;
        let allowed: &[DatasetName] = match self.experiment {
            Experiment::Classify => &[DatasetName::Isolet, DatasetName::Fmnist, DatasetName::Blobs],
            Experiment::NodeClassify => &[DatasetName::Cora, DatasetName::Synthetic],
            _ => &[],
        };
        if !allowed.is_empty() && !allowed.contains(&self.data.dataset) {
            return Err(CliError::config(format!(
                "invalid value for `data.dataset`: {:?} does not apply to {}",
                self.data.dataset, self.experiment
            )));
        }
        if self.experiment == Experiment::Classify && !self.data.full && (self.data.train_size == 0 || self.data.test_size == 0) {
            return Err(CliError::config("`data.train_size` and `data.test_size` must be positive"));
        }
        if self.experiment == Experiment::Kernel && self.kernel.points < 2 {
            return Err(CliError::config("`kernel.points` must be at least 2"));
        }
        if self.experiment == Experiment::GraphRecon && self.graph.nodes < 2 {
            return Err(CliError::config("`graph.nodes` must be at least 2"));
        }
        if self.classify.batch < 2 || self.relhd.labeled + self.relhd.random < 2 {
            return Err(CliError::config("calibration batches need at least 2 rows"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn file_sections_and_comments() {
        let text = "seed = 7 # run id\n[hw]\nfamily = exp\ngain=2.5\n\n[opt]\niterations = 10\n";
        let s = Settings::parse(text, Path::new("x.conf")).unwrap();
        assert_eq!(s.get("hw.family"), Some("exp"));
        assert_eq!(s.get("opt.iterations"), Some("10"));
        let c = ExperimentConfig::resolve(Experiment::Kernel, &s).unwrap();
        assert_eq!((c.seed, c.hw.family, c.hw.gain, c.opt.iterations), (7, Family::Exp, 2.5, 10));
    }

    #[test]
    fn overrides_win_over_file() {
        let mut s = Settings::parse("hw.gain = 3\n", Path::new("x")).unwrap();
        s.merge(&Settings::from_args(&args(&["--hw.gain", "0.5", "--optimized", "--hw.shift=-1"])).unwrap());
        let c = ExperimentConfig::resolve(Experiment::GraphRecon, &s).unwrap();
        assert_eq!((c.hw.gain, c.hw.shift, c.optimized), (0.5, -1.0, true));
    }

    #[test]
    fn negative_values_are_values() {
        let s = Settings::from_args(&args(&["--hw.shift", "-1.5"])).unwrap();
        assert_eq!(s.get("hw.shift"), Some("-1.5"));
    }

    #[test]
    fn errors_name_the_field() {
        let s = Settings::from_args(&args(&["--hw.family", "sigmoid"])).unwrap();
        let e = ExperimentConfig::resolve(Experiment::Kernel, &s).unwrap_err();
        assert!(e.to_string().contains("hw.family"), "{e}");
        assert_eq!(e.exit_code(), 2);

        let e = Settings::from_args(&args(&["--hw.colour", "red"])).unwrap_err();
        assert!(e.to_string().contains("hw.colour"));

        let s = Settings::from_args(&args(&["--hw.gain", "-1"])).unwrap();
        let e = ExperimentConfig::resolve(Experiment::Kernel, &s).unwrap_err();
        assert!(e.to_string().contains("hw.gain") && e.exit_code() == 2, "{e}");

        let s = Settings::from_args(&args(&["--repeats", "0"])).unwrap();
        assert!(ExperimentConfig::resolve(Experiment::Classify, &s).unwrap_err().to_string().contains("repeats"));
        let e = Settings::parse("just words\n", Path::new("bad.conf")).unwrap_err();
        assert!(e.to_string().contains("bad.conf:1"));
    }

    #[test]
    fn node_classify_step_follows_dim() {
        let s = Settings::from_args(&args(&["--dim", "512"])).unwrap();
        let c = ExperimentConfig::resolve(Experiment::NodeClassify, &s).unwrap();
        assert_eq!(c.opt.step_size, 1.0);
        let s = Settings::from_args(&args(&["--dim", "512", "--opt.step", "0.3"])).unwrap();
        assert_eq!(ExperimentConfig::resolve(Experiment::NodeClassify, &s).unwrap().opt.step_size, 0.3);
    }

    #[test]
    fn dataset_must_fit_the_experiment() {
        let s = Settings::from_args(&args(&["--data.dataset", "cora"])).unwrap();
        assert!(ExperimentConfig::resolve(Experiment::Classify, &s).is_err());
    }

    #[test]
    fn ensemble_is_assembled_from_keys() {
        let s = Settings::from_args(&args(&["--opt.ensemble", "--ensemble.families", "tanh, log", "--ensemble.gain_hi", "3"])).unwrap();
        let c = ExperimentConfig::resolve(Experiment::Kernel, &s).unwrap();
        let e = c.opt.ensemble.unwrap();
        assert_eq!(e.family_pool, vec![Family::Tanh, Family::Log]);
        assert_eq!(e.gain_range, (0.5, 3.0));
    }
}
