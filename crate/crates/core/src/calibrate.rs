//! Target kernels, the similarity loss, the descent driver and the
//! four-variant kernel approximation experiment.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data;
use crate::encoder::{self, EncoderParams, Gradient, Objective, Pipeline};
use crate::error::{Error, Result};
use crate::hw::{self, Calibration, DistortionSpec, HardwareEnsemble};
use crate::seed::{self, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    values: Array2<f64>,
}

impl KernelMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c {
            return Err(Error::Incompatible(format!("kernel must be square, got {r}x{c}")));
        }
        if r == 0 {
            return Err(Error::EmptyInput("kernel of size 0"));
        }
        if let Some(i) = (0..r).find(|&i| !values[[i, i]].is_finite()) {
            return Err(Error::NonFinite { index: i * r + i });
        }
        for i in 0..r {
            for j in i + 1..r {
                if (values[[i, j]] - values[[j, i]]).abs() > 1e-9 {
                    return Err(Error::InvalidParameter {
                        name: "kernel",
                        reason: format!("asymmetric at ({i}, {j})"),
                    });
                }
            }
        }
        Ok(Self { values })
    }

    pub fn identity(n: usize) -> Self {
        Self { values: Array2::eye(n) }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn off_diagonal_mean(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        let total: f64 = self.values.sum() - self.values.diag().sum();
        total / (n * (n - 1)) as f64
    }
}

pub fn rbf_kernel(x: ArrayView2<f64>, sigma: f64) -> Result<KernelMatrix> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
    }
    let n = x.nrows();
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        k[[i, i]] = 1.0;
        for j in i + 1..n {
            let d = &x.row(i) - &x.row(j);
            let v = (-d.dot(&d) / (2.0 * sigma * sigma)).exp();
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    KernelMatrix::new(k)
}

/// Hardware kernel of the encodings of `x` with an explicit output calibration.
pub fn hw_kernel_calibrated(
    x: ArrayView2<f64>,
    params: &EncoderParams,
    cal: Calibration,
    spec: &DistortionSpec,
    pipeline: Pipeline,
    rng: &mut Rng,
) -> Result<KernelMatrix> {
    let u = match pipeline {
        Pipeline::SearchOnly => encoder::encode_rows(x, params)?,
        Pipeline::EncodeAndSearch => encoder::encode_rows_hw(x, params, spec, rng)?,
    };
    KernelMatrix::new(encoder::similarity_matrix(&u, spec, cal, rng)?)
}

/// Entry `(i, j)` is Ψ(e_i, e_j) where `e` is the stored encoding when
/// `encode_distorted` and the ideal encoding otherwise.
pub fn hw_kernel(
    x: ArrayView2<f64>,
    params: &EncoderParams,
    spec: &DistortionSpec,
    encode_distorted: bool,
    rng: &mut Rng,
) -> Result<KernelMatrix> {
    let pipeline = if encode_distorted { Pipeline::EncodeAndSearch } else { Pipeline::SearchOnly };
    hw_kernel_calibrated(x, params, Calibration::default(), spec, pipeline, rng)
}

/// Squared Frobenius norm of the difference.
pub fn sim_loss(k_hw: &KernelMatrix, k_target: &KernelMatrix) -> Result<f64> {
    if k_hw.n() != k_target.n() {
        return Err(Error::Incompatible(format!("kernels of size {} and {}", k_hw.n(), k_target.n())));
    }
    Ok((&k_hw.values - &k_target.values).iter().map(|v| v * v).sum())
}

pub fn regularizer(params: &EncoderParams, batch: ArrayView2<f64>) -> Result<f64> {
    let a = encoder::encode_rows(batch, params)?;
    Ok(encoder::regularizer_rows(&a, params.dim()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub step_size: f64,
    pub iterations: usize,
    pub alpha: f64,
    pub beta: f64,
    pub ensemble: Option<HardwareEnsemble>,
    /// Hardware instances averaged per step when `ensemble` is set.
    pub ensemble_draws: usize,
    pub seed: u64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            step_size: 0.05,
            iterations: 2000,
            alpha: 1.0,
            beta: 0.01,
            ensemble: None,
            ensemble_draws: 4,
            seed: 0,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::param("opt.step", format!("must be positive, got {}", self.step_size)));
        }
        if self.iterations == 0 {
            return Err(Error::param("opt.iterations", "must be at least 1"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("opt.alpha", format!("must be >= 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::param("opt.beta", format!("must be >= 0, got {}", self.beta)));
        }
        if let Some(e) = &self.ensemble {
            e.validate()?;
            if self.ensemble_draws == 0 {
                return Err(Error::param("opt.ensemble_draws", "must be at least 1"));
            }
        }
        Ok(())
    }

    /// Hardware instances to average over for one step.
    fn specs(&self, spec: &DistortionSpec, rng: &mut Rng) -> Result<Vec<DistortionSpec>> {
        match &self.ensemble {
            Some(e) => (0..self.ensemble_draws).map(|_| hw::sample_hardware(e, rng)).collect(),
            None => Ok(vec![*spec]),
        }
    }
}

/// `L_task + α·sim_loss + β·R` with the stored-encoding pipeline; with an
/// ensemble the similarity term is averaged over draws.
pub fn joint_objective(
    params: &EncoderParams,
    x: ArrayView2<f64>,
    target: &KernelMatrix,
    spec: &DistortionSpec,
    task_loss: Option<f64>,
    cfg: &OptimizeConfig,
) -> Result<f64> {
    let mut rng = seed::rng(cfg.seed);
    let specs = cfg.specs(spec, &mut rng)?;
    let mut sim = 0.0;
    if cfg.alpha != 0.0 {
        for s in &specs {
            let k = hw_kernel(x, params, s, true, &mut rng)?;
            sim += sim_loss(&k, target)?;
        }
        sim /= specs.len() as f64;
    }
    let reg = if cfg.beta != 0.0 { regularizer(params, x)? } else { 0.0 };
    Ok(task_loss.unwrap_or(0.0) + cfg.alpha * sim + cfg.beta * reg)
}

/// Encoder plus output calibration: everything the optimizer can move.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub encoder: EncoderParams,
    pub calibration: Calibration,
}

impl Model {
    pub fn new(encoder: EncoderParams) -> Self {
        Model { encoder, calibration: Calibration::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trainable {
    Calibration,
    Encoder,
    Joint,
}

impl Trainable {
    fn encoder(self) -> bool {
        matches!(self, Trainable::Encoder | Trainable::Joint)
    }

    fn calibration(self) -> bool {
        matches!(self, Trainable::Calibration | Trainable::Joint)
    }
}

/// Supplies the inputs and target kernel for each descent step.
pub trait BatchSource {
    fn next_batch(&mut self, rng: &mut Rng) -> Result<(Array2<f64>, KernelMatrix)>;
}

/// The same full batch every step.
pub struct FullBatch<'a> {
    pub x: ArrayView2<'a, f64>,
    pub target: &'a KernelMatrix,
}

impl BatchSource for FullBatch<'_> {
    fn next_batch(&mut self, _rng: &mut Rng) -> Result<(Array2<f64>, KernelMatrix)> {
        Ok((self.x.to_owned(), self.target.clone()))
    }
}

const DIVERGENCE_LIMIT: f64 = 1e6;

/// Plain gradient descent on `α·sim_loss + β·R`. The trace holds the objective
/// evaluated before each update.
pub fn optimize_model(
    mut model: Model,
    source: &mut dyn BatchSource,
    spec: &DistortionSpec,
    pipeline: Pipeline,
    trainable: Trainable,
    cfg: &OptimizeConfig,
) -> Result<(Model, Vec<f64>)> {
    cfg.validate()?;
    spec.validate()?;
    let mut rng = seed::rng(cfg.seed);
    let mut trace = Vec::with_capacity(cfg.iterations);
    for step in 0..cfg.iterations {
        let (x, target) = source.next_batch(&mut rng)?;
        let specs = cfg.specs(spec, &mut rng)?;
        let mut value = 0.0;
        let mut grad = Gradient {
            weights: Array2::zeros(model.encoder.weights.dim()),
            calibration: Calibration { gain: 0.0, bias: 0.0 },
        };
        for s in &specs {
            let obj = Objective { target: &target, spec: s, pipeline, alpha: cfg.alpha, beta: cfg.beta };
            let (v, g) = encoder::objective_and_gradient(&model.encoder, model.calibration, x.view(), &obj, &mut rng)
                .map_err(|e| match e {
                    Error::Overflow { .. } => Error::Divergence { step, value: f64::INFINITY },
                    other => other,
                })?;
            value += v;
            grad.weights += &g.weights;
            grad.calibration.gain += g.calibration.gain;
            grad.calibration.bias += g.calibration.bias;
        }
        let k = specs.len() as f64;
        value /= k;
        if !value.is_finite() || value > DIVERGENCE_LIMIT {
            return Err(Error::Divergence { step, value });
        }
        trace.push(value);
        let eta = cfg.step_size / k;
        if trainable.encoder() {
            model.encoder.weights.scaled_add(-eta, &grad.weights);
        }
        if trainable.calibration() {
            model.calibration.gain -= eta * grad.calibration.gain;
            model.calibration.bias -= eta * grad.calibration.bias;
        }
    }
    Ok((model, trace))
}

/// Full-batch descent on the encoder through the stored-encoding pipeline.
pub fn optimize(
    params: &EncoderParams,
    x: ArrayView2<f64>,
    target: &KernelMatrix,
    spec: &DistortionSpec,
    cfg: &OptimizeConfig,
) -> Result<(EncoderParams, Vec<f64>)> {
    let mut source = FullBatch { x, target };
    let (model, trace) = optimize_model(
        Model::new(params.clone()),
        &mut source,
        spec,
        Pipeline::EncodeAndSearch,
        Trainable::Encoder,
        cfg,
    )?;
    Ok((model.encoder, trace))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelExperimentConfig {
    pub spec: DistortionSpec,
    pub pipeline: Pipeline,
    pub dim: usize,
    pub n_points: usize,
    /// Step size, iterations, α, β for variants C and D; `opt.seed` is ignored
    /// in favor of `seed`.
    pub opt: OptimizeConfig,
    pub seed: u64,
}

impl Default for KernelExperimentConfig {
    fn default() -> Self {
        KernelExperimentConfig {
            spec: DistortionSpec::new(crate::hw::Family::Tanh, 1.0).unwrap(),
            pipeline: Pipeline::SearchOnly,
            dim: 512,
            n_points: data::KERNEL_POINTS,
            opt: OptimizeConfig { step_size: 0.0005, ..OptimizeConfig::default() },
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelErrors {
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "D")]
    pub d: f64,
}

#[derive(Clone, Debug)]
pub struct KernelExperiment {
    pub a: KernelMatrix,
    pub b: KernelMatrix,
    pub c: KernelMatrix,
    pub d: KernelMatrix,
    pub errors: KernelErrors,
    pub calibration_c: Calibration,
    pub calibration_d: Calibration,
    pub trace_c: Vec<f64>,
    pub trace_d: Vec<f64>,
}

fn frobenius(k: &KernelMatrix, target: &KernelMatrix) -> Result<f64> {
    Ok(sim_loss(k, target)?.sqrt())
}

/// (A) RBF target, (B) naive hardware kernel, (C) output calibration only,
/// (D) encoder and calibration jointly, warm-started from C.
pub fn kernel_experiment(cfg: &KernelExperimentConfig) -> Result<KernelExperiment> {
    cfg.spec.validate()?;
    if cfg.n_points < 2 {
        return Err(Error::param("kernel.points", "need at least 2 points"));
    }
    let x = data::gen_kernel_dataset_n(cfg.n_points, seed::derive(cfg.seed, 0));
    let a = rbf_kernel(x.view(), 1.0 / cfg.n_points as f64)?;
    let params = encoder::random_projection_params(x.ncols(), cfg.dim, seed::derive(cfg.seed, 1))?;
    let noise_seed = seed::derive(cfg.seed, 2);
    let kernel_of = |m: &Model| {
        hw_kernel_calibrated(x.view(), &m.encoder, m.calibration, &cfg.spec, cfg.pipeline, &mut seed::rng(noise_seed))
    };

    let naive = Model::new(params);
    let b = kernel_of(&naive)?;

    let opt = OptimizeConfig { seed: seed::derive(cfg.seed, 3), ..cfg.opt.clone() };
    let mut source = FullBatch { x: x.view(), target: &a };
    let calib_only = OptimizeConfig { beta: 0.0, ..opt.clone() };
    let (model_c, trace_c) =
        optimize_model(naive, &mut source, &cfg.spec, cfg.pipeline, Trainable::Calibration, &calib_only)?;
    let c = kernel_of(&model_c)?;

    let (model_d, trace_d) =
        optimize_model(model_c.clone(), &mut source, &cfg.spec, cfg.pipeline, Trainable::Joint, &opt)?;
    let d = kernel_of(&model_d)?;

    let errors = KernelErrors { b: frobenius(&b, &a)?, c: frobenius(&c, &a)?, d: frobenius(&d, &a)? };
    Ok(KernelExperiment {
        a,
        b,
        c,
        d,
        errors,
        calibration_c: model_c.calibration,
        calibration_d: model_d.calibration,
        trace_c,
        trace_d,
    })
}
