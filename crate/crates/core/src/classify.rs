//! QuantHD-style classification under hardware distortion: sign-quantized class
//! prototypes, Hamming associative search through the output stage, and
//! add/subtract retraining.

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{self, BatchSource, KernelMatrix, Model, OptimizeConfig, Trainable};
use crate::data::Dataset;
use crate::encoder::{self, EncoderParams, Pipeline};
use crate::error::{Error, Result};
use crate::hv::{self, BinaryHypervector};
use crate::hw::{self, Calibration, DistortionSpec};
use crate::seed::{self, Rng};

pub const DEFAULT_DIM: usize = 512;
pub const DEFAULT_EPOCHS: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassModel {
    pub class_vectors: Array2<f64>,
    pub quantized: Vec<BinaryHypervector>,
    pub dim: usize,
    pub n_classes: usize,
    pub warnings: Vec<String>,
}

impl ClassModel {
    /// A model with zero prototypes that has not been quantized yet.
    pub fn untrained(n_classes: usize, dim: usize) -> Self {
        ClassModel {
            class_vectors: Array2::zeros((n_classes, dim)),
            quantized: Vec::new(),
            dim,
            n_classes,
            warnings: Vec::new(),
        }
    }

    fn requantize(&mut self) -> Result<()> {
        self.quantized = self
            .class_vectors
            .rows()
            .into_iter()
            .map(|r| hv::quantize_slice(r.as_slice().unwrap()))
            .collect::<Result<_>>()?;
        Ok(())
    }
}

pub fn build_label_kernel(labels: &[usize]) -> Result<KernelMatrix> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("label kernel of no labels"));
    }
    let n = labels.len();
    KernelMatrix::new(Array2::from_shape_fn((n, n), |(i, j)| (labels[i] == labels[j]) as u8 as f64))
}

/// Stored encodings of every row and their sign-quantized queries.
fn stored_queries(
    x: ndarray::ArrayView2<f64>,
    params: &EncoderParams,
    spec: &DistortionSpec,
    rng: &mut Rng,
) -> Result<(Array2<f64>, Vec<BinaryHypervector>)> {
    let u = encoder::encode_rows_hw(x, params, spec, rng)?;
    let bits = u.rows().into_iter().map(|r| hv::quantize_slice(r.as_slice().unwrap())).collect::<Result<_>>()?;
    Ok((u, bits))
}

/// Argmax of the hardware Hamming response; ties go to the lowest class.
fn search(model: &ClassModel, query: &BinaryHypervector, spec: &DistortionSpec, rng: &mut Rng) -> Result<usize> {
    if model.quantized.is_empty() {
        return Err(Error::InvalidState("model has not been trained".into()));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (k, proto) in model.quantized.iter().enumerate() {
        let s = hw::search_hamming(query, proto, spec, Calibration::default(), rng)?;
        if s > best.1 {
            best = (k, s);
        }
    }
    Ok(best.0)
}

pub fn train(ds: &Dataset, params: &EncoderParams, spec: &DistortionSpec, epochs: usize, rng: &mut Rng) -> Result<ClassModel> {
    let (u, bits) = stored_queries(ds.features.view(), params, spec, rng)?;
    let mut model = ClassModel::untrained(ds.n_classes, u.ncols());
    for (row, &label) in u.rows().into_iter().zip(&ds.labels) {
        model.class_vectors.row_mut(label).scaled_add(1.0, &row);
    }
    for (c, &count) in ds.class_counts().iter().enumerate() {
        if count == 0 {
            model.warnings.push(format!("class {c} has no training samples"));
        }
    }
    model.requantize()?;
    for _ in 0..epochs {
        for (i, &label) in ds.labels.iter().enumerate() {
            let pred = search(&model, &bits[i], spec, rng)?;
            if pred != label {
                let row = u.row(i);
                model.class_vectors.row_mut(label).scaled_add(1.0, &row);
                model.class_vectors.row_mut(pred).scaled_add(-1.0, &row);
            }
        }
        model.requantize()?;
    }
    Ok(model)
}

pub fn predict(model: &ClassModel, x: ArrayView1<f64>, params: &EncoderParams, spec: &DistortionSpec, rng: &mut Rng) -> Result<usize> {
    let (_, bits) = stored_queries(x.insert_axis(Axis(0)), params, spec, rng)?;
    search(model, &bits[0], spec, rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mean_accuracy: f64,
    pub per_repeat: Vec<f64>,
}

impl Evaluation {
    pub fn from_repeats(per_repeat: Vec<f64>) -> Self {
        let mean_accuracy = per_repeat.iter().sum::<f64>() / per_repeat.len() as f64;
        Evaluation { mean_accuracy, per_repeat }
    }
}

fn accuracy(model: &ClassModel, ds: &Dataset, params: &EncoderParams, spec: &DistortionSpec, rng: &mut Rng) -> Result<f64> {
    let (_, bits) = stored_queries(ds.features.view(), params, spec, rng)?;
    let mut correct = 0;
    for (q, &label) in bits.iter().zip(&ds.labels) {
        if search(model, q, spec, rng)? == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / ds.len() as f64)
}

/// Accuracy over `repeats` passes, each with fresh noise from `rng`.
pub fn evaluate(
    model: &ClassModel,
    ds: &Dataset,
    params: &EncoderParams,
    spec: &DistortionSpec,
    repeats: usize,
    rng: &mut Rng,
) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(Error::EmptyInput("evaluation dataset"));
    }
    if repeats == 0 {
        return Err(Error::param("repeats", "must be at least 1"));
    }
    let per_repeat = (0..repeats).map(|_| accuracy(model, ds, params, spec, rng)).collect::<Result<_>>()?;
    Ok(Evaluation::from_repeats(per_repeat))
}

/// Random labeled mini-batches with the label kernel as target.
pub struct LabelBatches<'a> {
    pub data: &'a Dataset,
    pub batch: usize,
}

impl BatchSource for LabelBatches<'_> {
    fn next_batch(&mut self, rng: &mut Rng) -> Result<(Array2<f64>, KernelMatrix)> {
        let n = self.data.len();
        let rows = index::sample(rng, n, self.batch.min(n)).into_vec();
        let x = self.data.features.select(Axis(0), &rows);
        let labels: Vec<usize> = rows.iter().map(|&i| self.data.labels[i]).collect();
        Ok((x, build_label_kernel(&labels)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderCalibration {
    pub batch: usize,
    pub opt: OptimizeConfig,
}

impl Default for EncoderCalibration {
    fn default() -> Self {
        EncoderCalibration {
            batch: 64,
            opt: OptimizeConfig { step_size: 0.02, iterations: 3000, ..OptimizeConfig::default() },
        }
    }
}

/// Fit the encoder so the hardware similarity of stored encodings matches the
/// label kernel on random training mini-batches.
pub fn calibrate_encoder(
    train: &Dataset,
    params: &EncoderParams,
    spec: &DistortionSpec,
    cal: &EncoderCalibration,
) -> Result<(EncoderParams, Vec<f64>)> {
    if cal.batch < 2 {
        return Err(Error::param("calib.batch", "must be at least 2"));
    }
    let mut source = LabelBatches { data: train, batch: cal.batch };
    let (model, trace) = calibrate::optimize_model(
        Model::new(params.clone()),
        &mut source,
        spec,
        Pipeline::EncodeAndSearch,
        Trainable::Encoder,
        &cal.opt,
    )?;
    Ok((model.encoder, trace))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    pub dim: usize,
    pub spec: DistortionSpec,
    pub optimized: bool,
    pub epochs: usize,
    pub repeats: usize,
    pub seed: u64,
    pub calibration: EncoderCalibration,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            dim: DEFAULT_DIM,
            spec: DistortionSpec::identity(),
            optimized: false,
            epochs: DEFAULT_EPOCHS,
            repeats: 10,
            seed: 0,
            calibration: EncoderCalibration::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOutcome {
    pub evaluation: Evaluation,
    pub repeat_seeds: Vec<u64>,
    pub warnings: Vec<String>,
}

/// One full repeat: fresh random encoder, optional calibration, QuantHD
/// training and a single noisy test pass.
pub fn run_repeat(train_set: &Dataset, test_set: &Dataset, cfg: &ClassifyConfig, seed: u64) -> Result<(f64, Vec<String>)> {
    let mut params = encoder::random_projection_params(train_set.n_features(), cfg.dim, seed::derive(seed, 1))?;
    if cfg.optimized {
        let cal = EncoderCalibration {
            opt: OptimizeConfig { seed: seed::derive(seed, 2), ..cfg.calibration.opt.clone() },
            ..cfg.calibration.clone()
        };
        params = calibrate_encoder(train_set, &params, &cfg.spec, &cal)?.0;
    }
    let model = train(train_set, &params, &cfg.spec, cfg.epochs, &mut seed::rng(seed::derive(seed, 3)))?;
    let acc = accuracy(&model, test_set, &params, &cfg.spec, &mut seed::rng(seed::derive(seed, 4)))?;
    Ok((acc, model.warnings))
}

pub fn repeat_seeds(seed: u64, repeats: usize) -> Vec<u64> {
    (0..repeats as u64).map(|r| seed::derive(seed, 1000 + r)).collect()
}

pub fn run_classification(train_set: &Dataset, test_set: &Dataset, cfg: &ClassifyConfig) -> Result<ClassifyOutcome> {
    cfg.spec.validate()?;
    if cfg.repeats == 0 {
        return Err(Error::param("repeats", "must be at least 1"));
    }
    if train_set.n_features() != test_set.n_features() {
        return Err(Error::InvalidDataset("train and test feature counts differ".into()));
    }
    let seeds = repeat_seeds(cfg.seed, cfg.repeats);
    let results: Vec<(f64, Vec<String>)> =
        seeds.par_iter().map(|&s| run_repeat(train_set, test_set, cfg, s)).collect::<Result<_>>()?;
    let mut warnings: Vec<String> = results.iter().flat_map(|(_, w)| w.iter().cloned()).collect();
    warnings.dedup();
    Ok(ClassifyOutcome {
        evaluation: Evaluation::from_repeats(results.into_iter().map(|(a, _)| a).collect()),
        repeat_seeds: seeds,
        warnings,
    })
}
