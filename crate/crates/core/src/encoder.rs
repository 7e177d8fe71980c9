//! Learnable encoder `x ↦ act(Wᵀx)` and the hand-derived gradient of the
//! calibration objective with respect to `W` and the output calibration.

use std::f64::consts::TAU;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calibrate::KernelMatrix;
use crate::error::{Error, Result};
use crate::hv::{wrap_phase, Hypervector};
use crate::hw::{self, Calibration, DistortionSpec, Mode};
use crate::seed::{self, Rng};

/// Weight of the mean-absolute-value term inside the regularizer.
pub const SPARSITY_WEIGHT: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    None,
    Tanh,
    #[serde(rename = "phase")]
    PhaseMap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutRepr {
    DenseReal,
    Phase,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub weights: Array2<f64>,
    pub activation: Activation,
}

impl EncoderParams {
    pub fn new(weights: Array2<f64>, activation: Activation) -> Result<Self> {
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(Error::InvalidDimension(format!("weights shape {:?}", weights.dim())));
        }
        if let Some(index) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { weights, activation })
    }

    pub fn n_features(&self) -> usize {
        self.weights.nrows()
    }

    /// Hypervector dimension D.
    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_repr(&self) -> OutRepr {
        match self.activation {
            Activation::PhaseMap => OutRepr::Phase,
            _ => OutRepr::DenseReal,
        }
    }

    /// Length of the real view of one encoding (2D for phase encodings).
    pub fn view_len(&self) -> usize {
        match self.activation {
            Activation::PhaseMap => 2 * self.dim(),
            _ => self.dim(),
        }
    }

    /// Shape header (rows u32, cols u32, activation u8) then row-major f64 LE.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(9 + 8 * self.weights.len());
        out.extend_from_slice(&(self.n_features() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        out.push(match self.activation {
            Activation::None => 0,
            Activation::Tanh => 1,
            Activation::PhaseMap => 2,
        });
        for w in self.weights.iter() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 9 {
            return Err(Error::Decode("encoder header shorter than 9 bytes".into()));
        }
        let rows = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let activation = match bytes[8] {
            0 => Activation::None,
            1 => Activation::Tanh,
            2 => Activation::PhaseMap,
            t => return Err(Error::Decode(format!("unknown activation tag {t}"))),
        };
        let payload = &bytes[9..];
        if payload.len() != 8 * rows * cols {
            return Err(Error::Decode(format!("payload of {} bytes for {rows}x{cols}", payload.len())));
        }
        let values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let weights = Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Decode(e.to_string()))?;
        EncoderParams::new(weights, activation)
    }
}

pub fn random_projection_params(n_features: usize, dim: usize, seed: u64) -> Result<EncoderParams> {
    if n_features == 0 || dim == 0 {
        return Err(Error::InvalidDimension(format!("projection {n_features}x{dim}")));
    }
    let normal = Normal::new(0.0, (1.0 / n_features as f64).sqrt()).unwrap();
    let mut rng = seed::rng(seed);
    let weights = Array2::from_shape_simple_fn((n_features, dim), || normal.sample(&mut rng));
    EncoderParams::new(weights, Activation::None)
}

fn check_features(n: usize, params: &EncoderParams) -> Result<()> {
    if n != params.n_features() {
        return Err(Error::Incompatible(format!(
            "input has {n} features, encoder expects {}",
            params.n_features()
        )));
    }
    Ok(())
}

pub fn encode(x: ArrayView1<f64>, params: &EncoderParams) -> Result<Hypervector> {
    check_features(x.len(), params)?;
    let z = x.dot(&params.weights);
    let z = z.as_slice().unwrap();
    match params.activation {
        Activation::None => Hypervector::dense(z.to_vec()),
        Activation::Tanh => Hypervector::dense(z.iter().map(|v| v.tanh()).collect()),
        Activation::PhaseMap => Hypervector::phase(z.iter().map(|&v| wrap_phase(v)).collect()),
    }
}

pub fn encode_hw(x: ArrayView1<f64>, params: &EncoderParams, spec: &DistortionSpec, rng: &mut Rng) -> Result<Hypervector> {
    hw::distort(&encode(x, params)?, spec, rng)
}

fn first_non_finite(a: &Array2<f64>) -> Option<usize> {
    a.iter().position(|v| !v.is_finite())
}

/// Real views of the encodings of every row of `x` (n × view_len).
pub fn encode_rows(x: ArrayView2<f64>, params: &EncoderParams) -> Result<Array2<f64>> {
    check_features(x.ncols(), params)?;
    let z = x.dot(&params.weights);
    if let Some(index) = first_non_finite(&z) {
        return Err(Error::Overflow { stage: "projection", index });
    }
    Ok(activate(&z, params.activation))
}

fn activate(z: &Array2<f64>, activation: Activation) -> Array2<f64> {
    match activation {
        Activation::None => z.clone(),
        Activation::Tanh => z.mapv(f64::tanh),
        Activation::PhaseMap => {
            let (n, d) = z.dim();
            let mut a = Array2::zeros((n, 2 * d));
            for ((i, k), &v) in z.indexed_iter() {
                let v = v.rem_euclid(TAU);
                a[[i, 2 * k]] = v.cos();
                a[[i, 2 * k + 1]] = v.sin();
            }
            a
        }
    }
}

/// Stored analogs of the encodings of every row: `f(act(Wᵀx)) + ε_in`.
pub fn encode_rows_hw(x: ArrayView2<f64>, params: &EncoderParams, spec: &DistortionSpec, rng: &mut Rng) -> Result<Array2<f64>> {
    let mut a = encode_rows(x, params)?;
    store_in_place(&mut a, spec, rng)?;
    Ok(a)
}

fn store_in_place(a: &mut Array2<f64>, spec: &DistortionSpec, rng: &mut Rng) -> Result<()> {
    for v in a.iter_mut() {
        *v = spec.store(*v) + spec.input_noise(rng);
    }
    match first_non_finite(a) {
        Some(index) => Err(Error::Overflow { stage: "distort", index }),
        None => Ok(()),
    }
}

/// Where the storage distortion acts in the hardware pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    /// Encodings are compared as computed; only the search is nonlinear.
    SearchOnly,
    /// Encodings are stored through `f` and then compared.
    EncodeAndSearch,
}

/// Terms of `α·sim_loss + β·R` for one batch.
pub struct Objective<'a> {
    pub target: &'a KernelMatrix,
    pub spec: &'a DistortionSpec,
    pub pipeline: Pipeline,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Clone, Debug)]
pub struct Gradient {
    pub weights: Array2<f64>,
    pub calibration: Calibration,
}

/// Hardware similarity matrix of stored vectors (rows of `u`), with one output
/// noise draw per unordered pair.
pub(crate) fn similarity_matrix(
    u: &Array2<f64>,
    spec: &DistortionSpec,
    cal: Calibration,
    rng: &mut Rng,
) -> Result<Array2<f64>> {
    let n = u.nrows();
    let m = u.ncols() as f64;
    let mut s = match spec.mode {
        Mode::OutputNonlinear => {
            let c = cosine_matrix(u)?;
            c.mapv(|v| spec.respond(cal, v))
        }
        Mode::AccumulateNonlinear => {
            let mut s = Array2::zeros((n, n));
            for i in 0..n {
                for j in i..n {
                    let ui = u.row(i);
                    let uj = u.row(j);
                    let v = Zip::from(&ui).and(&uj).fold(0.0, |acc, &x, &y| acc + spec.respond(cal, x * y)) / m;
                    s[[i, j]] = v;
                    s[[j, i]] = v;
                }
            }
            s
        }
    };
    if spec.output_noise_std > 0.0 {
        for i in 0..n {
            for j in i..n {
                let e = spec.output_noise(rng);
                s[[i, j]] += e;
                if i != j {
                    s[[j, i]] += e;
                }
            }
        }
    }
    match first_non_finite(&s) {
        Some(index) => Err(Error::Overflow { stage: "similarity", index }),
        None => Ok(s),
    }
}

fn row_norms(u: &Array2<f64>) -> Result<Array1<f64>> {
    let norms = u.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if norms.iter().any(|&v| v == 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok(norms)
}

fn cosine_matrix(u: &Array2<f64>) -> Result<Array2<f64>> {
    let norms = row_norms(u)?;
    let unit = u / &norms.view().insert_axis(Axis(1));
    let mut c = unit.dot(&unit.t());
    c.mapv_inplace(|v| v.clamp(-1.0, 1.0));
    // the diagonal is exactly 1 by definition; avoid rounding noise there
    c.diag_mut().fill(1.0);
    Ok(c)
}

/// `R = mean_i (‖a_i‖²/D − 1)² + λ_s · mean_ik |a_ik|` on activation outputs.
pub(crate) fn regularizer_rows(a: &Array2<f64>, dim: usize) -> f64 {
    let n = a.nrows() as f64;
    let d = dim as f64;
    let norm_term: f64 = a.rows().into_iter().map(|r| (r.dot(&r) / d - 1.0).powi(2)).sum::<f64>() / n;
    let sparsity = a.iter().map(|v| v.abs()).sum::<f64>() / a.len() as f64;
    norm_term + SPARSITY_WEIGHT * sparsity
}

/// Objective value and exact gradient for one batch. Noise is drawn once from
/// `rng` and held fixed through the backward pass.
pub fn objective_and_gradient(
    params: &EncoderParams,
    cal: Calibration,
    batch: ArrayView2<f64>,
    obj: &Objective,
    rng: &mut Rng,
) -> Result<(f64, Gradient)> {
    let n = batch.nrows();
    if obj.target.n() != n {
        return Err(Error::Incompatible(format!("target is {0}x{0} for a batch of {n}", obj.target.n())));
    }
    check_features(batch.ncols(), params)?;
    let spec = obj.spec;
    let dim = params.dim();

    let z = batch.dot(&params.weights);
    if let Some(index) = first_non_finite(&z) {
        return Err(Error::Overflow { stage: "projection", index });
    }
    let a = activate(&z, params.activation);
    let mut u = a.clone();
    if obj.pipeline == Pipeline::EncodeAndSearch {
        store_in_place(&mut u, spec, rng)?;
    }
    let s = similarity_matrix(&u, spec, cal, rng)?;
    let t = obj.target.values();
    let diff = &s - t;
    let sim = diff.iter().map(|v| v * v).sum::<f64>();
    let reg = regularizer_rows(&a, dim);
    let value = obj.alpha * sim + obj.beta * reg;

    // dL/ds, then through Ψ to the stored vectors
    let g = diff.mapv(|v| 2.0 * obj.alpha * v);
    let gs = &g + &g.t();
    let (mut du, dcal) = match spec.mode {
        Mode::OutputNonlinear => {
            let norms = row_norms(&u)?;
            let c = cosine_matrix(&u)?;
            let slope = c.mapv(|v| spec.respond_derivative(cal, v));
            let dc = &g * &slope * cal.gain;
            let dcal = Calibration {
                gain: (&g * &slope * &c).sum(),
                bias: (&g * &slope).sum(),
            };
            let bs = &dc + &dc.t();
            let col = norms.view().insert_axis(Axis(1));
            let unit = &u / &col;
            let mut du = bs.dot(&unit) / col;
            let coef = (&bs * &c).sum_axis(Axis(1)) / norms.mapv(|v| v * v);
            du -= &(&u * &coef.view().insert_axis(Axis(1)));
            (du, dcal)
        }
        Mode::AccumulateNonlinear => {
            let m = u.ncols();
            let mut du = Array2::zeros(u.dim());
            let (mut dp, mut dq) = (0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let (gij, gsij) = (g[[i, j]], gs[[i, j]]);
                    for k in 0..m {
                        let (x, y) = (u[[i, k]], u[[j, k]]);
                        let slope = spec.respond_derivative(cal, x * y);
                        du[[i, k]] += gsij * slope * cal.gain * y / m as f64;
                        dp += gij * slope * x * y / m as f64;
                        dq += gij * slope / m as f64;
                    }
                }
            }
            (du, Calibration { gain: dp, bias: dq })
        }
    };
    if obj.pipeline == Pipeline::EncodeAndSearch {
        Zip::from(&mut du).and(&a).for_each(|d, &x| *d *= spec.store_derivative(x));
    }

    // regularizer on the activation outputs
    if obj.beta != 0.0 {
        let nf = n as f64;
        let d = dim as f64;
        let per_entry = SPARSITY_WEIGHT / a.len() as f64;
        for (i, row) in a.rows().into_iter().enumerate() {
            let scale = obj.beta * 4.0 * (row.dot(&row) / d - 1.0) / (nf * d);
            for (k, &v) in row.iter().enumerate() {
                du[[i, k]] += scale * v + obj.beta * per_entry * sign(v);
            }
        }
    }

    let dz = match params.activation {
        Activation::None => du,
        Activation::Tanh => du * &a.mapv(|v| 1.0 - v * v),
        Activation::PhaseMap => {
            let mut dz = Array2::zeros(z.dim());
            for ((i, k), out) in dz.indexed_iter_mut() {
                let (c, s) = (a[[i, 2 * k]], a[[i, 2 * k + 1]]);
                *out = -du[[i, 2 * k]] * s + du[[i, 2 * k + 1]] * c;
            }
            dz
        }
    };
    let dw = batch.t().dot(&dz);
    if let Some(index) = first_non_finite(&dw) {
        return Err(Error::Overflow { stage: "gradient", index });
    }
    if !value.is_finite() {
        return Err(Error::Overflow { stage: "objective", index: 0 });
    }
    Ok((value, Gradient { weights: dw, calibration: dcal }))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Gradient of `α·sim_loss + β·R` with respect to `W`, through the stored
/// (distorted) encodings and an identity output calibration.
pub fn loss_gradient(
    params: &EncoderParams,
    batch: ArrayView2<f64>,
    target: &KernelMatrix,
    spec: &DistortionSpec,
    alpha: f64,
    beta: f64,
    rng: &mut Rng,
) -> Result<Array2<f64>> {
    let obj = Objective { target, spec, pipeline: Pipeline::EncodeAndSearch, alpha, beta };
    let (_, grad) = objective_and_gradient(params, Calibration::default(), batch, &obj, rng)?;
    Ok(grad.weights)
}
