//! Compute-in-memory distortion model.
//!
//! A stored component `x` becomes `G(γ(x + shift)) + ε_in`, where `G` is one
//! of the odd saturating forms below and `shift` models a threshold offset of
//! the storage cell (0 by default). The comparison Ψ applies the same form,
//! without the shift, to the similarity either once on the scalar output or
//! to every elementwise product before accumulation, then adds `ε_out`.
//!
//! An affine [`Calibration`] sits inside the output nonlinearity: `G(p·s + q)`.
//! It is the identity unless a calibration has been learned.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hv::{self, BinaryHypervector, Hypervector, Repr};
use crate::seed::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Tanh,
    Exp,
    Log,
    Identity,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Tanh, Family::Exp, Family::Log, Family::Identity];

    pub fn name(self) -> &'static str {
        match self {
            Family::Tanh => "tanh",
            Family::Exp => "exp",
            Family::Log => "log",
            Family::Identity => "identity",
        }
    }

    /// Value of the form at `x` with gain `gain`.
    pub fn apply(self, gain: f64, x: f64) -> f64 {
        match self {
            Family::Tanh => (gain * x).tanh(),
            Family::Exp => x.signum() * (gain * x.abs()).exp_m1() / gain.exp_m1(),
            Family::Log => x.signum() * (gain * x.abs()).ln_1p() / gain.ln_1p(),
            Family::Identity => x,
        }
    }

    pub fn derivative(self, gain: f64, x: f64) -> f64 {
        match self {
            Family::Tanh => {
                let t = (gain * x).tanh();
                gain * (1.0 - t * t)
            }
            Family::Exp => gain * (gain * x.abs()).exp() / gain.exp_m1(),
            Family::Log => gain / ((1.0 + gain * x.abs()) * gain.ln_1p()),
            Family::Identity => 1.0,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Family::Tanh),
            "exp" => Ok(Family::Exp),
            "log" => Ok(Family::Log),
            "identity" | "none" => Ok(Family::Identity),
            _ => Err(format!("unknown family `{s}` (expected tanh, exp, log or identity)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    #[serde(rename = "output")]
    OutputNonlinear,
    #[serde(rename = "accumulate")]
    AccumulateNonlinear,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::OutputNonlinear => "output",
            Mode::AccumulateNonlinear => "accumulate",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "output" | "output_nonlinear" => Ok(Mode::OutputNonlinear),
            "accumulate" | "accumulate_nonlinear" => Ok(Mode::AccumulateNonlinear),
            _ => Err(format!("unknown mode `{s}` (expected output or accumulate)")),
        }
    }
}

/// Affine map applied to the similarity inside the output nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub gain: f64,
    pub bias: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration { gain: 1.0, bias: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub family: Family,
    pub gain: f64,
    pub shift: f64,
    pub input_noise_std: f64,
    pub output_noise_std: f64,
    pub mode: Mode,
    pub seed: u64,
}

impl Default for DistortionSpec {
    fn default() -> Self {
        DistortionSpec {
            family: Family::Identity,
            gain: 1.0,
            shift: 0.0,
            input_noise_std: 0.0,
            output_noise_std: 0.0,
            mode: Mode::OutputNonlinear,
            seed: 0,
        }
    }
}

impl DistortionSpec {
    pub fn new(family: Family, gain: f64) -> Result<Self> {
        let spec = DistortionSpec { family, gain, ..Default::default() };
        spec.validate()?;
        Ok(spec)
    }

    pub fn identity() -> Self {
        DistortionSpec::default()
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    pub fn with_noise(mut self, input_std: f64, output_std: f64) -> Self {
        self.input_noise_std = input_std;
        self.output_noise_std = output_std;
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain.is_finite() && self.gain > 0.0) {
            return Err(Error::param("hw.gain", format!("must be positive, got {}", self.gain)));
        }
        if !self.shift.is_finite() {
            return Err(Error::param("hw.shift", "must be finite"));
        }
        for (name, v) in [
            ("hw.input_noise", self.input_noise_std),
            ("hw.output_noise", self.output_noise_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, format!("must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Operating-point offset of the cell; an ideal cell has none.
    fn offset(&self) -> f64 {
        if self.family == Family::Identity { 0.0 } else { self.shift }
    }

    /// Deterministic part of the storage distortion.
    pub fn store(&self, x: f64) -> f64 {
        self.family.apply(self.gain, x + self.offset())
    }

    pub fn store_derivative(&self, x: f64) -> f64 {
        self.family.derivative(self.gain, x + self.offset())
    }

    /// Output nonlinearity with calibration, before output noise.
    pub fn respond(&self, cal: Calibration, s: f64) -> f64 {
        self.family.apply(self.gain, cal.gain * s + cal.bias)
    }

    pub fn respond_derivative(&self, cal: Calibration, s: f64) -> f64 {
        self.family.derivative(self.gain, cal.gain * s + cal.bias)
    }

    pub(crate) fn input_noise(&self, rng: &mut Rng) -> f64 {
        gaussian(rng, self.input_noise_std)
    }

    pub(crate) fn output_noise(&self, rng: &mut Rng) -> f64 {
        gaussian(rng, self.output_noise_std)
    }
}

/// Zero-mean Gaussian draw; a zero std consumes nothing from the stream.
pub(crate) fn gaussian(rng: &mut Rng, std: f64) -> f64 {
    if std == 0.0 {
        0.0
    } else {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    }
}

pub(crate) fn distort_slice(v: &[f64], spec: &DistortionSpec, rng: &mut Rng) -> Result<Vec<f64>> {
    if let Some(index) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let out: Vec<f64> = v.iter().map(|&x| spec.store(x) + spec.input_noise(rng)).collect();
    if let Some(index) = out.iter().position(|x| !x.is_finite()) {
        return Err(Error::Overflow { stage: "distort", index });
    }
    Ok(out)
}

/// Stored analog of `v`. Phase vectors are distorted through their real view.
pub fn distort(v: &Hypervector, spec: &DistortionSpec, rng: &mut Rng) -> Result<Hypervector> {
    Hypervector::dense(distort_slice(&v.real_view(), spec, rng)?)
}

/// Ψ on two real slices that are already in storage.
pub(crate) fn search_slices(
    a: &[f64],
    b: &[f64],
    spec: &DistortionSpec,
    cal: Calibration,
    rng: &mut Rng,
) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Incompatible(format!("dimensions {} and {}", a.len(), b.len())));
    }
    let s = match spec.mode {
        Mode::OutputNonlinear => spec.respond(cal, hv::cosine_slices(a, b)?),
        Mode::AccumulateNonlinear => {
            let sum: f64 = a.iter().zip(b).map(|(x, y)| spec.respond(cal, x * y)).sum();
            sum / a.len() as f64
        }
    };
    let s = s + spec.output_noise(rng);
    if !s.is_finite() {
        return Err(Error::Overflow { stage: "similarity", index: 0 });
    }
    Ok(s)
}

fn real_operands(a: &Hypervector, b: &Hypervector) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.dim() != b.dim() {
        return Err(Error::Incompatible(format!("dimensions {} and {}", a.dim(), b.dim())));
    }
    if (a.repr() == Repr::Phase) != (b.repr() == Repr::Phase) {
        return Err(Error::Incompatible(format!("{:?} with {:?}", a.repr(), b.repr())));
    }
    Ok((a.real_view(), b.real_view()))
}

/// The comparison Ψ alone, for vectors that already sit in memory.
pub fn search_similarity(
    a: &Hypervector,
    b: &Hypervector,
    spec: &DistortionSpec,
    cal: Calibration,
    rng: &mut Rng,
) -> Result<f64> {
    let (a, b) = real_operands(a, b)?;
    search_slices(&a, &b, spec, cal, rng)
}

/// Hardware-perceived similarity Ψ(f(a), f(b)).
pub fn hw_similarity(a: &Hypervector, b: &Hypervector, spec: &DistortionSpec, rng: &mut Rng) -> Result<f64> {
    let (a, b) = real_operands(a, b)?;
    let fa = distort_slice(&a, spec, rng)?;
    let fb = distort_slice(&b, spec, rng)?;
    search_slices(&fa, &fb, spec, Calibration::default(), rng)
}

/// Hamming comparison through the output stage. In accumulate mode each bit
/// contributes `g(p·match + q)` with `match ∈ {0, 1}`.
pub fn search_hamming(
    a: &BinaryHypervector,
    b: &BinaryHypervector,
    spec: &DistortionSpec,
    cal: Calibration,
    rng: &mut Rng,
) -> Result<f64> {
    let h = hv::hamming_sim(a, b)?;
    let s = match spec.mode {
        Mode::OutputNonlinear => spec.respond(cal, h),
        Mode::AccumulateNonlinear => {
            h * spec.respond(cal, 1.0) + (1.0 - h) * spec.respond(cal, 0.0)
        }
    };
    Ok(s + spec.output_noise(rng))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardwareEnsemble {
    pub family_pool: Vec<Family>,
    pub gain_range: (f64, f64),
    pub noise_range: (f64, f64),
    pub shift: f64,
    pub mode: Mode,
    pub seed: u64,
}

impl HardwareEnsemble {
    pub fn new(family_pool: Vec<Family>, gain_range: (f64, f64), noise_range: (f64, f64)) -> Self {
        HardwareEnsemble { family_pool, gain_range, noise_range, shift: 0.0, mode: Mode::default(), seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.family_pool.is_empty() {
            return Err(Error::InvalidEnsemble("empty family pool".into()));
        }
        let (g0, g1) = self.gain_range;
        if !(g0 > 0.0 && g0 <= g1 && g1.is_finite()) {
            return Err(Error::InvalidEnsemble(format!("gain range [{g0}, {g1}]")));
        }
        let (n0, n1) = self.noise_range;
        if !(n0 >= 0.0 && n0 <= n1 && n1.is_finite()) {
            return Err(Error::InvalidEnsemble(format!("noise range [{n0}, {n1}]")));
        }
        Ok(())
    }
}

fn uniform(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

pub fn sample_hardware(ensemble: &HardwareEnsemble, rng: &mut Rng) -> Result<DistortionSpec> {
    ensemble.validate()?;
    let family = ensemble.family_pool[rng.random_range(0..ensemble.family_pool.len())];
    let gain = uniform(rng, ensemble.gain_range);
    let input_noise_std = uniform(rng, ensemble.noise_range);
    let output_noise_std = uniform(rng, ensemble.noise_range);
    Ok(DistortionSpec {
        family,
        gain,
        shift: ensemble.shift,
        input_noise_std,
        output_noise_std,
        mode: ensemble.mode,
        seed: rng.random(),
    })
}
