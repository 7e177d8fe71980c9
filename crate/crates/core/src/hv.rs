//! Hypervectors and the HDC algebra.
//!
//! Three representations share one type: dense real, bipolar, and phase
//! (unit complex components stored as angles). Binding is the elementwise
//! product for bipolar vectors and phase addition for phase vectors. Bundling
//! is a plain componentwise sum; a phase bundle is returned as interleaved
//! `(cos, sin)` pairs so magnitude information survives, and [`to_phase`]
//! recovers the angles.

use std::f64::consts::TAU;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Repr {
    DenseReal,
    Bipolar,
    Phase,
}

impl Repr {
    fn tag(self) -> u8 {
        match self {
            Repr::DenseReal => 0,
            Repr::Bipolar => 1,
            Repr::Phase => 2,
        }
    }
}

const BINARY_TAG: u8 = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct Hypervector {
    repr: Repr,
    data: Vec<f64>,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidDimension("dimension must be at least 1".into()));
    }
    if dim > u32::MAX as usize {
        return Err(Error::InvalidDimension(format!("dimension {dim} exceeds u32")));
    }
    Ok(())
}

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Reduce an angle into `[0, 2π)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid of a tiny negative angle rounds up to exactly 2π
    if r >= TAU {
        0.0
    } else {
        r
    }
}

impl Hypervector {
    pub fn dense(data: Vec<f64>) -> Result<Self> {
        check_dim(data.len())?;
        check_finite(&data)?;
        Ok(Self { repr: Repr::DenseReal, data })
    }

    pub fn bipolar(data: Vec<f64>) -> Result<Self> {
        check_dim(data.len())?;
        if let Some(i) = data.iter().position(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::UnsupportedRepr(format!(
                "bipolar component {i} is {}, expected ±1",
                data[i]
            )));
        }
        Ok(Self { repr: Repr::Bipolar, data })
    }

    /// Phase vector from arbitrary finite angles; angles are wrapped into `[0, 2π)`.
    pub fn phase(angles: Vec<f64>) -> Result<Self> {
        check_dim(angles.len())?;
        check_finite(&angles)?;
        let data = angles.into_iter().map(wrap_phase).collect();
        Ok(Self { repr: Repr::Phase, data })
    }

    pub fn repr(&self) -> Repr {
        self.repr
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    /// Raw components: values for real reprs, angles for phase.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Real coordinates used by distortion and similarity. Phase vectors map to
    /// interleaved `(cos θ, sin θ)` pairs, so the real cosine of two views equals
    /// the real part of their Hermitian similarity.
    pub fn real_view(&self) -> Vec<f64> {
        match self.repr {
            Repr::Phase => self.data.iter().flat_map(|t| [t.cos(), t.sin()]).collect(),
            _ => self.data.clone(),
        }
    }

    pub fn norm(&self) -> f64 {
        match self.repr {
            Repr::Phase => (self.dim() as f64).sqrt(),
            _ => self.data.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        match self.repr {
            Repr::Phase => Err(Error::UnsupportedRepr("cannot scale a phase vector".into())),
            _ => Hypervector::dense(self.data.iter().map(|v| v * c).collect()),
        }
    }

    /// Flat binary layout: repr tag (u8), dim (u32 LE), then f64 LE components.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + 8 * self.dim());
        out.push(self.repr.tag());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (tag, dim, payload) = split_header(bytes)?;
        if payload.len() != 8 * dim {
            return Err(Error::Decode(format!(
                "expected {} payload bytes for dim {dim}, found {}",
                8 * dim,
                payload.len()
            )));
        }
        let data: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        match tag {
            0 => Hypervector::dense(data),
            1 => Hypervector::bipolar(data),
            2 => {
                if data.iter().any(|t| !(0.0..TAU).contains(t)) {
                    return Err(Error::Decode("phase angle outside [0, 2π)".into()));
                }
                Ok(Hypervector { repr: Repr::Phase, data })
            }
            other => Err(Error::Decode(format!("unknown hypervector tag {other}"))),
        }
    }
}

fn split_header(bytes: &[u8]) -> Result<(u8, usize, &[u8])> {
    if bytes.len() < 5 {
        return Err(Error::Decode("header shorter than 5 bytes".into()));
    }
    let dim = u32::from_le_bytes(bytes[1..5].try_into().unwrap()) as usize;
    check_dim(dim).map_err(|e| Error::Decode(e.to_string()))?;
    Ok((bytes[0], dim, &bytes[5..]))
}

/// Bit-packed binary hypervector. Padding bits past `dim` are always zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryHypervector {
    words: Vec<u64>,
    dim: usize,
}

impl BinaryHypervector {
    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        check_dim(bits.len())?;
        let mut words = vec![0u64; bits.len().div_ceil(64)];
        for (i, &b) in bits.iter().enumerate() {
            if b {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Ok(Self { words, dim: bits.len() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bit(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.dim).map(|i| self.bit(i)).collect()
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Map bits to a bipolar vector (1 → +1, 0 → −1).
    pub fn to_bipolar(&self) -> Hypervector {
        let data = (0..self.dim).map(|i| if self.bit(i) { 1.0 } else { -1.0 }).collect();
        Hypervector { repr: Repr::Bipolar, data }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + self.dim.div_ceil(8));
        out.push(BINARY_TAG);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        let bytes = self.words.iter().flat_map(|w| w.to_le_bytes());
        out.extend(bytes.take(self.dim.div_ceil(8)));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (tag, dim, payload) = split_header(bytes)?;
        if tag != BINARY_TAG {
            return Err(Error::Decode(format!("expected binary tag {BINARY_TAG}, found {tag}")));
        }
        if payload.len() != dim.div_ceil(8) {
            return Err(Error::Decode(format!(
                "expected {} packed bytes for dim {dim}, found {}",
                dim.div_ceil(8),
                payload.len()
            )));
        }
        let mut words = vec![0u64; dim.div_ceil(64)];
        for (i, &b) in payload.iter().enumerate() {
            words[i / 8] |= (b as u64) << (8 * (i % 8));
        }
        if dim % 64 != 0 && words[dim / 64] >> (dim % 64) != 0 {
            return Err(Error::Decode("nonzero padding bits".into()));
        }
        Ok(Self { words, dim })
    }
}

pub fn random_bipolar(dim: usize, seed: u64) -> Result<Hypervector> {
    check_dim(dim)?;
    let mut rng = seed::rng(seed);
    let data = (0..dim).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    Ok(Hypervector { repr: Repr::Bipolar, data })
}

pub fn random_phase(dim: usize, seed: u64) -> Result<Hypervector> {
    check_dim(dim)?;
    let mut rng = seed::rng(seed);
    let data = (0..dim).map(|_| wrap_phase(rng.random::<f64>() * TAU)).collect();
    Ok(Hypervector { repr: Repr::Phase, data })
}

fn same_shape(a: &Hypervector, b: &Hypervector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Incompatible(format!("dimensions {} and {}", a.dim(), b.dim())));
    }
    Ok(())
}

fn both_real(a: &Hypervector, b: &Hypervector) -> Result<()> {
    if a.repr == Repr::Phase || b.repr == Repr::Phase {
        return Err(Error::Incompatible(format!("{:?} with {:?}", a.repr, b.repr)));
    }
    Ok(())
}

pub fn bind(a: &Hypervector, b: &Hypervector) -> Result<Hypervector> {
    same_shape(a, b)?;
    if a.repr != b.repr {
        return Err(Error::Incompatible(format!("{:?} with {:?}", a.repr, b.repr)));
    }
    let data = match a.repr {
        Repr::Bipolar => a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
        Repr::Phase => a.data.iter().zip(&b.data).map(|(x, y)| wrap_phase(x + y)).collect(),
        Repr::DenseReal => {
            return Err(Error::Incompatible("bind needs bipolar or phase operands".into()))
        }
    };
    Ok(Hypervector { repr: a.repr, data })
}

/// Bind with the inverse of `key`: the key itself for bipolar, the conjugate for phase.
pub fn unbind(composite: &Hypervector, key: &Hypervector) -> Result<Hypervector> {
    match key.repr {
        Repr::Phase => {
            let inverse = Hypervector {
                repr: Repr::Phase,
                data: key.data.iter().map(|t| wrap_phase(-t)).collect(),
            };
            bind(composite, &inverse)
        }
        _ => bind(composite, key),
    }
}

/// Elementwise product of two real-valued vectors (bipolar or dense), as used
/// when a bipolar key is bound to an unnormalized bundle.
pub fn hadamard(a: &Hypervector, b: &Hypervector) -> Result<Hypervector> {
    same_shape(a, b)?;
    both_real(a, b)?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
    let repr = if a.repr == Repr::Bipolar && b.repr == Repr::Bipolar {
        Repr::Bipolar
    } else {
        Repr::DenseReal
    };
    Ok(Hypervector { repr, data })
}

/// Componentwise sum, optionally scaled to unit norm. Phase inputs are summed as
/// unit complex numbers and returned as interleaved `(re, im)` pairs of length 2D.
pub fn bundle(vs: &[Hypervector], normalize: bool) -> Result<Hypervector> {
    let first = vs.first().ok_or(Error::EmptyInput("bundle of no vectors"))?;
    let phase = first.repr == Repr::Phase;
    for v in vs {
        same_shape(first, v)?;
        if (v.repr == Repr::Phase) != phase {
            return Err(Error::Incompatible(format!("{:?} with {:?}", first.repr, v.repr)));
        }
    }
    let len = if phase { 2 * first.dim() } else { first.dim() };
    let mut sum = vec![0.0; len];
    for v in vs {
        if phase {
            for (k, t) in v.data.iter().enumerate() {
                sum[2 * k] += t.cos();
                sum[2 * k + 1] += t.sin();
            }
        } else {
            sum.iter_mut().zip(&v.data).for_each(|(s, x)| *s += x);
        }
    }
    if normalize {
        let n = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::ZeroNorm);
        }
        sum.iter_mut().for_each(|v| *v /= n);
    }
    Hypervector::dense(sum)
}

/// Angles of an interleaved `(re, im)` vector such as a phase bundle.
/// Components with zero magnitude map to angle 0.
pub fn to_phase(pairs: &Hypervector) -> Result<Hypervector> {
    if pairs.repr != Repr::DenseReal || !pairs.dim().is_multiple_of(2) {
        return Err(Error::UnsupportedRepr(
            "to_phase expects an interleaved dense vector of even length".into(),
        ));
    }
    let angles = pairs.data.chunks_exact(2).map(|c| c[1].atan2(c[0])).collect();
    Hypervector::phase(angles)
}

pub(crate) fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

pub fn cosine_sim(a: &Hypervector, b: &Hypervector) -> Result<f64> {
    same_shape(a, b)?;
    match (a.repr, b.repr) {
        (Repr::Phase, Repr::Phase) => {
            let s: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).cos()).sum();
            Ok((s / a.dim() as f64).clamp(-1.0, 1.0))
        }
        _ => {
            both_real(a, b)?;
            cosine_slices(&a.data, &b.data)
        }
    }
}

pub fn hamming_sim(a: &BinaryHypervector, b: &BinaryHypervector) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::Incompatible(format!("dimensions {} and {}", a.dim, b.dim)));
    }
    let diff: u32 = a.words.iter().zip(&b.words).map(|(x, y)| (x ^ y).count_ones()).sum();
    Ok(1.0 - diff as f64 / a.dim as f64)
}

pub fn quantize_sign(v: &Hypervector) -> Result<BinaryHypervector> {
    if v.repr == Repr::Phase {
        return Err(Error::UnsupportedRepr("sign quantization of a phase vector".into()));
    }
    quantize_slice(&v.data)
}

pub(crate) fn quantize_slice(v: &[f64]) -> Result<BinaryHypervector> {
    let bits: Vec<bool> = v.iter().map(|&x| x > 0.0).collect();
    BinaryHypervector::from_bits(&bits)
}
