//! Graph memories: GrapHD (a whole graph in one hypervector, reconstructed by
//! self-binding) and RelHD (per-node identity, 1-hop and 2-hop components bound
//! to orthogonal role vectors) for node classification.
//!
//! Under a distortion spec, node hypervectors are stored through `f`; graph
//! memories, relation vectors and prototypes are built from the stored values
//! and compared with the hardware search Ψ.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, Axis};
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{self, BatchSource, KernelMatrix, Model, OptimizeConfig, Trainable};
use crate::classify::{self, Evaluation};
use crate::encoder::{self, Activation, EncoderParams, Pipeline};
use crate::error::{Error, Result};
use crate::hv::{self, Hypervector, Repr};
use crate::hw::{self, Calibration, DistortionSpec, Family};
use crate::seed::{self, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct GraphSpec {
    pub n_nodes: usize,
    /// Unordered pairs stored as `(min, max)`.
    pub edges: BTreeSet<(usize, usize)>,
    pub features: Option<Array2<f64>>,
    pub labels: Option<Vec<usize>>,
    pub n_classes: usize,
}

impl GraphSpec {
    pub fn new(n_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n_nodes || j >= n_nodes {
                return Err(Error::InvalidDataset(format!("edge ({i}, {j}) outside {n_nodes} nodes")));
            }
            if i == j {
                return Err(Error::InvalidDataset(format!("self-loop at node {i}")));
            }
            if !set.insert((i.min(j), i.max(j))) {
                return Err(Error::InvalidDataset(format!("duplicate edge ({i}, {j})")));
            }
        }
        Ok(GraphSpec { n_nodes, edges: set, features: None, labels: None, n_classes: 0 })
    }

    pub fn with_features(mut self, features: Array2<f64>) -> Result<Self> {
        if features.nrows() != self.n_nodes {
            return Err(Error::InvalidDataset(format!("{} feature rows for {} nodes", features.nrows(), self.n_nodes)));
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if labels.len() != self.n_nodes {
            return Err(Error::InvalidDataset(format!("{} labels for {} nodes", labels.len(), self.n_nodes)));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidDataset(format!("label {l} outside [0, {n_classes})")));
        }
        self.labels = Some(labels);
        self.n_classes = n_classes;
        Ok(self)
    }

    /// Sorted adjacency lists.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj.iter_mut().for_each(|a| a.sort_unstable());
        adj
    }

    pub fn n_pairs(&self) -> usize {
        self.n_nodes * self.n_nodes.saturating_sub(1) / 2
    }

    /// Same graph with node `i` renamed to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let edges = self.edges.iter().map(|&(i, j)| (perm[i], perm[j]));
        let mut g = GraphSpec::new(self.n_nodes, edges)?;
        if let Some(f) = &self.features {
            let mut out = f.clone();
            for (i, &p) in perm.iter().enumerate() {
                out.row_mut(p).assign(&f.row(i));
            }
            g = g.with_features(out)?;
        }
        if let Some(l) = &self.labels {
            let mut out = l.clone();
            for (i, &p) in perm.iter().enumerate() {
                out[p] = l[i];
            }
            g = g.with_labels(out, self.n_classes)?;
        }
        Ok(g)
    }
}

fn real_rows(g: &GraphSpec, node_hvs: &[Hypervector]) -> Result<Array2<f64>> {
    if node_hvs.len() != g.n_nodes {
        return Err(Error::Incompatible(format!("{} node vectors for {} nodes", node_hvs.len(), g.n_nodes)));
    }
    rows_of(node_hvs)
}

fn rows_of(vs: &[Hypervector]) -> Result<Array2<f64>> {
    let first = vs.first().ok_or(Error::EmptyInput("no node vectors"))?;
    let d = first.dim();
    let mut out = Array2::zeros((vs.len(), d));
    for (i, v) in vs.iter().enumerate() {
        if v.repr() == Repr::Phase {
            return Err(Error::UnsupportedRepr("graph memories need real-valued node vectors".into()));
        }
        if v.dim() != d {
            return Err(Error::Incompatible(format!("node vector {i} has dim {}, expected {d}", v.dim())));
        }
        out.row_mut(i).assign(&Array1::from(v.data().to_vec()));
    }
    Ok(out)
}

fn to_vectors(rows: &Array2<f64>) -> Result<Vec<Hypervector>> {
    rows.rows().into_iter().map(|r| Hypervector::dense(r.to_vec())).collect()
}

/// Sum over neighbors of every node: row `k` is `Σ_{j~k} rows[j]`.
fn neighbor_sums(adj: &[Vec<usize>], rows: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(rows.dim());
    for (k, nbrs) in adj.iter().enumerate() {
        let mut acc = out.row_mut(k);
        for &j in nbrs {
            acc += &rows.row(j);
        }
    }
    out
}

fn memory_of(g: &GraphSpec, h: &Array2<f64>) -> Array1<f64> {
    let m = neighbor_sums(&g.neighbors(), h);
    (h * &m).sum_axis(Axis(0)) * 0.5
}

/// `G = ½ Σ_i H_i ∘ M_i` with `M_i` the unnormalized bundle of i's neighbors.
pub fn graphd_encode(g: &GraphSpec, node_hvs: &[Hypervector]) -> Result<Hypervector> {
    let h = real_rows(g, node_hvs)?;
    Hypervector::dense(memory_of(g, &h).to_vec())
}

/// `H_i ∘ G`: approximately the neighbor bundle of node i.
pub fn graphd_node_memory(memory: &Hypervector, node: &Hypervector) -> Result<Hypervector> {
    hv::hadamard(node, memory)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase")]
pub enum ThresholdPolicy {
    /// Split at the largest gap of the sorted scores; `fallback` when that gap is below `min_gap`.
    Bimodal { min_gap: f64, fallback: f64 },
    Fixed { value: f64 },
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::Bimodal { min_gap: 0.05, fallback: 0.5 }
    }
}

impl ThresholdPolicy {
    pub fn threshold(&self, scores: &[f64]) -> f64 {
        match *self {
            ThresholdPolicy::Fixed { value } => value,
            ThresholdPolicy::Bimodal { min_gap, fallback } => {
                let mut sorted = scores.to_vec();
                sorted.sort_by(f64::total_cmp);
                let best = sorted
                    .windows(2)
                    .map(|w| (w[1] - w[0], 0.5 * (w[0] + w[1])))
                    .max_by(|a, b| a.0.total_cmp(&b.0));
                match best {
                    Some((gap, mid)) if gap >= min_gap => mid,
                    _ => fallback,
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub edges: BTreeSet<(usize, usize)>,
    /// `scores[[i, j]]` is Ψ(M̂_i, H_j).
    pub scores: Array2<f64>,
    pub threshold: f64,
}

/// Decode a graph memory against stored node vectors. A pair is an edge when
/// either directed score exceeds the threshold.
pub fn graphd_reconstruct(
    memory: &Hypervector,
    stored: &[Hypervector],
    spec: &DistortionSpec,
    policy: ThresholdPolicy,
    rng: &mut Rng,
) -> Result<Reconstruction> {
    let h = rows_of(stored)?;
    let n = h.nrows();
    if memory.dim() != h.ncols() {
        return Err(Error::Incompatible(format!("memory dim {} vs node dim {}", memory.dim(), h.ncols())));
    }
    let g = Array1::from(memory.data().to_vec());
    let recovered = &h * &g.view().insert_axis(Axis(0));
    let mut scores = Array2::zeros((n, n));
    for i in 0..n {
        let mi = recovered.row(i);
        if mi.iter().all(|&v| v == 0.0) {
            // nothing stored for this node; it cannot vote for any edge
            scores.row_mut(i).fill(f64::NEG_INFINITY);
            continue;
        }
        for j in 0..n {
            if i != j {
                let hj = h.row(j);
                scores[[i, j]] =
                    hw::search_slices(mi.as_slice().unwrap(), hj.as_slice().unwrap(), spec, Calibration::default(), rng)?;
            }
        }
    }
    let mut pair_scores = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            pair_scores.push(scores[[i, j]].max(scores[[j, i]]));
        }
    }
    let finite: Vec<f64> = pair_scores.iter().copied().filter(|v| v.is_finite()).collect();
    let threshold = policy.threshold(&finite);
    let mut edges = BTreeSet::new();
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            if pair_scores[k] > threshold {
                edges.insert((i, j));
            }
            k += 1;
        }
    }
    Ok(Reconstruction { edges, scores, threshold })
}

/// Store node vectors through the hardware, build the memory from the stored
/// values and decode it.
pub fn reconstruct_graph(
    g: &GraphSpec,
    node_hvs: &[Hypervector],
    spec: &DistortionSpec,
    policy: ThresholdPolicy,
    rng: &mut Rng,
) -> Result<Reconstruction> {
    let stored = store_all(node_hvs, spec, rng)?;
    let memory = graphd_encode(g, &stored)?;
    graphd_reconstruct(&memory, &stored, spec, policy, rng)
}

fn store_all(vs: &[Hypervector], spec: &DistortionSpec, rng: &mut Rng) -> Result<Vec<Hypervector>> {
    vs.iter().map(|v| hw::distort(v, spec, rng)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub edge_density: f64,
}

pub fn edge_metrics(truth: &GraphSpec, predicted: &BTreeSet<(usize, usize)>) -> EdgeMetrics {
    let tp = predicted.intersection(&truth.edges).count() as f64;
    let precision = if predicted.is_empty() {
        if truth.edges.is_empty() { 1.0 } else { 0.0 }
    } else {
        tp / predicted.len() as f64
    };
    let recall = if truth.edges.is_empty() { 1.0 } else { tp / truth.edges.len() as f64 };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    let pairs = truth.n_pairs().max(1) as f64;
    EdgeMetrics { precision, recall, f1, edge_density: predicted.len() as f64 / pairs }
}

pub const HISTOGRAM_BINS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub centers: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
}

/// Hardware similarities of all pairs `i < j`, binned over `[-1, 1]`.
/// Out-of-range values (possible with output noise) land in the end bins.
pub fn similarity_distribution(node_hvs: &[Hypervector], spec: &DistortionSpec, rng: &mut Rng) -> Result<Histogram> {
    if node_hvs.len() < 2 {
        return Err(Error::EmptyInput("similarity distribution needs at least 2 nodes"));
    }
    let mut values = Vec::new();
    for i in 0..node_hvs.len() {
        for j in i + 1..node_hvs.len() {
            values.push(hw::hw_similarity(&node_hvs[i], &node_hvs[j], spec, rng)?);
        }
    }
    let width = 2.0 / HISTOGRAM_BINS as f64;
    let mut counts = vec![0; HISTOGRAM_BINS];
    for &v in &values {
        let b = ((v + 1.0) / width).floor().clamp(0.0, (HISTOGRAM_BINS - 1) as f64) as usize;
        counts[b] += 1;
    }
    let centers = (0..HISTOGRAM_BINS).map(|b| -1.0 + width * (b as f64 + 0.5)).collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(Histogram { centers, counts, mean })
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeVectors {
    pub vectors: Vec<Hypervector>,
    /// Shared write levels for the positive and negative components.
    pub levels: (f64, f64),
    pub trace: Vec<f64>,
}

/// Learn node vectors whose hardware similarities match the identity matrix.
/// Descent runs on a real relaxation initialized from random bipolar vectors;
/// the result keeps the learned sign pattern and writes each sign at one
/// shared level (the mean learned value of that sign).
pub fn optimize_node_vectors(n_nodes: usize, dim: usize, spec: &DistortionSpec, cfg: &OptimizeConfig) -> Result<NodeVectors> {
    if n_nodes < 2 {
        return Err(Error::param("n_nodes", "need at least 2 nodes"));
    }
    let init = random_bipolar_rows(n_nodes, dim, cfg.seed)?;
    let params = EncoderParams::new(init, Activation::None)?;
    let eye = Array2::eye(n_nodes);
    let target = KernelMatrix::identity(n_nodes);
    let mut source = calibrate::FullBatch { x: eye.view(), target: &target };
    let (model, trace) = calibrate::optimize_model(
        Model::new(params),
        &mut source,
        spec,
        Pipeline::EncodeAndSearch,
        Trainable::Encoder,
        cfg,
    )?;
    let w = model.encoder.weights;
    let mean_of = |pick: fn(f64) -> bool| {
        let (sum, count) = w.iter().filter(|&&v| pick(v)).fold((0.0, 0usize), |(s, c), &v| (s + v, c + 1));
        if count == 0 { 0.0 } else { sum / count as f64 }
    };
    let levels = (mean_of(|v| v > 0.0), mean_of(|v| v <= 0.0));
    let projected = w.mapv(|v| if v > 0.0 { levels.0 } else { levels.1 });
    Ok(NodeVectors { vectors: to_vectors(&projected)?, levels, trace })
}

fn random_bipolar_rows(n: usize, dim: usize, seed: u64) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((n, dim));
    for i in 0..n {
        let v = hv::random_bipolar(dim, seed::derive(seed, i as u64))?;
        out.row_mut(i).assign(&Array1::from(v.into_data()));
    }
    Ok(out)
}

pub fn random_node_vectors(n: usize, dim: usize, seed: u64) -> Result<Vec<Hypervector>> {
    (0..n).map(|i| hv::random_bipolar(dim, seed::derive(seed, i as u64))).collect()
}

/// Role vectors ω0, ω1, ω2 for identity, 1-hop and 2-hop components.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationContext {
    pub omega: [Hypervector; 3],
}

impl RelationContext {
    /// Draws until the three roles are pairwise quasi-orthogonal.
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        let bound = 4.0 / (dim as f64).sqrt();
        for attempt in 0..64u64 {
            let s = seed::derive(seed, attempt);
            let omega = [
                hv::random_bipolar(dim, seed::derive(s, 0))?,
                hv::random_bipolar(dim, seed::derive(s, 1))?,
                hv::random_bipolar(dim, seed::derive(s, 2))?,
            ];
            let ok = [(0, 1), (0, 2), (1, 2)]
                .iter()
                .all(|&(a, b)| hv::cosine_sim(&omega[a], &omega[b]).is_ok_and(|c| c.abs() < bound));
            if ok {
                return Ok(RelationContext { omega });
            }
        }
        Err(Error::InvalidDimension(format!("no quasi-orthogonal roles found at dim {dim}")))
    }

    pub fn dim(&self) -> usize {
        self.omega[0].dim()
    }

    fn rows(&self) -> [Array1<f64>; 3] {
        self.omega.clone().map(|w| Array1::from(w.into_data()))
    }
}

/// `M1_k = Σ_{j~k} H_j` and `M2_k = Σ_{j~k} M1_j`.
pub fn relhd_neighbors(g: &GraphSpec, node_hvs: &[Hypervector]) -> Result<(Vec<Hypervector>, Vec<Hypervector>)> {
    let h = real_rows(g, node_hvs)?;
    let adj = g.neighbors();
    let m1 = neighbor_sums(&adj, &h);
    let m2 = neighbor_sums(&adj, &m1);
    Ok((to_vectors(&m1)?, to_vectors(&m2)?))
}

fn relation_rows(adj: &[Vec<usize>], h: &Array2<f64>, ctx: &RelationContext) -> Result<Array2<f64>> {
    if h.ncols() != ctx.dim() {
        return Err(Error::Incompatible(format!("node dim {} vs role dim {}", h.ncols(), ctx.dim())));
    }
    let m1 = neighbor_sums(adj, h);
    let m2 = neighbor_sums(adj, &m1);
    let [w0, w1, w2] = ctx.rows();
    let b = |m: &Array2<f64>, w: &Array1<f64>| m * &w.view().insert_axis(Axis(0));
    Ok(b(h, &w0) + b(&m1, &w1) + b(&m2, &w2))
}

/// `I_k = H_k ∘ ω0 + M1_k ∘ ω1 + M2_k ∘ ω2`.
pub fn relhd_encode(g: &GraphSpec, node_hvs: &[Hypervector], ctx: &RelationContext) -> Result<Vec<Hypervector>> {
    let h = real_rows(g, node_hvs)?;
    to_vectors(&relation_rows(&g.neighbors(), &h, ctx)?)
}

fn graph_parts(g: &GraphSpec) -> Result<(&Array2<f64>, &[usize])> {
    let f = g.features.as_ref().ok_or_else(|| Error::InvalidDataset("graph has no node features".into()))?;
    let l = g.labels.as_deref().ok_or_else(|| Error::InvalidDataset("graph has no labels".into()))?;
    Ok((f, l))
}

/// Test accuracy of one RelHD pass: stored node encodings, relation vectors,
/// class prototypes bundled from training nodes, hardware search for test nodes.
pub fn relhd_accuracy(
    g: &GraphSpec,
    params: &EncoderParams,
    spec: &DistortionSpec,
    ctx: &RelationContext,
    train_mask: &[bool],
    test_mask: &[bool],
    rng: &mut Rng,
) -> Result<f64> {
    let (features, labels) = graph_parts(g)?;
    check_masks(g, train_mask, test_mask)?;
    let h = encoder::encode_rows_hw(features.view(), params, spec, rng)?;
    let rel = relation_rows(&g.neighbors(), &h, ctx)?;
    let mut protos = Array2::zeros((g.n_classes, rel.ncols()));
    for (k, &l) in labels.iter().enumerate() {
        if train_mask[k] {
            protos.row_mut(l).scaled_add(1.0, &rel.row(k));
        }
    }
    let live: Vec<bool> = protos.rows().into_iter().map(|r| r.iter().any(|&v| v != 0.0)).collect();
    let (mut correct, mut total) = (0usize, 0usize);
    for k in (0..g.n_nodes).filter(|&k| test_mask[k]) {
        let q = rel.row(k);
        total += 1;
        if q.iter().all(|&v| v == 0.0) {
            continue;
        }
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for c in (0..g.n_classes).filter(|&c| live[c]) {
            let p = protos.row(c);
            let s = hw::search_slices(q.as_slice().unwrap(), p.as_slice().unwrap(), spec, Calibration::default(), rng)?;
            if s > best.1 {
                best = (c, s);
            }
        }
        if best.0 == labels[k] {
            correct += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyInput("no test nodes"));
    }
    Ok(correct as f64 / total as f64)
}

fn check_masks(g: &GraphSpec, train: &[bool], test: &[bool]) -> Result<()> {
    if train.len() != g.n_nodes || test.len() != g.n_nodes {
        return Err(Error::InvalidDataset("mask length differs from node count".into()));
    }
    if train.iter().zip(test).any(|(a, b)| *a && *b) {
        return Err(Error::InvalidDataset("train and test masks overlap".into()));
    }
    Ok(())
}

/// Mini-batches mixing labeled training nodes (label-kernel targets) with
/// random nodes that should stay quasi-orthogonal to everything else.
pub struct RelationBatches<'a> {
    pub features: &'a Array2<f64>,
    pub labels: &'a [usize],
    pub train: Vec<usize>,
    pub labeled: usize,
    pub random: usize,
}

impl BatchSource for RelationBatches<'_> {
    fn next_batch(&mut self, rng: &mut Rng) -> Result<(Array2<f64>, KernelMatrix)> {
        let n = self.features.nrows();
        let mut rows: Vec<usize> = index::sample(rng, self.train.len(), self.labeled.min(self.train.len()))
            .into_iter()
            .map(|i| self.train[i])
            .collect();
        let n_labeled = rows.len();
        let chosen: BTreeSet<usize> = rows.iter().copied().collect();
        for i in index::sample(rng, n, self.random.min(n)) {
            if !chosen.contains(&i) {
                rows.push(i);
            }
        }
        let m = rows.len();
        let target = Array2::from_shape_fn((m, m), |(a, b)| {
            if a == b {
                1.0
            } else if a < n_labeled && b < n_labeled {
                (self.labels[rows[a]] == self.labels[rows[b]]) as u8 as f64
            } else {
                0.0
            }
        });
        Ok((self.features.select(Axis(0), &rows), KernelMatrix::new(target)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelhdCalibration {
    pub labeled: usize,
    pub random: usize,
    pub opt: OptimizeConfig,
}

impl RelhdCalibration {
    /// Under a saturating preset the stored encodings start almost parallel and
    /// the per-entry gradient shrinks with D; the step grows with D so descent
    /// escapes the collapsed start in a few hundred steps.
    pub fn for_dim(dim: usize) -> Self {
        RelhdCalibration {
            labeled: 64,
            random: 64,
            opt: OptimizeConfig { step_size: dim as f64 / 512.0, iterations: 300, ..OptimizeConfig::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelhdConfig {
    pub dim: usize,
    pub spec: DistortionSpec,
    pub optimized: bool,
    pub repeats: usize,
    pub seed: u64,
    pub calibration: RelhdCalibration,
}

impl RelhdConfig {
    pub fn new(dim: usize, spec: DistortionSpec, optimized: bool) -> Self {
        RelhdConfig { dim, spec, optimized, calibration: RelhdCalibration::for_dim(dim), ..Self::default() }
    }
}

impl Default for RelhdConfig {
    fn default() -> Self {
        RelhdConfig {
            dim: 2048,
            spec: DistortionSpec::identity(),
            optimized: false,
            repeats: 10,
            seed: 0,
            calibration: RelhdCalibration::for_dim(2048),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelhdOutcome {
    pub evaluation: Evaluation,
    pub repeat_seeds: Vec<u64>,
}

pub fn calibrate_relation_encoder(
    g: &GraphSpec,
    params: &EncoderParams,
    spec: &DistortionSpec,
    train_mask: &[bool],
    cal: &RelhdCalibration,
) -> Result<(EncoderParams, Vec<f64>)> {
    let (features, labels) = graph_parts(g)?;
    let train: Vec<usize> = (0..g.n_nodes).filter(|&k| train_mask[k]).collect();
    if train.is_empty() {
        return Err(Error::InvalidDataset("no training nodes".into()));
    }
    let mut source = RelationBatches { features, labels, train, labeled: cal.labeled, random: cal.random };
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

/// Repeated RelHD node classification; each repeat draws its own encoder and
/// role vectors (and calibrates the encoder when `optimized`).
pub fn relhd_classify(g: &GraphSpec, train_mask: &[bool], test_mask: &[bool], cfg: &RelhdConfig) -> Result<RelhdOutcome> {
    cfg.spec.validate()?;
    let (features, _) = graph_parts(g)?;
    check_masks(g, train_mask, test_mask)?;
    if cfg.repeats == 0 {
        return Err(Error::param("repeats", "must be at least 1"));
    }
    let seeds = classify::repeat_seeds(cfg.seed, cfg.repeats);
    let per_repeat = seeds
        .par_iter()
        .map(|&s| {
            let mut params = encoder::random_projection_params(features.ncols(), cfg.dim, seed::derive(s, 1))?;
            if cfg.optimized {
                let cal = RelhdCalibration {
                    opt: OptimizeConfig { seed: seed::derive(s, 2), ..cfg.calibration.opt.clone() },
                    ..cfg.calibration.clone()
                };
                params = calibrate_relation_encoder(g, &params, &cfg.spec, train_mask, &cal)?.0;
            }
            let ctx = RelationContext::new(cfg.dim, seed::derive(s, 3))?;
            relhd_accuracy(g, &params, &cfg.spec, &ctx, train_mask, test_mask, &mut seed::rng(seed::derive(s, 4)))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(RelhdOutcome { evaluation: Evaluation::from_repeats(per_repeat), repeat_seeds: seeds })
}

/// Storage preset used for graph experiments: a saturating cell with a
/// threshold offset, so naive bipolar vectors collapse toward one level.
pub fn graph_hw_preset() -> DistortionSpec {
    DistortionSpec::new(Family::Tanh, 2.0).unwrap().with_shift(1.5)
}

/// Descent settings for [`optimize_node_vectors`]; per-entry gradients scale
/// like 1/D, hence the large step.
pub fn node_vector_opt(seed: u64) -> OptimizeConfig {
    OptimizeConfig { step_size: 20.0, iterations: 600, seed, ..OptimizeConfig::default() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data;

    fn bip(v: &[f64]) -> Hypervector {
        Hypervector::bipolar(v.to_vec()).unwrap()
    }

    #[test]
    fn graph_spec_invariants() {
        assert!(GraphSpec::new(3, [(0, 3)]).is_err());
        assert!(GraphSpec::new(3, [(1, 1)]).is_err());
        assert!(GraphSpec::new(3, [(0, 1), (1, 0)]).is_err());
        let g = GraphSpec::new(3, [(2, 0)]).unwrap();
        assert!(g.edges.contains(&(0, 2)));
    }

    #[test]
    fn single_edge_memory() {
        let g = GraphSpec::new(2, [(0, 1)]).unwrap();
        let h = [bip(&[1., -1., 1., 1.]), bip(&[-1., -1., 1., -1.])];
        let mem = graphd_encode(&g, &h).unwrap();
        assert_eq!(mem.data(), &[-1., 1., 1., -1.]);
        assert_eq!(graphd_node_memory(&mem, &h[0]).unwrap().data(), h[1].data());
        let empty = GraphSpec::new(2, []).unwrap();
        assert!(graphd_encode(&empty, &h).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn path_and_star_neighbors() {
        let h = random_node_vectors(3, 16, 1).unwrap();
        let g = GraphSpec::new(3, [(0, 1), (1, 2)]).unwrap();
        let (m1, m2) = relhd_neighbors(&g, &h).unwrap();
        let sum: Vec<f64> = h[0].data().iter().zip(h[2].data()).map(|(a, b)| a + b).collect();
        assert_eq!(m1[1].data(), &sum[..]);
        let twice: Vec<f64> = h[1].data().iter().map(|v| 2.0 * v).collect();
        assert_eq!(m2[1].data(), &twice[..]);

        let h = random_node_vectors(5, 16, 2).unwrap();
        let star = GraphSpec::new(5, [(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        let (_, m2) = relhd_neighbors(&star, &h).unwrap();
        let four: Vec<f64> = h[0].data().iter().map(|v| 4.0 * v).collect();
        assert_eq!(m2[0].data(), &four[..]);
        let iso = GraphSpec::new(2, []).unwrap();
        let (m1, m2) = relhd_neighbors(&iso, &h[..2]).unwrap();
        assert!(m1.iter().chain(&m2).all(|v| v.data().iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn edgeless_relation_is_identity_binding() {
        let h = random_node_vectors(3, 64, 3).unwrap();
        let ctx = RelationContext::new(64, 1).unwrap();
        let g = GraphSpec::new(3, []).unwrap();
        let rel = relhd_encode(&g, &h, &ctx).unwrap();
        for (r, v) in rel.iter().zip(&h) {
            assert_eq!(r.data(), hv::bind(v, &ctx.omega[0]).unwrap().data());
        }
    }

    #[test]
    fn relation_is_linear() {
        let g = data::gen_random_graph(8, 10, 1).unwrap();
        let h = random_node_vectors(8, 64, 4).unwrap();
        let ctx = RelationContext::new(64, 2).unwrap();
        let doubled: Vec<Hypervector> = h.iter().map(|v| v.scaled(2.0).unwrap()).collect();
        let a = relhd_encode(&g, &h, &ctx).unwrap();
        let b = relhd_encode(&g, &doubled, &ctx).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(x.data().iter().zip(y.data()).all(|(p, q)| (2.0 * p - q).abs() < 1e-12));
        }
    }

    #[test]
    fn bimodal_threshold() {
        let p = ThresholdPolicy::default();
        assert!((p.threshold(&[0.0, 0.1, 0.05, 0.9, 1.0]) - 0.5).abs() < 1e-12);
        assert_eq!(p.threshold(&[0.90, 0.92, 0.93]), 0.5);
        assert_eq!(ThresholdPolicy::Fixed { value: 0.3 }.threshold(&[0.0, 1.0]), 0.3);
    }

    #[test]
    fn identity_reconstruction_is_exact() {
        let g = data::gen_random_graph(20, 10, 3).unwrap();
        let h = random_node_vectors(20, 2048, 9).unwrap();
        let r = reconstruct_graph(&g, &h, &DistortionSpec::identity(), ThresholdPolicy::default(), &mut seed::rng(0)).unwrap();
        assert_eq!(edge_metrics(&g, &r.edges).f1, 1.0);
    }

    #[test]
    fn metrics_examples() {
        let g = GraphSpec::new(4, [(0, 1), (2, 3)]).unwrap();
        let pred: BTreeSet<_> = [(0, 1), (1, 2)].into_iter().collect();
        let m = edge_metrics(&g, &pred);
        assert_eq!((m.precision, m.recall, m.f1), (0.5, 0.5, 0.5));
        assert!((m.edge_density - 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_counts_every_pair() {
        let h = random_node_vectors(10, 256, 1).unwrap();
        let hist = similarity_distribution(&h, &DistortionSpec::identity(), &mut seed::rng(0)).unwrap();
        assert_eq!(hist.counts.iter().sum::<usize>(), 45);
        assert_eq!(hist.centers.len(), HISTOGRAM_BINS);
        assert!(similarity_distribution(&h[..1], &DistortionSpec::identity(), &mut seed::rng(0)).is_err());
    }

    #[test]
    fn permuted_graph_permutes_relations() {
        let g = data::gen_random_graph(6, 7, 2).unwrap();
        let h = random_node_vectors(6, 32, 1).unwrap();
        let ctx = RelationContext::new(32, 5).unwrap();
        let perm = [3, 0, 5, 1, 4, 2];
        let pg = g.permuted(&perm).unwrap();
        let mut ph = h.clone();
        for (i, &p) in perm.iter().enumerate() {
            ph[p] = h[i].clone();
        }
        let a = relhd_encode(&g, &h, &ctx).unwrap();
        let b = relhd_encode(&pg, &ph, &ctx).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert_eq!(a[i], b[p]);
        }
        assert_eq!(graphd_encode(&g, &h).unwrap(), graphd_encode(&pg, &ph).unwrap());
    }

    #[test]
    fn relation_batches_target_shape() {
        let g = data::gen_labeled_graph(40, 4, 0.2, 0.01, 40, 5, 0.8, 1).unwrap();
        let (f, l) = graph_parts(&g).unwrap();
        let mut src = RelationBatches { features: f, labels: l, train: (0..12).collect(), labeled: 8, random: 8 };
        let (x, t) = src.next_batch(&mut seed::rng(3)).unwrap();
        assert_eq!(x.nrows(), t.n());
        assert!((0..t.n()).all(|i| t.get(i, i) == 1.0));
    }
}
