//! Dataset loaders and seeded synthetic generators.
//!
//! File formats: ISOLET as the UCI comma-separated files, FMNIST as the four
//! IDX files (optionally gzipped), Cora as `cora.content` / `cora.cites`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::GraphSpec;
use crate::seed;

/// Environment variable naming the default dataset root.
pub const DATA_ENV: &str = "HDC_HWCAL_DATA";

pub const KERNEL_POINTS: usize = 20;
pub const KERNEL_FEATURES: usize = 30;

pub fn default_root() -> PathBuf {
    std::env::var_os(DATA_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub name: String,
    pub split: Split,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, name: &str, split: Split, n_classes: usize) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::InvalidDataset(format!("{name}: no rows")));
        }
        if features.nrows() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{name}: {} rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidDataset(format!("{name}: label {l} outside [0, {n_classes})")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("{name}: non-finite feature")));
        }
        Ok(Self { features, labels, name: name.to_string(), split, n_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn select(&self, rows: &[usize]) -> Result<Dataset> {
        let features = self.features.select(Axis(0), rows);
        let labels = rows.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(features, labels, &self.name, self.split, self.n_classes)
    }

    pub fn digest(&self) -> String {
        digest(&self.features, &self.labels)
    }
}

/// SHA-256 over the little-endian bytes of the features then the labels.
pub fn digest(features: &Array2<f64>, labels: &[usize]) -> String {
    let mut h = Sha256::new();
    h.update((features.nrows() as u64).to_le_bytes());
    h.update((features.ncols() as u64).to_le_bytes());
    for v in features.iter() {
        h.update(v.to_le_bytes());
    }
    for &l in labels {
        h.update((l as u64).to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub dims: usize,
    pub classes: usize,
    pub digest: String,
    pub skipped: usize,
}

impl IngestReport {
    pub fn of(ds: &Dataset) -> Self {
        IngestReport { rows: ds.len(), dims: ds.n_features(), classes: ds.n_classes, digest: ds.digest(), skipped: 0 }
    }
}

/// Per-feature min-max map onto `[-1, 1]`; constant features map to 0.
#[derive(Clone, Debug, PartialEq)]
pub struct MinMaxScaler {
    min: Array1<f64>,
    max: Array1<f64>,
}

impl MinMaxScaler {
    pub fn fit(x: &Array2<f64>) -> Self {
        let min = x.fold_axis(Axis(0), f64::INFINITY, |&a, &b| a.min(b));
        let max = x.fold_axis(Axis(0), f64::NEG_INFINITY, |&a, &b| a.max(b));
        MinMaxScaler { min, max }
    }

    /// Values outside the fitted range are clamped.
    pub fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                let (lo, hi) = (self.min[k], self.max[k]);
                *v = if hi > lo { (2.0 * (*v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0) } else { 0.0 };
            }
        }
        out
    }
}

pub fn gen_kernel_dataset(seed: u64) -> Array2<f64> {
    gen_kernel_dataset_n(KERNEL_POINTS, seed)
}

/// A drifting sequence: first row uniform on `[-1, 1]`, each later row adds a
/// `U(0, 0.1)` perturbation per coordinate.
pub fn gen_kernel_dataset_n(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = seed::rng(seed);
    let mut x = Array2::zeros((n, KERNEL_FEATURES));
    for k in 0..KERNEL_FEATURES {
        x[[0, k]] = rng.random_range(-1.0..1.0);
    }
    for i in 1..n {
        for k in 0..KERNEL_FEATURES {
            x[[i, k]] = x[[i - 1, k]] + rng.random_range(0.0..0.1);
        }
    }
    x
}

pub fn gen_random_graph(n_nodes: usize, n_edges: usize, seed: u64) -> Result<GraphSpec> {
    let max = n_nodes * n_nodes.saturating_sub(1) / 2;
    if n_edges > max {
        return Err(Error::param("n_edges", format!("{n_edges} edges exceed the {max} pairs of {n_nodes} nodes")));
    }
    let mut pairs: Vec<(usize, usize)> =
        (0..n_nodes).flat_map(|i| (i + 1..n_nodes).map(move |j| (i, j))).collect();
    let mut rng = seed::rng(seed);
    let (chosen, _) = pairs.partial_shuffle(&mut rng, n_edges);
    GraphSpec::new(n_nodes, chosen.iter().copied())
}

/// Gaussian blobs on a random sphere of centers, scaled to `[-1, 1]`.
pub fn gen_blobs(per_class: usize, n_classes: usize, n_features: usize, spread: f64, seed: u64) -> Result<Dataset> {
    let mut rng = seed::rng(seed);
    let noise = Normal::new(0.0, spread).map_err(|e| Error::param("spread", e.to_string()))?;
    let centers = Array2::from_shape_simple_fn((n_classes, n_features), || rng.random_range(-1.0..1.0));
    let mut x = Array2::zeros((per_class * n_classes, n_features));
    let mut labels = Vec::with_capacity(per_class * n_classes);
    for i in 0..per_class * n_classes {
        let c = i % n_classes;
        for k in 0..n_features {
            x[[i, k]] = centers[[c, k]] + noise.sample(&mut rng);
        }
        labels.push(c);
    }
    let x = MinMaxScaler::fit(&x).transform(&x);
    Dataset::new(x, labels, "blobs", Split::Train, n_classes)
}

/// Planted-partition graph with class-dependent binary bag-of-words features,
/// a stand-in for citation graphs.
#[allow(clippy::too_many_arguments)]
pub fn gen_labeled_graph(
    n_nodes: usize,
    n_classes: usize,
    p_in: f64,
    p_out: f64,
    n_features: usize,
    words_per_node: usize,
    topic_purity: f64,
    seed: u64,
) -> Result<GraphSpec> {
    if n_classes == 0 || n_features < n_classes {
        return Err(Error::param("n_classes", "need 1 <= classes <= features"));
    }
    let mut rng = seed::rng(seed);
    let labels: Vec<usize> = (0..n_nodes).map(|i| i % n_classes).collect();
    let mut edges = Vec::new();
    for i in 0..n_nodes {
        for j in i + 1..n_nodes {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let block = n_features / n_classes;
    let mut features = Array2::zeros((n_nodes, n_features));
    for i in 0..n_nodes {
        for _ in 0..words_per_node {
            let w = if rng.random::<f64>() < topic_purity {
                labels[i] * block + rng.random_range(0..block)
            } else {
                rng.random_range(0..n_features)
            };
            features[[i, w]] = 1.0;
        }
    }
    GraphSpec::new(n_nodes, edges)?.with_features(features)?.with_labels(labels, n_classes)
}

/// Stratified subsample of `n` rows; per-class counts follow the class
/// proportions within one row. Selected rows keep their original order.
pub fn stratified_subsample(ds: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || n > ds.len() {
        return Err(Error::param("data.subsample", format!("{n} rows requested from {}", ds.len())));
    }
    let counts = ds.class_counts();
    let total = ds.len() as f64;
    let exact: Vec<f64> = counts.iter().map(|&c| c as f64 * n as f64 / total).collect();
    let mut quota: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let short = n - quota.iter().sum::<usize>();
    for &c in order.iter().take(short) {
        quota[c] += 1;
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = seed::rng(seed);
    let mut rows = Vec::with_capacity(n);
    for (c, idx) in by_class.iter_mut().enumerate() {
        idx.shuffle(&mut rng);
        rows.extend_from_slice(&idx[..quota[c]]);
    }
    rows.sort_unstable();
    ds.select(&rows)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn missing(path: &Path) -> Error {
    Error::Io { path: path.to_path_buf(), source: io::Error::new(io::ErrorKind::NotFound, "dataset file not found") }
}

pub const ISOLET_FEATURES: usize = 617;
pub const ISOLET_CLASSES: usize = 26;

fn parse_isolet(path: &Path) -> Result<(Array2<f64>, Vec<usize>)> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse = |reason: String| Error::Parse { path: path.to_path_buf(), line: lineno + 1, reason };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != ISOLET_FEATURES + 1 {
            return Err(parse(format!("expected {} fields, found {}", ISOLET_FEATURES + 1, fields.len())));
        }
        for f in &fields[..ISOLET_FEATURES] {
            let v: f64 = f.parse().map_err(|_| parse(format!("bad number `{f}`")))?;
            if !v.is_finite() {
                return Err(parse(format!("non-finite value `{f}`")));
            }
            values.push(v);
        }
        let raw = fields[ISOLET_FEATURES];
        let label: f64 = raw.parse().map_err(|_| parse(format!("bad label `{raw}`")))?;
        if label.fract() != 0.0 || !(1.0..=ISOLET_CLASSES as f64).contains(&label) {
            return Err(parse(format!("label `{raw}` outside 1..={ISOLET_CLASSES}")));
        }
        labels.push(label as usize - 1);
    }
    let x = Array2::from_shape_vec((labels.len(), ISOLET_FEATURES), values)
        .map_err(|e| Error::Format { path: path.to_path_buf(), reason: e.to_string() })?;
    Ok((x, labels))
}

/// `isolet1+2+3+4.data` (train) and `isolet5.data` (test) under `dir`.
pub fn load_isolet(dir: &Path) -> Result<(Dataset, Dataset)> {
    let train_path = dir.join("isolet1+2+3+4.data");
    let test_path = dir.join("isolet5.data");
    for p in [&train_path, &test_path] {
        if !p.is_file() {
            return Err(missing(p));
        }
    }
    let (xtr, ytr) = parse_isolet(&train_path)?;
    let (xte, yte) = parse_isolet(&test_path)?;
    let scaler = MinMaxScaler::fit(&xtr);
    let train = Dataset::new(scaler.transform(&xtr), ytr, "isolet", Split::Train, ISOLET_CLASSES)?;
    let test = Dataset::new(scaler.transform(&xte), yte, "isolet", Split::Test, ISOLET_CLASSES)?;
    Ok((train, test))
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_maybe_gz(dir: &Path, name: &str) -> Result<(PathBuf, Vec<u8>)> {
    let plain = dir.join(name);
    let gz = dir.join(format!("{name}.gz"));
    let mut buf = Vec::new();
    if plain.is_file() {
        File::open(&plain).and_then(|mut f| f.read_to_end(&mut buf)).map_err(io_err(&plain))?;
        Ok((plain, buf))
    } else if gz.is_file() {
        let file = File::open(&gz).map_err(io_err(&gz))?;
        GzDecoder::new(BufReader::new(file)).read_to_end(&mut buf).map_err(io_err(&gz))?;
        Ok((gz, buf))
    } else {
        Err(missing(&plain))
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| truncated(path))
}

fn truncated(path: &Path) -> Error {
    Error::Io { path: path.to_path_buf(), source: io::Error::new(io::ErrorKind::UnexpectedEof, "truncated IDX payload") }
}

/// Parse IDX image bytes into an `n × rows·cols` matrix of raw pixel values.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Array2<f64>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format { path: path.to_path_buf(), reason: format!("bad image magic {magic}") });
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let len = n * rows * cols;
    let payload = bytes.get(16..16 + len).ok_or_else(|| truncated(path))?;
    let values = payload.iter().map(|&b| b as f64).collect();
    Ok(Array2::from_shape_vec((n, rows * cols), values).unwrap())
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format { path: path.to_path_buf(), reason: format!("bad label magic {magic}") });
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let payload = bytes.get(8..8 + n).ok_or_else(|| truncated(path))?;
    Ok(payload.iter().map(|&b| b as usize).collect())
}

pub const FMNIST_CLASSES: usize = 10;

fn fmnist_split(dir: &Path, prefix: &str, split: Split) -> Result<Dataset> {
    let (ipath, ibytes) = read_maybe_gz(dir, &format!("{prefix}-images-idx3-ubyte"))?;
    let (lpath, lbytes) = read_maybe_gz(dir, &format!("{prefix}-labels-idx1-ubyte"))?;
    let x = parse_idx_images(&ibytes, &ipath)?;
    let y = parse_idx_labels(&lbytes, &lpath)?;
    if x.nrows() != y.len() {
        return Err(Error::InvalidDataset(format!("{}: {} images, {} labels", dir.display(), x.nrows(), y.len())));
    }
    // pixels to [0, 1], then onto [-1, 1]
    let x = x.mapv(|p| p / 255.0 * 2.0 - 1.0);
    Dataset::new(x, y, "fmnist", split, FMNIST_CLASSES)
}

pub fn load_fmnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    Ok((fmnist_split(dir, "train", Split::Train)?, fmnist_split(dir, "t10k", Split::Test)?))
}

/// Cora as a labeled graph plus the bookkeeping of its ingestion.
#[derive(Clone, Debug)]
pub struct CoraGraph {
    pub graph: GraphSpec,
    pub paper_ids: Vec<String>,
    pub class_names: Vec<String>,
    pub skipped: usize,
}

impl CoraGraph {
    pub fn report(&self) -> IngestReport {
        let features = self.graph.features.as_ref().expect("cora has features");
        let labels = self.graph.labels.as_ref().expect("cora has labels");
        IngestReport {
            rows: self.graph.n_nodes,
            dims: features.ncols(),
            classes: self.class_names.len(),
            digest: digest(features, labels),
            skipped: self.skipped,
        }
    }
}

pub fn load_cora(dir: &Path) -> Result<CoraGraph> {
    let content = dir.join("cora.content");
    let cites = dir.join("cora.cites");
    for p in [&content, &cites] {
        if !p.is_file() {
            return Err(missing(p));
        }
    }
    let text = fs::read_to_string(&content).map_err(io_err(&content))?;
    let mut ids = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parse = |reason: String| Error::Parse { path: content.clone(), line: lineno + 1, reason };
        if fields.len() < 3 {
            return Err(parse("expected id, features and label".into()));
        }
        let feats = fields[1..fields.len() - 1]
            .iter()
            .map(|f| match *f {
                "0" => Ok(0.0),
                "1" => Ok(1.0),
                other => Err(parse(format!("non-binary feature `{other}`"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != feats.len() {
                return Err(parse(format!("{} features, expected {}", feats.len(), first.len())));
            }
        }
        ids.push(fields[0].to_string());
        rows.push(feats);
        raw_labels.push(fields[fields.len() - 1].to_string());
    }
    let class_names: Vec<String> = raw_labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let class_of: HashMap<&str, usize> = class_names.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|c| class_of[c.as_str()]).collect();
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();

    let text = fs::read_to_string(&cites).map_err(io_err(&cites))?;
    let mut edges = BTreeSet::new();
    let mut skipped = 0;
    for (lineno, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 2 {
            return Err(Error::Parse { path: cites.clone(), line: lineno + 1, reason: "expected two ids".into() });
        }
        match (index.get(fields[0]), index.get(fields[1])) {
            (Some(&a), Some(&b)) if a != b => {
                edges.insert((a.min(b), a.max(b)));
            }
            (Some(_), Some(_)) => {}
            _ => skipped += 1,
        }
    }
    let n = ids.len();
    let d = rows.first().map_or(0, Vec::len);
    let features = Array2::from_shape_vec((n, d), rows.concat()).unwrap();
    let graph = GraphSpec::new(n, edges)?.with_features(features)?.with_labels(labels, class_names.len())?;
    Ok(CoraGraph { graph, paper_ids: ids, class_names, skipped })
}

/// Conventional semi-supervised split: the first `per_class` nodes of each
/// class (file order) train; the last `n_test` remaining nodes test.
pub fn planetoid_split(graph: &GraphSpec, per_class: usize, n_test: usize) -> Result<(Vec<bool>, Vec<bool>)> {
    let labels = graph.labels.as_ref().ok_or_else(|| Error::InvalidDataset("graph has no labels".into()))?;
    let mut taken: BTreeMap<usize, usize> = BTreeMap::new();
    let mut train = vec![false; graph.n_nodes];
    for (i, &l) in labels.iter().enumerate() {
        let c = taken.entry(l).or_default();
        if *c < per_class {
            *c += 1;
            train[i] = true;
        }
    }
    let mut test = vec![false; graph.n_nodes];
    let mut left = n_test;
    for i in (0..graph.n_nodes).rev() {
        if left == 0 {
            break;
        }
        if !train[i] {
            test[i] = true;
            left -= 1;
        }
    }
    if left > 0 {
        return Err(Error::InvalidDataset(format!("only {} nodes available for testing", n_test - left)));
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn kernel_dataset_shape_and_drift() {
        let x = gen_kernel_dataset(4);
        assert_eq!(x.dim(), (20, 30));
        for i in 1..20 {
            for k in 0..30 {
                assert!(x[[i, k]] >= x[[i - 1, k]]);
            }
        }
        assert!(x.row(0).iter().all(|v| (-1.0..1.0).contains(v)));
        assert_eq!(x, gen_kernel_dataset(4));
    }

    #[test]
    fn kernel_dataset_end_to_end_distance() {
        // each coordinate drifts by a sum of 19 U(0, 0.1) draws, mean 0.95
        let mean: f64 = (0..50)
            .map(|s| {
                let x = gen_kernel_dataset(s);
                let d = &x.row(19) - &x.row(0);
                d.dot(&d).sqrt()
            })
            .sum::<f64>()
            / 50.0;
        let expected = 30f64.sqrt() * 19.0 * 0.05;
        assert!((mean - expected).abs() < 0.2 * expected, "{mean}");
    }

    #[test]
    fn random_graph_examples() {
        let g = gen_random_graph(20, 10, 1).unwrap();
        assert_eq!(g.edges.len(), 10);
        assert!(g.edges.iter().all(|&(i, j)| i < j));
        let tri = gen_random_graph(3, 3, 5).unwrap();
        assert_eq!(tri.edges.iter().copied().collect::<Vec<_>>(), vec![(0, 1), (0, 2), (1, 2)]);
        assert!(gen_random_graph(2, 0, 0).unwrap().edges.is_empty());
        assert!(gen_random_graph(3, 4, 0).is_err());
        assert_eq!(gen_random_graph(20, 10, 8).unwrap().edges, gen_random_graph(20, 10, 8).unwrap().edges);
    }

    #[test]
    fn scaler_bounds() {
        let x = ndarray::array![[1.0, 5.0, 2.0], [3.0, 5.0, -2.0], [2.0, 5.0, 0.0]];
        let s = MinMaxScaler::fit(&x).transform(&x);
        assert_eq!(s.column(0).to_vec(), vec![-1.0, 1.0, 0.0]);
        assert_eq!(s.column(1).to_vec(), vec![0.0, 0.0, 0.0]);
        assert_eq!(s.column(2).to_vec(), vec![1.0, -1.0, 0.0]);
    }

    #[test]
    fn subsample_keeps_proportions() {
        let labels: Vec<usize> = (0..1000).map(|i| if i % 10 < 7 { 0 } else if i % 10 < 9 { 1 } else { 2 }).collect();
        let x = Array2::zeros((1000, 2));
        let ds = Dataset::new(x, labels, "t", Split::Train, 3).unwrap();
        let sub = stratified_subsample(&ds, 101, 3).unwrap();
        let counts = sub.class_counts();
        assert_eq!(counts.iter().sum::<usize>(), 101);
        for (c, &frac) in [0.7, 0.2, 0.1].iter().enumerate() {
            assert!((counts[c] as f64 - 101.0 * frac).abs() <= 1.0, "{counts:?}");
        }
    }

    #[test]
    fn idx_roundtrip_and_errors() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        for v in [2u32, 2, 2] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        bytes.extend_from_slice(&[0, 255, 128, 1, 2, 3, 4, 5]);
        let p = Path::new("mem");
        let x = parse_idx_images(&bytes, p).unwrap();
        assert_eq!(x.dim(), (2, 4));
        assert_eq!(x[[0, 1]], 255.0);
        assert!(matches!(parse_idx_images(&bytes[..20], p), Err(Error::Io { .. })));
        let mut bad = bytes.clone();
        bad[3] = 1;
        assert!(matches!(parse_idx_images(&bad, p), Err(Error::Format { .. })));
        let mut lab = IDX_LABELS_MAGIC.to_be_bytes().to_vec();
        lab.extend_from_slice(&3u32.to_be_bytes());
        lab.extend_from_slice(&[4, 0, 9]);
        assert_eq!(parse_idx_labels(&lab, p).unwrap(), vec![4, 0, 9]);
    }

    #[test]
    fn isolet_parse_errors_carry_line_numbers() {
        let dir = std::env::temp_dir().join(format!("hwcal-isolet-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rows.data");
        let good: Vec<String> = (0..ISOLET_FEATURES).map(|k| format!("{:.4}", k as f64 / 1000.0)).collect();
        let mut f = File::create(&path).unwrap();
        writeln!(f, "{}, 3.", good.join(", ")).unwrap();
        writeln!(f, "{}, x", good.join(", ")).unwrap();
        drop(f);
        match parse_isolet(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn labeled_graph_is_valid() {
        let g = gen_labeled_graph(140, 7, 0.05, 0.002, 200, 12, 0.6, 1).unwrap();
        assert_eq!(g.labels.as_ref().unwrap().len(), 140);
        assert_eq!(g.features.as_ref().unwrap().dim(), (140, 200));
        let (train, test) = planetoid_split(&g, 5, 50).unwrap();
        assert_eq!(train.iter().filter(|&&t| t).count(), 35);
        assert_eq!(test.iter().filter(|&&t| t).count(), 50);
        assert!(train.iter().zip(&test).all(|(a, b)| !(a & b)));
    }
}
