//! Synthetic graphs: stochastic block models, Erdős–Rényi graphs and toy
//! molecule collections.

use graphpae_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphCollection, TaskKind};
use crate::spectral::graph_basis;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    /// Random combinations of the lowest Laplacian eigenvectors plus small
    /// Gaussian noise.
    Smooth,
    /// One-hot block membership.
    BlockOneHot,
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth" => Ok(Self::Smooth),
            "block-onehot" => Ok(Self::BlockOneHot),
            _ => Err(Error::Argument(format!("unknown feature mode {s:?}"))),
        }
    }
}

/// Eigenvectors mixed into smooth features.
pub const SMOOTH_EIGVECS: usize = 5;
pub const SMOOTH_NOISE_STD: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct SbmConfig {
    pub block_sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub seed: u64,
    pub feature_mode: FeatureMode,
    /// Feature width in smooth mode.
    pub feature_dim: usize,
}

impl SbmConfig {
    pub fn new(block_sizes: Vec<usize>, p_in: f64, p_out: f64, seed: u64) -> Self {
        Self {
            block_sizes,
            p_in,
            p_out,
            seed,
            feature_mode: FeatureMode::Smooth,
            feature_dim: 16,
        }
    }

    pub fn with_features(mut self, mode: FeatureMode) -> Self {
        self.feature_mode = mode;
        self
    }
}

/// Expected number of stored directed edges of an SBM.
pub fn sbm_expected_directed_edges(block_sizes: &[usize], p_in: f64, p_out: f64) -> f64 {
    let mut total = 0.0;
    for (a, &na) in block_sizes.iter().enumerate() {
        for (b, &nb) in block_sizes.iter().enumerate() {
            let (na, nb) = (na as f64, nb as f64);
            total += if a == b {
                na * (na - 1.0) * p_in
            } else {
                na * nb * p_out
            };
        }
    }
    total
}

/// Samples an SBM; labels are block ids (one column).
pub fn make_sbm(cfg: &SbmConfig) -> Result<Graph> {
    for (name, p) in [("p_in", cfg.p_in), ("p_out", cfg.p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Argument(format!("{name} = {p} is not a probability")));
        }
    }
    if cfg.block_sizes.is_empty() {
        return Err(Error::Argument("at least one block is required".into()));
    }
    let block: Vec<usize> = cfg
        .block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &n)| std::iter::repeat_n(b, n))
        .collect();
    let n = block.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if block[i] == block[j] { cfg.p_in } else { cfg.p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let features = match cfg.feature_mode {
        FeatureMode::BlockOneHot => {
            let mut x = Tensor::zeros(n, cfg.block_sizes.len());
            for (i, &b) in block.iter().enumerate() {
                x.set(i, b, 1.0);
            }
            x
        }
        FeatureMode::Smooth => Tensor::zeros(n, cfg.feature_dim),
    };
    let (mut g, _) = Graph::from_edges(n, &edges, features)?;
    if cfg.feature_mode == FeatureMode::Smooth && n > 0 {
        let x = smooth_features(&g, cfg.feature_dim, &mut rng)?;
        g = g.with_features(x)?;
    }
    let labels = Tensor::column(block.iter().map(|&b| b as f64).collect());
    g.with_labels(labels)
}

/// `U₅ C + ε` with `C ~ N(0,1)` of shape `5×d` and `ε ~ N(0, 0.01²)`.
pub fn smooth_features(g: &Graph, d: usize, rng: &mut impl Rng) -> Result<Tensor> {
    let n = g.num_nodes();
    let basis = graph_basis(g, SMOOTH_EIGVECS.min(n), 0)?;
    let k = basis.k();
    let coef: Vec<f64> = (0..k * d).map(|_| rng.sample(StandardNormal)).collect();
    let coef = Tensor::from_vec(k, d, coef)?;
    let mut x = basis.vectors().matmul(&coef)?;
    let noise = Normal::new(0.0, SMOOTH_NOISE_STD).expect("valid noise std");
    for v in x.data_mut() {
        *v += noise.sample(rng);
    }
    Ok(x)
}

/// Erdős–Rényi `G(n, p)` with standard normal features of width `d`.
pub fn make_random_graph(n: usize, p: f64, d: usize, seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let x: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    Ok(Graph::from_edges(n, &edges, Tensor::from_vec(n, d, x)?)?.0)
}

pub const ATOM_TYPES: usize = 4;
pub const BOND_TYPES: usize = 3;

/// Small molecule-like graphs: a random tree of 5–14 atoms, closed into a
/// ring with probability ½. Atom types are one-hot features, bond types
/// are edge ids. Classification target: whether a ring exists.
/// Regression target: fraction of double bonds (type 1).
pub fn make_molecules(count: usize, task: TaskKind, seed: u64) -> Result<GraphCollection> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    for _ in 0..count {
        let n = rng.random_range(5..15);
        let mut edges = Vec::new();
        for v in 1..n {
            let parent = rng.random_range(0..v);
            edges.push((parent, v, rng.random_range(0..BOND_TYPES)));
        }
        let ring = rng.random::<f64>() < 0.5;
        if ring {
            edges.push((0, n - 1, 0));
        }
        let mut x = Tensor::zeros(n, ATOM_TYPES);
        for i in 0..n {
            x.set(i, rng.random_range(0..ATOM_TYPES), 1.0);
        }
        let (g, _) = Graph::from_typed_edges(n, &edges, x)?;
        let target = match task {
            TaskKind::GraphRegression => {
                let double = edges.iter().filter(|e| e.2 == 1).count();
                double as f64 / edges.len() as f64
            }
            _ => f64::from(u8::from(ring)),
        };
        graphs.push(g);
        targets.push(target);
    }
    GraphCollection::new(graphs, task)?.with_labels(Tensor::column(targets))
}
