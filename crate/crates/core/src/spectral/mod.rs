//! Laplacian spectra, eigenvector distances and band-averaged frequency
//! magnitudes.

mod eigen;
mod laplacian;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use graphpae_tensor::Tensor;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;

pub use eigen::{
    dense_symmetric_eigen, lanczos_smallest, tridiagonal_eigen, EigenPairs, LanczosOptions,
};
pub use laplacian::{normalized_laplacian, Laplacian};

/// Largest operator solved with the dense tridiagonal QL path under
/// [`EigenMethod::Auto`].
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum EigenMethod {
    #[default]
    Auto,
    Dense,
    Lanczos,
}

/// The `K` smallest eigenpairs of a normalized Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    eigenvalues: Vec<f64>,
    /// `N×K`, column `k` is the eigenvector of `eigenvalues[k]`.
    vectors: Tensor,
}

impl SpectralBasis {
    pub fn new(eigenvalues: Vec<f64>, vectors: Tensor) -> Result<Self> {
        if vectors.cols() != eigenvalues.len() {
            return Err(Error::Data(format!(
                "{} eigenvalues for {} eigenvector columns",
                eigenvalues.len(),
                vectors.cols()
            )));
        }
        Ok(Self {
            eigenvalues,
            vectors,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn vectors(&self) -> &Tensor {
        &self.vectors
    }

    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.vectors.rows()
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.num_nodes()).map(|i| self.vectors.get(i, k)).collect()
    }

    /// Negates eigenvector column `k`.
    pub fn flip_sign(&mut self, k: usize) {
        for i in 0..self.num_nodes() {
            let v = self.vectors.get(i, k);
            self.vectors.set(i, k, -v);
        }
    }

    /// Pads with zero columns (eigenvalue 0) up to `k` columns. Used to give
    /// small graphs in a batch a common width.
    pub fn padded(&self, k: usize) -> Self {
        if k <= self.k() {
            return self.clone();
        }
        let n = self.num_nodes();
        let mut v = Tensor::zeros(n, k);
        for i in 0..n {
            v.row_mut(i)[..self.k()].copy_from_slice(self.vectors.row(i));
        }
        let mut vals = self.eigenvalues.clone();
        vals.resize(k, 0.0);
        Self {
            eigenvalues: vals,
            vectors: v,
        }
    }

    /// Writes the `PAES` cache: magic, u16 version, u64 N, u64 K, then
    /// eigenvalues and row-major eigenvectors as little-endian f64.
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(BASIS_MAGIC)?;
        w.write_all(&BASIS_VERSION.to_le_bytes())?;
        w.write_all(&(self.num_nodes() as u64).to_le_bytes())?;
        w.write_all(&(self.k() as u64).to_le_bytes())?;
        for v in self.eigenvalues.iter().chain(self.vectors.data()) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let io = |e: std::io::Error| Error::Data(format!("truncated spectral cache: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != BASIS_MAGIC {
            return Err(Error::Data("not a PAES spectral cache".into()));
        }
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2).map_err(io)?;
        let version = u16::from_le_bytes(b2);
        if version != BASIS_VERSION {
            return Err(Error::Data(format!(
                "spectral cache version {version}, expected {BASIS_VERSION}"
            )));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(io)?;
        let n = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8).map_err(io)?;
        let k = u64::from_le_bytes(b8) as usize;
        let mut read_f64s = |count: usize| -> Result<Vec<f64>> {
            (0..count)
                .map(|_| {
                    r.read_exact(&mut b8).map_err(io)?;
                    Ok(f64::from_le_bytes(b8))
                })
                .collect()
        };
        let vals = read_f64s(k)?;
        let vecs = read_f64s(n * k)?;
        Self::new(vals, Tensor::from_vec(n, k, vecs)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(f))
    }
}

pub const BASIS_MAGIC: &[u8; 4] = b"PAES";
pub const BASIS_VERSION: u16 = 1;

/// Makes the entry of largest magnitude positive (first index on ties).
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Checks `‖L u − λ u‖₂` for every pair; returns the worst residual.
pub fn max_residual(l: &Laplacian, basis: &SpectralBasis) -> f64 {
    let n = l.dim();
    let mut y = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for k in 0..basis.k() {
        let u = basis.column(k);
        l.apply(&u, &mut y);
        let lam = basis.eigenvalues[k];
        let r: f64 = y
            .iter()
            .zip(&u)
            .map(|(a, b)| (a - lam * b).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(r);
    }
    worst
}

/// Residual bound every returned basis is checked against.
pub const RESIDUAL_TOL: f64 = 1e-6;

/// The `k` smallest eigenpairs of `l`, ascending, sign-normalized.
pub fn topk_eigenpairs(l: &Laplacian, k: usize, seed: u64) -> Result<SpectralBasis> {
    topk_eigenpairs_with(l, k, seed, EigenMethod::Auto)
}

pub fn topk_eigenpairs_with(
    l: &Laplacian,
    k: usize,
    seed: u64,
    method: EigenMethod,
) -> Result<SpectralBasis> {
    let n = l.dim();
    if k == 0 || k > n {
        return Err(Error::Argument(format!(
            "eigenpair count {k} must lie in 1..={n}"
        )));
    }
    let dense = match method {
        EigenMethod::Auto => n <= DENSE_LIMIT,
        EigenMethod::Dense => true,
        EigenMethod::Lanczos => false,
    };
    let pairs = if dense {
        let mut full = dense_symmetric_eigen(&l.to_dense(), n)?;
        full.values.truncate(k);
        full.vectors.truncate(k);
        full
    } else {
        lanczos_smallest(l, k, seed, LanczosOptions::default())?
    };
    let mut u = Tensor::zeros(n, k);
    let mut vals = Vec::with_capacity(k);
    for (c, (lam, mut v)) in pairs.values.into_iter().zip(pairs.vectors).enumerate() {
        fix_sign(&mut v);
        for (i, x) in v.into_iter().enumerate() {
            u.set(i, c, x);
        }
        vals.push(lam.max(0.0));
    }
    let basis = SpectralBasis::new(vals, u)?;
    let res = max_residual(l, &basis);
    if !(res <= RESIDUAL_TOL) {
        return Err(Error::NoConvergence {
            requested: k,
            converged: 0,
            residual: res,
        });
    }
    Ok(basis)
}

/// Convenience: Laplacian then eigenpairs, with `k` capped at `N`.
pub fn graph_basis(g: &Graph, k: usize, seed: u64) -> Result<SpectralBasis> {
    let l = normalized_laplacian(g);
    topk_eigenpairs(&l, k.min(g.num_nodes()).max(1), seed)
}

/// Per-stored-edge Euclidean distances between endpoint rows of `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    values: Vec<f64>,
}

impl DistanceMap {
    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Distance of stored edge `(i, j)`; 0 when absent.
    pub fn get(&self, g: &Graph, i: usize, j: usize) -> f64 {
        g.edge_id(i, j).map_or(0.0, |e| self.values[e])
    }

    /// Values as an `E×1` column.
    pub fn to_column(&self) -> Tensor {
        Tensor::column(self.values.clone())
    }
}

fn edge_distance(u: &Tensor, i: usize, j: usize) -> f64 {
    u.row(i)
        .iter()
        .zip(u.row(j))
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// `P_ij = ‖U_i − U_j‖₂` for every stored edge of `g`.
pub fn distances_from_positions(u: &Tensor, g: &Graph) -> Result<DistanceMap> {
    if u.rows() != g.num_nodes() {
        return Err(Error::Contract(format!(
            "positions have {} rows for a {}-node graph",
            u.rows(),
            g.num_nodes()
        )));
    }
    let values = g
        .sources()
        .iter()
        .zip(g.targets())
        .map(|(&i, &j)| edge_distance(u, i, j))
        .collect();
    Ok(DistanceMap { values })
}

pub fn relative_distances(basis: &SpectralBasis, g: &Graph) -> Result<DistanceMap> {
    distances_from_positions(&basis.vectors, g)
}

/// Adds i.i.d. `U(−μ, μ)` noise to every component of the rows in
/// `masked`; other rows are copied unchanged.
pub fn offset_positions<R: Rng + ?Sized>(
    basis: &SpectralBasis,
    masked: &[usize],
    mu: f64,
    rng: &mut R,
) -> Result<Tensor> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::Argument(format!("noise scale must be ≥ 0, got {mu}")));
    }
    let mut u = basis.vectors.clone();
    if mu == 0.0 {
        return Ok(u);
    }
    for &i in masked {
        if i >= u.rows() {
            return Err(Error::Range {
                what: "node",
                index: i,
                bound: u.rows(),
            });
        }
        for x in u.row_mut(i) {
            *x += rng.random_range(-mu..mu);
        }
    }
    Ok(u)
}

/// Mean spectral magnitude per frequency band; `None` marks a band that
/// contains no eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSpectrum {
    pub bands: Vec<(f64, f64)>,
    pub magnitude: Vec<Option<f64>>,
}

/// Contiguous bands of width `width` covering `[lo, hi]`.
pub fn uniform_bands(lo: f64, hi: f64, width: f64) -> Vec<(f64, f64)> {
    let count = ((hi - lo) / width).round().max(1.0) as usize;
    (0..count)
        .map(|b| (lo + b as f64 * width, (lo + (b + 1) as f64 * width).min(hi)))
        .collect()
}

/// Row means of `Uᵀ X` (one value per eigenvalue).
pub fn spectral_row_means(u: &Tensor, x: &Tensor) -> Result<Vec<f64>> {
    if u.rows() != x.rows() {
        return Err(Error::Contract(format!(
            "basis has {} rows but features have {}",
            u.rows(),
            x.rows()
        )));
    }
    let xs = u.transpose().matmul(x)?;
    let d = x.cols().max(1) as f64;
    Ok((0..xs.rows())
        .map(|i| xs.row(i).iter().sum::<f64>() / d)
        .collect())
}

/// Band averages of the signed spectral row means, bands inclusive at both
/// ends.
pub fn band_means(eigenvalues: &[f64], means: &[f64], bands: &[(f64, f64)]) -> Result<BandSpectrum> {
    let mut magnitude = Vec::with_capacity(bands.len());
    for &(f1, f2) in bands {
        if f1 > f2 {
            return Err(Error::Argument(format!("band [{f1}, {f2}] has f1 > f2")));
        }
        let sel: Vec<f64> = eigenvalues
            .iter()
            .zip(means)
            .filter(|(&l, _)| f1 <= l && l <= f2)
            .map(|(_, &m)| m)
            .collect();
        magnitude.push((!sel.is_empty()).then(|| sel.iter().sum::<f64>() / sel.len() as f64));
    }
    Ok(BandSpectrum {
        bands: bands.to_vec(),
        magnitude,
    })
}

pub fn frequency_magnitude(
    basis: &SpectralBasis,
    x: &Tensor,
    bands: &[(f64, f64)],
) -> Result<BandSpectrum> {
    let means = spectral_row_means(&basis.vectors, x)?;
    band_means(&basis.eigenvalues, &means, bands)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::from_edges(n, edges, Tensor::zeros(n, 1)).unwrap().0
    }

    fn complete(n: usize) -> Graph {
        let mut e = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                e.push((i, j));
            }
        }
        graph(n, &e)
    }

    #[test]
    fn complete_graph_spectrum() {
        let b = graph_basis(&complete(5), 5, 0).unwrap();
        assert!(b.eigenvalues()[0].abs() < 1e-12);
        for &l in &b.eigenvalues()[1..] {
            assert!((l - 1.25).abs() < 1e-12);
        }
    }

    #[test]
    fn two_node_path() {
        let g = graph(2, &[(0, 1)]);
        let b = graph_basis(&g, 2, 0).unwrap();
        assert!(b.eigenvalues()[0].abs() < 1e-15);
        assert!((b.eigenvalues()[1] - 2.0).abs() < 1e-15);
        let s = 1.0 / 2f64.sqrt();
        assert!((b.vectors().get(0, 0) - s).abs() < 1e-15);
        assert!((b.vectors().get(1, 0) - s).abs() < 1e-15);
        // Tie on |component| → index 0 positive.
        assert!((b.vectors().get(0, 1) - s).abs() < 1e-15);
        let p = relative_distances(&b, &g).unwrap();
        assert!((p.get(&g, 0, 1) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sign_convention_largest_component_positive() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3), (0, 2)]);
        let b = graph_basis(&g, 4, 0).unwrap();
        for k in 0..4 {
            let col = b.column(k);
            let best = col
                .iter()
                .enumerate()
                .fold(0, |bi, (i, x)| if x.abs() > col[bi].abs() { i } else { bi });
            assert!(col[best] > 0.0);
        }
    }

    #[test]
    fn k_out_of_range() {
        let l = normalized_laplacian(&complete(3));
        assert!(matches!(topk_eigenpairs(&l, 0, 0), Err(Error::Argument(_))));
        assert!(matches!(topk_eigenpairs(&l, 4, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn disconnected_zero_multiplicity() {
        let g = graph(6, &[(0, 1), (1, 2), (3, 4), (4, 5)]);
        let b = graph_basis(&g, 3, 0).unwrap();
        assert!(b.eigenvalues()[0].abs() < 1e-12 && b.eigenvalues()[1].abs() < 1e-12);
        assert!(b.eigenvalues()[2] > 0.1);
    }

    #[test]
    fn lanczos_matches_dense_on_small_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 150;
        let mut e = Vec::new();
        for i in 0..n {
            e.push((i, (i + 1) % n));
            for _ in 0..2 {
                e.push((i, rng.random_range(0..n)));
            }
        }
        let g = graph(n, &e);
        let l = normalized_laplacian(&g);
        let a = topk_eigenpairs_with(&l, 12, 1, EigenMethod::Dense).unwrap();
        let b = topk_eigenpairs_with(&l, 12, 1, EigenMethod::Lanczos).unwrap();
        for (x, y) in a.eigenvalues().iter().zip(b.eigenvalues()) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
        assert!(max_residual(&l, &b) < 1e-8);
    }

    #[test]
    fn lanczos_finds_repeated_eigenvalues() {
        // K8: eigenvalue 8/7 with multiplicity 7.
        let l = normalized_laplacian(&complete(8));
        let b = topk_eigenpairs_with(&l, 4, 0, EigenMethod::Lanczos).unwrap();
        assert!(b.eigenvalues()[0].abs() < 1e-10);
        for &v in &b.eigenvalues()[1..] {
            assert!((v - 8.0 / 7.0).abs() < 1e-10);
        }
    }

    #[test]
    fn offsets_bounded_and_local() {
        let g = complete(6);
        let b = graph_basis(&g, 6, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = offset_positions(&b, &[1, 4], 0.01, &mut rng).unwrap();
        for i in 0..6 {
            let changed = u.row(i) != b.vectors().row(i);
            assert_eq!(changed, i == 1 || i == 4);
            for (a, c) in u.row(i).iter().zip(b.vectors().row(i)) {
                assert!((a - c).abs() <= 0.01);
            }
        }
        assert_eq!(&offset_positions(&b, &[1], 0.0, &mut rng).unwrap(), b.vectors());
    }

    #[test]
    fn first_eigenvector_feature_lands_in_lowest_band() {
        let g = complete(5);
        let b = graph_basis(&g, 5, 0).unwrap();
        let x = Tensor::column(b.column(0));
        let s = frequency_magnitude(&b, &x, &[(0.0, 0.1), (1.0, 1.5), (1.8, 2.0)]).unwrap();
        assert!((s.magnitude[0].unwrap() - 1.0).abs() < 1e-10);
        assert!(s.magnitude[1].unwrap().abs() < 1e-10);
        assert_eq!(s.magnitude[2], None);
        assert!(frequency_magnitude(&b, &x, &[(0.5, 0.2)]).is_err());
    }

    #[test]
    fn cache_roundtrip() {
        let b = graph_basis(&complete(4), 3, 0).unwrap();
        let mut buf = Vec::new();
        b.write_to(&mut buf).unwrap();
        assert_eq!(SpectralBasis::read_from(&mut buf.as_slice()).unwrap(), b);
        buf[0] = b'X';
        assert!(SpectralBasis::read_from(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn default_bands_cover_range() {
        let b = uniform_bands(0.0, 2.0, 0.1);
        assert_eq!(b.len(), 20);
        assert_eq!(b[19].1, 2.0);
    }
}
