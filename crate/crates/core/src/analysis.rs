//! Band-wise frequency magnitudes of a graph before and after corruption.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corruption::masked_count;
use crate::error::{Error, Result};
use crate::graph::{BuildOptions, Graph};
use crate::spectral::{band_means, graph_basis, offset_positions, spectral_row_means, uniform_bands};

/// Corruption compared against the clean graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    /// Zero the feature rows of sampled nodes.
    Feature,
    /// Remove sampled undirected edges and re-decompose.
    Edge,
    /// Add uniform offsets to the eigenvector rows of sampled nodes.
    Offset,
}

impl FromStr for MaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feature" => Ok(MaskKind::Feature),
            "edge" => Ok(MaskKind::Edge),
            "offset" => Ok(MaskKind::Offset),
            _ => Err(Error::Argument(format!(
                "unknown mask kind {s:?} (feature|edge|offset)"
            ))),
        }
    }
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskKind::Feature => "feature",
            MaskKind::Edge => "edge",
            MaskKind::Offset => "offset",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub kind: MaskKind,
    /// Fraction of nodes (feature, offset) or undirected edges (edge).
    pub ratio: f64,
    /// Offset half-width.
    pub noise_scale: f64,
    pub bands: Vec<(f64, f64)>,
    pub seed: u64,
}

impl AnalysisConfig {
    /// Bands of width 0.1 over `[0, 2]`.
    pub fn new(kind: MaskKind, ratio: f64) -> Self {
        Self {
            kind,
            ratio,
            noise_scale: 0.01,
            bands: uniform_bands(0.0, 2.0, 0.1),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ratio) {
            return Err(Error::Argument(format!("ratio {} outside [0, 1]", self.ratio)));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(Error::Argument(format!("noise scale {} must be ≥ 0", self.noise_scale)));
        }
        for &(f1, f2) in &self.bands {
            if !(0.0..=2.0).contains(&f1) || !(0.0..=2.0).contains(&f2) {
                return Err(Error::Argument(format!("band [{f1}, {f2}] outside [0, 2]")));
            }
            if f1 > f2 {
                return Err(Error::Argument(format!("band [{f1}, {f2}] has f1 > f2")));
            }
        }
        Ok(())
    }
}

/// Per-band magnitudes of the clean and corrupted graph. `None` marks a
/// band with no eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumComparison {
    pub bands: Vec<(f64, f64)>,
    pub original: Vec<Option<f64>>,
    pub corrupted: Vec<Option<f64>>,
    /// Per-eigenvalue row means `X̄ˢ` and their eigenvalues, clean then
    /// corrupted. Paired by index.
    pub eigenvalues: (Vec<f64>, Vec<f64>),
    pub row_means: (Vec<f64>, Vec<f64>),
}

impl SpectrumComparison {
    pub fn abs_diff(&self) -> Vec<Option<f64>> {
        self.original
            .iter()
            .zip(&self.corrupted)
            .map(|(a, b)| Some((a.as_ref()? - b.as_ref()?).abs()))
            .collect()
    }

    /// `|diff|` of the band equal to `(lo, hi)`.
    pub fn diff_in(&self, lo: f64, hi: f64) -> Option<f64> {
        let i = self.bands.iter().position(|&b| b == (lo, hi))?;
        self.abs_diff()[i]
    }

    /// Mean over the clean eigenvalues in `[lo, hi]` of the per-index
    /// `|X̄ˢ_i − X̃ˢ_i|`. Unlike [`Self::abs_diff`], opposite-signed changes
    /// inside a band do not cancel.
    pub fn mean_abs_diff(&self, lo: f64, hi: f64) -> Option<f64> {
        let d: Vec<f64> = self
            .eigenvalues
            .0
            .iter()
            .zip(self.row_means.0.iter().zip(&self.row_means.1))
            .filter(|(&l, _)| lo <= l && l <= hi)
            .map(|(_, (a, b))| (a - b).abs())
            .collect();
        (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64)
    }

    pub const HEADER: &'static str = "band_lo,band_hi,orig_magnitude,corrupt_magnitude,abs_diff";

    /// CSV with empty cells for absent bands.
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for (((b, o), c), d) in self
            .bands
            .iter()
            .zip(&self.original)
            .zip(&self.corrupted)
            .zip(self.abs_diff())
        {
            out.push_str(&format!(
                "{:?},{:?},{},{},{}\n",
                b.0,
                b.1,
                cell(*o),
                cell(*c),
                cell(d)
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Copy of `g` without `round(ratio · |E|)` uniformly sampled undirected
/// edges.
pub fn drop_edges<R: Rng + ?Sized>(g: &Graph, ratio: f64, rng: &mut R) -> Result<Graph> {
    let edges = g.undirected_edges();
    let m = masked_count(edges.len(), ratio);
    let mut gone = vec![false; edges.len()];
    for i in rand::seq::index::sample(rng, edges.len(), m) {
        gone[i] = true;
    }
    let kept: Vec<_> = edges
        .into_iter()
        .zip(gone)
        .filter(|(_, g)| !g)
        .map(|(e, _)| e)
        .collect();
    let (out, _) = Graph::build(g.num_nodes(), &kept, g.features().clone(), BuildOptions::default())?;
    Ok(out)
}

/// Full-spectrum magnitudes of the clean graph and of one corruption.
pub fn spectral_analysis(g: &Graph, cfg: &AnalysisConfig) -> Result<SpectrumComparison> {
    cfg.validate()?;
    let n = g.num_nodes();
    if n == 0 {
        return Err(Error::Data("spectral analysis of an empty graph".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let basis = graph_basis(g, n, cfg.seed)?;
    let x = g.features();
    let orig = spectral_row_means(basis.vectors(), x)?;
    let (eigs, corrupt) = match cfg.kind {
        MaskKind::Feature => {
            let masked = rand::seq::index::sample(&mut rng, n, masked_count(n, cfg.ratio));
            let mut xt = x.clone();
            for i in masked {
                xt.row_mut(i).fill(0.0);
            }
            (basis.eigenvalues().to_vec(), spectral_row_means(basis.vectors(), &xt)?)
        }
        MaskKind::Edge => {
            let gt = drop_edges(g, cfg.ratio, &mut rng)?;
            let bt = graph_basis(&gt, n, cfg.seed)?;
            (bt.eigenvalues().to_vec(), spectral_row_means(bt.vectors(), x)?)
        }
        MaskKind::Offset => {
            let mut masked =
                rand::seq::index::sample(&mut rng, n, masked_count(n, cfg.ratio)).into_vec();
            masked.sort_unstable();
            let ut = offset_positions(&basis, &masked, cfg.noise_scale, &mut rng)?;
            (basis.eigenvalues().to_vec(), spectral_row_means(&ut, x)?)
        }
    };
    let o = band_means(basis.eigenvalues(), &orig, &cfg.bands)?;
    let c = band_means(&eigs, &corrupt, &cfg.bands)?;
    Ok(SpectrumComparison {
        bands: cfg.bands.clone(),
        original: o.magnitude,
        corrupted: c.magnitude,
        eigenvalues: (basis.eigenvalues().to_vec(), eigs),
        row_means: (orig, corrupt),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{make_sbm, SbmConfig};

    fn sbm() -> Graph {
        make_sbm(&SbmConfig::new(vec![20, 20], 0.3, 0.05, 4)).unwrap()
    }

    #[test]
    fn zero_ratio_leaves_spectrum_unchanged() {
        let g = sbm();
        for kind in [MaskKind::Feature, MaskKind::Edge, MaskKind::Offset] {
            let r = spectral_analysis(&g, &AnalysisConfig::new(kind, 0.0)).unwrap();
            assert_eq!(r.original, r.corrupted, "{kind}");
        }
    }

    #[test]
    fn band_outside_range_rejected() {
        let mut cfg = AnalysisConfig::new(MaskKind::Feature, 0.2);
        cfg.bands = vec![(1.5, 2.5)];
        assert!(matches!(spectral_analysis(&sbm(), &cfg), Err(Error::Argument(_))));
    }

    #[test]
    fn edge_drop_count() {
        let g = sbm();
        let m = g.undirected_edges().len();
        let gt = drop_edges(&g, 0.2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(gt.undirected_edges().len(), m - masked_count(m, 0.2));
    }

    #[test]
    fn csv_marks_absent_bands() {
        let c = SpectrumComparison {
            bands: vec![(0.0, 0.1), (0.1, 0.2)],
            original: vec![Some(1.0), None],
            corrupted: vec![Some(0.5), None],
            eigenvalues: (vec![0.0], vec![0.0]),
            row_means: (vec![1.0], vec![0.5]),
        };
        assert_eq!(
            c.to_csv(),
            format!("{}\n0.0,0.1,1.0,0.5,0.5\n0.1,0.2,,,\n", SpectrumComparison::HEADER)
        );
    }
}
