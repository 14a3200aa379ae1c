//! Masked-node sampling, token substitution on features, and offset
//! positions for the distance input.

use graphpae_tensor::{Tape, Tensor, Var};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::spectral::{offset_positions, DistanceMap, SpectralBasis};

/// Which input a forward pass is allowed to corrupt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathMode {
    Feature,
    Position,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionPlan {
    masked: Vec<usize>,
    is_masked: Vec<bool>,
    pub mask_ratio: f64,
    pub mode: PathMode,
    pub noise_scale: f64,
}

/// `round(r·N)` with halves rounded away from zero.
pub fn masked_count(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64).round() as usize).min(n)
}

/// Samples `round(r·N)` distinct nodes uniformly.
pub fn sample_plan<R: Rng + ?Sized>(
    num_nodes: usize,
    ratio: f64,
    mode: PathMode,
    noise_scale: f64,
    rng: &mut R,
) -> Result<CorruptionPlan> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Argument(format!("mask ratio {ratio} outside [0, 1]")));
    }
    if !(noise_scale >= 0.0) {
        return Err(Error::Argument(format!("noise scale {noise_scale} must be ≥ 0")));
    }
    let m = masked_count(num_nodes, ratio);
    let mut masked = rand::seq::index::sample(rng, num_nodes, m).into_vec();
    masked.sort_unstable();
    Ok(CorruptionPlan::from_nodes(num_nodes, masked, ratio, mode, noise_scale))
}

impl CorruptionPlan {
    /// Plan over an explicit node set (sorted and deduplicated here).
    pub fn from_nodes(
        num_nodes: usize,
        mut masked: Vec<usize>,
        ratio: f64,
        mode: PathMode,
        noise_scale: f64,
    ) -> Self {
        masked.sort_unstable();
        masked.dedup();
        let mut is_masked = vec![false; num_nodes];
        for &i in &masked {
            is_masked[i] = true;
        }
        Self {
            masked,
            is_masked,
            mask_ratio: ratio,
            mode,
            noise_scale,
        }
    }

    pub fn masked(&self) -> &[usize] {
        &self.masked
    }

    pub fn is_masked(&self, i: usize) -> bool {
        self.is_masked[i]
    }

    pub fn num_nodes(&self) -> usize {
        self.is_masked.len()
    }

    /// Same masked set, other path.
    pub fn with_mode(&self, mode: PathMode) -> Self {
        Self {
            mode,
            ..self.clone()
        }
    }

    fn require(&self, mode: PathMode, op: &str) -> Result<()> {
        if self.mode != mode {
            return Err(Error::Contract(format!(
                "{op} needs a {mode:?}-path plan, got {:?}",
                self.mode
            )));
        }
        Ok(())
    }
}

/// Replaces the masked rows of `x` (N×d) by the token row (1×d) on the
/// tape, so gradients reach the token.
pub fn mask_features(tape: &mut Tape, x: Var, plan: &CorruptionPlan, token: Var) -> Result<Var> {
    plan.require(PathMode::Feature, "mask_features")?;
    let n = tape.value(x).rows();
    if n != plan.num_nodes() {
        return Err(Error::Contract(format!(
            "plan covers {} nodes, features have {n}",
            plan.num_nodes()
        )));
    }
    if plan.masked.is_empty() {
        return Ok(x);
    }
    let keep: Vec<f64> = plan.is_masked.iter().map(|&m| if m { 0.0 } else { 1.0 }).collect();
    let hit: Vec<f64> = plan.is_masked.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    let keep = tape.constant(Tensor::column(keep));
    let hit = tape.constant(Tensor::column(hit));
    let kept = tape.mul(x, keep)?;
    let tok = tape.matmul(hit, token)?;
    Ok(tape.add(kept, tok)?)
}

/// Distances from offset positions. Edges with no masked endpoint copy the
/// clean value unchanged.
pub fn corrupt_distances<R: Rng + ?Sized>(
    basis: &SpectralBasis,
    g: &Graph,
    clean: &DistanceMap,
    plan: &CorruptionPlan,
    rng: &mut R,
) -> Result<DistanceMap> {
    plan.require(PathMode::Position, "corrupt_distances")?;
    if basis.num_nodes() != g.num_nodes() || plan.num_nodes() != g.num_nodes() {
        return Err(Error::Contract("basis, plan and graph disagree on N".into()));
    }
    let u = offset_positions(basis, &plan.masked, plan.noise_scale, rng)?;
    let values = g
        .sources()
        .iter()
        .zip(g.targets())
        .zip(clean.values())
        .map(|((&i, &j), &p)| {
            if plan.is_masked[i] || plan.is_masked[j] {
                u.row(i)
                    .iter()
                    .zip(u.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            } else {
                p
            }
        })
        .collect();
    Ok(DistanceMap::from_values(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{graph_basis, relative_distances};
    use crate::synth::make_random_graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ratio_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = sample_plan(10, 0.0, PathMode::Feature, 0.0, &mut rng).unwrap();
        assert!(p.masked().is_empty());
        let p = sample_plan(10, 1.0, PathMode::Feature, 0.0, &mut rng).unwrap();
        assert_eq!(p.masked(), (0..10).collect::<Vec<_>>());
        assert!(sample_plan(10, 1.5, PathMode::Feature, 0.0, &mut rng).is_err());
    }

    #[test]
    fn size_is_rounded_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = sample_plan(1000, 0.25, PathMode::Feature, 0.0, &mut rng).unwrap();
        assert_eq!(p.masked().len(), 250);
    }

    #[test]
    fn token_rows_substituted() {
        let plan = CorruptionPlan::from_nodes(3, vec![0], 0.3, PathMode::Feature, 0.0);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap());
        let tok = tape.constant(Tensor::row_vector(vec![0.0, 0.0]));
        let out = mask_features(&mut tape, x, &plan, tok).unwrap();
        assert_eq!(tape.value(out).data(), &[0.0, 0.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn empty_mask_is_identity() {
        let plan = CorruptionPlan::from_nodes(2, vec![], 0.0, PathMode::Feature, 0.0);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(2, 2, 7.0));
        let tok = tape.constant(Tensor::row_vector(vec![1.0, 1.0]));
        let out = mask_features(&mut tape, x, &plan, tok).unwrap();
        assert_eq!(tape.value(out), tape.value(x));
    }

    #[test]
    fn mode_mismatch_is_contract_error() {
        let plan = CorruptionPlan::from_nodes(2, vec![0], 0.5, PathMode::Position, 0.0);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(2, 1));
        let tok = tape.constant(Tensor::zeros(1, 1));
        assert!(matches!(
            mask_features(&mut tape, x, &plan, tok),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn untouched_edges_bitwise_equal() {
        let g = make_random_graph(30, 0.2, 2, 4).unwrap();
        let b = graph_basis(&g, 10, 0).unwrap();
        let p = relative_distances(&b, &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let plan = sample_plan(30, 0.25, PathMode::Position, 0.01, &mut rng).unwrap();
        let pt = corrupt_distances(&b, &g, &p, &plan, &mut rng).unwrap();
        let bound = 2.0 * 0.01 * (10f64).sqrt();
        for e in 0..g.num_edges() {
            let (i, j) = (g.sources()[e], g.targets()[e]);
            if !plan.is_masked(i) && !plan.is_masked(j) {
                assert_eq!(pt.values()[e].to_bits(), p.values()[e].to_bits());
            }
            assert!((pt.values()[e] - p.values()[e]).abs() <= bound);
        }
        let zero = plan.clone();
        let zero = CorruptionPlan {
            noise_scale: 0.0,
            ..zero
        };
        assert_eq!(corrupt_distances(&b, &g, &p, &zero, &mut rng).unwrap(), p);
    }
}
