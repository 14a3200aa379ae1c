//! Decoders and reconstruction losses.

use std::rc::Rc;

use graphpae_tensor::{ParamStore, Tape, Tensor, Var};
use rand::RngCore;

use crate::corruption::CorruptionPlan;
use crate::encoder::{GraphContext, Mlp2};
use crate::error::{Error, Result};

/// Guard for the cosine denominator.
pub const COSINE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// SCE exponent, ≥ 1.
    pub gamma: f64,
    /// Weight of the position loss, ≥ 0.
    pub alpha: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            alpha: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 1.0) {
            return Err(Error::Argument(format!("sce_gamma must be ≥ 1, got {}", self.gamma)));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::Argument(format!("loss_alpha must be ≥ 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// `hidden → hidden → d`, ReLU between.
#[derive(Debug, Clone, Copy)]
pub struct FeatureDecoder(pub Mlp2);

impl FeatureDecoder {
    pub fn new(store: &mut ParamStore, hidden: usize, out: usize, rng: &mut dyn RngCore) -> Result<Self> {
        Ok(Self(Mlp2::new(store, "dec.x", [hidden, hidden, out], rng)?))
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, h: Var) -> Result<Var> {
        self.0.forward(tape, store, h)
    }
}

/// `pos_dim → hidden → 1` followed by softplus.
#[derive(Debug, Clone, Copy)]
pub struct PositionDecoder(pub Mlp2);

impl PositionDecoder {
    pub fn new(store: &mut ParamStore, pos_dim: usize, hidden: usize, rng: &mut dyn RngCore) -> Result<Self> {
        Ok(Self(Mlp2::new(store, "dec.p", [pos_dim, hidden, 1], rng)?))
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, p: Var) -> Result<Var> {
        let raw = self.0.forward(tape, store, p)?;
        Ok(tape.softplus(raw))
    }
}

/// Mean over masked rows of `(1 − cos(X_v, X′_v))^γ`. Rows outside
/// `masked` never enter the computation.
pub fn sce_loss(tape: &mut Tape, target: Var, pred: Var, masked: &[usize], gamma: f64) -> Result<Var> {
    if masked.is_empty() {
        log::warn!("feature loss over an empty masked set is 0");
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let idx: Rc<[usize]> = masked.into();
    let a = tape.gather_rows(target, idx.clone())?;
    let b = tape.gather_rows(pred, idx)?;
    let prod = tape.mul(a, b)?;
    let dot = tape.sum_cols(prod);
    let na = tape.row_norm(a);
    let nb = tape.row_norm(b);
    if tape.value(na).data().iter().chain(tape.value(nb).data()).any(|&v| v == 0.0) {
        log::warn!("zero-norm row in feature loss; its cosine is taken as 0");
    }
    let denom = tape.mul(na, nb)?;
    let denom = tape.clamp_min(denom, COSINE_EPS);
    let cos = tape.div(dot, denom)?;
    let neg = tape.mul_scalar(cos, -1.0);
    let one_minus = tape.add_scalar(neg, 1.0);
    let one_minus = tape.clamp_min(one_minus, 0.0);
    let term = tape.powf(one_minus, gamma);
    Ok(tape.mean(term))
}

/// Stored edges whose aggregating endpoint is masked, self-loops excluded.
pub fn loss_edges(ctx: &GraphContext, plan: &CorruptionPlan) -> Vec<usize> {
    (0..ctx.num_edges())
        .filter(|&e| plan.is_masked(ctx.src[e]) && ctx.src[e] != ctx.dst[e])
        .collect()
}

/// Mean unit-threshold Huber error between `pred` (M×1) and `target`.
pub fn huber_loss(tape: &mut Tape, pred: Var, target: &[f64]) -> Result<Var> {
    if target.is_empty() {
        log::warn!("position loss over an empty edge set is 0");
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let t = tape.constant(Tensor::column(target.to_vec()));
    let diff = tape.sub(pred, t)?;
    let h = tape.huber(diff);
    Ok(tape.mean(h))
}

/// `ℒ_feat + α ℒ_pos`.
pub fn total_loss(tape: &mut Tape, feat: Var, pos: Var, alpha: f64) -> Result<Var> {
    let scaled = tape.mul_scalar(pos, alpha);
    Ok(tape.add(feat, scaled)?)
}
