//! Encoder, decoders and mask token wired into the two reconstruction
//! passes.

use std::rc::Rc;

use graphpae_tensor::{ParamId, ParamStore, Tape, Tensor, Var};
use rand::RngCore;

use crate::corruption::{mask_features, CorruptionPlan, PathMode};
use crate::encoder::{Dropout, Encoder, EncoderConfig, GraphContext};
use crate::error::{Error, Result};
use crate::objectives::{
    huber_loss, loss_edges, sce_loss, total_loss, FeatureDecoder, LossWeights, PositionDecoder,
};

/// Name of the mask token parameter.
pub const MASK_TOKEN: &str = "mask_token";

#[derive(Debug, Clone)]
pub struct GraphPae {
    pub encoder: Encoder,
    pub feature_decoder: FeatureDecoder,
    pub position_decoder: PositionDecoder,
    pub token: ParamId,
    pub weights: LossWeights,
}

/// Inputs of one training step on one graph (or one batched union).
pub struct StepInputs<'a> {
    pub ctx: &'a GraphContext,
    pub features: &'a Tensor,
    pub clean_distances: &'a [f64],
    pub corrupt_distances: &'a [f64],
    /// Feature-path plan; the position pass reuses its masked set.
    pub plan: &'a CorruptionPlan,
}

#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub feat: Var,
    pub pos: Var,
    pub total: Var,
}

impl GraphPae {
    /// Registers every parameter. Registration order fixes the parameter
    /// order in checkpoints.
    pub fn new(
        cfg: EncoderConfig,
        weights: LossWeights,
        store: &mut ParamStore,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        weights.validate()?;
        let d = cfg.input_dim;
        let h = cfg.hidden;
        let pd = cfg.pos_dim();
        let token = store.insert(MASK_TOKEN, Tensor::zeros(1, d))?;
        let encoder = Encoder::new(cfg, store, rng)?;
        let feature_decoder = FeatureDecoder::new(store, h, d, rng)?;
        let position_decoder = PositionDecoder::new(store, pd, h, rng)?;
        Ok(Self {
            encoder,
            feature_decoder,
            position_decoder,
            token,
            weights,
        })
    }

    /// Pass A: masked features with clean distances → ℒ_feat.
    pub fn feature_pass(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        inp: &StepInputs<'_>,
        dropout: Option<&mut dyn RngCore>,
    ) -> Result<Var> {
        if inp.plan.mode != PathMode::Feature {
            return Err(Error::Contract("feature pass needs a feature-path plan".into()));
        }
        let x = tape.constant(inp.features.clone());
        let token = tape.param(store, self.token);
        let xt = mask_features(tape, x, inp.plan, token)?;
        let out = self.encoder.forward(
            tape,
            store,
            inp.ctx,
            xt,
            inp.clean_distances,
            dropout.map(|rng| Dropout { rng }),
        )?;
        let recon = self.feature_decoder.forward(tape, store, out.x)?;
        sce_loss(tape, x, recon, inp.plan.masked(), self.weights.gamma)
    }

    /// Pass B: clean features with offset distances → ℒ_pos.
    pub fn position_pass(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        inp: &StepInputs<'_>,
        dropout: Option<&mut dyn RngCore>,
    ) -> Result<Var> {
        let plan = inp.plan.with_mode(PathMode::Position);
        let x = tape.constant(inp.features.clone());
        let out = self.encoder.forward(
            tape,
            store,
            inp.ctx,
            x,
            inp.corrupt_distances,
            dropout.map(|rng| Dropout { rng }),
        )?;
        let edges = loss_edges(inp.ctx, &plan);
        let target: Vec<f64> = edges.iter().map(|&e| inp.clean_distances[e]).collect();
        let rows = tape.gather_rows(out.p, Rc::from(edges))?;
        let pred = self.position_decoder.forward(tape, store, rows)?;
        huber_loss(tape, pred, &target)
    }

    /// Both passes on one tape and their weighted sum.
    pub fn losses(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        inp: &StepInputs<'_>,
        dropout: Option<&mut dyn RngCore>,
    ) -> Result<LossVars> {
        let (feat, pos) = match dropout {
            Some(rng) => (
                self.feature_pass(tape, store, inp, Some(&mut *rng))?,
                self.position_pass(tape, store, inp, Some(rng))?,
            ),
            None => (
                self.feature_pass(tape, store, inp, None)?,
                self.position_pass(tape, store, inp, None)?,
            ),
        };
        let total = total_loss(tape, feat, pos, self.weights.alpha)?;
        Ok(LossVars { feat, pos, total })
    }

    /// Frozen node representations: clean inputs, no dropout.
    pub fn embed(
        &self,
        store: &ParamStore,
        ctx: &GraphContext,
        features: &Tensor,
        distances: &[f64],
    ) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.constant(features.clone());
        let out = self.encoder.forward(&mut tape, store, ctx, x, distances, None)?;
        Ok(tape.value(out.x).clone())
    }

    /// Names of the position-decoder parameters.
    pub fn position_decoder_params(&self) -> [ParamId; 4] {
        let m = self.position_decoder.0;
        [m.first.w, m.first.b, m.second.w, m.second.b]
    }
}
