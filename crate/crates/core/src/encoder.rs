//! Dual-path message-passing encoder.
//!
//! Node path: `X_i ← Σ_{j∈N(i)} norm(α_ij + P_ij) ⊙ MLP(X_j)`.
//! Edge path: `P_ij ← α_ij + P_ij`, with `α` the raw attention output.

use std::rc::Rc;

use graphpae_tensor::{ParamId, ParamStore, Tape, Tensor, Var, LEAKY_RELU_SLOPE};
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    Gat,
    GatedGcn,
}

impl std::str::FromStr for AttentionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gat" => Ok(Self::Gat),
            "gatedgcn" => Ok(Self::GatedGcn),
            _ => Err(Error::Argument(format!("unknown attention kind {s:?}"))),
        }
    }
}

impl std::fmt::Display for AttentionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Gat => "gat",
            Self::GatedGcn => "gatedgcn",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub layers: usize,
    pub hidden: usize,
    pub attention: AttentionKind,
    pub heads: usize,
    pub rbf_count: usize,
    /// Centers are spread evenly over `[rbf_lo, rbf_hi]`.
    pub rbf_lo: f64,
    pub rbf_hi: f64,
    /// `None` means the center spacing.
    pub rbf_sigma: Option<f64>,
    pub node_dropout: f64,
    pub edge_dropout: f64,
    pub edge_vocab: Option<usize>,
    /// ReLU after each aggregation.
    pub activation: bool,
}

impl EncoderConfig {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            layers: 2,
            hidden: 64,
            attention: AttentionKind::GatedGcn,
            heads: 4,
            rbf_count: 128,
            rbf_lo: 0.0,
            rbf_hi: 2.0,
            rbf_sigma: None,
            node_dropout: 0.0,
            edge_dropout: 0.0,
            edge_vocab: None,
            activation: true,
        }
    }

    /// Width of `α` and `P^(l)`: heads for GAT, hidden for GatedGCN.
    pub fn pos_dim(&self) -> usize {
        match self.attention {
            AttentionKind::Gat => self.heads,
            AttentionKind::GatedGcn => self.hidden,
        }
    }

    pub fn rbf_centers(&self) -> Vec<f64> {
        if self.rbf_count == 1 {
            return vec![self.rbf_lo];
        }
        let step = (self.rbf_hi - self.rbf_lo) / (self.rbf_count - 1) as f64;
        (0..self.rbf_count)
            .map(|k| self.rbf_lo + k as f64 * step)
            .collect()
    }

    pub fn sigma(&self) -> f64 {
        self.rbf_sigma.unwrap_or_else(|| {
            if self.rbf_count > 1 {
                (self.rbf_hi - self.rbf_lo) / (self.rbf_count - 1) as f64
            } else {
                1.0
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.layers == 0 {
            return bad("encoder needs at least one layer".into());
        }
        if self.hidden == 0 || self.input_dim == 0 {
            return bad("hidden and input widths must be positive".into());
        }
        if self.rbf_count == 0 {
            return bad("rbf_count must be ≥ 1".into());
        }
        if !(self.sigma() > 0.0) {
            return bad(format!("rbf sigma must be > 0, got {}", self.sigma()));
        }
        if self.attention == AttentionKind::Gat
            && (self.heads == 0 || self.hidden % self.heads != 0)
        {
            return bad(format!(
                "hidden width {} is not divisible by {} heads",
                self.hidden, self.heads
            ));
        }
        for (name, p) in [("node", self.node_dropout), ("edge", self.edge_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("{name} dropout {p} outside [0, 1)"));
            }
        }
        Ok(())
    }
}

/// Gaussian features `exp(−(p − μ_k)² / (2σ²))` for each distance.
pub fn rbf_features(p: &[f64], centers: &[f64], sigma: f64) -> Tensor {
    let mut out = Tensor::zeros(p.len(), centers.len());
    let denom = 2.0 * sigma * sigma;
    for (e, &v) in p.iter().enumerate() {
        for (o, &mu) in out.row_mut(e).iter_mut().zip(centers) {
            *o = (-(v - mu) * (v - mu) / denom).exp();
        }
    }
    out
}

/// Edge index arrays and constants shared by every pass over one graph.
#[derive(Debug, Clone)]
pub struct GraphContext {
    pub num_nodes: usize,
    /// Aggregating node per edge.
    pub src: Rc<[usize]>,
    /// Neighbour per edge.
    pub dst: Rc<[usize]>,
    /// `1 / deg(src)` per edge (E×1).
    pub inv_deg: Tensor,
    pub edge_types: Option<Rc<[usize]>>,
}

impl GraphContext {
    pub fn new(g: &Graph) -> Self {
        let deg = g.degree_vector();
        Self {
            num_nodes: g.num_nodes(),
            src: g.sources().into(),
            dst: g.targets().into(),
            inv_deg: Tensor::column(g.sources().iter().map(|&i| 1.0 / deg[i]).collect()),
            edge_types: g.edge_types().map(Into::into),
        }
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-a..a))
            .collect();
        Ok(Self {
            w: store.insert(format!("{name}.w"), Tensor::from_vec(fan_in, fan_out, w)?)?,
            b: store.insert(format!("{name}.b"), Tensor::zeros(1, fan_out))?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let xw = tape.matmul(x, w)?;
        Ok(tape.add(xw, b)?)
    }
}

/// Two linear maps with a ReLU between.
#[derive(Debug, Clone, Copy)]
pub struct Mlp2 {
    pub first: Linear,
    pub second: Linear,
}

impl Mlp2 {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dims: [usize; 3],
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        Ok(Self {
            first: Linear::new(store, &format!("{name}.0"), dims[0], dims[1], rng)?,
            second: Linear::new(store, &format!("{name}.1"), dims[1], dims[2], rng)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.first.forward(tape, store, x)?;
        let h = tape.relu(h);
        self.second.forward(tape, store, h)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Attention {
    /// `LeakyReLU((XW)_i A_dst + (XW)_j A_src)`, one column per head.
    Gat { w: ParamId, a_dst: ParamId, a_src: ParamId },
    /// `σ(X_i W₁ + X_j W₂ + b)`.
    Gated { w1: ParamId, w2: ParamId, b: ParamId },
}

#[derive(Debug, Clone, Copy)]
pub struct LayerParams {
    pub attention: Attention,
    pub message: Mlp2,
    pub edge_embedding: Option<ParamId>,
}

fn glorot(rows: usize, cols: usize, rng: &mut dyn RngCore) -> Result<Tensor> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let v = (0..rows * cols).map(|_| rng.random_range(-a..a)).collect();
    Ok(Tensor::from_vec(rows, cols, v)?)
}

/// Dropout randomness for training passes; `None` runs in eval mode.
pub struct Dropout<'a> {
    pub rng: &'a mut dyn RngCore,
}

#[derive(Debug, Clone, Copy)]
pub struct EncoderOutput {
    /// N×hidden node representations after the last layer.
    pub x: Var,
    /// E×pos_dim edge representations after the last layer.
    pub p: Var,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub cfg: EncoderConfig,
    pub feature_lift: Linear,
    pub rbf_mlp: Mlp2,
    pub layers: Vec<LayerParams>,
}

impl Encoder {
    pub fn new(cfg: EncoderConfig, store: &mut ParamStore, rng: &mut dyn RngCore) -> Result<Self> {
        cfg.validate()?;
        let h = cfg.hidden;
        let pd = cfg.pos_dim();
        let feature_lift = Linear::new(store, "enc.lift", cfg.input_dim, h, rng)?;
        let rbf_mlp = Mlp2::new(store, "enc.rbf", [cfg.rbf_count, h, pd], rng)?;
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let name = format!("enc.l{l}");
            let attention = match cfg.attention {
                AttentionKind::Gat => Attention::Gat {
                    w: store.insert(format!("{name}.att.w"), glorot(h, h, rng)?)?,
                    a_dst: store.insert(format!("{name}.att.a_dst"), glorot(h, pd, rng)?)?,
                    a_src: store.insert(format!("{name}.att.a_src"), glorot(h, pd, rng)?)?,
                },
                AttentionKind::GatedGcn => Attention::Gated {
                    w1: store.insert(format!("{name}.att.w1"), glorot(h, h, rng)?)?,
                    w2: store.insert(format!("{name}.att.w2"), glorot(h, h, rng)?)?,
                    b: store.insert(format!("{name}.att.b"), Tensor::zeros(1, h))?,
                },
            };
            let message = Mlp2::new(store, &format!("{name}.msg"), [h, h, h], rng)?;
            let edge_embedding = match cfg.edge_vocab {
                Some(v) => Some(store.insert(
                    format!("{name}.edge_emb"),
                    glorot(v.max(1), pd, rng)?,
                )?),
                None => None,
            };
            layers.push(LayerParams {
                attention,
                message,
                edge_embedding,
            });
        }
        Ok(Self {
            cfg,
            feature_lift,
            rbf_mlp,
            layers,
        })
    }

    /// Raw attention `α` (E×pos_dim) of one layer, including the edge-type
    /// embedding when configured.
    pub fn attention(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ctx: &GraphContext,
        layer: &LayerParams,
        x: Var,
    ) -> Result<Var> {
        let alpha = match layer.attention {
            Attention::Gat { w, a_dst, a_src } => {
                let w = tape.param(store, w);
                let z = tape.matmul(x, w)?;
                let ad = tape.param(store, a_dst);
                let as_ = tape.param(store, a_src);
                let sd = tape.matmul(z, ad)?;
                let ss = tape.matmul(z, as_)?;
                let ei = tape.gather_rows(sd, ctx.src.clone())?;
                let ej = tape.gather_rows(ss, ctx.dst.clone())?;
                let e = tape.add(ei, ej)?;
                tape.leaky_relu(e, LEAKY_RELU_SLOPE)
            }
            Attention::Gated { w1, w2, b } => {
                let w1 = tape.param(store, w1);
                let w2 = tape.param(store, w2);
                let b = tape.param(store, b);
                let a1 = tape.matmul(x, w1)?;
                let a2 = tape.matmul(x, w2)?;
                let gi = tape.gather_rows(a1, ctx.src.clone())?;
                let gj = tape.gather_rows(a2, ctx.dst.clone())?;
                let s = tape.add(gi, gj)?;
                let s = tape.add(s, b)?;
                tape.sigmoid(s)
            }
        };
        match (layer.edge_embedding, &ctx.edge_types) {
            (Some(emb), Some(types)) => {
                let emb = tape.param(store, emb);
                let rows = tape.gather_rows(emb, types.clone())?;
                Ok(tape.add(alpha, rows)?)
            }
            (Some(_), None) => Err(Error::Contract(
                "encoder expects edge types but the graph has none".into(),
            )),
            _ => Ok(alpha),
        }
    }

    /// Initial edge representation `MLP(RBF(P))`.
    pub fn lift_positions(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        p: &[f64],
    ) -> Result<Var> {
        let g = rbf_features(p, &self.cfg.rbf_centers(), self.cfg.sigma());
        let g = tape.constant(g);
        self.rbf_mlp.forward(tape, store, g)
    }

    /// Runs every layer. `x` is N×input_dim, `p` holds one distance per
    /// stored edge. Dropout is applied only when `dropout` is given.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ctx: &GraphContext,
        x: Var,
        p: &[f64],
        mut dropout: Option<Dropout<'_>>,
    ) -> Result<EncoderOutput> {
        let [n, d] = tape.value(x).shape();
        if n != ctx.num_nodes || d != self.cfg.input_dim {
            return Err(Error::Contract(format!(
                "encoder input is {n}×{d}, expected {}×{}",
                ctx.num_nodes, self.cfg.input_dim
            )));
        }
        if p.len() != ctx.num_edges() {
            return Err(Error::Contract(format!(
                "{} distances for {} edges",
                p.len(),
                ctx.num_edges()
            )));
        }
        let h = self.cfg.hidden;
        let pd = self.cfg.pos_dim();
        let mut xl = self.feature_lift.forward(tape, store, x)?;
        let mut pl = self.lift_positions(tape, store, p)?;
        for layer in &self.layers {
            let alpha = self.attention(tape, store, ctx, layer, xl)?;
            let coef = tape.add(alpha, pl)?;
            let mut coef = match self.cfg.attention {
                AttentionKind::Gat => tape.segment_softmax(coef, ctx.src.clone(), n)?,
                AttentionKind::GatedGcn => {
                    let inv = tape.constant(ctx.inv_deg.clone());
                    tape.mul(coef, inv)?
                }
            };
            if let Some(dp) = dropout.as_mut() {
                coef = apply_dropout(tape, coef, self.cfg.edge_dropout, dp)?;
            }
            if self.cfg.attention == AttentionKind::Gat {
                coef = tape.repeat_cols(coef, h / pd);
            }
            let msg = layer.message.forward(tape, store, xl)?;
            let msg = tape.gather_rows(msg, ctx.dst.clone())?;
            let weighted = tape.mul(coef, msg)?;
            let mut agg = tape.segment_sum(weighted, ctx.src.clone(), n)?;
            if self.cfg.activation {
                agg = tape.relu(agg);
            }
            if let Some(dp) = dropout.as_mut() {
                agg = apply_dropout(tape, agg, self.cfg.node_dropout, dp)?;
            }
            pl = tape.add(alpha, pl)?;
            xl = agg;
        }
        Ok(EncoderOutput { x: xl, p: pl })
    }
}

/// Inverted dropout with a constant keep mask.
fn apply_dropout(tape: &mut Tape, a: Var, rate: f64, dp: &mut Dropout<'_>) -> Result<Var> {
    if rate <= 0.0 {
        return Ok(a);
    }
    let [r, c] = tape.value(a).shape();
    let scale = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..r * c)
        .map(|_| if dp.rng.random::<f64>() < rate { 0.0 } else { scale })
        .collect();
    let m = tape.constant(Tensor::from_vec(r, c, mask)?);
    Ok(tape.mul(a, m)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rbf_peak_and_tail() {
        let g = rbf_features(&[0.5, 10.0], &[0.5, 1.0], 1.0);
        assert_eq!(g.get(0, 0), 1.0);
        assert!(g.get(1, 0) <= (-18f64).exp() && g.get(1, 1) <= (-18f64).exp());
    }

    #[test]
    fn default_centers_span_range() {
        let cfg = EncoderConfig::new(3);
        let c = cfg.rbf_centers();
        assert_eq!(c.len(), 128);
        assert_eq!((c[0], c[127]), (0.0, 2.0));
        assert!((cfg.sigma() - 2.0 / 127.0).abs() < 1e-15);
    }

    #[test]
    fn gat_heads_must_divide_hidden() {
        let mut cfg = EncoderConfig::new(3);
        cfg.attention = AttentionKind::Gat;
        cfg.hidden = 10;
        cfg.heads = 4;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn output_shapes() {
        let (g, _) = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)], Tensor::full(4, 3, 0.5)).unwrap();
        for kind in [AttentionKind::Gat, AttentionKind::GatedGcn] {
            let mut cfg = EncoderConfig::new(3);
            cfg.attention = kind;
            cfg.hidden = 8;
            cfg.heads = 2;
            cfg.rbf_count = 5;
            let mut store = ParamStore::new();
            let enc = Encoder::new(cfg.clone(), &mut store, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            let ctx = GraphContext::new(&g);
            let mut tape = Tape::new();
            let x = tape.constant(g.features().clone());
            let out = enc.forward(&mut tape, &store, &ctx, x, &[0.1; 6], None).unwrap();
            assert_eq!(tape.value(out.x).shape(), [4, 8]);
            assert_eq!(tape.value(out.p).shape(), [6, cfg.pos_dim()]);
        }
    }
}
