//! Pretraining loop, logs and checkpoints.

use std::path::{Path, PathBuf};
use std::time::Instant;

use graphpae_tensor::{AdamConfig, AdamState, Checkpoint, ParamStore, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corruption::{corrupt_distances, sample_plan, PathMode};
use crate::encoder::{AttentionKind, EncoderConfig, GraphContext};
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphCollection};
use crate::model::{GraphPae, StepInputs};
use crate::objectives::LossWeights;
use crate::spectral::{graph_basis, relative_distances, DistanceMap, SpectralBasis};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub epochs: usize,
    pub mask_ratio: f64,
    pub noise_scale: f64,
    pub weights: LossWeights,
    /// Eigenvectors per graph (capped at the node count).
    pub k: usize,
    pub encoder: EncoderConfig,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Graphs per optimizer step for collections.
    pub batch_size: usize,
}

impl RunConfig {
    /// Defaults for a feature width `d`.
    pub fn new(input_dim: usize) -> Self {
        Self {
            epochs: 200,
            mask_ratio: 0.25,
            noise_scale: 0.01,
            weights: LossWeights::default(),
            k: 16,
            encoder: EncoderConfig::new(input_dim),
            adam: AdamConfig::with_lr(1e-3),
            seed: 0,
            batch_size: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Argument("epochs must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            return Err(Error::Argument(format!("mask_ratio {} outside [0, 1]", self.mask_ratio)));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(Error::Argument(format!("noise_scale {} must be ≥ 0", self.noise_scale)));
        }
        if self.k == 0 {
            return Err(Error::Argument("k must be ≥ 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Argument("batch_size must be ≥ 1".into()));
        }
        if !(self.adam.lr > 0.0) || !(self.adam.weight_decay >= 0.0) {
            return Err(Error::Argument("lr must be > 0 and wd ≥ 0".into()));
        }
        self.weights.validate()?;
        self.encoder.validate()
    }
}

/// Training input.
#[derive(Debug, Clone, Copy)]
pub enum TrainData<'a> {
    Node(&'a Graph),
    Collection(&'a GraphCollection),
}

impl TrainData<'_> {
    pub fn feature_dim(&self) -> usize {
        match self {
            TrainData::Node(g) => g.feature_dim(),
            TrainData::Collection(c) => c.feature_dim(),
        }
    }
}

/// One graph with its spectrum and clean distances.
#[derive(Debug, Clone)]
pub struct PreparedGraph {
    pub graph: Graph,
    pub basis: SpectralBasis,
    pub distances: DistanceMap,
}

impl PreparedGraph {
    pub fn new(graph: &Graph, k: usize, seed: u64) -> Result<Self> {
        let basis = if graph.num_nodes() == 0 {
            SpectralBasis::new(vec![0.0; k], Tensor::zeros(0, k))?
        } else {
            graph_basis(graph, k, seed)?.padded(k)
        };
        let distances = relative_distances(&basis, graph)?;
        Ok(Self {
            graph: graph.clone(),
            basis,
            distances,
        })
    }

    pub fn context(&self) -> GraphContext {
        GraphContext::new(&self.graph)
    }
}

/// Spectra for every graph, computed in parallel. Graphs smaller than `k`
/// are padded with zero eigenvector columns.
pub fn prepare(data: TrainData<'_>, k: usize, seed: u64) -> Result<Vec<PreparedGraph>> {
    match data {
        TrainData::Node(g) => Ok(vec![PreparedGraph::new(g, k, seed)?]),
        TrainData::Collection(c) => c
            .graphs()
            .par_iter()
            .map(|g| PreparedGraph::new(g, k, seed))
            .collect(),
    }
}

/// Union of several prepared graphs as one block-diagonal graph.
fn union(parts: &[&PreparedGraph]) -> Result<PreparedGraph> {
    if let [single] = parts {
        return Ok((*single).clone());
    }
    let graphs: Vec<&Graph> = parts.iter().map(|p| &p.graph).collect();
    let (graph, _) = Graph::disjoint_union(&graphs)?;
    let k = parts.first().map_or(0, |p| p.basis.k());
    let mut rows = Vec::new();
    let mut vals = Vec::new();
    for p in parts {
        rows.extend_from_slice(p.basis.vectors().data());
        vals = p.basis.eigenvalues().to_vec();
    }
    let basis = SpectralBasis::new(vals, Tensor::from_vec(graph.num_nodes(), k, rows)?)?;
    let distances = DistanceMap::from_values(
        parts
            .iter()
            .flat_map(|p| p.distances.values().iter().copied())
            .collect(),
    );
    Ok(PreparedGraph {
        graph,
        basis,
        distances,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_feat: f64,
    pub loss_pos: f64,
    pub loss_total: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    pub checkpoints: Vec<PathBuf>,
}

impl TrainLog {
    pub const HEADER: &'static str = "epoch,loss_feat,loss_pos,loss_total,seconds";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{:?},{:?},{:?},{:.6}\n",
                r.epoch, r.loss_feat, r.loss_pos, r.loss_total, r.seconds
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Loss columns only, for comparisons that must ignore wall time.
    pub fn losses(&self) -> Vec<(usize, f64, f64, f64)> {
        self.records
            .iter()
            .map(|r| (r.epoch, r.loss_feat, r.loss_pos, r.loss_total))
            .collect()
    }
}

/// RNG for epoch `epoch` (1-based); stream 0 is reserved for
/// initialization.
pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

pub fn init_rng(seed: u64) -> ChaCha8Rng {
    epoch_rng(seed, 0)
}

/// Model, parameters and optimizer state of a run in progress.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub cfg: RunConfig,
    pub model: GraphPae,
    pub store: ParamStore,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    pub log: TrainLog,
}

impl Trainer {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut rng = init_rng(cfg.seed);
        let model = GraphPae::new(cfg.encoder.clone(), cfg.weights, &mut store, &mut rng)?;
        let adam = AdamState::new(cfg.adam, &store);
        Ok(Self {
            cfg,
            model,
            store,
            adam,
            epoch: 0,
            log: TrainLog::default(),
        })
    }

    /// One epoch: every mini-batch gets its own masked set, both passes on
    /// one tape, one Adam step.
    pub fn train_epoch(&mut self, data: &[PreparedGraph]) -> Result<EpochRecord> {
        let started = Instant::now();
        let epoch = self.epoch + 1;
        let mut rng = epoch_rng(self.cfg.seed, epoch);
        let mut order: Vec<usize> = (0..data.len()).collect();
        if data.len() > 1 {
            order.shuffle(&mut rng);
        }
        let (mut sf, mut sp, mut st) = (0.0, 0.0, 0.0);
        let batches: Vec<&[usize]> = order.chunks(self.cfg.batch_size).collect();
        for chunk in &batches {
            let parts: Vec<&PreparedGraph> = chunk.iter().map(|&i| &data[i]).collect();
            let batch = union(&parts)?;
            let ctx = batch.context();
            let n = batch.graph.num_nodes();
            let plan = sample_plan(n, self.cfg.mask_ratio, PathMode::Feature, self.cfg.noise_scale, &mut rng)?;
            let corrupt = corrupt_distances(
                &batch.basis,
                &batch.graph,
                &batch.distances,
                &plan.with_mode(PathMode::Position),
                &mut rng,
            )?;
            let inputs = StepInputs {
                ctx: &ctx,
                features: batch.graph.features(),
                clean_distances: batch.distances.values(),
                corrupt_distances: corrupt.values(),
                plan: &plan,
            };
            let mut tape = Tape::new();
            let losses = self.model.losses(&mut tape, &self.store, &inputs, Some(&mut rng))?;
            let lf = tape.value(losses.feat).item()?;
            let lp = tape.value(losses.pos).item()?;
            let lt = tape.value(losses.total).item()?;
            for (v, component) in [(lf, "feature"), (lp, "position"), (lt, "total")] {
                if !v.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, component });
                }
            }
            let grads = tape.gradients(losses.total, &self.store)?;
            if !grads.all_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    component: "gradient",
                });
            }
            self.adam.step(&mut self.store, &grads)?;
            sf += lf;
            sp += lp;
            st += lt;
        }
        let nb = batches.len().max(1) as f64;
        self.epoch = epoch;
        let rec = EpochRecord {
            epoch,
            loss_feat: sf / nb,
            loss_pos: sp / nb,
            loss_total: st / nb,
            seconds: started.elapsed().as_secs_f64(),
        };
        self.log.records.push(rec);
        Ok(rec)
    }

    /// Trains until `cfg.epochs` epochs are complete, saving a checkpoint
    /// every `every` epochs and at the end when `dir` is given.
    pub fn run(&mut self, data: &[PreparedGraph], dir: Option<&Path>, every: usize) -> Result<()> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        while self.epoch < self.cfg.epochs {
            let rec = self.train_epoch(data)?;
            log::debug!(
                "epoch {} feat {:.6} pos {:.6} total {:.6}",
                rec.epoch,
                rec.loss_feat,
                rec.loss_pos,
                rec.loss_total
            );
            if let Some(d) = dir {
                if (every > 0 && self.epoch % every == 0) || self.epoch == self.cfg.epochs {
                    let path = d.join(format!("epoch_{:05}.paew", self.epoch));
                    self.checkpoint().save(&path)?;
                    self.log.checkpoints.push(path);
                }
            }
        }
        Ok(())
    }

    /// Parameters, Adam moments, step count, epoch and encoder shape.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::from_store(&self.store);
        for (i, (_, name, _)) in self.store.iter().enumerate() {
            ck.tensors
                .push((format!("adam.m/{name}"), self.adam.first_moments()[i].clone()));
        }
        for (i, (_, name, _)) in self.store.iter().enumerate() {
            ck.tensors
                .push((format!("adam.v/{name}"), self.adam.second_moments()[i].clone()));
        }
        ck.meta.push(("epoch".into(), self.epoch.to_string()));
        ck.meta
            .push(("adam_step".into(), self.adam.step_count().to_string()));
        ck.meta.extend(encoder_meta(&self.cfg.encoder));
        ck
    }

    /// Continues a run from a checkpoint written by [`Trainer::checkpoint`].
    /// `cfg` must describe the same model.
    pub fn resume(cfg: RunConfig, ck: &Checkpoint) -> Result<Self> {
        let saved = encoder_from_meta(ck)?;
        if saved != cfg.encoder {
            return Err(Error::Argument(
                "checkpoint encoder configuration differs from the run configuration".into(),
            ));
        }
        let mut t = Self::new(cfg)?;
        ck.restore_into(&mut t.store)?;
        let mut first = Vec::new();
        let mut second = Vec::new();
        for (_, name, p) in t.store.iter() {
            let m = ck.tensor(&format!("adam.m/{name}"));
            let v = ck.tensor(&format!("adam.v/{name}"));
            match (m, v) {
                (Some(m), Some(v)) if m.shape() == p.shape() && v.shape() == p.shape() => {
                    first.push(m.clone());
                    second.push(v.clone());
                }
                _ => {
                    return Err(Error::Data(format!(
                        "checkpoint lacks optimizer state for {name}"
                    )))
                }
            }
        }
        let meta_usize = |key: &str| -> Result<u64> {
            ck.meta(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Data(format!("checkpoint meta {key:?} missing")))
        };
        t.epoch = meta_usize("epoch")? as usize;
        let step = meta_usize("adam_step")?;
        t.adam = AdamState::from_parts(t.cfg.adam, step, first, second);
        Ok(t)
    }
}

/// Encoder shape as checkpoint metadata.
pub fn encoder_meta(cfg: &EncoderConfig) -> Vec<(String, String)> {
    let mut m = vec![
        ("encoder.input_dim", cfg.input_dim.to_string()),
        ("encoder.layers", cfg.layers.to_string()),
        ("encoder.hidden", cfg.hidden.to_string()),
        ("encoder.attention", cfg.attention.to_string()),
        ("encoder.heads", cfg.heads.to_string()),
        ("encoder.rbf_count", cfg.rbf_count.to_string()),
        ("encoder.rbf_lo", format!("{:?}", cfg.rbf_lo)),
        ("encoder.rbf_hi", format!("{:?}", cfg.rbf_hi)),
        ("encoder.node_dropout", format!("{:?}", cfg.node_dropout)),
        ("encoder.edge_dropout", format!("{:?}", cfg.edge_dropout)),
        ("encoder.activation", cfg.activation.to_string()),
    ];
    if let Some(s) = cfg.rbf_sigma {
        m.push(("encoder.rbf_sigma", format!("{s:?}")));
    }
    if let Some(v) = cfg.edge_vocab {
        m.push(("encoder.edge_vocab", v.to_string()));
    }
    m.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

pub fn encoder_from_meta(ck: &Checkpoint) -> Result<EncoderConfig> {
    fn get<T: std::str::FromStr>(ck: &Checkpoint, key: &str) -> Result<T> {
        ck.meta(key)
            .ok_or_else(|| Error::Data(format!("checkpoint meta {key:?} missing")))?
            .parse()
            .map_err(|_| Error::Data(format!("checkpoint meta {key:?} malformed")))
    }
    fn opt<T: std::str::FromStr>(ck: &Checkpoint, key: &str) -> Result<Option<T>> {
        match ck.meta(key) {
            None => Ok(None),
            Some(_) => get(ck, key).map(Some),
        }
    }
    let attention: String = get(ck, "encoder.attention")?;
    Ok(EncoderConfig {
        input_dim: get(ck, "encoder.input_dim")?,
        layers: get(ck, "encoder.layers")?,
        hidden: get(ck, "encoder.hidden")?,
        attention: attention.parse::<AttentionKind>()?,
        heads: get(ck, "encoder.heads")?,
        rbf_count: get(ck, "encoder.rbf_count")?,
        rbf_lo: get(ck, "encoder.rbf_lo")?,
        rbf_hi: get(ck, "encoder.rbf_hi")?,
        rbf_sigma: opt(ck, "encoder.rbf_sigma")?,
        node_dropout: get(ck, "encoder.node_dropout")?,
        edge_dropout: get(ck, "encoder.edge_dropout")?,
        edge_vocab: opt(ck, "encoder.edge_vocab")?,
        activation: get(ck, "encoder.activation")?,
    })
}

/// Rebuilds a model from a checkpoint for inference (optimizer state is
/// ignored).
pub fn load_model(ck: &Checkpoint) -> Result<(GraphPae, ParamStore)> {
    let cfg = encoder_from_meta(ck)?;
    let mut store = ParamStore::new();
    let model = GraphPae::new(cfg, LossWeights::default(), &mut store, &mut init_rng(0))?;
    ck.restore_into(&mut store)?;
    Ok((model, store))
}

/// Prepares spectra and trains from scratch.
pub fn pretrain(data: TrainData<'_>, cfg: RunConfig) -> Result<Trainer> {
    if cfg.encoder.input_dim != data.feature_dim() {
        return Err(Error::Argument(format!(
            "encoder input width {} does not match feature width {}",
            cfg.encoder.input_dim,
            data.feature_dim()
        )));
    }
    let prepared = prepare(data, cfg.k, cfg.seed)?;
    let mut t = Trainer::new(cfg)?;
    t.run(&prepared, None, 0)?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{make_molecules, make_sbm, SbmConfig};
    use crate::graph::TaskKind;

    fn small_cfg(d: usize, epochs: usize) -> RunConfig {
        let mut cfg = RunConfig::new(d);
        cfg.epochs = epochs;
        cfg.k = 6;
        cfg.encoder.hidden = 16;
        cfg.encoder.heads = 2;
        cfg.encoder.rbf_count = 16;
        cfg.adam = AdamConfig::with_lr(1e-2);
        cfg.seed = 3;
        cfg
    }

    fn sbm() -> Graph {
        let mut cfg = SbmConfig::new(vec![15, 15], 0.4, 0.05, 1);
        cfg.feature_dim = 4;
        make_sbm(&cfg).unwrap()
    }

    #[test]
    fn same_seed_same_losses() {
        let g = sbm();
        let a = pretrain(TrainData::Node(&g), small_cfg(4, 3)).unwrap();
        let b = pretrain(TrainData::Node(&g), small_cfg(4, 3)).unwrap();
        assert_eq!(a.log.losses(), b.log.losses());
        assert_eq!(a.log.records.len(), 3);
    }

    #[test]
    fn resume_matches_uninterrupted() {
        let g = sbm();
        let data = prepare(TrainData::Node(&g), 6, 3).unwrap();
        let mut full = Trainer::new(small_cfg(4, 4)).unwrap();
        full.run(&data, None, 0).unwrap();

        let mut first = Trainer::new(small_cfg(4, 2)).unwrap();
        first.run(&data, None, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.paew");
        first.checkpoint().save(&path).unwrap();
        let ck = Checkpoint::load(&path).unwrap();
        let mut rest = Trainer::resume(small_cfg(4, 4), &ck).unwrap();
        assert_eq!(rest.epoch, 2);
        rest.run(&data, None, 0).unwrap();
        assert_eq!(full.log.losses()[2..], rest.log.losses()[..]);
        for ((_, n, a), (_, _, b)) in full.store.iter().zip(rest.store.iter()) {
            assert_eq!(a, b, "{n}");
        }
    }

    #[test]
    fn zero_alpha_leaves_position_decoder_untouched() {
        let g = sbm();
        let mut cfg = small_cfg(4, 3);
        cfg.weights.alpha = 0.0;
        let data = prepare(TrainData::Node(&g), 6, 3).unwrap();
        let mut t = Trainer::new(cfg).unwrap();
        let before: Vec<Tensor> = t
            .model
            .position_decoder_params()
            .iter()
            .map(|&id| t.store.get(id).clone())
            .collect();
        t.run(&data, None, 0).unwrap();
        for (id, b) in t.model.position_decoder_params().iter().zip(&before) {
            assert_eq!(t.store.get(*id), b);
        }
    }

    #[test]
    fn collection_batches_train() {
        let c = make_molecules(10, TaskKind::GraphClassification, 2).unwrap();
        let mut cfg = small_cfg(c.feature_dim(), 2);
        cfg.batch_size = 4;
        cfg.encoder.edge_vocab = c.edge_vocab();
        let t = pretrain(TrainData::Collection(&c), cfg).unwrap();
        assert!(t.log.records.iter().all(|r| r.loss_total.is_finite()));
    }

    #[test]
    fn checkpoint_encoder_meta_round_trips() {
        let t = Trainer::new(small_cfg(4, 1)).unwrap();
        let ck = t.checkpoint();
        assert_eq!(encoder_from_meta(&ck).unwrap(), t.cfg.encoder);
        let (_, store) = load_model(&ck).unwrap();
        assert_eq!(store.len(), t.store.len());
    }

    #[test]
    fn mismatched_encoder_rejected_on_resume() {
        let t = Trainer::new(small_cfg(4, 1)).unwrap();
        let mut cfg = small_cfg(4, 2);
        cfg.encoder.hidden = 8;
        assert!(Trainer::resume(cfg, &t.checkpoint()).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let log = TrainLog {
            records: vec![EpochRecord {
                epoch: 1,
                loss_feat: 0.5,
                loss_pos: 0.25,
                loss_total: 0.525,
                seconds: 0.1,
            }],
            checkpoints: vec![],
        };
        let csv = log.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(TrainLog::HEADER));
        assert!(lines.next().unwrap().starts_with("1,0.5,0.25,0.525,"));
    }
}
