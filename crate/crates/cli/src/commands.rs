use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use graphpae::analysis::{self, AnalysisConfig, MaskKind};
use graphpae::eval::{
    embed_graphs, embed_nodes, format_mean_std, over_seeds, probe_split, random_split,
    write_results, Metric, Readout, Targets,
};
use graphpae::io::{save_collection, write_edge_list, write_matrix_csv};
use graphpae::model::GraphPae;
use graphpae::objectives::LossWeights;
use graphpae::spectral::uniform_bands;
use graphpae::synth::{make_molecules, make_random_graph, make_sbm, FeatureMode, SbmConfig};
use graphpae::trainer::{
    encoder_from_meta, init_rng, load_model, prepare, TrainData, Trainer,
};
use graphpae::{Error, Graph, TaskKind};
use graphpae_tensor::{Checkpoint, ParamStore};

use crate::config::Settings;
use crate::dataset::{self, Dataset};
use crate::{CliError, ConfigArgs};

type Result<T> = std::result::Result<T, CliError>;

pub const CONFIG_FILE: &str = "config.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const LOG_FILE: &str = "train_log.csv";
pub const MODEL_FILE: &str = "model.paew";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| Error::io(path, e).into()
}

fn settings(base: Option<&Path>, args: &ConfigArgs, shorthands: &[(&str, Option<String>)]) -> Result<Settings> {
    let mut s = Settings::default();
    if let Some(p) = base {
        s.apply_file(p)?;
    }
    if let Some(p) = &args.config {
        s.apply_file(p)?;
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        s.set(k.trim(), v)?;
    }
    for (k, v) in shorthands {
        if let Some(v) = v {
            s.set(k, v)?;
        }
    }
    s.apply_env(std::env::vars())?;
    Ok(s)
}

fn dataset_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

#[derive(Debug, Args)]
pub struct SpectralArgs {
    /// Node-level dataset directory.
    #[arg(long)]
    dataset: PathBuf,
    /// feature | edge | offset
    #[arg(long, default_value = "feature")]
    mask: MaskKind,
    #[arg(long, default_value_t = 0.2)]
    ratio: f64,
    /// Offset half-width.
    #[arg(long, default_value_t = 0.01)]
    noise_scale: f64,
    /// Explicit bands as `lo:hi,lo:hi`; otherwise uniform bands over [0, 2].
    #[arg(long)]
    bands: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    band_width: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_bands(text: &str) -> Result<Vec<(f64, f64)>> {
    text.split(',')
        .map(|b| {
            let bad = || CliError::Config(format!("band {b:?} is not lo:hi"));
            let (lo, hi) = b.split_once(':').ok_or_else(bad)?;
            Ok((lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}

pub fn spectral_analysis(a: SpectralArgs) -> Result<()> {
    dataset::require_dir(&a.dataset)?;
    let bands = match &a.bands {
        Some(t) => parse_bands(t)?,
        None if a.band_width > 0.0 => uniform_bands(0.0, 2.0, a.band_width),
        None => return Err(CliError::Config("band width must be > 0".into())),
    };
    let cfg = AnalysisConfig {
        kind: a.mask,
        ratio: a.ratio,
        noise_scale: a.noise_scale,
        bands,
        seed: a.seed,
    };
    cfg.validate()?;
    let Dataset::Node(g) = dataset::load(&a.dataset, "node-classification")? else {
        unreachable!("node task always yields a node dataset")
    };
    let result = analysis::spectral_analysis(&g, &cfg)?;
    result.write_csv(&a.out)?;
    log::info!("wrote {} bands to {}", cfg.bands.len(), a.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory for config, manifest, log and checkpoints.
    #[arg(long)]
    run_dir: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    mask_ratio: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    k: Option<String>,
    /// gatedgcn | gat
    #[arg(long)]
    attention: Option<String>,
}

pub fn pretrain(a: PretrainArgs) -> Result<()> {
    let s = settings(
        None,
        &a.cfg,
        &[
            ("epochs", a.epochs),
            ("mask_ratio", a.mask_ratio),
            ("seed", a.seed),
            ("lr", a.lr),
            ("alpha", a.alpha),
            ("k", a.k),
            ("encoder.attention", a.attention),
        ],
    )?;
    dataset::require_dir(&a.dataset)?;
    let data = dataset::load(&a.dataset, s.get("task"))?;
    let cfg = s.run_config(data.feature_dim(), data.edge_vocab())?;
    let every: usize = s.parse("checkpoint_every")?;

    fs::create_dir_all(&a.run_dir).map_err(io_err(&a.run_dir))?;
    let cfg_path = a.run_dir.join(CONFIG_FILE);
    fs::write(&cfg_path, s.to_text()).map_err(io_err(&cfg_path))?;
    let manifest = format!(
        "version={}\nseed={}\ndataset={}\ninput_sha256={}\n",
        env!("CARGO_PKG_VERSION"),
        cfg.seed,
        a.dataset.display(),
        dataset::content_hash(&a.dataset)?
    );
    let man_path = a.run_dir.join(MANIFEST_FILE);
    fs::write(&man_path, manifest).map_err(io_err(&man_path))?;

    let train_data = match &data {
        Dataset::Node(g) => TrainData::Node(g),
        Dataset::Collection(c) => TrainData::Collection(c),
    };
    let prepared = prepare(train_data, cfg.k, cfg.seed)?;
    let epochs = cfg.epochs;
    let mut t = Trainer::new(cfg)?;
    t.run(&prepared, Some(&a.run_dir.join("checkpoints")), every)?;
    t.log.write_csv(&a.run_dir.join(LOG_FILE))?;
    t.checkpoint().save(a.run_dir.join(MODEL_FILE))?;
    if let (Some(first), Some(last)) = (t.log.records.first(), t.log.records.last()) {
        log::info!(
            "{epochs} epochs: loss {:.6} -> {:.6}",
            first.loss_total,
            last.loss_total
        );
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// Run directory written by `pretrain`; its config is the base layer.
    #[arg(long)]
    run_dir: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Defaults to the final model of the run.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Number of probe seeds.
    #[arg(long)]
    seeds: Option<String>,
    /// Probe a freshly initialized encoder of the same shape instead.
    #[arg(long)]
    random_init: bool,
    /// Results CSV; defaults into the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn probe(a: ProbeArgs) -> Result<()> {
    let base = a.run_dir.join(CONFIG_FILE);
    let s = settings(
        base.is_file().then_some(base.as_path()),
        &a.cfg,
        &[("probe.seeds", a.seeds)],
    )?;
    let probe_cfg = s.probe_config()?;
    let readout: Readout = s.parse("probe.readout")?;
    let seeds: u64 = s.parse("probe.seeds")?;
    let (train_frac, valid_frac): (f64, f64) = (s.parse("probe.train_frac")?, s.parse("probe.valid_frac")?);
    dataset::require_dir(&a.dataset)?;
    let ck_path = a.checkpoint.clone().unwrap_or_else(|| a.run_dir.join(MODEL_FILE));
    let ck = Checkpoint::load(&ck_path)?;
    let enc = encoder_from_meta(&ck)?;
    let data = dataset::load(&a.dataset, s.get("task"))?;
    if enc.input_dim != data.feature_dim() {
        return Err(Error::Data(format!(
            "checkpoint encoder expects feature dimension {} but dataset has dimension {}",
            enc.input_dim,
            data.feature_dim()
        ))
        .into());
    }
    let (model, store) = if a.random_init {
        let mut store = ParamStore::new();
        let seed: u64 = s.parse("seed")?;
        let m = GraphPae::new(enc, LossWeights::default(), &mut store, &mut init_rng(seed))?;
        (m, store)
    } else {
        load_model(&ck)?
    };

    let k: usize = s.parse("k")?;
    let seed: u64 = s.parse("seed")?;
    let h = match &data {
        Dataset::Node(g) => {
            let p = prepare(TrainData::Node(g), k, seed)?;
            embed_nodes(&model, &store, &p[0])?
        }
        Dataset::Collection(c) => {
            let p = prepare(TrainData::Collection(c), k, seed)?;
            embed_graphs(&model, &store, &p, readout)?
        }
    };
    let labels = data
        .labels()
        .ok_or_else(|| Error::Data(format!("{} has no labels to probe", a.dataset.display())))?;
    let y = match probe_cfg.metric {
        Metric::Accuracy => Targets::classes_from_column(labels)?,
        _ => Targets::Values(labels.clone()),
    };
    let seed_list: Vec<u64> = (0..seeds).collect();
    let values = over_seeds(&seed_list, |s| {
        let split = match dataset::seed_split(&a.dataset, s)? {
            Some(sp) => sp,
            None => match data.split() {
                Some(sp) => sp.clone(),
                None => random_split(data.rows(), train_frac, valid_frac, s)?,
            },
        };
        probe_split(&h, &y, &split, probe_cfg)
    })?;
    let rows: Vec<(u64, f64)> = seed_list.iter().copied().zip(values.iter().copied()).collect();
    let name = dataset_name(&a.dataset);
    let default_out = if a.random_init { "probe_random_init.csv" } else { "probe.csv" };
    let out = a.out.unwrap_or_else(|| a.run_dir.join(default_out));
    write_results(&out, &name, probe_cfg.metric, &rows)?;
    println!("{name} {} {}", probe_cfg.metric, format_mean_std(&values));
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthKind {
    Sbm,
    Random,
    Molecules,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    kind: SynthKind,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// SBM block sizes.
    #[arg(long, default_value = "50,50", value_delimiter = ',')]
    blocks: Vec<usize>,
    #[arg(long, default_value_t = 0.2)]
    p_in: f64,
    #[arg(long, default_value_t = 0.02)]
    p_out: f64,
    /// SBM features: smooth | block-onehot
    #[arg(long, default_value = "smooth")]
    features: String,
    #[arg(long, default_value_t = 16)]
    feature_dim: usize,
    /// Random-graph node count.
    #[arg(long, default_value_t = 100)]
    nodes: usize,
    /// Random-graph edge probability.
    #[arg(long, default_value_t = 0.05)]
    p: f64,
    /// Molecule count.
    #[arg(long, default_value_t = 200)]
    count: usize,
    /// graph-classification | graph-regression
    #[arg(long, default_value = "graph-classification")]
    task: String,
}

fn write_node_dataset(g: &Graph, dir: &Path) -> Result<()> {
    write_edge_list(g, &dir.join("edges.txt"))?;
    write_matrix_csv(g.features(), &dir.join("features.csv"))?;
    if let Some(l) = g.labels() {
        write_matrix_csv(l, &dir.join("labels.csv"))?;
    }
    Ok(())
}

pub fn make_synth(a: SynthArgs) -> Result<()> {
    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    match a.kind {
        SynthKind::Sbm => {
            let mut cfg = SbmConfig::new(a.blocks.clone(), a.p_in, a.p_out, a.seed)
                .with_features(a.features.parse::<FeatureMode>()?);
            cfg.feature_dim = a.feature_dim;
            write_node_dataset(&make_sbm(&cfg)?, &a.out)?;
        }
        SynthKind::Random => {
            let g = make_random_graph(a.nodes, a.p, a.feature_dim, a.seed)?;
            write_node_dataset(&g, &a.out)?;
        }
        SynthKind::Molecules => {
            let task: TaskKind = a.task.parse()?;
            if task == TaskKind::NodeClassification {
                return Err(CliError::Config("molecules need a graph-level task".into()));
            }
            save_collection(&make_molecules(a.count, task, a.seed)?, &a.out)?;
        }
    }
    log::info!("wrote {:?} dataset to {}", a.kind, a.out.display());
    Ok(())
}
