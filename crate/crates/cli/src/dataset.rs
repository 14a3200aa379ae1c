//! Dataset directories on disk.
//!
//! A node-level dataset holds `edges.txt`, `features.csv` and optionally
//! `labels.csv` and `split.txt`. A directory with `graph_indicator.txt` is a
//! graph collection.

use std::fs;
use std::path::{Path, PathBuf};

use graphpae::io::{load_collection, load_graph, read_split, LoadOptions};
use graphpae::{Error, Graph, GraphCollection, Split, TaskKind};
use graphpae_tensor::Tensor;
use sha2::{Digest, Sha256};

pub enum Dataset {
    Node(Graph),
    Collection(GraphCollection),
}

impl Dataset {
    pub fn feature_dim(&self) -> usize {
        match self {
            Dataset::Node(g) => g.feature_dim(),
            Dataset::Collection(c) => c.feature_dim(),
        }
    }

    pub fn edge_vocab(&self) -> Option<usize> {
        match self {
            Dataset::Node(g) => g.edge_types().map(|t| t.iter().max().map_or(1, |m| m + 1)),
            Dataset::Collection(c) => c.edge_vocab(),
        }
    }

    pub fn labels(&self) -> Option<&Tensor> {
        match self {
            Dataset::Node(g) => g.labels(),
            Dataset::Collection(c) => c.labels(),
        }
    }

    pub fn split(&self) -> Option<&Split> {
        match self {
            Dataset::Node(g) => g.split(),
            Dataset::Collection(c) => c.split(),
        }
    }

    /// Rows seen by the probe: nodes or graphs.
    pub fn rows(&self) -> usize {
        match self {
            Dataset::Node(g) => g.num_nodes(),
            Dataset::Collection(c) => c.len(),
        }
    }
}

/// Fails early when the directory is missing.
pub fn require_dir(dir: &Path) -> Result<(), Error> {
    if !dir.is_dir() {
        return Err(Error::Data(format!("dataset directory {} not found", dir.display())));
    }
    Ok(())
}

fn optional(dir: &Path, name: &str) -> Option<PathBuf> {
    let p = dir.join(name);
    p.is_file().then_some(p)
}

/// `task` is `auto` or a [`TaskKind`] name.
pub fn load(dir: &Path, task: &str) -> Result<Dataset, Error> {
    require_dir(dir)?;
    let is_collection = dir.join("graph_indicator.txt").is_file();
    let kind = match task {
        "auto" if is_collection => TaskKind::GraphClassification,
        "auto" => TaskKind::NodeClassification,
        t => t.parse()?,
    };
    match (kind, is_collection) {
        (TaskKind::NodeClassification, false) => {
            let opts = LoadOptions {
                label_path: optional(dir, "labels.csv"),
                split_path: optional(dir, "split.txt"),
                drop_self_loops: false,
            };
            let (g, _) = load_graph(&dir.join("edges.txt"), &dir.join("features.csv"), &opts)?;
            Ok(Dataset::Node(g))
        }
        (TaskKind::NodeClassification, true) => Err(Error::Data(format!(
            "{} holds a graph collection, not a node-level graph",
            dir.display()
        ))),
        (_, true) => Ok(Dataset::Collection(load_collection(dir, kind)?)),
        (_, false) => Err(Error::Data(format!(
            "{} has no graph_indicator.txt for a graph-level task",
            dir.display()
        ))),
    }
}

/// `split_{seed}.txt` when present.
pub fn seed_split(dir: &Path, seed: u64) -> Result<Option<Split>, Error> {
    optional(dir, &format!("split_{seed}.txt")).map(|p| read_split(&p)).transpose()
}

/// SHA-256 over the sorted file names and contents of `dir`.
pub fn content_hash(dir: &Path) -> Result<String, Error> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    names.sort();
    let mut h = Sha256::new();
    for p in names {
        let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        h.update(p.file_name().unwrap_or_default().as_encoded_bytes());
        h.update([0]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
