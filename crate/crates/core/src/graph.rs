//! Immutable CSR graphs with node features.

use graphpae_tensor::Tensor;

use crate::error::{Error, Result};

/// Node (or graph) index sets for evaluation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn is_disjoint(&self) -> bool {
        let mut all: Vec<usize> = self
            .train
            .iter()
            .chain(&self.valid)
            .chain(&self.test)
            .copied()
            .collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        all.len() == n
    }
}

/// Statistics gathered while symmetrizing an edge list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuildReport {
    /// Input pairs dropped because the same undirected edge was already seen.
    pub duplicates: usize,
    pub self_loops: usize,
    /// Self-loops removed because of [`BuildOptions::drop_self_loops`].
    pub self_loops_dropped: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildOptions {
    pub drop_self_loops: bool,
}

/// Undirected graph stored as directed CSR (each edge in both directions,
/// a self-loop once).
///
/// Edge `e` runs from `sources()[e]` (the row, i.e. the node that
/// aggregates) to `targets()[e]` (the neighbour). Targets within a row are
/// strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    sources: Vec<usize>,
    features: Tensor,
    edge_types: Option<Vec<usize>>,
    labels: Option<Tensor>,
    split: Option<Split>,
}

impl Graph {
    /// Builds a graph from undirected pairs; duplicates (in either
    /// orientation) are collapsed.
    pub fn from_edges(
        num_nodes: usize,
        edges: &[(usize, usize)],
        features: Tensor,
    ) -> Result<(Self, BuildReport)> {
        let typed: Vec<_> = edges.iter().map(|&(s, d)| (s, d, None)).collect();
        Self::build(num_nodes, &typed, features, BuildOptions::default())
    }

    /// Like [`Graph::from_edges`] with a categorical id per edge. When a
    /// pair appears more than once the first id wins.
    pub fn from_typed_edges(
        num_nodes: usize,
        edges: &[(usize, usize, usize)],
        features: Tensor,
    ) -> Result<(Self, BuildReport)> {
        let typed: Vec<_> = edges.iter().map(|&(s, d, t)| (s, d, Some(t))).collect();
        Self::build(num_nodes, &typed, features, BuildOptions::default())
    }

    pub(crate) fn build(
        num_nodes: usize,
        edges: &[(usize, usize, Option<usize>)],
        features: Tensor,
        opts: BuildOptions,
    ) -> Result<(Self, BuildReport)> {
        if features.rows() != num_nodes {
            return Err(Error::Data(format!(
                "feature matrix has {} rows for {num_nodes} nodes",
                features.rows()
            )));
        }
        if !features.all_finite() {
            return Err(Error::Data("non-finite value in node features".into()));
        }
        let typed = edges.iter().any(|e| e.2.is_some());
        if typed && edges.iter().any(|e| e.2.is_none()) {
            return Err(Error::Data("edge types must be given for all edges or none".into()));
        }
        let mut report = BuildReport::default();
        let mut seen = std::collections::HashSet::new();
        let mut directed: Vec<(usize, usize, usize)> = Vec::with_capacity(edges.len() * 2);
        for &(s, d, t) in edges {
            for v in [s, d] {
                if v >= num_nodes {
                    return Err(Error::Range {
                        what: "node",
                        index: v,
                        bound: num_nodes,
                    });
                }
            }
            let key = (s.min(d), s.max(d));
            if !seen.insert(key) {
                report.duplicates += 1;
                continue;
            }
            if s == d {
                report.self_loops += 1;
                if opts.drop_self_loops {
                    report.self_loops_dropped += 1;
                    continue;
                }
                directed.push((s, s, t.unwrap_or(0)));
            } else {
                directed.push((s, d, t.unwrap_or(0)));
                directed.push((d, s, t.unwrap_or(0)));
            }
        }
        directed.sort_unstable_by_key(|&(s, d, _)| (s, d));

        let mut row_ptr = vec![0usize; num_nodes + 1];
        for &(s, _, _) in &directed {
            row_ptr[s + 1] += 1;
        }
        for i in 0..num_nodes {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col: Vec<usize> = directed.iter().map(|e| e.1).collect();
        let sources: Vec<usize> = directed.iter().map(|e| e.0).collect();
        let edge_types = typed.then(|| directed.iter().map(|e| e.2).collect());
        Ok((
            Self {
                row_ptr,
                col,
                sources,
                features,
                edge_types,
                labels: None,
                split: None,
            },
            report,
        ))
    }

    /// Reassembles a graph from raw CSR arrays, validating every invariant.
    pub fn from_csr(row_ptr: Vec<usize>, col: Vec<usize>, features: Tensor) -> Result<Self> {
        let n = row_ptr.len().checked_sub(1).ok_or_else(|| {
            Error::Data("CSR row pointer array must have N+1 entries".into())
        })?;
        if row_ptr[0] != 0 || row_ptr[n] != col.len() {
            return Err(Error::Data("CSR row pointers do not span the column array".into()));
        }
        if features.rows() != n {
            return Err(Error::Data(format!(
                "feature matrix has {} rows for {n} nodes",
                features.rows()
            )));
        }
        if !features.all_finite() {
            return Err(Error::Data("non-finite value in node features".into()));
        }
        let mut sources = Vec::with_capacity(col.len());
        for i in 0..n {
            if row_ptr[i] > row_ptr[i + 1] {
                return Err(Error::Data(format!("CSR row pointer decreases at row {i}")));
            }
            let row = &col[row_ptr[i]..row_ptr[i + 1]];
            for (k, &j) in row.iter().enumerate() {
                if j >= n {
                    return Err(Error::Range {
                        what: "node",
                        index: j,
                        bound: n,
                    });
                }
                if k > 0 && row[k - 1] >= j {
                    return Err(Error::Data(format!(
                        "CSR columns not strictly increasing in row {i}"
                    )));
                }
                sources.push(i);
            }
        }
        let g = Self {
            row_ptr,
            col,
            sources,
            features,
            edge_types: None,
            labels: None,
            split: None,
        };
        for e in 0..g.num_edges() {
            if !g.has_edge(g.col[e], g.sources[e]) {
                return Err(Error::Data(format!(
                    "edge ({}, {}) has no reverse",
                    g.sources[e], g.col[e]
                )));
            }
        }
        Ok(g)
    }

    pub fn with_labels(mut self, labels: Tensor) -> Result<Self> {
        if labels.rows() != self.num_nodes() {
            return Err(Error::Data(format!(
                "label file has {} rows for {} nodes",
                labels.rows(),
                self.num_nodes()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_split(mut self, split: Split) -> Result<Self> {
        let n = self.num_nodes();
        for &i in split.train.iter().chain(&split.valid).chain(&split.test) {
            if i >= n {
                return Err(Error::Range {
                    what: "split",
                    index: i,
                    bound: n,
                });
            }
        }
        self.split = Some(split);
        Ok(self)
    }

    /// Attaches one categorical id per stored edge; the ids must agree on
    /// both directions of an edge.
    pub fn with_edge_types(mut self, types: Vec<usize>) -> Result<Self> {
        if types.len() != self.num_edges() {
            return Err(Error::Data(format!(
                "{} edge types for {} stored edges",
                types.len(),
                self.num_edges()
            )));
        }
        for e in 0..self.num_edges() {
            let rev = self.edge_id(self.col[e], self.sources[e]).unwrap_or(e);
            if types[rev] != types[e] {
                return Err(Error::Data("edge type differs between directions".into()));
            }
        }
        self.edge_types = Some(types);
        Ok(self)
    }

    pub fn with_features(mut self, features: Tensor) -> Result<Self> {
        if features.rows() != self.num_nodes() || !features.all_finite() {
            return Err(Error::Data("replacement features have wrong shape or non-finite values".into()));
        }
        self.features = features;
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// Number of stored directed edges.
    pub fn num_edges(&self) -> usize {
        self.col.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> Option<&Tensor> {
        self.labels.as_ref()
    }

    pub fn split(&self) -> Option<&Split> {
        self.split.as_ref()
    }

    pub fn edge_types(&self) -> Option<&[usize]> {
        self.edge_types.as_deref()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    /// Aggregating endpoint of each stored edge.
    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    /// Neighbour endpoint of each stored edge.
    pub fn targets(&self) -> &[usize] {
        &self.col
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn edge_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// Stored edge id of `(i, j)`, if present.
    pub fn edge_id(&self, i: usize, j: usize) -> Option<usize> {
        self.neighbors(i)
            .binary_search(&j)
            .ok()
            .map(|k| self.row_ptr[i] + k)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edge_id(i, j).is_some()
    }

    /// `D_ii` = number of stored edges leaving `i`.
    pub fn degree_vector(&self) -> Vec<f64> {
        (0..self.num_nodes())
            .map(|i| (self.row_ptr[i + 1] - self.row_ptr[i]) as f64)
            .collect()
    }

    /// Each undirected edge once as `(min, max)` plus its type id.
    pub fn undirected_edges(&self) -> Vec<(usize, usize, Option<usize>)> {
        (0..self.num_edges())
            .filter(|&e| self.sources[e] <= self.col[e])
            .map(|e| {
                (
                    self.sources[e],
                    self.col[e],
                    self.edge_types.as_ref().map(|t| t[e]),
                )
            })
            .collect()
    }

    /// Relabels node `i` as `perm[i]`, carrying features, labels, edge types
    /// and splits along.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        let mut check = perm.to_vec();
        check.sort_unstable();
        if perm.len() != n || check.iter().enumerate().any(|(i, &p)| i != p) {
            return Err(Error::Argument("not a permutation of the node set".into()));
        }
        let edges: Vec<_> = self
            .undirected_edges()
            .into_iter()
            .map(|(s, d, t)| (perm[s], perm[d], t))
            .collect();
        let mut feats = Tensor::zeros(n, self.feature_dim());
        for i in 0..n {
            feats.row_mut(perm[i]).copy_from_slice(self.features.row(i));
        }
        let (mut g, _) = Self::build(n, &edges, feats, BuildOptions::default())?;
        if let Some(l) = &self.labels {
            let mut out = Tensor::zeros(n, l.cols());
            for i in 0..n {
                out.row_mut(perm[i]).copy_from_slice(l.row(i));
            }
            g.labels = Some(out);
        }
        if let Some(s) = &self.split {
            let map = |v: &Vec<usize>| v.iter().map(|&i| perm[i]).collect();
            g.split = Some(Split {
                train: map(&s.train),
                valid: map(&s.valid),
                test: map(&s.test),
            });
        }
        Ok(g)
    }

    /// Block-diagonal union; returns the union and each part's node offset.
    pub fn disjoint_union(parts: &[&Graph]) -> Result<(Graph, Vec<usize>)> {
        let d = parts.first().map_or(0, |g| g.feature_dim());
        let typed = parts.first().is_some_and(|g| g.edge_types.is_some());
        let mut offsets = Vec::with_capacity(parts.len());
        let mut row_ptr = vec![0usize];
        let mut col = Vec::new();
        let mut sources = Vec::new();
        let mut types = Vec::new();
        let mut feats = Vec::new();
        let mut off = 0;
        for g in parts {
            if g.feature_dim() != d || g.edge_types.is_some() != typed {
                return Err(Error::Data("graphs in a batch disagree on feature dim or edge typing".into()));
            }
            offsets.push(off);
            let base = col.len();
            for i in 0..g.num_nodes() {
                row_ptr.push(base + g.row_ptr[i + 1]);
            }
            col.extend(g.col.iter().map(|&j| j + off));
            sources.extend(g.sources.iter().map(|&i| i + off));
            if let Some(t) = &g.edge_types {
                types.extend_from_slice(t);
            }
            feats.extend_from_slice(g.features.data());
            off += g.num_nodes();
        }
        let features = Tensor::from_vec(off, d, feats)?;
        Ok((
            Graph {
                row_ptr,
                col,
                sources,
                features,
                edge_types: typed.then_some(types),
                labels: None,
                split: None,
            },
            offsets,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    NodeClassification,
    GraphClassification,
    GraphRegression,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "node-classification" => Ok(Self::NodeClassification),
            "graph-classification" => Ok(Self::GraphClassification),
            "graph-regression" => Ok(Self::GraphRegression),
            _ => Err(Error::Argument(format!("unknown task kind {s:?}"))),
        }
    }
}

/// Ordered set of graphs sharing feature dimension and edge vocabulary,
/// with optional per-graph targets.
#[derive(Debug, Clone)]
pub struct GraphCollection {
    graphs: Vec<Graph>,
    task: TaskKind,
    labels: Option<Tensor>,
    split: Option<Split>,
}

impl GraphCollection {
    pub fn new(graphs: Vec<Graph>, task: TaskKind) -> Result<Self> {
        if let Some(first) = graphs.first() {
            let d = first.feature_dim();
            let typed = first.edge_types.is_some();
            if graphs
                .iter()
                .any(|g| g.feature_dim() != d || g.edge_types.is_some() != typed)
            {
                return Err(Error::Data(
                    "graphs in a collection must share feature dimension and edge typing".into(),
                ));
            }
        }
        Ok(Self {
            graphs,
            task,
            labels: None,
            split: None,
        })
    }

    pub fn with_labels(mut self, labels: Tensor) -> Result<Self> {
        if labels.rows() != self.graphs.len() {
            return Err(Error::Data(format!(
                "{} graph labels for {} graphs",
                labels.rows(),
                self.graphs.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_split(mut self, split: Split) -> Result<Self> {
        let n = self.graphs.len();
        if let Some(&i) = split
            .train
            .iter()
            .chain(&split.valid)
            .chain(&split.test)
            .find(|&&i| i >= n)
        {
            return Err(Error::Range {
                what: "split",
                index: i,
                bound: n,
            });
        }
        self.split = Some(split);
        Ok(self)
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn labels(&self) -> Option<&Tensor> {
        self.labels.as_ref()
    }

    pub fn split(&self) -> Option<&Split> {
        self.split.as_ref()
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.graphs.first().map_or(0, Graph::feature_dim)
    }

    /// Largest edge type id plus one, or `None` for untyped edges.
    pub fn edge_vocab(&self) -> Option<usize> {
        let mut vocab = None;
        for g in &self.graphs {
            if let Some(t) = g.edge_types() {
                let m = t.iter().max().map_or(0, |m| m + 1);
                vocab = Some(vocab.unwrap_or(0usize).max(m));
            }
        }
        vocab
    }
}
