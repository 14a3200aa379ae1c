//! Text and binary graph formats.
//!
//! Text inputs: whitespace-separated edge list (`src dst [type]`, `#`
//! comments), header-less CSV for features and labels, and a three-line
//! split file (`train: 0,1,2`). The canonical binary form is `PAEG`:
//!
//! ```text
//! "PAEG" u16 version
//! u64 N, u64 E, u64 d
//! u64 row_ptr[N+1], u64 col[E], f64 features[N*d]
//! u8 has_edge_types, then u64 type[E] when set
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use graphpae_tensor::Tensor;

use crate::error::{Error, Result};
use crate::graph::{BuildOptions, BuildReport, Graph, GraphCollection, Split, TaskKind};

pub const GRAPH_MAGIC: &[u8; 4] = b"PAEG";
pub const GRAPH_VERSION: u16 = 1;

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub label_path: Option<PathBuf>,
    pub split_path: Option<PathBuf>,
    pub drop_self_loops: bool,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Reads `src dst [type]` lines.
pub fn read_edge_list(path: &Path) -> Result<Vec<(usize, usize, Option<usize>)>> {
    let reader = BufReader::new(open(path)?);
    let mut edges = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 2 && fields.len() != 3 {
            return Err(parse_err(
                path,
                lineno + 1,
                format!("expected `src dst [type]`, got {body:?}"),
            ));
        }
        let mut nums = [0usize; 3];
        for (k, f) in fields.iter().enumerate() {
            nums[k] = f
                .parse()
                .map_err(|_| parse_err(path, lineno + 1, format!("not a node index: {f:?}")))?;
        }
        edges.push((nums[0], nums[1], (fields.len() == 3).then_some(nums[2])));
    }
    Ok(edges)
}

/// Reads a header-less numeric CSV into a dense matrix.
pub fn read_matrix_csv(path: &Path) -> Result<Tensor> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(open(path)?);
    let mut data = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(rows + 1, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} columns, found {}", cols.unwrap_or(0), rec.len()),
            ));
        }
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, line, format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "{}:{line}: non-finite value {field:?}",
                    path.display()
                )));
            }
            data.push(v);
        }
        rows += 1;
    }
    Ok(Tensor::from_vec(rows, cols.unwrap_or(0), data)?)
}

pub fn read_split(path: &Path) -> Result<Split> {
    let reader = BufReader::new(open(path)?);
    let mut split = Split::default();
    let mut seen = [false; 3];
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, rest) = line
            .split_once(':')
            .ok_or_else(|| parse_err(path, lineno + 1, "expected `name: i,j,k`"))?;
        let (slot, k) = match key.trim() {
            "train" => (&mut split.train, 0),
            "valid" => (&mut split.valid, 1),
            "test" => (&mut split.test, 2),
            other => {
                return Err(parse_err(path, lineno + 1, format!("unknown split {other:?}")))
            }
        };
        if seen[k] {
            return Err(parse_err(path, lineno + 1, format!("split {key:?} repeated")));
        }
        seen[k] = true;
        for tok in rest.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            slot.push(
                tok.parse()
                    .map_err(|_| parse_err(path, lineno + 1, format!("not an index: {tok:?}")))?,
            );
        }
    }
    if !split.is_disjoint() {
        return Err(Error::Data(format!("{}: split sets overlap", path.display())));
    }
    Ok(split)
}

/// Loads a node-level graph. N is the feature row count; edges must index
/// below it.
pub fn load_graph(
    edge_path: &Path,
    feature_path: &Path,
    opts: &LoadOptions,
) -> Result<(Graph, BuildReport)> {
    let edges = read_edge_list(edge_path)?;
    let features = read_matrix_csv(feature_path)?;
    let n = features.rows();
    let (mut g, report) = Graph::build(
        n,
        &edges,
        features,
        BuildOptions {
            drop_self_loops: opts.drop_self_loops,
        },
    )?;
    if report.duplicates > 0 {
        log::info!(
            "{}: collapsed {} duplicate edges",
            edge_path.display(),
            report.duplicates
        );
    }
    if let Some(p) = &opts.label_path {
        g = g.with_labels(read_matrix_csv(p)?)?;
    }
    if let Some(p) = &opts.split_path {
        g = g.with_split(read_split(p)?)?;
    }
    Ok((g, report))
}

pub fn write_edge_list(g: &Graph, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    for (s, d, t) in g.undirected_edges() {
        match t {
            Some(t) => writeln!(w, "{s} {d} {t}").map_err(io)?,
            None => writeln!(w, "{s} {d}").map_err(io)?,
        }
    }
    w.flush().map_err(io)
}

/// Writes one CSV row per matrix row using shortest round-trip formatting.
pub fn write_matrix_csv(m: &Tensor, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    for r in 0..m.rows() {
        w.write_record(m.row(r).iter().map(|v| format!("{v:?}")))
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_split(split: &Split, path: &Path) -> Result<()> {
    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
    let body = format!(
        "train: {}\nvalid: {}\ntest: {}\n",
        join(&split.train),
        join(&split.valid),
        join(&split.test)
    );
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn write_graph_binary(g: &Graph, w: &mut impl Write) -> std::io::Result<()> {
    w.write_all(GRAPH_MAGIC)?;
    w.write_all(&GRAPH_VERSION.to_le_bytes())?;
    for v in [g.num_nodes(), g.num_edges(), g.feature_dim()] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for &v in g.row_ptr().iter().chain(g.targets()) {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for v in g.features().data() {
        w.write_all(&v.to_le_bytes())?;
    }
    match g.edge_types() {
        Some(t) => {
            w.write_all(&[1])?;
            for &v in t {
                w.write_all(&(v as u64).to_le_bytes())?;
            }
        }
        None => w.write_all(&[0])?,
    }
    Ok(())
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_graph_binary(r: &mut impl Read) -> Result<Graph> {
    let io = |e: std::io::Error| Error::Data(format!("truncated graph file: {e}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != GRAPH_MAGIC {
        return Err(Error::Data("not a PAEG graph file".into()));
    }
    let mut v = [0u8; 2];
    r.read_exact(&mut v).map_err(io)?;
    let version = u16::from_le_bytes(v);
    if version != GRAPH_VERSION {
        return Err(Error::Data(format!(
            "graph file version {version}, expected {GRAPH_VERSION}"
        )));
    }
    let n = read_u64(r).map_err(io)? as usize;
    let e = read_u64(r).map_err(io)? as usize;
    let d = read_u64(r).map_err(io)? as usize;
    let mut ints = |count: usize| -> Result<Vec<usize>> {
        (0..count)
            .map(|_| read_u64(r).map(|x| x as usize).map_err(io))
            .collect()
    };
    let row_ptr = ints(n + 1)?;
    let col = ints(e)?;
    let mut feats = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(io)?;
        feats.push(f64::from_le_bytes(b));
    }
    let mut g = Graph::from_csr(row_ptr, col, Tensor::from_vec(n, d, feats)?)?;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag).map_err(io)?;
    if flag[0] == 1 {
        let mut types = Vec::with_capacity(e);
        for _ in 0..e {
            types.push(read_u64(r).map_err(io)? as usize);
        }
        g = g.with_edge_types(types)?;
    }
    Ok(g)
}

pub fn save_graph(g: &Graph, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    write_graph_binary(g, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_graph_binary(path: &Path) -> Result<Graph> {
    read_graph_binary(&mut BufReader::new(open(path)?))
}

/// Multi-graph dataset directory:
///
/// * `edges.txt`: `src dst [type]` with dataset-global node indices
/// * `graph_indicator.txt`: graph id of every node, one per line, sorted
/// * `features.csv`: one row per node
/// * `graph_labels.csv`: optional, one row per graph
/// * `split.txt`: optional, graph indices
pub fn load_collection(dir: &Path, task: TaskKind) -> Result<GraphCollection> {
    let indicator_path = dir.join("graph_indicator.txt");
    let text = std::fs::read_to_string(&indicator_path).map_err(|e| Error::io(&indicator_path, e))?;
    let mut indicator = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let gid: usize = t
            .parse()
            .map_err(|_| parse_err(&indicator_path, lineno + 1, format!("not a graph id: {t:?}")))?;
        if indicator.last().is_some_and(|&prev| gid < prev) {
            return Err(parse_err(&indicator_path, lineno + 1, "graph ids must be non-decreasing"));
        }
        indicator.push(gid);
    }
    let features = read_matrix_csv(&dir.join("features.csv"))?;
    let n = features.rows();
    if indicator.len() != n {
        return Err(Error::Data(format!(
            "graph_indicator has {} nodes, features.csv has {n}",
            indicator.len()
        )));
    }
    let num_graphs = indicator.last().map_or(0, |g| g + 1);
    let mut start = vec![0usize; num_graphs + 1];
    for &gid in &indicator {
        start[gid + 1] += 1;
    }
    for i in 0..num_graphs {
        start[i + 1] += start[i];
    }
    let mut per_graph: Vec<Vec<(usize, usize, Option<usize>)>> = vec![Vec::new(); num_graphs];
    for (s, d, t) in read_edge_list(&dir.join("edges.txt"))? {
        for v in [s, d] {
            if v >= n {
                return Err(Error::Range {
                    what: "node",
                    index: v,
                    bound: n,
                });
            }
        }
        let gid = indicator[s];
        if indicator[d] != gid {
            return Err(Error::Data(format!("edge ({s}, {d}) crosses graphs")));
        }
        per_graph[gid].push((s - start[gid], d - start[gid], t));
    }
    let mut graphs = Vec::with_capacity(num_graphs);
    for (gid, edges) in per_graph.iter().enumerate() {
        let (lo, hi) = (start[gid], start[gid + 1]);
        let idx: Vec<usize> = (lo..hi).collect();
        let f = features.gather_rows(&idx);
        let (g, _) = Graph::build(hi - lo, edges, f, BuildOptions::default())?;
        graphs.push(g);
    }
    let mut coll = GraphCollection::new(graphs, task)?;
    let label_path = dir.join("graph_labels.csv");
    if label_path.exists() {
        coll = coll.with_labels(read_matrix_csv(&label_path)?)?;
    }
    let split_path = dir.join("split.txt");
    if split_path.exists() {
        coll = coll.with_split(read_split(&split_path)?)?;
    }
    Ok(coll)
}

pub fn save_collection(coll: &GraphCollection, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut edges = String::new();
    let mut indicator = String::new();
    let mut feats = Vec::new();
    let mut offset = 0;
    for (gid, g) in coll.graphs().iter().enumerate() {
        for (s, d, t) in g.undirected_edges() {
            match t {
                Some(t) => edges.push_str(&format!("{} {} {t}\n", s + offset, d + offset)),
                None => edges.push_str(&format!("{} {}\n", s + offset, d + offset)),
            }
        }
        for _ in 0..g.num_nodes() {
            indicator.push_str(&format!("{gid}\n"));
        }
        feats.extend_from_slice(g.features().data());
        offset += g.num_nodes();
    }
    let write = |name: &str, body: &str| {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    write("edges.txt", &edges)?;
    write("graph_indicator.txt", &indicator)?;
    write_matrix_csv(
        &Tensor::from_vec(offset, coll.feature_dim(), feats)?,
        &dir.join("features.csv"),
    )?;
    if let Some(l) = coll.labels() {
        write_matrix_csv(l, &dir.join("graph_labels.csv"))?;
    }
    if let Some(s) = coll.split() {
        write_split(s, &dir.join("split.txt"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_path_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.txt", "# path\n0 1\n1\t2 # tail\n\n");
        let f = write(dir.path(), "f.csv", "1,0\n0,1\n0,0\n");
        let (g, r) = load_graph(&e, &f, &LoadOptions::default()).unwrap();
        assert_eq!((g.num_nodes(), g.num_edges()), (3, 4));
        assert_eq!(r.duplicates, 0);
    }

    #[test]
    fn duplicate_lines_counted() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.txt", "0 1\n0 1\n");
        let f = write(dir.path(), "f.csv", "1\n2\n");
        let (g, r) = load_graph(&e, &f, &LoadOptions::default()).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert_eq!(r.duplicates, 1);
    }

    #[test]
    fn malformed_line_names_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.txt", "0 1\n1 x\n");
        let f = write(dir.path(), "f.csv", "1\n2\n");
        match load_graph(&e, &f, &LoadOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_feature_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.txt", "0 1\n");
        let f = write(dir.path(), "f.csv", "1\nNaN\n");
        assert!(matches!(
            load_graph(&e, &f, &LoadOptions::default()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn range_error_for_large_index() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.txt", "0 5\n");
        let f = write(dir.path(), "f.csv", "1\n2\n");
        assert!(matches!(
            load_graph(&e, &f, &LoadOptions::default()),
            Err(Error::Range { index: 5, .. })
        ));
    }

    #[test]
    fn split_file_parsed() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "s.txt", "train: 0,1\nvalid: 2\ntest: \n");
        let s = read_split(&p).unwrap();
        assert_eq!(s.train, vec![0, 1]);
        assert_eq!(s.valid, vec![2]);
        assert!(s.test.is_empty());
        let p = write(dir.path(), "s2.txt", "train: 0\ntest: 0\n");
        assert!(read_split(&p).is_err());
    }

    #[test]
    fn binary_rejects_bad_magic() {
        let bytes = b"NOPE\x01\x00".to_vec();
        assert!(read_graph_binary(&mut bytes.as_slice()).is_err());
    }
}
