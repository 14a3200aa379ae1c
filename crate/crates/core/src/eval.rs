//! Frozen-encoder embeddings, readout, linear probes and task metrics.

use std::fmt;
use std::path::Path;
use std::rc::Rc;
use std::str::FromStr;

use graphpae_tensor::{AdamConfig, AdamState, ParamStore, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Split;
use crate::model::GraphPae;
use crate::trainer::PreparedGraph;

/// Node representations `X^(L)` from clean inputs with dropout off.
pub fn embed_nodes(model: &GraphPae, store: &ParamStore, g: &PreparedGraph) -> Result<Tensor> {
    let ctx = g.context();
    model.embed(store, &ctx, g.graph.features(), g.distances.values())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Readout {
    Mean,
    Sum,
    Max,
}

impl FromStr for Readout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Readout::Mean),
            "sum" => Ok(Readout::Sum),
            "max" => Ok(Readout::Max),
            _ => Err(Error::Argument(format!("unknown pooling {s:?} (mean|sum|max)"))),
        }
    }
}

impl fmt::Display for Readout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Readout::Mean => "mean",
            Readout::Sum => "sum",
            Readout::Max => "max",
        })
    }
}

/// Pools the rows of `h` into one vector.
pub fn readout(h: &Tensor, kind: Readout) -> Result<Vec<f64>> {
    let (n, d) = (h.rows(), h.cols());
    if n == 0 {
        return Err(Error::Data("readout of an empty graph".into()));
    }
    let mut out = match kind {
        Readout::Max => vec![f64::NEG_INFINITY; d],
        _ => vec![0.0; d],
    };
    for i in 0..n {
        for (o, &v) in out.iter_mut().zip(h.row(i)) {
            match kind {
                Readout::Max => *o = o.max(v),
                _ => *o += v,
            }
        }
    }
    if kind == Readout::Mean {
        for o in &mut out {
            *o /= n as f64;
        }
    }
    Ok(out)
}

/// One pooled row per graph.
pub fn embed_graphs(
    model: &GraphPae,
    store: &ParamStore,
    graphs: &[PreparedGraph],
    kind: Readout,
) -> Result<Tensor> {
    let rows = graphs
        .iter()
        .map(|g| readout(&embed_nodes(model, store, g)?, kind))
        .collect::<Result<Vec<_>>>()?;
    Ok(Tensor::from_rows(&rows)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Accuracy,
    RocAuc,
    Rmse,
    Mae,
}

impl Metric {
    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Accuracy | Metric::RocAuc)
    }

    fn better(self, a: f64, b: f64) -> bool {
        if self.higher_is_better() {
            a > b
        } else {
            a < b
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(Metric::Accuracy),
            "roc-auc" => Ok(Metric::RocAuc),
            "rmse" => Ok(Metric::Rmse),
            "mae" => Ok(Metric::Mae),
            _ => Err(Error::Argument(format!(
                "unknown metric {s:?} (accuracy|roc-auc|rmse|mae)"
            ))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Accuracy => "accuracy",
            Metric::RocAuc => "roc-auc",
            Metric::Rmse => "rmse",
            Metric::Mae => "mae",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeKind {
    /// Softmax over classes, or independent sigmoids for 0/1 target columns.
    Logistic,
    /// Least squares on real-valued targets.
    Linear,
}

impl FromStr for ProbeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multinomial-logistic" | "logistic" => Ok(ProbeKind::Logistic),
            "linear-regression" | "linear" => Ok(ProbeKind::Linear),
            _ => Err(Error::Argument(format!(
                "unknown probe {s:?} (multinomial-logistic|linear-regression)"
            ))),
        }
    }
}

impl fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbeKind::Logistic => "multinomial-logistic",
            ProbeKind::Linear => "linear-regression",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub kind: ProbeKind,
    pub metric: Metric,
    pub lr: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            kind: ProbeKind::Logistic,
            metric: Metric::Accuracy,
            lr: 0.01,
            epochs: 300,
            weight_decay: 0.0,
            patience: 50,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            ProbeKind::Logistic => matches!(self.metric, Metric::Accuracy | Metric::RocAuc),
            ProbeKind::Linear => matches!(self.metric, Metric::Rmse | Metric::Mae),
        };
        if !ok {
            return Err(Error::Argument(format!(
                "metric {} does not fit a {} probe",
                self.metric, self.kind
            )));
        }
        if !(self.lr > 0.0) || self.epochs == 0 || !(self.weight_decay >= 0.0) {
            return Err(Error::Argument("probe needs lr > 0, epochs ≥ 1, wd ≥ 0".into()));
        }
        Ok(())
    }
}

/// Probe targets.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// One class index per row.
    Classes(Vec<usize>),
    /// N×T real values, or 0/1 labels per column (NaN = missing).
    Values(Tensor),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(t) => t.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        match self {
            Targets::Classes(c) => Targets::Classes(rows.iter().map(|&i| c[i]).collect()),
            Targets::Values(t) => Targets::Values(t.gather_rows(rows)),
        }
    }

    /// Class indices from an N×1 label column of non-negative integers.
    pub fn classes_from_column(labels: &Tensor) -> Result<Self> {
        if labels.cols() != 1 {
            return Err(Error::Data(format!(
                "class labels must be one column, got {}",
                labels.cols()
            )));
        }
        labels
            .data()
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::Data(format!("class label {v} is not a non-negative integer")))
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Targets::Classes)
    }
}

/// Training-set column means and standard deviations.
fn zscore_stats(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (x.rows() as f64, x.cols());
    let mut mean = vec![0.0; d];
    for i in 0..x.rows() {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v / n;
        }
    }
    let mut sd = vec![0.0; d];
    for i in 0..x.rows() {
        for ((s, v), m) in sd.iter_mut().zip(x.row(i)).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    let sd = sd
        .into_iter()
        .map(|v| if v > 1e-12 { v.sqrt() } else { 1.0 })
        .collect();
    (mean, sd)
}

fn standardize(x: &Tensor, mean: &[f64], sd: &[f64]) -> Tensor {
    let mut out = x.clone();
    for i in 0..out.rows() {
        for ((v, m), s) in out.row_mut(i).iter_mut().zip(mean).zip(sd) {
            *v = (*v - m) / s;
        }
    }
    out
}

/// A trained linear map `x ↦ xW + b` over standardized inputs.
#[derive(Debug, Clone)]
pub struct LinearProbe {
    pub cfg: ProbeConfig,
    mean: Vec<f64>,
    sd: Vec<f64>,
    w: Tensor,
    b: Tensor,
    multi_label: bool,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
}

fn output_width(y: &Targets) -> usize {
    match y {
        Targets::Classes(c) => c.iter().max().map_or(1, |m| m + 1).max(2),
        Targets::Values(t) => t.cols(),
    }
}

fn check_rows(x: &Tensor, y: &Targets, what: &str) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::Data(format!(
            "{what}: {} embeddings but {} targets",
            x.rows(),
            y.len()
        )));
    }
    Ok(())
}

impl LinearProbe {
    /// Trains with full-batch Adam. With a validation set, the weights from
    /// the best validation epoch are kept and training stops after
    /// `patience` epochs without improvement.
    pub fn fit(
        x: &Tensor,
        y: &Targets,
        valid: Option<(&Tensor, &Targets)>,
        cfg: ProbeConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        check_rows(x, y, "training set")?;
        if x.rows() == 0 {
            return Err(Error::Data("empty probe training set".into()));
        }
        let multi_label = match (cfg.kind, y) {
            (ProbeKind::Linear, Targets::Classes(_)) => {
                return Err(Error::Argument("linear-regression probe needs real targets".into()))
            }
            (ProbeKind::Logistic, Targets::Values(_)) => true,
            _ => false,
        };
        let (mean, sd) = zscore_stats(x);
        let xs = standardize(x, &mean, &sd);
        let c = output_width(y);
        let d = x.cols();

        let mut store = ParamStore::new();
        let wid = store.insert("probe.w", Tensor::zeros(d, c))?;
        let bid = store.insert("probe.b", Tensor::zeros(1, c))?;
        let mut adam = AdamState::new(
            AdamConfig {
                weight_decay: cfg.weight_decay,
                ..AdamConfig::with_lr(cfg.lr)
            },
            &store,
        );

        // Targets and mask for the sigmoid / squared-error objectives.
        let (tv, tm) = match y {
            Targets::Values(t) => {
                let mask = t.map(|v| if v.is_nan() { 0.0 } else { 1.0 });
                let vals = t.map(|v| if v.is_nan() { 0.0 } else { v });
                (Some(vals), Some(mask))
            }
            Targets::Classes(_) => (None, None),
        };
        let observed = tm.as_ref().map_or(1.0, |m| m.sum().max(1.0));

        let mut probe = Self {
            cfg,
            mean,
            sd,
            w: store.get(wid).clone(),
            b: store.get(bid).clone(),
            multi_label,
            best_epoch: 0,
        };
        let mut best = None::<f64>;
        let mut since = 0;
        for epoch in 1..=cfg.epochs {
            let mut tape = Tape::new();
            let xv = tape.constant(xs.clone());
            let w = tape.param(&store, wid);
            let b = tape.param(&store, bid);
            let z = tape.matmul(xv, w)?;
            let z = tape.add(z, b)?;
            let loss = match (y, cfg.kind) {
                (Targets::Classes(cls), _) => tape.softmax_cross_entropy(z, Rc::from(cls.as_slice()))?,
                (Targets::Values(_), ProbeKind::Logistic) => {
                    // softplus(z) − y·z per observed entry.
                    let t = tape.constant(tv.clone().unwrap());
                    let m = tape.constant(tm.clone().unwrap());
                    let sp = tape.softplus(z);
                    let yz = tape.mul(z, t)?;
                    let l = tape.sub(sp, yz)?;
                    let l = tape.mul(l, m)?;
                    let s = tape.sum(l);
                    tape.mul_scalar(s, 1.0 / observed)
                }
                (Targets::Values(_), ProbeKind::Linear) => {
                    let t = tape.constant(tv.clone().unwrap());
                    let m = tape.constant(tm.clone().unwrap());
                    let diff = tape.sub(z, t)?;
                    let sq = tape.square(diff);
                    let sq = tape.mul(sq, m)?;
                    let s = tape.sum(sq);
                    tape.mul_scalar(s, 1.0 / observed)
                }
            };
            let grads = tape.gradients(loss, &store)?;
            adam.step(&mut store, &grads)?;

            match valid {
                Some((vx, vy)) => {
                    let cand = Self {
                        w: store.get(wid).clone(),
                        b: store.get(bid).clone(),
                        best_epoch: epoch,
                        ..probe.clone()
                    };
                    let score = cand.evaluate(vx, vy)?;
                    if best.is_none_or(|b| cfg.metric.better(score, b)) {
                        best = Some(score);
                        probe = cand;
                        since = 0;
                    } else {
                        since += 1;
                        if since >= cfg.patience {
                            break;
                        }
                    }
                }
                None => {
                    probe.w = store.get(wid).clone();
                    probe.b = store.get(bid).clone();
                    probe.best_epoch = epoch;
                }
            }
        }
        Ok(probe)
    }

    /// Raw outputs (logits or regression values), one row per input row.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let xs = standardize(x, &self.mean, &self.sd);
        let mut z = xs.matmul(&self.w)?;
        for i in 0..z.rows() {
            for (v, b) in z.row_mut(i).iter_mut().zip(self.b.data()) {
                *v += b;
            }
        }
        Ok(z)
    }

    pub fn evaluate(&self, x: &Tensor, y: &Targets) -> Result<f64> {
        check_rows(x, y, "evaluation set")?;
        let z = self.predict(x)?;
        score(&z, y, self.cfg.metric, self.multi_label)
    }
}

/// Metric of raw probe outputs `z` against `y`.
fn score(z: &Tensor, y: &Targets, metric: Metric, multi_label: bool) -> Result<f64> {
    match (metric, y) {
        (Metric::Accuracy, Targets::Classes(c)) => {
            let pred: Vec<usize> = (0..z.rows()).map(|i| argmax(z.row(i))).collect();
            accuracy(&pred, c)
        }
        (Metric::RocAuc, Targets::Classes(c)) => {
            if z.cols() == 2 {
                let s: Vec<f64> = (0..z.rows()).map(|i| z.get(i, 1) - z.get(i, 0)).collect();
                let l: Vec<bool> = c.iter().map(|&k| k == 1).collect();
                roc_auc(&s, &l)
            } else {
                // One-vs-rest over classes present with both outcomes.
                let onehot = Tensor::from_rows(
                    &c.iter()
                        .map(|&k| (0..z.cols()).map(|j| if j == k { 1.0 } else { 0.0 }).collect())
                        .collect::<Vec<Vec<f64>>>(),
                )?;
                roc_auc_multi(z, &onehot)
            }
        }
        (Metric::RocAuc, Targets::Values(t)) if multi_label => roc_auc_multi(z, t),
        (Metric::Rmse, Targets::Values(t)) => rmse(z.data(), t.data()),
        (Metric::Mae, Targets::Values(t)) => mae(z.data(), t.data()),
        _ => Err(Error::Metric(format!("metric {metric} does not apply to these targets"))),
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Trains on `train`, early-stops on `valid`, reports the metric on `eval`.
pub fn linear_probe(
    train: (&Tensor, &Targets),
    valid: Option<(&Tensor, &Targets)>,
    eval: (&Tensor, &Targets),
    cfg: ProbeConfig,
) -> Result<f64> {
    let probe = LinearProbe::fit(train.0, train.1, valid, cfg)?;
    probe.evaluate(eval.0, eval.1)
}

/// Probe on the rows selected by `split`: fit on train, stop on valid,
/// report on test.
pub fn probe_split(x: &Tensor, y: &Targets, split: &Split, cfg: ProbeConfig) -> Result<f64> {
    if !split.is_disjoint() {
        return Err(Error::Data("train/valid/test split overlaps".into()));
    }
    check_rows(x, y, "probe")?;
    if let Some(&bad) = split
        .train
        .iter()
        .chain(&split.valid)
        .chain(&split.test)
        .find(|&&i| i >= x.rows())
    {
        return Err(Error::Range {
            what: "split row",
            index: bad,
            bound: x.rows(),
        });
    }
    let part = |rows: &[usize]| (x.gather_rows(rows), y.select(rows));
    let (tx, ty) = part(&split.train);
    let (vx, vy) = part(&split.valid);
    let (ex, ey) = part(&split.test);
    let valid = (!split.valid.is_empty()).then_some((&vx, &vy));
    linear_probe((&tx, &ty), valid, (&ex, &ey), cfg)
}

/// Shuffled split with the given train and validation fractions; the rest
/// is test.
pub fn random_split(n: usize, train: f64, valid: f64, seed: u64) -> Result<Split> {
    if !(train >= 0.0 && valid >= 0.0 && train + valid <= 1.0) {
        return Err(Error::Argument(format!(
            "split fractions {train}/{valid} invalid"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let nt = (train * n as f64).round() as usize;
    let nv = ((valid * n as f64).round() as usize).min(n - nt);
    let mut s = Split {
        train: idx[..nt].to_vec(),
        valid: idx[nt..nt + nv].to_vec(),
        test: idx[nt + nv..].to_vec(),
    };
    s.train.sort_unstable();
    s.valid.sort_unstable();
    s.test.sort_unstable();
    Ok(s)
}

/// Runs `f` for each seed in parallel.
pub fn over_seeds<F>(seeds: &[u64], f: F) -> Result<Vec<f64>>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    seeds.par_iter().map(|&s| f(s)).collect()
}

pub fn accuracy(pred: &[usize], target: &[usize]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Metric(format!(
            "accuracy over {} predictions and {} targets",
            pred.len(),
            target.len()
        )));
    }
    let hits = pred.iter().zip(target).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Area under the ROC curve via the rank statistic, ties at mid-rank.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Metric("roc-auc: scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("roc-auc: NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("roc-auc needs both classes present".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] {
                rank_sum += mid;
            }
        }
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Mean per-column AUC over columns with both classes among the observed
/// (non-NaN) targets.
pub fn roc_auc_multi(scores: &Tensor, targets: &Tensor) -> Result<f64> {
    if scores.shape() != targets.shape() {
        return Err(Error::Metric(format!(
            "roc-auc: scores {:?} vs targets {:?}",
            scores.shape(),
            targets.shape()
        )));
    }
    let mut aucs = Vec::new();
    for j in 0..targets.cols() {
        let (mut s, mut l) = (Vec::new(), Vec::new());
        for i in 0..targets.rows() {
            let t = targets.get(i, j);
            if !t.is_nan() {
                s.push(scores.get(i, j));
                l.push(t > 0.5);
            }
        }
        let pos = l.iter().filter(|&&b| b).count();
        if pos > 0 && pos < l.len() {
            aucs.push(roc_auc(&s, &l)?);
        }
    }
    if aucs.is_empty() {
        return Err(Error::Metric("roc-auc: no label column has both classes".into()));
    }
    Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
}

fn paired(pred: &[f64], target: &[f64], what: &str) -> Result<Vec<f64>> {
    if pred.len() != target.len() {
        return Err(Error::Metric(format!("{what}: length mismatch")));
    }
    let d: Vec<f64> = pred
        .iter()
        .zip(target)
        .filter(|(_, t)| !t.is_nan())
        .map(|(p, t)| p - t)
        .collect();
    if d.is_empty() {
        return Err(Error::Metric(format!("{what}: no observed targets")));
    }
    Ok(d)
}

pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    let d = paired(pred, target, "rmse")?;
    Ok((d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt())
}

pub fn mae(pred: &[f64], target: &[f64]) -> Result<f64> {
    let d = paired(pred, target, "mae")?;
    Ok(d.iter().map(|v| v.abs()).sum::<f64>() / d.len() as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let v = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// `mean±std` with four decimals.
pub fn format_mean_std(values: &[f64]) -> String {
    let (m, s) = mean_std(values);
    format!("{m:.4}±{s:.4}")
}

/// Results as `dataset,seed,metric,value` rows followed by a summary line.
pub fn results_csv(dataset: &str, metric: Metric, rows: &[(u64, f64)]) -> String {
    let mut out = String::from("dataset,seed,metric,value\n");
    for (seed, v) in rows {
        out.push_str(&format!("{dataset},{seed},{metric},{v:?}\n"));
    }
    let vals: Vec<f64> = rows.iter().map(|r| r.1).collect();
    out.push_str(&format!("# {dataset} {metric} {}\n", format_mean_std(&vals)));
    out
}

pub fn write_results(path: &Path, dataset: &str, metric: Metric, rows: &[(u64, f64)]) -> Result<()> {
    std::fs::write(path, results_csv(dataset, metric, rows)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn readout_basics() {
        let h = Tensor::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(readout(&h, Readout::Mean).unwrap(), vec![1.0, 2.0]);
        let one = Tensor::from_rows(&[vec![3.0, -1.0]]).unwrap();
        assert_eq!(readout(&one, Readout::Sum).unwrap(), vec![3.0, -1.0]);
        assert!(readout(&Tensor::zeros(0, 2), Readout::Max).is_err());
    }

    #[test]
    fn auc_extremes_and_ties() {
        let l = [false, false, true, true];
        assert_eq!(roc_auc(&[0.1, 0.2, 0.3, 0.4], &l).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.4, 0.3, 0.2, 0.1], &l).unwrap(), 0.0);
        assert_eq!(roc_auc(&[0.5; 4], &l).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::Metric(_))));
    }

    #[test]
    fn auc_multi_skips_single_class_columns() {
        let s = Tensor::from_rows(&[vec![0.1, 0.0], vec![0.9, 1.0]]).unwrap();
        let t = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(roc_auc_multi(&s, &t).unwrap(), 1.0);
    }

    #[test]
    fn regression_metrics() {
        assert_eq!(rmse(&[1.0, 3.0], &[1.0, 1.0]).unwrap(), 2f64.sqrt());
        assert_eq!(mae(&[1.0, 3.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
        assert_eq!(format_mean_std(&[1.0, 3.0]), "2.0000±1.0000");
    }

    #[test]
    fn separable_clusters_probe_perfectly() {
        let mut rows = Vec::new();
        let mut cls = Vec::new();
        for i in 0..40 {
            let c = i % 2;
            let s = if c == 0 { -2.0 } else { 2.0 };
            rows.push(vec![s + 0.01 * i as f64, 0.3 * (i % 5) as f64]);
            cls.push(c);
        }
        let x = Tensor::from_rows(&rows).unwrap();
        let y = Targets::Classes(cls);
        let acc = linear_probe((&x, &y), None, (&x, &y), ProbeConfig::default()).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn metric_must_fit_probe() {
        let cfg = ProbeConfig {
            metric: Metric::Rmse,
            ..ProbeConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn split_fractions() {
        let s = random_split(10, 0.6, 0.2, 1).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (6, 2, 2));
        assert!(s.is_disjoint());
        assert_eq!(s, random_split(10, 0.6, 0.2, 1).unwrap());
    }

    #[test]
    fn results_have_summary() {
        let csv = results_csv("sbm", Metric::Accuracy, &[(0, 1.0), (1, 0.5)]);
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.ends_with("# sbm accuracy 0.7500±0.2500\n"));
    }
}
