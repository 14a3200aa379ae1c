//! Flat `key=value` settings merged from a file, flags and `PAE_*`
//! environment variables, in that order of precedence.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use graphpae::eval::{Metric, ProbeConfig, ProbeKind, Readout};
use graphpae::trainer::RunConfig;
use graphpae_tensor::AdamConfig;

use crate::CliError;

const ENV_PREFIX: &str = "PAE_";

/// Every recognised key with its default value.
fn defaults() -> BTreeMap<&'static str, String> {
    let run = RunConfig::new(0);
    let enc = &run.encoder;
    let probe = ProbeConfig::default();
    let adam = AdamConfig::default();
    let mut m = BTreeMap::new();
    let mut put = |k: &'static str, v: &dyn Display| {
        m.insert(k, v.to_string());
    };
    put("seed", &run.seed);
    put("task", &"auto");
    put("epochs", &run.epochs);
    put("mask_ratio", &run.mask_ratio);
    put("noise_scale", &run.noise_scale);
    put("alpha", &run.weights.alpha);
    put("gamma", &run.weights.gamma);
    put("k", &run.k);
    put("batch_size", &run.batch_size);
    put("checkpoint_every", &50);
    put("lr", &run.adam.lr);
    put("beta1", &adam.beta1);
    put("beta2", &adam.beta2);
    put("eps", &adam.eps);
    put("weight_decay", &adam.weight_decay);
    put("encoder.layers", &enc.layers);
    put("encoder.hidden", &enc.hidden);
    put("encoder.attention", &enc.attention);
    put("encoder.heads", &enc.heads);
    put("encoder.rbf_count", &enc.rbf_count);
    put("encoder.rbf_lo", &enc.rbf_lo);
    put("encoder.rbf_hi", &enc.rbf_hi);
    put("encoder.rbf_sigma", &"auto");
    put("encoder.node_dropout", &enc.node_dropout);
    put("encoder.edge_dropout", &enc.edge_dropout);
    put("encoder.activation", &enc.activation);
    put("probe.kind", &probe.kind);
    put("probe.metric", &probe.metric);
    put("probe.lr", &probe.lr);
    put("probe.epochs", &probe.epochs);
    put("probe.weight_decay", &probe.weight_decay);
    put("probe.patience", &probe.patience);
    put("probe.seeds", &10);
    put("probe.readout", &Readout::Mean);
    put("probe.train_frac", &0.6);
    put("probe.valid_frac", &0.2);
    m
}

/// `encoder.rbf_count` ↔ `PAE_ENCODER_RBF_COUNT`.
pub fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.replace('.', "_").to_ascii_uppercase())
}

/// Effective settings. Keys are always drawn from the known set.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    values: BTreeMap<&'static str, String>,
}

impl Default for Settings {
    fn default() -> Self {
        Self { values: defaults() }
    }
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let slot = self
            .values
            .iter_mut()
            .find(|(k, _)| **k == key)
            .map(|(_, v)| v)
            .ok_or_else(|| CliError::Config(format!("unknown config key {key:?}")))?;
        *slot = value.trim().to_string();
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (n, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected key=value", n + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| CliError::Config(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| graphpae::Error::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Every `PAE_*` variable must name a known key.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), CliError> {
        let names: BTreeMap<String, &'static str> =
            self.values.keys().map(|k| (env_name(k), *k)).collect();
        for (name, value) in vars {
            if !name.starts_with(ENV_PREFIX) {
                continue;
            }
            let key = names
                .get(&name)
                .ok_or_else(|| CliError::Config(format!("unknown environment setting {name}")))?;
            self.set(key, &value)?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("no config key {key}"))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let raw = self.get(key);
        raw.parse()
            .map_err(|e| CliError::Config(format!("{key}={raw}: {e}")))
    }

    /// Sorted `key=value` lines.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Training configuration for feature width `d`.
    pub fn run_config(&self, d: usize, edge_vocab: Option<usize>) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::new(d);
        cfg.seed = self.parse("seed")?;
        cfg.epochs = self.parse("epochs")?;
        cfg.mask_ratio = self.parse("mask_ratio")?;
        cfg.noise_scale = self.parse("noise_scale")?;
        cfg.weights.alpha = self.parse("alpha")?;
        cfg.weights.gamma = self.parse("gamma")?;
        cfg.k = self.parse("k")?;
        cfg.batch_size = self.parse("batch_size")?;
        cfg.adam = AdamConfig {
            lr: self.parse("lr")?,
            beta1: self.parse("beta1")?,
            beta2: self.parse("beta2")?,
            eps: self.parse("eps")?,
            weight_decay: self.parse("weight_decay")?,
        };
        let e = &mut cfg.encoder;
        e.layers = self.parse("encoder.layers")?;
        e.hidden = self.parse("encoder.hidden")?;
        e.attention = self.parse("encoder.attention")?;
        e.heads = self.parse("encoder.heads")?;
        e.rbf_count = self.parse("encoder.rbf_count")?;
        e.rbf_lo = self.parse("encoder.rbf_lo")?;
        e.rbf_hi = self.parse("encoder.rbf_hi")?;
        e.rbf_sigma = match self.get("encoder.rbf_sigma") {
            "auto" => None,
            _ => Some(self.parse("encoder.rbf_sigma")?),
        };
        e.node_dropout = self.parse("encoder.node_dropout")?;
        e.edge_dropout = self.parse("encoder.edge_dropout")?;
        e.activation = self.parse("encoder.activation")?;
        e.edge_vocab = edge_vocab;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn probe_config(&self) -> Result<ProbeConfig, CliError> {
        let cfg = ProbeConfig {
            kind: self.parse::<ProbeKind>("probe.kind")?,
            metric: self.parse::<Metric>("probe.metric")?,
            lr: self.parse("probe.lr")?,
            epochs: self.parse("probe.epochs")?,
            weight_decay: self.parse("probe.weight_decay")?,
            patience: self.parse("probe.patience")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
