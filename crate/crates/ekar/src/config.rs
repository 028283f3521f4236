//! Run configuration: flat `key = value` files with `#` comments, CLI
//! overrides, validation, and a content hash for stage skipping.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{EkarError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // hyperparameters
    pub dim: usize,
    pub hidden: usize,
    pub max_len: usize,
    pub beam: usize,
    pub batch: usize,
    pub k: usize,
    pub action_dropout: f64,
    pub embed_dropout: f64,
    pub lr: f64,
    pub kge_lr: f64,
    pub epochs: usize,
    pub kge_epochs: usize,
    pub negatives: usize,
    pub max_fanout: usize,
    pub eval_every: usize,
    pub runs: usize,
    // ablation switches
    pub no_kg: bool,
    pub no_reward_shaping: bool,
    pub no_action_dropout: bool,
    pub freeze_embeddings: bool,
    pub baseline: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dim: 32,
            hidden: 64,
            max_len: 3,
            beam: 64,
            batch: 512,
            k: 10,
            action_dropout: 0.5,
            embed_dropout: 0.1,
            lr: 1e-3,
            kge_lr: 1e-3,
            epochs: 30,
            kge_epochs: 100,
            negatives: 8,
            max_fanout: 512,
            eval_every: 0,
            runs: 5,
            no_kg: false,
            no_reward_shaping: false,
            no_action_dropout: false,
            freeze_embeddings: false,
            baseline: false,
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Parses a `key = value` file over the defaults. Every constraint
    /// violation is reported; unknown keys are errors too.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| EkarError::io(path, e))?;
        let mut cfg = RunConfig::default();
        let mut errors = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = match line.split_once('=') {
                Some((k, v)) => (k.trim(), v.trim()),
                None => {
                    return Err(EkarError::data(path, lineno + 1, "expected key = value"));
                }
            };
            if let Err(msg) = cfg.set(key, value) {
                errors.push(format!("line {}: {}", lineno + 1, msg));
            }
        }
        cfg.validate(&mut errors);
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(EkarError::Config(errors.join("; ")))
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn p<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("{key}: cannot parse '{v}'"))
        }
        match key {
            "dim" => self.dim = p(key, value)?,
            "hidden" => self.hidden = p(key, value)?,
            "max_len" => self.max_len = p(key, value)?,
            "beam" => self.beam = p(key, value)?,
            "batch" => self.batch = p(key, value)?,
            "k" => self.k = p(key, value)?,
            "action_dropout" => self.action_dropout = p(key, value)?,
            "embed_dropout" => self.embed_dropout = p(key, value)?,
            "lr" => self.lr = p(key, value)?,
            "kge_lr" => self.kge_lr = p(key, value)?,
            "epochs" => self.epochs = p(key, value)?,
            "kge_epochs" => self.kge_epochs = p(key, value)?,
            "negatives" => self.negatives = p(key, value)?,
            "max_fanout" => self.max_fanout = p(key, value)?,
            "eval_every" => self.eval_every = p(key, value)?,
            "runs" => self.runs = p(key, value)?,
            "no_kg" => self.no_kg = p(key, value)?,
            "no_reward_shaping" => self.no_reward_shaping = p(key, value)?,
            "no_action_dropout" => self.no_action_dropout = p(key, value)?,
            "freeze_embeddings" => self.freeze_embeddings = p(key, value)?,
            "baseline" => self.baseline = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    pub fn validate(&self, errors: &mut Vec<String>) {
        if !(0.0..1.0).contains(&self.action_dropout) {
            errors.push("action_dropout: must be in [0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.embed_dropout) {
            errors.push("embed_dropout: must be in [0, 1)".into());
        }
        if self.max_len < 1 {
            errors.push("max_len: must be >= 1".into());
        }
        if self.beam < 1 {
            errors.push("beam: must be >= 1".into());
        }
        for (name, v) in [
            ("dim", self.dim),
            ("hidden", self.hidden),
            ("batch", self.batch),
            ("k", self.k),
        ] {
            if v < 1 {
                errors.push(format!("{name}: must be >= 1"));
            }
        }
        if self.lr <= 0.0 || self.kge_lr <= 0.0 {
            errors.push("lr/kge_lr: must be > 0".into());
        }
    }

    /// Canonical key=value form of all semantically meaningful fields.
    pub fn canonical(&self) -> String {
        let mut map = BTreeMap::new();
        map.insert("dim", self.dim.to_string());
        map.insert("hidden", self.hidden.to_string());
        map.insert("max_len", self.max_len.to_string());
        map.insert("beam", self.beam.to_string());
        map.insert("batch", self.batch.to_string());
        map.insert("k", self.k.to_string());
        map.insert("action_dropout", format!("{:e}", self.action_dropout));
        map.insert("embed_dropout", format!("{:e}", self.embed_dropout));
        map.insert("lr", format!("{:e}", self.lr));
        map.insert("kge_lr", format!("{:e}", self.kge_lr));
        map.insert("epochs", self.epochs.to_string());
        map.insert("kge_epochs", self.kge_epochs.to_string());
        map.insert("negatives", self.negatives.to_string());
        map.insert("max_fanout", self.max_fanout.to_string());
        map.insert("eval_every", self.eval_every.to_string());
        map.insert("runs", self.runs.to_string());
        map.insert("no_kg", self.no_kg.to_string());
        map.insert("no_reward_shaping", self.no_reward_shaping.to_string());
        map.insert("no_action_dropout", self.no_action_dropout.to_string());
        map.insert("freeze_embeddings", self.freeze_embeddings.to_string());
        map.insert("baseline", self.baseline.to_string());
        map.insert("seed", self.seed.to_string());
        map.iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex_string(&digest)
    }

    /// Per-run seed for the five-run protocol: master + k.
    pub fn run_seed(&self, run: usize) -> u64 {
        self.seed.wrapping_add(run as u64)
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
