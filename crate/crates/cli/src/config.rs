//! Flat `key=value` run configuration: one key per line, `#` comments,
//! command-scoped key sets with defaults, `--set` overrides on top.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::CliError;

pub type Schema = &'static [(&'static str, &'static str)];

pub const SYNTH_KEYS: Schema = &[
    ("seed", "0"),
    ("classes", "4"),
    ("dim", "8"),
    ("separation", "6"),
    ("pair_distance", "3"),
    ("train_size", "2000"),
    ("test_size", "1000"),
    ("tau_rate", "0.2"),
    ("annotator.hidden", "32"),
    ("annotator.epochs", "20"),
    ("annotator.learning_rate", "0.05"),
    ("annotator.batch_size", "32"),
];

pub const TRAIN_KEYS: Schema = &[
    ("seed", "0"),
    ("data.train", ""),
    ("data.test", ""),
    ("epochs", "100"),
    ("batch_size", "64"),
    ("learning_rate", "0.05"),
    ("sgd_momentum", "0.9"),
    ("weight_decay", "0.001"),
    ("warmup", "auto"),
    ("refresh", "auto"),
    ("momentum", "0.99"),
    ("queue_capacity", "1024"),
    ("view_noise", "0.05"),
    ("no_rl", "false"),
    ("no_ca", "false"),
    ("uniform_confidence", "false"),
    ("loss.tau", "0.12"),
    ("loss.tau2", "0.4"),
    ("loss.beta", "1"),
    ("loss.surrogate", "ce"),
    ("augment.top_fraction", "0.3"),
    ("augment.epsilon", "0.3"),
    ("augment.smoothing", "true"),
    ("model.hidden", "32,32"),
    ("model.conv", "8,8"),
    ("model.embed_dim", "32"),
    ("model.activation", "tanh"),
];

pub const EVAL_KEYS: Schema = &[
    ("checkpoint", ""),
    ("data", ""),
    ("supervised", ""),
    ("space", "penultimate"),
    ("pairs", "raw"),
    ("xi", "0.9,0.95,0.99"),
    ("ratios", "0.001,0.0001,0.00001"),
];

pub const AUDIT_KEYS: Schema = &[
    ("data", ""),
    ("embeddings", ""),
    ("checkpoint", ""),
    ("space", "penultimate"),
    ("xi", "0.9,0.95,0.99"),
    ("ratios", "0.00001,0.0001,0.001,0.01,1"),
];

/// Sweep-only keys; a sweep also accepts every training key plus the
/// evaluation keys `space`, `pairs`, `xi` and `ratios`.
pub const SWEEP_KEYS: Schema = &[
    ("sweep.mode", "grid"),
    ("sweep.grid", "all"),
    ("sweep.values", ""),
    ("sweep.seeds", "0,1,2,3,4"),
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

pub fn sweep_schema() -> Vec<(&'static str, &'static str)> {
    let mut keys: Vec<_> = TRAIN_KEYS.to_vec();
    keys.extend(EVAL_KEYS.iter().filter(|(k, _)| matches!(*k, "space" | "pairs" | "xi" | "ratios")));
    keys.extend(SWEEP_KEYS);
    keys
}

fn parse_line(line: &str, lineno: usize) -> Result<Option<(String, String)>, CliError> {
    let line = line.split('#').next().unwrap_or("").trim();
    if line.is_empty() {
        return Ok(None);
    }
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| CliError::Input(format!("line {lineno}: expected key=value, got '{line}'")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(CliError::Input(format!("line {lineno}: empty key")));
    }
    Ok(Some((k.to_string(), v.trim().to_string())))
}

impl RunConfig {
    /// Defaults from `schema`, then `file` lines, then `overrides`. Keys
    /// outside the schema are rejected.
    pub fn resolve(schema: &[(&str, &str)], file: Option<&str>, overrides: &[String]) -> Result<Self, CliError> {
        let mut values: BTreeMap<String, String> =
            schema.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let mut set = |k: String, v: String, origin: &str| -> Result<(), CliError> {
            match values.get_mut(&k) {
                Some(slot) => {
                    *slot = v;
                    Ok(())
                }
                None => Err(CliError::Input(format!("unknown config key '{k}' ({origin})"))),
            }
        };
        if let Some(text) = file {
            for (i, line) in text.lines().enumerate() {
                if let Some((k, v)) = parse_line(line, i + 1)? {
                    set(k, v, "config file")?;
                }
            }
        }
        for o in overrides {
            let (k, v) = parse_line(o, 0)?.ok_or_else(|| CliError::Input(format!("empty override '{o}'")))?;
            set(k, v, "--set")?;
        }
        Ok(Self { values })
    }

    /// Sorted `key=value` lines; feeding this back as a file reproduces the config.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// First 16 hex digits of SHA-256 over the command name and canonical text.
    pub fn hash(&self, command: &str) -> String {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update(b"\n");
        h.update(self.canonical().as_bytes());
        let digest = format!("{:x}", h.finalize());
        digest[..16].to_string()
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    /// `None` for an empty value.
    pub fn path(&self, key: &str) -> Option<&str> {
        Some(self.raw(key)).filter(|v| !v.is_empty())
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        let raw = self.raw(key);
        raw.parse().map_err(|_| CliError::Input(format!("{key}: cannot parse '{raw}'")))
    }

    pub fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.raw(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(CliError::Input(format!("{key}: expected a boolean, got '{other}'"))),
        }
    }

    /// `None` for `auto`.
    pub fn auto_usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        if self.raw(key) == "auto" {
            return Ok(None);
        }
        self.parse(key).map(Some)
    }

    pub fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>, CliError> {
        self.raw(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| CliError::Input(format!("{key}: cannot parse list entry '{s}'"))))
            .collect()
    }
}
