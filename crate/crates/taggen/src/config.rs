//! Flat key=value run configuration with precedence CLI > file > defaults.
//! Unknown keys are rejected; every run logs its resolved config verbatim.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::classifier::ClfConfig;
use crate::fusion::FusionMethod;
use crate::hashgen::GenConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: `{value}` ({reason})")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("config file {path}:{line}: expected key=value")]
    BadLine { path: String, line: usize },
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub dim: usize,
    pub heads: usize,
    pub ff: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub clf_layers: usize,
    pub input_len: usize,
    pub max_len: usize,
    pub beam: usize,
    pub gcn_layers: usize,
    pub gat_layers: usize,
    pub min_count: usize,
    pub batch: usize,
    pub gen_epochs: usize,
    pub clf_epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub no_tam: bool,
    pub no_eam: bool,
    pub exclude_self: bool,
    pub length_norm: bool,
    pub sample: bool,
    pub per_class: bool,
    pub macro_hashtag_prf: bool,
    pub fusion: FusionMethod,
    pub task: Option<String>,
    pub gazetteer: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            dim: 64,
            heads: 2,
            ff: 128,
            enc_layers: 2,
            dec_layers: 2,
            clf_layers: 2,
            input_len: 64,
            max_len: 40,
            beam: 10,
            gcn_layers: 1,
            gat_layers: 1,
            min_count: 1,
            batch: 16,
            gen_epochs: 30,
            clf_epochs: 50,
            patience: 5,
            lr: 1e-3,
            weight_decay: 0.01,
            no_tam: false,
            no_eam: false,
            exclude_self: false,
            length_norm: false,
            sample: false,
            per_class: false,
            macro_hashtag_prf: false,
            fusion: FusionMethod::Standard,
            task: None,
            gazetteer: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: "expected a boolean".into(),
        }),
    }
}

impl RunConfig {
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "dim" => self.dim = parse(key, value)?,
            "heads" => self.heads = parse(key, value)?,
            "ff" => self.ff = parse(key, value)?,
            "enc_layers" => self.enc_layers = parse(key, value)?,
            "dec_layers" => self.dec_layers = parse(key, value)?,
            "clf_layers" => self.clf_layers = parse(key, value)?,
            "input_len" => self.input_len = parse(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "beam" => self.beam = parse(key, value)?,
            "gcn_layers" => self.gcn_layers = parse(key, value)?,
            "gat_layers" => self.gat_layers = parse(key, value)?,
            "min_count" => self.min_count = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "gen_epochs" => self.gen_epochs = parse(key, value)?,
            "clf_epochs" => self.clf_epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "no_tam" => self.no_tam = parse_bool(key, value)?,
            "no_eam" => self.no_eam = parse_bool(key, value)?,
            "exclude_self" => self.exclude_self = parse_bool(key, value)?,
            "length_norm" => self.length_norm = parse_bool(key, value)?,
            "sample" => self.sample = parse_bool(key, value)?,
            "per_class" => self.per_class = parse_bool(key, value)?,
            "macro_hashtag_prf" => self.macro_hashtag_prf = parse_bool(key, value)?,
            "fusion" => {
                self.fusion = value.parse().map_err(|e: String| ConfigError::BadValue {
                    key: key.to_string(),
                    value: value.to_string(),
                    reason: e,
                })?
            }
            "task" => self.task = Some(value.to_string()),
            "gazetteer" => self.gazetteer = Some(PathBuf::from(value)),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Merge a key=value file (lower precedence than later `apply` calls).
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let body = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        for (i, line) in body.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::BadLine {
                path: path.display().to_string(),
                line: i + 1,
            })?;
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// `key=value` overrides from the command line (highest precedence).
    pub fn apply_overrides(&mut self, pairs: &[String]) -> Result<(), ConfigError> {
        for pair in pairs {
            let (key, value) = pair.split_once('=').ok_or_else(|| ConfigError::BadValue {
                key: pair.clone(),
                value: String::new(),
                reason: "expected key=value".into(),
            })?;
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// The resolved configuration, one key=value per line, sorted.
    pub fn resolved(&self) -> String {
        let mut map: BTreeMap<&str, String> = BTreeMap::new();
        map.insert("seed", self.seed.to_string());
        map.insert("dim", self.dim.to_string());
        map.insert("heads", self.heads.to_string());
        map.insert("ff", self.ff.to_string());
        map.insert("enc_layers", self.enc_layers.to_string());
        map.insert("dec_layers", self.dec_layers.to_string());
        map.insert("clf_layers", self.clf_layers.to_string());
        map.insert("input_len", self.input_len.to_string());
        map.insert("max_len", self.max_len.to_string());
        map.insert("beam", self.beam.to_string());
        map.insert("gcn_layers", self.gcn_layers.to_string());
        map.insert("gat_layers", self.gat_layers.to_string());
        map.insert("min_count", self.min_count.to_string());
        map.insert("batch", self.batch.to_string());
        map.insert("gen_epochs", self.gen_epochs.to_string());
        map.insert("clf_epochs", self.clf_epochs.to_string());
        map.insert("patience", self.patience.to_string());
        map.insert("lr", self.lr.to_string());
        map.insert("weight_decay", self.weight_decay.to_string());
        map.insert("no_tam", self.no_tam.to_string());
        map.insert("no_eam", self.no_eam.to_string());
        map.insert("exclude_self", self.exclude_self.to_string());
        map.insert("length_norm", self.length_norm.to_string());
        map.insert("sample", self.sample.to_string());
        map.insert("per_class", self.per_class.to_string());
        map.insert("macro_hashtag_prf", self.macro_hashtag_prf.to_string());
        map.insert("fusion", self.fusion.to_string());
        map.insert(
            "task",
            self.task.clone().unwrap_or_else(|| "none".to_string()),
        );
        map.insert(
            "gazetteer",
            self.gazetteer
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "none".to_string()),
        );
        let mut out = String::new();
        for (k, v) in map {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    pub fn gen_config(&self) -> GenConfig {
        GenConfig {
            d: self.dim,
            heads: self.heads,
            ff: self.ff,
            enc_layers: self.enc_layers,
            dec_layers: self.dec_layers,
            input_len: self.input_len,
            max_len: self.max_len,
            beam: self.beam,
            gcn_layers: self.gcn_layers,
            gat_layers: self.gat_layers,
            use_tam: !self.no_tam,
            use_eam: !self.no_eam,
            exclude_self: self.exclude_self,
            length_norm: self.length_norm,
            lr: self.lr,
            weight_decay: self.weight_decay,
            batch: self.batch,
            epochs: self.gen_epochs,
            seed: self.seed,
        }
    }

    pub fn clf_config(&self) -> ClfConfig {
        ClfConfig {
            d: self.dim,
            heads: self.heads,
            ff: self.ff,
            layers: self.clf_layers,
            input_len: self.input_len,
            lr: self.lr,
            weight_decay: self.weight_decay,
            batch: self.batch,
            epochs: self.clf_epochs,
            patience: self.patience,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_cli_over_file_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# comment\nseed = 7\nbeam=3\n").unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_file(&path).unwrap();
        cfg.apply_overrides(&["beam=5".to_string()]).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.beam, 5);
        assert_eq!(cfg.dim, 64);
    }

    #[test]
    fn unknown_keys_rejected_by_name() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply("mystery_knob", "1").unwrap_err();
        assert!(err.to_string().contains("mystery_knob"));
    }

    #[test]
    fn bad_values_name_the_key() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply("beam", "many").unwrap_err();
        assert!(err.to_string().contains("beam"));
        let err = cfg.apply("fusion", "sideways").unwrap_err();
        assert!(err.to_string().contains("sideways"));
    }

    #[test]
    fn resolved_lists_every_key() {
        let cfg = RunConfig::default();
        let text = cfg.resolved();
        for key in ["seed", "fusion", "beam", "no_tam", "gazetteer"] {
            assert!(text.contains(&format!("{key}=")), "missing {key}");
        }
        // Round trip: applying the resolved dump reproduces the config.
        let mut cfg2 = RunConfig::default();
        for line in text.lines() {
            let (k, v) = line.split_once('=').unwrap();
            if v != "none" {
                cfg2.apply(k, v).unwrap();
            }
        }
        assert_eq!(cfg, cfg2);
    }
}
