//! Line-oriented experiment configuration.
//!
//! ```text
//! # comment
//! [train]
//! loss = warp
//! lr = 0.1
//! [grid]
//! lr = 0.01, 0.1
//! ```
//!
//! Keys before the first header belong to the unnamed section `""`.
//! Lists are comma-separated. Repeated keys within a section are errors.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{default_lowrank_rank, Layout, Representation, Task, Variant};
use crate::training::{AlphaScheme, LossKind, TrainConfig};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl FromStr for Config {
    type Err = Error;

    fn from_str(text: &str) -> Result<Config> {
        let mut config = Config::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            let lineno = i + 1;
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::InvalidConfig(format!("line {lineno}: unterminated section header")))?;
                section = name.trim().to_string();
                config.sections.entry(section.clone()).or_default();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {lineno}: expected `key = value`")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::InvalidConfig(format!("line {lineno}: empty key")));
            }
            let entries = config.sections.entry(section.clone()).or_default();
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::InvalidConfig(format!("line {lineno}: duplicate key `{key}` in [{section}]")));
            }
        }
        Ok(config)
    }
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Config> {
        fs::read_to_string(path)?.parse()
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn keys(&self, section: &str) -> impl Iterator<Item = &str> {
        self.sections.get(section).into_iter().flat_map(|s| s.keys().map(String::as_str))
    }

    pub fn parse_value<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        self.get(section, key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::InvalidConfig(format!("[{section}] {key}: cannot parse `{v}`")))
            })
            .transpose()
    }

    /// Comma-separated list; `None` when the key is absent.
    pub fn parse_list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>> {
        let Some(v) = self.get(section, key) else {
            return Ok(None);
        };
        parse_list(v)
            .map(Some)
            .map_err(|e| Error::InvalidConfig(format!("[{section}] {key}: {e}")))
    }

    /// Rejects keys of `section` outside `known`.
    pub fn check_keys(&self, section: &str, known: &[&str]) -> Result<()> {
        match self.keys(section).find(|k| !known.contains(k)) {
            Some(k) => Err(Error::InvalidConfig(format!("[{section}] unknown key `{k}`"))),
            None => Ok(()),
        }
    }
}

/// Parses `a, b, c`; empty entries are errors.
pub fn parse_list<T: FromStr>(text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse().map_err(|_| Error::InvalidConfig(format!("cannot parse list entry `{s}`")))
        })
        .collect()
}

fn parse_named<T>(section: &str, key: &str, value: Option<&str>, parse: fn(&str) -> Option<T>) -> Result<Option<T>> {
    value
        .map(|v| parse(v).ok_or_else(|| Error::InvalidConfig(format!("[{section}] {key}: unknown value `{v}`"))))
        .transpose()
}

/// Everything needed to build and train one model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub variant: Variant,
    pub task: Task,
    pub layout: Layout,
    pub dim: usize,
    /// 0 selects `ceil(dim / 4)`.
    pub lowrank_rank: usize,
    pub train: TrainConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            variant: Variant::Full,
            task: Task::QueryUserItem,
            layout: Layout::default(),
            dim: 10,
            lowrank_rank: 0,
            train: TrainConfig::default(),
        }
    }
}

pub const TRAIN_KEYS: &[&str] = &[
    "variant",
    "task",
    "query_repr",
    "item_repr",
    "dim",
    "rank",
    "loss",
    "lr",
    "C",
    "epochs",
    "seed",
    "alpha",
    "max_trials",
    "validate_every",
    "patience",
    "k",
    "validation_limit",
    "use_weights",
];

impl TrainSettings {
    /// Overrides defaults with the `[train]` section of `config`.
    pub fn from_config(config: &Config) -> Result<TrainSettings> {
        let mut s = TrainSettings::default();
        s.apply(config, "train")?;
        Ok(s)
    }

    pub fn apply(&mut self, config: &Config, section: &str) -> Result<()> {
        config.check_keys(section, TRAIN_KEYS)?;
        let get = |key| config.get(section, key);
        if let Some(v) = parse_named(section, "variant", get("variant"), Variant::parse)? {
            self.variant = v;
        }
        if let Some(t) = parse_named(section, "task", get("task"), Task::parse)? {
            self.task = t;
        }
        if let Some(r) = parse_named(section, "query_repr", get("query_repr"), Representation::parse)? {
            self.layout.query = r;
        }
        if let Some(r) = parse_named(section, "item_repr", get("item_repr"), Representation::parse)? {
            self.layout.item = r;
        }
        if let Some(l) = parse_named(section, "loss", get("loss"), LossKind::parse)? {
            self.train.loss = l;
        }
        if let Some(a) = parse_named(section, "alpha", get("alpha"), AlphaScheme::parse)? {
            self.train.alpha = a;
        }
        if let Some(v) = config.parse_value(section, "dim")? {
            self.dim = v;
        }
        if let Some(v) = config.parse_value(section, "rank")? {
            self.lowrank_rank = v;
        }
        if let Some(v) = config.parse_value(section, "lr")? {
            self.train.learning_rate = v;
        }
        if let Some(v) = config.parse_value(section, "C")? {
            self.train.constraint = v;
        }
        if let Some(v) = config.parse_value(section, "epochs")? {
            self.train.epochs = v;
        }
        if let Some(v) = config.parse_value(section, "seed")? {
            self.train.seed = v;
        }
        if let Some(v) = config.parse_value(section, "max_trials")? {
            self.train.max_sample_trials = Some(v);
        }
        if let Some(v) = config.parse_value(section, "validate_every")? {
            self.train.validation_every = Some(v);
        }
        if let Some(v) = config.parse_value(section, "patience")? {
            self.train.patience = v;
        }
        if let Some(v) = config.parse_value(section, "k")? {
            self.train.validation_k = v;
        }
        if let Some(v) = config.parse_value(section, "validation_limit")? {
            self.train.validation_limit = Some(v);
        }
        if let Some(v) = config.parse_value(section, "use_weights")? {
            self.train.use_triple_weight = v;
        }
        Ok(())
    }

    pub fn effective_lowrank_rank(&self) -> usize {
        match (self.variant, self.lowrank_rank) {
            (Variant::LowRankPlusDiag, 0) => default_lowrank_rank(self.dim),
            (Variant::LowRankPlusDiag, r) => r,
            _ => 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_lists() {
        let c: Config = "top = 1\n# note\n[grid]\nlr = 0.01, 0.1 ,1\n\n[train]\nloss = auc\n".parse().unwrap();
        assert_eq!(c.get("", "top"), Some("1"));
        assert_eq!(c.parse_list::<f64>("grid", "lr").unwrap(), Some(vec![0.01, 0.1, 1.0]));
        assert_eq!(c.parse_list::<f64>("grid", "C").unwrap(), None);
        assert_eq!(c.get("train", "loss"), Some("auc"));
    }

    #[test]
    fn rejects_malformed() {
        assert!("[grid\nlr = 1".parse::<Config>().is_err());
        assert!("[a]\njunk".parse::<Config>().is_err());
        assert!("[a]\nx = 1\nx = 2".parse::<Config>().is_err());
        assert!("= 3".parse::<Config>().is_err());
        let c: Config = "[grid]\nlr = 0.1,,0.2".parse().unwrap();
        assert!(c.parse_list::<f64>("grid", "lr").is_err());
    }

    #[test]
    fn train_settings() {
        let c: Config = "[train]\nvariant = diagonal\nloss = auc\nlr = 0.05\nC = 2\ndim = 8\nepochs = 3\n"
            .parse()
            .unwrap();
        let s = TrainSettings::from_config(&c).unwrap();
        assert_eq!(s.variant, Variant::Diagonal);
        assert_eq!(s.train.loss, LossKind::Auc);
        assert_eq!((s.train.learning_rate, s.train.constraint, s.dim, s.train.epochs), (0.05, 2.0, 8, 3));

        let c: Config = "[train]\nvariant = bogus\n".parse().unwrap();
        assert!(TrainSettings::from_config(&c).is_err());
        let c: Config = "[train]\nlearning_rate = 1\n".parse().unwrap();
        assert!(TrainSettings::from_config(&c).is_err());
    }
}
