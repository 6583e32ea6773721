//! Run configuration: a `key = value` text file where every key has a
//! default and command-line flags override file values.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::augment::DEFAULT_COPIES;
use crate::error::{Error, Result};
use crate::models::{Arch, ModelConfig, TrainConfig};
use crate::rng;
use crate::svm::{SolverConfig, DEFAULT_MAX_ITER, DEFAULT_TOL};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub ratio: f64,
    pub copies: usize,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub features: usize,
    pub cost: f64,
    pub svm_tol: f64,
    pub svm_max_iter: usize,
    pub input: [usize; 3],
    pub data_dir: PathBuf,
    pub work_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            ratio: 0.6,
            copies: DEFAULT_COPIES,
            lr: 0.005,
            momentum: 0.9,
            epochs: 10,
            batch_size: 16,
            features: 64,
            cost: 1.0,
            svm_tol: DEFAULT_TOL,
            svm_max_iter: DEFAULT_MAX_ITER,
            input: [1, 64, 64],
            data_dir: PathBuf::from("data"),
            work_dir: PathBuf::from("work"),
        }
    }
}

fn parse_input(value: &str) -> Option<[usize; 3]> {
    let parts: Vec<usize> = value
        .split('x')
        .map(|p| p.trim().parse().ok())
        .collect::<Option<_>>()?;
    parts.try_into().ok()
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl RunConfig {
    pub const KEYS: [&'static str; 14] = [
        "seed",
        "ratio",
        "copies",
        "lr",
        "momentum",
        "epochs",
        "batch_size",
        "features",
        "cost",
        "svm_tol",
        "svm_max_iter",
        "input",
        "data_dir",
        "work_dir",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "seed" => self.seed = parse(key, value)?,
            "ratio" => self.ratio = parse(key, value)?,
            "copies" => self.copies = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "features" => self.features = parse(key, value)?,
            "cost" => self.cost = parse(key, value)?,
            "svm_tol" => self.svm_tol = parse(key, value)?,
            "svm_max_iter" => self.svm_max_iter = parse(key, value)?,
            "input" => {
                self.input = parse_input(value)
                    .ok_or_else(|| Error::Config(format!("input: expected CxHxW, got {value:?}")))?
            }
            "data_dir" => self.data_dir = PathBuf::from(value),
            "work_dir" => self.work_dir = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Apply `key = value` lines on top of the defaults; `#` starts a
    /// comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            config.set(key.trim(), value)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let [c, h, w] = self.input;
        let mut s = String::new();
        for (key, value) in [
            ("seed", self.seed.to_string()),
            ("ratio", self.ratio.to_string()),
            ("copies", self.copies.to_string()),
            ("lr", self.lr.to_string()),
            ("momentum", self.momentum.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("features", self.features.to_string()),
            ("cost", self.cost.to_string()),
            ("svm_tol", self.svm_tol.to_string()),
            ("svm_max_iter", self.svm_max_iter.to_string()),
            ("input", format!("{c}x{h}x{w}")),
            ("data_dir", self.data_dir.display().to_string()),
            ("work_dir", self.work_dir.display().to_string()),
        ] {
            writeln!(s, "{key} = {value}").expect("string write");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::Config(format!(
                "ratio must be in (0, 1], got {}",
                self.ratio
            )));
        }
        if self.cost.is_nan() || self.cost <= 0.0 {
            return Err(Error::Config(format!(
                "cost must be positive, got {}",
                self.cost
            )));
        }
        if self.batch_size == 0 || self.features == 0 {
            return Err(Error::Config(
                "batch_size and features must be positive".into(),
            ));
        }
        self.model_config(Arch::MiniResNet, 2).validate()
    }

    /// Architecture seeds are derived from the run seed so the two
    /// extractors start from different weights.
    pub fn model_config(&self, arch: Arch, classes: usize) -> ModelConfig {
        ModelConfig {
            input: self.input,
            classes,
            features: self.features,
            seed: rng::derive(self.seed, &format!("init/{}", arch.tag())),
        }
    }

    pub fn train_config(&self, arch: Arch) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            momentum: self.momentum,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: rng::derive(self.seed, &format!("train/{}", arch.tag())),
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            cost: self.cost,
            tol: self.svm_tol,
            max_iter: self.svm_max_iter,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let c = RunConfig {
            seed: u64::MAX,
            lr: 0.1 + 0.2,
            input: [3, 32, 48],
            data_dir: PathBuf::from("/tmp/some dir"),
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = RunConfig::parse("# comment\nepochs = 3\n\ncost=10\n").unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.cost, 10.0);
        assert_eq!(c.ratio, 0.6);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(RunConfig::parse("colour = red\n").is_err());
        assert!(RunConfig::parse("ratio = 1.5\n").is_err());
        assert!(RunConfig::parse("input = 1x30x30\n").is_err());
        assert!(RunConfig::parse("epochs\n").is_err());
    }

    #[test]
    fn extractors_get_distinct_seeds() {
        let c = RunConfig::default();
        assert_ne!(
            c.model_config(Arch::MiniResNet, 2).seed,
            c.model_config(Arch::MiniDenseNet, 2).seed
        );
    }
}
