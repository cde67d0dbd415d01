//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key may appear at
//! most once; unknown keys are rejected.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `problem` | required | `noisy_quadratic`, `logistic_regression`, `two_layer_net` |
//! | `workers` | required | number of workers `K` |
//! | `iterations` | required | server updates `T` |
//! | `optimizer` | required | `asgd`, `naive_asgdm`, `shifted`, `ssgd`, `ssgdm_global`, `ssgdm_local`, `ormo` |
//! | `eta` | required | base learning rate |
//! | `scheduler` | per optimizer | `sync` or `async` |
//! | `beta` | 0.9 | momentum coefficient, in `[0, 1)` |
//! | `batch` | 64 | per-gradient mini-batch size |
//! | `lr_schedule` | empty | `iteration:multiplier,...` |
//! | `lr_schedule_epochs` | empty | `epoch:multiplier,...`, one epoch is `⌈n/(K·batch)⌉·K` iterations |
//! | `dim`, `samples` | 50, 10000 | problem size |
//! | `noise`, `min_eig`, `max_eig` | 1, 0.1, 1 | quadratic |
//! | `label_flip` | 0.05 | logistic |
//! | `hidden` | 16 | two-layer net |
//! | `weight_decay` | 0 | `λ/2 ‖w‖²` per sample |
//! | `problem_seed` | 0 | dataset seed, shared by every run seed |
//! | `delay` | lognormal | `deterministic`, `exponential`, `lognormal` |
//! | `mean_compute_time` | 1 | |
//! | `delay_sigma` | 0.25 | lognormal shape |
//! | `slow_fraction`, `slow_factor` | 0, 1 | stragglers |
//! | `seeds` | 1 | comma-separated engine seeds |
//! | `metric_stride` | 50 | metrics row every this many iterations |
//! | `output` | out | run directory, relative paths resolve against `ORMO_OUTPUT_ROOT` |
//! | `verify_detail` | false | write a per-iteration JSONL log in `verify` |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::engine::{DelayModel, Scheduler};
use crate::optim::{LrSchedule, OptimizerKind};
use crate::problems::{ProblemKind, ProblemSpec};

pub const OUTPUT_ROOT_ENV: &str = "ORMO_OUTPUT_ROOT";

pub const REQUIRED_KEYS: [&str; 5] = ["problem", "workers", "iterations", "optimizer", "eta"];

const OPTIONAL_KEYS: [&str; 22] = [
    "scheduler",
    "beta",
    "batch",
    "lr_schedule",
    "lr_schedule_epochs",
    "dim",
    "samples",
    "noise",
    "min_eig",
    "max_eig",
    "label_flip",
    "hidden",
    "weight_decay",
    "problem_seed",
    "delay",
    "mean_compute_time",
    "delay_sigma",
    "slow_fraction",
    "slow_factor",
    "seeds",
    "metric_stride",
    "output",
];

const FLAG_KEYS: [&str; 1] = ["verify_detail"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("missing required keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),
    #[error("unknown key `{key}`")]
    UnknownKey { key: String },
    #[error("key `{key}` given more than once")]
    DuplicateKey { key: String },
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("`{key}`: {reason}")]
    Constraint { key: String, reason: String },
}

/// Learning-rate decay points, in iterations or in epochs.
#[derive(Clone, Debug, PartialEq)]
pub enum LrSteps {
    Iterations(Vec<(u64, f64)>),
    Epochs(Vec<(u64, f64)>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub workers: usize,
    pub iterations: u64,
    pub optimizer: OptimizerKind,
    pub scheduler: Scheduler,
    pub eta: f64,
    pub beta: f64,
    pub batch: usize,
    pub lr_steps: LrSteps,
    pub delay: DelayModel,
    pub seeds: Vec<u64>,
    pub metric_stride: u64,
    pub output: PathBuf,
    pub verify_detail: bool,
}

impl ExperimentConfig {
    /// Defaults for everything but the required keys.
    pub fn new(problem: ProblemKind, workers: usize, iterations: u64, optimizer: OptimizerKind, eta: f64) -> Self {
        Self {
            problem: ProblemSpec::new(problem, 50, 10_000),
            workers,
            iterations,
            optimizer,
            scheduler: optimizer.default_scheduler(),
            eta,
            beta: 0.9,
            batch: 64,
            lr_steps: LrSteps::Iterations(Vec::new()),
            delay: DelayModel::default(),
            seeds: vec![1],
            metric_stride: 50,
            output: PathBuf::from("out"),
            verify_detail: false,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        text.parse()
    }

    /// Builds and validates a config from already-split pairs.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        for key in map.keys() {
            let known = REQUIRED_KEYS.contains(&key.as_str())
                || OPTIONAL_KEYS.contains(&key.as_str())
                || FLAG_KEYS.contains(&key.as_str());
            if !known {
                return Err(ConfigError::UnknownKey { key: key.clone() });
            }
        }
        let missing: Vec<String> = REQUIRED_KEYS
            .iter()
            .filter(|k| !map.contains_key(**k))
            .map(|k| k.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(ConfigError::MissingKeys(missing));
        }

        let kind: ProblemKind = parse(map, "problem")?.expect("required");
        let optimizer: OptimizerKind = parse(map, "optimizer")?.expect("required");
        let mut cfg = Self::new(
            kind,
            parse(map, "workers")?.expect("required"),
            parse(map, "iterations")?.expect("required"),
            optimizer,
            parse(map, "eta")?.expect("required"),
        );
        let p = &mut cfg.problem;
        set(&mut p.dim, map, "dim")?;
        set(&mut p.samples, map, "samples")?;
        set(&mut p.noise, map, "noise")?;
        set(&mut p.min_eig, map, "min_eig")?;
        set(&mut p.max_eig, map, "max_eig")?;
        set(&mut p.label_flip, map, "label_flip")?;
        set(&mut p.hidden, map, "hidden")?;
        set(&mut p.weight_decay, map, "weight_decay")?;
        set(&mut p.seed, map, "problem_seed")?;

        set(&mut cfg.scheduler, map, "scheduler")?;
        set(&mut cfg.beta, map, "beta")?;
        set(&mut cfg.batch, map, "batch")?;
        match (map.get("lr_schedule"), map.get("lr_schedule_epochs")) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Constraint {
                    key: "lr_schedule_epochs".into(),
                    reason: "cannot be combined with lr_schedule".into(),
                })
            }
            (Some(v), None) => cfg.lr_steps = LrSteps::Iterations(parse_steps("lr_schedule", v)?),
            (None, Some(v)) => cfg.lr_steps = LrSteps::Epochs(parse_steps("lr_schedule_epochs", v)?),
            (None, None) => {}
        }

        let d = &mut cfg.delay;
        set(&mut d.kind, map, "delay")?;
        set(&mut d.mean_compute_time, map, "mean_compute_time")?;
        set(&mut d.sigma, map, "delay_sigma")?;
        set(&mut d.slow_fraction, map, "slow_fraction")?;
        set(&mut d.slow_factor, map, "slow_factor")?;

        if let Some(v) = map.get("seeds") {
            cfg.seeds = parse_list("seeds", v)?;
        }
        set(&mut cfg.metric_stride, map, "metric_stride")?;
        if let Some(v) = map.get("output") {
            cfg.output = PathBuf::from(v);
        }
        set(&mut cfg.verify_detail, map, "verify_detail")?;

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |key: &str, reason: String| {
            Err(ConfigError::Constraint {
                key: key.to_string(),
                reason,
            })
        };
        self.problem
            .validate()
            .map_err(|e| ConfigError::Constraint {
                key: "problem".into(),
                reason: e.to_string(),
            })?;
        if self.workers == 0 {
            return fail("workers", "must be >= 1".into());
        }
        if self.iterations == 0 {
            return fail("iterations", "must be >= 1".into());
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return fail("eta", format!("must be finite and > 0, got {}", self.eta));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return fail("beta", format!("must lie in [0, 1), got {}", self.beta));
        }
        if self.batch == 0 {
            return fail("batch", "must be >= 1".into());
        }
        if self.metric_stride == 0 {
            return fail("metric_stride", "must be >= 1".into());
        }
        if !self.optimizer.supports(self.scheduler) {
            return fail(
                "scheduler",
                format!("{} requires the sync scheduler", self.optimizer),
            );
        }
        if self.seeds.is_empty() {
            return fail("seeds", "at least one seed is required".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return fail("seeds", "seeds must be distinct".into());
        }
        self.delay.validate().map_err(|e| ConfigError::Constraint {
            key: "delay".into(),
            reason: e.to_string(),
        })?;
        let key = match self.lr_steps {
            LrSteps::Iterations(_) => "lr_schedule",
            LrSteps::Epochs(_) => "lr_schedule_epochs",
        };
        LrSchedule::new(self.lr_schedule_iterations()).map_err(|e| ConfigError::Constraint {
            key: key.into(),
            reason: e.to_string(),
        })?;
        Ok(())
    }

    /// Iterations in one pass over the data.
    pub fn epoch_iterations(&self) -> u64 {
        let per_round = (self.workers * self.batch) as u64;
        (self.problem.samples as u64).div_ceil(per_round) * self.workers as u64
    }

    /// Decay points in iterations.
    pub fn lr_schedule_iterations(&self) -> Vec<(u64, f64)> {
        match &self.lr_steps {
            LrSteps::Iterations(s) => s.clone(),
            LrSteps::Epochs(s) => {
                let e = self.epoch_iterations();
                s.iter().map(|&(ep, m)| (ep * e, m)).collect()
            }
        }
    }

    /// `output`, with relative paths placed under `$ORMO_OUTPUT_ROOT` when set.
    pub fn output_dir(&self) -> PathBuf {
        resolve_output(&self.output)
    }

    /// Every key, in a form [`FromStr`] reads back to an equal config.
    pub fn to_kv_string(&self) -> String {
        let steps = |s: &[(u64, f64)]| {
            s.iter()
                .map(|(i, m)| format!("{i}:{m}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let p = &self.problem;
        let d = &self.delay;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("problem", p.kind.to_string());
        kv("dim", p.dim.to_string());
        kv("samples", p.samples.to_string());
        kv("noise", p.noise.to_string());
        kv("min_eig", p.min_eig.to_string());
        kv("max_eig", p.max_eig.to_string());
        kv("label_flip", p.label_flip.to_string());
        kv("hidden", p.hidden.to_string());
        kv("weight_decay", p.weight_decay.to_string());
        kv("problem_seed", p.seed.to_string());
        kv("workers", self.workers.to_string());
        kv("iterations", self.iterations.to_string());
        kv("optimizer", self.optimizer.to_string());
        kv("scheduler", self.scheduler.to_string());
        kv("eta", self.eta.to_string());
        kv("beta", self.beta.to_string());
        kv("batch", self.batch.to_string());
        match &self.lr_steps {
            LrSteps::Iterations(s) if !s.is_empty() => kv("lr_schedule", steps(s)),
            LrSteps::Epochs(s) if !s.is_empty() => kv("lr_schedule_epochs", steps(s)),
            _ => {}
        }
        kv("delay", d.kind.to_string());
        kv("mean_compute_time", d.mean_compute_time.to_string());
        kv("delay_sigma", d.sigma.to_string());
        kv("slow_fraction", d.slow_fraction.to_string());
        kv("slow_factor", d.slow_factor.to_string());
        kv(
            "seeds",
            self.seeds
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("metric_stride", self.metric_stride.to_string());
        kv("output", self.output.display().to_string());
        kv("verify_detail", self.verify_detail.to_string());
        out
    }
}

impl FromStr for ExperimentConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        Self::from_map(&parse_pairs(text)?)
    }
}

/// Splits `key = value` lines, rejecting duplicates.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: line.to_string(),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: line.to_string(),
            });
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(ConfigError::DuplicateKey { key: k.to_string() });
        }
    }
    Ok(map)
}

pub fn resolve_output(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

fn invalid(key: &str, value: &str, reason: impl ToString) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

fn parse<T>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, ConfigError>
where
    T: FromStr,
    T::Err: ToString,
{
    map.get(key)
        .map(|v| v.parse::<T>().map_err(|e| invalid(key, v, e)))
        .transpose()
}

fn set<T>(slot: &mut T, map: &BTreeMap<String, String>, key: &str) -> Result<(), ConfigError>
where
    T: FromStr,
    T::Err: ToString,
{
    if let Some(v) = parse(map, key)? {
        *slot = v;
    }
    Ok(())
}

fn parse_list<T>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T: FromStr,
    T::Err: ToString,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| invalid(key, value, e)))
        .collect()
}

fn parse_steps(key: &str, value: &str) -> Result<Vec<(u64, f64)>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (at, mult) = item
                .split_once(':')
                .ok_or_else(|| invalid(key, value, "expected `at:multiplier` items"))?;
            let at = at.trim().parse::<u64>().map_err(|e| invalid(key, value, e))?;
            let mult = mult.trim().parse::<f64>().map_err(|e| invalid(key, value, e))?;
            Ok((at, mult))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::DelayKind;

    const MINIMAL: &str = "problem = noisy_quadratic\nworkers = 4\niterations = 100\noptimizer = ormo\neta = 0.05\n";

    #[test]
    fn empty_file_lists_required_keys() {
        let err = "".parse::<ExperimentConfig>().unwrap_err();
        let msg = err.to_string();
        for k in REQUIRED_KEYS {
            assert!(msg.contains(k), "{msg}");
        }
    }

    #[test]
    fn defaults() {
        let c: ExperimentConfig = MINIMAL.parse().unwrap();
        assert_eq!(c.beta, 0.9);
        assert_eq!(c.batch, 64);
        assert_eq!(c.metric_stride, 50);
        assert_eq!(c.scheduler, Scheduler::Asynchronous);
    }

    #[test]
    fn beta_one_is_rejected() {
        let err = format!("{MINIMAL}beta = 1.0").parse::<ExperimentConfig>().unwrap_err();
        assert!(matches!(err, ConfigError::Constraint { ref key, .. } if key == "beta"));
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        let err = format!("{MINIMAL}colour = red").parse::<ExperimentConfig>().unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { .. }));
        let err = format!("{MINIMAL}eta = 0.1").parse::<ExperimentConfig>().unwrap_err();
        assert!(matches!(err, ConfigError::DuplicateKey { .. }));
    }

    #[test]
    fn type_mismatch_names_key() {
        let err = MINIMAL.replace("workers = 4", "workers = four").parse::<ExperimentConfig>().unwrap_err();
        assert!(matches!(err, ConfigError::InvalidValue { ref key, .. } if key == "workers"));
    }

    #[test]
    fn round_trip() {
        let mut c: ExperimentConfig = MINIMAL.parse().unwrap();
        c.eta = 0.1 + 0.2;
        c.seeds = vec![3, 1, 2];
        c.delay = c.delay.with_stragglers(1.0 / 16.0, 10.0);
        c.delay.kind = DelayKind::Exponential;
        c.lr_steps = LrSteps::Epochs(vec![(80, 0.1), (120, 0.1)]);
        let back: ExperimentConfig = c.to_kv_string().parse().unwrap();
        assert_eq!(back, c);
        let d: ExperimentConfig = MINIMAL.parse().unwrap();
        assert_eq!(d.to_kv_string().parse::<ExperimentConfig>().unwrap(), d);
    }

    #[test]
    fn epoch_schedule_translates() {
        let mut c: ExperimentConfig = MINIMAL.parse().unwrap();
        c.problem.samples = 1000;
        c.batch = 64;
        // ⌈1000 / 256⌉ · 4 = 16
        assert_eq!(c.epoch_iterations(), 16);
        c.lr_steps = LrSteps::Epochs(vec![(2, 0.5)]);
        assert_eq!(c.lr_schedule_iterations(), vec![(32, 0.5)]);
    }

    #[test]
    fn sync_only_rules_reject_async() {
        let text = MINIMAL.replace("ormo", "ssgdm_global") + "scheduler = async\n";
        assert!(text.parse::<ExperimentConfig>().is_err());
    }
}
