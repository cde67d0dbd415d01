use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::HarnessError;
use crate::engine::{self, write_metrics_csv, write_trace_csv, Observer, RunConfig, RunOutput};
use crate::optim::{HyperParams, LrSchedule, Optimizer, OptimizerKind};
use crate::problems::{AssumptionConstants, GradientOracle, Problem, ProblemSpec};
use crate::verify::{self, DelayStats, LemmaReport, LemmaVerifier};

pub fn metrics_file(seed: u64) -> String {
    format!("metrics_seed{seed}.csv")
}

pub fn trace_file(seed: u64) -> String {
    format!("trace_seed{seed}.csv")
}

pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_ECHO_FILE: &str = "config.txt";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_loss: f64,
    pub final_grad_norm2: f64,
    pub final_sim_time: f64,
    pub tau_mean: f64,
    pub tau_max: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub optimizer: OptimizerKind,
    pub scheduler: String,
    pub workers: usize,
    pub iterations: u64,
    pub eta: f64,
    pub beta: f64,
    pub heterogeneous: bool,
    pub problem: ProblemSpec,
    pub final_loss: MeanStd,
    pub final_grad_norm2: MeanStd,
    pub seeds: Vec<SeedSummary>,
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem<f64>, HarnessError> {
    Ok(Problem::build(&cfg.problem)?)
}

fn build_optimizer(cfg: &ExperimentConfig, dim: usize) -> Result<Optimizer<f64>, HarnessError> {
    let schedule = LrSchedule::new(cfg.lr_schedule_iterations())
        .map_err(|e| HarnessError::Setup(e.to_string()))?;
    let hp = HyperParams::new(cfg.eta, cfg.beta, cfg.workers, schedule)
        .map_err(|e| HarnessError::Setup(e.to_string()))?;
    Ok(Optimizer::new(cfg.optimizer, hp, dim))
}

/// One simulated run for `seed`, with an arbitrary observer attached.
pub fn run_seed<Obs: Observer<f64>>(
    cfg: &ExperimentConfig,
    problem: &Problem<f64>,
    seed: u64,
    observer: &mut Obs,
) -> Result<RunOutput<f64>, HarnessError> {
    let wrap = |source| HarnessError::Run { seed, source };
    let mut state = engine::init_cluster(cfg.workers, cfg.delay, seed).map_err(wrap)?;
    let mut optimizer = build_optimizer(cfg, problem.param_dim())?;
    let mut rc = RunConfig::new(cfg.iterations, cfg.scheduler);
    rc.batch_size = cfg.batch;
    rc.metric_stride = cfg.metric_stride;
    engine::run(
        &mut state,
        &rc,
        &mut optimizer,
        problem,
        problem.initial_point(),
        observer,
    )
    .map_err(wrap)
}

fn summarize_seed(seed: u64, out: &RunOutput<f64>) -> SeedSummary {
    let last = out.metrics.last().expect("at least one metrics row");
    let stats = verify::delay_stats(&out.trace);
    SeedSummary {
        seed,
        final_loss: last.loss,
        final_grad_norm2: last.grad_norm2,
        final_sim_time: last.sim_time,
        tau_mean: stats.mean,
        tau_max: stats.max,
    }
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn create_file(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_run_files(dir: &Path, seed: u64, out: &RunOutput<f64>) -> Result<(), HarnessError> {
    let path = dir.join(metrics_file(seed));
    write_metrics_csv(create_file(&path)?, &out.metrics).map_err(|source| HarnessError::Csv { path, source })?;
    let path = dir.join(trace_file(seed));
    write_trace_csv(create_file(&path)?, &out.trace).map_err(|source| HarnessError::Csv { path, source })?;
    Ok(())
}

/// Runs every seed (in parallel) and writes per-seed CSVs, `summary.json` and
/// the config echo into `dir`.
pub fn run_experiment_in(cfg: &ExperimentConfig, dir: &Path) -> Result<ExperimentSummary, HarnessError> {
    create_dir(dir)?;
    let problem = build_problem(cfg)?;
    let per_seed: Vec<SeedSummary> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let out = run_seed(cfg, &problem, seed, &mut ())?;
            write_run_files(dir, seed, &out)?;
            Ok(summarize_seed(seed, &out))
        })
        .collect::<Result<_, HarnessError>>()?;

    let losses: Vec<f64> = per_seed.iter().map(|s| s.final_loss).collect();
    let grads: Vec<f64> = per_seed.iter().map(|s| s.final_grad_norm2).collect();
    let summary = ExperimentSummary {
        optimizer: cfg.optimizer,
        scheduler: cfg.scheduler.to_string(),
        workers: cfg.workers,
        iterations: cfg.iterations,
        eta: cfg.eta,
        beta: cfg.beta,
        heterogeneous: cfg.delay.is_heterogeneous(cfg.workers),
        problem: cfg.problem.clone(),
        final_loss: MeanStd::of(&losses),
        final_grad_norm2: MeanStd::of(&grads),
        seeds: per_seed,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_text(&dir.join(SUMMARY_FILE), &(json + "\n"))?;
    write_text(&dir.join(CONFIG_ECHO_FILE), &cfg.to_kv_string())?;
    Ok(summary)
}

/// [`run_experiment_in`] at the configured output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(PathBuf, ExperimentSummary), HarnessError> {
    let dir = cfg.output_dir();
    let summary = run_experiment_in(cfg, &dir)?;
    Ok((dir, summary))
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedVerification {
    pub seed: u64,
    pub lemmas: LemmaReport,
    pub constants: AssumptionConstants,
    pub delay: DelayStats,
}

impl SeedVerification {
    pub fn passed(&self) -> bool {
        self.lemmas.passed()
    }
}

/// Runs every seed with the lemma checker attached; writes
/// `verify_seed<s>.json` (and the JSONL detail log when enabled) into `dir`.
pub fn verify_experiment_in(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<SeedVerification>, HarnessError> {
    if cfg.optimizer != OptimizerKind::Ormo {
        return Err(HarnessError::Setup(format!(
            "verification needs optimizer = ormo, got {}",
            cfg.optimizer
        )));
    }
    if !cfg.lr_schedule_iterations().is_empty() {
        return Err(HarnessError::Setup(
            "verification needs a constant learning rate (no lr_schedule)".into(),
        ));
    }
    create_dir(dir)?;
    let problem = build_problem(cfg)?;
    cfg.seeds
        .par_iter()
        .map(|&seed| {
            let w0 = problem.initial_point();
            let mut lemmas = LemmaVerifier::new(&w0, cfg.eta, cfg.beta, cfg.workers, cfg.scheduler);
            if cfg.verify_detail {
                lemmas = lemmas.with_detail();
            }
            let mut obs = (lemmas, verify::ConstantsObserver::new(&problem, cfg.metric_stride));
            let out = run_seed(cfg, &problem, seed, &mut obs)?;
            let (lemmas, constants) = obs;
            let result = SeedVerification {
                seed,
                lemmas: lemmas.finish(),
                constants: constants.finish(),
                delay: verify::delay_stats(&out.trace),
            };
            let json = serde_json::to_string_pretty(&result).expect("report serializes");
            write_text(&dir.join(format!("verify_seed{seed}.json")), &(json + "\n"))?;
            if cfg.verify_detail {
                let path = dir.join(format!("verify_detail_seed{seed}.jsonl"));
                let mut f = create_file(&path)?;
                for row in &result.lemmas.detail {
                    let line = serde_json::to_string(row).expect("row serializes");
                    writeln!(f, "{line}").map_err(|source| HarnessError::Io {
                        path: path.clone(),
                        source,
                    })?;
                }
                f.flush().map_err(|source| HarnessError::Io { path, source })?;
            }
            Ok(result)
        })
        .collect()
}

/// Writes the dataset as CSV.
pub fn dump_dataset<W: Write>(cfg: &ExperimentConfig, out: W) -> Result<usize, HarnessError> {
    let problem = build_problem(cfg)?;
    let (header, rows) = problem.dataset_rows();
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |source| HarnessError::Csv {
        path: PathBuf::from("<dataset>"),
        source,
    };
    w.write_record(&header).map_err(csv_err)?;
    for row in &rows {
        w.write_record(row.iter().map(f64::to_string)).map_err(csv_err)?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: PathBuf::from("<dataset>"),
        source,
    })?;
    Ok(rows.len())
}
