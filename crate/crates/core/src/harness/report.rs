use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::experiment::{ExperimentSummary, MeanStd, SUMMARY_FILE};
use super::HarnessError;

pub fn load_summary(dir: &Path) -> Result<ExperimentSummary, HarnessError> {
    if !dir.is_dir() {
        return Err(HarnessError::MissingRun(dir.to_path_buf()));
    }
    let path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(|source| HarnessError::Io {
        path: path.clone(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json { path, source })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub run: PathBuf,
    pub method: String,
    pub setting: &'static str,
    pub final_loss: MeanStd,
    pub final_grad_norm2: MeanStd,
    /// Mean final loss minus the first run's.
    pub loss_delta: f64,
    pub grad_delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

/// Loads finished runs on one problem and lines them up against the first.
pub fn compare_report(dirs: &[PathBuf]) -> Result<ComparisonTable, HarnessError> {
    if dirs.len() < 2 {
        return Err(HarnessError::Incomparable(
            "a comparison needs at least two run directories".into(),
        ));
    }
    let summaries = dirs
        .iter()
        .map(|d| load_summary(d))
        .collect::<Result<Vec<_>, _>>()?;
    let base = &summaries[0];
    for (dir, s) in dirs.iter().zip(&summaries).skip(1) {
        if s.problem != base.problem {
            return Err(HarnessError::Incomparable(format!(
                "{} was run on a different problem than {}",
                dir.display(),
                dirs[0].display()
            )));
        }
    }
    let rows = dirs
        .iter()
        .zip(&summaries)
        .map(|(dir, s)| ComparisonRow {
            run: dir.clone(),
            method: format!("{}/{}", s.optimizer, s.scheduler),
            setting: if s.heterogeneous {
                "heterogeneous"
            } else {
                "homogeneous"
            },
            final_loss: s.final_loss,
            final_grad_norm2: s.final_grad_norm2,
            loss_delta: s.final_loss.mean - base.final_loss.mean,
            grad_delta: s.final_grad_norm2.mean - base.final_grad_norm2.mean,
        })
        .collect();
    Ok(ComparisonTable { rows })
}

impl ComparisonTable {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<24} {:<14} {:>26} {:>26} {:>12}",
            "method", "setting", "final loss", "final |grad F|^2", "d loss"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<24} {:<14} {:>26} {:>26} {:>12.3e}",
                r.method,
                r.setting,
                format!("{:.6e} ± {:.1e}", r.final_loss.mean, r.final_loss.std),
                format!("{:.6e} ± {:.1e}", r.final_grad_norm2.mean, r.final_grad_norm2.std),
                r.loss_delta
            );
        }
        out
    }
}
