use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::config::{parse_pairs, resolve_output, ConfigError, ExperimentConfig};
use super::experiment::{run_experiment_in, ExperimentSummary};
use super::HarnessError;

/// `key=v1,v2,...` from the command line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vary {
    pub key: String,
    pub values: Vec<String>,
}

impl std::str::FromStr for Vary {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let syntax = || ConfigError::Syntax {
            line: 0,
            text: s.to_string(),
        };
        let (key, values) = s.split_once('=').ok_or_else(syntax)?;
        let values: Vec<String> = values
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        if key.trim().is_empty() || values.is_empty() {
            return Err(syntax());
        }
        Ok(Self {
            key: key.trim().to_string(),
            values,
        })
    }
}

/// Cartesian product of the variations applied to `base`, each with its own
/// output subdirectory `key1=v1_key2=v2` under the base output directory.
pub fn expand(base: &str, vary: &[Vary]) -> Result<Vec<(String, ExperimentConfig)>, ConfigError> {
    let base_map = parse_pairs(base)?;
    let root = match base_map.get("output") {
        Some(o) => PathBuf::from(o),
        None => PathBuf::from("out"),
    };
    let mut combos: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for v in vary {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                v.values.iter().map(move |val| {
                    let mut c = c.clone();
                    c.push((v.key.clone(), val.clone()));
                    c
                })
            })
            .collect();
    }
    combos
        .into_iter()
        .map(|combo| {
            let mut map: BTreeMap<String, String> = base_map.clone();
            let label = if combo.is_empty() {
                "base".to_string()
            } else {
                combo
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join("_")
            };
            for (k, v) in combo {
                map.insert(k, v);
            }
            map.insert("output".into(), root.join(&label).display().to_string());
            Ok((label, ExperimentConfig::from_map(&map)?))
        })
        .collect()
}

/// Validates every point first, then runs them in order.
pub fn run_sweep(base: &str, vary: &[Vary]) -> Result<Vec<(PathBuf, ExperimentSummary)>, HarnessError> {
    let points = expand(base, vary)?;
    points
        .into_iter()
        .map(|(_, cfg)| {
            let dir = resolve_output(&cfg.output);
            let summary = run_experiment_in(&cfg, Path::new(&dir))?;
            Ok((dir, summary))
        })
        .collect()
}
