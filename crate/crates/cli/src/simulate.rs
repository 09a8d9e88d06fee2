use std::path::Path;

use serde::{Deserialize, Serialize};

use isvd_chart::calibration::default_horizon;
use isvd_chart::experiments::{oc_arl_curve, setup_by_id, standard_setups, ExperimentResult, SetupSpec};
use isvd_chart::{CalibrationResult, CalibrationSpec, Method};

use crate::error::{read_json, CliError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SetupRef {
    Id(u32),
    Inline(SetupSpec),
}

/// Experiment settings file. Omitting `setups` runs all nine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub setups: Option<Vec<SetupRef>>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_target")]
    pub target_arl0: f64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub max_run_length: Option<u64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Isvd]
}
fn default_target() -> f64 {
    200.0
}
fn default_replications() -> usize {
    2000
}
fn default_tolerance() -> f64 {
    0.02
}

impl ExperimentConfig {
    pub fn resolve_setups(&self) -> Result<Vec<SetupSpec>, CliError> {
        let Some(refs) = &self.setups else {
            return Ok(standard_setups());
        };
        refs.iter()
            .map(|r| match r {
                SetupRef::Id(id) => Ok(setup_by_id(*id)?),
                SetupRef::Inline(s) => {
                    s.validate()?;
                    Ok(s.clone())
                }
            })
            .collect()
    }

    pub fn spec(&self) -> CalibrationSpec {
        CalibrationSpec {
            target_arl0: self.target_arl0,
            tolerance: self.tolerance,
            replications: self.replications,
            max_run_length: self.max_run_length.unwrap_or_else(|| default_horizon(self.target_arl0)),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Serialize)]
struct CalibrationEntry {
    setup_id: u32,
    method: Method,
    calibration: CalibrationResult,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    config: &'a ExperimentConfig,
    calibrations: Vec<CalibrationEntry>,
    results: &'a [ExperimentResult],
}

pub(crate) fn cmd_simulate(config_path: &Path, output_dir: &Path) -> Result<(), CliError> {
    let config: ExperimentConfig = read_json(config_path, "experiment config")?;
    let setups = config.resolve_setups()?;
    if config.methods.is_empty() {
        return Err(CliError::Input("no methods selected".into()));
    }
    let spec = config.spec();
    spec.validate()?;
    std::fs::create_dir_all(output_dir)?;

    let mut calibrations = Vec::new();
    let mut results = Vec::new();
    for setup in &setups {
        for &method in &config.methods {
            let (cal, rows) = oc_arl_curve(setup, method, &spec)?;
            calibrations.push(CalibrationEntry {
                setup_id: setup.id,
                method,
                calibration: cal,
            });
            results.extend(rows);
        }
    }

    let mut w = csv::Writer::from_path(output_dir.join("results.csv"))?;
    for r in &results {
        w.serialize(r)?;
    }
    w.flush()?;
    let summary = Summary {
        config: &config,
        calibrations,
        results: &results,
    };
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Input(e.to_string()))?;
    std::fs::write(output_dir.join("summary.json"), text + "\n")?;
    Ok(())
}
