use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use isvd_chart::calibration::{self, default_horizon, estimate_sigma0, BootstrapSource, Sigma0Rank};
use isvd_chart::monitor::Sigma0Spec;
use isvd_chart::{CalibrationSpec, Method, MonitorConfig};

use crate::error::{read_json, CliError};
use crate::records::read_records;
use crate::Means;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComponentCount {
    Fixed(usize),
    Keyword(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AutoKeyword {
    #[serde(rename = "auto")]
    Auto,
}

/// Calibration settings file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    pub lambda: f64,
    pub r: usize,
    pub m: usize,
    pub target_arl0: f64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub max_run_length: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "J", default = "default_count")]
    pub j: ComponentCount,
    #[serde(default = "default_energy")]
    pub energy: f64,
}

fn default_replications() -> usize {
    2000
}
fn default_tolerance() -> f64 {
    0.02
}
fn default_count() -> ComponentCount {
    ComponentCount::Keyword(AutoKeyword::Auto)
}
fn default_energy() -> f64 {
    0.95
}

impl CalibrateConfig {
    pub fn spec(&self) -> CalibrationSpec {
        CalibrationSpec {
            target_arl0: self.target_arl0,
            tolerance: self.tolerance,
            replications: self.replications,
            max_run_length: self.max_run_length.unwrap_or_else(|| default_horizon(self.target_arl0)),
            seed: self.seed,
        }
    }

    pub fn rank(&self) -> Sigma0Rank {
        match self.j {
            ComponentCount::Fixed(j) => Sigma0Rank::Fixed(j),
            ComponentCount::Keyword(AutoKeyword::Auto) => Sigma0Rank::Auto { energy: self.energy },
        }
    }
}

/// Everything `monitor` needs: Σ₀ factors, chart settings and the limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub p: usize,
    pub q: usize,
    #[serde(rename = "J")]
    pub j: usize,
    pub components: Sigma0Spec,
    #[serde(rename = "H")]
    pub h: f64,
    pub lambda: f64,
    pub r: usize,
    pub m: usize,
    pub target_arl0: f64,
    pub achieved_arl: f64,
    #[serde(default)]
    pub std_error: Option<f64>,
    #[serde(default)]
    pub censor_fraction: Option<f64>,
    #[serde(default)]
    pub replications: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub mu_x: Option<Vec<f64>>,
    #[serde(default)]
    pub mu_y: Option<Vec<f64>>,
}

impl CalibrationFile {
    pub fn config(&self) -> Result<MonitorConfig, CliError> {
        Ok(MonitorConfig::new(self.lambda, self.r, self.h, self.m)?)
    }
}

pub(crate) fn cmd_calibrate(config_path: &Path, historical: &Path, output: &Path, means: Means) -> Result<(), CliError> {
    let config: CalibrateConfig = read_json(config_path, "config")?;
    let spec = config.spec();
    spec.validate()?;
    let chart = MonitorConfig::new(config.lambda, config.r, 1.0, config.m)?;

    let file = File::open(historical).map_err(|e| CliError::Input(format!("cannot open {}: {e}", historical.display())))?;
    let groups = read_records(BufReader::new(file))?;
    let mut xs: Vec<DVector<f64>> = Vec::new();
    let mut ys: Vec<DVector<f64>> = Vec::new();
    for g in &groups {
        if let (Some(x0), Some(y0)) = (xs.first(), ys.first()) {
            if g.p() != x0.len() || g.q() != y0.len() {
                return Err(CliError::Input(format!(
                    "historical record t = {} has dimensions {}x{}, expected {}x{}",
                    g.t,
                    g.p(),
                    g.q(),
                    x0.len(),
                    y0.len()
                )));
            }
        }
        xs.extend(g.xs.iter().cloned());
        ys.extend(g.ys.iter().cloned());
    }
    if xs.len() < 2 {
        return Err(CliError::Input(format!(
            "historical data holds {} pairs, need at least 2",
            xs.len()
        )));
    }

    let (mu_x, mu_y) = match means {
        Means::Zero => (None, None),
        Means::Subtract => {
            let n = xs.len() as f64;
            let mx: DVector<f64> = xs.iter().sum::<DVector<f64>>() / n;
            let my: DVector<f64> = ys.iter().sum::<DVector<f64>>() / n;
            xs.iter_mut().for_each(|x| *x -= &mx);
            ys.iter_mut().for_each(|y| *y -= &my);
            (Some(mx), Some(my))
        }
    };
    let sigma0 = estimate_sigma0(&xs, &ys, config.rank(), false)?;
    let (p, q) = (sigma0.p(), sigma0.q());
    let source = BootstrapSource::new(xs, ys, sigma0.clone())?;
    let result = calibration::calibrate(&source, Method::Isvd, &chart, &spec)?;

    let out = CalibrationFile {
        p,
        q,
        j: sigma0.j(),
        components: Sigma0Spec::from_factors(&sigma0),
        h: result.h,
        lambda: config.lambda,
        r: config.r,
        m: config.m,
        target_arl0: result.target_arl0,
        achieved_arl: result.achieved_arl,
        std_error: Some(result.std_error),
        censor_fraction: Some(result.censor_fraction),
        replications: Some(result.replications),
        seed: result.seed,
        mu_x: mu_x.map(|v| v.iter().copied().collect()),
        mu_y: mu_y.map(|v| v.iter().copied().collect()),
    };
    let text = serde_json::to_string_pretty(&out).map_err(|e| CliError::Input(e.to_string()))?;
    std::fs::write(output, text + "\n")?;
    Ok(())
}
