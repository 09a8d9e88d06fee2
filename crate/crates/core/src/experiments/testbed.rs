//! Synthetic lithography/deposition testbed.
//!
//! `x` stacks the overlay error vectors of `n` sites (all x-components, then
//! all y-components, so `p = 2n`); `y` holds thickness deviations at a second
//! set of sites. Sites follow a sunflower layout on the unit disc. In
//! control, an overlay rotation co-varies with a radial thickness bowl; from
//! `τ` on, an x-translation of the overlay map starts to co-vary with a planar
//! thickness slope along `slope_angle`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::calibration::{self, simulate_run_lengths, CalibrationResult, CalibrationSpec, Method, RunLength};
use crate::error::{invalid, Result};
use crate::model::ProcessModel;
use crate::monitor::MonitorConfig;
use crate::seed;

use super::timing::median;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestbedConfig {
    pub overlay_sites: usize,
    pub thickness_sites: usize,
    pub tau: u64,
    pub s_sq: f64,
    pub s01: f64,
    pub slope_angle: f64,
    pub lambda: f64,
    pub r: usize,
    pub m: usize,
}

impl Default for TestbedConfig {
    fn default() -> Self {
        Self {
            overlay_sites: 25,
            thickness_sites: 20,
            tau: 100,
            s_sq: 0.75,
            s01: 0.8,
            slope_angle: std::f64::consts::FRAC_PI_6,
            lambda: 0.05,
            r: 3,
            m: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestbedReport {
    pub calibration: CalibrationResult,
    pub tau: u64,
    /// Alarm time per replication; `None` when censored.
    pub alarm_times: Vec<Option<u64>>,
    /// Fraction of changed runs that alarmed before `τ`.
    pub pre_tau_alarm_fraction: f64,
    /// Fraction of no-change runs that alarmed before `τ`.
    pub null_pre_tau_alarm_fraction: f64,
    /// `alarm − τ` for runs whose first alarm came at or after `τ`.
    pub delays: Vec<u64>,
    /// Median delay over runs without a false alarm; censored runs count as
    /// infinite. `None` when more than half never alarmed.
    pub median_delay: Option<f64>,
}

/// Sunflower layout of `n` points on the unit disc.
pub fn wafer_sites(n: usize) -> Vec<(f64, f64)> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let rad = ((i as f64 + 0.5) / n as f64).sqrt();
            let th = i as f64 * golden;
            (rad * th.cos(), rad * th.sin())
        })
        .collect()
}

fn unit(v: DVector<f64>) -> DVector<f64> {
    let n = v.norm();
    v / n
}

impl TestbedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.overlay_sites < 2 || self.thickness_sites < 3 {
            return invalid("testbed needs at least 2 overlay and 3 thickness sites");
        }
        if self.tau == 0 || !(self.s_sq > 0.0) || !(self.s01 > 0.0) {
            return invalid("testbed needs tau ≥ 1 and positive factor scales");
        }
        MonitorConfig::new(self.lambda, self.r, 1.0, self.m).map(|_| ())
    }

    pub fn p(&self) -> usize {
        2 * self.overlay_sites
    }

    pub fn q(&self) -> usize {
        self.thickness_sites
    }

    /// Overlay x-translation: constant x-components, zero y-components.
    pub fn translation_pattern(&self) -> DVector<f64> {
        let n = self.overlay_sites;
        unit(DVector::from_fn(2 * n, |i, _| if i < n { 1.0 } else { 0.0 }))
    }

    /// Thickness plane tilted along `slope_angle`.
    pub fn slope_pattern(&self) -> DVector<f64> {
        let (c, s) = (self.slope_angle.cos(), self.slope_angle.sin());
        let sites = wafer_sites(self.thickness_sites);
        unit(DVector::from_iterator(sites.len(), sites.iter().map(|&(x1, x2)| c * x1 + s * x2)))
    }

    fn rotation_pattern(&self) -> DVector<f64> {
        let sites = wafer_sites(self.overlay_sites);
        let n = sites.len();
        unit(DVector::from_fn(2 * n, |i, _| if i < n { -sites[i].1 } else { sites[i - n].0 }))
    }

    fn bowl_pattern(&self) -> DVector<f64> {
        let sites = wafer_sites(self.thickness_sites);
        let r2: Vec<f64> = sites.iter().map(|&(x1, x2)| x1 * x1 + x2 * x2).collect();
        let mean = r2.iter().sum::<f64>() / r2.len() as f64;
        unit(DVector::from_iterator(r2.len(), r2.iter().map(|x| x - mean)))
    }

    pub fn in_control_model(&self) -> Result<ProcessModel<f64>> {
        ProcessModel::independent(self.p(), self.q())?.with_factor(self.s01, self.rotation_pattern(), self.bowl_pattern())
    }

    pub fn model(&self) -> Result<ProcessModel<f64>> {
        self.in_control_model()?
            .with_change(self.s_sq.sqrt(), self.translation_pattern(), self.slope_pattern(), Some(self.tau))
    }
}

/// Calibrates the chart on the in-control testbed, then replays
/// `spec.replications` changed runs and as many unchanged ones.
pub fn case_study_testbed(config: &TestbedConfig, spec: &CalibrationSpec) -> Result<TestbedReport> {
    config.validate()?;
    let ic = config.in_control_model()?;
    let cfg = MonitorConfig::new(config.lambda, config.r, 1.0, config.m)?;
    let calibration = calibration::calibrate(&ic, Method::Isvd, &cfg, spec)?;
    let cfg = cfg.with_limit(calibration.h);

    let changed = config.model()?;
    let runs = simulate_run_lengths(
        &changed,
        Method::Isvd,
        &cfg,
        spec.replications,
        spec.max_run_length,
        seed::derive(spec.seed, "testbed-change", 0),
    )?;
    let null = simulate_run_lengths(
        &ic,
        Method::Isvd,
        &cfg,
        spec.replications,
        config.tau - 1,
        seed::derive(spec.seed, "testbed-null", 0),
    )?;

    let tau = config.tau;
    let n = runs.len() as f64;
    let alarm_times: Vec<Option<u64>> = runs
        .iter()
        .map(|r| match r {
            RunLength::Alarm(t) => Some(*t),
            RunLength::Censored(_) => None,
        })
        .collect();
    let pre = alarm_times.iter().filter(|a| matches!(a, Some(t) if *t < tau)).count() as f64 / n;
    let null_pre = if tau > 1 {
        null.iter().filter(|r| !r.is_censored()).count() as f64 / null.len() as f64
    } else {
        0.0
    };
    let delays: Vec<u64> = alarm_times
        .iter()
        .filter_map(|a| a.filter(|t| *t >= tau).map(|t| t - tau))
        .collect();
    let mut valid: Vec<f64> = alarm_times
        .iter()
        .filter(|a| !matches!(a, Some(t) if *t < tau))
        .map(|a| a.map_or(f64::INFINITY, |t| (t - tau) as f64))
        .collect();
    let median_delay = if valid.is_empty() {
        None
    } else {
        Some(median(&mut valid)).filter(|d| d.is_finite())
    };
    Ok(TestbedReport {
        calibration,
        tau,
        alarm_times,
        pre_tau_alarm_fraction: pre,
        null_pre_tau_alarm_fraction: null_pre,
        delays,
        median_delay,
    })
}
