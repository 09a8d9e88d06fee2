//! Simulation program: the nine benchmark setups, out-of-control ARL curves,
//! timing, and a synthetic wafer testbed.
//!
//! Out-of-control ARLs are zero-state: the change is active from `t = 1`.

mod testbed;
mod timing;

pub use testbed::{case_study_testbed, wafer_sites, TestbedConfig, TestbedReport};
pub use timing::{timing_benchmark, TimingRow};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::calibration::{self, simulate_run_lengths, ArlEstimate, CalibrationResult, CalibrationSpec, Method, StreamSource};
use crate::error::{invalid, Result};
use crate::model::{make_perpendicular, sample_unit_sphere, ProcessModel, SubgroupStream};
use crate::monitor::{MonitorConfig, Sigma0Factors};
use crate::seed;

/// Orientation of the emerging pattern relative to the in-control one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OcGeometry {
    /// Fresh uniform directions (setups without in-control correlation).
    None,
    /// `u = u01`, `v = v01`.
    Parallel,
    /// `u ⊥ u01`, `v ⊥ v01`, otherwise uniform.
    Perpendicular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetupSpec {
    pub id: u32,
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(default)]
    pub s01: Option<f64>,
    pub oc_geometry: OcGeometry,
    pub lambda: f64,
    pub r: usize,
    #[serde(default = "default_grid")]
    pub s_sq_grid: Vec<f64>,
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default = "default_q")]
    pub q: usize,
    #[serde(default = "default_m")]
    pub m: usize,
}

fn default_grid() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}
fn default_p() -> usize {
    10
}
fn default_q() -> usize {
    20
}
fn default_m() -> usize {
    5
}

impl SetupSpec {
    fn base(id: u32, lambda: f64, r: usize) -> Self {
        Self {
            id,
            j: 0,
            s01: None,
            oc_geometry: OcGeometry::None,
            lambda,
            r,
            s_sq_grid: default_grid(),
            p: default_p(),
            q: default_q(),
            m: default_m(),
        }
    }

    fn correlated(id: u32, s01: f64, geometry: OcGeometry) -> Self {
        Self {
            j: 1,
            s01: Some(s01),
            oc_geometry: geometry,
            ..Self::base(id, 0.02, 5)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.j > 1 {
            return invalid("setups support at most one in-control factor");
        }
        if self.j == 1 && !matches!(self.s01, Some(s) if s > 0.0) {
            return invalid(format!("setup {} has J = 1 but no positive s01", self.id));
        }
        if self.j == 0 && self.oc_geometry != OcGeometry::None {
            return invalid(format!("setup {} needs an in-control pattern for its geometry", self.id));
        }
        if self.j == 1 && self.oc_geometry == OcGeometry::None {
            return invalid(format!("setup {} has J = 1 but no out-of-control geometry", self.id));
        }
        if self.s_sq_grid.iter().any(|&s| !(s > 0.0)) {
            return invalid("shift sizes must be positive");
        }
        self.config(1.0).map(|_| ())
    }

    /// Chart configuration with limit `h`.
    pub fn config(&self, h: f64) -> Result<MonitorConfig> {
        MonitorConfig::new(self.lambda, self.r, h, self.m)
    }

    /// In-control generator. The in-control patterns depend only on `seed`, so
    /// setups sharing a seed share `(u01, v01)`.
    pub fn in_control_model(&self, seed: u64) -> Result<ProcessModel<f64>> {
        let mut model = ProcessModel::independent(self.p, self.q)?;
        if self.j == 1 {
            let mut rng = seed::rng(seed::derive(seed, "in-control-pattern", 0));
            let u01 = sample_unit_sphere(self.p, &mut rng)?;
            let v01 = sample_unit_sphere(self.q, &mut rng)?;
            model = model.with_factor(self.s01.expect("validated"), u01, v01)?;
        }
        Ok(model)
    }
}

/// The nine benchmark setups (`p = 10`, `q = 20`, `m = 5`).
pub fn standard_setups() -> Vec<SetupSpec> {
    vec![
        SetupSpec::base(1, 0.02, 5),
        SetupSpec::base(2, 0.01, 5),
        SetupSpec::base(3, 0.05, 5),
        SetupSpec::base(4, 0.02, 2),
        SetupSpec::base(5, 0.02, 10),
        SetupSpec::correlated(6, 0.5, OcGeometry::Parallel),
        SetupSpec::correlated(7, 1.0, OcGeometry::Parallel),
        SetupSpec::correlated(8, 0.5, OcGeometry::Perpendicular),
        SetupSpec::correlated(9, 1.0, OcGeometry::Perpendicular),
    ]
}

pub fn setup_by_id(id: u32) -> Result<SetupSpec> {
    standard_setups()
        .into_iter()
        .find(|s| s.id == id)
        .ok_or_else(|| crate::Error::InvalidArgument(format!("unknown setup id {id}")))
}

/// Out-of-control streams whose emerging pattern is redrawn per replication
/// according to the setup geometry.
#[derive(Debug, Clone)]
pub struct ShiftedSource {
    base: ProcessModel<f64>,
    geometry: OcGeometry,
    s: f64,
    tau: u64,
}

impl ShiftedSource {
    pub fn new(base: ProcessModel<f64>, geometry: OcGeometry, s_sq: f64, tau: u64) -> Result<Self> {
        if !(s_sq > 0.0) {
            return invalid("shift size must be positive");
        }
        if geometry != OcGeometry::None && base.factors.is_empty() {
            return invalid("geometry requires an in-control pattern");
        }
        Ok(Self {
            base,
            geometry,
            s: s_sq.sqrt(),
            tau,
        })
    }

    fn patterns(&self, seed: u64) -> Result<(DVector<f64>, DVector<f64>)> {
        let mut rng = seed::rng(seed::derive(seed, "oc-pattern", 0));
        Ok(match self.geometry {
            OcGeometry::None => (
                sample_unit_sphere(self.base.p(), &mut rng)?,
                sample_unit_sphere(self.base.q(), &mut rng)?,
            ),
            OcGeometry::Parallel => {
                let f = &self.base.factors[0];
                (f.u.clone(), f.v.clone())
            }
            OcGeometry::Perpendicular => {
                let f = &self.base.factors[0];
                (make_perpendicular(&f.u, &mut rng)?, make_perpendicular(&f.v, &mut rng)?)
            }
        })
    }

    /// Generator used for replication `seed`.
    pub fn model(&self, seed: u64) -> Result<ProcessModel<f64>> {
        let (u, v) = self.patterns(seed)?;
        self.base.clone().with_change(self.s, u, v, Some(self.tau))
    }
}

impl StreamSource<f64> for ShiftedSource {
    type Stream = SubgroupStream<f64>;

    fn dims(&self) -> (usize, usize) {
        (self.base.p(), self.base.q())
    }

    fn sigma0(&self) -> Sigma0Factors<f64> {
        Sigma0Factors::from_model(&self.base)
    }

    fn open(&self, m: usize, seed: u64) -> Result<Self::Stream> {
        let model = self.model(seed)?;
        model.open(m, seed::derive(seed, "stream", 0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub setup_id: u32,
    pub method: Method,
    pub s_sq: f64,
    pub oc_arl: f64,
    pub std_error: f64,
    #[serde(rename = "H")]
    pub h_used: f64,
    pub replications: usize,
    pub seed: u64,
}

/// In-control limit for a setup and method. The in-control generator uses
/// `spec.seed` for its patterns.
pub fn calibrate_setup(setup: &SetupSpec, method: Method, spec: &CalibrationSpec) -> Result<CalibrationResult> {
    setup.validate()?;
    let model = setup.in_control_model(spec.seed)?;
    calibration::calibrate(&model, method, &setup.config(1.0)?, spec)
}

/// OC ARL at one shift size and a known limit. Replication seeds derive from
/// `seed` only, so different methods and limits see identical data.
#[allow(clippy::too_many_arguments)]
pub fn oc_arl_at(
    setup: &SetupSpec,
    method: Method,
    h: f64,
    s_sq: f64,
    replications: usize,
    max_run_length: u64,
    pattern_seed: u64,
    seed: u64,
) -> Result<ArlEstimate> {
    setup.validate()?;
    let source = ShiftedSource::new(setup.in_control_model(pattern_seed)?, setup.oc_geometry, s_sq, 1)?;
    let rls = simulate_run_lengths(&source, method, &setup.config(h)?, replications, max_run_length, seed)?;
    Ok(ArlEstimate::from_run_lengths(&rls))
}

/// Calibrates the in-control limit, then estimates the OC ARL for every
/// shift size in the setup grid.
pub fn oc_arl_curve(setup: &SetupSpec, method: Method, spec: &CalibrationSpec) -> Result<(CalibrationResult, Vec<ExperimentResult>)> {
    let cal = calibrate_setup(setup, method, spec)?;
    let oc_seed = seed::derive(spec.seed, "out-of-control", 0);
    let rows = setup
        .s_sq_grid
        .iter()
        .map(|&s_sq| {
            let est = oc_arl_at(
                setup,
                method,
                cal.h,
                s_sq,
                spec.replications,
                spec.max_run_length,
                spec.seed,
                oc_seed,
            )?;
            Ok(ExperimentResult {
                setup_id: setup.id,
                method,
                s_sq,
                oc_arl: est.mean,
                std_error: est.std_error,
                h_used: cal.h,
                replications: est.replications,
                seed: oc_seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((cal, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows() {
        let s = standard_setups();
        assert_eq!(s.len(), 9);
        assert_eq!((s[0].lambda, s[0].r, s[0].j), (0.02, 5, 0));
        assert_eq!((s[1].lambda, s[1].r), (0.01, 5));
        assert_eq!((s[2].lambda, s[2].r), (0.05, 5));
        assert_eq!((s[3].r, s[4].r), (2, 10));
        assert_eq!((s[5].s01, s[5].oc_geometry), (Some(0.5), OcGeometry::Parallel));
        assert_eq!((s[6].s01, s[6].oc_geometry), (Some(1.0), OcGeometry::Parallel));
        assert_eq!((s[8].j, s[8].s01, s[8].oc_geometry), (1, Some(1.0), OcGeometry::Perpendicular));
        for x in &s {
            assert_eq!((x.p, x.q, x.m), (10, 20, 5));
            assert_eq!(x.s_sq_grid, vec![0.5, 1.0, 2.0]);
            x.validate().unwrap();
        }
        for i in 0..9 {
            for j in (i + 1)..9 {
                assert_ne!(s[i], s[j]);
            }
        }
        assert!(setup_by_id(10).is_err());
    }

    #[test]
    fn geometry_of_shifted_patterns() {
        let setup = setup_by_id(9).unwrap();
        let base = setup.in_control_model(3).unwrap();
        let src = ShiftedSource::new(base.clone(), OcGeometry::Perpendicular, 1.0, 1).unwrap();
        let m = src.model(17).unwrap();
        let c = m.change.unwrap();
        assert!(c.u.dot(&base.factors[0].u).abs() < 1e-10);
        assert!(c.v.dot(&base.factors[0].v).abs() < 1e-10);
        let par = ShiftedSource::new(base.clone(), OcGeometry::Parallel, 2.0, 1)
            .unwrap()
            .model(17)
            .unwrap();
        let c = par.change.unwrap();
        assert_eq!(c.u, base.factors[0].u);
        assert!((c.scale - 2f64.sqrt()).abs() < 1e-15);
        // shared in-control patterns across setups with the same seed
        assert_eq!(setup_by_id(6).unwrap().in_control_model(3).unwrap().factors[0].u, base.factors[0].u);
    }

    #[test]
    fn invalid_setups() {
        let mut s = setup_by_id(1).unwrap();
        s.oc_geometry = OcGeometry::Parallel;
        assert!(s.validate().is_err());
        let mut s = setup_by_id(6).unwrap();
        s.s01 = None;
        assert!(s.validate().is_err());
    }
}
