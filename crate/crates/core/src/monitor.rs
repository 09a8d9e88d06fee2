//! The incremental-SVD control chart.
//!
//! Each subgroup moves `Dₜ = (1−λ)·Dₜ₋₁ + λ·(mean of xᵢ·yᵢᵀ − Σ₀)` forward
//! without ever forming the `p×q` matrix: the factored state is inflated by
//! `m(1−λ)/λ`, receives one rank-one update per pair, is divided by `m`,
//! receives `(s0ⱼ·u0ⱼ, −s0ⱼ·v0ⱼ)` for every in-control factor and is finally
//! multiplied by `λ` and cut to rank `r`. The statistic is the leading
//! singular value of the result.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{ProcessModel, Subgroup};
use crate::scalar::Scalar;
use crate::svd::FactoredMatrix;

/// Chart tuning: EWMA weight, retained rank, control limit and nominal subgroup size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    pub lambda: f64,
    pub r: usize,
    #[serde(rename = "H")]
    pub h: f64,
    pub m: usize,
}

impl MonitorConfig {
    pub fn new(lambda: f64, r: usize, h: f64, m: usize) -> Result<Self> {
        let c = Self { lambda, r, h, m };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return invalid(format!("lambda must lie in (0, 1], got {}", self.lambda));
        }
        if self.r == 0 {
            return invalid("r must be at least 1");
        }
        if !(self.h > 0.0) {
            return invalid(format!("control limit must be positive, got {}", self.h));
        }
        if self.m == 0 {
            return invalid("m must be at least 1");
        }
        Ok(())
    }

    pub fn with_limit(self, h: f64) -> Self {
        Self { h, ..self }
    }
}

/// One term `weight·u·vᵀ` of the in-control cross-covariance, with `weight = s0ⱼ²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sigma0Component<T: Scalar> {
    pub weight: T,
    pub u: DVector<T>,
    pub v: DVector<T>,
}

/// Factored in-control cross-covariance `Σ₀ = Σ weightⱼ·uⱼ·vⱼᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sigma0Factors<T: Scalar> {
    p: usize,
    q: usize,
    components: Vec<Sigma0Component<T>>,
}

impl<T: Scalar> Sigma0Factors<T> {
    pub fn none(p: usize, q: usize) -> Self {
        Self {
            p,
            q,
            components: Vec::new(),
        }
    }

    pub fn new(p: usize, q: usize, components: Vec<Sigma0Component<T>>) -> Result<Self> {
        for c in &components {
            if c.u.len() != p || c.v.len() != q {
                return invalid("Σ₀ pattern dimension mismatch");
            }
            if !(c.weight > T::zero()) || !c.weight.finite() {
                return invalid("Σ₀ weights must be positive");
            }
            let tol = T::tol(1e-8);
            if (c.u.norm() - T::one()).abs() > tol || (c.v.norm() - T::one()).abs() > tol {
                return invalid("Σ₀ patterns must be unit vectors");
            }
        }
        Ok(Self { p, q, components })
    }

    /// The true `Σ₀` of a generator.
    pub fn from_model(model: &ProcessModel<T>) -> Self {
        Self {
            p: model.p(),
            q: model.q(),
            components: model
                .factors
                .iter()
                .map(|f| Sigma0Component {
                    weight: f.scale * f.scale,
                    u: f.u.clone(),
                    v: f.v.clone(),
                })
                .collect(),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn j(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Sigma0Component<T>] {
        &self.components
    }

    pub fn dense(&self) -> DMatrix<T> {
        let mut out = DMatrix::zeros(self.p, self.q);
        for c in &self.components {
            out.ger(c.weight, &c.u, &c.v, T::one());
        }
        out
    }
}

/// Per-subgroup chart output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub t: u64,
    pub statistic: f64,
    pub alarm: bool,
}

/// Anything that turns subgroups into a chart statistic.
pub trait Chart<T: Scalar> {
    fn step(&mut self, subgroup: &Subgroup<T>) -> Result<ChartPoint>;
    fn statistic(&self) -> f64;
    fn dims(&self) -> (usize, usize);
}

/// Running state of the incremental chart.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorState<T: Scalar> {
    t: u64,
    d: FactoredMatrix<T>,
    config: MonitorConfig,
    sigma0: Sigma0Factors<T>,
    // (s0ⱼ·u0ⱼ, −s0ⱼ·v0ⱼ), the update pairs that subtract Σ₀
    sigma0_updates: Vec<(DVector<T>, DVector<T>)>,
}

impl<T: Scalar> MonitorState<T> {
    pub fn init(sigma0: Sigma0Factors<T>, config: MonitorConfig, p: usize, q: usize) -> Result<Self> {
        config.validate()?;
        if sigma0.p() != p || sigma0.q() != q {
            return invalid(format!("Σ₀ is {}x{} but the chart is {p}x{q}", sigma0.p(), sigma0.q()));
        }
        let d = FactoredMatrix::empty(p, q)?;
        let sigma0_updates = sigma0
            .components()
            .iter()
            .map(|c| {
                let s = c.weight.sqrt();
                (&c.u * s, &c.v * (-s))
            })
            .collect();
        Ok(Self {
            t: 0,
            d,
            config,
            sigma0,
            sigma0_updates,
        })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.config
    }

    pub fn sigma0(&self) -> &Sigma0Factors<T> {
        &self.sigma0
    }

    /// Current factored `Dₜ`.
    pub fn factors(&self) -> &FactoredMatrix<T> {
        &self.d
    }

    /// Rank-one updates since the factors were last reorthonormalized.
    pub fn update_count(&self) -> usize {
        self.d.updates_since_reorthonormalization()
    }

    /// Leading singular value of `Dₜ`; zero before the first subgroup.
    pub fn statistic(&self) -> T {
        self.d.leading_singular_value()
    }

    /// Leading singular triplet `(σ₁, u₁, v₁)` of `Dₜ`, if the rank is positive.
    pub fn leading_pattern(&self) -> Option<(T, DVector<T>, DVector<T>)> {
        (self.d.rank() > 0).then(|| {
            (
                self.d.leading_singular_value(),
                self.d.u().column(0).into_owned(),
                self.d.v().column(0).into_owned(),
            )
        })
    }

    pub fn step(&mut self, subgroup: &Subgroup<T>) -> Result<ChartPoint> {
        if subgroup.p() != self.d.rows() || subgroup.q() != self.d.cols() {
            return invalid(format!(
                "subgroup {} is {}x{}, chart expects {}x{}",
                subgroup.t,
                subgroup.p(),
                subgroup.q(),
                self.d.rows(),
                self.d.cols()
            ));
        }
        let m = subgroup.m();
        let lambda = T::lit(self.config.lambda);
        let mf = T::lit(m as f64);

        if self.config.lambda >= 1.0 {
            self.d = FactoredMatrix::empty(self.d.rows(), self.d.cols())?;
        } else {
            self.d.scale_mut(mf * (T::one() - lambda) / lambda)?;
        }
        for (x, y) in subgroup.xs.iter().zip(&subgroup.ys) {
            self.d.apply_rank_one(x, y)?;
        }
        self.d.scale_mut(T::one() / mf)?;
        for (a, b) in &self.sigma0_updates {
            self.d.apply_rank_one(a, b)?;
        }
        self.d.scale_mut(lambda)?;
        self.d.truncate_mut(self.config.r)?;

        self.t += 1;
        let statistic = self.statistic().as_f64();
        Ok(ChartPoint {
            t: self.t,
            statistic,
            alarm: statistic > self.config.h,
        })
    }

    pub fn snapshot(&self) -> MonitorSnapshot {
        let rows = |m: &DMatrix<T>| (0..m.nrows()).map(|i| m.row(i).iter().map(|x| x.as_f64()).collect()).collect();
        MonitorSnapshot {
            t: self.t,
            p: self.d.rows(),
            q: self.d.cols(),
            u: rows(self.d.u()),
            s: self.d.singular_values().iter().map(|x| x.as_f64()).collect(),
            v: rows(self.d.v()),
            config: self.config,
            sigma0: Sigma0Spec::from_factors(&self.sigma0),
        }
    }

    pub fn restore(snap: &MonitorSnapshot) -> Result<Self> {
        let sigma0 = snap.sigma0.build::<T>(snap.p, snap.q)?;
        let mut state = Self::init(sigma0, snap.config, snap.p, snap.q)?;
        let k = snap.s.len();
        let mat = |rows: &[Vec<f64>], n: usize| -> Result<DMatrix<T>> {
            if rows.len() != n || rows.iter().any(|r| r.len() != k) {
                return invalid("snapshot factor shape mismatch");
            }
            Ok(DMatrix::from_fn(n, k, |i, j| T::lit(rows[i][j])))
        };
        let u = mat(&snap.u, snap.p)?;
        let v = mat(&snap.v, snap.q)?;
        let s = snap.s.iter().map(|&x| T::lit(x)).collect();
        state.d = FactoredMatrix::from_parts(u, s, v)?;
        state.t = snap.t;
        Ok(state)
    }
}

impl<T: Scalar> Chart<T> for MonitorState<T> {
    fn step(&mut self, subgroup: &Subgroup<T>) -> Result<ChartPoint> {
        MonitorState::step(self, subgroup)
    }

    fn statistic(&self) -> f64 {
        MonitorState::statistic(self).as_f64()
    }

    fn dims(&self) -> (usize, usize) {
        (self.d.rows(), self.d.cols())
    }
}

/// JSON form of one `Σ₀` component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub s0j_sq: f64,
    pub u0j: Vec<f64>,
    pub v0j: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Sigma0Spec(pub Vec<ComponentSpec>);

impl Sigma0Spec {
    pub fn from_factors<T: Scalar>(f: &Sigma0Factors<T>) -> Self {
        Self(
            f.components()
                .iter()
                .map(|c| ComponentSpec {
                    s0j_sq: c.weight.as_f64(),
                    u0j: c.u.iter().map(|x| x.as_f64()).collect(),
                    v0j: c.v.iter().map(|x| x.as_f64()).collect(),
                })
                .collect(),
        )
    }

    pub fn build<T: Scalar>(&self, p: usize, q: usize) -> Result<Sigma0Factors<T>> {
        let comps = self
            .0
            .iter()
            .map(|c| Sigma0Component {
                weight: T::lit(c.s0j_sq),
                u: DVector::from_iterator(c.u0j.len(), c.u0j.iter().map(|&x| T::lit(x))),
                v: DVector::from_iterator(c.v0j.len(), c.v0j.iter().map(|&x| T::lit(x))),
            })
            .collect();
        Sigma0Factors::new(p, q, comps)
    }
}

/// Serializable chart state for resuming a stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorSnapshot {
    pub t: u64,
    pub p: usize,
    pub q: usize,
    /// `p` rows of `k` entries.
    #[serde(rename = "U")]
    pub u: Vec<Vec<f64>>,
    #[serde(rename = "S")]
    pub s: Vec<f64>,
    /// `q` rows of `k` entries.
    #[serde(rename = "V")]
    pub v: Vec<Vec<f64>>,
    pub config: MonitorConfig,
    pub sigma0: Sigma0Spec,
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn cfg(lambda: f64, r: usize) -> MonitorConfig {
        MonitorConfig::new(lambda, r, 1.0, 5).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(MonitorConfig::new(0.0, 5, 1.0, 5).is_err());
        assert!(MonitorConfig::new(1.2, 5, 1.0, 5).is_err());
        assert!(MonitorConfig::new(0.5, 0, 1.0, 5).is_err());
        assert!(MonitorConfig::new(0.5, 5, 0.0, 5).is_err());
        assert!(MonitorConfig::new(0.5, 5, 1.0, 0).is_err());
        assert!(MonitorConfig::new(1.0, 5, f64::INFINITY, 5).is_ok());
    }

    #[test]
    fn fresh_state() {
        let a = MonitorState::<f64>::init(Sigma0Factors::none(10, 20), cfg(0.02, 5), 10, 20).unwrap();
        let b = MonitorState::<f64>::init(Sigma0Factors::none(10, 20), cfg(0.02, 5), 10, 20).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.statistic(), 0.0);
        assert_eq!(a.factors().rank(), 0);
        assert!(MonitorState::<f64>::init(Sigma0Factors::none(10, 20), cfg(0.02, 5), 10, 21).is_err());
    }

    #[test]
    fn hand_evaluated_single_pair() {
        let mut s = MonitorState::<f64>::init(Sigma0Factors::none(3, 3), MonitorConfig::new(0.5, 3, 10.0, 1).unwrap(), 3, 3).unwrap();
        let g = Subgroup::new(1, vec![dvector![2.0, 0.0, 0.0]], vec![dvector![0.0, 3.0, 0.0]]).unwrap();
        let pt = s.step(&g).unwrap();
        assert!((pt.statistic - 3.0).abs() < 1e-14);
        assert!(!pt.alarm);
        let d = s.factors().reconstruct();
        assert!((d[(0, 1)] - 3.0).abs() < 1e-14);
        assert!(d.iter().filter(|x| x.abs() > 1e-14).count() == 1);
    }

    #[test]
    fn zero_subgroup_shrinks_statistic() {
        let mut s = MonitorState::<f64>::init(Sigma0Factors::none(2, 2), MonitorConfig::new(0.1, 2, 10.0, 2).unwrap(), 2, 2).unwrap();
        let g = Subgroup::new(
            1,
            vec![dvector![1.0, 2.0], dvector![0.5, -1.0]],
            vec![dvector![3.0, 0.0], dvector![1.0, 1.0]],
        )
        .unwrap();
        s.step(&g).unwrap();
        let before = s.factors().reconstruct();
        let zero = Subgroup::new(2, vec![DVector::zeros(2); 2], vec![DVector::zeros(2); 2]).unwrap();
        let t0 = s.statistic();
        s.step(&zero).unwrap();
        assert!((s.factors().reconstruct() - before * 0.9).amax() < 1e-14);
        assert!((s.statistic() - 0.9 * t0).abs() < 1e-14);
    }

    #[test]
    fn lambda_one_forgets_history() {
        let mut s = MonitorState::<f64>::init(Sigma0Factors::none(2, 2), MonitorConfig::new(1.0, 2, 10.0, 1).unwrap(), 2, 2).unwrap();
        s.step(&Subgroup::new(1, vec![dvector![5.0, 0.0]], vec![dvector![5.0, 0.0]]).unwrap())
            .unwrap();
        let pt = s
            .step(&Subgroup::new(2, vec![dvector![0.0, 1.0]], vec![dvector![0.0, 2.0]]).unwrap())
            .unwrap();
        assert!((pt.statistic - 2.0).abs() < 1e-14);
        assert_eq!(s.factors().rank(), 1);
    }

    #[test]
    fn sigma0_is_subtracted() {
        let sigma0 = Sigma0Factors::new(
            2,
            2,
            vec![Sigma0Component {
                weight: 4.0,
                u: dvector![1.0, 0.0],
                v: dvector![0.0, 1.0],
            }],
        )
        .unwrap();
        let mut s = MonitorState::<f64>::init(sigma0, MonitorConfig::new(1.0, 2, 10.0, 1).unwrap(), 2, 2).unwrap();
        // sample term equals Σ₀ exactly, so D vanishes
        let pt = s
            .step(&Subgroup::new(1, vec![dvector![2.0, 0.0]], vec![dvector![0.0, 2.0]]).unwrap())
            .unwrap();
        assert!(pt.statistic < 1e-12);
    }

    #[test]
    fn rejects_mismatched_subgroup() {
        let mut s = MonitorState::<f64>::init(Sigma0Factors::none(2, 2), cfg(0.5, 2), 2, 2).unwrap();
        let g = Subgroup::new(1, vec![dvector![1.0, 2.0, 3.0]], vec![dvector![1.0, 1.0]]).unwrap();
        assert!(s.step(&g).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let mut s = MonitorState::<f64>::init(Sigma0Factors::none(3, 2), MonitorConfig::new(0.3, 2, 10.0, 2).unwrap(), 3, 2).unwrap();
        let model = ProcessModel::<f64>::independent(3, 2).unwrap();
        for g in model.stream(2, 1).take(4) {
            s.step(&g).unwrap();
        }
        let json = serde_json::to_string(&s.snapshot()).unwrap();
        let snap: MonitorSnapshot = serde_json::from_str(&json).unwrap();
        let mut r = MonitorState::<f64>::restore(&snap).unwrap();
        assert_eq!(r.t(), 4);
        assert!((r.factors().reconstruct() - s.factors().reconstruct()).amax() < 1e-15);
        let g = model.sample_subgroup_seeded(5, 2, 77).unwrap();
        assert!((r.step(&g).unwrap().statistic - s.step(&g).unwrap().statistic).abs() < 1e-14);
    }
}
