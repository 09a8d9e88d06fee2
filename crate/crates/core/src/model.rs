//! Latent-factor generator for two coupled data streams.
//!
//! In control, each pair is `x = μx + Σ zⱼ·u0ⱼ + εx`, `y = μy + Σ zⱼ·v0ⱼ + εy`
//! with `zⱼ ~ N(0, s0ⱼ²)` shared between `x` and `y`. From the change time on,
//! an extra factor `z ~ N(0, s²)` adds `z·u` to `x` and `z·v` to `y`, so the
//! cross-covariance moves from `Σ₀ = Σ s0ⱼ²·u0ⱼ·v0ⱼᵀ` to `Σ₀ + s²·u·vᵀ`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::seed::{self, Rng};

const UNIT_TOL: f64 = 1e-12;

/// One in-control shared factor: scale `s0` and unit patterns `u0`, `v0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor<T: Scalar> {
    pub scale: T,
    pub u: DVector<T>,
    pub v: DVector<T>,
}

/// Generative specification of both streams, before and after the change.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessModel<T: Scalar> {
    pub mu_x: DVector<T>,
    pub mu_y: DVector<T>,
    pub factors: Vec<Factor<T>>,
    pub noise_sd_x: T,
    pub noise_sd_y: T,
    pub change: Option<Factor<T>>,
    /// First subgroup index drawn from the post-change regime; `None` means never.
    pub tau: Option<u64>,
}

impl<T: Scalar> ProcessModel<T> {
    /// Zero-mean, unit-noise model with no shared factors and no change.
    pub fn independent(p: usize, q: usize) -> Result<Self> {
        if p == 0 || q == 0 {
            return invalid(format!("dimensions must be positive, got {p}x{q}"));
        }
        Ok(Self {
            mu_x: DVector::zeros(p),
            mu_y: DVector::zeros(q),
            factors: Vec::new(),
            noise_sd_x: T::one(),
            noise_sd_y: T::one(),
            change: None,
            tau: None,
        })
    }

    pub fn with_factor(mut self, scale: T, u: DVector<T>, v: DVector<T>) -> Result<Self> {
        let f = self.check_factor(scale, u, v)?;
        self.factors.push(f);
        Ok(self)
    }

    pub fn with_change(mut self, scale: T, u: DVector<T>, v: DVector<T>, tau: Option<u64>) -> Result<Self> {
        if tau == Some(0) {
            return invalid("change time must be at least 1");
        }
        self.change = Some(self.check_factor(scale, u, v)?);
        self.tau = tau;
        Ok(self)
    }

    pub fn with_noise(mut self, sd_x: T, sd_y: T) -> Result<Self> {
        if !(sd_x > T::zero() && sd_y > T::zero() && sd_x.finite() && sd_y.finite()) {
            return invalid("noise standard deviations must be positive");
        }
        self.noise_sd_x = sd_x;
        self.noise_sd_y = sd_y;
        Ok(self)
    }

    pub fn with_means(mut self, mu_x: DVector<T>, mu_y: DVector<T>) -> Result<Self> {
        if mu_x.len() != self.p() || mu_y.len() != self.q() {
            return invalid("mean vector dimension mismatch");
        }
        self.mu_x = mu_x;
        self.mu_y = mu_y;
        Ok(self)
    }

    /// Same model with the change removed.
    pub fn in_control(&self) -> Self {
        Self {
            change: None,
            tau: None,
            ..self.clone()
        }
    }

    fn check_factor(&self, scale: T, u: DVector<T>, v: DVector<T>) -> Result<Factor<T>> {
        if !(scale > T::zero()) || !scale.finite() {
            return invalid("factor scale must be positive");
        }
        if u.len() != self.p() || v.len() != self.q() {
            return invalid("pattern dimension mismatch");
        }
        let tol = T::tol(UNIT_TOL);
        if (u.norm() - T::one()).abs() > tol || (v.norm() - T::one()).abs() > tol {
            return invalid("patterns must be unit vectors");
        }
        Ok(Factor { scale, u, v })
    }

    pub fn p(&self) -> usize {
        self.mu_x.len()
    }

    pub fn q(&self) -> usize {
        self.mu_y.len()
    }

    pub fn is_changed_at(&self, t: u64) -> bool {
        self.change.is_some() && matches!(self.tau, Some(tau) if t >= tau)
    }

    /// Draws `m` independent pairs for subgroup `t`.
    pub fn sample_subgroup(&self, t: u64, m: usize, rng: &mut Rng) -> Result<Subgroup<T>> {
        if m == 0 {
            return invalid("subgroup size must be at least 1");
        }
        let changed = self.is_changed_at(t);
        let mut xs = Vec::with_capacity(m);
        let mut ys = Vec::with_capacity(m);
        for _ in 0..m {
            let mut x = self.mu_x.clone();
            let mut y = self.mu_y.clone();
            for f in &self.factors {
                let z = f.scale * gauss::<T>(rng);
                x.axpy(z, &f.u, T::one());
                y.axpy(z, &f.v, T::one());
            }
            if changed {
                let f = self.change.as_ref().expect("changed implies change present");
                let z = f.scale * gauss::<T>(rng);
                x.axpy(z, &f.u, T::one());
                y.axpy(z, &f.v, T::one());
            }
            for xi in x.iter_mut() {
                *xi += self.noise_sd_x * gauss::<T>(rng);
            }
            for yi in y.iter_mut() {
                *yi += self.noise_sd_y * gauss::<T>(rng);
            }
            xs.push(x);
            ys.push(y);
        }
        Subgroup::new(t, xs, ys)
    }

    pub fn sample_subgroup_seeded(&self, t: u64, m: usize, rng_seed: u64) -> Result<Subgroup<T>> {
        self.sample_subgroup(t, m, &mut seed::rng(rng_seed))
    }

    /// Endless sequence of subgroups `t = 1, 2, …` from one seeded generator.
    pub fn stream(&self, m: usize, rng_seed: u64) -> SubgroupStream<T> {
        SubgroupStream {
            model: self.clone(),
            m,
            t: 0,
            rng: seed::rng(rng_seed),
        }
    }

    /// `Σ s0ⱼ²·u0ⱼ·v0ⱼᵀ`, plus `s²·u·vᵀ` when `post_change`.
    pub fn true_cross_covariance(&self, post_change: bool) -> Result<DMatrix<T>> {
        let mut sigma = DMatrix::zeros(self.p(), self.q());
        for f in &self.factors {
            sigma.ger(f.scale * f.scale, &f.u, &f.v, T::one());
        }
        if post_change {
            let Some(f) = &self.change else {
                return invalid("post-change covariance requested but the model has no change");
            };
            sigma.ger(f.scale * f.scale, &f.u, &f.v, T::one());
        }
        Ok(sigma)
    }
}

/// One time step of `m` paired observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgroup<T: Scalar> {
    pub t: u64,
    pub xs: Vec<DVector<T>>,
    pub ys: Vec<DVector<T>>,
}

impl<T: Scalar> Subgroup<T> {
    pub fn new(t: u64, xs: Vec<DVector<T>>, ys: Vec<DVector<T>>) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return invalid(format!(
                "subgroup needs equal, nonzero pair counts (got {} and {})",
                xs.len(),
                ys.len()
            ));
        }
        let (p, q) = (xs[0].len(), ys[0].len());
        if p == 0 || q == 0 || xs.iter().any(|x| x.len() != p) || ys.iter().any(|y| y.len() != q) {
            return invalid("ragged observation vectors in subgroup");
        }
        Ok(Self { t, xs, ys })
    }

    pub fn m(&self) -> usize {
        self.xs.len()
    }

    pub fn p(&self) -> usize {
        self.xs[0].len()
    }

    pub fn q(&self) -> usize {
        self.ys[0].len()
    }

    /// Copy with the given means subtracted from every observation.
    pub fn centered(&self, mu_x: &DVector<T>, mu_y: &DVector<T>) -> Self {
        Self {
            t: self.t,
            xs: self.xs.iter().map(|x| x - mu_x).collect(),
            ys: self.ys.iter().map(|y| y - mu_y).collect(),
        }
    }
}

pub struct SubgroupStream<T: Scalar> {
    model: ProcessModel<T>,
    m: usize,
    t: u64,
    rng: Rng,
}

impl<T: Scalar> Iterator for SubgroupStream<T> {
    type Item = Subgroup<T>;

    fn next(&mut self) -> Option<Subgroup<T>> {
        self.t += 1;
        self.model.sample_subgroup(self.t, self.m, &mut self.rng).ok()
    }
}

#[inline]
fn gauss<T: Scalar>(rng: &mut Rng) -> T {
    let z: f64 = StandardNormal.sample(rng);
    T::lit(z)
}

/// Uniform draw from the unit sphere in `dim` dimensions.
pub fn sample_unit_sphere<T: Scalar>(dim: usize, rng: &mut Rng) -> Result<DVector<T>> {
    if dim == 0 {
        return invalid("sphere dimension must be positive");
    }
    loop {
        let g = DVector::from_fn(dim, |_, _| gauss::<T>(rng));
        let n = g.norm();
        if n > T::eps() {
            return Ok(g / n);
        }
    }
}

/// Uniform draw from the unit vectors orthogonal to the unit vector `w`.
pub fn make_perpendicular<T: Scalar>(w: &DVector<T>, rng: &mut Rng) -> Result<DVector<T>> {
    if w.len() < 2 {
        return invalid("no direction is orthogonal to a vector of dimension 1");
    }
    if (w.norm() - T::one()).abs() > T::tol(1e-10) {
        return invalid("reference vector must have unit norm");
    }
    loop {
        let mut g = sample_unit_sphere::<T>(w.len(), rng)?;
        for _ in 0..2 {
            let c = w.dot(&g);
            g.axpy(-c, w, T::one());
        }
        let n = g.norm();
        if n > T::lit(1e-6) {
            return Ok(g / n);
        }
    }
}

/// JSON form of a [`ProcessModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub p: usize,
    pub q: usize,
    #[serde(default)]
    pub mu_x: Option<Vec<f64>>,
    #[serde(default)]
    pub mu_y: Option<Vec<f64>>,
    #[serde(default)]
    pub factors: Vec<FactorSpec>,
    #[serde(default = "one")]
    pub noise_sd_x: f64,
    #[serde(default = "one")]
    pub noise_sd_y: f64,
    #[serde(default)]
    pub change: Option<FactorSpec>,
    #[serde(default)]
    pub tau: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    pub s: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn build<T: Scalar>(&self) -> Result<ProcessModel<T>> {
        let vec = |v: &[f64]| DVector::from_iterator(v.len(), v.iter().map(|&x| T::lit(x)));
        let mut model = ProcessModel::independent(self.p, self.q)?.with_noise(T::lit(self.noise_sd_x), T::lit(self.noise_sd_y))?;
        if self.mu_x.is_some() || self.mu_y.is_some() {
            let mx = self.mu_x.as_deref().map(vec).unwrap_or_else(|| DVector::zeros(self.p));
            let my = self.mu_y.as_deref().map(vec).unwrap_or_else(|| DVector::zeros(self.q));
            model = model.with_means(mx, my)?;
        }
        for f in &self.factors {
            model = model.with_factor(T::lit(f.s), vec(&f.u), vec(&f.v))?;
        }
        if let Some(c) = &self.change {
            model = model.with_change(T::lit(c.s), vec(&c.u), vec(&c.v), self.tau)?;
        }
        Ok(model)
    }

    pub fn from_model<T: Scalar>(m: &ProcessModel<T>) -> Self {
        let vec = |v: &DVector<T>| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
        let fac = |f: &Factor<T>| FactorSpec {
            s: f.scale.as_f64(),
            u: vec(&f.u),
            v: vec(&f.v),
        };
        Self {
            p: m.p(),
            q: m.q(),
            mu_x: Some(vec(&m.mu_x)),
            mu_y: Some(vec(&m.mu_y)),
            factors: m.factors.iter().map(fac).collect(),
            noise_sd_x: m.noise_sd_x.as_f64(),
            noise_sd_y: m.noise_sd_y.as_f64(),
            change: m.change.as_ref().map(fac),
            tau: m.tau,
        }
    }
}
