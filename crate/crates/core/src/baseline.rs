//! Dense reference chart: the same EWMA recursion on an explicit `p×q`
//! matrix with a full SVD every step. Slow by construction and exact.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::model::Subgroup;
use crate::monitor::{Chart, ChartPoint, Sigma0Factors};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseChartState<T: Scalar> {
    t: u64,
    d: DMatrix<T>,
    lambda: f64,
    h: f64,
    sigma0: DMatrix<T>,
}

impl<T: Scalar> DenseChartState<T> {
    pub fn init(sigma0: &Sigma0Factors<T>, lambda: f64, h: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return invalid(format!("lambda must lie in (0, 1], got {lambda}"));
        }
        if h.is_nan() || h < 0.0 {
            return invalid("control limit must be nonnegative");
        }
        Ok(Self {
            t: 0,
            d: DMatrix::zeros(sigma0.p(), sigma0.q()),
            lambda,
            h,
            sigma0: sigma0.dense(),
        })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.d
    }

    pub fn dense_step(&mut self, subgroup: &Subgroup<T>) -> Result<ChartPoint> {
        let (p, q) = self.d.shape();
        if subgroup.p() != p || subgroup.q() != q {
            return invalid(format!(
                "subgroup {} is {}x{}, chart expects {p}x{q}",
                subgroup.t,
                subgroup.p(),
                subgroup.q()
            ));
        }
        let lambda = T::lit(self.lambda);
        let w = lambda / T::lit(subgroup.m() as f64);
        self.d *= T::one() - lambda;
        for (x, y) in subgroup.xs.iter().zip(&subgroup.ys) {
            self.d.ger(w, x, y, T::one());
        }
        self.d -= &self.sigma0 * lambda;
        self.t += 1;
        let statistic = largest_singular_value(&self.d).as_f64();
        Ok(ChartPoint {
            t: self.t,
            statistic,
            alarm: statistic > self.h,
        })
    }
}

impl<T: Scalar> Chart<T> for DenseChartState<T> {
    fn step(&mut self, subgroup: &Subgroup<T>) -> Result<ChartPoint> {
        self.dense_step(subgroup)
    }

    fn statistic(&self) -> f64 {
        largest_singular_value(&self.d).as_f64()
    }

    fn dims(&self) -> (usize, usize) {
        self.d.shape()
    }
}

/// Spectral norm from a full dense SVD.
pub fn largest_singular_value<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    m.singular_values().iter().copied().fold(T::zero(), |a, b| a.max(b))
}
