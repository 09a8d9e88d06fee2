use nalgebra::{DMatrix, DVector};

use super::jacobi::{jacobi_svd, orthonormalize_columns};
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Rank-one updates between scheduled reorthonormalizations.
pub const REORTH_CADENCE: usize = 128;

/// Residual norms at or below this fraction of the input norm are treated as
/// lying inside the current subspace.
const RESIDUAL_REL_TOL: f64 = 1e-12;
/// Components with `s ≤ SV_FLOOR · max(s₁, 1)` are dropped after an update.
const SV_FLOOR: f64 = 1e-14;
/// Orthogonality deviation that forces an early reorthonormalization.
const DRIFT_TOL: f64 = 1e-10;

/// Thin SVD `U·diag(S)·Vᵀ` of a `p×q` matrix at rank `k`.
///
/// `k = 0` is the zero matrix. Columns of `U` and `V` are orthonormal, `S` is
/// nonincreasing and nonnegative, and the first non-negligible entry of each
/// `U` column is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredMatrix<T: Scalar> {
    u: DMatrix<T>,
    s: Vec<T>,
    v: DMatrix<T>,
    pending: usize,
}

/// The small core problem behind one rank-one update of `U·diag(S)·Vᵀ + a·bᵀ`.
///
/// `eta` and `xi` are the parts of `a` and `b` orthogonal to the current
/// column spaces. `k` is `[[diag(S), 0], [0, 0]] + [Uᵀa; ‖η‖]·[Vᵀb; ‖ξ‖]ᵀ`,
/// where the extra row (column) is omitted when `η` (`ξ`) is negligible.
#[derive(Debug, Clone)]
pub struct UpdateCore<T: Scalar> {
    pub a: DVector<T>,
    pub b: DVector<T>,
    pub eta: DVector<T>,
    pub xi: DVector<T>,
    pub k: DMatrix<T>,
    pub eta_kept: bool,
    pub xi_kept: bool,
}

impl<T: Scalar> FactoredMatrix<T> {
    pub fn empty(p: usize, q: usize) -> Result<Self> {
        if p == 0 || q == 0 {
            return invalid(format!("dimensions must be positive, got {p}x{q}"));
        }
        Ok(Self {
            u: DMatrix::zeros(p, 0),
            s: Vec::new(),
            v: DMatrix::zeros(q, 0),
            pending: 0,
        })
    }

    /// Builds a factorization from explicit factors, validating shapes and the
    /// ordering of `s`. Orthonormality of `u` and `v` is the caller's promise.
    pub fn from_parts(u: DMatrix<T>, s: Vec<T>, v: DMatrix<T>) -> Result<Self> {
        let k = s.len();
        if u.ncols() != k || v.ncols() != k {
            return invalid(format!("factor widths {} and {} disagree with rank {k}", u.ncols(), v.ncols()));
        }
        if u.nrows() == 0 || v.nrows() == 0 {
            return invalid("dimensions must be positive");
        }
        if k > u.nrows().min(v.nrows()) {
            return invalid("rank exceeds min(p, q)");
        }
        if s.iter().any(|x| !x.finite() || *x < T::zero()) || s.windows(2).any(|w| w[0] < w[1]) {
            return invalid("singular values must be finite, nonnegative and nonincreasing");
        }
        Ok(Self { u, s, v, pending: 0 })
    }

    /// Exact thin SVD of a dense matrix (small-matrix Jacobi routine).
    pub fn from_dense(m: &DMatrix<T>) -> Result<Self> {
        let mut f = Self::empty(m.nrows(), m.ncols())?;
        if m.iter().any(|x| !x.finite()) {
            return invalid("non-finite matrix entry");
        }
        let svd = jacobi_svd(m);
        f.u = svd.u;
        f.s = svd.s;
        f.v = svd.v;
        f.finish();
        Ok(f)
    }

    pub fn rows(&self) -> usize {
        self.u.nrows()
    }

    pub fn cols(&self) -> usize {
        self.v.nrows()
    }

    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn u(&self) -> &DMatrix<T> {
        &self.u
    }

    pub fn v(&self) -> &DMatrix<T> {
        &self.v
    }

    pub fn singular_values(&self) -> &[T] {
        &self.s
    }

    /// Largest singular value, zero at rank 0.
    pub fn leading_singular_value(&self) -> T {
        self.s.first().copied().unwrap_or_else(T::zero)
    }

    /// Rank-one updates applied since the last reorthonormalization.
    pub fn updates_since_reorthonormalization(&self) -> usize {
        self.pending
    }

    pub fn reconstruct(&self) -> DMatrix<T> {
        let mut us = self.u.clone();
        for (j, &sj) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(sj);
        }
        us * self.v.transpose()
    }

    /// `max(‖UᵀU − I‖_max, ‖VᵀV − I‖_max)`.
    pub fn orthonormality_error(&self) -> T {
        let k = self.rank();
        let id = DMatrix::<T>::identity(k, k);
        let eu = (self.u.transpose() * &self.u - &id).amax();
        let ev = (self.v.transpose() * &self.v - &id).amax();
        eu.max(ev)
    }

    pub fn update_core(&self, a: &DVector<T>, b: &DVector<T>) -> Result<UpdateCore<T>> {
        self.check_update_args(a, b)?;
        Ok(self.build_core(a, b))
    }

    fn check_update_args(&self, a: &DVector<T>, b: &DVector<T>) -> Result<()> {
        if a.len() != self.rows() || b.len() != self.cols() {
            return invalid(format!(
                "update vectors have lengths {}/{}, expected {}/{}",
                a.len(),
                b.len(),
                self.rows(),
                self.cols()
            ));
        }
        if a.iter().chain(b.iter()).any(|x| !x.finite()) {
            return invalid("non-finite entry in update vector");
        }
        Ok(())
    }

    fn build_core(&self, a: &DVector<T>, b: &DVector<T>) -> UpdateCore<T> {
        let (ua, eta) = project_out(&self.u, a);
        let (vb, xi) = project_out(&self.v, b);
        let eta_norm = eta.norm();
        let xi_norm = xi.norm();
        let eta_kept = eta_norm > T::tol(RESIDUAL_REL_TOL) * a.norm();
        let xi_kept = xi_norm > T::tol(RESIDUAL_REL_TOL) * b.norm();

        let k = self.rank();
        let rows = k + usize::from(eta_kept);
        let cols = k + usize::from(xi_kept);
        let left = DVector::from_fn(rows, |i, _| if i < k { ua[i] } else { eta_norm });
        let right = DVector::from_fn(cols, |j, _| if j < k { vb[j] } else { xi_norm });
        let mut core = &left * right.transpose();
        for (i, &si) in self.s.iter().enumerate() {
            core[(i, i)] += si;
        }
        UpdateCore {
            a: a.clone(),
            b: b.clone(),
            eta,
            xi,
            k: core,
            eta_kept,
            xi_kept,
        }
    }

    /// Thin SVD of `self + a·bᵀ`.
    pub fn rank_one_update(&self, a: &DVector<T>, b: &DVector<T>) -> Result<Self> {
        self.check_update_args(a, b)?;
        if a.iter().all(|x| *x == T::zero()) || b.iter().all(|x| *x == T::zero()) {
            return Ok(self.clone());
        }
        let core = self.build_core(a, b);
        let svd = jacobi_svd(&core.k);

        let u = extend_basis(&self.u, &core.eta, core.eta_kept) * svd.u;
        let v = extend_basis(&self.v, &core.xi, core.xi_kept) * svd.v;
        let mut out = Self {
            u,
            s: svd.s,
            v,
            pending: self.pending + 1,
        };
        out.finish();
        if out.pending >= REORTH_CADENCE || out.cheap_drift() > T::tol(DRIFT_TOL) {
            out = out.reorthonormalize();
        }
        Ok(out)
    }

    /// In-place form of [`rank_one_update`](Self::rank_one_update).
    pub fn apply_rank_one(&mut self, a: &DVector<T>, b: &DVector<T>) -> Result<()> {
        *self = self.rank_one_update(a, b)?;
        Ok(())
    }

    /// Multiplies every singular value by `c > 0`.
    pub fn scale(&self, c: T) -> Result<Self> {
        let mut out = self.clone();
        out.scale_mut(c)?;
        Ok(out)
    }

    pub fn scale_mut(&mut self, c: T) -> Result<()> {
        if !c.finite() || c <= T::zero() {
            return invalid(format!("scale factor must be positive and finite, got {c:?}"));
        }
        self.s.iter_mut().for_each(|x| *x *= c);
        Ok(())
    }

    /// Keeps the `min(r, k)` leading components.
    pub fn truncate(&self, r: usize) -> Result<Self> {
        let mut out = self.clone();
        out.truncate_mut(r)?;
        Ok(out)
    }

    pub fn truncate_mut(&mut self, r: usize) -> Result<()> {
        if r == 0 {
            return invalid("truncation rank must be at least 1");
        }
        if r < self.rank() {
            self.keep(r);
        }
        Ok(())
    }

    /// Restores orthonormal factors: QR of `U` and `V`, then an SVD of the
    /// small core `R_U·diag(S)·R_Vᵀ`.
    pub fn reorthonormalize(&self) -> Self {
        if self.rank() == 0 {
            return Self {
                pending: 0,
                ..self.clone()
            };
        }
        let mut qu = self.u.clone();
        let ru = orthonormalize_columns(&mut qu);
        let mut qv = self.v.clone();
        let rv = orthonormalize_columns(&mut qv);
        let mut core = ru;
        for (j, &sj) in self.s.iter().enumerate() {
            core.column_mut(j).scale_mut(sj);
        }
        let core = core * rv.transpose();
        let svd = jacobi_svd(&core);
        let mut out = Self {
            u: qu * svd.u,
            s: svd.s,
            v: qv * svd.v,
            pending: 0,
        };
        out.finish();
        out
    }

    fn keep(&mut self, k: usize) {
        self.s.truncate(k);
        self.u = self.u.columns(0, k).into_owned();
        self.v = self.v.columns(0, k).into_owned();
    }

    /// Drops negligible components and applies the sign convention.
    fn finish(&mut self) {
        let top = self.leading_singular_value();
        let floor = T::tol(SV_FLOOR) * if top > T::one() { top } else { T::one() };
        let live = self.s.iter().take_while(|&&x| x > floor).count();
        if live < self.rank() {
            self.keep(live);
        }
        let tiny = T::eps() * T::lit(16.0);
        for j in 0..self.rank() {
            let first = self.u.column(j).iter().copied().find(|x| x.abs() > tiny);
            if matches!(first, Some(x) if x < T::zero()) {
                self.u.column_mut(j).neg_mut();
                self.v.column_mut(j).neg_mut();
            }
        }
    }

    /// O(p + q) probe of orthonormality using the first and last columns.
    fn cheap_drift(&self) -> T {
        let k = self.rank();
        if k == 0 {
            return T::zero();
        }
        let (u0, v0) = (self.u.column(0), self.v.column(0));
        let (ul, vl) = (self.u.column(k - 1), self.v.column(k - 1));
        let mut d = (u0.norm_squared() - T::one()).abs().max((v0.norm_squared() - T::one()).abs());
        d = d
            .max((ul.norm_squared() - T::one()).abs())
            .max((vl.norm_squared() - T::one()).abs());
        if k > 1 {
            d = d.max(u0.dot(&ul).abs()).max(v0.dot(&vl).abs());
        }
        d
    }
}

/// Returns `(Bᵀx, x − B·Bᵀx)` with one reorthogonalization pass.
fn project_out<T: Scalar>(basis: &DMatrix<T>, x: &DVector<T>) -> (DVector<T>, DVector<T>) {
    if basis.ncols() == 0 {
        return (DVector::zeros(0), x.clone());
    }
    let mut coeff = basis.tr_mul(x);
    let mut resid = x - basis * &coeff;
    let again = basis.tr_mul(&resid);
    resid -= basis * &again;
    coeff += again;
    (coeff, resid)
}

fn extend_basis<T: Scalar>(basis: &DMatrix<T>, resid: &DVector<T>, kept: bool) -> DMatrix<T> {
    if !kept {
        return basis.clone();
    }
    let k = basis.ncols();
    let mut out = basis.clone().insert_column(k, T::zero());
    let n = resid.norm();
    out.column_mut(k).copy_from(&(resid / n));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn e(n: usize, i: usize) -> DVector<f64> {
        DVector::from_fn(n, |j, _| if j == i { 1.0 } else { 0.0 })
    }

    fn ecol(n: usize, i: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(n, 1, e(n, i).as_slice())
    }

    #[test]
    fn empty_reconstructs_to_zero() {
        let f = FactoredMatrix::<f64>::empty(10, 20).unwrap();
        assert_eq!((f.rows(), f.cols(), f.rank()), (10, 20, 0));
        assert_eq!(FactoredMatrix::<f64>::empty(1, 1).unwrap().reconstruct(), dmatrix![0.0]);
        assert_eq!(FactoredMatrix::<f64>::empty(3, 5).unwrap().reconstruct(), DMatrix::zeros(3, 5));
        assert!(FactoredMatrix::<f64>::empty(0, 4).is_err());
        assert!(FactoredMatrix::<f64>::empty(4, 0).is_err());
    }

    #[test]
    fn first_update_of_empty_matrix() {
        let f = FactoredMatrix::<f64>::empty(3, 4).unwrap();
        let a = dvector![2.0, 0.0, 0.0];
        let b = dvector![0.0, 3.0, 0.0, 0.0];
        let g = f.rank_one_update(&a, &b).unwrap();
        assert_eq!(g.rank(), 1);
        assert!((g.singular_values()[0] - 6.0).abs() < 1e-14);
        assert!((g.u().column(0) - &a / 2.0).norm() < 1e-14);
        assert!((g.v().column(0) - &b / 3.0).norm() < 1e-14);
    }

    #[test]
    fn collinear_update_grows_existing_value() {
        let f = FactoredMatrix::from_parts(ecol(3, 0), vec![5.0], ecol(4, 0)).unwrap();
        let g = f.rank_one_update(&e(3, 0), &e(4, 0)).unwrap();
        assert_eq!(g.rank(), 1);
        assert!((g.singular_values()[0] - 6.0).abs() < 1e-14);
    }

    #[test]
    fn zero_update_is_noop() {
        let f = FactoredMatrix::from_parts(ecol(3, 1), vec![2.0], ecol(2, 0)).unwrap();
        assert_eq!(f.rank_one_update(&DVector::zeros(3), &dvector![1.0, 1.0]).unwrap(), f);
        assert_eq!(f.rank_one_update(&dvector![1.0, 0.0, 0.0], &DVector::zeros(2)).unwrap(), f);
    }

    #[test]
    fn update_rejects_bad_input() {
        let f = FactoredMatrix::<f64>::empty(3, 2).unwrap();
        assert!(f.rank_one_update(&DVector::zeros(2), &DVector::zeros(2)).is_err());
        assert!(f.rank_one_update(&dvector![f64::NAN, 0.0, 0.0], &dvector![1.0, 1.0]).is_err());
        assert!(f.rank_one_update(&dvector![1.0, 0.0, 0.0], &dvector![f64::INFINITY, 1.0]).is_err());
    }

    #[test]
    fn core_residuals_are_orthogonal() {
        let f = FactoredMatrix::from_dense(&dmatrix![3.0, 1.0, 0.0; 1.0, 2.0, 1.0; 0.0, 0.0, 0.0; 0.0, 1.0, 0.0]).unwrap();
        let a = dvector![1.0, -2.0, 0.5, 3.0];
        let b = dvector![0.3, 0.1, -1.0];
        let core = f.update_core(&a, &b).unwrap();
        assert!(f.u().tr_mul(&core.eta).amax() < 1e-10);
        assert!(f.v().tr_mul(&core.xi).amax() < 1e-10);
        // full-rank V: the whole of b lies in its span
        assert!(!core.xi_kept);
    }

    #[test]
    fn scale_examples() {
        let f = FactoredMatrix::from_dense(&DMatrix::from_diagonal(&dvector![4.0, 2.0])).unwrap();
        let g = f.scale(0.5).unwrap();
        assert_eq!(g.singular_values(), &[2.0, 1.0]);
        assert_eq!(f.scale(1.0).unwrap(), f);
        let h = FactoredMatrix::<f64>::from_parts(ecol(2, 0), vec![3.0], ecol(2, 1)).unwrap();
        let factor = 5.0 * (1.0 - 0.02) / 0.02;
        assert!((h.scale(factor).unwrap().singular_values()[0] - 735.0).abs() < 1e-9);
        assert!(f.scale(0.0).is_err());
        assert!(f.scale(-1.0).is_err());
        assert!(f.scale(f64::NAN).is_err());
    }

    #[test]
    fn truncate_examples() {
        let d = DMatrix::from_diagonal(&dvector![7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
        let f = FactoredMatrix::from_dense(&d).unwrap();
        let g = f.truncate(5).unwrap();
        assert_eq!(g.singular_values(), &[7.0, 6.0, 5.0, 4.0, 3.0]);
        let two = f.truncate(2).unwrap();
        assert_eq!(two.truncate(10).unwrap(), two);
        assert!(f.truncate(0).is_err());
        assert!((f.truncate(7).unwrap().reconstruct() - d).amax() < 1e-12);
    }

    #[test]
    fn reconstruct_places_rank_one_entry() {
        let f = FactoredMatrix::from_parts(ecol(2, 0), vec![6.0], ecol(3, 1)).unwrap();
        assert_eq!(f.reconstruct(), dmatrix![0.0, 6.0, 0.0; 0.0, 0.0, 0.0]);
    }

    #[test]
    fn reorthonormalize_is_idempotent_on_clean_input() {
        let d: DMatrix<f64> = dmatrix![1.0, 2.0, 0.0; -1.0, 0.5, 3.0; 0.0, 1.0, 1.0];
        let f = FactoredMatrix::from_dense(&d).unwrap();
        let g = f.reorthonormalize();
        assert!((g.reconstruct() - f.reconstruct()).amax() < 1e-12);
        for (x, y) in g.singular_values().iter().zip(f.singular_values()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((g.u() - f.u()).amax() < 1e-12);
    }

    #[test]
    fn sign_convention_makes_first_entry_positive() {
        let f = FactoredMatrix::from_dense(&dmatrix![-3.0, 0.0; 0.0, 0.0]).unwrap();
        assert!(f.u()[(0, 0)] > 0.0);
        assert!(f.v()[(0, 0)] < 0.0);
    }

    #[test]
    fn single_precision_updates() {
        let f = FactoredMatrix::<f32>::empty(3, 2).unwrap();
        let g = f.rank_one_update(&dvector![3.0f32, 0.0, 4.0], &dvector![0.0f32, 2.0]).unwrap();
        assert!((g.leading_singular_value() - 10.0).abs() < 1e-5);
    }
}
