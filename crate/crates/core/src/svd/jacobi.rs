//! Dense SVD for the small core matrices that drive each incremental update.
//!
//! One-sided (Hestenes) Jacobi: columns of the working matrix are rotated
//! pairwise until mutually orthogonal. Singular values come out with high
//! relative accuracy, which matters because the chart statistic is the
//! leading value of a core that is rebuilt thousands of times per run.

use nalgebra::DMatrix;

use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 80;

/// Thin SVD `A = U·diag(s)·Vᵀ` with `s` sorted nonincreasing.
///
/// For an `m×n` input, `u` is `m×min(m,n)` and `v` is `n×min(m,n)`. Columns of
/// `u` belonging to exactly zero singular values are zero.
#[derive(Debug, Clone)]
pub struct SmallSvd<T: Scalar> {
    pub u: DMatrix<T>,
    pub s: Vec<T>,
    pub v: DMatrix<T>,
}

pub fn jacobi_svd<T: Scalar>(a: &DMatrix<T>) -> SmallSvd<T> {
    if a.nrows() < a.ncols() {
        let t = jacobi_svd(&a.transpose());
        return SmallSvd { u: t.v, s: t.s, v: t.u };
    }
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut vacc = DMatrix::<T>::identity(n, n);
    let tol = T::eps() * T::lit(m.max(1) as f64);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let (alpha, beta, gamma) = {
                    let ws = w.as_slice();
                    let ci = &ws[i * m..(i + 1) * m];
                    let cj = &ws[j * m..(j + 1) * m];
                    let mut alpha = T::zero();
                    let mut beta = T::zero();
                    let mut gamma = T::zero();
                    for (&x, &y) in ci.iter().zip(cj) {
                        alpha += x * x;
                        beta += y * y;
                        gamma += x * y;
                    }
                    (alpha, beta, gamma)
                };
                if gamma == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let sign = if zeta >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_columns(w.as_mut_slice(), m, i, j, c, s);
                rotate_columns(vacc.as_mut_slice(), n, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma: Vec<(usize, T)> = (0..n).map(|j| (j, w.column(j).norm())).collect();
    // Stable sort keeps the routine's own order at ties.
    sigma.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap_or(std::cmp::Ordering::Equal));

    let mut u = DMatrix::<T>::zeros(m, n);
    let mut v = DMatrix::<T>::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (dst, &(src, sv)) in sigma.iter().enumerate() {
        if sv > T::zero() {
            u.column_mut(dst).copy_from(&(w.column(src) / sv));
        }
        v.column_mut(dst).copy_from(&vacc.column(src));
        s.push(sv);
    }
    let live = s.iter().take_while(|&&x| x > T::zero()).count();
    if live > 0 {
        let mut head = u.columns(0, live).into_owned();
        orthonormalize_columns(&mut head);
        u.columns_mut(0, live).copy_from(&head);
    }
    SmallSvd { u, s, v }
}

#[inline]
fn rotate_columns<T: Scalar>(data: &mut [T], rows: usize, i: usize, j: usize, c: T, s: T) {
    let (lo, hi) = data.split_at_mut(j * rows);
    let ci = &mut lo[i * rows..(i + 1) * rows];
    let cj = &mut hi[..rows];
    for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
        let (xi, yj) = (*x, *y);
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}

/// In-place modified Gram–Schmidt with one reorthogonalization pass.
///
/// Returns the upper-triangular `R` with `Q·R` equal to the input. Columns
/// that become numerically zero are left as zero with a zero diagonal in `R`.
pub fn orthonormalize_columns<T: Scalar>(q: &mut DMatrix<T>) -> DMatrix<T> {
    let (m, n) = q.shape();
    let mut r = DMatrix::<T>::zeros(n, n);
    let data = q.as_mut_slice();
    for j in 0..n {
        let original = norm(&data[j * m..(j + 1) * m]);
        for _pass in 0..2 {
            for i in 0..j {
                let (lo, hi) = data.split_at_mut(j * m);
                let qi = &lo[i * m..(i + 1) * m];
                let qj = &mut hi[..m];
                let proj = dot(qi, qj);
                for (y, &x) in qj.iter_mut().zip(qi) {
                    *y -= proj * x;
                }
                r[(i, j)] += proj;
            }
        }
        let col = &mut data[j * m..(j + 1) * m];
        let nrm = norm(col);
        if nrm > T::eps() * T::lit(16.0) * original && nrm > T::zero() {
            for x in col.iter_mut() {
                *x /= nrm;
            }
            r[(j, j)] = nrm;
        } else {
            col.iter_mut().for_each(|x| *x = T::zero());
        }
    }
    r
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}
