#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;

use isvd_chart::model::sample_unit_sphere;
use isvd_chart::monitor::Sigma0Component;
use isvd_chart::seed::{self, Rng};
use isvd_chart::{FactoredMatrix, Sigma0Factors};

pub fn gaussian(n: usize, rng: &mut Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Descending singular values from nalgebra's dense SVD.
pub fn oracle_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Largest deviation of `f` from the dense matrix `m`, relative to `‖m‖_F`:
/// reconstruction error and singular values padded with zeros.
pub fn relative_mismatch(f: &FactoredMatrix, m: &DMatrix<f64>) -> f64 {
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let recon = (f.reconstruct() - m).norm() / scale;
    let oracle = oracle_singular_values(m);
    let sv = f.singular_values();
    let mut worst = recon;
    for (i, &o) in oracle.iter().enumerate() {
        let got = sv.get(i).copied().unwrap_or(0.0);
        worst = worst.max((got - o).abs() / scale);
    }
    for &extra in sv.iter().skip(oracle.len()) {
        worst = worst.max(extra / scale);
    }
    worst
}

/// Kinds of update vector used by the randomized sequences: generic, zero,
/// inside the current column space, or a repeat of an earlier vector.
#[derive(Debug, Clone, Copy)]
pub enum Kind {
    Fresh,
    Zero,
    InSpan,
    Repeat,
}

pub fn kind_from(code: u8) -> Kind {
    match code % 8 {
        0 => Kind::Zero,
        1 | 2 => Kind::InSpan,
        3 => Kind::Repeat,
        _ => Kind::Fresh,
    }
}

pub fn update_vector(kind: Kind, basis: &DMatrix<f64>, history: &[DVector<f64>], n: usize, rng: &mut Rng) -> DVector<f64> {
    match kind {
        Kind::Zero => DVector::zeros(n),
        Kind::InSpan if basis.ncols() > 0 => basis * gaussian(basis.ncols(), rng),
        Kind::Repeat if !history.is_empty() => {
            let i = rng.random_range(0..history.len());
            &history[i] * rng.random_range(-2.0..2.0)
        }
        _ => gaussian(n, rng) * 10f64.powf(rng.random_range(-3.0..3.0)),
    }
}

/// Applies `kinds.len()` random rank-one updates to an empty `p×q`
/// factorization, returning it together with the dense sum.
pub fn random_sequence(p: usize, q: usize, kinds: &[u8], rng_seed: u64) -> (FactoredMatrix, DMatrix<f64>) {
    let mut rng = seed::rng(rng_seed);
    let mut f = FactoredMatrix::empty(p, q).unwrap();
    let mut dense = DMatrix::zeros(p, q);
    let (mut ha, mut hb) = (Vec::new(), Vec::new());
    for &code in kinds {
        let kind = kind_from(code);
        let a = update_vector(kind, f.u(), &ha, p, &mut rng);
        let b = update_vector(kind, f.v(), &hb, q, &mut rng);
        dense += &a * b.transpose();
        f.apply_rank_one(&a, &b).unwrap();
        ha.push(a);
        hb.push(b);
    }
    (f, dense)
}

pub fn random_sigma0(p: usize, q: usize, j: usize, rng: &mut Rng) -> Sigma0Factors {
    let components = (0..j)
        .map(|_| Sigma0Component {
            weight: rng.random_range(0.2..1.5),
            u: sample_unit_sphere(p, rng).unwrap(),
            v: sample_unit_sphere(q, rng).unwrap(),
        })
        .collect();
    Sigma0Factors::new(p, q, components).unwrap()
}
