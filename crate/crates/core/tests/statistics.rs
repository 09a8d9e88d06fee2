mod common;

use nalgebra::{DMatrix, DVector};

use isvd_chart::calibration::{estimate_sigma0, Sigma0Rank};
use isvd_chart::model::sample_unit_sphere;
use isvd_chart::seed;
use isvd_chart::{MonitorConfig, MonitorState, ProcessModel, Sigma0Factors};

fn pairs(model: &ProcessModel, n: usize, rng_seed: u64) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for g in model.stream(100, rng_seed).take(n / 100) {
        xs.extend(g.xs);
        ys.extend(g.ys);
    }
    (xs, ys)
}

#[test]
fn sample_cross_covariance_matches_the_model() {
    let (p, q, n) = (4, 5, 100_000);
    let mut rng = seed::rng(1);
    let u0 = sample_unit_sphere(p, &mut rng).unwrap();
    let v0 = sample_unit_sphere(q, &mut rng).unwrap();
    let u = sample_unit_sphere(p, &mut rng).unwrap();
    let v = sample_unit_sphere(q, &mut rng).unwrap();
    let model = ProcessModel::independent(p, q)
        .unwrap()
        .with_factor(0.8, u0, v0)
        .unwrap()
        .with_change(1.2, u, v, Some(1))
        .unwrap();
    let (xs, ys) = pairs(&model, n, 2);
    let mut sum = DMatrix::<f64>::zeros(p, q);
    let mut sum_sq = DMatrix::<f64>::zeros(p, q);
    for (x, y) in xs.iter().zip(&ys) {
        let prod = x * y.transpose();
        sum_sq += prod.component_mul(&prod);
        sum += prod;
    }
    let nf = n as f64;
    let mean = &sum / nf;
    let truth = model.true_cross_covariance(true).unwrap();
    for i in 0..p {
        for j in 0..q {
            let var = sum_sq[(i, j)] / nf - mean[(i, j)].powi(2);
            let se = (var / nf).sqrt();
            assert!((mean[(i, j)] - truth[(i, j)]).abs() <= 3.0 * se, "entry ({i}, {j})");
        }
    }
}

#[test]
fn estimated_sigma0_recovers_a_single_factor() {
    let (p, q, n) = (10, 20, 100_000);
    let mut rng = seed::rng(3);
    let u0 = sample_unit_sphere(p, &mut rng).unwrap();
    let v0 = sample_unit_sphere(q, &mut rng).unwrap();
    let model = ProcessModel::independent(p, q)
        .unwrap()
        .with_factor(1.0, u0.clone(), v0.clone())
        .unwrap();
    let (xs, ys) = pairs(&model, n, 4);
    let est = estimate_sigma0(&xs, &ys, Sigma0Rank::default(), false).unwrap();
    assert_eq!(est.j(), 1);
    let c = &est.components()[0];
    assert!((c.weight - 1.0).abs() <= 0.05, "weight {}", c.weight);
    assert!(c.u.dot(&u0).abs() >= 0.99);
    assert!(c.v.dot(&v0).abs() >= 0.99);
}

#[test]
fn automatic_rank_keeps_nothing_for_independent_streams() {
    let (p, q, n) = (10, 20, 20_000);
    let model = ProcessModel::independent(p, q).unwrap();
    let (xs, ys) = pairs(&model, n, 5);
    let est = estimate_sigma0(&xs, &ys, Sigma0Rank::default(), false).unwrap();
    let bound = 3.0 * ((p * q) as f64 / n as f64).sqrt();
    assert!(est.j() <= 1);
    assert!(est.components().iter().all(|c| c.weight <= bound));
}

#[test]
fn fixed_rank_and_mean_subtraction() {
    let (p, q, n) = (6, 8, 50_000);
    let mut rng = seed::rng(6);
    let mu_x = common::gaussian(p, &mut rng) * 3.0;
    let mu_y = common::gaussian(q, &mut rng) * 3.0;
    let u0 = sample_unit_sphere(p, &mut rng).unwrap();
    let v0 = sample_unit_sphere(q, &mut rng).unwrap();
    let model = ProcessModel::independent(p, q)
        .unwrap()
        .with_factor(0.9, u0.clone(), v0)
        .unwrap()
        .with_means(mu_x, mu_y)
        .unwrap();
    let (xs, ys) = pairs(&model, n, 7);
    let est = estimate_sigma0(&xs, &ys, Sigma0Rank::Fixed(2), true).unwrap();
    assert_eq!(est.j(), 2);
    let lead = &est.components()[0];
    assert!((lead.weight - 0.81).abs() <= 0.05);
    assert!(lead.u.dot(&u0).abs() >= 0.98);
    assert!(est.components()[1].weight < 0.1);
}

#[test]
fn statistic_drifts_upward_after_a_change() {
    let (p, q, m) = (10, 20, 5);
    let cfg = MonitorConfig::new(0.05, 5, f64::INFINITY, m).unwrap();
    let reps = 200;
    let (mut before, mut after) = (Vec::new(), Vec::new());
    for rep in 0..reps {
        let mut rng = seed::rng(seed::derive(8, "drift", rep));
        let u = sample_unit_sphere(p, &mut rng).unwrap();
        let v = sample_unit_sphere(q, &mut rng).unwrap();
        let model = ProcessModel::independent(p, q).unwrap().with_change(1.0, u, v, Some(101)).unwrap();
        let mut chart = MonitorState::init(Sigma0Factors::none(p, q), cfg, p, q).unwrap();
        let (mut pre, mut post) = (0.0, 0.0);
        for g in model.stream(m, rep).take(200) {
            let s = chart.step(&g).unwrap().statistic;
            match g.t {
                51..=100 => pre += s / 50.0,
                151..=200 => post += s / 50.0,
                _ => {}
            }
        }
        before.push(pre);
        after.push(post);
    }
    let diffs: Vec<f64> = after.iter().zip(&before).map(|(a, b)| a - b).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean > 3.0 * sd / n.sqrt(), "mean {mean}, se {}", sd / n.sqrt());
    // The post-change statistic estimates s² = 1 from above.
    let post_mean = after.iter().sum::<f64>() / n;
    assert!(post_mean > 0.9, "post-change mean {post_mean}");
}
