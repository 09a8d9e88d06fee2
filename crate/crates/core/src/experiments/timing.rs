use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::calibration::{AnyChart, Method, StreamSource};
use crate::error::{invalid, Result};
use crate::model::{sample_unit_sphere, ProcessModel};
use crate::monitor::{Chart, MonitorConfig};
use crate::seed;

const WARMUP_STEPS: usize = 10;

/// Median wall time of one chart step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub p: usize,
    pub q: usize,
    pub method: Method,
    pub median_step_seconds: f64,
    pub steps: usize,
}

/// Times `steps` chart updates per method and dimension on in-control data
/// with `j` random unit-scale factors. `methods` pairs each method with its
/// own step count so the dense chart can be sampled more sparsely at large
/// sizes.
pub fn timing_benchmark(
    dims: &[(usize, usize)],
    r: usize,
    m: usize,
    j: usize,
    methods: &[(Method, usize)],
    rng_seed: u64,
) -> Result<Vec<TimingRow>> {
    let mut rows = Vec::new();
    for &(p, q) in dims {
        let mut rng = seed::rng(seed::derive(rng_seed, "bench-patterns", (p * 100_003 + q) as u64));
        let mut model = ProcessModel::<f64>::independent(p, q)?;
        for _ in 0..j {
            let u = sample_unit_sphere(p, &mut rng)?;
            let v = sample_unit_sphere(q, &mut rng)?;
            model = model.with_factor(1.0, u, v)?;
        }
        let config = MonitorConfig::new(0.05, r, f64::INFINITY, m)?;
        for &(method, steps) in methods {
            if steps == 0 {
                return invalid("timing needs at least one step");
            }
            let data: Vec<_> = model
                .stream(m, seed::derive(rng_seed, "bench-data", p as u64))
                .take(WARMUP_STEPS + steps)
                .collect();
            let mut chart = AnyChart::new(method, StreamSource::sigma0(&model), config)?;
            let mut times = Vec::with_capacity(steps);
            for (i, g) in data.iter().enumerate() {
                let start = Instant::now();
                chart.step(g)?;
                let dt = start.elapsed().as_secs_f64();
                if i >= WARMUP_STEPS {
                    times.push(dt);
                }
            }
            rows.push(TimingRow {
                p,
                q,
                method,
                median_step_seconds: median(&mut times),
                steps,
            });
        }
    }
    Ok(rows)
}

pub(crate) fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_table_shape() {
        let rows = timing_benchmark(&[(16, 16), (32, 16)], 3, 2, 1, &[(Method::Isvd, 5), (Method::Baseline, 5)], 1).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.median_step_seconds > 0.0));
        assert!(timing_benchmark(&[(4, 4)], 1, 1, 0, &[(Method::Isvd, 0)], 1).is_err());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
