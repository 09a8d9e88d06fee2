//! Control-limit calibration by Monte Carlo.
//!
//! Run lengths are zero-state: every replication starts from `D₀ = 0`.
//! The default search simulates each replication's statistic path once and
//! scans candidate limits over the stored running maxima, so the estimated
//! ARL is an exactly nondecreasing step function of `H` and bisection on it
//! is deterministic. Paths are extended lazily, only as far as the largest
//! limit examined so far requires.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::DenseChartState;
use crate::error::{invalid, Error, Result};
use crate::model::{ProcessModel, Subgroup, SubgroupStream};
use crate::monitor::{Chart, ChartPoint, MonitorConfig, MonitorState, Sigma0Component, Sigma0Factors};
use crate::scalar::Scalar;
use crate::seed::{self, Rng};

/// Largest tolerated fraction of censored runs at an accepted limit.
pub const MAX_CENSOR_FRACTION: f64 = 0.01;
const BRACKET_GROWTH: f64 = 1.1;
const MAX_BRACKET_STEPS: usize = 400;
const MAX_BISECTIONS: usize = 200;

/// Which chart produces the statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Isvd,
    Baseline,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Isvd => "isvd",
            Method::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSpec {
    pub target_arl0: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    pub replications: usize,
    pub max_run_length: u64,
    pub seed: u64,
}

fn default_tolerance() -> f64 {
    0.02
}

impl CalibrationSpec {
    /// Spec with the default tolerance and censoring horizon
    /// `max(10·target, 50·target/5)`.
    pub fn new(target_arl0: f64, replications: usize, seed: u64) -> Self {
        Self {
            target_arl0,
            tolerance: default_tolerance(),
            replications,
            max_run_length: default_horizon(target_arl0),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_arl0 > 0.0) || !self.target_arl0.is_finite() {
            return invalid(format!("target ARL must be positive, got {}", self.target_arl0));
        }
        if !(self.tolerance > 0.0) {
            return invalid("tolerance must be positive");
        }
        if self.replications == 0 {
            return invalid("at least one replication is required");
        }
        if (self.max_run_length as f64) < 10.0 * self.target_arl0 {
            return invalid(format!(
                "censoring horizon {} is below 10 x target ARL {}",
                self.max_run_length, self.target_arl0
            ));
        }
        Ok(())
    }
}

pub fn default_horizon(target_arl0: f64) -> u64 {
    (10.0 * target_arl0).max(50.0 * target_arl0 / 5.0).ceil().max(1.0) as u64
}

/// First alarm time, or the horizon when no alarm occurred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunLength {
    Alarm(u64),
    Censored(u64),
}

impl RunLength {
    pub fn value(self) -> u64 {
        match self {
            RunLength::Alarm(t) | RunLength::Censored(t) => t,
        }
    }

    pub fn is_censored(self) -> bool {
        matches!(self, RunLength::Censored(_))
    }
}

/// Monte Carlo ARL with its standard error. Censored runs count at the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArlEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub censor_fraction: f64,
    pub replications: usize,
}

impl ArlEstimate {
    pub fn from_run_lengths(rls: &[RunLength]) -> Self {
        let n = rls.len() as f64;
        let mean = rls.iter().map(|r| r.value() as f64).sum::<f64>() / n;
        let var = if rls.len() > 1 {
            rls.iter().map(|r| (r.value() as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std_error: (var / n).sqrt(),
            censor_fraction: rls.iter().filter(|r| r.is_censored()).count() as f64 / n,
            replications: rls.len(),
        }
    }
}

/// Output of a limit search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    #[serde(rename = "H")]
    pub h: f64,
    pub target_arl0: f64,
    pub achieved_arl: f64,
    pub std_error: f64,
    pub censor_fraction: f64,
    pub replications: usize,
    pub seed: u64,
}

/// Runs `chart` on `stream` until the statistic exceeds `limit` or `max_len`
/// subgroups have been consumed.
pub fn run_length<T: Scalar, C: Chart<T> + ?Sized>(
    chart: &mut C,
    stream: impl IntoIterator<Item = Subgroup<T>>,
    limit: f64,
    max_len: u64,
) -> Result<RunLength> {
    let mut stream = stream.into_iter();
    for t in 1..=max_len {
        let g = stream
            .next()
            .ok_or_else(|| Error::InvalidArgument(format!("stream ended at subgroup {t}")))?;
        let pt = chart.step(&g)?;
        if pt.statistic > limit {
            return Ok(RunLength::Alarm(t));
        }
    }
    Ok(RunLength::Censored(max_len))
}

/// Source of independent subgroup streams, one per replication seed.
pub trait StreamSource<T: Scalar>: Sync {
    type Stream: Iterator<Item = Subgroup<T>> + Send;

    fn dims(&self) -> (usize, usize);

    /// `Σ₀` handed to the charts that monitor these streams.
    fn sigma0(&self) -> Sigma0Factors<T>;

    fn open(&self, m: usize, seed: u64) -> Result<Self::Stream>;
}

impl<T: Scalar> StreamSource<T> for ProcessModel<T> {
    type Stream = SubgroupStream<T>;

    fn dims(&self) -> (usize, usize) {
        (self.p(), self.q())
    }

    fn sigma0(&self) -> Sigma0Factors<T> {
        Sigma0Factors::from_model(self)
    }

    fn open(&self, m: usize, seed: u64) -> Result<Self::Stream> {
        if m == 0 {
            return invalid("subgroup size must be at least 1");
        }
        Ok(self.stream(m, seed))
    }
}

/// In-control streams built by resampling historical pairs with replacement.
#[derive(Debug, Clone)]
pub struct BootstrapSource<T: Scalar> {
    xs: Vec<DVector<T>>,
    ys: Vec<DVector<T>>,
    sigma0: Sigma0Factors<T>,
}

impl<T: Scalar> BootstrapSource<T> {
    pub fn new(xs: Vec<DVector<T>>, ys: Vec<DVector<T>>, sigma0: Sigma0Factors<T>) -> Result<Self> {
        let g = Subgroup::new(0, xs, ys)?;
        if g.p() != sigma0.p() || g.q() != sigma0.q() {
            return invalid("historical data and Σ₀ dimensions differ");
        }
        Ok(Self {
            xs: g.xs,
            ys: g.ys,
            sigma0,
        })
    }
}

pub struct BootstrapStream<T: Scalar> {
    source: BootstrapSource<T>,
    m: usize,
    t: u64,
    rng: Rng,
}

impl<T: Scalar> Iterator for BootstrapStream<T> {
    type Item = Subgroup<T>;

    fn next(&mut self) -> Option<Subgroup<T>> {
        self.t += 1;
        let n = self.source.xs.len();
        let idx: Vec<usize> = (0..self.m).map(|_| self.rng.random_range(0..n)).collect();
        let xs = idx.iter().map(|&i| self.source.xs[i].clone()).collect();
        let ys = idx.iter().map(|&i| self.source.ys[i].clone()).collect();
        Subgroup::new(self.t, xs, ys).ok()
    }
}

impl<T: Scalar> StreamSource<T> for BootstrapSource<T> {
    type Stream = BootstrapStream<T>;

    fn dims(&self) -> (usize, usize) {
        (self.sigma0.p(), self.sigma0.q())
    }

    fn sigma0(&self) -> Sigma0Factors<T> {
        self.sigma0.clone()
    }

    fn open(&self, m: usize, seed: u64) -> Result<Self::Stream> {
        if m == 0 {
            return invalid("subgroup size must be at least 1");
        }
        // Cloning keeps streams independent of the source's lifetime.
        Ok(BootstrapStream {
            source: self.clone(),
            m,
            t: 0,
            rng: seed::rng(seed),
        })
    }
}

/// Either chart behind one interface.
#[derive(Debug, Clone)]
pub enum AnyChart<T: Scalar> {
    Isvd(MonitorState<T>),
    Baseline(DenseChartState<T>),
}

impl<T: Scalar> AnyChart<T> {
    pub fn new(method: Method, sigma0: Sigma0Factors<T>, config: MonitorConfig) -> Result<Self> {
        let (p, q) = (sigma0.p(), sigma0.q());
        Ok(match method {
            Method::Isvd => AnyChart::Isvd(MonitorState::init(sigma0, config, p, q)?),
            Method::Baseline => AnyChart::Baseline(DenseChartState::init(&sigma0, config.lambda, config.h)?),
        })
    }
}

impl<T: Scalar> Chart<T> for AnyChart<T> {
    fn step(&mut self, g: &Subgroup<T>) -> Result<ChartPoint> {
        match self {
            AnyChart::Isvd(c) => c.step(g),
            AnyChart::Baseline(c) => c.dense_step(g),
        }
    }

    fn statistic(&self) -> f64 {
        match self {
            AnyChart::Isvd(c) => Chart::statistic(c),
            AnyChart::Baseline(c) => Chart::statistic(c),
        }
    }

    fn dims(&self) -> (usize, usize) {
        match self {
            AnyChart::Isvd(c) => Chart::dims(c),
            AnyChart::Baseline(c) => Chart::dims(c),
        }
    }
}

/// Seed of replication `i` under a parent seed.
pub fn replication_seed(parent: u64, i: usize) -> u64 {
    seed::derive(parent, "replication", i as u64)
}

/// Run lengths of `replications` independent charts at the limit in `config`.
pub fn simulate_run_lengths<T: Scalar, S: StreamSource<T>>(
    source: &S,
    method: Method,
    config: &MonitorConfig,
    replications: usize,
    max_len: u64,
    seed: u64,
) -> Result<Vec<RunLength>> {
    let sigma0 = source.sigma0();
    (0..replications)
        .into_par_iter()
        .map(|i| {
            let mut chart = AnyChart::new(method, sigma0.clone(), *config)?;
            let stream = source.open(config.m, replication_seed(seed, i))?;
            run_length(&mut chart, stream, config.h, max_len)
        })
        .collect()
}

/// ARL at the limit `config.h` over `spec.replications` fresh streams.
pub fn estimate_arl<T: Scalar, S: StreamSource<T>>(
    source: &S,
    method: Method,
    config: &MonitorConfig,
    spec: &CalibrationSpec,
) -> Result<ArlEstimate> {
    let rls = simulate_run_lengths(source, method, config, spec.replications, spec.max_run_length, spec.seed)?;
    Ok(ArlEstimate::from_run_lengths(&rls))
}

struct StoredPath<T: Scalar, St> {
    chart: AnyChart<T>,
    stream: St,
    /// Running maximum of the statistic; entry `t−1` covers subgroups `1..=t`.
    running_max: Vec<f64>,
}

impl<T: Scalar, St: Iterator<Item = Subgroup<T>>> StoredPath<T, St> {
    fn extend_past(&mut self, cap: f64, horizon: usize) -> Result<()> {
        while self.running_max.len() < horizon && self.running_max.last().is_none_or(|&x| x <= cap) {
            let g = self
                .stream
                .next()
                .ok_or_else(|| Error::InvalidArgument("stream ended during calibration".into()))?;
            let stat = self.chart.step(&g)?.statistic;
            let prev = self.running_max.last().copied().unwrap_or(f64::NEG_INFINITY);
            self.running_max.push(prev.max(stat));
        }
        Ok(())
    }

    fn run_length(&self, h: f64, horizon: usize) -> RunLength {
        let idx = self.running_max.partition_point(|&x| x <= h);
        if idx < self.running_max.len() {
            RunLength::Alarm(idx as u64 + 1)
        } else {
            debug_assert_eq!(self.running_max.len(), horizon);
            RunLength::Censored(horizon as u64)
        }
    }
}

/// Statistic paths stored once and scanned for any limit up to `cap`.
pub struct PathStore<T: Scalar, S: StreamSource<T>> {
    paths: Vec<StoredPath<T, S::Stream>>,
    horizon: usize,
    cap: f64,
}

impl<T: Scalar, S: StreamSource<T>> PathStore<T, S> {
    pub fn new(source: &S, method: Method, config: &MonitorConfig, replications: usize, horizon: u64, seed: u64) -> Result<Self> {
        let sigma0 = source.sigma0();
        let paths = (0..replications)
            .map(|i| {
                Ok(StoredPath {
                    chart: AnyChart::new(method, sigma0.clone(), config.with_limit(f64::INFINITY))?,
                    stream: source.open(config.m, replication_seed(seed, i))?,
                    running_max: Vec::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            paths,
            horizon: horizon as usize,
            cap: f64::NEG_INFINITY,
        })
    }

    /// Simulates every path until its running maximum exceeds `cap` or it
    /// reaches the horizon.
    pub fn extend_to(&mut self, cap: f64) -> Result<()>
    where
        S::Stream: Send,
    {
        if cap <= self.cap {
            return Ok(());
        }
        let horizon = self.horizon;
        self.paths.par_iter_mut().try_for_each(|p| p.extend_past(cap, horizon))?;
        self.cap = cap;
        Ok(())
    }

    /// Largest limit whose run lengths are fully determined by the stored paths.
    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn run_lengths(&self, h: f64) -> Result<Vec<RunLength>> {
        if h > self.cap {
            return invalid(format!("limit {h} exceeds simulated cap {}", self.cap));
        }
        Ok(self.paths.iter().map(|p| p.run_length(h, self.horizon)).collect())
    }

    pub fn arl(&self, h: f64) -> Result<ArlEstimate> {
        Ok(ArlEstimate::from_run_lengths(&self.run_lengths(h)?))
    }

    /// Largest first-step statistic, a cheap lower bracket for the search.
    fn first_step_max(&self) -> f64 {
        self.paths.iter().filter_map(|p| p.running_max.first().copied()).fold(0.0, f64::max)
    }
}

/// Searches `H` so the in-control ARL of `method` on `source` hits the target.
pub fn calibrate<T: Scalar, S: StreamSource<T>>(
    source: &S,
    method: Method,
    config_without_h: &MonitorConfig,
    spec: &CalibrationSpec,
) -> Result<CalibrationResult> {
    spec.validate()?;
    let config = config_without_h.with_limit(f64::INFINITY);
    config.validate()?;
    let mut store = PathStore::new(source, method, &config, spec.replications, spec.max_run_length, spec.seed)?;
    store.extend_to(0.0)?;
    let target = spec.target_arl0;

    // bracket
    let mut lo = 0.0;
    let mut hi = store.first_step_max().max(f64::MIN_POSITIVE);
    let mut found = false;
    for _ in 0..MAX_BRACKET_STEPS {
        store.extend_to(hi)?;
        if store.arl(hi)?.mean >= target {
            found = true;
            break;
        }
        lo = hi;
        hi *= BRACKET_GROWTH;
    }
    if !found {
        return Err(Error::CalibrationFailure(format!(
            "no limit up to {hi:.6e} reaches ARL {target}; last estimate {:.3}",
            store.arl(store.cap())?.mean
        )));
    }

    let accept = |est: &ArlEstimate| (est.mean - target).abs() <= spec.tolerance * target;
    let mut best: Option<(f64, ArlEstimate)> = None;
    let mut consider = |h: f64, est: ArlEstimate| {
        if best.is_none_or(|(_, b)| (est.mean - target).abs() < (b.mean - target).abs()) {
            best = Some((h, est));
        }
    };
    let est_hi = store.arl(hi)?;
    consider(hi, est_hi);
    if !accept(&est_hi) {
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            let est = store.arl(mid)?;
            consider(mid, est);
            if accept(&est) {
                break;
            }
            if est.mean < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * hi {
                break;
            }
        }
    }
    let (h, est) = best.expect("at least one candidate evaluated");
    if !accept(&est) {
        return Err(Error::CalibrationFailure(format!(
            "closest ARL {:.3} at H = {h:.6e} misses target {target} ± {:.1}%",
            est.mean,
            100.0 * spec.tolerance
        )));
    }
    if est.censor_fraction > MAX_CENSOR_FRACTION {
        return Err(Error::CalibrationFailure(format!(
            "censoring fraction {:.4} at H = {h:.6e} exceeds {MAX_CENSOR_FRACTION}",
            est.censor_fraction
        )));
    }
    Ok(CalibrationResult {
        h,
        target_arl0: target,
        achieved_arl: est.mean,
        std_error: est.std_error,
        censor_fraction: est.censor_fraction,
        replications: spec.replications,
        seed: spec.seed,
    })
}

/// `H` only; see [`calibrate`].
pub fn find_control_limit<T: Scalar, S: StreamSource<T>>(
    source: &S,
    method: Method,
    config_without_h: &MonitorConfig,
    spec: &CalibrationSpec,
) -> Result<f64> {
    calibrate(source, method, config_without_h, spec).map(|c| c.h)
}

/// Reference search that resimulates every candidate limit from scratch.
/// Seeds are shared across candidates, so it agrees with [`calibrate`] path
/// by path; it exists to validate the stored-path search.
pub fn find_control_limit_naive<T: Scalar, S: StreamSource<T>>(
    source: &S,
    method: Method,
    config_without_h: &MonitorConfig,
    spec: &CalibrationSpec,
    initial_guess: f64,
) -> Result<f64> {
    spec.validate()?;
    let arl = |h: f64| estimate_arl(source, method, &config_without_h.with_limit(h), spec);
    let target = spec.target_arl0;
    let mut lo = 0.0;
    let mut hi = initial_guess;
    let mut steps = 0;
    while arl(hi)?.mean < target {
        lo = hi;
        hi *= 2.0;
        steps += 1;
        if steps > 64 {
            return Err(Error::CalibrationFailure("naive bracket search did not converge".into()));
        }
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let est = arl(mid)?;
        if (est.mean - target).abs() <= spec.tolerance * target {
            return Ok(mid);
        }
        if est.mean < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Err(Error::CalibrationFailure("naive bisection did not reach tolerance".into()))
}

/// How many `Σ₀` components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sigma0Rank {
    Fixed(usize),
    /// Components above the sampling-noise floor, then the smallest leading
    /// set holding `energy` of their summed singular values.
    Auto {
        energy: f64,
    },
}

impl Default for Sigma0Rank {
    fn default() -> Self {
        Sigma0Rank::Auto { energy: 0.95 }
    }
}

/// Multiple of the Gaussian-noise spectral edge `(√p + √q)·σx·σy/√N` below
/// which sample cross-covariance components are treated as noise.
pub const NOISE_FLOOR_FACTOR: f64 = 1.25;

/// `Σ₀` from paired historical samples via a dense SVD of their sample
/// cross-covariance.
pub fn estimate_sigma0<T: Scalar>(
    xs: &[DVector<T>],
    ys: &[DVector<T>],
    rank: Sigma0Rank,
    subtract_means: bool,
) -> Result<Sigma0Factors<T>> {
    let n = xs.len();
    if n < 2 {
        return invalid(format!("need at least 2 paired samples, got {n}"));
    }
    if ys.len() != n {
        return invalid(format!("{n} x samples but {} y samples", ys.len()));
    }
    let (p, q) = (xs[0].len(), ys[0].len());
    if p == 0 || q == 0 || xs.iter().any(|x| x.len() != p) || ys.iter().any(|y| y.len() != q) {
        return invalid("ragged historical samples");
    }
    let nf = T::lit(n as f64);
    let (mx, my) = if subtract_means {
        (xs.iter().sum::<DVector<T>>() / nf, ys.iter().sum::<DVector<T>>() / nf)
    } else {
        (DVector::zeros(p), DVector::zeros(q))
    };
    let mut cross = DMatrix::<T>::zeros(p, q);
    let (mut ssx, mut ssy) = (T::zero(), T::zero());
    for (x, y) in xs.iter().zip(ys) {
        let xc = x - &mx;
        let yc = y - &my;
        cross.ger(T::one() / nf, &xc, &yc, T::one());
        ssx += xc.norm_squared();
        ssy += yc.norm_squared();
    }
    let svd = cross.svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values: Vec<T> = order.iter().map(|&i| svd.singular_values[i]).collect();

    let keep = match rank {
        Sigma0Rank::Fixed(j) => {
            if j > values.len() {
                return invalid(format!("cannot keep {j} components of a {p}x{q} matrix"));
            }
            j
        }
        Sigma0Rank::Auto { energy } => {
            if !(energy > 0.0 && energy <= 1.0) {
                return invalid("energy fraction must lie in (0, 1]");
            }
            let sx = (ssx / (nf * T::lit(p as f64))).sqrt();
            let sy = (ssy / (nf * T::lit(q as f64))).sqrt();
            let edge = T::lit((p as f64).sqrt() + (q as f64).sqrt()) * sx * sy / nf.sqrt();
            let floor = T::lit(NOISE_FLOOR_FACTOR) * edge;
            let signal: Vec<T> = values.iter().copied().take_while(|&s| s > floor).collect();
            let total = signal.iter().fold(T::zero(), |a, &b| a + b);
            let mut acc = T::zero();
            let mut j = 0;
            while j < signal.len() && acc < T::lit(energy) * total {
                acc += signal[j];
                j += 1;
            }
            j
        }
    };
    let components = order
        .iter()
        .take(keep)
        .filter(|&&i| svd.singular_values[i] > T::zero())
        .map(|&i| {
            let mut uc = u.column(i).into_owned();
            let mut vc = vt.row(i).transpose();
            if let Some(first) = uc.iter().copied().find(|x| x.abs() > T::eps()) {
                if first < T::zero() {
                    uc.neg_mut();
                    vc.neg_mut();
                }
            }
            Sigma0Component {
                weight: svd.singular_values[i],
                u: uc,
                v: vc,
            }
        })
        .collect();
    Sigma0Factors::new(p, q, components)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn setup1() -> (ProcessModel<f64>, MonitorConfig) {
        (
            ProcessModel::independent(10, 20).unwrap(),
            MonitorConfig::new(0.02, 5, 1.0, 5).unwrap(),
        )
    }

    #[test]
    fn degenerate_limits() {
        let (model, cfg) = setup1();
        let mut chart = AnyChart::new(Method::Isvd, model.sigma0(), cfg).unwrap();
        assert_eq!(run_length(&mut chart, model.stream(5, 1), 0.0, 50).unwrap(), RunLength::Alarm(1));
        let mut chart = AnyChart::new(Method::Isvd, model.sigma0(), cfg).unwrap();
        assert_eq!(
            run_length(&mut chart, model.stream(5, 1), f64::INFINITY, 50).unwrap(),
            RunLength::Censored(50)
        );
    }

    #[test]
    fn infinite_limit_is_fully_censored() {
        let (model, cfg) = setup1();
        let spec = CalibrationSpec {
            target_arl0: 3.0,
            tolerance: 0.02,
            replications: 8,
            max_run_length: 30,
            seed: 4,
        };
        let est = estimate_arl(&model, Method::Isvd, &cfg.with_limit(f64::INFINITY), &spec).unwrap();
        assert_eq!(est.mean, 30.0);
        assert_eq!(est.censor_fraction, 1.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn estimates_are_reproducible() {
        let (model, cfg) = setup1();
        let spec = CalibrationSpec {
            target_arl0: 5.0,
            tolerance: 0.02,
            replications: 16,
            max_run_length: 100,
            seed: 11,
        };
        let a = estimate_arl(&model, Method::Isvd, &cfg.with_limit(0.3), &spec).unwrap();
        let b = estimate_arl(&model, Method::Isvd, &cfg.with_limit(0.3), &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stored_paths_match_direct_simulation() {
        let (model, cfg) = setup1();
        let mut store = PathStore::new(&model, Method::Isvd, &cfg, 12, 200, 21).unwrap();
        store.extend_to(0.5).unwrap();
        for h in [0.2, 0.3, 0.45, 0.5] {
            let stored = store.run_lengths(h).unwrap();
            let direct = simulate_run_lengths(&model, Method::Isvd, &cfg.with_limit(h), 12, 200, 21).unwrap();
            assert_eq!(stored, direct, "H = {h}");
        }
        assert!(store.run_lengths(0.6).is_err());
    }

    #[test]
    fn arl_is_pathwise_monotone_in_limit() {
        let (model, cfg) = setup1();
        let mut store = PathStore::new(&model, Method::Isvd, &cfg, 20, 300, 5).unwrap();
        store.extend_to(0.6).unwrap();
        let hs: Vec<f64> = (0..=30).map(|i| 0.02 * i as f64).collect();
        let runs: Vec<_> = hs.iter().map(|&h| store.run_lengths(h).unwrap()).collect();
        for w in runs.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                assert!(a.value() <= b.value());
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(CalibrationSpec::new(200.0, 10, 1).validate().is_ok());
        assert_eq!(CalibrationSpec::new(200.0, 10, 1).max_run_length, 2000);
        assert!(CalibrationSpec::new(0.0, 10, 1).validate().is_err());
        assert!(CalibrationSpec::new(-3.0, 10, 1).validate().is_err());
        let mut s = CalibrationSpec::new(200.0, 10, 1);
        s.max_run_length = 1999;
        assert!(s.validate().is_err());
    }

    #[test]
    fn small_target_calibrates_and_agrees_with_naive_search() {
        let (model, cfg) = setup1();
        let spec = CalibrationSpec::new(20.0, 200, 9);
        let res = calibrate(&model, Method::Isvd, &cfg, &spec).unwrap();
        assert!((res.achieved_arl - 20.0).abs() <= 0.4);
        let direct = estimate_arl(&model, Method::Isvd, &cfg.with_limit(res.h), &spec).unwrap();
        assert_eq!(direct.mean, res.achieved_arl);
        let naive = find_control_limit_naive(&model, Method::Isvd, &cfg, &spec, 0.1).unwrap();
        let naive_arl = estimate_arl(&model, Method::Isvd, &cfg.with_limit(naive), &spec).unwrap();
        assert!((naive_arl.mean - 20.0).abs() <= 0.4);
    }

    #[test]
    fn larger_target_needs_larger_limit() {
        let (model, cfg) = setup1();
        let h10 = find_control_limit(&model, Method::Isvd, &cfg, &CalibrationSpec::new(10.0, 150, 3)).unwrap();
        let h40 = find_control_limit(&model, Method::Isvd, &cfg, &CalibrationSpec::new(40.0, 150, 3)).unwrap();
        assert!(h40 > h10);
    }

    #[test]
    fn sigma0_from_repeated_pair() {
        let xs = vec![dvector![1.0, 0.0]; 5];
        let ys = vec![dvector![0.0, 1.0, 0.0]; 5];
        let s0 = estimate_sigma0::<f64>(&xs, &ys, Sigma0Rank::Fixed(1), false).unwrap();
        assert_eq!(s0.j(), 1);
        assert!((s0.components()[0].weight - 1.0).abs() < 1e-12);
        assert!((s0.dense() - DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0])).amax() < 1e-12);
        assert!(estimate_sigma0(&xs[..1], &ys[..1], Sigma0Rank::Fixed(1), false).is_err());
        assert!(estimate_sigma0(&xs, &ys[..3], Sigma0Rank::Fixed(1), false).is_err());
    }

    #[test]
    fn bootstrap_streams_have_requested_shape() {
        let model = ProcessModel::<f64>::independent(3, 4).unwrap();
        let g = model.sample_subgroup_seeded(1, 50, 2).unwrap();
        let src = BootstrapSource::new(g.xs, g.ys, Sigma0Factors::none(3, 4)).unwrap();
        let mut s = src.open(5, 1).unwrap();
        let first = s.next().unwrap();
        assert_eq!((first.t, first.m(), first.p(), first.q()), (1, 5, 3, 4));
        assert_eq!(s.next().unwrap().t, 2);
    }
}
