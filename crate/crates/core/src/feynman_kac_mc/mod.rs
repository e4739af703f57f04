//! Euler-Maruyama sampling, the Feynman-Kac estimator, empirical transition
//! kernels and Chapman-Kolmogorov checks.

mod functor;
mod kernel;
pub mod rng;

pub use functor::{
    histogram_density, silverman_bandwidth, smooth_density, verify_functor, FunctorReport, FunctorSettings,
    RouteDistances,
};
pub use kernel::{
    compose_chain, estimate_kernel, ou_cell_kernel, ou_point_kernel, row_total_variation, sewing_check,
    TransitionKernel, ESCAPE_LIMIT, ROW_SUM_TOL,
};

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{ensure_finite, ensure_non_negative, ensure_positive, Error, Result};
use crate::parameter_flow::OuParams;
use crate::stepping::fixed_steps;

pub const DEFAULT_PATHS: usize = 100_000;
pub const DEFAULT_DT: f64 = 1e-3;

type Coefficient = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// `dY = drift(Y, t) dt + vol(Y, t) dW` with a scalar Wiener driver.
#[derive(Clone)]
pub struct SdeSpec {
    drift: Coefficient,
    vol: Coefficient,
}

impl fmt::Debug for SdeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeSpec").finish_non_exhaustive()
    }
}

impl SdeSpec {
    pub fn new<B, S>(drift: B, vol: S) -> Self
    where
        B: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        S: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            drift: Arc::new(drift),
            vol: Arc::new(vol),
        }
    }

    pub fn constant(drift: f64, vol: f64) -> Self {
        Self::new(move |_, _| drift, move |_, _| vol)
    }

    pub fn ou(p: OuParams) -> Self {
        let sigma = p.sigma();
        Self::new(move |q, _| -p.b * (q - p.k), move |_, _| sigma)
    }

    pub fn wiener(b: f64, lambda: f64) -> Self {
        Self::constant(-b, (2.0 * lambda).sqrt())
    }

    pub fn drift(&self, q: f64, t: f64) -> f64 {
        (self.drift)(q, t)
    }

    pub fn vol(&self, q: f64, t: f64) -> f64 {
        (self.vol)(q, t)
    }
}

/// Where each path starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    Point(f64),
    /// Each path draws its own start from `N(mean, variance)`.
    Gaussian {
        mean: f64,
        variance: f64,
    },
}

impl InitialCondition {
    fn validate(&self) -> Result<()> {
        match *self {
            InitialCondition::Point(q) => ensure_finite("q0", q),
            InitialCondition::Gaussian { mean, variance } => {
                ensure_finite("mean", mean)?;
                ensure_non_negative("variance", variance)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmSettings {
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Record every `k`-th step besides both ends; `None` records only the ends.
    pub record_every: Option<usize>,
    /// First stream id; path `i` uses stream `stream_offset + i`.
    pub stream_offset: u64,
}

impl EmSettings {
    pub fn new(t0: f64, t_end: f64, dt: f64, n_paths: usize, seed: u64) -> Self {
        Self {
            t0,
            t_end,
            dt,
            n_paths,
            seed,
            record_every: None,
            stream_offset: 0,
        }
    }

    pub fn record_every(mut self, steps: usize) -> Self {
        self.record_every = Some(steps.max(1));
        self
    }

    fn validate(&self) -> Result<(usize, f64)> {
        ensure_finite("t0", self.t0)?;
        ensure_finite("t_end", self.t_end)?;
        ensure_positive("dt", self.dt)?;
        if self.t_end < self.t0 {
            return Err(Error::param(
                "t_end",
                self.t_end,
                format!("must be >= t0 = {}", self.t0),
            ));
        }
        if self.n_paths == 0 {
            return Err(Error::param("n_paths", 0.0, "need at least one path"));
        }
        fixed_steps(self.t_end - self.t0, self.dt)
    }
}

/// Sampled paths, stored row-major (`n_paths` rows of `times.len()` states).
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    times: Vec<f64>,
    states: Vec<f64>,
    n_paths: usize,
    seed: u64,
    dt: f64,
}

impl PathEnsemble {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let width = self.times.len();
        &self.states[i * width..(i + 1) * width]
    }

    /// All path states at recorded time index `j`.
    pub fn states_at(&self, j: usize) -> Vec<f64> {
        let width = self.times.len();
        (0..self.n_paths).map(|i| self.states[i * width + j]).collect()
    }

    pub fn terminal(&self) -> Vec<f64> {
        self.states_at(self.times.len() - 1)
    }

    pub fn summary(&self) -> Vec<(f64, SampleStats)> {
        (0..self.times.len())
            .map(|j| (self.times[j], SampleStats::from_slice(&self.states_at(j))))
            .collect()
    }

    /// Rows `t,mean,variance,mean_std_error,variance_std_error`.
    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,mean,variance,mean_std_error,variance_std_error")?;
        for (t, s) in self.summary() {
            writeln!(
                out,
                "{t},{},{},{},{}",
                s.mean,
                s.variance,
                s.mean_std_error(),
                s.variance_std_error()
            )?;
        }
        Ok(())
    }
}

/// Sample mean, unbiased variance and fourth central moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleStats {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub fourth_moment: f64,
}

impl SampleStats {
    /// Welford accumulation in index order; a constant sample yields exactly
    /// that constant and zero variance.
    pub fn from_slice(xs: &[f64]) -> Self {
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let delta = x - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (x - mean);
        }
        let n = xs.len();
        let variance = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
        let fourth_moment = if n > 0 {
            xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n as f64
        } else {
            0.0
        };
        Self {
            n,
            mean,
            variance,
            fourth_moment,
        }
    }

    pub fn mean_std_error(&self) -> f64 {
        (self.variance / self.n as f64).sqrt()
    }

    /// Large-sample standard error of the sample variance, `sqrt((mu4 - s^4) / n)`.
    pub fn variance_std_error(&self) -> f64 {
        ((self.fourth_moment - self.variance * self.variance).max(0.0) / self.n as f64).sqrt()
    }
}

fn start_state<R: Rng>(initial: InitialCondition, rng: &mut R) -> f64 {
    match initial {
        InitialCondition::Point(q) => q,
        InitialCondition::Gaussian { mean, variance } => {
            let z: f64 = rng.sample(StandardNormal);
            mean + variance.sqrt() * z
        }
    }
}

/// Runs one path, calling `record(step_index, state)` after every step.
fn run_path(
    sde: &SdeSpec,
    initial: InitialCondition,
    settings: &EmSettings,
    steps: usize,
    h: f64,
    path: usize,
    mut record: impl FnMut(usize, f64),
) -> std::result::Result<f64, usize> {
    let mut rng = rng::path_rng(settings.seed, settings.stream_offset + path as u64);
    let mut y = start_state(initial, &mut rng);
    record(0, y);
    let sqrt_h = h.sqrt();
    for k in 0..steps {
        let t = settings.t0 + k as f64 * h;
        let vol = sde.vol(y, t);
        if !(vol >= 0.0) {
            return Err(k);
        }
        let z: f64 = rng.sample(StandardNormal);
        y += sde.drift(y, t) * h + vol * sqrt_h * z;
        if !y.is_finite() {
            return Err(k + 1);
        }
        record(k + 1, y);
    }
    Ok(y)
}

fn first_failure<T>(results: Vec<std::result::Result<T, usize>>) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(results.len());
    for (path, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => out.push(v),
            Err(step) => return Err(Error::SamplerBlowup { path, step }),
        }
    }
    Ok(out)
}

/// `f(Y_{t_end})` for every path, in path order, without storing trajectories.
pub(crate) fn terminal_map<F>(sde: &SdeSpec, initial: InitialCondition, settings: &EmSettings, f: F) -> Result<Vec<f64>>
where
    F: Fn(f64) -> f64 + Sync,
{
    initial.validate()?;
    let (steps, h) = settings.validate()?;
    let results: Vec<_> = (0..settings.n_paths)
        .into_par_iter()
        .map(|i| run_path(sde, initial, settings, steps, h, i, |_, _| {}).map(&f))
        .collect();
    first_failure(results)
}

/// Euler-Maruyama ensemble under the general settings.
pub fn simulate(sde: &SdeSpec, initial: InitialCondition, settings: &EmSettings) -> Result<PathEnsemble> {
    initial.validate()?;
    let (steps, h) = settings.validate()?;
    let recorded: Vec<usize> = (0..=steps)
        .filter(|&k| k == 0 || k == steps || settings.record_every.is_some_and(|r| k % r == 0))
        .collect();
    let times: Vec<f64> = recorded
        .iter()
        .map(|&k| {
            if k == steps {
                settings.t_end
            } else {
                settings.t0 + k as f64 * h
            }
        })
        .collect();
    let width = recorded.len();
    let mut states = vec![0.0; settings.n_paths * width];
    let results: Vec<_> = states
        .par_chunks_mut(width)
        .enumerate()
        .map(|(i, row)| {
            let mut slot = 0;
            run_path(sde, initial, settings, steps, h, i, |k, y| {
                if slot < width && recorded[slot] == k {
                    row[slot] = y;
                    slot += 1;
                }
            })
        })
        .collect();
    first_failure(results)?;
    Ok(PathEnsemble {
        times,
        states,
        n_paths: settings.n_paths,
        seed: settings.seed,
        dt: h,
    })
}

/// Paths of `sde` from `q0` over `[t0, t_end]`, recording both ends.
pub fn euler_maruyama(
    sde: &SdeSpec,
    q0: f64,
    t0: f64,
    t_end: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    if !(t_end > t0) {
        return Err(Error::param("t_end", t_end, format!("must exceed t0 = {t0}")));
    }
    simulate(
        sde,
        InitialCondition::Point(q0),
        &EmSettings::new(t0, t_end, dt, n_paths, seed),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FkEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// `E[terminal(Y_T) | Y_t = q]` by Monte Carlo, with the standard error of the mean.
#[allow(clippy::too_many_arguments)]
pub fn fk_estimate<F>(
    sde: &SdeSpec,
    terminal: F,
    q: f64,
    t: f64,
    t_end: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<FkEstimate>
where
    F: Fn(f64) -> f64 + Sync,
{
    if !(t <= t_end) {
        return Err(Error::param("t", t, format!("must be <= T = {t_end}")));
    }
    let values = terminal_map(
        sde,
        InitialCondition::Point(q),
        &EmSettings::new(t, t_end, dt, n_paths, seed),
        terminal,
    )?;
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("terminal value on path {i}")));
    }
    let stats = SampleStats::from_slice(&values);
    Ok(FkEstimate {
        value: stats.mean,
        std_error: stats.mean_std_error(),
    })
}
