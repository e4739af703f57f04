use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dual::{minimize_dual, DualPoint};
use crate::error::{Error, Result};
use crate::feynman_kac_mc::ROW_SUM_TOL;

/// Explicit path measures are refused beyond this many paths.
pub const MAX_ENUMERATED_PATHS: usize = 1_000_000;
/// Dense transfer matrices are refused beyond this many states.
pub const MAX_FACTORED_STATES: usize = 4096;

/// `J(state)` evaluated at time index `time` (1..=horizon).
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    pub time: usize,
    pub values: Vec<f64>,
}

impl Observable {
    pub fn new(time: usize, values: Vec<f64>) -> Self {
        Self { time, values }
    }
}

/// Paths `x_0 .. x_T` on `{0, .., n-1}`. The base measure is
/// `initial(x_0) prod_t base_kernel(x_{t-1}, x_t)`; the solution tilts it by
/// `prod_i exp(-lambda_i J_i(x_{t_i}))`.
#[derive(Debug, Clone, PartialEq)]
pub struct CaliberProblem {
    pub n_states: usize,
    pub horizon: usize,
    pub observables: Vec<Observable>,
    pub targets: Vec<f64>,
    pub base_kernel: DMatrix<f64>,
    pub initial: Vec<f64>,
}

impl CaliberProblem {
    /// Uniform base kernel and uniform initial law.
    pub fn new(n_states: usize, horizon: usize, observables: Vec<Observable>, targets: Vec<f64>) -> Self {
        let u = 1.0 / n_states.max(1) as f64;
        Self {
            n_states,
            horizon,
            observables,
            targets,
            base_kernel: DMatrix::from_element(n_states, n_states, u),
            initial: vec![u; n_states],
        }
    }

    pub fn with_base_kernel(mut self, kernel: DMatrix<f64>) -> Self {
        self.base_kernel = kernel;
        self
    }

    pub fn with_initial(mut self, initial: Vec<f64>) -> Self {
        self.initial = initial;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_states;
        if n < 2 {
            return Err(Error::param("n_states", n as f64, "must be >= 2"));
        }
        if self.horizon < 1 {
            return Err(Error::param("horizon", 0.0, "must be >= 1"));
        }
        if self.targets.len() != self.observables.len() {
            return Err(Error::Dimension {
                expected: self.observables.len(),
                got: self.targets.len(),
            });
        }
        for o in &self.observables {
            if o.time < 1 || o.time > self.horizon {
                return Err(Error::param(
                    "observable time",
                    o.time as f64,
                    format!("must be in 1..={}", self.horizon),
                ));
            }
            if o.values.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: o.values.len(),
                });
            }
            if o.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("observable at time {}", o.time)));
            }
        }
        if self.targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("targets".into()));
        }
        if self.base_kernel.shape() != (n, n) {
            return Err(Error::Shape(format!(
                "base kernel is {:?}, expected ({n}, {n})",
                self.base_kernel.shape()
            )));
        }
        for (row, r) in self.base_kernel.row_iter().enumerate() {
            let sum: f64 = r.iter().sum();
            if r.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NotStochastic { row, sum });
            }
        }
        if self.initial.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: self.initial.len(),
            });
        }
        let sum: f64 = self.initial.iter().sum();
        if self.initial.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::param("initial", sum, "must be a probability vector"));
        }
        Ok(())
    }

    fn path_count(&self) -> Result<usize> {
        let paths = (self.n_states as f64).powi(self.horizon as i32 + 1);
        if paths > MAX_ENUMERATED_PATHS as f64 {
            return Err(Error::StateSpaceTooLarge {
                paths,
                limit: MAX_ENUMERATED_PATHS,
            });
        }
        Ok(paths as usize)
    }

    /// `log phi_t(x) = -sum_{i: t_i = t} lambda_i J_i(x)` for `t = 0..=T`.
    fn log_potentials(&self, lambda: &[f64]) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_states]; self.horizon + 1];
        for (o, l) in self.observables.iter().zip(lambda) {
            for (x, v) in o.values.iter().enumerate() {
                out[o.time][x] -= l * v;
            }
        }
        out
    }

    /// The base measure in factored form.
    pub fn base_measure(&self) -> Result<PathMeasure> {
        self.validate()?;
        Ok(PathMeasure::Factored(transfer(
            self,
            &vec![0.0; self.observables.len()],
        )?))
    }
}

/// Path measure in one of two representations.
#[derive(Debug, Clone, PartialEq)]
pub enum PathMeasure {
    Explicit(ExplicitMeasure),
    Factored(FactoredMeasure),
}

/// Probability of every path; path `(x_0, .., x_T)` sits at index
/// `sum_t x_t n^(T - t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitMeasure {
    pub n_states: usize,
    pub horizon: usize,
    pub probabilities: Vec<f64>,
}

impl ExplicitMeasure {
    pub fn path(&self, index: usize) -> Vec<usize> {
        decode(index, self.n_states, self.horizon)
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn marginals(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_states]; self.horizon + 1];
        for (i, p) in self.probabilities.iter().enumerate() {
            for (t, x) in self.path(i).into_iter().enumerate() {
                out[t][x] += p;
            }
        }
        out
    }
}

/// Markov form of a Gibbs path measure: tilted initial law and per-step
/// tilted kernels, together with the base chain and potentials they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredMeasure {
    pub initial: Vec<f64>,
    /// `kernels[t - 1]` moves `x_{t-1}` to `x_t`.
    pub kernels: Vec<DMatrix<f64>>,
    pub base_initial: Vec<f64>,
    pub base_kernel: DMatrix<f64>,
    /// `log phi_t` for `t = 0..=T`.
    pub log_potentials: Vec<Vec<f64>>,
    pub log_partition: f64,
}

impl FactoredMeasure {
    pub fn n_states(&self) -> usize {
        self.initial.len()
    }

    pub fn horizon(&self) -> usize {
        self.kernels.len()
    }

    pub fn marginals(&self) -> Vec<Vec<f64>> {
        let mut out = vec![self.initial.clone()];
        for k in &self.kernels {
            let prev = DVector::from_column_slice(out.last().expect("initial is present"));
            out.push((k.transpose() * prev).as_slice().to_vec());
        }
        out
    }

    fn enumerate(&self, weight: impl Fn(&[usize]) -> f64) -> Result<ExplicitMeasure> {
        let (n, horizon) = (self.n_states(), self.horizon());
        let count = (n as f64).powi(horizon as i32 + 1);
        if count > MAX_ENUMERATED_PATHS as f64 {
            return Err(Error::StateSpaceTooLarge {
                paths: count,
                limit: MAX_ENUMERATED_PATHS,
            });
        }
        let probabilities = (0..count as usize).map(|i| weight(&decode(i, n, horizon))).collect();
        Ok(ExplicitMeasure {
            n_states: n,
            horizon,
            probabilities,
        })
    }

    /// Path probabilities from the tilted Markov chain.
    pub fn to_explicit(&self) -> Result<ExplicitMeasure> {
        self.enumerate(|path| {
            let mut p = self.initial[path[0]];
            for (t, k) in self.kernels.iter().enumerate() {
                p *= k[(path[t], path[t + 1])];
            }
            p
        })
    }
}

impl PathMeasure {
    pub fn n_states(&self) -> usize {
        match self {
            PathMeasure::Explicit(m) => m.n_states,
            PathMeasure::Factored(m) => m.n_states(),
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            PathMeasure::Explicit(m) => m.horizon,
            PathMeasure::Factored(m) => m.horizon(),
        }
    }

    pub fn to_explicit(&self) -> Result<ExplicitMeasure> {
        match self {
            PathMeasure::Explicit(m) => Ok(m.clone()),
            PathMeasure::Factored(m) => m.to_explicit(),
        }
    }

    /// Law of `x_t` for `t = 0..=T`.
    pub fn marginals(&self) -> Vec<Vec<f64>> {
        match self {
            PathMeasure::Explicit(m) => m.marginals(),
            PathMeasure::Factored(m) => m.marginals(),
        }
    }

    pub fn expectation(&self, observable: &Observable) -> f64 {
        let marginals = self.marginals();
        marginals[observable.time]
            .iter()
            .zip(&observable.values)
            .map(|(p, v)| p * v)
            .sum()
    }

    /// Rows `t,state,probability`.
    pub fn write_marginals_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,state,probability")?;
        for (t, m) in self.marginals().iter().enumerate() {
            for (x, p) in m.iter().enumerate() {
                writeln!(out, "{t},{x},{p}")?;
            }
        }
        Ok(())
    }
}

fn decode(mut index: usize, n: usize, horizon: usize) -> Vec<usize> {
    let mut path = vec![0; horizon + 1];
    for slot in path.iter_mut().rev() {
        *slot = index % n;
        index /= n;
    }
    path
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let peak = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return peak;
    }
    peak + xs.iter().map(|x| (x - peak).exp()).sum::<f64>().ln()
}

// Backward messages in log form, then row-normalised tilted kernels
// K_t(x, y) = K(x, y) phi_t(y) beta_t(y) / beta_{t-1}(x).
fn transfer(problem: &CaliberProblem, lambda: &[f64]) -> Result<FactoredMeasure> {
    let n = problem.n_states;
    let k = &problem.base_kernel;
    let log_potentials = problem.log_potentials(lambda);
    let mut log_beta = vec![0.0; n];
    let mut kernels = vec![DMatrix::zeros(n, n); problem.horizon];
    for t in (1..=problem.horizon).rev() {
        let lw: Vec<f64> = log_potentials[t].iter().zip(&log_beta).map(|(a, b)| a + b).collect();
        let shift = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = lw.iter().map(|v| (v - shift).exp()).collect();
        let tilted = &mut kernels[t - 1];
        for x in 0..n {
            let mut row = 0.0;
            for y in 0..n {
                let v = k[(x, y)] * w[y];
                tilted[(x, y)] = v;
                row += v;
            }
            if !(row > 0.0 && row.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "backward message at t = {}, state {x}",
                    t - 1
                )));
            }
            for y in 0..n {
                tilted[(x, y)] /= row;
            }
            log_beta[x] = shift + row.ln();
        }
    }
    let start: Vec<f64> = problem.initial.iter().zip(&log_beta).map(|(p, b)| p.ln() + b).collect();
    let log_partition = log_sum_exp(&start);
    if !log_partition.is_finite() {
        return Err(Error::NonFinite("log partition".into()));
    }
    let initial = start.iter().map(|s| (s - log_partition).exp()).collect();
    Ok(FactoredMeasure {
        initial,
        kernels,
        base_initial: problem.initial.clone(),
        base_kernel: k.clone(),
        log_potentials,
        log_partition,
    })
}

// Mean and covariance of the observables under a factored measure.
fn moments(problem: &CaliberProblem, m: &FactoredMeasure) -> (DVector<f64>, DMatrix<f64>) {
    let marginals = m.marginals();
    let obs = &problem.observables;
    let dim = obs.len();
    let mean = DVector::from_iterator(
        dim,
        obs.iter()
            .map(|o| marginals[o.time].iter().zip(&o.values).map(|(p, v)| p * v).sum::<f64>()),
    );
    let mut cov = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let (a, b) = if obs[i].time <= obs[j].time {
                (&obs[i], &obs[j])
            } else {
                (&obs[j], &obs[i])
            };
            // h(x) = E[J_b(x_{t_b}) | x_{t_a} = x]
            let mut h = DVector::from_column_slice(&b.values);
            for t in (a.time + 1..=b.time).rev() {
                h = &m.kernels[t - 1] * h;
            }
            let second: f64 = (0..problem.n_states)
                .map(|x| marginals[a.time][x] * a.values[x] * h[x])
                .sum();
            let c = second - mean[i] * mean[j];
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    (mean, cov)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaliberSolution {
    pub measure: PathMeasure,
    pub multipliers: Vec<f64>,
    /// `E[J_i] - targets[i]` under `measure`.
    pub residuals: Vec<f64>,
    pub dual_objective: Vec<f64>,
}

/// Maximum-caliber path measure for single-time constraints, by Newton on the
/// dual with transfer-matrix contractions (no path enumeration).
pub fn maxcal_solve(problem: &CaliberProblem) -> Result<CaliberSolution> {
    problem.validate()?;
    if problem.n_states > MAX_FACTORED_STATES {
        return Err(Error::param(
            "n_states",
            problem.n_states as f64,
            format!("must be <= {MAX_FACTORED_STATES}"),
        ));
    }
    let dual = minimize_dual(&problem.targets, |lambda| {
        let m = transfer(problem, lambda)?;
        let (mean, cov) = moments(problem, &m);
        Ok(DualPoint {
            log_z: m.log_partition,
            mean,
            cov,
        })
    })?;
    let factored = transfer(problem, &dual.multipliers)?;
    let (mean, _) = moments(problem, &factored);
    let residuals = mean.iter().zip(&problem.targets).map(|(e, c)| e - c).collect();
    Ok(CaliberSolution {
        measure: PathMeasure::Factored(factored),
        multipliers: dual.multipliers,
        residuals,
        dual_objective: dual.objective,
    })
}

/// Enumerates every path with weight `base(path) prod_i exp(-lambda_i J_i(x_{t_i}))`.
pub fn brute_force_paths(problem: &CaliberProblem, multipliers: &[f64]) -> Result<PathMeasure> {
    problem.validate()?;
    if multipliers.len() != problem.observables.len() {
        return Err(Error::Dimension {
            expected: problem.observables.len(),
            got: multipliers.len(),
        });
    }
    let count = problem.path_count()?;
    let (n, horizon) = (problem.n_states, problem.horizon);
    let log_weights: Vec<f64> = (0..count)
        .map(|i| {
            let path = decode(i, n, horizon);
            let mut lw = problem.initial[path[0]].ln();
            for t in 1..=horizon {
                lw += problem.base_kernel[(path[t - 1], path[t])].ln();
            }
            for (o, l) in problem.observables.iter().zip(multipliers) {
                lw -= l * o.values[path[o.time]];
            }
            lw
        })
        .collect();
    let log_z = log_sum_exp(&log_weights);
    if !log_z.is_finite() {
        return Err(Error::NonFinite("path partition function".into()));
    }
    Ok(PathMeasure::Explicit(ExplicitMeasure {
        n_states: n,
        horizon,
        probabilities: log_weights.iter().map(|lw| (lw - log_z).exp()).collect(),
    }))
}

fn same_space(a: &ExplicitMeasure, b: &ExplicitMeasure) -> Result<()> {
    if (a.n_states, a.horizon) != (b.n_states, b.horizon) {
        return Err(Error::Shape(format!(
            "path spaces differ: {} states x {} steps vs {} x {}",
            a.n_states, a.horizon, b.n_states, b.horizon
        )));
    }
    Ok(())
}

/// `0.5 sum |P - Q|` over paths.
pub fn total_variation(a: &PathMeasure, b: &PathMeasure) -> Result<f64> {
    let (a, b) = (a.to_explicit()?, b.to_explicit()?);
    same_space(&a, &b)?;
    Ok(0.5
        * a.probabilities
            .iter()
            .zip(&b.probabilities)
            .map(|(p, q)| (p - q).abs())
            .sum::<f64>())
}

/// Jaynes caliber `-sum P log(P / Q)`; zero exactly when `P = Q`.
pub fn caliber(measure: &PathMeasure, base: &PathMeasure) -> Result<f64> {
    let (p, q) = (measure.to_explicit()?, base.to_explicit()?);
    same_space(&p, &q)?;
    let mut sum = 0.0;
    for (pi, qi) in p.probabilities.iter().zip(&q.probabilities) {
        if *pi > 0.0 {
            if *qi <= 0.0 {
                return Err(Error::SupportMismatch);
            }
            sum -= pi * (pi / qi).ln();
        }
    }
    Ok(sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GluingReport {
    /// Total variation between the tilted Markov chain and the normalised Gibbs chain.
    pub chain_vs_gibbs: f64,
    /// Worst departure of `K_t / (K phi_t)` from a product `u(x) v(y)`.
    pub gibbs_reweighting: f64,
}

impl GluingReport {
    pub fn residual(&self) -> f64 {
        self.chain_vs_gibbs.max(self.gibbs_reweighting)
    }
}

/// Reconstructs the path measure as (a) the product of tilted one-step
/// kernels and (b) the Gibbs chain `base * prod phi_t / Z` with `Z` from
/// composing the transfer operators `K diag(phi_t)`, and compares them.
pub fn gluing_factorization_check(measure: &PathMeasure) -> Result<GluingReport> {
    let PathMeasure::Factored(m) = measure else {
        return Err(Error::NotFactored);
    };
    let n = m.n_states();
    let chain = m.to_explicit()?;

    let mut v = m.base_initial.clone();
    let mut log_z = 0.0;
    for t in 1..=m.horizon() {
        let mut next = vec![0.0; n];
        for (x, vx) in v.iter().enumerate() {
            for (y, slot) in next.iter_mut().enumerate() {
                *slot += vx * m.base_kernel[(x, y)] * m.log_potentials[t][y].exp();
            }
        }
        let s: f64 = next.iter().sum();
        log_z += s.ln();
        v = next.into_iter().map(|x| x / s).collect();
    }
    let gibbs = m.enumerate(|path| {
        let mut lw = m.base_initial[path[0]].ln() - log_z;
        for t in 1..path.len() {
            lw += m.base_kernel[(path[t - 1], path[t])].ln() + m.log_potentials[t][path[t]];
        }
        lw.exp()
    })?;
    let chain_vs_gibbs = 0.5
        * chain
            .probabilities
            .iter()
            .zip(&gibbs.probabilities)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();

    let mut gibbs_reweighting: f64 = 0.0;
    for (t, kt) in m.kernels.iter().enumerate() {
        let base = &m.base_kernel;
        let phi = &m.log_potentials[t + 1];
        let ratio = |x: usize, y: usize| kt[(x, y)] / (base[(x, y)] * phi[y].exp());
        let support = |x: usize, y: usize| base[(x, y)] > 0.0;
        for x in 0..n {
            for y in 0..n {
                if !support(x, y) && kt[(x, y)] != 0.0 {
                    gibbs_reweighting = f64::INFINITY;
                }
            }
        }
        let x0 = (0..n)
            .max_by_key(|&x| (0..n).filter(|&y| support(x, y)).count())
            .unwrap_or(0);
        let Some(y0) = (0..n)
            .filter(|&y| support(x0, y))
            .max_by_key(|&y| (0..n).filter(|&x| support(x, y)).count())
        else {
            continue;
        };
        for x in 0..n {
            for y in 0..n {
                if support(x, y) && support(x, y0) && support(x0, y) {
                    let lhs = ratio(x, y) * ratio(x0, y0);
                    let rhs = ratio(x, y0) * ratio(x0, y);
                    gibbs_reweighting = gibbs_reweighting.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
                }
            }
        }
    }
    Ok(GluingReport {
        chain_vs_gibbs,
        gibbs_reweighting,
    })
}

/// Random perturbations `P + eps d` of an explicit measure that keep total mass
/// and every observable expectation fixed and stay positive. `d` is a Gaussian
/// direction on the support of `P` projected onto the constraint null space.
pub fn feasible_perturbations(
    problem: &CaliberProblem,
    measure: &PathMeasure,
    count: usize,
    seed: u64,
) -> Result<Vec<PathMeasure>> {
    let p = measure.to_explicit()?;
    if (p.n_states, p.horizon) != (problem.n_states, problem.horizon) {
        return Err(Error::Shape("measure and problem have different path spaces".into()));
    }
    let support: Vec<usize> = (0..p.probabilities.len())
        .filter(|&i| p.probabilities[i] > 0.0)
        .collect();
    let rows = problem.observables.len() + 1;
    let mut a = DMatrix::zeros(rows, support.len());
    for (c, &i) in support.iter().enumerate() {
        let path = p.path(i);
        a[(0, c)] = 1.0;
        for (r, o) in problem.observables.iter().enumerate() {
            a[(r + 1, c)] = o.values[path[o.time]];
        }
    }
    let gram_inv = (&a * a.transpose())
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::Shape(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let d = DVector::from_iterator(
            support.len(),
            (0..support.len()).map(|_| rng.sample::<f64, _>(StandardNormal)),
        );
        let d = &d - a.transpose() * (&gram_inv * (&a * &d));
        let reach = support
            .iter()
            .zip(d.iter())
            .filter(|(_, di)| **di < 0.0)
            .map(|(&i, di)| p.probabilities[i] / -di)
            .fold(f64::INFINITY, f64::min);
        if !reach.is_finite() || d.amax() < 1e-12 {
            continue;
        }
        let eps = reach * rng.random_range(0.05..0.9);
        let mut probabilities = p.probabilities.clone();
        for (&i, di) in support.iter().zip(d.iter()) {
            probabilities[i] += eps * di;
        }
        out.push(PathMeasure::Explicit(ExplicitMeasure {
            n_states: p.n_states,
            horizon: p.horizon,
            probabilities,
        }));
    }
    Ok(out)
}

/// Built-in single-time observables for JSON problem documents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    /// `J(s) = s`
    Identity,
    /// `J(s) = s^2`
    Square,
    /// `J(s) = 1{s = k}`
    Indicator(usize),
}

impl Builtin {
    pub fn tabulate(self, n_states: usize) -> Vec<f64> {
        (0..n_states)
            .map(|s| match self {
                Builtin::Identity => s as f64,
                Builtin::Square => (s * s) as f64,
                Builtin::Indicator(k) => f64::from(u8::from(s == k)),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableValues {
    Builtin(Builtin),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSpec {
    pub time: usize,
    #[serde(flatten)]
    pub values: ObservableValues,
}

/// JSON form of a [`CaliberProblem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaliberDocument {
    pub states: usize,
    pub horizon: usize,
    pub observables: Vec<ObservableSpec>,
    pub targets: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_kernel: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

impl CaliberDocument {
    pub fn to_problem(&self) -> Result<CaliberProblem> {
        let n = self.states;
        let observables = self
            .observables
            .iter()
            .map(|o| {
                let values = match &o.values {
                    ObservableValues::Builtin(b) => b.tabulate(n),
                    ObservableValues::Values(v) => v.clone(),
                };
                Observable::new(o.time, values)
            })
            .collect();
        let mut problem = CaliberProblem::new(n, self.horizon, observables, self.targets.clone());
        if let Some(rows) = &self.base_kernel {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(Error::Shape(format!("base_kernel must be {n} x {n}")));
            }
            problem.base_kernel = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        }
        if let Some(init) = &self.initial {
            problem.initial = init.clone();
        }
        problem.validate()?;
        Ok(problem)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sticky() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.6, 0.3, 0.1, 0.2, 0.5, 0.3, 0.1, 0.3, 0.6])
    }

    fn three_state() -> CaliberProblem {
        let obs = vec![
            Observable::new(1, Builtin::Identity.tabulate(3)),
            Observable::new(3, Builtin::Square.tabulate(3)),
        ];
        CaliberProblem::new(3, 3, obs, vec![0.8, 1.5]).with_base_kernel(sticky())
    }

    #[test]
    fn decode_is_lexicographic() {
        assert_eq!(decode(0, 3, 2), vec![0, 0, 0]);
        assert_eq!(decode(5, 3, 2), vec![0, 1, 2]);
        assert_eq!(decode(26, 3, 2), vec![2, 2, 2]);
    }

    #[test]
    fn no_observables_keeps_base() {
        let problem = CaliberProblem::new(2, 2, vec![], vec![]).with_base_kernel(DMatrix::from_row_slice(
            2,
            2,
            &[0.9, 0.1, 0.4, 0.6],
        ));
        let sol = maxcal_solve(&problem).unwrap();
        assert!(sol.multipliers.is_empty());
        let base = brute_force_paths(&problem, &[]).unwrap();
        assert!(total_variation(&sol.measure, &base).unwrap() < 1e-15);
        assert!(caliber(&sol.measure, &base).unwrap().abs() < 1e-15);
    }

    #[test]
    fn two_state_matches_brute_force() {
        let problem = CaliberProblem::new(2, 2, vec![Observable::new(2, vec![0.0, 1.0])], vec![0.7]);
        let sol = maxcal_solve(&problem).unwrap();
        // Only x_2 is tilted: P(x_2 = 1) = 1 / (1 + e^lambda) = 0.7.
        assert!((sol.multipliers[0] - (0.3f64 / 0.7).ln()).abs() < 1e-10);
        let brute = brute_force_paths(&problem, &sol.multipliers).unwrap();
        assert!(total_variation(&sol.measure, &brute).unwrap() < 1e-8);
        assert!(gluing_factorization_check(&sol.measure).unwrap().residual() < 1e-12);
    }

    #[test]
    fn brute_force_two_state_by_hand() {
        let problem = CaliberProblem::new(2, 2, vec![Observable::new(2, vec![0.0, 1.0])], vec![0.5]);
        let PathMeasure::Explicit(m) = brute_force_paths(&problem, &[1.0]).unwrap() else {
            unreachable!()
        };
        let z = 4.0 * (1.0 + (-1.0f64).exp());
        for (i, p) in m.probabilities.iter().enumerate() {
            let last = m.path(i)[2] as f64;
            assert!((p - (-last).exp() / z).abs() < 1e-15);
        }
    }

    #[test]
    fn deterministic_base_has_one_path() {
        let shift = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let problem = CaliberProblem::new(2, 3, vec![], vec![])
            .with_base_kernel(shift)
            .with_initial(vec![1.0, 0.0]);
        let PathMeasure::Explicit(m) = brute_force_paths(&problem, &[]).unwrap() else {
            unreachable!()
        };
        let ones: Vec<usize> = (0..m.probabilities.len())
            .filter(|&i| m.probabilities[i] > 0.0)
            .collect();
        assert_eq!(ones.len(), 1);
        assert_eq!(m.path(ones[0]), vec![0, 1, 0, 1]);
        assert_eq!(m.probabilities[ones[0]], 1.0);
    }

    #[test]
    fn three_state_matches_brute_force() {
        let problem = three_state();
        let sol = maxcal_solve(&problem).unwrap();
        assert!(sol.residuals.iter().all(|r| r.abs() < 1e-8), "{:?}", sol.residuals);
        let brute = brute_force_paths(&problem, &sol.multipliers).unwrap();
        assert!(total_variation(&sol.measure, &brute).unwrap() < 1e-8);
        for o in &problem.observables {
            let e = brute.expectation(o);
            let target = problem.targets[problem.observables.iter().position(|x| x == o).unwrap()];
            assert!((e - target).abs() < 1e-8);
        }
        let report = gluing_factorization_check(&sol.measure).unwrap();
        assert!(report.residual() < 1e-12, "{report:?}");
        let total = sol.measure.to_explicit().unwrap().total();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn solution_beats_feasible_perturbations() {
        let problem = three_state();
        let sol = maxcal_solve(&problem).unwrap();
        let base = problem.base_measure().unwrap();
        let best = caliber(&sol.measure, &base).unwrap();
        for q in feasible_perturbations(&problem, &sol.measure, 100, 7).unwrap() {
            let PathMeasure::Explicit(e) = &q else { unreachable!() };
            assert!((e.total() - 1.0).abs() < 1e-12);
            assert!(e.probabilities.iter().all(|p| *p > 0.0));
            for (o, c) in problem.observables.iter().zip(&problem.targets) {
                assert!((q.expectation(o) - c).abs() < 1e-10);
            }
            assert!(caliber(&q, &base).unwrap() < best);
        }
    }

    #[test]
    fn dual_objective_decreases() {
        let sol = maxcal_solve(&three_state()).unwrap();
        assert!(sol.dual_objective.len() > 1);
        assert!(sol
            .dual_objective
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs())));
    }

    #[test]
    fn caliber_of_point_mass() {
        let k = 8;
        let mut p = vec![0.0; k];
        p[3] = 1.0;
        let point = PathMeasure::Explicit(ExplicitMeasure {
            n_states: 2,
            horizon: 2,
            probabilities: p,
        });
        let uniform = PathMeasure::Explicit(ExplicitMeasure {
            n_states: 2,
            horizon: 2,
            probabilities: vec![1.0 / k as f64; k],
        });
        assert!((caliber(&point, &uniform).unwrap() + (k as f64).ln()).abs() < 1e-15);
        assert!(matches!(caliber(&uniform, &point), Err(Error::SupportMismatch)));
    }

    #[test]
    fn gluing_needs_factored() {
        let problem = CaliberProblem::new(2, 1, vec![], vec![]);
        let explicit = brute_force_paths(&problem, &[]).unwrap();
        assert!(matches!(gluing_factorization_check(&explicit), Err(Error::NotFactored)));
        let base = problem.base_measure().unwrap();
        assert_eq!(gluing_factorization_check(&base).unwrap().residual(), 0.0);
    }

    #[test]
    fn limits_and_validation() {
        let big = CaliberProblem::new(10, 6, vec![], vec![]);
        assert!(matches!(
            brute_force_paths(&big, &[]),
            Err(Error::StateSpaceTooLarge { .. })
        ));
        let bad_time = CaliberProblem::new(2, 2, vec![Observable::new(0, vec![0.0, 1.0])], vec![0.5]);
        assert!(matches!(maxcal_solve(&bad_time), Err(Error::InvalidParameter { .. })));
        let not_stochastic =
            CaliberProblem::new(2, 2, vec![], vec![]).with_base_kernel(DMatrix::from_element(2, 2, 0.6));
        assert!(matches!(
            not_stochastic.validate(),
            Err(Error::NotStochastic { row: 0, .. })
        ));
        let infeasible = CaliberProblem::new(3, 2, vec![Observable::new(1, Builtin::Identity.tabulate(3))], vec![2.5]);
        assert!(matches!(maxcal_solve(&infeasible), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn document_round_trip() {
        let json = r#"{
            "states": 3, "horizon": 3,
            "observables": [{"time": 1, "builtin": "identity"}, {"time": 3, "values": [0, 1, 4]}],
            "targets": [0.8, 1.5],
            "base_kernel": [[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [0.1, 0.3, 0.6]]
        }"#;
        let doc: CaliberDocument = serde_json::from_str(json).unwrap();
        assert_eq!(doc.to_problem().unwrap(), three_state());
        let again: CaliberDocument = serde_json::from_str(&serde_json::to_string(&doc).unwrap()).unwrap();
        assert_eq!(again, doc);
        let ind: ObservableSpec = serde_json::from_str(r#"{"time": 2, "builtin": {"indicator": 1}}"#).unwrap();
        assert_eq!(ind.values, ObservableValues::Builtin(Builtin::Indicator(1)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        // Stationarity of the dual: expectations hit the targets and the
        // enumeration oracle agrees, for random interior targets and kernels.
        #[test]
        fn random_problems_match_oracle(
            rows in proptest::collection::vec(proptest::collection::vec(0.05f64..1.0, 3), 3),
            t1 in 0.3f64..1.7,
            t2 in 0.1f64..0.9,
        ) {
            let kernel = DMatrix::from_fn(3, 3, |i, j| rows[i][j] / rows[i].iter().sum::<f64>());
            let obs = vec![
                Observable::new(1, Builtin::Identity.tabulate(3)),
                Observable::new(2, Builtin::Indicator(2).tabulate(3)),
            ];
            let problem = CaliberProblem::new(3, 2, obs, vec![t1, t2]).with_base_kernel(kernel);
            let sol = maxcal_solve(&problem).unwrap();
            prop_assert!(sol.residuals.iter().all(|r| r.abs() < 1e-8));
            let brute = brute_force_paths(&problem, &sol.multipliers).unwrap();
            prop_assert!(total_variation(&sol.measure, &brute).unwrap() < 1e-8);
            prop_assert!(gluing_factorization_check(&sol.measure).unwrap().residual() < 1e-12);
        }
    }
}
