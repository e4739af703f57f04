//! Infinitesimal generators `A = m(q,t) d/dq + s(q,t) d^2/dq^2` and explicit
//! finite-difference solvers for the forward (Fokker-Planck) and backward
//! Kolmogorov equations on a truncated 1-D domain.
//!
//! `s` is the noise intensity `lambda = sigma^2 / 2`, never `sigma^2`.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::feynman_kac_mc::TransitionKernel;
use crate::parameter_flow::OuParams;
use crate::stat_manifold::{Grid, GridDensity, GridFunction, NORMALIZATION_TOL};
use crate::stepping::fixed_steps;

/// Forward solves fail when total mass drifts by more than this.
pub const MASS_LEAK_LIMIT: f64 = 1e-4;

const MIN_GENERATOR_POINTS: usize = 5;

type Coefficient = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Drift `m(q, t)` and diffusion `s(q, t) >= 0` of a 1-D generator.
#[derive(Clone)]
pub struct GeneratorSpec {
    drift: Coefficient,
    diffusion: Coefficient,
    homogeneous: bool,
}

impl fmt::Debug for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorSpec")
            .field("homogeneous", &self.homogeneous)
            .finish_non_exhaustive()
    }
}

impl GeneratorSpec {
    pub fn new<M, S>(drift: M, diffusion: S) -> Self
    where
        M: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        S: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            homogeneous: false,
        }
    }

    /// Coefficients that do not depend on time.
    pub fn time_homogeneous<M, S>(drift: M, diffusion: S) -> Self
    where
        M: Fn(f64) -> f64 + Send + Sync + 'static,
        S: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            drift: Arc::new(move |q, _| drift(q)),
            diffusion: Arc::new(move |q, _| diffusion(q)),
            homogeneous: true,
        }
    }

    pub fn constant(drift: f64, diffusion: f64) -> Self {
        Self::time_homogeneous(move |_| drift, move |_| diffusion)
    }

    pub fn ou(p: OuParams) -> Self {
        Self::time_homogeneous(move |q| -p.b * (q - p.k), move |_| p.lambda)
    }

    /// Generator of `dY = -b dt + sqrt(2 lambda) dW`.
    pub fn wiener(b: f64, lambda: f64) -> Self {
        Self::constant(-b, lambda)
    }

    pub fn drift(&self, q: f64, t: f64) -> f64 {
        (self.drift)(q, t)
    }

    pub fn diffusion(&self, q: f64, t: f64) -> f64 {
        (self.diffusion)(q, t)
    }

    pub fn is_time_homogeneous(&self) -> bool {
        self.homogeneous
    }

    fn sample(&self, grid: &Grid, t: f64, drift: &mut [f64], diffusion: &mut [f64]) -> Result<()> {
        for (i, q) in grid.points().enumerate() {
            let (m, s) = (self.drift(q, t), self.diffusion(q, t));
            if !m.is_finite() || !s.is_finite() {
                return Err(Error::NonFinite(format!("generator coefficients at q = {q}, t = {t}")));
            }
            if s < 0.0 {
                return Err(Error::param("diffusion", s, format!("must be >= 0 (q = {q}, t = {t})")));
            }
            drift[i] = m;
            diffusion[i] = s;
        }
        Ok(())
    }
}

/// `(A f)(q) = m f'(q) + s f''(q)` with second-order central differences,
/// one-sided second-order stencils at the two ends.
pub fn apply_generator(gen: &GeneratorSpec, f: &GridFunction, t: f64) -> Result<GridFunction> {
    let grid = *f.grid();
    let n = grid.len();
    if n < MIN_GENERATOR_POINTS {
        return Err(Error::GridTooSmall {
            points: n,
            required: MIN_GENERATOR_POINTS,
        });
    }
    let mut drift = vec![0.0; n];
    let mut diffusion = vec![0.0; n];
    gen.sample(&grid, t, &mut drift, &mut diffusion)?;

    let v = f.values();
    let dx = grid.dx();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let (d1, d2) = if i == 0 {
            (
                (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx),
                (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / (dx * dx),
            )
        } else if i == n - 1 {
            (
                (3.0 * v[i] - 4.0 * v[i - 1] + v[i - 2]) / (2.0 * dx),
                (2.0 * v[i] - 5.0 * v[i - 1] + 4.0 * v[i - 2] - v[i - 3]) / (dx * dx),
            )
        } else {
            (
                (v[i + 1] - v[i - 1]) / (2.0 * dx),
                (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (dx * dx),
            )
        };
        out[i] = drift[i] * d1 + diffusion[i] * d2;
    }
    GridFunction::new(grid, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn name(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

/// An explicit Kolmogorov solve on `[t0, t_end]`.
///
/// Forward problems carry the initial density at `t0` and use zero Dirichlet
/// boundaries. Backward problems carry the terminal function at `t_end` and hold
/// the two boundary values at the terminal data.
#[derive(Debug, Clone)]
pub struct PdeProblem {
    pub generator: GeneratorSpec,
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
    pub direction: Direction,
    pub data: GridFunction,
    /// Keep every `record_every`-th step in addition to both ends; `None` keeps only the ends.
    pub record_every: Option<usize>,
}

impl PdeProblem {
    pub fn forward(generator: GeneratorSpec, initial: GridDensity, t0: f64, t_end: f64, dt: f64) -> Self {
        Self {
            generator,
            t0,
            t_end,
            dt,
            direction: Direction::Forward,
            data: initial.into_function(),
            record_every: None,
        }
    }

    pub fn backward(generator: GeneratorSpec, terminal: GridFunction, t0: f64, t_end: f64, dt: f64) -> Self {
        Self {
            generator,
            t0,
            t_end,
            dt,
            direction: Direction::Backward,
            data: terminal,
            record_every: None,
        }
    }

    pub fn record_every(mut self, steps: usize) -> Self {
        self.record_every = Some(steps.max(1));
        self
    }

    pub fn grid(&self) -> &Grid {
        self.data.grid()
    }

    fn validate(&self, expected: Direction) -> Result<(usize, f64)> {
        if self.direction != expected {
            return Err(Error::WrongDirection {
                expected: expected.name(),
                found: self.direction.name(),
            });
        }
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
        let n = self.grid().len();
        if n < MIN_GENERATOR_POINTS {
            return Err(Error::GridTooSmall {
                points: n,
                required: MIN_GENERATOR_POINTS,
            });
        }
        fixed_steps(self.t_end - self.t0, self.dt)
    }
}

/// Stability bound `dx^2 / (2 max s + max |m| dx)` for the explicit scheme.
pub fn cfl_limit(dx: f64, drift: &[f64], diffusion: &[f64]) -> f64 {
    let max_s = diffusion.iter().copied().fold(0.0, f64::max);
    let max_m = drift.iter().map(|m| m.abs()).fold(0.0, f64::max);
    let denom = 2.0 * max_s + max_m * dx;
    if denom == 0.0 {
        f64::INFINITY
    } else {
        dx * dx / denom
    }
}

fn check_cfl(dt: f64, dx: f64, drift: &[f64], diffusion: &[f64]) -> Result<()> {
    let limit = cfl_limit(dx, drift, diffusion);
    // Step sizes that round-trip through `fixed_steps` may exceed the bound by an ulp.
    if dt > limit * (1.0 + 1e-12) {
        Err(Error::Cfl { dt, limit })
    } else {
        Ok(())
    }
}

/// States of a solve, ascending in time.
#[derive(Debug, Clone)]
pub struct TimeSeries<T> {
    pub times: Vec<f64>,
    pub states: Vec<T>,
}

impl<T> TimeSeries<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn first(&self) -> &T {
        &self.states[0]
    }

    pub fn last(&self) -> &T {
        &self.states[self.states.len() - 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &T)> {
        self.times.iter().copied().zip(&self.states)
    }
}

impl<T: AsRef<GridFunction>> TimeSeries<T> {
    /// Long-format rows `t,q,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,q,value")?;
        for (t, state) in self.iter() {
            let f = state.as_ref();
            for (q, v) in f.grid().points().zip(f.values()) {
                writeln!(out, "{t},{q},{v}")?;
            }
        }
        Ok(())
    }
}

impl AsRef<GridFunction> for GridFunction {
    fn as_ref(&self) -> &GridFunction {
        self
    }
}

impl AsRef<GridFunction> for GridDensity {
    fn as_ref(&self) -> &GridFunction {
        self.as_function()
    }
}

/// FTCS for `p_t = -(m p)_q + (s p)_qq` with zero Dirichlet boundaries.
pub fn solve_forward(problem: &PdeProblem) -> Result<TimeSeries<GridDensity>> {
    let (steps, dt) = problem.validate(Direction::Forward)?;
    let grid = *problem.grid();
    let initial = GridDensity::from_function(problem.data.clone());
    initial.check_normalized(NORMALIZATION_TOL)?;
    let mass0 = initial.mass();

    let n = grid.len();
    let dx = grid.dx();
    let gen = &problem.generator;
    let mut drift = vec![0.0; n];
    let mut diffusion = vec![0.0; n];
    gen.sample(&grid, problem.t0, &mut drift, &mut diffusion)?;
    check_cfl(dt, dx, &drift, &diffusion)?;

    let mut p = initial.values().to_vec();
    let mut next = vec![0.0; n];
    let mut series = TimeSeries {
        times: vec![problem.t0],
        states: vec![initial],
    };
    let adv = dt / (2.0 * dx);
    let dif = dt / (dx * dx);

    for step in 0..steps {
        let t = problem.t0 + step as f64 * dt;
        if step > 0 && !gen.is_time_homogeneous() {
            gen.sample(&grid, t, &mut drift, &mut diffusion)?;
            check_cfl(dt, dx, &drift, &diffusion)?;
        }
        for i in 1..n - 1 {
            let flux = drift[i + 1] * p[i + 1] - drift[i - 1] * p[i - 1];
            let curv = diffusion[i + 1] * p[i + 1] - 2.0 * diffusion[i] * p[i] + diffusion[i - 1] * p[i - 1];
            next[i] = p[i] - adv * flux + dif * curv;
        }
        next[0] = 0.0;
        next[n - 1] = 0.0;
        std::mem::swap(&mut p, &mut next);

        let done = step + 1 == steps;
        let keep = problem.record_every.is_some_and(|k| (step + 1) % k == 0);
        if done || keep {
            let state = GridDensity::new(grid, p.clone())?;
            let drift_mass = (state.mass() - mass0).abs();
            if drift_mass > MASS_LEAK_LIMIT {
                return Err(Error::MassLeak {
                    drift: drift_mass,
                    limit: MASS_LEAK_LIMIT,
                });
            }
            series.times.push(if done { problem.t_end } else { t + dt });
            series.states.push(state);
        }
    }
    Ok(series)
}

/// Explicit scheme for `u_t = -(m u_q + s u_qq)`, marched from `t_end` down to
/// `t0`, so that `u(q, t) = E[u(Y_{t_end}) | Y_t = q]`. Output is ascending in time.
pub fn solve_backward(problem: &PdeProblem) -> Result<TimeSeries<GridFunction>> {
    let (steps, dt) = problem.validate(Direction::Backward)?;
    let grid = *problem.grid();
    let n = grid.len();
    let dx = grid.dx();
    let gen = &problem.generator;
    let mut drift = vec![0.0; n];
    let mut diffusion = vec![0.0; n];

    let mut u = problem.data.values().to_vec();
    let (left, right) = (u[0], u[n - 1]);
    let mut next = vec![0.0; n];
    let mut times = vec![problem.t_end];
    let mut states = vec![problem.data.clone()];
    let adv = dt / (2.0 * dx);
    let dif = dt / (dx * dx);

    for step in 0..steps {
        // Coefficients at the lower end of the interval, matching the forward scheme.
        let t_lower = problem.t_end - (step + 1) as f64 * dt;
        if step == 0 || !gen.is_time_homogeneous() {
            gen.sample(&grid, t_lower, &mut drift, &mut diffusion)?;
            check_cfl(dt, dx, &drift, &diffusion)?;
        }
        for i in 1..n - 1 {
            let grad = u[i + 1] - u[i - 1];
            let curv = u[i + 1] - 2.0 * u[i] + u[i - 1];
            next[i] = u[i] + adv * drift[i] * grad + dif * diffusion[i] * curv;
        }
        next[0] = left;
        next[n - 1] = right;
        std::mem::swap(&mut u, &mut next);

        let done = step + 1 == steps;
        let keep = problem.record_every.is_some_and(|k| (step + 1) % k == 0);
        if done || keep {
            times.push(if done { problem.t0 } else { t_lower });
            states.push(GridFunction::new(grid, u.clone())?);
        }
    }
    times.reverse();
    states.reverse();
    Ok(TimeSeries { times, states })
}

/// `|| (P_h f - f) / h - A f ||_inf` over interior points.
///
/// The outer tenth of the grid on each side is excluded: kernel rows there are
/// truncated by the domain and the one-sided stencils are less accurate.
pub fn dynkin_residual(kernel: &TransitionKernel, gen: &GeneratorSpec, f: &GridFunction, h: f64) -> Result<f64> {
    ensure_positive("h", h)?;
    let n = f.grid().len();
    if kernel.len() != n {
        return Err(Error::Shape(format!(
            "kernel over {} states applied to a grid of {n} points",
            kernel.len()
        )));
    }
    let pf = kernel.apply(f.values());
    let af = apply_generator(gen, f, 0.0)?;
    let margin = n / 10;
    Ok((margin..n - margin)
        .map(|i| ((pf[i] - f.values()[i]) / h - af.values()[i]).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feynman_kac_mc::ou_point_kernel;
    use crate::stat_manifold::gaussian_pdf;
    use approx::assert_abs_diff_eq;

    fn grid(lo: f64, hi: f64, dx: f64) -> Grid {
        Grid::with_spacing(lo, hi, dx).unwrap()
    }

    #[test]
    fn generator_of_constant_vanishes() {
        let g = grid(-3.0, 3.0, 0.1);
        let f = GridFunction::sample(g, |_| 2.5).unwrap();
        let gen = GeneratorSpec::new(|q, t| q * t + 1.0, |q, _| 1.0 + q * q);
        let af = apply_generator(&gen, &f, 0.7).unwrap();
        assert!(af.values().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn generator_second_derivative() {
        let g = grid(-3.0, 3.0, 1e-3);
        let f = GridFunction::sample(g, f64::sin).unwrap();
        let af = apply_generator(&GeneratorSpec::constant(0.0, 1.0), &f, 0.0).unwrap();
        let exact = GridFunction::sample(g, |q| -q.sin()).unwrap();
        assert!(af.sup_distance(&exact).unwrap() < 1e-5);
    }

    #[test]
    fn generator_first_derivative() {
        let g = grid(-2.0, 2.0, 1e-2);
        let f = GridFunction::sample(g, |q| q * q).unwrap();
        let af = apply_generator(&GeneratorSpec::constant(1.0, 0.0), &f, 0.0).unwrap();
        let exact = GridFunction::sample(g, |q| 2.0 * q).unwrap();
        // Exact for quadratics, one-sided ends included.
        assert!(af.sup_distance(&exact).unwrap() < 1e-9);
    }

    #[test]
    fn generator_rejects_small_grid_and_negative_diffusion() {
        let g = Grid::new(0.0, 0.1, 4).unwrap();
        let f = GridFunction::sample(g, |q| q).unwrap();
        assert!(matches!(
            apply_generator(&GeneratorSpec::constant(0.0, 1.0), &f, 0.0),
            Err(Error::GridTooSmall { .. })
        ));
        let g = Grid::new(0.0, 0.1, 10).unwrap();
        let f = GridFunction::sample(g, |q| q).unwrap();
        assert!(apply_generator(&GeneratorSpec::constant(0.0, -1.0), &f, 0.0).is_err());
    }

    fn normal_on(g: Grid, m: f64, s: f64) -> GridDensity {
        GridDensity::sample_normalized(g, |q| gaussian_pdf(q, m, s)).unwrap()
    }

    #[test]
    fn forward_zero_generator_is_static() {
        let g = grid(-12.0, 12.0, 0.05);
        let p0 = normal_on(g, 0.0, 1.0);
        let sol = solve_forward(
            &PdeProblem::forward(GeneratorSpec::constant(0.0, 0.0), p0.clone(), 0.0, 1.0, 0.1).record_every(1),
        )
        .unwrap();
        assert_eq!(sol.len(), 11);
        for (_, p) in sol.iter() {
            assert!(p.sup_distance(&p0).unwrap() < 1e-15);
        }
    }

    #[test]
    fn forward_wiener_from_narrow_start() {
        let (b, lambda, s0, t) = (1.0, 1.0, 1e-3, 0.5);
        let g = grid(-12.0, 11.0, 4e-3);
        let p0 = normal_on(g, 0.0, s0);
        let dt = 0.45 * g.dx().powi(2) / (2.0 * lambda + b * g.dx());
        let sol = solve_forward(&PdeProblem::forward(GeneratorSpec::wiener(b, lambda), p0, 0.0, t, dt)).unwrap();
        let exact = GridFunction::sample(g, |q| gaussian_pdf(q, -b * t, s0 + 2.0 * lambda * t)).unwrap();
        let err = sol.last().sup_distance(&exact).unwrap();
        assert!(err < 1e-3, "L_inf error {err}");
        assert_abs_diff_eq!(sol.last().mass(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn forward_ou_equilibrium_is_stationary() {
        let p = OuParams::new(2.0, 0.0, 1.0).unwrap();
        let g = grid(-8.0, 8.0, 0.02);
        let p0 = normal_on(g, 0.0, 0.5);
        let dt = 0.9 * cfl_limit(g.dx(), &[2.0 * 8.0], &[1.0]);
        let sol = solve_forward(&PdeProblem::forward(GeneratorSpec::ou(p), p0.clone(), 0.0, 1.0, dt).record_every(500))
            .unwrap();
        for (_, state) in sol.iter() {
            assert!(state.l1_distance(&p0).unwrap() < 1e-4);
            assert!((state.mass() - 1.0).abs() < 1e-6);
            assert!(state.values().iter().all(|&v| v >= -1e-10));
        }
    }

    #[test]
    fn forward_errors() {
        let g = grid(-3.0, 3.0, 0.05);
        let p0 = normal_on(g, 0.0, 0.3);
        let gen = GeneratorSpec::constant(0.0, 1.0);
        assert!(matches!(
            solve_forward(&PdeProblem::forward(gen.clone(), p0.clone(), 0.0, 1.0, 0.01)),
            Err(Error::Cfl { .. })
        ));
        // Diffusing for long on a short domain leaks mass through the boundary.
        assert!(matches!(
            solve_forward(&PdeProblem::forward(gen.clone(), p0.clone(), 0.0, 2.0, 1e-3)),
            Err(Error::MassLeak { .. })
        ));
        let unnormalized = GridDensity::new(g, vec![1.0; g.len()]).unwrap();
        assert!(matches!(
            solve_forward(&PdeProblem::forward(gen.clone(), unnormalized, 0.0, 1.0, 1e-3)),
            Err(Error::Unnormalized { .. })
        ));
        let back = PdeProblem::backward(gen, p0.into_function(), 0.0, 1.0, 1e-3);
        assert!(matches!(solve_forward(&back), Err(Error::WrongDirection { .. })));
    }

    #[test]
    fn backward_constant_terminal() {
        let g = grid(-5.0, 5.0, 0.05);
        let c = GridFunction::sample(g, |_| 0.37).unwrap();
        let gen = GeneratorSpec::ou(OuParams::new(1.0, 0.5, 1.0).unwrap());
        let sol = solve_backward(&PdeProblem::backward(gen, c.clone(), 0.0, 1.0, 1e-3).record_every(100)).unwrap();
        assert_eq!(sol.times[0], 0.0);
        assert_eq!(*sol.times.last().unwrap(), 1.0);
        for (_, u) in sol.iter() {
            assert!(u.sup_distance(&c).unwrap() < 1e-12);
        }
    }

    #[test]
    fn backward_wiener_convolution() {
        // u(q, T - 1) = E[phi(q + W_1)] = N(0, 2) density at q.
        let g = grid(-10.0, 10.0, 0.01);
        let terminal = GridFunction::sample(g, |q| gaussian_pdf(q, 0.0, 1.0)).unwrap();
        let sol = solve_backward(&PdeProblem::backward(
            GeneratorSpec::wiener(0.0, 0.5),
            terminal,
            2.0,
            3.0,
            5e-5,
        ))
        .unwrap();
        let exact = GridFunction::sample(g, |q| gaussian_pdf(q, 0.0, 2.0)).unwrap();
        assert!(sol.first().sup_distance(&exact).unwrap() < 1e-3);
    }

    #[test]
    fn forward_backward_duality() {
        let p = OuParams::new(1.0, 0.3, 0.8).unwrap();
        let g = grid(-8.0, 8.0, 0.04);
        let gen = GeneratorSpec::ou(p);
        let dt = 0.5 * cfl_limit(g.dx(), &[p.b * 8.3], &[p.lambda]);
        let (t0, t1) = (0.0, 0.6);
        let p0 = normal_on(g, 1.0, 0.4);
        let fwd = solve_forward(&PdeProblem::forward(gen.clone(), p0, t0, t1, dt).record_every(1)).unwrap();
        let terminal = GridFunction::sample(g, |q| (-(q - 0.5) * (q - 0.5)).exp() + 0.2 * q.sin()).unwrap();
        let bwd = solve_backward(&PdeProblem::backward(gen, terminal, t0, t1, dt).record_every(1)).unwrap();
        assert_eq!(fwd.len(), bwd.len());
        let pairing = |u: &GridFunction, p: &GridDensity| -> f64 {
            u.values().iter().zip(p.values()).map(|(a, b)| a * b).sum::<f64>() * g.dx()
        };
        let reference = pairing(bwd.first(), fwd.first());
        for (u, p) in bwd.states.iter().zip(&fwd.states) {
            assert!((pairing(u, p) - reference).abs() < 1e-5);
        }
    }

    #[test]
    fn spatial_order_two() {
        // Wiener with a smooth start; dt scales with dx^2 so both errors are O(dx^2).
        let (b, lambda, s0, t) = (1.0, 1.0, 0.1, 0.5);
        let err = |dx: f64| {
            let g = grid(-10.0, 9.0, dx);
            let p0 = normal_on(g, 0.0, s0);
            let dt = 0.4 * dx * dx / (2.0 * lambda);
            let sol = solve_forward(&PdeProblem::forward(GeneratorSpec::wiener(b, lambda), p0, 0.0, t, dt)).unwrap();
            let exact = GridFunction::sample(g, |q| gaussian_pdf(q, -b * t, s0 + 2.0 * lambda * t)).unwrap();
            sol.last().sup_distance(&exact).unwrap()
        };
        let ratio = err(0.04) / err(0.02);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn dynkin_examples() {
        let p = OuParams::new(1.0, 0.0, 1.0).unwrap();
        let gen = GeneratorSpec::ou(p);
        let g = grid(-6.0, 6.0, 0.01);
        let constant = GridFunction::sample(g, |_| 1.0).unwrap();
        let k = ou_point_kernel(p, g, 0.01).unwrap();
        assert!(dynkin_residual(&k, &gen, &constant, 0.01).unwrap() < 1e-10);

        let identity = TransitionKernel::identity(g.len());
        let f = GridFunction::sample(g, |q| (-q * q / 2.0).exp()).unwrap();
        let zero = GeneratorSpec::constant(0.0, 0.0);
        assert_eq!(dynkin_residual(&identity, &zero, &f, 0.1).unwrap(), 0.0);
        assert!(dynkin_residual(&identity, &zero, &f, 0.0).is_err());
    }
}
