//! Three independent routes from an initial parameter point to the density at
//! time `t`:
//!
//! * parameter route: flow the moments, then map them to a density;
//! * PDE route: map to a density first, then solve Fokker-Planck;
//! * Monte Carlo route: sample the SDE from the initial density and estimate
//!   the density of the end states.
//!
//! The routes commute when their pairwise L1 distances are within tolerance.

use std::io::Write;

use serde::Serialize;

use super::{terminal_map, EmSettings, InitialCondition, DEFAULT_DT, DEFAULT_PATHS};
use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::generator_pde::{cfl_limit, solve_forward, PdeProblem};
use crate::parameter_flow::ParamPoint;
use crate::process::Process;
use crate::stat_manifold::{density_from_params, pushforward_path, Grid, GridDensity, GAUSSIAN_HALF_WIDTH_SDS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FunctorSettings {
    pub dx: f64,
    pub n_paths: usize,
    pub mc_dt: f64,
    pub seed: u64,
    /// Fraction of the explicit-scheme stability bound used as the PDE step.
    pub cfl_fraction: f64,
    pub param_pde_tolerance: f64,
    pub mc_tolerance: f64,
}

impl Default for FunctorSettings {
    fn default() -> Self {
        Self {
            dx: 0.01,
            n_paths: DEFAULT_PATHS,
            mc_dt: DEFAULT_DT,
            seed: 2024,
            cfl_fraction: 0.9,
            param_pde_tolerance: 1e-2,
            mc_tolerance: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RouteDistances {
    pub param_pde: f64,
    pub param_mc: f64,
    pub pde_mc: f64,
}

#[derive(Debug, Clone)]
pub struct FunctorReport {
    pub t: f64,
    pub settings: FunctorSettings,
    pub distances: RouteDistances,
    pub bandwidth: f64,
    pub parameter: GridDensity,
    pub pde: GridDensity,
    pub monte_carlo: GridDensity,
}

impl FunctorReport {
    /// `(name, value, tolerance)` for each pairwise distance.
    pub fn checks(&self) -> [(&'static str, f64, f64); 3] {
        let s = &self.settings;
        [
            ("l1_parameter_vs_pde", self.distances.param_pde, s.param_pde_tolerance),
            ("l1_parameter_vs_monte_carlo", self.distances.param_mc, s.mc_tolerance),
            ("l1_pde_vs_monte_carlo", self.distances.pde_mc, s.mc_tolerance),
        ]
    }

    pub fn passed(&self) -> bool {
        self.checks().iter().all(|(_, v, tol)| v < tol)
    }

    /// Rows `q,parameter,pde,monte_carlo`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "q,parameter,pde,monte_carlo")?;
        let rows = self
            .parameter
            .grid()
            .points()
            .zip(self.parameter.values())
            .zip(self.pde.values())
            .zip(self.monte_carlo.values());
        for (((q, a), b), c) in rows {
            writeln!(out, "{q},{a},{b},{c}")?;
        }
        Ok(())
    }
}

/// Silverman's rule `0.9 min(sd, IQR / 1.34) n^{-1/5}`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantile = |p: f64| {
        let pos = p * (n - 1) as f64;
        let i = pos.floor() as usize;
        let w = pos - i as f64;
        sorted[i] * (1.0 - w) + sorted[(i + 1).min(n - 1)] * w
    };
    let iqr = quantile(0.75) - quantile(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (n as f64).powf(-0.2)
}

/// Histogram density with one bin of width `dx` centred on every grid point.
/// Samples off the grid are dropped (they still count toward `n`).
pub fn histogram_density(samples: &[f64], grid: Grid) -> Result<GridDensity> {
    let mut values = vec![0.0; grid.len()];
    let scale = 1.0 / (samples.len() as f64 * grid.dx());
    for &y in samples {
        if let Some(i) = grid.nearest(y) {
            values[i] += scale;
        }
    }
    GridDensity::new(grid, values)
}

/// Discrete Gaussian smoothing with standard deviation `bandwidth`; the
/// weights sum to one so interior mass is preserved.
pub fn smooth_density(density: &GridDensity, bandwidth: f64) -> Result<GridDensity> {
    ensure_non_negative("bandwidth", bandwidth)?;
    let grid = *density.grid();
    let dx = grid.dx();
    if bandwidth < 1e-3 * dx {
        return Ok(density.clone());
    }
    let reach = (5.0 * bandwidth / dx).ceil() as isize;
    let mut weights: Vec<f64> = (-reach..=reach)
        .map(|k| (-0.5 * (k as f64 * dx / bandwidth).powi(2)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    let src = density.values();
    let n = src.len() as isize;
    let mut out = vec![0.0; src.len()];
    for (i, &v) in src.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        for (w, k) in weights.iter().zip(-reach..=reach) {
            let j = i as isize + k;
            if j >= 0 && j < n {
                out[j as usize] += w * v;
            }
        }
    }
    GridDensity::new(grid, out)
}

fn route<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Route {
        route: name,
        source: Box::new(e),
    })
}

/// Computes the parameter, PDE and Monte Carlo densities at time `t` and their
/// pairwise L1 distances.
pub fn verify_functor(process: Process, x0: &ParamPoint, t: f64, settings: FunctorSettings) -> Result<FunctorReport> {
    process.validate()?;
    ensure_non_negative("t", t)?;
    ensure_positive("dx", settings.dx)?;
    ensure_positive("cfl_fraction", settings.cfl_fraction)?;
    let xt = route("parameter", process.moments(x0, t))?;

    let spread = GAUSSIAN_HALF_WIDTH_SDS * x0.variance().max(xt.variance()).sqrt();
    let lo = x0.mean().min(xt.mean()) - spread;
    let hi = x0.mean().max(xt.mean()) + spread;
    let grid = Grid::with_spacing(lo, hi, settings.dx)?;

    let parameter = route(
        "parameter",
        (|| {
            let density = &pushforward_path(&process.flow(), x0, &[t])?[0];
            density.sample_on(grid)
        })(),
    )?;

    let pde = route(
        "pde",
        (|| {
            let initial_density = density_from_params(x0)?;
            let initial = GridDensity::sample_normalized(grid, |q| initial_density.pdf(q))?;
            let limit = cfl_limit(
                grid.dx(),
                &[process.max_drift(grid.lo(), grid.hi())],
                &[process.lambda()],
            );
            let problem = PdeProblem::forward(process.generator(), initial, 0.0, t, settings.cfl_fraction * limit);
            Ok(solve_forward(&problem)?.last().clone())
        })(),
    )?;

    let (monte_carlo, bandwidth) = route(
        "monte_carlo",
        (|| {
            let initial = InitialCondition::Gaussian {
                mean: x0.mean(),
                variance: x0.variance(),
            };
            let em = EmSettings::new(0.0, t, settings.mc_dt, settings.n_paths, settings.seed);
            let ends = terminal_map(&process.sde(), initial, &em, |y| y)?;
            let bandwidth = silverman_bandwidth(&ends);
            let hist = histogram_density(&ends, grid)?;
            Ok((smooth_density(&hist, bandwidth)?, bandwidth))
        })(),
    )?;

    let distances = RouteDistances {
        param_pde: parameter.l1_distance(&pde)?,
        param_mc: parameter.l1_distance(&monte_carlo)?,
        pde_mc: pde.l1_distance(&monte_carlo)?,
    };
    Ok(FunctorReport {
        t,
        settings,
        distances,
        bandwidth,
        parameter,
        pde,
        monte_carlo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parameter_flow::OuParams;
    use crate::stat_manifold::gaussian_pdf;

    #[test]
    fn smoothing_preserves_mass_and_spreads_variance() {
        let grid = Grid::with_spacing(-10.0, 10.0, 0.01).unwrap();
        let d = GridDensity::sample_normalized(grid, |q| gaussian_pdf(q, 0.5, 1.0)).unwrap();
        let s = smooth_density(&d, 0.3).unwrap();
        assert!((s.mass() - 1.0).abs() < 1e-10);
        assert!((s.mean() - 0.5).abs() < 1e-10);
        // The kernel is cut at five bandwidths, which loses about 1e-6 of variance.
        assert!((s.variance() - 1.09).abs() < 1e-5, "{}", s.variance());
        assert_eq!(smooth_density(&d, 0.0).unwrap(), d);
    }

    #[test]
    fn silverman_on_known_sample() {
        assert_eq!(silverman_bandwidth(&[1.0]), 0.0);
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        // sd = 0.2887, IQR / 1.34 = 0.373, so sd wins.
        let h = silverman_bandwidth(&xs);
        let expected = 0.9 * 0.288_819_4 * 1000f64.powf(-0.2);
        assert!((h - expected).abs() < 1e-4, "{h} vs {expected}");
    }

    #[test]
    fn histogram_counts() {
        let grid = Grid::with_spacing(0.0, 1.0, 0.5).unwrap();
        let d = histogram_density(&[0.1, 0.4, 0.6, 5.0], grid).unwrap();
        assert_eq!(d.values(), &[0.5, 1.0, 0.0]);
    }

    #[test]
    fn functor_at_time_zero() {
        let process = Process::Ou(OuParams::new(1.0, 0.0, 1.0).unwrap());
        let x0 = ParamPoint::gaussian(1.0, 1.0).unwrap();
        let settings = FunctorSettings {
            n_paths: 20_000,
            mc_tolerance: 0.04,
            ..Default::default()
        };
        let report = verify_functor(process, &x0, 0.0, settings).unwrap();
        assert!(report.distances.param_pde < 1e-12);
        assert!(report.passed(), "{:?}", report.distances);
    }

    #[test]
    fn route_errors_are_labelled() {
        let process = Process::Ou(OuParams::new(1.0, 0.0, 1.0).unwrap());
        let x0 = ParamPoint::gaussian(1.0, 0.0).unwrap();
        match verify_functor(process, &x0, 0.5, FunctorSettings::default()) {
            Err(Error::Route { route: "pde", .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
