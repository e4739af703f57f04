use nalgebra::{DMatrix, DVector};

use super::dual::{minimize_dual, DualPoint};
use crate::error::{Error, Result};
use crate::stat_manifold::{Grid, GridDensity, Potential};

/// Maximise entropy relative to `base` on `grid` subject to `E[J_i] = targets[i]`.
#[derive(Debug, Clone)]
pub struct MaxEntProblem {
    pub grid: Grid,
    pub constraints: Vec<Potential>,
    pub targets: Vec<f64>,
    /// Reference density; `None` is Lebesgue measure on the grid.
    pub base: Option<GridDensity>,
}

impl MaxEntProblem {
    pub fn new(grid: Grid, constraints: Vec<Potential>, targets: Vec<f64>) -> Self {
        Self {
            grid,
            constraints,
            targets,
            base: None,
        }
    }

    pub fn with_base(mut self, base: GridDensity) -> Self {
        self.base = Some(base);
        self
    }
}

#[derive(Debug, Clone)]
pub struct MaxEntSolution {
    pub density: GridDensity,
    pub multipliers: Vec<f64>,
    /// `E[J_i] - targets[i]` under `density`.
    pub residuals: Vec<f64>,
    pub dual_objective: Vec<f64>,
}

struct Tabulated {
    // ln(trapezoid weight * base) per grid point.
    log_measure: Vec<f64>,
    // n x k values J_i(q).
    values: DMatrix<f64>,
}

impl Tabulated {
    fn exponent(&self, lambda: &[f64]) -> Vec<f64> {
        let l = DVector::from_column_slice(lambda);
        let energy = &self.values * l;
        self.log_measure.iter().zip(energy.iter()).map(|(m, e)| m - e).collect()
    }

    // Probability weights of the grid points and log Z.
    fn weights(&self, lambda: &[f64]) -> Result<(Vec<f64>, f64)> {
        let exponent = self.exponent(lambda);
        let peak = exponent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(Error::NonFinite("max-ent exponent".into()));
        }
        let mut w: Vec<f64> = exponent.iter().map(|e| (e - peak).exp()).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        Ok((w, peak + total.ln()))
    }

    fn dual_point(&self, lambda: &[f64]) -> Result<DualPoint> {
        let (w, log_z) = self.weights(lambda)?;
        let k = self.values.ncols();
        let mut mean = DVector::zeros(k);
        for (i, wi) in w.iter().enumerate() {
            mean += self.values.row(i).transpose() * *wi;
        }
        let mut cov = DMatrix::zeros(k, k);
        for (i, wi) in w.iter().enumerate() {
            let d = self.values.row(i).transpose() - &mean;
            cov += &d * d.transpose() * *wi;
        }
        Ok(DualPoint { log_z, mean, cov })
    }
}

pub fn maxent_density(problem: &MaxEntProblem) -> Result<MaxEntSolution> {
    let grid = problem.grid;
    let k = problem.constraints.len();
    if problem.targets.len() != k {
        return Err(Error::Dimension {
            expected: k,
            got: problem.targets.len(),
        });
    }
    let base: Vec<f64> = match &problem.base {
        Some(b) if *b.grid() != grid => return Err(Error::Shape("base density lives on a different grid".into())),
        Some(b) => b.values().to_vec(),
        None => vec![1.0; grid.len()],
    };
    if let Some(v) = base.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::param("base", *v, "must be finite and >= 0"));
    }
    let n = grid.len();
    let mut values = DMatrix::zeros(n, k);
    for (j, c) in problem.constraints.iter().enumerate() {
        for (i, q) in grid.points().enumerate() {
            let v = c.eval(q);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("constraint {} at q = {q}", c.name())));
            }
            values[(i, j)] = v;
        }
    }
    let log_measure = (0..n)
        .map(|i| {
            let end = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            (end * grid.dx() * base[i]).ln()
        })
        .collect();
    let table = Tabulated { log_measure, values };

    let dual = minimize_dual(&problem.targets, |l| table.dual_point(l))?;
    let lambda = &dual.multipliers;
    let (w, log_z) = table.weights(lambda)?;
    let energy = &table.values * DVector::from_column_slice(lambda);
    let density = base
        .iter()
        .zip(energy.iter())
        .map(|(b, e)| b * (-e - log_z).exp())
        .collect();
    let residuals = (0..k)
        .map(|j| {
            w.iter()
                .enumerate()
                .map(|(i, wi)| wi * table.values[(i, j)])
                .sum::<f64>()
                - problem.targets[j]
        })
        .collect();
    Ok(MaxEntSolution {
        density: GridDensity::new(grid, density)?,
        multipliers: dual.multipliers,
        residuals,
        dual_objective: dual.objective,
    })
}
