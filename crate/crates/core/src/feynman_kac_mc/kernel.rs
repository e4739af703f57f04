use std::io::Write;

use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;

use super::{terminal_map, EmSettings, InitialCondition, SdeSpec};
use crate::error::{ensure_non_negative, Error, Result};
use crate::parameter_flow::OuParams;
use crate::stat_manifold::{gaussian_pdf, Grid};

/// Row-sum tolerance for a valid kernel.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Largest fraction of sampled mass allowed to leave the grid in [`estimate_kernel`].
pub const ESCAPE_LIMIT: f64 = 1e-3;

/// Row-stochastic matrix over a finite set of states; row `i` is the law of the
/// next state given the current state `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    matrix: DMatrix<f64>,
    step: f64,
}

impl TransitionKernel {
    pub fn new(matrix: DMatrix<f64>, step: f64) -> Result<Self> {
        ensure_non_negative("step", step)?;
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::Shape(format!(
                "kernel must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::param(
                "kernel entry",
                f64::NAN,
                "entries must be finite and >= 0",
            ));
        }
        for (row, r) in matrix.row_iter().enumerate() {
            let sum = r.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NotStochastic { row, sum });
            }
        }
        Ok(Self { matrix, step })
    }

    /// Scales every row of a nonnegative matrix to sum to one.
    pub fn from_weights(mut weights: DMatrix<f64>, step: f64) -> Result<Self> {
        for (row, mut r) in weights.row_iter_mut().enumerate() {
            let sum = r.sum();
            if !(sum > 0.0) || !sum.is_finite() {
                return Err(Error::NotStochastic { row, sum });
            }
            r /= sum;
        }
        Self::new(weights, step)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n, n),
            step: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Matrix element `<i| P |j>`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    /// `(P f)_i = sum_j P_ij f_j`, the expectation of `f` one step ahead.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(f);
        (&self.matrix * v).iter().copied().collect()
    }

    /// Distribution after one step from the row vector `p`.
    pub fn push(&self, p: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(p);
        (self.matrix.tr_mul(&v)).iter().copied().collect()
    }

    /// Rows `from,to,probability`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "from,to,probability")?;
        for i in 0..self.len() {
            for j in 0..self.len() {
                writeln!(out, "{i},{j},{}", self.matrix[(i, j)])?;
            }
        }
        Ok(())
    }
}

/// `0.5 * max_i sum_j |a_ij - b_ij|`.
pub fn row_total_variation(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (0..a.nrows())
        .map(|i| {
            0.5 * a
                .row(i)
                .iter()
                .zip(b.row(i).iter())
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Ordered product `P_1 P_2 ... P_n` (first kernel acts first).
pub fn compose_chain(kernels: &[TransitionKernel]) -> Result<DMatrix<f64>> {
    let (first, rest) = kernels
        .split_first()
        .ok_or_else(|| Error::Shape("empty kernel chain".into()))?;
    let mut acc = first.matrix.clone();
    for k in rest {
        if k.len() != acc.ncols() {
            return Err(Error::Shape(format!(
                "chain mixes {} and {} states",
                acc.ncols(),
                k.len()
            )));
        }
        acc = &acc * &k.matrix;
    }
    Ok(acc)
}

/// Chapman-Kolmogorov residual: max row total variation between the two-step
/// composition (`k1` then `k2`) and the direct kernel `k12`.
pub fn sewing_check(k1: &TransitionKernel, k2: &TransitionKernel, k12: &TransitionKernel) -> Result<f64> {
    if k1.len() != k2.len() || k1.len() != k12.len() {
        return Err(Error::Shape(format!(
            "kernels over {}, {} and {} states",
            k1.len(),
            k2.len(),
            k12.len()
        )));
    }
    let composed = compose_chain(&[k1.clone(), k2.clone()])?;
    Ok(row_total_variation(&composed, &k12.matrix))
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Exact OU transition over `h`, discretized on cells: row `i` starts at the
/// midpoint of cell `i` and holds the Gaussian mass of every cell.
/// `edges` lists the `n + 1` cell boundaries.
pub fn ou_cell_kernel(p: OuParams, edges: Grid, h: f64) -> Result<TransitionKernel> {
    ensure_non_negative("h", h)?;
    let cells = edges.len() - 1;
    if h == 0.0 {
        return Ok(TransitionKernel::identity(cells));
    }
    let bounds: Vec<f64> = edges.points().collect();
    let mut weights = DMatrix::zeros(cells, cells);
    for i in 0..cells {
        let mid = 0.5 * (bounds[i] + bounds[i + 1]);
        let (mean, var) = p.transition_moments(mid, h);
        let sd = var.sqrt();
        let mut lower = normal_cdf((bounds[0] - mean) / sd);
        for j in 0..cells {
            let upper = normal_cdf((bounds[j + 1] - mean) / sd);
            weights[(i, j)] = (upper - lower).max(0.0);
            lower = upper;
        }
    }
    TransitionKernel::from_weights(weights, h)
}

/// Exact OU transition over `h` between grid points: row `i` is the transition
/// density from `q_i` evaluated at every grid point, renormalized.
pub fn ou_point_kernel(p: OuParams, grid: Grid, h: f64) -> Result<TransitionKernel> {
    ensure_non_negative("h", h)?;
    let n = grid.len();
    if h == 0.0 {
        return Ok(TransitionKernel::identity(n));
    }
    let points: Vec<f64> = grid.points().collect();
    let mut weights = DMatrix::zeros(n, n);
    for (i, &q) in points.iter().enumerate() {
        let (mean, var) = p.transition_moments(q, h);
        for (j, &r) in points.iter().enumerate() {
            weights[(i, j)] = gaussian_pdf(r, mean, var);
        }
    }
    TransitionKernel::from_weights(weights, h)
}

/// Empirical kernel on the cells delimited by `edges`: row `i` is the binned
/// law of `Y_{t1}` for `n_per_cell` paths started at the midpoint of cell `i`.
pub fn estimate_kernel(
    sde: &SdeSpec,
    edges: Grid,
    t0: f64,
    t1: f64,
    dt: f64,
    n_per_cell: usize,
    seed: u64,
) -> Result<TransitionKernel> {
    let cells = edges.len() - 1;
    let (lo, width) = (edges.lo(), edges.dx());
    let mut counts = DMatrix::<f64>::zeros(cells, cells);
    let mut escaped = 0usize;
    for i in 0..cells {
        let mid = lo + (i as f64 + 0.5) * width;
        let settings = EmSettings {
            stream_offset: (i * n_per_cell) as u64,
            ..EmSettings::new(t0, t1, dt, n_per_cell, seed)
        };
        let ends = terminal_map(sde, InitialCondition::Point(mid), &settings, |y| y)?;
        for y in ends {
            let pos = ((y - lo) / width).floor();
            if pos >= 0.0 && pos < cells as f64 {
                counts[(i, pos as usize)] += 1.0;
            } else {
                escaped += 1;
            }
        }
    }
    let fraction = escaped as f64 / (cells * n_per_cell) as f64;
    if fraction > ESCAPE_LIMIT {
        return Err(Error::KernelGridTooSmall {
            escaped: fraction,
            limit: ESCAPE_LIMIT,
        });
    }
    TransitionKernel::from_weights(counts, t1 - t0)
}
