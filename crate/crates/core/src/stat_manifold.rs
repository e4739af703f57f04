//! Exponential-family densities `p(q) = exp(-lambda . J(q)) / Z` and the map
//! from parameter points to densities.
//!
//! Gaussian points `(m, s)` use the potentials `(q, q^2)` with weights
//! `(-m / s, 1 / (2 s))`; the mean and variance accessors undo that conversion.

use std::fmt;
use std::io::Write;
use std::ops::Deref;
use std::sync::Arc;

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::parameter_flow::{FlowSpec, ParamPoint, VARIANCE_FLOOR};

/// Gaussian-family grids span this many standard deviations either side of the mean.
pub const GAUSSIAN_HALF_WIDTH_SDS: f64 = 10.0;
pub const GAUSSIAN_GRID_POINTS: usize = 4001;

/// Truncated domains must leave the integrand below this fraction of its peak.
pub const BOUNDARY_DECAY: f64 = 1e-12;

/// Mass tolerance for operations that require a normalized density.
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// Uniform 1-D grid `lo, lo + dx, ..., lo + (n - 1) dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    lo: f64,
    dx: f64,
    n: usize,
}

impl Grid {
    pub fn new(lo: f64, dx: f64, n: usize) -> Result<Self> {
        ensure_finite("lo", lo)?;
        ensure_positive("dx", dx)?;
        if n < 2 {
            return Err(Error::GridTooSmall { points: n, required: 2 });
        }
        Ok(Self { lo, dx, n })
    }

    /// `n` points spanning `[lo, hi]` inclusive.
    pub fn from_bounds(lo: f64, hi: f64, n: usize) -> Result<Self> {
        ensure_finite("hi", hi)?;
        if hi <= lo {
            return Err(Error::param("hi", hi, format!("must exceed lo = {lo}")));
        }
        if n < 2 {
            return Err(Error::GridTooSmall { points: n, required: 2 });
        }
        Self::new(lo, (hi - lo) / (n - 1) as f64, n)
    }

    /// Grid with spacing `dx` starting at `lo` and reaching at least `hi`.
    pub fn with_spacing(lo: f64, hi: f64, dx: f64) -> Result<Self> {
        ensure_finite("hi", hi)?;
        ensure_positive("dx", dx)?;
        let span = (hi - lo) / dx;
        let cells = if (span - span.round()).abs() < 1e-9 * span.abs().max(1.0) {
            span.round()
        } else {
            span.ceil()
        };
        if !(cells >= 1.0) || cells > 1e8 {
            return Err(Error::param("dx", dx, format!("gives {cells} cells on [{lo}, {hi}]")));
        }
        Self::new(lo, dx, cells as usize + 1)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.point(self.n - 1)
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn point(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.dx
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.point(i))
    }

    /// Index of the grid point nearest `q`, if `q` lies within half a cell of the grid.
    pub fn nearest(&self, q: f64) -> Option<usize> {
        let pos = ((q - self.lo) / self.dx).round();
        if pos >= 0.0 && pos < self.n as f64 {
            Some(pos as usize)
        } else {
            None
        }
    }

    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.n);
        let interior: f64 = values[1..self.n - 1].iter().sum();
        (interior + 0.5 * (values[0] + values[self.n - 1])) * self.dx
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.points().map(f).collect()
    }
}

/// Real values sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("grid value at index {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn sample(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.sample(f))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn integral(&self) -> f64 {
        self.grid.trapezoid(&self.values)
    }

    /// Linear interpolation; `None` outside the grid.
    pub fn interpolate(&self, q: f64) -> Option<f64> {
        let pos = (q - self.grid.lo) / self.grid.dx;
        if !(pos >= 0.0) || pos > (self.grid.n - 1) as f64 {
            return None;
        }
        let i = (pos.floor() as usize).min(self.grid.n - 2);
        let w = pos - i as f64;
        Some((1.0 - w) * self.values[i] + w * self.values[i + 1])
    }

    fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        let (a, b) = (&self.grid, &other.grid);
        let same =
            a.n == b.n && (a.lo - b.lo).abs() <= 1e-12 * a.lo.abs().max(1.0) && (a.dx - b.dx).abs() <= 1e-12 * a.dx;
        if same {
            Ok(())
        } else {
            Err(Error::Shape(format!("grids differ: {a:?} vs {b:?}")))
        }
    }

    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Trapezoidal `integral |f - g| dq`.
    pub fn l1_distance(&self, other: &GridFunction) -> Result<f64> {
        self.check_same_grid(other)?;
        let diff: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .collect();
        Ok(self.grid.trapezoid(&diff))
    }

    /// Writes `q,<column>` rows.
    pub fn write_csv<W: Write>(&self, column: &str, mut out: W) -> Result<()> {
        writeln!(out, "q,{column}")?;
        for (q, v) in self.grid.points().zip(&self.values) {
            writeln!(out, "{q},{v}")?;
        }
        Ok(())
    }
}

/// A probability density on a uniform grid. Values may dip to round-off
/// negatives when produced by an explicit PDE scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity(GridFunction);

impl GridDensity {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        GridFunction::new(grid, values).map(Self)
    }

    pub fn from_function(f: GridFunction) -> Self {
        Self(f)
    }

    /// Samples `pdf` and rescales so the trapezoidal mass is exactly one.
    pub fn sample_normalized(grid: Grid, pdf: impl Fn(f64) -> f64) -> Result<Self> {
        let mut d = Self::new(grid, grid.sample(pdf))?;
        let mass = d.mass();
        if !(mass > 0.0) {
            return Err(Error::Unnormalized { mass });
        }
        d.0.values.iter_mut().for_each(|v| *v /= mass);
        Ok(d)
    }

    pub fn mass(&self) -> f64 {
        self.0.integral()
    }

    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        let mass = self.mass();
        if (mass - 1.0).abs() <= tol {
            Ok(())
        } else {
            Err(Error::Unnormalized { mass })
        }
    }

    pub fn mean(&self) -> f64 {
        let g = self.0.grid;
        let first: Vec<f64> = g.points().zip(&self.0.values).map(|(q, p)| q * p).collect();
        g.trapezoid(&first) / self.mass()
    }

    pub fn variance(&self) -> f64 {
        let g = self.0.grid;
        let m = self.mean();
        let second: Vec<f64> = g
            .points()
            .zip(&self.0.values)
            .map(|(q, p)| (q - m).powi(2) * p)
            .collect();
        g.trapezoid(&second) / self.mass()
    }

    pub fn as_function(&self) -> &GridFunction {
        &self.0
    }

    pub fn into_function(self) -> GridFunction {
        self.0
    }
}

impl Deref for GridDensity {
    type Target = GridFunction;

    fn deref(&self) -> &GridFunction {
        &self.0
    }
}

/// A named scalar potential `J: state -> real`.
#[derive(Clone)]
pub struct Potential {
    name: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl Potential {
    pub fn new(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, q: f64) -> f64 {
        (self.f)(q)
    }
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Potential").field(&self.name).finish()
    }
}

/// Ordered, nonempty list of potentials `J_1 .. J_n`.
#[derive(Debug, Clone)]
pub struct PotentialSet(Vec<Potential>);

impl PotentialSet {
    pub fn new(potentials: Vec<Potential>) -> Result<Self> {
        if potentials.is_empty() {
            return Err(Error::Dimension { expected: 1, got: 0 });
        }
        Ok(Self(potentials))
    }

    /// `(q, q^2)`.
    pub fn gaussian() -> Self {
        Self(vec![Potential::new("q", |q| q), Potential::new("q^2", |q| q * q)])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Potential> {
        self.0.iter()
    }

    /// `lambda . J(q)`.
    pub fn energy(&self, weights: &[f64], q: f64) -> f64 {
        self.0.iter().zip(weights).map(|(j, w)| w * j.eval(q)).sum()
    }
}

/// Integration interval. `compact` marks a genuinely bounded support; otherwise
/// the interval truncates an unbounded one and the integrand must decay at its ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
    pub compact: bool,
}

impl Domain {
    pub fn truncated(lo: f64, hi: f64) -> Self {
        Self { lo, hi, compact: false }
    }

    pub fn compact(lo: f64, hi: f64) -> Self {
        Self { lo, hi, compact: true }
    }
}

/// `log integral exp(-lambda . J) dq` by the trapezoidal rule on a grid of spacing `dx`.
pub fn log_partition(potentials: &PotentialSet, weights: &[f64], domain: Domain, dx: f64) -> Result<f64> {
    if weights.len() != potentials.len() {
        return Err(Error::Dimension {
            expected: potentials.len(),
            got: weights.len(),
        });
    }
    for &w in weights {
        ensure_finite("weight", w)?;
    }
    let grid = Grid::with_spacing(domain.lo, domain.hi, dx)?;
    let exponent = grid.sample(|q| -potentials.energy(weights, q));
    log_partition_on(&grid, &exponent, !domain.compact)
}

fn log_partition_on(grid: &Grid, exponent: &[f64], check_decay: bool) -> Result<f64> {
    let peak = exponent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return Err(Error::NonFinite("exponent of the integrand".into()));
    }
    let scaled: Vec<f64> = exponent.iter().map(|e| (e - peak).exp()).collect();
    if check_decay {
        let ratio = scaled[0].max(scaled[scaled.len() - 1]);
        if ratio >= BOUNDARY_DECAY {
            return Err(Error::DomainTooSmall {
                ratio,
                limit: BOUNDARY_DECAY,
            });
        }
    }
    Ok(peak + grid.trapezoid(&scaled).ln())
}

/// A normalized exponential-family density on an interval.
#[derive(Debug, Clone)]
pub struct ExpFamilyDensity {
    potentials: PotentialSet,
    weights: Vec<f64>,
    log_partition: f64,
    domain: Domain,
}

impl ExpFamilyDensity {
    pub fn new(potentials: PotentialSet, weights: Vec<f64>, domain: Domain, dx: f64) -> Result<Self> {
        let log_partition = log_partition(&potentials, &weights, domain, dx)?;
        Ok(Self {
            potentials,
            weights,
            log_partition,
            domain,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn potentials(&self) -> &PotentialSet {
        &self.potentials
    }

    pub fn log_pdf(&self, q: f64) -> f64 {
        -self.potentials.energy(&self.weights, q) - self.log_partition
    }

    pub fn pdf(&self, q: f64) -> f64 {
        if q < self.domain.lo || q > self.domain.hi {
            return 0.0;
        }
        self.log_pdf(q).exp()
    }

    /// `(mean, variance)` when the density is Gaussian in the `(q, q^2)` convention.
    pub fn gaussian_moments(&self) -> Option<(f64, f64)> {
        let names: Vec<&str> = self.potentials.iter().map(Potential::name).collect();
        if names != ["q", "q^2"] || !(self.weights[1] > 0.0) {
            return None;
        }
        let s = 0.5 / self.weights[1];
        Some((-self.weights[0] * s, s))
    }

    /// The default grid over the density's domain.
    pub fn default_grid(&self) -> Result<Grid> {
        Grid::from_bounds(self.domain.lo, self.domain.hi, GAUSSIAN_GRID_POINTS)
    }

    /// Point samples of the pdf on `grid` (not renormalized).
    pub fn sample_on(&self, grid: Grid) -> Result<GridDensity> {
        GridDensity::new(grid, grid.sample(|q| self.pdf(q)))
    }
}

/// The parameter-to-density map: `(m, s) -> N(m, s)` as `exp(-(w1 q + w2 q^2)) / Z`.
pub fn density_from_params(x: &ParamPoint) -> Result<ExpFamilyDensity> {
    if x.dim() != 2 {
        return Err(Error::Dimension {
            expected: 2,
            got: x.dim(),
        });
    }
    let (m, s) = (x.mean(), x.variance());
    if !(s >= VARIANCE_FLOOR) {
        return Err(Error::VarianceFloor(s));
    }
    let half = GAUSSIAN_HALF_WIDTH_SDS * s.sqrt();
    let domain = Domain::truncated(m - half, m + half);
    let grid = Grid::from_bounds(domain.lo, domain.hi, GAUSSIAN_GRID_POINTS)?;
    ExpFamilyDensity::new(PotentialSet::gaussian(), vec![-m / s, 0.5 / s], domain, grid.dx())
}

pub fn gaussian_pdf(q: f64, mean: f64, variance: f64) -> f64 {
    (-(q - mean).powi(2) / (2.0 * variance)).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
}

/// Differential entropy `-integral p log p` (trapezoidal, `0 log 0 = 0`).
pub fn entropy(p: &GridDensity) -> Result<f64> {
    p.check_normalized(NORMALIZATION_TOL)?;
    let integrand: Vec<f64> = p
        .values()
        .iter()
        .map(|&v| if v > 0.0 { -v * v.ln() } else { 0.0 })
        .collect();
    Ok(p.grid().trapezoid(&integrand))
}

/// Pushes a parameter path forward to densities: element `i` is
/// `density_from_params(phi_{t_i}(x0))`.
pub fn pushforward_path(flow: &FlowSpec, x0: &ParamPoint, times: &[f64]) -> Result<Vec<ExpFamilyDensity>> {
    let mut prev = 0.0;
    for (i, &t) in times.iter().enumerate() {
        if !(t >= prev) || !t.is_finite() {
            return Err(Error::at_time(
                i,
                Error::param("t", t, "times must be finite, >= 0 and ascending"),
            ));
        }
        prev = t;
    }
    times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            flow.evolve(x0, t)
                .and_then(|x| density_from_params(&x))
                .map_err(|e| Error::at_time(i, e))
        })
        .collect()
}
