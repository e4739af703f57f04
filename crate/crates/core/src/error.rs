use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("integration needs {steps} steps, more than the limit {limit}")]
    StepOverflow { steps: f64, limit: u64 },

    #[error("integration produced a non-finite state at t = {time}")]
    IntegrationBlowup { time: f64 },

    #[error("group law requires an autonomous vector field")]
    TimeDependentField,

    #[error("variance {0} is below the floor {floor}", floor = crate::parameter_flow::VARIANCE_FLOOR)]
    VarianceFloor(f64),

    #[error("domain too small: boundary/max integrand ratio {ratio:e} exceeds {limit:e}")]
    DomainTooSmall { ratio: f64, limit: f64 },

    #[error("density is not normalized: mass = {mass}")]
    Unnormalized { mass: f64 },

    #[error("grid has {points} points, need at least {required}")]
    GridTooSmall { points: usize, required: usize },

    #[error("time step {dt:e} violates the stability bound {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("mass drifted by {drift:e} (limit {limit:e}); domain too small")]
    MassLeak { drift: f64, limit: f64 },

    #[error("PDE problem has direction {found}, operation needs {expected}")]
    WrongDirection {
        expected: &'static str,
        found: &'static str,
    },

    #[error("sampler produced a non-finite state on path {path} at step {step}")]
    SamplerBlowup { path: usize, step: usize },

    #[error("{escaped:.4} of the sampled mass left the kernel grid (limit {limit})")]
    KernelGridTooSmall { escaped: f64, limit: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("row {row} of the kernel sums to {sum}")]
    NotStochastic { row: usize, sum: f64 },

    #[error("dual did not converge after {iterations} iterations (gradient norm {grad_norm:e}); targets infeasible or on the boundary")]
    Infeasible { iterations: usize, grad_norm: f64 },

    #[error("{paths} paths exceeds the enumeration limit {limit}")]
    StateSpaceTooLarge { paths: f64, limit: usize },

    #[error("measure puts mass on a path the base measure excludes")]
    SupportMismatch,

    #[error("operation requires a factored path measure")]
    NotFactored,

    #[error("at time index {index}: {source}")]
    AtTime {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{route} route failed: {source}")]
    Route {
        route: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{module}: {source}")]
    Module {
        module: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid config: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, constraint: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            value,
            constraint: constraint.into(),
        }
    }

    pub(crate) fn at_time(index: usize, source: Error) -> Self {
        Error::AtTime {
            index,
            source: Box::new(source),
        }
    }

    pub(crate) fn in_module(module: &'static str, source: Error) -> Self {
        Error::Module {
            module,
            source: Box::new(source),
        }
    }
}

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, value, "must be finite"))
    }
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, value, "must be finite and > 0"))
    }
}

pub(crate) fn ensure_non_negative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, value, "must be finite and >= 0"))
    }
}
