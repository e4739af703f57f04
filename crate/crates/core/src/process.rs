//! The two diffusions with closed-form moments, viewed through every lens the
//! crate offers: moment flow, generator, and sampler.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Result};
use crate::feynman_kac_mc::SdeSpec;
use crate::generator_pde::GeneratorSpec;
use crate::parameter_flow::{FlowSpec, OuParams, ParamPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "process", rename_all = "snake_case")]
pub enum Process {
    /// `dY = -b (Y - k) dt + sqrt(2 lambda) dW`
    Ou(OuParams),
    /// `dY = -b dt + sqrt(2 lambda) dW`
    Wiener { b: f64, lambda: f64 },
}

impl Process {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Process::Ou(p) => p.validate(),
            Process::Wiener { b, lambda } => {
                ensure_finite("b", b)?;
                ensure_positive("lambda", lambda)
            }
        }
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            Process::Ou(p) => p.lambda,
            Process::Wiener { lambda, .. } => lambda,
        }
    }

    pub fn flow(&self) -> FlowSpec {
        match *self {
            Process::Ou(p) => FlowSpec::ou(p),
            Process::Wiener { b, lambda } => FlowSpec::wiener(b, lambda),
        }
    }

    pub fn generator(&self) -> GeneratorSpec {
        match *self {
            Process::Ou(p) => GeneratorSpec::ou(p),
            Process::Wiener { b, lambda } => GeneratorSpec::wiener(b, lambda),
        }
    }

    pub fn sde(&self) -> SdeSpec {
        match *self {
            Process::Ou(p) => SdeSpec::ou(p),
            Process::Wiener { b, lambda } => SdeSpec::wiener(b, lambda),
        }
    }

    /// Largest `|drift|` over `[lo, hi]`.
    pub fn max_drift(&self, lo: f64, hi: f64) -> f64 {
        match *self {
            Process::Ou(p) => p.b * (lo - p.k).abs().max((hi - p.k).abs()),
            Process::Wiener { b, .. } => b.abs(),
        }
    }

    pub fn moments(&self, x0: &ParamPoint, t: f64) -> Result<ParamPoint> {
        self.flow().evolve(x0, t)
    }
}
