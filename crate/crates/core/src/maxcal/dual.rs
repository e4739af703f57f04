//! Damped Newton on the convex dual `D(lambda) = log Z(lambda) + lambda . c`.
//!
//! With `p ~ base exp(-lambda . J)` the gradient is `c - E[J]` and the Hessian is
//! `Cov[J]`, so the caller only supplies `log Z`, the mean and the covariance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const GRADIENT_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 200;

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
// Objective differences below this are rounding noise, not ascent.
const ROUNDOFF: f64 = 1e-14;

pub(crate) struct DualPoint {
    pub log_z: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DualSolution {
    pub multipliers: Vec<f64>,
    /// Dual objective at the start and after every accepted step.
    pub objective: Vec<f64>,
    pub grad_norm: f64,
}

fn newton_direction(cov: &DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let scale = cov.diagonal().amax();
    if let Some(chol) = cov.clone().cholesky() {
        let l = chol.l_dirty();
        let pivot = l.diagonal().iter().map(|d| d * d).fold(f64::INFINITY, f64::min);
        if pivot > 1e-12 * scale {
            return -chol.solve(grad);
        }
    }
    // Singular covariance (collinear observables): steepest descent with the
    // step length that is exact for the local quadratic model.
    let curvature = grad.dot(&(cov * grad));
    let g2 = grad.norm_squared();
    let step = if curvature > 1e-300 { g2 / curvature } else { 1.0 };
    -grad * step
}

pub(crate) fn minimize_dual<F>(targets: &[f64], mut eval: F) -> Result<DualSolution>
where
    F: FnMut(&[f64]) -> Result<DualPoint>,
{
    let c = DVector::from_column_slice(targets);
    let mut lambda = DVector::zeros(c.len());
    let mut point = eval(lambda.as_slice())?;
    let mut value = point.log_z + lambda.dot(&c);
    let mut objective = vec![value];

    for iteration in 0..=MAX_ITERATIONS {
        let grad = &c - &point.mean;
        let grad_norm = grad.amax();
        if grad_norm < GRADIENT_TOL {
            return Ok(DualSolution {
                multipliers: lambda.as_slice().to_vec(),
                objective,
                grad_norm,
            });
        }
        if iteration == MAX_ITERATIONS {
            return Err(Error::Infeasible {
                iterations: iteration,
                grad_norm,
            });
        }
        let direction = newton_direction(&point.cov, &grad);
        let slope = grad.dot(&direction);
        let slack = ROUNDOFF * (1.0 + value.abs());
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = &lambda + &direction * t;
            if let Ok(p) = eval(trial.as_slice()) {
                let v = p.log_z + trial.dot(&c);
                if v.is_finite() && v <= value + ARMIJO * t * slope + slack {
                    accepted = Some((trial, p, v));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((trial, p, v)) = accepted else {
            return Err(Error::Infeasible {
                iterations: iteration,
                grad_norm,
            });
        };
        lambda = trial;
        point = p;
        value = v;
        objective.push(value);
    }
    unreachable!("loop returns on its final iteration")
}

#[cfg(test)]
mod tests {
    use super::*;

    // Two-point family on {0, 1}: log Z = log(1 + e^{-l}), E[J] = 1 / (1 + e^l).
    fn bernoulli(l: &[f64]) -> Result<DualPoint> {
        let p = 1.0 / (1.0 + l[0].exp());
        Ok(DualPoint {
            log_z: (1.0 + (-l[0]).exp()).ln(),
            mean: DVector::from_element(1, p),
            cov: DMatrix::from_element(1, 1, p * (1.0 - p)),
        })
    }

    #[test]
    fn bernoulli_multiplier() {
        let sol = minimize_dual(&[0.7], bernoulli).unwrap();
        assert!((sol.multipliers[0] - (0.3f64 / 0.7).ln()).abs() < 1e-9);
        assert!(sol.grad_norm < GRADIENT_TOL);
        assert!(sol.objective.windows(2).all(|w| w[1] <= w[0] + 1e-13));
    }

    #[test]
    fn unattainable_target_is_infeasible() {
        match minimize_dual(&[1.5], bernoulli) {
            Err(Error::Infeasible { grad_norm, .. }) => assert!(grad_norm > 0.4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn collinear_observables_use_fallback() {
        // J = (s, 2 s) on the same Bernoulli state.
        let eval = |l: &[f64]| {
            let e = l[0] + 2.0 * l[1];
            let p = 1.0 / (1.0 + e.exp());
            let v = p * (1.0 - p);
            Ok(DualPoint {
                log_z: (1.0 + (-e).exp()).ln(),
                mean: DVector::from_vec(vec![p, 2.0 * p]),
                cov: DMatrix::from_row_slice(2, 2, &[v, 2.0 * v, 2.0 * v, 4.0 * v]),
            })
        };
        let sol = minimize_dual(&[0.25, 0.5], eval).unwrap();
        let e = sol.multipliers[0] + 2.0 * sol.multipliers[1];
        assert!((1.0 / (1.0 + e.exp()) - 0.25).abs() < 1e-10);
    }
}
