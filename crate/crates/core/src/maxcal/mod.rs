//! Maximum-entropy densities on a grid and maximum-caliber measures on paths
//! of a finite Markov chain.
//!
//! Both solve the same dual: minimise `log Z(lambda) + lambda . c` where the
//! solution is `base * exp(-lambda . J) / Z`. Larger `lambda_i` suppresses
//! large `J_i`.

mod caliber;
mod dual;
mod maxent;

pub use caliber::{
    brute_force_paths, caliber, feasible_perturbations, gluing_factorization_check, maxcal_solve, total_variation,
    Builtin, CaliberDocument, CaliberProblem, CaliberSolution, ExplicitMeasure, FactoredMeasure, GluingReport,
    Observable, ObservableSpec, ObservableValues, PathMeasure, MAX_ENUMERATED_PATHS, MAX_FACTORED_STATES,
};
pub use dual::{GRADIENT_TOL, MAX_ITERATIONS};
pub use maxent::{maxent_density, MaxEntProblem, MaxEntSolution};

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;

    use super::*;
    use crate::stat_manifold::{Grid, Potential};

    // One step from a fixed start whose kernel row is the trapezoid measure
    // reproduces the grid max-ent problem.
    #[test]
    fn one_step_caliber_is_maxent() {
        let grid = Grid::with_spacing(-5.0, 5.0, 0.05).unwrap();
        let n = grid.len();
        let square = |q: f64| q * q;
        let dense = maxent_density(&MaxEntProblem::new(
            grid,
            vec![Potential::new("q^2", square)],
            vec![0.8],
        ))
        .unwrap();

        let mut w: Vec<f64> = vec![1.0; n];
        w[0] = 0.5;
        w[n - 1] = 0.5;
        let total: f64 = w.iter().sum();
        let kernel = DMatrix::from_fn(n, n, |_, j| w[j] / total);
        let values: Vec<f64> = grid.points().map(square).collect();
        let problem = CaliberProblem::new(n, 1, vec![Observable::new(1, values)], vec![0.8]).with_base_kernel(kernel);
        let sol = maxcal_solve(&problem).unwrap();

        assert!((sol.multipliers[0] - dense.multipliers[0]).abs() < 1e-8);
        let last = &sol.measure.marginals()[1];
        for (i, p) in last.iter().enumerate() {
            let from_density = dense.density.values()[i] * w[i] * grid.dx();
            assert!((p - from_density).abs() < 1e-10);
        }
    }
}
