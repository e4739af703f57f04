//! Maximum-entropy densities on a grid: mean and variance constraints give a
//! Gaussian, and a single quadratic constraint gives the OU equilibrium.

use fk_functor::maxcal::{maxent_density, MaxEntProblem};
use fk_functor::stat_manifold::{gaussian_pdf, Grid, GridDensity, Potential};

fn main() -> fk_functor::Result<()> {
    let grid = Grid::with_spacing(-12.0, 12.0, 0.01)?;
    let problem = MaxEntProblem::new(
        grid,
        vec![Potential::new("q", |q| q), Potential::new("q^2", |q| q * q)],
        vec![0.0, 1.0],
    );
    let sol = maxent_density(&problem)?;
    let exact = GridDensity::sample_normalized(grid, |q| gaussian_pdf(q, 0.0, 1.0))?;
    println!("multipliers {:?}", sol.multipliers);
    println!("L-inf vs N(0,1): {:e}", sol.density.sup_distance(&exact)?);
    println!("Newton iterations: {}", sol.dual_objective.len() - 1);

    // OU with b = 2, k = 0.5, lambda = 1: E[(q - k)^2] = lambda / b.
    let (b, k, lambda) = (2.0, 0.5, 1.0);
    let problem = MaxEntProblem::new(
        grid,
        vec![Potential::new("(q-k)^2", move |q| (q - k) * (q - k))],
        vec![lambda / b],
    );
    let sol = maxent_density(&problem)?;
    println!(
        "OU multiplier {:.10} (b / 2 lambda = {})",
        sol.multipliers[0],
        b / (2.0 * lambda)
    );
    Ok(())
}
