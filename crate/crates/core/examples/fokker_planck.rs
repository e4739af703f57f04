//! Forward Kolmogorov solve for an OU density, compared with the Gaussian
//! given by the moment flow. Prints `q,pde,exact` at t = 1.

use fk_functor::generator_pde::{cfl_limit, solve_forward, GeneratorSpec, PdeProblem};
use fk_functor::parameter_flow::{ou_moment_flow, OuParams, ParamPoint};
use fk_functor::stat_manifold::{gaussian_pdf, Grid, GridDensity};

fn main() -> fk_functor::Result<()> {
    let p = OuParams::new(1.0, 0.0, 1.0)?;
    let grid = Grid::with_spacing(-8.0, 8.0, 0.02)?;
    let p0 = GridDensity::sample_normalized(grid, |q| gaussian_pdf(q, 2.0, 0.25))?;
    let dt = 0.9 * cfl_limit(grid.dx(), &[p.b * 8.0], &[p.lambda]);

    let sol = solve_forward(&PdeProblem::forward(GeneratorSpec::ou(p), p0, 0.0, 1.0, dt).record_every(1000))?;
    let x1 = ou_moment_flow(p, &ParamPoint::gaussian(2.0, 0.25)?, 1.0)?;
    let exact = GridDensity::sample_normalized(grid, |q| gaussian_pdf(q, x1.mean(), x1.variance()))?;
    let last = sol.last();
    eprintln!(
        "{} snapshots; mass {:.8}; mean {:.5} vs {:.5}; variance {:.5} vs {:.5}; L1 {:.2e}",
        sol.len(),
        last.mass(),
        last.mean(),
        x1.mean(),
        last.variance(),
        x1.variance(),
        last.l1_distance(&exact)?
    );
    println!("q,pde,exact");
    for (i, q) in grid.points().enumerate().step_by(25) {
        println!("{q},{},{}", last.values()[i], exact.values()[i]);
    }
    Ok(())
}
