//! `u(q, 0) = E[f(Y_1) | Y_0 = q]` three ways for Brownian motion with
//! `lambda = 1/2` and `f` the N(0, 1) density: backward PDE, Monte Carlo, and
//! the closed form N(0, 2) density.

use fk_functor::feynman_kac_mc::{fk_estimate, SdeSpec};
use fk_functor::generator_pde::{cfl_limit, solve_backward, GeneratorSpec, PdeProblem};
use fk_functor::stat_manifold::{gaussian_pdf, Grid, GridFunction};

fn main() -> fk_functor::Result<()> {
    let lambda = 0.5;
    let f = |q: f64| gaussian_pdf(q, 0.0, 1.0);
    let grid = Grid::with_spacing(-10.0, 10.0, 0.02)?;
    let dt = 0.9 * cfl_limit(grid.dx(), &[0.0], &[lambda]);
    let pde = solve_backward(&PdeProblem::backward(
        GeneratorSpec::wiener(0.0, lambda),
        GridFunction::sample(grid, f)?,
        0.0,
        1.0,
        dt,
    ))?;

    let sde = SdeSpec::wiener(0.0, lambda);
    println!("q,closed_form,pde,fk,std_error");
    for i in 0..11 {
        let q = -2.5 + 0.5 * i as f64;
        let est = fk_estimate(&sde, f, q, 0.0, 1.0, 1e-2, 20_000, 11)?;
        let u = pde.first().interpolate(q).expect("q on grid");
        println!(
            "{q},{:.6},{u:.6},{:.6},{:.1e}",
            gaussian_pdf(q, 0.0, 2.0),
            est.value,
            est.std_error
        );
    }
    Ok(())
}
