//! `(P_h f - f) / h` against the generator `A f` as `h` shrinks, for an OU
//! kernel evaluated on grid points.

use fk_functor::feynman_kac_mc::ou_point_kernel;
use fk_functor::generator_pde::{apply_generator, dynkin_residual, GeneratorSpec};
use fk_functor::parameter_flow::OuParams;
use fk_functor::stat_manifold::{Grid, GridFunction};

fn main() -> fk_functor::Result<()> {
    let p = OuParams::new(1.0, 0.0, 1.0)?;
    let gen = GeneratorSpec::ou(p);
    let grid = Grid::with_spacing(-6.0, 6.0, 0.005)?;
    let f = GridFunction::sample(grid, |q| (-q * q / 2.0).exp() * q.cos())?;

    let af = apply_generator(&gen, &f, 0.0)?;
    println!("A f at q = 0: {:.6} (exact -2)", af.interpolate(0.0).expect("on grid"));

    println!("h,residual");
    for h in [1e-1, 3e-2, 1e-2, 3e-3, 1e-3] {
        let k = ou_point_kernel(p, grid, h)?;
        println!("{h},{:e}", dynkin_residual(&k, &gen, &f, h)?);
    }
    Ok(())
}
