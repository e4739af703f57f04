//! Chapman-Kolmogorov (sewing) residuals: an exact finite chain, exact OU
//! kernels discretized on cells, and a kernel estimated from sampled paths.

use fk_functor::feynman_kac_mc::{estimate_kernel, ou_cell_kernel, sewing_check, SdeSpec, TransitionKernel};
use fk_functor::parameter_flow::OuParams;
use fk_functor::stat_manifold::Grid;
use nalgebra::DMatrix;

fn main() -> fk_functor::Result<()> {
    let p = DMatrix::from_row_slice(3, 3, &[0.5, 0.3, 0.2, 0.1, 0.8, 0.1, 0.25, 0.25, 0.5]);
    let k = TransitionKernel::new(p.clone(), 1.0)?;
    let chain = sewing_check(&k, &k, &TransitionKernel::new(&p * &p, 2.0)?)?;
    println!("3-state chain residual {chain:e}");

    let ou = OuParams::new(1.0, 0.0, 1.0)?;
    for dx in [0.1, 0.05, 0.025] {
        let edges = Grid::with_spacing(-12.0, 12.0, dx)?;
        let half = ou_cell_kernel(ou, edges, 0.25)?;
        let full = ou_cell_kernel(ou, edges, 0.5)?;
        println!("OU cells dx = {dx}: residual {:e}", sewing_check(&half, &half, &full)?);
    }

    let edges = Grid::with_spacing(-6.0, 6.0, 0.5)?;
    let est = estimate_kernel(&SdeSpec::ou(ou), edges, 0.0, 0.25, 1e-3, 2_000, 3)?;
    let exact = ou_cell_kernel(ou, edges, 0.25)?;
    let worst = fk_functor::feynman_kac_mc::row_total_variation(est.matrix(), exact.matrix());
    println!("estimated vs exact OU kernel, worst row TV {worst:.4}");
    Ok(())
}
