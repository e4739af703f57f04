//! Maximum-caliber path measure for a 3-state chain over 3 steps, checked
//! against path enumeration and the Gibbs-chain factorization.

use fk_functor::maxcal::{
    brute_force_paths, caliber, gluing_factorization_check, maxcal_solve, total_variation, Builtin, CaliberProblem,
    Observable,
};
use nalgebra::DMatrix;

fn main() -> fk_functor::Result<()> {
    let base = DMatrix::from_row_slice(3, 3, &[0.6, 0.3, 0.1, 0.2, 0.5, 0.3, 0.1, 0.3, 0.6]);
    let problem = CaliberProblem::new(
        3,
        3,
        vec![
            Observable::new(1, Builtin::Identity.tabulate(3)),
            Observable::new(3, Builtin::Square.tabulate(3)),
        ],
        vec![0.8, 1.5],
    )
    .with_base_kernel(base);

    let sol = maxcal_solve(&problem)?;
    println!("multipliers {:?}", sol.multipliers);
    println!("constraint residuals {:?}", sol.residuals);

    let brute = brute_force_paths(&problem, &sol.multipliers)?;
    println!(
        "TV vs enumeration of 81 paths: {:e}",
        total_variation(&sol.measure, &brute)?
    );
    println!("gluing {:?}", gluing_factorization_check(&sol.measure)?);
    println!(
        "caliber relative to base: {:.6}",
        caliber(&sol.measure, &problem.base_measure()?)?
    );
    sol.measure.write_marginals_csv(std::io::stdout().lock())?;
    Ok(())
}
