//! The three routes from an initial Gaussian to the density at time t: flow the
//! parameters, solve Fokker-Planck, or sample the SDE. Prints their L1 gaps.

use fk_functor::feynman_kac_mc::{verify_functor, FunctorSettings};
use fk_functor::parameter_flow::{OuParams, ParamPoint};
use fk_functor::Process;

fn main() -> fk_functor::Result<()> {
    let cases = [
        (
            Process::Ou(OuParams::new(1.0, 0.0, 1.0)?),
            ParamPoint::gaussian(1.0, 1.0)?,
            1.0,
        ),
        (
            Process::Wiener { b: 1.0, lambda: 1.0 },
            ParamPoint::gaussian(0.0, 0.01)?,
            0.5,
        ),
    ];
    for (process, x0, t) in cases {
        let report = verify_functor(process, &x0, t, FunctorSettings::default())?;
        println!(
            "{process:?} from {x0} to t = {t} (KDE bandwidth {:.4})",
            report.bandwidth
        );
        for (name, value, tol) in report.checks() {
            println!("  {name}: {value:.3e} (tolerance {tol})");
        }
        println!("  commutes: {}", report.passed());
    }
    Ok(())
}
