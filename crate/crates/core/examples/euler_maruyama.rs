//! Reproducible Euler-Maruyama ensembles: per-time summary of an OU ensemble
//! and a check that the same seed gives the same paths.

use fk_functor::feynman_kac_mc::{euler_maruyama, simulate, EmSettings, InitialCondition, SdeSpec};
use fk_functor::parameter_flow::OuParams;

fn main() -> fk_functor::Result<()> {
    let p = OuParams::new(2.0, 0.5, 1.0)?;
    let sde = SdeSpec::ou(p);
    let settings = EmSettings::new(0.0, 3.0, 1e-3, 20_000, 2024).record_every(500);
    let ens = simulate(&sde, InitialCondition::Point(0.0), &settings)?;
    ens.write_summary_csv(std::io::stdout().lock())?;

    let a = euler_maruyama(&sde, 0.0, 0.0, 1.0, 1e-2, 100, 9)?;
    let b = euler_maruyama(&sde, 0.0, 0.0, 1.0, 1e-2, 100, 9)?;
    eprintln!("same seed, same ensemble: {}", a == b);
    Ok(())
}
