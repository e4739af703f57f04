//! Gaussian parameter points as exponential-family densities: log partition,
//! entropy, and the density path traced by a moment flow.

use fk_functor::parameter_flow::{FlowSpec, OuParams, ParamPoint};
use fk_functor::stat_manifold::{density_from_params, entropy, log_partition, pushforward_path, Domain, PotentialSet};

fn main() -> fk_functor::Result<()> {
    let x = ParamPoint::gaussian(1.0, 2.0)?;
    let d = density_from_params(&x)?;
    println!("weights for (q, q^2): {:?}", d.weights());
    println!("log Z = {:.10}", d.log_partition());

    let direct = log_partition(
        &PotentialSet::gaussian(),
        d.weights(),
        Domain::truncated(-20.0, 22.0),
        1e-3,
    )?;
    println!("log Z on a wider grid = {direct:.10}");

    let on_grid = d.sample_on(d.default_grid()?)?;
    let exact = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * 2.0).ln();
    println!("entropy {:.10} (closed form {exact:.10})", entropy(&on_grid)?);

    let flow = FlowSpec::ou(OuParams::new(1.0, 0.0, 1.0)?);
    let times = [0.0, 0.5, 1.0, 2.0, 4.0];
    for (t, p) in times.iter().zip(pushforward_path(&flow, &x, &times)?) {
        let m = p.gaussian_moments().expect("gaussian family");
        println!("t = {t}: mean {:.6}, variance {:.6}", m.0, m.1);
    }
    Ok(())
}
