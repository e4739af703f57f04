//! OU and Wiener moment flows: RK4 on the moment ODEs against the closed form,
//! and the group law of the flow.

use fk_functor::parameter_flow::{
    check_group_law, integrate_flow, ou_moment_flow, wiener_moment_flow, FlowSpec, OuParams, ParamPoint,
};

fn main() -> fk_functor::Result<()> {
    let p = OuParams::new(2.0, 0.5, 1.0)?;
    let x0 = ParamPoint::gaussian(3.0, 0.0)?;
    let spec = FlowSpec::ou(p);

    println!("t,mean,variance,rk4_error");
    for t in [0.0, 0.25, 0.5, 1.0, 2.0, 5.0, 20.0] {
        let exact = ou_moment_flow(p, &x0, t)?;
        let rk4 = integrate_flow(&spec, &x0, t, 1e-3)?;
        println!(
            "{t},{},{},{:e}",
            exact.mean(),
            exact.variance(),
            rk4.sup_distance(&exact)
        );
    }
    println!("stationary point {}", p.stationary());

    let w = wiener_moment_flow(1.0, 0.5, &ParamPoint::gaussian(0.0, 0.01)?, 2.0)?;
    println!("wiener b=1 lambda=0.5 at t=2: {w}");

    let residual = check_group_law(&spec, &x0, 0.7, 1.3)?;
    println!("group law residual phi_1.3(phi_0.7(x0)) vs phi_2(x0): {residual:e}");
    Ok(())
}
