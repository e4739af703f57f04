//! Flows on the parameter space of sufficient statistics.
//!
//! A point here is a small vector of moments, for Gaussian families the pair
//! `(m, s)` of mean and variance. The SDEs of interest induce ordinary
//! differential equations on these moments, and their solutions form a
//! one-parameter group `phi_s . phi_t = phi_{t+s}` whenever the vector field is
//! autonomous.
//!
//! Diffusion convention shared by every module: the SDE
//! `dY = drift dt + sqrt(2 lambda) dW` has noise intensity `lambda = sigma^2 / 2`
//! and generator `drift d/dq + lambda d^2/dq^2`.

use std::fmt;
use std::sync::Arc;

use crate::error::{ensure_finite, ensure_non_negative, ensure_positive, Error, Result};
use crate::stepping::fixed_steps;

/// Densities are never built from a variance below this.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Default fixed RK4 step.
pub const DEFAULT_DT: f64 = 1e-3;

/// A vector of sufficient statistics identifying a density.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPoint(Vec<f64>);

impl ParamPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Dimension { expected: 1, got: 0 });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("parameter point {coords:?}")));
        }
        Ok(Self(coords))
    }

    /// Gaussian moments `(mean, variance)`. A zero variance is allowed here
    /// (deterministic starts); building a density from it is not.
    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        ensure_finite("mean", mean)?;
        ensure_non_negative("variance", variance)?;
        Ok(Self(vec![mean, variance]))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn mean(&self) -> f64 {
        self.0[0]
    }

    /// Second coordinate; only meaningful for Gaussian points.
    pub fn variance(&self) -> f64 {
        self.0[1]
    }

    pub fn sup_distance(&self, other: &ParamPoint) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn expect_gaussian(&self) -> Result<()> {
        if self.dim() != 2 {
            return Err(Error::Dimension {
                expected: 2,
                got: self.dim(),
            });
        }
        ensure_non_negative("variance", self.variance())
    }
}

impl fmt::Display for ParamPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Ornstein-Uhlenbeck process `dY = -b (Y - k) dt + sqrt(2 lambda) dW`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OuParams {
    pub b: f64,
    pub k: f64,
    pub lambda: f64,
}

impl OuParams {
    pub fn new(b: f64, k: f64, lambda: f64) -> Result<Self> {
        ensure_positive("b", b)?;
        ensure_finite("k", k)?;
        ensure_positive("lambda", lambda)?;
        Ok(Self { b, k, lambda })
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.b, self.k, self.lambda).map(|_| ())
    }

    pub fn sigma(&self) -> f64 {
        (2.0 * self.lambda).sqrt()
    }

    /// The `t -> infinity` limit `(k, lambda / b)`.
    pub fn stationary(&self) -> ParamPoint {
        ParamPoint(vec![self.k, self.lambda / self.b])
    }

    /// Mean and variance of `Y_{t+h}` given `Y_t = q`.
    pub fn transition_moments(&self, q: f64, h: f64) -> (f64, f64) {
        let decay = (-self.b * h).exp();
        let mean = decay * q + self.k * (1.0 - decay);
        let var = self.lambda / self.b * (-(-2.0 * self.b * h).exp_m1());
        (mean, var)
    }
}

type VectorField = Arc<dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync>;
type ClosedForm = Arc<dyn Fn(&ParamPoint, f64) -> Result<ParamPoint> + Send + Sync>;

/// A vector field on the parameter space, optionally paired with its exact flow.
#[derive(Clone)]
pub struct FlowSpec {
    dim: usize,
    field: VectorField,
    closed_form: Option<ClosedForm>,
    autonomous: bool,
}

impl fmt::Debug for FlowSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FlowSpec")
            .field("dim", &self.dim)
            .field("closed_form", &self.closed_form.is_some())
            .field("autonomous", &self.autonomous)
            .finish()
    }
}

impl FlowSpec {
    /// Time-homogeneous field `x' = f(x)`.
    pub fn autonomous<F>(dim: usize, field: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            field: Arc::new(move |x, _t| field(x)),
            closed_form: None,
            autonomous: true,
        }
    }

    /// Time-inhomogeneous field `x' = f(x, t)`.
    pub fn time_dependent<F>(dim: usize, field: F) -> Self
    where
        F: Fn(&[f64], f64) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            field: Arc::new(field),
            closed_form: None,
            autonomous: false,
        }
    }

    pub fn with_closed_form<F>(mut self, flow: F) -> Self
    where
        F: Fn(&ParamPoint, f64) -> Result<ParamPoint> + Send + Sync + 'static,
    {
        self.closed_form = Some(Arc::new(flow));
        self
    }

    pub fn without_closed_form(mut self) -> Self {
        self.closed_form = None;
        self
    }

    /// OU moments. The field comes from the exact system
    /// `m' = -b (m - k)`, `M2' = -2b M2 + 2bk m + 2 lambda` with `s = M2 - m^2`.
    pub fn ou(params: OuParams) -> Self {
        let OuParams { b, k, lambda } = params;
        Self::autonomous(2, move |x| {
            let (m, s) = (x[0], x[1]);
            let second = s + m * m;
            let dm = -b * (m - k);
            let d_second = -2.0 * b * second + 2.0 * b * k * m + 2.0 * lambda;
            vec![dm, d_second - 2.0 * m * dm]
        })
        .with_closed_form(move |x0, t| ou_moment_flow(params, x0, t))
    }

    /// Moments of `dY = -b dt + sqrt(2 lambda) dW`.
    pub fn wiener(b: f64, lambda: f64) -> Self {
        Self::autonomous(2, move |_| vec![-b, 2.0 * lambda])
            .with_closed_form(move |x0, t| wiener_moment_flow(b, lambda, x0, t))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_autonomous(&self) -> bool {
        self.autonomous
    }

    pub fn has_closed_form(&self) -> bool {
        self.closed_form.is_some()
    }

    pub fn velocity(&self, x: &[f64], t: f64) -> Vec<f64> {
        (self.field)(x, t)
    }

    /// `phi_t(x0)`: the closed form when available, RK4 at [`DEFAULT_DT`] otherwise.
    pub fn evolve(&self, x0: &ParamPoint, t: f64) -> Result<ParamPoint> {
        match &self.closed_form {
            Some(flow) => {
                ensure_non_negative("t", t)?;
                flow(x0, t)
            }
            None => integrate_flow(self, x0, t, DEFAULT_DT),
        }
    }

    pub fn closed_form(&self, x0: &ParamPoint, t: f64) -> Option<Result<ParamPoint>> {
        self.closed_form.as_ref().map(|flow| flow(x0, t))
    }
}

/// Exact OU moments at time `t`.
///
/// `m(t) = e^{-bt} m0 + k (1 - e^{-bt})` and
/// `s(t) = s0 e^{-2bt} + (lambda / b)(1 - e^{-2bt})`.
pub fn ou_moment_flow(params: OuParams, x0: &ParamPoint, t: f64) -> Result<ParamPoint> {
    params.validate()?;
    ensure_non_negative("t", t)?;
    x0.expect_gaussian()?;
    let OuParams { b, k, lambda } = params;
    let decay = (-b * t).exp();
    let decay2 = (-2.0 * b * t).exp();
    let m = decay * x0.mean() + k * (1.0 - decay);
    let s = x0.variance() * decay2 - lambda / b * (-2.0 * b * t).exp_m1();
    ParamPoint::new(vec![m, s])
}

/// Moments of the drifted Wiener process: `(m0 - b t, s0 + 2 lambda t)`.
pub fn wiener_moment_flow(b: f64, lambda: f64, x0: &ParamPoint, t: f64) -> Result<ParamPoint> {
    ensure_finite("b", b)?;
    ensure_positive("lambda", lambda)?;
    ensure_non_negative("t", t)?;
    x0.expect_gaussian()?;
    ParamPoint::new(vec![x0.mean() - b * t, x0.variance() + 2.0 * lambda * t])
}

/// Fixed-step classical RK4 from 0 to `t`. The step is shrunk so that an
/// integer number of steps lands exactly on `t`.
pub fn integrate_flow(spec: &FlowSpec, x0: &ParamPoint, t: f64, dt: f64) -> Result<ParamPoint> {
    ensure_non_negative("t", t)?;
    ensure_positive("dt", dt)?;
    if x0.dim() != spec.dim {
        return Err(Error::Dimension {
            expected: spec.dim,
            got: x0.dim(),
        });
    }
    if t == 0.0 {
        return Ok(x0.clone());
    }

    let (steps, h) = fixed_steps(t, dt)?;

    let n = spec.dim;
    let mut x = x0.coords().to_vec();
    let mut tmp = vec![0.0; n];
    for i in 0..steps {
        let ti = i as f64 * h;
        let k1 = spec.velocity(&x, ti);
        for j in 0..n {
            tmp[j] = x[j] + 0.5 * h * k1[j];
        }
        let k2 = spec.velocity(&tmp, ti + 0.5 * h);
        for j in 0..n {
            tmp[j] = x[j] + 0.5 * h * k2[j];
        }
        let k3 = spec.velocity(&tmp, ti + 0.5 * h);
        for j in 0..n {
            tmp[j] = x[j] + h * k3[j];
        }
        let k4 = spec.velocity(&tmp, ti + h);
        for j in 0..n {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationBlowup { time: ti + h });
        }
    }
    ParamPoint::new(x)
}

/// `|| phi_s(phi_t(x0)) - phi_{t+s}(x0) ||_inf` using [`FlowSpec::evolve`].
pub fn check_group_law(spec: &FlowSpec, x0: &ParamPoint, t: f64, s: f64) -> Result<f64> {
    if !spec.is_autonomous() {
        return Err(Error::TimeDependentField);
    }
    ensure_non_negative("t", t)?;
    ensure_non_negative("s", s)?;
    let composed = spec.evolve(&spec.evolve(x0, t)?, s)?;
    let direct = spec.evolve(x0, t + s)?;
    Ok(composed.sup_distance(&direct))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ou(b: f64, k: f64, lambda: f64) -> OuParams {
        OuParams::new(b, k, lambda).unwrap()
    }

    fn pt(m: f64, s: f64) -> ParamPoint {
        ParamPoint::gaussian(m, s).unwrap()
    }

    #[test]
    fn ou_identity_at_zero() {
        let x = ou_moment_flow(ou(1.0, 0.0, 1.0), &pt(1.0, 0.5), 0.0).unwrap();
        assert_eq!(x, pt(1.0, 0.5));
    }

    #[test]
    fn ou_mean_at_one() {
        let x = ou_moment_flow(ou(1.0, 0.0, 1.0), &pt(1.0, 0.0), 1.0).unwrap();
        assert_abs_diff_eq!(x.mean(), 0.367_879_441_171_442_3, epsilon = 1e-12);
        // RK4 on the raw moment ODEs agrees.
        let rk = integrate_flow(&FlowSpec::ou(ou(1.0, 0.0, 1.0)), &pt(1.0, 0.0), 1.0, 1e-3).unwrap();
        assert!(rk.sup_distance(&x) < 1e-10);
    }

    #[test]
    fn ou_stationary_limit() {
        for p in [ou(1.0, 0.0, 1.0), ou(2.0, 0.5, 1.0), ou(0.7, -3.0, 0.2)] {
            let x = ou_moment_flow(p, &pt(4.0, 2.0), 200.0).unwrap();
            assert!(x.sup_distance(&p.stationary()) < 1e-12);
        }
    }

    #[test]
    fn ou_matches_printed_variance_when_centred() {
        // With m0 = k = 0 the printed formula s0 e^{-2bt} + (lambda/b)(1 - e^{-2bt}) - m(t)^2
        // is exact because m(t) = 0.
        let (b, lambda, s0, t) = (1.3, 0.8, 0.4, 0.9);
        let x = ou_moment_flow(ou(b, 0.0, lambda), &pt(0.0, s0), t).unwrap();
        let e2 = (-2.0 * b * t).exp();
        let printed = s0 * e2 + lambda / b * (1.0 - e2) - x.mean().powi(2);
        assert_abs_diff_eq!(x.variance(), printed, epsilon = 1e-14);
    }

    #[test]
    fn ou_rejects_bad_input() {
        let p = ou(1.0, 0.0, 1.0);
        assert!(ou_moment_flow(p, &pt(0.0, 1.0), -1.0).is_err());
        assert!(ou_moment_flow(p, &pt(0.0, 1.0), f64::NAN).is_err());
        assert!(OuParams::new(0.0, 0.0, 1.0).is_err());
        assert!(OuParams::new(1.0, f64::INFINITY, 1.0).is_err());
        assert!(ParamPoint::gaussian(f64::NAN, 1.0).is_err());
        assert!(ParamPoint::gaussian(0.0, -1.0).is_err());
    }

    #[test]
    fn wiener_examples() {
        assert_eq!(wiener_moment_flow(0.0, 1.0, &pt(0.0, 1.0), 0.0).unwrap(), pt(0.0, 1.0));
        let x = wiener_moment_flow(1.0, 1.0, &pt(0.0, 0.0), 2.0).unwrap();
        assert_eq!(x, pt(-2.0, 4.0));
        assert!(wiener_moment_flow(1.0, 0.0, &pt(0.0, 0.0), 2.0).is_err());
        assert!(wiener_moment_flow(1.0, 1.0, &pt(0.0, 0.0), -2.0).is_err());
    }

    #[test]
    fn wiener_matches_fokker_planck_solution_moments() {
        // exp(-(q - q0 + b t)^2 / (4 lambda t)) is Gaussian with mean q0 - b t
        // and variance 2 lambda t; integrate its moments numerically.
        let (b, lambda, q0, t) = (1.0, 0.5, 0.3, 1.7);
        let x = wiener_moment_flow(b, lambda, &pt(q0, 0.0), t).unwrap();
        let dq = 1e-3;
        let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for i in -20_000..=20_000 {
            let q = i as f64 * dq;
            let w = (-(q - q0 + b * t).powi(2) / (4.0 * lambda * t)).exp();
            z += w;
            m1 += w * q;
            m2 += w * q * q;
        }
        let mean = m1 / z;
        assert_abs_diff_eq!(x.mean(), mean, epsilon = 1e-9);
        assert_abs_diff_eq!(x.variance(), m2 / z - mean * mean, epsilon = 1e-9);
    }

    #[test]
    fn integrate_zero_field_is_identity() {
        let spec = FlowSpec::autonomous(3, |_| vec![0.0; 3]);
        let x0 = ParamPoint::new(vec![1.0, -2.0, 3.5]).unwrap();
        assert_eq!(integrate_flow(&spec, &x0, 5.0, 1e-2).unwrap(), x0);
    }

    #[test]
    fn integrate_ou_matches_closed_form() {
        let spec = FlowSpec::ou(ou(1.0, 0.0, 1.0));
        let x0 = pt(1.0, 1.0);
        let rk = integrate_flow(&spec, &x0, 1.0, 1e-3).unwrap();
        let exact = spec.closed_form(&x0, 1.0).unwrap().unwrap();
        assert!(rk.sup_distance(&exact) < 1e-9);
    }

    #[test]
    fn integrate_exponential() {
        let spec = FlowSpec::autonomous(1, |x| vec![x[0]]);
        let x = integrate_flow(&spec, &ParamPoint::new(vec![1.0]).unwrap(), 1.0, 1e-3).unwrap();
        assert_abs_diff_eq!(x.coords()[0], std::f64::consts::E, epsilon = 1e-9);
    }

    #[test]
    fn integrate_errors() {
        let spec = FlowSpec::autonomous(1, |x| vec![x[0] * x[0]]);
        let x0 = ParamPoint::new(vec![1.0]).unwrap();
        // x' = x^2 from 1 blows up at t = 1.
        match integrate_flow(&spec, &x0, 2.0, 1e-2) {
            Err(Error::IntegrationBlowup { time }) => assert!(time > 0.9 && time <= 2.0),
            other => panic!("expected blowup, got {other:?}"),
        }
        assert!(matches!(
            integrate_flow(&spec, &x0, 1e6, 1e-6),
            Err(Error::StepOverflow { .. })
        ));
        assert!(integrate_flow(&spec, &x0, 1.0, 0.0).is_err());
        assert!(integrate_flow(&spec, &pt(0.0, 1.0), 1.0, 1e-3).is_err());
    }

    #[test]
    fn group_law_examples() {
        let spec = FlowSpec::ou(ou(1.0, 0.0, 1.0));
        let x0 = pt(1.0, 1.0);
        assert_eq!(check_group_law(&spec, &x0, 0.0, 0.0).unwrap(), 0.0);
        assert!(check_group_law(&spec, &x0, 0.3, 0.7).unwrap() < 1e-12);
        let rk = spec.clone().without_closed_form();
        assert!(check_group_law(&rk, &x0, 0.3, 0.7).unwrap() < 1e-8);
    }

    #[test]
    fn group_law_rejects_time_dependent() {
        let spec = FlowSpec::time_dependent(1, |x, t| vec![t * x[0]]);
        let x0 = ParamPoint::new(vec![1.0]).unwrap();
        assert!(matches!(
            check_group_law(&spec, &x0, 0.1, 0.2),
            Err(Error::TimeDependentField)
        ));
    }

    #[test]
    fn rk4_order_on_ou() {
        // Stiff-ish rate so the truncation error sits well above round-off.
        let p = ou(4.0, 0.5, 1.0);
        let spec = FlowSpec::ou(p);
        let x0 = pt(2.0, 0.1);
        let exact = ou_moment_flow(p, &x0, 1.0).unwrap();
        let errs: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|&dt| integrate_flow(&spec, &x0, 1.0, dt).unwrap().sup_distance(&exact))
            .collect();
        let order = (errs[0] / errs[2]).log2() / 2.0;
        assert!(order >= 3.8, "order {order}, errors {errs:?}");
    }

    proptest! {
        #[test]
        fn closed_form_group_law(
            m in -5.0..5.0f64, s in 0.0..5.0f64,
            t in 0.0..5.0f64, u in 0.0..5.0f64,
            b in 0.1..3.0f64, k in -2.0..2.0f64, lambda in 0.1..3.0f64,
        ) {
            let spec = FlowSpec::ou(ou(b, k, lambda));
            prop_assert!(check_group_law(&spec, &pt(m, s), t, u).unwrap() < 1e-12);
            let w = FlowSpec::wiener(b, lambda);
            prop_assert!(check_group_law(&w, &pt(m, s), t, u).unwrap() < 1e-12);
        }

        #[test]
        fn ou_converges_monotonically(
            m in -5.0..5.0f64, s in 0.0..5.0f64,
            b in 0.1..3.0f64, k in -2.0..2.0f64, lambda in 0.1..3.0f64,
            t in 0.0..10.0f64, dt in 0.01..2.0f64,
        ) {
            let p = ou(b, k, lambda);
            let t = t + 1.0 / b;
            let near = ou_moment_flow(p, &pt(m, s), t).unwrap();
            let later = ou_moment_flow(p, &pt(m, s), t + dt).unwrap();
            let stat = p.stationary();
            prop_assert!(later.sup_distance(&stat) <= near.sup_distance(&stat) + 1e-15);
        }

        #[test]
        fn ou_variance_stays_positive(
            m in -5.0..5.0f64, s in 0.0..5.0f64,
            b in 0.1..3.0f64, lambda in 0.01..3.0f64, t in 1e-6..10.0f64,
        ) {
            let x = ou_moment_flow(ou(b, 0.0, lambda), &pt(m, s), t).unwrap();
            prop_assert!(x.variance() > 0.0);
            let w = wiener_moment_flow(b, lambda, &pt(m, s), t).unwrap();
            prop_assert!(w.variance() > 0.0);
        }
    }
}
