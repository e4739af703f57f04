use crate::error::{Error, Result};

pub(crate) const MAX_STEPS: u64 = 1_000_000_000;

/// Number of fixed steps covering `span` with step at most `dt` (up to
/// round-off), and the exact step that lands on `span`.
pub(crate) fn fixed_steps(span: f64, dt: f64) -> Result<(usize, f64)> {
    if span == 0.0 {
        return Ok((0, dt));
    }
    let ratio = span / dt;
    let nearest = ratio.round();
    let steps = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest.max(1.0)
    } else {
        ratio.ceil()
    };
    if !steps.is_finite() || steps > MAX_STEPS as f64 {
        return Err(Error::StepOverflow {
            steps,
            limit: MAX_STEPS,
        });
    }
    Ok((steps as usize, span / steps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lands_on_span() {
        assert_eq!(fixed_steps(1.0, 1e-3).unwrap().0, 1000);
        let (n, h) = fixed_steps(1.0, 0.3).unwrap();
        assert_eq!(n, 4);
        assert!((h - 0.25).abs() < 1e-15);
        assert_eq!(fixed_steps(0.0, 0.1).unwrap().0, 0);
        assert!(fixed_steps(1e6, 1e-6).is_err());
    }
}
