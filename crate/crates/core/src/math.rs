//! Scalar helpers shared by the solvers and evaluators.

#[cfg(not(feature = "std"))]
pub(crate) use libm::{atan2, ceil, cos, exp, expm1, log, log1p, sqrt};

#[cfg(feature = "std")]
pub(crate) use self::native::*;

/// Platform math through `std`, which lowers `sqrt` and friends to hardware
/// instructions.
#[cfg(feature = "std")]
mod native {
    #[inline]
    pub(crate) fn sqrt(x: f64) -> f64 {
        x.sqrt()
    }
    #[inline]
    pub(crate) fn exp(x: f64) -> f64 {
        x.exp()
    }
    #[inline]
    pub(crate) fn expm1(x: f64) -> f64 {
        x.exp_m1()
    }
    #[inline]
    pub(crate) fn log(x: f64) -> f64 {
        x.ln()
    }
    #[inline]
    pub(crate) fn log1p(x: f64) -> f64 {
        x.ln_1p()
    }
    #[inline]
    pub(crate) fn ceil(x: f64) -> f64 {
        x.ceil()
    }
    #[inline]
    pub(crate) fn cos(x: f64) -> f64 {
        x.cos()
    }
    #[inline]
    pub(crate) fn atan2(y: f64, x: f64) -> f64 {
        y.atan2(x)
    }
}

/// `sqrt(x^2 + eps^2) - eps`, zero at the origin.
#[inline]
pub(crate) fn charbonnier(x: f64, eps: f64) -> f64 {
    sqrt(x * x + eps * eps) - eps
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn logit(p: f64) -> f64 {
    log(p / (1.0 - p))
}

/// `softplus(x)` together with its derivative `sigmoid(x)`, sharing one `exp`.
#[inline]
pub(crate) fn softplus_and_slope(x: f64) -> (f64, f64) {
    let e = exp(-x.abs());
    let value = x.max(0.0) + log1p(e);
    let slope = if x >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
    (value, slope)
}

/// Inverse of [`softplus`] for `y > 0`.
#[inline]
pub(crate) fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        log(expm1(y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_round_trip() {
        for &y in &[1e-6, 0.01, 0.5, 1.0, 7.0, 40.0] {
            let x = softplus_inv(y);
            assert!((softplus_and_slope(x).0 - y).abs() <= 1e-12 * y.max(1.0), "{y}");
        }
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(800.0), 1.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-16);
        assert!((sigmoid(logit(0.3)) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn charbonnier_vanishes_at_zero() {
        assert_eq!(charbonnier(0.0, 1e-3), 0.0);
        assert!((charbonnier(1.0, 1e-3) - ((1.0f64 + 1e-6).sqrt() - 1e-3)).abs() < 1e-9);
    }
}
