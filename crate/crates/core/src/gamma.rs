//! Gamma-distribution tails and their inverse.
//!
//! The chi-square law with `N` degrees of freedom is `Gamma(N/2, 2)`, so
//! every threshold in the crate goes through these two functions.

use statrs::function::erf::erfc_inv;
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};

fn check_params(k: f64, theta: f64) -> Result<()> {
    if !(k > 0.0 && k.is_finite()) || !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::invalid(format!(
            "gamma parameters must be positive and finite (k={k}, theta={theta})"
        )));
    }
    Ok(())
}

/// `P(X > x)` for `X ~ Gamma(shape = k, scale = theta)`.
pub fn gamma_tail(k: f64, theta: f64, x: f64) -> Result<f64> {
    check_params(k, theta)?;
    if x.is_nan() || x == f64::NEG_INFINITY {
        return Err(Error::invalid(format!("gamma tail evaluated at {x}")));
    }
    if x == f64::INFINITY {
        return Ok(0.0);
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    Ok(gamma_ur(k, x / theta))
}

/// Regularized upper tail in standard (unit-scale) form.
fn upper(k: f64, y: f64) -> f64 {
    if y <= 0.0 {
        1.0
    } else {
        gamma_ur(k, y)
    }
}

fn ln_density(k: f64, y: f64, ln_gamma_k: f64) -> f64 {
    (k - 1.0) * y.ln() - y - ln_gamma_k
}

/// Returns `x` with `gamma_tail(k, theta, x) == q`.
pub fn gamma_tail_inverse(k: f64, theta: f64, q: f64) -> Result<f64> {
    check_params(k, theta)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("tail probability must lie in (0, 1), got {q}")));
    }
    Ok(theta * unit_tail_inverse(k, q))
}

fn unit_tail_inverse(k: f64, q: f64) -> f64 {
    let lgk = ln_gamma(k);

    // Wilson-Hilferty starting point.
    let z = std::f64::consts::SQRT_2 * erfc_inv(2.0 * q);
    let c = 1.0 / (9.0 * k);
    let mut y = k * (1.0 - c + z * c.sqrt()).powi(3);
    if !(y > 0.0) || !y.is_finite() {
        // Small-x expansion of the lower tail: P(k, y) ~ y^k / Gamma(k + 1).
        y = ((1.0 - q).ln() + ln_gamma(k + 1.0)).exp().powf(1.0 / k);
        if !(y > 0.0) || !y.is_finite() {
            y = k;
        }
    }

    // Bracket [lo, hi] with upper(lo) >= q >= upper(hi).
    let (mut lo, mut hi) = (0.0_f64, y.max(f64::MIN_POSITIVE));
    while upper(k, hi) > q {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::MAX;
        }
    }

    for _ in 0..200 {
        let f = upper(k, y) - q;
        if f.abs() <= 1e-15 * q {
            return y;
        }
        if f > 0.0 {
            lo = lo.max(y);
        } else {
            hi = hi.min(y);
        }
        // d/dy upper(k, y) = -density(y)
        let dens = ln_density(k, y, lgk).exp();
        let mut next = if dens > 0.0 { y + f / dens } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= 1e-16 * y.max(f64::MIN_POSITIVE) || hi - lo <= 1e-16 * hi {
            return next;
        }
        y = next;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Independent tail for integer shape: P(Gamma(n, 1) > y) equals the
    /// probability that a Poisson(y) variable is below n.
    fn integer_shape_tail(n: u32, y: f64) -> f64 {
        let mut term = (-y).exp();
        let mut sum = term;
        for m in 1..n {
            term *= y / m as f64;
            sum += term;
        }
        sum
    }

    #[test]
    fn tail_at_origin_is_one() {
        assert_eq!(gamma_tail(1.0, 2.0, 0.0).unwrap(), 1.0);
        assert_eq!(gamma_tail(3.0, 2.0, -5.0).unwrap(), 1.0);
    }

    #[test]
    fn exponential_tail_closed_form() {
        let x = 2.0 * 20.0_f64.ln();
        assert_relative_eq!(gamma_tail(1.0, 2.0, x).unwrap(), 0.05, max_relative = 1e-12);
    }

    #[test]
    fn tail_at_infinity_is_zero() {
        assert_eq!(gamma_tail(4.5, 0.3, f64::INFINITY).unwrap(), 0.0);
    }

    #[test]
    fn nan_argument_is_an_error() {
        assert!(gamma_tail(1.0, 1.0, f64::NAN).is_err());
        assert!(gamma_tail(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn matches_poisson_sum_for_integer_shapes() {
        for n in [1u32, 2, 5, 10, 25] {
            for y in [0.1, 1.0, 4.0, 10.0, 30.0] {
                let expected = integer_shape_tail(n, y);
                let got = gamma_tail(n as f64, 1.0, y).unwrap();
                assert_relative_eq!(got, expected, max_relative = 1e-10, epsilon = 1e-300);
            }
        }
    }

    #[test]
    fn chi_square_two_inverse_closed_form() {
        let x = gamma_tail_inverse(1.0, 2.0, 0.05).unwrap();
        assert_relative_eq!(x, -2.0 * 0.05_f64.ln(), max_relative = 1e-10);
        assert_relative_eq!(x, 5.99146, epsilon = 1e-5);
    }

    #[test]
    fn median_round_trip() {
        let m = gamma_tail_inverse(3.7, 1.3, 0.5).unwrap();
        assert_relative_eq!(gamma_tail(3.7, 1.3, m).unwrap(), 0.5, max_relative = 1e-10);
    }

    #[test]
    fn chi_square_via_gamma() {
        // chi-square with 10 degrees of freedom, upper 5% point.
        let x = gamma_tail_inverse(5.0, 2.0, 0.05).unwrap();
        assert_relative_eq!(x, 18.307038053275146, max_relative = 1e-10);
    }

    #[test]
    fn inverse_rejects_out_of_range() {
        for q in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(gamma_tail_inverse(2.0, 1.0, q).is_err());
        }
    }

    #[test]
    fn extreme_tails_and_shapes() {
        for &k in &[0.05, 0.5, 1.0, 5.0, 250.0, 5000.0] {
            for &q in &[1e-12, 1e-6, 0.001, 0.05, 0.5, 0.95, 0.999, 1.0 - 1e-9] {
                let x = gamma_tail_inverse(k, 1.0, q).unwrap();
                let back = gamma_tail(k, 1.0, x).unwrap();
                assert_relative_eq!(back, q, max_relative = 1e-8);
            }
        }
    }

    proptest! {
        #[test]
        fn inverse_round_trips(k in 0.2f64..400.0, theta in 1e-3f64..1e3, q in 0.001f64..0.999) {
            let x = gamma_tail_inverse(k, theta, q).unwrap();
            let back = gamma_tail(k, theta, x).unwrap();
            prop_assert!((back - q).abs() <= 1e-8 * q.max(1e-3));
        }

        #[test]
        fn inverse_is_decreasing_in_q(k in 0.2f64..400.0, a in 0.001f64..0.999, b in 0.001f64..0.999) {
            prop_assume!((a - b).abs() > 1e-6);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let x_lo = gamma_tail_inverse(k, 1.0, lo).unwrap();
            let x_hi = gamma_tail_inverse(k, 1.0, hi).unwrap();
            prop_assert!(x_lo > x_hi);
        }
    }
}
