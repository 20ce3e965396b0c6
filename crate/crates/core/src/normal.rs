//! Standard normal distribution: density, distribution function and quantile.
//!
//! The distribution function is built on a complementary error function that
//! combines an all-positive power series (small arguments) with a Lentz
//! continued fraction (large arguments). Both branches are accurate to a few
//! ulps of absolute error, which matters because bid/ask spreads are small
//! differences of comparatively large option values.

use std::f64::consts::{FRAC_2_SQRT_PI, PI, SQRT_2};

const SERIES_CUTOFF: f64 = 1.5;
const MAX_TERMS: usize = 500;

/// Standard normal density.
pub fn pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Error function.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return -erf(-x);
    }
    if x < SERIES_CUTOFF {
        erf_series(x)
    } else {
        1.0 - erfc_continued_fraction(x)
    }
}

/// Complementary error function `1 - erf(x)`.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < SERIES_CUTOFF {
        1.0 - erf_series(x)
    } else {
        erfc_continued_fraction(x)
    }
}

// erf(x) = 2/sqrt(pi) * exp(-x^2) * sum_n 2^n x^(2n+1) / (2n+1)!!
// Every term is positive so there is no cancellation.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    for n in 1..MAX_TERMS {
        term *= 2.0 * x2 / (2 * n + 1) as f64;
        sum += term;
        if term < sum * f64::EPSILON * 0.25 {
            break;
        }
    }
    FRAC_2_SQRT_PI * (-x2).exp() * sum
}

// erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
// evaluated with the modified Lentz algorithm.
fn erfc_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..MAX_TERMS {
        let a = 0.5 * k as f64;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (f * PI.sqrt())
}

/// Standard normal distribution function `P(Z <= z)`.
pub fn cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal quantile function, the inverse of [`cdf`].
///
/// Safeguarded Newton iteration on the lower tail; returns infinities at the
/// endpoints and NaN outside `[0, 1]`.
pub fn inverse_cdf(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -lower_quantile(1.0 - p);
    }
    lower_quantile(p)
}

// Quantile for p <= 1/2, solved against the lower-tail probability so that
// small p keep full relative precision.
fn lower_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0_f64, 0.0_f64);
    let t = (-2.0 * p.ln()).sqrt();
    // crude rational starting point, refined below
    let mut z = -(t
        - (2.515517 + 0.802853 * t + 0.010328 * t * t)
            / (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t));
    for _ in 0..100 {
        let f = cdf(z) - p;
        if f > 0.0 {
            hi = z;
        } else {
            lo = z;
        }
        let dens = pdf(z);
        let mut next = if dens > 0.0 { z - f / dens } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - z).abs() <= 1e-15 * (1.0 + z.abs()) {
            return next;
        }
        z = next;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values computed with mpmath at 50 digits.
    const CDF_TABLE: [(f64, f64); 9] = [
        (-8.0, 6.220960574271784e-16),
        (-5.0, 2.866515718791939e-7),
        (-2.0, 0.02275013194817921),
        (-1.0, 0.15865525393145705),
        (-0.3, 0.3820885778110474),
        (0.0, 0.5),
        (0.7, 0.758036347776927),
        (1.96, 0.9750021048517795),
        (3.5, 0.9997673709209645),
    ];

    #[test]
    fn cdf_matches_high_precision_table() {
        for &(z, want) in &CDF_TABLE {
            let got = cdf(z);
            assert!((got - want).abs() <= 1e-15, "z={z}: {got} vs {want}");
        }
    }

    #[test]
    fn cdf_agrees_with_independent_erfc() {
        let mut z = -8.0;
        while z <= 8.0 {
            let reference = 0.5 * libm::erfc(-z / SQRT_2);
            assert!((cdf(z) - reference).abs() <= 1e-15, "z={z}");
            z += 0.0137;
        }
    }

    #[test]
    fn erf_is_odd_and_bounded() {
        for &x in &[0.0, 0.1, 1.0, 1.5, 2.0, 6.0, 30.0] {
            assert_eq!(erf(-x), -erf(x));
            assert!(erf(x) <= 1.0);
        }
        assert_eq!(erfc(40.0), 0.0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-12, 1e-6, 0.01, 0.1, 0.3, 0.5, 0.77, 0.9, 0.999, 1.0 - 1e-9] {
            let z = inverse_cdf(p);
            let back = if p > 0.5 { 1.0 - cdf(-z) } else { cdf(z) };
            assert!((back - p).abs() <= 1e-14 * p.max(1e-3), "p={p}");
        }
        assert!((inverse_cdf(0.9) - 1.2815515655446004).abs() < 1e-13);
        assert!(inverse_cdf(1.5).is_nan());
    }
}
