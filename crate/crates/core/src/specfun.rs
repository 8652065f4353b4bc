//! Scalar special functions: the real error function, the real part of the
//! error function on the complex plane, and the inverse CDFs used to map
//! unit-cube points onto frequency space.
//!
//! All functions are pure.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use crate::error::{Error, Result};

/// `erf(x)` for real `x`.
#[inline]
pub fn erf_real(x: f64) -> f64 {
    libm::erf(x)
}

/// `erfc(x) = 1 - erf(x)`, accurate in the right tail.
#[inline]
pub fn erfc_real(x: f64) -> f64 {
    libm::erfc(x)
}

/// `exp(-b²) · Re erf(a + ib)`.
///
/// Always finite and bounded by one in magnitude, which makes it the form
/// to use wherever the result is multiplied by a matching Gaussian factor
/// (the cross term of the Gaussian box discrepancy is exactly such a product).
///
/// Evaluated with the exponentially convergent series of Abramowitz &
/// Stegun 7.1.29. The hyperbolic factors are folded into the Gaussian
/// weights as `exp(-n²/4 - b²) cosh(nb) = (exp(-(n/2-b)²) + exp(-(n/2+b)²)) / 2`
/// so no intermediate overflows for any finite `b`.
pub fn erf_complex_real_scaled(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    // Re erf is odd in a and even in b.
    let sign = a.signum();
    let x = a.abs();
    let y = b.abs();

    let gauss_y = (-y * y).exp();
    let gauss_x = (-x * x).exp();

    let mut acc = erf_real(x) * gauss_y;
    if gauss_x == 0.0 {
        return sign * acc;
    }

    // (1 - cos 2xy) / (2 pi x) written without cancellation.
    let sxy = (x * y).sin();
    acc += gauss_x * gauss_y * sxy * sxy / (PI * x);

    let (s2, c2) = (2.0 * x * y).sin_cos();
    let n_max = (2.0 * y).ceil() as usize + 20;
    let mut series = 0.0;
    for n in 1..=n_max {
        let nf = n as f64;
        let half = 0.5 * nf;
        let lo = (-(half - y) * (half - y)).exp();
        let hi = (-(half + y) * (half + y)).exp();
        let cosh_w = 0.5 * (lo + hi);
        let sinh_w = 0.5 * (lo - hi);
        let base = (-half * half - y * y).exp();
        let f_n = 2.0 * x * base - 2.0 * x * cosh_w * c2 + nf * sinh_w * s2;
        series += f_n / (nf * nf + 4.0 * x * x);
    }
    acc += 2.0 / PI * gauss_x * series;
    sign * acc
}

/// `Re erf(a + ib)`.
///
/// The magnitude grows like `exp(b²)`; once that leaves the range of `f64`
/// (|b| above roughly 26.6) the result saturates at `±f64::MAX` instead of
/// returning infinity. Callers that multiply by `exp(-b²)` afterwards should
/// use [`erf_complex_real_scaled`] directly.
pub fn erf_complex_real(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        return erf_real(a);
    }
    let scaled = erf_complex_real_scaled(a, b);
    if scaled == 0.0 {
        return 0.0;
    }
    let half = 0.5 * b * b;
    let grow = half.exp();
    let v = scaled * grow * grow;
    if v.is_finite() {
        v
    } else {
        scaled.signum() * f64::MAX
    }
}

/// CDF of `N(0, 1/sigma²)` at `x`.
#[inline]
pub fn normal_cdf(x: f64, sigma: f64) -> f64 {
    0.5 * erfc_real(-x * sigma * FRAC_1_SQRT_2)
}

// Acklam's rational approximation to the standard normal quantile.
const ACKLAM_A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const ACKLAM_B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const ACKLAM_C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const ACKLAM_D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];
const ACKLAM_LOW: f64 = 0.02425;

/// Standard normal quantile for `u <= 0.5`, refined by one Halley step.
fn std_normal_quantile_lower(u: f64) -> f64 {
    let x0 = if u < ACKLAM_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        (((((ACKLAM_C[0] * q + ACKLAM_C[1]) * q + ACKLAM_C[2]) * q + ACKLAM_C[3]) * q + ACKLAM_C[4]) * q + ACKLAM_C[5])
            / ((((ACKLAM_D[0] * q + ACKLAM_D[1]) * q + ACKLAM_D[2]) * q + ACKLAM_D[3]) * q + 1.0)
    } else {
        let q = u - 0.5;
        let r = q * q;
        (((((ACKLAM_A[0] * r + ACKLAM_A[1]) * r + ACKLAM_A[2]) * r + ACKLAM_A[3]) * r + ACKLAM_A[4]) * r + ACKLAM_A[5])
            * q
            / (((((ACKLAM_B[0] * r + ACKLAM_B[1]) * r + ACKLAM_B[2]) * r + ACKLAM_B[3]) * r + ACKLAM_B[4]) * r + 1.0)
    };
    // Halley refinement against the forward CDF.
    let e = 0.5 * erfc_real(-x0 / SQRT_2) - u;
    let t = e * (2.0 * PI).sqrt() * (0.5 * x0 * x0).exp();
    x0 - t / (1.0 + 0.5 * x0 * t)
}

/// Inverse CDF of `N(0, 1/sigma²)`: the frequency density paired with a
/// Gaussian kernel of bandwidth `sigma`.
pub fn normal_quantile(u: f64, sigma: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::ProbabilityOutOfRange(u));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let z = if u == 0.5 {
        0.0
    } else if u < 0.5 {
        std_normal_quantile_lower(u)
    } else {
        -std_normal_quantile_lower(1.0 - u)
    };
    Ok(z / sigma)
}

/// Inverse CDF of the Cauchy distribution with scale `gamma`.
pub fn cauchy_quantile(u: f64, gamma: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::ProbabilityOutOfRange(u));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    if u == 0.5 {
        return Ok(0.0);
    }
    let lower = |p: f64| gamma * (PI * (p - 0.5)).tan();
    Ok(if u < 0.5 { lower(u) } else { -lower(1.0 - u) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Complex Maclaurin series for erf, used as an independent oracle for
    /// moderate |z|. Terms are summed until they stop contributing.
    fn erf_maclaurin(a: f64, b: f64) -> (f64, f64) {
        // z^(2n+1) / (n! (2n+1)) with alternating sign.
        let (mut pr, mut pi) = (a, b); // z^(2n+1)/n!
        let (z2r, z2i) = (a * a - b * b, 2.0 * a * b);
        let (mut sr, mut si) = (a, b);
        for n in 1..400 {
            let nf = n as f64;
            let (nr, ni) = (pr * z2r - pi * z2i, pr * z2i + pi * z2r);
            pr = -nr / nf;
            pi = -ni / nf;
            let k = 2.0 * nf + 1.0;
            sr += pr / k;
            si += pi / k;
            if pr.abs() + pi.abs() < 1e-20 * (sr.abs() + si.abs()) {
                break;
            }
        }
        let c = 2.0 / PI.sqrt();
        (c * sr, c * si)
    }

    #[test]
    fn erf_one_matches_high_precision() {
        assert!((erf_real(1.0) - 0.842_700_792_949_714_869_34).abs() < 1e-15);
        assert_eq!(erf_real(0.0), 0.0);
    }

    #[test]
    fn erf_monotone_and_bounded_on_grid() {
        let n = 10_000;
        let mut prev = -1.0;
        for i in 0..=n {
            let x = -6.0 + 12.0 * i as f64 / n as f64;
            let v = erf_real(x);
            assert!(v >= prev, "not monotone at {x}");
            assert!((-1.0..=1.0).contains(&v));
            prev = v;
        }
    }

    // Reference values from a 40-digit evaluation: (a, b, Re erf, exp(-b^2) Re erf).
    const REFERENCE: &[(f64, f64, f64, f64)] = &[
        (1.0, 1.0, 1.316_151_281_697_947_6, 0.484_184_998_008_118_54),
        (0.5, 2.0, 13.839_985_667_741_279, 0.253_488_179_715_605_86),
        (2.0, 0.5, 1.003_502_243_313_036_3, 0.781_528_332_906_104_2),
        (0.1, 5.0, 6_817_477_771.513_836_5, 0.094_680_748_591_424_17),
        (3.0, 3.0, 0.867_826_497_575_452_1, 0.000_107_098_298_047_015_71),
        (-1.5, 4.0, 102_364.772_009_704_44, 0.011_519_637_503_209_214),
        (0.7, -6.0, 227_700_272_240_532.53, 0.052_815_597_991_459_126),
        (5.0, 10.0, -1.586_835_215_274_449_4e31, -5.903_147_562_246_330_7e-13),
        (0.01, 25.0, 2.939_296_702_120_530_7e269, 0.010_819_127_474_999_98),
        (1.0, 26.5, 3.243_211_175_435_846_8e302, 0.003_370_352_390_120_657_7),
        (4.2, 0.3, 1.000_000_002_651_546_2, 0.913_931_187_694_558_9),
        (12.0, 3.0, 1.0, 0.000_123_409_804_086_679_55),
        (0.3, 0.05, 0.329_401_114_651_166_7, 0.328_578_640_385_742_54),
    ];

    #[test]
    fn complex_erf_matches_reference_values() {
        for &(a, b, want, want_scaled) in REFERENCE {
            let got = erf_complex_real(a, b);
            assert!(
                ((got - want) / want).abs() < 1e-10,
                "Re erf({a}+{b}i) = {got}, want {want}"
            );
            let got_s = erf_complex_real_scaled(a, b);
            assert!(
                ((got_s - want_scaled) / want_scaled).abs() < 1e-10,
                "scaled({a},{b}) = {got_s}, want {want_scaled}"
            );
        }
    }

    #[test]
    fn complex_erf_axes() {
        for &a in &[-3.0, -0.2, 0.0, 0.7, 2.5] {
            assert_eq!(erf_complex_real(a, 0.0), erf_real(a));
        }
        for &b in &[-7.0, -1.0, 0.5, 3.0, 40.0] {
            assert_eq!(erf_complex_real(0.0, b), 0.0);
        }
    }

    #[test]
    fn complex_erf_saturates_instead_of_overflowing() {
        let v = erf_complex_real(0.5, 30.0);
        // True value is about -1.06e389.
        assert_eq!(v, -f64::MAX);
        assert!(erf_complex_real_scaled(0.5, 30.0).is_finite());
    }

    #[test]
    fn quantile_edge_values() {
        assert_eq!(normal_quantile(0.5, 2.0).unwrap(), 0.0);
        assert_eq!(cauchy_quantile(0.5, 3.0).unwrap(), 0.0);
        assert!((cauchy_quantile(0.75, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((cauchy_quantile(0.25, 2.0).unwrap() + 2.0).abs() < 1e-15);
        let u = normal_cdf(1.0, 1.0);
        assert!((normal_quantile(u, 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantiles_reject_closed_endpoints() {
        for u in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(normal_quantile(u, 1.0), Err(Error::ProbabilityOutOfRange(_))));
            assert!(cauchy_quantile(u, 1.0).is_err());
        }
        assert!(normal_quantile(0.3, 0.0).is_err());
    }

    #[test]
    fn quantile_survives_clamped_corner() {
        let eps = f64::EPSILON;
        let lo = normal_quantile(eps, 1.0).unwrap();
        let hi = normal_quantile(1.0 - eps, 1.0).unwrap();
        assert!(lo.is_finite() && hi.is_finite());
        assert!(lo < -7.5 && hi > 7.5);
    }

    proptest! {
        #[test]
        fn erf_is_odd(x in -8.0f64..8.0) {
            prop_assert_eq!(erf_real(x), -erf_real(-x));
        }

        #[test]
        fn complex_erf_even_in_imaginary_part(a in -30.0f64..30.0, b in -30.0f64..30.0) {
            prop_assert_eq!(erf_complex_real(a, b), erf_complex_real(a, -b));
            prop_assert_eq!(erf_complex_real_scaled(a, b), erf_complex_real_scaled(a, -b));
        }

        #[test]
        fn complex_erf_agrees_with_maclaurin(a in -1.75f64..1.75, b in -1.75f64..1.75) {
            let (re, im) = erf_maclaurin(a, b);
            let got = erf_complex_real(a, b);
            let scale = re.abs().max(1e-3 * (re.abs() + im.abs())).max(1e-300);
            prop_assert!((got - re).abs() / scale < 1e-10, "({a},{b}): {got} vs {re}");
        }

        #[test]
        // Only the lower half: above the median u = Phi(x) is stored next to 1
        // and its rounding, not the quantile, dominates the round-trip error.
        // The upper half follows from `quantiles_are_antisymmetric`.
        fn normal_quantile_round_trips(x in -6.0f64..0.0, sigma in 0.25f64..4.0) {
            let x = x / sigma;
            let u = normal_cdf(x, sigma);
            prop_assume!(u > 0.0 && u < 1.0);
            let back = normal_quantile(u, sigma).unwrap();
            // Near the median the CDF itself loses relative information in x.
            let tol = 1e-10 * x.abs().max(1e-5 / sigma);
            prop_assert!((back - x).abs() <= tol, "x={x} back={back}");
        }

        #[test]
        fn quantiles_are_antisymmetric(u in 1e-12f64..0.5) {
            let q = normal_quantile(u, 1.3).unwrap();
            let p = normal_quantile(1.0 - u, 1.3).unwrap();
            // 1 - u rounds, so compare against the exact mirror of the rounded value.
            let mirrored = normal_quantile(1.0 - (1.0 - u), 1.3).unwrap();
            prop_assert_eq!(p, -mirrored);
            prop_assert!((q + p).abs() <= 1e-9 * q.abs().max(1.0));
            let c = cauchy_quantile(u, 0.7).unwrap();
            let cm = cauchy_quantile(1.0 - u, 0.7).unwrap();
            prop_assert!((c + cm).abs() <= 1e-6 * c.abs().max(1.0));
        }
    }
}
