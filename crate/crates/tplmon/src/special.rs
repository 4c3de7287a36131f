//! Distribution functions behind the hypothesis tests: Student's t,
//! standard normal, and F, all built on the regularized incomplete
//! beta and gamma functions. Everything here is a pure function.

use crate::error::{Error, Result};
use std::f64::consts::PI;

const MAX_SERIES_ITER: usize = 500;
/// Unit roundoff guard for Lentz continued fractions.
const CF_EPS: f64 = 3e-16;
const CF_TINY: f64 = 1e-300;

/// Natural log of the gamma function (Lanczos approximation, g = 7).
///
/// Accurate to ~1e-13 relative over the range used here (arguments are
/// half-integers from degrees of freedom, never large).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection keeps the Lanczos sum on its accurate half-line.
        PI.ln() - (PI * x).sin().abs().ln() - ln_gamma(1.0 - x)
    } else {
        let z = x - 1.0;
        let mut acc = COEFFS[0];
        for (i, &c) in COEFFS.iter().enumerate().skip(1) {
            acc += c / (z + i as f64);
        }
        let t = z + G + 0.5;
        0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
    }
}

/// Continued fraction for the incomplete beta, evaluated by the
/// modified Lentz method. Converges fastest for x < (a+1)/(a+b+2);
/// the caller flips arguments to stay in that region.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_SERIES_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let numer = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + numer * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + numer / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let numer = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + numer * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + numer / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Argument(format!(
            "incomplete beta needs a > 0 and b > 0, got a = {a}, b = {b}"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Argument(format!(
            "incomplete beta needs x in [0, 1], got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    let value = if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    };
    Ok(value.clamp(0.0, 1.0))
}

/// Regularized lower incomplete gamma P(a, x): series below a + 1,
/// continued fraction for the upper tail beyond it.
fn regularized_lower_gamma(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    let ln_scale = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..MAX_SERIES_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * CF_EPS {
                break;
            }
        }
        sum * ln_scale.exp()
    } else {
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / CF_TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=MAX_SERIES_ITER {
            let numer = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = numer * d + b;
            if d.abs() < CF_TINY {
                d = CF_TINY;
            }
            c = b + numer / c;
            if c.abs() < CF_TINY {
                c = CF_TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < CF_EPS {
                break;
            }
        }
        1.0 - ln_scale.exp() * h
    }
}

/// Standard normal CDF Φ(z).
pub fn normal_cdf(z: f64) -> f64 {
    if z == 0.0 {
        return 0.5;
    }
    let p = regularized_lower_gamma(0.5, 0.5 * z * z);
    if z > 0.0 {
        0.5 * (1.0 + p)
    } else {
        0.5 * (1.0 - p)
    }
}

/// Student's t CDF with `dof` degrees of freedom.
pub fn t_cdf(t: f64, dof: f64) -> Result<f64> {
    if !(dof > 0.0) {
        return Err(Error::Argument(format!(
            "t distribution needs dof > 0, got {dof}"
        )));
    }
    if t == 0.0 {
        return Ok(0.5);
    }
    let x = dof / (dof + t * t);
    let tail = 0.5 * regularized_incomplete_beta(0.5 * dof, 0.5, x)?;
    Ok(if t > 0.0 { 1.0 - tail } else { tail })
}

/// F distribution CDF with (d1, d2) degrees of freedom.
pub fn f_cdf(x: f64, d1: f64, d2: f64) -> Result<f64> {
    if !(d1 > 0.0 && d2 > 0.0) {
        return Err(Error::Argument(format!(
            "F distribution needs positive dof, got ({d1}, {d2})"
        )));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    regularized_incomplete_beta(0.5 * d1, 0.5 * d2, d1 * x / (d1 * x + d2))
}

/// Inverts a monotone CDF by bracket expansion then bisection.
///
/// Bisection over f64 exhausts representable midpoints in ~110 steps,
/// so the fixed iteration count reaches the underlying CDF's accuracy.
fn invert_monotone(cdf: impl Fn(f64) -> f64, p: f64, mut lo: f64, mut hi: f64) -> f64 {
    debug_assert!(lo < hi);
    let mut span = hi - lo;
    while cdf(lo) > p {
        hi = lo;
        lo -= span;
        span *= 2.0;
    }
    while cdf(hi) < p {
        lo = hi;
        hi += span;
        span *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn check_probability(p: f64, what: &str) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Argument(format!(
            "{what} must lie strictly inside (0, 1), got {p}"
        )));
    }
    Ok(())
}

/// Standard normal quantile Φ⁻¹(p).
pub fn normal_quantile(p: f64) -> Result<f64> {
    check_probability(p, "probability")?;
    Ok(invert_monotone(normal_cdf, p, -1.0, 1.0))
}

/// Student's t quantile with `dof` degrees of freedom.
pub fn t_quantile(p: f64, dof: f64) -> Result<f64> {
    check_probability(p, "probability")?;
    if !(dof > 0.0) {
        return Err(Error::Argument(format!(
            "t distribution needs dof > 0, got {dof}"
        )));
    }
    Ok(invert_monotone(
        |t| t_cdf(t, dof).expect("dof validated"),
        p,
        -1.0,
        1.0,
    ))
}

/// F quantile with (d1, d2) degrees of freedom.
pub fn f_quantile(p: f64, d1: f64, d2: f64) -> Result<f64> {
    check_probability(p, "probability")?;
    if !(d1 > 0.0 && d2 > 0.0) {
        return Err(Error::Argument(format!(
            "F distribution needs positive dof, got ({d1}, {d2})"
        )));
    }
    Ok(invert_monotone(
        |x| f_cdf(x, d1, d2).expect("dof validated"),
        p,
        0.0,
        4.0,
    ))
}

/// Upper critical value q with P(F_{d1,d2} > q) = alpha.
pub fn f_critical(alpha: f64, d1: usize, d2: usize) -> Result<f64> {
    check_probability(alpha, "alpha")?;
    if d1 < 1 || d2 < 1 {
        return Err(Error::Argument(format!(
            "F critical value needs dof >= 1, got ({d1}, {d2})"
        )));
    }
    f_quantile(1.0 - alpha, d1 as f64, d2 as f64)
}

/// Upper critical value q with P(|T_dof| > q) = alpha (two-sided).
pub fn t_critical_two_sided(alpha: f64, dof: f64) -> Result<f64> {
    check_probability(alpha, "alpha")?;
    t_quantile(1.0 - 0.5 * alpha, dof)
}

/// Threshold z with P(|Z| > z) = alpha (two-sided).
pub fn normal_critical_two_sided(alpha: f64) -> Result<f64> {
    check_probability(alpha, "alpha")?;
    normal_quantile(1.0 - 0.5 * alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn ln_gamma_matches_factorials_and_half_integer_closed_forms() {
        let mut factorial = 1.0_f64;
        for n in 1..15_u32 {
            assert_abs_diff_eq!(
                ln_gamma(n as f64),
                factorial.ln(),
                epsilon = 1e-12 * factorial.ln().abs().max(1.0)
            );
            factorial *= n as f64;
        }
        assert_abs_diff_eq!(ln_gamma(0.5), PI.sqrt().ln(), epsilon = 1e-13);
        // Γ(3/2) = √π / 2
        assert_abs_diff_eq!(ln_gamma(1.5), (PI.sqrt() / 2.0).ln(), epsilon = 1e-13);
    }

    #[test]
    fn incomplete_beta_boundaries_and_symmetry() {
        assert_eq!(regularized_incomplete_beta(2.5, 3.5, 0.0).unwrap(), 0.0);
        assert_eq!(regularized_incomplete_beta(2.5, 3.5, 1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(
            regularized_incomplete_beta(1.0, 1.0, 0.3).unwrap(),
            0.3,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            regularized_incomplete_beta(2.0, 2.0, 0.5).unwrap(),
            0.5,
            epsilon = 1e-14
        );
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, b) = 1 - (1 - x)^b and I_x(a, 1) = x^a.
        for i in 1..20 {
            let x = i as f64 / 20.0;
            for j in 1..8 {
                let shape = 0.5 * j as f64;
                assert_abs_diff_eq!(
                    regularized_incomplete_beta(1.0, shape, x).unwrap(),
                    1.0 - (1.0 - x).powf(shape),
                    epsilon = 1e-12
                );
                assert_abs_diff_eq!(
                    regularized_incomplete_beta(shape, 1.0, x).unwrap(),
                    x.powf(shape),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn incomplete_beta_rejects_bad_arguments() {
        assert!(regularized_incomplete_beta(0.0, 1.0, 0.5).is_err());
        assert!(regularized_incomplete_beta(1.0, -2.0, 0.5).is_err());
        assert!(regularized_incomplete_beta(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn normal_cdf_table_values() {
        // Textbook table values.
        assert_abs_diff_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(normal_cdf(1.0), 0.841_344_746_068_543, epsilon = 1e-12);
        assert_abs_diff_eq!(normal_cdf(1.96), 0.975_002_104_851_780, epsilon = 1e-12);
        assert_abs_diff_eq!(normal_cdf(-2.575_829_303_548_901), 0.005, epsilon = 1e-12);
        assert_abs_diff_eq!(normal_cdf(5.0), 0.999_999_713_348_428, epsilon = 1e-12);
    }

    #[test]
    fn t_cdf_symmetry_and_limits() {
        assert_eq!(t_cdf(0.0, 10.0).unwrap(), 0.5);
        assert!(t_cdf(1e9, 5.0).unwrap() > 1.0 - 1e-12);
        assert!(t_cdf(-1e9, 5.0).unwrap() < 1e-12);
        assert!(t_cdf(1.0, 0.0).is_err());
    }

    #[test]
    fn t_cdf_with_one_dof_is_cauchy() {
        // F(t) = 1/2 + atan(t)/π for the Cauchy distribution.
        for &t in &[-5.0, -1.0, -0.3, 0.7, 2.0, 8.0] {
            assert_abs_diff_eq!(
                t_cdf(t, 1.0).unwrap(),
                0.5 + t.atan() / PI,
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn t_critical_matches_table() {
        // Textbook two-sided 5% critical values.
        assert_abs_diff_eq!(t_critical_two_sided(0.05, 10.0).unwrap(), 2.228, epsilon = 1e-3);
        assert_abs_diff_eq!(t_critical_two_sided(0.05, 38.0).unwrap(), 2.024, epsilon = 1e-3);
        assert_abs_diff_eq!(t_critical_two_sided(0.10, 19.0).unwrap(), 1.729, epsilon = 1e-3);
    }

    #[test]
    fn normal_quantile_pins() {
        assert_abs_diff_eq!(normal_quantile(0.5).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            normal_quantile(0.975).unwrap(),
            1.959_963_984_540_054,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            normal_quantile(0.95).unwrap(),
            1.644_853_626_951_472,
            epsilon = 1e-9
        );
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
    }

    #[test]
    fn f_median_is_one_for_equal_dof() {
        for d in [1, 2, 5, 18, 40] {
            assert_abs_diff_eq!(f_critical(0.5, d, d).unwrap(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn f_critical_shrinks_toward_zero_as_alpha_grows() {
        let near_one = f_critical(0.999, 3, 12).unwrap();
        assert!(near_one < 0.05, "got {near_one}");
        let mid = f_critical(0.10, 2, 18).unwrap();
        let strict = f_critical(0.01, 2, 18).unwrap();
        assert!(strict > mid && mid > 1.0);
    }

    #[test]
    fn f_critical_round_trips_through_cdf() {
        for &(alpha, d1, d2) in &[(0.10, 2, 18), (0.05, 3, 17), (0.01, 2, 38), (0.10, 6, 34)] {
            let q = f_critical(alpha, d1, d2).unwrap();
            assert_abs_diff_eq!(
                f_cdf(q, d1 as f64, d2 as f64).unwrap(),
                1.0 - alpha,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn t_with_huge_dof_collapses_to_normal() {
        let mut t = -5.0;
        while t <= 5.0 {
            let diff = (t_cdf(t, 1e6).unwrap() - normal_cdf(t)).abs();
            assert!(diff < 1e-6, "t = {t}, diff = {diff}");
            t += 0.25;
        }
    }

    proptest! {
        #[test]
        fn cdfs_are_bounded_and_monotone(
            a in -30.0_f64..30.0,
            step in 1e-6_f64..10.0,
            dof in 1.0_f64..200.0,
        ) {
            let b = a + step;
            let (na, nb) = (normal_cdf(a), normal_cdf(b));
            prop_assert!((0.0..=1.0).contains(&na));
            prop_assert!(na <= nb);
            let (ta, tb) = (t_cdf(a, dof).unwrap(), t_cdf(b, dof).unwrap());
            prop_assert!((0.0..=1.0).contains(&ta));
            prop_assert!(ta <= tb);
            let (fa, fb) = (
                f_cdf(a.abs(), dof, dof + 1.0).unwrap(),
                f_cdf(a.abs() + step, dof, dof + 1.0).unwrap(),
            );
            prop_assert!((0.0..=1.0).contains(&fa));
            prop_assert!(fa <= fb);
        }

        #[test]
        fn quantile_is_right_inverse_of_cdf(p in 0.001_f64..0.999, dof in 1.0_f64..100.0) {
            let z = normal_quantile(p).unwrap();
            prop_assert!((normal_cdf(z) - p).abs() < 1e-8);
            let t = t_quantile(p, dof).unwrap();
            prop_assert!((t_cdf(t, dof).unwrap() - p).abs() < 1e-8);
            let f = f_quantile(p, dof, dof + 3.0).unwrap();
            prop_assert!((f_cdf(f, dof, dof + 3.0).unwrap() - p).abs() < 1e-8);
        }

        #[test]
        fn quantile_symmetry(p in 0.001_f64..0.999) {
            let plus = normal_quantile(p).unwrap();
            let minus = normal_quantile(1.0 - p).unwrap();
            prop_assert!((plus + minus).abs() < 1e-9);
        }
    }
}
