//! Fixed-size linear solves for the 2x2 and 3x3 systems in the test
//! statistics and model fitting. Partial pivoting plus a condition cap
//! stands in for a full matrix library at these sizes.

use crate::error::{Error, Result};

/// Condition numbers above this report as singular.
pub(crate) const CONDITION_CAP: f64 = 1e12;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub(crate) fn solve<const P: usize>(a: [[f64; P]; P], b: [f64; P]) -> Result<[f64; P]> {
    let mut m = a;
    let mut rhs = b;
    for col in 0..P {
        let pivot_row = (col..P)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[pivot_row][col].abs() < f64::MIN_POSITIVE {
            return Err(Error::SingularCovariance);
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for row in col + 1..P {
            let factor = m[row][col] / m[col][col];
            for k in col..P {
                m[row][k] -= factor * m[col][k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = [0.0; P];
    for col in (0..P).rev() {
        let mut acc = rhs[col];
        for k in col + 1..P {
            acc -= m[col][k] * x[k];
        }
        x[col] = acc / m[col][col];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularCovariance);
    }
    Ok(x)
}

/// Inverts `a`, rejecting matrices with 1-norm condition above the cap.
pub(crate) fn invert<const P: usize>(a: [[f64; P]; P]) -> Result<[[f64; P]; P]> {
    let mut inv = [[0.0; P]; P];
    for col in 0..P {
        let mut e = [0.0; P];
        e[col] = 1.0;
        let x = solve(a, e)?;
        for row in 0..P {
            inv[row][col] = x[row];
        }
    }
    if one_norm(&a) * one_norm(&inv) > CONDITION_CAP {
        return Err(Error::SingularCovariance);
    }
    Ok(inv)
}

fn one_norm<const P: usize>(m: &[[f64; P]; P]) -> f64 {
    (0..P)
        .map(|col| (0..P).map(|row| m[row][col].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Quadratic form vᵀ M v.
pub(crate) fn quadratic_form<const P: usize>(m: &[[f64; P]; P], v: &[f64; P]) -> f64 {
    let mut acc = 0.0;
    for i in 0..P {
        for j in 0..P {
            acc += v[i] * m[i][j] * v[j];
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn solves_a_known_3x3_system() {
        let a = [[2.0, 1.0, -1.0], [-3.0, -1.0, 2.0], [-2.0, 1.0, 2.0]];
        let x = solve(a, [8.0, -11.0, -3.0]).unwrap();
        assert_abs_diff_eq!(x[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[2], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = [[1.0, 2.0], [2.0, 4.0]];
        assert!(solve(a, [1.0, 2.0]).is_err());
        assert!(invert(a).is_err());
    }

    #[test]
    fn nearly_singular_matrix_trips_the_condition_cap() {
        let eps = 1e-14;
        let a = [[1.0, 1.0], [1.0, 1.0 + eps]];
        assert!(invert(a).is_err());
    }

    proptest! {
        #[test]
        fn inverse_times_matrix_is_identity(
            d0 in 0.5_f64..3.0, d1 in 0.5_f64..3.0, d2 in 0.5_f64..3.0,
            off in -0.3_f64..0.3,
        ) {
            let a = [[d0, off, 0.0], [off, d1, off], [0.0, off, d2]];
            let inv = invert(a).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let prod: f64 = (0..3).map(|k| inv[i][k] * a[k][j]).sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((prod - expect).abs() < 1e-9);
                }
            }
        }
    }
}
