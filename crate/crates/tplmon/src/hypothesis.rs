//! The three test statistics driving every monitor: pooled two-sample t,
//! one-sample Z, and one-sample Hotelling's T², plus an empirical T²
//! membership check against a reference cloud.

use crate::error::{Error, Result};
use crate::linalg;
use crate::special;
use serde::{Deserialize, Serialize};

/// Degrees-of-freedom information attached to a test outcome.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DofInfo {
    StudentT { dof: f64 },
    Normal,
    HotellingF { dimension: usize, n: usize },
}

/// Decision record for a single hypothesis test.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: Option<f64>,
    pub reject_null: bool,
    pub alpha: f64,
    pub dof: DofInfo,
}

/// Denominator of the one-sample Z statistic.
///
/// The monitoring formula divides the mean shift by the sample SD
/// itself; `StandardError` selects the conventional s/√n scaling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum ZScale {
    #[default]
    SampleSd,
    StandardError,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Argument(format!(
            "alpha must lie strictly inside (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// Pooled two-sample t-test for a mean shift between two groups.
///
/// The pooled SD is √((s₁² + s₂²)/2), the equal-weight form; the
/// decision is two-sided at `alpha` with n₁ + n₂ − 2 degrees of freedom.
pub fn two_sample_t(group1: &[f64], group2: &[f64], alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    for (name, g) in [("group1", group1), ("group2", group2)] {
        if g.len() < 2 {
            return Err(Error::InsufficientData {
                context: format!("two-sample t, {name}"),
                needed: 2,
                got: g.len(),
            });
        }
    }
    let (n1, n2) = (group1.len() as f64, group2.len() as f64);
    let (m1, m2) = (mean(group1), mean(group2));
    let pooled_sd = (0.5 * (sample_variance(group1, m1) + sample_variance(group2, m2))).sqrt();
    if pooled_sd <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let statistic = (m1 - m2) / (pooled_sd * (1.0 / n1 + 1.0 / n2).sqrt());
    let dof = n1 + n2 - 2.0;
    let critical_value = special::t_critical_two_sided(alpha, dof)?;
    let p_value = 2.0 * (1.0 - special::t_cdf(statistic.abs(), dof)?);
    Ok(TestOutcome {
        statistic,
        critical_value,
        p_value: Some(p_value),
        reject_null: statistic.abs() > critical_value,
        alpha,
        dof: DofInfo::StudentT { dof },
    })
}

/// One-sample Z-test of the sample mean against a predicted value.
pub fn one_sample_z(samples: &[f64], mu0: f64, alpha: f64, scale: ZScale) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    if samples.len() < 2 {
        return Err(Error::InsufficientData {
            context: "one-sample Z".into(),
            needed: 2,
            got: samples.len(),
        });
    }
    let m = mean(samples);
    let sd = sample_variance(samples, m).sqrt();
    if sd <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let denom = match scale {
        ZScale::SampleSd => sd,
        ZScale::StandardError => sd / (samples.len() as f64).sqrt(),
    };
    let statistic = (m - mu0) / denom;
    let critical_value = special::normal_critical_two_sided(alpha)?;
    let p_value = 2.0 * (1.0 - special::normal_cdf(statistic.abs()));
    Ok(TestOutcome {
        statistic,
        critical_value,
        p_value: Some(p_value),
        reject_null: statistic.abs() > critical_value,
        alpha,
        dof: DofInfo::Normal,
    })
}

/// Column means of a P-dimensional sample.
pub fn mean_vector<const P: usize>(samples: &[[f64; P]]) -> [f64; P] {
    let mut m = [0.0; P];
    for s in samples {
        for (acc, v) in m.iter_mut().zip(s) {
            *acc += v;
        }
    }
    for acc in &mut m {
        *acc /= samples.len() as f64;
    }
    m
}

/// Sample covariance matrix (n − 1 denominator).
pub fn covariance_matrix<const P: usize>(samples: &[[f64; P]], m: &[f64; P]) -> [[f64; P]; P] {
    let mut cov = [[0.0; P]; P];
    for s in samples {
        for i in 0..P {
            for j in 0..P {
                cov[i][j] += (s[i] - m[i]) * (s[j] - m[j]);
            }
        }
    }
    let denom = (samples.len() - 1) as f64;
    for row in &mut cov {
        for v in row {
            *v /= denom;
        }
    }
    cov
}

/// One-sample Hotelling's T² of a P-dimensional mean against `mu0`.
///
/// T² = n (x̄ − μ₀)ᵀ S⁻¹ (x̄ − μ₀); the critical value scales an F
/// quantile by p(n−1)/(n−p).
pub fn hotelling_t2_one_sample<const P: usize>(
    samples: &[[f64; P]],
    mu0: [f64; P],
    alpha: f64,
) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let n = samples.len();
    if n <= P {
        return Err(Error::InsufficientData {
            context: format!("Hotelling T² in dimension {P}"),
            needed: P + 1,
            got: n,
        });
    }
    let m = mean_vector(samples);
    let cov = covariance_matrix(samples, &m);
    let inv = linalg::invert(cov)?;
    let mut diff = [0.0; P];
    for i in 0..P {
        diff[i] = m[i] - mu0[i];
    }
    let statistic = n as f64 * linalg::quadratic_form(&inv, &diff);
    let (nf, pf) = (n as f64, P as f64);
    let scale = pf * (nf - 1.0) / (nf - pf);
    let critical_value = scale * special::f_critical(alpha, P, n - P)?;
    let p_value = 1.0 - special::f_cdf(statistic / scale, pf, nf - pf)?;
    Ok(TestOutcome {
        statistic,
        critical_value,
        p_value: Some(p_value),
        reject_null: statistic > critical_value,
        alpha,
        dof: DofInfo::HotellingF { dimension: P, n },
    })
}

/// Membership decision against an empirical T² distribution.
#[derive(Clone, Debug, Serialize)]
pub struct MembershipOutcome {
    pub candidate_t2: f64,
    pub threshold: f64,
    pub member: bool,
    pub alpha: f64,
}

/// Squared Mahalanobis distance of one point from a cloud's mean,
/// after removing the point itself from mean and covariance.
fn leave_one_out_t2<const P: usize>(samples: &[[f64; P]], leave: usize) -> Result<f64> {
    let rest: Vec<[f64; P]> = samples
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != leave)
        .map(|(_, s)| *s)
        .collect();
    let m = mean_vector(&rest);
    let inv = linalg::invert(covariance_matrix(&rest, &m))?;
    let mut diff = [0.0; P];
    for i in 0..P {
        diff[i] = samples[leave][i] - m[i];
    }
    Ok(linalg::quadratic_form(&inv, &diff))
}

/// Decides whether `candidate` falls within the reference cloud.
///
/// The reference's own leave-one-out T² values form the empirical
/// distribution; the candidate is a member iff its T² about the full
/// reference mean/covariance is at or below the (1 − alpha) quantile
/// (nearest-rank).
pub fn empirical_t2_membership<const P: usize>(
    reference: &[[f64; P]],
    candidate: [f64; P],
    alpha: f64,
) -> Result<MembershipOutcome> {
    check_alpha(alpha)?;
    let n = reference.len();
    if n < P + 2 {
        return Err(Error::InsufficientData {
            context: format!("empirical T² membership in dimension {P}"),
            needed: P + 2,
            got: n,
        });
    }
    let mut loo: Vec<f64> = (0..n)
        .map(|i| leave_one_out_t2(reference, i))
        .collect::<Result<_>>()?;
    loo.sort_by(f64::total_cmp);
    let rank = ((1.0 - alpha) * n as f64).ceil() as usize;
    let threshold = loo[rank.clamp(1, n) - 1];

    let m = mean_vector(reference);
    let inv = linalg::invert(covariance_matrix(reference, &m))?;
    let mut diff = [0.0; P];
    for i in 0..P {
        diff[i] = candidate[i] - m[i];
    }
    let candidate_t2 = linalg::quadratic_form(&inv, &diff);
    Ok(MembershipOutcome {
        candidate_t2,
        threshold,
        member: candidate_t2 <= threshold,
        alpha,
    })
}
