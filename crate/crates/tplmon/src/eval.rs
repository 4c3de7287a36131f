//! Monte Carlo harness measuring how error rates move as data
//! shrinks: a sample-size sweep for the cell-level t-test, a
//! training-set sweep for the prediction T² check, and null
//! calibration runs for each statistic.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{DatasetGrid, DesignSpec, MeasurementRecord, ProcessParams, DEFAULT_KEY_TOLERANCE};
use crate::error::{Error, Result};
use crate::hypothesis::{
    empirical_t2_membership, hotelling_t2_one_sample, one_sample_z, two_sample_t, ZScale,
};
use crate::models::FitConfig;
use crate::prediction_monitor::predicted_mean;
use crate::rng;

const TAG_SAMPLE_SWEEP: u64 = 0xF3;
const TAG_TRAINING_SWEEP: u64 = 0xF9;
const TAG_NULL_T: u64 = 0x71;
const TAG_NULL_Z: u64 = 0x7A;
const TAG_NULL_T2: u64 = 0x72;
const TAG_NULL_MEMBER: u64 = 0x7E;

/// First n positions of a random permutation of 0..m.
fn draw_indices(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..m).collect();
    for i in 0..n {
        let j = i + rng::index(rng, m - i);
        idx.swap(i, j);
    }
    idx.truncate(n);
    idx
}

/// Error rates of the per-cell t-test at one subsample size.
#[derive(Clone, Debug, Serialize)]
pub struct SampleSizeRow {
    pub sample_size: usize,
    /// False-alarm rate on the same-status pair.
    pub type1: f64,
    /// Miss rate on the different-status pair.
    pub type2: f64,
    /// Feature tests behind each rate.
    pub trials: usize,
}

struct SharedCell<'a> {
    reference: &'a [MeasurementRecord],
    same: &'a [MeasurementRecord],
    shifted: &'a [MeasurementRecord],
}

fn shared_cells<'a>(
    reference: &'a DatasetGrid,
    same: &'a DatasetGrid,
    shifted: &'a DatasetGrid,
) -> Result<Vec<SharedCell<'a>>> {
    let mut cells = Vec::new();
    for (key, records) in reference.cells() {
        let design = key.design_spec();
        let params = key.process_params();
        let same_records = same.cell(design, params);
        let shifted_records = shifted.cell(design, params);
        if same_records.is_empty() || shifted_records.is_empty() {
            return Err(Error::Argument(format!(
                "all grids must share the reference layout; design {} / LP {} / SR {} is missing from a query grid",
                key.design, key.laser_power, key.scan_rate
            )));
        }
        cells.push(SharedCell {
            reference: records,
            same: same_records,
            shifted: shifted_records,
        });
    }
    Ok(cells)
}

fn subsample_feature(
    rng: &mut ChaCha8Rng,
    records: &[MeasurementRecord],
    n: usize,
) -> (Vec<f64>, Vec<f64>) {
    let picks = draw_indices(rng, records.len(), n);
    let radius = picks.iter().map(|&i| records[i].radius).collect();
    let height = picks.iter().map(|&i| records[i].height).collect();
    (radius, height)
}

/// Two-sample t error rates across subsample sizes, drawn without
/// replacement inside each cell. The same-status pair feeds the
/// false-alarm rate, the different-status pair the miss rate; each
/// (radius, height) test counts as one trial.
pub fn sample_size_sweep(
    reference: &DatasetGrid,
    same: &DatasetGrid,
    shifted: &DatasetGrid,
    sizes: &[usize],
    alpha: f64,
    repetitions: usize,
    seed: u64,
) -> Result<Vec<SampleSizeRow>> {
    if repetitions == 0 {
        return Err(Error::Argument("repetitions must be at least 1".into()));
    }
    if sizes.is_empty() {
        return Err(Error::Argument("no subsample sizes given".into()));
    }
    let cells = shared_cells(reference, same, shifted)?;
    let cap = cells
        .iter()
        .flat_map(|c| [c.reference.len(), c.same.len(), c.shifted.len()])
        .min()
        .unwrap_or(0);
    for &n in sizes {
        if n < 2 || n > cap {
            return Err(Error::Argument(format!(
                "subsample size {n} outside the feasible range 2..={cap}"
            )));
        }
    }

    let mut rows = Vec::with_capacity(sizes.len());
    for (point, &n) in sizes.iter().enumerate() {
        let per_rep: Vec<Result<(usize, usize)>> = (0..repetitions)
            .into_par_iter()
            .map(|rep| {
                let mut false_alarms = 0usize;
                let mut misses = 0usize;
                let mut null_rng =
                    rng::stream(seed, &[TAG_SAMPLE_SWEEP, point as u64, rep as u64, 0]);
                let mut shift_rng =
                    rng::stream(seed, &[TAG_SAMPLE_SWEEP, point as u64, rep as u64, 1]);
                for cell in &cells {
                    let (ref_r, ref_h) = subsample_feature(&mut null_rng, cell.reference, n);
                    let (same_r, same_h) = subsample_feature(&mut null_rng, cell.same, n);
                    false_alarms += usize::from(two_sample_t(&ref_r, &same_r, alpha)?.reject_null);
                    false_alarms += usize::from(two_sample_t(&ref_h, &same_h, alpha)?.reject_null);

                    let (ref_r, ref_h) = subsample_feature(&mut shift_rng, cell.reference, n);
                    let (shift_r, shift_h) = subsample_feature(&mut shift_rng, cell.shifted, n);
                    misses += usize::from(!two_sample_t(&ref_r, &shift_r, alpha)?.reject_null);
                    misses += usize::from(!two_sample_t(&ref_h, &shift_h, alpha)?.reject_null);
                }
                Ok((false_alarms, misses))
            })
            .collect();
        let mut false_alarms = 0usize;
        let mut misses = 0usize;
        for r in per_rep {
            let (fa, m) = r?;
            false_alarms += fa;
            misses += m;
        }
        let trials = repetitions * cells.len() * 2;
        rows.push(SampleSizeRow {
            sample_size: n,
            type1: false_alarms as f64 / trials as f64,
            type2: misses as f64 / trials as f64,
            trials,
        });
    }
    Ok(rows)
}

/// A reference subset to train on plus the cell the trained model is
/// asked to predict.
pub struct TrainingSelection {
    pub training: DatasetGrid,
    pub design: DesignSpec,
    pub params: ProcessParams,
}

/// Draws a training subset of `design_count` designs and
/// `param_count` parameter groups, then a target cell: its design
/// comes from the selected designs, its group from the left-out
/// groups when any exist, otherwise from the full set.
pub fn select_training(
    reference: &DatasetGrid,
    design_count: usize,
    param_count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TrainingSelection> {
    let designs = reference.designs();
    let groups = reference.parameter_groups();
    check_training_counts(design_count, param_count, designs.len(), groups.len())?;

    let selected_designs = draw_indices(rng, designs.len(), design_count);
    let selected_groups = draw_indices(rng, groups.len(), param_count);
    let target_design = designs[selected_designs[rng::index(rng, selected_designs.len())]];
    let left_out: Vec<usize> = (0..groups.len())
        .filter(|i| !selected_groups.contains(i))
        .collect();
    let target_group = if left_out.is_empty() {
        groups[rng::index(rng, groups.len())]
    } else {
        groups[left_out[rng::index(rng, left_out.len())]]
    };

    let tol = DEFAULT_KEY_TOLERANCE;
    let mut records = Vec::new();
    for (key, cell) in reference.cells() {
        let design_in = selected_designs
            .iter()
            .any(|&i| (designs[i] - key.design).abs() <= tol);
        let group_in = selected_groups.iter().any(|&i| {
            (groups[i].laser_power - key.laser_power).abs() <= tol
                && (groups[i].scan_rate - key.scan_rate).abs() <= tol
        });
        if design_in && group_in {
            records.extend(cell.iter().cloned());
        }
    }
    Ok(TrainingSelection {
        training: DatasetGrid::from_records(records, tol)?,
        design: DesignSpec::new(target_design)?,
        params: target_group,
    })
}

fn check_training_counts(
    design_count: usize,
    param_count: usize,
    designs: usize,
    groups: usize,
) -> Result<()> {
    if design_count < 2 || design_count > designs {
        return Err(Error::Argument(format!(
            "a parameter trend needs 2..={designs} training designs, got {design_count}"
        )));
    }
    if param_count < 3 || param_count > groups {
        return Err(Error::Argument(format!(
            "a dose-response fit needs 3..={groups} training parameter groups, got {param_count}"
        )));
    }
    Ok(())
}

/// Prediction-check error rates at one training-set size.
#[derive(Clone, Debug, Serialize)]
pub struct EfficiencyPoint {
    pub design_count: usize,
    pub param_count: usize,
    /// False-alarm rate on same-status queries.
    pub type1: f64,
    /// Miss rate on different-status queries.
    pub type2: f64,
    /// Repetitions whose training draw produced a usable baseline;
    /// the rates are over these.
    pub trials: usize,
}

/// A failure the monitoring model can hit on an unlucky training draw,
/// as opposed to a structural misuse of the sweep.
fn is_model_breakdown(e: &Error) -> bool {
    matches!(
        e,
        Error::DomainViolation { .. }
            | Error::NoConvergence(_)
            | Error::SingularCovariance
            | Error::ZeroVariance
    )
}

/// T² prediction-check error surface over training-set sizes. Each
/// repetition draws a fresh training subset and target cell, predicts
/// the cell's baseline, and tests the same-status and the
/// different-status query samples for that cell against it.
///
/// Small training subsets sometimes extrapolate outside the model's
/// domain; such draws yield no verdict at all and are excluded from
/// the rates, which `trials` reflects per point.
#[allow(clippy::too_many_arguments)]
pub fn data_efficiency_sweep(
    reference: &DatasetGrid,
    same: &DatasetGrid,
    shifted: &DatasetGrid,
    design_counts: &[usize],
    param_counts: &[usize],
    alpha: f64,
    repetitions: usize,
    seed: u64,
    fit: &FitConfig,
) -> Result<Vec<EfficiencyPoint>> {
    if repetitions == 0 {
        return Err(Error::Argument("repetitions must be at least 1".into()));
    }
    if design_counts.is_empty() || param_counts.is_empty() {
        return Err(Error::Argument("no training-set sizes given".into()));
    }
    let designs = reference.designs().len();
    let groups = reference.parameter_groups().len();
    for &nd in design_counts {
        for &np in param_counts {
            check_training_counts(nd, np, designs, groups)?;
        }
    }

    let mut points = Vec::with_capacity(design_counts.len() * param_counts.len());
    for (pi, (&nd, &np)) in design_counts
        .iter()
        .flat_map(|nd| param_counts.iter().map(move |np| (nd, np)))
        .enumerate()
    {
        let per_rep: Vec<Result<Option<(bool, bool)>>> = (0..repetitions)
            .into_par_iter()
            .map(|rep| {
                let mut stream =
                    rng::stream(seed, &[TAG_TRAINING_SWEEP, pi as u64, rep as u64]);
                let sel = select_training(reference, nd, np, &mut stream)?;
                let mu = match predicted_mean(&sel.training, sel.design, sel.params, fit) {
                    Ok(mu) => mu,
                    Err(e) if is_model_breakdown(&e) => return Ok(None),
                    Err(e) => return Err(e),
                };
                let run = |grid: &DatasetGrid| -> Result<bool> {
                    let records = grid.cell(sel.design, sel.params);
                    if records.is_empty() {
                        return Err(Error::Argument(format!(
                            "query grid lacks the target cell design {} / LP {} / SR {}",
                            sel.design.design_dimension,
                            sel.params.laser_power,
                            sel.params.scan_rate
                        )));
                    }
                    let samples: Vec<[f64; 2]> =
                        records.iter().map(|r| [r.radius, r.height]).collect();
                    Ok(hotelling_t2_one_sample(&samples, mu, alpha)?.reject_null)
                };
                Ok(Some((run(same)?, run(shifted)?)))
            })
            .collect();
        let mut false_alarms = 0usize;
        let mut misses = 0usize;
        let mut usable = 0usize;
        for r in per_rep {
            let Some((fa, detected)) = r? else { continue };
            usable += 1;
            false_alarms += usize::from(fa);
            misses += usize::from(!detected);
        }
        if usable == 0 {
            return Err(Error::InsufficientData {
                context: format!(
                    "usable training draws at {nd} designs / {np} parameter groups"
                ),
                needed: 1,
                got: 0,
            });
        }
        points.push(EfficiencyPoint {
            design_count: nd,
            param_count: np,
            type1: false_alarms as f64 / usable as f64,
            type2: misses as f64 / usable as f64,
            trials: usable,
        });
    }
    Ok(points)
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::Argument("trials must be at least 1".into()));
    }
    Ok(())
}

fn rate_over<F>(trials: usize, run: F) -> Result<f64>
where
    F: Fn(usize) -> Result<bool> + Sync + Send,
{
    let flags: Vec<Result<bool>> = (0..trials).into_par_iter().map(run).collect();
    let mut hits = 0usize;
    for f in flags {
        hits += usize::from(f?);
    }
    Ok(hits as f64 / trials as f64)
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng::standard_normal(rng)).collect()
}

/// Null rejection rate of the two-sample t-test on groups of size `n`.
pub fn null_t_rate(n: usize, alpha: f64, trials: usize, seed: u64) -> Result<f64> {
    check_trials(trials)?;
    rate_over(trials, |t| {
        let mut rng = rng::stream(seed, &[TAG_NULL_T, t as u64]);
        let a = normals(&mut rng, n);
        let b = normals(&mut rng, n);
        Ok(two_sample_t(&a, &b, alpha)?.reject_null)
    })
}

/// Null rejection rate of the one-sample z-test at the given scale.
pub fn null_z_rate(n: usize, alpha: f64, scale: ZScale, trials: usize, seed: u64) -> Result<f64> {
    check_trials(trials)?;
    rate_over(trials, |t| {
        let mut rng = rng::stream(seed, &[TAG_NULL_Z, t as u64]);
        let a = normals(&mut rng, n);
        Ok(one_sample_z(&a, 0.0, alpha, scale)?.reject_null)
    })
}

/// Null rejection rate of the bivariate one-sample T² test.
pub fn null_t2_rate(n: usize, alpha: f64, trials: usize, seed: u64) -> Result<f64> {
    check_trials(trials)?;
    rate_over(trials, |t| {
        let mut rng = rng::stream(seed, &[TAG_NULL_T2, t as u64]);
        let samples: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng::standard_normal(&mut rng), rng::standard_normal(&mut rng)])
            .collect();
        Ok(hotelling_t2_one_sample(&samples, [0.0, 0.0], alpha)?.reject_null)
    })
}

/// Rate at which a candidate drawn from the reference distribution is
/// declared a non-member of a size-`n` reference cloud.
pub fn null_membership_rate(n: usize, alpha: f64, trials: usize, seed: u64) -> Result<f64> {
    check_trials(trials)?;
    rate_over(trials, |t| {
        let mut rng = rng::stream(seed, &[TAG_NULL_MEMBER, t as u64]);
        let cloud: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng::standard_normal(&mut rng), rng::standard_normal(&mut rng)])
            .collect();
        let candidate = [rng::standard_normal(&mut rng), rng::standard_normal(&mut rng)];
        Ok(!empirical_t2_membership(&cloud, candidate, alpha)?.member)
    })
}

/// One test's empirical null rejection rate.
#[derive(Clone, Debug, Serialize)]
pub struct CalibrationRow {
    pub test: String,
    pub alpha: f64,
    pub trials: usize,
    pub rate: f64,
}

/// Null calibration of every statistic at each alpha.
///
/// The z row scaled by the sample SD is reported for completeness:
/// that scaling shrinks the statistic by √n, so its null rejection
/// rate sits far below alpha rather than at it.
pub fn null_calibration(alphas: &[f64], trials: usize, seed: u64) -> Result<Vec<CalibrationRow>> {
    let mut rows = Vec::new();
    for &alpha in alphas {
        let mut push = |test: &str, rate: f64| {
            rows.push(CalibrationRow {
                test: test.to_string(),
                alpha,
                trials,
                rate,
            });
        };
        push(
            "two-sample t, n=20",
            null_t_rate(20, alpha, trials, seed)?,
        );
        push(
            "one-sample z (standard-error scale), n=200",
            null_z_rate(200, alpha, ZScale::StandardError, trials, seed)?,
        );
        push(
            "one-sample z (sample-sd scale), n=200",
            null_z_rate(200, alpha, ZScale::SampleSd, trials, seed)?,
        );
        push(
            "one-sample T², p=2, n=20",
            null_t2_rate(20, alpha, trials, seed)?,
        );
        push(
            "empirical T² membership, n=199",
            null_membership_rate(199, alpha, trials, seed)?,
        );
    }
    Ok(rows)
}

/// Renders calibration rows as an aligned text table.
pub fn calibration_text(rows: &[CalibrationRow]) -> String {
    use std::fmt::Write as _;
    let width = rows.iter().map(|r| r.test.len()).max().unwrap_or(4).max(4);
    let mut out = String::new();
    let _ = writeln!(out, "{:width$}  {:>6}  {:>7}  {:>8}", "test", "alpha", "trials", "rate");
    for r in rows {
        let _ = writeln!(
            out,
            "{:width$}  {:>6}  {:>7}  {:>8.4}",
            r.test, r.alpha, r.trials, r.rate
        );
    }
    out
}
