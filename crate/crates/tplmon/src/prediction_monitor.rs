//! Monitoring cells the reference campaign never printed.
//!
//! When a query cell's (design, parameter) combination has no
//! reference data, its baseline is predicted instead: the dimension
//! models are fitted per design on the reference grid, their
//! coefficients are regressed against design dimension, and the trend
//! is evaluated at the query cell. Query samples are then tested
//! against that prediction with a one-sample Z per dimension or with
//! the two-dimensional T² that respects the strong R/H correlation.
//!
//! Training always drops the query cell's own key from the reference
//! grid (when present), so every check here is leave-one-cell-out;
//! the rest of the query cell's design row and parameter column may
//! still be used.

use crate::data::{DatasetGrid, DesignSpec, MeasurementRecord, ProcessParams};
use crate::error::{Error, Result};
use crate::hypothesis::{
    empirical_t2_membership, hotelling_t2_one_sample, one_sample_z, MembershipOutcome, ZScale,
};
use crate::models::{fit_models, fit_param_trend, predict_for_new_cell, DesignFit, FitConfig, FittedModelSet, ParamTrend};
use crate::verdict::{method_tag, FeatureTest, MonitorVerdict};
use serde::Serialize;

/// Which dimension a Z check covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Feature {
    Radius,
    Height,
    Both,
}

const TOL: f64 = crate::data::DEFAULT_KEY_TOLERANCE;

fn same_cell(a: (f64, f64, f64), b: (f64, f64, f64)) -> bool {
    (a.0 - b.0).abs() <= TOL && (a.1 - b.1).abs() <= TOL && (a.2 - b.2).abs() <= TOL
}

/// Fits the parameter trend on a reference grid with one cell key
/// (when given) left out of training.
pub fn train_trend(
    reference: &DatasetGrid,
    exclude: Option<(DesignSpec, ProcessParams)>,
    cfg: &FitConfig,
) -> Result<ParamTrend> {
    let excluded = exclude.map(|(d, p)| (d.design_dimension, p.laser_power, p.scan_rate));
    let mut fits = Vec::new();
    let mut sparse = Vec::new();
    for design in reference.designs() {
        let mut cells = Vec::new();
        for (key, records) in reference.cells() {
            if (key.design - design).abs() > TOL {
                continue;
            }
            let cell_id = (key.design, key.laser_power, key.scan_rate);
            if excluded.is_some_and(|e| same_cell(e, cell_id)) {
                continue;
            }
            cells.push((
                key.process_params(),
                records.iter().map(|r| (r.radius, r.height)).collect::<Vec<_>>(),
            ));
        }
        if cells.len() < 3 {
            sparse.push(format!("design {design} has {} parameter groups", cells.len()));
            continue;
        }
        let (radius, height, rn, hn) = fit_models(&cells, cfg)?;
        fits.push(DesignFit {
            design,
            radius,
            height,
            radius_residual_norm: rn,
            height_residual_norm: hn,
            training_cells: cells.iter().map(|(p, _)| (p.laser_power, p.scan_rate)).collect(),
        });
    }
    if !sparse.is_empty() {
        return Err(Error::InsufficientData {
            context: format!(
                "reference coverage for prediction (need 3 parameter groups per design; {})",
                sparse.join("; ")
            ),
            needed: 3,
            got: 0,
        });
    }
    if fits.len() < 2 {
        return Err(Error::InsufficientData {
            context: format!(
                "reference coverage for prediction (designs with fitted models: {})",
                fits.len()
            ),
            needed: 2,
            got: fits.len(),
        });
    }
    fit_param_trend(&FittedModelSet { fits })
}

/// Predicted (R, H) baseline for a cell, trained without that cell.
pub fn predicted_mean(
    reference: &DatasetGrid,
    design: DesignSpec,
    params: ProcessParams,
    cfg: &FitConfig,
) -> Result<[f64; 2]> {
    let trend = train_trend(reference, Some((design, params)), cfg)?;
    predict_for_new_cell(&trend, design.design_dimension, params)
}

fn check_query_cell(
    query: &[MeasurementRecord],
    design: DesignSpec,
    params: ProcessParams,
) -> Result<()> {
    let target = (design.design_dimension, params.laser_power, params.scan_rate);
    for rec in query {
        let got = (
            rec.design.design_dimension,
            rec.params.laser_power,
            rec.params.scan_rate,
        );
        if !same_cell(target, got) {
            return Err(Error::Argument(format!(
                "query record at design {} / LP {} / SR {} does not belong to the monitored cell",
                got.0, got.1, got.2
            )));
        }
    }
    Ok(())
}

fn cell_label(design: DesignSpec, params: ProcessParams) -> String {
    format!(
        "design {} / LP {} / SR {}",
        design.design_dimension, params.laser_power, params.scan_rate
    )
}

/// One-sample Z check of a query cell against its predicted baseline.
pub fn z_check(
    reference: &DatasetGrid,
    query: &[MeasurementRecord],
    design: DesignSpec,
    params: ProcessParams,
    feature: Feature,
    alpha: f64,
    scale: ZScale,
    cfg: &FitConfig,
) -> Result<MonitorVerdict> {
    check_query_cell(query, design, params)?;
    let mu = predicted_mean(reference, design, params, cfg)?;
    let singles: &[(usize, &str)] = match feature {
        Feature::Radius => &[(0, "radius")],
        Feature::Height => &[(1, "height")],
        Feature::Both => &[(0, "radius"), (1, "height")],
    };
    let mut tests = Vec::new();
    for &(idx, name) in singles {
        let values: Vec<f64> = query
            .iter()
            .map(|r| if idx == 0 { r.radius } else { r.height })
            .collect();
        tests.push(FeatureTest {
            feature: name.into(),
            outcome: one_sample_z(&values, mu[idx], alpha, scale)?,
        });
    }
    Ok(MonitorVerdict::from_tests(
        method_tag::PREDICTED_Z,
        cell_label(design, params),
        tests,
    ))
}

/// T² check of a query cell's (R, H) samples against the predicted
/// baseline vector.
pub fn t2_check(
    reference: &DatasetGrid,
    query: &[MeasurementRecord],
    design: DesignSpec,
    params: ProcessParams,
    alpha: f64,
    cfg: &FitConfig,
) -> Result<MonitorVerdict> {
    check_query_cell(query, design, params)?;
    let mu = predicted_mean(reference, design, params, cfg)?;
    let samples: Vec<[f64; 2]> = query.iter().map(|r| [r.radius, r.height]).collect();
    let outcome = hotelling_t2_one_sample(&samples, mu, alpha)?;
    Ok(MonitorVerdict::from_tests(
        method_tag::PREDICTED_T2,
        cell_label(design, params),
        vec![FeatureTest {
            feature: "radius+height".into(),
            outcome,
        }],
    ))
}

/// Where a predicted baseline sits relative to one status's samples.
#[derive(Clone, Debug, Serialize)]
pub struct StatusMembership {
    pub status: String,
    pub outcome: MembershipOutcome,
}

/// Classifies a predicted baseline against each status's sample cloud
/// for the same cell: member of the cloud it was trained from,
/// non-member of a shifted one.
pub fn classify_membership(
    reference: &DatasetGrid,
    clouds: &[(String, Vec<[f64; 2]>)],
    design: DesignSpec,
    params: ProcessParams,
    alpha: f64,
    cfg: &FitConfig,
) -> Result<Vec<StatusMembership>> {
    let mu = predicted_mean(reference, design, params, cfg)?;
    clouds
        .iter()
        .map(|(status, samples)| {
            Ok(StatusMembership {
                status: status.clone(),
                outcome: empirical_t2_membership(samples, mu, alpha)?,
            })
        })
        .collect()
}

/// Which check `loo_grid_report` runs on each cell.
#[derive(Clone, Copy, Debug)]
pub enum PredictionCheck {
    Z(Feature, ZScale),
    T2,
}

/// Leave-one-cell-out monitoring of every query cell against
/// predictions from the reference grid, in cell-key order.
pub fn loo_grid_report(
    reference: &DatasetGrid,
    query: &DatasetGrid,
    check: PredictionCheck,
    alpha: f64,
    cfg: &FitConfig,
) -> Result<Vec<MonitorVerdict>> {
    let mut verdicts = Vec::new();
    for (key, records) in query.cells() {
        let design = key.design_spec();
        let params = key.process_params();
        let verdict = match check {
            PredictionCheck::Z(feature, scale) => {
                z_check(reference, records, design, params, feature, alpha, scale, cfg)?
            }
            PredictionCheck::T2 => t2_check(reference, records, design, params, alpha, cfg)?,
        };
        verdicts.push(verdict);
    }
    Ok(verdicts)
}
