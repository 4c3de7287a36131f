//! Per-cell comparison of two measurement campaigns.
//!
//! Workhorse when both campaigns printed the same (design, parameter)
//! cells: each shared cell's reference and query samples meet in a
//! two-sample t-test per dimension, and a cell flags "changed" when
//! either dimension rejects.

use crate::data::{DatasetGrid, MeasurementRecord};
use crate::error::{Error, Result};
use crate::hypothesis::two_sample_t;
use crate::verdict::{method_tag, FeatureTest, MonitorVerdict};

/// Which dimension(s) a comparison covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Feature {
    Radius,
    Height,
    Both,
}

fn values(records: &[MeasurementRecord], feature: Feature) -> Vec<f64> {
    records
        .iter()
        .map(|r| match feature {
            Feature::Radius => r.radius,
            Feature::Height => r.height,
            Feature::Both => unreachable!("extracted one feature at a time"),
        })
        .collect()
}

fn cell_label(rec: &MeasurementRecord) -> String {
    format!(
        "design {} / LP {} / SR {}",
        rec.design.design_dimension, rec.params.laser_power, rec.params.scan_rate
    )
}

fn assert_same_cell(reference: &[MeasurementRecord], query: &[MeasurementRecord]) -> Result<()> {
    let mut all = reference.iter().chain(query);
    let first = all.next().ok_or(Error::InsufficientData {
        context: "cell comparison".into(),
        needed: 2,
        got: 0,
    })?;
    const TOL: f64 = crate::data::DEFAULT_KEY_TOLERANCE;
    for rec in all {
        if (rec.design.design_dimension - first.design.design_dimension).abs() > TOL
            || (rec.params.laser_power - first.params.laser_power).abs() > TOL
            || (rec.params.scan_rate - first.params.scan_rate).abs() > TOL
        {
            return Err(Error::Argument(format!(
                "cell comparison mixes records from {} and {}",
                cell_label(first),
                cell_label(rec)
            )));
        }
    }
    Ok(())
}

/// Tests one cell's query samples against its reference samples.
///
/// The verdict is "changed" when any requested dimension's t-test
/// rejects at `alpha`.
pub fn compare_cell(
    reference: &[MeasurementRecord],
    query: &[MeasurementRecord],
    feature: Feature,
    alpha: f64,
) -> Result<MonitorVerdict> {
    assert_same_cell(reference, query)?;
    let singles: &[(Feature, &str)] = match feature {
        Feature::Radius => &[(Feature::Radius, "radius")],
        Feature::Height => &[(Feature::Height, "height")],
        Feature::Both => &[(Feature::Radius, "radius"), (Feature::Height, "height")],
    };
    let mut tests = Vec::new();
    for &(single, name) in singles {
        let outcome = two_sample_t(&values(reference, single), &values(query, single), alpha)?;
        tests.push(FeatureTest {
            feature: name.into(),
            outcome,
        });
    }
    Ok(MonitorVerdict::from_tests(
        method_tag::CELL_T,
        cell_label(&reference[0]),
        tests,
    ))
}

/// Compares every cell the two grids share, in cell-key order.
///
/// Errors when the grids share no cell; a reference and query that
/// never printed the same design under the same parameters cannot be
/// compared per cell at all.
pub fn compare_grids(
    reference: &DatasetGrid,
    query: &DatasetGrid,
    alpha: f64,
) -> Result<Vec<MonitorVerdict>> {
    let mut verdicts = Vec::new();
    for (key, ref_records) in reference.cells() {
        let query_records = query.cell(key.design_spec(), key.process_params());
        if query_records.is_empty() {
            continue;
        }
        verdicts.push(compare_cell(
            ref_records,
            query_records,
            Feature::Both,
            alpha,
        )?);
    }
    if verdicts.is_empty() {
        return Err(Error::InsufficientData {
            context: "cells shared by reference and query grids".into(),
            needed: 1,
            got: 0,
        });
    }
    Ok(verdicts)
}

/// Rejection counts per dimension over a verdict list.
pub fn rejection_counts(verdicts: &[MonitorVerdict]) -> (usize, usize) {
    let mut radius = 0;
    let mut height = 0;
    for v in verdicts {
        if let crate::verdict::Evidence::Tests(tests) = &v.evidence {
            for t in tests {
                if t.outcome.reject_null {
                    match t.feature.as_str() {
                        "radius" => radius += 1,
                        "height" => height += 1,
                        _ => {}
                    }
                }
            }
        }
    }
    (radius, height)
}
