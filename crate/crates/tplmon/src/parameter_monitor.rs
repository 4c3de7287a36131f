//! Monitoring in coefficient space. Bootstrap refits turn one design's
//! cells into a distribution over (a, b, c); a mean test compares two
//! such distributions, and leave-one-out thresholds judge a parameter
//! group the models were never trained on.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetGrid, DesignSpec, ProcessParams, DEFAULT_KEY_TOLERANCE};
use crate::error::{Error, Result};
use crate::hypothesis::{hotelling_t2_one_sample, mean_vector};
use crate::models::{fit_dose_response, FitConfig, ModelKind, PARAM_NAMES};
use crate::rng;
use crate::verdict::{method_tag, FeatureTest, MonitorVerdict, ParamVote};

/// A parameter group the voting rule tolerates this many rejections.
pub const DEFAULT_VOTE_CAP: usize = 2;

/// How one bootstrap distribution is built.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Refits to attempt.
    pub iterations: usize,
    /// Records drawn with replacement from each cell per refit.
    pub samples_per_group: usize,
    /// Fresh resamples allowed when a refit fails before the iteration
    /// counts as lost.
    pub retry_cap: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            iterations: 40,
            samples_per_group: 3,
            retry_cap: 5,
        }
    }
}

/// Fitted (a, b, c) vectors from repeated resampling of one design's
/// cells, in iteration order. Lost iterations are dropped, never padded.
#[derive(Clone, Debug, Serialize)]
pub struct BootstrapDistribution {
    pub kind: ModelKind,
    pub design: f64,
    /// (laser power, scan rate) of every source cell.
    pub groups: Vec<(f64, f64)>,
    pub seed: u64,
    /// Iterations requested; `vectors` may hold fewer.
    pub iterations: usize,
    pub vectors: Vec<[f64; 3]>,
}

impl BootstrapDistribution {
    pub fn mean(&self) -> [f64; 3] {
        mean_vector(&self.vectors)
    }

    /// Names of the three coefficients, in vector order.
    pub fn parameter_names(&self) -> [&'static str; 3] {
        names_for(self.kind)
    }
}

fn names_for(kind: ModelKind) -> [&'static str; 3] {
    match kind {
        ModelKind::Radius => [PARAM_NAMES[0], PARAM_NAMES[1], PARAM_NAMES[2]],
        ModelKind::Height => [PARAM_NAMES[3], PARAM_NAMES[4], PARAM_NAMES[5]],
    }
}

fn kind_tag(kind: ModelKind) -> u64 {
    match kind {
        ModelKind::Radius => 0x52,
        ModelKind::Height => 0x48,
    }
}

fn distinct_groups(groups: &[ProcessParams]) -> Vec<ProcessParams> {
    let mut seen: Vec<ProcessParams> = Vec::new();
    for g in groups {
        let dup = seen.iter().any(|s| {
            (s.laser_power - g.laser_power).abs() <= DEFAULT_KEY_TOLERANCE
                && (s.scan_rate - g.scan_rate).abs() <= DEFAULT_KEY_TOLERANCE
        });
        if !dup {
            seen.push(*g);
        }
    }
    seen.sort_by(|a, b| {
        a.laser_power
            .total_cmp(&b.laser_power)
            .then(a.scan_rate.total_cmp(&b.scan_rate))
    });
    seen
}

/// Resamples each cell with replacement and refits the dose-response
/// curve, once per iteration. Iterations run concurrently; each owns
/// the deterministic stream keyed by (seed, model, iteration), so the
/// result never depends on scheduling.
pub fn bootstrap_params(
    grid: &DatasetGrid,
    design: DesignSpec,
    groups: &[ProcessParams],
    kind: ModelKind,
    cfg: &BootstrapConfig,
    fit: &FitConfig,
    seed: u64,
) -> Result<BootstrapDistribution> {
    if cfg.iterations < 2 {
        return Err(Error::Argument(format!(
            "a single refit is not a distribution; need at least 2 bootstrap iterations, got {}",
            cfg.iterations
        )));
    }
    if cfg.samples_per_group == 0 {
        return Err(Error::Argument(
            "samples_per_group must be at least 1".into(),
        ));
    }
    let groups = distinct_groups(groups);
    if groups.len() < 3 {
        return Err(Error::InsufficientData {
            context: format!(
                "bootstrap for design {}: distinct parameter groups",
                design.design_dimension
            ),
            needed: 3,
            got: groups.len(),
        });
    }
    let mut cells: Vec<(f64, Vec<f64>)> = Vec::with_capacity(groups.len());
    for g in &groups {
        let records = grid.cell(design, *g);
        if records.len() < cfg.samples_per_group {
            return Err(Error::InsufficientData {
                context: format!(
                    "bootstrap cell design {} / LP {} / SR {}",
                    design.design_dimension, g.laser_power, g.scan_rate
                ),
                needed: cfg.samples_per_group,
                got: records.len(),
            });
        }
        let values = records
            .iter()
            .map(|r| match kind {
                ModelKind::Radius => r.radius,
                ModelKind::Height => r.height,
            })
            .collect();
        cells.push((g.dose(), values));
    }

    let tag = kind_tag(kind);
    let refits: Vec<Option<[f64; 3]>> = (0..cfg.iterations)
        .into_par_iter()
        .map(|iter| {
            let mut stream = rng::stream(seed, &[tag, iter as u64]);
            let mut points = Vec::with_capacity(cells.len() * cfg.samples_per_group);
            for _attempt in 0..=cfg.retry_cap {
                points.clear();
                for (dose, values) in &cells {
                    for _ in 0..cfg.samples_per_group {
                        let pick = rng::index(&mut stream, values.len());
                        points.push((*dose, values[pick]));
                    }
                }
                if let Ok(fitted) = fit_dose_response(&points, kind, fit) {
                    return Some([fitted.a, fitted.b, fitted.c]);
                }
            }
            None
        })
        .collect();

    let failures = refits.iter().filter(|r| r.is_none()).count();
    if failures * 5 > cfg.iterations {
        return Err(Error::BootstrapFailure(failures, cfg.iterations));
    }
    let vectors: Vec<[f64; 3]> = refits.into_iter().flatten().collect();
    Ok(BootstrapDistribution {
        kind,
        design: design.design_dimension,
        groups: groups
            .iter()
            .map(|g| (g.laser_power, g.scan_rate))
            .collect(),
        seed,
        iterations: cfg.iterations,
        vectors,
    })
}

fn check_comparable(
    reference: &BootstrapDistribution,
    query: &BootstrapDistribution,
) -> Result<()> {
    if reference.kind != query.kind {
        return Err(Error::Argument(format!(
            "cannot compare {:?} parameters against {:?} parameters",
            query.kind, reference.kind
        )));
    }
    let same_design = (reference.design - query.design).abs() <= DEFAULT_KEY_TOLERANCE;
    let same_groups = reference.groups.len() == query.groups.len()
        && reference
            .groups
            .iter()
            .zip(&query.groups)
            .all(|(a, b)| {
                (a.0 - b.0).abs() <= DEFAULT_KEY_TOLERANCE
                    && (a.1 - b.1).abs() <= DEFAULT_KEY_TOLERANCE
            });
    if !same_design || !same_groups {
        return Err(Error::Argument(format!(
            "distributions compare within one design and parameter-group set; \
             reference is design {} over {} groups, query is design {} over {} groups",
            reference.design,
            reference.groups.len(),
            query.design,
            query.groups.len()
        )));
    }
    Ok(())
}

/// Mean test between two bootstrap distributions of the same cell set:
/// the query mean is tested against the reference mean with the query's
/// own covariance.
pub fn test_same_group(
    reference: &BootstrapDistribution,
    query: &BootstrapDistribution,
    alpha: f64,
) -> Result<MonitorVerdict> {
    check_comparable(reference, query)?;
    let outcome = hotelling_t2_one_sample(&query.vectors, reference.mean(), alpha)?;
    let model = match reference.kind {
        ModelKind::Radius => "radius",
        ModelKind::Height => "height",
    };
    let cell = format!(
        "design {} / {} parameter groups / {model} coefficients",
        reference.design,
        reference.groups.len()
    );
    Ok(MonitorVerdict::from_tests(
        method_tag::SAME_GROUP,
        cell,
        vec![FeatureTest {
            feature: "model parameters".into(),
            outcome,
        }],
    ))
}

/// Acceptance range for one coefficient.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThresholdInterval {
    pub parameter: String,
    pub lower: f64,
    pub upper: f64,
}

impl ThresholdInterval {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// How per-fold intervals collapse into the final one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombineRule {
    /// min of lower limits, max of upper limits. Conservative: the
    /// target group sits outside the training folds.
    Envelope,
    /// Average the fold limits instead.
    Mean,
}

/// Settings for leave-one-out threshold estimation.
#[derive(Clone, Debug, Serialize)]
pub struct LooConfig {
    /// Tail mass left outside the starting central interval.
    pub alpha: f64,
    /// Fraction of the held-out group's refits the widened interval
    /// must contain.
    pub coverage: f64,
    /// Widening factor beyond which the parameter is declared
    /// unthresholdable.
    pub widen_cap: f64,
    pub combine: CombineRule,
    pub bootstrap: BootstrapConfig,
    pub fit: FitConfig,
}

impl Default for LooConfig {
    fn default() -> Self {
        LooConfig {
            alpha: 0.10,
            coverage: 0.95,
            widen_cap: 10.0,
            combine: CombineRule::Envelope,
            bootstrap: BootstrapConfig::default(),
            fit: FitConfig::default(),
        }
    }
}

/// One fold's contribution: thresholds estimated with `held_out`
/// excluded from the training bootstrap.
#[derive(Clone, Debug, Serialize)]
pub struct FoldThreshold {
    pub held_out: (f64, f64),
    pub intervals: [ThresholdInterval; 3],
    pub widen_factors: [f64; 3],
    /// Fraction of the held-out group's refits inside each interval.
    pub containment: [f64; 3],
}

/// Final thresholds plus the per-fold audit trail.
#[derive(Clone, Debug, Serialize)]
pub struct ThresholdSet {
    pub kind: ModelKind,
    pub design: f64,
    pub coverage: f64,
    pub combine: CombineRule,
    pub folds: Vec<FoldThreshold>,
    pub intervals: [ThresholdInterval; 3],
}

/// Linear-interpolation quantile of an ascending sample.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let w = h - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Smallest multiplicative factor on the half-widths that puts at
/// least `coverage` of `held` inside the interval.
fn minimal_factor(median: f64, lower_half: f64, upper_half: f64, held: &[f64], coverage: f64) -> f64 {
    let mut needed: Vec<f64> = held
        .iter()
        .map(|&v| {
            let (dist, half) = if v <= median {
                (median - v, lower_half)
            } else {
                (v - median, upper_half)
            };
            if dist == 0.0 {
                0.0
            } else if half == 0.0 {
                f64::INFINITY
            } else {
                dist / half
            }
        })
        .collect();
    needed.sort_by(f64::total_cmp);
    let k = (coverage * needed.len() as f64).ceil() as usize;
    if k == 0 {
        0.0
    } else {
        needed[k.min(needed.len()) - 1]
    }
}

pub fn combine_fold_intervals(
    folds: &[FoldThreshold],
    rule: CombineRule,
    names: [&'static str; 3],
) -> [ThresholdInterval; 3] {
    std::array::from_fn(|p| {
        let lowers = folds.iter().map(|f| f.intervals[p].lower);
        let uppers = folds.iter().map(|f| f.intervals[p].upper);
        let (lower, upper) = match rule {
            CombineRule::Envelope => (
                lowers.fold(f64::INFINITY, f64::min),
                uppers.fold(f64::NEG_INFINITY, f64::max),
            ),
            CombineRule::Mean => {
                let n = folds.len() as f64;
                (lowers.sum::<f64>() / n, uppers.sum::<f64>() / n)
            }
        };
        ThresholdInterval {
            parameter: names[p].to_string(),
            lower,
            upper,
        }
    })
}

/// Thresholds for a parameter group that is absent from the data: each
/// known group takes a turn as the stand-in unknown. A fold's interval
/// starts at the central (1 − alpha) range of the bootstrap built
/// without the held-out group and is scaled about its median until it
/// contains `coverage` of the refits built with every known group.
pub fn loo_thresholds(
    grid: &DatasetGrid,
    design: DesignSpec,
    known_groups: &[ProcessParams],
    kind: ModelKind,
    cfg: &LooConfig,
    seed: u64,
) -> Result<ThresholdSet> {
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::Argument(format!(
            "alpha must be inside (0, 1), got {}",
            cfg.alpha
        )));
    }
    if !(0.0..=1.0).contains(&cfg.coverage) {
        return Err(Error::Argument(format!(
            "coverage must be inside [0, 1], got {}",
            cfg.coverage
        )));
    }
    let knowns = distinct_groups(known_groups);
    if knowns.len() < 4 {
        return Err(Error::InsufficientData {
            context: format!(
                "leave-one-out thresholds for design {}: known parameter groups",
                design.design_dimension
            ),
            needed: 4,
            got: knowns.len(),
        });
    }
    let names = names_for(kind);
    let mut folds = Vec::with_capacity(knowns.len());
    for (i, held_out) in knowns.iter().enumerate() {
        let rest: Vec<ProcessParams> = knowns
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, g)| *g)
            .collect();
        let without = bootstrap_params(
            grid,
            design,
            &rest,
            kind,
            &cfg.bootstrap,
            &cfg.fit,
            child_seed(seed, &[0x44, i as u64]),
        )?;
        let with_all = bootstrap_params(
            grid,
            design,
            &knowns,
            kind,
            &cfg.bootstrap,
            &cfg.fit,
            child_seed(seed, &[0x45, i as u64]),
        )?;
        let mut intervals: Vec<ThresholdInterval> = Vec::with_capacity(3);
        let mut widen_factors = [0.0; 3];
        let mut containment = [0.0; 3];
        for p in 0..3 {
            let mut train: Vec<f64> = without.vectors.iter().map(|v| v[p]).collect();
            train.sort_by(f64::total_cmp);
            let median = quantile(&train, 0.5);
            let lower_half = median - quantile(&train, cfg.alpha / 2.0);
            let upper_half = quantile(&train, 1.0 - cfg.alpha / 2.0) - median;
            let held: Vec<f64> = with_all.vectors.iter().map(|v| v[p]).collect();
            let factor = minimal_factor(median, lower_half, upper_half, &held, cfg.coverage);
            if factor > cfg.widen_cap {
                return Err(Error::ThresholdFailure {
                    parameter: names[p].to_string(),
                    factor,
                    cap: cfg.widen_cap,
                });
            }
            let interval = ThresholdInterval {
                parameter: names[p].to_string(),
                lower: median - factor * lower_half,
                upper: median + factor * upper_half,
            };
            containment[p] = held.iter().filter(|&&v| interval.contains(v)).count() as f64
                / held.len() as f64;
            widen_factors[p] = factor;
            intervals.push(interval);
        }
        folds.push(FoldThreshold {
            held_out: (held_out.laser_power, held_out.scan_rate),
            intervals: intervals.try_into().expect("three parameters"),
            widen_factors,
            containment,
        });
    }
    let intervals = combine_fold_intervals(&folds, cfg.combine, names);
    Ok(ThresholdSet {
        kind,
        design: design.design_dimension,
        coverage: cfg.coverage,
        combine: cfg.combine,
        folds,
        intervals,
    })
}

fn child_seed(seed: u64, tags: &[u64]) -> u64 {
    rng::stream(seed, tags).gen()
}

/// Votes the six coefficient means of a query pair against their
/// thresholds. The verdict stays "unchanged" while rejections do not
/// exceed `vote_cap`.
pub fn monitor_unknown_group(
    thresholds: &[ThresholdInterval],
    query_radius: &BootstrapDistribution,
    query_height: &BootstrapDistribution,
    vote_cap: usize,
) -> Result<MonitorVerdict> {
    if query_radius.kind != ModelKind::Radius || query_height.kind != ModelKind::Height {
        return Err(Error::Argument(
            "query distributions must be one radius and one height bootstrap".into(),
        ));
    }
    if query_radius.vectors.is_empty() || query_height.vectors.is_empty() {
        return Err(Error::Argument("query distributions must be nonempty".into()));
    }
    let r_mean = query_radius.mean();
    let h_mean = query_height.mean();
    let mut votes = Vec::with_capacity(PARAM_NAMES.len());
    for (i, name) in PARAM_NAMES.iter().enumerate() {
        let interval = thresholds
            .iter()
            .find(|t| t.parameter == *name)
            .ok_or_else(|| Error::IncompleteThresholds(name.to_string()))?;
        let query_mean = if i < 3 { r_mean[i] } else { h_mean[i - 3] };
        votes.push(ParamVote {
            parameter: name.to_string(),
            query_mean,
            lower: interval.lower,
            upper: interval.upper,
            rejected: !interval.contains(query_mean),
        });
    }
    let cell = format!("design {} / unseen parameter group", query_radius.design);
    Ok(MonitorVerdict::from_votes(
        method_tag::UNKNOWN_GROUP,
        cell,
        votes,
        vote_cap,
    ))
}

/// Radius and height thresholds in one list, ready for
/// [`monitor_unknown_group`].
pub fn six_thresholds(
    grid: &DatasetGrid,
    design: DesignSpec,
    known_groups: &[ProcessParams],
    cfg: &LooConfig,
    seed: u64,
) -> Result<Vec<ThresholdInterval>> {
    let radius = loo_thresholds(grid, design, known_groups, ModelKind::Radius, cfg, seed)?;
    let height = loo_thresholds(grid, design, known_groups, ModelKind::Height, cfg, seed)?;
    Ok(radius
        .intervals
        .into_iter()
        .chain(height.intervals)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twin::{default_groups, generate_grid, parameter_shift_pair, NoiseSpec, StatusProfile};
    use crate::verdict::{Decision, Evidence};

    const DESIGN: DesignSpec = DesignSpec {
        design_dimension: 2.0,
    };

    fn quick_bootstrap(iterations: usize) -> BootstrapConfig {
        BootstrapConfig {
            iterations,
            ..BootstrapConfig::default()
        }
    }

    fn shift_grid(status1: bool, seed: u64, n: usize) -> DatasetGrid {
        let (s1, s2) = parameter_shift_pair();
        let profile = if status1 { s1 } else { s2 };
        generate_grid(
            &profile,
            &[2.0],
            &default_groups(),
            n,
            seed,
            if status1 { "status-1" } else { "status-2" },
        )
        .unwrap()
    }

    #[test]
    fn zero_noise_refits_land_on_the_generative_coefficients() {
        let (s1, _) = parameter_shift_pair();
        let noiseless = StatusProfile {
            trends: s1.trends,
            noise: NoiseSpec::new(0.0, 0.0, 0.0).unwrap(),
        };
        let grid =
            generate_grid(&noiseless, &[2.0], &default_groups(), 5, 3, "status-1").unwrap();
        let (true_r, true_h) = noiseless.params_at(2.0);
        let truth = crate::models::param_vector(&true_r, &true_h);
        for (kind, offset) in [(ModelKind::Radius, 0), (ModelKind::Height, 3)] {
            let dist = bootstrap_params(
                &grid,
                DESIGN,
                &default_groups(),
                kind,
                &quick_bootstrap(8),
                &FitConfig::default(),
                11,
            )
            .unwrap();
            assert_eq!(dist.vectors.len(), 8);
            for v in &dist.vectors {
                for p in 0..3 {
                    let want = truth[offset + p];
                    assert!(
                        (v[p] - want).abs() <= 1e-4 * want.abs().max(1.0),
                        "{:?} param {p}: {} vs {want}",
                        kind,
                        v[p]
                    );
                }
                let g_min = dist
                    .groups
                    .iter()
                    .map(|(lp, sr)| lp * lp / sr)
                    .fold(f64::INFINITY, f64::min);
                assert!(v[1] * g_min > 1.0, "fitted b stays inside the model domain");
            }
        }
    }

    #[test]
    fn same_seed_gives_bit_identical_distributions() {
        let grid = shift_grid(true, 21, 8);
        let run = |seed| {
            bootstrap_params(
                &grid,
                DESIGN,
                &default_groups(),
                ModelKind::Radius,
                &quick_bootstrap(10),
                &FitConfig::default(),
                seed,
            )
            .unwrap()
        };
        let (a, b, c) = (run(7), run(7), run(8));
        let bits =
            |d: &BootstrapDistribution| -> Vec<u64> {
                d.vectors.iter().flatten().map(|v| v.to_bits()).collect()
            };
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn single_iteration_is_rejected() {
        let grid = shift_grid(true, 22, 8);
        let err = bootstrap_params(
            &grid,
            DESIGN,
            &default_groups(),
            ModelKind::Radius,
            &quick_bootstrap(1),
            &FitConfig::default(),
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn too_few_groups_or_records_are_reported() {
        let grid = shift_grid(true, 23, 8);
        let two = &default_groups()[..2];
        let err = bootstrap_params(
            &grid,
            DESIGN,
            two,
            ModelKind::Radius,
            &quick_bootstrap(4),
            &FitConfig::default(),
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InsufficientData { needed: 3, .. }));

        let hungry = BootstrapConfig {
            samples_per_group: 99,
            ..quick_bootstrap(4)
        };
        let err = bootstrap_params(
            &grid,
            DESIGN,
            &default_groups(),
            ModelKind::Radius,
            &hungry,
            &FitConfig::default(),
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InsufficientData { needed: 99, .. }));
    }

    #[test]
    fn query_equal_to_reference_scores_zero() {
        let grid = shift_grid(true, 24, 8);
        let dist = bootstrap_params(
            &grid,
            DESIGN,
            &default_groups(),
            ModelKind::Height,
            &quick_bootstrap(8),
            &FitConfig::default(),
            5,
        )
        .unwrap();
        let verdict = test_same_group(&dist, &dist, 0.10).unwrap();
        assert_eq!(verdict.decision, Decision::Unchanged);
        if let Evidence::Tests(tests) = &verdict.evidence {
            assert!(tests[0].outcome.statistic.abs() < 1e-9);
        } else {
            panic!("expected test evidence");
        }
    }

    #[test]
    fn mismatched_distributions_cannot_be_compared() {
        let grid = shift_grid(true, 25, 8);
        let radius = bootstrap_params(
            &grid,
            DESIGN,
            &default_groups(),
            ModelKind::Radius,
            &quick_bootstrap(6),
            &FitConfig::default(),
            5,
        )
        .unwrap();
        let height = bootstrap_params(
            &grid,
            DESIGN,
            &default_groups(),
            ModelKind::Height,
            &quick_bootstrap(6),
            &FitConfig::default(),
            5,
        )
        .unwrap();
        assert!(matches!(
            test_same_group(&radius, &height, 0.10),
            Err(Error::Argument(_))
        ));
        let fewer = bootstrap_params(
            &grid,
            DESIGN,
            &default_groups()[..4],
            ModelKind::Radius,
            &quick_bootstrap(6),
            &FitConfig::default(),
            5,
        )
        .unwrap();
        assert!(matches!(
            test_same_group(&radius, &fewer, 0.10),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn coefficient_shift_is_detected_and_the_null_stays_calm() {
        let reference_grid = shift_grid(true, 30, 12);
        let shifted_grid = shift_grid(false, 31, 12);
        let fit = FitConfig::default();
        // The reference mean enters the test as if exact, so it gets a
        // much deeper bootstrap than the queries; in-control queries
        // resample the same records the reference was built from.
        let reference = bootstrap_params(
            &reference_grid,
            DESIGN,
            &default_groups(),
            ModelKind::Radius,
            &quick_bootstrap(240),
            &fit,
            1000,
        )
        .unwrap();
        let query_cfg = quick_bootstrap(12);
        let mut false_alarms = 0;
        let mut detections = 0;
        let trials = 20u64;
        for t in 0..trials {
            let null_query = bootstrap_params(
                &reference_grid,
                DESIGN,
                &default_groups(),
                ModelKind::Radius,
                &query_cfg,
                &fit,
                2000 + t,
            )
            .unwrap();
            false_alarms +=
                test_same_group(&reference, &null_query, 0.10).unwrap().changed() as usize;
            let shifted = bootstrap_params(
                &shifted_grid,
                DESIGN,
                &default_groups(),
                ModelKind::Radius,
                &query_cfg,
                &fit,
                3000 + t,
            )
            .unwrap();
            detections +=
                test_same_group(&reference, &shifted, 0.10).unwrap().changed() as usize;
        }
        assert_eq!(detections, trials as usize, "offset coefficients must be flagged");
        // The reference mean is itself estimated, which inflates the
        // null rejection rate above alpha by about (1 + Nq/Nr); the
        // bound allows for that on top of the nominal 10%.
        assert!(
            false_alarms <= 3,
            "same-status queries flagged {false_alarms} of {trials}"
        );
    }

    #[test]
    fn more_iterations_do_not_lose_power() {
        let (s1, _) = parameter_shift_pair();
        let mut nudged = s1;
        nudged.trends[2].intercept += 0.004;
        let reference_grid = shift_grid(true, 31, 12);
        let fit = FitConfig::default();
        let trials = 10;
        let mut detected = [0usize; 2];
        for (slot, iters) in [(0usize, 12usize), (1, 24)] {
            for t in 0..trials {
                let reference = bootstrap_params(
                    &reference_grid,
                    DESIGN,
                    &default_groups(),
                    ModelKind::Radius,
                    &quick_bootstrap(iters),
                    &fit,
                    4000 + t,
                )
                .unwrap();
                let query_grid = generate_grid(
                    &nudged,
                    &[2.0],
                    &default_groups(),
                    12,
                    600 + t,
                    "status-2",
                )
                .unwrap();
                let query = bootstrap_params(
                    &query_grid,
                    DESIGN,
                    &default_groups(),
                    ModelKind::Radius,
                    &quick_bootstrap(iters),
                    &fit,
                    5000 + t,
                )
                .unwrap();
                detected[slot] +=
                    test_same_group(&reference, &query, 0.10).unwrap().changed() as usize;
            }
        }
        let (p_single, p_double) = (
            detected[0] as f64 / trials as f64,
            detected[1] as f64 / trials as f64,
        );
        let se = (2.0 * 0.25 / trials as f64).sqrt();
        assert!(
            p_double >= p_single - 3.0 * se,
            "power fell from {p_single} to {p_double}"
        );
    }

    #[test]
    fn folds_contain_their_held_out_refits() {
        let grid = shift_grid(true, 32, 10);
        let cfg = LooConfig {
            bootstrap: quick_bootstrap(12),
            ..LooConfig::default()
        };
        let set = loo_thresholds(
            &grid,
            DESIGN,
            &default_groups()[..5],
            ModelKind::Radius,
            &cfg,
            9,
        )
        .unwrap();
        assert_eq!(set.folds.len(), 5);
        for fold in &set.folds {
            for p in 0..3 {
                assert!(
                    fold.containment[p] >= cfg.coverage,
                    "fold {:?} parameter {p} contains only {}",
                    fold.held_out,
                    fold.containment[p]
                );
                assert!(fold.intervals[p].lower <= fold.intervals[p].upper);
            }
        }
        for p in 0..3 {
            let lo = set
                .folds
                .iter()
                .map(|f| f.intervals[p].lower)
                .fold(f64::INFINITY, f64::min);
            let hi = set
                .folds
                .iter()
                .map(|f| f.intervals[p].upper)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(set.intervals[p].lower, lo);
            assert_eq!(set.intervals[p].upper, hi);
        }
    }

    #[test]
    fn zero_coverage_collapses_to_the_median() {
        let grid = shift_grid(true, 33, 10);
        let cfg = LooConfig {
            coverage: 0.0,
            combine: CombineRule::Mean,
            bootstrap: quick_bootstrap(10),
            ..LooConfig::default()
        };
        let set = loo_thresholds(
            &grid,
            DESIGN,
            &default_groups()[..5],
            ModelKind::Height,
            &cfg,
            9,
        )
        .unwrap();
        for fold in &set.folds {
            for p in 0..3 {
                assert_eq!(fold.widen_factors[p], 0.0);
                assert_eq!(fold.intervals[p].lower, fold.intervals[p].upper);
            }
        }
        for interval in &set.intervals {
            assert_eq!(interval.lower, interval.upper);
        }
    }

    #[test]
    fn envelope_only_widens_as_folds_accumulate() {
        let grid = shift_grid(true, 34, 10);
        let cfg = LooConfig {
            bootstrap: quick_bootstrap(10),
            ..LooConfig::default()
        };
        let set = loo_thresholds(
            &grid,
            DESIGN,
            &default_groups(),
            ModelKind::Radius,
            &cfg,
            9,
        )
        .unwrap();
        let names = names_for(ModelKind::Radius);
        for upto in 1..set.folds.len() {
            let narrow = combine_fold_intervals(&set.folds[..upto], CombineRule::Envelope, names);
            let wide =
                combine_fold_intervals(&set.folds[..upto + 1], CombineRule::Envelope, names);
            for p in 0..3 {
                assert!(wide[p].lower <= narrow[p].lower);
                assert!(wide[p].upper >= narrow[p].upper);
            }
        }
    }

    #[test]
    fn threshold_estimation_is_deterministic() {
        let grid = shift_grid(true, 35, 10);
        let cfg = LooConfig {
            bootstrap: quick_bootstrap(8),
            ..LooConfig::default()
        };
        let run = || {
            serde_json::to_string(
                &loo_thresholds(&grid, DESIGN, &default_groups()[..5], ModelKind::Radius, &cfg, 9)
                    .unwrap(),
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn too_few_known_groups_are_rejected() {
        let grid = shift_grid(true, 36, 10);
        let err = loo_thresholds(
            &grid,
            DESIGN,
            &default_groups()[..3],
            ModelKind::Radius,
            &LooConfig::default(),
            9,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InsufficientData { needed: 4, .. }));
    }

    fn constant_distribution(kind: ModelKind, value: [f64; 3]) -> BootstrapDistribution {
        BootstrapDistribution {
            kind,
            design: 2.0,
            groups: vec![(50.0, 40.0), (50.0, 50.0), (50.0, 60.0)],
            seed: 0,
            iterations: 4,
            vectors: vec![value; 4],
        }
    }

    fn unit_thresholds() -> Vec<ThresholdInterval> {
        PARAM_NAMES
            .iter()
            .map(|name| ThresholdInterval {
                parameter: name.to_string(),
                lower: 0.0,
                upper: 1.0,
            })
            .collect()
    }

    #[test]
    fn two_rejections_stay_unchanged_and_three_flip_the_verdict() {
        let thresholds = unit_thresholds();
        let inside = [0.5, 0.5, 0.5];
        let radius_out_two = constant_distribution(ModelKind::Radius, [2.0, 2.0, 0.5]);
        let height_in = constant_distribution(ModelKind::Height, inside);
        let two = monitor_unknown_group(&thresholds, &radius_out_two, &height_in, DEFAULT_VOTE_CAP)
            .unwrap();
        assert_eq!(two.decision, Decision::Unchanged);

        let radius_out_three = constant_distribution(ModelKind::Radius, [2.0, 2.0, 2.0]);
        let three =
            monitor_unknown_group(&thresholds, &radius_out_three, &height_in, DEFAULT_VOTE_CAP)
                .unwrap();
        assert_eq!(three.decision, Decision::Changed);
        if let Evidence::Votes { votes, .. } = &three.evidence {
            assert_eq!(votes.iter().filter(|v| v.rejected).count(), 3);
        } else {
            panic!("expected vote evidence");
        }
    }

    #[test]
    fn missing_interval_is_named() {
        let mut thresholds = unit_thresholds();
        thresholds.retain(|t| t.parameter != "b_H");
        let radius = constant_distribution(ModelKind::Radius, [0.5, 0.5, 0.5]);
        let height = constant_distribution(ModelKind::Height, [0.5, 0.5, 0.5]);
        let err =
            monitor_unknown_group(&thresholds, &radius, &height, DEFAULT_VOTE_CAP).unwrap_err();
        match err {
            Error::IncompleteThresholds(name) => assert_eq!(name, "b_H"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn widening_thresholds_never_creates_a_rejection() {
        let thresholds = unit_thresholds();
        let radius = constant_distribution(ModelKind::Radius, [1.5, 0.5, -0.5]);
        let height = constant_distribution(ModelKind::Height, [0.5, 3.0, 0.5]);
        let before =
            monitor_unknown_group(&thresholds, &radius, &height, DEFAULT_VOTE_CAP).unwrap();
        let rejections =
            |v: &MonitorVerdict| match &v.evidence {
                Evidence::Votes { votes, .. } => votes.iter().filter(|x| x.rejected).count(),
                _ => unreachable!(),
            };
        let wider: Vec<ThresholdInterval> = thresholds
            .iter()
            .map(|t| ThresholdInterval {
                parameter: t.parameter.clone(),
                lower: t.lower - 5.0,
                upper: t.upper + 5.0,
            })
            .collect();
        let after = monitor_unknown_group(&wider, &radius, &height, DEFAULT_VOTE_CAP).unwrap();
        assert!(rejections(&after) <= rejections(&before));
        assert!(!(before.decision == Decision::Unchanged && after.decision == Decision::Changed));
    }

    #[test]
    fn unseen_group_passes_same_status_and_fails_after_the_shift() {
        let knowns = &default_groups()[..5];
        let unseen_excluded_reference = shift_grid(true, 40, 12);
        let cfg = LooConfig {
            bootstrap: quick_bootstrap(16),
            ..LooConfig::default()
        };
        let thresholds = six_thresholds(&unseen_excluded_reference, DESIGN, knowns, &cfg, 9).unwrap();

        let query = |status1: bool, seed| {
            let grid = shift_grid(status1, seed, 12);
            let radius = bootstrap_params(
                &grid,
                DESIGN,
                &default_groups(),
                ModelKind::Radius,
                &cfg.bootstrap,
                &cfg.fit,
                seed,
            )
            .unwrap();
            let height = bootstrap_params(
                &grid,
                DESIGN,
                &default_groups(),
                ModelKind::Height,
                &cfg.bootstrap,
                &cfg.fit,
                seed + 1,
            )
            .unwrap();
            monitor_unknown_group(&thresholds, &radius, &height, DEFAULT_VOTE_CAP).unwrap()
        };
        assert_eq!(query(true, 41).decision, Decision::Unchanged);
        assert_eq!(query(false, 42).decision, Decision::Changed);
    }
}
