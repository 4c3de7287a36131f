//! Physics-informed dimension models and their fitting.
//!
//! Both structure dimensions follow the exposure-dose proxy g = LP²/SR:
//!
//! ```text
//! R(LP, SR) = a_R · [ln(b_R · g)]^(1/2)        + c_R   (needs b_R·g > 1)
//! H(LP, SR) = a_H · [(b_H · g)^(1/2) − 1]^(1/2) + c_H   (needs √(b_H·g) > 1)
//! ```
//!
//! Fitting is damped Gauss-Newton over (a, u, c) with b = (1 + eᵘ)/g_min,
//! which keeps b·g > 1 at every training dose for any u, so no iterate
//! can step outside the models' domain. Sixteen log-spaced starts for eᵘ
//! make the outcome deterministic and independent of luck in any single
//! initialization.

use crate::data::{DatasetGrid, ProcessParams};
use crate::error::{Error, Result};
use crate::linalg;
use serde::{Deserialize, Serialize};

/// Coefficients of the radius model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusModelParams {
    #[serde(rename = "a_R")]
    pub a: f64,
    #[serde(rename = "b_R")]
    pub b: f64,
    #[serde(rename = "c_R")]
    pub c: f64,
}

/// Coefficients of the height model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightModelParams {
    #[serde(rename = "a_H")]
    pub a: f64,
    #[serde(rename = "b_H")]
    pub b: f64,
    #[serde(rename = "c_H")]
    pub c: f64,
}

/// Which dimension a fit is for. The two models share all machinery
/// except the dose transform φ and its derivative.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Radius,
    Height,
}

impl ModelKind {
    /// Dose transform φ(b·g); the model is a·φ + c.
    fn phi(self, bg: f64) -> f64 {
        match self {
            ModelKind::Radius => bg.ln().sqrt(),
            ModelKind::Height => (bg.sqrt() - 1.0).sqrt(),
        }
    }

    /// ∂φ/∂b at dose g.
    fn dphi_db(self, b: f64, g: f64) -> f64 {
        match self {
            ModelKind::Radius => 1.0 / (2.0 * self.phi(b * g) * b),
            ModelKind::Height => {
                let s = (b * g).sqrt();
                s / (4.0 * b * (s - 1.0).sqrt())
            }
        }
    }

    fn domain_ok(self, bg: f64) -> bool {
        // Both transforms need bg > 1; √(bg) > 1 is the same condition.
        bg > 1.0
    }

    fn domain_requirement(self) -> &'static str {
        match self {
            ModelKind::Radius => "b_R · LP²/SR > 1",
            ModelKind::Height => "(b_H · LP²/SR)^(1/2) > 1",
        }
    }
}

fn evaluate(kind: ModelKind, a: f64, b: f64, c: f64, p: ProcessParams) -> Result<f64> {
    let g = p.dose();
    if !(b > 0.0) || !kind.domain_ok(b * g) {
        return Err(Error::DomainViolation {
            dose: g,
            requirement: kind.domain_requirement().into(),
        });
    }
    Ok(a * kind.phi(b * g) + c)
}

/// Predicted equivalent radius at the given process parameters.
pub fn predict_radius(params: &RadiusModelParams, p: ProcessParams) -> Result<f64> {
    evaluate(ModelKind::Radius, params.a, params.b, params.c, p)
}

/// Predicted average height at the given process parameters.
pub fn predict_height(params: &HeightModelParams, p: ProcessParams) -> Result<f64> {
    evaluate(ModelKind::Height, params.a, params.b, params.c, p)
}

/// Multi-start and convergence settings for the nonlinear fit.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FitConfig {
    pub starts: usize,
    pub max_iterations: usize,
    pub relative_tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            starts: 16,
            max_iterations: 200,
            relative_tolerance: 1e-10,
        }
    }
}

/// One fitted dose-response curve.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SingleFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Sum of squared residuals at the optimum.
    pub sse: f64,
}

const U_MIN: f64 = -18.420_680_743_952_367; // ln(1e-8)
const U_MAX: f64 = 60.0;

fn b_of(u: f64, g_min: f64) -> f64 {
    (1.0 + u.exp()) / g_min
}

fn sse_of(points: &[(f64, f64)], kind: ModelKind, a: f64, u: f64, c: f64, g_min: f64) -> f64 {
    let b = b_of(u, g_min);
    points
        .iter()
        .map(|&(g, y)| {
            let r = a * kind.phi(b * g) + c - y;
            r * r
        })
        .sum()
}

/// Initial (a, c) for a given start's b: slope from the observed value
/// range over the φ range, offset from the means.
fn init_linear(points: &[(f64, f64)], kind: ModelKind, b: f64) -> (f64, f64) {
    let phis: Vec<f64> = points.iter().map(|&(g, _)| kind.phi(b * g)).collect();
    let (mut phi_min, mut phi_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut phi_sum, mut y_sum) = (0.0, 0.0);
    for (&(_, y), &ph) in points.iter().zip(&phis) {
        phi_min = phi_min.min(ph);
        phi_max = phi_max.max(ph);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
        phi_sum += ph;
        y_sum += y;
    }
    let n = points.len() as f64;
    let a0 = if phi_max - phi_min > 1e-9 {
        (y_max - y_min) / (phi_max - phi_min)
    } else {
        0.0
    };
    (a0, y_sum / n - a0 * phi_sum / n)
}

/// Fits a·φ(b·g) + c to (dose, value) points by damped Gauss-Newton
/// from every start, keeping the lowest-SSE result (first start wins
/// ties, so the outcome is deterministic).
pub fn fit_dose_response(
    points: &[(f64, f64)],
    kind: ModelKind,
    cfg: &FitConfig,
) -> Result<SingleFit> {
    let mut distinct_doses: Vec<f64> = Vec::new();
    for &(g, _) in points {
        if !distinct_doses.iter().any(|d| (d - g).abs() <= 1e-9) {
            distinct_doses.push(g);
        }
    }
    if distinct_doses.len() < 3 {
        return Err(Error::InsufficientData {
            context: "dose-response fit (3 unknowns)".into(),
            needed: 3,
            got: distinct_doses.len(),
        });
    }
    let g_min = distinct_doses.iter().copied().fold(f64::INFINITY, f64::min);

    let mut best: Option<(f64, f64, f64, f64)> = None;
    for start in 0..cfg.starts {
        // e^u start grid, log-spaced over [1e-2, 1e3].
        let exponent = -2.0 + 5.0 * start as f64 / (cfg.starts - 1).max(1) as f64;
        let t0 = 10f64.powf(exponent);
        let mut u = t0.ln().clamp(U_MIN, U_MAX);
        let (mut a, mut c) = init_linear(points, kind, b_of(u, g_min));
        let mut sse = sse_of(points, kind, a, u, c, g_min);
        if !sse.is_finite() {
            continue;
        }
        let mut lambda = 1e-3;
        for _ in 0..cfg.max_iterations {
            let b = b_of(u, g_min);
            let eu = u.exp();
            let mut jtj = [[0.0_f64; 3]; 3];
            let mut jtr = [0.0_f64; 3];
            for &(g, y) in points {
                let ph = kind.phi(b * g);
                let row = [ph, a * kind.dphi_db(b, g) * (eu / g_min), 1.0];
                let resid = a * ph + c - y;
                for i in 0..3 {
                    for j in 0..3 {
                        jtj[i][j] += row[i] * row[j];
                    }
                    jtr[i] += row[i] * resid;
                }
            }
            let mut stepped = false;
            let mut relative_drop = f64::INFINITY;
            for _ in 0..30 {
                let mut augmented = jtj;
                for i in 0..3 {
                    augmented[i][i] += lambda * jtj[i][i].max(1e-12);
                }
                let delta = match linalg::solve(augmented, [-jtr[0], -jtr[1], -jtr[2]]) {
                    Ok(d) => d,
                    Err(_) => {
                        lambda *= 4.0;
                        continue;
                    }
                };
                let cand_a = a + delta[0];
                let cand_u = (u + delta[1]).clamp(U_MIN, U_MAX);
                let cand_c = c + delta[2];
                let cand_sse = sse_of(points, kind, cand_a, cand_u, cand_c, g_min);
                if cand_sse.is_finite() && cand_sse < sse {
                    relative_drop = (sse - cand_sse) / sse.max(1e-300);
                    a = cand_a;
                    u = cand_u;
                    c = cand_c;
                    sse = cand_sse;
                    lambda = (lambda / 3.0).max(1e-12);
                    stepped = true;
                    break;
                }
                lambda *= 4.0;
            }
            if !stepped || relative_drop < cfg.relative_tolerance {
                break;
            }
        }
        if best.is_none() || sse < best.unwrap().3 {
            best = Some((a, b_of(u, g_min), c, sse));
        }
    }
    let (a, b, c, sse) = best.ok_or(Error::NoConvergence(cfg.max_iterations))?;
    Ok(SingleFit { a, b, c, sse })
}

/// Both models fitted for one design, with residual norms and the
/// training cells that produced them.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DesignFit {
    pub design: f64,
    pub radius: RadiusModelParams,
    pub height: HeightModelParams,
    pub radius_residual_norm: f64,
    pub height_residual_norm: f64,
    pub training_cells: Vec<(f64, f64)>,
}

/// Fits across the parameter groups of a single design.
///
/// `cells` holds one entry per (LP, SR) group; at least 3 groups with
/// distinct doses are required to identify the 3 coefficients.
pub fn fit_models(cells: &[(ProcessParams, Vec<(f64, f64)>)], cfg: &FitConfig) -> Result<(RadiusModelParams, HeightModelParams, f64, f64)> {
    let mut r_points = Vec::new();
    let mut h_points = Vec::new();
    for (params, samples) in cells {
        if samples.is_empty() {
            return Err(Error::InsufficientData {
                context: format!(
                    "empty training cell at LP = {}, SR = {}",
                    params.laser_power, params.scan_rate
                ),
                needed: 1,
                got: 0,
            });
        }
        let g = params.dose();
        for &(r, h) in samples {
            r_points.push((g, r));
            h_points.push((g, h));
        }
    }
    let radius_fit = fit_dose_response(&r_points, ModelKind::Radius, cfg)?;
    let height_fit = fit_dose_response(&h_points, ModelKind::Height, cfg)?;
    Ok((
        RadiusModelParams {
            a: radius_fit.a,
            b: radius_fit.b,
            c: radius_fit.c,
        },
        HeightModelParams {
            a: height_fit.a,
            b: height_fit.b,
            c: height_fit.c,
        },
        radius_fit.sse.sqrt(),
        height_fit.sse.sqrt(),
    ))
}

/// Per-design fits over a whole grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FittedModelSet {
    pub fits: Vec<DesignFit>,
}

impl FittedModelSet {
    pub fn fit(grid: &DatasetGrid, cfg: &FitConfig) -> Result<FittedModelSet> {
        let mut fits = Vec::new();
        for design in grid.designs() {
            let mut cells = Vec::new();
            let mut cell_keys = Vec::new();
            for (key, records) in grid.cells() {
                if (key.design - design).abs() <= 1e-9 {
                    let params = ProcessParams {
                        laser_power: key.laser_power,
                        scan_rate: key.scan_rate,
                    };
                    cells.push((
                        params,
                        records.iter().map(|r| (r.radius, r.height)).collect(),
                    ));
                    cell_keys.push((key.laser_power, key.scan_rate));
                }
            }
            let (radius, height, rn, hn) = fit_models(&cells, cfg)?;
            fits.push(DesignFit {
                design,
                radius,
                height,
                radius_residual_norm: rn,
                height_residual_norm: hn,
                training_cells: cell_keys,
            });
        }
        Ok(FittedModelSet { fits })
    }

    pub fn for_design(&self, design: f64) -> Option<&DesignFit> {
        self.fits.iter().find(|f| (f.design - design).abs() <= 1e-9)
    }
}

/// Canonical parameter order used everywhere six coefficients travel
/// together.
pub const PARAM_NAMES: [&str; 6] = ["a_R", "b_R", "c_R", "a_H", "b_H", "c_H"];

/// The six coefficients of one design in canonical order.
pub fn param_vector(radius: &RadiusModelParams, height: &HeightModelParams) -> [f64; 6] {
    [radius.a, radius.b, radius.c, height.a, height.b, height.c]
}

/// One straight line of a parameter-versus-design trend.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
    pub residual_norm: f64,
}

impl Line {
    pub fn at(&self, design: f64) -> f64 {
        self.slope * design + self.intercept
    }
}

/// Linear trend of each coefficient as a function of design dimension.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamTrend {
    /// Lines in `PARAM_NAMES` order.
    pub lines: [Line; 6],
}

/// Ordinary least-squares line through (design, coefficient) points,
/// one per parameter.
pub fn fit_param_trend(set: &FittedModelSet) -> Result<ParamTrend> {
    let mut designs: Vec<f64> = set.fits.iter().map(|f| f.design).collect();
    designs.sort_by(f64::total_cmp);
    designs.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
    if designs.len() < 2 {
        return Err(Error::InsufficientData {
            context: "parameter trend over designs".into(),
            needed: 2,
            got: designs.len(),
        });
    }
    let n = set.fits.len() as f64;
    let xs: Vec<f64> = set.fits.iter().map(|f| f.design).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    let mut lines = [Line {
        slope: 0.0,
        intercept: 0.0,
        residual_norm: 0.0,
    }; 6];
    for (idx, line) in lines.iter_mut().enumerate() {
        let ys: Vec<f64> = set
            .fits
            .iter()
            .map(|f| param_vector(&f.radius, &f.height)[idx])
            .collect();
        let y_mean = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - x_mean) * (y - y_mean))
            .sum();
        let slope = sxy / sxx;
        let intercept = y_mean - slope * x_mean;
        let rss: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| {
                let r = y - (slope * x + intercept);
                r * r
            })
            .sum();
        *line = Line {
            slope,
            intercept,
            residual_norm: rss.sqrt(),
        };
    }
    Ok(ParamTrend { lines })
}

impl ParamTrend {
    /// Six coefficients interpolated at a design dimension.
    pub fn params_at(&self, design: f64) -> (RadiusModelParams, HeightModelParams) {
        let v: Vec<f64> = self.lines.iter().map(|l| l.at(design)).collect();
        (
            RadiusModelParams {
                a: v[0],
                b: v[1],
                c: v[2],
            },
            HeightModelParams {
                a: v[3],
                b: v[4],
                c: v[5],
            },
        )
    }
}

/// Predicted (R, H) mean for an unseen (design, LP, SR) cell, going
/// through the parameter trend.
pub fn predict_for_new_cell(
    trend: &ParamTrend,
    design: f64,
    p: ProcessParams,
) -> Result<[f64; 2]> {
    let (radius, height) = trend.params_at(design);
    let r = predict_radius(&radius, p).map_err(|e| extrapolation_error(e, design))?;
    let h = predict_height(&height, p).map_err(|e| extrapolation_error(e, design))?;
    Ok([r, h])
}

fn extrapolation_error(e: Error, design: f64) -> Error {
    match e {
        Error::DomainViolation { dose, requirement } => Error::DomainViolation {
            dose,
            requirement: format!("{requirement} after trend extrapolation to design {design}"),
        },
        other => other,
    }
}
