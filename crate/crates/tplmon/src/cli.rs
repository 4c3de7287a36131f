//! Command-line surface. Every command resolves one `RunConfig`
//! (defaults, then the TOML file, then flags), derives all randomness
//! from its seed, and writes its outputs under one directory, so a
//! rerun with the same inputs reproduces the same bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::Serialize;

use crate::cell_monitor;
use crate::config::{Overrides, RunConfig};
use crate::data::{ColumnSchema, DatasetGrid, DesignSpec};
use crate::error::{Error, Result};
use crate::eval::{
    calibration_text, data_efficiency_sweep, null_calibration, sample_size_sweep, EfficiencyPoint,
    SampleSizeRow,
};
use crate::hypothesis::ZScale;
use crate::models::{fit_param_trend, FitConfig, FittedModelSet, ModelKind, ParamTrend};
use crate::parameter_monitor::{
    bootstrap_params, loo_thresholds, monitor_unknown_group, test_same_group, BootstrapConfig,
    LooConfig, ThresholdInterval,
};
use crate::prediction_monitor::{loo_grid_report, Feature, PredictionCheck};
use crate::report::{GridEntry, MonitorReport, QueryReport};
use crate::rng;
use crate::twin::{
    default_designs, default_groups, generate_grid, make_status_pair, paper_like_pair,
    parameter_shift_pair, NoiseSpec, StatusProfile, TwinManifest,
};
use crate::verdict::MonitorVerdict;

#[derive(Parser)]
#[command(
    name = "tplmon",
    version,
    about = "Machine-status monitoring over printed-dimension measurements"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Root seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Two-sided significance level.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Directory the command writes its files into.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the two synthetic status datasets and their manifest.
    Simulate,
    /// Fit dimension models and coefficient trends to a dataset.
    Fit {
        /// Dataset to fit (CSV).
        #[arg(long, value_name = "CSV")]
        reference: Option<PathBuf>,
    },
    /// Test query data against a reference with one monitoring method.
    Monitor {
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Reference dataset (CSV).
        #[arg(long, value_name = "CSV")]
        reference: Option<PathBuf>,
        /// Query dataset (CSV); repeat the flag for several.
        #[arg(long, value_name = "CSV")]
        query: Vec<PathBuf>,
    },
    /// Error-rate sweeps and null calibration on synthetic data.
    Evaluate,
    /// Re-render a saved monitor report.
    Report {
        /// Saved monitor report (JSON).
        #[arg(long, value_name = "JSON")]
        reference: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    /// Per-cell two-sample t-test.
    #[value(name = "m1")]
    CellT,
    /// One-sample z-test against a predicted baseline.
    #[value(name = "m2-z")]
    PredictedZ,
    /// One-sample T² against a predicted baseline.
    #[value(name = "m2-t2")]
    PredictedT2,
    /// Bootstrap-coefficient T² for a known parameter group.
    #[value(name = "m3-same")]
    SameGroup,
    /// Leave-one-out thresholds with majority voting.
    #[value(name = "m3-unknown")]
    UnknownGroup,
}

impl MethodArg {
    fn name(self) -> &'static str {
        match self {
            MethodArg::CellT => "m1",
            MethodArg::PredictedZ => "m2-z",
            MethodArg::PredictedT2 => "m2-t2",
            MethodArg::SameGroup => "m3-same",
            MethodArg::UnknownGroup => "m3-unknown",
        }
    }
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut overrides = Overrides {
        seed: cli.seed,
        alpha: cli.alpha,
        out: cli.out.clone(),
        ..Overrides::default()
    };
    match &cli.command {
        Command::Fit { reference } | Command::Report { reference } => {
            overrides.reference.clone_from(reference);
        }
        Command::Monitor {
            reference, query, ..
        } => {
            overrides.reference.clone_from(reference);
            overrides.query = query.first().cloned();
        }
        Command::Simulate | Command::Evaluate => {}
    }
    let cfg = RunConfig::resolve(cli.config.as_deref(), &overrides)?;
    let out_dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    match cli.command {
        Command::Simulate => cmd_simulate(&cfg, &out_dir),
        Command::Fit { .. } => cmd_fit(&cfg, &out_dir),
        Command::Monitor { method, query, .. } => {
            let queries: Vec<PathBuf> = if query.is_empty() {
                cfg.query.iter().cloned().collect()
            } else {
                query
            };
            cmd_monitor(&cfg, method, &queries, &out_dir)
        }
        Command::Evaluate => cmd_evaluate(&cfg, &out_dir),
        Command::Report { .. } => cmd_report(&cfg, &out_dir),
    }
}

fn usage(message: &str) -> Error {
    Error::Usage(message.to_string())
}

fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    rng::stream(seed, tags).gen()
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    text
}

/// The configured status pair: a named preset with any noise or
/// offset knobs replaced from the config.
fn preset_pair(cfg: &RunConfig) -> Result<(StatusProfile, StatusProfile)> {
    let name = cfg.twin.preset.as_deref().unwrap_or("paper-like");
    let (s1, s2) = match name {
        "paper-like" => paper_like_pair(),
        "parameter-shift" => parameter_shift_pair(),
        other => {
            return Err(Error::Config(format!(
                "unknown twin preset \"{other}\"; expected \"paper-like\" or \"parameter-shift\""
            )))
        }
    };
    let noise = NoiseSpec::new(
        cfg.twin.sd_radius.unwrap_or(s1.noise.sd_radius),
        cfg.twin.sd_height.unwrap_or(s1.noise.sd_height),
        cfg.twin.correlation.unwrap_or(s1.noise.correlation),
    )?;
    let offsets: [f64; 6] = cfg
        .twin
        .offsets
        .unwrap_or_else(|| std::array::from_fn(|i| s2.trends[i].intercept - s1.trends[i].intercept));
    let base = StatusProfile {
        trends: s1.trends,
        noise,
    };
    Ok(make_status_pair(&base, offsets))
}

fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (s1, s2) = preset_pair(cfg)?;
    let designs = default_designs();
    let groups = default_groups();
    let grid1 = generate_grid(&s1, &designs, &groups, cfg.n_per_cell, cfg.seed, "status-1")?;
    let grid2 = generate_grid(&s2, &designs, &groups, cfg.n_per_cell, cfg.seed, "status-2")?;
    let manifest = TwinManifest::new(
        cfg.seed,
        designs,
        &groups,
        cfg.n_per_cell,
        s1,
        s2,
    );
    let p1 = write_text(out, "status1.csv", &grid1.to_csv_string())?;
    let p2 = write_text(out, "status2.csv", &grid2.to_csv_string())?;
    let pm = write_text(out, "manifest.json", &to_json(&manifest))?;
    println!(
        "wrote {} records per status\n  {}\n  {}\n  {}",
        grid1.record_count(),
        p1.display(),
        p2.display(),
        pm.display()
    );
    Ok(())
}

/// Fitted per-design models plus the coefficient trend lines.
#[derive(Serialize)]
struct FitReport {
    fits: FittedModelSet,
    trend: ParamTrend,
}

fn cmd_fit(cfg: &RunConfig, out: &Path) -> Result<()> {
    let path = cfg
        .reference
        .as_ref()
        .ok_or_else(|| usage("fit needs --reference <csv>"))?;
    let grid = DatasetGrid::load(path, &ColumnSchema::default())?;
    let fits = FittedModelSet::fit(&grid, &FitConfig::default())?;
    let trend = fit_param_trend(&fits)?;

    let mut text = String::new();
    let _ = writeln!(
        text,
        "{:>8}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}",
        "design", "a_R", "b_R", "c_R", "a_H", "b_H", "c_H"
    );
    for f in &fits.fits {
        let _ = writeln!(
            text,
            "{:>8}  {:>10.5}  {:>10.5}  {:>10.5}  {:>10.5}  {:>10.5}  {:>10.5}",
            f.design, f.radius.a, f.radius.b, f.radius.c, f.height.a, f.height.b, f.height.c
        );
    }
    print!("{text}");
    let report = FitReport { fits, trend };
    let path = write_text(out, "model_fit.json", &to_json(&report))?;
    println!("wrote {}", path.display());
    Ok(())
}

/// The status label shared by every record of the grid, if one exists.
fn uniform_label(grid: &DatasetGrid) -> Option<String> {
    let mut label: Option<&str> = None;
    for (_, records) in grid.cells() {
        for r in records {
            match (label, r.status_label.as_deref()) {
                (_, None) => return None,
                (None, Some(l)) => label = Some(l),
                (Some(a), Some(l)) if a == l => {}
                _ => return None,
            }
        }
    }
    label.map(str::to_string)
}

fn bootstrap_config(cfg: &RunConfig) -> BootstrapConfig {
    BootstrapConfig {
        iterations: cfg.bootstrap_iterations,
        samples_per_group: cfg.samples_per_group,
        ..BootstrapConfig::default()
    }
}

fn loo_config(cfg: &RunConfig) -> LooConfig {
    LooConfig {
        alpha: cfg.alpha,
        coverage: cfg.coverage,
        widen_cap: cfg.widen_cap,
        combine: cfg.combine,
        bootstrap: bootstrap_config(cfg),
        fit: FitConfig::default(),
    }
}

/// Thresholds for both models, keeping what is computable: when a
/// model's set fails the widening cap, the run is repeated without the
/// cap and only the offending coefficients are dropped. The voting
/// step then names the first missing coefficient if one is consulted.
fn lenient_six_thresholds(
    grid: &DatasetGrid,
    design: DesignSpec,
    cfg: &LooConfig,
    seed: u64,
) -> Result<Vec<ThresholdInterval>> {
    let knowns = grid.parameter_groups();
    let mut intervals = Vec::with_capacity(6);
    for kind in [ModelKind::Radius, ModelKind::Height] {
        match loo_thresholds(grid, design, &knowns, kind, cfg, seed) {
            Ok(set) => intervals.extend(set.intervals),
            Err(Error::ThresholdFailure { .. }) => {
                let relaxed = LooConfig {
                    widen_cap: f64::INFINITY,
                    ..cfg.clone()
                };
                let set = loo_thresholds(grid, design, &knowns, kind, &relaxed, seed)?;
                let max_factors: [f64; 3] = std::array::from_fn(|p| {
                    set.folds
                        .iter()
                        .map(|f| f.widen_factors[p])
                        .fold(0.0, f64::max)
                });
                for (p, interval) in set.intervals.into_iter().enumerate() {
                    if max_factors[p] <= cfg.widen_cap {
                        intervals.push(interval);
                    }
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(intervals)
}

/// Runs one method over one query grid. Grid entries come back only
/// for the per-cell methods.
fn run_method(
    cfg: &RunConfig,
    method: MethodArg,
    reference: &DatasetGrid,
    query: &DatasetGrid,
    query_index: u64,
) -> Result<(Vec<MonitorVerdict>, Vec<GridEntry>)> {
    let fit = FitConfig::default();
    match method {
        MethodArg::CellT => {
            let verdicts = cell_monitor::compare_grids(reference, query, cfg.alpha)?;
            let entries = reference
                .cells()
                .filter(|(key, _)| {
                    !query
                        .cell(key.design_spec(), key.process_params())
                        .is_empty()
                })
                .zip(&verdicts)
                .map(|((key, _), v)| GridEntry {
                    design: key.design,
                    laser_power: key.laser_power,
                    scan_rate: key.scan_rate,
                    changed: v.changed(),
                })
                .collect();
            Ok((verdicts, entries))
        }
        MethodArg::PredictedZ | MethodArg::PredictedT2 => {
            let check = match method {
                MethodArg::PredictedZ => {
                    let scale = if cfg.standard_error_z {
                        ZScale::StandardError
                    } else {
                        ZScale::SampleSd
                    };
                    PredictionCheck::Z(Feature::Both, scale)
                }
                _ => PredictionCheck::T2,
            };
            let verdicts = loo_grid_report(reference, query, check, cfg.alpha, &fit)?;
            let entries = query
                .cells()
                .zip(&verdicts)
                .map(|((key, _), v)| GridEntry {
                    design: key.design,
                    laser_power: key.laser_power,
                    scan_rate: key.scan_rate,
                    changed: v.changed(),
                })
                .collect();
            Ok((verdicts, entries))
        }
        MethodArg::SameGroup => {
            let groups = reference.parameter_groups();
            let bcfg = bootstrap_config(cfg);
            let mut verdicts = Vec::new();
            for (di, design) in reference.designs().into_iter().enumerate() {
                let design = DesignSpec::new(design)?;
                for (ki, kind) in [ModelKind::Radius, ModelKind::Height].into_iter().enumerate() {
                    let tags = |leg: u64| [0x60, query_index, di as u64, ki as u64, leg];
                    let reference_boot = bootstrap_params(
                        reference,
                        design,
                        &groups,
                        kind,
                        &bcfg,
                        &fit,
                        derive_seed(cfg.seed, &tags(0)),
                    )?;
                    let query_boot = bootstrap_params(
                        query,
                        design,
                        &groups,
                        kind,
                        &bcfg,
                        &fit,
                        derive_seed(cfg.seed, &tags(1)),
                    )?;
                    verdicts.push(test_same_group(&reference_boot, &query_boot, cfg.alpha)?);
                }
            }
            Ok((verdicts, Vec::new()))
        }
        MethodArg::UnknownGroup => {
            let query_groups = query.parameter_groups();
            let bcfg = bootstrap_config(cfg);
            let loo = loo_config(cfg);
            let mut verdicts = Vec::new();
            for (di, design) in reference.designs().into_iter().enumerate() {
                let design = DesignSpec::new(design)?;
                let thresholds = lenient_six_thresholds(
                    reference,
                    design,
                    &loo,
                    derive_seed(cfg.seed, &[0x61, query_index, di as u64]),
                )?;
                let query_radius = bootstrap_params(
                    query,
                    design,
                    &query_groups,
                    ModelKind::Radius,
                    &bcfg,
                    &fit,
                    derive_seed(cfg.seed, &[0x62, query_index, di as u64, 0]),
                )?;
                let query_height = bootstrap_params(
                    query,
                    design,
                    &query_groups,
                    ModelKind::Height,
                    &bcfg,
                    &fit,
                    derive_seed(cfg.seed, &[0x62, query_index, di as u64, 1]),
                )?;
                verdicts.push(monitor_unknown_group(
                    &thresholds,
                    &query_radius,
                    &query_height,
                    cfg.vote_cap,
                )?);
            }
            Ok((verdicts, Vec::new()))
        }
    }
}

fn cmd_monitor(
    cfg: &RunConfig,
    method: MethodArg,
    queries: &[PathBuf],
    out: &Path,
) -> Result<()> {
    let ref_path = cfg
        .reference
        .as_ref()
        .ok_or_else(|| usage("monitor needs --reference <csv>"))?;
    if queries.is_empty() {
        return Err(usage("monitor needs at least one --query <csv>"));
    }
    let schema = ColumnSchema::default();
    let reference = DatasetGrid::load(ref_path, &schema)?;
    let reference_label = uniform_label(&reference);

    let mut query_reports = Vec::with_capacity(queries.len());
    for (qi, path) in queries.iter().enumerate() {
        let query = DatasetGrid::load(path, &schema)?;
        let query_label = uniform_label(&query);
        let (verdicts, cells) = run_method(cfg, method, &reference, &query, qi as u64)?;
        let (scenario, out_of_control) = match (&reference_label, &query_label) {
            (Some(r), Some(q)) => (
                Some(if r == q { "same status" } else { "different status" }.to_string()),
                Some(r != q),
            ),
            _ => (None, None),
        };
        query_reports.push(QueryReport {
            source: path.display().to_string(),
            reference_label: reference_label.clone(),
            query_label,
            scenario,
            out_of_control,
            verdicts,
            cells,
        });
    }

    let report = MonitorReport {
        method: method.name().to_string(),
        alpha: cfg.alpha,
        queries: query_reports,
    };
    print!("{}", report.render_text()?);
    write_text(out, "monitor_report.json", &to_json(&report))?;
    let table = report.accuracy_table();
    if !table.rows.is_empty() {
        write_text(out, "accuracy.csv", &table.to_csv())?;
    }
    for (name, grid) in report.grids()? {
        write_text(out, &format!("{name}.csv"), &grid.to_csv())?;
    }
    Ok(())
}

fn sample_size_csv(rows: &[SampleSizeRow]) -> String {
    let mut out = String::from("sample_size,type1,type2,trials\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.sample_size, r.type1, r.type2, r.trials);
    }
    out
}

fn efficiency_csv(points: &[EfficiencyPoint]) -> String {
    let mut out = String::from("design_count,param_count,type1,type2,trials\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.design_count, p.param_count, p.type1, p.type2, p.trials
        );
    }
    out
}

fn calibration_csv(rows: &[crate::eval::CalibrationRow]) -> String {
    let mut out = String::from("test,alpha,trials,rate\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.test, r.alpha, r.trials, r.rate);
    }
    out
}

fn cmd_evaluate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (s1, s2) = preset_pair(cfg)?;
    let designs = default_designs();
    let groups = default_groups();
    let n = cfg.n_per_cell;
    let seed_for = |k: u64| derive_seed(cfg.seed, &[0xE0, k]);
    let reference = generate_grid(&s1, &designs, &groups, n, seed_for(0), "status-1")?;
    let same = generate_grid(&s1, &designs, &groups, n, seed_for(1), "status-1")?;
    let shifted = generate_grid(&s2, &designs, &groups, n, seed_for(2), "status-2")?;

    let mut sizes: Vec<usize> = [3, 5, 10, 20].into_iter().filter(|&s| s <= n).collect();
    if sizes.is_empty() {
        sizes.push(n);
    }
    let size_rows = sample_size_sweep(
        &reference,
        &same,
        &shifted,
        &sizes,
        cfg.alpha,
        cfg.repetitions,
        seed_for(3),
    )?;

    let efficiency = data_efficiency_sweep(
        &reference,
        &same,
        &shifted,
        &[2, 4, 6],
        &[3, 4, 6],
        cfg.alpha,
        cfg.repetitions,
        seed_for(4),
        &FitConfig::default(),
    )?;

    let calibration = null_calibration(&[0.05, 0.10], cfg.repetitions * 50, seed_for(5))?;

    let mut text = String::from("subsample-size sweep (two-sample t per dimension)\n");
    let _ = writeln!(text, "{:>6}  {:>8}  {:>8}  {:>7}", "n", "type-I", "type-II", "trials");
    for r in &size_rows {
        let _ = writeln!(
            text,
            "{:>6}  {:>8.4}  {:>8.4}  {:>7}",
            r.sample_size, r.type1, r.type2, r.trials
        );
    }
    text.push_str("\ntraining-set sweep (prediction T²)\n");
    let _ = writeln!(
        text,
        "{:>8}  {:>7}  {:>8}  {:>8}  {:>7}",
        "designs", "groups", "type-I", "type-II", "trials"
    );
    for p in &efficiency {
        let _ = writeln!(
            text,
            "{:>8}  {:>7}  {:>8.4}  {:>8.4}  {:>7}",
            p.design_count, p.param_count, p.type1, p.type2, p.trials
        );
    }
    text.push_str("\nnull calibration\n");
    text.push_str(&calibration_text(&calibration));
    print!("{text}");

    write_text(out, "sample_size.csv", &sample_size_csv(&size_rows))?;
    write_text(out, "efficiency.csv", &efficiency_csv(&efficiency))?;
    write_text(out, "calibration.csv", &calibration_csv(&calibration))?;
    Ok(())
}

fn cmd_report(cfg: &RunConfig, out: &Path) -> Result<()> {
    let path = cfg
        .reference
        .as_ref()
        .ok_or_else(|| usage("report needs --reference <monitor report json>"))?;
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    let report: MonitorReport = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.clone(),
        message: e.to_string(),
    })?;
    print!("{}", report.render_text()?);
    let table = report.accuracy_table();
    if !table.rows.is_empty() {
        write_text(out, "accuracy.csv", &table.to_csv())?;
    }
    for (name, grid) in report.grids()? {
        write_text(out, &format!("{name}.csv"), &grid.to_csv())?;
    }
    Ok(())
}
