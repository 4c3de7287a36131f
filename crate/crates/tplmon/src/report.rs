//! Text and CSV rendering of monitoring results: per-cell verdict
//! grids and scenario accuracy tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::DEFAULT_KEY_TOLERANCE;
use crate::error::{Error, Result};
use crate::verdict::{Decision, MonitorVerdict};

/// One scenario's verdict tally.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub scenario: String,
    /// Whether a rejection is the correct verdict here.
    pub out_of_control: bool,
    pub rejections: usize,
    pub acceptances: usize,
}

impl AccuracyRow {
    /// Share of verdicts matching the scenario's truth, or None when
    /// the row is empty.
    pub fn accuracy(&self) -> Option<f64> {
        let total = self.rejections + self.acceptances;
        if total == 0 {
            return None;
        }
        let correct = if self.out_of_control {
            self.rejections
        } else {
            self.acceptances
        };
        Some(correct as f64 / total as f64)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub rows: Vec<AccuracyRow>,
}

impl AccuracyTable {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let width = self
            .rows
            .iter()
            .map(|r| r.scenario.len())
            .chain(["scenario".len()])
            .max()
            .unwrap_or(8);
        let _ = writeln!(
            out,
            "{:width$}  {:>10}  {:>14}  {:>12}",
            "scenario", "rejections", "non-rejections", "accuracy (%)"
        );
        for row in &self.rows {
            let acc = match row.accuracy() {
                Some(a) => format!("{:.2}", 100.0 * a),
                None => "-".to_string(),
            };
            let _ = writeln!(
                out,
                "{:width$}  {:>10}  {:>14}  {:>12}",
                row.scenario, row.rejections, row.acceptances, acc
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,rejections,non_rejections,accuracy_percent\n");
        for row in &self.rows {
            let acc = match row.accuracy() {
                Some(a) => format!("{:.4}", 100.0 * a),
                None => String::new(),
            };
            let _ = writeln!(
                out,
                "{},{},{},{}",
                row.scenario, row.rejections, row.acceptances, acc
            );
        }
        out
    }
}

/// Changed/unchanged verdicts laid out with one row per design
/// dimension and one column per process-parameter group.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerdictGrid {
    pub designs: Vec<f64>,
    /// (laser power, scan rate) per column.
    pub groups: Vec<(f64, f64)>,
    /// `cells[row][col]`; None marks a combination with no verdict.
    pub cells: Vec<Vec<Option<bool>>>,
}

impl VerdictGrid {
    /// Lays out `(design, (laser power, scan rate), changed)` triples.
    /// Axes are sorted; repeated coordinates are an error.
    pub fn from_cells(entries: &[(f64, (f64, f64), bool)]) -> Result<VerdictGrid> {
        let tol = DEFAULT_KEY_TOLERANCE;
        let mut designs: Vec<f64> = Vec::new();
        let mut groups: Vec<(f64, f64)> = Vec::new();
        for (design, group, _) in entries {
            if !designs.iter().any(|d| (d - design).abs() <= tol) {
                designs.push(*design);
            }
            if !groups
                .iter()
                .any(|g| (g.0 - group.0).abs() <= tol && (g.1 - group.1).abs() <= tol)
            {
                groups.push(*group);
            }
        }
        designs.sort_by(f64::total_cmp);
        groups.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut cells = vec![vec![None; groups.len()]; designs.len()];
        for (design, group, changed) in entries {
            let row = designs
                .iter()
                .position(|d| (d - design).abs() <= tol)
                .expect("design was collected above");
            let col = groups
                .iter()
                .position(|g| (g.0 - group.0).abs() <= tol && (g.1 - group.1).abs() <= tol)
                .expect("group was collected above");
            if cells[row][col].is_some() {
                return Err(Error::Argument(format!(
                    "two verdicts for design {design} / LP {} / SR {}",
                    group.0, group.1
                )));
            }
            cells[row][col] = Some(*changed);
        }
        Ok(VerdictGrid {
            designs,
            groups,
            cells,
        })
    }

    pub fn changed_count(&self) -> usize {
        self.cells
            .iter()
            .flatten()
            .filter(|c| **c == Some(true))
            .count()
    }

    pub fn verdict_count(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_some()).count()
    }

    pub fn to_text(&self) -> String {
        let headers: Vec<String> = self
            .groups
            .iter()
            .map(|(lp, sr)| format!("LP{lp}/SR{sr}"))
            .collect();
        let col_width = headers
            .iter()
            .map(|h| h.len())
            .chain(["unchanged".len()])
            .max()
            .unwrap_or(9);
        let mut out = String::new();
        let _ = write!(out, "{:>8}", "design");
        for h in &headers {
            let _ = write!(out, "  {h:>col_width$}");
        }
        out.push('\n');
        for (row, design) in self.designs.iter().enumerate() {
            let _ = write!(out, "{design:>8}");
            for col in 0..self.groups.len() {
                let mark = match self.cells[row][col] {
                    Some(true) => "CHANGED",
                    Some(false) => "unchanged",
                    None => "-",
                };
                let _ = write!(out, "  {mark:>col_width$}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("design");
        for (lp, sr) in &self.groups {
            let _ = write!(out, ",LP{lp}/SR{sr}");
        }
        out.push('\n');
        for (row, design) in self.designs.iter().enumerate() {
            let _ = write!(out, "{design}");
            for col in 0..self.groups.len() {
                let mark = match self.cells[row][col] {
                    Some(true) => "changed",
                    Some(false) => "unchanged",
                    None => "",
                };
                let _ = write!(out, ",{mark}");
            }
            out.push('\n');
        }
        out
    }
}

/// One cell's verdict with its grid coordinates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridEntry {
    pub design: f64,
    pub laser_power: f64,
    pub scan_rate: f64,
    pub changed: bool,
}

/// Results for one query file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QueryReport {
    pub source: String,
    pub reference_label: Option<String>,
    pub query_label: Option<String>,
    /// "same status" or "different status"; present when both files
    /// carry one uniform status label.
    pub scenario: Option<String>,
    pub out_of_control: Option<bool>,
    pub verdicts: Vec<MonitorVerdict>,
    /// Grid coordinates for per-cell methods; empty for the
    /// parameter-space methods, whose verdicts are per design.
    pub cells: Vec<GridEntry>,
}

/// A full monitor run: everything needed to re-render its report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonitorReport {
    pub method: String,
    pub alpha: f64,
    pub queries: Vec<QueryReport>,
}

impl MonitorReport {
    /// Verdict tallies per scenario, over the queries whose scenario
    /// is known.
    pub fn accuracy_table(&self) -> AccuracyTable {
        let mut rows: BTreeMap<String, AccuracyRow> = BTreeMap::new();
        for q in &self.queries {
            let (Some(scenario), Some(ooc)) = (&q.scenario, q.out_of_control) else {
                continue;
            };
            let row = rows.entry(scenario.clone()).or_insert_with(|| AccuracyRow {
                scenario: scenario.clone(),
                out_of_control: ooc,
                rejections: 0,
                acceptances: 0,
            });
            for v in &q.verdicts {
                if v.changed() {
                    row.rejections += 1;
                } else {
                    row.acceptances += 1;
                }
            }
        }
        AccuracyTable {
            rows: rows.into_values().collect(),
        }
    }

    /// One laid-out grid per query that has cell coordinates, named
    /// `grid_1`, `grid_2`, ... by query position.
    pub fn grids(&self) -> Result<Vec<(String, VerdictGrid)>> {
        let mut out = Vec::new();
        for (k, q) in self.queries.iter().enumerate() {
            if q.cells.is_empty() {
                continue;
            }
            let entries: Vec<(f64, (f64, f64), bool)> = q
                .cells
                .iter()
                .map(|c| (c.design, (c.laser_power, c.scan_rate), c.changed))
                .collect();
            out.push((format!("grid_{}", k + 1), VerdictGrid::from_cells(&entries)?));
        }
        Ok(out)
    }

    pub fn render_text(&self) -> Result<String> {
        let mut out = String::new();
        let _ = writeln!(out, "method {} at alpha {}", self.method, self.alpha);
        for q in &self.queries {
            let suffix = match &q.scenario {
                Some(s) => format!(" ({s})"),
                None => String::new(),
            };
            let _ = writeln!(out, "\nquery {}{suffix}", q.source);
            if q.cells.is_empty() {
                for v in &q.verdicts {
                    let mark = match v.decision {
                        Decision::Changed => "CHANGED",
                        Decision::Unchanged => "unchanged",
                    };
                    let _ = writeln!(out, "  {}: {mark}", v.cell);
                }
            } else {
                let entries: Vec<(f64, (f64, f64), bool)> = q
                    .cells
                    .iter()
                    .map(|c| (c.design, (c.laser_power, c.scan_rate), c.changed))
                    .collect();
                out.push_str(&VerdictGrid::from_cells(&entries)?.to_text());
            }
        }
        let table = self.accuracy_table();
        if !table.rows.is_empty() {
            out.push_str("\naccuracy\n");
            out.push_str(&table.to_text());
        }
        Ok(out)
    }
}
