//! Measurement data model: one record per fabricated structure, grouped
//! into (design, process-parameter) cells for the monitoring methods.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Laser settings for one parameter group.
///
/// `laser_power` is percent of the tool's reference power, `scan_rate`
/// is mm/s. Their ratio LP²/SR acts as the exposure-dose proxy all
/// dimension models are driven by.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessParams {
    pub laser_power: f64,
    pub scan_rate: f64,
}

impl ProcessParams {
    pub fn new(laser_power: f64, scan_rate: f64) -> Result<Self> {
        let p = ProcessParams {
            laser_power,
            scan_rate,
        };
        if !(laser_power > 0.0 && scan_rate > 0.0) || !p.dose().is_finite() || p.dose() <= 0.0 {
            return Err(Error::Argument(format!(
                "process parameters must give a positive finite dose, got LP = {laser_power}, SR = {scan_rate}"
            )));
        }
        Ok(p)
    }

    /// Exposure-dose proxy LP²/SR.
    pub fn dose(&self) -> f64 {
        self.laser_power * self.laser_power / self.scan_rate
    }
}

/// Target design dimension in µm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub design_dimension: f64,
}

impl DesignSpec {
    pub fn new(design_dimension: f64) -> Result<Self> {
        if !(design_dimension > 0.0) {
            return Err(Error::Argument(format!(
                "design dimension must be positive, got {design_dimension}"
            )));
        }
        Ok(DesignSpec { design_dimension })
    }
}

/// One fabricated structure: where it was printed on the design grid,
/// the measured equivalent radius and average height, and an optional
/// machine-status label used only for scoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub design: DesignSpec,
    pub params: ProcessParams,
    pub radius: f64,
    pub height: f64,
    pub status_label: Option<String>,
}

/// Grouping key of one grid cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellKey {
    pub design: f64,
    pub laser_power: f64,
    pub scan_rate: f64,
}

impl Eq for CellKey {}

impl Ord for CellKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.design
            .total_cmp(&other.design)
            .then(self.laser_power.total_cmp(&other.laser_power))
            .then(self.scan_rate.total_cmp(&other.scan_rate))
    }
}

impl PartialOrd for CellKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl CellKey {
    pub fn design_spec(&self) -> DesignSpec {
        DesignSpec {
            design_dimension: self.design,
        }
    }

    pub fn process_params(&self) -> ProcessParams {
        ProcessParams {
            laser_power: self.laser_power,
            scan_rate: self.scan_rate,
        }
    }

    fn close_to(&self, other: &CellKey, tol: f64) -> bool {
        (self.design - other.design).abs() <= tol
            && (self.laser_power - other.laser_power).abs() <= tol
            && (self.scan_rate - other.scan_rate).abs() <= tol
    }
}

/// Column mapping for CSV ingestion. Field values are header names.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub design: String,
    pub laser_power: String,
    pub scan_rate: String,
    pub radius: String,
    pub height: String,
    pub status: Option<String>,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        ColumnSchema {
            design: "design".into(),
            laser_power: "lp".into(),
            scan_rate: "sr".into(),
            radius: "radius".into(),
            height: "height".into(),
            status: Some("status".into()),
        }
    }
}

/// Records grouped by (design, process-parameter) cell.
///
/// Keys within `key_tolerance` of an existing cell are merged into it,
/// so a grid never fragments over float noise in the key columns.
/// Immutable after construction; iteration order is the key order.
#[derive(Clone, Debug)]
pub struct DatasetGrid {
    cells: BTreeMap<CellKey, Vec<MeasurementRecord>>,
    key_tolerance: f64,
}

pub const DEFAULT_KEY_TOLERANCE: f64 = 1e-9;

impl DatasetGrid {
    /// Groups validated records into cells.
    pub fn from_records(
        records: Vec<MeasurementRecord>,
        key_tolerance: f64,
    ) -> Result<DatasetGrid> {
        if records.is_empty() {
            return Err(Error::InsufficientData {
                context: "dataset".into(),
                needed: 1,
                got: 0,
            });
        }
        let mut grid = DatasetGrid {
            cells: BTreeMap::new(),
            key_tolerance,
        };
        for rec in records {
            let key = CellKey {
                design: rec.design.design_dimension,
                laser_power: rec.params.laser_power,
                scan_rate: rec.params.scan_rate,
            };
            let canonical = grid
                .cells
                .keys()
                .find(|k| k.close_to(&key, key_tolerance))
                .copied()
                .unwrap_or(key);
            grid.cells.entry(canonical).or_default().push(rec);
        }
        Ok(grid)
    }

    /// Loads and validates a CSV dataset.
    pub fn load(path: &Path, schema: &ColumnSchema) -> Result<DatasetGrid> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_csv(&text, schema, DEFAULT_KEY_TOLERANCE).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    /// Parses CSV text with a header row.
    pub fn parse_csv(text: &str, schema: &ColumnSchema, key_tolerance: f64) -> Result<DatasetGrid> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::Parse {
                path: "<csv>".into(),
                message: e.to_string(),
            })?
            .clone();
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let c_design = col(&schema.design)?;
        let c_lp = col(&schema.laser_power)?;
        let c_sr = col(&schema.scan_rate)?;
        let c_r = col(&schema.radius)?;
        let c_h = col(&schema.height)?;
        let c_status = match &schema.status {
            Some(name) => headers.iter().position(|h| h.trim() == name),
            None => None,
        };

        let mut records = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let row_no = i + 2; // header is line 1
            let row = row.map_err(|e| Error::BadRecord {
                row: row_no,
                message: e.to_string(),
            })?;
            let field = |idx: usize, name: &str| -> Result<f64> {
                let raw = row.get(idx).unwrap_or("").trim();
                raw.parse::<f64>().map_err(|_| Error::BadRecord {
                    row: row_no,
                    message: format!("column {name:?}: cannot parse {raw:?} as a number"),
                })
            };
            let design = field(c_design, &schema.design)?;
            let lp = field(c_lp, &schema.laser_power)?;
            let sr = field(c_sr, &schema.scan_rate)?;
            let radius = field(c_r, &schema.radius)?;
            let height = field(c_h, &schema.height)?;
            if !(radius > 0.0 && height > 0.0) {
                return Err(Error::BadRecord {
                    row: row_no,
                    message: format!(
                        "radius and height must be positive, got R = {radius}, H = {height}"
                    ),
                });
            }
            let status_label = c_status
                .and_then(|idx| row.get(idx))
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from);
            records.push(MeasurementRecord {
                design: DesignSpec::new(design).map_err(|e| Error::BadRecord {
                    row: row_no,
                    message: e.to_string(),
                })?,
                params: ProcessParams::new(lp, sr).map_err(|e| Error::BadRecord {
                    row: row_no,
                    message: e.to_string(),
                })?,
                radius,
                height,
                status_label,
            });
        }
        Self::from_records(records, key_tolerance)
    }

    /// All records in the cell matching `(design, params)`, or empty.
    pub fn cell(&self, design: DesignSpec, params: ProcessParams) -> &[MeasurementRecord] {
        let key = CellKey {
            design: design.design_dimension,
            laser_power: params.laser_power,
            scan_rate: params.scan_rate,
        };
        self.cells
            .iter()
            .find(|(k, _)| k.close_to(&key, self.key_tolerance))
            .map(|(_, v)| v.as_slice())
            .unwrap_or(&[])
    }

    /// Cells in key order.
    pub fn cells(&self) -> impl Iterator<Item = (&CellKey, &[MeasurementRecord])> {
        self.cells.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn record_count(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    /// Distinct design dimensions, ascending.
    pub fn designs(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for key in self.cells.keys() {
            if !out.iter().any(|d| (d - key.design).abs() <= self.key_tolerance) {
                out.push(key.design);
            }
        }
        out
    }

    /// Distinct process-parameter settings, in key order.
    pub fn parameter_groups(&self) -> Vec<ProcessParams> {
        let mut out: Vec<ProcessParams> = Vec::new();
        for key in self.cells.keys() {
            let p = ProcessParams {
                laser_power: key.laser_power,
                scan_rate: key.scan_rate,
            };
            if !out.iter().any(|q| {
                (q.laser_power - p.laser_power).abs() <= self.key_tolerance
                    && (q.scan_rate - p.scan_rate).abs() <= self.key_tolerance
            }) {
                out.push(p);
            }
        }
        out.sort_by(|a, b| {
            a.laser_power
                .total_cmp(&b.laser_power)
                .then(a.scan_rate.total_cmp(&b.scan_rate))
        });
        out
    }

    /// CSV text with the default column layout; floats print in
    /// shortest round-trip form, so load ∘ dump is bit-exact.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("design,lp,sr,radius,height,status\n");
        for (_, records) in self.cells() {
            for r in records {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.design.design_dimension,
                    r.params.laser_power,
                    r.params.scan_rate,
                    r.radius,
                    r.height,
                    r.status_label.as_deref().unwrap_or("")
                );
            }
        }
        out
    }

    /// Per-cell summary (counts and feature moments) as CSV text.
    pub fn summary(&self) -> String {
        let mut out = String::from(
            "design,lp,sr,count,radius_mean,radius_sd,height_mean,height_sd\n",
        );
        for (key, records) in self.cells() {
            let n = records.len() as f64;
            let (mut mr, mut mh) = (0.0, 0.0);
            for r in records {
                mr += r.radius;
                mh += r.height;
            }
            mr /= n;
            mh /= n;
            let (mut vr, mut vh) = (0.0, 0.0);
            for r in records {
                vr += (r.radius - mr) * (r.radius - mr);
                vh += (r.height - mh) * (r.height - mh);
            }
            let denom = (n - 1.0).max(1.0);
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
                key.design,
                key.laser_power,
                key.scan_rate,
                records.len(),
                mr,
                (vr / denom).sqrt(),
                mh,
                (vh / denom).sqrt()
            );
        }
        out
    }
}
