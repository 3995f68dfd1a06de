//! Number formatting and report files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Seventeen significant digits, enough to round-trip any f64.
pub fn fmt_number(v: f64) -> String {
    format!("{v:.16e}")
}

/// One checked inequality: `lhs ≤ rhs` for index `n` and parameter `param`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub estimate_id: String,
    pub n: u64,
    pub param: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    /// The row passes when slack ≥ −tolerance.
    pub tolerance: f64,
    pub pass: bool,
}

impl EstimateRow {
    /// Row for `lhs ≤ rhs`; a NaN on either side fails.
    pub fn new(estimate_id: impl Into<String>, n: u64, param: f64, lhs: f64, rhs: f64) -> EstimateRow {
        let slack = rhs - lhs;
        EstimateRow {
            estimate_id: estimate_id.into(),
            n,
            param,
            lhs,
            rhs,
            slack,
            tolerance: 0.0,
            pass: slack >= 0.0,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> EstimateRow {
        self.tolerance = tolerance;
        self.pass = self.slack >= -tolerance;
        self
    }

    /// Overrides the verdict for rows that are not plain inequalities.
    pub fn with_pass(mut self, pass: bool) -> EstimateRow {
        self.pass = pass;
        self
    }

    /// Rows whose id ends in `_info` are reported but never gate a run.
    pub fn is_informational(&self) -> bool {
        self.estimate_id.ends_with("_info")
    }
}

pub const CSV_HEADER: &str = "estimate_id,n,param,lhs,rhs,slack,pass";

/// CSV body of estimate rows, header line included.
pub fn rows_to_csv(rows: &[EstimateRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.estimate_id,
            r.n,
            fmt_number(r.param),
            fmt_number(r.lhs),
            fmt_number(r.rhs),
            fmt_number(r.slack),
            r.pass
        );
    }
    out
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            assert_eq!(fmt_number(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_rows() {
        let rows = vec![EstimateRow::new("mass_chain", 4, 0.0, 1.0, 2.0), EstimateRow::new("tail_info", 4, 2.0, 3.0, 1.0)];
        let csv = rows_to_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].starts_with("mass_chain,4,") && lines[1].ends_with(",true"));
        assert!(lines[2].ends_with(",false"));
        assert!(rows[1].is_informational() && !rows[0].is_informational());
        assert!(!EstimateRow::new("x", 1, 0.0, f64::NAN, 1.0).pass);
    }
}
