//! Run configuration files.
//!
//! A configuration is a TOML document with the sections `domain`, `exponents`,
//! `coefficients`, `source` and `report`, the optional sections `solver`,
//! `scheme`, `estimates` and `sweep`, and an optional top-level `seed`. Field
//! values are expression strings (plain numbers are accepted too). Unknown
//! keys and sections are errors.
//!
//! ```toml
//! seed = 7
//!
//! [domain]
//! dimension = 1
//! lower = [0.0]
//! upper = [6.0]
//! nodes = [129]
//!
//! [exponents]
//! p = "2"
//! r = "1.5"
//! gamma = "0.5"
//!
//! [coefficients]
//! a = "1"
//! b = "1"
//!
//! [source]
//! f = "8"
//!
//! [report]
//! out_dir = "out"
//! formats = ["json", "csv"]
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Serialize;
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::estimates::EstimateConfig;
use crate::expr::FieldExpr;
use crate::grid::Grid;
use crate::problem::{Domain, ProblemExprs, ProblemSpec};
use crate::scheme::SchemeConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReportFormats {
    pub json: bool,
    pub csv: bool,
}

/// Constant-exponent triples for `sweep`; every combination is one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    pub p: Vec<f64>,
    pub r: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl SweepGrid {
    pub fn cells(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        for &p in &self.p {
            for &r in &self.r {
                for &gamma in &self.gamma {
                    out.push((p, r, gamma));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub domain: Domain,
    pub nodes: Vec<usize>,
    pub exprs: ProblemExprs,
    pub scheme: SchemeConfig,
    pub estimates: EstimateConfig,
    /// Solve on the coarse companion grid as well, for the discretization allowance.
    pub coarse_companion: bool,
    pub out_dir: PathBuf,
    pub formats: ReportFormats,
    pub seed: u64,
    pub sweep: Option<SweepGrid>,
}

impl RunConfig {
    pub fn spec(&self) -> Result<ProblemSpec> {
        ProblemSpec::new(self.domain, self.exprs.clone())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(&self.domain, &self.nodes)
    }

    /// Applies a seed given outside the file.
    pub fn with_seed(mut self, seed: u64) -> RunConfig {
        self.seed = seed;
        self.estimates.seed = seed;
        self
    }

    /// Configuration echo with defaults filled in.
    pub fn echo(&self) -> serde_json::Value {
        let fp = &self.scheme.fixed_point;
        serde_json::json!({
            "seed": self.seed,
            "domain": {
                "dimension": self.domain.dimension,
                "lower": &self.domain.lower[..self.domain.dimension],
                "upper": &self.domain.upper[..self.domain.dimension],
                "nodes": self.nodes,
            },
            "exponents": {
                "p": self.exprs.p.source(),
                "r": self.exprs.r.source(),
                "gamma": self.exprs.gamma.source(),
            },
            "coefficients": { "a": self.exprs.a.source(), "b": self.exprs.b.source() },
            "source": { "f": self.exprs.f.source() },
            "solver": {
                "newton_tol": fp.inner.newton_tol,
                "max_newton_iters": fp.inner.max_newton_iters,
                "delta_start": fp.inner.delta_start,
                "delta_end": fp.inner.delta_end,
                "delta_factor": fp.inner.delta_factor,
                "fp_tol": fp.fp_tol,
                "max_fp_iters": fp.max_fp_iters,
            },
            "scheme": {
                "schedule": self.scheme.schedule,
                "margin": self.scheme.margin_fraction,
                "warm_start": self.scheme.warm_start,
                "coarse_companion": self.coarse_companion,
            },
            "estimates": &self.estimates,
            "report": {
                "out_dir": self.out_dir.display().to_string(),
                "formats": self.formats,
            },
            "sweep": &self.sweep,
        })
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Keys of one table, tracking which ones were consumed.
struct Section<'a> {
    name: &'a str,
    table: Option<&'a Table>,
    used: BTreeSet<&'a str>,
}

impl<'a> Section<'a> {
    /// A missing section behaves like an empty one, so required keys are
    /// reported individually.
    fn new(root: &'a Table, name: &'a str) -> Result<Section<'a>> {
        let table = match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => return Err(Error::config(name, "", "expected a section")),
        };
        Ok(Section {
            name,
            table,
            used: BTreeSet::new(),
        })
    }

    fn get(&mut self, key: &'a str) -> Option<&'a Value> {
        let v = self.table?.get(key);
        if v.is_some() {
            self.used.insert(key);
        }
        v
    }

    fn missing(&self, key: &str) -> Error {
        Error::config(self.name, key, "missing required key")
    }

    fn mismatch(&self, key: &str, expected: &str) -> Error {
        Error::config(self.name, key, format!("expected {expected}"))
    }

    fn expr(&mut self, key: &'a str) -> Result<FieldExpr> {
        let v = self.get(key).ok_or_else(|| self.missing(key))?;
        let text = match v {
            Value::String(s) => s.clone(),
            Value::Integer(i) => i.to_string(),
            Value::Float(f) => format!("{f:?}"),
            _ => return Err(self.mismatch(key, "an expression string")),
        };
        FieldExpr::parse(&text).map_err(|e| Error::config(self.name, key, e.to_string()))
    }

    fn float(&mut self, key: &'a str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => as_float(v).map(Some).ok_or_else(|| self.mismatch(key, "a number")),
        }
    }

    fn uint(&mut self, key: &'a str) -> Result<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(_) => Err(self.mismatch(key, "a nonnegative integer")),
        }
    }

    fn boolean(&mut self, key: &'a str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(self.mismatch(key, "a boolean")),
        }
    }

    fn floats(&mut self, key: &'a str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(as_float)
                .collect::<Option<Vec<f64>>>()
                .map(Some)
                .ok_or_else(|| self.mismatch(key, "an array of numbers")),
            Some(_) => Err(self.mismatch(key, "an array of numbers")),
        }
    }

    fn uints(&mut self, key: &'a str) -> Result<Option<Vec<u64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Integer(i) if *i >= 0 => Some(*i as u64),
                    _ => None,
                })
                .collect::<Option<Vec<u64>>>()
                .map(Some)
                .ok_or_else(|| self.mismatch(key, "an array of nonnegative integers")),
            Some(_) => Err(self.mismatch(key, "an array of nonnegative integers")),
        }
    }

    fn strings(&mut self, key: &'a str) -> Result<Option<Vec<String>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| v.as_str().map(str::to_string))
                .collect::<Option<Vec<String>>>()
                .map(Some)
                .ok_or_else(|| self.mismatch(key, "an array of strings")),
            Some(_) => Err(self.mismatch(key, "an array of strings")),
        }
    }

    /// Rejects keys that were never read.
    fn finish(self) -> Result<()> {
        if let Some(t) = self.table {
            if let Some(k) = t.keys().find(|k| !self.used.contains(k.as_str())) {
                return Err(Error::config(self.name, k, "unknown key"));
            }
        }
        Ok(())
    }
}

fn as_float(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

const SECTIONS: [&str; 9] = [
    "domain",
    "exponents",
    "coefficients",
    "source",
    "solver",
    "scheme",
    "estimates",
    "report",
    "sweep",
];

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| {
        let message = e.message().to_string();
        Error::config("", "", message)
    })?;
    for (key, value) in &root {
        let known = SECTIONS.contains(&key.as_str()) || key == "seed";
        if !known {
            let message = if value.is_table() { "unknown section" } else { "unknown key" };
            return Err(Error::config(key, "", message));
        }
    }
    let seed = match root.get("seed") {
        None => 0,
        Some(Value::Integer(i)) if *i >= 0 => *i as u64,
        Some(_) => return Err(Error::config("", "seed", "expected a nonnegative integer")),
    };

    let mut s = Section::new(&root, "domain")?;
    let dimension = s.uint("dimension")?.ok_or_else(|| s.missing("dimension"))? as usize;
    if dimension != 1 && dimension != 2 {
        return Err(Error::config("domain", "dimension", "must be 1 or 2"));
    }
    let corner = |s: &mut Section, key| -> Result<[f64; 2]> {
        let v = s.floats(key)?.ok_or_else(|| s.missing(key))?;
        if v.len() != dimension {
            return Err(Error::config("domain", key, format!("expected {dimension} value(s)")));
        }
        Ok([v[0], v.get(1).copied().unwrap_or(0.0)])
    };
    let lower = corner(&mut s, "lower")?;
    let upper = corner(&mut s, "upper")?;
    let nodes: Vec<usize> = s
        .uints("nodes")?
        .ok_or_else(|| s.missing("nodes"))?
        .into_iter()
        .map(|n| n as usize)
        .collect();
    if nodes.len() != dimension {
        return Err(Error::config("domain", "nodes", format!("expected {dimension} value(s)")));
    }
    s.finish()?;
    let domain =
        Domain::new(dimension, lower, upper).map_err(|e| Error::config("domain", "upper", e.to_string()))?;
    Grid::new(&domain, &nodes).map_err(|e| Error::config("domain", "nodes", e.to_string()))?;

    let mut s = Section::new(&root, "exponents")?;
    let (p, r, gamma) = (s.expr("p")?, s.expr("r")?, s.expr("gamma")?);
    s.finish()?;
    let mut s = Section::new(&root, "coefficients")?;
    let (a, b) = (s.expr("a")?, s.expr("b")?);
    s.finish()?;
    let mut s = Section::new(&root, "source")?;
    let f = s.expr("f")?;
    s.finish()?;
    let exprs = ProblemExprs { p, r, gamma, a, b, f };

    let mut scheme = SchemeConfig::default();
    let fp = &mut scheme.fixed_point;
    let mut s = Section::new(&root, "solver")?;
    if let Some(v) = s.float("newton_tol")? {
        fp.inner.newton_tol = v;
    }
    if let Some(v) = s.uint("max_newton_iters")? {
        fp.inner.max_newton_iters = v as usize;
    }
    if let Some(v) = s.float("delta_start")? {
        fp.inner.delta_start = v;
    }
    if let Some(v) = s.float("delta_end")? {
        fp.inner.delta_end = v;
    }
    if let Some(v) = s.float("delta_factor")? {
        fp.inner.delta_factor = v;
    }
    if let Some(v) = s.float("fp_tol")? {
        fp.fp_tol = v;
    }
    if let Some(v) = s.uint("max_fp_iters")? {
        fp.max_fp_iters = v as usize;
    }
    s.finish()?;
    fp.inner
        .validate()
        .map_err(|e| Error::config("solver", "", e.to_string()))?;
    if !(fp.fp_tol > 0.0) || fp.max_fp_iters == 0 {
        return Err(Error::config("solver", "fp_tol", "fp_tol and max_fp_iters must be positive"));
    }

    let mut coarse_companion = true;
    let mut s = Section::new(&root, "scheme")?;
    if let Some(v) = s.uints("schedule")? {
        scheme.schedule = v;
    }
    if let Some(v) = s.float("margin")? {
        scheme.margin_fraction = v;
    }
    if let Some(v) = s.boolean("warm_start")? {
        scheme.warm_start = v;
    }
    if let Some(v) = s.boolean("coarse_companion")? {
        coarse_companion = v;
    }
    s.finish()?;
    scheme
        .validate()
        .map_err(|e| Error::config("scheme", "", e.to_string()))?;

    let mut estimates = EstimateConfig {
        seed,
        ..EstimateConfig::default()
    };
    let mut s = Section::new(&root, "estimates")?;
    if let Some(v) = s.floats("truncation_levels")? {
        estimates.truncation_levels = v;
    }
    if let Some(v) = s.floats("tail_levels")? {
        estimates.tail_levels = v;
    }
    if let Some(v) = s.uint("equi_levels")? {
        estimates.equi_levels = v as usize;
    }
    if let Some(v) = s.uint("residual_from")? {
        estimates.residual_from = v;
    }
    if let Some(v) = s.floats("extra_margins")? {
        estimates.extra_margins = v;
    }
    s.finish()?;
    let levels = estimates.truncation_levels.iter().chain(&estimates.tail_levels);
    if levels.clone().any(|&k| !(k > 0.0)) {
        return Err(Error::config("estimates", "", "truncation and tail levels must be positive"));
    }

    let mut s = Section::new(&root, "report")?;
    let out_dir = match s.get("out_dir") {
        Some(Value::String(d)) => PathBuf::from(d),
        Some(_) => return Err(s.mismatch("out_dir", "a string")),
        None => return Err(s.missing("out_dir")),
    };
    let mut formats = ReportFormats { json: true, csv: true };
    if let Some(list) = s.strings("formats")? {
        formats = ReportFormats { json: false, csv: false };
        for f in list {
            match f.as_str() {
                "json" => formats.json = true,
                "csv" => formats.csv = true,
                other => {
                    return Err(Error::config("report", "formats", format!("unknown format `{other}`")))
                }
            }
        }
    }
    s.finish()?;

    let mut s = Section::new(&root, "sweep")?;
    let sweep = if s.table.is_some() {
        let mut list = |key| -> Result<Vec<f64>> {
            let v = s.floats(key)?.ok_or_else(|| s.missing(key))?;
            if v.is_empty() {
                return Err(Error::config("sweep", key, "must not be empty"));
            }
            Ok(v)
        };
        let grid = SweepGrid {
            p: list("p")?,
            r: list("r")?,
            gamma: list("gamma")?,
        };
        Some(grid)
    } else {
        None
    };
    s.finish()?;

    Ok(RunConfig {
        domain,
        nodes,
        exprs,
        scheme,
        estimates,
        coarse_companion,
        out_dir,
        formats,
        seed,
        sweep,
    })
}
