//! The sequence of approximate problems indexed by n.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{interior_subdomain, Grid, ScalarField};
use crate::operators::{sample_source, truncated_source, OperatorContext};
use crate::problem::ProblemSpec;
use crate::solver::{fixed_point_solve, FixedPointConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeConfig {
    /// Strictly increasing indices n ≥ 1.
    pub schedule: Vec<u64>,
    pub fixed_point: FixedPointConfig,
    /// Width of the boundary strip excluded from positivity checks, as a
    /// fraction of the shortest side of the domain.
    pub margin_fraction: f64,
    /// Start each solve from the previous solution.
    pub warm_start: bool,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            schedule: vec![1, 2, 4, 8, 16, 32, 64],
            fixed_point: FixedPointConfig::default(),
            margin_fraction: 0.1,
            warm_start: true,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() || self.schedule[0] == 0 {
            return Err(Error::Domain("schedule must be nonempty with n ≥ 1".into()));
        }
        if self.schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("schedule must be strictly increasing".into()));
        }
        if !(self.margin_fraction > 0.0 && self.margin_fraction < 0.5) {
            return Err(Error::Domain(format!(
                "margin fraction must lie in (0, 0.5), got {}",
                self.margin_fraction
            )));
        }
        Ok(())
    }
}

/// Convergence history of one approximate problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveRecord {
    pub n: u64,
    pub iterations: usize,
    pub newton_iterations: usize,
    pub changes: Vec<f64>,
    pub damped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityRecord {
    pub n_lo: u64,
    pub n_hi: u64,
    /// min over nodes of u_{n_hi} − u_{n_lo}.
    pub min_difference: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct SchemeResult {
    pub grid: Grid,
    /// Sampled source before truncation.
    pub source: ScalarField,
    pub schedule: Vec<u64>,
    pub solutions: Vec<ScalarField>,
    pub records: Vec<SolveRecord>,
    pub margin_fraction: f64,
}

impl SchemeResult {
    pub fn solution(&self, n: u64) -> Option<&ScalarField> {
        self.schedule.iter().position(|&m| m == n).map(|i| &self.solutions[i])
    }

    pub fn margin(&self) -> f64 {
        self.margin_fraction * self.grid.domain().shortest_side()
    }
}

/// Solves the approximate problems for every n in the schedule. A failure
/// aborts the run and carries the solutions computed so far.
pub fn run_scheme(spec: &ProblemSpec, grid: &Grid, cfg: &SchemeConfig) -> Result<SchemeResult> {
    cfg.validate()?;
    let source = sample_source(spec, grid)?;
    let mut result = SchemeResult {
        grid: *grid,
        source,
        schedule: Vec::new(),
        solutions: Vec::new(),
        records: Vec::new(),
        margin_fraction: cfg.margin_fraction,
    };
    let base = OperatorContext::new(spec, grid, cfg.fixed_point.inner.delta_end, cfg.schedule[0])?;
    for &n in &cfg.schedule {
        let attempt = truncated_source(&result.source, n).and_then(|f_n| {
            let initial = if cfg.warm_start { result.solutions.last() } else { None };
            fixed_point_solve(&base.with_n(n), &f_n, initial, &cfg.fixed_point)
        });
        match attempt {
            Ok(fp) => {
                result.schedule.push(n);
                result.records.push(SolveRecord {
                    n,
                    iterations: fp.iterations,
                    newton_iterations: fp.newton_iterations,
                    changes: fp.changes,
                    damped: fp.damped,
                });
                result.solutions.push(fp.solution);
            }
            Err(cause) => {
                return Err(Error::SchemeAborted {
                    n,
                    cause: Box::new(cause),
                    partial: Box::new(result),
                })
            }
        }
    }
    Ok(result)
}

/// min of `u` over the nodes at distance at least `margin` from the boundary.
pub fn positivity_floor(u: &ScalarField, margin: f64) -> Result<f64> {
    let nodes = interior_subdomain(u.grid(), margin)?;
    Ok(nodes.iter().map(|&k| u.values()[k]).fold(f64::INFINITY, f64::min))
}

/// Checks u_{n_i} ≤ u_{n_{i+1}} for consecutive indices up to `tolerance`
/// relative to the larger sup norm.
pub fn check_monotonicity(result: &SchemeResult, tolerance: f64) -> Vec<MonotonicityRecord> {
    result
        .schedule
        .windows(2)
        .zip(result.solutions.windows(2))
        .map(|(n, u)| {
            let min_difference = u[1]
                .values()
                .iter()
                .zip(u[0].values())
                .map(|(a, b)| a - b)
                .fold(f64::INFINITY, f64::min);
            let tol = tolerance * u[1].sup_norm().max(1.0);
            MonotonicityRecord {
                n_lo: n[0],
                n_hi: n[1],
                min_difference,
                tolerance: tol,
                pass: min_difference >= -tol,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::FieldExpr;
    use crate::problem::Domain;

    fn spec() -> ProblemSpec {
        let domain = Domain::interval(0.0, 1.0).unwrap();
        ProblemSpec::constant(domain, 2.0, 1.5, 0.5, 1.0, 1.0, FieldExpr::parse("1/sqrt(x)").unwrap())
    }

    #[test]
    fn solutions_increase_with_n_and_stay_positive() {
        let spec = spec();
        let grid = Grid::interval(0.0, 1.0, 33).unwrap();
        let cfg = SchemeConfig {
            schedule: vec![1, 2, 4, 8, 16],
            ..SchemeConfig::default()
        };
        let res = run_scheme(&spec, &grid, &cfg).unwrap();
        assert_eq!(res.solutions.len(), 5);
        for rec in check_monotonicity(&res, 1e-8) {
            assert!(rec.pass, "{rec:?}");
        }
        let floors: Vec<f64> = res.solutions.iter().map(|u| positivity_floor(u, res.margin()).unwrap()).collect();
        assert!(floors[0] > 0.0);
        assert!(floors.windows(2).all(|w| w[1] >= w[0] - 1e-10));
    }

    #[test]
    fn rejects_bad_schedules() {
        let grid = Grid::interval(0.0, 1.0, 9).unwrap();
        for schedule in [vec![], vec![0, 1], vec![2, 2], vec![4, 2]] {
            let cfg = SchemeConfig {
                schedule,
                ..SchemeConfig::default()
            };
            assert!(run_scheme(&spec(), &grid, &cfg).is_err());
        }
    }

    #[test]
    fn abort_keeps_partial_results() {
        let grid = Grid::interval(0.0, 1.0, 17).unwrap();
        let mut cfg = SchemeConfig {
            schedule: vec![1, 1000],
            ..SchemeConfig::default()
        };
        cfg.fixed_point.max_fp_iters = 3;
        cfg.warm_start = false;
        match run_scheme(&spec(), &grid, &cfg) {
            Err(Error::SchemeAborted { n, partial, .. }) => {
                assert!(n == 1 || n == 1000);
                assert!(partial.solutions.len() < 2);
            }
            other => panic!("{other:?}"),
        }
    }
}
