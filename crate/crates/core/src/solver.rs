//! Solvers for one approximate problem.
//!
//! The inner problem freezes the singular right-hand side at a previous iterate
//! and minimizes the strictly convex energy [`frozen_energy`] by damped Newton
//! with a continuation in the gradient regularization δ. The outer loop iterates
//! the resulting map v ↦ w until it reaches its fixed point.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::operators::{
    frozen_energy, frozen_energy_gradient, frozen_energy_hessian, lower_order_apply,
    p_laplacian_apply, regularized_rhs, OperatorContext,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InnerSolveConfig {
    /// Residual tolerance relative to 1 + sup |g|.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub delta_start: f64,
    pub delta_end: f64,
    pub delta_factor: f64,
}

impl Default for InnerSolveConfig {
    fn default() -> Self {
        InnerSolveConfig {
            newton_tol: 1e-9,
            max_newton_iters: 200,
            delta_start: 1e-2,
            delta_end: 1e-8,
            delta_factor: 10.0,
        }
    }
}

impl InnerSolveConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.newton_tol > 0.0
            && self.max_newton_iters > 0
            && self.delta_end >= 0.0
            && self.delta_start >= self.delta_end
            && self.delta_factor > 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid inner solver settings {self:?}")))
        }
    }

    /// The δ continuation schedule, ending at `delta_end`.
    pub fn deltas(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut d = self.delta_start;
        while d > self.delta_end * (1.0 + 1e-9) && d > 0.0 {
            out.push(d);
            d /= self.delta_factor;
        }
        out.push(self.delta_end);
        out
    }
}

#[derive(Debug, Clone)]
pub struct InnerSolveResult {
    pub solution: ScalarField,
    pub newton_iterations: usize,
    /// Sup norm of the residual after each Newton step at the final δ.
    pub residuals: Vec<f64>,
    pub energy: f64,
}

/// Minimizes the frozen energy for source `g`, starting from `initial`.
/// With `continuation` the whole δ schedule is traversed, otherwise only its
/// final value is used.
pub fn minimize_energy(
    ctx: &OperatorContext,
    g: &ScalarField,
    initial: &ScalarField,
    cfg: &InnerSolveConfig,
    continuation: bool,
) -> Result<InnerSolveResult> {
    cfg.validate()?;
    let deltas = if continuation {
        cfg.deltas()
    } else {
        vec![cfg.delta_end]
    };
    let mut w = initial.clone();
    w.enforce_dirichlet();
    let mut total = 0;
    let mut residuals = Vec::new();
    for delta in deltas {
        let c = ctx.with_delta(delta);
        let (next, iters, res) = newton(&c, g, w, cfg)?;
        w = next;
        total += iters;
        residuals = res;
    }
    let energy = frozen_energy(&ctx.with_delta(cfg.delta_end), &w, g);
    Ok(InnerSolveResult {
        solution: w,
        newton_iterations: total,
        residuals,
        energy,
    })
}

fn newton(
    ctx: &OperatorContext,
    g: &ScalarField,
    mut w: ScalarField,
    cfg: &InnerSolveConfig,
) -> Result<(ScalarField, usize, Vec<f64>)> {
    let unknowns = ctx.unknowns().to_vec();
    let vol = ctx.grid().node_volume();
    let target = cfg.newton_tol * (1.0 + g.sup_norm());
    let mut residuals = Vec::new();
    let mut energy = frozen_energy(ctx, &w, g);
    for iter in 0..=cfg.max_newton_iters {
        let res = frozen_energy_gradient(ctx, &w, g);
        let norm = res.sup_norm();
        residuals.push(norm);
        if !norm.is_finite() {
            break;
        }
        if norm <= target {
            return Ok((w, iter, residuals));
        }
        if iter == cfg.max_newton_iters {
            break;
        }
        let rhs: Vec<f64> = unknowns.iter().map(|&k| -vol * res.values()[k]).collect();
        let step = frozen_energy_hessian(ctx, &w).cholesky()?.solve(&rhs);
        let slope: f64 = -rhs.iter().zip(&step).map(|(a, b)| a * b).sum::<f64>();
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = w.clone();
            for (s, &k) in step.iter().zip(&unknowns) {
                trial.values_mut()[k] += alpha * s;
            }
            let e = frozen_energy(ctx, &trial, g);
            // Once the predicted decrease is at roundoff level the energy can no
            // longer discriminate, so the full step is taken.
            let flat = slope.abs() <= 1e-13 * (1.0 + energy.abs());
            if flat || e <= energy + 1e-4 * alpha * slope {
                w = trial;
                energy = e;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(Error::NewtonNonConvergence {
        delta: ctx.delta(),
        residuals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPointConfig {
    /// Tolerance on sup |w − v| / sup |w|.
    pub fp_tol: f64,
    pub max_fp_iters: usize,
    pub inner: InnerSolveConfig,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            fp_tol: 1e-10,
            max_fp_iters: 500,
            inner: InnerSolveConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub solution: ScalarField,
    pub iterations: usize,
    /// Relative sup change per outer iteration.
    pub changes: Vec<f64>,
    pub newton_iterations: usize,
    pub damped: bool,
}

/// Number of consecutive increases of the relative change that triggers
/// averaging of the next iterate with the current one.
const DAMPING_TRIGGER: usize = 3;

/// Solves the approximate problem of index `ctx.n()` with truncated source `f_n`.
pub fn fixed_point_solve(
    ctx: &OperatorContext,
    f_n: &ScalarField,
    initial: Option<&ScalarField>,
    cfg: &FixedPointConfig,
) -> Result<FixedPointResult> {
    if !(cfg.fp_tol > 0.0) || cfg.max_fp_iters == 0 {
        return Err(Error::Domain(format!("invalid fixed-point settings {cfg:?}")));
    }
    let ctx = ctx.with_delta(cfg.inner.delta_end);
    let mut v = match initial {
        Some(u) => u.clone(),
        None => ScalarField::zeros(*ctx.grid()),
    };
    v.enforce_dirichlet();
    let mut changes = Vec::new();
    let mut newton_iterations = 0;
    let mut increases = 0;
    let mut damped = false;
    for iter in 0..cfg.max_fp_iters {
        let g = regularized_rhs(&ctx, &v, f_n);
        let inner = minimize_energy(&ctx, &g, &v, &cfg.inner, iter == 0)?;
        newton_iterations += inner.newton_iterations;
        let w = inner.solution;
        let scale = w.sup_norm().max(f64::MIN_POSITIVE);
        let change = w.sup_distance(&v)? / scale;
        if changes.last().is_some_and(|&last| change > last) {
            increases += 1;
        } else {
            increases = 0;
        }
        changes.push(change);
        if change <= cfg.fp_tol {
            return Ok(FixedPointResult {
                solution: w,
                iterations: iter + 1,
                changes,
                newton_iterations,
                damped,
            });
        }
        if increases >= DAMPING_TRIGGER {
            damped = true;
            increases = 0;
            let avg = v.values().iter().zip(w.values()).map(|(a, b)| 0.5 * (a + b)).collect();
            v = ScalarField::new(*ctx.grid(), avg)?;
        } else {
            v = w;
        }
    }
    Err(Error::FixedPointNonConvergence { changes })
}

/// Largest system the dense oracle accepts.
pub const ORACLE_MAX_UNKNOWNS: usize = 6;
const ORACLE_STARTS: usize = 8;
const ORACLE_AGREEMENT: f64 = 1e-9;

/// Independent solve of the full nonlinear system for tiny grids: Newton with a
/// finite-difference Jacobian and dense LU from the zero state and several
/// random positive states. All converged roots must agree.
pub fn oracle_solve(ctx: &OperatorContext, f_n: &ScalarField, seed: u64) -> Result<ScalarField> {
    let unknowns = ctx.unknowns().to_vec();
    if unknowns.len() > ORACLE_MAX_UNKNOWNS {
        return Err(Error::OracleFailure(format!(
            "{} unknowns exceed the oracle limit of {ORACLE_MAX_UNKNOWNS}",
            unknowns.len()
        )));
    }
    let grid = *ctx.grid();
    let residual = |x: &DVector<f64>| -> DVector<f64> {
        let mut u = ScalarField::zeros(grid);
        for (i, &k) in unknowns.iter().enumerate() {
            u.values_mut()[k] = x[i];
        }
        let a = p_laplacian_apply(ctx, &u);
        let b = lower_order_apply(ctx, &u);
        let c = regularized_rhs(ctx, &u, f_n);
        DVector::from_iterator(
            unknowns.len(),
            unknowns.iter().map(|&k| a.values()[k] + b.values()[k] - c.values()[k]),
        )
    };
    let m = unknowns.len();
    let tol = 1e-11 * (1.0 + f_n.sup_norm() * ctx.n() as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![DVector::zeros(m)];
    for _ in 0..ORACLE_STARTS {
        starts.push(DVector::from_fn(m, |_, _| rng.gen_range(0.05..3.0)));
    }
    let mut roots: Vec<DVector<f64>> = Vec::new();
    for start in starts {
        let mut x = start;
        let mut fx = residual(&x);
        for _ in 0..200 {
            if fx.amax() <= tol {
                break;
            }
            let mut jac = DMatrix::zeros(m, m);
            for j in 0..m {
                let h = 1e-7 * (1.0 + x[j].abs());
                let mut xp = x.clone();
                xp[j] += h;
                let mut xm = x.clone();
                xm[j] -= h;
                jac.set_column(j, &((residual(&xp) - residual(&xm)) / (2.0 * h)));
            }
            let Some(step) = jac.lu().solve(&(-&fx)) else { break };
            let mut alpha = 1.0;
            let mut improved = false;
            for _ in 0..40 {
                let trial = &x + alpha * &step;
                let ft = residual(&trial);
                if ft.norm() < fx.norm() {
                    x = trial;
                    fx = ft;
                    improved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !improved {
                break;
            }
        }
        if fx.amax() <= tol {
            roots.push(x);
        }
    }
    let Some(first) = roots.first() else {
        return Err(Error::OracleFailure("no start converged".into()));
    };
    for other in &roots[1..] {
        let distance = (other - first).amax();
        if distance > ORACLE_AGREEMENT {
            return Err(Error::UniquenessViolation { distance });
        }
    }
    let mut u = ScalarField::zeros(grid);
    for (i, &k) in unknowns.iter().enumerate() {
        u.values_mut()[k] = first[i];
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::FieldExpr;
    use crate::grid::Grid;
    use crate::operators::{sample_source, truncated_source};
    use crate::problem::{Domain, ProblemExprs, ProblemSpec};

    fn ctx_1d(p: f64, r: f64, gamma: f64, nodes: usize, n: u64) -> (OperatorContext, ScalarField) {
        let domain = Domain::interval(0.0, 1.0).unwrap();
        let spec = ProblemSpec::constant(domain, p, r, gamma, 1.0, 1.0, FieldExpr::constant(2.0));
        let grid = Grid::interval(0.0, 1.0, nodes).unwrap();
        let ctx = OperatorContext::new(&spec, &grid, 0.0, n).unwrap();
        let f = truncated_source(&sample_source(&spec, &grid).unwrap(), n).unwrap();
        (ctx, f)
    }

    #[test]
    fn delta_schedule() {
        let d = InnerSolveConfig::default().deltas();
        assert_eq!(d.len(), 7);
        assert!((d[0] - 1e-2).abs() < 1e-18 && d[6] == 1e-8);
    }

    #[test]
    fn linear_inner_problem_matches_direct_solve() {
        // p = 2, r = 1: the frozen problem is linear.
        let (ctx, _) = ctx_1d(2.0, 1.0, 0.5, 17, 1);
        let grid = *ctx.grid();
        let g = ScalarField::constant(grid, 3.0);
        let res = minimize_energy(&ctx, &g, &ScalarField::zeros(grid), &InnerSolveConfig::default(), true)
            .unwrap();
        let w = res.solution;
        let lap = p_laplacian_apply(&ctx, &w);
        for &k in ctx.unknowns() {
            assert!((lap.values()[k] + w.values()[k] - 3.0).abs() < 1e-8);
        }
    }

    #[test]
    fn nonlinear_inner_problem_converges_quadratically() {
        let (ctx, _) = ctx_1d(3.0, 2.0, 0.5, 33, 1);
        let grid = *ctx.grid();
        let g = ScalarField::from_fn(grid, |x| 5.0 + x[0]);
        let cfg = InnerSolveConfig::default();
        let res = minimize_energy(&ctx, &g, &ScalarField::zeros(grid), &cfg, true).unwrap();
        assert!(*res.residuals.last().unwrap() <= cfg.newton_tol * 7.0);
        assert!(res.solution.min() >= 0.0);
    }

    #[test]
    fn sublinear_exponent_inner_problem() {
        let (ctx, _) = ctx_1d(1.5, 0.8, 0.5, 33, 1);
        let grid = *ctx.grid();
        let g = ScalarField::constant(grid, 1.0);
        let res = minimize_energy(&ctx, &g, &ScalarField::zeros(grid), &InnerSolveConfig::default(), true);
        assert!(res.is_ok(), "{res:?}");
    }

    #[test]
    fn fixed_point_matches_oracle_on_tiny_grids() {
        for &(p, r, gamma, n) in &[(2.0, 1.5, 0.5, 1), (2.0, 1.5, 0.5, 8), (3.0, 2.0, 0.3, 4), (1.6, 1.2, 0.8, 2)] {
            let (ctx, f) = ctx_1d(p, r, gamma, 5, n);
            let fp = fixed_point_solve(&ctx, &f, None, &FixedPointConfig::default()).unwrap();
            let oracle = oracle_solve(&ctx.with_delta(1e-8), &f, 3).unwrap();
            let d = fp.solution.sup_distance(&oracle).unwrap();
            assert!(d <= 1e-8, "p={p} r={r} gamma={gamma} n={n}: {d}");
        }
    }

    #[test]
    fn two_dimensional_fixed_point() {
        let domain = Domain::rectangle((0.0, 1.0), (0.0, 1.0)).unwrap();
        let exprs = ProblemExprs {
            p: FieldExpr::parse("2 + 0.5*x").unwrap(),
            r: FieldExpr::constant(1.5),
            gamma: FieldExpr::parse("0.4 + 0.2*y").unwrap(),
            a: FieldExpr::constant(1.0),
            b: FieldExpr::constant(1.0),
            f: FieldExpr::constant(4.0),
        };
        let spec = ProblemSpec::new(domain, exprs).unwrap();
        let grid = Grid::new(&domain, &[4, 4]).unwrap();
        let ctx = OperatorContext::new(&spec, &grid, 0.0, 3).unwrap();
        let f = truncated_source(&sample_source(&spec, &grid).unwrap(), 3).unwrap();
        let fp = fixed_point_solve(&ctx, &f, None, &FixedPointConfig::default()).unwrap();
        let oracle = oracle_solve(&ctx.with_delta(1e-8), &f, 9).unwrap();
        assert!(fp.solution.sup_distance(&oracle).unwrap() <= 1e-8);
    }

    #[test]
    fn oracle_rejects_large_systems() {
        let (ctx, f) = ctx_1d(2.0, 1.5, 0.5, 17, 1);
        assert!(matches!(oracle_solve(&ctx, &f, 1), Err(Error::OracleFailure(_))));
    }

    #[test]
    fn iteration_cap_reports_history() {
        let (ctx, f) = ctx_1d(2.0, 1.5, 0.5, 9, 4);
        let cfg = FixedPointConfig {
            max_fp_iters: 2,
            ..FixedPointConfig::default()
        };
        match fixed_point_solve(&ctx, &f, None, &cfg) {
            Err(Error::FixedPointNonConvergence { changes }) => assert_eq!(changes.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
