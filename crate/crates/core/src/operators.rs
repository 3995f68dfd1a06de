//! Discrete operators of the approximate problems.
//!
//! The diffusion part is the gradient of the cell energy
//! `Σ_c |c| a_c/p_c (S_c + δ²)^{p_c/2}`, where `S_c` is the cell-averaged squared
//! face gradient and `a`, `p` are evaluated at cell centers (face midpoints in 1D).
//! Zero-order terms use node values of `b`, `r`, `γ` and the trapezoid rule.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::linalg::BandedSpd;
use crate::problem::{q_from_exponents, ProblemSpec};

/// Floor on |w| when linearizing |w|^{r−1} for r < 1.
const LINEARIZATION_FLOOR: f64 = 1e-8;

/// T_k(s) = max(−k, min(s, k)).
pub fn truncate(s: f64, k: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::Domain(format!("truncation level must be positive, got {k}")));
    }
    Ok(s.clamp(-k, k))
}

pub fn truncate_field(u: &ScalarField, k: f64) -> Result<ScalarField> {
    truncate(0.0, k)?;
    Ok(u.map(|v| v.clamp(-k, k)))
}

/// f_n = T_n(f) for a nonnegative source that does not vanish identically.
pub fn truncated_source(f: &ScalarField, n: u64) -> Result<ScalarField> {
    if n == 0 {
        return Err(Error::Domain("regularization index must be at least 1".into()));
    }
    if let Some(k) = f.values().iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidSource(format!(
            "negative or undefined sample {} at {:?}",
            f.values()[k],
            f.grid().node_coords(k)
        )));
    }
    let grid = f.grid();
    if grid.interior_nodes().iter().all(|&k| f.values()[k] == 0.0) {
        return Err(Error::InvalidSource("source vanishes at every interior node".into()));
    }
    truncate_field(f, n as f64)
}

/// Node samples of the source. A node where `f` cannot be evaluated (an isolated
/// singularity of an integrable source) receives the average of `f` over its
/// dual cell, computed with an open midpoint rule that never touches the node.
pub fn sample_source(spec: &ProblemSpec, grid: &Grid) -> Result<ScalarField> {
    let mut values = Vec::with_capacity(grid.node_count());
    for k in 0..grid.node_count() {
        let x = grid.node_coords(k);
        let v = match spec.f.eval(x) {
            Ok(v) => v,
            Err(_) => dual_cell_average(spec, grid, x)?,
        };
        values.push(v);
    }
    ScalarField::new(*grid, values)
}

fn dual_cell_average(spec: &ProblemSpec, grid: &Grid, x: [f64; 2]) -> Result<f64> {
    let d = grid.domain();
    let subdivisions = if grid.dimension() == 1 { 256 } else { 32 };
    let ranges: Vec<(f64, f64)> = (0..2)
        .map(|a| {
            if a < grid.dimension() {
                let h = grid.spacing(a);
                ((x[a] - 0.5 * h).max(d.lower[a]), (x[a] + 0.5 * h).min(d.upper[a]))
            } else {
                (x[a], x[a])
            }
        })
        .collect();
    let ys = if grid.dimension() == 1 { 1 } else { subdivisions };
    let mut total = 0.0;
    let mut count = 0usize;
    for j in 0..ys {
        for i in 0..subdivisions {
            let t = |r: (f64, f64), s: usize, n: usize| r.0 + (s as f64 + 0.5) / n as f64 * (r.1 - r.0);
            let p = [t(ranges[0], i, subdivisions), t(ranges[1], j, ys)];
            total += spec.f.eval(p)?;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Field values of the problem data at the quadrature points of one grid.
#[derive(Debug)]
struct Coefficients {
    cell_a: Vec<f64>,
    cell_p: Vec<f64>,
    cell_gamma: Vec<f64>,
    cell_q: Vec<f64>,
    node_b: Vec<f64>,
    node_r: Vec<f64>,
    node_gamma: Vec<f64>,
    unknowns: Vec<usize>,
    unknown_of: Vec<Option<usize>>,
    bandwidth: usize,
}

/// Problem data bound to a grid, a gradient regularization δ and an index n.
#[derive(Debug, Clone)]
pub struct OperatorContext {
    spec: ProblemSpec,
    grid: Grid,
    delta: f64,
    n: u64,
    coeffs: Arc<Coefficients>,
}

impl OperatorContext {
    pub fn new(spec: &ProblemSpec, grid: &Grid, delta: f64, n: u64) -> Result<OperatorContext> {
        if !(delta >= 0.0) {
            return Err(Error::Domain(format!("delta must be nonnegative, got {delta}")));
        }
        if n == 0 {
            return Err(Error::Domain("regularization index must be at least 1".into()));
        }
        if grid.domain() != &spec.domain {
            return Err(Error::InvalidGrid("grid does not cover the problem domain".into()));
        }
        let cells = grid.cell_count();
        let mut cell_a = Vec::with_capacity(cells);
        let mut cell_p = Vec::with_capacity(cells);
        let mut cell_gamma = Vec::with_capacity(cells);
        let mut cell_q = Vec::with_capacity(cells);
        for c in 0..cells {
            let x = grid.cell_center(c);
            let (p, r, gamma) = (spec.p.eval(x)?, spec.r.eval(x)?, spec.gamma.eval(x)?);
            cell_a.push(spec.a.eval(x)?);
            cell_p.push(p);
            cell_gamma.push(gamma);
            cell_q.push(q_from_exponents(p, r, gamma));
        }
        let nodes = grid.node_count();
        let mut node_b = Vec::with_capacity(nodes);
        let mut node_r = Vec::with_capacity(nodes);
        let mut node_gamma = Vec::with_capacity(nodes);
        for k in 0..nodes {
            let x = grid.node_coords(k);
            node_b.push(spec.b.eval(x)?);
            node_r.push(spec.r.eval(x)?);
            node_gamma.push(spec.gamma.eval(x)?);
        }
        let unknowns = grid.interior_nodes();
        let mut unknown_of = vec![None; nodes];
        for (u, &k) in unknowns.iter().enumerate() {
            unknown_of[k] = Some(u);
        }
        // Cell couplings reach the diagonal neighbour in 2D.
        let bandwidth = if grid.dimension() == 1 {
            1
        } else {
            grid.nodes_per_axis()[0] - 1
        };
        Ok(OperatorContext {
            spec: spec.clone(),
            grid: *grid,
            delta,
            n,
            coeffs: Arc::new(Coefficients {
                cell_a,
                cell_p,
                cell_gamma,
                cell_q,
                node_b,
                node_r,
                node_gamma,
                unknowns,
                unknown_of,
                bandwidth,
            }),
        })
    }

    pub fn with_delta(&self, delta: f64) -> OperatorContext {
        OperatorContext {
            delta,
            ..self.clone()
        }
    }

    pub fn with_n(&self, n: u64) -> OperatorContext {
        OperatorContext { n, ..self.clone() }
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Interior nodes in unknown order.
    pub fn unknowns(&self) -> &[usize] {
        &self.coeffs.unknowns
    }

    pub fn cell_p(&self) -> &[f64] {
        &self.coeffs.cell_p
    }

    pub fn cell_q(&self) -> &[f64] {
        &self.coeffs.cell_q
    }

    pub fn cell_gamma(&self) -> &[f64] {
        &self.coeffs.cell_gamma
    }

    pub fn node_r(&self) -> &[f64] {
        &self.coeffs.node_r
    }

    pub fn node_b(&self) -> &[f64] {
        &self.coeffs.node_b
    }

    pub fn node_gamma(&self) -> &[f64] {
        &self.coeffs.node_gamma
    }

    fn check_grid(&self, u: &ScalarField) {
        assert_eq!(u.grid(), &self.grid, "field lives on a different grid");
    }

    /// Cell-averaged squared gradient of `u`.
    pub fn cell_gradient_squares(&self, u: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        (0..g.cell_count())
            .map(|c| {
                let (edges, count) = g.cell_edges(c);
                edges[..count]
                    .iter()
                    .map(|e| {
                        let d = (u[e.hi] - u[e.lo]) / g.spacing(e.axis);
                        e.weight * d * d
                    })
                    .sum()
            })
            .collect()
    }

    /// a (S + δ²)^{(p−2)/2} per cell.
    fn flux_coefficients(&self, u: &[f64]) -> Vec<f64> {
        let d2 = self.delta * self.delta;
        self.cell_gradient_squares(u)
            .into_iter()
            .enumerate()
            .map(|(c, s)| {
                let t = s + d2;
                if t == 0.0 {
                    0.0
                } else {
                    self.coeffs.cell_a[c] * t.powf(0.5 * (self.coeffs.cell_p[c] - 2.0))
                }
            })
            .collect()
    }

    /// ∂/∂u_k of the diffusion energy, for every node.
    fn diffusion_gradient(&self, u: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let kappa = self.flux_coefficients(u);
        let vol = g.cell_volume();
        let mut out = vec![0.0; g.node_count()];
        for (c, k) in kappa.iter().enumerate() {
            if *k == 0.0 {
                continue;
            }
            let (edges, count) = g.cell_edges(c);
            for e in &edges[..count] {
                let h = g.spacing(e.axis);
                let t = vol * k * e.weight * (u[e.hi] - u[e.lo]) / (h * h);
                out[e.hi] += t;
                out[e.lo] -= t;
            }
        }
        out
    }

    /// Σ_c |c| κ_c(u) Σ_e ω_e ∇_e u ∇_e φ: the flux pairing of the weak form.
    pub fn flux_pairing(&self, u: &ScalarField, phi: &ScalarField) -> f64 {
        self.check_grid(u);
        self.check_grid(phi);
        let g = &self.grid;
        let (u, phi) = (u.values(), phi.values());
        let kappa = self.flux_coefficients(u);
        let vol = g.cell_volume();
        let mut total = 0.0;
        for (c, k) in kappa.iter().enumerate() {
            let (edges, count) = g.cell_edges(c);
            for e in &edges[..count] {
                let h = g.spacing(e.axis);
                total += vol * k * e.weight * (u[e.hi] - u[e.lo]) * (phi[e.hi] - phi[e.lo]) / (h * h);
            }
        }
        total
    }

    pub fn bandwidth(&self) -> usize {
        self.coeffs.bandwidth
    }
}

/// −div(a (|∇u|² + δ²)^{(p−2)/2} ∇u) at interior nodes; boundary rows return u.
pub fn p_laplacian_apply(ctx: &OperatorContext, u: &ScalarField) -> ScalarField {
    ctx.check_grid(u);
    let g = ctx.grid();
    let vol = g.node_volume();
    let mut values = ctx.diffusion_gradient(u.values());
    for (k, v) in values.iter_mut().enumerate() {
        if g.is_boundary(k) {
            *v = u.values()[k];
        } else {
            *v /= vol;
        }
    }
    ScalarField::new(*g, values).expect("same grid")
}

/// b u |u|^{r−1}, with 0·|0|^{r−1} = 0.
pub fn lower_order_apply(ctx: &OperatorContext, u: &ScalarField) -> ScalarField {
    ctx.check_grid(u);
    let c = &ctx.coeffs;
    let values = u
        .values()
        .iter()
        .enumerate()
        .map(|(k, &v)| signed_power(v, c.node_r[k]) * c.node_b[k])
        .collect();
    ScalarField::new(*ctx.grid(), values).expect("same grid")
}

fn signed_power(v: f64, r: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.signum() * v.abs().powf(r)
    }
}

/// f_n / (|v| + 1/n)^γ.
pub fn regularized_rhs(ctx: &OperatorContext, v: &ScalarField, f_n: &ScalarField) -> ScalarField {
    ctx.check_grid(v);
    ctx.check_grid(f_n);
    let shift = 1.0 / ctx.n as f64;
    let gamma = &ctx.coeffs.node_gamma;
    let values = v
        .values()
        .iter()
        .zip(f_n.values())
        .enumerate()
        .map(|(k, (v, f))| f / (v.abs() + shift).powf(gamma[k]))
        .collect();
    ScalarField::new(*ctx.grid(), values).expect("same grid")
}

/// J(w) = Σ_c |c| a/p (S + δ²)^{p/2} + Σ_k w_k (b/(r+1)|w|^{r+1} − g w).
pub fn frozen_energy(ctx: &OperatorContext, w: &ScalarField, g: &ScalarField) -> f64 {
    ctx.check_grid(w);
    ctx.check_grid(g);
    let grid = ctx.grid();
    let c = &ctx.coeffs;
    let d2 = ctx.delta * ctx.delta;
    let vol = grid.cell_volume();
    let diffusion: f64 = ctx
        .cell_gradient_squares(w.values())
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let p = c.cell_p[i];
            let t = s + d2;
            if t == 0.0 {
                0.0
            } else {
                vol * c.cell_a[i] / p * t.powf(0.5 * p)
            }
        })
        .sum();
    let zero_order: f64 = w
        .values()
        .iter()
        .zip(g.values())
        .enumerate()
        .map(|(k, (&w, &g))| {
            let r = c.node_r[k];
            let power = if w == 0.0 { 0.0 } else { w.abs().powf(r + 1.0) };
            grid.node_weight(k) * (c.node_b[k] / (r + 1.0) * power - g * w)
        })
        .sum();
    diffusion + zero_order
}

/// Residual of the frozen problem at interior nodes: the energy gradient divided
/// by the node volume. Zero on the boundary.
pub fn frozen_energy_gradient(ctx: &OperatorContext, w: &ScalarField, g: &ScalarField) -> ScalarField {
    ctx.check_grid(w);
    ctx.check_grid(g);
    let grid = ctx.grid();
    let c = &ctx.coeffs;
    let vol = grid.node_volume();
    let mut values = ctx.diffusion_gradient(w.values());
    for (k, v) in values.iter_mut().enumerate() {
        if grid.is_boundary(k) {
            *v = 0.0;
        } else {
            let wk = w.values()[k];
            *v = *v / vol + c.node_b[k] * signed_power(wk, c.node_r[k]) - g.values()[k];
        }
    }
    ScalarField::new(*grid, values).expect("same grid")
}

/// Hessian of [`frozen_energy`] over the interior unknowns.
pub fn frozen_energy_hessian(ctx: &OperatorContext, w: &ScalarField) -> BandedSpd {
    ctx.check_grid(w);
    let grid = ctx.grid();
    let c = &ctx.coeffs;
    let u = w.values();
    let d2 = ctx.delta * ctx.delta;
    let vol = grid.cell_volume();
    let mut h = BandedSpd::zeros(c.unknowns.len(), c.bandwidth);
    let squares = ctx.cell_gradient_squares(u);
    for (cell, s) in squares.iter().enumerate() {
        let t = s + d2;
        if t == 0.0 {
            continue;
        }
        let (a, p) = (c.cell_a[cell], c.cell_p[cell]);
        let kappa = a * t.powf(0.5 * (p - 2.0));
        let dkappa = a * 0.5 * (p - 2.0) * t.powf(0.5 * (p - 4.0));
        let nodes = grid.cell_nodes(cell);
        let local = |k: usize| nodes.iter().position(|&n| n == k).expect("edge node in cell");
        let mut edge_part = [[0.0; 4]; 4];
        let mut v = [0.0; 4];
        let (edges, count) = grid.cell_edges(cell);
        for e in &edges[..count] {
            let hsp = grid.spacing(e.axis);
            let (lo, hi) = (local(e.lo), local(e.hi));
            let inv = 1.0 / (hsp * hsp);
            edge_part[lo][lo] += e.weight * inv;
            edge_part[hi][hi] += e.weight * inv;
            edge_part[lo][hi] -= e.weight * inv;
            edge_part[hi][lo] -= e.weight * inv;
            let gd = e.weight * (u[e.hi] - u[e.lo]) / (hsp * hsp);
            v[hi] += gd;
            v[lo] -= gd;
        }
        for (a_loc, &na) in nodes.iter().enumerate() {
            let Some(ia) = c.unknown_of[na] else { continue };
            for (b_loc, &nb) in nodes.iter().enumerate() {
                let Some(ib) = c.unknown_of[nb] else { continue };
                if ib > ia {
                    continue;
                }
                let value = vol * (kappa * edge_part[a_loc][b_loc] + 2.0 * dkappa * v[a_loc] * v[b_loc]);
                h.add(ia, ib, value);
            }
        }
    }
    let node_vol = grid.node_volume();
    for (i, &k) in c.unknowns.iter().enumerate() {
        let r = c.node_r[k];
        let wk = u[k].abs().max(if r < 1.0 { LINEARIZATION_FLOOR } else { 0.0 });
        let curvature = if wk == 0.0 {
            if r == 1.0 { 1.0 } else { 0.0 }
        } else {
            wk.powf(r - 1.0)
        };
        h.add(i, i, node_vol * c.node_b[k] * r * curvature);
    }
    h
}
