//! Uniform structured grids with node, face and cell storage.
//!
//! Gradients live on faces (first differences between neighbouring nodes).
//! Cells are the intervals (1D) or squares (2D) spanned by neighbouring nodes;
//! the squared gradient magnitude of a cell averages the squared differences on
//! its faces, so in 1D a cell and its single face coincide.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::problem::Domain;
use crate::report::fmt_number;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    domain: Domain,
    nodes: [usize; 2],
    spacing: [f64; 2],
}

/// One face difference inside a cell.
#[derive(Debug, Clone, Copy)]
pub struct CellEdge {
    pub lo: usize,
    pub hi: usize,
    pub axis: usize,
    pub face: usize,
    /// Weight of this edge's squared difference in the cell average.
    pub weight: f64,
}

impl Grid {
    pub fn new(domain: &Domain, nodes_per_axis: &[usize]) -> Result<Grid> {
        if nodes_per_axis.len() != domain.dimension {
            return Err(Error::InvalidGrid(format!(
                "{} node counts given for a {}-dimensional domain",
                nodes_per_axis.len(),
                domain.dimension
            )));
        }
        let mut nodes = [1usize; 2];
        let mut spacing = [1.0; 2];
        for (axis, &count) in nodes_per_axis.iter().enumerate() {
            if count < 3 {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} needs at least 3 nodes, got {count}"
                )));
            }
            nodes[axis] = count;
            spacing[axis] = domain.side(axis) / (count - 1) as f64;
        }
        Ok(Grid {
            domain: *domain,
            nodes,
            spacing,
        })
    }

    pub fn interval(a: f64, b: f64, nodes: usize) -> Result<Grid> {
        Grid::new(&Domain::interval(a, b)?, &[nodes])
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dimension(&self) -> usize {
        self.domain.dimension
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.nodes[..self.dimension()]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacing[axis]
    }

    pub fn node_count(&self) -> usize {
        self.nodes[0] * self.nodes[1]
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        i + self.nodes[0] * j
    }

    pub fn node_ij(&self, k: usize) -> (usize, usize) {
        (k % self.nodes[0], k / self.nodes[0])
    }

    pub fn node_coords(&self, k: usize) -> [f64; 2] {
        let (i, j) = self.node_ij(k);
        let lo = self.domain.lower;
        if self.dimension() == 1 {
            [lo[0] + i as f64 * self.spacing[0], 0.0]
        } else {
            [
                lo[0] + i as f64 * self.spacing[0],
                lo[1] + j as f64 * self.spacing[1],
            ]
        }
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        let (i, j) = self.node_ij(k);
        let on_x = i == 0 || i == self.nodes[0] - 1;
        if self.dimension() == 1 {
            on_x
        } else {
            on_x || j == 0 || j == self.nodes[1] - 1
        }
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.node_count()).map(|k| self.is_boundary(k)).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&k| !self.is_boundary(k))
            .collect()
    }

    /// Product of the spacings: the quadrature weight of an interior node.
    pub fn node_volume(&self) -> f64 {
        self.spacing[..self.dimension()].iter().product()
    }

    /// Composite trapezoid weight of node `k`.
    pub fn node_weight(&self, k: usize) -> f64 {
        let (i, j) = self.node_ij(k);
        let mut w = self.node_volume();
        if i == 0 || i == self.nodes[0] - 1 {
            w *= 0.5;
        }
        if self.dimension() == 2 && (j == 0 || j == self.nodes[1] - 1) {
            w *= 0.5;
        }
        w
    }

    fn cells_per_axis(&self) -> [usize; 2] {
        if self.dimension() == 1 {
            [self.nodes[0] - 1, 1]
        } else {
            [self.nodes[0] - 1, self.nodes[1] - 1]
        }
    }

    pub fn cell_count(&self) -> usize {
        let c = self.cells_per_axis();
        c[0] * c[1]
    }

    pub fn cell_volume(&self) -> f64 {
        self.node_volume()
    }

    pub fn cell_center(&self, c: usize) -> [f64; 2] {
        let cx = self.cells_per_axis()[0];
        let (i, j) = (c % cx, c / cx);
        let lo = self.domain.lower;
        let x = lo[0] + (i as f64 + 0.5) * self.spacing[0];
        if self.dimension() == 1 {
            [x, 0.0]
        } else {
            [x, lo[1] + (j as f64 + 0.5) * self.spacing[1]]
        }
    }

    /// Corner nodes of cell `c` (2 in 1D, 4 in 2D).
    pub fn cell_nodes(&self, c: usize) -> Vec<usize> {
        let cx = self.cells_per_axis()[0];
        let (i, j) = (c % cx, c / cx);
        if self.dimension() == 1 {
            vec![i, i + 1]
        } else {
            vec![
                self.node_index(i, j),
                self.node_index(i + 1, j),
                self.node_index(i, j + 1),
                self.node_index(i + 1, j + 1),
            ]
        }
    }

    /// Face differences entering the squared gradient of cell `c`.
    pub fn cell_edges(&self, c: usize) -> ([CellEdge; 4], usize) {
        let cx = self.cells_per_axis()[0];
        let (i, j) = (c % cx, c / cx);
        let blank = CellEdge {
            lo: 0,
            hi: 0,
            axis: 0,
            face: 0,
            weight: 0.0,
        };
        let mut edges = [blank; 4];
        if self.dimension() == 1 {
            edges[0] = CellEdge {
                lo: i,
                hi: i + 1,
                axis: 0,
                face: i,
                weight: 1.0,
            };
            return (edges, 1);
        }
        let nx = self.nodes[0];
        for (slot, jj) in [j, j + 1].into_iter().enumerate() {
            edges[slot] = CellEdge {
                lo: self.node_index(i, jj),
                hi: self.node_index(i + 1, jj),
                axis: 0,
                face: i + (nx - 1) * jj,
                weight: 0.5,
            };
        }
        for (slot, ii) in [i, i + 1].into_iter().enumerate() {
            edges[2 + slot] = CellEdge {
                lo: self.node_index(ii, j),
                hi: self.node_index(ii, j + 1),
                axis: 1,
                face: ii + nx * j,
                weight: 0.5,
            };
        }
        (edges, 4)
    }

    pub fn face_count(&self, axis: usize) -> usize {
        match (self.dimension(), axis) {
            (1, 0) => self.nodes[0] - 1,
            (1, _) => 0,
            (_, 0) => (self.nodes[0] - 1) * self.nodes[1],
            _ => self.nodes[0] * (self.nodes[1] - 1),
        }
    }

    /// End nodes of face `f` on `axis` (lower, upper).
    pub fn face_nodes(&self, axis: usize, f: usize) -> (usize, usize) {
        if axis == 0 {
            let nx = self.nodes[0] - 1;
            let (i, j) = (f % nx, f / nx);
            let k = self.node_index(i, j);
            (k, k + 1)
        } else {
            let k = f;
            (k, k + self.nodes[0])
        }
    }

    /// Quadrature weight of a face under the cell-averaged gradient energy.
    pub fn face_weight(&self, axis: usize, f: usize) -> f64 {
        if self.dimension() == 1 {
            return self.cell_volume();
        }
        let (lo, _) = self.face_nodes(axis, f);
        let (i, j) = self.node_ij(lo);
        let (along, extent) = if axis == 0 { (j, self.nodes[1]) } else { (i, self.nodes[0]) };
        let adjacent = if along == 0 || along == extent - 1 { 1.0 } else { 2.0 };
        self.cell_volume() * adjacent * 0.5
    }

    /// Grid with every other node removed, if the node counts allow it.
    pub fn coarsened(&self) -> Option<Grid> {
        let mut counts = Vec::with_capacity(self.dimension());
        for &n in self.nodes_per_axis() {
            if (n - 1) % 2 != 0 || (n - 1) / 2 + 1 < 3 {
                return None;
            }
            counts.push((n - 1) / 2 + 1);
        }
        Grid::new(&self.domain, &counts).ok()
    }

    pub fn refined(&self) -> Grid {
        let counts: Vec<usize> = self.nodes_per_axis().iter().map(|&n| 2 * n - 1).collect();
        Grid::new(&self.domain, &counts).expect("refinement of a valid grid is valid")
    }
}

/// Node-valued field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != grid.node_count() {
            return Err(Error::InvalidGrid(format!(
                "field has {} values for {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: Grid) -> ScalarField {
        ScalarField {
            values: vec![0.0; grid.node_count()],
            grid,
        }
    }

    pub fn constant(grid: Grid, value: f64) -> ScalarField {
        ScalarField {
            values: vec![value; grid.node_count()],
            grid,
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut([f64; 2]) -> f64) -> ScalarField {
        let values = (0..grid.node_count())
            .map(|k| f(grid.node_coords(k)))
            .collect();
        ScalarField { grid, values }
    }

    /// Like [`ScalarField::from_fn`] but with zero boundary values.
    pub fn dirichlet_from_fn(grid: Grid, f: impl FnMut([f64; 2]) -> f64) -> ScalarField {
        let mut field = ScalarField::from_fn(grid, f);
        field.enforce_dirichlet();
        field
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn enforce_dirichlet(&mut self) {
        for k in 0..self.values.len() {
            if self.grid.is_boundary(k) {
                self.values[k] = 0.0;
            }
        }
    }

    pub fn is_dirichlet(&self) -> bool {
        (0..self.values.len()).all(|k| !self.grid.is_boundary(k) || self.values[k] == 0.0)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sup-norm of `self − other`.
    pub fn sup_distance(&self, other: &ScalarField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// CSV with columns `x[,y],value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.grid.dimension() == 1 {
            out.push_str("x,value\n");
        } else {
            out.push_str("x,y,value\n");
        }
        for (k, v) in self.values.iter().enumerate() {
            let p = self.grid.node_coords(k);
            if self.grid.dimension() == 1 {
                let _ = writeln!(out, "{},{}", fmt_number(p[0]), fmt_number(*v));
            } else {
                let _ = writeln!(
                    out,
                    "{},{},{}",
                    fmt_number(p[0]),
                    fmt_number(p[1]),
                    fmt_number(*v)
                );
            }
        }
        out
    }
}

/// Per-axis face values (first differences).
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    grid: Grid,
    components: Vec<Vec<f64>>,
}

impl FaceField {
    pub fn new(grid: Grid, components: Vec<Vec<f64>>) -> Result<FaceField> {
        if components.len() != grid.dimension() {
            return Err(Error::InvalidGrid(format!(
                "{} face components for dimension {}",
                components.len(),
                grid.dimension()
            )));
        }
        for (axis, c) in components.iter().enumerate() {
            if c.len() != grid.face_count(axis) {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} has {} face values, expected {}",
                    c.len(),
                    grid.face_count(axis)
                )));
            }
        }
        Ok(FaceField { grid, components })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn sup_norm(&self) -> f64 {
        self.components
            .iter()
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Cell averages of squared face values.
    pub fn squared_magnitude(&self) -> CellField {
        let values = (0..self.grid.cell_count())
            .map(|c| {
                let (edges, count) = self.grid.cell_edges(c);
                edges[..count]
                    .iter()
                    .map(|e| {
                        let g = self.components[e.axis][e.face];
                        e.weight * g * g
                    })
                    .sum()
            })
            .collect();
        CellField {
            grid: self.grid,
            values,
        }
    }

    pub fn magnitude(&self) -> CellField {
        let mut m = self.squared_magnitude();
        for v in &mut m.values {
            *v = v.sqrt();
        }
        m
    }

    /// Σ_faces w_f · self · other.
    pub fn weighted_dot(&self, other: &FaceField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let mut total = 0.0;
        for axis in 0..self.grid.dimension() {
            for f in 0..self.grid.face_count(axis) {
                total += self.grid.face_weight(axis, f)
                    * self.components[axis][f]
                    * other.components[axis][f];
            }
        }
        Ok(total)
    }
}

/// Cell-centered field, integrated by the midpoint rule.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    grid: Grid,
    values: Vec<f64>,
}

impl CellField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<CellField> {
        if values.len() != grid.cell_count() {
            return Err(Error::InvalidGrid(format!(
                "cell field has {} values for {} cells",
                values.len(),
                grid.cell_count()
            )));
        }
        Ok(CellField { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> CellField {
        let values = (0..grid.cell_count())
            .map(|c| f(grid.cell_center(c)))
            .collect();
        CellField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A field paired with a quadrature rule on its grid.
pub trait Quadrature {
    fn values(&self) -> &[f64];
    fn point(&self, i: usize) -> [f64; 2];
    fn weight(&self, i: usize) -> f64;
}

impl Quadrature for ScalarField {
    fn values(&self) -> &[f64] {
        &self.values
    }

    fn point(&self, i: usize) -> [f64; 2] {
        self.grid.node_coords(i)
    }

    fn weight(&self, i: usize) -> f64 {
        self.grid.node_weight(i)
    }
}

impl Quadrature for CellField {
    fn values(&self) -> &[f64] {
        &self.values
    }

    fn point(&self, i: usize) -> [f64; 2] {
        self.grid.cell_center(i)
    }

    fn weight(&self, _i: usize) -> f64 {
        self.grid.cell_volume()
    }
}

/// Face differences (u_hi − u_lo)/h.
pub fn gradient(u: &ScalarField) -> FaceField {
    let grid = u.grid;
    let components = (0..grid.dimension())
        .map(|axis| {
            let h = grid.spacing(axis);
            (0..grid.face_count(axis))
                .map(|f| {
                    let (lo, hi) = grid.face_nodes(axis, f);
                    (u.values[hi] - u.values[lo]) / h
                })
                .collect()
        })
        .collect();
    FaceField { grid, components }
}

/// Negative adjoint of [`gradient`] under face weights and node volumes, so that
/// Σ_f w_f F_f ∇v_f = −Σ_k div(F)_k v_k h^N for every Dirichlet v.
pub fn divergence(flux: &FaceField) -> ScalarField {
    let grid = flux.grid;
    let mut values = vec![0.0; grid.node_count()];
    let volume = grid.node_volume();
    for axis in 0..grid.dimension() {
        let h = grid.spacing(axis);
        for f in 0..grid.face_count(axis) {
            let (lo, hi) = grid.face_nodes(axis, f);
            let t = grid.face_weight(axis, f) * flux.components[axis][f] / (h * volume);
            values[lo] += t;
            values[hi] -= t;
        }
    }
    ScalarField { grid, values }
}

pub fn integrate(g: &(impl Quadrature + ?Sized)) -> f64 {
    g.values()
        .iter()
        .enumerate()
        .map(|(i, v)| g.weight(i) * v)
        .sum()
}

/// Nodes at distance at least `margin` from the boundary.
pub fn interior_subdomain(grid: &Grid, margin: f64) -> Result<Vec<usize>> {
    if !(margin > 0.0) {
        return Err(Error::Domain(format!("margin must be positive, got {margin}")));
    }
    let d = grid.domain();
    let slack = 1e-12 * d.shortest_side();
    let nodes: Vec<usize> = (0..grid.node_count())
        .filter(|&k| {
            let p = grid.node_coords(k);
            (0..grid.dimension()).all(|a| {
                let dist = (p[a] - d.lower[a]).min(d.upper[a] - p[a]);
                dist + slack >= margin
            })
        })
        .collect();
    if nodes.is_empty() {
        return Err(Error::EmptySubdomain { margin });
    }
    Ok(nodes)
}
