use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::engine::{propagate, Row, Sampling, SeriesConfig, SeriesReport};
use super::field::CoefficientField;
use crate::grid::Grid;
use crate::measures::{Measure, Repr};
use crate::{Error, Result};

/// Samples of `p(s, x; t, y)` for start points `x`, times `t` and `y` at grid centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelGrid {
    pub s: f64,
    pub t_nodes: Vec<f64>,
    pub grid: Grid,
    /// Start points, `n_x × d` row-major.
    pub x_points: Vec<f64>,
    /// `[t][x][y]`, row-major.
    pub values: Vec<f64>,
    pub meta: SeriesConfig,
    pub report: SeriesReport,
}

impl KernelGrid {
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn n_x(&self) -> usize {
        self.x_points.len() / self.dim()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.x_points[i * d..(i + 1) * d]
    }

    /// `p(s, x_i; t_k, ·)` on the grid.
    pub fn slice(&self, k: usize, i: usize) -> &[f64] {
        let ny = self.grid.len();
        let off = (k * self.n_x() + i) * ny;
        &self.values[off..off + ny]
    }

    pub fn value(&self, k: usize, i: usize, y: usize) -> f64 {
        self.slice(k, i)[y]
    }

    pub fn mass(&self, k: usize, i: usize) -> f64 {
        crate::num::pairwise_sum(self.slice(k, i)) * self.grid.cell_volume()
    }

    /// Checks the array shape against the header.
    pub fn validate(&self) -> Result<()> {
        let d = self.grid.dim();
        if self.x_points.len() % d != 0 || self.values.len() != self.t_nodes.len() * self.n_x() * self.grid.len() {
            return Err(Error::grid_mismatch("kernel values do not match (t, x, y) dimensions"));
        }
        if self.t_nodes.windows(2).any(|w| !(w[1] > w[0])) || self.t_nodes.first().is_some_and(|t| !(*t > self.s)) {
            return Err(Error::domain("kernel t_nodes must increase and exceed s"));
        }
        Ok(())
    }
}

/// Builds `p(s, x; t, y)` for the given start points and output times.
pub fn heat_kernel(field: &CoefficientField, grid: &Grid, s: f64, t_nodes: &[f64], x_points: &[f64], cfg: &SeriesConfig) -> Result<KernelGrid> {
    let d = grid.dim();
    if x_points.is_empty() || x_points.len() % d != 0 {
        return Err(Error::domain("x_points must hold whole points"));
    }
    let rows = x_points.chunks(d).map(Row::point).collect();
    let out = propagate(field, grid, s, t_nodes, rows, Sampling::Point, cfg)?;
    Ok(KernelGrid {
        s,
        t_nodes: out.t_nodes,
        grid: grid.clone(),
        x_points: x_points.to_vec(),
        values: out.values,
        meta: cfg.clone(),
        report: out.report,
    })
}

/// Pushes a start measure forward: `μ_t(dy) = ∫ p(s, x; t, y) μ_s(dx) dy` as grid densities.
pub fn propagate_measure(field: &CoefficientField, grid: &Grid, s: f64, t_nodes: &[f64], start: &Measure, cfg: &SeriesConfig) -> Result<(Vec<Measure>, SeriesReport)> {
    if start.dim != grid.dim() {
        return Err(Error::grid_mismatch("start measure and grid dimensions differ"));
    }
    let row = match &start.repr {
        Repr::Atoms { points, weights } => Row { points: points.clone(), weights: weights.clone() },
        Repr::GridDensity { grid: g, values } => {
            let vol = g.cell_volume();
            Row { points: g.centers(), weights: values.iter().map(|v| v * vol).collect() }
        }
    };
    let out = propagate(field, grid, s, t_nodes, alloc::vec![row], Sampling::CellAverage, cfg)?;
    let ny = grid.len();
    let flow = (0..t_nodes.len()).map(|k| Measure::grid(grid.clone(), out.slice(k, 0, ny).to_vec())).collect::<Result<Vec<_>>>()?;
    Ok((flow, out.report))
}
