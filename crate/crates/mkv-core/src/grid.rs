//! Uniform tensor grids on boxes `[lo, hi]^d`, `d ∈ {1, 2}`; nodes are cell centres,
//! flattened row-major (first axis slowest).

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells: Vec<usize>,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        let d = lo.len();
        if d == 0 || d > 2 || hi.len() != d || cells.len() != d {
            return Err(Error::domain("grid must have matching lo/hi/cells of dimension 1 or 2"));
        }
        for k in 0..d {
            if !(hi[k] > lo[k]) || cells[k] == 0 || !lo[k].is_finite() || !hi[k].is_finite() {
                return Err(Error::domain("degenerate grid box"));
            }
        }
        Ok(Self { lo, hi, cells })
    }

    /// `[-half, half]^d` with `cells` cells per axis.
    pub fn symmetric(dim: usize, half: f64, cells: usize) -> Self {
        Self::new(vec![-half; dim], vec![half; dim], vec![cells; dim]).expect("valid symmetric grid")
    }

    pub fn line(lo: f64, hi: f64, cells: usize) -> Self {
        Self::new(vec![lo], vec![hi], vec![cells]).expect("valid line grid")
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.cells[axis] as f64
    }

    pub fn min_h(&self) -> f64 {
        (0..self.dim()).map(|k| self.h(k)).fold(f64::INFINITY, f64::min)
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.h(k)).product()
    }

    /// Coordinate of cell centre `i` along `axis`.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.lo[axis] + (i as f64 + 0.5) * self.h(axis)
    }

    pub fn multi_index(&self, flat: usize) -> [usize; 2] {
        if self.dim() == 1 {
            [flat, 0]
        } else {
            [flat / self.cells[1], flat % self.cells[1]]
        }
    }

    pub fn flat_index(&self, idx: [usize; 2]) -> usize {
        if self.dim() == 1 {
            idx[0]
        } else {
            idx[0] * self.cells[1] + idx[1]
        }
    }

    /// Writes the centre of node `flat` into `out[..d]`.
    pub fn center(&self, flat: usize, out: &mut [f64]) {
        let mi = self.multi_index(flat);
        for k in 0..self.dim() {
            out[k] = self.coord(k, mi[k]);
        }
    }

    pub fn center_vec(&self, flat: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.dim()];
        self.center(flat, &mut c);
        c
    }

    /// All centres, `len × d` row-major.
    pub fn centers(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; self.len() * d];
        for i in 0..self.len() {
            self.center(i, &mut out[i * d..(i + 1) * d]);
        }
        out
    }

    /// Cell containing `x` (half-open cells, upper box face included in the last cell).
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut idx = [0usize; 2];
        for k in 0..self.dim() {
            if !(x[k] >= self.lo[k] && x[k] <= self.hi[k]) {
                return None;
            }
            let i = libm::floor((x[k] - self.lo[k]) / self.h(k)) as usize;
            idx[k] = i.min(self.cells[k] - 1);
        }
        Some(self.flat_index(idx))
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.cells == other.cells
            && self.lo.iter().zip(&other.lo).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()))
            && self.hi.iter().zip(&other.hi).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()))
    }

    pub fn half_width(&self) -> f64 {
        (0..self.dim()).map(|k| 0.5 * (self.hi[k] - self.lo[k])).fold(0.0, f64::max)
    }
}

/// Default truncation half-width `x0_range + 8 √(t_max / λ)`.
pub fn default_half_width(x0_range: f64, t_max: f64, lambda: f64) -> f64 {
    x0_range + 8.0 * libm::sqrt(t_max / lambda)
}
