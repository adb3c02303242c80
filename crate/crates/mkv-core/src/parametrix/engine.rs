//! Windowed parametrix propagation.
//!
//! For a row of start atoms `{(x_i, w_i)}` at time `a`, the terms
//! `u₀(τ, y) = Σ w_i p₀(a, x_i; τ, y)` and `u_n(t, y) = ∫ₐᵗ∫ u_{n−1}(τ, z) Φ(τ, z; t, y) dz dτ`
//! are accumulated on a shared `τ` lattice. Space integrals use the cell-centre rule; the
//! `τ` integral uses a product trapezoid rule with weight `(t − τ)^e`, `e` fitted from the
//! last two nodes, so the endpoint singularity of `Φ` is integrated analytically.
//! Nodes closer than `Δ_min ∝ h²` to either endpoint are skipped: there the Gaussians
//! are narrower than a cell.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::{ceil, fabs, log, pow, sqrt};
use serde::{Deserialize, Serialize};

use super::field::CoefficientField;
use super::gaussian::{FrozenGauss, MAX_DIM};
use crate::grid::Grid;
use crate::num::par_map;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesConfig {
    /// Highest series index kept.
    pub n_trunc: usize,
    /// Gaussian envelope rate for certificates; `None` means `1/(8Λ)`.
    pub lambda_report: Option<f64>,
    /// Uniform `τ` nodes per window (output times are added on top).
    pub tau_nodes: usize,
    /// Initial window length.
    pub t_window: f64,
    /// Smallest window reached by halving.
    pub t_min: f64,
    pub accept_ratio: f64,
    pub diverge_ratio: f64,
    /// `Δ_min = dmin_factor · h² / a_min`, with `a_min` the smallest tabulated diagonal entry.
    pub dmin_factor: f64,
    /// Fixed `a_min` for `Δ_min`, so that kernels of different fields share one τ rule.
    #[serde(default)]
    pub a_floor: Option<f64>,
    pub neg_tol: f64,
    /// Keep `t_window` even if the term ratio is large.
    pub fixed_window: bool,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self {
            n_trunc: 6,
            lambda_report: None,
            tau_nodes: 32,
            t_window: 1.0,
            t_min: 1.0 / 64.0,
            accept_ratio: 0.5,
            diverge_ratio: 0.9,
            dmin_factor: 0.25,
            a_floor: None,
            neg_tol: 1e-6,
            fixed_window: false,
        }
    }
}

impl SeriesConfig {
    pub fn lambda_for(&self, field: &CoefficientField) -> f64 {
        self.lambda_report.unwrap_or(1.0 / (8.0 * field.reg.lambda))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    /// `sup |u_n|` per term, maximised over windows.
    pub term_sup: Vec<f64>,
    /// Largest `sup|u_{n+1}| / sup|u_n|`, `n ≥ 1`, over accepted windows.
    pub term_ratio: f64,
    pub tail_bound: f64,
    pub windows: Vec<[f64; 2]>,
    pub mass_defect_max: f64,
    pub max_clip: f64,
    pub exact_gaussian: bool,
    pub warnings: Vec<String>,
}

/// Start atoms `n × d` with weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Row {
    pub fn point(x: &[f64]) -> Self {
        Self { points: x.to_vec(), weights: vec![1.0] }
    }

    fn len(&self) -> usize {
        self.weights.len()
    }
}

/// How `u₀` is sampled on the output grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Kernel values at cell centres.
    Point,
    /// Cell averages (mass-consistent densities).
    CellAverage,
}

#[derive(Debug, Clone)]
pub struct Propagation {
    pub t_nodes: Vec<f64>,
    pub rows: usize,
    /// `[t][row][y]`, row-major.
    pub values: Vec<f64>,
    pub report: SeriesReport,
}

impl Propagation {
    pub fn slice(&self, t: usize, row: usize, ny: usize) -> &[f64] {
        let off = (t * self.rows + row) * ny;
        &self.values[off..off + ny]
    }
}

/// Cell-index ranges per axis within `radius` of centre `c`.
fn band(grid: &Grid, c: &[f64], radius: &[f64]) -> [(usize, usize); 2] {
    let mut out = [(0, 1); 2];
    for k in 0..grid.dim() {
        let h = grid.h(k);
        let lo = libm::floor((c[k] - radius[k] - grid.lo[k]) / h).max(0.0) as usize;
        let hi = (ceil((c[k] + radius[k] - grid.lo[k]) / h).max(0.0) as usize).min(grid.cells[k]);
        out[k] = (lo.min(hi), hi);
    }
    out
}

fn for_band(grid: &Grid, b: &[(usize, usize); 2], mut f: impl FnMut(usize)) {
    if grid.dim() == 1 {
        for i in b[0].0..b[0].1 {
            f(i);
        }
    } else {
        for i in b[0].0..b[0].1 {
            for j in b[1].0..b[1].1 {
                f(grid.flat_index([i, j]));
            }
        }
    }
}

const BAND: f64 = 184.0;

struct Tables {
    /// `a(τ, centre)` per cell, `d²` entries each.
    a: Vec<f64>,
    b: Vec<f64>,
}

fn tabulate(field: &CoefficientField, grid: &Grid, t: f64, singular: &[Vec<f64>]) -> Tables {
    let d = grid.dim();
    let n = grid.len();
    let mut a = vec![0.0; n * d * d];
    let mut b = vec![0.0; n * d];
    let mut c = vec![0.0; d];
    for i in 0..n {
        grid.center(i, &mut c);
        // Node avoidance for declared drift singularities.
        if singular.iter().any(|p| crate::num::dist2(p, &c) < 1e-24) {
            for k in 0..d {
                c[k] += 0.5 * grid.h(k);
            }
        }
        field.diffusion(t, &c, &mut a[i * d * d..(i + 1) * d * d]);
        field.drift(t, &c, &mut b[i * d..(i + 1) * d]);
    }
    Tables { a, b }
}

/// `∫_{D_{i+1}}^{D_i} u^e (…)`: weights on `f_i`, `f_{i+1}` for the product trapezoid rule.
fn product_cell(di: f64, dj: f64, e: f64) -> (f64, f64) {
    let i0 = (pow(di, e + 1.0) - pow(dj, e + 1.0)) / (e + 1.0);
    let i1 = (pow(di, e + 2.0) - pow(dj, e + 2.0)) / (e + 2.0);
    let c = (i0 * di - i1) / (di - dj);
    ((i0 - c) / pow(di, e), c / pow(dj, e))
}

/// Node paired with the last one when fitting the endpoint exponent: the closest node at
/// least 1.5 times as far from `t`, so the log-ratio is not taken over a tiny spread.
pub(crate) fn fit_partner(dists: &[f64]) -> Option<usize> {
    let last = *dists.last()?;
    (0..dists.len() - 1).rev().find(|&i| dists[i] >= 1.5 * last)
}

/// Quadrature weights for `∫ₐᵗ f(τ) dτ` from `f(a)` (index 0) and `f` at the given
/// distances `D_1 > … > D_m > 0` from `t`.
pub(crate) fn tau_weights(d0: f64, ds: &[f64], e: f64) -> Vec<f64> {
    let m = ds.len();
    let mut w = vec![0.0; m + 1];
    if m == 0 {
        w[0] = d0;
        return w;
    }
    let all: Vec<f64> = core::iter::once(d0).chain(ds.iter().copied()).collect();
    for i in 0..m {
        let (wa, wb) = product_cell(all[i], all[i + 1], e);
        w[i] += wa;
        w[i + 1] += wb;
    }
    w[m] += ds[m - 1] / (1.0 + e);
    w
}

struct WindowOut {
    taus: Vec<f64>,
    /// `total[k]`: `rows × ny` sum of terms at internal node `k`.
    total: Vec<Vec<f64>>,
    term_sup: Vec<f64>,
    ratio: f64,
    min_value: f64,
}

/// Samples `u₀(τ, ·)` for every row. With `banded`, atoms further than `exp(−46)` of the
/// peak are skipped.
fn initial_term(field: &CoefficientField, grid: &Grid, a: f64, tau: f64, rows: &[Row], sampling: Sampling, banded: bool) -> Result<Vec<f64>> {
    let d = grid.dim();
    let ny = grid.len();
    let cols = par_map(ny, |y| -> Result<Vec<f64>> {
        let yc = grid.center_vec(y);
        let g = FrozenGauss::for_field(field, a, tau, &yc)?;
        let radius: Vec<f64> = (0..d).map(|k| if banded { sqrt(BAND * g.a(k, k)) + grid.h(k) } else { f64::INFINITY }).collect();
        let std = sqrt(2.0 * g.min_diag());
        let mut out = vec![0.0; rows.len()];
        let mut z = [0.0; MAX_DIM];
        for (r, row) in rows.iter().enumerate() {
            let mut acc = 0.0;
            for i in 0..row.len() {
                let x = &row.points[i * d..(i + 1) * d];
                if (0..d).any(|k| fabs(x[k] - yc[k]) > radius[k]) {
                    continue;
                }
                let v = match sampling {
                    Sampling::Point => {
                        for k in 0..d {
                            z[k] = x[k] - yc[k];
                        }
                        g.value(&z[..d])
                    }
                    Sampling::CellAverage if d == 1 => {
                        let h = grid.h(0);
                        g.cell_average_1d(x[0], yc[0] - 0.5 * h, yc[0] + 0.5 * h)
                    }
                    Sampling::CellAverage => {
                        let m = (ceil(1.5 * grid.min_h() / std) as usize).clamp(1, 8);
                        let mut s = 0.0;
                        for p in 0..m {
                            for q in 0..m {
                                let o0 = ((p as f64 + 0.5) / m as f64 - 0.5) * grid.h(0);
                                let o1 = ((q as f64 + 0.5) / m as f64 - 0.5) * grid.h(1);
                                z[0] = x[0] - yc[0] - o0;
                                z[1] = x[1] - yc[1] - o1;
                                s += g.value(&z[..2]);
                            }
                        }
                        s / (m * m) as f64
                    }
                };
                acc += row.weights[i] * v;
            }
            out[r] = acc;
        }
        Ok(out)
    });
    let mut u = vec![0.0; rows.len() * ny];
    for (y, c) in cols.into_iter().enumerate() {
        for (r, v) in c?.into_iter().enumerate() {
            u[r * ny + y] = v;
        }
    }
    Ok(u)
}

fn run_window(field: &CoefficientField, grid: &Grid, a: f64, b: f64, outputs: &[f64], rows: &[Row], sampling: Sampling, cfg: &SeriesConfig) -> Result<WindowOut> {
    let d = grid.dim();
    let dd = d * d;
    let ny = grid.len();
    let nr = rows.len();
    let vol = grid.cell_volume();
    let nt = cfg.n_trunc;
    let h = grid.min_h();
    let alpha = field.reg.alpha.clamp(1e-3, 1.0);
    let singular = field.model.singular_points();

    let mut taus: Vec<f64> = (1..=cfg.tau_nodes).map(|j| a + (b - a) * j as f64 / cfg.tau_nodes as f64).collect();
    taus.extend(outputs.iter().copied().filter(|t| *t > a && *t <= b));
    taus.sort_by(|x, y| x.partial_cmp(y).unwrap());
    taus.dedup_by(|x, y| fabs(*x - *y) < 1e-12);
    let kn = taus.len();

    let tabs: Vec<Tables> = taus.iter().map(|&t| tabulate(field, grid, t, &singular)).collect();
    let a_min = tabs
        .iter()
        .flat_map(|tb| tb.a.chunks(dd).flat_map(|m| (0..d).map(move |i| m[i * d + i])))
        .fold(f64::INFINITY, f64::min)
        .max(1.0 / field.reg.lambda);
    let dmin = cfg.dmin_factor * h * h / cfg.a_floor.unwrap_or(a_min);
    // Coefficients at the start atoms, for the s-limit of the first term.
    let start_coeffs: Vec<(Vec<f64>, Vec<f64>)> = rows
        .iter()
        .map(|row| {
            let mut av = vec![0.0; row.len() * dd];
            let mut bv = vec![0.0; row.len() * d];
            for i in 0..row.len() {
                let x = &row.points[i * d..(i + 1) * d];
                field.diffusion(a, x, &mut av[i * dd..(i + 1) * dd]);
                field.drift(a, x, &mut bv[i * d..(i + 1) * d]);
            }
            (av, bv)
        })
        .collect();
    let start_tab = tabulate(field, grid, a, &singular);

    // u[n][k] = rows × ny
    let mut u: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(kn); nt + 1];
    for &t in &taus {
        u[0].push(initial_term(field, grid, a, t, rows, sampling, true)?);
    }

    for k in 0..kn {
        let tk = taus[k];
        let js: Vec<usize> = (0..k).filter(|&j| taus[j] - a >= dmin && tk - taus[j] >= dmin).collect();
        // S[jj][n-1] = rows × ny
        let mut s_vals: Vec<Vec<Vec<f64>>> = Vec::with_capacity(js.len());
        for &j in &js {
            let tj = taus[j];
            let tab = &tabs[j];
            let u_prev: Vec<&Vec<f64>> = (0..nt).map(|n| &u[n][j]).collect();
            let cols = par_map(ny, |y| -> Result<Vec<f64>> {
                let yc = grid.center_vec(y);
                let g = FrozenGauss::for_field(field, tj, tk, &yc)?;
                let radius: Vec<f64> = (0..d).map(|q| sqrt(BAND * g.a(q, q)) + grid.h(q)).collect();
                let bnd = band(grid, &yc, &radius);
                let ay = &tab.a[y * dd..(y + 1) * dd];
                let mut acc = vec![0.0; nt * nr];
                let mut zc = [0.0; MAX_DIM];
                let mut zz = [0.0; MAX_DIM];
                for_band(grid, &bnd, |z| {
                    grid.center(z, &mut zc[..d]);
                    for q in 0..d {
                        zz[q] = zc[q] - yc[q];
                    }
                    let phi = g.phi(&tab.a[z * dd..(z + 1) * dd], ay, &tab.b[z * d..(z + 1) * d], &zz[..d]);
                    if phi == 0.0 {
                        return;
                    }
                    let w = vol * phi;
                    for n in 0..nt {
                        let up = u_prev[n];
                        for r in 0..nr {
                            acc[n * nr + r] += w * up[r * ny + z];
                        }
                    }
                });
                Ok(acc)
            });
            let mut s = vec![vec![0.0; nr * ny]; nt];
            for (y, c) in cols.into_iter().enumerate() {
                let c = c?;
                for n in 0..nt {
                    for r in 0..nr {
                        s[n][r * ny + y] = c[n * nr + r];
                    }
                }
            }
            s_vals.push(s);
        }
        // s-limit of the first term: Σ_i w_i Φ(a, x_i; t_k, y).
        let f_start: Vec<f64> = if tk - a > 0.0 {
            let cols = par_map(ny, |y| -> Result<Vec<f64>> {
                let yc = grid.center_vec(y);
                let g = FrozenGauss::for_field(field, a, tk, &yc)?;
                let radius: Vec<f64> = (0..d).map(|q| sqrt(BAND * g.a(q, q)) + grid.h(q)).collect();
                let ay = &start_tab.a[y * dd..(y + 1) * dd];
                let mut out = vec![0.0; nr];
                let mut zz = [0.0; MAX_DIM];
                for (r, row) in rows.iter().enumerate() {
                    let (av, bv) = &start_coeffs[r];
                    let mut acc = 0.0;
                    for i in 0..row.len() {
                        let x = &row.points[i * d..(i + 1) * d];
                        if (0..d).any(|q| fabs(x[q] - yc[q]) > radius[q]) {
                            continue;
                        }
                        for q in 0..d {
                            zz[q] = x[q] - yc[q];
                        }
                        acc += row.weights[i] * g.phi(&av[i * dd..(i + 1) * dd], ay, &bv[i * d..(i + 1) * d], &zz[..d]);
                    }
                    out[r] = acc;
                }
                Ok(out)
            });
            let mut v = vec![0.0; nr * ny];
            for (y, c) in cols.into_iter().enumerate() {
                for (r, x) in c?.into_iter().enumerate() {
                    v[r * ny + y] = x;
                }
            }
            v
        } else {
            vec![0.0; nr * ny]
        };

        let dists: Vec<f64> = js.iter().map(|&j| tk - taus[j]).collect();
        for n in 1..=nt {
            let m = js.len();
            let e = match fit_partner(&dists) {
                Some(i) => {
                    let l1 = |v: &Vec<f64>| v.iter().map(|x| fabs(*x)).sum::<f64>();
                    let (na, nb) = (l1(&s_vals[i][n - 1]), l1(&s_vals[m - 1][n - 1]));
                    if na > 0.0 && nb > 0.0 {
                        (log(nb / na) / log(dists[m - 1] / dists[i])).clamp(0.5 * alpha - 1.0, 0.0)
                    } else {
                        0.0
                    }
                }
                None => 0.0,
            };
            let w = tau_weights(tk - a, &dists, e);
            let mut un = vec![0.0; nr * ny];
            if n == 1 {
                for (o, f) in un.iter_mut().zip(&f_start) {
                    *o += w[0] * f;
                }
            }
            for (jj, s) in s_vals.iter().enumerate() {
                let wj = w[jj + 1];
                for (o, f) in un.iter_mut().zip(&s[n - 1]) {
                    *o += wj * f;
                }
            }
            u[n].push(un);
        }
    }

    let term_sup: Vec<f64> =
        (0..=nt).map(|n| u[n].iter().flat_map(|v| v.iter()).map(|x| fabs(*x)).fold(0.0, f64::max)).collect();
    let floor = 1e-13 * term_sup[0];
    let mut ratio: f64 = 0.0;
    for n in 1..nt {
        if term_sup[n] > floor {
            ratio = ratio.max(term_sup[n + 1] / term_sup[n]);
        }
    }
    let total: Vec<Vec<f64>> = (0..kn)
        .map(|k| {
            let mut v = u[0][k].clone();
            for n in 1..=nt {
                for (o, x) in v.iter_mut().zip(&u[n][k]) {
                    *o += x;
                }
            }
            v
        })
        .collect();
    // Only values that leave the window matter: outputs and the composition start.
    let min_value = taus
        .iter()
        .zip(&total)
        .filter(|(t, _)| fabs(**t - b) < 1e-12 || outputs.iter().any(|o| fabs(o - **t) < 1e-12))
        .flat_map(|(_, v)| v.iter())
        .copied()
        .fold(0.0, f64::min);
    Ok(WindowOut { taus, total, term_sup, ratio, min_value })
}

/// Propagates each row from time `s` to every `t_nodes` entry.
pub fn propagate(field: &CoefficientField, grid: &Grid, s: f64, t_nodes: &[f64], rows: Vec<Row>, sampling: Sampling, cfg: &SeriesConfig) -> Result<Propagation> {
    let d = field.dim();
    if d > 2 || d != grid.dim() {
        return Err(Error::domain("heat kernels are built for d ∈ {1, 2} on a matching grid"));
    }
    if cfg.n_trunc == 0 || !(cfg.t_window > 0.0 && cfg.t_window <= 1.0) {
        return Err(Error::precondition("need n_trunc ≥ 1 and t_window in (0, 1]"));
    }
    if t_nodes.is_empty() || t_nodes.windows(2).any(|w| !(w[1] > w[0])) || !(t_nodes[0] > s) {
        return Err(Error::domain("t_nodes must increase strictly and exceed s"));
    }
    let ny = grid.len();
    let nr = rows.len();
    let mut report = SeriesReport { term_sup: vec![0.0; cfg.n_trunc + 1], ..SeriesReport::default() };
    let mut values = vec![0.0; t_nodes.len() * nr * ny];

    if field.is_gaussian() {
        report.exact_gaussian = true;
        for (ti, &t) in t_nodes.iter().enumerate() {
            let u = initial_term(field, grid, s, t, &rows, sampling, sampling == Sampling::CellAverage)?;
            values[ti * nr * ny..(ti + 1) * nr * ny].copy_from_slice(&u);
            report.term_sup[0] = report.term_sup[0].max(u.iter().map(|x| fabs(*x)).fold(0.0, f64::max));
        }
        report.windows.push([s, t_nodes[t_nodes.len() - 1]]);
    } else {
        let t_end = t_nodes[t_nodes.len() - 1];
        let mut a = s;
        let mut cur_rows = rows;
        let mut sampling_now = sampling;
        let mut window = cfg.t_window;
        while a < t_end - 1e-12 {
            let mut len = window.min(t_end - a);
            let out = loop {
                let b = a + len;
                let w = run_window(field, grid, a, b, t_nodes, &cur_rows, sampling_now, cfg)?;
                // Negative tails are truncation error; a shorter window shrinks it too.
                if cfg.fixed_window || (w.ratio <= cfg.accept_ratio && w.min_value >= -cfg.neg_tol) {
                    break w;
                }
                if len / 2.0 >= cfg.t_min - 1e-15 {
                    len /= 2.0;
                    window = len;
                    continue;
                }
                if w.ratio > cfg.diverge_ratio {
                    return Err(Error::series_diverging(format!("term ratio {:.3} at the smallest window {:.4}", w.ratio, len)));
                }
                report.warnings.push(format!("window {len:.4} accepted at the floor: ratio {:.3}, min {:.2e}", w.ratio, w.min_value));
                break w;
            };
            let b = a + len;
            for (n, v) in out.term_sup.iter().enumerate() {
                report.term_sup[n] = report.term_sup[n].max(*v);
            }
            report.term_ratio = report.term_ratio.max(out.ratio);
            report.windows.push([a, b]);
            for (ti, &t) in t_nodes.iter().enumerate() {
                if t > a + 1e-12 && t <= b + 1e-12 {
                    let k = out.taus.iter().position(|x| fabs(x - t) < 1e-12).expect("output node present");
                    values[ti * nr * ny..(ti + 1) * nr * ny].copy_from_slice(&out.total[k]);
                }
            }
            // Chapman–Kolmogorov: the window end becomes the next start measure.
            let last = &out.total[out.taus.len() - 1];
            let centres = grid.centers();
            cur_rows = (0..nr)
                .map(|r| {
                    let vals = &last[r * ny..(r + 1) * ny];
                    let peak = vals.iter().map(|v| fabs(*v)).fold(0.0, f64::max);
                    let mut pts = Vec::new();
                    let mut ws = Vec::new();
                    for (i, v) in vals.iter().enumerate() {
                        if fabs(*v) > 1e-15 * peak {
                            pts.extend_from_slice(&centres[i * d..(i + 1) * d]);
                            ws.push(v * grid.cell_volume());
                        }
                    }
                    Row { points: pts, weights: ws }
                })
                .collect();
            sampling_now = Sampling::CellAverage;
            a = b;
        }
        let n = cfg.n_trunc;
        let r = report.term_ratio;
        report.tail_bound = if r < 1.0 { report.term_sup[n] * r / (1.0 - r) } else { f64::INFINITY };
    }

    // Clip truncation artefacts.
    let mut min_v: f64 = 0.0;
    for v in values.iter_mut() {
        if !v.is_finite() {
            return Err(Error::non_finite("kernel value is not finite"));
        }
        if *v < 0.0 {
            min_v = min_v.min(*v);
            *v = 0.0;
        }
    }
    report.max_clip = -min_v;
    if -min_v > cfg.neg_tol {
        return Err(Error::series_diverging(format!("negative kernel values down to {min_v:.3e}")));
    }
    let vol = grid.cell_volume();
    for ti in 0..t_nodes.len() {
        for r in 0..nr {
            let off = (ti * nr + r) * ny;
            let mass: f64 = crate::num::pairwise_sum(&values[off..off + ny]) * vol;
            report.mass_defect_max = report.mass_defect_max.max(fabs(mass - 1.0));
        }
    }
    Ok(Propagation { t_nodes: t_nodes.to_vec(), rows: nr, values, report })
}


#[cfg(test)]
mod accuracy {
    use super::super::field::{FnModel, Regularity};
    use super::*;

    fn ou() -> CoefficientField {
        let m = FnModel::new(1, |_, _, o: &mut [f64]| o[0] = 0.5, |_, x: &[f64], o: &mut [f64]| o[0] = -x[0]);
        CoefficientField::new(m, Regularity { n1: 0.0, ..Regularity::default() })
    }

    #[test]
    fn ou_kernel_matches_closed_form() {
        let f = ou();
        let grid = Grid::line(-6.0, 6.0, 192);
        let ts = [0.25, 0.5, 1.0];
        let xs = [0.0, 1.0];
        let rows = xs.iter().map(|x| Row::point(&[*x])).collect();
        let p = propagate(&f, &grid, 0.0, &ts, rows, Sampling::Point, &SeriesConfig::default()).unwrap();
        let ny = grid.len();
        let mut worst: f64 = 0.0;
        for (ti, t) in ts.iter().enumerate() {
            for (r, x) in xs.iter().enumerate() {
                let v = p.slice(ti, r, ny);
                let mean = x * (-t).exp();
                let var = 0.5 * (1.0 - (-2.0 * t).exp());
                for (i, pv) in v.iter().enumerate() {
                    let y = grid.center_vec(i)[0];
                    let ex = (-(y - mean) * (y - mean) / (2.0 * var)).exp() / (2.0 * crate::num::PI * var).sqrt();
                    worst = worst.max((pv - ex).abs());
                }
            }
        }
        std::eprintln!("ou worst {worst:.3e} report {:?}", p.report);
        assert!(worst < 1e-2, "{worst}");
    }
}
