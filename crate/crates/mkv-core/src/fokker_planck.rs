//! Conservative finite-volume solver for `∂_t μ = ∂_ij(a_ij μ) − ∂_i(b_i μ)` with
//! coefficients frozen at the current state, plus the Krylov-type integrability check.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use libm::{ceil, cos, fabs, sin, tanh};
use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::kato::{lpq_norm, QuadratureOptions, SpaceTimeField};
use crate::measures::{rebin, Measure, MeasureFlow};
use crate::mkv::{MeasureModel, ScenarioConfig, SliceCtx};
use crate::num::{gauss_legendre, half_sigma_sigma_t};
use crate::parametrix::CoefficientField;
use crate::{Error, Result};

/// Density on a grid at time `t` with step bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpeState {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub t: f64,
    pub last_dt: f64,
    /// Upwind Courant number of the last step.
    pub cfl: f64,
    /// Most negative value seen before clipping in the last step.
    pub min_before_clip: f64,
}

impl FpeState {
    pub fn new(m: &Measure, t: f64) -> Result<Self> {
        let (grid, values) = m.as_grid().ok_or_else(|| Error::invalid_measure("FPE state needs a grid density"))?;
        Ok(Self { grid: grid.clone(), values: values.to_vec(), t, last_dt: 0.0, cfl: 0.0, min_before_clip: 0.0 })
    }

    pub fn measure(&self) -> Result<Measure> {
        Measure::grid(self.grid.clone(), self.values.clone())
    }

    pub fn mass(&self) -> f64 {
        crate::num::pairwise_sum(&self.values) * self.grid.cell_volume()
    }
}

/// Source of `(a, b)` for a step.
#[derive(Clone, Copy)]
pub enum Coefficients<'a> {
    /// Measure-dependent model evaluated at the current state.
    Model(&'a dyn MeasureModel),
    /// Linear field, independent of the state.
    Field(&'a CoefficientField),
}

/// Negativity expected from round-off alone; anything lower is clipped and reported.
pub const NEG_TOL: f64 = 1e-10;

/// Negativity (relative to the peak) at which a step is declared unstable.
const UNSTABLE: f64 = 1e-3;

/// `a` at centres (`n × d²`) and `b·e_k` at the `k`-faces (per axis, face-major).
struct Tables {
    a: Vec<f64>,
    b_faces: Vec<Vec<f64>>,
}

fn tables(coeffs: Coefficients<'_>, state: &FpeState) -> Result<Tables> {
    let g = &state.grid;
    let d = g.dim();
    let dd = d * d;
    let n = g.len();
    let mut a = vec![0.0; n * dd];
    let mut c = vec![0.0; d];
    let mut out = vec![0.0; d];
    let faces = |k: usize| -> (Vec<usize>, usize) {
        let mut dims = [g.cells[0], if d == 2 { g.cells[1] } else { 1 }];
        dims[k] += 1;
        (dims.to_vec(), dims[0] * dims[1])
    };
    let face_point = |k: usize, dims: &[usize], f: usize, p: &mut [f64]| {
        let idx = [f / dims[1].max(1), f % dims[1].max(1)];
        let (i, j) = if d == 1 { (f, 0) } else { (idx[0], idx[1]) };
        for ax in 0..d {
            let ii = if ax == 0 { i } else { j };
            let off = if ax == k { 0.0 } else { 0.5 };
            p[ax] = g.lo[ax] + (ii as f64 + off) * g.h(ax);
        }
    };
    let mut b_faces = Vec::with_capacity(d);
    match coeffs {
        Coefficients::Model(model) => {
            let m = state.measure()?;
            let sl = model.slice(state.t, &m, &SliceCtx::default())?;
            let d1 = model.noise_dim();
            let mut sig = vec![0.0; d * d1];
            for i in 0..n {
                g.center(i, &mut c);
                sl.sigma(&c, &mut sig);
                half_sigma_sigma_t(&sig, d, d1, &mut a[i * dd..(i + 1) * dd]);
            }
            for k in 0..d {
                let (dims, nf) = faces(k);
                let mut bf = vec![0.0; nf];
                for (f, v) in bf.iter_mut().enumerate() {
                    face_point(k, &dims, f, &mut c);
                    sl.drift(&c, &mut out);
                    *v = out[k];
                }
                b_faces.push(bf);
            }
        }
        Coefficients::Field(field) => {
            for i in 0..n {
                g.center(i, &mut c);
                field.diffusion(state.t, &c, &mut a[i * dd..(i + 1) * dd]);
            }
            for k in 0..d {
                let (dims, nf) = faces(k);
                let mut bf = vec![0.0; nf];
                for (f, v) in bf.iter_mut().enumerate() {
                    face_point(k, &dims, f, &mut c);
                    field.drift(state.t, &c, &mut out);
                    *v = out[k];
                }
                b_faces.push(bf);
            }
        }
    }
    if a.iter().chain(b_faces.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::non_finite("coefficients are not finite on the grid"));
    }
    Ok(Tables { a, b_faces })
}

/// Cells along axis `k` through the line `line`, as flat indices.
fn line_cells(g: &Grid, k: usize, line: usize) -> Vec<usize> {
    if g.dim() == 1 {
        return (0..g.cells[0]).collect();
    }
    (0..g.cells[k]).map(|i| if k == 0 { g.flat_index([i, line]) } else { g.flat_index([line, i]) }).collect()
}

fn n_lines(g: &Grid, k: usize) -> usize {
    if g.dim() == 1 {
        1
    } else {
        g.cells[1 - k]
    }
}

/// Face index of face `f` (0..=n_k) on line `line` along axis `k`.
fn face_index(g: &Grid, k: usize, line: usize, f: usize) -> usize {
    if g.dim() == 1 {
        f
    } else if k == 0 {
        f * g.cells[1] + line
    } else {
        line * (g.cells[1] + 1) + f
    }
}

/// Upwind step along axis `k`; returns the Courant number.
fn advect(g: &Grid, k: usize, b: &[f64], mu: &mut [f64], dt: f64) -> f64 {
    let h = g.h(k);
    let nk = g.cells[k];
    let mut courant: f64 = 0.0;
    for line in 0..n_lines(g, k) {
        let cells = line_cells(g, k, line);
        let bf = |f: usize| if f == 0 || f == nk { 0.0 } else { b[face_index(g, k, line, f)] };
        let flux: Vec<f64> = (0..=nk)
            .map(|f| {
                if f == 0 || f == nk {
                    return 0.0;
                }
                let v = bf(f);
                v.max(0.0) * mu[cells[f - 1]] + v.min(0.0) * mu[cells[f]]
            })
            .collect();
        for i in 0..nk {
            courant = courant.max(dt / h * (bf(i + 1).max(0.0) - bf(i).min(0.0)));
        }
        for i in 0..nk {
            mu[cells[i]] -= dt / h * (flux[i + 1] - flux[i]);
        }
    }
    courant
}

/// Backward-Euler step of `∂_t μ = ∂_kk(a_kk μ)` with zero-flux ends.
fn diffuse(g: &Grid, k: usize, a: &[f64], mu: &mut [f64], dt: f64) {
    let d = g.dim();
    let dd = d * d;
    let h = g.h(k);
    let r = dt / (h * h);
    let nk = g.cells[k];
    if nk == 1 {
        return;
    }
    for line in 0..n_lines(g, k) {
        let cells = line_cells(g, k, line);
        let ak: Vec<f64> = cells.iter().map(|c| a[c * dd + k * d + k]).collect();
        let mut lower = vec![0.0; nk];
        let mut diag = vec![0.0; nk];
        let mut upper = vec![0.0; nk];
        for i in 0..nk {
            let nb = if i == 0 || i == nk - 1 { 1.0 } else { 2.0 };
            diag[i] = 1.0 + r * nb * ak[i];
            if i > 0 {
                lower[i] = -r * ak[i - 1];
            }
            if i + 1 < nk {
                upper[i] = -r * ak[i + 1];
            }
        }
        let rhs: Vec<f64> = cells.iter().map(|c| mu[*c]).collect();
        let sol = thomas(&lower, &diag, &upper, &rhs);
        for (c, v) in cells.iter().zip(sol) {
            mu[*c] = v;
        }
    }
}

/// Explicit conservative treatment of `2∂₁₂(a₁₂ μ)` in d = 2.
fn mixed(g: &Grid, a: &[f64], mu: &mut [f64], dt: f64) {
    if g.dim() != 2 {
        return;
    }
    let (nx, ny) = (g.cells[0], g.cells[1]);
    let (hx, hy) = (g.h(0), g.h(1));
    let u: Vec<f64> = (0..g.len()).map(|c| a[c * 4 + 1] * mu[c]).collect();
    if u.iter().all(|v| *v == 0.0) {
        return;
    }
    let at = |i: isize, j: isize| if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize { 0.0 } else { u[g.flat_index([i as usize, j as usize])] };
    let dy = |i: isize, j: isize| (at(i, j + 1) - at(i, j - 1)) / (2.0 * hy);
    let dx = |i: isize, j: isize| (at(i + 1, j) - at(i - 1, j)) / (2.0 * hx);
    let mut delta = vec![0.0; g.len()];
    // Flux −∂_y u through x-faces and −∂_x u through y-faces; box faces carry nothing.
    for j in 0..ny as isize {
        for f in 1..nx as isize {
            let flux = 0.5 * (dy(f - 1, j) + dy(f, j)) * dt / hx;
            delta[g.flat_index([(f - 1) as usize, j as usize])] += flux;
            delta[g.flat_index([f as usize, j as usize])] -= flux;
        }
    }
    for i in 0..nx as isize {
        for f in 1..ny as isize {
            let flux = 0.5 * (dx(i, f - 1) + dx(i, f)) * dt / hy;
            delta[g.flat_index([i as usize, (f - 1) as usize])] += flux;
            delta[g.flat_index([i as usize, f as usize])] -= flux;
        }
    }
    for (m, v) in mu.iter_mut().zip(delta) {
        *m += v;
    }
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut beta = diag[0];
    x[0] = rhs[0] / beta;
    for i in 1..n {
        c[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i];
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i + 1] * x[i + 1];
    }
    x
}

/// Largest stable step for the upwind part, `h / max|b|`.
fn cfl_limit(g: &Grid, t: &Tables) -> f64 {
    let mut lim = f64::INFINITY;
    for (k, bf) in t.b_faces.iter().enumerate() {
        let bmax = bf.iter().fold(0.0f64, |m, v| m.max(fabs(*v)));
        if bmax > 0.0 {
            lim = lim.min(g.h(k) / (2.0 * bmax));
        }
    }
    lim
}

/// One step: upwind advection (Lie across axes), then implicit diffusion (Strang across axes).
pub fn nfpe_step(state: &FpeState, coeffs: Coefficients<'_>, dt: f64) -> Result<FpeState> {
    if !(dt >= 0.0) {
        return Err(Error::param_out_of_range("dt must be non-negative"));
    }
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let g = &state.grid;
    let tb = tables(coeffs, state)?;
    let lim = cfl_limit(g, &tb);
    if dt > lim * (1.0 + 1e-12) {
        return Err(Error::cfl(format!("dt = {dt:.3e} exceeds the upwind limit {lim:.3e}")));
    }
    let mut mu = state.values.clone();
    let mut courant: f64 = 0.0;
    for k in 0..g.dim() {
        courant = courant.max(advect(g, k, &tb.b_faces[k], &mut mu, dt));
    }
    mixed(g, &tb.a, &mut mu, dt);
    if g.dim() == 1 {
        diffuse(g, 0, &tb.a, &mut mu, dt);
    } else {
        diffuse(g, 0, &tb.a, &mut mu, 0.5 * dt);
        diffuse(g, 1, &tb.a, &mut mu, dt);
        diffuse(g, 0, &tb.a, &mut mu, 0.5 * dt);
    }
    if mu.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite(format!("FPE state became non-finite at t = {}", state.t + dt)));
    }
    let min = mu.iter().copied().fold(0.0f64, f64::min);
    let max = mu.iter().copied().fold(0.0f64, f64::max);
    if min < -UNSTABLE * max {
        return Err(Error::non_finite(format!("FPE density dropped to {min:.3e} at t = {}", state.t + dt)));
    }
    if min < 0.0 {
        // Clip and rescale so the step stays conservative.
        let before: f64 = crate::num::pairwise_sum(&mu);
        mu.iter_mut().for_each(|v| *v = v.max(0.0));
        let after: f64 = crate::num::pairwise_sum(&mu);
        mu.iter_mut().for_each(|v| *v *= before / after);
    }
    Ok(FpeState { grid: g.clone(), values: mu, t: state.t + dt, last_dt: dt, cfl: courant, min_before_clip: min })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpeConfig {
    /// Overrides the scenario's cells per axis (same box).
    pub cells: Option<usize>,
    /// Upper bound on the step; shortened to land on flow times and to respect the CFL limit.
    pub dt: f64,
    /// Allowed jump of `⟨f, μ⟩` between adjacent steps for the bounded test battery.
    pub jump_tol: f64,
}

impl Default for FpeConfig {
    fn default() -> Self {
        Self { cells: None, dt: 1e-3, jump_tol: 0.05 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FpeReport {
    pub steps: usize,
    pub max_cfl: f64,
    /// `max_t |mass(t) − mass(0)|`.
    pub mass_drift: f64,
    pub min_before_clip: f64,
    /// Largest step-to-step change of `⟨f, μ⟩` over the test battery.
    pub narrow_jump: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpeSolution {
    pub flow: MeasureFlow,
    pub report: FpeReport,
}

fn battery(x: &[f64]) -> [f64; 5] {
    let s: f64 = x.iter().sum();
    [cos(s), sin(s), cos(2.0 * s), sin(2.0 * s), tanh(s)]
}

fn pair_battery(g: &Grid, mu: &[f64]) -> [f64; 5] {
    let vol = g.cell_volume();
    let mut out = [0.0; 5];
    let mut c = vec![0.0; g.dim()];
    for (i, m) in mu.iter().enumerate() {
        g.center(i, &mut c);
        for (o, f) in out.iter_mut().zip(battery(&c)) {
            *o += m * vol * f;
        }
    }
    out
}

/// Evolves from `start` (at time `t0`) to each of `times`, using coefficients from `coeffs`.
pub fn solve_from(start: FpeState, coeffs: Coefficients<'_>, times: &[f64], cfg: &FpeConfig) -> Result<(Vec<Measure>, FpeReport)> {
    if !(cfg.dt > 0.0) {
        return Err(Error::param_out_of_range("dt must be positive"));
    }
    let mass0 = start.mass();
    let mut st = start;
    let mut rep = FpeReport::default();
    let mut prev = pair_battery(&st.grid, &st.values);
    let mut out = Vec::with_capacity(times.len());
    for &tr in times {
        if tr < st.t - 1e-12 {
            return Err(Error::domain("output times must not precede the start"));
        }
        while st.t < tr - 1e-12 {
            let tb = tables(coeffs, &st)?;
            let lim = cfl_limit(&st.grid, &tb);
            let span = tr - st.t;
            let cap = cfg.dt.min(lim);
            let n = ceil(span / cap - 1e-9).max(1.0);
            let dt = span / n;
            st = nfpe_step(&st, coeffs, dt)?;
            rep.steps += 1;
            rep.max_cfl = rep.max_cfl.max(st.cfl);
            rep.min_before_clip = rep.min_before_clip.min(st.min_before_clip);
            rep.mass_drift = rep.mass_drift.max(fabs(st.mass() - mass0));
            let now = pair_battery(&st.grid, &st.values);
            rep.narrow_jump = rep.narrow_jump.max(now.iter().zip(&prev).map(|(a, b)| fabs(a - b)).fold(0.0, f64::max));
            prev = now;
        }
        st.t = tr;
        out.push(st.measure()?);
    }
    if rep.narrow_jump > cfg.jump_tol {
        return Err(Error::assumption(format!("⟨f, μ_t⟩ jumps by {:.3e} between steps (tolerance {})", rep.narrow_jump, cfg.jump_tol)));
    }
    Ok((out, rep))
}

/// Solves the nonlinear equation from `ξ` on the scenario time grid.
pub fn solve_nfpe(sc: &ScenarioConfig, cfg: &FpeConfig) -> Result<FpeSolution> {
    sc.validate()?;
    let grid = match cfg.cells {
        Some(c) => Grid::new(sc.grid.lo.clone(), sc.grid.hi.clone(), vec![c; sc.grid.dim()])?,
        None => sc.grid.clone(),
    };
    let xi = rebin(&sc.xi, &grid, 1e-6)?;
    let start = FpeState::new(&xi, 0.0)?;
    let (ms, report) = solve_from(start, Coefficients::Model(sc.model.as_ref()), &sc.times, cfg)?;
    let flow = MeasureFlow::new(sc.times.clone(), ms, sc.weight, true)?;
    Ok(FpeSolution { flow, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrylovReport {
    /// `∫₀¹ ⟨|f|(t), μ_t⟩ dt`.
    pub lhs: f64,
    pub rhs_norm: f64,
    pub ratio: f64,
}

/// Compares `∫₀¹∫|f| dμ_t dt` with `‖f‖_{𝓛^p_q}` on `[0, 1]`.
///
/// Flow slices are piecewise constant in time as in [`MeasureFlow::at`]; each cell pairing
/// uses 8 Gauss points per axis, each time piece 4 Gauss points.
pub fn krylov_check(flow: &MeasureFlow, f: &SpaceTimeField, p: f64, q: f64, opts: &QuadratureOptions) -> Result<KrylovReport> {
    if f.dim() != flow.dim() {
        return Err(Error::grid_mismatch("field and flow dimensions differ"));
    }
    let rhs_norm = lpq_norm(f, p, q, 1.0, opts)?;
    if !rhs_norm.is_finite() {
        return Err(Error::divergent("the 𝓛^p_q norm of f is not finite"));
    }
    let (gx, gw) = gauss_legendre(8);
    let (tx, tw) = gauss_legendre(4);
    let mut breaks = vec![0.0];
    breaks.extend(flow.times.iter().skip(1).copied());
    breaks.push(1.0);
    breaks.dedup_by(|a, b| fabs(*a - *b) < 1e-14);
    let mut lhs = 0.0;
    for w in breaks.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let m = flow.at(0.5 * (t0 + t1));
        for (tn, twt) in tx.iter().zip(&tw) {
            let t = t0 + 0.5 * (t1 - t0) * (tn + 1.0);
            let dtw = 0.5 * (t1 - t0) * twt;
            lhs += dtw * pair_abs(m, t, f, &gx, &gw);
        }
    }
    let ratio = if rhs_norm > 0.0 { lhs / rhs_norm } else if lhs == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(KrylovReport { lhs, rhs_norm, ratio })
}

fn pair_abs(m: &Measure, t: f64, f: &SpaceTimeField, gx: &[f64], gw: &[f64]) -> f64 {
    match m.as_grid() {
        None => m.pair(|x| fabs(f.value(t, x))),
        Some((g, vals)) => {
            let d = g.dim();
            let mut acc = 0.0;
            let mut c = vec![0.0; d];
            let mut x = vec![0.0; d];
            for (i, v) in vals.iter().enumerate() {
                if *v == 0.0 {
                    continue;
                }
                g.center(i, &mut c);
                let mut cell = 0.0;
                if d == 1 {
                    for (u, w) in gx.iter().zip(gw) {
                        x[0] = c[0] + 0.5 * g.h(0) * u;
                        cell += 0.5 * w * fabs(f.value(t, &x));
                    }
                } else {
                    for (u, wu) in gx.iter().zip(gw) {
                        for (s, ws) in gx.iter().zip(gw) {
                            x[0] = c[0] + 0.5 * g.h(0) * u;
                            x[1] = c[1] + 0.5 * g.h(1) * s;
                            cell += 0.25 * wu * ws * fabs(f.value(t, &x));
                        }
                    }
                }
                acc += v * g.cell_volume() * cell;
            }
            acc
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::tv_distance;
    use crate::parametrix::{FnModel, Regularity};
    use crate::scenarios::{build, ScenarioSpec, TimeGrid};

    fn heat_l1(cells: usize, dt: f64) -> f64 {
        let g = Grid::line(-6.0, 6.0, cells);
        let (v0, t) = (0.05, 0.5);
        let f = CoefficientField::constant(1, 0.5);
        let st = FpeState::new(&Measure::gaussian_on_grid(&g, &[0.0], v0), 0.0).unwrap();
        let cfg = FpeConfig { dt, ..FpeConfig::default() };
        let (ms, rep) = solve_from(st, Coefficients::Field(&f), &[t], &cfg).unwrap();
        assert!(rep.mass_drift < 1e-10);
        tv_distance(&ms[0], &Measure::gaussian_on_grid(&g, &[0.0], v0 + t)).unwrap()
    }

    #[test]
    fn heat_benchmark_and_order() {
        let e512 = heat_l1(512, 1e-4);
        assert!(e512 <= 1e-3, "L1 = {e512}");
        // dt ∝ h² keeps the time error on the same footing as the space error.
        let (e64, e128) = (heat_l1(64, 4e-3), heat_l1(128, 1e-3));
        assert!(e64 / e128 >= 3.5, "{e64} / {e128}");
    }

    #[test]
    fn constant_drift_translates() {
        let g = Grid::line(-6.0, 6.0, 240);
        let c = 1.5;
        let f = CoefficientField::new(
            FnModel::new(1, |_, _, o: &mut [f64]| o[0] = 0.5, move |_, _, o: &mut [f64]| o[0] = c).space_constant(),
            Regularity { lambda: 2.0, n1: 0.0, n2: c, ..Regularity::default() },
        );
        let st = FpeState::new(&Measure::gaussian_on_grid(&g, &[-1.0], 0.05), 0.0).unwrap();
        let (ms, _) = solve_from(st.clone(), Coefficients::Field(&f), &[1.0], &FpeConfig::default()).unwrap();
        let mean = ms[0].pair(|x| x[0]);
        assert!(fabs(mean - (-1.0 + c)) <= g.h(0), "mean {mean}");
        assert_eq!(nfpe_step(&st, Coefficients::Field(&f), 0.0).unwrap(), st);
        assert_eq!(nfpe_step(&st, Coefficients::Field(&f), 1.0).unwrap_err().kind, crate::ErrorKind::CflViolation);
    }

    #[test]
    fn example3_w_freeze_keeps_the_gaussian() {
        let sc = build(&ScenarioSpec::named("example3")).unwrap();
        let ms: Vec<Measure> = sc.times.iter().map(|t| Measure::gaussian_on_grid(&sc.grid, &[0.0], *t)).collect();
        let w = MeasureFlow::new(sc.times.clone(), ms, sc.weight, true).unwrap();
        let f = crate::mkv::freeze(sc.model.as_ref(), &w, &sc.grid).unwrap();
        let t0 = sc.times[3];
        let st = FpeState::new(&w.measures[3], t0).unwrap();
        let (out, _) = solve_from(st, Coefficients::Field(&f), &sc.times[4..], &FpeConfig::default()).unwrap();
        for (m, t) in out.iter().zip(&sc.times[4..]) {
            let tv = tv_distance(m, &Measure::gaussian_on_grid(&sc.grid, &[0.0], *t)).unwrap();
            assert!(tv <= 0.02, "t = {t}: TV = {tv}");
        }
    }

    #[test]
    fn nonlinear_solve_conserves_mass() {
        let mut spec = ScenarioSpec::named("example1");
        spec.times = Some(TimeGrid::Uniform { n: 4 });
        let sc = build(&spec).unwrap();
        let sol = solve_nfpe(&sc, &FpeConfig::default()).unwrap();
        assert!(sol.report.mass_drift <= 1e-6 && sol.report.min_before_clip >= -NEG_TOL);
        for m in &sol.flow.measures {
            assert!((m.total_mass() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn two_dimensional_mixed_diffusion_conserves_mass() {
        let g = Grid::symmetric(2, 4.0, 32);
        let f = CoefficientField::new(
            FnModel::new(2, |_, _, o: &mut [f64]| o.copy_from_slice(&[0.5, 0.2, 0.2, 0.5]), |_, x: &[f64], o: &mut [f64]| {
                o[0] = -x[0];
                o[1] = -x[1];
            }),
            Regularity { lambda: 4.0, ..Regularity::default() },
        );
        let st = FpeState::new(&Measure::gaussian_on_grid(&g, &[0.5, -0.5], 0.2), 0.0).unwrap();
        let (ms, rep) = solve_from(st, Coefficients::Field(&f), &[0.5], &FpeConfig::default()).unwrap();
        assert!(rep.mass_drift < 1e-10 && rep.min_before_clip > -1e-6, "{rep:?}");
        // dΣ/dt = −2Σ + 2a from Σ(0) = 0.2·I gives Σ₁₂(t) = 0.2(1 − e^{−2t}).
        let cov = ms[0].pair(|x| x[0] * x[1]) - ms[0].pair(|x| x[0]) * ms[0].pair(|x| x[1]);
        let exact = 0.2 * (1.0 - libm::exp(-1.0));
        assert!(fabs(cov - exact) < 0.01, "cov = {cov} vs {exact}");
    }

    #[test]
    fn krylov_examples() {
        let g = Grid::line(-6.0, 6.0, 120);
        let times: Vec<f64> = (1..=8).map(|k| k as f64 / 8.0).collect();
        let flow = |g: &Grid| {
            let ms = times.iter().map(|t| Measure::gaussian_on_grid(g, &[0.0], *t)).collect();
            MeasureFlow::new(times.clone(), ms, crate::WeightFunction::one(), true).unwrap()
        };
        let opts = QuadratureOptions::default();
        let z = krylov_check(&flow(&g), &SpaceTimeField::zero(1), f64::INFINITY, f64::INFINITY, &opts).unwrap();
        assert_eq!(z.lhs, 0.0);
        let one = krylov_check(&flow(&g), &SpaceTimeField::constant(1, 1.0), f64::INFINITY, f64::INFINITY, &opts).unwrap();
        assert!((one.lhs - 1.0).abs() < 1e-6, "{one:?}");
        let bump = SpaceTimeField::power_bump(1, -0.25, 1.0);
        // |x|^{-1/4} lies in L^p only for p < 4.
        assert!(krylov_check(&flow(&g), &bump, 4.0, 4.0, &opts).is_err());
        let coarse = krylov_check(&flow(&g), &bump, 3.0, f64::INFINITY, &opts).unwrap();
        let fine = krylov_check(&flow(&Grid::line(-6.0, 6.0, 240)), &bump, 3.0, f64::INFINITY, &opts).unwrap();
        assert!(coarse.ratio.is_finite() && fabs(fine.ratio / coarse.ratio - 1.0) < 0.1, "{coarse:?} {fine:?}");
    }
}
