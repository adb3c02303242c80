//! Singular kernel profiles `η_β`, `ϱ_{λ,γ}`, the Kato functional `K^β_f(T)`, localized
//! mixed norms `‖f‖_{𝓛^p_q(T)}` and numerical certificates for the inequalities tying them.
//!
//! Quadrature for `K^β_f` uses the substitution `s = T w²`, `y = √s · ρ/(1−ρ)` which maps the
//! kernel singularity at the origin and the unbounded `y` range onto `[0,1]²`:
//!
//! `∫₀^T∫ η_β(s,y) g dy ds = 2T^{1−β/2} ∫₀¹ w^{1−β} ∫₀¹ ρ^{d−1}(1−ρ)^{β−1} Σ g dρ dw`
//!
//! with the sum over `±` in `d = 1` and an angular trapezoid in `d = 2`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use libm::{cos, exp, fabs, log, pow, sin, sqrt};
use serde::{Deserialize, Serialize};

use crate::num::{composite_rule, gauss_legendre, graded_breaks, linear_fit, pairwise_sum, par_map, PI};
use crate::{Error, Result};

pub type FieldFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;

/// Scalar field `f(t, x)` on `ℝ × ℝ^d`, extended by zero outside `t ∈ [0, 1]` unless
/// declared time-homogeneous.
#[derive(Clone)]
pub struct SpaceTimeField {
    dim: usize,
    eval: Arc<FieldFn>,
    /// Box `(lo, hi)` outside of which `f` vanishes (or is not interesting).
    pub support_hint: Option<(Vec<f64>, Vec<f64>)>,
    /// Spatial points where `f` may blow up (for all `t`).
    pub singular_points: Vec<Vec<f64>>,
    /// `f(t, x) = f(x)` for every real `t`; no zero extension in time.
    pub time_homogeneous: bool,
    pub identically_zero: bool,
}

impl fmt::Debug for SpaceTimeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpaceTimeField")
            .field("dim", &self.dim)
            .field("support_hint", &self.support_hint)
            .field("singular_points", &self.singular_points)
            .field("time_homogeneous", &self.time_homogeneous)
            .finish()
    }
}

impl SpaceTimeField {
    pub fn new(dim: usize, f: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            dim,
            eval: Arc::new(f),
            support_hint: None,
            singular_points: Vec::new(),
            time_homogeneous: false,
            identically_zero: false,
        }
    }

    /// Time-homogeneous field `f(x)`.
    pub fn stationary(dim: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        let mut s = Self::new(dim, move |_, x| f(x));
        s.time_homogeneous = true;
        s
    }

    pub fn zero(dim: usize) -> Self {
        let mut s = Self::stationary(dim, |_| 0.0);
        s.identically_zero = true;
        s
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut s = Self::stationary(dim, move |_| c);
        s.identically_zero = c == 0.0;
        s
    }

    /// `1_{|x| < r}`.
    pub fn indicator_ball(dim: usize, r: f64) -> Self {
        Self::stationary(dim, move |x| if crate::num::norm(x) < r { 1.0 } else { 0.0 })
            .with_support(vec![-r; dim], vec![r; dim])
    }

    /// `|x|^e · 1_{|x| < r}` with a declared singularity at the origin when `e < 0`.
    pub fn power_bump(dim: usize, e: f64, r: f64) -> Self {
        let f = Self::stationary(dim, move |x| {
            let n = crate::num::norm(x);
            if n < r {
                pow(n, e)
            } else {
                0.0
            }
        })
        .with_support(vec![-r; dim], vec![r; dim]);
        if e < 0.0 {
            f.with_singular_point(vec![0.0; dim])
        } else {
            f
        }
    }

    pub fn with_support(mut self, lo: Vec<f64>, hi: Vec<f64>) -> Self {
        self.support_hint = Some((lo, hi));
        self
    }

    pub fn with_singular_point(mut self, x: Vec<f64>) -> Self {
        self.singular_points.push(x);
        self
    }

    pub fn with_time_homogeneous(mut self, on: bool) -> Self {
        self.time_homogeneous = on;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        if self.identically_zero || (!self.time_homogeneous && !(0.0..=1.0).contains(&t)) {
            0.0
        } else {
            (self.eval)(t, x)
        }
    }

    /// Pointwise sum; metadata is merged.
    pub fn sum(&self, other: &SpaceTimeField) -> SpaceTimeField {
        let (a, b) = (self.clone(), other.clone());
        let mut s = SpaceTimeField::new(self.dim, move |t, x| a.value(t, x) + b.value(t, x));
        s.time_homogeneous = self.time_homogeneous && other.time_homogeneous;
        s.singular_points = self.singular_points.iter().chain(&other.singular_points).cloned().collect();
        s.support_hint = match (&self.support_hint, &other.support_hint) {
            (Some((l1, h1)), Some((l2, h2))) => Some((
                l1.iter().zip(l2).map(|(a, b)| a.min(*b)).collect(),
                h1.iter().zip(h2).map(|(a, b)| a.max(*b)).collect(),
            )),
            _ => None,
        };
        s
    }

    /// Support box (default `[-1, 1]^d`).
    fn support_box(&self) -> (Vec<f64>, Vec<f64>) {
        self.support_hint.clone().unwrap_or_else(|| (vec![-1.0; self.dim], vec![1.0; self.dim]))
    }
}

/// `η_β(t, x) = (√t + |x|)^{−d−β}`.
pub fn eta_beta(beta: f64, t: f64, x: &[f64]) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::domain("eta_beta needs t > 0"));
    }
    let d = x.len() as f64;
    Ok(pow(sqrt(t) + crate::num::norm(x), -d - beta))
}

/// `ϱ_{λ,γ}(t, x) = t^{(−d+γ)/2} exp(−λ|x|²/t)`.
pub fn rho(lambda: f64, gamma: f64, t: f64, x: &[f64]) -> Result<f64> {
    if !(t > 0.0) || !(lambda > 0.0) {
        return Err(Error::domain("rho needs t > 0 and lambda > 0"));
    }
    let d = x.len() as f64;
    let r2: f64 = x.iter().map(|v| v * v).sum();
    Ok(pow(t, 0.5 * (gamma - d)) * exp(-lambda * r2 / t))
}

/// `ϱ_λ` without validation, for inner loops.
#[inline]
pub(crate) fn rho_fast(lambda: f64, gamma: f64, t: f64, r2: f64, d: usize) -> f64 {
    pow(t, 0.5 * (gamma - d as f64)) * exp(-lambda * r2 / t)
}

/// The pinned cutoff: 1 on `B₁`, `exp(1 − 1/(1 − (|x|−1)²))` on `1 < |x| < 2`, 0 beyond.
pub fn cutoff(x: &[f64]) -> f64 {
    let r = crate::num::norm(x);
    if r <= 1.0 {
        1.0
    } else if r < 2.0 {
        let u = r - 1.0;
        exp(1.0 - 1.0 / (1.0 - u * u))
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadratureOptions {
    /// Time lattice size for the sup over base points.
    pub time_points: usize,
    /// Spatial lattice size per axis (d = 1); d = 2 uses `space_points_2d` per axis.
    pub space_points: usize,
    pub space_points_2d: usize,
    /// Uniform panels at level 0; doubled at each refinement.
    pub base_panels: usize,
    /// Geometric grading depth at level 0; doubled at each refinement.
    pub base_depth: usize,
    pub max_level: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            time_points: 9,
            space_points: 27,
            space_points_2d: 5,
            base_panels: 16,
            base_depth: 8,
            max_level: 3,
            rel_tol: 1e-3,
            abs_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KatoReport {
    pub beta: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub value: f64,
    pub forward_part: f64,
    pub backward_part: f64,
    pub quadrature_cells: usize,
    pub est_error: f64,
    pub level: usize,
}

/// Refinement driver shared by the quadratures: stops once two levels agree, raises
/// `Divergent` when the value grows by more than 20% twice in a row.
fn refine<T>(opts: &QuadratureOptions, mut level_eval: impl FnMut(usize) -> (f64, T)) -> Result<(f64, f64, usize, T)> {
    let mut prev: Option<f64> = None;
    let mut streak = 0;
    let mut last = None;
    for r in 0..=opts.max_level {
        let (v, extra) = level_eval(r);
        if !v.is_finite() {
            return Err(Error::divergent("quadrature produced a non-finite value"));
        }
        if let Some(p) = prev {
            let est = fabs(v - p);
            if v > 1.2 * p && p > 0.0 {
                streak += 1;
                if streak >= 2 {
                    return Err(Error::divergent("value keeps growing under refinement"));
                }
            } else {
                streak = 0;
            }
            if est <= opts.rel_tol * v + opts.abs_tol {
                return Ok((v, est, r, extra));
            }
            last = Some((v, est, r, extra));
        } else {
            last = Some((v, f64::INFINITY, r, extra));
        }
        prev = Some(v);
    }
    let (v, est, r, extra) = last.expect("at least one level");
    if streak >= 1 {
        return Err(Error::divergent("value still growing at the finest level"));
    }
    Ok((v, est, r, extra))
}

fn lattice_1d(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Base points `(t, x)` for the sup in `K^β_f`.
fn base_points(f: &SpaceTimeField, opts: &QuadratureOptions) -> Vec<(f64, Vec<f64>)> {
    let (lo, hi) = f.support_box();
    let times = if f.time_homogeneous { vec![0.0] } else { lattice_1d(0.0, 1.0, opts.time_points) };
    let n = if f.dim == 1 { opts.space_points } else { opts.space_points_2d };
    let axes: Vec<Vec<f64>> = (0..f.dim).map(|k| lattice_1d(lo[k] - 2.0, hi[k] + 2.0, n)).collect();
    let mut out = Vec::new();
    for &t in &times {
        if f.dim == 1 {
            for &x in &axes[0] {
                out.push((t, vec![x]));
            }
        } else {
            for &x in &axes[0] {
                for &y in &axes[1] {
                    out.push((t, vec![x, y]));
                }
            }
        }
    }
    out
}

/// `∫₀^T∫ η_β(s,y)|f(t0 + dir·s, x0 + dir·y)| dy ds` at refinement level `r`.
fn kato_integral(f: &SpaceTimeField, beta: f64, tmax: f64, t0: f64, x0: &[f64], dir: f64, r: usize, opts: &QuadratureOptions) -> (f64, usize) {
    let gl = gauss_legendre(4);
    let panels = opts.base_panels << r;
    let depth = opts.base_depth << r;
    let (ws, ww) = composite_rule(&graded_breaks(0.0, 1.0, panels, &[0.0], depth, &[]), &gl);
    let d = f.dim;
    let mut edges_x: Vec<Vec<f64>> = Vec::new();
    if let Some((lo, hi)) = &f.support_hint {
        edges_x.push(lo.clone());
        edges_x.push(hi.clone());
    }
    let prefactor = 2.0 * pow(tmax, 1.0 - 0.5 * beta);
    let mut count = 0usize;
    let mut outer = Vec::with_capacity(ws.len());
    let mut z = vec![0.0; d];
    for (w, wq) in ws.iter().zip(&ww) {
        let s = tmax * w * w;
        let rs = sqrt(s);
        let t = t0 + dir * s;
        // ρ location of a spatial point q relative to the base point along this s-slice.
        let rho_of = |dist: f64| dist / (rs + dist);
        let mut inner = Vec::new();
        if d == 1 {
            for branch in [1.0, -1.0] {
                let mut attract = vec![1.0];
                let mut edges = Vec::new();
                for q in &f.singular_points {
                    let y = dir * (q[0] - x0[0]);
                    if y * branch >= 0.0 {
                        attract.push(rho_of(fabs(y)));
                    }
                }
                for e in &edges_x {
                    let y = dir * (e[0] - x0[0]);
                    if y * branch >= 0.0 {
                        edges.push(rho_of(fabs(y)));
                    }
                }
                let (rs_n, rw) = composite_rule(&graded_breaks(0.0, 1.0, panels, &attract, depth, &edges), &gl);
                for (rho_, rq) in rs_n.iter().zip(&rw) {
                    let v = rs * rho_ / (1.0 - rho_);
                    z[0] = x0[0] + dir * branch * v;
                    let g = fabs(f.value(t, &z));
                    count += 1;
                    if g != 0.0 {
                        inner.push(rq * pow(1.0 - rho_, beta - 1.0) * g);
                    }
                }
            }
        } else {
            let mut attract = vec![1.0];
            for q in &f.singular_points {
                attract.push(rho_of(sqrt(crate::num::dist2(q, x0))));
            }
            let (rs_n, rw) = composite_rule(&graded_breaks(0.0, 1.0, panels, &attract, depth, &[]), &gl);
            let m = 4 * panels;
            for (rho_, rq) in rs_n.iter().zip(&rw) {
                let v = rs * rho_ / (1.0 - rho_);
                let radial = rq * rho_ * pow(1.0 - rho_, beta - 1.0);
                for k in 0..m {
                    let th = 2.0 * PI * (k as f64 + 0.5) / m as f64;
                    z[0] = x0[0] + dir * v * cos(th);
                    z[1] = x0[1] + dir * v * sin(th);
                    let g = fabs(f.value(t, &z));
                    count += 1;
                    if g != 0.0 {
                        inner.push(radial * g * 2.0 * PI / m as f64);
                    }
                }
            }
        }
        outer.push(wq * pow(*w, 1.0 - beta) * pairwise_sum(&inner));
    }
    (prefactor * pairwise_sum(&outer), count)
}

/// `K^β_f(T)`: lattice sup of the forward plus the lattice sup of the backward convolution
/// of `|f|` with `η_β`.
pub fn kato_functional(f: &SpaceTimeField, beta: f64, t: f64, opts: &QuadratureOptions) -> Result<KatoReport> {
    if !(beta >= 0.0) || !(t > 0.0 && t <= 1.0) {
        return Err(Error::domain("kato_functional needs beta >= 0 and T in (0, 1]"));
    }
    if f.dim == 0 || f.dim > 2 {
        return Err(Error::domain("kato_functional supports d = 1, 2"));
    }
    if f.identically_zero {
        return Ok(KatoReport { beta, t, value: 0.0, forward_part: 0.0, backward_part: 0.0, quadrature_cells: 0, est_error: 0.0, level: 0 });
    }
    let base = base_points(f, opts);
    let (value, est, level, (fwd, bwd, cells)) = refine(opts, |r| {
        let vals = par_map(2 * base.len(), |i| {
            let (t0, x0) = &base[i / 2];
            let dir = if i % 2 == 0 { 1.0 } else { -1.0 };
            kato_integral(f, beta, t, *t0, x0, dir, r, opts)
        });
        let fwd = vals.iter().step_by(2).map(|v| v.0).fold(0.0, f64::max);
        let bwd = vals.iter().skip(1).step_by(2).map(|v| v.0).fold(0.0, f64::max);
        let cells = vals.iter().map(|v| v.1).sum::<usize>();
        (fwd + bwd, (fwd, bwd, cells))
    })?;
    Ok(KatoReport { beta, t, value, forward_part: fwd, backward_part: bwd, quadrature_cells: cells, est_error: est, level })
}

/// `sup_z (∫₀^T ‖f(t,·)χ_z‖_{L^p}^q dt)^{1/q}` over a lattice of centres with spacing 0.5.
/// `p` or `q` may be `f64::INFINITY`.
pub fn lpq_norm(f: &SpaceTimeField, p: f64, q: f64, t: f64, opts: &QuadratureOptions) -> Result<f64> {
    lpq_norm_report(f, p, q, t, opts).map(|r| r.value)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpqReport {
    pub p: f64,
    pub q: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub value: f64,
    pub worst_center: Vec<f64>,
    pub est_error: f64,
}

fn spatial_lp(f: &SpaceTimeField, p: f64, t: f64, z: &[f64], r: usize, opts: &QuadratureOptions) -> f64 {
    let gl = gauss_legendre(4);
    let panels = opts.base_panels << r;
    let depth = opts.base_depth << r;
    let d = f.dim;
    let axis_rule = |k: usize| {
        let attract: Vec<f64> = f.singular_points.iter().map(|q| q[k]).collect();
        let mut edges = vec![z[k] - 1.0, z[k] + 1.0];
        if let Some((lo, hi)) = &f.support_hint {
            edges.push(lo[k]);
            edges.push(hi[k]);
        }
        composite_rule(&graded_breaks(z[k] - 2.0, z[k] + 2.0, panels, &attract, depth, &edges), &gl)
    };
    let rules: Vec<(Vec<f64>, Vec<f64>)> = (0..d).map(axis_rule).collect();
    let mut x = vec![0.0; d];
    let mut terms = Vec::new();
    let mut sup: f64 = 0.0;
    let mut visit = |x: &[f64], w: f64| {
        let off: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - b).collect();
        let c = cutoff(&off);
        if c == 0.0 {
            return;
        }
        let g = fabs(f.value(t, x)) * c;
        if p.is_infinite() {
            sup = sup.max(g);
        } else if g != 0.0 {
            terms.push(w * pow(g, p));
        }
    };
    if d == 1 {
        for (xv, w) in rules[0].0.iter().zip(&rules[0].1) {
            x[0] = *xv;
            visit(&x, *w);
        }
    } else {
        for (x0, w0) in rules[0].0.iter().zip(&rules[0].1) {
            for (x1, w1) in rules[1].0.iter().zip(&rules[1].1) {
                x[0] = *x0;
                x[1] = *x1;
                visit(&x, w0 * w1);
            }
        }
    }
    if p.is_infinite() {
        sup
    } else {
        pow(pairwise_sum(&terms), 1.0 / p)
    }
}

fn mixed_norm_at(f: &SpaceTimeField, p: f64, q: f64, tmax: f64, z: &[f64], r: usize, opts: &QuadratureOptions) -> f64 {
    if f.time_homogeneous {
        let g = spatial_lp(f, p, 0.0, z, r, opts);
        return if q.is_infinite() { g } else { pow(tmax, 1.0 / q) * g };
    }
    let gl = gauss_legendre(4);
    let (ts, tw) = composite_rule(&graded_breaks(0.0, tmax, opts.base_panels << r, &[], 0, &[]), &gl);
    let gs: Vec<f64> = ts.iter().map(|&t| spatial_lp(f, p, t, z, r, opts)).collect();
    if q.is_infinite() {
        gs.iter().copied().fold(0.0, f64::max)
    } else {
        let terms: Vec<f64> = gs.iter().zip(&tw).map(|(g, w)| w * pow(*g, q)).collect();
        pow(pairwise_sum(&terms), 1.0 / q)
    }
}

pub fn lpq_norm_report(f: &SpaceTimeField, p: f64, q: f64, t: f64, opts: &QuadratureOptions) -> Result<LpqReport> {
    if !(p >= 1.0) || !(q >= 1.0) || !(t > 0.0 && t <= 1.0) {
        return Err(Error::domain("lpq_norm needs p, q >= 1 and T in (0, 1]"));
    }
    if f.identically_zero {
        return Ok(LpqReport { p, q, t, value: 0.0, worst_center: vec![0.0; f.dim], est_error: 0.0 });
    }
    let (lo, hi) = f.support_box();
    let axes: Vec<Vec<f64>> = (0..f.dim)
        .map(|k| {
            let (a, b) = (lo[k] - 2.0, hi[k] + 2.0);
            let n = libm::floor((b - a) / 0.5) as usize;
            (0..=n).map(|i| a + 0.5 * i as f64).collect()
        })
        .collect();
    let centers: Vec<Vec<f64>> = if f.dim == 1 {
        axes[0].iter().map(|x| vec![*x]).collect()
    } else {
        axes[0].iter().flat_map(|x| axes[1].iter().map(move |y| vec![*x, *y])).collect()
    };
    let (value, est, _, worst) = refine(opts, |r| {
        let vals = par_map(centers.len(), |i| mixed_norm_at(f, p, q, t, &centers[i], r, opts));
        let mut best = 0usize;
        for i in 0..vals.len() {
            if vals[i] > vals[best] || !vals[i].is_finite() {
                best = i;
            }
        }
        (vals[best], best)
    })?;
    Ok(LpqReport { p, q, t, value, worst_center: centers[worst].clone(), est_error: est })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RhoEtaReport {
    pub fitted_c: f64,
    /// `(t, |x|)` of the largest ratio.
    pub worst_point: Vec<f64>,
    pub samples: usize,
}

/// Largest `ϱ_{λ,−β}/η_β` over a log-spaced `(t, |x|)` lattice with `samples` points,
/// `t ∈ [1e-4, 1]`, `|x| ∈ [0, x_max]`.
pub fn check_rho_vs_eta(lambda: f64, beta: f64, dim: usize, samples: usize, x_max: f64) -> Result<RhoEtaReport> {
    if !(lambda > 0.0) || !(beta >= 0.0) {
        return Err(Error::domain("check_rho_vs_eta needs lambda > 0, beta >= 0"));
    }
    let side = (sqrt(samples as f64) as usize).max(2);
    let mut best = (0.0, vec![0.0, 0.0]);
    let mut x = vec![0.0; dim];
    for i in 0..side {
        let t = pow(10.0, -4.0 + 4.0 * i as f64 / (side - 1) as f64);
        for j in 0..side {
            // First column on the x = 0 ray, then log-spaced radii.
            let r = if j == 0 { 0.0 } else { x_max * pow(10.0, -6.0 + 6.0 * (j - 1) as f64 / (side - 2).max(1) as f64) };
            x[0] = r;
            let ratio = rho(lambda, -beta, t, &x)? / eta_beta(beta, t, &x)?;
            if ratio > best.0 {
                best = (ratio, vec![t, r]);
            }
        }
    }
    Ok(RhoEtaReport { fitted_c: best.0, worst_point: best.1, samples: side * side })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingReport {
    pub slope: Option<f64>,
    pub slope_expected: f64,
    pub fitted_c: Option<f64>,
    pub zero_field: bool,
    #[serde(rename = "T_list")]
    pub t_list: Vec<f64>,
    pub k_values: Vec<f64>,
    pub norms: Vec<f64>,
}

/// Regresses `log K^β_f(T)` on `log T` and compares with `½(2 − β − d/p − 2/q)`.
pub fn check_kvsl(f: &SpaceTimeField, beta: f64, p: f64, q: f64, t_list: &[f64], opts: &QuadratureOptions) -> Result<ScalingReport> {
    let d = f.dim as f64;
    let index = d / p + 2.0 / q;
    if !(index < 2.0 - beta) {
        return Err(Error::index_set("(p, q) outside the index set: d/p + 2/q must be < 2 - beta"));
    }
    let expected = 0.5 * (2.0 - beta - index);
    let (tmin, tmax) = t_list.iter().fold((f64::INFINITY, 0.0f64), |(a, b), t| (a.min(*t), b.max(*t)));
    if t_list.len() < 2 || log(tmax / tmin) / log(10.0) < 1.5 - 1e-9 {
        return Err(Error::precondition("T_list must span at least 1.5 decades"));
    }
    let k_values = t_list.iter().map(|&t| kato_functional(f, beta, t, opts).map(|r| r.value)).collect::<Result<Vec<_>>>()?;
    if f.identically_zero || k_values.iter().all(|k| *k == 0.0) {
        return Ok(ScalingReport { slope: None, slope_expected: expected, fitted_c: None, zero_field: true, t_list: t_list.to_vec(), k_values, norms: Vec::new() });
    }
    let norms = t_list.iter().map(|&t| lpq_norm(f, p, q, t, opts)).collect::<Result<Vec<_>>>()?;
    let lx: Vec<f64> = t_list.iter().map(|t| log(*t)).collect();
    let ly: Vec<f64> = k_values.iter().map(|k| log(*k)).collect();
    let (slope, _) = linear_fit(&lx, &ly);
    let fitted = t_list
        .iter()
        .zip(&k_values)
        .zip(&norms)
        .map(|((t, k), n)| k / (pow(*t, expected) * n))
        .fold(0.0, f64::max);
    Ok(ScalingReport { slope: Some(slope), slope_expected: expected, fitted_c: Some(fitted), zero_field: false, t_list: t_list.to_vec(), k_values, norms })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvolutionReport {
    pub lhs_max: f64,
    pub ratio_max: f64,
    pub kato: f64,
    /// `(x, y)` attaining the largest ratio (first coordinates).
    pub worst_point: Vec<f64>,
    pub est_error: f64,
}

/// `∫ₛᵗ∫ ϱ_{λ,−β′}(τ−s, x−z)|b(τ,z)|ϱ_{2λ,−β}(t−τ, z−y) dz dτ` at refinement level `r`.
pub fn convolution_lhs(b: &SpaceTimeField, beta: f64, beta_p: f64, lambda: f64, s: f64, t: f64, x: &[f64], y: &[f64], r: usize) -> f64 {
    let d = b.dim;
    let gl = gauss_legendre(4);
    let n_tau = 16 << r;
    let n_z = 16 << r;
    let (th, thw) = composite_rule(&graded_breaks(0.0, 1.0, n_tau, &[], 0, &[]), &gl);
    let mut outer = Vec::with_capacity(th.len());
    let mut z = vec![0.0; d];
    for (theta, w) in th.iter().zip(&thw) {
        let tau = s + (t - s) * 0.5 * (1.0 - cos(PI * theta));
        let jac = (t - s) * 0.5 * PI * sin(PI * theta);
        let (u, v) = (tau - s, t - tau);
        if !(u > 0.0 && v > 0.0) {
            continue;
        }
        // Product of the two Gaussians is centred at zc with per-axis std sd.
        let (ka, kb) = (lambda / u, 2.0 * lambda / v);
        let sd = sqrt(0.5 / (ka + kb));
        let zc: Vec<f64> = (0..d).map(|k| (ka * x[k] + kb * y[k]) / (ka + kb)).collect();
        let (zs, zw) = composite_rule(&graded_breaks(-10.0, 10.0, n_z, &[], 0, &[]), &gl);
        let mut inner = Vec::new();
        let pre_u = pow(u, 0.5 * (-(d as f64) - beta_p));
        let pre_v = pow(v, 0.5 * (-(d as f64) - beta));
        if d == 1 {
            for (e, ew) in zs.iter().zip(&zw) {
                z[0] = zc[0] + sd * e;
                let bb = fabs(b.value(tau, &z));
                if bb == 0.0 {
                    continue;
                }
                let g = exp(-ka * (x[0] - z[0]) * (x[0] - z[0]) - kb * (z[0] - y[0]) * (z[0] - y[0]));
                inner.push(ew * sd * bb * g);
            }
        } else {
            for (e0, w0) in zs.iter().zip(&zw) {
                for (e1, w1) in zs.iter().zip(&zw) {
                    z[0] = zc[0] + sd * e0;
                    z[1] = zc[1] + sd * e1;
                    let bb = fabs(b.value(tau, &z));
                    if bb == 0.0 {
                        continue;
                    }
                    let g = exp(-ka * crate::num::dist2(x, &z) - kb * crate::num::dist2(&z, y));
                    inner.push(w0 * w1 * sd * sd * bb * g);
                }
            }
        }
        outer.push(w * jac * pre_u * pre_v * pairwise_sum(&inner));
    }
    pairwise_sum(&outer)
}

/// Ratio of the convolution to `K^β_{|b|}(t−s)·ϱ_{λ,−β′}(t−s, x−y)` over a lattice of
/// `(x, y)` pairs on `[-half, half]^d` (d = 1: `n × n` pairs).
pub fn check_convolution_bound(b: &SpaceTimeField, beta: f64, beta_p: f64, lambda: f64, s: f64, t: f64, half: f64, n: usize, opts: &QuadratureOptions) -> Result<ConvolutionReport> {
    if !(beta >= beta_p && beta_p >= 0.0) || !(t > s) || !(lambda > 0.0) {
        return Err(Error::precondition("need beta >= beta' >= 0, t > s, lambda > 0"));
    }
    if b.identically_zero {
        return Ok(ConvolutionReport { lhs_max: 0.0, ratio_max: 0.0, kato: 0.0, worst_point: vec![0.0, 0.0], est_error: 0.0 });
    }
    let kato = kato_functional(b, beta, t - s, opts)?.value;
    let pts = lattice_1d(-half, half, n);
    let d = b.dim;
    let pairs: Vec<(Vec<f64>, Vec<f64>)> =
        pts.iter().flat_map(|&x| pts.iter().map(move |&y| (vec![x; d], vec![y; d]))).collect();
    let mut prev: Option<(f64, f64)> = None;
    let mut out = None;
    for r in 0..=opts.max_level {
        let lhs = par_map(pairs.len(), |i| convolution_lhs(b, beta, beta_p, lambda, s, t, &pairs[i].0, &pairs[i].1, r));
        let mut best = (0.0, 0.0, 0usize);
        for (i, l) in lhs.iter().enumerate() {
            let r2 = crate::num::dist2(&pairs[i].0, &pairs[i].1);
            let ratio = l / (kato * rho_fast(lambda, -beta_p, t - s, r2, d));
            if !ratio.is_finite() {
                return Err(Error::divergent("convolution bound ratio is not finite"));
            }
            if ratio > best.0 {
                best = (ratio, *l, i);
            }
        }
        let lhs_max = lhs.iter().copied().fold(0.0, f64::max);
        if let Some((pr, _)) = prev {
            let est = fabs(best.0 - pr);
            out = Some(ConvolutionReport { lhs_max, ratio_max: best.0, kato, worst_point: vec![pairs[best.2].0[0], pairs[best.2].1[0]], est_error: est });
            if est <= opts.rel_tol * best.0 + opts.abs_tol {
                return Ok(out.unwrap());
            }
        }
        prev = Some((best.0, lhs_max));
    }
    let rep = out.ok_or_else(|| Error::divergent("no refinement levels"))?;
    if rep.est_error > 0.05 * rep.ratio_max {
        return Err(Error::divergent("convolution quadrature does not stabilize"));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> QuadratureOptions {
        QuadratureOptions::default()
    }

    #[test]
    fn profile_examples() {
        assert_eq!(eta_beta(0.0, 1.0, &[0.0]).unwrap(), 1.0);
        assert!((eta_beta(1.0, 0.25, &[0.0]).unwrap() - 4.0).abs() < 1e-14);
        assert!((eta_beta(1.0, 0.25, &[0.3, 0.4]).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(rho(1.0, 0.0, 1.0, &[0.0]).unwrap(), 1.0);
        assert!((rho(1.0, 0.0, 1.0, &[1.0]).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!((rho(2.0, -1.0, 4.0, &[0.0]).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(eta_beta(1.0, 0.0, &[0.0]).unwrap_err().kind, crate::ErrorKind::DomainError);
        assert_eq!(rho(0.0, 0.0, 1.0, &[0.0]).unwrap_err().kind, crate::ErrorKind::DomainError);
    }

    #[test]
    fn kato_of_constant_matches_closed_form() {
        for t in [0.0625, 0.25, 1.0] {
            let r = kato_functional(&SpaceTimeField::constant(1, 1.0), 1.0, t, &opts()).unwrap();
            let exact = 8.0 * t.sqrt();
            assert!((r.value - exact).abs() < 1e-3 * exact, "T={t}: {} vs {exact}", r.value);
            assert!((r.forward_part - r.backward_part).abs() < 1e-12);
        }
        let zero = kato_functional(&SpaceTimeField::zero(1), 1.0, 0.5, &opts()).unwrap();
        assert_eq!(zero.value, 0.0);
    }

    /// Midpoint rule in `(u = √s, y)` for the base point `x = 0`.
    fn brute_ball(t: f64, n: usize) -> f64 {
        let umax = t.sqrt();
        let (du, dy) = (umax / n as f64, 2.0 / n as f64);
        let mut acc = 0.0;
        for i in 0..n {
            let u = (i as f64 + 0.5) * du;
            for j in 0..n {
                let y = -1.0 + (j as f64 + 0.5) * dy;
                acc += 2.0 * u / ((u + y.abs()) * (u + y.abs())) * du * dy;
            }
        }
        2.0 * acc
    }

    #[test]
    fn kato_of_ball_indicator() {
        let f = SpaceTimeField::indicator_ball(1, 1.0);
        let r = kato_functional(&f, 1.0, 0.25, &opts()).unwrap();
        let closed = 8.0 * (1.0 + 0.25f64.sqrt()).ln();
        let brute = brute_ball(0.25, 2000);
        assert!((brute - closed).abs() < 5e-3 * closed, "{brute} vs {closed}");
        assert!((r.value - closed).abs() < 1e-3 * closed, "{} vs {closed}", r.value);
    }

    #[test]
    fn kato_zero_extension_in_time() {
        // Non-homogeneous version of f ≡ 1 on [0,1]: sup still sees a full window.
        let f = SpaceTimeField::new(1, |_, _| 1.0);
        let r = kato_functional(&f, 1.0, 0.25, &opts()).unwrap();
        assert!((r.value - 4.0).abs() < 4e-3, "{}", r.value);
    }

    #[test]
    fn kato_detects_divergence() {
        // β = 0 with f ≡ 1: ∫ (√s + |y|)^{-1} dy diverges logarithmically.
        let err = kato_functional(&SpaceTimeField::constant(1, 1.0), 0.0, 0.5, &opts()).unwrap_err();
        assert_eq!(err.kind, crate::ErrorKind::Divergent);
    }

    #[test]
    fn kato_in_two_dimensions() {
        // d = 2, β = 1, f ≡ 1: ∫_{ℝ²}(√s+|y|)^{-3}dy = 2π/√s · ∫₀^∞ r(1+r)^{-3}dr = π/√s.
        let r = kato_functional(&SpaceTimeField::constant(2, 1.0), 1.0, 0.25, &opts()).unwrap();
        let exact = 2.0 * 2.0 * core::f64::consts::PI * 0.25f64.sqrt();
        assert!((r.value - exact).abs() < 1e-3 * exact, "{} vs {exact}", r.value);
    }

    fn chi_lp(p: f64) -> f64 {
        let n = 400_000;
        let h = 4.0 / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            let x = -2.0 + (i as f64 + 0.5) * h;
            s += cutoff(&[x]).powf(p) * h;
        }
        s.powf(1.0 / p)
    }

    #[test]
    fn lpq_examples() {
        assert_eq!(lpq_norm(&SpaceTimeField::zero(1), 2.0, 4.0, 1.0, &opts()).unwrap(), 0.0);
        let c = 3.0;
        let v = lpq_norm(&SpaceTimeField::constant(1, c), 2.0, 4.0, 0.5, &opts()).unwrap();
        let oracle = c * chi_lp(2.0) * 0.5f64.powf(0.25);
        assert!((v - oracle).abs() < 1e-6 * oracle, "{v} vs {oracle}");
        // |x|^{-1/2} in L² diverges logarithmically at 0.
        let f = SpaceTimeField::power_bump(1, -0.5, 1.0);
        assert_eq!(lpq_norm(&f, 2.0, 4.0, 1.0, &opts()).unwrap_err().kind, crate::ErrorKind::Divergent);
        // p = 1.5 is fine: ∫_{-1}^1 |x|^{-3/4} dx = 8. The x^{-3/4} tail inside the
        // finest graded panel converges slowly, hence the looser tolerance.
        let v = lpq_norm(&f, 1.5, f64::INFINITY, 1.0, &opts()).unwrap();
        assert!((v - 8f64.powf(1.0 / 1.5)).abs() < 2e-3 * 4.0, "{v}");
    }

    #[test]
    fn lpq_time_dependent_matches_stationary() {
        let a = SpaceTimeField::new(1, |_, x: &[f64]| (-x[0] * x[0]).exp());
        let b = SpaceTimeField::stationary(1, |x: &[f64]| (-x[0] * x[0]).exp());
        let va = lpq_norm(&a, 2.0, 4.0, 0.5, &opts()).unwrap();
        let vb = lpq_norm(&b, 2.0, 4.0, 0.5, &opts()).unwrap();
        assert!((va - vb).abs() < 1e-9 * vb);
    }

    #[test]
    fn example4_kernel_integrability() {
        for (kappa, p, finite) in [(1.25, 2.0, true), (1.25, 4.0, false), (1.5, 1.5, true), (1.5, 2.0, false)] {
            let f = SpaceTimeField::power_bump(1, 1.0 - kappa, 1.0);
            let r = lpq_norm(&f, p, f64::INFINITY, 1.0, &opts());
            assert_eq!(r.is_ok(), finite, "kappa={kappa} p={p}: {r:?}");
        }
    }

    #[test]
    fn rho_eta_certificate() {
        let r = check_rho_vs_eta(1.0, 0.0, 1, 4, 0.0).unwrap();
        assert!((r.fitted_c - 1.0).abs() < 1e-12);
        // Exact sup of (1+u)^{d+β} e^{-λu²} at u* = (−1 + √(1 + 2(d+β)/λ))/2.
        let (lambda, beta, d) = (1.0f64, 1.0f64, 1.0f64);
        let u = 0.5 * (-1.0 + (1.0 + 2.0 * (d + beta) / lambda).sqrt());
        let exact = (1.0 + u).powf(d + beta) * (-lambda * u * u).exp();
        let coarse = check_rho_vs_eta(lambda, beta, 1, 10_000, 10.0).unwrap();
        let fine = check_rho_vs_eta(lambda, beta, 1, 160_000, 10.0).unwrap();
        assert!((fine.fitted_c - coarse.fitted_c).abs() < 0.05 * fine.fitted_c);
        assert!(fine.fitted_c <= exact + 1e-12 && fine.fitted_c > 0.99 * exact);
    }

    #[test]
    fn kvsl_constant_field_slope_half() {
        let f = SpaceTimeField::constant(1, 1.0);
        let r = check_kvsl(&f, 1.0, 4.0, 4.0, &[0.01, 0.04, 0.16, 0.64], &opts()).unwrap();
        assert!((r.slope.unwrap() - 0.5).abs() < 1e-3);
        let z = check_kvsl(&SpaceTimeField::zero(1), 1.0, 4.0, 4.0, &[0.01, 1.0], &opts()).unwrap();
        assert!(z.zero_field && z.slope.is_none());
        assert_eq!(check_kvsl(&f, 1.0, 2.0, 2.0, &[0.01, 1.0], &opts()).unwrap_err().kind, crate::ErrorKind::IndexSetError);
    }

    #[test]
    fn convolution_bound_constant_drift() {
        let b = SpaceTimeField::constant(1, 1.0);
        // β = β' = 0: the Kato functional itself diverges.
        let e = check_convolution_bound(&b, 0.0, 0.0, 1.0, 0.0, 0.5, 1.0, 5, &opts()).unwrap_err();
        assert_eq!(e.kind, crate::ErrorKind::Divergent);
        let r = check_convolution_bound(&b, 1.0, 1.0, 1.0, 0.0, 0.5, 1.0, 5, &opts()).unwrap();
        assert!(r.ratio_max.is_finite() && r.ratio_max > 0.0);
        assert!(r.est_error < 0.05 * r.ratio_max);
        // Gaussian-product closed form in z, dense τ rule.
        let (lam, s, t) = (1.0f64, 0.0f64, 0.5f64);
        let n = 200_000;
        let mut acc = 0.0;
        for i in 0..n {
            let th = (i as f64 + 0.5) / n as f64;
            let tau = s + (t - s) * 0.5 * (1.0 - (core::f64::consts::PI * th).cos());
            let jac = (t - s) * 0.5 * core::f64::consts::PI * (core::f64::consts::PI * th).sin();
            let (u, v) = (tau - s, t - tau);
            let (a, bb) = (lam / u, 2.0 * lam / v);
            acc += jac / n as f64 * u.powf(-1.0) * v.powf(-1.0) * (core::f64::consts::PI / (a + bb)).sqrt();
        }
        let lhs = convolution_lhs(&b, 1.0, 1.0, lam, s, t, &[0.0], &[0.0], 2);
        assert!((lhs - acc).abs() < 1e-4 * acc, "{lhs} vs {acc}");
    }

    #[test]
    fn convolution_even_drift_matches_riemann_sum() {
        let b = SpaceTimeField::stationary(1, |x: &[f64]| 1.0 + x[0] * x[0]);
        let (lam, s, t) = (1.0f64, 0.0f64, 0.5f64);
        let lhs = convolution_lhs(&b, 1.0, 0.5, lam, s, t, &[0.0], &[0.0], 2);
        // Dense midpoint sum in (θ, z) on the same τ substitution.
        let (nt, nz) = (4000, 4000);
        let mut acc = 0.0;
        for i in 0..nt {
            let th = (i as f64 + 0.5) / nt as f64;
            let tau = 0.5 * t * (1.0 - (core::f64::consts::PI * th).cos());
            let jac = 0.5 * t * core::f64::consts::PI * (core::f64::consts::PI * th).sin();
            let (u, v) = (tau, t - tau);
            let width = 12.0 * (0.5 / (lam / u + 2.0 * lam / v)).sqrt();
            let dz = 2.0 * width / nz as f64;
            let mut inner = 0.0;
            for j in 0..nz {
                let z = -width + (j as f64 + 0.5) * dz;
                inner += (-lam * z * z / u - 2.0 * lam * z * z / v).exp() * (1.0 + z * z) * dz;
            }
            acc += jac / nt as f64 * u.powf(-0.75) * v.powf(-1.0) * inner;
        }
        assert!((lhs - acc).abs() < 1e-3 * acc, "{lhs} vs {acc}");
    }
}
