//! Numerical certificates for kernel envelopes, Hölder moduli and stability.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, fabs, log, pow, sqrt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::engine::SeriesConfig;
use super::field::CoefficientField;
use super::kernel::{heat_kernel, KernelGrid};
use crate::grid::Grid;
use crate::kato::{lpq_norm, rho_fast, QuadratureOptions, SpaceTimeField};
use crate::num::{det, gauss_legendre_on};
use crate::{Error, Result};

/// Fitted Gaussian envelopes `C⁻¹ ϱ_{ℓ} ≤ p ≤ C ϱ_{λ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSidedReport {
    /// Decay rate of the upper envelope.
    pub rate_upper: f64,
    /// Decay rate of the lower envelope.
    pub rate_lower: f64,
    pub c_upper: f64,
    pub c_lower: f64,
    pub c: f64,
    pub points: usize,
}

/// Largest `u = |x − y|²/(t − s)` used by the envelope fit.
pub const ENVELOPE_U_MAX: f64 = 16.0;

/// Minimises the convex map `λ ↦ n·max_i(v_i + λu_i) − Σ_i(v_i + λu_i)` on `[0, hi]`.
fn fit_rate(v: &[f64], u: &[f64], hi: f64) -> f64 {
    let n = v.len() as f64;
    let obj = |lam: f64| {
        let (mut mx, mut sum) = (f64::NEG_INFINITY, 0.0);
        for (a, b) in v.iter().zip(u) {
            let w = a + lam * b;
            mx = mx.max(w);
            sum += w;
        }
        n * mx - sum
    };
    let (mut lo, mut hi) = (0.0, hi);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if obj(m1) <= obj(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    0.5 * (lo + hi)
}

/// Fits two-sided Gaussian envelopes on the interior of the grid with `u ≤ 16`.
pub fn verify_two_sided(kernel: &KernelGrid) -> Result<TwoSidedReport> {
    kernel.validate()?;
    let d = kernel.dim();
    let grid = &kernel.grid;
    let margin = 0.05 * grid.half_width();
    let centres = grid.centers();
    let (mut l, mut u) = (Vec::new(), Vec::new());
    for (k, t) in kernel.t_nodes.iter().enumerate() {
        let dt = t - kernel.s;
        for i in 0..kernel.n_x() {
            let x = kernel.x(i);
            for (yi, p) in kernel.slice(k, i).iter().enumerate() {
                let y = &centres[yi * d..(yi + 1) * d];
                if (0..d).any(|q| y[q] < grid.lo[q] + margin || y[q] > grid.hi[q] - margin) {
                    continue;
                }
                let uu = crate::num::dist2(x, y) / dt;
                if uu > ENVELOPE_U_MAX {
                    continue;
                }
                if !(*p > 0.0) {
                    return Err(Error::no_envelope(format!("kernel vanishes at t = {t}, y index {yi}")));
                }
                l.push(log(*p) + 0.5 * d as f64 * log(dt));
                u.push(uu);
            }
        }
    }
    if l.is_empty() {
        return Err(Error::no_envelope("no grid points inside the envelope region"));
    }
    let rate_upper = fit_rate(&l, &u, 16.0);
    let c_upper = exp(l.iter().zip(&u).map(|(a, b)| a + rate_upper * b).fold(f64::NEG_INFINITY, f64::max));
    let m: Vec<f64> = l.iter().map(|v| -v).collect();
    // Lower envelope: −L − ℓu ≤ log C, i.e. the same fit with u negated.
    let neg_u: Vec<f64> = u.iter().map(|v| -v).collect();
    let rate_lower = fit_rate(&m, &neg_u, 16.0);
    let c_lower = exp(m.iter().zip(&u).map(|(a, b)| a - rate_lower * b).fold(f64::NEG_INFINITY, f64::max));
    if !(c_upper.is_finite() && c_lower.is_finite()) {
        return Err(Error::no_envelope("envelope constant is not finite"));
    }
    Ok(TwoSidedReport { rate_upper, rate_lower, c_upper, c_lower, c: c_upper.max(c_lower), points: l.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HolderAxis {
    Time,
    Space,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub axis: HolderAxis,
    pub gamma: f64,
    pub lambda: f64,
    pub fitted_c: f64,
    pub pairs: usize,
}

/// `max |Δp| / (increment^γ · Σ ϱ_{λ,−γ})` over all pairs of grid samples along `axis`.
///
/// The time increment enters as `|t₂ − t₁|^{γ/2}`.
pub fn verify_holder(kernel: &KernelGrid, field: &CoefficientField, axis: HolderAxis, gamma: f64, lambda: f64) -> Result<HolderReport> {
    kernel.validate()?;
    let d = kernel.dim();
    let cap = field.reg.alpha.min(field.reg.gamma0(d));
    if !(gamma > 0.0 && gamma < cap) {
        return Err(Error::precondition(format!("γ = {gamma} must lie in (0, {cap})")));
    }
    if !(lambda > 0.0) {
        return Err(Error::precondition("λ must be positive"));
    }
    let centres = kernel.grid.centers();
    let ny = kernel.grid.len();
    let nx = kernel.n_x();
    let nt = kernel.t_nodes.len();
    let (mut best, mut pairs) = (0.0f64, 0usize);
    match axis {
        HolderAxis::Time => {
            for i in 0..nx {
                let x = kernel.x(i);
                for y in 0..ny {
                    let r2 = crate::num::dist2(x, &centres[y * d..(y + 1) * d]);
                    for k1 in 0..nt {
                        for k2 in k1 + 1..nt {
                            let (t1, t2) = (kernel.t_nodes[k1] - kernel.s, kernel.t_nodes[k2] - kernel.s);
                            let den = pow(t2 - t1, 0.5 * gamma) * (rho_fast(lambda, -gamma, t1, r2, d) + rho_fast(lambda, -gamma, t2, r2, d));
                            let num = fabs(kernel.value(k2, i, y) - kernel.value(k1, i, y));
                            pairs += 1;
                            if den > 0.0 {
                                best = best.max(num / den);
                            }
                        }
                    }
                }
            }
        }
        HolderAxis::Space => {
            for k in 0..nt {
                let dt = kernel.t_nodes[k] - kernel.s;
                for i in 0..nx {
                    let x = kernel.x(i);
                    let row = kernel.slice(k, i);
                    let rho: Vec<f64> = (0..ny).map(|y| rho_fast(lambda, -gamma, dt, crate::num::dist2(x, &centres[y * d..(y + 1) * d]), d)).collect();
                    for y1 in 0..ny {
                        for y2 in y1 + 1..ny {
                            let dy = sqrt(crate::num::dist2(&centres[y1 * d..(y1 + 1) * d], &centres[y2 * d..(y2 + 1) * d]));
                            let den = pow(dy, gamma) * (rho[y1] + rho[y2]);
                            pairs += 1;
                            if den > 0.0 {
                                best = best.max(fabs(row[y1] - row[y2]) / den);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(HolderReport { axis, gamma, lambda, fitted_c: best, pairs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub lhs_sup: f64,
    pub delta_a: f64,
    pub delta_b: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub r: f64,
    pub eta: f64,
}

/// `‖a − ã‖` in `L^r` over time of the lattice sup in space, on `[-half, half]^d`.
fn diffusion_gap(f: &CoefficientField, g: &CoefficientField, r: f64, half: f64) -> f64 {
    let d = f.dim();
    let n = if d == 1 { 65 } else { 17 };
    let ax: Vec<f64> = (0..n).map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64).collect();
    let pts: Vec<Vec<f64>> = if d == 1 { ax.iter().map(|x| vec![*x]).collect() } else { ax.iter().flat_map(|x| ax.iter().map(move |y| vec![*x, *y])).collect() };
    let (mut a1, mut a2) = (vec![0.0; d * d], vec![0.0; d * d]);
    let mut sup_at = |t: f64| {
        let mut m = 0.0f64;
        for x in &pts {
            f.diffusion(t, x, &mut a1);
            g.diffusion(t, x, &mut a2);
            let fro = sqrt(a1.iter().zip(&a2).map(|(u, v)| (u - v) * (u - v)).sum::<f64>());
            m = m.max(fro);
        }
        m
    };
    if r.is_infinite() {
        (0..=16).map(|k| sup_at(k as f64 / 16.0)).fold(0.0, f64::max)
    } else {
        let (ts, ws) = gauss_legendre_on(16, 0.0, 1.0);
        pow(ts.iter().zip(&ws).map(|(t, w)| w * pow(sup_at(*t), r)).sum::<f64>(), 1.0 / r)
    }
}

/// Compares kernels built from two coefficient sets against `‖a − ã‖^{1−η} + ‖b − b̃‖`.
#[allow(clippy::too_many_arguments)]
pub fn kernel_stability(
    f: &CoefficientField,
    g: &CoefficientField,
    grid: &Grid,
    t_nodes: &[f64],
    x_points: &[f64],
    cfg: &SeriesConfig,
    r: f64,
    eta: f64,
) -> Result<StabilityReport> {
    let d = f.dim();
    let g0 = f.reg.gamma0(d);
    if !(r > 2.0 / g0) {
        return Err(Error::precondition(format!("r = {r} must exceed 2/γ₀ = {}", 2.0 / g0)));
    }
    let eta_lo = if r.is_infinite() { 0.0 } else { 2.0 / (2.0 + f.reg.alpha * r) };
    if !(eta > eta_lo && eta < 1.0) {
        return Err(Error::precondition(format!("η = {eta} must lie in ({eta_lo}, 1)")));
    }
    let p = heat_kernel(f, grid, 0.0, t_nodes, x_points, cfg)?;
    let q = heat_kernel(g, grid, 0.0, t_nodes, x_points, cfg)?;
    let lambda = cfg.lambda_for(f).min(cfg.lambda_for(g));
    let gam = if r.is_infinite() { 0.0 } else { -2.0 / r };
    let centres = grid.centers();
    let mut lhs = 0.0f64;
    for (k, t) in t_nodes.iter().enumerate() {
        for i in 0..p.n_x() {
            let x = p.x(i);
            for (y, (a, b)) in p.slice(k, i).iter().zip(q.slice(k, i)).enumerate() {
                let w = rho_fast(lambda, gam, *t, crate::num::dist2(x, &centres[y * d..(y + 1) * d]), d);
                if w > 0.0 {
                    lhs = lhs.max(fabs(a - b) / w);
                }
            }
        }
    }
    let delta_a = diffusion_gap(f, g, r, grid.half_width());
    let (fm, gm) = (f.model.clone(), g.model.clone());
    let db = SpaceTimeField::new(d, move |t, x| {
        let (mut u, mut v) = ([0.0; 3], [0.0; 3]);
        fm.drift(t, x, &mut u[..d]);
        gm.drift(t, x, &mut v[..d]);
        sqrt((0..d).map(|k| (u[k] - v[k]) * (u[k] - v[k])).sum::<f64>())
    })
    .with_support(vec![-grid.half_width(); d], vec![grid.half_width(); d]);
    let delta_b = if f.model.drift_free() && g.model.drift_free() { 0.0 } else { lpq_norm(&db, f.reg.p, f.reg.q, 1.0, &QuadratureOptions::default())? };
    let rhs = pow(delta_a, 1.0 - eta) + delta_b;
    let ratio = if rhs > 0.0 { lhs / rhs } else if lhs == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(StabilityReport { lhs_sup: lhs, delta_a, delta_b, rhs, ratio, r, eta })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetReport {
    pub dim: usize,
    pub lambda: f64,
    pub scale: f64,
    pub samples: usize,
    /// Fitted `max |det A − det Ã| / (a^{d−1} |A − Ã|_F)`.
    pub fitted_c: f64,
    pub bound_c: f64,
    /// Fitted `max |det(A + B) − det A| / (a^{d−1} b)` with `B` of scale `b ≤ a`.
    pub fitted_c_sum: f64,
    pub bound_c_sum: f64,
    pub holds: bool,
}

/// Random SPD matrix with eigenvalues uniform in `[scale/Λ, scale·Λ]`.
fn random_spd(rng: &mut ChaCha8Rng, d: usize, lambda: f64, scale: f64) -> Vec<f64> {
    let mut e = [0.0; 2];
    for v in e.iter_mut().take(d) {
        let u: f64 = rng.random();
        *v = scale * (1.0 / lambda + u * (lambda - 1.0 / lambda));
    }
    if d == 1 {
        return vec![e[0]];
    }
    let th: f64 = rng.random::<f64>() * core::f64::consts::PI;
    let (c, s) = (libm::cos(th), libm::sin(th));
    vec![c * c * e[0] + s * s * e[1], c * s * (e[0] - e[1]), c * s * (e[0] - e[1]), s * s * e[0] + c * c * e[1]]
}

/// Samples the determinant perturbation bounds with explicit constants
/// (`C = 1`, `C₂ = Λ` for `d = 1`; `C = 4Λ`, `C₂ = 3Λ²` for `d = 2`).
pub fn det_perturbation_check(dim: usize, lambda: f64, scale: f64, samples: usize, seed: u64) -> Result<DetReport> {
    if !(dim == 1 || dim == 2) || !(lambda >= 1.0) || !(scale > 0.0) {
        return Err(Error::domain("det check supports d ∈ {1, 2}, Λ ≥ 1, a > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale_pow = pow(scale, dim as f64 - 1.0);
    let (mut c1, mut c2) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let a = random_spd(&mut rng, dim, lambda, scale);
        let at = random_spd(&mut rng, dim, lambda, scale);
        let diff = sqrt(a.iter().zip(&at).map(|(u, v)| (u - v) * (u - v)).sum::<f64>());
        if diff > 0.0 {
            c1 = c1.max(fabs(det(&a, dim) - det(&at, dim)) / (scale_pow * diff));
        }
        let b_scale = scale * rng.random::<f64>().max(1e-6);
        let b = random_spd(&mut rng, dim, lambda, b_scale);
        let sum: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u + v).collect();
        c2 = c2.max(fabs(det(&sum, dim) - det(&a, dim)) / (scale_pow * b_scale));
    }
    let (bound_c, bound_c_sum) = if dim == 1 { (1.0, lambda) } else { (4.0 * lambda, 3.0 * lambda * lambda) };
    let holds = c1 <= bound_c * (1.0 + 1e-12) && c2 <= bound_c_sum * (1.0 + 1e-12);
    Ok(DetReport { dim, lambda, scale, samples, fitted_c: c1, bound_c, fitted_c_sum: c2, bound_c_sum, holds })
}
