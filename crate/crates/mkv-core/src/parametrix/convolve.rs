use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use libm::{fabs, log};

use super::engine::{fit_partner, tau_weights};
use super::kernel::KernelGrid;
use crate::num::par_map;
use crate::{Error, Result};

/// Value used for `∫ p(s, x; τ, z) q(τ, z; t, y) dz` as `τ → s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartLimit {
    Zero,
    /// `p(s, x; τ, ·) → δ_x`, so the limit is `q(s, x; t, y)`.
    Delta,
    /// Constant continuation of the first node.
    Extrapolate,
}

/// `(p ⊗ q)(s, x; t, y) = ∫ₛᵗ ∫ p(s, x; τ, z) q(τ, z; t, y) dz dτ` at every `t` of `p`.
///
/// `τ` runs over the earlier nodes of `p`; the product trapezoid rule absorbs a
/// `(t − τ)^e` singularity of `q` with `e` fitted from the last node and an earlier one.
pub fn spacetime_convolve<Q>(p: &KernelGrid, q: Q, start: StartLimit) -> Result<KernelGrid>
where
    Q: Fn(f64, &[f64], f64, &[f64]) -> f64 + Sync + Send,
{
    p.validate()?;
    let grid = &p.grid;
    let d = grid.dim();
    let ny = grid.len();
    let nx = p.n_x();
    let vol = grid.cell_volume();
    let centres = grid.centers();
    let kn = p.t_nodes.len();
    let mut values = vec![0.0; kn * nx * ny];
    for k in 0..kn {
        let tk = p.t_nodes[k];
        // Kernel of q towards t_k, tabulated per τ node: q(τ_j, z; t_k, y).
        let s_vals: Vec<Vec<f64>> = (0..k)
            .map(|j| {
                let tj = p.t_nodes[j];
                let cols = par_map(ny, |y| {
                    let yc = &centres[y * d..(y + 1) * d];
                    let qz: Vec<f64> = (0..ny).map(|z| q(tj, &centres[z * d..(z + 1) * d], tk, yc)).collect();
                    (0..nx).map(|i| vol * crate::num::pairwise_sum(&p.slice(j, i).iter().zip(&qz).map(|(a, b)| a * b).collect::<Vec<_>>())).collect::<Vec<f64>>()
                });
                let mut s = vec![0.0; nx * ny];
                for (y, c) in cols.into_iter().enumerate() {
                    for i in 0..nx {
                        s[i * ny + y] = c[i];
                    }
                }
                s
            })
            .collect();
        let f_start: Vec<f64> = match start {
            StartLimit::Zero => vec![0.0; nx * ny],
            StartLimit::Delta => (0..nx * ny).map(|iy| q(p.s, p.x(iy / ny), tk, &centres[(iy % ny) * d..(iy % ny + 1) * d])).collect(),
            StartLimit::Extrapolate if k > 0 => s_vals[0].clone(),
            StartLimit::Extrapolate => vec![0.0; nx * ny],
        };
        let dists: Vec<f64> = (0..k).map(|j| tk - p.t_nodes[j]).collect();
        let e = if let Some(i) = fit_partner(&dists) {
            let l1 = |v: &Vec<f64>| v.iter().map(|x| fabs(*x)).sum::<f64>();
            let (na, nb) = (l1(&s_vals[i]), l1(&s_vals[k - 1]));
            if na > 0.0 && nb > 0.0 {
                let raw = log(nb / na) / log(dists[k - 1] / dists[i]);
                if raw < -1.05 {
                    return Err(Error::non_integrable(format!("endpoint exponent {raw:.3} at t = {tk}")));
                }
                raw.clamp(-0.95, 0.0)
            } else {
                0.0
            }
        } else {
            0.0
        };
        let w = tau_weights(tk - p.s, &dists, e);
        let out = &mut values[k * nx * ny..(k + 1) * nx * ny];
        for (o, f) in out.iter_mut().zip(&f_start) {
            *o = w[0] * f;
        }
        for (j, s) in s_vals.iter().enumerate() {
            for (o, f) in out.iter_mut().zip(s) {
                *o += w[j + 1] * f;
            }
        }
    }
    Ok(KernelGrid { values, ..p.clone() })
}

/// `∫ p(s, x; τ, z) q(τ, z; t, y) dz` for `p` at node `k1` and `q` at node `k2`, where the
/// start points of `q` are the grid centres. Returns `[x][y]`.
pub fn chapman_kolmogorov(p: &KernelGrid, k1: usize, q: &KernelGrid, k2: usize) -> Result<Vec<f64>> {
    if !p.grid.same_as(&q.grid) || q.x_points.len() != p.grid.len() * p.dim() {
        return Err(Error::grid_mismatch("second kernel must start from every grid centre"));
    }
    if fabs(q.s - p.t_nodes[k1]) > 1e-12 {
        return Err(Error::domain("kernels do not meet in time"));
    }
    let ny = p.grid.len();
    let vol = p.grid.cell_volume();
    let nx = p.n_x();
    let mut out = vec![0.0; nx * ny];
    let rows = par_map(nx, |i| {
        let pi = p.slice(k1, i);
        let mut acc = vec![0.0; ny];
        for (z, pz) in pi.iter().enumerate() {
            if *pz == 0.0 {
                continue;
            }
            for (a, qv) in acc.iter_mut().zip(q.slice(k2, z)) {
                *a += vol * pz * qv;
            }
        }
        acc
    });
    for (i, r) in rows.into_iter().enumerate() {
        out[i * ny..(i + 1) * ny].copy_from_slice(&r);
    }
    Ok(out)
}
