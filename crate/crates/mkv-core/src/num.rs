//! Small numerical helpers: quadrature rules, summation, dense symmetric linear algebra.

use alloc::vec;
use alloc::vec::Vec;

use libm::{cos, erf, fabs, sqrt};

pub const PI: f64 = core::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton iteration on `P_n`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if fabs(dz) < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    (x.iter().map(|&t| c + h * t).collect(), w.iter().map(|&v| v * h).collect())
}

/// Pairwise summation; the reduction tree depends only on the length.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        let mut s = 0.0;
        for &x in v {
            s += x;
        }
        s
    } else {
        let mid = v.len() / 2;
        pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / core::f64::consts::SQRT_2))
}

/// Mass of `N(mean, var)` on `[a, b]`.
pub fn normal_interval_mass(mean: f64, var: f64, a: f64, b: f64) -> f64 {
    let s = sqrt(var);
    normal_cdf((b - mean) / s) - normal_cdf((a - mean) / s)
}

pub fn norm(x: &[f64]) -> f64 {
    sqrt(x.iter().map(|v| v * v).sum::<f64>())
}

pub fn dist2(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Cholesky factor of a symmetric `d×d` row-major matrix. `None` unless positive definite.
pub fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * d + i] = sqrt(s);
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// Inverse and determinant of an SPD matrix via Cholesky.
pub fn spd_inverse_det(a: &[f64], d: usize) -> Option<(Vec<f64>, f64)> {
    let l = cholesky(a, d)?;
    let mut det = 1.0;
    for i in 0..d {
        det *= l[i * d + i] * l[i * d + i];
    }
    let mut inv = vec![0.0; d * d];
    let mut col = vec![0.0; d];
    for c in 0..d {
        for (i, v) in col.iter_mut().enumerate() {
            *v = if i == c { 1.0 } else { 0.0 };
        }
        for i in 0..d {
            let mut s = col[i];
            for k in 0..i {
                s -= l[i * d + k] * col[k];
            }
            col[i] = s / l[i * d + i];
        }
        for i in (0..d).rev() {
            let mut s = col[i];
            for k in i + 1..d {
                s -= l[k * d + i] * col[k];
            }
            col[i] = s / l[i * d + i];
        }
        for i in 0..d {
            inv[i * d + c] = col[i];
        }
    }
    Some((inv, det))
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn det(a: &[f64], d: usize) -> f64 {
    let mut m = a.to_vec();
    let mut det = 1.0;
    for c in 0..d {
        let mut p = c;
        for r in c + 1..d {
            if fabs(m[r * d + c]) > fabs(m[p * d + c]) {
                p = r;
            }
        }
        if m[p * d + c] == 0.0 {
            return 0.0;
        }
        if p != c {
            for k in 0..d {
                m.swap(c * d + k, p * d + k);
            }
            det = -det;
        }
        let piv = m[c * d + c];
        det *= piv;
        for r in c + 1..d {
            let f = m[r * d + c] / piv;
            for k in c..d {
                m[r * d + k] -= f * m[c * d + k];
            }
        }
    }
    det
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eigenvalues(a: &[f64], d: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    for _ in 0..64 {
        let mut off = 0.0;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    off += m[i * d + j] * m[i * d + j];
                }
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = m[p * d + q];
                if fabs(apq) < 1e-300 {
                    continue;
                }
                let theta = (m[q * d + q] - m[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (fabs(theta) + sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..d {
                    let akp = m[k * d + p];
                    let akq = m[k * d + q];
                    m[k * d + p] = c * akp - s * akq;
                    m[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = m[p * d + k];
                    let aqk = m[q * d + k];
                    m[p * d + k] = c * apk - s * aqk;
                    m[q * d + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..d).map(|i| m[i * d + i]).collect()
}

/// `out = ½ σ σᵀ` for a `d×d1` row-major `σ`.
pub fn half_sigma_sigma_t(sigma: &[f64], d: usize, d1: usize, out: &mut [f64]) {
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d1 {
                s += sigma[i * d1 + k] * sigma[j * d1 + k];
            }
            out[i * d + j] = 0.5 * s;
        }
    }
}

/// Ordinary least-squares slope and intercept.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Order-preserving map over `0..n`, parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn par_map<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Order-preserving map over `0..n`, parallel when the `parallel` feature is on.
#[cfg(not(feature = "parallel"))]
pub fn par_map<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Breakpoints on `[a, b]`: `uniform` equal panels, plus geometric clustering of `depth`
/// levels on both sides of each attractor and plain breakpoints at `edges`.
pub fn graded_breaks(a: f64, b: f64, uniform: usize, attractors: &[f64], depth: usize, edges: &[f64]) -> Vec<f64> {
    let h = (b - a) / uniform as f64;
    let mut v: Vec<f64> = (0..=uniform).map(|i| a + h * i as f64).collect();
    for &c in attractors {
        if !(c >= a && c <= b) {
            continue;
        }
        v.push(c);
        let mut w = h;
        for _ in 0..depth {
            w *= 0.5;
            v.push(c - w);
            v.push(c + w);
        }
    }
    v.extend(edges.iter().copied());
    v.retain(|x| *x >= a && *x <= b && x.is_finite());
    v.sort_by(|x, y| x.partial_cmp(y).unwrap());
    v.dedup_by(|x, y| fabs(*x - *y) <= 1e-15 * (1.0 + fabs(*y)));
    v
}

/// Composite Gauss–Legendre nodes and weights over consecutive panels.
pub fn composite_rule(breaks: &[f64], base: &(Vec<f64>, Vec<f64>)) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = base;
    let mut xs = Vec::with_capacity(breaks.len() * gx.len());
    let mut ws = Vec::with_capacity(breaks.len() * gx.len());
    for p in breaks.windows(2) {
        let (c, h) = (0.5 * (p[0] + p[1]), 0.5 * (p[1] - p[0]));
        for (x, w) in gx.iter().zip(gw) {
            xs.push(c + h * x);
            ws.push(h * w);
        }
    }
    (xs, ws)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in [1usize, 4, 8, 16] {
            let (x, w) = gauss_legendre(n);
            let deg = 2 * n - 1;
            let s: f64 = x.iter().zip(&w).map(|(x, w)| w * libm::pow(*x, deg as f64 - 1.0)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((s - exact).abs() < 1e-13, "n={n}: {s} vs {exact}");
        }
    }

    #[test]
    fn spd_inverse_matches_identity() {
        let a = [2.0, 0.3, 0.3, 1.0];
        let (inv, det) = spd_inverse_det(&a, 2).unwrap();
        assert!((det - (2.0 - 0.09)).abs() < 1e-14);
        let p00 = a[0] * inv[0] + a[1] * inv[2];
        let p01 = a[0] * inv[1] + a[1] * inv[3];
        assert!((p00 - 1.0).abs() < 1e-14 && p01.abs() < 1e-14);
        assert!(spd_inverse_det(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }

    #[test]
    fn jacobi_eigenvalues() {
        let mut e = sym_eigenvalues(&[2.0, 1.0, 1.0, 2.0], 2);
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((e[0] - 1.0).abs() < 1e-12 && (e[1] - 3.0).abs() < 1e-12);
        assert!((det(&[2.0, 1.0, 1.0, 2.0], 2) - 3.0).abs() < 1e-14);
    }
}
