use libm::{exp, sqrt};

use super::field::CoefficientField;
use crate::num::{normal_interval_mass, spd_inverse_det, PI};
use crate::{Error, Result};

/// Largest dimension handled by the fixed-size Gaussian buffers.
pub const MAX_DIM: usize = 3;

/// `p₀(z) = exp(−⟨A⁻¹z, z⟩/4) / √((4π)^d det A)` for a frozen covariance integral `A`,
/// i.e. the density of `N(0, 2A)` at the displacement `z = x − y`.
#[derive(Debug, Clone, Copy)]
pub struct FrozenGauss {
    d: usize,
    a: [f64; MAX_DIM * MAX_DIM],
    inv: [f64; MAX_DIM * MAX_DIM],
    norm: f64,
}

impl FrozenGauss {
    pub fn from_matrix(a: &[f64], d: usize) -> Result<Self> {
        if d == 0 || d > MAX_DIM {
            return Err(Error::domain("frozen Gaussian supports 1 ≤ d ≤ 3"));
        }
        let (inv_v, det) = spd_inverse_det(&a[..d * d], d).ok_or_else(|| Error::ellipticity("A_{s,t}(y) is not positive definite"))?;
        let mut inv = [0.0; MAX_DIM * MAX_DIM];
        inv[..d * d].copy_from_slice(&inv_v);
        let mut am = [0.0; MAX_DIM * MAX_DIM];
        am[..d * d].copy_from_slice(&a[..d * d]);
        let norm = 1.0 / sqrt(libm::pow(4.0 * PI, d as f64) * det);
        Ok(Self { d, a: am, inv, norm })
    }

    /// Frozen Gaussian for `(s, t, y)` using `A_{s,t}(y)` from the field.
    pub fn for_field(field: &CoefficientField, s: f64, t: f64, y: &[f64]) -> Result<Self> {
        if !(t > s) {
            return Err(Error::domain("frozen Gaussian needs s < t"));
        }
        let d = field.dim();
        let mut a = [0.0; MAX_DIM * MAX_DIM];
        field.model.integrate_diffusion(s, t, y, &mut a[..d * d]);
        Self::from_matrix(&a, d)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Entry `(i, j)` of `A`.
    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.d + j]
    }

    /// Smallest diagonal entry of `A` (a cheap width proxy).
    pub fn min_diag(&self) -> f64 {
        (0..self.d).map(|i| self.a[i * self.d + i]).fold(f64::INFINITY, f64::min)
    }

    pub fn max_diag(&self) -> f64 {
        (0..self.d).map(|i| self.a[i * self.d + i]).fold(0.0, f64::max)
    }

    #[inline]
    fn quad(&self, z: &[f64], g: &mut [f64; MAX_DIM]) -> f64 {
        let d = self.d;
        let mut q = 0.0;
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..d {
                s += self.inv[i * d + j] * z[j];
            }
            g[i] = s;
            q += s * z[i];
        }
        q
    }

    #[inline]
    pub fn value(&self, z: &[f64]) -> f64 {
        let mut g = [0.0; MAX_DIM];
        self.norm * exp(-0.25 * self.quad(z, &mut g))
    }

    /// Value, gradient and Hessian in the start variable `x` at `z = x − y`.
    #[inline]
    pub fn derivatives(&self, z: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let d = self.d;
        let mut g = [0.0; MAX_DIM];
        let p = self.norm * exp(-0.25 * self.quad(z, &mut g));
        for i in 0..d {
            grad[i] = -0.5 * g[i] * p;
            for j in 0..d {
                hess[i * d + j] = (0.25 * g[i] * g[j] - 0.5 * self.inv[i * d + j]) * p;
            }
        }
        p
    }

    /// `(L − L₀)p₀` given `a(τ, x)`, `a(τ, y)`, `b(τ, x)` and `z = x − y`.
    #[inline]
    pub fn phi(&self, a_x: &[f64], a_y: &[f64], b_x: &[f64], z: &[f64]) -> f64 {
        let d = self.d;
        let mut g = [0.0; MAX_DIM];
        let p = self.norm * exp(-0.25 * self.quad(z, &mut g));
        if p == 0.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..d {
            acc += -0.5 * b_x[i] * g[i];
            for j in 0..d {
                let da = a_x[i * d + j] - a_y[i * d + j];
                if da != 0.0 {
                    acc += da * (0.25 * g[i] * g[j] - 0.5 * self.inv[i * d + j]);
                }
            }
        }
        acc * p
    }

    /// Average of `p₀(x − ·)` over the cell `[lo, hi]` (one dimension).
    pub fn cell_average_1d(&self, x: f64, lo: f64, hi: f64) -> f64 {
        normal_interval_mass(x, 2.0 * self.a[0], lo, hi) / (hi - lo)
    }
}

/// `p₀(s, x; t, y)` with `A = A_{s,t}(y)`.
pub fn frozen_gaussian(field: &CoefficientField, s: f64, x: &[f64], t: f64, y: &[f64]) -> Result<f64> {
    let g = FrozenGauss::for_field(field, s, t, y)?;
    let z: alloc::vec::Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    Ok(g.value(&z))
}

/// `Φ(s, x; t, y) = (a(s,x) − a(s,y)) : ∂²ₓp₀ + b(s,x)·∂ₓp₀`.
pub fn parametrix_term(field: &CoefficientField, s: f64, x: &[f64], t: f64, y: &[f64]) -> Result<f64> {
    let d = field.dim();
    let g = FrozenGauss::for_field(field, s, t, y)?;
    let mut ax = [0.0; MAX_DIM * MAX_DIM];
    let mut ay = [0.0; MAX_DIM * MAX_DIM];
    let mut bx = [0.0; MAX_DIM];
    field.diffusion(s, x, &mut ax[..d * d]);
    field.diffusion(s, y, &mut ay[..d * d]);
    field.drift(s, x, &mut bx[..d]);
    let z: alloc::vec::Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    Ok(g.phi(&ax[..d * d], &ay[..d * d], &bx[..d], &z))
}

#[cfg(test)]
mod tests {
    use super::super::field::{FnModel, Regularity};
    use super::*;

    #[test]
    fn standard_heat_kernel() {
        let f = CoefficientField::constant(1, 0.5);
        for (t, x, y) in [(1.0, 0.0, 0.0), (0.3, 0.2, -0.7), (2.0, 1.0, 3.0)] {
            let p = frozen_gaussian(&f, 0.0, &[x], t, &[y]).unwrap();
            let exact = (-(x - y) * (x - y) / (2.0 * t)).exp() / (2.0 * PI * t).sqrt();
            assert!((p - exact).abs() < 1e-15 * exact.max(1.0), "{p} vs {exact}");
        }
        let f2 = CoefficientField::constant(2, 0.5);
        let p = frozen_gaussian(&f2, 0.0, &[0.0, 0.0], 1.0, &[0.0, 0.0]).unwrap();
        assert!((p - 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn time_dependent_diffusion() {
        let model = FnModel::new(1, |t, _, o: &mut [f64]| o[0] = 0.5 * (1.0 + t), |_, _, _| {}).drift_free().space_constant();
        let f = CoefficientField::new(model, Regularity::default());
        let t = 0.8;
        // A_{0,t} = (t/2)(1 + t/2); N(x, t(1 + t/2)).
        let var = t * (1.0 + t / 2.0);
        let p = frozen_gaussian(&f, 0.0, &[0.3], t, &[-0.4]).unwrap();
        let exact = (-(0.7f64).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
        assert!((p - exact).abs() < 1e-14);
    }

    #[test]
    fn phi_matches_symbolic_derivative() {
        let c = 0.7;
        let model = FnModel::new(1, |_, _, o: &mut [f64]| o[0] = 0.5, move |_, _, o: &mut [f64]| o[0] = c);
        let f = CoefficientField::new(model, Regularity::default());
        let (t, x, y) = (0.4, 0.9, 0.1);
        let phi = parametrix_term(&f, 0.0, &[x], t, &[y]).unwrap();
        // ∂ₓ of (2πt)^{-1/2} e^{-(x−y)²/2t} is −(x−y)/t times the density.
        let dens = (-(x - y) * (x - y) / (2.0 * t)).exp() / (2.0 * PI * t).sqrt();
        let exact = c * (-(x - y) / t) * dens;
        assert!((phi - exact).abs() < 1e-14, "{phi} vs {exact}");
        // Constant a, no drift: Φ ≡ 0; and x = y kills the diffusion part.
        assert_eq!(parametrix_term(&CoefficientField::constant(1, 0.5), 0.0, &[0.3], 1.0, &[0.0]).unwrap(), 0.0);
        let holder = FnModel::new(1, |_, x: &[f64], o: &mut [f64]| o[0] = 0.5 + 0.1 * libm::sin(x[0]), |_, _, _| {}).drift_free();
        let fh = CoefficientField::new(holder, Regularity::default());
        assert_eq!(parametrix_term(&fh, 0.0, &[0.4], 1.0, &[0.4]).unwrap(), 0.0);
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let a = [0.6, 0.1, 0.1, 0.4];
        let g = FrozenGauss::from_matrix(&a, 2).unwrap();
        let z = [0.3, -0.2];
        let (mut gr, mut he) = ([0.0; 2], [0.0; 4]);
        g.derivatives(&z, &mut gr, &mut he);
        let h = 1e-5;
        for i in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[i] += h;
            zm[i] -= h;
            let fd = (g.value(&zp) - g.value(&zm)) / (2.0 * h);
            assert!((fd - gr[i]).abs() < 1e-8);
            let mut gp = [0.0; 2];
            let mut gm = [0.0; 2];
            let mut tmp = [0.0; 4];
            g.derivatives(&zp, &mut gp, &mut tmp);
            g.derivatives(&zm, &mut gm, &mut tmp);
            for j in 0..2 {
                assert!(((gp[j] - gm[j]) / (2.0 * h) - he[j * 2 + i]).abs() < 1e-7);
            }
        }
        assert_eq!(FrozenGauss::from_matrix(&[1.0, 2.0, 2.0, 1.0], 2).unwrap_err().kind, crate::ErrorKind::EllipticityError);
    }
}
