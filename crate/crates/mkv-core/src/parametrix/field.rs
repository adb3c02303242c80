use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use libm::{fabs, pow, sqrt};
use serde::{Deserialize, Serialize};

use crate::num::{gauss_legendre_on, sym_eigenvalues};
use crate::{Error, Result};

/// Coefficients `a(t, x)` (symmetric `d×d`, row-major) and `b(t, x)` of
/// `L = a_ij ∂_ij + b_i ∂_i`.
pub trait LinearModel: Send + Sync {
    fn dim(&self) -> usize;
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]);
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);

    /// `A_{s,t}(x) = ∫ₛᵗ a(τ, x) dτ`; 8-node Gauss–Legendre by default.
    fn integrate_diffusion(&self, s: f64, t: f64, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let (nodes, weights) = gauss_legendre_on(8, s, t);
        out[..d * d].iter_mut().for_each(|v| *v = 0.0);
        let mut a = vec![0.0; d * d];
        for (tau, w) in nodes.iter().zip(&weights) {
            self.diffusion(*tau, x, &mut a);
            for (o, v) in out.iter_mut().zip(&a) {
                *o += w * v;
            }
        }
    }

    fn drift_free(&self) -> bool {
        false
    }

    /// `a(t, x)` does not depend on `x`.
    fn space_constant_diffusion(&self) -> bool {
        false
    }

    fn singular_points(&self) -> Vec<Vec<f64>> {
        Vec::new()
    }
}

type MatFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

/// [`LinearModel`] built from closures.
pub struct FnModel {
    dim: usize,
    a: Box<MatFn>,
    b: Box<MatFn>,
    drift_free: bool,
    space_constant: bool,
    singular: Vec<Vec<f64>>,
}

impl FnModel {
    pub fn new(
        dim: usize,
        a: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        b: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self { dim, a: Box::new(a), b: Box::new(b), drift_free: false, space_constant: false, singular: Vec::new() }
    }

    pub fn drift_free(mut self) -> Self {
        self.drift_free = true;
        self
    }

    pub fn space_constant(mut self) -> Self {
        self.space_constant = true;
        self
    }

    pub fn singular_at(mut self, x: Vec<f64>) -> Self {
        self.singular.push(x);
        self
    }
}

impl LinearModel for FnModel {
    fn dim(&self) -> usize {
        self.dim
    }
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.a)(t, x, out)
    }
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        if self.drift_free {
            out[..self.dim].iter_mut().for_each(|v| *v = 0.0);
        } else {
            (self.b)(t, x, out)
        }
    }
    fn drift_free(&self) -> bool {
        self.drift_free
    }
    fn space_constant_diffusion(&self) -> bool {
        self.space_constant
    }
    fn singular_points(&self) -> Vec<Vec<f64>> {
        self.singular.clone()
    }
}

/// Declared regularity: ellipticity `Λ`, Hölder exponent `α` with seminorm bound `N₁`,
/// drift norm bound `N₂` in `𝓛^p_q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularity {
    pub lambda: f64,
    pub alpha: f64,
    pub n1: f64,
    pub n2: f64,
    pub p: f64,
    pub q: f64,
}

impl Default for Regularity {
    fn default() -> Self {
        Self { lambda: 2.0, alpha: 1.0, n1: 1.0, n2: 1.0, p: f64::INFINITY, q: f64::INFINITY }
    }
}

impl Regularity {
    /// `γ₀ = 1 − d/p − 2/q`.
    pub fn gamma0(&self, d: usize) -> f64 {
        1.0 - d as f64 / self.p - 2.0 / self.q
    }
}

#[derive(Clone)]
pub struct CoefficientField {
    pub model: Arc<dyn LinearModel>,
    pub reg: Regularity,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField").field("dim", &self.dim()).field("reg", &self.reg).finish()
    }
}

/// Admissibility findings on a sample lattice.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Admissibility {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub holder_quotient: f64,
    pub index: f64,
}

impl CoefficientField {
    pub fn new(model: impl LinearModel + 'static, reg: Regularity) -> Self {
        Self { model: Arc::new(model), reg }
    }

    /// `a ≡ c·I`, `b ≡ 0`.
    pub fn constant(dim: usize, c: f64) -> Self {
        let model = FnModel::new(
            dim,
            move |_, _, out: &mut [f64]| {
                for i in 0..dim {
                    for j in 0..dim {
                        out[i * dim + j] = if i == j { c } else { 0.0 };
                    }
                }
            },
            |_, _, _| {},
        )
        .drift_free()
        .space_constant();
        let lambda = c.max(1.0 / c);
        Self::new(model, Regularity { lambda, alpha: 1.0, n1: 0.0, n2: 0.0, ..Regularity::default() })
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.model.diffusion(t, x, out)
    }

    pub fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.model.drift(t, x, out)
    }

    /// True when the parametrix series collapses to `p₀`.
    pub fn is_gaussian(&self) -> bool {
        self.model.drift_free() && self.model.space_constant_diffusion()
    }

    /// Checks ellipticity, the Hölder quotient and the index condition on a lattice of
    /// `n_t × n_x^d` points over `[-half, half]^d`.
    pub fn validate(&self, half: f64, n_t: usize, n_x: usize) -> Result<Admissibility> {
        let d = self.dim();
        let index = d as f64 / self.reg.p + 2.0 / self.reg.q;
        if !(index < 1.0) {
            return Err(Error::index_set("drift indices must satisfy d/p + 2/q < 1"));
        }
        let pts = lattice(d, half, n_x);
        let mut a = vec![0.0; d * d];
        let (mut lo, mut hi, mut hq) = (f64::INFINITY, 0.0f64, 0.0f64);
        for it in 0..n_t.max(1) {
            let t = if n_t <= 1 { 0.5 } else { it as f64 / (n_t - 1) as f64 };
            let vals: Vec<Vec<f64>> = pts
                .iter()
                .map(|x| {
                    self.diffusion(t, x, &mut a);
                    a.clone()
                })
                .collect();
            for av in &vals {
                for e in sym_eigenvalues(av, d) {
                    lo = lo.min(e);
                    hi = hi.max(e);
                }
            }
            for i in 0..pts.len() {
                for j in i + 1..pts.len() {
                    let dist = sqrt(crate::num::dist2(&pts[i], &pts[j]));
                    let diff = vals[i].iter().zip(&vals[j]).map(|(u, v)| fabs(u - v)).fold(0.0, f64::max);
                    hq = hq.max(diff / pow(dist, self.reg.alpha));
                }
            }
        }
        let lam = self.reg.lambda;
        if !(lo >= 1.0 / lam - 1e-12 && hi <= lam + 1e-12) {
            return Err(Error::ellipticity("eigenvalues of a leave [1/Λ, Λ]"));
        }
        if hq > self.reg.n1 * (1.0 + 1e-6) + 1e-12 {
            return Err(Error::assumption("Hölder quotient of a exceeds N1"));
        }
        Ok(Admissibility { min_eigenvalue: lo, max_eigenvalue: hi, holder_quotient: hq, index })
    }
}

fn lattice(d: usize, half: f64, n: usize) -> Vec<Vec<f64>> {
    let ax: Vec<f64> = (0..n).map(|i| -half + 2.0 * half * i as f64 / (n.max(2) - 1) as f64).collect();
    if d == 1 {
        ax.iter().map(|x| vec![*x]).collect()
    } else {
        ax.iter().flat_map(|x| ax.iter().map(move |y| vec![*x, *y])).collect()
    }
}
