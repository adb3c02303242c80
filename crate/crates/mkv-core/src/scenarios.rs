//! Pinned coefficient families: calibration baselines and the four worked examples.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use libm::{cos, fabs, pow, sin, sqrt, tanh};
use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::measures::{Measure, Repr, WeightFunction};
use crate::mkv::{CoefficientSlice, MeasureModel, Mollifier, PicardConfig, ScenarioConfig, SliceCtx};
use crate::num::normal_interval_mass;
use crate::parametrix::{Regularity, SeriesConfig};
use crate::{Error, Result};

struct FnSlice<S, B> {
    sigma: S,
    drift: B,
}

impl<S, B> CoefficientSlice for FnSlice<S, B>
where
    S: Fn(&[f64], &mut [f64]) + Sync,
    B: Fn(&[f64], &mut [f64]) + Sync,
{
    fn sigma(&self, x: &[f64], out: &mut [f64]) {
        (self.sigma)(x, out)
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }
}

fn boxed<'a>(sigma: impl Fn(&[f64], &mut [f64]) + Sync + 'a, drift: impl Fn(&[f64], &mut [f64]) + Sync + 'a) -> Box<dyn CoefficientSlice + 'a> {
    Box::new(FnSlice { sigma, drift })
}

fn scalar_diag(d: usize, v: f64, out: &mut [f64]) {
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = if i == j { v } else { 0.0 };
        }
    }
}

/// `σ ≡ c·I`, `b ≡ const`.
pub struct Constant {
    pub dim: usize,
    pub sigma: f64,
    pub drift: Vec<f64>,
}

impl MeasureModel for Constant {
    fn name(&self) -> &str {
        "constant"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn regularity(&self) -> Regularity {
        let a = 0.5 * self.sigma * self.sigma;
        Regularity { lambda: a.max(1.0 / a), alpha: 1.0, n1: 0.0, n2: crate::num::norm(&self.drift), ..Regularity::default() }
    }
    fn slice<'a>(&'a self, _t: f64, _m: &'a Measure, _ctx: &SliceCtx) -> Result<Box<dyn CoefficientSlice + 'a>> {
        Ok(boxed(move |_, o| scalar_diag(self.dim, self.sigma, o), move |_, o| o[..self.dim].copy_from_slice(&self.drift)))
    }
    fn measure_free(&self) -> bool {
        true
    }
    fn drift_free(&self) -> bool {
        self.drift.iter().all(|v| *v == 0.0)
    }
    fn space_constant_sigma(&self) -> bool {
        true
    }
}

/// Ornstein–Uhlenbeck: `b = −θx`, `σ ≡ c`.
pub struct Ou {
    pub theta: f64,
    pub sigma: f64,
}

impl MeasureModel for Ou {
    fn name(&self) -> &str {
        "ou"
    }
    fn dim(&self) -> usize {
        1
    }
    fn regularity(&self) -> Regularity {
        let a = 0.5 * self.sigma * self.sigma;
        Regularity { lambda: a.max(1.0 / a), alpha: 1.0, n1: 0.0, n2: self.theta, ..Regularity::default() }
    }
    fn slice<'a>(&'a self, _t: f64, _m: &'a Measure, _ctx: &SliceCtx) -> Result<Box<dyn CoefficientSlice + 'a>> {
        Ok(boxed(move |_, o| o[0] = self.sigma, move |x, o| o[0] = -self.theta * x[0]))
    }
    fn measure_free(&self) -> bool {
        true
    }
    fn space_constant_sigma(&self) -> bool {
        true
    }
}

/// `a(x) = ½(1 + c·sin x)`, `b ≡ 0`.
pub struct HolderDiffusion {
    pub amp: f64,
}

impl MeasureModel for HolderDiffusion {
    fn name(&self) -> &str {
        "holder"
    }
    fn dim(&self) -> usize {
        1
    }
    fn regularity(&self) -> Regularity {
        let lo = 0.5 * (1.0 - self.amp);
        Regularity { lambda: (1.0 / lo).max(0.5 * (1.0 + self.amp)), alpha: 1.0, n1: 0.5 * self.amp, n2: 0.0, ..Regularity::default() }
    }
    fn slice<'a>(&'a self, _t: f64, _m: &'a Measure, _ctx: &SliceCtx) -> Result<Box<dyn CoefficientSlice + 'a>> {
        Ok(boxed(move |x, o| o[0] = sqrt(1.0 + self.amp * sin(x[0])), |_, o| o[0] = 0.0))
    }
    fn measure_free(&self) -> bool {
        true
    }
    fn drift_free(&self) -> bool {
        true
    }
}

/// `σ = 1 + ½tanh⟨cos, m⟩`, `b = ½tanh⟨sin, m⟩ − tanh x`.
pub struct Example1;

impl MeasureModel for Example1 {
    fn name(&self) -> &str {
        "example1"
    }
    fn dim(&self) -> usize {
        1
    }
    fn regularity(&self) -> Regularity {
        Regularity { lambda: 8.0, alpha: 1.0, n1: 0.0, n2: 1.5, ..Regularity::default() }
    }
    fn slice<'a>(&'a self, _t: f64, m: &'a Measure, _ctx: &SliceCtx) -> Result<Box<dyn CoefficientSlice + 'a>> {
        let c = m.pair(|x| cos(x[0]));
        let s = m.pair(|x| sin(x[0]));
        let sig = 1.0 + 0.5 * tanh(c);
        let shift = 0.5 * tanh(s);
        Ok(boxed(move |_, o| o[0] = sig, move |x, o| o[0] = shift - tanh(x[0])))
    }
    fn space_constant_sigma(&self) -> bool {
        true
    }
    fn lfd_a(&self, _t: f64, _x: &[f64], m: &Measure, y: &[f64], out: &mut [f64]) -> Result<bool> {
        // a = ½σ², σ = 1 + ½tanh(c): δa/δm = σ·½(1 − tanh²c)(cos y − c).
        let c = m.pair(|x| cos(x[0])) / m.total_mass();
        let th = tanh(c);
        out[0] = (1.0 + 0.5 * th) * 0.5 * (1.0 - th * th) * (cos(y[0]) - c);
        Ok(true)
    }
}

/// Scalar interactions: `σ = 1 + ½tanh⟨x, m⟩`, `b = ½tanh(⟨x², m⟩ − 1) − tanh x`.
pub struct Example2;

impl Example2 {
    /// `σ̄(v) = 1 + ½tanh v` at `v = ⟨p₁, m⟩`.
    pub fn sigma_bar(v: f64) -> f64 {
        1.0 + 0.5 * tanh(v)
    }

    /// `b̄(x, w) = ½tanh(w − 1) − tanh x` at `w = ⟨q₁, m⟩`.
    pub fn drift_bar(x: f64, w: f64) -> f64 {
        0.5 * tanh(w - 1.0) - tanh(x)
    }
}

impl MeasureModel for Example2 {
    fn name(&self) -> &str {
        "example2"
    }
    fn dim(&self) -> usize {
        1
    }
    fn regularity(&self) -> Regularity {
        Regularity { lambda: 8.0, alpha: 1.0, n1: 0.0, n2: 1.5, ..Regularity::default() }
    }
    fn slice<'a>(&'a self, _t: f64, m: &'a Measure, _ctx: &SliceCtx) -> Result<Box<dyn CoefficientSlice + 'a>> {
        let p1 = m.pair(|x| x[0]);
        let q1 = m.pair(|x| x[0] * x[0]);
        let sig = Self::sigma_bar(p1);
        Ok(boxed(move |_, o| o[0] = sig, move |x, o| o[0] = Self::drift_bar(x[0], q1)))
    }
    fn space_constant_sigma(&self) -> bool {
        true
    }
    fn lfd_a(&self, _t: f64, _x: &[f64], m: &Measure, y: &[f64], out: &mut [f64]) -> Result<bool> {
        let v = m.pair(|x| x[0]) / m.total_mass();
        let th = tanh(v);
        out[0] = Self::sigma_bar(v) * 0.5 * (1.0 - th * th) * (y[0] - v);
        Ok(true)
    }
}

/// `σ(t, m) = ⟨Σ_t, m⟩` with `Σ_t = λ₁` on `|x| ≤ 2√t` and `λ₂` outside.
#[derive(Debug, Clone, Copy)]
pub struct Example3 {
    pub c1: f64,
    pub c2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for Example3 {
    fn default() -> Self {
        Self::new()
    }
}

impl Example3 {
    /// Constants from the error function: `c₁ = P(|N(0,1)| ≤ 2)`, `c₂ = P(|N(0,4)| ≤ 2)`.
    pub fn new() -> Self {
        let c1 = normal_interval_mass(0.0, 1.0, -2.0, 2.0);
        let c2 = normal_interval_mass(0.0, 4.0, -2.0, 2.0);
        let lambda1 = (2.0 * c1 - c2 - 1.0) / (c1 - c2);
        let lambda2 = (2.0 * c1 - c2) / (c1 - c2);
        Self { c1, c2, lambda1, lambda2 }
    }

    /// `σ(t, m) = ⟨Σ_t, m⟩`. Mass a truncated grid density misses lies beyond the grid,
    /// hence outside `|x| ≤ 2√t`, and is charged at `λ₂`.
    pub fn sigma_of(&self, t: f64, m: &Measure) -> f64 {
        let r = 2.0 * sqrt(t.max(0.0));
        let inner = match &m.repr {
            Repr::GridDensity { grid, values } => {
                let h = grid.h(0);
                values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let lo = grid.lo[0] + i as f64 * h;
                        let ov = ((lo + h).min(r) - lo.max(-r)).max(0.0);
                        v * ov
                    })
                    .sum::<f64>()
            }
            Repr::Atoms { .. } => m.pair(|x| if fabs(x[0]) <= r { 1.0 } else { 0.0 }),
        };
        let total = if m.is_grid() { 1.0 } else { m.total_mass() };
        self.lambda1 * inner + self.lambda2 * (total - inner)
    }

    fn big_sigma(&self, t: f64, y: f64) -> f64 {
        if fabs(y) <= 2.0 * sqrt(t.max(0.0)) {
            self.lambda1
        } else {
            self.lambda2
        }
    }
}

impl MeasureModel for Example3 {
    fn name(&self) -> &str {
        "example3"
    }
    fn dim(&self) -> usize {
        1
    }
    fn regularity(&self) -> Regularity {
        let hi = 0.5 * self.lambda2 * self.lambda2;
        let lo = 0.5 * self.lambda1 * self.lambda1;
        Regularity { lambda: hi.max(1.0 / lo), alpha: 1.0, n1: 0.0, n2: 0.0, ..Regularity::default() }
    }
    fn slice<'a>(&'a self, t: f64, m: &'a Measure, _ctx: &SliceCtx) -> Result<Box<dyn CoefficientSlice + 'a>> {
        let sig = self.sigma_of(t, m);
        Ok(boxed(move |_, o| o[0] = sig, |_, o| o[0] = 0.0))
    }
    fn drift_free(&self) -> bool {
        true
    }
    fn space_constant_sigma(&self) -> bool {
        true
    }
    fn lfd_a(&self, t: f64, _x: &[f64], m: &Measure, y: &[f64], out: &mut [f64]) -> Result<bool> {
        let sig = self.sigma_of(t, m);
        out[0] = sig * (self.big_sigma(t, y[0]) - sig);
        Ok(true)
    }
}

/// Singular interaction `b(x, m) = ±∫ (x − y)|x − y|^{−κ} m(dy)` with
/// `σ(x, m) = ∫ (1 + c·cos(x − y)) m(dy)`.
#[derive(Debug, Clone, Copy)]
pub struct Example4 {
    pub kappa: f64,
    pub sign: f64,
    pub amp: f64,
}

impl Example4 {
    /// `∫_{lo}^{hi} (x − y)|x − y|^{−κ} dy`.
    fn cell_kernel(&self, x: f64, lo: f64, hi: f64) -> f64 {
        let e = 2.0 - self.kappa;
        let g = |u: f64| if e == 0.0 { libm::log(fabs(u).max(1e-300)) } else { pow(fabs(u), e) / e };
        g(x - lo) - g(x - hi)
    }

    fn sigma_value(&self, x: f64, m: &Measure) -> f64 {
        match &m.repr {
            Repr::GridDensity { grid, values } => {
                let h = grid.h(0);
                let mut acc = 0.0;
                for (i, v) in values.iter().enumerate() {
                    let lo = grid.lo[0] + i as f64 * h;
                    acc += v * (h + self.amp * (sin(x - lo) - sin(x - lo - h)));
                }
                acc / m.total_mass()
            }
            Repr::Atoms { .. } => m.pair(|y| 1.0 + self.amp * cos(x - y[0])) / m.total_mass(),
        }
    }

    fn drift_value(&self, x: f64, m: &Measure, cap: Option<Mollifier>) -> f64 {
        let v = match &m.repr {
            Repr::GridDensity { grid, values } => {
                let h = grid.h(0);
                values.iter().enumerate().map(|(i, v)| v * self.cell_kernel(x, grid.lo[0] + i as f64 * h, grid.lo[0] + (i + 1) as f64 * h)).sum()
            }
            Repr::Atoms { .. } => m.pair(|y| {
                let u = x - y[0];
                let r = cap.map_or(fabs(u), |mo| mo.distance(fabs(u)));
                if r == 0.0 {
                    0.0
                } else {
                    u / pow(r, self.kappa)
                }
            }),
        };
        self.sign * v
    }
}

impl MeasureModel for Example4 {
    fn name(&self) -> &str {
        "example4"
    }
    fn dim(&self) -> usize {
        1
    }
    fn regularity(&self) -> Regularity {
        let lo = 0.5 * (1.0 - self.amp) * (1.0 - self.amp);
        let hi = 0.5 * (1.0 + self.amp) * (1.0 + self.amp);
        Regularity { lambda: hi.max(1.0 / lo), alpha: 1.0, n1: self.amp * (1.0 + self.amp), n2: 1.0, p: 4.0, q: f64::INFINITY }
    }
    fn slice<'a>(&'a self, _t: f64, m: &'a Measure, ctx: &SliceCtx) -> Result<Box<dyn CoefficientSlice + 'a>> {
        let cap = ctx.mollify;
        Ok(boxed(move |x, o| o[0] = self.sigma_value(x[0], m), move |x, o| o[0] = self.drift_value(x[0], m, cap)))
    }
    fn lfd_a(&self, _t: f64, x: &[f64], m: &Measure, y: &[f64], out: &mut [f64]) -> Result<bool> {
        let sig = self.sigma_value(x[0], m);
        out[0] = sig * (1.0 + self.amp * cos(x[0] - y[0]) - sig);
        Ok(true)
    }
    fn singular_kernel(&self) -> Option<f64> {
        Some(self.kappa)
    }
}

/// Initial law. Every variant is compactly supported or Gaussian, so all moments are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialLaw {
    Dirac { x: Vec<f64> },
    /// Isotropic Gaussian, exact cell masses on the scenario grid.
    Gaussian { mean: Vec<f64>, var: f64 },
    Atoms { points: Vec<f64>, weights: Vec<f64> },
}

impl InitialLaw {
    pub fn to_measure(&self, grid: &Grid) -> Result<Measure> {
        match self {
            InitialLaw::Dirac { x } => Ok(Measure::dirac(x)),
            InitialLaw::Gaussian { mean, var } => {
                if !(*var > 0.0) || mean.len() != grid.dim() {
                    return Err(Error::param_out_of_range("Gaussian initial law needs var > 0 and a mean of grid dimension"));
                }
                Ok(Measure::gaussian_on_grid(grid, mean, *var))
            }
            InitialLaw::Atoms { points, weights } => Measure::atoms(grid.dim(), points.clone(), weights.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeGrid {
    /// `k/n`, `k = 1..n`.
    Uniform { n: usize },
    /// `(k/n)²`, `k = 1..n`.
    Squares { n: usize },
    Explicit { values: Vec<f64> },
}

impl TimeGrid {
    pub fn nodes(&self) -> Vec<f64> {
        match self {
            TimeGrid::Uniform { n } => (1..=*n).map(|k| k as f64 / *n as f64).collect(),
            TimeGrid::Squares { n } => (1..=*n).map(|k| pow(k as f64 / *n as f64, 2.0)).collect(),
            TimeGrid::Explicit { values } => values.clone(),
        }
    }
}

/// JSON-facing scenario description; unset fields take the family defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub initial: Option<InitialLaw>,
    pub half_width: Option<f64>,
    pub cells: Option<usize>,
    pub times: Option<TimeGrid>,
    pub series: Option<SeriesConfig>,
    pub picard: Option<PicardConfig>,
    pub weight: Option<WeightFunction>,
    pub seed: Option<u64>,
}

impl ScenarioSpec {
    pub fn named(name: &str) -> Self {
        Self { name: name.to_string(), ..Self::default() }
    }

    pub fn with_param(mut self, key: &str, v: f64) -> Self {
        self.params.insert(key.to_string(), v);
        self
    }
}

/// Library entry: name, description and the standing assumptions it meets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LibraryEntry {
    pub name: &'static str,
    pub doc: &'static str,
    /// Status of A0..A4: `"yes"`, `"no"` or `"n/a"`.
    pub assumptions: [&'static str; 5],
    pub params: &'static [&'static str],
}

pub const LIBRARY: &[LibraryEntry] = &[
    LibraryEntry { name: "constant", doc: "σ ≡ c·I, b ≡ const; Gaussian baseline", assumptions: ["yes", "yes", "yes", "n/a", "yes"], params: &["dim", "sigma", "b"] },
    LibraryEntry { name: "ou", doc: "Ornstein–Uhlenbeck b = −θx, σ ≡ c", assumptions: ["yes", "yes", "yes", "n/a", "yes"], params: &["theta", "sigma"] },
    LibraryEntry { name: "holder", doc: "a = ½(1 + c·sin x), b ≡ 0", assumptions: ["yes", "yes", "yes", "n/a", "yes"], params: &["amp"] },
    LibraryEntry { name: "example1", doc: "σ = 1 + ½tanh⟨cos, m⟩, b = ½tanh⟨sin, m⟩ − tanh x", assumptions: ["yes", "yes", "yes", "yes", "yes"], params: &[] },
    LibraryEntry { name: "example2", doc: "scalar interactions through ⟨x, m⟩ and ⟨x², m⟩", assumptions: ["yes", "yes", "yes", "yes", "yes"], params: &[] },
    LibraryEntry { name: "example3", doc: "σ(t, m) = ⟨Σ_t, m⟩, two fixed points [W] and [2W]", assumptions: ["yes", "yes", "yes", "no", "no"], params: &[] },
    LibraryEntry { name: "example4", doc: "b = ±∫(x − y)|x − y|^{−κ}m(dy), σ = ∫(1 + c·cos(x − y))m(dy)", assumptions: ["yes", "yes", "yes", "yes", "yes"], params: &["kappa", "sign", "amp"] },
];

fn param(spec: &ScenarioSpec, key: &str, default: f64) -> f64 {
    spec.params.get(key).copied().unwrap_or(default)
}

/// Builds a complete scenario from its description.
pub fn build(spec: &ScenarioSpec) -> Result<ScenarioConfig> {
    let entry = LIBRARY.iter().find(|e| e.name == spec.name).ok_or_else(|| Error::unknown_scenario(format!("unknown scenario '{}'", spec.name)))?;
    for k in spec.params.keys() {
        if !entry.params.contains(&k.as_str()) {
            return Err(Error::param_out_of_range(format!("scenario '{}' has no parameter '{k}'", spec.name)));
        }
    }
    let in_range = |key: &str, v: f64, ok: bool| if ok && v.is_finite() { Ok(v) } else { Err(Error::param_out_of_range(format!("{key} = {v} out of range"))) };
    let mut dim = 1;
    let (model, initial, half, cells, times): (Arc<dyn MeasureModel>, InitialLaw, f64, usize, TimeGrid) = match spec.name.as_str() {
        "constant" => {
            let d = param(spec, "dim", 1.0);
            if !(d == 1.0 || d == 2.0) {
                return Err(Error::param_out_of_range("dim must be 1 or 2"));
            }
            dim = d as usize;
            let sigma = param(spec, "sigma", 1.0);
            let sigma = in_range("sigma", sigma, sigma > 0.0)?;
            let b = param(spec, "b", 0.0);
            (Arc::new(Constant { dim, sigma, drift: vec![b; dim] }), InitialLaw::Dirac { x: vec![0.0; dim] }, 6.0 * sigma.max(1.0) + fabs(b), if dim == 1 { 128 } else { 48 }, TimeGrid::Uniform { n: 16 })
        }
        "ou" => {
            let theta = param(spec, "theta", 1.0);
            let sigma = param(spec, "sigma", 1.0);
            in_range("sigma", sigma, sigma > 0.0)?;
            (Arc::new(Ou { theta, sigma }), InitialLaw::Dirac { x: vec![0.0] }, 6.0, 128, TimeGrid::Uniform { n: 16 })
        }
        "holder" => {
            let amp = param(spec, "amp", 0.3);
            in_range("amp", amp, (0.0..0.9).contains(&amp))?;
            (Arc::new(HolderDiffusion { amp }), InitialLaw::Dirac { x: vec![0.0] }, 6.0, 128, TimeGrid::Uniform { n: 16 })
        }
        "example1" => (Arc::new(Example1), InitialLaw::Gaussian { mean: vec![0.5], var: 0.25 }, 6.0, 120, TimeGrid::Uniform { n: 32 }),
        "example2" => (Arc::new(Example2), InitialLaw::Gaussian { mean: vec![0.0], var: 0.25 }, 6.0, 120, TimeGrid::Uniform { n: 32 }),
        "example3" => (Arc::new(Example3::new()), InitialLaw::Dirac { x: vec![0.0] }, 8.0, 256, TimeGrid::Squares { n: 16 }),
        "example4" => {
            let kappa = param(spec, "kappa", 1.5);
            in_range("kappa", kappa, (1.0..2.0).contains(&kappa))?;
            let sign = param(spec, "sign", 1.0);
            in_range("sign", sign, sign == 1.0 || sign == -1.0)?;
            let amp = param(spec, "amp", 0.2);
            in_range("amp", amp, (0.0..0.5).contains(&amp))?;
            (Arc::new(Example4 { kappa, sign, amp }), InitialLaw::Gaussian { mean: vec![0.0], var: 0.25 }, 6.0, 96, TimeGrid::Uniform { n: 20 })
        }
        _ => unreachable!("library lookup succeeded"),
    };
    let half = spec.half_width.unwrap_or(half);
    let cells = spec.cells.unwrap_or(cells);
    if !(half > 0.0) || cells < 4 {
        return Err(Error::param_out_of_range("grid needs half_width > 0 and at least 4 cells"));
    }
    let grid = Grid::symmetric(dim, half, cells);
    let initial = spec.initial.clone().unwrap_or(initial);
    let xi = initial.to_measure(&grid)?;
    let times = spec.times.clone().unwrap_or(times).nodes();
    let sc = ScenarioConfig {
        model,
        xi,
        weight: spec.weight.unwrap_or_default(),
        times,
        grid,
        series: spec.series.clone().unwrap_or_default(),
        picard: spec.picard.unwrap_or_default(),
        seed: spec.seed.unwrap_or(0x5eed),
    };
    sc.validate()?;
    Ok(sc)
}
