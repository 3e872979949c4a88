//! Lévy measures, Lévy triplets and the integrals taken against them.
//!
//! The truncation convention is fixed to the indicator of `|y| < 1`: the
//! characteristic exponent of a triplet `(b, Q, ν)` is
//!
//! ```text
//! ψ(ξ) = -i b·ξ + ½ ξ·Qξ + ∫ (1 - e^{i y·ξ} + i y·ξ 1_{(0,1)}(|y|)) ν(dy)
//! ```
//!
//! A measure is a finite list of atoms, an optional absolutely continuous
//! part from a small set of registered families (or a user closure with a
//! declared envelope) and, on the line, an optional symmetric power-law
//! part `scale·|y|^{-1-α}`. Restrictions to balls and to their complements
//! are stored as a radial window so that closed forms stay available.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::f64::consts::PI;
use core::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{dim, invalid, Error, Result};
use crate::quad::{integrate, integrate_radial, Estimate, QuadValue, QuadratureSpec};

/// Surface measure of the unit sphere in `ℝ^k`.
pub(crate) fn sphere_area(k: usize) -> f64 {
    let half = k as f64 / 2.0;
    2.0 * PI.powf(half) / libm::tgamma(half)
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `1 - e^{iu} + iu·[inside]` without cancellation for small `u`.
pub(crate) fn lk_kernel(u: f64, inside: bool) -> Complex64 {
    let half = 0.5 * u;
    let s = half.sin();
    let re = 2.0 * s * s;
    let im = if inside {
        if u.abs() < 1e-2 {
            let u2 = u * u;
            u * u2 / 6.0 * (1.0 - u2 / 20.0 * (1.0 - u2 / 42.0))
        } else {
            u - u.sin()
        }
    } else {
        -u.sin()
    };
    Complex64::new(re, im)
}

/// A point mass of the jump measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub point: Vec<f64>,
    pub mass: f64,
}

/// Symmetric one-dimensional power-law density `scale·|y|^{-1-α}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StablePart {
    pub alpha: f64,
    pub scale: f64,
}

impl StablePart {
    pub fn new(alpha: f64, scale: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(invalid("stable index must lie in (0, 2)"));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid("stable scale must be positive"));
        }
        Ok(Self { alpha, scale })
    }

    /// The scale for which the exponent equals `|ξ|^α`.
    pub fn normalized(alpha: f64) -> Result<Self> {
        Self::new(alpha, 1.0 / Self::exponent_constant(alpha))
    }

    /// `∫ (1 - cos y) |y|^{-1-α} dy = π / (Γ(1+α) sin(πα/2))`.
    pub fn exponent_constant(alpha: f64) -> f64 {
        PI / (libm::tgamma(1.0 + alpha) * (0.5 * PI * alpha).sin())
    }

    pub fn density(&self, r: f64) -> f64 {
        self.scale * r.abs().powf(-1.0 - self.alpha)
    }

    /// One-sided mass of `lo < |y| ≤ hi`.
    pub fn side_mass(&self, lo: f64, hi: f64) -> f64 {
        if !(hi > lo) {
            return 0.0;
        }
        let a = self.alpha;
        let upper = if hi.is_infinite() { 0.0 } else { hi.powf(-a) };
        self.scale / a * (lo.powf(-a) - upper)
    }

    /// One-sided `∫_{lo<|y|≤hi} |y|^2`.
    pub fn side_second_moment(&self, lo: f64, hi: f64) -> f64 {
        if !(hi > lo) {
            return 0.0;
        }
        let p = 2.0 - self.alpha;
        self.scale / p * (hi.powf(p) - lo.powf(p))
    }
}

/// Declared bound `density(y) ≤ C |y|^{-k-p0}` near zero and `≤ C |y|^{-k-p∞}` at infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub constant: f64,
    pub near_exponent: f64,
    pub far_exponent: f64,
}

impl Envelope {
    fn bound(&self, r: f64, k: usize) -> f64 {
        let p = if r <= 1.0 { self.near_exponent } else { self.far_exponent };
        self.constant * r.powf(-(k as f64) - p)
    }
}

pub type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Registered absolutely continuous families.
#[derive(Clone)]
pub enum DensityKind {
    /// `scale·e^{-rate|y|}` on the line.
    Exponential { scale: f64, rate: f64 },
    /// `scale·e^{-rate|y|}|y|^{-1-α}` on the line.
    TemperedStable { alpha: f64, scale: f64, rate: f64 },
    /// `mass` times a product normal density with the given means and deviations.
    Gaussian {
        mean: Vec<f64>,
        std: Vec<f64>,
        mass: f64,
    },
    /// User density with a declared envelope.
    Custom {
        dim: usize,
        label: String,
        f: DensityFn,
        envelope: Envelope,
        finite: bool,
    },
}

impl fmt::Debug for DensityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exponential { scale, rate } => f
                .debug_struct("Exponential")
                .field("scale", scale)
                .field("rate", rate)
                .finish(),
            Self::TemperedStable { alpha, scale, rate } => f
                .debug_struct("TemperedStable")
                .field("alpha", alpha)
                .field("scale", scale)
                .field("rate", rate)
                .finish(),
            Self::Gaussian { mean, std, mass } => f
                .debug_struct("Gaussian")
                .field("mean", mean)
                .field("std", std)
                .field("mass", mass)
                .finish(),
            Self::Custom { dim, label, envelope, finite, .. } => f
                .debug_struct("Custom")
                .field("dim", dim)
                .field("label", label)
                .field("envelope", envelope)
                .field("finite", finite)
                .finish(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Density {
    kind: DensityKind,
}

impl Density {
    pub fn new(kind: DensityKind) -> Result<Self> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        match &kind {
            DensityKind::Exponential { scale, rate } => {
                if !positive(*scale) || !positive(*rate) {
                    return Err(invalid("exponential density needs positive scale and rate"));
                }
            }
            DensityKind::TemperedStable { alpha, scale, rate } => {
                if !(*alpha > 0.0 && *alpha < 2.0) || !positive(*scale) || !positive(*rate) {
                    return Err(invalid("tempered stable density needs alpha in (0,2), positive scale and rate"));
                }
            }
            DensityKind::Gaussian { mean, std, mass } => {
                if mean.is_empty() || mean.len() != std.len() {
                    return Err(dim("gaussian mean and std must have equal positive length"));
                }
                if !std.iter().all(|s| positive(*s)) || !positive(*mass) {
                    return Err(invalid("gaussian density needs positive deviations and mass"));
                }
            }
            DensityKind::Custom { dim: k, envelope, .. } => {
                if *k == 0 {
                    return Err(dim("custom density dimension must be positive"));
                }
                if !positive(envelope.constant) || !(envelope.far_exponent > 0.0) {
                    return Err(invalid("custom density envelope needs C > 0 and p_inf > 0"));
                }
            }
        }
        Ok(Self { kind })
    }

    pub fn kind(&self) -> &DensityKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            DensityKind::Exponential { .. } | DensityKind::TemperedStable { .. } => 1,
            DensityKind::Gaussian { mean, .. } => mean.len(),
            DensityKind::Custom { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        match &self.kind {
            DensityKind::Exponential { scale, rate } => scale * (-rate * y[0].abs()).exp(),
            DensityKind::TemperedStable { alpha, scale, rate } => {
                let r = y[0].abs();
                scale * (-rate * r).exp() * r.powf(-1.0 - alpha)
            }
            DensityKind::Gaussian { mean, std, mass } => {
                let mut q = 0.0;
                let mut norm_c = 1.0;
                for ((yi, m), s) in y.iter().zip(mean).zip(std) {
                    let z = (yi - m) / s;
                    q += z * z;
                    norm_c *= s * (2.0 * PI).sqrt();
                }
                mass * (-0.5 * q).exp() / norm_c
            }
            DensityKind::Custom { f, .. } => f(y),
        }
    }

    /// Whether the density has infinite total mass near the origin.
    pub fn infinite_activity(&self) -> bool {
        match &self.kind {
            DensityKind::Exponential { .. } | DensityKind::Gaussian { .. } => false,
            DensityKind::TemperedStable { .. } => true,
            DensityKind::Custom { finite, .. } => !finite,
        }
    }

    pub fn envelope(&self) -> Envelope {
        match &self.kind {
            // e^{-λr} ≤ (p/λ)^p e^{-p} r^{-p}, with the far exponent p - 1 on the line.
            DensityKind::Exponential { scale, rate } => {
                let p = 9.0;
                Envelope {
                    constant: scale * (p / (core::f64::consts::E * rate)).powf(p).max(1.0),
                    near_exponent: -1.0,
                    far_exponent: p - 1.0,
                }
            }
            DensityKind::TemperedStable { alpha, scale, rate } => {
                let p = 8.0;
                Envelope {
                    constant: scale * (p / (core::f64::consts::E * rate)).powf(p).max(1.0),
                    near_exponent: *alpha,
                    far_exponent: alpha + p,
                }
            }
            DensityKind::Gaussian { mean, std, mass } => {
                let k = mean.len() as f64;
                let peak = self.eval(mean);
                let reach = norm(mean) + 10.0 * std.iter().cloned().fold(0.0, f64::max);
                Envelope {
                    constant: mass.max(peak * reach.powf(k + 4.0)).max(peak),
                    near_exponent: -k,
                    far_exponent: 4.0,
                }
            }
            DensityKind::Custom { envelope, .. } => *envelope,
        }
    }

    /// A radius beyond which the density carries total mass at most `tol`.
    pub fn tail_radius(&self, tol: f64) -> f64 {
        let tol = tol.max(1e-300);
        match &self.kind {
            DensityKind::Exponential { scale, rate } => {
                (2.0 * scale / (rate * tol)).ln().max(0.0) / rate + 1.0 / rate
            }
            DensityKind::TemperedStable { alpha, scale, rate } => {
                // Beyond R ≥ 1 the tail is below 2 s e^{-λR} / λ.
                let _ = alpha;
                1.0 + (2.0 * scale / (rate * tol)).ln().max(0.0) / rate
            }
            DensityKind::Gaussian { mean, std, mass } => {
                let k = mean.len() as f64;
                let smax = std.iter().cloned().fold(0.0, f64::max);
                let z = (2.0 * (2.0 * k * mass / tol).max(1.0).ln()).sqrt();
                k.sqrt() * (mean.iter().map(|m| m.abs()).fold(0.0, f64::max) + smax * (z + 1.0))
            }
            DensityKind::Custom { dim: k, envelope, .. } => {
                let c = envelope.constant * sphere_area(*k);
                let p = envelope.far_exponent;
                (c / (p * tol)).powf(1.0 / p).max(1.0)
            }
        }
    }

    /// A radius `ε` with `∫_{|y|<ε} |y|^2 density ≤ tol`.
    pub fn near_radius(&self, tol: f64) -> f64 {
        match &self.kind {
            DensityKind::TemperedStable { alpha, scale, .. } => {
                let p = 2.0 - alpha;
                (tol * p / (2.0 * scale)).powf(1.0 / p).min(1.0)
            }
            DensityKind::Custom { dim: k, envelope, .. } => {
                let c = envelope.constant * sphere_area(*k);
                let p = 2.0 - envelope.near_exponent;
                if p <= 0.0 {
                    0.0
                } else {
                    (tol * p / c).powf(1.0 / p).min(1.0)
                }
            }
            _ => 0.0,
        }
    }
}

/// Restriction of a measure to `lo < |y| ≤ hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub const FULL: Window = Window { lo: 0.0, hi: f64::INFINITY };

    pub fn contains(&self, r: f64) -> bool {
        r > self.lo && r <= self.hi
    }

    pub fn is_full(&self) -> bool {
        self.lo == 0.0 && self.hi.is_infinite()
    }
}

/// A σ-finite jump measure on `ℝ^k \ {0}`.
#[derive(Debug, Clone)]
pub struct LevyMeasure {
    dim: usize,
    atoms: Vec<Atom>,
    density: Option<Density>,
    stable: Option<StablePart>,
    window: Window,
}

impl LevyMeasure {
    /// The zero measure on `ℝ^k`.
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            atoms: Vec::new(),
            density: None,
            stable: None,
            window: Window::FULL,
        }
    }

    pub fn with_atom(mut self, point: Vec<f64>, mass: f64) -> Result<Self> {
        if point.len() != self.dim {
            return Err(dim("atom dimension differs from measure dimension"));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(invalid("atom masses must be positive and finite"));
        }
        let r = norm(&point);
        if r == 0.0 || !r.is_finite() {
            return Err(invalid("atoms must sit away from the origin at finite points"));
        }
        if self.window.contains(r) {
            self.atoms.push(Atom { point, mass });
        }
        Ok(self)
    }

    pub fn with_density(mut self, density: Density) -> Result<Self> {
        if density.dim() != self.dim {
            return Err(dim("density dimension differs from measure dimension"));
        }
        self.density = Some(density);
        Ok(self)
    }

    pub fn with_stable(mut self, stable: StablePart) -> Result<Self> {
        if self.dim != 1 {
            return Err(Error::Unsupported("stable part is only available on the line".into()));
        }
        self.stable = Some(stable);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }
    pub fn density(&self) -> Option<&Density> {
        self.density.as_ref()
    }
    pub fn stable(&self) -> Option<&StablePart> {
        self.stable.as_ref()
    }
    pub fn window(&self) -> Window {
        self.window
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty() && self.density.is_none() && self.stable.is_none()
    }

    /// Infinite total mass (in every neighbourhood of the origin).
    pub fn infinite_activity(&self) -> bool {
        self.window.lo == 0.0
            && (self.stable.is_some() || self.density.as_ref().is_some_and(|d| d.infinite_activity()))
    }

    pub fn has_continuous_part(&self) -> bool {
        self.density.is_some() || self.stable.is_some()
    }

    /// Restriction to the closed ball `|y| ≤ r`.
    pub fn restrict_ball(&self, r: f64) -> Self {
        let mut out = self.clone();
        out.window.hi = out.window.hi.min(r);
        out.atoms.retain(|a| out.window.contains(norm(&a.point)));
        out
    }

    /// Restriction to `|y| > r`, the complement of the closed ball.
    pub fn restrict_tail(&self, r: f64) -> Self {
        let mut out = self.clone();
        out.window.lo = out.window.lo.max(r);
        out.atoms.retain(|a| out.window.contains(norm(&a.point)));
        out
    }

    /// Restriction to the shell `lo < |y| ≤ hi`.
    pub fn restrict_shell(&self, lo: f64, hi: f64) -> Self {
        self.restrict_tail(lo).restrict_ball(hi)
    }

    /// `∫ g dν` over the absolutely continuous parts, restricted further to
    /// `lo < |y| ≤ hi`. The power-law part is included when `with_stable`.
    pub(crate) fn integrate_continuous<T: QuadValue>(
        &self,
        g: &Integrand<'_, T>,
        lo: f64,
        hi: f64,
        with_stable: bool,
        spec: &QuadratureSpec,
    ) -> Result<Estimate<T>> {
        let stable = if with_stable { self.stable } else { None };
        let density = self.density.as_ref();
        if stable.is_none() && density.is_none() {
            return Ok(Estimate::zero());
        }
        let lo = lo.max(self.window.lo);
        let hi = hi.min(self.window.hi);
        if !(hi > lo) {
            return Ok(Estimate::zero());
        }
        let tol = spec.abs_tol;
        let cut_tol = tol / 8.0;

        // Near-zero cut for infinite-activity parts.
        let infinite = stable.is_some() || density.is_some_and(|d| d.infinite_activity());
        let mut start = lo;
        if infinite && lo == 0.0 {
            if !g.quad_coef.is_finite() {
                return Err(Error::Domain(
                    "integrand does not vanish at the origin against an infinite measure".into(),
                ));
            }
            let mut eps = spec.split_radius.min(1.0);
            if g.quad_coef > 0.0 {
                let budget = cut_tol / g.quad_coef;
                if let Some(s) = stable {
                    let p = 2.0 - s.alpha;
                    eps = eps.min((budget * p / (2.0 * s.scale)).powf(1.0 / p));
                }
                if let Some(d) = density.filter(|d| d.infinite_activity()) {
                    eps = eps.min(d.near_radius(budget));
                }
            } else {
                eps = eps.min(1e-12);
            }
            start = eps.min(g.near_cut).max(f64::MIN_POSITIVE.sqrt());
        }
        // Far cut from the integrand bound and the tail masses.
        let mut end = hi;
        if end.is_infinite() {
            let mut r_far: f64 = 2.0 * spec.split_radius.max(1.0);
            if g.sup > 0.0 {
                let budget = cut_tol / g.sup;
                if let Some(s) = stable {
                    r_far = r_far.max((2.0 * s.scale / (s.alpha * budget)).powf(1.0 / s.alpha));
                }
                if let Some(d) = density {
                    r_far = r_far.max(d.tail_radius(budget));
                }
            }
            end = r_far.max(start * 2.0);
        }
        if !(end > start) {
            return Ok(Estimate::zero());
        }

        let inner_spec = spec.scaled(0.5);
        match self.dim {
            1 => {
                let mut total = Estimate::zero();
                for sign in [1.0f64, -1.0] {
                    let dir = [sign];
                    let mut breaks = (g.radial_breaks)(&dir);
                    breaks.push(spec.split_radius);
                    breaks.push(1.0);
                    let side_spec = inner_spec.scaled(0.5);
                    let h = |r: f64| -> T {
                        let y = [sign * r];
                        let mut w = 0.0;
                        if let Some(s) = stable {
                            w += s.density(r);
                        }
                        if let Some(d) = density {
                            w += d.eval(&y);
                        }
                        if w == 0.0 {
                            return T::zero();
                        }
                        (g.g)(&y) * w
                    };
                    let est = integrate_radial(h, start, end, &breaks, &side_spec)?;
                    total = total.combine(est);
                }
                Ok(total)
            }
            2 => {
                let d = density.expect("two-dimensional measures have no stable part");
                let failure: RefCell<Option<Error>> = RefCell::new(None);
                let mut inner_evals = 0usize;
                let inner_tol = spec.abs_tol / (8.0 * PI);
                let inner = inner_spec.with_abs_tol(inner_tol);
                let outer = |theta: f64| -> T {
                    let dir = [theta.cos(), theta.sin()];
                    let mut breaks = (g.radial_breaks)(&dir);
                    breaks.push(spec.split_radius);
                    breaks.push(1.0);
                    let h = |r: f64| -> T {
                        let y = [r * dir[0], r * dir[1]];
                        let w = d.eval(&y);
                        if w == 0.0 {
                            return T::zero();
                        }
                        (g.g)(&y) * (w * r)
                    };
                    match integrate_radial(h, start, end, &breaks, &inner) {
                        Ok(e) => {
                            inner_evals += e.evals;
                            e.value
                        }
                        Err(e) => {
                            failure.borrow_mut().get_or_insert(e);
                            T::zero()
                        }
                    }
                };
                let breaks = [0.0, 0.5 * PI, PI, 1.5 * PI, 2.0 * PI];
                let est = crate::quad::integrate_breaks(outer, &breaks, &inner_spec)?;
                if let Some(e) = failure.into_inner() {
                    return Err(e);
                }
                Ok(Estimate {
                    value: est.value,
                    error: est.error + inner_tol * 2.0 * PI,
                    evals: est.evals + inner_evals,
                })
            }
            k => Err(Error::Unsupported(alloc::format!(
                "deterministic quadrature of densities in dimension {k}"
            ))),
        }
    }

    /// Total mass of an open interval of the line, split at the origin.
    fn interval_mass(&self, a: f64, b: f64, spec: &QuadratureSpec) -> Result<Mass> {
        if !(b > a) {
            return Ok(Mass::ZERO);
        }
        let mut value: f64 = self
            .atoms
            .iter()
            .filter(|at| at.point[0] > a && at.point[0] < b)
            .map(|at| at.mass)
            .sum();
        let infinite = self.infinite_activity();
        if infinite && a < 0.0 && b > 0.0 {
            return Ok(Mass::Infinite);
        }
        // (sign, |y| lower, |y| upper)
        let mut sides: Vec<(f64, f64, f64)> = Vec::new();
        if b > 0.0 {
            sides.push((1.0, a.max(0.0), b));
        }
        if a < 0.0 {
            sides.push((-1.0, (-b).max(0.0), -a));
        }
        let mut err = 0.0;
        for (sign, m1, m2) in sides {
            let (lo, hi) = (m1.max(self.window.lo), m2.min(self.window.hi));
            if !(hi > lo) {
                continue;
            }
            if infinite && lo == 0.0 {
                return Ok(Mass::Infinite);
            }
            if let Some(s) = self.stable {
                value += s.side_mass(lo, hi);
            }
            if let Some(d) = &self.density {
                let end = if hi.is_infinite() {
                    d.tail_radius(spec.abs_tol / 8.0).max(lo * 2.0)
                } else {
                    hi
                };
                let side_spec = spec.scaled(0.25);
                let est = integrate_radial(|r: f64| d.eval(&[sign * r]), lo, end, &[1.0], &side_spec)?;
                value += est.value;
                err += est.error;
            }
        }
        let _ = err;
        Ok(Mass::Finite { value, stderr: 0.0 })
    }
}

/// An integrand against the measure with the bounds used to cut the
/// integration domain near zero and near infinity.
pub(crate) struct Integrand<'a, T> {
    pub g: &'a dyn Fn(&[f64]) -> T,
    /// `|g(y)| ≤ quad_coef·|y|²` near the origin; infinite if `g` does not vanish there.
    pub quad_coef: f64,
    /// `sup |g|` away from the origin.
    pub sup: f64,
    /// Radial breakpoints along a unit direction.
    pub radial_breaks: &'a dyn Fn(&[f64]) -> Vec<f64>,
    /// Upper bound on the near-zero cut.
    pub near_cut: f64,
}

pub(crate) fn no_breaks(_: &[f64]) -> Vec<f64> {
    Vec::new()
}

/// Mass of a set: a finite value with a sampling error (zero for exact
/// and quadrature results), or the infinite flag.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Mass {
    Finite { value: f64, stderr: f64 },
    Infinite,
}

impl Mass {
    pub const ZERO: Mass = Mass::Finite { value: 0.0, stderr: 0.0 };

    pub fn value(&self) -> f64 {
        match self {
            Mass::Finite { value, .. } => *value,
            Mass::Infinite => f64::INFINITY,
        }
    }

    pub fn stderr(&self) -> f64 {
        match self {
            Mass::Finite { stderr, .. } => *stderr,
            Mass::Infinite => 0.0,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Mass::Infinite)
    }

    fn add(self, other: Mass) -> Mass {
        match (self, other) {
            (Mass::Finite { value: a, stderr: sa }, Mass::Finite { value: b, stderr: sb }) => Mass::Finite {
                value: a + b,
                stderr: (sa * sa + sb * sb).sqrt(),
            },
            _ => Mass::Infinite,
        }
    }
}

/// Set descriptors for [`set_mass`].
#[derive(Debug, Clone, PartialEq)]
pub enum SetDescriptor {
    /// Open interval `(lo, hi)` of the line.
    Interval { lo: f64, hi: f64 },
    /// Open ball.
    Ball { center: Vec<f64>, radius: f64 },
    /// `{y : |M y + v| < radius}` for a `d×k` matrix `M`.
    AffinePreimage {
        matrix: DMatrix<f64>,
        offset: Vec<f64>,
        radius: f64,
    },
    /// `{y : |y| > radius}`, the complement of the closed ball.
    ComplementOfBall { radius: f64 },
}

impl SetDescriptor {
    pub fn validate(&self, k: usize) -> Result<()> {
        match self {
            SetDescriptor::Interval { lo, hi } => {
                if k != 1 {
                    return Err(dim("intervals describe sets of the line only"));
                }
                if !(lo < hi) {
                    return Err(invalid("interval needs lo < hi"));
                }
            }
            SetDescriptor::Ball { center, radius } => {
                if center.len() != k {
                    return Err(dim("ball center dimension"));
                }
                if !(*radius > 0.0) {
                    return Err(invalid("ball radius must be positive"));
                }
            }
            SetDescriptor::AffinePreimage { matrix, offset, radius } => {
                if matrix.ncols() != k || matrix.nrows() != offset.len() {
                    return Err(dim("affine preimage matrix must be d×k with offset in ℝ^d"));
                }
                if !(*radius > 0.0) {
                    return Err(invalid("preimage radius must be positive"));
                }
            }
            SetDescriptor::ComplementOfBall { radius } => {
                if !(*radius > 0.0) {
                    return Err(invalid("ball radius must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        match self {
            SetDescriptor::Interval { lo, hi } => y[0] > *lo && y[0] < *hi,
            SetDescriptor::Ball { center, radius } => {
                let d2: f64 = y.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                d2.sqrt() < *radius
            }
            SetDescriptor::AffinePreimage { matrix, offset, radius } => {
                let mut s = 0.0;
                for i in 0..matrix.nrows() {
                    let mut row = offset[i];
                    for j in 0..matrix.ncols() {
                        row += matrix[(i, j)] * y[j];
                    }
                    s += row * row;
                }
                s.sqrt() < *radius
            }
            SetDescriptor::ComplementOfBall { radius } => norm(y) > *radius,
        }
    }

    /// Whether the set contains a neighbourhood of the origin.
    fn contains_origin_nbhd(&self, k: usize) -> bool {
        match self {
            SetDescriptor::ComplementOfBall { .. } => false,
            _ => self.contains(&vec![0.0; k]),
        }
    }

    /// On the line: the set as a union of open intervals.
    fn line_intervals(&self) -> Vec<(f64, f64)> {
        match self {
            SetDescriptor::Interval { lo, hi } => vec![(*lo, *hi)],
            SetDescriptor::Ball { center, radius } => vec![(center[0] - radius, center[0] + radius)],
            SetDescriptor::ComplementOfBall { radius } => {
                vec![(f64::NEG_INFINITY, -radius), (*radius, f64::INFINITY)]
            }
            SetDescriptor::AffinePreimage { matrix, offset, radius } => {
                // |m y + v|^2 < ρ^2 with m, v ∈ ℝ^d.
                let m: Vec<f64> = matrix.column(0).iter().copied().collect();
                let mm = dot(&m, &m);
                let mv = dot(&m, offset);
                let vv = dot(offset, offset);
                if mm == 0.0 {
                    return if vv.sqrt() < *radius {
                        vec![(f64::NEG_INFINITY, f64::INFINITY)]
                    } else {
                        Vec::new()
                    };
                }
                // Distance from the line's closest point to the origin of ℝ^d.
                let center = -mv / mm;
                let perp2 = (vv - mv * mv / mm).max(0.0);
                let r2 = radius * radius - perp2;
                if r2 <= 0.0 {
                    return Vec::new();
                }
                let half = (r2 / mm).sqrt();
                vec![(center - half, center + half)]
            }
        }
    }
}

/// `ν(S)` for a described set.
pub fn set_mass(nu: &LevyMeasure, set: &SetDescriptor, spec: &QuadratureSpec) -> Result<Mass> {
    set.validate(nu.dim)?;
    if nu.dim == 1 {
        let mut total = Mass::ZERO;
        for (a, b) in set.line_intervals() {
            total = total.add(nu.interval_mass(a, b, spec)?);
            if total.is_infinite() {
                return Ok(Mass::Infinite);
            }
        }
        return Ok(total);
    }
    let atoms: f64 = nu.atoms.iter().filter(|a| set.contains(&a.point)).map(|a| a.mass).sum();
    let Some(d) = &nu.density else {
        return Ok(Mass::Finite { value: atoms, stderr: 0.0 });
    };
    if nu.infinite_activity() && set.contains_origin_nbhd(nu.dim) {
        return Ok(Mass::Infinite);
    }
    let continuous = match set {
        SetDescriptor::ComplementOfBall { radius } => {
            let one = |_: &[f64]| 1.0;
            let integrand = Integrand { g: &one, quad_coef: f64::INFINITY, sup: 1.0, radial_breaks: &no_breaks, near_cut: f64::INFINITY };
            let est = nu.integrate_continuous(&integrand, *radius, f64::INFINITY, false, spec);
            match est {
                Ok(e) => Mass::Finite { value: e.value, stderr: 0.0 },
                Err(Error::Unsupported(_)) => importance_mass(nu, d, set, spec),
                Err(e) => return Err(e),
            }
        }
        SetDescriptor::AffinePreimage { matrix, offset, radius } if nu.dim == 2 && matrix.nrows() == 1 => {
            let m = [matrix[(0, 0)], matrix[(0, 1)]];
            strip_mass(nu, d, m, offset[0], *radius, spec)?
        }
        SetDescriptor::Ball { center, radius } if nu.dim == 2 => ball_mass_2d(nu, d, center, *radius, spec)?,
        _ => importance_mass(nu, d, set, spec),
    };
    Ok(Mass::Finite { value: atoms, stderr: 0.0 }.add(continuous))
}

fn window_weight(w: Window, y: &[f64]) -> f64 {
    if w.is_full() || w.contains(norm(y)) {
        1.0
    } else {
        0.0
    }
}

/// Nested quadrature over the strip `|m·y + v| < ρ` in the plane.
fn strip_mass(nu: &LevyMeasure, d: &Density, m: [f64; 2], v: f64, rho: f64, spec: &QuadratureSpec) -> Result<Mass> {
    let (inner, outer) = if m[0].abs() >= m[1].abs() { (0, 1) } else { (1, 0) };
    if m[inner] == 0.0 {
        return Ok(if v.abs() < rho {
            let one = |_: &[f64]| 1.0;
            let integrand = Integrand { g: &one, quad_coef: f64::INFINITY, sup: 1.0, radial_breaks: &no_breaks, near_cut: f64::INFINITY };
            let e = nu.integrate_continuous(&integrand, 0.0, f64::INFINITY, false, spec)?;
            Mass::Finite { value: e.value, stderr: 0.0 }
        } else {
            Mass::ZERO
        });
    }
    let reach = d.tail_radius(spec.abs_tol / 8.0);
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let inner_spec = spec.scaled(1.0 / (8.0 * reach.max(1.0)));
    let window = nu.window;
    let g = |t: f64| -> f64 {
        let a = (-v - rho - m[outer] * t) / m[inner];
        let b = (-v + rho - m[outer] * t) / m[inner];
        let (a, b) = (a.min(b).max(-reach), a.max(b).min(reach));
        if !(b > a) {
            return 0.0;
        }
        let f = |s: f64| {
            let mut y = [0.0; 2];
            y[inner] = s;
            y[outer] = t;
            d.eval(&y) * window_weight(window, &y)
        };
        match integrate(f, a, b, &inner_spec) {
            Ok(e) => e.value,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    };
    let est = crate::quad::integrate_breaks(g, &[-reach, 0.0, reach], &spec.scaled(0.5))?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(Mass::Finite { value: est.value.max(0.0), stderr: 0.0 })
}

fn ball_mass_2d(nu: &LevyMeasure, d: &Density, c: &[f64], rho: f64, spec: &QuadratureSpec) -> Result<Mass> {
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let inner_spec = spec.scaled(1.0 / (8.0 * rho.max(1.0)));
    let window = nu.window;
    let g = |t: f64| -> f64 {
        let half = (rho * rho - (t - c[0]) * (t - c[0])).max(0.0).sqrt();
        if half == 0.0 {
            return 0.0;
        }
        let f = |s: f64| {
            let y = [t, s];
            d.eval(&y) * window_weight(window, &y)
        };
        match integrate(f, c[1] - half, c[1] + half, &inner_spec) {
            Ok(e) => e.value,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    };
    let est = integrate(g, c[0] - rho, c[0] + rho, &spec.scaled(0.5))?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(Mass::Finite { value: est.value.max(0.0), stderr: 0.0 })
}

/// Importance-sampled mass of the continuous part restricted to `|y| > ε`.
fn importance_mass(nu: &LevyMeasure, d: &Density, set: &SetDescriptor, spec: &QuadratureSpec) -> Mass {
    let k = nu.dim;
    let n = spec.sample_budget.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.sample_seed);
    let eps = spec.sample_epsilon.max(nu.window.lo);
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    match d.kind() {
        DensityKind::Gaussian { mean, std, mass } => {
            let mut y = vec![0.0; k];
            for _ in 0..n {
                for i in 0..k {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    y[i] = mean[i] + std[i] * z;
                }
                let r = norm(&y);
                let w = if r > eps && r <= nu.window.hi && set.contains(&y) { *mass } else { 0.0 };
                sum += w;
                sum2 += w * w;
            }
        }
        _ => {
            let hi = d.tail_radius(spec.abs_tol).min(nu.window.hi);
            let span = (hi / eps).ln();
            let area = sphere_area(k);
            let mut y = vec![0.0; k];
            for _ in 0..n {
                let r = eps * (rng.random::<f64>() * span).exp();
                let mut nrm = 0.0;
                for yi in y.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *yi = z;
                    nrm += z * z;
                }
                let nrm = nrm.sqrt();
                for yi in y.iter_mut() {
                    *yi *= r / nrm;
                }
                // proposal density 1 / (r^k · span · area)
                let w = if set.contains(&y) {
                    d.eval(&y) * r.powi(k as i32) * span * area
                } else {
                    0.0
                };
                sum += w;
                sum2 += w * w;
            }
        }
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sum2 / nf - mean * mean).max(0.0);
    Mass::Finite { value: mean, stderr: (var / nf).sqrt() }
}

/// `ν({|y| > r})`.
pub fn tail_mass(nu: &LevyMeasure, r: f64, spec: &QuadratureSpec) -> Result<f64> {
    if !(r > 0.0) {
        return Err(invalid("tail radius must be positive"));
    }
    let mut total: f64 = nu.atoms.iter().filter(|a| norm(&a.point) > r).map(|a| a.mass).sum();
    let (lo, hi) = (r.max(nu.window.lo), nu.window.hi);
    if let Some(s) = nu.stable {
        total += 2.0 * s.side_mass(lo, hi);
    }
    if nu.density.is_some() {
        let one = |_: &[f64]| 1.0;
        let integrand = Integrand { g: &one, quad_coef: f64::INFINITY, sup: 1.0, radial_breaks: &no_breaks, near_cut: f64::INFINITY };
        match nu.integrate_continuous(&integrand, lo, hi, false, spec) {
            Ok(e) => total += e.value,
            Err(Error::Unsupported(_)) => {
                let d = nu.density.as_ref().expect("checked");
                total += importance_mass(nu, d, &SetDescriptor::ComplementOfBall { radius: lo }, spec).value();
            }
            Err(e) => return Err(e),
        }
    }
    Ok(total)
}

/// `(b, Q, ν)` under the `1_{(0,1)}(|y|)` truncation.
#[derive(Debug, Clone)]
pub struct LevyTriplet {
    drift: DVector<f64>,
    covariance: DMatrix<f64>,
    nu: LevyMeasure,
}

impl LevyTriplet {
    pub fn new(drift: Vec<f64>, covariance: DMatrix<f64>, nu: LevyMeasure) -> Result<Self> {
        let k = drift.len();
        if k == 0 || covariance.nrows() != k || covariance.ncols() != k || nu.dim() != k {
            return Err(dim("triplet components must share one dimension"));
        }
        let scale = covariance.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..k {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-12 * scale.max(1.0) {
                    return Err(invalid("covariance must be symmetric"));
                }
            }
        }
        if scale > 0.0 {
            let eig = SymmetricEigen::new(covariance.clone());
            if eig.eigenvalues.iter().any(|&l| l < -1e-12 * scale) {
                return Err(invalid("covariance must be positive semidefinite"));
            }
        }
        Ok(Self { drift: DVector::from_vec(drift), covariance, nu })
    }

    /// Pure jump triplet with zero drift and no Gaussian part.
    pub fn pure_jump(nu: LevyMeasure) -> Self {
        let k = nu.dim();
        Self { drift: DVector::zeros(k), covariance: DMatrix::zeros(k, k), nu }
    }

    pub fn dim(&self) -> usize {
        self.drift.len()
    }
    pub fn drift(&self) -> &DVector<f64> {
        &self.drift
    }
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }
    pub fn measure(&self) -> &LevyMeasure {
        &self.nu
    }

    pub fn with_measure(&self, nu: LevyMeasure) -> Self {
        Self { drift: self.drift.clone(), covariance: self.covariance.clone(), nu }
    }

    /// Symmetric square root of the covariance.
    pub fn covariance_sqrt(&self) -> DMatrix<f64> {
        let k = self.dim();
        if self.covariance.iter().all(|v| *v == 0.0) {
            return DMatrix::zeros(k, k);
        }
        let eig = SymmetricEigen::new(self.covariance.clone());
        let roots = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
        &eig.eigenvectors * roots * eig.eigenvectors.transpose()
    }
}

/// The characteristic exponent `ψ(ξ)`.
pub fn eval_exponent(triplet: &LevyTriplet, xi: &[f64], spec: &QuadratureSpec) -> Result<Complex64> {
    let k = triplet.dim();
    if xi.len() != k {
        return Err(dim("frequency dimension differs from triplet dimension"));
    }
    if !xi.iter().all(|v| v.is_finite()) {
        return Err(invalid("frequency must be finite"));
    }
    if xi.iter().all(|v| *v == 0.0) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let xiv = DVector::from_column_slice(xi);
    let mut psi = Complex64::new(0.5 * xiv.dot(&(&triplet.covariance * &xiv)), -triplet.drift.dot(&xiv));
    psi += atoms_exponent(triplet.measure().atoms(), xi);
    let nu = triplet.measure();
    if let Some(s) = nu.stable {
        psi += stable_exponent(&s, nu.window, xi[0], spec)?;
    }
    if nu.density.is_some() {
        psi += density_exponent(nu, xi, spec)?.value;
    }
    Ok(psi)
}

pub(crate) fn atoms_exponent(atoms: &[Atom], xi: &[f64]) -> Complex64 {
    atoms
        .iter()
        .map(|a| lk_kernel(dot(&a.point, xi), norm(&a.point) < 1.0) * a.mass)
        .fold(Complex64::new(0.0, 0.0), |acc, v| acc + v)
}

/// Exponent of the symmetric power-law part restricted to a window.
pub(crate) fn stable_exponent(s: &StablePart, w: Window, xi: f64, spec: &QuadratureSpec) -> Result<Complex64> {
    let full = s.scale * StablePart::exponent_constant(s.alpha) * xi.abs().powf(s.alpha);
    if w.is_full() {
        return Ok(Complex64::new(full, 0.0));
    }
    // 2 s ∫_a^b (1 - cos(ρξ)) ρ^{-1-α} dρ
    let piece = |a: f64, b: f64| -> Result<f64> {
        let start = if a == 0.0 {
            let p = 2.0 - s.alpha;
            (spec.abs_tol / 8.0 * p / (s.scale * xi * xi)).powf(1.0 / p).min(b / 2.0)
        } else {
            a
        };
        let h = |r: f64| {
            let half = (0.5 * r * xi).sin();
            2.0 * half * half * s.density(r)
        };
        Ok(2.0 * integrate_radial(h, start, b, &[1.0], &spec.scaled(0.25))?.value)
    };
    let re = if w.hi.is_infinite() {
        full - piece(0.0, w.lo)?
    } else {
        piece(w.lo, w.hi)?
    };
    Ok(Complex64::new(re, 0.0))
}

fn density_exponent(nu: &LevyMeasure, xi: &[f64], spec: &QuadratureSpec) -> Result<Estimate<Complex64>> {
    let xn = norm(xi);
    let g = |y: &[f64]| lk_kernel(dot(y, xi), norm(y) < 1.0);
    let integrand = Integrand { g: &g, quad_coef: xn * xn, sup: 2.0 + xn, radial_breaks: &no_breaks, near_cut: f64::INFINITY };
    nu.integrate_continuous(&integrand, 0.0, f64::INFINITY, false, spec)
}

/// `(b_L, Q_L, ν|_{|y| ≤ r})`; the drift is left as is.
pub fn truncate(triplet: &LevyTriplet, r: f64) -> Result<LevyTriplet> {
    if !(r > 0.0) {
        return Err(invalid("truncation radius must be positive"));
    }
    Ok(triplet.with_measure(triplet.measure().restrict_ball(r)))
}

/// `∫ (1 - e^{iy·ξ} + iy·ξ 1_{(0,1)}(|y|)) ν(dy)` over `|y| > r`.
pub fn tail_exponent(nu: &LevyMeasure, r: f64, xi: &[f64], spec: &QuadratureSpec) -> Result<Complex64> {
    let tail = nu.restrict_tail(r);
    let t = LevyTriplet::pure_jump(tail);
    eval_exponent(&t, xi, spec)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IntegrabilityReport {
    pub near_zero_ok: bool,
    pub tail_ok: bool,
    /// `∫_{0<|y|≤1} |y|² dν`, infinite when the shells diverge.
    pub near_zero_estimate: f64,
    /// `ν(|y| > 1)`.
    pub tail_estimate: f64,
    /// Spot-check radii at which a user density exceeded its envelope.
    pub envelope_violations: Vec<f64>,
    /// `(lower radius, upper radius, ∫ |y|² dν)` on dyadic shells inside the unit ball.
    pub shells: Vec<(f64, f64, f64)>,
}

/// Checks `∫ min(|y|², 1) dν < ∞` from the envelopes and dyadic shell integrals.
pub fn check_levy_integrability(nu: &LevyMeasure, spec: &QuadratureSpec) -> IntegrabilityReport {
    let k = nu.dim;
    let mut near_ok = true;
    let mut tail_ok = true;
    let mut violations = Vec::new();
    let mut near: f64 = nu.atoms.iter().filter(|a| norm(&a.point) <= 1.0).map(|a| dot(&a.point, &a.point) * a.mass).sum();
    let mut tail: f64 = nu.atoms.iter().filter(|a| norm(&a.point) > 1.0).map(|a| a.mass).sum();
    if let Some(s) = nu.stable {
        near += 2.0 * s.side_second_moment(nu.window.lo, nu.window.hi.min(1.0));
        tail += 2.0 * s.side_mass(nu.window.lo.max(1.0), nu.window.hi);
    }
    let mut shells = Vec::new();
    if let Some(d) = &nu.density {
        let env = d.envelope();
        if env.near_exponent >= 2.0 {
            near_ok = false;
        }
        if env.far_exponent <= 0.0 {
            tail_ok = false;
        }
        if let DensityKind::Custom { .. } = d.kind() {
            // 64 log-spaced radii over [1e-8, 1e8], probed along the axes.
            for i in 0..64 {
                let r = 10f64.powf(-8.0 + 16.0 * i as f64 / 63.0);
                for axis in 0..k {
                    for sign in [1.0, -1.0] {
                        let mut y = vec![0.0; k];
                        y[axis] = sign * r;
                        if d.eval(&y) > env.bound(r, k) * (1.0 + 1e-9) {
                            violations.push(r);
                        }
                    }
                }
            }
            violations.dedup();
            if !violations.is_empty() {
                near_ok = false;
            }
        }
        // Dyadic shells 2^{-j-1} < |y| ≤ 2^{-j}.
        let sq = |y: &[f64]| dot(y, y);
        let mut shell_sum = 0.0;
        let mut last = f64::INFINITY;
        for j in 0..60 {
            let hi = 0.5f64.powi(j).min(nu.window.hi);
            let lo = 0.5f64.powi(j + 1).max(nu.window.lo);
            if !(hi > lo) {
                continue;
            }
            let integrand = Integrand { g: &sq, quad_coef: 1.0, sup: 1.0, radial_breaks: &no_breaks, near_cut: f64::INFINITY };
            let v = match nu.integrate_continuous(&integrand, lo, hi, false, &spec.scaled(1e-3)) {
                Ok(e) => e.value,
                Err(_) => f64::NAN,
            };
            shells.push((lo, hi, v));
            shell_sum += v;
            last = v;
        }
        // Non-decaying shells mean divergence at the origin.
        if shells.len() > 8 {
            let early = shells[shells.len() - 8].2;
            if !(last < 0.9 * early) && last > 1e-12 {
                near_ok = false;
            }
        }
        near += if near_ok { shell_sum } else { f64::INFINITY };
        if tail_ok {
            let one = |_: &[f64]| 1.0;
            let integrand = Integrand { g: &one, quad_coef: f64::INFINITY, sup: 1.0, radial_breaks: &no_breaks, near_cut: f64::INFINITY };
            match nu.integrate_continuous(&integrand, 1.0_f64.max(nu.window.lo), nu.window.hi, false, spec) {
                Ok(e) => tail += e.value,
                Err(_) => tail = f64::NAN,
            }
        } else {
            tail = f64::INFINITY;
        }
    }
    if !near.is_finite() {
        near_ok = false;
        near = f64::INFINITY;
    }
    IntegrabilityReport {
        near_zero_ok: near_ok,
        tail_ok,
        near_zero_estimate: near,
        tail_estimate: tail,
        envelope_violations: violations,
        shells,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn one_dim(nu: LevyMeasure) -> LevyTriplet {
        LevyTriplet::pure_jump(nu)
    }

    #[test]
    fn gaussian_exponent() {
        let t = LevyTriplet::new(vec![0.0], DMatrix::from_element(1, 1, 1.0), LevyMeasure::new(1)).unwrap();
        let psi = eval_exponent(&t, &[2.0], &spec()).unwrap();
        assert_eq!(psi, Complex64::new(2.0, 0.0));
    }

    #[test]
    fn unit_atom_exponent_matches_compound_poisson() {
        let nu = LevyMeasure::new(1).with_atom(vec![1.0], 1.0).unwrap();
        let xi = PI;
        let psi = eval_exponent(&one_dim(nu), &[xi], &spec()).unwrap();
        // |y| = 1 lies outside the truncation: ψ = 1 - e^{iπ}.
        let expect = Complex64::new(1.0 - xi.cos(), -xi.sin());
        assert!((psi - expect).norm() < 1e-15);
    }

    #[test]
    fn normalized_stable_exponent() {
        let s = StablePart::normalized(1.5).unwrap();
        let nu = LevyMeasure::new(1).with_stable(s).unwrap();
        let psi = eval_exponent(&one_dim(nu), &[2.0], &spec()).unwrap();
        assert!((psi.re - 2f64.powf(1.5)).abs() < 1e-12);
        assert_eq!(psi.im, 0.0);
    }

    #[test]
    fn stable_closed_form_against_direct_quadrature() {
        // Quadrature to R plus the non-oscillating part of the tail,
        // 2s R^{-α}/α; the dropped cosine tail is below 4s R^{-1-α}/ξ.
        let s = StablePart::new(1.2, 0.7).unwrap();
        let nu = LevyMeasure::new(1).with_stable(s).unwrap();
        let xi = 0.8;
        let closed = eval_exponent(&one_dim(nu.clone()), &[xi], &spec()).unwrap();
        let r = 1e4;
        let quad = eval_exponent(&one_dim(nu.restrict_ball(r)), &[xi], &spec()).unwrap();
        let tail = 2.0 * s.scale * r.powf(-s.alpha) / s.alpha;
        assert!((closed.re - quad.re - tail).abs() < 1e-8, "{} vs {}", closed.re, quad.re + tail);
    }

    #[test]
    fn atom_interval_mass() {
        let nu = LevyMeasure::new(1).with_atom(vec![1.0], 2.0).unwrap();
        let m = set_mass(&nu, &SetDescriptor::Interval { lo: 0.5, hi: 1.5 }, &spec()).unwrap();
        assert_eq!(m, Mass::Finite { value: 2.0, stderr: 0.0 });
    }

    #[test]
    fn stable_interval_mass_closed_form() {
        let nu = LevyMeasure::new(1).with_stable(StablePart::new(1.0, 1.0).unwrap()).unwrap();
        let m = set_mass(&nu, &SetDescriptor::Interval { lo: 0.5, hi: 4.0 }, &spec()).unwrap();
        assert!((m.value() - (2.0 - 0.25)).abs() < 1e-15);
        // Cross-check by quadrature of y^{-2}.
        let q = integrate(|y: f64| y.powi(-2), 0.5, 4.0, &spec()).unwrap();
        assert!((q.value - m.value()).abs() < 1e-9);
    }

    #[test]
    fn neighbourhood_of_origin_is_infinite() {
        let nu = LevyMeasure::new(1).with_stable(StablePart::new(0.5, 1.0).unwrap()).unwrap();
        let m = set_mass(&nu, &SetDescriptor::Interval { lo: -0.1, hi: 0.1 }, &spec()).unwrap();
        assert!(m.is_infinite());
        let finite = LevyMeasure::new(1).with_atom(vec![0.05], 1.0).unwrap();
        let m = set_mass(&finite, &SetDescriptor::Interval { lo: -0.1, hi: 0.1 }, &spec()).unwrap();
        assert_eq!(m.value(), 1.0);
    }

    #[test]
    fn planar_atom_in_affine_preimage() {
        let nu = LevyMeasure::new(2).with_atom(vec![-1.0, 5.0], 0.3).unwrap();
        let x = 100.0;
        let set = |radius: f64| SetDescriptor::AffinePreimage {
            matrix: DMatrix::from_row_slice(1, 2, &[x, 1.0]),
            offset: vec![x],
            radius,
        };
        assert_eq!(set_mass(&nu, &set(1.0), &spec()).unwrap().value(), 0.0);
        assert_eq!(set_mass(&nu, &set(4.9), &spec()).unwrap().value(), 0.0);
        assert_eq!(set_mass(&nu, &set(5.1), &spec()).unwrap().value(), 0.3);
    }

    #[test]
    fn tail_masses() {
        let nu = LevyMeasure::new(1).with_atom(vec![1.0], 3.0).unwrap();
        assert_eq!(tail_mass(&nu, 0.5, &spec()).unwrap(), 3.0);
        assert_eq!(tail_mass(&nu, 2.0, &spec()).unwrap(), 0.0);
        let st = LevyMeasure::new(1).with_stable(StablePart::new(0.5, 1.0).unwrap()).unwrap();
        assert!((tail_mass(&st, 1.0, &spec()).unwrap() - 4.0).abs() < 1e-14);
        let ex = LevyMeasure::new(1)
            .with_density(Density::new(DensityKind::Exponential { scale: 1.0, rate: 1.0 }).unwrap())
            .unwrap();
        assert!((tail_mass(&ex, 1.0, &spec()).unwrap() - 2.0 * (-1f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn truncation_keeps_drift_and_cuts_measure() {
        let nu = LevyMeasure::new(1).with_atom(vec![1.0], 1.0).unwrap();
        let t = LevyTriplet::new(vec![0.3], DMatrix::from_element(1, 1, 0.5), nu).unwrap();
        let tr = truncate(&t, 0.5).unwrap();
        assert!(tr.measure().is_zero());
        assert_eq!(tr.drift()[0], 0.3);
        assert_eq!(tr.covariance()[(0, 0)], 0.5);

        let st = LevyMeasure::new(1).with_stable(StablePart::new(1.5, 1.0).unwrap()).unwrap();
        let tr = truncate(&one_dim(st), 1.0).unwrap();
        let m = tail_mass(tr.measure(), 0.5, &spec()).unwrap();
        // 2 ∫_{0.5}^1 y^{-2.5} dy = (4/3)(0.5^{-1.5} - 1)
        assert!((m - 4.0 / 3.0 * (0.5f64.powf(-1.5) - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn tail_sampling_errors_on_empty_tail() {
        let nu = LevyMeasure::new(1).with_atom(vec![0.5], 1.0).unwrap();
        assert!(tail_mass(&nu, 1.0, &spec()).unwrap() == 0.0);
    }

    #[test]
    fn integrability_reports() {
        let st = LevyMeasure::new(1).with_stable(StablePart::new(1.9, 1.0).unwrap()).unwrap();
        let r = check_levy_integrability(&st, &spec());
        assert!(r.near_zero_ok && r.tail_ok);

        let cubic: DensityFn = Arc::new(|y: &[f64]| y[0].abs().powi(-3));
        let d = Density::new(DensityKind::Custom {
            dim: 1,
            label: "cubic".into(),
            f: cubic,
            envelope: Envelope { constant: 1.0, near_exponent: 2.0, far_exponent: 2.0 },
            finite: false,
        })
        .unwrap();
        let r = check_levy_integrability(&LevyMeasure::new(1).with_density(d).unwrap(), &spec());
        assert!(!r.near_zero_ok);

        let heavy = LevyMeasure::new(1).with_atom(vec![0.001], 1e6).unwrap();
        let r = check_levy_integrability(&heavy, &spec());
        assert!(r.near_zero_ok);
        assert!((r.near_zero_estimate - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_measures_are_rejected() {
        assert!(LevyMeasure::new(1).with_atom(vec![0.0], 1.0).is_err());
        assert!(LevyMeasure::new(1).with_atom(vec![1.0], 0.0).is_err());
        assert!(LevyMeasure::new(2).with_atom(vec![1.0], 1.0).is_err());
        assert!(LevyMeasure::new(2).with_stable(StablePart::new(1.0, 1.0).unwrap()).is_err());
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(LevyTriplet::new(vec![0.0, 0.0], q, LevyMeasure::new(2)).is_err());
    }
}
