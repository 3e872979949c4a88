//! The state-dependent symbol `q(x, ξ) = ψ(σ(x)ᵀξ)` of `dX = σ(X₋) dL` and
//! the generator acting on test functions.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{dim, invalid, Error, Result};
use crate::levy::{dot, eval_exponent, lk_kernel, norm, Integrand, LevyMeasure, LevyTriplet, SetDescriptor};
use crate::levy::{set_mass, DensityKind, Mass};
use crate::quad::{sorted_unique, Estimate, QuadratureSpec};

pub type SigmaFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// Built-in coefficient shapes. Scalar shapes have `d = k = 1`.
#[derive(Clone)]
pub enum SigmaKind {
    Constant(DMatrix<f64>),
    /// `σ(x) = x cᵀ` with `d = 1`.
    Linear { c: Vec<f64> },
    /// `σ(x) = (x, 1)`.
    GeneralizedOu,
    /// `scale·|x|^β`.
    PowerAbs { scale: f64, beta: f64 },
    /// `scale·(1 + |x|)^β`.
    ShiftedPower { scale: f64, beta: f64 },
    /// `Σ c_i x^i`.
    Polynomial { coeffs: Vec<f64> },
    Custom {
        d: usize,
        k: usize,
        label: String,
        f: SigmaFn,
    },
}

impl fmt::Debug for SigmaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(m) => f.debug_tuple("Constant").field(m).finish(),
            Self::Linear { c } => f.debug_struct("Linear").field("c", c).finish(),
            Self::GeneralizedOu => f.write_str("GeneralizedOu"),
            Self::PowerAbs { scale, beta } => {
                f.debug_struct("PowerAbs").field("scale", scale).field("beta", beta).finish()
            }
            Self::ShiftedPower { scale, beta } => {
                f.debug_struct("ShiftedPower").field("scale", scale).field("beta", beta).finish()
            }
            Self::Polynomial { coeffs } => f.debug_struct("Polynomial").field("coeffs", coeffs).finish(),
            Self::Custom { d, k, label, .. } => {
                f.debug_struct("Custom").field("d", d).field("k", k).field("label", label).finish()
            }
        }
    }
}

/// Declared regularity and growth of `σ`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoefficientMeta {
    pub lipschitz: Option<f64>,
    /// `c` with `|σ(x)| ≤ c(1 + |x|)`.
    pub linear_growth: Option<f64>,
    /// `β` with `|σ(x)| ≍ |x|^β`.
    pub growth_exponent: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CoefficientField {
    d: usize,
    k: usize,
    kind: SigmaKind,
    meta: CoefficientMeta,
}

impl CoefficientField {
    pub fn new(kind: SigmaKind) -> Result<Self> {
        let (d, k, meta) = match &kind {
            SigmaKind::Constant(m) => {
                if m.nrows() == 0 || m.ncols() == 0 || !m.iter().all(|v| v.is_finite()) {
                    return Err(invalid("constant coefficient must be a finite nonempty matrix"));
                }
                let n = m.norm();
                (m.nrows(), m.ncols(), CoefficientMeta {
                    lipschitz: Some(0.0),
                    linear_growth: Some(n),
                    growth_exponent: Some(0.0),
                })
            }
            SigmaKind::Linear { c } => {
                if c.is_empty() {
                    return Err(dim("linear coefficient needs a nonempty c"));
                }
                let n = norm(c);
                (1, c.len(), CoefficientMeta {
                    lipschitz: Some(n),
                    linear_growth: Some(n),
                    growth_exponent: Some(if n > 0.0 { 1.0 } else { 0.0 }),
                })
            }
            SigmaKind::GeneralizedOu => (1, 2, CoefficientMeta {
                lipschitz: Some(1.0),
                linear_growth: Some(1.0),
                growth_exponent: Some(1.0),
            }),
            SigmaKind::PowerAbs { scale, beta } => {
                if !scale.is_finite() || !(*beta >= 0.0) {
                    return Err(invalid("power coefficient needs finite scale and beta ≥ 0"));
                }
                let a = scale.abs();
                (1, 1, CoefficientMeta {
                    lipschitz: if *beta == 0.0 { Some(0.0) } else if *beta == 1.0 { Some(a) } else { None },
                    linear_growth: if *beta <= 1.0 { Some(a) } else { None },
                    growth_exponent: Some(*beta),
                })
            }
            SigmaKind::ShiftedPower { scale, beta } => {
                if !scale.is_finite() || !(*beta >= 0.0) {
                    return Err(invalid("shifted power coefficient needs finite scale and beta ≥ 0"));
                }
                let a = scale.abs();
                (1, 1, CoefficientMeta {
                    lipschitz: if *beta <= 1.0 { Some(a * beta) } else { None },
                    linear_growth: if *beta <= 1.0 { Some(a) } else { None },
                    growth_exponent: Some(*beta),
                })
            }
            SigmaKind::Polynomial { coeffs } => {
                let deg = coeffs.iter().rposition(|c| *c != 0.0);
                let meta = match deg {
                    None => CoefficientMeta {
                        lipschitz: Some(0.0),
                        linear_growth: Some(0.0),
                        growth_exponent: Some(0.0),
                    },
                    Some(0) => CoefficientMeta {
                        lipschitz: Some(0.0),
                        linear_growth: Some(coeffs[0].abs()),
                        growth_exponent: Some(0.0),
                    },
                    Some(1) => CoefficientMeta {
                        lipschitz: Some(coeffs[1].abs()),
                        linear_growth: Some(coeffs[0].abs().max(coeffs[1].abs())),
                        growth_exponent: Some(1.0),
                    },
                    Some(n) => CoefficientMeta {
                        lipschitz: None,
                        linear_growth: None,
                        growth_exponent: Some(n as f64),
                    },
                };
                (1, 1, meta)
            }
            SigmaKind::Custom { d, k, .. } => {
                if *d == 0 || *k == 0 {
                    return Err(dim("custom coefficient dimensions must be positive"));
                }
                (*d, *k, CoefficientMeta::default())
            }
        };
        Ok(Self { d, k, kind, meta })
    }

    /// Replaces the declared metadata; a declared linear growth constant is spot-checked.
    pub fn with_meta(mut self, meta: CoefficientMeta) -> Result<Self> {
        self.meta = meta;
        if meta.linear_growth.is_some() {
            self.check_linear_growth()?;
        }
        Ok(self)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.d, self.k)
    }
    pub fn kind(&self) -> &SigmaKind {
        &self.kind
    }
    pub fn meta(&self) -> &CoefficientMeta {
        &self.meta
    }

    /// `σ(x)` for `d = k = 1`.
    pub fn eval_scalar(&self, x: f64) -> f64 {
        match &self.kind {
            SigmaKind::Constant(m) => m[(0, 0)],
            SigmaKind::Linear { c } => x * c[0],
            SigmaKind::PowerAbs { scale, beta } => {
                if *beta == 0.0 {
                    *scale
                } else {
                    scale * x.abs().powf(*beta)
                }
            }
            SigmaKind::ShiftedPower { scale, beta } => scale * (1.0 + x.abs()).powf(*beta),
            SigmaKind::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
            SigmaKind::GeneralizedOu => x,
            SigmaKind::Custom { f, .. } => f(&[x])[(0, 0)],
        }
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.kind {
            SigmaKind::Constant(m) => m.clone(),
            SigmaKind::Linear { c } => DMatrix::from_iterator(1, c.len(), c.iter().map(|ci| x[0] * ci)),
            SigmaKind::GeneralizedOu => DMatrix::from_row_slice(1, 2, &[x[0], 1.0]),
            SigmaKind::Custom { f, .. } => f(x),
            _ => DMatrix::from_element(1, 1, self.eval_scalar(x[0])),
        }
    }

    /// `σ(x) v` written into `out`.
    pub fn apply_into(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        match &self.kind {
            SigmaKind::Linear { c } => out[0] = x[0] * dot(c, v),
            SigmaKind::GeneralizedOu => out[0] = x[0] * v[0] + v[1],
            SigmaKind::PowerAbs { .. } | SigmaKind::ShiftedPower { .. } | SigmaKind::Polynomial { .. } => {
                out[0] = self.eval_scalar(x[0]) * v[0]
            }
            SigmaKind::Constant(m) => {
                for i in 0..self.d {
                    out[i] = (0..self.k).map(|j| m[(i, j)] * v[j]).sum();
                }
            }
            _ => {
                let m = self.eval(x);
                for i in 0..self.d {
                    out[i] = (0..self.k).map(|j| m[(i, j)] * v[j]).sum();
                }
            }
        }
    }

    /// Frobenius norm `|σ(x)|`.
    pub fn norm_at(&self, x: &[f64]) -> f64 {
        match &self.kind {
            SigmaKind::GeneralizedOu => (x[0] * x[0] + 1.0).sqrt(),
            SigmaKind::Linear { c } => x[0].abs() * norm(c),
            SigmaKind::Constant(m) => m.norm(),
            SigmaKind::Custom { .. } => self.eval(x).norm(),
            _ => self.eval_scalar(x[0]).abs(),
        }
    }

    /// `|σ(x)| ≤ c(1+|x|)` on 10³ log-spaced radii along the coordinate axes.
    pub fn check_linear_growth(&self) -> Result<()> {
        let Some(c) = self.meta.linear_growth else {
            return Ok(());
        };
        for i in 0..1000 {
            let r = 10f64.powf(-6.0 + 18.0 * i as f64 / 999.0);
            for axis in 0..self.d {
                for sign in [1.0, -1.0] {
                    let mut x = vec![0.0; self.d];
                    x[axis] = sign * r;
                    let s = self.norm_at(&x);
                    if s > c * (1.0 + r) * (1.0 + 1e-9) + 1e-12 {
                        return Err(invalid(alloc::format!(
                            "declared linear growth constant {c} fails at |x| = {r:e}: |σ(x)| = {s:e}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Largest relative jump of `σ` across `x ± h` over the given points.
    pub fn continuity_probe(&self, points: &[Vec<f64>], h: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for x in points {
            let base = self.eval(x);
            for axis in 0..self.d {
                let mut xp = x.clone();
                xp[axis] += h;
                let diff = (self.eval(&xp) - &base).norm();
                worst = worst.max(diff / (1.0 + base.norm()));
            }
        }
        worst
    }
}

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
enum Shape {
    /// `exp(1 - 1/(1-s²))`, `s = ρ/R`.
    Bump,
    /// 1 up to `inner`, quintic smoothstep down to 0 at the outer radius.
    Plateau { inner: f64 },
    /// `ρ²·plateau`.
    QuadraticPlateau { inner: f64 },
    /// `a·(x-c)·plateau`.
    LinearPlateau { inner: f64, a: Vec<f64> },
    /// `(1 + ρ²)^{-1}`.
    Lyapunov,
    Constant(f64),
    Custom {
        f: ScalarFn,
        grad: Option<VectorFn>,
        hess: Option<MatrixFn>,
    },
}

/// A `C²` function with derivatives, support and the bounds used by the quadrature.
#[derive(Clone)]
pub struct TestFunction {
    dim: usize,
    center: Vec<f64>,
    radius: f64,
    shape: Shape,
    sup: f64,
    hess_bound: f64,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shape = match &self.shape {
            Shape::Bump => "bump",
            Shape::Plateau { .. } => "plateau",
            Shape::QuadraticPlateau { .. } => "quadratic_plateau",
            Shape::LinearPlateau { .. } => "linear_plateau",
            Shape::Lyapunov => "lyapunov",
            Shape::Constant(_) => "constant",
            Shape::Custom { .. } => "custom",
        };
        f.debug_struct("TestFunction")
            .field("shape", &shape)
            .field("center", &self.center)
            .field("radius", &self.radius)
            .finish()
    }
}

/// Radial profile value, first derivative, first derivative over ρ, second derivative.
#[derive(Clone, Copy)]
struct Radial {
    v: f64,
    d1: f64,
    d1_over_r: f64,
    d2: f64,
}

fn smoothstep_down(rho: f64, inner: f64, outer: f64) -> Radial {
    if rho <= inner {
        return Radial { v: 1.0, d1: 0.0, d1_over_r: 0.0, d2: 0.0 };
    }
    if rho >= outer {
        return Radial { v: 0.0, d1: 0.0, d1_over_r: 0.0, d2: 0.0 };
    }
    let w = outer - inner;
    let t = (rho - inner) / w;
    let v = 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
    let d1 = -30.0 * t * t * (1.0 - t) * (1.0 - t) / w;
    let d2 = -60.0 * t * (1.0 - t) * (1.0 - 2.0 * t) / (w * w);
    let d1_over_r = if rho > 0.0 { d1 / rho } else { 0.0 };
    Radial { v, d1, d1_over_r, d2 }
}

impl TestFunction {
    fn radial(dim: usize, center: Vec<f64>, radius: f64, shape: Shape) -> Result<Self> {
        if dim == 0 || center.len() != dim {
            return Err(dim_err());
        }
        if !(radius > 0.0) {
            return Err(invalid("test function radius must be positive"));
        }
        let mut f = Self { dim, center, radius, shape, sup: 0.0, hess_bound: 0.0 };
        f.scan_bounds();
        Ok(f)
    }

    /// Compactly supported `C^∞` bump equal to 1 at `center`.
    pub fn bump(center: Vec<f64>, radius: f64) -> Result<Self> {
        Self::radial(center.len(), center, radius, Shape::Bump)
    }

    pub fn plateau(center: Vec<f64>, inner: f64, outer: f64) -> Result<Self> {
        check_plateau(inner, outer)?;
        Self::radial(center.len(), center, outer, Shape::Plateau { inner })
    }

    pub fn quadratic_plateau(center: Vec<f64>, inner: f64, outer: f64) -> Result<Self> {
        check_plateau(inner, outer)?;
        Self::radial(center.len(), center, outer, Shape::QuadraticPlateau { inner })
    }

    pub fn linear_plateau(center: Vec<f64>, a: Vec<f64>, inner: f64, outer: f64) -> Result<Self> {
        check_plateau(inner, outer)?;
        if a.len() != center.len() {
            return Err(dim_err());
        }
        Self::radial(center.len(), center, outer, Shape::LinearPlateau { inner, a })
    }

    /// `(1 + |x|²)^{-1}`; not compactly supported.
    pub fn lyapunov(dim: usize) -> Self {
        let mut f = Self {
            dim,
            center: vec![0.0; dim],
            radius: f64::INFINITY,
            shape: Shape::Lyapunov,
            sup: 1.0,
            hess_bound: 2.0,
        };
        f.scan_bounds();
        f
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        Self {
            dim,
            center: vec![0.0; dim],
            radius: f64::INFINITY,
            shape: Shape::Constant(value),
            sup: value.abs(),
            hess_bound: 0.0,
        }
    }

    /// A user function; `sup` and `hess_bound` bound `|f|` and `‖∇²f‖`.
    /// Without derivatives only [`tail_generator_apply`] accepts it.
    pub fn custom(
        dim: usize,
        f: ScalarFn,
        grad: Option<VectorFn>,
        hess: Option<MatrixFn>,
        sup: f64,
        hess_bound: f64,
    ) -> Self {
        Self {
            dim,
            center: vec![0.0; dim],
            radius: f64::INFINITY,
            shape: Shape::Custom { f, grad, hess },
            sup,
            hess_bound,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn center(&self) -> &[f64] {
        &self.center
    }
    /// Outer radius of the support around [`Self::center`]; infinite when not compact.
    pub fn support_radius(&self) -> f64 {
        self.radius
    }
    pub fn sup_norm(&self) -> f64 {
        self.sup
    }
    pub fn hessian_bound(&self) -> f64 {
        self.hess_bound
    }
    pub fn has_derivatives(&self) -> bool {
        !matches!(&self.shape, Shape::Custom { grad: None, .. } | Shape::Custom { hess: None, .. })
    }

    /// Radii around the center where the second derivative may be non-smooth.
    pub fn level_radii(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Plateau { inner } | Shape::QuadraticPlateau { inner } | Shape::LinearPlateau { inner, .. } => {
                vec![*inner, self.radius]
            }
            Shape::Bump => vec![self.radius],
            _ => Vec::new(),
        }
    }

    fn profile(&self, rho: f64) -> Radial {
        let r = self.radius;
        match &self.shape {
            Shape::Bump => {
                let s = rho / r;
                if s >= 1.0 {
                    return Radial { v: 0.0, d1: 0.0, d1_over_r: 0.0, d2: 0.0 };
                }
                let u = 1.0 - s * s;
                let v = (1.0 - 1.0 / u).exp();
                let g = -2.0 * s / (u * u);
                let gp = -2.0 / (u * u) - 8.0 * s * s / (u * u * u);
                Radial {
                    v,
                    d1: v * g / r,
                    d1_over_r: v * (-2.0 / (u * u)) / (r * r),
                    d2: v * (g * g + gp) / (r * r),
                }
            }
            Shape::Plateau { inner } => smoothstep_down(rho, *inner, r),
            Shape::QuadraticPlateau { inner } => {
                let p = smoothstep_down(rho, *inner, r);
                Radial {
                    v: rho * rho * p.v,
                    d1: 2.0 * rho * p.v + rho * rho * p.d1,
                    d1_over_r: 2.0 * p.v + rho * p.d1,
                    d2: 2.0 * p.v + 4.0 * rho * p.d1 + rho * rho * p.d2,
                }
            }
            Shape::Lyapunov => {
                let q = 1.0 + rho * rho;
                Radial {
                    v: 1.0 / q,
                    d1: -2.0 * rho / (q * q),
                    d1_over_r: -2.0 / (q * q),
                    d2: (6.0 * rho * rho - 2.0) / (q * q * q),
                }
            }
            Shape::Constant(c) => Radial { v: *c, d1: 0.0, d1_over_r: 0.0, d2: 0.0 },
            Shape::LinearPlateau { .. } | Shape::Custom { .. } => unreachable!("not radial"),
        }
    }

    fn scan_bounds(&mut self) {
        if matches!(self.shape, Shape::Custom { .. } | Shape::Constant(_)) {
            return;
        }
        let reach = if self.radius.is_finite() { self.radius } else { 10.0 };
        let mut sup: f64 = 0.0;
        let mut hb: f64 = 0.0;
        let n = 4000;
        for i in 0..=n {
            let rho = reach * i as f64 / n as f64;
            match &self.shape {
                Shape::LinearPlateau { inner, a } => {
                    let p = smoothstep_down(rho, *inner, self.radius);
                    let an = norm(a);
                    sup = sup.max(an * rho * p.v);
                    hb = hb.max(2.0 * an * p.d1.abs() + an * rho * (p.d2.abs() + p.d1_over_r.abs()));
                }
                _ => {
                    let p = self.profile(rho);
                    sup = sup.max(p.v.abs());
                    hb = hb.max(p.d2.abs().max(p.d1_over_r.abs()));
                }
            }
        }
        self.sup = sup;
        self.hess_bound = hb * 1.05;
    }

    fn offset(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let z: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let rho = norm(&z);
        (z, rho)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Custom { f, .. } => f(x),
            Shape::Constant(c) => *c,
            Shape::LinearPlateau { inner, a } => {
                let (z, rho) = self.offset(x);
                if rho >= self.radius {
                    return 0.0;
                }
                dot(a, &z) * smoothstep_down(rho, *inner, self.radius).v
            }
            _ => {
                let (_, rho) = self.offset(x);
                if rho >= self.radius {
                    return 0.0;
                }
                self.profile(rho).v
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.shape {
            Shape::Custom { grad, .. } => grad.as_ref().map_or_else(|| vec![f64::NAN; self.dim], |g| g(x)),
            Shape::Constant(_) => vec![0.0; self.dim],
            Shape::LinearPlateau { inner, a } => {
                let (z, rho) = self.offset(x);
                let p = smoothstep_down(rho, *inner, self.radius);
                let az = dot(a, &z);
                a.iter().zip(&z).map(|(ai, zi)| ai * p.v + az * p.d1_over_r * zi).collect()
            }
            _ => {
                let (z, rho) = self.offset(x);
                if rho >= self.radius {
                    return vec![0.0; self.dim];
                }
                let p = self.profile(rho);
                z.iter().map(|zi| p.d1_over_r * zi).collect()
            }
        }
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        match &self.shape {
            Shape::Custom { hess, .. } => hess.as_ref().map_or_else(|| DMatrix::from_element(d, d, f64::NAN), |h| h(x)),
            Shape::Constant(_) => DMatrix::zeros(d, d),
            Shape::LinearPlateau { inner, a } => {
                let (z, rho) = self.offset(x);
                let p = smoothstep_down(rho, *inner, self.radius);
                let az = dot(a, &z);
                let mut h = DMatrix::zeros(d, d);
                if rho <= *inner || rho >= self.radius {
                    return h;
                }
                for i in 0..d {
                    for j in 0..d {
                        let ui = z[i] / rho;
                        let uj = z[j] / rho;
                        let delta = if i == j { 1.0 } else { 0.0 };
                        h[(i, j)] = p.d1 * (a[i] * uj + ui * a[j])
                            + az * (p.d2 * ui * uj + p.d1_over_r * (delta - ui * uj));
                    }
                }
                h
            }
            _ => {
                let (z, rho) = self.offset(x);
                if rho >= self.radius {
                    return DMatrix::zeros(d, d);
                }
                let p = self.profile(rho);
                let mut h = DMatrix::zeros(d, d);
                for i in 0..d {
                    for j in 0..d {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        h[(i, j)] = if rho > 0.0 {
                            let (ui, uj) = (z[i] / rho, z[j] / rho);
                            p.d2 * ui * uj + p.d1_over_r * (delta - ui * uj)
                        } else {
                            p.d2 * delta
                        };
                    }
                }
                h
            }
        }
    }
}

fn dim_err() -> Error {
    dim("test function center dimension")
}

fn check_plateau(inner: f64, outer: f64) -> Result<()> {
    if !(inner >= 0.0 && outer > inner) {
        return Err(invalid("plateau needs 0 ≤ inner < outer"));
    }
    Ok(())
}

/// `(b(x), Q(x), ν(x, ·))` with `ν(x, ·)` kept as the pair `(σ(x), ν_L)`.
#[derive(Debug, Clone)]
pub struct StateTriplet {
    pub x: Vec<f64>,
    pub sigma: DMatrix<f64>,
    pub drift: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub driver_measure: LevyMeasure,
}

impl StateTriplet {
    /// `ν(x, B(center, radius)) = ν_L({y : |σ(x)y - center| < radius})`.
    pub fn ball_mass(&self, center: &[f64], radius: f64, spec: &QuadratureSpec) -> Result<Mass> {
        let set = SetDescriptor::AffinePreimage {
            matrix: self.sigma.clone(),
            offset: center.iter().map(|c| -c).collect(),
            radius,
        };
        set_mass(&self.driver_measure, &set, spec)
    }

    /// Lévy–Khintchine exponent of the state triplet with cutoff `1_{(0,1)}(|z|)` in `ℝ^d`.
    pub fn exponent(&self, xi: &[f64], spec: &QuadratureSpec) -> Result<Complex64> {
        if xi.len() != self.sigma.nrows() {
            return Err(dim("frequency dimension differs from state dimension"));
        }
        let xiv = DVector::from_column_slice(xi);
        let w: Vec<f64> = (self.sigma.transpose() * &xiv).iter().copied().collect();
        let mut psi = Complex64::new(0.5 * xiv.dot(&(&self.covariance * &xiv)), -self.drift.dot(&xiv));
        let nu = &self.driver_measure;
        let sig = &self.sigma;
        for a in nu.atoms() {
            let z = mat_vec(sig, &a.point);
            psi += lk_kernel(dot(&a.point, &w), norm(&z) < 1.0) * a.mass;
        }
        if let Some(s) = nu.stable() {
            // Symmetric: odd parts cancel and the even part is scale-covariant.
            psi += crate::levy::stable_exponent(s, nu.window(), w[0], spec)?;
        }
        if nu.density().is_some() {
            let wn = norm(&w);
            let xin = norm(xi);
            let g = |y: &[f64]| lk_kernel(dot(y, &w), norm(&mat_vec(sig, y)) < 1.0);
            let breaks = |u: &[f64]| image_unit_break(sig, u);
            let integrand = Integrand {
                g: &g,
                quad_coef: wn * wn,
                sup: 2.0 + xin,
                radial_breaks: &breaks,
                near_cut: f64::INFINITY,
            };
            psi += nu.integrate_continuous(&integrand, 0.0, f64::INFINITY, false, spec)?.value;
        }
        Ok(psi)
    }
}

fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum()).collect()
}

/// Radius along `u` where `|σ ρu| = 1`.
fn image_unit_break(sig: &DMatrix<f64>, u: &[f64]) -> Vec<f64> {
    let n = norm(&mat_vec(sig, u));
    if n > 0.0 {
        vec![1.0 / n]
    } else {
        Vec::new()
    }
}

fn check_dims(sigma: &CoefficientField, triplet: &LevyTriplet, x: &[f64]) -> Result<(usize, usize)> {
    let (d, k) = sigma.dims();
    if triplet.dim() != k {
        return Err(dim("driver dimension differs from the coefficient's column count"));
    }
    if x.len() != d {
        return Err(dim("state dimension differs from the coefficient's row count"));
    }
    Ok((d, k))
}

/// `q(x, ξ) = ψ(σ(x)ᵀξ)`; exactly zero at `ξ = 0`.
pub fn state_symbol(
    sigma: &CoefficientField,
    triplet: &LevyTriplet,
    x: &[f64],
    xi: &[f64],
    spec: &QuadratureSpec,
) -> Result<Complex64> {
    let (d, _) = check_dims(sigma, triplet, x)?;
    if xi.len() != d {
        return Err(dim("frequency dimension differs from state dimension"));
    }
    if xi.iter().all(|v| *v == 0.0) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let s = sigma.eval(x);
    let w = s.transpose() * DVector::from_column_slice(xi);
    eval_exponent(triplet, w.as_slice(), spec)
}

/// The state triplet; the drift picks up `∫ σy (1_{(0,1)}(|σy|) - 1_{(0,1)}(|y|)) ν_L(dy)`.
pub fn pushforward_triplet(
    sigma: &CoefficientField,
    triplet: &LevyTriplet,
    x: &[f64],
    spec: &QuadratureSpec,
) -> Result<StateTriplet> {
    let (d, _) = check_dims(sigma, triplet, x)?;
    let s = sigma.eval(x);
    let mut drift = &s * triplet.drift();
    let nu = triplet.measure();
    for a in nu.atoms() {
        let z = mat_vec(&s, &a.point);
        let diff = indicator(norm(&z) < 1.0) - indicator(norm(&a.point) < 1.0);
        if diff != 0.0 {
            for i in 0..d {
                drift[i] += a.mass * diff * z[i];
            }
        }
    }
    if nu.density().is_some() {
        // Nonzero only where exactly one of |σy| < 1, |y| < 1 holds.
        let snorm = s.norm();
        let lo = if snorm > 1.0 { 1.0 / snorm } else { 1.0 };
        let breaks = |u: &[f64]| image_unit_break(&s, u);
        for i in 0..d {
            let g = |y: &[f64]| {
                let z = mat_vec(&s, y);
                let diff = indicator(norm(&z) < 1.0) - indicator(norm(y) < 1.0);
                diff * z[i]
            };
            let integrand = Integrand {
                g: &g,
                quad_coef: f64::INFINITY,
                sup: snorm.max(1.0),
                radial_breaks: &breaks,
                near_cut: f64::INFINITY,
            };
            drift[i] += nu.integrate_continuous(&integrand, lo * (1.0 - 1e-12), f64::INFINITY, false, spec)?.value;
        }
    }
    let covariance = &s * triplet.covariance() * s.transpose();
    Ok(StateTriplet { x: x.to_vec(), sigma: s, drift, covariance, driver_measure: nu.clone() })
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// `f(x+h) - f(x) - ∇f(x)·h`, by `∫_0^1 (1-t) hᵀ∇²f(x+th)h dt` when `h` is small.
fn taylor_remainder(f: &TestFunction, x: &[f64], fx: f64, grad: &[f64], h: &[f64], small: f64) -> f64 {
    let hn = norm(h);
    if hn > small {
        let xh: Vec<f64> = x.iter().zip(h).map(|(a, b)| a + b).collect();
        return f.eval(&xh) - fx - dot(grad, h);
    }
    // Gauss–Legendre, three nodes on [0, 1].
    const T: [f64; 3] = [0.112_701_665_379_258_31, 0.5, 0.887_298_334_620_741_7];
    const W: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    let mut acc = 0.0;
    for (t, w) in T.iter().zip(W) {
        let xt: Vec<f64> = x.iter().zip(h).map(|(a, b)| a + t * b).collect();
        let hm = f.hessian(&xt);
        let hv = mat_vec(&hm, h);
        acc += w * (1.0 - t) * dot(h, &hv);
    }
    acc
}

struct JumpPart<'a> {
    s: &'a DMatrix<f64>,
    f: &'a TestFunction,
    x: &'a [f64],
    fx: f64,
    grad: Vec<f64>,
    /// Compensate with `∇f·σy` on `|y| < 1`.
    compensate: bool,
}

impl JumpPart<'_> {
    fn small(&self) -> f64 {
        let scale = if self.f.radius.is_finite() { self.f.radius } else { 1.0 };
        1e-3 * scale
    }

    fn integrand(&self, y: &[f64]) -> f64 {
        let h = mat_vec(self.s, y);
        if self.compensate && norm(y) < 1.0 {
            taylor_remainder(self.f, self.x, self.fx, &self.grad, &h, self.small())
        } else {
            let xh: Vec<f64> = self.x.iter().zip(&h).map(|(a, b)| a + b).collect();
            self.f.eval(&xh) - self.fx
        }
    }

    /// Radii along `u` where `x + σρu` crosses a level set of `f`.
    fn breaks(&self, u: &[f64]) -> Vec<f64> {
        if self.x.len() != 1 {
            return Vec::new();
        }
        let w = mat_vec(self.s, u)[0];
        if w == 0.0 {
            return Vec::new();
        }
        let c = self.f.center[0];
        let mut out = Vec::new();
        for l in self.f.level_radii() {
            for target in [c - l, c + l] {
                let rho = (target - self.x[0]) / w;
                if rho > 0.0 {
                    out.push(rho);
                }
            }
        }
        sorted_unique(out)
    }

    /// `d = 1` with a product-normal density: `σ(x)Y` is a scalar normal, so the
    /// density term reduces to one integral against its law. Returns the
    /// estimate and the measure left to integrate (the stable part, if any).
    fn gaussian_line(
        &self,
        nu: &LevyMeasure,
        lo: f64,
        hi: f64,
        spec: &QuadratureSpec,
    ) -> Result<Option<(Estimate<f64>, LevyMeasure)>> {
        let Some(density) = nu.density() else { return Ok(None) };
        let DensityKind::Gaussian { mean, std, mass } = density.kind() else { return Ok(None) };
        if self.x.len() != 1 || lo > 0.0 || hi.is_finite() || !nu.window().is_full() {
            return Ok(None);
        }
        let row: Vec<f64> = (0..self.s.ncols()).map(|j| self.s[(0, j)]).collect();
        let mu: f64 = row.iter().zip(mean).map(|(a, m)| a * m).sum();
        let sd = row.iter().zip(std).map(|(a, s)| a * a * s * s).sum::<f64>().sqrt();
        let x = self.x[0];
        let mut est = Estimate::exact(-mass * self.fx);
        if sd == 0.0 {
            est.value += mass * self.f.eval(&[x + mu]);
        } else {
            let (mut a, mut b) = (mu - 12.0 * sd, mu + 12.0 * sd);
            let c = self.f.center[0];
            if self.f.radius.is_finite() {
                a = a.max(c - self.f.radius - x);
                b = b.min(c + self.f.radius - x);
            }
            if a < b {
                let mut pts = vec![a, b];
                for l in self.f.level_radii() {
                    pts.extend([c - l - x, c + l - x].into_iter().filter(|z| *z > a && *z < b));
                }
                let pts = sorted_unique(pts);
                let norm_c = mass / (sd * (2.0 * core::f64::consts::PI).sqrt());
                let phi = |z: f64| {
                    let u = (z - mu) / sd;
                    self.f.eval(&[x + z]) * libm::exp(-0.5 * u * u)
                };
                let e = crate::quad::integrate_breaks(phi, &pts, spec)?.scale(norm_c);
                est = est.combine(e);
            }
        }
        if self.compensate && mean.iter().any(|m| *m != 0.0) {
            let only = LevyMeasure::new(nu.dim()).with_density(density.clone())?;
            let m1 = compensator_shift_vec(&only, 0.0, spec)?;
            est.value -= self.grad[0] * dot(&row, &m1);
        }
        let mut rest = LevyMeasure::new(nu.dim());
        if let Some(st) = nu.stable() {
            rest = rest.with_stable(st.clone())?;
        }
        Ok(Some((est, rest)))
    }

    fn integrate(&self, nu: &LevyMeasure, lo: f64, hi: f64, spec: &QuadratureSpec) -> Result<Estimate<f64>> {
        let mut total: f64 = nu
            .atoms()
            .iter()
            .filter(|a| {
                let r = norm(&a.point);
                r > lo && r <= hi
            })
            .map(|a| a.mass * self.integrand(&a.point))
            .sum();
        let mut line = Estimate::zero();
        let rest;
        let nu = match self.gaussian_line(nu, lo, hi, spec)? {
            Some((e, r)) => {
                line = e;
                rest = r;
                &rest
            }
            None => nu,
        };
        total += line.value;
        if !nu.has_continuous_part() {
            return Ok(Estimate { value: total, error: line.error, evals: line.evals });
        }
        let snorm = self.s.norm();
        let g = |y: &[f64]| self.integrand(y);
        let breaks = |u: &[f64]| self.breaks(u);
        let integrand = Integrand {
            g: &g,
            quad_coef: if self.compensate { 0.5 * self.f.hess_bound * snorm * snorm } else { f64::INFINITY },
            sup: 2.0 * self.f.sup + if self.compensate { norm(&self.grad) * snorm } else { 0.0 },
            radial_breaks: &breaks,
            near_cut: 1e-6,
        };
        let est = nu.integrate_continuous(&integrand, lo, hi, true, spec)?;
        total += est.value;
        Ok(Estimate { value: total, error: est.error + line.error, evals: est.evals + line.evals })
    }
}

fn require_derivatives(f: &TestFunction) -> Result<()> {
    if !f.has_derivatives() {
        return Err(invalid("test function has no derivatives"));
    }
    Ok(())
}

/// `Af(x) = σb_L·∇f + ½ tr(σQσᵀ∇²f) + ∫ [f(x+σy) - f(x) - ∇f(x)·σy 1_{(0,1)}(|y|)] ν_L(dy)`.
pub fn generator_apply(
    sigma: &CoefficientField,
    triplet: &LevyTriplet,
    f: &TestFunction,
    x: &[f64],
    spec: &QuadratureSpec,
) -> Result<f64> {
    let (d, _) = check_dims(sigma, triplet, x)?;
    if f.dim() != d {
        return Err(dim("test function dimension"));
    }
    require_derivatives(f)?;
    let s = sigma.eval(x);
    let grad = f.gradient(x);
    let hess = f.hessian(x);
    let drift = dot((&s * triplet.drift()).as_slice(), &grad);
    let q = &s * triplet.covariance() * s.transpose();
    let diffusion = 0.5 * (q * hess).trace();
    let jumps = JumpPart { s: &s, f, x, fx: f.eval(x), grad, compensate: true };
    let j = jumps.integrate(triplet.measure(), 0.0, f64::INFINITY, spec)?;
    Ok(drift + diffusion + j.value)
}

fn scalar_setup(sigma: &CoefficientField, triplet: &LevyTriplet, x: &[f64]) -> Result<()> {
    let (d, k) = check_dims(sigma, triplet, x)?;
    if d != 1 || k != 1 {
        return Err(Error::Unsupported("the truncated/tail split is implemented for d = k = 1".into()));
    }
    Ok(())
}

/// The truncated generator `B` with jumps of modulus at most `r`:
/// drift `(b_L - ∫_{r<|y|<1} y ν(dy)) σ(x) f'(x)`, so that `A = B + N`.
pub fn truncated_generator_apply(
    sigma: &CoefficientField,
    triplet: &LevyTriplet,
    r: f64,
    f: &TestFunction,
    x: &[f64],
    spec: &QuadratureSpec,
) -> Result<f64> {
    scalar_setup(sigma, triplet, x)?;
    if !(r > 0.0 && r < 1.0) {
        return Err(invalid("truncation radius must lie in (0, 1)"));
    }
    require_derivatives(f)?;
    let nu = triplet.measure();
    let b = triplet.drift()[0] - compensator_shift(nu, r, spec)?;
    let s = sigma.eval(x);
    let sv = s[(0, 0)];
    let grad = f.gradient(x);
    let d2 = f.hessian(x)[(0, 0)];
    let mut out = b * sv * grad[0] + 0.5 * sv * sv * triplet.covariance()[(0, 0)] * d2;
    let jumps = JumpPart { s: &s, f, x, fx: f.eval(x), grad, compensate: true };
    out += jumps.integrate(nu, 0.0, r, spec)?.value;
    Ok(out)
}

/// `∫_{r<|y|<1} y ν(dy)`.
pub fn compensator_shift(nu: &LevyMeasure, r: f64, spec: &QuadratureSpec) -> Result<f64> {
    let mut out: f64 = nu
        .atoms()
        .iter()
        .filter(|a| {
            let m = a.point[0].abs();
            m > r && m < 1.0
        })
        .map(|a| a.mass * a.point[0])
        .sum();
    if nu.has_continuous_part() && r < 1.0 {
        let g = |y: &[f64]| y[0];
        let integrand = Integrand {
            g: &g,
            quad_coef: f64::INFINITY,
            sup: 1.0,
            radial_breaks: &crate::levy::no_breaks,
            near_cut: f64::INFINITY,
        };
        out += nu.integrate_continuous(&integrand, r, 1.0, true, spec)?.value;
    }
    Ok(out)
}

/// Vector form of [`compensator_shift`] for any driver dimension.
pub fn compensator_shift_vec(nu: &LevyMeasure, r: f64, spec: &QuadratureSpec) -> Result<Vec<f64>> {
    let k = nu.dim();
    let mut out = vec![0.0; k];
    for a in nu.atoms() {
        let m = norm(&a.point);
        if m > r && m < 1.0 {
            for (o, y) in out.iter_mut().zip(&a.point) {
                *o += a.mass * y;
            }
        }
    }
    if nu.density().is_some() && r < 1.0 {
        for (i, o) in out.iter_mut().enumerate() {
            let g = move |y: &[f64]| y[i];
            let integrand = Integrand {
                g: &g,
                quad_coef: f64::INFINITY,
                sup: 1.0,
                radial_breaks: &crate::levy::no_breaks,
                near_cut: f64::INFINITY,
            };
            // The stable part is symmetric and contributes nothing.
            *o += nu.integrate_continuous(&integrand, r, 1.0, false, spec)?.value;
        }
    }
    Ok(out)
}

/// The tail operator `Nu(x) = ∫_{|y|>r} (u(x+σ(x)y) - u(x)) ν_L(dy)`.
pub fn tail_generator_apply(
    sigma: &CoefficientField,
    triplet: &LevyTriplet,
    r: f64,
    u: &TestFunction,
    x: &[f64],
    spec: &QuadratureSpec,
) -> Result<f64> {
    scalar_setup(sigma, triplet, x)?;
    if !(r > 0.0) {
        return Err(invalid("tail radius must be positive"));
    }
    let s = sigma.eval(x);
    let jumps = JumpPart { s: &s, f: u, x, fx: u.eval(x), grad: vec![0.0], compensate: false };
    Ok(jumps.integrate(triplet.measure(), r, f64::INFINITY, spec)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum GrowthTrend {
    Decays,
    BoundedAway,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GrowthRow {
    pub r: f64,
    pub sup_abs_q: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GrowthTable {
    pub rows: Vec<GrowthRow>,
    pub trend: GrowthTrend,
}

/// `sup_{|x|≤r} sup_{|ξ|≤1/r} |q(x,ξ)|` on a 64×64 log-polar grid per radius.
///
/// A grid maximum only bounds the supremum from below.
pub fn growth_probe(
    sigma: &CoefficientField,
    triplet: &LevyTriplet,
    radii: &[f64],
    spec: &QuadratureSpec,
) -> Result<GrowthTable> {
    if radii.is_empty() || radii.windows(2).any(|w| !(w[1] > w[0])) || !(radii[0] > 0.0) {
        return Err(invalid("radii must be positive and increasing"));
    }
    let (d, _) = sigma.dims();
    const N: usize = 64;
    let point = |i: usize, scale: f64| -> Vec<f64> {
        // 32 log-spaced magnitudes over four decades, two orientations each.
        let m = scale * 10f64.powf(-4.0 + 4.0 * (i / 2) as f64 / (N / 2 - 1) as f64);
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let mut v = vec![0.0; d];
        v[(i / 2) % d] = sign * m;
        v
    };
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut best: f64 = 0.0;
        for i in 0..N {
            let x = point(i, r);
            for j in 0..N {
                let xi = point(j, 1.0 / r);
                best = best.max(state_symbol(sigma, triplet, &x, &xi, spec)?.norm());
            }
        }
        rows.push(GrowthRow { r, sup_abs_q: best });
    }
    let first = rows[0].sup_abs_q;
    let last = rows[rows.len() - 1].sup_abs_q;
    let max = rows.iter().map(|r| r.sup_abs_q).fold(0.0, f64::max);
    let half = &rows[rows.len() / 2..];
    let monotone = half.windows(2).all(|w| w[1].sup_abs_q <= w[0].sup_abs_q * (1.0 + 1e-9) + 1e-15);
    let tail_min = half.iter().map(|r| r.sup_abs_q).fold(f64::INFINITY, f64::min);
    let trend = if max == 0.0 || (monotone && last < 0.05 * first.max(max)) {
        GrowthTrend::Decays
    } else if tail_min >= 0.1 * max {
        GrowthTrend::BoundedAway
    } else {
        GrowthTrend::Inconclusive
    };
    Ok(GrowthTable { rows, trend })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{Density, DensityKind, StablePart};

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn poisson(mass: f64, at: f64) -> LevyTriplet {
        LevyTriplet::pure_jump(LevyMeasure::new(1).with_atom(vec![at], mass).unwrap())
    }

    fn stable(alpha: f64) -> LevyTriplet {
        LevyTriplet::pure_jump(LevyMeasure::new(1).with_stable(StablePart::normalized(alpha).unwrap()).unwrap())
    }

    #[test]
    fn symbol_vanishes_at_zero_frequency() {
        let s = CoefficientField::new(SigmaKind::GeneralizedOu).unwrap();
        let nu = LevyMeasure::new(2).with_atom(vec![0.3, -2.0], 1.0).unwrap();
        let q = state_symbol(&s, &LevyTriplet::pure_jump(nu), &[4.0], &[0.0], &spec()).unwrap();
        assert_eq!(q, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn stable_power_symbol() {
        let s = CoefficientField::new(SigmaKind::PowerAbs { scale: 1.0, beta: 0.5 }).unwrap();
        let q = state_symbol(&s, &stable(1.0), &[2.0], &[3.0], &spec()).unwrap();
        assert!((q.re - 3.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn gou_symbol_matches_direct_exponent() {
        let s = CoefficientField::new(SigmaKind::GeneralizedOu).unwrap();
        let nu = LevyMeasure::new(2)
            .with_atom(vec![-1.0, 0.5], 0.3)
            .unwrap()
            .with_density(
                Density::new(DensityKind::Gaussian { mean: vec![0.0, 0.0], std: vec![0.3, 0.3], mass: 1.0 }).unwrap(),
            )
            .unwrap();
        let t = LevyTriplet::pure_jump(nu);
        let (x, xi) = (1.7, -0.6);
        let q = state_symbol(&s, &t, &[x], &[xi], &spec()).unwrap();
        let direct = eval_exponent(&t, &[x * xi, xi], &spec()).unwrap();
        assert!((q - direct).norm() < 1e-12);
    }

    #[test]
    fn gaussian_line_matches_general_quadrature() {
        let s = CoefficientField::new(SigmaKind::GeneralizedOu).unwrap();
        let f = TestFunction::bump(vec![0.2], 1.5).unwrap();
        for mean in [vec![0.0, 0.0], vec![0.4, -0.7]] {
            let g = Density::new(DensityKind::Gaussian { mean, std: vec![0.3, 0.5], mass: 1.3 }).unwrap();
            let nu = LevyMeasure::new(2).with_density(g).unwrap();
            let fast = LevyTriplet::pure_jump(nu.clone());
            // A window that drops nothing but is not full takes the general path.
            let slow = LevyTriplet::pure_jump(nu.restrict_shell(0.0, 1e3));
            for x in [-1.0, 0.3, 1.1] {
                let a = generator_apply(&s, &fast, &f, &[x], &spec()).unwrap();
                let b = generator_apply(&s, &slow, &f, &[x], &spec()).unwrap();
                assert!((a - b).abs() < 1e-7 * (1.0 + b.abs()), "x={x}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn pushforward_atom_correction() {
        let s = CoefficientField::new(SigmaKind::Constant(DMatrix::from_element(1, 1, 2.0))).unwrap();
        let t = poisson(1.5, 0.6);
        let st = pushforward_triplet(&s, &t, &[0.0], &spec()).unwrap();
        assert!((st.drift[0] - (-1.2 * 1.5)).abs() < 1e-15);
    }

    #[test]
    fn pushforward_of_identity_is_the_driver() {
        let s = CoefficientField::new(SigmaKind::Constant(DMatrix::identity(1, 1))).unwrap();
        let d = Density::new(DensityKind::Exponential { scale: 1.0, rate: 2.0 }).unwrap();
        let nu = LevyMeasure::new(1).with_atom(vec![0.4], 1.0).unwrap().with_density(d).unwrap();
        let t = LevyTriplet::new(vec![0.25], DMatrix::from_element(1, 1, 0.5), nu).unwrap();
        let st = pushforward_triplet(&s, &t, &[3.0], &spec()).unwrap();
        assert!((st.drift[0] - 0.25).abs() < 1e-12);
        assert_eq!(st.covariance[(0, 0)], 0.5);
        for xi in [0.3, -1.0, 4.0] {
            let a = st.exponent(&[xi], &spec()).unwrap();
            let b = eval_exponent(&t, &[xi], &spec()).unwrap();
            assert!((a - b).norm() < 1e-8, "{a} {b}");
        }
    }

    #[test]
    fn pushforward_exponent_matches_symbol_with_density() {
        let s = CoefficientField::new(SigmaKind::Polynomial { coeffs: vec![0.5, -3.0] }).unwrap();
        let d = Density::new(DensityKind::Exponential { scale: 2.0, rate: 1.5 }).unwrap();
        let t = LevyTriplet::new(vec![0.1], DMatrix::from_element(1, 1, 0.0), LevyMeasure::new(1).with_density(d).unwrap())
            .unwrap();
        for (x, xi) in [(0.7, 1.1), (-2.0, 0.4), (5.0, -0.2)] {
            let st = pushforward_triplet(&s, &t, &[x], &spec()).unwrap();
            let a = st.exponent(&[xi], &spec()).unwrap();
            let b = state_symbol(&s, &t, &[x], &[xi], &spec()).unwrap();
            assert!((a - b).norm() < 1e-7, "x={x}: {a} vs {b}");
        }
    }

    #[test]
    fn pure_drift_generator() {
        let s = CoefficientField::new(SigmaKind::Constant(DMatrix::identity(1, 1))).unwrap();
        let t = LevyTriplet::new(vec![1.5], DMatrix::zeros(1, 1), LevyMeasure::new(1)).unwrap();
        let f = TestFunction::bump(vec![0.0], 2.0).unwrap();
        let x = [0.7];
        let a = generator_apply(&s, &t, &f, &x, &spec()).unwrap();
        assert!((a - 1.5 * f.gradient(&x)[0]).abs() < 1e-14);
    }

    #[test]
    fn poisson_counterexample_generator() {
        let s = CoefficientField::new(SigmaKind::Linear { c: vec![-1.0] }).unwrap();
        let t = poisson(2.0, 1.0);
        let f = TestFunction::bump(vec![0.5], 3.0).unwrap();
        for x in [-1.0, 0.3, 2.0, 10.0] {
            let a = generator_apply(&s, &t, &f, &[x], &spec()).unwrap();
            assert!((a - 2.0 * (f.eval(&[0.0]) - f.eval(&[x]))).abs() < 1e-14);
        }
    }

    #[test]
    fn tail_operator_on_atoms() {
        let s = CoefficientField::new(SigmaKind::Constant(DMatrix::identity(1, 1))).unwrap();
        let t = poisson(0.7, 2.0);
        let u = TestFunction::bump(vec![1.0], 2.5).unwrap();
        let n = tail_generator_apply(&s, &t, 1.0, &u, &[0.2], &spec()).unwrap();
        assert!((n - 0.7 * (u.eval(&[2.2]) - u.eval(&[0.2]))).abs() < 1e-15);
        let c = TestFunction::constant(1, 3.0);
        assert_eq!(tail_generator_apply(&s, &t, 1.0, &c, &[0.2], &spec()).unwrap(), 0.0);
    }

    #[test]
    fn truncated_generator_without_jumps() {
        let s = CoefficientField::new(SigmaKind::ShiftedPower { scale: 1.0, beta: 1.0 }).unwrap();
        let t = LevyTriplet::new(vec![0.4], DMatrix::from_element(1, 1, 2.0), LevyMeasure::new(1)).unwrap();
        let f = TestFunction::lyapunov(1);
        let x = [1.3];
        let sv = 2.3;
        let b = truncated_generator_apply(&s, &t, 0.5, &f, &x, &spec()).unwrap();
        let expect = 0.4 * sv * f.gradient(&x)[0] + 0.5 * sv * sv * 2.0 * f.hessian(&x)[(0, 0)];
        assert!((b - expect).abs() < 1e-13);
    }

    #[test]
    fn decomposition_for_stable_driver() {
        let s = CoefficientField::new(SigmaKind::ShiftedPower { scale: 1.0, beta: 0.5 }).unwrap();
        let t = stable(1.5);
        let f = TestFunction::bump(vec![0.0], 1.5).unwrap();
        for x in [-2.0, -0.3, 0.0, 0.9, 4.0] {
            let a = generator_apply(&s, &t, &f, &[x], &spec()).unwrap();
            let b = truncated_generator_apply(&s, &t, 0.4, &f, &[x], &spec()).unwrap();
            let n = tail_generator_apply(&s, &t, 0.4, &f, &[x], &spec()).unwrap();
            assert!((a - b - n).abs() < 1e-8, "x={x}: {a} vs {}", b + n);
        }
    }

    #[test]
    fn stable_generator_against_fourier_side() {
        // For ψ(ξ) = |ξ|^α and f = e^{-x²/2}·(plateau ≈ 1 near 0), Af(0) = -(1/2π)∫ |ξ|^α f̂(ξ) dξ
        // with f̂(ξ) = √(2π) e^{-ξ²/2}: Af(0) = -2^{α/2} Γ((1+α)/2) / √π.
        let alpha = 1.5;
        let gauss: ScalarFn = Arc::new(|x: &[f64]| (-0.5 * x[0] * x[0]).exp());
        let grad: VectorFn = Arc::new(|x: &[f64]| vec![-x[0] * (-0.5 * x[0] * x[0]).exp()]);
        let hess: MatrixFn =
            Arc::new(|x: &[f64]| DMatrix::from_element(1, 1, (x[0] * x[0] - 1.0) * (-0.5 * x[0] * x[0]).exp()));
        let f = TestFunction::custom(1, gauss, Some(grad), Some(hess), 1.0, 1.0);
        let s = CoefficientField::new(SigmaKind::Constant(DMatrix::identity(1, 1))).unwrap();
        let a = generator_apply(&s, &stable(alpha), &f, &[0.0], &spec()).unwrap();
        let expect = -(2f64.powf(alpha / 2.0)) * libm::tgamma((1.0 + alpha) / 2.0) / core::f64::consts::PI.sqrt();
        assert!((a - expect).abs() < 1e-7, "{a} vs {expect}");
    }

    #[test]
    fn maximum_point_sign() {
        let s = CoefficientField::new(SigmaKind::ShiftedPower { scale: 0.7, beta: 1.0 }).unwrap();
        let f = TestFunction::bump(vec![0.3], 1.0).unwrap();
        let a = generator_apply(&s, &stable(0.8), &f, &[0.3], &spec()).unwrap();
        assert!(a <= 1e-9);
    }

    #[test]
    fn gradient_and_hessian_match_differences() {
        let fs = [
            TestFunction::bump(vec![0.2], 1.3).unwrap(),
            TestFunction::plateau(vec![-0.1], 0.4, 1.0).unwrap(),
            TestFunction::quadratic_plateau(vec![0.0], 1.0, 2.0).unwrap(),
            TestFunction::linear_plateau(vec![0.5], vec![2.0], 0.5, 1.5).unwrap(),
            TestFunction::lyapunov(1),
        ];
        let h = 1e-5;
        for f in &fs {
            for i in 0..40 {
                let x = -2.0 + 4.0 * (i as f64 + 0.37) / 40.0;
                let fd = (f.eval(&[x + h]) - f.eval(&[x - h])) / (2.0 * h);
                let g = f.gradient(&[x])[0];
                assert!((fd - g).abs() <= 1e-5 * (1.0 + g.abs()), "{f:?} at {x}: {fd} vs {g}");
                let gd = (f.gradient(&[x + h])[0] - f.gradient(&[x - h])[0]) / (2.0 * h);
                let hh = f.hessian(&[x])[(0, 0)];
                assert!((gd - hh).abs() <= 1e-4 * (1.0 + hh.abs()), "{f:?} at {x}: {gd} vs {hh}");
            }
        }
    }

    #[test]
    fn growth_probe_trends() {
        let bounded = CoefficientField::new(SigmaKind::Constant(DMatrix::identity(1, 1))).unwrap();
        let radii = [1.0, 10.0, 100.0, 1000.0];
        let g = growth_probe(&bounded, &poisson(1.0, 1.0), &radii, &spec()).unwrap();
        assert_eq!(g.trend, GrowthTrend::Decays);
        let linear = CoefficientField::new(SigmaKind::Linear { c: vec![1.0] }).unwrap();
        let g = growth_probe(&linear, &poisson(1.0, 1.0), &radii, &spec()).unwrap();
        assert_eq!(g.trend, GrowthTrend::BoundedAway);
        let zero = CoefficientField::new(SigmaKind::Constant(DMatrix::zeros(1, 1))).unwrap();
        let g = growth_probe(&zero, &poisson(1.0, 1.0), &radii, &spec()).unwrap();
        assert!(g.rows.iter().all(|r| r.sup_abs_q == 0.0));
    }

    #[test]
    fn declared_linear_growth_is_checked() {
        let s = CoefficientField::new(SigmaKind::Polynomial { coeffs: vec![0.0, 0.0, 1.0] }).unwrap();
        assert!(s.meta().linear_growth.is_none());
        let bad = s.with_meta(CoefficientMeta { linear_growth: Some(5.0), ..Default::default() });
        assert!(bad.is_err());
    }
}
