//! The criterion `ν_L({y : σ(x)y ∈ B(-x, r)}) → 0` as `|x| → ∞` and the
//! classifier built on it.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{dim, invalid, Result};
use crate::levy::{norm, set_mass, LevyTriplet, Mass, SetDescriptor};
use crate::quad::QuadratureSpec;
use crate::symbol::{CoefficientField, SigmaKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Uniqueness {
    /// Lipschitz `σ`: pathwise uniqueness.
    Lipschitz,
    /// Weak uniqueness asserted by the user.
    DeclaredWeakUnique,
    Unknown,
}

/// Driver, coefficient and uniqueness declaration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub label: String,
    pub triplet: LevyTriplet,
    pub sigma: CoefficientField,
    pub uniqueness: Uniqueness,
}

impl Scenario {
    pub fn new(label: impl Into<String>, triplet: LevyTriplet, sigma: CoefficientField, uniqueness: Uniqueness) -> Result<Self> {
        let (_, k) = sigma.dims();
        if triplet.dim() != k {
            return Err(dim("driver dimension differs from the coefficient's column count"));
        }
        if uniqueness == Uniqueness::Lipschitz && sigma.meta().lipschitz.is_none() {
            return Err(invalid("uniqueness 'lipschitz' needs a Lipschitz constant for sigma"));
        }
        Ok(Self { label: label.into(), triplet, sigma, uniqueness })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.sigma.dims()
    }
}

/// `ν_L({y : |σ(x)y + x| < r})`.
pub fn condition_mass(scenario: &Scenario, x: &[f64], r: f64, spec: &QuadratureSpec) -> Result<Mass> {
    let (d, k) = scenario.dims();
    if x.len() != d {
        return Err(dim("state dimension"));
    }
    if !(r > 0.0) {
        return Err(invalid("probe radius must be positive"));
    }
    let nu = scenario.triplet.measure();
    if d == 1 && k == 1 {
        let s = scenario.sigma.eval_scalar(x[0]);
        if s == 0.0 {
            if x[0].abs() >= r {
                return Ok(Mass::ZERO);
            }
            let all = SetDescriptor::Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };
            return set_mass(nu, &all, spec);
        }
        let a = (-x[0] - r) / s;
        let b = (-x[0] + r) / s;
        return set_mass(nu, &SetDescriptor::Interval { lo: a.min(b), hi: a.max(b) }, spec);
    }
    let set = SetDescriptor::AffinePreimage { matrix: scenario.sigma.eval(x), offset: x.to_vec(), radius: r };
    set_mass(nu, &set, spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LimitVerdict {
    Vanishes,
    PositiveLimit,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProfilePoint {
    pub x: Vec<f64>,
    /// `None` for infinite mass.
    pub mass: Option<f64>,
    pub stderr: f64,
}

/// Decision thresholds for a limit along `|x| → ∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LimitRule {
    pub vanish_tol: f64,
    pub vanish_slope: f64,
    pub positive_variation: f64,
    pub positive_floor: f64,
}

impl Default for LimitRule {
    fn default() -> Self {
        Self { vanish_tol: 1e-6, vanish_slope: -0.1, positive_variation: 0.05, positive_floor: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConditionProfile {
    pub r: f64,
    /// Increasing magnitudes `|x|`.
    pub x_grid: Vec<f64>,
    /// Every probed point, all orientations.
    pub points: Vec<ProfilePoint>,
    /// Largest mass over orientations at each magnitude; infinite as `f64::INFINITY` in memory.
    pub envelope: Vec<f64>,
    /// Log-log slope of the envelope over the last decade.
    pub last_decade_slope: Option<f64>,
    /// Envelope at the largest magnitude.
    pub limit_estimate: f64,
    pub verdict: LimitVerdict,
    /// `(x, -x/σ(x))` over the last decade; `d = k = 1` only.
    pub accumulation: Vec<(f64, f64)>,
}

/// Least-squares slope of `log y` against `log x` over positive pairs.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Applies the limit rule to the tail of a sequence sampled at increasing `xs`.
pub fn limit_verdict(xs: &[f64], ys: &[f64], rule: &LimitRule) -> (LimitVerdict, Option<f64>) {
    let x_max = xs.last().copied().unwrap_or(0.0);
    let idx: Vec<usize> = (0..xs.len()).filter(|&i| xs[i] >= x_max / 10.0 * (1.0 - 1e-12)).collect();
    let tx: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
    let ty: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
    let slope = loglog_slope(&tx, &ty);
    if ty.is_empty() {
        return (LimitVerdict::Inconclusive, slope);
    }
    if ty.iter().all(|y| y.is_infinite()) {
        return (LimitVerdict::PositiveLimit, slope);
    }
    if ty.iter().any(|y| !y.is_finite()) {
        return (LimitVerdict::Inconclusive, slope);
    }
    let positives = ty.iter().filter(|y| **y > 0.0).count();
    let small = ty.iter().all(|y| *y < rule.vanish_tol);
    // Exact zeros count as decay.
    let decaying = match slope {
        Some(s) => s < rule.vanish_slope && positives == ty.len() || (positives < ty.len() && ty.last() == Some(&0.0)),
        None => true,
    };
    if small && decaying {
        return (LimitVerdict::Vanishes, slope);
    }
    let mean = ty.iter().sum::<f64>() / ty.len() as f64;
    let lo = ty.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ty.iter().cloned().fold(0.0, f64::max);
    if mean > rule.positive_floor && (hi - lo) / mean < rule.positive_variation {
        return (LimitVerdict::PositiveLimit, slope);
    }
    (LimitVerdict::Inconclusive, slope)
}

/// Orientations probed for `d > 1`: 16 seeded random rays and the coordinate axes.
pub fn probe_directions(d: usize) -> Vec<Vec<f64>> {
    if d == 1 {
        return vec![vec![1.0], vec![-1.0]];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x0d1e_c710_a5);
    let mut dirs = Vec::new();
    for _ in 0..16 {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = norm(&v);
        dirs.push(v.into_iter().map(|c| c / n).collect());
    }
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[i] = s;
            dirs.push(e);
        }
    }
    dirs
}

/// `condition_mass` on a log grid of `|x|` in every orientation.
pub fn condition_profile(
    scenario: &Scenario,
    r: f64,
    x_min: f64,
    x_max: f64,
    n_points: usize,
    rule: &LimitRule,
    spec: &QuadratureSpec,
) -> Result<ConditionProfile> {
    if !(x_min > 0.0 && x_max > x_min) {
        return Err(invalid("profile needs 0 < x_min < x_max"));
    }
    if n_points < 8 {
        return Err(invalid("profile needs at least 8 points"));
    }
    let (d, k) = scenario.dims();
    let dirs = probe_directions(d);
    let span = (x_max / x_min).ln();
    let x_grid: Vec<f64> = (0..n_points)
        .map(|i| {
            if i + 1 == n_points {
                x_max
            } else {
                x_min * (span * i as f64 / (n_points - 1) as f64).exp()
            }
        })
        .collect();
    let mut points = Vec::with_capacity(n_points * dirs.len());
    let mut envelope = Vec::with_capacity(n_points);
    for &m in &x_grid {
        let mut worst: f64 = 0.0;
        for u in &dirs {
            let x: Vec<f64> = u.iter().map(|c| c * m).collect();
            let mass = condition_mass(scenario, &x, r, spec)?;
            let (value, stderr) = match mass {
                Mass::Finite { value, stderr } => (Some(value.max(0.0)), stderr),
                Mass::Infinite => (None, 0.0),
            };
            worst = worst.max(value.unwrap_or(f64::INFINITY));
            points.push(ProfilePoint { x, mass: value, stderr });
        }
        envelope.push(worst);
    }
    let (verdict, slope) = limit_verdict(&x_grid, &envelope, rule);
    let mut accumulation = Vec::new();
    if d == 1 && k == 1 {
        for &m in x_grid.iter().filter(|&&m| m >= x_max / 10.0 * (1.0 - 1e-12)) {
            for s in [1.0, -1.0] {
                let sv = scenario.sigma.eval_scalar(s * m);
                if sv != 0.0 {
                    accumulation.push((s * m, -s * m / sv));
                }
            }
        }
    }
    Ok(ConditionProfile {
        r,
        limit_estimate: *envelope.last().expect("n_points ≥ 8"),
        x_grid,
        points,
        envelope,
        last_decade_slope: slope,
        verdict,
        accumulation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Verdict {
    Feller,
    NotFeller,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Rule {
    SublinearGrowth,
    StableGrowth,
    GeneralizedOuAtoms,
    LinearSdeAtoms,
    LinearGrowthPremise,
    Profile,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ClassifyPolicy {
    pub radii: Vec<f64>,
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    pub use_shortcuts: bool,
    pub rule: LimitRule,
}

impl Default for ClassifyPolicy {
    fn default() -> Self {
        Self { radii: vec![0.1, 1.0, 10.0], x_min: 10.0, x_max: 1e8, n_points: 64, use_shortcuts: true, rule: LimitRule::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassificationReport {
    pub label: String,
    pub verdict: Verdict,
    pub rule_fired: Rule,
    /// Set when uniqueness is unknown: the verdict assumes it.
    pub conditional: bool,
    pub detail: String,
    pub profiles: Vec<ConditionProfile>,
}

/// Analytic shortcuts first, then profiles at every policy radius.
pub fn classify(scenario: &Scenario, policy: &ClassifyPolicy, spec: &QuadratureSpec) -> Result<ClassificationReport> {
    let conditional = scenario.uniqueness == Uniqueness::Unknown;
    let done = |verdict, rule_fired, detail: String, profiles| {
        Ok(ClassificationReport { label: scenario.label.clone(), verdict, rule_fired, conditional, detail, profiles })
    };
    let meta = scenario.sigma.meta();
    let nu = scenario.triplet.measure();
    if policy.use_shortcuts {
        if let Some(beta) = meta.growth_exponent {
            if beta < 1.0 {
                return done(Verdict::Feller, Rule::SublinearGrowth, alloc::format!("|σ(x)| ≍ |x|^{beta} with {beta} < 1"), Vec::new());
            }
            let pure_stable = nu.atoms().is_empty() && nu.density().is_none() && nu.window().is_full();
            if let (true, Some(s), (1, 1)) = (pure_stable, nu.stable(), scenario.dims()) {
                let a = s.alpha;
                let verdict = if beta * a < 1.0 + a { Verdict::Feller } else { Verdict::NotFeller };
                return done(verdict, Rule::StableGrowth, alloc::format!("βα = {} against 1 + α = {}", beta * a, 1.0 + a), Vec::new());
            }
        }
        match scenario.sigma.kind() {
            SigmaKind::GeneralizedOu => {
                let m: f64 = nu.atoms().iter().filter(|a| a.point[0] == -1.0).map(|a| a.mass).sum();
                let verdict = if m > 0.0 { Verdict::NotFeller } else { Verdict::Feller };
                return done(verdict, Rule::GeneralizedOuAtoms, alloc::format!("ν({{-1}} × ℝ) = {m}"), Vec::new());
            }
            SigmaKind::Linear { c } => {
                let m: f64 = nu
                    .atoms()
                    .iter()
                    .filter(|a| (crate::levy::dot(c, &a.point) + 1.0).abs() <= 1e-12)
                    .map(|a| a.mass)
                    .sum();
                let verdict = if m > 0.0 { Verdict::NotFeller } else { Verdict::Feller };
                return done(verdict, Rule::LinearSdeAtoms, alloc::format!("ν({{c·y = -1}}) = {m}"), Vec::new());
            }
            _ => {}
        }
    }
    if meta.linear_growth.is_none() && meta.growth_exponent.is_some_and(|b| b > 1.0) {
        return done(
            Verdict::Inconclusive,
            Rule::LinearGrowthPremise,
            "σ grows superlinearly; the criterion characterizes the Feller property only under linear growth".into(),
            Vec::new(),
        );
    }
    let mut profiles = Vec::with_capacity(policy.radii.len());
    for &r in &policy.radii {
        profiles.push(condition_profile(scenario, r, policy.x_min, policy.x_max, policy.n_points, &policy.rule, spec)?);
    }
    let verdict = if profiles.iter().any(|p| p.verdict == LimitVerdict::PositiveLimit) {
        Verdict::NotFeller
    } else if profiles.iter().all(|p| p.verdict == LimitVerdict::Vanishes) {
        Verdict::Feller
    } else {
        Verdict::Inconclusive
    };
    let detail = alloc::format!(
        "limits {:?} at radii {:?}",
        profiles.iter().map(|p| p.limit_estimate).collect::<Vec<_>>(),
        policy.radii
    );
    done(verdict, Rule::Profile, detail, profiles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{Density, DensityKind, LevyMeasure, StablePart};

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn poisson_scenario() -> Scenario {
        let nu = LevyMeasure::new(1).with_atom(vec![1.0], 1.0).unwrap();
        let sigma = CoefficientField::new(SigmaKind::Linear { c: vec![-1.0] }).unwrap();
        Scenario::new("poisson", LevyTriplet::pure_jump(nu), sigma, Uniqueness::Lipschitz).unwrap()
    }

    fn stable_power(beta: f64) -> Scenario {
        let nu = LevyMeasure::new(1).with_stable(StablePart::new(1.5, 1.0).unwrap()).unwrap();
        let sigma = CoefficientField::new(SigmaKind::PowerAbs { scale: 1.0, beta }).unwrap();
        Scenario::new("stable", LevyTriplet::pure_jump(nu), sigma, Uniqueness::DeclaredWeakUnique).unwrap()
    }

    #[test]
    fn poisson_mass_is_exactly_lambda() {
        let s = poisson_scenario();
        for x in [1.5, -3.0, 1e3, -1e7] {
            assert_eq!(condition_mass(&s, &[x], 1.0, &spec()).unwrap(), Mass::Finite { value: 1.0, stderr: 0.0 });
        }
        let p = condition_profile(&s, 1.0, 10.0, 1e4, 16, &LimitRule::default(), &spec()).unwrap();
        assert_eq!(p.verdict, LimitVerdict::PositiveLimit);
        assert!(p.accumulation.iter().all(|(_, v)| *v == 1.0));
    }

    #[test]
    fn stable_mass_scaling_oracle() {
        // |x|^{βα} · (s/α) (a^{-α} - b^{-α}) with (a, b) = (|x| - r, |x| + r).
        let s = stable_power(0.5);
        let (x, r) = (100.0, 1.0);
        let m = condition_mass(&s, &[x], r, &spec()).unwrap().value();
        let expect = x.powf(0.75) / 1.5 * ((x - r).powf(-1.5) - (x + r).powf(-1.5));
        assert!((m - expect).abs() <= 1e-14 * expect);
    }

    #[test]
    fn boundary_exponent_gives_positive_limit() {
        let s = stable_power(1.0 + 1.0 / 1.5);
        let p = condition_profile(&s, 1.0, 1e2, 1e5, 32, &LimitRule::default(), &spec()).unwrap();
        assert_eq!(p.verdict, LimitVerdict::PositiveLimit);
        assert!((p.limit_estimate - 2.0).abs() < 1e-3);
    }

    #[test]
    fn degenerate_sigma() {
        let nu = LevyMeasure::new(1).with_atom(vec![1.0], 2.0).unwrap();
        let sigma = CoefficientField::new(SigmaKind::Polynomial { coeffs: vec![0.0] }).unwrap();
        let s = Scenario::new("zero", LevyTriplet::pure_jump(nu), sigma, Uniqueness::Lipschitz).unwrap();
        assert_eq!(condition_mass(&s, &[0.5], 1.0, &spec()).unwrap().value(), 2.0);
        assert_eq!(condition_mass(&s, &[1.5], 1.0, &spec()).unwrap().value(), 0.0);
    }

    #[test]
    fn gou_limit_follows_the_atom_line() {
        let gauss = Density::new(DensityKind::Gaussian { mean: vec![0.0, 0.0], std: vec![0.3, 0.3], mass: 1.0 }).unwrap();
        let nu = LevyMeasure::new(2).with_atom(vec![-1.0, 0.5], 0.3).unwrap().with_density(gauss).unwrap();
        let sigma = CoefficientField::new(SigmaKind::GeneralizedOu).unwrap();
        let s = Scenario::new("gou", LevyTriplet::pure_jump(nu), sigma, Uniqueness::Lipschitz).unwrap();
        let m = condition_mass(&s, &[1e6], 1.0, &spec()).unwrap().value();
        assert!((m - 0.3).abs() < 1e-6, "{m}");
        let m = condition_mass(&s, &[1e6], 0.1, &spec()).unwrap().value();
        assert!(m < 1e-6);
    }

    #[test]
    fn classifier_rules() {
        let r = classify(&poisson_scenario(), &ClassifyPolicy::default(), &spec()).unwrap();
        assert_eq!((r.verdict, r.rule_fired), (Verdict::NotFeller, Rule::LinearSdeAtoms));
        let r = classify(&stable_power(1.0), &ClassifyPolicy::default(), &spec()).unwrap();
        assert_eq!((r.verdict, r.rule_fired), (Verdict::Feller, Rule::StableGrowth));
        let r = classify(&stable_power(2.0), &ClassifyPolicy::default(), &spec()).unwrap();
        assert_eq!(r.verdict, Verdict::NotFeller);
        let policy = ClassifyPolicy { use_shortcuts: false, ..Default::default() };
        let r = classify(&poisson_scenario(), &policy, &spec()).unwrap();
        assert_eq!((r.verdict, r.rule_fired), (Verdict::NotFeller, Rule::Profile));
    }

    #[test]
    fn limit_rule_edges() {
        let xs: Vec<f64> = (0..20).map(|i| 10f64.powf(1.0 + i as f64 / 19.0 * 3.0)).collect();
        let zeros = vec![0.0; 20];
        assert_eq!(limit_verdict(&xs, &zeros, &LimitRule::default()).0, LimitVerdict::Vanishes);
        let flat_small = vec![1e-9; 20];
        assert_eq!(limit_verdict(&xs, &flat_small, &LimitRule::default()).0, LimitVerdict::Inconclusive);
        let decay: Vec<f64> = xs.iter().map(|x| x.powf(-2.0)).collect();
        assert_eq!(limit_verdict(&xs, &decay, &LimitRule::default()).0, LimitVerdict::Vanishes);
    }
}
