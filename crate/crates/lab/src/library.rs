//! Built-in scenarios, addressable by name wherever a scenario file is accepted.

use feller_core::Uniqueness;

use crate::schema::{
    AtomSpec, DensitySpec, Dims, Expected, ExpectedVerdict, MeasureSpec, ScenarioFile, ScenarioSpec, SigmaSpec,
    StableSpec, TripletSpec, SCHEMA_VERSION,
};

fn file(spec: ScenarioSpec, expected: Option<(ExpectedVerdict, &str)>) -> ScenarioFile {
    ScenarioFile {
        schema_version: SCHEMA_VERSION,
        scenario: spec,
        expected: expected.map(|(verdict, label)| Expected { verdict, symbol_formula_label: Some(label.into()) }),
    }
}

fn spec(label: &str, d: usize, k: usize, u: Uniqueness, triplet: TripletSpec, sigma: SigmaSpec) -> ScenarioSpec {
    ScenarioSpec { label: label.into(), dims: Dims { d, k }, uniqueness: u, triplet, sigma, meta: None }
}

fn pure_jump(k: usize, measure: MeasureSpec) -> TripletSpec {
    TripletSpec { drift: vec![0.0; k], covariance: vec![vec![0.0; k]; k], measure }
}

fn atoms(list: &[(&[f64], f64)]) -> Vec<AtomSpec> {
    list.iter().map(|(p, m)| AtomSpec { point: p.to_vec(), mass: *m }).collect()
}

fn stable(alpha: f64) -> MeasureSpec {
    MeasureSpec { stable: Some(StableSpec { alpha, scale: None, normalized: true }), ..Default::default() }
}

fn unit() -> SigmaSpec {
    SigmaSpec::Constant { matrix: vec![vec![1.0]] }
}

fn gou(atom: [f64; 2], label: &str, verdict: ExpectedVerdict) -> ScenarioFile {
    let measure = MeasureSpec {
        atoms: atoms(&[(&atom, 0.3)]),
        density: Some(DensitySpec::Gaussian { mean: vec![0.0, 0.0], std: vec![0.3, 0.3], mass: 1.0 }),
        stable: None,
    };
    file(
        spec(label, 1, 2, Uniqueness::Lipschitz, pure_jump(2, measure), SigmaSpec::GeneralizedOu),
        Some((verdict, "q(x,ξ) = ψ_L(xξ₁ + ξ₂)")),
    )
}

fn linear(second: [f64; 2], label: &str, verdict: ExpectedVerdict) -> ScenarioFile {
    let measure = MeasureSpec { atoms: atoms(&[(&[1.0, 0.0], 0.5), (&second, 0.4)]), ..Default::default() };
    file(
        spec(label, 1, 2, Uniqueness::Lipschitz, pure_jump(2, measure), SigmaSpec::Linear { c: vec![1.0, 0.5] }),
        Some((verdict, "q(x,ξ) = ψ_L(x c ξ)")),
    )
}

/// Every built-in scenario, in a fixed order.
pub fn all() -> Vec<(&'static str, ScenarioFile)> {
    use ExpectedVerdict::*;
    vec![
        (
            "intro-poisson-counterexample",
            file(
                spec(
                    "intro-poisson-counterexample",
                    1,
                    1,
                    Uniqueness::Lipschitz,
                    pure_jump(1, MeasureSpec { atoms: atoms(&[(&[1.0], 1.0)]), ..Default::default() }),
                    SigmaSpec::Linear { c: vec![-1.0] },
                ),
                Some((NotFeller, "q(x,ξ) = λ(1 - e^{-ixξ})")),
            ),
        ),
        (
            "example-4.1-sublinear",
            file(
                spec(
                    "example-4.1-sublinear",
                    1,
                    1,
                    Uniqueness::Lipschitz,
                    pure_jump(1, stable(1.5)),
                    SigmaSpec::ShiftedPower { scale: 1.0, beta: 0.5 },
                ),
                Some((Feller, "q(x,ξ) = |σ(x)ξ|^α")),
            ),
        ),
        (
            "example-4.2-stable-beta",
            file(
                spec(
                    "example-4.2-stable-beta",
                    1,
                    1,
                    Uniqueness::Unknown,
                    pure_jump(1, stable(1.5)),
                    SigmaSpec::PowerAbs { scale: 1.0, beta: 0.8 },
                ),
                Some((Feller, "q(x,ξ) = |x|^{βα}|ξ|^α")),
            ),
        ),
        ("example-4.3-gou", gou([-1.0, 0.5], "example-4.3-gou", NotFeller)),
        ("example-4.3-gou-feller", gou([-0.9, 0.5], "example-4.3-gou-feller", Feller)),
        ("example-4.4-linear", linear([0.5, 2.0], "example-4.4-linear", Feller)),
        ("example-4.4-linear-critical", linear([-2.0, 2.0], "example-4.4-linear-critical", NotFeller)),
        (
            "example-4.5-ode",
            file(
                spec(
                    "example-4.5-ode",
                    1,
                    1,
                    Uniqueness::DeclaredWeakUnique,
                    TripletSpec { drift: vec![1.0], covariance: vec![vec![0.0]], measure: MeasureSpec::default() },
                    SigmaSpec::Polynomial { coeffs: vec![0.0, 0.0, 0.0, -1.0] },
                ),
                None,
            ),
        ),
        (
            "brownian-unit",
            file(
                spec(
                    "brownian-unit",
                    1,
                    1,
                    Uniqueness::Lipschitz,
                    TripletSpec { drift: vec![0.0], covariance: vec![vec![1.0]], measure: MeasureSpec::default() },
                    unit(),
                ),
                Some((Feller, "q(x,ξ) = ξ²/2")),
            ),
        ),
        (
            "stable-bounded",
            file(
                spec("stable-bounded", 1, 1, Uniqueness::Lipschitz, pure_jump(1, stable(1.5)), unit()),
                Some((Feller, "q(x,ξ) = |ξ|^α")),
            ),
        ),
        (
            "compound-poisson-unit",
            file(
                spec(
                    "compound-poisson-unit",
                    1,
                    1,
                    Uniqueness::Lipschitz,
                    pure_jump(1, MeasureSpec { atoms: atoms(&[(&[0.6], 1.0), (&[-1.3], 0.5)]), ..Default::default() }),
                    unit(),
                ),
                Some((Feller, "q(x,ξ) = Σ m_j(1 - e^{iy_jξ}) + compensator")),
            ),
        ),
    ]
}

pub fn names() -> Vec<&'static str> {
    all().into_iter().map(|(n, _)| n).collect()
}

pub fn get(name: &str) -> Option<ScenarioFile> {
    all().into_iter().find(|(n, _)| *n == name).map(|(_, f)| f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_entry_builds_and_round_trips() {
        for (name, f) in all() {
            let s = f.build().unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.label, name);
            assert_eq!(ScenarioFile::from_json(&f.to_json()).unwrap(), f);
        }
    }

    #[test]
    fn poisson_entry_matches_its_definition() {
        let s = get("intro-poisson-counterexample").unwrap().build().unwrap();
        assert_eq!(s.sigma.eval_scalar(3.0), -3.0);
        let a = &s.triplet.measure().atoms()[0];
        assert_eq!((a.point[0], a.mass), (1.0, 1.0));
        let g = get("example-4.3-gou").unwrap().build().unwrap();
        assert_eq!(g.sigma.eval(&[2.0]).as_slice(), &[2.0, 1.0]);
    }
}
