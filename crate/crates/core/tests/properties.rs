use feller_core::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn spec() -> QuadratureSpec {
    QuadratureSpec::default()
}

fn atoms(points: &[(f64, f64)]) -> LevyMeasure {
    points.iter().fold(LevyMeasure::new(1), |m, &(y, w)| m.with_atom(vec![y], w).unwrap())
}

fn exp_density(scale: f64, rate: f64) -> Density {
    Density::new(DensityKind::Exponential { scale, rate }).unwrap()
}

fn atom_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((prop_oneof![-3.0..-0.05, 0.05..3.0f64], 0.01..2.0f64), 0..4)
}

fn constant(s: f64) -> CoefficientField {
    CoefficientField::new(SigmaKind::Constant(DMatrix::from_element(1, 1, s))).unwrap()
}

fn scenario(sigma: CoefficientField, nu: LevyMeasure) -> Scenario {
    Scenario::new("prop", LevyTriplet::pure_jump(nu), sigma, Uniqueness::Unknown).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exponent_is_additive(
        pts in atom_strategy(),
        b1 in -2.0..2.0f64, b2 in -2.0..2.0f64,
        q1 in 0.0..2.0f64, q2 in 0.0..2.0f64,
        rate in 0.5..4.0f64,
        xi in -6.0..6.0f64,
    ) {
        let d = exp_density(1.0, rate);
        let t1 = LevyTriplet::new(vec![b1], DMatrix::from_element(1, 1, q1), atoms(&pts)).unwrap();
        let t2 = LevyTriplet::new(vec![b2], DMatrix::from_element(1, 1, q2), LevyMeasure::new(1).with_density(d.clone()).unwrap()).unwrap();
        let sum = LevyTriplet::new(
            vec![b1 + b2],
            DMatrix::from_element(1, 1, q1 + q2),
            atoms(&pts).with_density(d).unwrap(),
        ).unwrap();
        let a = eval_exponent(&t1, &[xi], &spec()).unwrap() + eval_exponent(&t2, &[xi], &spec()).unwrap();
        let b = eval_exponent(&sum, &[xi], &spec()).unwrap();
        prop_assert!((a - b).norm() <= 1e-8 * (1.0 + b.norm()), "{} vs {}", a, b);
    }

    #[test]
    fn exponent_real_part_nonnegative_and_conjugate_symmetric(
        pts in atom_strategy(),
        b in -2.0..2.0f64,
        q in 0.0..2.0f64,
        alpha in 0.2..1.95f64,
        xi in -20.0..20.0f64,
    ) {
        let nu = atoms(&pts).with_stable(StablePart::new(alpha, 0.7).unwrap()).unwrap();
        let t = LevyTriplet::new(vec![b], DMatrix::from_element(1, 1, q), nu).unwrap();
        let p = eval_exponent(&t, &[xi], &spec()).unwrap();
        let m = eval_exponent(&t, &[-xi], &spec()).unwrap();
        prop_assert!(p.re >= -1e-12 * (1.0 + p.norm()), "Re ψ = {}", p.re);
        prop_assert!((p - m.conj()).norm() <= 1e-10 * (1.0 + p.norm()));
    }

    #[test]
    fn symbol_is_driver_exponent_at_transposed_frequency(
        pts in atom_strategy(),
        c in -3.0..3.0f64,
        x in -5.0..5.0f64,
        xi in -5.0..5.0f64,
    ) {
        let t = LevyTriplet::new(vec![0.3], DMatrix::from_element(1, 1, 0.4), atoms(&pts)).unwrap();
        let sigma = CoefficientField::new(SigmaKind::Linear { c: vec![c] }).unwrap();
        let q = state_symbol(&sigma, &t, &[x], &[xi], &spec()).unwrap();
        let direct = eval_exponent(&t, &[x * c * xi], &spec()).unwrap();
        prop_assert!((q - direct).norm() <= 1e-10 * (1.0 + direct.norm()));
        let zero = state_symbol(&sigma, &t, &[x], &[0.0], &spec()).unwrap();
        prop_assert!(zero.re == 0.0 && zero.im == 0.0);
    }

    #[test]
    fn generator_splits_into_truncated_and_tail(
        pts in atom_strategy(),
        s in 0.2..2.0f64,
        x in -3.0..3.0f64,
        r in 0.05..0.95f64,
    ) {
        let nu = atoms(&pts).with_density(exp_density(0.8, 1.5)).unwrap();
        let sc = scenario(constant(s), nu);
        let f = TestFunction::bump(vec![0.0], 2.0).unwrap();
        let a = generator_apply(&sc.sigma, &sc.triplet, &f, &[x], &spec()).unwrap();
        let b = truncated_generator_apply(&sc.sigma, &sc.triplet, r, &f, &[x], &spec()).unwrap();
        let n = tail_generator_apply(&sc.sigma, &sc.triplet, r, &f, &[x], &spec()).unwrap();
        let sp = spec();
        prop_assert!((a - b - n).abs() <= 10.0 * (sp.abs_tol + sp.rel_tol * a.abs()), "{} vs {} + {}", a, b, n);
    }

    #[test]
    fn condition_mass_is_monotone_in_r(
        pts in atom_strategy(),
        c in -2.0..2.0f64,
        x in -20.0..20.0f64,
        r1 in 0.05..3.0f64,
        dr in 0.0..3.0f64,
    ) {
        let nu = atoms(&pts).with_density(exp_density(1.0, 1.0)).unwrap();
        let sc = scenario(CoefficientField::new(SigmaKind::Linear { c: vec![c] }).unwrap(), nu);
        let m1 = condition_mass(&sc, &[x], r1, &spec()).unwrap();
        let m2 = condition_mass(&sc, &[x], r1 + dr, &spec()).unwrap();
        prop_assert!(m1.value() <= m2.value() + 1e-9, "{} > {}", m1.value(), m2.value());
    }

    #[test]
    fn condition_mass_is_the_preimage_mass(
        pts in atom_strategy(),
        s in prop_oneof![-2.0..-0.1, 0.1..2.0f64],
        x in -10.0..10.0f64,
        r in 0.05..3.0f64,
    ) {
        let nu = atoms(&pts).with_density(exp_density(1.0, 2.0)).unwrap();
        let sc = scenario(constant(s), nu.clone());
        let m = condition_mass(&sc, &[x], r, &spec()).unwrap();
        let set = SetDescriptor::AffinePreimage { matrix: DMatrix::from_element(1, 1, s), offset: vec![x], radius: r };
        let direct = set_mass(&nu, &set, &spec()).unwrap();
        // The same set as an interval of the line.
        let (a, b) = ((-r - x) / s, (r - x) / s);
        let interval = set_mass(&nu, &SetDescriptor::Interval { lo: a.min(b), hi: a.max(b) }, &spec()).unwrap();
        prop_assert!((m.value() - direct.value()).abs() <= 1e-9);
        prop_assert!((m.value() - interval.value()).abs() <= 1e-9);
    }

    #[test]
    fn paths_are_deterministic_and_cadlag(
        pts in prop::collection::vec((prop_oneof![-2.0..-0.05, 0.05..2.0f64], 0.5..3.0f64), 1..3),
        c in -1.5..1.5f64,
        x0 in -2.0..2.0f64,
        seed in 0u64..1000,
        index in 0u64..50,
    ) {
        let nu = atoms(&pts).with_stable(StablePart::new(1.2, 0.3).unwrap()).unwrap();
        let t = LevyTriplet::new(vec![0.2], DMatrix::from_element(1, 1, 0.1), nu).unwrap();
        let sigma = CoefficientField::new(SigmaKind::ShiftedPower { scale: c, beta: 0.5 }).unwrap();
        let sc = Scenario::new("prop", t, sigma, Uniqueness::Unknown).unwrap();
        let cfg = SimulationConfig { horizon: 0.5, dt: 1e-2, trunc_r: 0.5, master_seed: seed, ..Default::default() };
        let engine = PathEngine::new(&sc, &cfg, true).unwrap();
        let p = simulate_path(&engine, &cfg, &[x0], index);
        let again = simulate_path(&engine, &cfg, &[x0], index);
        prop_assert_eq!(&p, &again);
        prop_assert_eq!(p.times[0], 0.0);
        prop_assert_eq!(p.state(0), &[x0][..]);
        prop_assert!(p.times.windows(2).all(|w| w[0] < w[1]));
        prop_assert!((*p.times.last().unwrap() - 0.5).abs() < 1e-12);
        for j in &p.jump_log {
            let s = sc.sigma.eval_scalar(j.state_before[0]);
            prop_assert!((j.state_after[0] - (j.state_before[0] + s * j.jump[0])).abs() <= 1e-12 * (1.0 + j.state_after[0].abs()));
            prop_assert_eq!(j.large, j.jump[0].abs() > cfg.trunc_r);
            // The recorded value at a jump time is the post-jump state.
            let i = p.times.iter().rposition(|t| *t == j.time).expect("jump time on the grid");
            if p.jump_log.iter().filter(|k| k.time == j.time).count() == 1 {
                prop_assert_eq!(p.state(i)[0], j.state_after[0]);
            }
        }
    }
}
