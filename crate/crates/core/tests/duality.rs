use qbsde::conjugate::{subgradient_unchecked, ConjugateHandle};
use qbsde::duality::{
    audit_admissibility, comparison_check, default_crosscheck_schemes, duality_certificate, extract_optimal_control,
    optimal_control_table, reflect, reflect_terminal, uniqueness_crosscheck, z_moment_check, ComparisonConfig,
    ControlFamily, DualityConfig, Problem,
};
use qbsde::generators::{fixture, Coef, ConvexPart, GeneratorSpec};
use qbsde::solver::{solve, Scheme};
use qbsde::stochastics::{doleans, relative_entropy, ConstantControl, FnControl, PathEnsemble, TerminalSpec, TimeGrid};
use qbsde::Error;

fn pq() -> GeneratorSpec {
    fixture("pure_quadratic(1)").unwrap().generator
}

fn ensemble(n: usize, m: usize, seed: u64) -> PathEnsemble {
    PathEnsemble::simulate(&TimeGrid::uniform(1.0, n).unwrap(), 1, m, seed).unwrap()
}

#[test]
fn qstar_of_cole_hopf_is_minus_one() {
    let ens = ensemble(20, 20_000, 5);
    let sol = solve(&pq(), &TerminalSpec::linear(vec![1.0]), &ens, &Scheme::default()).unwrap();
    let cp = extract_optimal_control(&sol, &pq(), &ens).unwrap();
    let mut sum = 0.0;
    for i in 0..ens.paths {
        for k in 0..ens.steps() {
            sum += cp.q(i, k)[0];
        }
    }
    let mean = sum / (ens.paths * ens.steps()) as f64;
    assert!((mean + 1.0).abs() < 0.02, "{mean}");
}

#[test]
fn qstar_of_zero_generator_is_zero() {
    let gen = GeneratorSpec::convex("zero", ConvexPart::Zero, Coef::ZERO, 1.0);
    let ens = ensemble(10, 2000, 6);
    let sol = solve(&gen, &TerminalSpec::abs(vec![1.0]), &ens, &Scheme::default()).unwrap();
    let table = optimal_control_table(&sol, &gen, &ens).unwrap();
    assert!(table.values.iter().all(|&q| q == 0.0));
}

#[test]
fn qstar_of_example_iv_matches_radial_derivative() {
    let gen = fixture("example_iv").unwrap().generator;
    let ens = ensemble(10, 2000, 7);
    let sol = solve(&gen, &TerminalSpec::abs(vec![1.0]), &ens, &Scheme::default()).unwrap();
    // g1 has no supporting hyperplane near z = 0, so the checked table refuses it.
    assert!(matches!(optimal_control_table(&sol, &gen, &ens), Err(Error::NonConvex(_))));
    let h = 1e-6;
    let mut checked = 0;
    for i in 0..ens.paths {
        for k in 0..ens.steps() {
            let z = sol.z_at(i, k)[0];
            if z.abs() < 1e-3 {
                continue;
            }
            let t = ens.grid.t(k);
            let b = ens.value(i, k);
            let q = subgradient_unchecked(&gen, t, b, &[z])[0];
            let fd = (gen.eval_g1(t, b, &[z + h]) - gen.eval_g1(t, b, &[z - h])) / (2.0 * h);
            assert!((q - fd).abs() < 1e-6, "z={z}: {q} vs {fd}");
            assert!((q - (1.0 - 1.0 / z.abs()) * z).abs() < 1e-12);
            checked += 1;
        }
    }
    assert!(checked > ens.paths);
}

#[test]
fn audit_of_zero_control_is_exact() {
    let ens = ensemble(10, 5000, 8);
    let cp = doleans(&ConstantControl(vec![0.0]), &ens).unwrap();
    let r = audit_admissibility(&cp, &ConjugateHandle::new(&pq()), &TerminalSpec::linear(vec![1.0]), &ens).unwrap();
    assert_eq!(r.l2_under_q.mean, 0.0);
    assert_eq!(r.martingale_proxy.estimate.mean, 1.0);
    assert!(r.passed, "{:?}", r.reasons);
}

#[test]
fn audit_of_unit_control() {
    let ens = ensemble(20, 50_000, 9);
    let cp = doleans(&ConstantControl(vec![1.0]), &ens).unwrap();
    let r = audit_admissibility(&cp, &ConjugateHandle::new(&pq()), &TerminalSpec::linear(vec![1.0]), &ens).unwrap();
    assert!(r.passed, "{:?}", r.reasons);
    assert!((r.l2_under_q.mean - 1.0).abs() < 0.05, "{:?}", r.l2_under_q);
    let e = r.entropy_budget.unwrap();
    assert!((e.primal.mean - 0.5).abs() <= 4.0 * e.primal.std_error.max(1e-3), "{:?}", e.primal);
    assert!((e.dual.mean - 0.5).abs() < 0.03, "{:?}", e.dual);
    let e2 = relative_entropy(&cp, &ens).unwrap();
    assert_eq!(e2.primal.mean, e.primal.mean);
}

#[test]
fn audit_of_exploding_control_fails() {
    let g = TimeGrid::uniform(1.0, 20).unwrap();
    let ens = PathEnsemble::simulate(&g, 1, 5000, 10).unwrap();
    let dt = g.dt(0);
    let ctrl = FnControl::new("10k", move |t, _b, out| out[0] = 10.0 * (t / dt).round());
    let cp = doleans(&ctrl, &ens).unwrap();
    let r = audit_admissibility(&cp, &ConjugateHandle::new(&pq()), &TerminalSpec::linear(vec![1.0]), &ens).unwrap();
    assert!(!r.passed);
    assert!(!r.reasons.is_empty());
}

#[test]
fn certificate_on_pure_quadratic() {
    let ens = ensemble(20, 40_000, 11);
    let gen = pq();
    let handle = ConjugateHandle::new(&gen);
    let family = ControlFamily::grid(-2.0, 2.0, 9, 1);
    let r = duality_certificate(
        &gen,
        &handle,
        &TerminalSpec::linear(vec![1.0]),
        &ens,
        &family,
        &Scheme::default(),
        &DualityConfig::default(),
    )
    .unwrap();
    assert!(r.passed, "{r:#?}");
    assert!(r.gap.abs() <= 0.02, "{}", r.gap);
    assert!((r.primal_y0.mean + 0.5).abs() < 0.03);
    // Y^c_0 = c + c²/2 for the constant control c.
    for (j, v) in r.dual_values.iter().take(9).enumerate() {
        let c = -2.0 + 0.5 * j as f64;
        let y = v.y0.unwrap_or_else(|| panic!("{v:#?}")).mean;
        assert!((y - (c + 0.5 * c * c)).abs() < 0.05, "c={c}: {y}");
    }
    let reweighted = r.qstar_reweighted.unwrap().mean;
    assert!((reweighted - r.primal_y0.mean).abs() < 0.02, "{reweighted}");
    let m = r.minimizer.unwrap();
    assert!(m == "constant [-1.0]" || m.starts_with("q*"), "{m}");
}

#[test]
fn certificate_with_only_the_zero_control() {
    let gen = GeneratorSpec::convex("zero", ConvexPart::Zero, Coef::ZERO, 1.0);
    let ens = ensemble(10, 5000, 12);
    let family = ControlFamily {
        constants: vec![vec![0.0]],
        include_qstar: false,
    };
    let r = duality_certificate(
        &gen,
        &ConjugateHandle::new(&gen),
        &TerminalSpec::linear(vec![1.0]),
        &ens,
        &family,
        &Scheme::default(),
        &DualityConfig::default(),
    )
    .unwrap();
    assert!(r.passed);
    assert!((r.dual_values[0].y0.unwrap().mean - r.primal_y0.mean).abs() < 1e-12);
}

#[test]
fn crosscheck_on_pure_quadratic() {
    let ens = ensemble(20, 20_000, 13);
    let schemes = default_crosscheck_schemes();
    let r = uniqueness_crosscheck(&pq(), &TerminalSpec::linear(vec![1.0]), &ens, &schemes, 0.02).unwrap();
    assert!(r.passed, "{r:#?}");
    assert_eq!(r.pairs.len(), 3);
    assert!(!r.notes.is_empty());
    let one = &schemes[..1];
    assert!(matches!(
        uniqueness_crosscheck(&pq(), &TerminalSpec::linear(vec![1.0]), &ens, one, 0.02),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn comparison_with_terminal_shift() {
    let ens = ensemble(20, 10_000, 14);
    let p = Problem {
        generator: pq(),
        terminal: TerminalSpec::linear(vec![1.0]),
    };
    let p2 = Problem {
        generator: pq(),
        terminal: TerminalSpec::linear(vec![1.0]).shifted(1.0),
    };
    let r = comparison_check(&p, &p2, &ens, &Scheme::default(), &ComparisonConfig::default()).unwrap();
    assert!(r.passed && r.check.passed);
    for g in &r.mean_gap {
        assert!((g.mean - 1.0).abs() < 0.02, "{g:?}");
    }
    let same = comparison_check(&p, &p, &ens, &Scheme::default(), &ComparisonConfig::default()).unwrap();
    assert!(same.passed);
    assert!(same.mean_gap.iter().all(|g| g.mean == 0.0));
    assert!(matches!(
        comparison_check(&p2, &p, &ens, &Scheme::default(), &ComparisonConfig::default()),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn comparison_with_generator_shift() {
    let ens = ensemble(20, 10_000, 15);
    let lowered = GeneratorSpec::convex(
        "pq - 1",
        ConvexPart::Quadratic {
            a: Coef::constant(0.5),
            c: Coef::constant(-1.0),
        },
        Coef::constant(1.0),
        1.0,
    );
    let term = TerminalSpec::abs(vec![1.0]);
    let p = Problem {
        generator: pq(),
        terminal: term.clone(),
    };
    let p2 = Problem {
        generator: lowered,
        terminal: term,
    };
    let r = comparison_check(&p, &p2, &ens, &Scheme::default(), &ComparisonConfig::default()).unwrap();
    assert!(r.passed);
    for (k, g) in r.mean_gap.iter().enumerate() {
        let expected = 1.0 - ens.grid.t(k);
        assert!((g.mean - expected).abs() < 0.02, "k={k}: {} vs {expected}", g.mean);
    }
    assert!(matches!(
        comparison_check(&p2, &p, &ens, &Scheme::default(), &ComparisonConfig::default()),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn reflection_flips_the_solution() {
    let gen = pq();
    assert_eq!(reflect(&gen).eval(0.0, &[0.0], &[2.0]), -2.0);
    let rr = reflect(&reflect(&gen));
    for z in [-3.0, -0.5, 0.0, 0.7, 4.0] {
        assert!((rr.eval(0.3, &[0.1], &[z]) - gen.eval(0.3, &[0.1], &[z])).abs() <= 1e-14);
    }
    let ens = ensemble(20, 10_000, 16);
    let term = TerminalSpec::abs(vec![1.0]);
    let s = solve(&gen, &term, &ens, &Scheme::default()).unwrap();
    let r = solve(&reflect(&gen), &reflect_terminal(&term), &ens, &Scheme::default()).unwrap();
    for k in 0..=ens.steps() {
        assert!((s.mean_y(k).mean + r.mean_y(k).mean).abs() < 1e-9, "k={k}");
    }
    for k in 0..ens.steps() {
        assert!((s.mean_z(k, 0).mean + r.mean_z(k, 0).mean).abs() < 1e-9, "k={k}");
    }
}

#[test]
fn z_moments() {
    let ens = ensemble(20, 20_000, 17);
    let sol = solve(&pq(), &TerminalSpec::linear(vec![1.0]), &ens, &Scheme::default()).unwrap();
    let r = z_moment_check(&sol, &[0.1, 0.5, 1.0], &[1.0, 2.0]).unwrap();
    for row in &r.eta {
        let exact = row.parameter.exp();
        assert!((row.estimate.estimate / exact - 1.0).abs() < 0.05, "{row:?}");
        assert!(row.stable);
    }
    assert_eq!(r.largest_stable_eta, Some(1.0));

    let flat = solve(&pq(), &TerminalSpec::constant(2.0), &ens, &Scheme::default()).unwrap();
    let r = z_moment_check(&flat, &[0.5, 1.0], &[1.0]).unwrap();
    // Z is zero up to regression rounding.
    assert!(r.eta.iter().chain(&r.lambda).all(|row| (row.estimate.estimate - 1.0).abs() < 1e-6), "{r:#?}");
}

#[test]
fn z_moments_of_example_ii() {
    let fx = fixture("example_ii").unwrap();
    let ens = ensemble(20, 20_000, 18);
    let sol = solve(&fx.generator, &fx.terminal, &ens, &Scheme::default()).unwrap();
    let r = z_moment_check(&sol, &[0.05, 0.1], &[1.0, 2.0]).unwrap();
    assert!(r.eta.iter().chain(&r.lambda).all(|row| row.stable && row.estimate.estimate.is_finite()), "{r:#?}");
}
