use qbsde::conjugate::ConjugateHandle;
use qbsde::generators::{fixture, Coef, ConvexPart, GeneratorSpec};
use qbsde::solver::{picard_refine, solve, solve_dual, DualMode, Scheme, WarmStart};
use qbsde::stochastics::{ConstantControl, PathEnsemble, TerminalSpec, TimeGrid};
use qbsde::Error;

fn pure_quadratic() -> GeneratorSpec {
    GeneratorSpec::convex("pq", ConvexPart::pure_quadratic(1.0), Coef::ZERO, 1.0)
}

/// Backward induction on the recombining lattice `x_j = (2j − k)√Δt`, with
/// `Z = −(V_up − V_dn)/(2√Δt)` and `V = (V_up + V_dn)/2 − g(t, x, Z)Δt`.
fn lattice_oracle(gen: &GeneratorSpec, xi: impl Fn(f64) -> f64, horizon: f64, n: usize) -> f64 {
    let dt = horizon / n as f64;
    let h = dt.sqrt();
    let mut v: Vec<f64> = (0..=n).map(|j| xi((2.0 * j as f64 - n as f64) * h)).collect();
    for k in (0..n).rev() {
        let t = k as f64 * dt;
        v = (0..=k)
            .map(|j| {
                let x = (2.0 * j as f64 - k as f64) * h;
                let (dn, up) = (v[j], v[j + 1]);
                let z = -(up - dn) / (2.0 * h);
                0.5 * (up + dn) - gen.eval(t, &[x], &[z]) * dt
            })
            .collect();
    }
    v[0]
}

#[test]
fn tree_oracle_matches_fixtures() {
    for name in ["pure_quadratic(1)", "example_iii", "example_ii", "example_i"] {
        let fx = fixture(name).unwrap();
        let horizon = 0.5;
        let n = 10;
        let g = TimeGrid::uniform(horizon, n).unwrap();
        let ens = PathEnsemble::binary_tree(&g).unwrap();
        // Off-centre kink: a symmetric terminal makes Z vanish at grid nodes, where
        // the root moduli amplify rounding in the atom averages.
        let term = TerminalSpec::custom("|B_T - 0.05|", None, |p| (p.node(p.steps())[0] - 0.05).abs());
        let s = solve(&fx.generator, &term, &ens, &Scheme::default()).unwrap();
        let oracle = lattice_oracle(&fx.generator, |x| (x - 0.05).abs(), horizon, n);
        assert!((s.y0.mean - oracle).abs() < 1e-12, "{name}: {} vs {oracle}", s.y0.mean);
        assert!((s.y_at(0, 0) - oracle).abs() < 1e-12);
    }
}

#[test]
fn cole_hopf_closed_form() {
    let g = TimeGrid::uniform(1.0, 50).unwrap();
    let ens = PathEnsemble::simulate(&g, 1, 50_000, 2024).unwrap();
    let s = solve(&pure_quadratic(), &TerminalSpec::linear(vec![1.0]), &ens, &Scheme::default()).unwrap();
    assert!((s.y0.mean + 0.5).abs() < 0.03, "{:?}", s.y0);
    for k in 1..50 {
        let z = s.mean_z(k, 0).mean;
        assert!((z + 1.0).abs() < 0.05, "k={k}: {z}");
    }
    assert_eq!(s.residuals.clip_count, 0);
    assert_eq!(s.residuals.one_step_violations, 0);
}

#[test]
fn cole_hopf_abs_terminal() {
    // Y_0 = −ln E[e^{−|B_1|}] = −ln(2 e^{1/2} Φ(−1)).
    let g = TimeGrid::uniform(1.0, 40).unwrap();
    let ens = PathEnsemble::simulate(&g, 1, 50_000, 77).unwrap();
    let s = solve(&pure_quadratic(), &TerminalSpec::abs(vec![1.0]), &ens, &Scheme::default()).unwrap();
    let exact = -(2.0 * 0.5f64.exp() * qbsde::numerics::normal_cdf(-1.0)).ln();
    assert!((s.y0.mean - exact).abs() < 0.03, "{} vs {exact}", s.y0.mean);
}

#[test]
fn picard_fixed_point_and_zero_warm_start() {
    let g = TimeGrid::uniform(1.0, 20).unwrap();
    let ens = PathEnsemble::simulate(&g, 1, 5000, 3).unwrap();
    let gen = pure_quadratic();
    let term = TerminalSpec::linear(vec![1.0]);
    let s = solve(&gen, &term, &ens, &Scheme::default()).unwrap();
    let r = picard_refine(&s, &gen, &term, &ens, 2).unwrap();
    assert_eq!(r.y, s.y);
    assert_eq!(r.z, s.z);
    assert!(r.residuals.contraction.iter().all(|&c| c == 0.0));

    // Seeded sweeps fix the last n steps exactly after n passes and contract
    // like T^n/n! elsewhere; at T = 1 three passes leave about 6e-3, five pass.
    let scheme = Scheme {
        picard_iterations: 5,
        warm_start: WarmStart::Zero,
        ..Scheme::default()
    };
    let p = solve(&gen, &term, &ens, &scheme).unwrap();
    let gaps = &p.residuals.picard_gaps;
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    let gap = *gaps.last().unwrap();
    assert!(gap < 1e-3 * (1.0 + p.y0.mean.abs()), "{gaps:?}");
    let loose = Scheme { picard_iterations: 3, picard_tolerance: 1e-2, ..scheme.clone() };
    assert!(solve(&gen, &term, &ens, &loose).is_ok());
    let tight = Scheme { picard_iterations: 3, ..scheme };
    assert!(matches!(solve(&gen, &term, &ens, &tight), Err(Error::PicardNonConvergence { .. })));
}

#[test]
fn small_radius_warns() {
    let g = TimeGrid::uniform(1.0, 10).unwrap();
    let ens = PathEnsemble::simulate(&g, 1, 2000, 3).unwrap();
    let gen = GeneratorSpec::convex("steep", ConvexPart::pure_quadratic(8.0), Coef::ZERO, 8.0);
    let scheme = Scheme {
        truncation_radius: Some(0.05),
        ..Scheme::default()
    };
    let s = solve(&gen, &TerminalSpec::linear(vec![2.0]), &ens, &scheme).unwrap();
    assert!(s.residuals.clip_count * 10 > s.residuals.evaluations);
    assert!(!s.residuals.warnings.is_empty());
}

#[test]
fn growth_precondition_is_enforced() {
    let g = TimeGrid::uniform(1.0, 4).unwrap();
    let ens = PathEnsemble::simulate(&g, 1, 100, 3).unwrap();
    // |z|³ outgrows any quadratic bound on a large enough ball.
    let gen = GeneratorSpec::convex("cubic", ConvexPart::Power { scale: 1.0, power: 3.0 }, Coef::ZERO, 1.0);
    let r = solve(&gen, &TerminalSpec::linear(vec![1.0]), &ens, &Scheme::default());
    assert!(matches!(r, Err(Error::Precondition(_))));
}

#[test]
fn dual_fast_path_and_regressed_path_agree() {
    let g = TimeGrid::uniform(1.0, 20).unwrap();
    let ens = PathEnsemble::simulate(&g, 1, 20_000, 8).unwrap();
    let mut gen = fixture("example_iii").unwrap().generator;
    let h0 = ConjugateHandle::new(&gen);
    let term = TerminalSpec::linear(vec![1.0]);
    let c = ConstantControl(vec![-0.5]);
    let full = solve_dual(&gen, &h0, &term, &ens, &c, &Scheme::default(), DualMode::FreshPaths).unwrap();
    // Dropping the perturbation switches to the expectation-only path.
    gen.g2 = qbsde::generators::Perturbation::Zero;
    let h1 = ConjugateHandle::new(&gen);
    let fast = solve_dual(&gen, &h1, &term, &ens, &c, &Scheme::default(), DualMode::FreshPaths).unwrap();
    // f1(−½) = ⅛ and E^Q[B_1] = −½.
    assert!((fast.solution.y0.mean - (-0.5 + 0.125)).abs() < 4.0 * fast.solution.y0.std_error);
    assert!(full.solution.y0.mean < fast.solution.y0.mean);
}
