//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Criteria listed in `KNOWN_RED` are expected to fail; the test asserts
//! that everything else passes and that nothing outside the list fails.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use qbsde::conjugate::{fenchel_inequality_check, lambda_superlinearity_check, ConjugateHandle, MajorantFamily};
use qbsde::generators::{fixture, Coef, ConvexPart, GeneratorSpec};
use qbsde::solver::{solve, Scheme};
use qbsde::stochastics::{doleans, relative_entropy, ConstantControl, PathEnsemble, TerminalSpec, TimeGrid};
use qbsde_cli::config::GeneratorSource;
use qbsde_cli::{reproduce, run, ExperimentConfig, RunOptions, RunOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

/// Example_iv's declared strong-convexity candidate (ε = 1, c = 1) is false
/// for g1 = ½|z|² − |z|; see the decisions ledger.
const KNOWN_RED: &[usize] = &[9];

struct Line {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn emit(l: &Line) {
    // Written to the process stdout directly so it survives output capture.
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "{} [{:>2}] {}: {}",
        if l.passed { "PASS" } else { "FAIL" },
        l.id,
        l.name,
        l.detail
    );
    let _ = out.flush();
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).unwrap()
}

fn run_in(dir: &Path, cfg: ExperimentConfig, threads: Option<usize>) -> RunOutcome {
    run(
        cfg,
        &RunOptions {
            out: dir.to_path_buf(),
            threads,
            ..Default::default()
        },
    )
    .unwrap()
}

fn report(o: &RunOutcome) -> Value {
    serde_json::from_slice(&std::fs::read(o.dir.join("report.json")).unwrap()).unwrap()
}

fn c1_cole_hopf(dir: &Path) -> (bool, String) {
    let cfg = config(
        r#"
seed = 2024
generator = "pure_quadratic(1)"
terminal = { kind = "linear", weights = [1.0] }
[grid]
horizon = 1.0
steps = 50
[ensemble]
paths = 200000
"#,
    );
    let start = Instant::now();
    let o = run_in(dir, cfg, Some(1));
    let secs = start.elapsed().as_secs_f64();
    let y0 = o.metric("y0").unwrap();
    let rep = report(&o);
    let mean_z = rep["report"]["mean_z"].as_array().unwrap();
    let n = mean_z.len();
    let z_err = (1..n)
        .map(|k| (mean_z[k][0]["mean"].as_f64().unwrap() + 1.0).abs())
        .fold(0.0, f64::max);
    let ok = (y0 + 0.5).abs() <= 0.03 && z_err <= 0.05 && secs <= 60.0;
    (ok, format!("Y0 = {y0:.5} (|err| {:.5} ≤ 0.03), max interior |mean Z + 1| = {z_err:.4} ≤ 0.05, {secs:.1}s ≤ 60s on 1 worker", (y0 + 0.5).abs()))
}

/// Backward induction on the recombining lattice `x_j = (2j − k)√Δt`.
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

fn c2_tree() -> (bool, String) {
    let n = 12;
    let grid = TimeGrid::uniform(1.0, n).unwrap();
    let ens = PathEnsemble::binary_tree(&grid).unwrap();
    let term = TerminalSpec::custom("|B_T - 0.05|", None, |p| (p.node(p.steps())[0] - 0.05).abs());
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for name in ["example_i", "example_iii"] {
        let g = fixture(name).unwrap().generator;
        let s = solve(&g, &term, &ens, &Scheme::default()).unwrap();
        let oracle = lattice_oracle(&g, |x| (x - 0.05).abs(), 1.0, n);
        let err = (s.y0.mean - oracle).abs().max((s.y_at(0, 0) - oracle).abs());
        worst = worst.max(err);
        parts.push(format!("{name} Y0 = {:.12} vs {oracle:.12}", s.y0.mean));
    }
    (worst <= 1e-12, format!("N = {n}, {}; max error {worst:.2e} ≤ 1e-12", parts.join(", ")))
}

fn c3_conjugate() -> (bool, String) {
    let qs: Vec<f64> = (0..100).map(|i| -10.0 + 20.0 * i as f64 / 99.0).collect();
    let mut worst_quad: f64 = 0.0;
    for gamma in [0.5, 1.0, 4.0] {
        let g = GeneratorSpec::convex("quad", ConvexPart::pure_quadratic(gamma), Coef::ZERO, gamma);
        // Both the closed-form route and the numeric search must match.
        for h in [ConjugateHandle::new(&g), ConjugateHandle::numeric(&g)] {
            for &q in &qs {
                let v = h.transform(0.0, &[0.0], &[q]).unwrap();
                worst_quad = worst_quad.max((v - q * q / (2.0 * gamma)).abs());
            }
        }
    }
    let g = fixture("example_iv").unwrap().generator;
    let h = ConjugateHandle::new(&g);
    let mut worst_iv: f64 = 0.0;
    for &q in &qs {
        let v = h.transform(0.0, &[0.0], &[q]).unwrap();
        // Independent oracle: brute-force sup of qz − ½z² + |z| on a fine grid,
        // refined around the best node.
        let f = |z: f64| q * z - 0.5 * z * z + z.abs();
        let mut best = (0.0, f(0.0));
        for i in -200_000..=200_000 {
            let z = i as f64 * 1e-4;
            if f(z) > best.1 {
                best = (z, f(z));
            }
        }
        let (mut a, mut b) = (best.0 - 1e-4, best.0 + 1e-4);
        for _ in 0..100 {
            let (m1, m2) = (a + (b - a) / 3.0, b - (b - a) / 3.0);
            if f(m1) < f(m2) {
                a = m1;
            } else {
                b = m2;
            }
        }
        let brute = f(0.5 * (a + b)).max(best.1);
        let closed = 0.5 * (q.abs() + 1.0).powi(2);
        worst_iv = worst_iv.max((v - closed).abs()).max((brute - closed).abs());
    }
    let ok = worst_quad <= 1e-6 && worst_iv <= 1e-5;
    (
        ok,
        format!("½γ|z|²: max error {worst_quad:.2e} ≤ 1e-6 (γ ∈ {{0.5, 1, 4}}, analytic and numeric); ½|z|² − |z|: max error {worst_iv:.2e} ≤ 1e-5"),
    )
}

fn c4_fenchel() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let gens: Vec<GeneratorSpec> = ["pure_quadratic(1)", "pure_quadratic(4)", "gtilde", "example_ii", "example_iii"]
        .iter()
        .map(|n| fixture(n).unwrap().generator)
        .collect();
    let mut young_viol = 0;
    for _ in 0..10_000 {
        let g = &gens[rng.random_range(0..gens.len())];
        let (q, z, b, t) = (
            rng.random_range(-6.0..6.0),
            rng.random_range(-10.0..10.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(0.0..1.0),
        );
        let f1 = ConjugateHandle::new(g).transform(t, &[b], &[q]).unwrap();
        if f1 + g.eval_g1(t, &[b], &[z]) < q * z - 1e-10 {
            young_viol += 1;
        }
    }
    let mut ineq_viol = 0;
    let mut worst_eq: f64 = 0.0;
    for _ in 0..10_000 {
        let (x, y, p) = (rng.random_range(-3.0..3.0), rng.random_range(1e-3..20.0), rng.random_range(0.2..3.0));
        let o = fenchel_inequality_check(x, y, p).unwrap();
        if o.lhs > o.rhs + 1e-10 {
            ineq_viol += 1;
        }
        // Equality locus y = p·e^{px}; for p = 1 this is y = e^x.
        let e = fenchel_inequality_check(x, p * (p * x).exp(), p).unwrap();
        worst_eq = worst_eq.max((e.lhs - e.rhs).abs() / (1.0 + e.lhs.abs()));
    }
    let o = fenchel_inequality_check(1.0, std::f64::consts::E, 1.0).unwrap();
    worst_eq = worst_eq.max((o.lhs - o.rhs).abs());
    let ok = young_viol == 0 && ineq_viol == 0 && worst_eq <= 1e-10;
    (
        ok,
        format!("Fenchel–Young violations {young_viol}/10000, Fenchel violations {ineq_viol}/10000, worst equality residual {worst_eq:.2e} ≤ 1e-10"),
    )
}

fn c5_entropy() -> (bool, String) {
    let ens = PathEnsemble::simulate(&TimeGrid::uniform(1.0, 50).unwrap(), 1, 100_000, 5).unwrap();
    let cp = doleans(&ConstantControl(vec![1.0]), &ens).unwrap();
    let e = relative_entropy(&cp, &ens).unwrap();
    let se = e.combined_se();
    let ok = (e.primal.mean - 0.5).abs() <= 3.0 * se && (e.dual.mean - 0.5).abs() <= 3.0 * se;
    (ok, format!("primal {:.5}, dual {:.5}, 3·SE = {:.5}", e.primal.mean, e.dual.mean, 3.0 * se))
}

fn c6_duality(dir: &Path) -> (bool, String) {
    let cfg = config(
        r#"
suite = "duality"
seed = 6
generator = "pure_quadratic(1)"
[grid]
steps = 50
[ensemble]
paths = 50000
[duality]
constants = { lo = -2.0, hi = 2.0, count = 9 }
include_qstar = true
sigmas = 4.0
gap_tolerance = 0.02
"#,
    );
    let o = run_in(dir, cfg, None);
    let rep = report(&o);
    let cert = &rep["report"]["certificate"];
    let adm = cert["qstar_admissibility"]["passed"].as_bool().unwrap_or(false);
    let viol = cert["domination_violations"].as_array().map_or(usize::MAX, |v| v.len());
    (
        o.passed(),
        format!(
            "Y0 = {:.5}, Y^q*_0 = {:.5}, |gap| = {:.5} ≤ 0.02, domination violations {viol}, q* admissible {adm}",
            o.metric("y0").unwrap_or(f64::NAN),
            o.metric("qstar_y0").unwrap_or(f64::NAN),
            o.metric("gap").unwrap_or(f64::NAN).abs()
        ),
    )
}

fn c7_crosscheck(dir: &Path) -> (bool, String) {
    let cases = [
        ("example_i", "{ kind = \"abs\", weights = [1.0] }"),
        ("example_ii", "{ kind = \"abs\", weights = [1.0] }"),
        ("example_iii", "{ kind = \"abs\", weights = [1.0] }"),
        ("example_iv", "{ kind = \"abs\", weights = [1.0] }"),
        ("example_iv", "{ kind = \"critical\", gamma = 1.0 }"),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, term) in cases {
        let cfg = config(&format!(
            "suite = \"crosscheck\"\nseed = 42\ngenerator = \"{name}\"\nterminal = {term}\n[grid]\nsteps = 50\n[ensemble]\npaths = 100000\n[crosscheck]\ntolerance = 0.03\n"
        ));
        let o = run_in(dir, cfg, None);
        ok &= o.passed();
        let label = if term.contains("critical") { format!("{name}/critical(1)") } else { name.to_string() };
        parts.push(format!("{label} {:.4}", o.metric("max_dy0").unwrap_or(f64::NAN)));
    }
    (ok, format!("max |ΔY0| per case ≤ 0.03: {}", parts.join(", ")))
}

fn c8_comparison(dir: &Path) -> (bool, String) {
    let base = "seed = 8\n[grid]\nsteps = 50\n[ensemble]\npaths = 50000\n";
    let mut ok = true;
    let mut parts = Vec::new();

    // Ordered pair with no closed form: g̃ ≥ |z|², same terminal.
    let mut cfg = config(&format!("suite = \"compare\"\ngenerator = \"gtilde\"\n{base}"));
    cfg.compare.generator = Some(GeneratorSource::Fixture("pure_quadratic(2)".into()));
    let o = run_in(dir, cfg, None);
    ok &= o.passed();
    parts.push(format!("g̃ vs |z|²: node violation share {:.4}", o.metric("node_violation_share").unwrap_or(f64::NAN)));

    // Terminal shift on example_ii: ξ' = |B_T| + 0.3.
    let mut cfg = config(&format!("suite = \"compare\"\ngenerator = \"example_ii\"\n{base}"));
    cfg.compare.terminal = Some(TerminalSpec::abs(vec![1.0]).shifted(0.3));
    let o = run_in(dir, cfg, None);
    let gap = worst_shift_error(&o, |_| 0.3);
    ok &= o.passed() && gap <= 0.02;
    parts.push(format!("terminal +0.3: max |gap − 0.3| {gap:.4}"));

    // Generator shift: g' = g − 1 gives Y' − Y = T − t.
    let mut cfg = config(&format!("suite = \"compare\"\ngenerator = \"pure_quadratic(1)\"\nterminal = {{ kind = \"abs\", weights = [1.0] }}\n{base}"));
    let lowered = GeneratorSpec::convex(
        "pure_quadratic(1) - 1",
        ConvexPart::Quadratic {
            a: Coef::constant(0.5),
            c: Coef::constant(-1.0),
        },
        Coef::constant(1.0),
        1.0,
    );
    cfg.compare.generator = Some(GeneratorSource::Inline(Box::new(lowered)));
    let o = run_in(dir, cfg, None);
    let gap = worst_shift_error(&o, |t| 1.0 - t);
    ok &= o.passed() && gap <= 0.02;
    parts.push(format!("generator −1: max |gap − (T − t)| {gap:.4}"));
    (ok, format!("{} (≤ 0.1% nodes, ≤ 0.02)", parts.join("; ")))
}

fn worst_shift_error(o: &RunOutcome, expected: impl Fn(f64) -> f64) -> f64 {
    let rep = report(o);
    let gaps = rep["report"]["comparison"]["mean_gap"].as_array().unwrap();
    let n = gaps.len() - 1;
    gaps.iter()
        .enumerate()
        .map(|(k, g)| (g["mean"].as_f64().unwrap() - expected(k as f64 / n as f64)).abs())
        .fold(0.0, f64::max)
}

fn c9_classification(dir: &Path) -> (bool, String) {
    // Declared sets: A1 and B for every fixture, A2 for example_ii, an A3
    // candidate for example_iii and example_iv.
    let declared: [(&str, &[&str]); 4] = [
        ("example_i", &["A1", "B"]),
        ("example_ii", &["A1", "A2", "B"]),
        ("example_iii", &["A1", "A3_candidate", "B"]),
        ("example_iv", &["A1", "A3_candidate", "B"]),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, sections) in declared {
        let o = run_in(dir, config(&format!("suite = \"check\"\ngenerator = \"{name}\"\n")), None);
        let rep = report(&o);
        let r = rep["report"].as_object().unwrap();
        let present: Vec<&str> = ["A1", "A2", "A3_candidate", "B"].into_iter().filter(|k| r.contains_key(*k)).collect();
        let failing: Vec<&str> = sections.iter().copied().filter(|k| r.get(*k).and_then(|v| v["passed"].as_bool()) != Some(true)).collect();
        let reproduced = present.iter().all(|k| r[*k]["witnesses_reproduced"] == Value::Bool(true));
        let good = present == sections && failing.is_empty() && reproduced;
        ok &= good;
        parts.push(if good {
            format!("{name} ok")
        } else {
            format!("{name} fails {failing:?}")
        });
    }

    let g = fixture("gtilde").unwrap().generator;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sandwich = (0..10_000).all(|_| {
        let z: f64 = rng.random_range(-20.0..=20.0);
        let v = g.eval(0.0, &[0.0], &[z]);
        z * z <= v && v <= 1.0 + z * z
    });
    ok &= sandwich;
    parts.push(format!("g̃ sandwich {}", if sandwich { "exact" } else { "violated" }));

    let mut cfg = config("suite = \"check\"\ngenerator = \"gtilde\"\n");
    cfg.check.strong_convexity = Some(qbsde::generators::StrongConvexity { epsilon: 1.0, c: 0.1 });
    cfg.check.pairs = vec![(vec![0.95], vec![0.05])];
    let o = run_in(dir, cfg, None);
    let rep = report(&o);
    let a3 = &rep["report"]["A3_candidate"];
    let witness = a3["witnesses"].as_array().unwrap().iter().any(|w| {
        w["z"][0] == 0.95 && w["z_prime"][0] == 0.05 && w["lhs"].as_f64() == Some(0.0) && (w["rhs"].as_f64().unwrap() - 0.305).abs() < 1e-12
    });
    let refuted = a3["passed"] == Value::Bool(false) && a3["witnesses_reproduced"] == Value::Bool(true) && witness;
    ok &= refuted;
    parts.push(format!("g̃ (1, 0.1) {}", if refuted { "refuted, witness re-evaluates" } else { "not refuted" }));
    (ok, parts.join("; "))
}

fn c10_lambda() -> (bool, String) {
    let fam = MajorantFamily::linear(1.0, 1.0).unwrap();
    let grid: Vec<f64> = (1..=50).map(f64::from).collect();
    let rep = lambda_superlinearity_check(&fam, &grid, 5.0).unwrap();
    let ratios: Vec<f64> = grid.iter().map(|&x| fam.lambda(x).unwrap() / x).collect();
    let strict = ratios.windows(2).all(|w| w[1] > w[0]);
    let ok = rep.passed && strict && ratios[49] >= 5.0 * ratios[0];
    (ok, format!("Λ(x)/x strictly increasing {strict}, Λ(1) = {:.4}, Λ(50)/50 = {:.4}", ratios[0], ratios[49]))
}

fn c11_determinism(dir: &Path) -> (bool, String) {
    let solve_cfg = config("seed = 11\ngenerator = \"example_ii\"\n[grid]\nsteps = 20\n[ensemble]\npaths = 20000\n");
    let mut cross_cfg = config("suite = \"crosscheck\"\nseed = 12\ngenerator = \"example_iii\"\n[grid]\nsteps = 20\n[ensemble]\npaths = 20000\n");
    cross_cfg.crosscheck.tolerance = 0.05;
    let mut ok = true;
    let mut checked = 0;
    for cfg in [solve_cfg, cross_cfg] {
        let first = run_in(&dir.join("orig"), cfg, Some(1));
        for threads in [1, 2, 8] {
            let r = reproduce(&first.dir.join("manifest.json"), Some(&dir.join(format!("rep{threads}"))), Some(threads)).unwrap();
            ok &= r.identical;
            checked += 1;
            if !r.identical {
                eprintln!("drift at {threads} workers: {:?}", r.diffs);
            }
        }
    }
    (ok, format!("{checked} reproductions across 1, 2 and 8 workers, ensembles bit-identical and summaries within 1e-12"))
}

#[test]
fn acceptance_criteria() {
    let tmp = tempfile::tempdir().unwrap();
    let d = |s: &str| tmp.path().join(s);
    let criteria: Vec<(usize, &'static str, Box<dyn Fn() -> (bool, String)>)> = vec![
        (1, "Cole–Hopf closed form", Box::new(|| c1_cole_hopf(&d("c1")))),
        (2, "tree oracle equivalence", Box::new(c2_tree)),
        (3, "conjugate exactness", Box::new(c3_conjugate)),
        (4, "Fenchel–Young and Fenchel inequality", Box::new(c4_fenchel)),
        (5, "entropy identity", Box::new(c5_entropy)),
        (6, "duality certificate", Box::new(|| c6_duality(&d("c6")))),
        (7, "uniqueness crosscheck", Box::new(|| c7_crosscheck(&d("c7")))),
        (8, "comparison monotonicity", Box::new(|| c8_comparison(&d("c8")))),
        (9, "assumption classification", Box::new(|| c9_classification(&d("c9")))),
        (10, "Λ superlinearity", Box::new(c10_lambda)),
        (11, "determinism", Box::new(|| c11_determinism(&d("c11")))),
    ];
    let mut lines = Vec::new();
    for (id, name, f) in criteria {
        let (passed, detail) = f();
        let l = Line { id, name, passed, detail };
        emit(&l);
        lines.push(l);
    }
    let unexpected: Vec<usize> = lines.iter().filter(|l| !l.passed && !KNOWN_RED.contains(&l.id)).map(|l| l.id).collect();
    let recovered: Vec<usize> = lines.iter().filter(|l| l.passed && KNOWN_RED.contains(&l.id)).map(|l| l.id).collect();
    assert!(unexpected.is_empty(), "criteria failed: {unexpected:?}");
    assert!(recovered.is_empty(), "criteria listed as known red now pass, update KNOWN_RED: {recovered:?}");
}
