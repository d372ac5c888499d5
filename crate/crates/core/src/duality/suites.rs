//! Cross-scheme uniqueness, comparison and `Z`-moment suites.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{CheckKind, CheckReport, GeneratorSpec, Probe, ReportBuilder, Witness};
use crate::numerics::Estimate;
use crate::solver::{auto_truncation_radius, solve, terminal_values, BasisConfig, BsdeSolution, Scheme, WarmStart};
use crate::stochastics::{exp_moment, MomentEstimate, PathEnsemble, TerminalSpec};

/// A generator with its terminal condition.
#[derive(Clone, Debug)]
pub struct Problem {
    pub generator: GeneratorSpec,
    pub terminal: TerminalSpec,
}

/// Largest slope of the mean value along the grid.
fn mean_slope(sol: &BsdeSolution) -> f64 {
    let means: Vec<f64> = (0..=sol.steps()).map(|k| sol.mean_y(k).mean).collect();
    (0..sol.steps())
        .map(|k| (means[k + 1] - means[k]).abs() / sol.grid.dt(k))
        .fold(0.0f64, f64::max)
}

/// Three configurations that differ in basis degree, Picard warm start and
/// truncation radius.
pub fn default_crosscheck_schemes() -> Vec<Scheme> {
    vec![
        Scheme {
            label: "degree4-explicit".into(),
            ..Scheme::default()
        },
        Scheme {
            label: "degree3-picard-zero-wide".into(),
            basis: BasisConfig {
                degree: 3,
                ..BasisConfig::default()
            },
            picard_iterations: 12,
            warm_start: WarmStart::Zero,
            truncation_scale: 2.0,
            ..Scheme::default()
        },
        Scheme {
            label: "degree2-explicit-narrow".into(),
            basis: BasisConfig {
                degree: 2,
                knots: 12,
                ..BasisConfig::default()
            },
            truncation_scale: 0.75,
            ..Scheme::default()
        },
    ]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SchemeOutcome {
    pub label: String,
    pub y0: Option<Estimate>,
    pub truncation_radius: Option<f64>,
    pub clip_count: usize,
    pub picard_gaps: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairGap {
    pub a: String,
    pub b: String,
    /// `|Y_0^a − Y_0^b|` of the pathwise estimates.
    pub dy0: f64,
    /// `max_k |mean Y^a_{t_k} − mean Y^b_{t_k}|`.
    pub max_mean_gap: f64,
    /// RMS of `Y^a − Y^b` over all paths and nodes.
    pub rms_gap: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrosscheckReport {
    pub generator: String,
    pub terminal: String,
    pub schemes: Vec<SchemeOutcome>,
    pub pairs: Vec<PairGap>,
    pub tolerance: f64,
    pub max_dy0: f64,
    pub passed: bool,
    pub notes: Vec<String>,
}

/// Solves one problem under several schemes and compares the solutions.
pub fn uniqueness_crosscheck(
    gen: &GeneratorSpec,
    terminal: &TerminalSpec,
    ens: &PathEnsemble,
    schemes: &[Scheme],
    tolerance: f64,
) -> Result<CrosscheckReport> {
    if schemes.len() < 2 {
        return Err(Error::Precondition(format!("crosscheck needs at least 2 schemes, got {}", schemes.len())));
    }
    let strip = |s: &Scheme| Scheme {
        label: String::new(),
        ..s.clone()
    };
    for (i, a) in schemes.iter().enumerate() {
        if schemes[..i].iter().any(|b| strip(a) == strip(b)) {
            return Err(Error::Precondition(format!("scheme '{}' duplicates an earlier configuration", a.label)));
        }
    }
    let solved: Vec<Result<BsdeSolution>> = schemes.par_iter().map(|s| solve(gen, terminal, ens, s)).collect();
    let mut notes = vec![
        "agreement across schemes cannot tell a unique solution from schemes converging to the same branch".to_string(),
    ];
    let outcomes: Vec<SchemeOutcome> = schemes
        .iter()
        .zip(&solved)
        .map(|(s, r)| match r {
            Ok(sol) => SchemeOutcome {
                label: s.label.clone(),
                y0: Some(sol.y0),
                truncation_radius: Some(sol.truncation_radius),
                clip_count: sol.residuals.clip_count,
                picard_gaps: sol.residuals.picard_gaps.clone(),
                error: None,
            },
            Err(e) => SchemeOutcome {
                label: s.label.clone(),
                y0: None,
                truncation_radius: None,
                clip_count: 0,
                picard_gaps: Vec::new(),
                error: Some(e.to_string()),
            },
        })
        .collect();
    let mut pairs = Vec::new();
    for i in 0..schemes.len() {
        for j in i + 1..schemes.len() {
            let (Ok(a), Ok(b)) = (&solved[i], &solved[j]) else { continue };
            let n = a.steps();
            let max_mean_gap = (0..=n)
                .map(|k| (a.mean_y(k).mean - b.mean_y(k).mean).abs())
                .fold(0.0f64, f64::max);
            let sq = crate::numerics::det_sum(a.y.len(), |x| (a.y[x] - b.y[x]).powi(2));
            pairs.push(PairGap {
                a: schemes[i].label.clone(),
                b: schemes[j].label.clone(),
                dy0: (a.y0.mean - b.y0.mean).abs(),
                max_mean_gap,
                rms_gap: (sq / a.y.len() as f64).sqrt(),
            });
        }
    }
    let failures = outcomes.iter().filter(|o| o.error.is_some()).count();
    if failures > 0 {
        notes.push(format!("{failures} scheme(s) failed to solve"));
    }
    let max_dy0 = pairs.iter().map(|p| p.dy0).fold(0.0f64, f64::max);
    Ok(CrosscheckReport {
        generator: gen.name.clone(),
        terminal: terminal.description.clone(),
        passed: failures == 0 && max_dy0 <= tolerance,
        schemes: outcomes,
        pairs,
        tolerance,
        max_dy0,
        notes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComparisonConfig {
    pub sigmas: f64,
    /// Discretization slack in grid cells, times the largest slope of the
    /// mean value.
    pub cells: f64,
    /// Largest share of nodes allowed beyond slack.
    pub max_violation_share: f64,
    /// `z` samples for the generator-ordering precondition.
    pub generator_samples: usize,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        ComparisonConfig {
            sigmas: 4.0,
            cells: 2.0,
            max_violation_share: 1e-3,
            generator_samples: 400,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub check: CheckReport,
    /// `Y'_{t_k} − Y_{t_k}` averaged over paths, per node.
    pub mean_gap: Vec<Estimate>,
    pub slack: Vec<f64>,
    pub discretization_slack: f64,
    pub node_violations: usize,
    pub node_violation_share: f64,
    /// 1% quantile of `Y'_{t_k} − Y_{t_k}` over paths, per node.
    pub pathwise_q01: Vec<f64>,
    /// Share of `(path, node)` with `Y > Y' + discretization slack`.
    pub pathwise_violation_share: f64,
    pub passed: bool,
}

fn ordering_radius(p: &Problem, p2: &Problem, ens: &PathEnsemble, xi: &[f64], xi2: &[f64], scheme: &Scheme) -> Result<f64> {
    Ok(match scheme.truncation_radius {
        Some(r) => r,
        None => {
            let r1 = auto_truncation_radius(&p.generator, xi, ens)?;
            let r2 = auto_truncation_radius(&p2.generator, xi2, ens)?;
            r1.max(r2) * scheme.truncation_scale
        }
    })
}

/// Checks `Y ≤ Y'` nodewise for `ξ ≤ ξ'` and `g ≥ g'`.
pub fn comparison_check(
    p: &Problem,
    p2: &Problem,
    ens: &PathEnsemble,
    scheme: &Scheme,
    cfg: &ComparisonConfig,
) -> Result<ComparisonReport> {
    let xi = terminal_values(&p.terminal, ens)?;
    let xi2 = terminal_values(&p2.terminal, ens)?;
    if let Some(i) = (0..ens.paths).find(|&i| xi[i] > xi2[i] + 1e-12 * (1.0 + xi[i].abs())) {
        return Err(Error::Precondition(format!(
            "terminal ordering fails on path {i}: xi = {} > xi' = {}",
            xi[i], xi2[i]
        )));
    }
    let radius = ordering_radius(p, p2, ens, &xi, &xi2, scheme)?.min(1e4);
    let points = Probe::new(ens.dim)
        .with_radius(radius)
        .with_samples(cfg.generator_samples)
        .points();
    let n = ens.steps();
    let nodes: Vec<usize> = (0..=10).map(|j| j * (n - 1) / 10).collect();
    let paths: Vec<usize> = (0..ens.paths.min(16)).collect();
    for &k in &nodes {
        let t = ens.grid.t(k);
        for &i in &paths {
            let b = ens.value(i, k);
            for z in &points {
                let g = p.generator.try_eval(t, b, z)?;
                let g2 = p2.generator.try_eval(t, b, z)?;
                if g < g2 - 1e-12 * (1.0 + g.abs() + g2.abs()) {
                    return Err(Error::Precondition(format!(
                        "generator ordering fails at t={t}, B={b:?}, z={z:?}: g = {g} < g' = {g2}"
                    )));
                }
            }
        }
    }

    let (a, b) = rayon::join(
        || solve(&p.generator, &p.terminal, ens, scheme),
        || solve(&p2.generator, &p2.terminal, ens, scheme),
    );
    let (a, b) = (a?, b?);
    let disc = cfg.cells * ens.grid.max_dt() * mean_slope(&a).max(mean_slope(&b));
    let m = ens.paths;
    let mut builder = ReportBuilder::new("comparison");
    builder.note(format!("slack = {} standard errors + {} cells x largest mean slope", cfg.sigmas, cfg.cells));
    let mut mean_gap = Vec::with_capacity(n + 1);
    let mut slack = Vec::with_capacity(n + 1);
    let mut pathwise_q01 = Vec::with_capacity(n + 1);
    let mut node_violations = 0;
    let mut pathwise_bad = 0usize;
    for k in 0..=n {
        let d: Vec<f64> = (0..m).map(|i| a.y_at(i, k) - b.y_at(i, k)).collect();
        let est = Estimate::from_slice(&d);
        let s = cfg.sigmas * est.std_error + disc;
        if est.mean > s {
            node_violations += 1;
        }
        pathwise_bad += d.iter().filter(|&&x| x > disc + 1e-12).count();
        let mut gaps: Vec<f64> = d.iter().map(|x| -x).collect();
        gaps.sort_by(f64::total_cmp);
        pathwise_q01.push(gaps[(m - 1) / 100]);
        builder.push(Witness {
            kind: CheckKind::NodeOrdering,
            t: ens.grid.t(k),
            state: Vec::new(),
            z: Vec::new(),
            z_prime: Vec::new(),
            u: Vec::new(),
            lhs: est.mean,
            rhs: s,
        });
        mean_gap.push(Estimate {
            mean: -est.mean,
            std_error: est.std_error,
            samples: m,
        });
        slack.push(s);
    }
    let share = node_violations as f64 / (n + 1) as f64;
    Ok(ComparisonReport {
        check: builder.finish(),
        mean_gap,
        slack,
        discretization_slack: disc,
        node_violations,
        node_violation_share: share,
        pathwise_q01,
        pathwise_violation_share: pathwise_bad as f64 / (m * (n + 1)) as f64,
        passed: share <= cfg.max_violation_share,
    })
}

/// Allowed `|ln E_M − ln E_{M/2}|` for a moment estimate to count as stable.
pub const STABILITY_LOG_TOLERANCE: f64 = 0.1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZMomentRow {
    pub parameter: f64,
    pub estimate: MomentEstimate,
    /// The same estimate on the first half of the paths.
    pub half_sample: MomentEstimate,
    pub stable: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZMomentReport {
    /// `E[exp(η Σ|Z_k|²Δt_k)]`.
    pub eta: Vec<ZMomentRow>,
    /// `E[exp(λ Σ|Z_k|Δt_k)]`.
    pub lambda: Vec<ZMomentRow>,
    /// Largest `η` such that it and every smaller grid value are stable.
    pub largest_stable_eta: Option<f64>,
    pub notes: Vec<String>,
}

fn moment_rows(samples: &[f64], grid: &[f64]) -> Result<Vec<ZMomentRow>> {
    let half = &samples[..samples.len().div_ceil(2)];
    grid.iter()
        .map(|&p| {
            let estimate = exp_moment(p, samples)?;
            let half_sample = exp_moment(p, half)?;
            let stable = !estimate.dominated
                && estimate.log_estimate.is_finite()
                && (estimate.log_estimate - half_sample.log_estimate).abs() <= STABILITY_LOG_TOLERANCE;
            Ok(ZMomentRow {
                parameter: p,
                estimate,
                half_sample,
                stable,
            })
        })
        .collect()
}

/// Exponential moments of `∫|Z|²` and `∫|Z|` over parameter grids.
pub fn z_moment_check(sol: &BsdeSolution, eta_grid: &[f64], lambda_grid: &[f64]) -> Result<ZMomentReport> {
    let n = sol.steps();
    let (sq, abs): (Vec<f64>, Vec<f64>) = (0..sol.paths)
        .map(|i| {
            (0..n).fold((0.0, 0.0), |(s, a), k| {
                let z = sol.z_at(i, k);
                let r2: f64 = z.iter().map(|v| v * v).sum();
                let dt = sol.grid.dt(k);
                (s + r2 * dt, a + r2.sqrt() * dt)
            })
        })
        .unzip();
    let mut eta_sorted = eta_grid.to_vec();
    eta_sorted.sort_by(f64::total_cmp);
    let eta = moment_rows(&sq, &eta_sorted)?;
    let lambda = moment_rows(&abs, lambda_grid)?;
    let largest_stable_eta = eta.iter().take_while(|r| r.stable).last().map(|r| r.parameter);
    Ok(ZMomentReport {
        eta,
        lambda,
        largest_stable_eta,
        notes: vec!["eta is scanned over a grid; the constant itself is not computed".into()],
    })
}
