//! Duality certificate: the primal value against dual values over a finite
//! control family, with `q*` expected to close the gap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::admissibility::{audit_admissibility, optimal_control_table, AdmissibilityReport, FeedbackControl};
use crate::conjugate::ConjugateHandle;
use crate::error::{Error, Result};
use crate::generators::GeneratorSpec;
use crate::numerics::Estimate;
use crate::solver::{solve, solve_dual, BsdeSolution, DualMode, Scheme};
use crate::stochastics::{doleans, ConstantControl, Control, PathEnsemble, TerminalSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlFamily {
    pub constants: Vec<Vec<f64>>,
    pub include_qstar: bool,
}

impl Default for ControlFamily {
    fn default() -> Self {
        ControlFamily {
            constants: Vec::new(),
            include_qstar: true,
        }
    }
}

impl ControlFamily {
    /// `count` constants evenly spaced on `[lo, hi]·e1`.
    pub fn grid(lo: f64, hi: f64, count: usize, dim: usize) -> ControlFamily {
        let constants = (0..count)
            .map(|j| {
                let x = if count == 1 { lo } else { lo + (hi - lo) * j as f64 / (count - 1) as f64 };
                let mut v = vec![0.0; dim];
                v[0] = x;
                v
            })
            .collect();
        ControlFamily {
            constants,
            include_qstar: true,
        }
    }

    /// `count` constants uniform on `[−scale, scale]^d`.
    pub fn random(count: usize, scale: f64, seed: u64, dim: usize) -> ControlFamily {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let constants = (0..count)
            .map(|_| (0..dim).map(|_| rng.random_range(-scale..=scale)).collect())
            .collect();
        ControlFamily {
            constants,
            include_qstar: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DualityConfig {
    /// Statistical slack in combined standard errors.
    pub sigmas: f64,
    /// Allowed `|Y^{q*}_0 − Y_0|`.
    pub gap_tolerance: f64,
    /// Add `2·Δt_max·L` to the domination slack, `L` the largest slope of
    /// the mean primal value along the grid.
    pub discretization_slack: bool,
    pub mode: DualMode,
}

impl Default for DualityConfig {
    fn default() -> Self {
        DualityConfig {
            sigmas: 4.0,
            gap_tolerance: 0.02,
            discretization_slack: true,
            mode: DualMode::Auto,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualValue {
    pub control: String,
    pub mode: Option<DualMode>,
    pub y0: Option<Estimate>,
    pub admissibility: Option<AdmissibilityReport>,
    /// `Y^q_0 ≥ Y_0 − slack`; `None` when the solve failed.
    pub dominates: Option<bool>,
    pub slack: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualityReport {
    pub generator: String,
    pub primal_y0: Estimate,
    pub dual_values: Vec<DualValue>,
    /// `Y^{q*}_0` on the primary route: feedback `q*` on shifted paths, or the
    /// reweighted table when the solution carries no fits.
    pub qstar_value: Option<Estimate>,
    /// `Y^{q*}_0` by reweighting the tabulated `q*` on the primal paths.
    pub qstar_reweighted: Option<Estimate>,
    pub qstar_admissibility: Option<AdmissibilityReport>,
    pub gap: f64,
    pub gap_std_error: f64,
    pub gap_tolerance: f64,
    pub discretization_slack: f64,
    pub domination_violations: Vec<String>,
    /// Family member with the smallest dual value.
    pub minimizer: Option<String>,
    pub passed: bool,
    pub notes: Vec<String>,
}

fn lipschitz_slack(sol: &BsdeSolution) -> f64 {
    let g = &sol.grid;
    let means: Vec<f64> = (0..=sol.steps()).map(|k| sol.mean_y(k).mean).collect();
    let l = (0..sol.steps())
        .map(|k| (means[k + 1] - means[k]).abs() / g.dt(k))
        .fold(0.0f64, f64::max);
    2.0 * g.max_dt() * l
}

struct Member {
    control: Box<dyn Control>,
    mode: DualMode,
    audit: bool,
}

fn evaluate_member(
    gen: &GeneratorSpec,
    handle: &ConjugateHandle<'_>,
    terminal: &TerminalSpec,
    ens: &PathEnsemble,
    scheme: &Scheme,
    member: &Member,
) -> (Option<AdmissibilityReport>, Result<(DualMode, Estimate)>) {
    let audit = if member.audit {
        doleans(member.control.as_ref(), ens)
            .and_then(|cp| audit_admissibility(&cp, handle, terminal, ens))
            .ok()
    } else {
        None
    };
    let value = solve_dual(gen, handle, terminal, ens, member.control.as_ref(), scheme, member.mode)
        .map(|d| (d.mode, d.solution.y0));
    (audit, value)
}

/// Solves the primal problem and the dual problem for every family member.
pub fn duality_certificate(
    gen: &GeneratorSpec,
    handle: &ConjugateHandle<'_>,
    terminal: &TerminalSpec,
    ens: &PathEnsemble,
    family: &ControlFamily,
    scheme: &Scheme,
    cfg: &DualityConfig,
) -> Result<DualityReport> {
    if family.constants.is_empty() && !family.include_qstar {
        return Err(Error::Precondition("control family is empty".into()));
    }
    if let Some(c) = family.constants.iter().find(|c| c.len() != ens.dim) {
        return Err(Error::Config(format!("constant control {c:?} does not match dimension {}", ens.dim)));
    }
    let primal = solve(gen, terminal, ens, scheme)?;
    let disc = if cfg.discretization_slack { lipschitz_slack(&primal) } else { 0.0 };
    let mut notes = Vec::new();

    let mut members: Vec<Member> = family
        .constants
        .iter()
        .map(|c| Member {
            control: Box::new(ConstantControl(c.clone())),
            mode: cfg.mode,
            audit: true,
        })
        .collect();
    let mut qstar_admissibility = None;
    let mut qstar_reweighted = None;
    let qstar_index = if family.include_qstar {
        let table = optimal_control_table(&primal, gen, ens)?;
        let cp = doleans(&table, ens)?;
        qstar_admissibility = Some(audit_admissibility(&cp, handle, terminal, ens)?);
        match solve_dual(gen, handle, terminal, ens, &table, scheme, DualMode::Reweight) {
            Ok(d) => qstar_reweighted = Some(d.solution.y0),
            Err(e) => notes.push(format!("reweighted q* route failed: {e}")),
        }
        let control: Box<dyn Control> = match FeedbackControl::from_solution(&primal, gen) {
            Ok(fb) => Box::new(fb),
            Err(_) => {
                notes.push("no regression fits; q* is evaluated by reweighting only".into());
                Box::new(table)
            }
        };
        let mode = if control.tabulated_paths().is_some() { DualMode::Reweight } else { DualMode::FreshPaths };
        members.push(Member {
            control,
            mode,
            audit: false,
        });
        Some(members.len() - 1)
    } else {
        None
    };

    let outcomes: Vec<_> = members
        .par_iter()
        .map(|m| evaluate_member(gen, handle, terminal, ens, scheme, m))
        .collect();

    let mut dual_values = Vec::with_capacity(members.len());
    let mut violations = Vec::new();
    let mut qstar_value = None;
    let mut minimizer: Option<(f64, String)> = None;
    for (idx, (member, (audit, value))) in members.iter().zip(outcomes).enumerate() {
        let label = member.control.label();
        let admissibility = if Some(idx) == qstar_index { qstar_admissibility.clone() } else { audit };
        let entry = match value {
            Ok((mode, y0)) => {
                let slack = cfg.sigmas * primal.y0.combined_se(&y0) + disc;
                let dominates = y0.mean >= primal.y0.mean - slack;
                let admissible = admissibility.as_ref().is_some_and(|a| a.passed);
                if !dominates && admissible {
                    violations.push(format!(
                        "{label}: Y^q_0 = {:.6} < Y_0 - slack = {:.6}",
                        y0.mean,
                        primal.y0.mean - slack
                    ));
                }
                if !admissible {
                    notes.push(format!("{label}: admissibility proxies failed, excluded from domination"));
                }
                if minimizer.as_ref().is_none_or(|(v, _)| y0.mean < *v) {
                    minimizer = Some((y0.mean, label.clone()));
                }
                if Some(idx) == qstar_index {
                    qstar_value = Some(y0);
                }
                DualValue {
                    control: label,
                    mode: Some(mode),
                    y0: Some(y0),
                    admissibility,
                    dominates: Some(dominates),
                    slack,
                    error: None,
                }
            }
            Err(e) => DualValue {
                control: label,
                mode: None,
                y0: None,
                admissibility,
                dominates: None,
                slack: f64::NAN,
                error: Some(e.to_string()),
            },
        };
        dual_values.push(entry);
    }

    let (gap, gap_std_error) = match qstar_value {
        Some(q) => (q.mean - primal.y0.mean, q.combined_se(&primal.y0)),
        None => (f64::NAN, f64::NAN),
    };
    let mut passed = violations.is_empty();
    if family.include_qstar {
        passed &= gap.abs() <= cfg.gap_tolerance;
        passed &= qstar_admissibility.as_ref().is_some_and(|a| a.passed);
    }
    Ok(DualityReport {
        generator: gen.name.clone(),
        primal_y0: primal.y0,
        dual_values,
        qstar_value,
        qstar_reweighted,
        qstar_admissibility,
        gap,
        gap_std_error,
        gap_tolerance: cfg.gap_tolerance,
        discretization_slack: disc,
        domination_violations: violations,
        minimizer: minimizer.map(|m| m.1),
        passed,
        notes,
    })
}
