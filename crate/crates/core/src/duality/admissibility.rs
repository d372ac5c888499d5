//! The optimal control `q* ∈ ∂g1(Z)` and finite-sample admissibility audits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conjugate::{subgradient, subgradient_unchecked, ConjugateHandle};
use crate::error::{Error, Result};
use crate::generators::GeneratorSpec;
use crate::numerics::Estimate;
use crate::solver::{BasisConfig, BsdeSolution, StepFit};
use crate::stochastics::{
    doleans, ess_threshold, relative_entropy, Control, ControlProcess, EntropyEstimate, MartingaleProxy,
    PathEnsemble, PathWindow, TableControl, TerminalSpec,
};

/// `q*_k = ∂g1(t_k, B_{t_k}, Z_k)` on every path of `sol`, as a table.
pub fn optimal_control_table(sol: &BsdeSolution, gen: &GeneratorSpec, ens: &PathEnsemble) -> Result<TableControl> {
    if sol.paths != ens.paths || sol.grid != ens.grid || sol.dim != ens.dim {
        return Err(Error::Precondition("solution was not solved on this ensemble".into()));
    }
    let (m, n, d) = (ens.paths, ens.steps(), ens.dim);
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::with_capacity(n * d);
            for k in 0..n {
                row.extend(subgradient(gen, ens.grid.t(k), ens.value(i, k), sol.z_at(i, k))?);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    Ok(TableControl {
        label: format!("q* of {}", gen.name),
        paths: m,
        steps: n,
        dim: d,
        values: rows.concat(),
    })
}

/// `q*` on `ens` with its Doléans-Dade weights.
pub fn extract_optimal_control(sol: &BsdeSolution, gen: &GeneratorSpec, ens: &PathEnsemble) -> Result<ControlProcess> {
    doleans(&optimal_control_table(sol, gen, ens)?, ens)
}

/// `q*(t_k, b) = ∂g1(t_k, b, Ẑ_k(b))` with `Ẑ_k` the regression fit of a
/// solution, so it can be evaluated on paths the solution never saw.
#[derive(Clone, Debug)]
pub struct FeedbackControl {
    pub label: String,
    pub gen: GeneratorSpec,
    pub basis: BasisConfig,
    pub fits: Vec<StepFit>,
    pub radius: f64,
}

impl FeedbackControl {
    pub fn from_solution(sol: &BsdeSolution, gen: &GeneratorSpec) -> Result<FeedbackControl> {
        if sol.fits.len() != sol.steps() {
            return Err(Error::Precondition(format!(
                "feedback control needs a regression fit per step, solution has {} of {}",
                sol.fits.len(),
                sol.steps()
            )));
        }
        Ok(FeedbackControl {
            label: format!("q* feedback of {}", gen.name),
            gen: gen.clone(),
            basis: sol.scheme.basis,
            fits: sol.fits.clone(),
            radius: sol.truncation_radius,
        })
    }
}

impl Control for FeedbackControl {
    fn eval(&self, _i: usize, k: usize, path: &PathWindow<'_>, out: &mut [f64]) {
        use crate::stochastics::PathView;
        let state = path.current();
        let fit = &self.fits[k];
        let mut z: Vec<f64> = (0..out.len()).map(|j| -fit.predict(&self.basis, 1 + j, state)).collect();
        let r = crate::numerics::norm(&z);
        if r > self.radius {
            z.iter_mut().for_each(|v| *v *= self.radius / r);
        }
        out.copy_from_slice(&subgradient_unchecked(&self.gen, path.time(k), state, &z));
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub control: String,
    /// `E^ℚ[∫|q|² ds]`.
    pub l2_under_q: Estimate,
    /// `E^ℚ[|ξ| + ∫|f1(s, q_s)| ds]`.
    pub value_integrability: Estimate,
    pub martingale_proxy: MartingaleProxy,
    /// `E[M ln M]` and its `½E^ℚ[∫|q|²]` counterpart; `None` when the weights
    /// are degenerate.
    pub entropy_budget: Option<EntropyEstimate>,
    pub effective_sample_size: f64,
    /// Samples with `f1(q) < −α − tol`, which would contradict `f1 ≥ −α`.
    pub f1_below_alpha: usize,
    pub passed: bool,
    pub reasons: Vec<String>,
}

/// Finite-sample proxies for membership of the control in the admissible set.
pub fn audit_admissibility(
    ctrl: &ControlProcess,
    handle: &ConjugateHandle<'_>,
    terminal: &TerminalSpec,
    ens: &PathEnsemble,
) -> Result<AdmissibilityReport> {
    if ctrl.paths != ens.paths || ctrl.grid != ens.grid || ctrl.dim != ens.dim {
        return Err(Error::Precondition("control process was built on a different ensemble".into()));
    }
    let gen = handle.source;
    let n = ens.steps();
    let mut reasons = Vec::new();

    let per_path: Vec<(f64, usize)> = (0..ens.paths)
        .into_par_iter()
        .map(|i| {
            let mut int = 0.0;
            let mut low = 0;
            for k in 0..n {
                let (t, b, q) = (ens.grid.t(k), ens.value(i, k), ctrl.q(i, k));
                let f = handle.transform(t, b, q)?;
                let alpha = gen.try_alpha(t, b)?;
                if f < -alpha - 1e-9 * (1.0 + alpha.abs()) {
                    low += 1;
                }
                int += f.abs() * ens.grid.dt(k);
            }
            Ok((int, low))
        })
        .collect::<Result<_>>()?;
    let xi = crate::solver::terminal_values(terminal, ens)?;

    let l2_under_q = ctrl.reweighted(|i| 2.0 * ctrl.energy(i));
    let value_integrability = ctrl.reweighted(|i| xi[i].abs() + per_path[i].0);
    let f1_below_alpha = per_path.iter().map(|p| p.1).sum();
    let martingale_proxy = ctrl.martingale_proxy();
    let effective_sample_size = ctrl.effective_sample_size();

    let entropy_budget = match relative_entropy(ctrl, ens) {
        Ok(e) => Some(e),
        Err(Error::DegenerateWeights { ess, threshold }) => {
            reasons.push(format!("weights degenerate: effective sample size {ess:.1} below {threshold:.1}"));
            None
        }
        Err(e) => return Err(e),
    };
    if !martingale_proxy.passed {
        reasons.push(format!(
            "martingale proxy {:.6} ± {:.2e} is not within 4 standard errors of 1",
            martingale_proxy.estimate.mean, martingale_proxy.estimate.std_error
        ));
    }
    if martingale_proxy.overflowed > 0 {
        reasons.push(format!("{} paths overflowed the log-weight cap", martingale_proxy.overflowed));
    }
    if !(effective_sample_size >= ess_threshold(ens.paths)) {
        reasons.push(format!("effective sample size {effective_sample_size:.1} is too small"));
    }
    let finite = l2_under_q.is_finite()
        && value_integrability.is_finite()
        && entropy_budget.is_some_and(|e| e.primal.is_finite() && e.dual.is_finite());
    if !finite {
        reasons.push("an estimate is not finite".into());
    }
    if f1_below_alpha > 0 {
        reasons.push(format!("f1(q) < -alpha at {f1_below_alpha} samples"));
    }
    Ok(AdmissibilityReport {
        control: ctrl.label.clone(),
        l2_under_q,
        value_integrability,
        martingale_proxy,
        entropy_budget,
        effective_sample_size,
        f1_below_alpha,
        passed: reasons.is_empty(),
        reasons,
    })
}
