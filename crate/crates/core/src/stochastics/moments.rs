//! Exponential-moment and class-(D) estimators.
//!
//! Both are finite-sample surrogates: a heavy tail shows up as a large share
//! of the sample mass in the top 1% of values rather than as a divergence.

use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;
use crate::conjugate::MajorantFamily;
use crate::error::{Error, Result};
use crate::generators::{CheckKind, CheckReport, ReportBuilder, Witness};
use crate::numerics::{det_sum, Estimate};

/// Top-1% share above which a sample mean is called tail-dominated.
pub const DOMINANCE_SHARE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    /// Estimate of `E[e^{pX}]`; may be `+∞` when only the log is finite.
    pub estimate: f64,
    pub log_estimate: f64,
    pub std_error: f64,
    /// Share of `Σ e^{pX}` carried by the largest 1% of samples.
    pub top1_mass: f64,
    pub dominated: bool,
    pub samples: usize,
}

/// Share of the total carried by the largest `⌈n/100⌉` of nonnegative values.
pub fn top1_share(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let k = values.len().div_ceil(100);
    let total = det_sum(v.len(), |i| v[i]);
    if total <= 0.0 {
        return 0.0;
    }
    det_sum(k, |i| v[i]) / total
}

/// `E[e^{pX}]` by log-sum-exp accumulation.
pub fn exp_moment(p: f64, samples: &[f64]) -> Result<MomentEstimate> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::Domain(format!("exp_moment needs p > 0, got {p}")));
    }
    if samples.is_empty() {
        return Err(Error::Precondition("exp_moment needs at least one sample".into()));
    }
    if let Some(bad) = samples.iter().find(|x| x.is_nan()) {
        return Err(Error::Domain(format!("sample {bad} is not a number")));
    }
    let shift = samples.iter().map(|x| p * x).fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = samples.iter().map(|x| (p * x - shift).exp()).collect();
    let est = Estimate::from_slice(&scaled);
    let top1 = top1_share(&scaled);
    let log_estimate = est.mean.ln() + shift;
    Ok(MomentEstimate {
        estimate: log_estimate.exp(),
        log_estimate,
        std_error: est.std_error * shift.exp(),
        top1_mass: top1,
        dominated: top1 > DOMINANCE_SHARE,
        samples: samples.len(),
    })
}

/// Finite stopping family: every grid time and/or first hitting times of
/// `{X ≥ c}` (stopped at `T`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingFamily {
    pub grid_times: bool,
    pub levels: Vec<f64>,
}

impl Default for StoppingFamily {
    fn default() -> Self {
        StoppingFamily {
            grid_times: true,
            levels: vec![0.5, 1.0, 2.0, 4.0],
        }
    }
}

/// Estimates `sup_τ E[K(X_τ⁺)]` over `family` from scalar samples
/// `process[i·(N+1) + k] = X_{t_k}` and compares it with `budget`.
pub fn class_d_diagnostic(
    fam: &MajorantFamily,
    process: &[f64],
    grid: &TimeGrid,
    family: &StoppingFamily,
    budget: f64,
) -> Result<CheckReport> {
    let n = grid.steps();
    if process.is_empty() || process.len() % (n + 1) != 0 {
        return Err(Error::Precondition(format!(
            "process holds {} values, not a multiple of {} nodes",
            process.len(),
            n + 1
        )));
    }
    let m = process.len() / (n + 1);
    let mut stops: Vec<(String, f64, Option<f64>, Vec<usize>)> = Vec::new();
    if family.grid_times {
        for k in 0..=n {
            stops.push((format!("t={}", grid.t(k)), grid.t(k), None, vec![k; m]));
        }
    }
    for &c in &family.levels {
        let idx = (0..m)
            .map(|i| (0..=n).find(|&k| process[i * (n + 1) + k] >= c).unwrap_or(n))
            .collect();
        stops.push((format!("hit {c}"), grid.horizon(), Some(c), idx));
    }
    if stops.is_empty() {
        return Err(Error::Precondition("empty stopping family".into()));
    }

    let mut b = ReportBuilder::new("class_d_surrogate");
    b.note("surrogate: finite stopping family, Monte Carlo estimates");
    let mut sup = (f64::NEG_INFINITY, 0.0, String::new());
    let mut worst_share: f64 = 0.0;
    for (label, t, level, idx) in stops {
        let vals: Vec<f64> = (0..m)
            .map(|i| fam.big_k(process[i * (n + 1) + idx[i]].max(0.0)))
            .collect::<Result<_>>()?;
        let overflowed = vals.iter().filter(|v| !v.is_finite()).count();
        let est = Estimate::from_slice(&vals);
        let share = if overflowed > 0 { 1.0 } else { top1_share(&vals) };
        if overflowed > 0 {
            b.note(format!("{label}: K overflowed on {overflowed} samples"));
        }
        worst_share = worst_share.max(share);
        if est.mean > sup.0 || !est.mean.is_finite() {
            sup = (est.mean, est.std_error, label.clone());
        }
        b.push(Witness {
            kind: CheckKind::ClassDSurrogate,
            t,
            state: Vec::new(),
            z: level.map(|c| vec![c]).unwrap_or_default(),
            z_prime: Vec::new(),
            u: Vec::new(),
            lhs: if est.is_finite() { est.mean + 4.0 * est.std_error } else { f64::INFINITY },
            rhs: budget,
        });
    }
    b.note(format!("sup E[K(X_tau+)] = {:.6e} (se {:.2e}) at {}", sup.0, sup.1, sup.2));
    b.note(format!("largest top-1% mass share {worst_share:.3}"));
    let mut report = b.finish();
    if worst_share > DOMINANCE_SHARE {
        report.passed = false;
        report.notes.push(format!(
            "top-1% mass dominance ({worst_share:.3} > {DOMINANCE_SHARE}); the estimate is unreliable"
        ));
    }
    Ok(report)
}
