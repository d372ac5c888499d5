//! Adapted controls, Doléans-Dade weights and entropy accounting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use super::ensemble::{PathEnsemble, PathWindow};
use super::grid::TimeGrid;
use crate::error::{Error, Result};
use crate::numerics::{dot, Estimate};

/// An adapted control `q`. `eval` sees path `i` only up to node `k`.
pub trait Control: Send + Sync {
    fn eval(&self, i: usize, k: usize, path: &PathWindow<'_>, out: &mut [f64]);

    fn label(&self) -> String;

    /// `Some(M)` when the control is a table over a specific set of `M` paths.
    fn tabulated_paths(&self) -> Option<usize> {
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantControl(pub Vec<f64>);

impl Control for ConstantControl {
    fn eval(&self, _i: usize, _k: usize, _path: &PathWindow<'_>, out: &mut [f64]) {
        out.fill(0.0);
        let n = out.len().min(self.0.len());
        out[..n].copy_from_slice(&self.0[..n]);
    }

    fn label(&self) -> String {
        format!("constant {:?}", self.0)
    }
}

pub type MarkovFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

/// `q_k = f(t_k, B_{t_k})`.
#[derive(Clone)]
pub struct FnControl {
    pub label: String,
    pub f: Arc<MarkovFn>,
}

impl FnControl {
    pub fn new(label: impl Into<String>, f: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> FnControl {
        FnControl {
            label: label.into(),
            f: Arc::new(f),
        }
    }
}

impl Control for FnControl {
    fn eval(&self, _i: usize, k: usize, path: &PathWindow<'_>, out: &mut [f64]) {
        use super::ensemble::PathView;
        (self.f)(path.time(k), path.current(), out)
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Per-path, per-step values `M × N × d`, e.g. `q*` read off a solution.
#[derive(Clone, Debug)]
pub struct TableControl {
    pub label: String,
    pub paths: usize,
    pub steps: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl Control for TableControl {
    fn eval(&self, i: usize, k: usize, _path: &PathWindow<'_>, out: &mut [f64]) {
        let off = (i * self.steps + k) * self.dim;
        out.copy_from_slice(&self.values[off..off + self.dim]);
    }

    fn label(&self) -> String {
        self.label.clone()
    }

    fn tabulated_paths(&self) -> Option<usize> {
        Some(self.paths)
    }
}

/// Logarithms above this are flagged as overflowing.
pub const LOG_WEIGHT_CAP: f64 = 700.0;

#[derive(Clone, Debug)]
pub struct ControlProcess {
    pub label: String,
    pub grid: TimeGrid,
    pub paths: usize,
    pub dim: usize,
    /// `M × N × d`, `q_{t_k}` on each path.
    pub q: Vec<f64>,
    /// `M × (N+1)`, `ln M^q_{t_k}`.
    pub log_weights: Vec<f64>,
    pub overflow: Vec<bool>,
}

impl ControlProcess {
    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    #[inline]
    pub fn q(&self, i: usize, k: usize) -> &[f64] {
        let off = (i * self.steps() + k) * self.dim;
        &self.q[off..off + self.dim]
    }

    #[inline]
    pub fn log_weight(&self, i: usize, k: usize) -> f64 {
        self.log_weights[i * (self.steps() + 1) + k]
    }

    #[inline]
    pub fn weight(&self, i: usize, k: usize) -> f64 {
        self.log_weight(i, k).exp()
    }

    pub fn terminal_weight(&self, i: usize) -> f64 {
        self.weight(i, self.steps())
    }

    /// `∫₀^{t_k} q ds` on path `i`.
    pub fn shift(&self, i: usize, k: usize) -> Vec<f64> {
        let mut s = vec![0.0; self.dim];
        for j in 0..k {
            let dt = self.grid.dt(j);
            for (a, qv) in s.iter_mut().zip(self.q(i, j)) {
                *a += qv * dt;
            }
        }
        s
    }

    /// `½ Σ |q_k|² Δt_k` on path `i`.
    pub fn energy(&self, i: usize) -> f64 {
        0.5 * (0..self.steps())
            .map(|k| {
                let q = self.q(i, k);
                dot(q, q) * self.grid.dt(k)
            })
            .sum::<f64>()
    }

    pub fn overflow_count(&self) -> usize {
        self.overflow.iter().filter(|&&o| o).count()
    }

    /// Paths kept by the estimators.
    pub fn included(&self) -> Vec<usize> {
        (0..self.paths).filter(|&i| !self.overflow[i]).collect()
    }

    /// Reweighted mean `E[M^q_T f(i)]` over the non-overflowing paths.
    pub fn reweighted<F>(&self, f: F) -> Estimate
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        let inc = self.included();
        Estimate::from_fn(inc.len(), |j| self.terminal_weight(inc[j]) * f(inc[j]))
    }

    /// Mean of `M^q_T`, which should be 1.
    pub fn martingale_proxy(&self) -> MartingaleProxy {
        let est = self.reweighted(|_| 1.0);
        let passed = (est.mean - 1.0).abs() <= 4.0 * est.std_error.max(1e-15);
        MartingaleProxy {
            estimate: est,
            passed,
            overflowed: self.overflow_count(),
        }
    }

    /// Effective sample size `(Σw)²/Σw²` of the terminal weights.
    pub fn effective_sample_size(&self) -> f64 {
        let inc = self.included();
        if inc.is_empty() {
            return 0.0;
        }
        let lmax = inc.iter().map(|&i| self.log_weight(i, self.steps())).fold(f64::NEG_INFINITY, f64::max);
        let n = self.steps();
        let s1 = crate::numerics::det_sum(inc.len(), |j| (self.log_weight(inc[j], n) - lmax).exp());
        let s2 = crate::numerics::det_sum(inc.len(), |j| (2.0 * (self.log_weight(inc[j], n) - lmax)).exp());
        s1 * s1 / s2
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MartingaleProxy {
    pub estimate: Estimate,
    pub passed: bool,
    pub overflowed: usize,
}

/// Builds `M^q_{t_k} = exp(Σ_{j<k} q_j·ΔB_j − ½ Σ_{j<k} |q_j|² Δt_j)` with `q`
/// evaluated at the left end of each step.
pub fn doleans(control: &dyn Control, ens: &PathEnsemble) -> Result<ControlProcess> {
    if let Some(m) = control.tabulated_paths() {
        if m != ens.paths {
            return Err(Error::Precondition(format!(
                "control '{}' is tabulated on {m} paths, ensemble has {}",
                control.label(),
                ens.paths
            )));
        }
    }
    let (n, d, m) = (ens.steps(), ens.dim, ens.paths);
    let mut q = vec![0.0; m * n * d];
    let mut logw = vec![0.0; m * (n + 1)];
    let mut overflow = vec![false; m];
    q.par_chunks_mut(n * d)
        .zip(logw.par_chunks_mut(n + 1))
        .zip(overflow.par_iter_mut())
        .enumerate()
        .try_for_each(|(i, ((qi, li), of))| -> Result<()> {
            let mut acc = 0.0;
            for k in 0..n {
                let qk = &mut qi[k * d..(k + 1) * d];
                control.eval(i, k, &ens.window(i, k), qk);
                if let Some(bad) = qk.iter().find(|v| !v.is_finite()) {
                    return Err(Error::Precondition(format!(
                        "control '{}' is {bad} on path {i} at node {k}",
                        control.label()
                    )));
                }
                let dt = ens.grid.dt(k);
                let mut lin = 0.0;
                let mut sq = 0.0;
                for (j, qv) in qk.iter().enumerate() {
                    lin += qv * ens.increment(i, k, j);
                    sq += qv * qv;
                }
                acc += lin - 0.5 * sq * dt;
                li[k + 1] = acc;
            }
            *of = li.iter().any(|&l| l > LOG_WEIGHT_CAP);
            Ok(())
        })?;
    Ok(ControlProcess {
        label: control.label(),
        grid: ens.grid.clone(),
        paths: m,
        dim: d,
        q,
        log_weights: logw,
        overflow,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EntropyEstimate {
    /// `E[M^q_T ln M^q_T]`.
    pub primal: Estimate,
    /// `½ E[M^q_T ∫|q|² dt]`, i.e. the `ℚ_q`-expectation by reweighting.
    pub dual: Estimate,
    pub effective_sample_size: f64,
    pub overflowed: usize,
}

impl EntropyEstimate {
    pub fn combined_se(&self) -> f64 {
        self.primal.combined_se(&self.dual)
    }

    pub fn agree(&self, sigmas: f64) -> bool {
        (self.primal.mean - self.dual.mean).abs() <= sigmas * self.combined_se().max(1e-15)
    }
}

/// Minimum acceptable effective sample size for `m` paths.
pub fn ess_threshold(m: usize) -> f64 {
    (m as f64 * 1e-3).max(10.0).min(m as f64)
}

pub fn relative_entropy(ctrl: &ControlProcess, ens: &PathEnsemble) -> Result<EntropyEstimate> {
    if ctrl.paths != ens.paths || ctrl.grid != ens.grid {
        return Err(Error::Precondition("control process was built on a different ensemble".into()));
    }
    let ess = ctrl.effective_sample_size();
    let threshold = ess_threshold(ens.paths);
    if !(ess >= threshold) {
        return Err(Error::DegenerateWeights { ess, threshold });
    }
    let n = ctrl.steps();
    Ok(EntropyEstimate {
        primal: ctrl.reweighted(|i| ctrl.log_weight(i, n)),
        dual: ctrl.reweighted(|i| ctrl.energy(i)),
        effective_sample_size: ess,
        overflowed: ctrl.overflow_count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_control_has_unit_weights() {
        let g = TimeGrid::uniform(1.0, 8).unwrap();
        let e = PathEnsemble::simulate(&g, 2, 64, 3).unwrap();
        let c = doleans(&ConstantControl(vec![0.0, 0.0]), &e).unwrap();
        assert!(c.log_weights.iter().all(|&l| l == 0.0));
        let h = relative_entropy(&c, &e).unwrap();
        assert_eq!((h.primal.mean, h.dual.mean), (0.0, 0.0));
    }

    #[test]
    fn non_finite_control_is_rejected() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let e = PathEnsemble::simulate(&g, 1, 4, 3).unwrap();
        let bad = FnControl::new("nan", |_, _, out| out[0] = f64::NAN);
        assert!(matches!(doleans(&bad, &e), Err(Error::Precondition(_))));
    }
}
