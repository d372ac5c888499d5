//! Backward regression solver for `Y_t = ξ − ∫_t^T g(s, Z_s) ds + ∫_t^T Z_s dB_s`
//! and for the dual BSDE driven by `f1(q) − g2(Z^q)` under `ℚ_q`.

mod backward;
mod basis;

pub use basis::{BasisConfig, StepFit, RANK_TOLERANCE};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

use crate::conjugate::ConjugateHandle;
use crate::error::{Error, Result};
use crate::generators::{check_quadratic_growth, GeneratorSpec, Probe};
use crate::numerics::{dot, Estimate};
use crate::stochastics::{doleans, sidecar_path, Control, EnsembleSidecar, PathEnsemble, TerminalSpec, TimeGrid};
use backward::{Driver, Sweep};
use basis::Projector;

/// Share of clipped `Z` evaluations above which a warning is recorded.
pub const CLIP_WARNING_SHARE: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectorKind {
    /// Lattice on tree ensembles, regression otherwise.
    Auto,
    Regression,
    Lattice,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStart {
    /// Start Picard from the explicit sweep.
    Explicit,
    /// Start Picard from `Z ≡ 0`.
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scheme {
    pub label: String,
    pub basis: BasisConfig,
    pub projector: ProjectorKind,
    /// Fixed truncation radius; `None` picks the automatic radius.
    pub truncation_radius: Option<f64>,
    /// Multiplier applied to the automatic radius.
    pub truncation_scale: f64,
    pub picard_iterations: usize,
    pub warm_start: WarmStart,
    /// Final Picard gap allowed, relative to `1 + |Y_0|`.
    pub picard_tolerance: f64,
    /// `Z_seed ← damping·Z_new + (1 − damping)·Z_seed` between iterations.
    pub damping: f64,
    /// Require the growth check at the truncation radius before solving.
    pub check_growth: bool,
}

impl Default for Scheme {
    fn default() -> Self {
        Scheme {
            label: "default".into(),
            basis: BasisConfig::default(),
            projector: ProjectorKind::Auto,
            truncation_radius: None,
            truncation_scale: 1.0,
            picard_iterations: 0,
            warm_start: WarmStart::Explicit,
            picard_tolerance: 1e-3,
            damping: 1.0,
            check_growth: true,
        }
    }
}

impl Scheme {
    pub fn validate(&self) -> Result<()> {
        if self.basis.degree == 0 {
            return Err(Error::Config("basis degree must be at least 1".into()));
        }
        if self.basis.clamp.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("basis clamp must be positive".into()));
        }
        if !(self.basis.ridge >= 0.0) {
            return Err(Error::Config("ridge must be nonnegative".into()));
        }
        if let Some(r) = self.truncation_radius {
            if !(r > 0.0) {
                return Err(Error::Config(format!("truncation radius must be positive, got {r}")));
            }
        }
        if !(self.truncation_scale > 0.0) || !(self.damping > 0.0 && self.damping <= 1.0) || !(self.picard_tolerance > 0.0) {
            return Err(Error::Config("truncation_scale, damping in (0,1] and picard_tolerance must be positive".into()));
        }
        Ok(())
    }

    fn projector<'a>(&self, states: &'a PathEnsemble) -> Result<Projector<'a>> {
        let lattice = match self.projector {
            ProjectorKind::Auto => states.is_tree(),
            ProjectorKind::Lattice => true,
            ProjectorKind::Regression => false,
        };
        if lattice {
            if !states.is_tree() {
                return Err(Error::Config("the lattice projector needs a binary-tree ensemble".into()));
            }
            Ok(Projector::Lattice { paths: states.paths })
        } else {
            Ok(Projector::Regression {
                cfg: self.basis,
                states,
            })
        }
    }

    fn projector_name(&self, states: &PathEnsemble) -> &'static str {
        match self.projector {
            ProjectorKind::Lattice => "lattice",
            ProjectorKind::Auto if states.is_tree() => "lattice",
            _ => "regression",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// RMS of `target − fitted` in the `Y` projection, per step.
    pub regression_rms: Vec<f64>,
    /// Per-step mean of `Y_{k+1} − Y_k − g Δt + Z·ΔB`.
    pub one_step: Vec<Estimate>,
    /// Steps whose one-step mean is beyond 4 standard errors.
    pub one_step_violations: usize,
    pub picard_gaps: Vec<f64>,
    /// Per-step ratio of successive RMS `Z` updates in the last iteration.
    pub contraction: Vec<f64>,
    pub clip_count: usize,
    pub evaluations: usize,
    pub warnings: Vec<String>,
    /// `E[max_k |Y_{t_k}|]`.
    pub sup_abs_y: Estimate,
    /// `E[(Σ |Z_k|² Δt_k)^{1/2}]`.
    pub z_l2: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsdeSolution {
    pub grid: TimeGrid,
    pub paths: usize,
    pub dim: usize,
    /// `M × (N+1)`.
    pub y: Vec<f64>,
    /// `M × N × d`.
    pub z: Vec<f64>,
    /// Pathwise estimate of `Y_0`.
    pub y0: Estimate,
    pub scheme: Scheme,
    pub truncation_radius: f64,
    pub projector: String,
    pub residuals: Residuals,
    /// Per step: coefficient vectors for `Ê[S]` then, per coordinate, for
    /// `−Z`. Empty for the lattice projector.
    pub fits: Vec<StepFit>,
}

impl BsdeSolution {
    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    #[inline]
    pub fn y_at(&self, i: usize, k: usize) -> f64 {
        self.y[i * (self.steps() + 1) + k]
    }

    #[inline]
    pub fn z_at(&self, i: usize, k: usize) -> &[f64] {
        let n = self.steps();
        &self.z[(i * n + k) * self.dim..(i * n + k + 1) * self.dim]
    }

    /// Mean of `Y_{t_k}` over paths.
    pub fn mean_y(&self, k: usize) -> Estimate {
        Estimate::from_fn(self.paths, |i| self.y_at(i, k))
    }

    /// Mean of coordinate `j` of `Z_{t_k}` over paths.
    pub fn mean_z(&self, k: usize, j: usize) -> Estimate {
        Estimate::from_fn(self.paths, |i| self.z_at(i, k)[j])
    }

    /// `Z(t_k, b)` from the stored regression fit.
    pub fn z_function(&self, k: usize, state: &[f64], out: &mut [f64]) -> Result<()> {
        let fit = self
            .fits
            .get(k)
            .ok_or_else(|| Error::Precondition("solution carries no regression fits".into()))?;
        for (j, o) in out.iter_mut().enumerate() {
            *o = -fit.predict(&self.scheme.basis, 1 + j, state);
        }
        backward::clip(out, self.truncation_radius);
        Ok(())
    }

    fn block_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * (self.y.len() + self.z.len()));
        for v in self.y.iter().chain(&self.z) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Writes the ensemble layout followed by the `Y` and `Z` blocks, plus a
    /// JSON sidecar.
    pub fn write(&self, ens: &PathEnsemble, path: &Path) -> Result<()> {
        if ens.paths != self.paths || ens.grid != self.grid || ens.dim != self.dim {
            return Err(Error::Precondition("solution and ensemble shapes differ".into()));
        }
        let mut bytes = ens.to_bytes();
        bytes.extend_from_slice(&self.block_bytes());
        fs::write(path, &bytes)?;
        let side = SolutionSidecar {
            ensemble: ens.sidecar(),
            y0: self.y0,
            truncation_radius: self.truncation_radius,
            projector: self.projector.clone(),
            scheme: self.scheme.clone(),
            layout: "ensemble layout, then f64le Y[M*(N+1)], f64le Z[M*N*d]".into(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        };
        fs::write(sidecar_path(path), serde_json::to_vec_pretty(&side)?)?;
        Ok(())
    }

    /// Reads the ensemble and the `(Y, Z)` blocks written by [`BsdeSolution::write`].
    pub fn read_blocks(path: &Path) -> Result<(PathEnsemble, Vec<f64>, Vec<f64>)> {
        let bytes = fs::read(path)?;
        let side: SolutionSidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
        if hex::encode(Sha256::digest(&bytes)) != side.sha256 {
            return Err(Error::Format(format!("{}: checksum mismatch", path.display())));
        }
        let (ens, tail) = PathEnsemble::from_bytes(&bytes, &side.ensemble.rng_scheme)?;
        let (m, n, d) = (ens.paths, ens.steps(), ens.dim);
        let want = 8 * (m * (n + 1) + m * n * d);
        if tail.len() != want {
            return Err(Error::Format(format!("solution blocks hold {} bytes, expected {want}", tail.len())));
        }
        let floats: Vec<f64> = tail.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let z = floats[m * (n + 1)..].to_vec();
        let mut y = floats;
        y.truncate(m * (n + 1));
        Ok((ens, y, z))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionSidecar {
    pub ensemble: EnsembleSidecar,
    pub y0: Estimate,
    pub truncation_radius: f64,
    pub projector: String,
    pub scheme: Scheme,
    pub layout: String,
    pub sha256: String,
}

/// `ξ` on every path.
pub fn terminal_values(terminal: &TerminalSpec, ens: &PathEnsemble) -> Result<Vec<f64>> {
    terminal.validate()?;
    (0..ens.paths)
        .into_par_iter()
        .map(|i| {
            let v = terminal.eval(&ens.path(i));
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Domain(format!("terminal value {v} on path {i}")))
            }
        })
        .collect()
}

/// `max(1, √(2(max|ξ| + max ∫α)/(γ Δt_max)))`.
pub fn auto_truncation_radius(gen: &GeneratorSpec, xi: &[f64], states: &PathEnsemble) -> Result<f64> {
    let n = states.steps();
    let alpha_int: Vec<f64> = (0..states.paths)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|k| Ok(gen.try_alpha(states.grid.t(k), states.value(i, k))?.abs() * states.grid.dt(k)))
                .sum::<Result<f64>>()
        })
        .collect::<Result<_>>()?;
    let max_xi = xi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let max_alpha = alpha_int.iter().fold(0.0f64, |a, v| a.max(*v));
    Ok((2.0 * (max_xi + max_alpha) / (gen.gamma * states.grid.max_dt())).sqrt().max(1.0))
}

fn resolve_radius(gen: &GeneratorSpec, xi: &[f64], states: &PathEnsemble, scheme: &Scheme) -> Result<f64> {
    match scheme.truncation_radius {
        Some(r) => Ok(r),
        None => Ok(auto_truncation_radius(gen, xi, states)? * scheme.truncation_scale),
    }
}

fn finish(
    grid: &TimeGrid,
    dim: usize,
    out: backward::SweepOutput,
    scheme: &Scheme,
    radius: f64,
    projector: &str,
) -> BsdeSolution {
    let m = out.y.len() / (grid.steps() + 1);
    let n = grid.steps();
    let mut warnings = Vec::new();
    let share = out.clip_count as f64 / out.evaluations.max(1) as f64;
    if share > CLIP_WARNING_SHARE {
        warnings.push(format!(
            "truncation radius {radius:.4} clipped {:.1}% of Z evaluations",
            100.0 * share
        ));
    }
    let one_step_violations = out
        .one_step
        .iter()
        .filter(|e| e.mean.abs() > 4.0 * e.std_error + 1e-12 * (1.0 + e.mean.abs()))
        .count();
    let sup_abs_y = Estimate::from_fn(m, |i| {
        out.y[i * (n + 1)..(i + 1) * (n + 1)].iter().fold(0.0f64, |a, v| a.max(v.abs()))
    });
    let z_l2 = Estimate::from_fn(m, |i| {
        (0..n)
            .map(|k| {
                let zi = &out.z[(i * n + k) * dim..(i * n + k + 1) * dim];
                dot(zi, zi) * grid.dt(k)
            })
            .sum::<f64>()
            .sqrt()
    });
    BsdeSolution {
        grid: grid.clone(),
        paths: m,
        dim,
        y: out.y,
        z: out.z,
        y0: out.y0,
        scheme: scheme.clone(),
        truncation_radius: radius,
        projector: projector.into(),
        residuals: Residuals {
            regression_rms: out.regression_rms,
            one_step: out.one_step,
            one_step_violations,
            picard_gaps: Vec::new(),
            contraction: Vec::new(),
            clip_count: out.clip_count,
            evaluations: out.evaluations,
            warnings,
            sup_abs_y,
            z_l2,
        },
        fits: out.fits,
    }
}

/// Everything a primal sweep needs besides the Picard seed.
struct Primal<'a> {
    gen: &'a GeneratorSpec,
    ens: &'a PathEnsemble,
    xi: Vec<f64>,
    radius: f64,
    scheme: &'a Scheme,
}

impl Primal<'_> {
    fn sweep(&self, seed: Option<&[f64]>) -> Result<BsdeSolution> {
        let projector = self.scheme.projector(self.ens)?;
        let ens = self.ens;
        let gen = self.gen;
        let driver = |_i: usize, k: usize, state: &[f64], z: &[f64]| gen.try_eval(ens.grid.t(k), state, z);
        let noise = |i: usize, k: usize, j: usize| ens.increment(i, k, j);
        let out = Sweep {
            states: ens,
            projector: &projector,
            noise: &noise,
            likelihood: None,
            terminal_weights: None,
            driver: &driver as &Driver,
            terminal: &self.xi,
            need_z: true,
            seed_z: seed,
            radius: self.radius,
        }
        .run()?;
        Ok(finish(&ens.grid, ens.dim, out, self.scheme, self.radius, self.scheme.projector_name(ens)))
    }
}

/// Solves the primal BSDE on `ens`.
pub fn solve(gen: &GeneratorSpec, terminal: &TerminalSpec, ens: &PathEnsemble, scheme: &Scheme) -> Result<BsdeSolution> {
    gen.validate()?;
    scheme.validate()?;
    let xi = terminal_values(terminal, ens)?;
    let radius = resolve_radius(gen, &xi, ens, scheme)?;
    if scheme.check_growth {
        let probe = Probe::new(ens.dim).with_radius(radius.min(1e4)).with_samples(400);
        let report = check_quadratic_growth(gen, &probe)?;
        if !report.passed {
            let w = &report.witnesses[0];
            return Err(Error::Precondition(format!(
                "{} fails quadratic growth within radius {radius:.3}: at z={:?}, {} > {}",
                gen.name, w.z, w.lhs, w.rhs
            )));
        }
    }
    let primal = Primal {
        gen,
        ens,
        xi,
        radius,
        scheme,
    };
    if scheme.picard_iterations == 0 {
        return primal.sweep(None);
    }
    let start = match scheme.warm_start {
        WarmStart::Explicit => primal.sweep(None)?,
        WarmStart::Zero => {
            let zero = vec![0.0; ens.paths * ens.steps() * ens.dim];
            let mut s = primal.sweep(Some(&zero))?;
            s.residuals.picard_gaps.push(picard_gap(&zero, &s.z, f64::NAN, s.y0.mean, ens));
            s
        }
    };
    let sol = iterate(&primal, start, scheme.picard_iterations, scheme.damping)?;
    let gap = *sol.residuals.picard_gaps.last().unwrap_or(&0.0);
    if gap > scheme.picard_tolerance * (1.0 + sol.y0.mean.abs()) {
        return Err(Error::PicardNonConvergence {
            gap,
            iterations: scheme.picard_iterations,
        });
    }
    Ok(sol)
}

fn rms_by_step(a: &[f64], b: &[f64], ens: &PathEnsemble) -> Vec<f64> {
    let (m, n, d) = (ens.paths, ens.steps(), ens.dim);
    (0..n)
        .map(|k| {
            let s = crate::numerics::det_sum(m, |i| {
                let off = (i * n + k) * d;
                (0..d).map(|j| (a[off + j] - b[off + j]).powi(2)).sum::<f64>()
            });
            (s / m as f64).sqrt()
        })
        .collect()
}

fn picard_gap(seed: &[f64], z: &[f64], y0_old: f64, y0_new: f64, ens: &PathEnsemble) -> f64 {
    let zmax = rms_by_step(seed, z, ens).into_iter().fold(0.0f64, f64::max);
    let dy = if y0_old.is_nan() { 0.0 } else { (y0_new - y0_old).abs() };
    zmax.max(dy)
}

fn iterate(primal: &Primal<'_>, start: BsdeSolution, iterations: usize, damping: f64) -> Result<BsdeSolution> {
    let ens = primal.ens;
    let mut current = start;
    let mut gaps = current.residuals.picard_gaps.clone();
    let mut prev_steps: Option<Vec<f64>> = None;
    let mut contraction = vec![0.0; ens.steps()];
    let mut streak = 0;
    let mut last_seed: Option<Vec<f64>> = None;
    for _ in 0..iterations {
        let seed: Vec<f64> = match &last_seed {
            Some(old) if damping < 1.0 => old.iter().zip(&current.z).map(|(o, z)| damping * z + (1.0 - damping) * o).collect(),
            _ => current.z.clone(),
        };
        let next = primal.sweep(Some(&seed))?;
        let steps = rms_by_step(&seed, &next.z, ens);
        if let Some(prev) = &prev_steps {
            contraction = steps
                .iter()
                .zip(prev)
                .map(|(s, p)| if *p > 0.0 { s / p } else { 0.0 })
                .collect();
        }
        let gap = steps
            .iter()
            .fold(0.0f64, |a, v| a.max(*v))
            .max((next.y0.mean - current.y0.mean).abs());
        if let Some(&last) = gaps.last() {
            if gap > last {
                streak += 1;
            } else {
                streak = 0;
            }
        }
        gaps.push(gap);
        prev_steps = Some(steps);
        last_seed = Some(seed);
        current = next;
        if streak >= 3 {
            return Err(Error::PicardDivergence { gap, streak });
        }
        if gap == 0.0 {
            break;
        }
    }
    current.residuals.picard_gaps = gaps;
    current.residuals.contraction = contraction;
    Ok(current)
}

/// Re-runs the backward sweep `iterations` times, each seeded with the
/// previous `Z`.
pub fn picard_refine(
    solution: &BsdeSolution,
    gen: &GeneratorSpec,
    terminal: &TerminalSpec,
    ens: &PathEnsemble,
    iterations: usize,
) -> Result<BsdeSolution> {
    if solution.paths != ens.paths || solution.grid != ens.grid || solution.dim != ens.dim {
        return Err(Error::Precondition("warm start was solved on a different ensemble".into()));
    }
    let primal = Primal {
        gen,
        ens,
        xi: terminal_values(terminal, ens)?,
        radius: solution.truncation_radius,
        scheme: &solution.scheme,
    };
    let mut start = solution.clone();
    start.residuals.picard_gaps.clear();
    iterate(&primal, start, iterations, solution.scheme.damping)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualMode {
    /// Fresh paths unless the control is a per-path table.
    Auto,
    /// Simulate `B = W + ∫q ds` with the ensemble increments as `W = B^q`.
    FreshPaths,
    /// Stay on `ens` and reweight by the Doléans-Dade likelihood.
    Reweight,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub control: String,
    pub mode: DualMode,
    pub solution: BsdeSolution,
    /// Effective sample size of the terminal weights when reweighting.
    pub effective_sample_size: Option<f64>,
    pub overflowed: usize,
}

/// Solves `Y^q_t = ξ + ∫_t^T (f1(q) − g2(Z^q)) ds + ∫_t^T Z^q dB^q`.
///
/// Under `ℚ_q` this is the BSDE with driver `G(z) = g2(z) − f1(q)`. When
/// `g2 ≡ 0` no `Z` is regressed.
pub fn solve_dual(
    gen: &GeneratorSpec,
    handle: &ConjugateHandle<'_>,
    terminal: &TerminalSpec,
    ens: &PathEnsemble,
    control: &dyn Control,
    scheme: &Scheme,
    mode: DualMode,
) -> Result<DualSolution> {
    gen.validate()?;
    scheme.validate()?;
    let mode = match mode {
        DualMode::Auto if control.tabulated_paths().is_some() => DualMode::Reweight,
        DualMode::Auto => DualMode::FreshPaths,
        m => m,
    };
    let (m, n, d) = (ens.paths, ens.steps(), ens.dim);
    let need_z = !gen.g2.is_zero();

    let (states, q, likelihood, weights, ess, overflowed) = match mode {
        DualMode::FreshPaths => {
            if control.tabulated_paths().is_some() {
                return Err(Error::Precondition("tabulated controls can only be reweighted".into()));
            }
            let (states, q) = shifted_paths(control, ens);
            let bad = q.iter().position(|v| !v.is_finite());
            if let Some(p) = bad {
                return Err(Error::Precondition(format!(
                    "control '{}' is {} on path {} at step {}",
                    control.label(),
                    q[p],
                    p / (n * d),
                    (p / d) % n
                )));
            }
            (states, q, None, None, None, 0)
        }
        _ => {
            let cp = doleans(control, ens)?;
            let lik: Vec<f64> = (0..m * n)
                .into_par_iter()
                .map(|ik| {
                    let (i, k) = (ik / n, ik % n);
                    if cp.overflow[i] {
                        0.0
                    } else {
                        (cp.log_weight(i, k + 1) - cp.log_weight(i, k)).exp()
                    }
                })
                .collect();
            let w: Vec<f64> = (0..m)
                .map(|i| if cp.overflow[i] { 0.0 } else { cp.terminal_weight(i) })
                .collect();
            let ess = cp.effective_sample_size();
            let of = cp.overflow_count();
            (ens.clone(), cp.q, Some(lik), Some(w), Some(ess), of)
        }
    };

    let f1: Vec<f64> = (0..m * n)
        .into_par_iter()
        .map(|ik| {
            let (i, k) = (ik / n, ik % n);
            handle.transform(states.grid.t(k), states.value(i, k), &q[ik * d..(ik + 1) * d])
        })
        .collect::<Result<_>>()?;
    let xi = terminal_values(terminal, &states)?;
    let radius = resolve_radius(gen, &xi, &states, scheme)?;
    let projector = scheme.projector(&states)?;
    let driver = |i: usize, k: usize, state: &[f64], z: &[f64]| -> Result<f64> {
        let g2 = if need_z { gen.try_g2(states.grid.t(k), state, z)? } else { 0.0 };
        Ok(g2 - f1[i * n + k])
    };
    let shift_noise = |i: usize, k: usize, j: usize| ens.increment(i, k, j) - q[(i * n + k) * d + j] * ens.grid.dt(k);
    let plain_noise = |i: usize, k: usize, j: usize| ens.increment(i, k, j);
    let noise: &backward::Noise = if mode == DualMode::Reweight { &shift_noise } else { &plain_noise };
    let out = Sweep {
        states: &states,
        projector: &projector,
        noise,
        likelihood: likelihood.as_deref(),
        terminal_weights: weights.as_deref(),
        driver: &driver,
        terminal: &xi,
        need_z,
        seed_z: None,
        radius,
    }
    .run()?;
    let mut solution = finish(&states.grid, d, out, scheme, radius, scheme.projector_name(&states));
    if overflowed > 0 {
        solution
            .residuals
            .warnings
            .push(format!("{overflowed} paths with overflowing weights were excluded"));
    }
    Ok(DualSolution {
        control: control.label(),
        mode,
        solution,
        effective_sample_size: ess,
        overflowed,
    })
}

/// `B_{k+1} = B_k + q(t_k, B_{·≤k})Δt + ΔW_k` with `W` the ensemble paths.
fn shifted_paths(control: &dyn Control, ens: &PathEnsemble) -> (PathEnsemble, Vec<f64>) {
    let (m, n, d) = (ens.paths, ens.steps(), ens.dim);
    let row = ens.row_len();
    let mut values = vec![0.0; m * row];
    let mut q = vec![0.0; m * n * d];
    let times = ens.grid.nodes();
    values
        .par_chunks_mut(row)
        .zip(q.par_chunks_mut(n * d))
        .enumerate()
        .for_each(|(i, (b, qi))| {
            for k in 0..n {
                let qk = &mut qi[k * d..(k + 1) * d];
                control.eval(i, k, &crate::stochastics::PathWindow::new(b, times, d, k), qk);
                let dt = ens.grid.dt(k);
                for j in 0..d {
                    b[(k + 1) * d + j] = b[k * d + j] + qk[j] * dt + ens.increment(i, k, j);
                }
            }
        });
    let mut states = ens.clone();
    states.values = values;
    (states, q)
}
