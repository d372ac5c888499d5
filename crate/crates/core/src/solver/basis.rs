//! Conditional-expectation projectors.
//!
//! `Regression` is least squares on Hermite polynomials and hinge functions
//! of the clamped standardized state `B_{t_k}/√t_k`;
//! `Lattice` is the exact conditional expectation on a full Rademacher tree,
//! where paths sharing their first `k` signs form one atom of `ℱ_{t_k}`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::det_sum_vec;
use crate::stochastics::PathEnsemble;

/// Smallest admissible eigenvalue ratio of the normalized Gram matrix.
pub const RANK_TOLERANCE: f64 = 1e-13;

/// Default clamp on standardized states.
pub const CLAMP: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BasisConfig {
    /// Hermite degree per coordinate.
    pub degree: usize,
    /// Standardized states are clamped to `[−clamp, clamp]` before the
    /// polynomials are evaluated; `None` disables clamping.
    pub clamp: Option<f64>,
    /// Hinge functions `(x − κ_j)₊` per coordinate, knots evenly spaced
    /// inside `(−3, 3)` in standardized units.
    pub knots: usize,
    /// Include pairwise products `x_i x_j`, `i < j`.
    pub cross_terms: bool,
    pub ridge: f64,
}

impl Default for BasisConfig {
    fn default() -> Self {
        BasisConfig {
            degree: 4,
            clamp: Some(CLAMP),
            knots: 8,
            cross_terms: true,
            ridge: 1e-10,
        }
    }
}

impl BasisConfig {
    pub fn size(&self, dim: usize, constant_only: bool) -> usize {
        if constant_only {
            return 1;
        }
        let cross = if self.cross_terms { dim * (dim - 1) / 2 } else { 0 };
        1 + (self.degree + self.knots) * dim + cross
    }

    /// Writes the basis at `state` into `out`, standardizing coordinate `j`
    /// as `(b_j − center_j)/scale_j`. An empty `scale` gives the constant only.
    pub fn eval(&self, state: &[f64], center: &[f64], scale: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        if scale.is_empty() {
            return;
        }
        let d = state.len();
        let c = self.clamp.unwrap_or(f64::INFINITY);
        let x = |j: usize| ((state[j] - center[j]) / scale[j]).clamp(-c, c);
        let mut pos = 1;
        for j in 0..d {
            let x = x(j);
            // Probabilists' Hermite recursion.
            let (mut h0, mut h1) = (1.0, x);
            for n in 1..=self.degree {
                out[pos] = h1;
                pos += 1;
                let h2 = x * h1 - n as f64 * h0;
                h0 = h1;
                h1 = h2;
            }
            for i in 1..=self.knots {
                let kappa = -3.0 + 6.0 * i as f64 / (self.knots + 1) as f64;
                out[pos] = (x - kappa).max(0.0);
                pos += 1;
            }
        }
        if self.cross_terms {
            for i in 0..d {
                for j in i + 1..d {
                    out[pos] = x(i) * x(j);
                    pos += 1;
                }
            }
        }
    }
}

/// Coefficients of one projection per target at one time step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepFit {
    pub k: usize,
    /// Per-coordinate mean and standard deviation of the states at `t_k`;
    /// empty at `t = 0`.
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub coefficients: Vec<Vec<f64>>,
}

impl StepFit {
    pub fn predict(&self, cfg: &BasisConfig, target: usize, state: &[f64]) -> f64 {
        let beta = &self.coefficients[target];
        let mut phi = vec![0.0; beta.len()];
        cfg.eval(state, &self.center, &self.scale, &mut phi);
        phi.iter().zip(beta).map(|(a, b)| a * b).sum()
    }
}

pub(crate) struct Projection {
    pub fitted: Vec<Vec<f64>>,
    pub fit: Option<StepFit>,
}

/// Projects each target onto `ℱ_{t_k}`.
pub(crate) enum Projector<'a> {
    Regression { cfg: BasisConfig, states: &'a PathEnsemble },
    Lattice { paths: usize },
}

impl Projector<'_> {
    pub fn project(&self, k: usize, targets: &[Vec<f64>]) -> Result<Projection> {
        match self {
            Projector::Regression { cfg, states } => regress(cfg, states, k, targets),
            Projector::Lattice { paths } => Ok(Projection {
                fitted: targets.iter().map(|y| lattice_mean(*paths, k, y)).collect(),
                fit: None,
            }),
        }
    }
}

fn lattice_mean(paths: usize, k: usize, y: &[f64]) -> Vec<f64> {
    let atoms = 1usize << k;
    let mask = atoms - 1;
    let mut sum = vec![0.0; atoms];
    for (i, v) in y.iter().enumerate() {
        sum[i & mask] += v;
    }
    let per = (paths / atoms) as f64;
    (0..paths).map(|i| sum[i & mask] / per).collect()
}

/// Empirical mean and standard deviation per coordinate at step `k`, so the
/// hinge knots sit inside the data on shifted ensembles too.
fn standardization(states: &PathEnsemble, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if states.grid.t(k) == 0.0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let (m, d) = (states.paths, states.dim);
    let sums = det_sum_vec(m, 2 * d, |i, acc| {
        for (j, b) in states.value(i, k).iter().enumerate() {
            acc[j] += b;
            acc[d + j] += b * b;
        }
    });
    let center: Vec<f64> = sums[..d].iter().map(|s| s / m as f64).collect();
    let scale: Vec<f64> = (0..d)
        .map(|j| (sums[d + j] / m as f64 - center[j] * center[j]).max(0.0).sqrt())
        .collect();
    if let Some(j) = scale.iter().position(|s| !(*s > 0.0)) {
        return Err(Error::Basis {
            step: k,
            detail: format!("state coordinate {j} is constant across paths"),
        });
    }
    Ok((center, scale))
}

fn regress(cfg: &BasisConfig, states: &PathEnsemble, k: usize, targets: &[Vec<f64>]) -> Result<Projection> {
    let m = states.paths;
    let (center, scale) = standardization(states, k)?;
    let p = cfg.size(states.dim, scale.is_empty());
    let mut design = vec![0.0; m * p];
    design.par_chunks_mut(p).enumerate().for_each(|(i, row)| {
        cfg.eval(states.value(i, k), &center, &scale, row);
    });
    let nt = targets.len();
    let width = p * p + p * nt;
    let sums = det_sum_vec(m, width, |i, acc| {
        let phi = &design[i * p..(i + 1) * p];
        for a in 0..p {
            for b in a..p {
                acc[a * p + b] += phi[a] * phi[b];
            }
            for (t, y) in targets.iter().enumerate() {
                acc[p * p + t * p + a] += phi[a] * y[i];
            }
        }
    });
    let mut gram = DMatrix::<f64>::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let v = sums[a * p + b] / m as f64;
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    if p > 1 {
        check_rank(&gram, k)?;
    }
    let mut reg = gram.clone();
    for a in 0..p {
        reg[(a, a)] += cfg.ridge;
    }
    let chol = reg.cholesky().ok_or_else(|| Error::Basis {
        step: k,
        detail: "Gram matrix is not positive definite".into(),
    })?;
    let mut coefficients = Vec::with_capacity(nt);
    for t in 0..nt {
        let rhs = DVector::from_iterator(p, (0..p).map(|a| sums[p * p + t * p + a] / m as f64));
        coefficients.push(chol.solve(&rhs).iter().copied().collect::<Vec<f64>>());
    }
    let fitted = coefficients
        .iter()
        .map(|beta| {
            (0..m)
                .into_par_iter()
                .map(|i| design[i * p..(i + 1) * p].iter().zip(beta).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok(Projection {
        fitted,
        fit: Some(StepFit {
            k,
            center,
            scale,
            coefficients,
        }),
    })
}

fn check_rank(gram: &DMatrix<f64>, k: usize) -> Result<()> {
    let p = gram.nrows();
    let d: Vec<f64> = (0..p).map(|a| gram[(a, a)]).collect();
    if let Some(a) = d.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Basis {
            step: k,
            detail: format!("basis function {a} vanishes on every path"),
        });
    }
    let corr = DMatrix::from_fn(p, p, |a, b| gram[(a, b)] / (d[a] * d[b]).sqrt());
    let eig = SymmetricEigen::new(corr).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    if !(lo / hi >= RANK_TOLERANCE) {
        return Err(Error::Basis {
            step: k,
            detail: format!("normalized Gram eigenvalue ratio {:.3e} below {RANK_TOLERANCE:e}", lo / hi),
        });
    }
    Ok(())
}
