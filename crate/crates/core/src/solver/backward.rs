//! One backward sweep of the multistep regression scheme.
//!
//! With `S_N = ξ` and `S_k = S_{k+1} − G(t_k, Z_k)Δt_k` pathwise,
//!
//! * `Z_k = −Ê_k[L_k (Y_{k+1} − Ê_k[L_k S_{k+1}]) ΔW_k] / Δt_k`
//! * `Y_k = Ê_k[L_k S_{k+1}] − G(t_k, Z_k)Δt_k`
//!
//! `Z` uses the one-step value `Y_{k+1}`: its conditional variance is
//! `O(|Z|²Δt)` instead of `O(T − t_k)` for the pathwise sum.
//!
//! where `Ê_k` is the projector, `ΔW` the driving increments and `L_k` an
//! optional one-step likelihood ratio (1 unless reweighting).

use rayon::prelude::*;

use super::basis::{Projector, StepFit};
use crate::error::Result;
use crate::numerics::{det_sum, Estimate};
use crate::stochastics::PathEnsemble;

pub(crate) type Driver<'a> = dyn Fn(usize, usize, &[f64], &[f64]) -> Result<f64> + Sync + 'a;
pub(crate) type Noise<'a> = dyn Fn(usize, usize, usize) -> f64 + Sync + 'a;

pub(crate) struct Sweep<'a> {
    pub states: &'a PathEnsemble,
    pub projector: &'a Projector<'a>,
    pub noise: &'a Noise<'a>,
    /// `M × N` one-step likelihood ratios.
    pub likelihood: Option<&'a [f64]>,
    /// `M` terminal weights for the `Y_0` estimator.
    pub terminal_weights: Option<&'a [f64]>,
    pub driver: &'a Driver<'a>,
    pub terminal: &'a [f64],
    pub need_z: bool,
    /// Picard seed `M × N × d`; the driver reads it instead of the fresh `Z`.
    pub seed_z: Option<&'a [f64]>,
    pub radius: f64,
}

pub(crate) struct SweepOutput {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub y0: Estimate,
    pub regression_rms: Vec<f64>,
    pub one_step: Vec<Estimate>,
    pub fits: Vec<StepFit>,
    pub clip_count: usize,
    pub evaluations: usize,
}

/// Scales `z` back onto the ball of radius `r`; returns whether it clipped.
#[inline]
pub(crate) fn clip(z: &mut [f64], r: f64) -> bool {
    let n = crate::numerics::norm(z);
    if n > r {
        let s = r / n;
        z.iter_mut().for_each(|v| *v *= s);
        true
    } else {
        false
    }
}

impl Sweep<'_> {
    pub fn run(&self) -> Result<SweepOutput> {
        let ens = self.states;
        let (m, n, d) = (ens.paths, ens.steps(), ens.dim);
        let mut y = vec![0.0; m * (n + 1)];
        let mut z = vec![0.0; m * n * d];
        let mut s = self.terminal.to_vec();
        for i in 0..m {
            y[i * (n + 1) + n] = s[i];
        }
        let mut regression_rms = vec![0.0; n];
        let mut one_step = vec![Estimate::from_slice(&[]); n];
        let mut fits = Vec::new();
        let mut clip_count = 0;
        let lik = |i: usize, k: usize| self.likelihood.map_or(1.0, |l| l[i * n + k]);

        for k in (0..n).rev() {
            let dt = ens.grid.dt(k);
            let target: Vec<f64> = (0..m).into_par_iter().map(|i| lik(i, k) * s[i]).collect();
            let py = self.projector.project(k, std::slice::from_ref(&target))?;
            let s_hat = &py.fitted[0];
            regression_rms[k] = (det_sum(m, |i| (target[i] - s_hat[i]).powi(2)) / m as f64).sqrt();

            let mut zk = vec![0.0; m * d];
            let mut z_fit = None;
            if self.need_z {
                let zt: Vec<Vec<f64>> = (0..d)
                    .map(|j| {
                        (0..m)
                            .into_par_iter()
                            .map(|i| lik(i, k) * (y[i * (n + 1) + k + 1] - s_hat[i]) * (self.noise)(i, k, j) / dt)
                            .collect()
                    })
                    .collect();
                let pz = self.projector.project(k, &zt)?;
                for j in 0..d {
                    for i in 0..m {
                        zk[i * d + j] = -pz.fitted[j][i];
                    }
                }
                z_fit = pz.fit;
            }
            let clipped: usize = zk.par_chunks_mut(d).map(|zi| usize::from(clip(zi, self.radius))).sum();
            clip_count += clipped;

            let g: Vec<f64> = (0..m)
                .into_par_iter()
                .map(|i| {
                    let zi = match self.seed_z {
                        Some(seed) => &seed[(i * n + k) * d..(i * n + k + 1) * d],
                        None => &zk[i * d..(i + 1) * d],
                    };
                    (self.driver)(i, k, ens.value(i, k), zi)
                })
                .collect::<Result<_>>()?;

            for i in 0..m {
                y[i * (n + 1) + k] = s_hat[i] - g[i] * dt;
                z[(i * n + k) * d..(i * n + k + 1) * d].copy_from_slice(&zk[i * d..(i + 1) * d]);
            }
            // The regression couples the drift and martingale parts across paths,
            // so the standard error is bounded by the sum of the two parts' errors.
            let drift = Estimate::from_fn(m, |i| lik(i, k) * (y[i * (n + 1) + k + 1] - y[i * (n + 1) + k] - g[i] * dt));
            let mart = Estimate::from_fn(m, |i| {
                let zi = &zk[i * d..(i + 1) * d];
                lik(i, k) * (0..d).map(|j| zi[j] * (self.noise)(i, k, j)).sum::<f64>()
            });
            one_step[k] = Estimate {
                mean: drift.mean + mart.mean,
                std_error: drift.std_error + mart.std_error,
                samples: m,
            };
            s.par_iter_mut().zip(g.par_iter()).for_each(|(si, gi)| *si -= gi * dt);

            if let (Some(pyf), Some(pzf)) = (py.fit, z_fit) {
                let mut coefficients = pyf.coefficients;
                coefficients.extend(pzf.coefficients);
                fits.push(StepFit {
                    coefficients,
                    ..pyf
                });
            }
        }
        fits.reverse();
        let y0 = match self.terminal_weights {
            Some(w) => Estimate::from_fn(m, |i| w[i] * s[i]),
            None => Estimate::from_slice(&s),
        };
        Ok(SweepOutput {
            y,
            z,
            y0,
            regression_rms,
            one_step,
            fits,
            clip_count,
            evaluations: m * n,
        })
    }
}
