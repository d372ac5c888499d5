//! The `K/Ψ/Φ/Λ` family built from a strictly increasing `k` with `k(0) = γ`:
//!
//! * `K(x) = ∫₀ˣ k(t) e^{γt} dt`
//! * `Ψ(x) = ∫₀ˣ k(u)(e^{γu} − 1) du`, convex with `Ψ'(x) = k(x)(e^{γx} − 1)`
//! * `Φ = Ψ*`, with `Φ' = (Ψ')⁻¹` and `Φ(x) = xΦ'(x) − Ψ(Φ'(x))`
//! * `Λ(x) = x ln x / γ − Φ(x)`
//!
//! `K` and `Ψ` are tabulated once on panels of width `1/16` by adaptive
//! Simpson; evaluation adds one more panel integral.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::generators::{CheckKind, CheckReport, ReportBuilder, Witness};
use crate::numerics::adaptive_simpson;

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GrowthFn {
    /// `k(x) = γ + slope·x`.
    Linear { slope: f64 },
    /// `k(x) = γ·e^{rate·x}`.
    Exponential { rate: f64 },
    /// User-supplied `(k, k')`.
    #[serde(skip)]
    Custom {
        label: String,
        k: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        dk: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for GrowthFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrowthFn::Linear { slope } => write!(f, "Linear {{ slope: {slope} }}"),
            GrowthFn::Exponential { rate } => write!(f, "Exponential {{ rate: {rate} }}"),
            GrowthFn::Custom { label, .. } => write!(f, "Custom({label})"),
        }
    }
}

const PANEL: f64 = 1.0 / 16.0;

#[derive(Clone, Debug)]
pub struct MajorantFamily {
    pub gamma: f64,
    pub k: GrowthFn,
    k_table: Vec<f64>,
    psi_table: Vec<f64>,
}

fn panel_integral<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64> {
    let rough = 0.5 * (b - a) * (f(a).abs() + f(b).abs());
    adaptive_simpson(f, a, b, 1e-10 * rough.max(1.0))
}

impl MajorantFamily {
    /// Builds the family with tables covering `[0, x_max]`.
    pub fn new(gamma: f64, k: GrowthFn, x_max: f64) -> Result<MajorantFamily> {
        if !(gamma > 0.0) {
            return Err(Error::Config(format!("majorant gamma must be positive, got {gamma}")));
        }
        let mut fam = MajorantFamily {
            gamma,
            k,
            k_table: vec![0.0],
            psi_table: vec![0.0],
        };
        let panels = (x_max.max(0.0) / PANEL).ceil() as usize;
        for j in 0..panels {
            let (a, b) = (j as f64 * PANEL, (j + 1) as f64 * PANEL);
            let dk = panel_integral(|t| fam.k(t) * (gamma * t).exp(), a, b)?;
            let dp = panel_integral(|u| fam.psi_prime(u), a, b)?;
            fam.k_table.push(fam.k_table[j] + dk);
            fam.psi_table.push(fam.psi_table[j] + dp);
        }
        Ok(fam)
    }

    pub fn linear(gamma: f64, slope: f64) -> Result<MajorantFamily> {
        MajorantFamily::new(gamma, GrowthFn::Linear { slope }, 64.0)
    }

    pub fn exponential(gamma: f64, rate: f64) -> Result<MajorantFamily> {
        MajorantFamily::new(gamma, GrowthFn::Exponential { rate }, 64.0)
    }

    pub fn k(&self, x: f64) -> f64 {
        match &self.k {
            GrowthFn::Linear { slope } => self.gamma + slope * x,
            GrowthFn::Exponential { rate } => self.gamma * (rate * x).exp(),
            GrowthFn::Custom { k, .. } => k(x),
        }
    }

    pub fn k_prime(&self, x: f64) -> f64 {
        match &self.k {
            GrowthFn::Linear { slope } => *slope,
            GrowthFn::Exponential { rate } => self.gamma * rate * (rate * x).exp(),
            GrowthFn::Custom { dk, .. } => dk(x),
        }
    }

    fn tabulated<F: Fn(f64) -> f64>(&self, table: &[f64], f: F, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        let j = ((x / PANEL).floor() as usize).min(table.len() - 1);
        Ok(table[j] + panel_integral(&f, j as f64 * PANEL, x)?)
    }

    /// `K(x) = ∫₀ˣ k(t)e^{γt} dt`; zero for `x ≤ 0`.
    pub fn big_k(&self, x: f64) -> Result<f64> {
        self.tabulated(&self.k_table, |t| self.k(t) * (self.gamma * t).exp(), x)
    }

    pub fn psi(&self, x: f64) -> Result<f64> {
        self.tabulated(&self.psi_table, |u| self.psi_prime(u), x)
    }

    pub fn psi_prime(&self, x: f64) -> f64 {
        self.k(x) * (self.gamma * x).exp_m1()
    }

    pub fn psi_second(&self, x: f64) -> f64 {
        self.k_prime(x) * (self.gamma * x).exp_m1() + self.gamma * self.k(x) * (self.gamma * x).exp()
    }

    /// `Φ'(x)`: the inverse of `Ψ'` by safeguarded Newton.
    pub fn phi_prime(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Err(Error::Domain(format!("phi' is defined on x >= 0, got {x}")));
        }
        if x == 0.0 {
            return Ok(0.0);
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        while self.psi_prime(hi) < x {
            lo = hi;
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::Quadrature(format!("cannot bracket psi'^-1({x})")));
            }
        }
        let mut y = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.psi_prime(y) - x;
            if f.abs() <= 1e-15 * x {
                return Ok(y);
            }
            if f > 0.0 {
                hi = y;
            } else {
                lo = y;
            }
            if hi - lo <= 1e-15 * hi {
                return Ok(y);
            }
            let newton = y - f / self.psi_second(y);
            y = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        }
        Ok(y)
    }

    /// `Φ(x) = xΦ'(x) − Ψ(Φ'(x))`.
    pub fn phi(&self, x: f64) -> Result<f64> {
        let y = self.phi_prime(x)?;
        Ok(x * y - self.psi(y)?)
    }

    pub fn phi_second(&self, x: f64) -> Result<f64> {
        let y = self.phi_prime(x)?;
        Ok(1.0 / self.psi_second(y))
    }

    pub fn lambda(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("lambda is defined on x > 0, got {x}")));
        }
        Ok(x * x.ln() / self.gamma - self.phi(x)?)
    }

    pub fn lambda_second(&self, x: f64) -> Result<f64> {
        Ok(1.0 / (self.gamma * x) - self.phi_second(x)?)
    }

    /// Checks that `k` is strictly increasing with `k(0) = γ` on `[0, x_max]`.
    pub fn check_growth_fn(&self, x_max: f64) -> Result<()> {
        if (self.k(0.0) - self.gamma).abs() > 1e-12 * self.gamma {
            return Err(Error::Precondition(format!("k(0) = {} differs from gamma = {}", self.k(0.0), self.gamma)));
        }
        let n = 1000;
        let mut prev = self.k(0.0);
        for i in 1..=n {
            let x = x_max.max(1.0) * i as f64 / n as f64;
            let v = self.k(x);
            if !(v > prev) {
                return Err(Error::Precondition(format!("k is not strictly increasing near x = {x}")));
            }
            prev = v;
        }
        Ok(())
    }
}

/// Checks `Λ'' > 0` on the grid and that `Λ(x)/x` increases strictly, with
/// the last ratio at least `factor` times the first.
pub fn lambda_superlinearity_check(fam: &MajorantFamily, grid: &[f64], factor: f64) -> Result<CheckReport> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) || grid[0] <= 0.0 {
        return Err(Error::Precondition("grid must be positive and strictly increasing with 2+ points".into()));
    }
    fam.check_growth_fn(*grid.last().unwrap())?;
    let mut b = ReportBuilder::new("lambda_superlinearity");
    let ratios: Vec<f64> = grid.iter().map(|&x| fam.lambda(x).map(|l| l / x)).collect::<Result<_>>()?;
    for (i, &x) in grid.iter().enumerate() {
        b.push(fam.witness(CheckKind::LambdaSecond, x, x)?);
        if i > 0 {
            let w = fam.witness(CheckKind::LambdaRatio { factor: 1.0 }, grid[i - 1], x)?;
            if w.lhs == w.rhs {
                // Equal ratios are not a strict increase.
                b.note(format!("lambda(x)/x is flat between {} and {x}", grid[i - 1]));
                b.push(Witness { rhs: f64::NEG_INFINITY, ..w });
            } else {
                b.push(w);
            }
        }
    }
    let (first, last) = (ratios[0], *ratios.last().unwrap());
    b.note(format!("lambda(x)/x: first {first:.6}, last {last:.6}"));
    b.push(fam.witness(CheckKind::LambdaRatio { factor }, grid[0], *grid.last().unwrap())?);
    Ok(b.finish())
}

impl MajorantFamily {
    fn witness(&self, kind: CheckKind, x: f64, x2: f64) -> Result<Witness> {
        let mut w = Witness {
            kind,
            t: 0.0,
            state: Vec::new(),
            z: vec![x],
            z_prime: vec![x2],
            u: Vec::new(),
            lhs: 0.0,
            rhs: 0.0,
        };
        (w.lhs, w.rhs) = self.reevaluate(&w)?;
        Ok(w)
    }

    /// Recomputes `(lhs, rhs)` of a witness produced by
    /// [`lambda_superlinearity_check`].
    pub fn reevaluate(&self, w: &Witness) -> Result<(f64, f64)> {
        match w.kind {
            CheckKind::LambdaSecond => Ok((-self.lambda_second(w.z[0])?, 0.0)),
            CheckKind::LambdaRatio { factor } => {
                let (x, x2) = (w.z[0], w.z_prime[0]);
                Ok((factor * self.lambda(x)? / x, self.lambda(x2)? / x2))
            }
            other => Err(Error::Precondition(format!("{} is not a majorant check", other.name()))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_start_at_zero() {
        let f = MajorantFamily::linear(1.0, 1.0).unwrap();
        assert_eq!(f.big_k(0.0).unwrap(), 0.0);
        assert_eq!(f.psi(0.0).unwrap(), 0.0);
        assert_eq!(f.phi(0.0).unwrap(), 0.0);
    }

    #[test]
    fn psi_matches_closed_form_for_linear_k() {
        // k = 1 + x, γ = 1: Ψ(y) = y e^y − y − y²/2, K(x) = x e^x.
        let f = MajorantFamily::linear(1.0, 1.0).unwrap();
        for &y in &[0.3f64, 1.0, 2.5, 7.0, 70.0] {
            let exact = y * y.exp() - y - 0.5 * y * y;
            assert!((f.psi(y).unwrap() - exact).abs() < 1e-9 * exact.max(1.0), "y={y}");
            let k_exact = y * y.exp();
            assert!((f.big_k(y).unwrap() - k_exact).abs() < 1e-9 * k_exact.max(1.0));
        }
    }

    #[test]
    fn phi_prime_inverts_psi_prime() {
        let f = MajorantFamily::exponential(1.0, 1.0).unwrap();
        for &x in &[1e-6, 0.1, 1.0, 10.0, 1e4] {
            let y = f.phi_prime(x).unwrap();
            assert!((f.psi_prime(y) - x).abs() < 1e-10 * x.max(1.0));
        }
        // Dense grid: Newton landing exactly on the root must not fall back
        // to a stale bracket.
        let f = MajorantFamily::linear(1.0, 1.0).unwrap();
        for i in 1..=400 {
            let x = 0.5 * i as f64;
            let y = f.phi_prime(x).unwrap();
            assert!((f.psi_prime(y) - x).abs() < 1e-10 * x, "x = {x}: psi'({y}) = {}", f.psi_prime(y));
        }
    }
}
