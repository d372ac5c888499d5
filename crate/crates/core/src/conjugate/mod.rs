//! Legendre–Fenchel conjugate `f1(q) = sup_z (q·z − g1(z))`, subgradients of
//! `g1`, the two Fenchel-type inequalities, and the `K/Ψ/Φ/Λ` majorants.

mod majorant;
mod search;

pub use majorant::{lambda_superlinearity_check, GrowthFn, MajorantFamily};
pub use search::SearchConfig;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{CheckKind, CheckReport, ConvexPart, GeneratorSpec, Probe, ReportBuilder, Witness};
use crate::numerics::{dot, norm};

/// Conjugate of the convex part of a generator.
#[derive(Clone, Debug)]
pub struct ConjugateHandle<'a> {
    pub source: &'a GeneratorSpec,
    pub search: SearchConfig,
    /// Ignore closed forms and always search numerically.
    pub numeric_only: bool,
}

impl<'a> ConjugateHandle<'a> {
    pub fn new(source: &'a GeneratorSpec) -> Self {
        ConjugateHandle {
            source,
            search: SearchConfig::default(),
            numeric_only: false,
        }
    }

    pub fn numeric(source: &'a GeneratorSpec) -> Self {
        ConjugateHandle {
            numeric_only: true,
            ..ConjugateHandle::new(source)
        }
    }

    pub fn has_analytic_form(&self) -> bool {
        !self.source.reflected
            && matches!(
                self.source.g1,
                ConvexPart::Zero
                    | ConvexPart::Quadratic { .. }
                    | ConvexPart::QuadraticMinusNorm { .. }
                    | ConvexPart::PiecewiseChord { .. }
            )
    }

    /// Closed form `(f1(q), maximizer)` for the registered families.
    pub fn analytic(&self, t: f64, state: &[f64], q: &[f64]) -> Option<Result<(f64, Vec<f64>)>> {
        if self.source.reflected {
            return None;
        }
        let qn = norm(q);
        let unit = || -> Vec<f64> {
            if qn > 0.0 {
                q.iter().map(|x| x / qn).collect()
            } else {
                let mut e = vec![0.0; q.len()];
                e[0] = 1.0;
                e
            }
        };
        Some(match &self.source.g1 {
            ConvexPart::Zero => {
                if qn == 0.0 {
                    Ok((0.0, vec![0.0; q.len()]))
                } else {
                    Err(Error::Unbounded {
                        q: q.to_vec(),
                        radius: f64::INFINITY,
                    })
                }
            }
            ConvexPart::Quadratic { a, c } => {
                let a = a.eval(t, state);
                if !(a > 0.0) {
                    return Some(Err(Error::Domain(format!(
                        "quadratic coefficient {a} is not positive at t={t}"
                    ))));
                }
                let z: Vec<f64> = q.iter().map(|x| x / (2.0 * a)).collect();
                Ok((qn * qn / (4.0 * a) - c.eval(t, state), z))
            }
            ConvexPart::QuadraticMinusNorm { c } => {
                let r = qn + 1.0;
                Ok((0.5 * r * r - c.eval(t, state), unit().into_iter().map(|x| x * r).collect()))
            }
            ConvexPart::PiecewiseChord { c } => {
                let lo = (0.5 * qn).floor();
                let hi = (0.5 * qn).ceil();
                let k = if hi * qn - hi * hi > lo * qn - lo * lo { hi } else { lo };
                Ok((k * qn - k * k - c.eval(t, state), unit().into_iter().map(|x| x * k).collect()))
            }
            _ => return None,
        })
    }

    pub fn transform(&self, t: f64, state: &[f64], q: &[f64]) -> Result<f64> {
        self.transform_with_argmax(t, state, q).map(|(v, _)| v)
    }

    /// `f1(t, state, q)` together with a maximizing `z`.
    pub fn transform_with_argmax(&self, t: f64, state: &[f64], q: &[f64]) -> Result<(f64, Vec<f64>)> {
        if self.source.reflected {
            return Err(Error::NonConvex(format!(
                "{} is reflected; its first part is concave",
                self.source.name
            )));
        }
        if !self.numeric_only {
            if let Some(r) = self.analytic(t, state, q) {
                return r;
            }
        }
        let g1 = |z: &[f64]| self.source.eval_g1(t, state, z);
        let r = search::maximize(g1, q, self.source.g1.is_radial(), &self.search)?;
        if !r.value.is_finite() {
            return Err(Error::evaluation("f1", t, state, q, r.value));
        }
        Ok((r.value, r.argmax))
    }
}

/// Subgradient of `g1` at `z` with no verification.
///
/// At kinks of radial families the slope is the limit from below along the
/// radius; at `z = 0` the zero vector is returned.
pub fn subgradient_unchecked(gen: &GeneratorSpec, t: f64, state: &[f64], z: &[f64]) -> Vec<f64> {
    let r = norm(z);
    let radial = |slope: f64| -> Vec<f64> {
        if r == 0.0 {
            vec![0.0; z.len()]
        } else {
            z.iter().map(|x| slope * x / r).collect()
        }
    };
    let u = match &gen.g1 {
        ConvexPart::Zero => vec![0.0; z.len()],
        ConvexPart::Quadratic { a, .. } => {
            let a = a.eval(t, state);
            z.iter().map(|x| 2.0 * a * x).collect()
        }
        ConvexPart::QuadraticMinusNorm { .. } => radial(r - 1.0),
        ConvexPart::PiecewiseChord { .. } => radial(2.0 * r.ceil() - 1.0),
        ConvexPart::Power { scale, power } => {
            if r == 0.0 {
                vec![0.0; z.len()]
            } else {
                radial(scale * power * r.powf(power - 1.0))
            }
        }
        ConvexPart::Custom(_) => {
            let g = |z: &[f64]| gen.g1.eval(t, state, z);
            let zz: Vec<f64> = if gen.reflected { z.iter().map(|x| -x).collect() } else { z.to_vec() };
            (0..z.len())
                .map(|i| {
                    let h = 1e-6 * (1.0 + zz[i].abs());
                    let mut zp = zz.clone();
                    let mut zm = zz.clone();
                    zp[i] += h;
                    zm[i] -= h;
                    (g(&zp) - g(&zm)) / (2.0 * h)
                })
                .collect()
        }
    };
    if gen.reflected {
        // ∇[−g1(−z)] = ∇g1(−z); radial families are even in z.
        match &gen.g1 {
            ConvexPart::Custom(_) => u,
            _ => u.into_iter().map(|x| -x).collect(),
        }
    } else {
        u
    }
}

/// Subgradient of `g1` at `z`, spot-checked against the supporting
/// hyperplane inequality `g1(z') − g1(z) ≥ u·(z' − z)` on probe points.
pub fn subgradient(gen: &GeneratorSpec, t: f64, state: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    let u = subgradient_unchecked(gen, t, state, z);
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::evaluation("subgradient", t, state, z, f64::NAN));
    }
    let g0 = gen.try_g1(t, state, z)?;
    let d = z.len();
    let r = norm(z);
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        dirs.push(e.clone());
        e[i] = -1.0;
        dirs.push(e);
    }
    if r > 0.0 {
        let zh: Vec<f64> = z.iter().map(|x| x / r).collect();
        dirs.push(zh.iter().map(|x| -x).collect());
        dirs.push(zh);
    }
    if d > 1 {
        dirs.push(vec![1.0 / (d as f64).sqrt(); d]);
    }
    let scale = 1.0 + r;
    for dir in &dirs {
        for step in [1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let zp: Vec<f64> = z.iter().zip(dir).map(|(a, b)| a + b * step * scale).collect();
            let g = gen.try_g1(t, state, &zp)?;
            let diff: Vec<f64> = zp.iter().zip(z).map(|(a, b)| a - b).collect();
            let lin = dot(&u, &diff);
            let tol = 1e-9 * (1.0 + g.abs() + g0.abs() + lin.abs());
            if g - g0 < lin - tol {
                return Err(Error::NonConvex(format!(
                    "no supporting hyperplane for {} at z={z:?}: g1(z')-g1(z)={} < u·(z'-z)={} at z'={zp:?}",
                    gen.name,
                    g - g0,
                    lin
                )));
            }
        }
    }
    Ok(u)
}

/// Samples `q` and checks `f1(q) ≥ −α + |q|²/(2γ)`.
pub fn conjugate_lower_bound_check(handle: &ConjugateHandle<'_>, probe: &Probe) -> Result<CheckReport> {
    let gen = handle.source;
    let mut b = ReportBuilder::new("conjugate_lower_bound");
    for &t in &probe.times {
        for state in &probe.states {
            for q in probe.points() {
                let f = handle.transform(t, state, &q)?;
                let r2: f64 = q.iter().map(|x| x * x).sum();
                b.push(Witness {
                    kind: CheckKind::ConjugateLowerBound,
                    t,
                    state: state.clone(),
                    z: q,
                    z_prime: Vec::new(),
                    u: Vec::new(),
                    lhs: f,
                    rhs: -gen.try_alpha(t, state)? + r2 / (2.0 * gen.gamma),
                });
            }
        }
    }
    Ok(b.finish())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FenchelOutcome {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `x·y ≤ e^{px} + (y/p)(ln y − ln p − 1)` for `y, p > 0`.
pub fn fenchel_inequality_check(x: f64, y: f64, p: f64) -> Result<FenchelOutcome> {
    if !(y > 0.0) || !(p > 0.0) {
        return Err(Error::Domain(format!("fenchel inequality needs y > 0 and p > 0, got y={y}, p={p}")));
    }
    let lhs = x * y;
    let rhs = (p * x).exp() + (y / p) * (y.ln() - p.ln() - 1.0);
    let holds = lhs <= rhs + 1e-10 * (1.0 + lhs.abs() + rhs.abs());
    Ok(FenchelOutcome { lhs, rhs, holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{fixture, Coef};

    fn quad(gamma: f64) -> GeneratorSpec {
        GeneratorSpec::convex("q", ConvexPart::pure_quadratic(gamma), Coef::ZERO, gamma)
    }

    #[test]
    fn quadratic_is_self_dual() {
        let g = quad(1.0);
        let h = ConjugateHandle::new(&g);
        assert_eq!(h.transform(0.0, &[0.0], &[3.0, 0.0]).unwrap(), 4.5);
        let n = ConjugateHandle::numeric(&g);
        assert!((n.transform(0.0, &[0.0], &[3.0, 0.0]).unwrap() - 4.5).abs() < 1e-10);
    }

    #[test]
    fn quadratic_minus_norm_at_zero() {
        let g = fixture("example_iv").unwrap().generator;
        let h = ConjugateHandle::new(&g);
        assert_eq!(h.transform(0.0, &[0.0], &[0.0]).unwrap(), 0.5);
        // Dense grid oracle on r in [0, 10].
        let best = (0..=100_000).map(|i| i as f64 * 1e-4).map(|r| r - 0.5 * r * r).fold(f64::MIN, f64::max);
        assert!((best - 0.5).abs() < 1e-9);
        // The numeric route sees the non-convexity.
        let n = ConjugateHandle::numeric(&g);
        assert!(matches!(n.transform(0.0, &[0.0], &[0.3]), Err(Error::NonConvex(_))));
    }

    #[test]
    fn random_scaled_quadratic() {
        let g = fixture("example_i").unwrap().generator;
        let h = ConjugateHandle::new(&g);
        // sin t = 0, |B_t| = 1: f1(q) = |q|²/4 − 1.
        assert_eq!(h.transform(0.0, &[1.0], &[2.0, 0.0]).unwrap(), 0.0);
        let n = ConjugateHandle::numeric(&g);
        assert!(n.transform(0.0, &[1.0], &[2.0, 0.0]).unwrap().abs() < 1e-10);
    }

    #[test]
    fn chord_conjugate_matches_search() {
        let g = fixture("gtilde").unwrap().generator;
        let h = ConjugateHandle::new(&g);
        let n = ConjugateHandle::numeric(&g);
        for i in 0..40 {
            let q = [i as f64 * 0.37 - 5.0];
            let a = h.transform(0.0, &[0.0], &q).unwrap();
            let b = n.transform(0.0, &[0.0], &q).unwrap();
            assert!((a - b).abs() < 1e-7, "q={q:?}: {a} vs {b}");
        }
    }

    #[test]
    fn subgradients() {
        let g = quad(1.0);
        assert_eq!(subgradient(&g, 0.0, &[0.0], &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
        let gt = fixture("gtilde").unwrap().generator;
        assert_eq!(subgradient(&gt, 0.0, &[0.0], &[0.0]).unwrap(), vec![0.0]);
        assert_eq!(subgradient(&gt, 0.0, &[0.0], &[2.0]).unwrap(), vec![3.0]);
        let g4 = fixture("example_iv").unwrap().generator;
        let u = subgradient(&g4, 0.0, &[0.0, 0.0], &[2.0, 0.0]).unwrap();
        assert_eq!(u, vec![1.0, 0.0]);
        let fd = (g4.eval_g1(0.0, &[0.0], &[2.0 + 1e-6]) - g4.eval_g1(0.0, &[0.0], &[2.0 - 1e-6])) / 2e-6;
        assert!((fd - 1.0).abs() < 1e-8);
        assert!(matches!(subgradient(&g4, 0.0, &[0.0], &[0.5]), Err(Error::NonConvex(_))));
    }

    #[test]
    fn fenchel_examples() {
        let o = fenchel_inequality_check(0.0, 1.0, 1.0).unwrap();
        assert_eq!((o.lhs, o.rhs, o.holds), (0.0, 0.0, true));
        let e = std::f64::consts::E;
        let o = fenchel_inequality_check(1.0, e, 1.0).unwrap();
        assert!((o.lhs - e).abs() < 1e-15 && (o.rhs - e).abs() < 1e-14);
        let o = fenchel_inequality_check(2.0, 3.0, 2.0).unwrap();
        assert_eq!(o.lhs, 6.0);
        assert!((o.rhs - (4f64.exp() + 1.5 * (3f64.ln() - 2f64.ln() - 1.0))).abs() < 1e-12);
        assert!((o.rhs - 53.707).abs() < 1e-2);
        assert!(fenchel_inequality_check(1.0, 0.0, 1.0).is_err());
    }
}
