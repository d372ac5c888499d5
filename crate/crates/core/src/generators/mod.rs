//! Generators `g = g1 + g2`: a convex quadratic-growth part plus a
//! uniformly continuous perturbation, with the constants that go with them.
//!
//! Coefficients may depend on time and on the current Brownian value `B_t`
//! (the path-state); nothing else about the path is visible to a generator.

mod checks;
mod fixtures;

pub use checks::{
    check_convexity, check_quadratic_growth, check_strictly_quadratic, check_strong_convexity,
    check_uniform_continuity, CheckKind, CheckReport, GrowthTarget, Probe, Witness,
};
pub(crate) use checks::ReportBuilder;
pub use fixtures::{fixture, Fixture, FixtureName};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::norm;

/// Random coefficient `constant + abs_b·|B_t| + sqrt_abs_b·√|B_t| + sin_t·sin t`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "CoefRepr")]
pub struct Coef {
    pub constant: f64,
    pub abs_b: f64,
    pub sqrt_abs_b: f64,
    pub sin_t: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CoefRepr {
    Number(f64),
    Full {
        #[serde(default)]
        constant: f64,
        #[serde(default)]
        abs_b: f64,
        #[serde(default)]
        sqrt_abs_b: f64,
        #[serde(default)]
        sin_t: f64,
    },
}

impl From<CoefRepr> for Coef {
    fn from(r: CoefRepr) -> Self {
        match r {
            CoefRepr::Number(c) => Coef::constant(c),
            CoefRepr::Full {
                constant,
                abs_b,
                sqrt_abs_b,
                sin_t,
            } => Coef {
                constant,
                abs_b,
                sqrt_abs_b,
                sin_t,
            },
        }
    }
}

impl From<f64> for Coef {
    fn from(c: f64) -> Self {
        Coef::constant(c)
    }
}

impl Coef {
    pub const ZERO: Coef = Coef {
        constant: 0.0,
        abs_b: 0.0,
        sqrt_abs_b: 0.0,
        sin_t: 0.0,
    };

    pub fn constant(c: f64) -> Coef {
        Coef {
            constant: c,
            ..Coef::ZERO
        }
    }

    #[inline]
    pub fn eval(&self, t: f64, state: &[f64]) -> f64 {
        let mut v = self.constant;
        if self.abs_b != 0.0 || self.sqrt_abs_b != 0.0 {
            let b = norm(state);
            v += self.abs_b * b + self.sqrt_abs_b * b.sqrt();
        }
        if self.sin_t != 0.0 {
            v += self.sin_t * t.sin();
        }
        v
    }

    pub fn is_constant(&self) -> bool {
        self.abs_b == 0.0 && self.sqrt_abs_b == 0.0 && self.sin_t == 0.0
    }

    /// True when the coefficient depends on the path-state.
    pub fn depends_on_state(&self) -> bool {
        self.abs_b != 0.0 || self.sqrt_abs_b != 0.0
    }
}

pub type ScalarFn = dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync;

/// A user-supplied map `(t, state, z) -> value`, not serializable.
#[derive(Clone)]
pub struct CustomFn {
    pub label: String,
    pub f: Arc<ScalarFn>,
}

impl CustomFn {
    pub fn new(label: impl Into<String>, f: impl Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        CustomFn {
            label: label.into(),
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for CustomFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomFn({})", self.label)
    }
}

impl PartialEq for CustomFn {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.f, &other.f)
    }
}

/// The piecewise-linear interpolant of `r²` at the integers:
/// `(2k−1)r − k(k−1)` on `[k−1, k)`.
///
/// Written as `r² + (r−k+1)(k−r)` so that `r² ≤ g̃ ≤ 1 + r²` holds in
/// floating point as well.
#[inline]
pub fn chord_of_square(r: f64) -> f64 {
    let k = r.floor() + 1.0;
    r * r + (r - k + 1.0) * (k - r)
}

/// Convex part `g1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ConvexPart {
    /// `g1 ≡ 0`.
    Zero,
    /// `a(t,B)|z|² + c(t,B)`.
    Quadratic { a: Coef, #[serde(default)] c: Coef },
    /// `½|z|² − |z| + c(t,B)`.
    QuadraticMinusNorm { #[serde(default)] c: Coef },
    /// `g̃(|z|) + c(t,B)` with `g̃` the chord interpolant of `r²`.
    PiecewiseChord { #[serde(default)] c: Coef },
    /// `scale·|z|^power`.
    Power { scale: f64, power: f64 },
    #[serde(skip)]
    Custom(CustomFn),
}

impl ConvexPart {
    pub fn pure_quadratic(gamma: f64) -> ConvexPart {
        ConvexPart::Quadratic {
            a: Coef::constant(0.5 * gamma),
            c: Coef::ZERO,
        }
    }

    #[inline]
    pub fn eval(&self, t: f64, state: &[f64], z: &[f64]) -> f64 {
        match self {
            ConvexPart::Zero => 0.0,
            ConvexPart::Quadratic { a, c } => {
                let r2: f64 = z.iter().map(|x| x * x).sum();
                a.eval(t, state) * r2 + c.eval(t, state)
            }
            ConvexPart::QuadraticMinusNorm { c } => {
                let r = norm(z);
                0.5 * r * r - r + c.eval(t, state)
            }
            ConvexPart::PiecewiseChord { c } => chord_of_square(norm(z)) + c.eval(t, state),
            ConvexPart::Power { scale, power } => scale * norm(z).powf(*power),
            ConvexPart::Custom(f) => (f.f)(t, state, z),
        }
    }

    /// Whether `g1(t, B, z)` depends on `z` only through `|z|`.
    pub fn is_radial(&self) -> bool {
        !matches!(self, ConvexPart::Custom(_))
    }

    pub fn label(&self) -> String {
        match self {
            ConvexPart::Zero => "zero".into(),
            ConvexPart::Quadratic { .. } => "quadratic".into(),
            ConvexPart::QuadraticMinusNorm { .. } => "quadratic_minus_norm".into(),
            ConvexPart::PiecewiseChord { .. } => "piecewise_chord".into(),
            ConvexPart::Power { .. } => "power".into(),
            ConvexPart::Custom(f) => format!("custom:{}", f.label),
        }
    }
}

/// Perturbation `g2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Perturbation {
    Zero,
    /// `min(|z|, 1)^power`.
    CappedRoot { power: f64 },
    /// `|z|^power` for `|z| ≤ 1`, `|z|` beyond.
    RootThenLinear { power: f64 },
    /// `−|z|^power`.
    NegativeRoot { power: f64 },
    /// `|z| ln|z|` for `|z| ≤ radius`, `radius·ln(radius)` beyond.
    EntropyBump { radius: f64 },
    #[serde(skip)]
    Custom(CustomFn),
}

impl Perturbation {
    #[inline]
    pub fn eval(&self, t: f64, state: &[f64], z: &[f64]) -> f64 {
        match self {
            Perturbation::Zero => 0.0,
            Perturbation::CappedRoot { power } => norm(z).min(1.0).powf(*power),
            Perturbation::RootThenLinear { power } => {
                let r = norm(z);
                if r <= 1.0 {
                    r.powf(*power)
                } else {
                    r
                }
            }
            Perturbation::NegativeRoot { power } => -norm(z).powf(*power),
            Perturbation::EntropyBump { radius } => {
                let r = norm(z);
                if r == 0.0 {
                    0.0
                } else if r <= *radius {
                    r * r.ln()
                } else {
                    radius * radius.ln()
                }
            }
            Perturbation::Custom(f) => (f.f)(t, state, z),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Perturbation::Zero)
    }

    pub fn is_radial(&self) -> bool {
        !matches!(self, Perturbation::Custom(_))
    }
}

/// Modulus of continuity `φ` for the perturbation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Modulus {
    Zero,
    /// `min(u, 1)^power`.
    CappedRoot { power: f64 },
    /// `u^power` for `u ≤ 1`, `u` beyond.
    RootThenLinear { power: f64 },
    /// `u^power`.
    Power { power: f64 },
    /// `u|ln u|` for `u ≤ radius`, `radius·|ln radius|` beyond.
    EntropyBump { radius: f64 },
    #[serde(skip)]
    Custom(CustomFn),
}

impl Modulus {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Modulus::Zero => 0.0,
            Modulus::CappedRoot { power } => u.min(1.0).powf(*power),
            Modulus::RootThenLinear { power } => {
                if u <= 1.0 {
                    u.powf(*power)
                } else {
                    u
                }
            }
            Modulus::Power { power } => u.powf(*power),
            Modulus::EntropyBump { radius } => {
                if u == 0.0 {
                    0.0
                } else if u <= *radius {
                    -u * u.ln()
                } else {
                    -radius * radius.ln()
                }
            }
            Modulus::Custom(f) => (f.f)(0.0, &[], &[u]),
        }
    }
}

/// `φ(x) ≤ a·x^θ + b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusBounds {
    pub a: f64,
    pub b: f64,
    pub theta: f64,
}

impl ModulusBounds {
    pub fn eval(&self, x: f64) -> f64 {
        self.a * x.powf(self.theta) + self.b
    }
}

/// Strong-convexity candidate `(ε, c)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrongConvexity {
    pub epsilon: f64,
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub name: String,
    pub g1: ConvexPart,
    pub g2: Perturbation,
    pub alpha: Coef,
    pub gamma: f64,
    #[serde(default)]
    pub gamma_bar: Option<f64>,
    #[serde(default)]
    pub strong_convexity: Option<StrongConvexity>,
    pub modulus: Modulus,
    pub modulus_bounds: ModulusBounds,
    /// Evaluate `−g(t, B, −z)` instead of `g`.
    #[serde(default)]
    pub reflected: bool,
}

impl GeneratorSpec {
    /// Spec with only a convex part; the perturbation and modulus are zero.
    pub fn convex(name: impl Into<String>, g1: ConvexPart, alpha: Coef, gamma: f64) -> GeneratorSpec {
        GeneratorSpec {
            name: name.into(),
            g1,
            g2: Perturbation::Zero,
            alpha,
            gamma,
            gamma_bar: None,
            strong_convexity: None,
            modulus: Modulus::Zero,
            modulus_bounds: ModulusBounds {
                a: 0.0,
                b: 0.0,
                theta: 1.0,
            },
            reflected: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("{}: gamma must be positive, got {}", self.name, self.gamma)));
        }
        if let Some(gb) = self.gamma_bar {
            if !(gb > 0.0 && gb <= self.gamma) {
                return Err(Error::Config(format!(
                    "{}: gamma_bar must lie in (0, gamma={}], got {gb}",
                    self.name, self.gamma
                )));
            }
        }
        if let Some(sc) = self.strong_convexity {
            if !(sc.epsilon > 0.0) || !(sc.c >= 0.0) {
                return Err(Error::Config(format!(
                    "{}: strong convexity needs epsilon > 0 and c >= 0, got ({}, {})",
                    self.name, sc.epsilon, sc.c
                )));
            }
        }
        let mb = self.modulus_bounds;
        if !(mb.a >= 0.0 && mb.b >= 0.0 && (0.0..=1.0).contains(&mb.theta)) {
            return Err(Error::Config(format!(
                "{}: modulus bounds need a >= 0, b >= 0, theta in [0,1], got {mb:?}",
                self.name
            )));
        }
        if self.modulus.eval(0.0) != 0.0 {
            return Err(Error::Config(format!("{}: modulus(0) must be 0", self.name)));
        }
        let mut prev = 0.0;
        for i in 1..=4000 {
            let u = i as f64 * 0.005;
            let v = self.modulus.eval(u);
            if !(v >= prev) {
                return Err(Error::Config(format!(
                    "{}: modulus is not nondecreasing near u={u} ({v} < {prev})",
                    self.name
                )));
            }
            prev = v;
        }
        Ok(())
    }

    #[inline]
    fn with_z<R>(&self, radial: bool, z: &[f64], f: impl FnOnce(&[f64]) -> R) -> R {
        if self.reflected && !radial {
            let neg: Vec<f64> = z.iter().map(|x| -x).collect();
            f(&neg)
        } else {
            f(z)
        }
    }

    #[inline]
    pub fn eval_g1(&self, t: f64, state: &[f64], z: &[f64]) -> f64 {
        let v = self.with_z(self.g1.is_radial(), z, |z| self.g1.eval(t, state, z));
        if self.reflected {
            -v
        } else {
            v
        }
    }

    #[inline]
    pub fn eval_g2(&self, t: f64, state: &[f64], z: &[f64]) -> f64 {
        let v = self.with_z(self.g2.is_radial(), z, |z| self.g2.eval(t, state, z));
        if self.reflected {
            -v
        } else {
            v
        }
    }

    #[inline]
    pub fn eval(&self, t: f64, state: &[f64], z: &[f64]) -> f64 {
        self.eval_g1(t, state, z) + self.eval_g2(t, state, z)
    }

    #[inline]
    pub fn alpha(&self, t: f64, state: &[f64]) -> f64 {
        self.alpha.eval(t, state)
    }

    pub fn try_g1(&self, t: f64, state: &[f64], z: &[f64]) -> Result<f64> {
        finite("g1", t, state, z, self.eval_g1(t, state, z))
    }

    pub fn try_g2(&self, t: f64, state: &[f64], z: &[f64]) -> Result<f64> {
        finite("g2", t, state, z, self.eval_g2(t, state, z))
    }

    pub fn try_eval(&self, t: f64, state: &[f64], z: &[f64]) -> Result<f64> {
        finite("g", t, state, z, self.eval(t, state, z))
    }

    pub fn try_alpha(&self, t: f64, state: &[f64]) -> Result<f64> {
        finite("alpha", t, state, &[], self.alpha(t, state))
    }

    /// True when neither part nor `α` reads the path-state.
    pub fn is_deterministic(&self) -> bool {
        let coef_ok = |c: &Coef| !c.depends_on_state();
        let g1_ok = match &self.g1 {
            ConvexPart::Quadratic { a, c } => coef_ok(a) && coef_ok(c),
            ConvexPart::QuadraticMinusNorm { c } | ConvexPart::PiecewiseChord { c } => coef_ok(c),
            ConvexPart::Custom(_) => false,
            _ => true,
        };
        g1_ok && !matches!(self.g2, Perturbation::Custom(_))
    }
}

fn finite(what: &'static str, t: f64, state: &[f64], z: &[f64], v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::evaluation(what, t, state, z, v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chord_matches_piecewise_definition() {
        for i in 0..2000 {
            let r = i as f64 * 0.0137;
            let k = r.floor() + 1.0;
            let direct = (2.0 * k - 1.0) * r - k * (k - 1.0);
            assert!((chord_of_square(r) - direct).abs() < 1e-12 * (1.0 + r * r));
        }
        assert_eq!(chord_of_square(0.5), 0.5);
    }

    #[test]
    fn coef_parses_from_number_or_table() {
        let c: Coef = serde_json::from_str("2.5").unwrap();
        assert_eq!(c, Coef::constant(2.5));
        let c: Coef = serde_json::from_str(r#"{"constant": 1, "sin_t": 1}"#).unwrap();
        assert_eq!(c.eval(std::f64::consts::FRAC_PI_2, &[0.0]), 2.0);
    }

    #[test]
    fn reflection_negates_and_flips() {
        let mut g = GeneratorSpec::convex(
            "custom",
            ConvexPart::Custom(CustomFn::new("shifted", |_, _, z| (z[0] - 1.0).powi(2))),
            Coef::ZERO,
            2.0,
        );
        g.reflected = true;
        assert_eq!(g.eval(0.0, &[0.0], &[2.0]), -9.0);
    }

    #[test]
    fn entropy_bump_is_continuous_at_radius() {
        let p = Perturbation::EntropyBump { radius: 0.1 };
        let a = p.eval(0.0, &[], &[0.1 - 1e-12]);
        let b = p.eval(0.0, &[], &[0.1 + 1e-12]);
        assert!((a - b).abs() < 1e-10);
        assert_eq!(p.eval(0.0, &[], &[0.0]), 0.0);
    }

    #[test]
    fn validation_rejects_bad_constants() {
        let mut g = GeneratorSpec::convex("q", ConvexPart::pure_quadratic(1.0), Coef::ZERO, 1.0);
        assert!(g.validate().is_ok());
        g.gamma_bar = Some(2.0);
        assert!(g.validate().is_err());
        g.gamma_bar = None;
        g.modulus_bounds.theta = 1.5;
        assert!(g.validate().is_err());
    }
}
