//! Controls, dual values and the certification suites built on them.
//!
//! For a convex `g1` the primal value is the infimum over admissible
//! controls `q` of the dual values `Y^q`, attained at `q* ∈ ∂g1(Z)`. Which
//! suites apply depends on the structural regime of the generator:
//!
//! | regime | suites |
//! |---|---|
//! | `φ` bounded (`a = 0`) | duality |
//! | `θ < 1` with `γ̄` declared | duality, `Z`-moments |
//! | `θ = 1` with strong convexity | cross-scheme uniqueness |
//! | critical terminal or non-convex `g1` | cross-scheme uniqueness |
//!
//! A terminal with exponential moments below order `γ` is left unclassified.

mod admissibility;
mod certificate;
mod suites;

pub use admissibility::{
    audit_admissibility, extract_optimal_control, optimal_control_table, AdmissibilityReport, FeedbackControl,
};
pub use certificate::{duality_certificate, ControlFamily, DualValue, DualityConfig, DualityReport};
pub use suites::{
    comparison_check, default_crosscheck_schemes, uniqueness_crosscheck, z_moment_check, ComparisonConfig,
    ComparisonReport, CrosscheckReport, PairGap, Problem, SchemeOutcome, ZMomentReport, ZMomentRow,
};

use serde::{Deserialize, Serialize};

use crate::generators::{check_convexity, GeneratorSpec, Probe};
use crate::stochastics::TerminalSpec;

/// `ḡ(t, z) = −g(t, −z)`; reflecting twice gives back `gen`.
pub fn reflect(gen: &GeneratorSpec) -> GeneratorSpec {
    let mut g = gen.clone();
    g.reflected = !g.reflected;
    g.name = match gen.name.strip_prefix("reflect(").and_then(|s| s.strip_suffix(')')) {
        Some(inner) if gen.reflected => inner.to_string(),
        _ => format!("reflect({})", gen.name),
    };
    g
}

/// `−ξ`.
pub fn reflect_terminal(terminal: &TerminalSpec) -> TerminalSpec {
    terminal.negated()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Bounded modulus, `φ ≤ b`.
    BoundedModulus,
    /// `φ(x) ≤ a·x^θ + b` with `θ < 1` and strictly quadratic `g1`.
    SublinearModulus,
    /// `θ = 1` with declared strong convexity of `g1`.
    StronglyConvex,
    /// `ξ` has exponential moments only up to order `γ`.
    CriticalTerminal,
    /// `g1` fails the midpoint-convexity probe.
    NonConvex,
    /// None of the above hypotheses is declared.
    Unclassified,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuitePlan {
    pub regime: Regime,
    pub duality: bool,
    pub z_moment: bool,
    pub crosscheck: bool,
    pub reasons: Vec<String>,
}

/// Chooses the certification suites for `(gen, terminal)`.
pub fn plan(gen: &GeneratorSpec, terminal: &TerminalSpec) -> SuitePlan {
    let mut reasons = Vec::new();
    // Regimes are stated for the convex form; undo a reflection first.
    let base = if gen.reflected { reflect(gen) } else { gen.clone() };
    let convex = check_convexity(&base, &Probe::new(1).with_samples(400)).map(|r| r.passed).unwrap_or(false);
    let mb = base.modulus_bounds;
    let order = terminal.moment_order();
    let short = order.is_some_and(|p| p < base.gamma * (1.0 - 1e-12));
    let critical = order.is_some_and(|p| p <= base.gamma * (1.0 + 1e-12));
    let regime = if !convex {
        reasons.push(format!("{}: g1 is not convex, no dual representation", base.name));
        Regime::NonConvex
    } else if short {
        reasons.push(format!("terminal moment order {order:?} is below gamma = {}", base.gamma));
        Regime::Unclassified
    } else if critical {
        reasons.push(format!("terminal has exponential moments only up to order gamma = {}", base.gamma));
        Regime::CriticalTerminal
    } else if mb.a == 0.0 {
        reasons.push(format!("modulus bounded by b = {}", mb.b));
        Regime::BoundedModulus
    } else if mb.theta < 1.0 && base.gamma_bar.is_some() {
        reasons.push(format!("modulus exponent theta = {} < 1 with gamma_bar declared", mb.theta));
        Regime::SublinearModulus
    } else if mb.theta >= 1.0 && base.strong_convexity.is_some() {
        reasons.push("theta = 1 with strong convexity declared; the dual representation is not available".into());
        Regime::StronglyConvex
    } else {
        reasons.push("no regime hypothesis declared".into());
        Regime::Unclassified
    };
    let (duality, z_moment) = match regime {
        Regime::BoundedModulus => (true, false),
        Regime::SublinearModulus => (true, true),
        _ => (false, false),
    };
    SuitePlan {
        regime,
        duality,
        z_moment,
        crosscheck: !duality,
        reasons,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::fixture;
    use crate::stochastics::TerminalSpec;

    #[test]
    fn fixture_regimes() {
        let abs = TerminalSpec::abs(vec![1.0]);
        let r = |name: &str, t: &TerminalSpec| plan(&fixture(name).unwrap().generator, t).regime;
        assert_eq!(r("example_i", &abs), Regime::BoundedModulus);
        assert_eq!(r("example_ii", &abs), Regime::SublinearModulus);
        assert_eq!(r("example_iii", &abs), Regime::StronglyConvex);
        assert_eq!(r("example_iv", &TerminalSpec::critical(1.0)), Regime::NonConvex);
        assert_eq!(r("pure_quadratic(1)", &TerminalSpec::linear(vec![1.0])), Regime::BoundedModulus);
        assert_eq!(r("pure_quadratic(1)", &TerminalSpec::critical(1.0)), Regime::CriticalTerminal);
        assert_eq!(r("pure_quadratic(1)", &TerminalSpec::critical(0.5)), Regime::Unclassified);
        assert_eq!(r("pure_quadratic(1)", &TerminalSpec::critical(2.0)), Regime::BoundedModulus);
        let p = plan(&fixture("example_ii").unwrap().generator, &abs);
        assert!(p.duality && p.z_moment && !p.crosscheck);
    }

    #[test]
    fn reflection_is_an_involution() {
        let g = fixture("example_ii").unwrap().generator;
        let r = reflect(&g);
        let rr = reflect(&r);
        assert_eq!(rr, g);
        assert_eq!(plan(&r, &TerminalSpec::abs(vec![1.0])).regime, Regime::SublinearModulus);
    }
}
