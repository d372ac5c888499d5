//! Terminal conditions `ξ` as functionals of a path up to `T`.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

use super::ensemble::PathView;
use crate::error::{Error, Result};
use crate::numerics::{dot, ln_normal_cdf};

pub type TerminalFn = dyn Fn(&dyn PathView) -> f64 + Send + Sync;

#[derive(Clone)]
pub struct CustomTerminal {
    pub label: String,
    pub f: Arc<TerminalFn>,
    /// Declared `p*`; `None` means every exponential moment is finite.
    pub moment_order: Option<f64>,
}

impl fmt::Debug for CustomTerminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomTerminal({})", self.label)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminalKind {
    /// `v·B_T`; missing trailing weights are zero.
    Linear { weights: Vec<f64> },
    /// `|v·B_T|`.
    Abs { weights: Vec<f64> },
    /// `F⁻¹(Φ(B_T¹/√T))` for the law with survival `e^{−γx}/(1+x)²` on `ℝ₊`.
    Critical { gamma: f64 },
    Constant { value: f64 },
    #[serde(skip)]
    Custom(CustomTerminal),
}

fn one() -> f64 {
    1.0
}

/// `ξ = scale · base(path) + offset`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TerminalSpec {
    #[serde(flatten)]
    pub kind: TerminalKind,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub description: String,
}

impl TerminalSpec {
    fn from_kind(kind: TerminalKind, description: String) -> TerminalSpec {
        TerminalSpec {
            kind,
            scale: 1.0,
            offset: 0.0,
            description,
        }
    }

    pub fn linear(weights: Vec<f64>) -> TerminalSpec {
        let d = format!("linear {weights:?}·B_T");
        TerminalSpec::from_kind(TerminalKind::Linear { weights }, d)
    }

    pub fn abs(weights: Vec<f64>) -> TerminalSpec {
        let d = format!("|{weights:?}·B_T|");
        TerminalSpec::from_kind(TerminalKind::Abs { weights }, d)
    }

    pub fn critical(gamma: f64) -> TerminalSpec {
        TerminalSpec::from_kind(
            TerminalKind::Critical { gamma },
            format!("critical({gamma}): survival e^(-{gamma}x)/(1+x)^2"),
        )
    }

    pub fn constant(value: f64) -> TerminalSpec {
        TerminalSpec::from_kind(TerminalKind::Constant { value }, format!("constant {value}"))
    }

    pub fn custom(label: impl Into<String>, moment_order: Option<f64>, f: impl Fn(&dyn PathView) -> f64 + Send + Sync + 'static) -> TerminalSpec {
        let label = label.into();
        TerminalSpec::from_kind(
            TerminalKind::Custom(CustomTerminal {
                label: label.clone(),
                f: Arc::new(f),
                moment_order,
            }),
            label,
        )
    }

    pub fn shifted(mut self, offset: f64) -> TerminalSpec {
        self.offset += offset;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            TerminalKind::Linear { weights } | TerminalKind::Abs { weights } => {
                if weights.is_empty() || weights.iter().any(|w| !w.is_finite()) {
                    return Err(Error::Config("terminal weights must be finite and nonempty".into()));
                }
            }
            TerminalKind::Critical { gamma } => {
                if !(*gamma > 0.0 && gamma.is_finite()) {
                    return Err(Error::Config(format!("critical terminal needs gamma > 0, got {gamma}")));
                }
            }
            TerminalKind::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::Config("constant terminal must be finite".into()));
                }
            }
            TerminalKind::Custom(_) => {}
        }
        if !self.scale.is_finite() || !self.offset.is_finite() {
            return Err(Error::Config("terminal scale and offset must be finite".into()));
        }
        Ok(())
    }

    /// `p*` with `E[exp(p ξ⁺)] < ∞` for `p < p*`; `None` for no limit.
    pub fn moment_order(&self) -> Option<f64> {
        match &self.kind {
            TerminalKind::Critical { gamma } if self.scale > 0.0 => Some(gamma / self.scale),
            TerminalKind::Custom(c) if self.scale > 0.0 => c.moment_order.map(|p| p / self.scale),
            _ => None,
        }
    }

    fn base(&self, path: &dyn PathView) -> f64 {
        let end = path.node(path.steps());
        match &self.kind {
            TerminalKind::Linear { weights } => dot(weights, end),
            TerminalKind::Abs { weights } => dot(weights, end).abs(),
            TerminalKind::Critical { gamma } => {
                let horizon = path.time(path.steps());
                critical_quantile(*gamma, end[0] / horizon.sqrt())
            }
            TerminalKind::Constant { value } => *value,
            TerminalKind::Custom(c) => (c.f)(path),
        }
    }

    #[inline]
    pub fn eval(&self, path: &dyn PathView) -> f64 {
        self.scale * self.base(path) + self.offset
    }

    /// The reflected terminal `−ξ`.
    pub fn negated(&self) -> TerminalSpec {
        let mut t = self.clone();
        t.scale = -t.scale;
        t.offset = -t.offset;
        t.description = format!("-({})", self.description);
        t
    }
}

/// `ξ` with `P(ξ > ξ) = e^{−γξ}/(1+ξ)² = Φ(−x)`, i.e. the root of
/// `γξ + 2 ln(1+ξ) = −ln Φ(−x)`. The left side is concave and increasing,
/// so Newton from 0 increases monotonically to the root.
pub fn critical_quantile(gamma: f64, x: f64) -> f64 {
    let target = -ln_normal_cdf(-x);
    if target <= 0.0 {
        return 0.0;
    }
    let mut xi = 0.0f64;
    for _ in 0..100 {
        let h = gamma * xi + 2.0 * (1.0 + xi).ln_1p_safe() - target;
        let dh = gamma + 2.0 / (1.0 + xi);
        let next = xi - h / dh;
        if !(next > xi) {
            break;
        }
        let done = next - xi <= 1e-15 * next.max(1.0);
        xi = next;
        if done {
            break;
        }
    }
    xi
}

trait LnSafe {
    fn ln_1p_safe(self) -> f64;
}

impl LnSafe for f64 {
    /// `ln(self)` for `self = 1 + ξ`, computed as `ln_1p(ξ)`.
    #[inline]
    fn ln_1p_safe(self) -> f64 {
        (self - 1.0).ln_1p()
    }
}

/// Survival function `e^{−γx}/(1+x)²` of the critical law.
pub fn critical_survival(gamma: f64, x: f64) -> f64 {
    (-gamma * x).exp() / ((1.0 + x) * (1.0 + x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::normal_cdf;

    #[test]
    fn critical_quantile_inverts_survival() {
        for &x in &[-3.0, -0.5, 0.0, 0.3, 1.0, 2.5, 6.0, 12.0] {
            let xi = critical_quantile(1.0, x);
            let s = critical_survival(1.0, xi);
            let target = normal_cdf(-x);
            assert!((s.ln() - target.ln()).abs() < 1e-12, "x={x}: {s} vs {target}");
        }
        // Median of B maps to the median of the law.
        let m = critical_quantile(2.0, 0.0);
        assert!((critical_survival(2.0, m) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn moment_orders() {
        assert_eq!(TerminalSpec::linear(vec![1.0]).moment_order(), None);
        assert_eq!(TerminalSpec::critical(1.0).moment_order(), Some(1.0));
        assert_eq!(TerminalSpec::critical(1.0).negated().moment_order(), None);
    }
}
