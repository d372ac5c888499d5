//! Named generator fixtures with their declared constants.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use super::{Coef, ConvexPart, GeneratorSpec, Modulus, ModulusBounds, Perturbation, StrongConvexity};
use crate::error::{Error, Result};
use crate::stochastics::TerminalSpec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FixtureName {
    ExampleI,
    ExampleII,
    ExampleIII,
    /// Carries the radius of the logarithmic bump in `g2`.
    ExampleIV(f64),
    Gtilde,
    PureQuadratic(f64),
}

impl FixtureName {
    pub const EXAMPLE_IV_DEFAULT_RADIUS: f64 = 0.1;
}

impl fmt::Display for FixtureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FixtureName::ExampleI => write!(f, "example_i"),
            FixtureName::ExampleII => write!(f, "example_ii"),
            FixtureName::ExampleIII => write!(f, "example_iii"),
            FixtureName::ExampleIV(r) => write!(f, "example_iv({r})"),
            FixtureName::Gtilde => write!(f, "gtilde"),
            FixtureName::PureQuadratic(g) => write!(f, "pure_quadratic({g})"),
        }
    }
}

fn split_arg(s: &str) -> Result<(&str, Option<f64>)> {
    let s = s.trim();
    match s.find('(') {
        None => Ok((s, None)),
        Some(i) => {
            let inner = s[i + 1..]
                .strip_suffix(')')
                .ok_or_else(|| Error::Config(format!("malformed fixture name '{s}'")))?;
            let v: f64 = inner
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad fixture parameter in '{s}'")))?;
            Ok((s[..i].trim(), Some(v)))
        }
    }
}

impl FromStr for FixtureName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (base, arg) = split_arg(s)?;
        let no_arg = |n: FixtureName| match arg {
            None => Ok(n),
            Some(_) => Err(Error::Config(format!("fixture '{base}' takes no parameter"))),
        };
        match base {
            "example_i" => no_arg(FixtureName::ExampleI),
            "example_ii" => no_arg(FixtureName::ExampleII),
            "example_iii" => no_arg(FixtureName::ExampleIII),
            "gtilde" => no_arg(FixtureName::Gtilde),
            "example_iv" => {
                let r = arg.unwrap_or(FixtureName::EXAMPLE_IV_DEFAULT_RADIUS);
                // The bump modulus u|ln u| is increasing only below 1/e.
                if !(r > 0.0 && r <= (-1.0f64).exp()) {
                    return Err(Error::Config(format!("example_iv radius must lie in (0, 1/e], got {r}")));
                }
                Ok(FixtureName::ExampleIV(r))
            }
            "pure_quadratic" => {
                let g = arg.ok_or_else(|| Error::Config("pure_quadratic needs a gamma, e.g. pure_quadratic(1)".into()))?;
                if !(g > 0.0 && g.is_finite()) {
                    return Err(Error::Config(format!("pure_quadratic gamma must be positive, got {g}")));
                }
                Ok(FixtureName::PureQuadratic(g))
            }
            other => Err(Error::Config(format!(
                "unknown fixture '{other}' (expected example_i, example_ii, example_iii, example_iv, gtilde or pure_quadratic(γ))"
            ))),
        }
    }
}

impl TryFrom<String> for FixtureName {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FixtureName> for String {
    fn from(n: FixtureName) -> String {
        n.to_string()
    }
}

/// A generator together with a terminal condition it is meant to be run with.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub generator: GeneratorSpec,
    pub terminal: TerminalSpec,
}

pub fn fixture(name: &str) -> Result<Fixture> {
    Ok(build(name.parse()?))
}

impl From<FixtureName> for Fixture {
    fn from(n: FixtureName) -> Fixture {
        build(n)
    }
}

fn build(name: FixtureName) -> Fixture {
    let label = name.to_string();
    let abs_b = Coef {
        abs_b: 1.0,
        ..Coef::ZERO
    };
    let sqrt_abs_b = Coef {
        sqrt_abs_b: 1.0,
        ..Coef::ZERO
    };
    let abs_terminal = TerminalSpec::abs(vec![1.0]);
    match name {
        FixtureName::ExampleI => Fixture {
            generator: GeneratorSpec {
                name: label,
                g1: ConvexPart::Quadratic {
                    a: Coef {
                        constant: 1.0,
                        sin_t: 1.0,
                        ..Coef::ZERO
                    },
                    c: abs_b,
                },
                g2: Perturbation::CappedRoot { power: 0.25 },
                alpha: abs_b,
                gamma: 4.0,
                gamma_bar: None,
                strong_convexity: None,
                modulus: Modulus::CappedRoot { power: 0.25 },
                modulus_bounds: ModulusBounds {
                    a: 0.0,
                    b: 1.0,
                    theta: 1.0,
                },
                reflected: false,
            },
            terminal: abs_terminal,
        },
        FixtureName::ExampleII => Fixture {
            generator: GeneratorSpec {
                name: label,
                g1: ConvexPart::PiecewiseChord { c: sqrt_abs_b },
                g2: Perturbation::NegativeRoot { power: 0.5 },
                alpha: Coef {
                    constant: 1.0,
                    sqrt_abs_b: 1.0,
                    ..Coef::ZERO
                },
                gamma: 2.0,
                gamma_bar: Some(2.0),
                strong_convexity: None,
                modulus: Modulus::Power { power: 0.5 },
                modulus_bounds: ModulusBounds {
                    a: 1.0,
                    b: 1.0,
                    theta: 0.5,
                },
                reflected: false,
            },
            terminal: abs_terminal,
        },
        FixtureName::ExampleIII => Fixture {
            generator: GeneratorSpec {
                name: label,
                g1: ConvexPart::pure_quadratic(1.0),
                g2: Perturbation::RootThenLinear { power: 2.0 / 3.0 },
                alpha: Coef::ZERO,
                gamma: 1.0,
                gamma_bar: None,
                strong_convexity: Some(StrongConvexity { epsilon: 1.0, c: 0.0 }),
                modulus: Modulus::RootThenLinear { power: 2.0 / 3.0 },
                modulus_bounds: ModulusBounds {
                    a: 1.0,
                    b: 1.0,
                    theta: 1.0,
                },
                reflected: false,
            },
            terminal: abs_terminal,
        },
        FixtureName::ExampleIV(radius) => Fixture {
            generator: GeneratorSpec {
                name: label,
                g1: ConvexPart::QuadraticMinusNorm { c: Coef::ZERO },
                g2: Perturbation::EntropyBump { radius },
                alpha: Coef::constant(1.0),
                gamma: 1.0,
                gamma_bar: None,
                strong_convexity: Some(StrongConvexity { epsilon: 1.0, c: 1.0 }),
                modulus: Modulus::EntropyBump { radius },
                modulus_bounds: ModulusBounds {
                    a: 0.0,
                    b: 2.0,
                    theta: 1.0,
                },
                reflected: false,
            },
            terminal: abs_terminal,
        },
        FixtureName::Gtilde => {
            let mut g = GeneratorSpec::convex(label, ConvexPart::PiecewiseChord { c: Coef::ZERO }, Coef::constant(1.0), 2.0);
            g.gamma_bar = Some(2.0);
            Fixture {
                generator: g,
                terminal: abs_terminal,
            }
        }
        FixtureName::PureQuadratic(gamma) => {
            let mut g = GeneratorSpec::convex(label, ConvexPart::pure_quadratic(gamma), Coef::ZERO, gamma);
            g.gamma_bar = Some(gamma);
            g.strong_convexity = Some(StrongConvexity { epsilon: gamma, c: 0.0 });
            Fixture {
                generator: g,
                terminal: TerminalSpec::linear(vec![1.0]),
            }
        }
    }
}
