//! Experiment configuration, one TOML document per run.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use qbsde::duality::{ComparisonConfig, DualityConfig};
use qbsde::generators::{fixture, GeneratorSpec, GrowthTarget, StrongConvexity};
use qbsde::solver::Scheme;
use qbsde::stochastics::{TerminalKind, TerminalSpec, TimeGrid};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Solve,
    Conjugate,
    Check,
    Duality,
    Crosscheck,
    Compare,
    Zmoment,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Solve,
        Suite::Conjugate,
        Suite::Check,
        Suite::Duality,
        Suite::Crosscheck,
        Suite::Compare,
        Suite::Zmoment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Solve => "solve",
            Suite::Conjugate => "conjugate",
            Suite::Check => "check",
            Suite::Duality => "duality",
            Suite::Crosscheck => "crosscheck",
            Suite::Compare => "compare",
            Suite::Zmoment => "zmoment",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Suite, CliError> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| CliError::Validation(format!("unknown suite '{s}'")))
    }
}

/// A fixture name or an inline generator table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GeneratorSource {
    Fixture(String),
    Inline(Box<GeneratorSpec>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    #[default]
    Gaussian,
    /// Recombining Rademacher tree with all `2^N` paths; `paths` is ignored.
    Tree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub steps: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { horizon: 1.0, steps: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub paths: usize,
    pub dim: usize,
    pub kind: EnsembleKind,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            paths: 100_000,
            dim: 1,
            kind: EnsembleKind::Gaussian,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantGrid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomConstants {
    pub count: usize,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DualitySection {
    pub constants: Option<ConstantGrid>,
    pub random: Option<RandomConstants>,
    pub include_qstar: bool,
    #[serde(flatten)]
    pub certificate: DualityConfig,
}

impl Default for DualitySection {
    fn default() -> Self {
        DualitySection {
            constants: Some(ConstantGrid {
                lo: -2.0,
                hi: 2.0,
                count: 9,
            }),
            random: None,
            include_qstar: true,
            certificate: DualityConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrosscheckSection {
    pub tolerance: f64,
    /// Empty means the three default configurations.
    pub schemes: Vec<Scheme>,
}

impl Default for CrosscheckSection {
    fn default() -> Self {
        CrosscheckSection {
            tolerance: 0.03,
            schemes: Vec::new(),
        }
    }
}

/// The second problem of a comparison; missing parts copy the first one.
#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct CompareSection {
    pub generator: Option<GeneratorSource>,
    pub terminal: Option<TerminalSpec>,
    #[serde(flatten)]
    pub comparison: ComparisonConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZMomentSection {
    pub eta: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl Default for ZMomentSection {
    fn default() -> Self {
        ZMomentSection {
            eta: vec![0.05, 0.1, 0.2, 0.5, 1.0],
            lambda: vec![0.5, 1.0, 2.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConjugateSection {
    /// Scalar `q` values, placed on the first axis.
    pub q: Vec<f64>,
    pub t: f64,
    pub state: Vec<f64>,
    /// Agreement allowed between the analytic and numeric routes, relative
    /// to `1 + |f1|`.
    pub tolerance: f64,
}

impl Default for ConjugateSection {
    fn default() -> Self {
        ConjugateSection {
            q: (0..=20).map(|i| -5.0 + 0.5 * i as f64).collect(),
            t: 0.0,
            state: Vec::new(),
            tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSection {
    pub radius: f64,
    pub samples: usize,
    pub target: GrowthTarget,
    /// Overrides the generator's declared strong-convexity constants.
    pub strong_convexity: Option<StrongConvexity>,
    /// Extra `(z, z')` pairs for the pair-based checks.
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Default for CheckSection {
    fn default() -> Self {
        CheckSection {
            radius: 10.0,
            samples: 2000,
            target: GrowthTarget::ConvexPart,
            strong_convexity: None,
            pairs: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Write `solution.bin` for suites that solve a single problem.
    pub write_solution: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_suite")]
    pub suite: Suite,
    #[serde(default)]
    pub seed: u64,
    pub generator: GeneratorSource,
    /// Defaults to the fixture's recommended terminal.
    #[serde(default)]
    pub terminal: Option<TerminalSpec>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub duality: DualitySection,
    #[serde(default)]
    pub crosscheck: CrosscheckSection,
    #[serde(default)]
    pub compare: CompareSection,
    #[serde(default)]
    pub zmoment: ZMomentSection,
    #[serde(default)]
    pub conjugate: ConjugateSection,
    #[serde(default)]
    pub check: CheckSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_suite() -> Suite {
    Suite::Solve
}

/// Generator and terminal after fixture lookup.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub generator: GeneratorSpec,
    pub terminal: TerminalSpec,
    pub grid: TimeGrid,
}

fn resolve_generator(src: &GeneratorSource) -> Result<(GeneratorSpec, Option<TerminalSpec>), CliError> {
    match src {
        GeneratorSource::Fixture(name) => {
            let f = fixture(name).map_err(|e| CliError::Validation(e.to_string()))?;
            Ok((f.generator, Some(f.terminal)))
        }
        GeneratorSource::Inline(g) => Ok(((**g).clone(), None)),
    }
}

/// Rebuilds the description, which deserialization leaves empty.
fn describe(t: &TerminalSpec) -> TerminalSpec {
    if !t.description.is_empty() {
        return t.clone();
    }
    let base = match &t.kind {
        TerminalKind::Linear { weights } => TerminalSpec::linear(weights.clone()),
        TerminalKind::Abs { weights } => TerminalSpec::abs(weights.clone()),
        TerminalKind::Critical { gamma } => TerminalSpec::critical(*gamma),
        TerminalKind::Constant { value } => TerminalSpec::constant(*value),
        TerminalKind::Custom(_) => return t.clone(),
    };
    let mut desc = base.description;
    if t.scale != 1.0 {
        desc = format!("{}·({desc})", t.scale);
    }
    if t.offset != 0.0 {
        desc = format!("{desc} + {}", t.offset);
    }
    TerminalSpec {
        description: desc,
        ..t.clone()
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig, CliError> {
        toml::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        ExperimentConfig::from_toml(&text)
    }

    /// Checks every invariant and resolves names; no simulation happens here.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let v = |e: qbsde::Error| CliError::Validation(e.to_string());
        positive("grid.horizon", self.grid.horizon)?;
        if self.grid.steps == 0 {
            return Err(invalid("grid.steps must be at least 1"));
        }
        if self.ensemble.dim == 0 {
            return Err(invalid("ensemble.dim must be at least 1"));
        }
        match self.ensemble.kind {
            EnsembleKind::Gaussian if self.ensemble.paths == 0 => return Err(invalid("ensemble.paths must be at least 1")),
            EnsembleKind::Tree if self.ensemble.dim != 1 => return Err(invalid("tree ensembles are one-dimensional")),
            EnsembleKind::Tree if self.grid.steps > 20 => return Err(invalid("tree ensembles allow at most 20 steps")),
            _ => {}
        }
        let grid = TimeGrid::uniform(self.grid.horizon, self.grid.steps).map_err(v)?;
        let (generator, recommended) = resolve_generator(&self.generator)?;
        generator.validate().map_err(v)?;
        let terminal = self
            .terminal
            .clone()
            .or(recommended)
            .ok_or_else(|| invalid("an inline generator needs an explicit terminal"))?;
        let terminal = describe(&terminal);
        terminal.validate().map_err(v)?;
        self.scheme.validate().map_err(v)?;

        match self.suite {
            Suite::Duality => {
                let d = &self.duality;
                positive("duality.sigmas", d.certificate.sigmas)?;
                positive("duality.gap_tolerance", d.certificate.gap_tolerance)?;
                if let Some(g) = &d.constants {
                    if g.count == 0 || !(g.lo <= g.hi) {
                        return Err(invalid("duality.constants needs count ≥ 1 and lo ≤ hi"));
                    }
                }
                if let Some(r) = &d.random {
                    positive("duality.random.scale", r.scale)?;
                }
                let members = d.constants.as_ref().map_or(0, |g| g.count) + d.random.as_ref().map_or(0, |r| r.count);
                if members == 0 && !d.include_qstar {
                    return Err(invalid("the duality control family is empty"));
                }
            }
            Suite::Crosscheck => {
                positive("crosscheck.tolerance", self.crosscheck.tolerance)?;
                for s in &self.crosscheck.schemes {
                    s.validate().map_err(v)?;
                }
                if self.crosscheck.schemes.len() == 1 {
                    return Err(invalid("crosscheck.schemes needs at least two entries"));
                }
            }
            Suite::Compare => {
                let c = &self.compare.comparison;
                positive("compare.sigmas", c.sigmas)?;
                if !(c.cells >= 0.0) {
                    return Err(invalid("compare.cells must be nonnegative"));
                }
                positive("compare.max_violation_share", c.max_violation_share)?;
                if let Some(g) = &self.compare.generator {
                    resolve_generator(g)?.0.validate().map_err(v)?;
                }
                if let Some(t) = &self.compare.terminal {
                    t.validate().map_err(v)?;
                }
            }
            Suite::Zmoment => {
                let z = &self.zmoment;
                if z.eta.is_empty() {
                    return Err(invalid("zmoment.eta must not be empty"));
                }
                for &x in z.eta.iter().chain(&z.lambda) {
                    positive("zmoment grid values", x)?;
                }
            }
            Suite::Conjugate => {
                if self.conjugate.q.is_empty() {
                    return Err(invalid("conjugate.q must not be empty"));
                }
                positive("conjugate.tolerance", self.conjugate.tolerance)?;
                if !self.conjugate.state.is_empty() && self.conjugate.state.len() != self.ensemble.dim {
                    return Err(invalid("conjugate.state must match ensemble.dim"));
                }
            }
            Suite::Check => {
                positive("check.radius", self.check.radius)?;
                if let Some(sc) = self.check.strong_convexity {
                    positive("check.strong_convexity.epsilon", sc.epsilon)?;
                    if !(sc.c >= 0.0) {
                        return Err(invalid("check.strong_convexity.c must be nonnegative"));
                    }
                }
                if self.check.pairs.iter().any(|(a, b)| a.len() != self.ensemble.dim || b.len() != self.ensemble.dim) {
                    return Err(invalid("check.pairs must match ensemble.dim"));
                }
            }
            Suite::Solve => {}
        }
        Ok(Resolved {
            generator,
            terminal,
            grid,
        })
    }

    /// The second problem of a comparison.
    pub fn compare_problem(&self, first: &Resolved) -> Result<(GeneratorSpec, TerminalSpec), CliError> {
        let generator = match &self.compare.generator {
            Some(src) => resolve_generator(src)?.0,
            None => first.generator.clone(),
        };
        let terminal = self.compare.terminal.as_ref().map(describe).unwrap_or_else(|| first.terminal.clone());
        Ok((generator, terminal))
    }

    /// Canonical JSON used for hashing and manifests.
    pub fn canonical_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
