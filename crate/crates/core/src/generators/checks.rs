//! Sampled checkers for the structural assumptions on a generator.
//!
//! Every checker is refutation-sound: a failed report carries concrete
//! inputs at which the inequality is violated, a passed report only means
//! nothing was found at the probed resolution.
//!
//! Sample sets are nested: points come from one seeded sequence filtered by
//! the radius, plus fixed-spacing grids along axes, so a larger radius or a
//! larger sample count only ever adds points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GeneratorSpec, StrongConvexity};
use crate::conjugate::{self, ConjugateHandle};
use crate::error::{Error, Result};
use crate::numerics::{dot, norm};

/// Which part of the generator the growth bounds apply to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GrowthTarget {
    /// The convex part `g1`, which is where the structural constants live.
    #[default]
    ConvexPart,
    /// The whole generator `g1 + g2`.
    Full,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Probe {
    pub radius: f64,
    pub samples: usize,
    pub dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub seed: u64,
    /// Extra `(z, z')` pairs always included in pair-based checks.
    #[serde(default)]
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
    #[serde(default)]
    pub target: GrowthTarget,
}

impl Probe {
    pub fn new(dim: usize) -> Probe {
        let e = |x: f64| {
            let mut v = vec![0.0; dim];
            v[0] = x;
            v
        };
        Probe {
            radius: 10.0,
            samples: 2000,
            dim,
            times: vec![0.0, 0.25, 0.5, 1.0],
            states: vec![e(0.0), e(0.5), e(-1.5), e(3.0)],
            seed: 0x5eed_cafe,
            pairs: Vec::new(),
            target: GrowthTarget::ConvexPart,
        }
    }

    pub fn with_radius(mut self, radius: f64) -> Probe {
        self.radius = radius;
        self
    }

    pub fn with_samples(mut self, samples: usize) -> Probe {
        self.samples = samples;
        self
    }

    pub fn with_pair(mut self, z: Vec<f64>, z_prime: Vec<f64>) -> Probe {
        self.pairs.push((z, z_prime));
        self
    }

    fn axis(&self, x: f64, diagonal: bool) -> Vec<f64> {
        if diagonal && self.dim > 1 {
            vec![x / (self.dim as f64).sqrt(); self.dim]
        } else {
            let mut v = vec![0.0; self.dim];
            v[0] = x;
            v
        }
    }

    fn random_direction(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
            let n = norm(&v);
            if n > 1e-12 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }

    /// Sample points `z` with `|z| ≤ radius`.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        let steps = (self.radius * 16.0).floor() as i64;
        for i in -steps..=steps {
            out.push(self.axis(i as f64 / 16.0, false));
            if self.dim > 1 && i != 0 {
                out.push(self.axis(i as f64 / 16.0, true));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for _ in 0..self.samples {
            let shell: i32 = rng.random_range(-4..=12);
            let u: f64 = rng.random();
            let dir = self.random_direction(&mut rng);
            let r = 2f64.powi(shell) * u;
            if r <= self.radius {
                out.push(dir.into_iter().map(|x| x * r).collect());
            }
        }
        out
    }

    /// Sample pairs `(z, z')`, both inside the radius.
    pub fn pair_samples(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut out = self.pairs.clone();
        let steps = (self.radius * 4.0).floor() as i64;
        for i in -steps..=steps {
            for j in -steps..=steps {
                if i != j {
                    out.push((self.axis(i as f64 / 4.0, false), self.axis(j as f64 / 4.0, false)));
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        for _ in 0..self.samples {
            let shell: i32 = rng.random_range(-4..=12);
            let u: f64 = rng.random();
            let dir = self.random_direction(&mut rng);
            let gap_shell: i32 = rng.random_range(-20..=4);
            let v: f64 = rng.random();
            let gap_dir = self.random_direction(&mut rng);
            let r = 2f64.powi(shell) * u;
            let delta = 2f64.powi(gap_shell) * v;
            let z: Vec<f64> = dir.iter().map(|x| x * r).collect();
            let zp: Vec<f64> = z.iter().zip(&gap_dir).map(|(a, b)| a + b * delta).collect();
            if r <= self.radius && norm(&zp) <= self.radius {
                out.push((z, zp));
            }
        }
        out
    }

    /// Scalar grid on `[0, radius]` for one-dimensional conditions.
    pub fn scalar_grid(&self) -> Vec<f64> {
        let steps = (self.radius * 64.0).floor() as usize;
        let mut xs: Vec<f64> = (0..=steps).map(|i| i as f64 / 64.0).collect();
        for p in self.points() {
            xs.push(norm(&p));
        }
        xs
    }

    fn conditions(&self) -> Vec<(f64, Vec<f64>)> {
        let mut out = Vec::new();
        for &t in &self.times {
            for s in &self.states {
                out.push((t, s.clone()));
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 || !(self.radius > 0.0) || self.times.is_empty() || self.states.is_empty() {
            return Err(Error::Config(format!(
                "probe needs dim >= 1, radius > 0 and at least one time and state (dim={}, radius={})",
                self.dim, self.radius
            )));
        }
        if self.states.iter().any(|s| s.len() != self.dim) {
            return Err(Error::Config("probe state dimension mismatch".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "check")]
pub enum CheckKind {
    /// `|g| ≤ α + (γ/2)|z|²`.
    QuadraticGrowth { target: GrowthTarget },
    /// `g ≥ (γ̄/2)|z|² − α`.
    StrictlyQuadratic { target: GrowthTarget },
    /// `g1(z) − g1(z') − u·(z − z') ≥ (ε/2)|z − z'|² − c`.
    StrongConvexity { epsilon: f64, c: f64 },
    /// `|g2(z) − g2(z')| ≤ φ(|z − z'|)`.
    ModulusContinuity,
    /// `φ(x) ≤ a·x^θ + b`.
    ModulusBound,
    /// `|g2(t, 0)| ≤ 0`.
    OriginValue,
    /// `g1((z + z')/2) ≤ (g1(z) + g1(z'))/2`.
    MidpointConvexity,
    /// `f1(q) ≥ −α + |q|²/(2γ)`.
    ConjugateLowerBound,
    /// `−Λ''(x) ≤ 0`.
    LambdaSecond,
    /// `factor·Λ(x)/x ≤ Λ(x')/x'`.
    LambdaRatio { factor: f64 },
    /// `E[K(X_τ⁺)] + 4·SE ≤ budget` for one stopping time of a finite family.
    ClassDSurrogate,
    /// `mean(Y_{t_k} − Y'_{t_k}) ≤ slack` at one grid node.
    NodeOrdering,
}

impl CheckKind {
    /// True for `lhs ≤ rhs` inequalities, false for `lhs ≥ rhs`.
    pub fn is_upper(&self) -> bool {
        !matches!(
            self,
            CheckKind::StrictlyQuadratic { .. } | CheckKind::StrongConvexity { .. } | CheckKind::ConjugateLowerBound
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            CheckKind::QuadraticGrowth { .. } => "quadratic_growth",
            CheckKind::StrictlyQuadratic { .. } => "strictly_quadratic",
            CheckKind::StrongConvexity { .. } => "strong_convexity",
            CheckKind::ModulusContinuity => "modulus_continuity",
            CheckKind::ModulusBound => "modulus_bound",
            CheckKind::OriginValue => "origin_value",
            CheckKind::MidpointConvexity => "midpoint_convexity",
            CheckKind::ConjugateLowerBound => "conjugate_lower_bound",
            CheckKind::LambdaSecond => "lambda_second",
            CheckKind::LambdaRatio { .. } => "lambda_ratio",
            CheckKind::ClassDSurrogate => "class_d_surrogate",
            CheckKind::NodeOrdering => "node_ordering",
        }
    }
}

/// Concrete inputs at which an inequality was evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub kind: CheckKind,
    pub t: f64,
    pub state: Vec<f64>,
    /// Primary argument (`z`, `q`, or `[x]` for scalar checks).
    pub z: Vec<f64>,
    #[serde(default)]
    pub z_prime: Vec<f64>,
    /// Subgradient used for a Bregman gap.
    #[serde(default)]
    pub u: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

impl Witness {
    /// Signed slack, negative when the inequality is violated.
    pub fn slack(&self) -> f64 {
        if self.kind.is_upper() {
            self.rhs - self.lhs
        } else {
            self.lhs - self.rhs
        }
    }

    pub fn violated(&self) -> bool {
        self.slack() < -tolerance(self.lhs, self.rhs)
    }

    /// Recomputes `(lhs, rhs)` from the stored inputs.
    pub fn reevaluate(&self, gen: &GeneratorSpec) -> Result<(f64, f64)> {
        evaluate(gen, self.kind, self.t, &self.state, &self.z, &self.z_prime, &self.u)
    }
}

fn tolerance(lhs: f64, rhs: f64) -> f64 {
    1e-12 * (1.0 + lhs.abs() + rhs.abs())
}

fn growth_value(gen: &GeneratorSpec, target: GrowthTarget, t: f64, state: &[f64], z: &[f64]) -> Result<f64> {
    match target {
        GrowthTarget::ConvexPart => gen.try_g1(t, state, z),
        GrowthTarget::Full => gen.try_eval(t, state, z),
    }
}

fn evaluate(
    gen: &GeneratorSpec,
    kind: CheckKind,
    t: f64,
    state: &[f64],
    z: &[f64],
    zp: &[f64],
    u: &[f64],
) -> Result<(f64, f64)> {
    let r2: f64 = z.iter().map(|x| x * x).sum();
    Ok(match kind {
        CheckKind::QuadraticGrowth { target } => {
            let g = growth_value(gen, target, t, state, z)?;
            (g.abs(), gen.try_alpha(t, state)? + 0.5 * gen.gamma * r2)
        }
        CheckKind::StrictlyQuadratic { target } => {
            let gb = gen
                .gamma_bar
                .ok_or_else(|| Error::Config(format!("{}: gamma_bar is not declared", gen.name)))?;
            let g = growth_value(gen, target, t, state, z)?;
            (g, 0.5 * gb * r2 - gen.try_alpha(t, state)?)
        }
        CheckKind::StrongConvexity { epsilon, c } => {
            let diff: Vec<f64> = z.iter().zip(zp).map(|(a, b)| a - b).collect();
            let lhs = gen.try_g1(t, state, z)? - gen.try_g1(t, state, zp)? - dot(u, &diff);
            let d2: f64 = diff.iter().map(|x| x * x).sum();
            (lhs, 0.5 * epsilon * d2 - c)
        }
        CheckKind::ModulusContinuity => {
            let lhs = (gen.try_g2(t, state, z)? - gen.try_g2(t, state, zp)?).abs();
            let d: Vec<f64> = z.iter().zip(zp).map(|(a, b)| a - b).collect();
            (lhs, gen.modulus.eval(norm(&d)))
        }
        CheckKind::ModulusBound => (gen.modulus.eval(z[0]), gen.modulus_bounds.eval(z[0])),
        CheckKind::OriginValue => (gen.try_g2(t, state, z)?.abs(), 0.0),
        CheckKind::MidpointConvexity => {
            let mid: Vec<f64> = z.iter().zip(zp).map(|(a, b)| 0.5 * (a + b)).collect();
            let lhs = gen.try_g1(t, state, &mid)?;
            (lhs, 0.5 * (gen.try_g1(t, state, z)? + gen.try_g1(t, state, zp)?))
        }
        CheckKind::ConjugateLowerBound => {
            let h = ConjugateHandle::new(gen);
            let f = h.transform(t, state, z)?;
            (f, -gen.try_alpha(t, state)? + r2 / (2.0 * gen.gamma))
        }
        CheckKind::LambdaSecond | CheckKind::LambdaRatio { .. } | CheckKind::ClassDSurrogate => {
            return Err(Error::Precondition(
                "majorant witnesses re-evaluate against their MajorantFamily".into(),
            ))
        }
        CheckKind::NodeOrdering => {
            return Err(Error::Precondition("node-ordering witnesses come from a pair of solutions".into()))
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    /// Violations when failed, tightest cases when passed.
    pub witnesses: Vec<Witness>,
    pub violations: usize,
    pub samples_used: usize,
    pub sampling_radius: f64,
    /// Most negative signed slack over all samples.
    pub worst_slack: f64,
    /// Largest `lhs/rhs` over samples with positive `rhs` (upper bounds only).
    pub max_slack_ratio: Option<f64>,
    #[serde(default)]
    pub notes: Vec<String>,
}

const MAX_WITNESSES: usize = 16;
const TIGHT_WITNESSES: usize = 4;

/// Accumulates evaluated witnesses into a report.
pub(crate) struct ReportBuilder {
    name: String,
    all: Vec<Witness>,
    radius: f64,
    notes: Vec<String>,
    pinned: Vec<(Vec<f64>, Vec<f64>)>,
}

impl ReportBuilder {
    pub(crate) fn new(name: impl Into<String>) -> Self {
        ReportBuilder {
            name: name.into(),
            all: Vec::new(),
            radius: 0.0,
            notes: Vec::new(),
            pinned: Vec::new(),
        }
    }

    /// Witnesses at these `(z, z')` pairs are reported even past the cap.
    pub(crate) fn pin(&mut self, pairs: &[(Vec<f64>, Vec<f64>)]) {
        self.pinned = pairs.to_vec();
    }

    pub(crate) fn push(&mut self, w: Witness) {
        let r = norm(&w.z).max(norm(&w.z_prime));
        if w.kind != CheckKind::ModulusBound {
            self.radius = self.radius.max(r);
        }
        self.all.push(w);
    }

    pub(crate) fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub(crate) fn finish(self) -> CheckReport {
        let samples_used = self.all.len();
        let mut worst_slack = f64::INFINITY;
        let mut max_ratio: Option<f64> = None;
        for w in &self.all {
            worst_slack = worst_slack.min(w.slack());
            if w.kind.is_upper() && w.rhs > 0.0 {
                let r = w.lhs / w.rhs;
                max_ratio = Some(max_ratio.map_or(r, |m: f64| m.max(r)));
            }
        }
        let mut violators: Vec<Witness> = self.all.iter().filter(|w| w.violated()).cloned().collect();
        let violations = violators.len();
        let passed = violations == 0;
        let pinned: Vec<Witness> = self
            .all
            .iter()
            .filter(|w| (passed || w.violated()) && self.pinned.iter().any(|(z, zp)| *z == w.z && *zp == w.z_prime))
            .cloned()
            .collect();
        let mut witnesses = if passed {
            let mut all = self.all;
            all.sort_by(|a, b| a.slack().total_cmp(&b.slack()));
            all.truncate(TIGHT_WITNESSES);
            all
        } else {
            violators.sort_by(|a, b| a.slack().total_cmp(&b.slack()));
            violators.truncate(MAX_WITNESSES);
            violators
        };
        for w in pinned {
            if !witnesses.contains(&w) {
                witnesses.push(w);
            }
        }
        CheckReport {
            name: self.name,
            passed,
            witnesses,
            violations,
            samples_used,
            sampling_radius: self.radius,
            worst_slack: if samples_used == 0 { 0.0 } else { worst_slack },
            max_slack_ratio: max_ratio,
            notes: self.notes,
        }
    }
}

fn point_check(gen: &GeneratorSpec, probe: &Probe, kind: CheckKind) -> Result<CheckReport> {
    probe.validate()?;
    let points = probe.points();
    let per_condition: Vec<Result<Vec<Witness>>> = probe
        .conditions()
        .into_par_iter()
        .map(|(t, state)| {
            points
                .iter()
                .map(|z| {
                    let (lhs, rhs) = evaluate(gen, kind, t, &state, z, &[], &[])?;
                    Ok(Witness {
                        kind,
                        t,
                        state: state.clone(),
                        z: z.clone(),
                        z_prime: Vec::new(),
                        u: Vec::new(),
                        lhs,
                        rhs,
                    })
                })
                .collect()
        })
        .collect();
    let mut b = ReportBuilder::new(kind.name());
    for ws in per_condition {
        for w in ws? {
            b.push(w);
        }
    }
    Ok(b.finish())
}

/// Growth bound `|g| ≤ α + (γ/2)|z|²`, applied to `probe.target`.
pub fn check_quadratic_growth(gen: &GeneratorSpec, probe: &Probe) -> Result<CheckReport> {
    point_check(gen, probe, CheckKind::QuadraticGrowth { target: probe.target })
}

/// Lower bound `g ≥ (γ̄/2)|z|² − α`, applied to `probe.target`.
pub fn check_strictly_quadratic(gen: &GeneratorSpec, probe: &Probe) -> Result<CheckReport> {
    if gen.gamma_bar.is_none() {
        return Err(Error::Config(format!("{}: gamma_bar is not declared", gen.name)));
    }
    point_check(gen, probe, CheckKind::StrictlyQuadratic { target: probe.target })
}

/// Bregman-gap lower bound for the candidate `(ε, c)`.
///
/// Base points `z'` at which `g1` has no global affine minorant are skipped
/// (the condition is vacuous there) and counted in the report notes.
pub fn check_strong_convexity(gen: &GeneratorSpec, candidate: StrongConvexity, probe: &Probe) -> Result<CheckReport> {
    probe.validate()?;
    let kind = CheckKind::StrongConvexity {
        epsilon: candidate.epsilon,
        c: candidate.c,
    };
    let pairs = probe.pair_samples();
    let per_condition: Vec<Result<(Vec<Witness>, usize)>> = probe
        .conditions()
        .into_par_iter()
        .map(|(t, state)| {
            let mut out = Vec::with_capacity(pairs.len());
            let mut skipped = 0;
            for (z, zp) in &pairs {
                let u = match conjugate::subgradient(gen, t, &state, zp) {
                    Ok(u) => u,
                    Err(Error::NonConvex(_)) => {
                        skipped += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let (lhs, rhs) = evaluate(gen, kind, t, &state, z, zp, &u)?;
                out.push(Witness {
                    kind,
                    t,
                    state: state.clone(),
                    z: z.clone(),
                    z_prime: zp.clone(),
                    u,
                    lhs,
                    rhs,
                });
            }
            Ok((out, skipped))
        })
        .collect();
    let mut b = ReportBuilder::new(kind.name());
    b.pin(&probe.pairs);
    let mut skipped = 0;
    for r in per_condition {
        let (ws, s) = r?;
        skipped += s;
        for w in ws {
            b.push(w);
        }
    }
    if skipped > 0 {
        b.note(format!(
            "{skipped} base points skipped: g1 has no supporting hyperplane there"
        ));
    }
    Ok(b.finish())
}

/// Uniform continuity of `g2` with modulus `φ`, the growth bound on `φ`,
/// and `g2(t, 0) = 0`.
pub fn check_uniform_continuity(gen: &GeneratorSpec, probe: &Probe) -> Result<CheckReport> {
    probe.validate()?;
    let pairs = probe.pair_samples();
    let zero = vec![0.0; probe.dim];
    let per_condition: Vec<Result<Vec<Witness>>> = probe
        .conditions()
        .into_par_iter()
        .map(|(t, state)| {
            let mut out = Vec::with_capacity(pairs.len() + 1);
            for (z, zp) in &pairs {
                let (lhs, rhs) = evaluate(gen, CheckKind::ModulusContinuity, t, &state, z, zp, &[])?;
                out.push(Witness {
                    kind: CheckKind::ModulusContinuity,
                    t,
                    state: state.clone(),
                    z: z.clone(),
                    z_prime: zp.clone(),
                    u: Vec::new(),
                    lhs,
                    rhs,
                });
            }
            let (lhs, rhs) = evaluate(gen, CheckKind::OriginValue, t, &state, &zero, &[], &[])?;
            out.push(Witness {
                kind: CheckKind::OriginValue,
                t,
                state: state.clone(),
                z: zero.clone(),
                z_prime: Vec::new(),
                u: Vec::new(),
                lhs,
                rhs,
            });
            Ok(out)
        })
        .collect();
    let mut b = ReportBuilder::new("uniform_continuity");
    b.pin(&probe.pairs);
    for ws in per_condition {
        for w in ws? {
            b.push(w);
        }
    }
    let mut prev = 0.0;
    let mut grid = probe.scalar_grid();
    grid.sort_by(f64::total_cmp);
    for x in grid {
        let (lhs, rhs) = evaluate(gen, CheckKind::ModulusBound, 0.0, &[], &[x], &[], &[])?;
        if !lhs.is_finite() || lhs < 0.0 || lhs < prev {
            b.note(format!("modulus is negative or decreasing near x={x}"));
            b.push(Witness {
                kind: CheckKind::ModulusBound,
                t: 0.0,
                state: Vec::new(),
                z: vec![x],
                z_prime: Vec::new(),
                u: Vec::new(),
                lhs: f64::INFINITY,
                rhs,
            });
        }
        prev = lhs.max(prev);
        b.push(Witness {
            kind: CheckKind::ModulusBound,
            t: 0.0,
            state: Vec::new(),
            z: vec![x],
            z_prime: Vec::new(),
            u: Vec::new(),
            lhs,
            rhs,
        });
    }
    Ok(b.finish())
}

/// Sampled midpoint convexity of `g1`.
pub fn check_convexity(gen: &GeneratorSpec, probe: &Probe) -> Result<CheckReport> {
    probe.validate()?;
    let pairs = probe.pair_samples();
    let per_condition: Vec<Result<Vec<Witness>>> = probe
        .conditions()
        .into_par_iter()
        .map(|(t, state)| {
            pairs
                .iter()
                .map(|(z, zp)| {
                    let (lhs, rhs) = evaluate(gen, CheckKind::MidpointConvexity, t, &state, z, zp, &[])?;
                    Ok(Witness {
                        kind: CheckKind::MidpointConvexity,
                        t,
                        state: state.clone(),
                        z: z.clone(),
                        z_prime: zp.clone(),
                        u: Vec::new(),
                        lhs,
                        rhs,
                    })
                })
                .collect()
        })
        .collect();
    let mut b = ReportBuilder::new("midpoint_convexity");
    b.pin(&probe.pairs);
    for ws in per_condition {
        for w in ws? {
            b.push(w);
        }
    }
    Ok(b.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{Coef, ConvexPart};

    #[test]
    fn point_sets_are_nested() {
        let small = Probe::new(2).with_radius(3.0).with_samples(300);
        let big = Probe::new(2).with_radius(5.0).with_samples(600);
        let bp = big.points();
        for p in small.points() {
            assert!(bp.contains(&p));
        }
        let bpairs = big.pair_samples();
        for p in small.pair_samples() {
            assert!(bpairs.contains(&p));
        }
    }

    #[test]
    fn cubic_fails_growth_near_the_edge() {
        let g = GeneratorSpec::convex("cubic", ConvexPart::Power { scale: 1.0, power: 3.0 }, Coef::constant(1.0), 2.0);
        let r = check_quadratic_growth(&g, &Probe::new(1)).unwrap();
        assert!(!r.passed);
        // |z|³ ≤ 1 + |z|² first fails just above |z| = 1.47.
        assert!(norm(&r.witnesses[0].z) > 9.0);
        assert!(r.witnesses.iter().all(|w| norm(&w.z) > 1.4));
    }
}
