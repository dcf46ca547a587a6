//! Estimation problems `P[S(X) <= gamma]`, the Gamma-level embedding of the marginals,
//! and the quasi-monotone importance functions.

use serde::{Deserialize, Serialize};

use crate::dist::{DistributionSpec, Tail};
use crate::error::{Error, Result};
use crate::process::PathValues;

/// Monotonicity direction of one coordinate of the embedded path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Coordinate in the index set `I`: nondecreasing in time, `F^{-1}(1 - e^{-G})`.
    #[serde(rename = "I")]
    Increasing,
    /// Coordinate in the index set `D`: nonincreasing in time, `F^{-1}(e^{-G})`.
    #[serde(rename = "D")]
    Decreasing,
}

impl Direction {
    fn tail(self) -> Tail {
        match self {
            Direction::Increasing => Tail::Upper,
            Direction::Decreasing => Tail::Lower,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImportanceSpec {
    /// `x_1 + ... + x_n`.
    Sum,
    /// `x_1 / (x_2 + ... + x_n + eta)`.
    Ratio { eta: f64 },
    /// Sum of the `n_bar` largest coordinates.
    OrderedPartialSum { n_bar: usize },
    /// `w_1 x_1 + ... + w_n x_n` with nonnegative weights.
    WeightedSum { weights: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    /// Continuous marginals driven through the Gamma-process embedding.
    Continuous,
    /// Poisson marginals simulated directly as Poisson processes.
    Poisson,
}

/// A validated estimation problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProblem", into = "RawProblem")]
pub struct ProblemSpec {
    marginals: Vec<DistributionSpec>,
    directions: Vec<Direction>,
    importance: ImportanceSpec,
    gamma: f64,
    kind: ProblemKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    marginals: Vec<DistributionSpec>,
    directions: Vec<Direction>,
    importance: ImportanceSpec,
    gamma: f64,
    kind: ProblemKind,
}

impl TryFrom<RawProblem> for ProblemSpec {
    type Error = Error;

    fn try_from(r: RawProblem) -> Result<Self> {
        ProblemSpec::new(r.marginals, r.directions, r.importance, r.gamma, r.kind)
    }
}

impl From<ProblemSpec> for RawProblem {
    fn from(p: ProblemSpec) -> Self {
        RawProblem {
            marginals: p.marginals,
            directions: p.directions,
            importance: p.importance,
            gamma: p.gamma,
            kind: p.kind,
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidProblem(msg.into())
}

impl ImportanceSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            ImportanceSpec::Sum => Ok(()),
            ImportanceSpec::Ratio { eta } => {
                if !(eta.is_finite() && *eta > 0.0) {
                    return Err(invalid(format!("ratio noise eta must be > 0, got {eta}")));
                }
                if n < 2 {
                    return Err(invalid("ratio importance needs at least two coordinates"));
                }
                Ok(())
            }
            ImportanceSpec::OrderedPartialSum { n_bar } => {
                if *n_bar < 1 || *n_bar > n {
                    return Err(invalid(format!("n_bar must lie in [1, {n}], got {n_bar}")));
                }
                Ok(())
            }
            ImportanceSpec::WeightedSum { weights } => {
                if weights.len() != n {
                    return Err(invalid(format!("expected {n} weights, got {}", weights.len())));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(invalid("weights must be finite and >= 0"));
                }
                if !weights.iter().any(|w| *w > 0.0) {
                    return Err(invalid("at least one weight must be positive"));
                }
                Ok(())
            }
        }
    }

    /// Evaluates `S(x)` without validation.
    #[inline]
    pub(crate) fn eval(&self, x: &mut [f64]) -> f64 {
        match self {
            ImportanceSpec::Sum => x.iter().sum(),
            ImportanceSpec::Ratio { eta } => {
                let denom: f64 = x[1..].iter().sum::<f64>() + eta;
                if denom == f64::INFINITY {
                    // x_1 is finite at every t < infinity; only D-coordinates overflow
                    0.0
                } else {
                    x[0] / denom
                }
            }
            ImportanceSpec::OrderedPartialSum { n_bar } => {
                let k = *n_bar;
                if k < x.len() {
                    x.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
                }
                x[..k].iter().sum()
            }
            ImportanceSpec::WeightedSum { weights } => {
                weights.iter().zip(x.iter()).map(|(w, v)| if *w == 0.0 { 0.0 } else { w * v }).sum()
            }
        }
    }
}

/// `S(x)` for the given importance function.
pub fn importance(spec: &ImportanceSpec, x: &[f64]) -> Result<f64> {
    let n = x.len();
    spec.validate(n)?;
    if matches!(spec, ImportanceSpec::Ratio { .. } | ImportanceSpec::WeightedSum { .. }) && x.iter().any(|v| *v < 0.0) {
        return Err(invalid("ratio and weighted-sum importance need nonnegative inputs"));
    }
    let mut buf = x.to_vec();
    Ok(spec.eval(&mut buf))
}

/// Whether `(spec, directions)` is one of the sanctioned quasi-monotone configurations:
/// all-increasing for the sums, and `I = {1}`, `D = {2..n}` for the ratio.
pub fn is_quasi_monotone_witness(spec: &ImportanceSpec, directions: &[Direction]) -> bool {
    match spec {
        ImportanceSpec::Sum | ImportanceSpec::OrderedPartialSum { .. } | ImportanceSpec::WeightedSum { .. } => {
            directions.iter().all(|d| *d == Direction::Increasing)
        }
        ImportanceSpec::Ratio { .. } => {
            directions.len() >= 2
                && directions[0] == Direction::Increasing
                && directions[1..].iter().all(|d| *d == Direction::Decreasing)
        }
    }
}

/// Maps Gamma levels to the embedded coordinates.
pub fn embed(g: &[f64], marginals: &[DistributionSpec], directions: &[Direction]) -> Result<Vec<f64>> {
    if g.len() != marginals.len() || g.len() != directions.len() {
        return Err(invalid("embed: length mismatch between levels, marginals and directions"));
    }
    for (i, m) in marginals.iter().enumerate() {
        if !m.is_continuous() {
            return Err(invalid(format!("embed: marginal {i} is not continuous")));
        }
        if g[i].is_nan() || g[i] < 0.0 {
            return Err(invalid(format!("embed: gamma level {i} must be >= 0")));
        }
    }
    let mut out = vec![0.0; g.len()];
    embed_into(g, marginals, directions, &mut out);
    Ok(out)
}

#[inline]
fn embed_into(g: &[f64], marginals: &[DistributionSpec], directions: &[Direction], out: &mut [f64]) {
    for i in 0..g.len() {
        out[i] = marginals[i].quantile_neg_log(g[i], directions[i].tail());
    }
}

impl ProblemSpec {
    pub fn new(
        marginals: Vec<DistributionSpec>,
        directions: Vec<Direction>,
        importance: ImportanceSpec,
        gamma: f64,
        kind: ProblemKind,
    ) -> Result<Self> {
        let n = marginals.len();
        if n == 0 {
            return Err(invalid("at least one marginal is required"));
        }
        if directions.len() != n {
            return Err(invalid(format!("expected {n} directions, got {}", directions.len())));
        }
        if !gamma.is_finite() {
            return Err(invalid(format!("threshold must be finite, got {gamma}")));
        }
        for m in &marginals {
            m.validate()?;
        }
        importance.validate(n)?;
        if !is_quasi_monotone_witness(&importance, &directions) {
            return Err(invalid(match importance {
                ImportanceSpec::Ratio { .. } => {
                    "ratio importance needs direction I for coordinate 1 and D for the rest"
                }
                _ => "sum-type importance needs direction I for every coordinate",
            }));
        }
        match kind {
            ProblemKind::Poisson => {
                if marginals.iter().any(|m| m.is_continuous()) {
                    return Err(invalid("poisson problems need every marginal to be Poisson"));
                }
                if !matches!(importance, ImportanceSpec::WeightedSum { .. }) {
                    return Err(invalid("poisson problems need weighted_sum importance"));
                }
            }
            ProblemKind::Continuous => {
                if let Some(i) = marginals.iter().position(|m| !m.is_continuous()) {
                    return Err(invalid(format!("marginal {i} is Poisson; use kind \"poisson\" for Poisson problems")));
                }
            }
        }
        Ok(Self { marginals, directions, importance, gamma, kind })
    }

    /// Same problem at another threshold.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(invalid(format!("threshold must be finite, got {gamma}")));
        }
        Ok(Self { gamma, ..self.clone() })
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[DistributionSpec] {
        &self.marginals
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn importance(&self) -> &ImportanceSpec {
        &self.importance
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    /// Poisson rates, for poisson-kind problems.
    pub fn poisson_rates(&self) -> Option<Vec<f64>> {
        self.marginals
            .iter()
            .map(|m| match m {
                DistributionSpec::Poisson { lambda } => Some(*lambda),
                _ => None,
            })
            .collect()
    }

    /// `S(X(t))` for a path of Gamma levels. `scratch` must have length `n`.
    #[inline]
    pub fn score_gamma_levels(&self, g: &[f64], scratch: &mut [f64]) -> f64 {
        embed_into(g, &self.marginals, &self.directions, scratch);
        self.importance.eval(scratch)
    }

    /// `S(X(t))` for a path of Poisson counts.
    #[inline]
    pub fn score_counts(&self, counts: &[u64], scratch: &mut [f64]) -> f64 {
        for (s, c) in scratch.iter_mut().zip(counts) {
            *s = *c as f64;
        }
        self.importance.eval(scratch)
    }

    /// `S` of a static sample `x` (already on the natural scale).
    #[inline]
    pub fn score_static(&self, x: &mut [f64]) -> f64 {
        self.importance.eval(x)
    }

    /// `S(X(t))` for a process state of the matching kind.
    pub fn score_state(&self, values: &PathValues) -> Result<f64> {
        let mut scratch = vec![0.0; self.dim()];
        match (values, self.kind) {
            (PathValues::Gamma(g), ProblemKind::Continuous) if g.len() == self.dim() => {
                Ok(self.score_gamma_levels(g, &mut scratch))
            }
            (PathValues::Poisson(c), ProblemKind::Poisson) if c.len() == self.dim() => {
                Ok(self.score_counts(c, &mut scratch))
            }
            _ => Err(invalid("process state does not match the problem kind or dimension")),
        }
    }
}
