//! Level schedules targeting a per-level conditional survival `p_bar`.
//!
//! Two heuristics: inverting an interpolated pilot estimate of `P[S(X(t)) <= gamma]`,
//! and solving a product lower bound of the same probability for each target `p_bar^i`.

use serde::{Deserialize, Serialize};

use crate::dist::{inc_gamma, special::poisson_cdf_tail, DistributionSpec};
use crate::error::{Error, Result};
use crate::model::{ImportanceSpec, ProblemKind, ProblemSpec};
use crate::process::RngStream;
use crate::split::{run_splitting, LevelSchedule};

pub const DEFAULT_PILOT_LEVELS: usize = 12;
pub const DEFAULT_PILOT_SAMPLES: usize = 3000;

const T_MIN: f64 = 1e-8;
const T_TOL: f64 = 1e-10;
/// Interior roots this close to 1 are merged into the terminal level.
const MERGE_GAP: f64 = 1e-12;

/// How the level schedule is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum LevelMethod {
    LowerBound,
    InverseCcdf { pilot_levels: usize, pilot_samples: usize },
    Fixed { times: Vec<f64> },
}

impl LevelMethod {
    /// Lower bound where it applies, otherwise the pilot heuristic with default settings.
    pub fn default_for(problem: &ProblemSpec) -> Self {
        match problem.importance() {
            ImportanceSpec::Ratio { .. } => {
                LevelMethod::InverseCcdf { pilot_levels: DEFAULT_PILOT_LEVELS, pilot_samples: DEFAULT_PILOT_SAMPLES }
            }
            _ => LevelMethod::LowerBound,
        }
    }
}

pub fn build_schedule(
    problem: &ProblemSpec,
    method: &LevelMethod,
    p_bar: f64,
    rng: &mut RngStream,
) -> Result<LevelSchedule> {
    match method {
        LevelMethod::LowerBound => lower_bound_schedule(problem, p_bar),
        LevelMethod::InverseCcdf { pilot_levels, pilot_samples } => {
            inverse_ccdf_schedule(problem, *pilot_levels, *pilot_samples, p_bar, rng)
        }
        LevelMethod::Fixed { times } => LevelSchedule::new(times.clone(), p_bar),
    }
}

fn check_p_bar(p_bar: f64) -> Result<()> {
    if p_bar > 0.0 && p_bar < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("p_bar must lie in (0, 1), got {p_bar}")))
    }
}

/// Pilot-based schedule: one splitting run at `t = l / pilot_levels`, then the
/// piecewise-linear interpolant of `(t, ln F_hat(t))` is inverted at `p_bar^i`.
pub fn inverse_ccdf_schedule(
    problem: &ProblemSpec,
    pilot_levels: usize,
    pilot_samples: usize,
    p_bar: f64,
    rng: &mut RngStream,
) -> Result<LevelSchedule> {
    check_p_bar(p_bar)?;
    if pilot_levels < 2 {
        return Err(Error::InvalidParameter(format!("pilot levels must be >= 2, got {pilot_levels}")));
    }
    if pilot_samples < 100 {
        return Err(Error::InvalidParameter(format!("pilot samples must be >= 100, got {pilot_samples}")));
    }
    let pilot = LevelSchedule::equally_spaced(pilot_levels, p_bar)?;
    let run = run_splitting(problem, &pilot, pilot_samples, rng)?;
    if let Some(level) = run.extinct_at {
        return Err(Error::PilotExtinct { level, levels: pilot_levels, time: pilot.times()[level - 1] });
    }
    let mut ln_f = Vec::with_capacity(pilot_levels);
    let mut acc = 0.0;
    for &c in &run.survivor_counts {
        acc += (c as f64 / pilot_samples as f64).ln();
        ln_f.push(acc);
    }
    invert_pilot(pilot.times(), &ln_f, p_bar)
}

/// Inverts the interpolant through `(0, 0)` and `(times[l], ln_f[l])` at `ln p_bar^i`
/// for `i = 1, 2, ...` while the target stays above `ln_f` at `t = 1`.
///
/// `ln_f` must be nonincreasing and finite, and `times` must end at 1.
pub fn invert_pilot(times: &[f64], ln_f: &[f64], p_bar: f64) -> Result<LevelSchedule> {
    check_p_bar(p_bar)?;
    if times.len() != ln_f.len() || times.is_empty() {
        return Err(Error::InvalidSchedule("pilot times and estimates must have equal nonzero length".into()));
    }
    if ln_f.iter().any(|v| !v.is_finite() || *v > 0.0) {
        return Err(Error::InvalidSchedule("pilot log estimates must be finite and nonpositive".into()));
    }
    let mut ts = Vec::with_capacity(times.len() + 1);
    let mut fs = Vec::with_capacity(times.len() + 1);
    ts.push(0.0);
    fs.push(0.0);
    ts.extend_from_slice(times);
    // running minimum keeps the interpolant monotone
    let mut lo = 0.0f64;
    for &v in ln_f {
        lo = lo.min(v);
        fs.push(lo);
    }
    let end = *fs.last().expect("non-empty");
    let ln_p = p_bar.ln();
    let mut out = Vec::new();
    let mut seg = 1;
    let mut i = 1u32;
    loop {
        let target = i as f64 * ln_p;
        if target <= end {
            break;
        }
        while fs[seg] > target {
            seg += 1;
        }
        let (t0, t1, f0, f1) = (ts[seg - 1], ts[seg], fs[seg - 1], fs[seg]);
        let t = if f1 == target { t1 } else { t0 + (t1 - t0) * (f0 - target) / (f0 - f1) };
        if t >= 1.0 - MERGE_GAP {
            break;
        }
        if out.last().is_none_or(|&p| t > p) {
            out.push(t);
        }
        i += 1;
    }
    out.push(1.0);
    LevelSchedule::new(out, p_bar)
}

/// Per-coordinate factors of the product lower bound on `P[S(X(t)) <= gamma]`.
#[derive(Debug, Clone)]
pub struct LowerBound {
    factors: Vec<Factor>,
}

#[derive(Debug, Clone, Copy)]
enum Factor {
    /// `P[Gamma(t, 1) <= x]`.
    Gamma {
        x: f64,
    },
    /// `P[Poisson(rate * t) <= k]`.
    Poisson {
        rate: f64,
        k: i64,
    },
    One,
}

impl LowerBound {
    pub fn new(problem: &ProblemSpec) -> Result<Self> {
        let n = problem.dim();
        let gamma = problem.gamma();
        let (divisor, weights): (f64, Option<&[f64]>) = match problem.importance() {
            ImportanceSpec::Ratio { .. } => {
                return Err(Error::Unsupported(
                    "the lower-bound schedule does not apply to ratio importance; use the inverse-ccdf schedule".into(),
                ))
            }
            ImportanceSpec::Sum => (n as f64, None),
            ImportanceSpec::OrderedPartialSum { n_bar } => (*n_bar as f64, None),
            ImportanceSpec::WeightedSum { weights } => (n as f64, Some(weights)),
        };
        if !(gamma > 0.0) {
            return Err(Error::InvalidProblem(format!(
                "the lower-bound schedule needs a positive threshold, got {gamma}"
            )));
        }
        let factors = problem
            .marginals()
            .iter()
            .enumerate()
            .map(|(j, m)| {
                let w = weights.map_or(1.0, |w| w[j]);
                if w == 0.0 {
                    return Factor::One;
                }
                let c = gamma / (w * divisor);
                match (problem.kind(), m) {
                    (ProblemKind::Poisson, DistributionSpec::Poisson { lambda }) => {
                        Factor::Poisson { rate: *lambda, k: c.floor() as i64 }
                    }
                    _ => Factor::Gamma { x: m.neg_log_sf(c) },
                }
            })
            .collect();
        Ok(Self { factors })
    }

    /// `ln prod_j B_j(t)`, nonincreasing in `t`.
    pub fn ln_value(&self, t: f64) -> f64 {
        self.factors
            .iter()
            .map(|f| match *f {
                Factor::Gamma { x } => inc_gamma(t, x).ln_p,
                Factor::Poisson { rate, k } => poisson_cdf_tail(rate * t, k).ln_p,
                Factor::One => 0.0,
            })
            .sum()
    }

    pub fn value(&self, t: f64) -> f64 {
        self.ln_value(t).exp()
    }

    /// Root of `prod_j B_j(t) = p_bar^i` at or above `lo`, by bisection.
    pub fn root(&self, p_bar: f64, i: u32, lo: f64) -> f64 {
        let target = i as f64 * p_bar.ln();
        let h = |t: f64| self.ln_value(t) - target;
        let mut lo = lo.max(T_MIN);
        if h(lo) <= 0.0 {
            return lo;
        }
        let mut hi = lo.max(1.0);
        let mut doublings = 0;
        while h(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            if doublings > 1100 || !hi.is_finite() {
                return f64::INFINITY;
            }
        }
        while hi - lo > T_TOL {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Lower-bound schedule: `t_i` solves `prod_j B_j(t_i) = p_bar^i` until the root passes 1.
pub fn lower_bound_schedule(problem: &ProblemSpec, p_bar: f64) -> Result<LevelSchedule> {
    check_p_bar(p_bar)?;
    let bound = LowerBound::new(problem)?;
    let target_at_one = bound.ln_value(1.0);
    if target_at_one == f64::NEG_INFINITY {
        return Err(Error::Schedule(
            "the lower bound is zero at t = 1; the threshold is below every attainable score".into(),
        ));
    }
    let mut times = Vec::new();
    let mut prev = 0.0;
    let mut i = 1u32;
    // once p_bar^i drops below the bound at 1, the root lies beyond 1
    while (i as f64) * p_bar.ln() > target_at_one {
        let t = bound.root(p_bar, i, prev);
        if t >= 1.0 - MERGE_GAP {
            break;
        }
        if t > prev {
            times.push(t);
            prev = t;
        }
        i += 1;
    }
    times.push(1.0);
    LevelSchedule::new(times, p_bar)
}
