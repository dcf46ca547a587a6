//! Fixed-effort multilevel splitting over a level schedule.
//!
//! Level 0 holds `s` copies of the zero state. At level `i` each of `s` slots picks a
//! survivor of level `i - 1` uniformly at random (with replacement), advances it by
//! `t_i - t_{i-1}` and keeps it if `S(X(t_i)) <= gamma`. The estimate is the product of
//! the survivor fractions. Paths are stored as Gamma levels (or Poisson counts) and
//! mapped to `X` only when scored.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ProblemKind, ProblemSpec};
use crate::process::{GammaIncrement, PoissonIncrement, RngStream};
use crate::sched::{build_schedule, LevelMethod};
use crate::stats::{mean_variance, EstimateReport, Method};

/// Default target conditional survival per level.
pub const DEFAULT_P_BAR: f64 = 0.1;

/// Strictly increasing splitting times ending exactly at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule", into = "RawSchedule")]
pub struct LevelSchedule {
    times: Vec<f64>,
    p_bar: f64,
}

#[derive(Serialize, Deserialize)]
struct RawSchedule {
    times: Vec<f64>,
    p_bar: f64,
}

impl TryFrom<RawSchedule> for LevelSchedule {
    type Error = Error;
    fn try_from(r: RawSchedule) -> Result<Self> {
        LevelSchedule::new(r.times, r.p_bar)
    }
}

impl From<LevelSchedule> for RawSchedule {
    fn from(s: LevelSchedule) -> Self {
        RawSchedule { times: s.times, p_bar: s.p_bar }
    }
}

impl LevelSchedule {
    pub fn new(times: Vec<f64>, p_bar: f64) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidSchedule(m));
        if times.is_empty() {
            return bad("at least one level is required".into());
        }
        if !(p_bar > 0.0 && p_bar < 1.0) {
            return bad(format!("p_bar must lie in (0, 1), got {p_bar}"));
        }
        let mut prev = 0.0;
        for (i, &t) in times.iter().enumerate() {
            if !(t > prev) {
                return bad(format!("times must be strictly increasing from 0; times[{i}] = {t}"));
            }
            prev = t;
        }
        if prev != 1.0 {
            return bad(format!("the last time must be exactly 1, got {prev}"));
        }
        Ok(Self { times, p_bar })
    }

    /// `l / levels` for `l = 1..=levels`.
    pub fn equally_spaced(levels: usize, p_bar: f64) -> Result<Self> {
        if levels == 0 {
            return Err(Error::InvalidSchedule("at least one level is required".into()));
        }
        let mut times: Vec<f64> = (1..=levels).map(|l| l as f64 / levels as f64).collect();
        *times.last_mut().expect("non-empty") = 1.0;
        Self::new(times, p_bar)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn p_bar(&self) -> f64 {
        self.p_bar
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn steps(&self) -> impl Iterator<Item = f64> + '_ {
        self.times.iter().scan(0.0, |prev, &t| {
            let dt = t - *prev;
            *prev = t;
            Some(dt)
        })
    }
}

/// Result of a single splitting run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRunResult {
    pub estimate: f64,
    /// Survivors `|X_l|` at each level reached.
    pub survivor_counts: Vec<usize>,
    /// 1-based level at which no path survived.
    pub extinct_at: Option<usize>,
}

/// Path bank of `count` states stored back to back, `n` coordinates each.
struct Bank<V> {
    values: Vec<V>,
    scores: Vec<f64>,
}

impl<V: Copy> Bank<V> {
    fn with_capacity(s: usize, n: usize) -> Self {
        Self { values: Vec::with_capacity(s * n), scores: Vec::with_capacity(s) }
    }

    fn len(&self) -> usize {
        self.scores.len()
    }

    fn clear(&mut self) {
        self.values.clear();
        self.scores.clear();
    }
}

fn run_generic<V: Copy + Default>(
    n: usize,
    gamma: f64,
    s: usize,
    levels: usize,
    rng: &mut RngStream,
    mut advance: impl FnMut(usize, &mut [V], &mut RngStream),
    score: impl Fn(&[V], &mut [f64]) -> f64,
) -> SplitRunResult {
    let mut scratch = vec![0.0; n];
    let mut parents: Bank<V> = Bank::with_capacity(s, n);
    parents.values.extend(std::iter::repeat_n(V::default(), n));
    // the root is not required to satisfy S <= gamma
    parents.scores.push(f64::NEG_INFINITY);
    let mut children: Bank<V> = Bank::with_capacity(s, n);
    let mut counts = Vec::with_capacity(levels);
    let mut estimate = 1.0;

    for level in 0..levels {
        children.clear();
        let pool = parents.len();
        for _ in 0..s {
            let idx = if pool == 1 { 0 } else { rng.random_range(0..pool) };
            debug_assert!(parents.scores[idx] <= gamma, "resampled parent violates S <= gamma");
            let start = children.values.len();
            children.values.extend_from_slice(&parents.values[idx * n..(idx + 1) * n]);
            let child = &mut children.values[start..];
            advance(level, child, rng);
            let sc = score(child, &mut scratch);
            if sc <= gamma {
                children.scores.push(sc);
            } else {
                children.values.truncate(start);
            }
        }
        let kept = children.len();
        counts.push(kept);
        estimate *= kept as f64 / s as f64;
        if kept == 0 {
            return SplitRunResult { estimate: 0.0, survivor_counts: counts, extinct_at: Some(level + 1) };
        }
        std::mem::swap(&mut parents, &mut children);
    }
    SplitRunResult { estimate, survivor_counts: counts, extinct_at: None }
}

/// One fixed-effort splitting run with `s` samples per level.
pub fn run_splitting(
    problem: &ProblemSpec,
    schedule: &LevelSchedule,
    s: usize,
    rng: &mut RngStream,
) -> Result<SplitRunResult> {
    if s < 2 {
        return Err(Error::InvalidParameter(format!("samples per level must be >= 2, got {s}")));
    }
    let n = problem.dim();
    let gamma = problem.gamma();
    let levels = schedule.len();
    match problem.kind() {
        ProblemKind::Continuous => {
            let incs: Vec<GammaIncrement> = schedule.steps().map(GammaIncrement::new).collect::<Result<_>>()?;
            Ok(run_generic::<f64>(
                n,
                gamma,
                s,
                levels,
                rng,
                |level, g, rng| {
                    let inc = &incs[level];
                    for v in g.iter_mut() {
                        *v += inc.sample(rng);
                    }
                },
                |g, scratch| problem.score_gamma_levels(g, scratch),
            ))
        }
        ProblemKind::Poisson => {
            let rates = problem.poisson_rates().expect("validated poisson problem");
            let incs: Vec<PoissonIncrement> =
                schedule.steps().map(|dt| PoissonIncrement::new(&rates, dt)).collect::<Result<_>>()?;
            Ok(run_generic::<u64>(
                n,
                gamma,
                s,
                levels,
                rng,
                |level, c, rng| incs[level].add_to(c, rng),
                |c, scratch| problem.score_counts(c, scratch),
            ))
        }
    }
}

/// `m` independent splitting runs on substreams `0..m` of `rng`, aggregated in index order.
pub fn replicate(
    problem: &ProblemSpec,
    schedule: &LevelSchedule,
    s: usize,
    m: usize,
    rng: &RngStream,
) -> Result<EstimateReport> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("replication count must be >= 2, got {m}")));
    }
    let start = Instant::now();
    let runs: Vec<SplitRunResult> = (0..m as u64)
        .into_par_iter()
        .map(|k| run_splitting(problem, schedule, s, &mut rng.substream(k)))
        .collect::<Result<_>>()?;
    let wall = start.elapsed().as_secs_f64();
    Ok(summarize_runs(problem.gamma(), schedule, s, &runs, wall, rng.seed()))
}

fn summarize_runs(
    gamma: f64,
    schedule: &LevelSchedule,
    s: usize,
    runs: &[SplitRunResult],
    wall: f64,
    seed: u64,
) -> EstimateReport {
    let estimates: Vec<f64> = runs.iter().map(|r| r.estimate).collect();
    let (mean, variance) = mean_variance(&estimates);
    let per_level_survival = (0..schedule.len())
        .map(|l| {
            let fracs: Vec<f64> =
                runs.iter().filter_map(|r| r.survivor_counts.get(l).map(|&c| c as f64 / s as f64)).collect();
            if fracs.is_empty() {
                0.0
            } else {
                fracs.iter().sum::<f64>() / fracs.len() as f64
            }
        })
        .collect();
    let mut report = EstimateReport::new(Method::Split, gamma, mean, variance, runs.len() as u64, wall, seed);
    report.s = Some(s as u64);
    report.levels = schedule.times().to_vec();
    report.per_level_survival = per_level_survival;
    report
}

/// Settings for the full splitting pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    pub s: usize,
    pub m: usize,
    pub p_bar: f64,
    pub levels: LevelMethod,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { s: 3000, m: 200, p_bar: DEFAULT_P_BAR, levels: LevelMethod::LowerBound }
    }
}

/// Schedule construction followed by `m` replications. The schedule is built on a
/// substream disjoint from the replication substreams; its time is included in
/// `wall_seconds` and also reported on its own.
pub fn estimate(problem: &ProblemSpec, config: &SplitConfig, seed: u64) -> Result<EstimateReport> {
    let start = Instant::now();
    let rng = RngStream::new(seed);
    let mut pilot_rng = rng.substream(u64::MAX);
    let schedule = build_schedule(problem, &config.levels, config.p_bar, &mut pilot_rng)?;
    let schedule_seconds = start.elapsed().as_secs_f64();
    let mut report = replicate(problem, &schedule, config.s, config.m, &rng)?;
    let wall = start.elapsed().as_secs_f64();
    report.wall_seconds = Some(wall);
    report.schedule_seconds = Some(schedule_seconds);
    report.wnrv = report.re.map(|r| crate::stats::wnrv(r, wall));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{reg_lower_inc_gamma, DistributionSpec};
    use crate::model::{Direction, ImportanceSpec};

    fn exp_sum(n: usize, gamma: f64) -> ProblemSpec {
        ProblemSpec::new(
            vec![DistributionSpec::exponential(1.0).unwrap(); n],
            vec![Direction::Increasing; n],
            ImportanceSpec::Sum,
            gamma,
            ProblemKind::Continuous,
        )
        .unwrap()
    }

    #[test]
    fn schedule_validation() {
        assert!(LevelSchedule::new(vec![0.2, 0.5, 1.0], 0.1).is_ok());
        assert!(LevelSchedule::new(vec![], 0.1).is_err());
        assert!(LevelSchedule::new(vec![0.5, 0.5, 1.0], 0.1).is_err());
        assert!(LevelSchedule::new(vec![0.0, 1.0], 0.1).is_err());
        assert!(LevelSchedule::new(vec![0.5, 0.9], 0.1).is_err());
        assert!(LevelSchedule::new(vec![0.5, 1.0], 1.0).is_err());
        let eq = LevelSchedule::equally_spaced(7, 0.1).unwrap();
        assert_eq!(eq.times().last(), Some(&1.0));
        assert_eq!(eq.len(), 7);
    }

    #[test]
    fn estimate_is_product_of_fractions() {
        // counts (1, 1, 1) with s = 2 over three levels give 1/8
        let r = SplitRunResult { estimate: 0.125, survivor_counts: vec![1, 1, 1], extinct_at: None };
        let prod: f64 = r.survivor_counts.iter().map(|&c| c as f64 / 2.0).product();
        assert_eq!(prod, r.estimate);

        let problem = exp_sum(3, 2.0);
        let schedule = LevelSchedule::new(vec![0.3, 0.6, 1.0], 0.1).unwrap();
        for seed in 0..50 {
            let r = run_splitting(&problem, &schedule, 2, &mut RngStream::new(seed)).unwrap();
            let prod: f64 = r.survivor_counts.iter().map(|&c| c as f64 / 2.0).product();
            assert_eq!(r.estimate, prod);
            assert!(r.survivor_counts.iter().all(|&c| c <= 2));
            assert_eq!(r.estimate == 0.0, r.extinct_at.is_some());
            assert!((0.0..=1.0).contains(&r.estimate));
        }
    }

    #[test]
    fn rejects_small_effort() {
        let schedule = LevelSchedule::equally_spaced(2, 0.1).unwrap();
        assert!(run_splitting(&exp_sum(2, 1.0), &schedule, 1, &mut RngStream::new(0)).is_err());
        assert!(replicate(&exp_sum(2, 1.0), &schedule, 10, 1, &RngStream::new(0)).is_err());
    }

    #[test]
    fn single_level_is_naive_monte_carlo() {
        // sum of 4 unit exponentials is Gamma(4, 1)
        let problem = exp_sum(4, 1.5);
        let schedule = LevelSchedule::new(vec![1.0], 0.1).unwrap();
        let report = replicate(&problem, &schedule, 1000, 200, &RngStream::new(21)).unwrap();
        let exact = reg_lower_inc_gamma(4.0, 1.5);
        assert!((exact - 0.0656).abs() < 1e-4);
        assert!((report.mean - exact).abs() < 3.0 * report.std_error(), "{} vs {exact}", report.mean);
    }

    #[test]
    fn degenerate_threshold_always_survives() {
        let problem = ProblemSpec::new(
            vec![DistributionSpec::poisson(1.0).unwrap(); 3],
            vec![Direction::Increasing; 3],
            ImportanceSpec::WeightedSum { weights: vec![1.0, 2.0, 3.0] },
            1e9,
            ProblemKind::Poisson,
        )
        .unwrap();
        let schedule = LevelSchedule::equally_spaced(5, 0.1).unwrap();
        let report = replicate(&problem, &schedule, 50, 20, &RngStream::new(3)).unwrap();
        assert_eq!(report.mean, 1.0);
        assert_eq!(report.variance, 0.0);
        assert_eq!(report.re, Some(0.0));
        assert!(report.per_level_survival.iter().all(|&f| f == 1.0));
    }

    #[test]
    fn extinction_returns_zero() {
        let problem = exp_sum(2, -1.0);
        let schedule = LevelSchedule::equally_spaced(3, 0.1).unwrap();
        let r = run_splitting(&problem, &schedule, 10, &mut RngStream::new(0)).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert_eq!(r.extinct_at, Some(1));
        assert_eq!(r.survivor_counts, vec![0]);
        let rep = replicate(&problem, &schedule, 10, 5, &RngStream::new(0)).unwrap();
        assert_eq!(rep.mean, 0.0);
        assert_eq!(rep.re, None);
    }

    #[test]
    fn replicate_is_reproducible() {
        let problem = exp_sum(3, 0.5);
        let schedule = LevelSchedule::new(vec![0.2, 0.5, 1.0], 0.1).unwrap();
        let a = replicate(&problem, &schedule, 200, 16, &RngStream::new(99)).unwrap();
        let b = replicate(&problem, &schedule, 200, 16, &RngStream::new(99)).unwrap();
        assert_eq!(a.clone().without_timing(), b.clone().without_timing());
        let c = replicate(&problem, &schedule, 200, 16, &RngStream::new(100)).unwrap();
        assert_ne!(a.mean, c.mean);
    }
}
