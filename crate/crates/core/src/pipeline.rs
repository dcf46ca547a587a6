//! One-call estimation: pick an estimator, resolve defaults, run.

use crate::baseline::{naive_mc, poisson_is_problem};
use crate::error::Result;
use crate::model::ProblemSpec;
use crate::process::RngStream;
use crate::scenario::Settings;
use crate::sched::LevelMethod;
use crate::split::{self, SplitConfig, DEFAULT_P_BAR};
use crate::stats::{EstimateReport, Method};

pub const DEFAULT_S: usize = 3000;
pub const DEFAULT_M: usize = 200;
pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    /// Samples per level (splitting only).
    pub s: usize,
    /// Replications for splitting, samples for the Monte Carlo estimators.
    pub m: usize,
    pub p_bar: f64,
    pub levels: LevelMethod,
    pub seed: u64,
}

impl RunConfig {
    /// Defaults for `method`, overridden by whatever `settings` provides.
    pub fn from_settings(problem: &ProblemSpec, settings: &Settings, method: Method) -> Self {
        let m = match method {
            Method::Split => settings.m.unwrap_or(DEFAULT_M),
            Method::Naive => settings.naive_m.unwrap_or(DEFAULT_MC_SAMPLES),
            Method::Is => settings.is_m.unwrap_or(DEFAULT_MC_SAMPLES),
        };
        Self {
            method,
            s: settings.s.unwrap_or(DEFAULT_S),
            m,
            p_bar: settings.p_bar.unwrap_or(DEFAULT_P_BAR),
            levels: settings.levels.clone().unwrap_or_else(|| LevelMethod::default_for(problem)),
            seed: settings.seed.unwrap_or(DEFAULT_SEED),
        }
    }
}

pub fn run(problem: &ProblemSpec, config: &RunConfig) -> Result<EstimateReport> {
    let rng = RngStream::new(config.seed);
    match config.method {
        Method::Split => split::estimate(
            problem,
            &SplitConfig { s: config.s, m: config.m, p_bar: config.p_bar, levels: config.levels.clone() },
            config.seed,
        ),
        Method::Naive => naive_mc(problem, config.m, &rng),
        Method::Is => poisson_is_problem(problem, config.m, &rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::preset;

    #[test]
    fn settings_override_defaults() {
        let sc = preset("I").unwrap();
        let cfg = RunConfig::from_settings(&sc.problem, &sc.settings, Method::Naive);
        assert_eq!(cfg.m, 6_000_000);
        let split = RunConfig::from_settings(&sc.problem, &Settings::default(), Method::Split);
        assert_eq!((split.s, split.m, split.seed), (DEFAULT_S, DEFAULT_M, DEFAULT_SEED));
        assert_eq!(split.levels, LevelMethod::LowerBound);
        let vi = preset("VI").unwrap();
        let cfg = RunConfig::from_settings(&vi.problem, &Settings::default(), Method::Split);
        assert!(matches!(cfg.levels, LevelMethod::InverseCcdf { .. }));
    }

    #[test]
    fn importance_sampling_needs_poisson() {
        let sc = preset("II").unwrap();
        let cfg = RunConfig { m: 10, ..RunConfig::from_settings(&sc.problem, &sc.settings, Method::Is) };
        assert!(run(&sc.problem, &cfg).is_err());
    }
}
