//! Reference estimators: crude Monte Carlo and exponentially tilted importance
//! sampling for weighted Poisson sums.

use std::time::Instant;

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::dist::TailProb;
use crate::error::{Error, Result};
use crate::model::{ImportanceSpec, ProblemKind, ProblemSpec};
use crate::process::RngStream;
use crate::stats::{EstimateReport, Method, Moments};

/// Samples per substream. Fixed so results do not depend on the thread count.
const CHUNK: usize = 1 << 16;

fn chunks(m: usize) -> impl IndexedParallelIterator<Item = (u64, usize)> {
    let k = m.div_ceil(CHUNK);
    (0..k).into_par_iter().map(move |i| (i as u64, CHUNK.min(m - i * CHUNK)))
}

fn poisson_samplers(rates: &[f64]) -> Result<Vec<Option<Poisson<f64>>>> {
    rates
        .iter()
        .map(|&r| {
            if r == 0.0 {
                Ok(None)
            } else {
                Poisson::new(r).map(Some).map_err(|e| Error::InvalidParameter(format!("poisson rate {r}: {e}")))
            }
        })
        .collect()
}

/// Fraction of `m` direct draws of `X` with `S(X) <= gamma`.
pub fn naive_mc(problem: &ProblemSpec, m: usize, rng: &RngStream) -> Result<EstimateReport> {
    if m == 0 {
        return Err(Error::InvalidParameter("sample count must be >= 1".into()));
    }
    let start = Instant::now();
    let n = problem.dim();
    let gamma = problem.gamma();
    let samplers = match problem.kind() {
        ProblemKind::Poisson => Some(poisson_samplers(&problem.poisson_rates().expect("poisson problem"))?),
        ProblemKind::Continuous => None,
    };
    let hits: u64 = chunks(m)
        .map(|(idx, len)| {
            let mut r = rng.substream(idx);
            let mut x = vec![0.0; n];
            let mut hits = 0u64;
            for _ in 0..len {
                match &samplers {
                    Some(ps) => {
                        for (v, p) in x.iter_mut().zip(ps) {
                            *v = p.as_ref().map_or(0.0, |p| p.sample(&mut r));
                        }
                    }
                    None => {
                        for (v, d) in x.iter_mut().zip(problem.marginals()) {
                            *v = d.quantile_tail(TailProb::from_lower(r.open_unit()));
                        }
                    }
                }
                if problem.score_static(&mut x) <= gamma {
                    hits += 1;
                }
            }
            hits
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    let mean = hits as f64 / m as f64;
    let variance = if m > 1 { mean * (1.0 - mean) * m as f64 / (m as f64 - 1.0) } else { 0.0 };
    let wall = start.elapsed().as_secs_f64();
    Ok(EstimateReport::new(Method::Naive, gamma, mean, variance, m as u64, wall, rng.seed()))
}

/// Tilt parameter `gamma / sum_j w_j lambda_j`, clamped to 1.
pub fn tilt(lambdas: &[f64], weights: &[f64], gamma: f64) -> Result<f64> {
    let total: f64 = lambdas.iter().zip(weights).map(|(l, w)| l * w).sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("sum of w_j * lambda_j must be positive".into()));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("threshold must be positive, got {gamma}")));
    }
    let theta = gamma / total;
    if theta >= 1.0 {
        log::warn!("tilt {theta} >= 1 (threshold above the mean); clamping to 1, which is crude Monte Carlo");
        Ok(1.0)
    } else {
        Ok(theta)
    }
}

/// Importance sampling for `P[sum_j w_j N_j <= gamma]`, `N_j ~ Poisson(lambda_j)`, drawing
/// `N_j ~ Poisson(theta * lambda_j)` with `theta` from [`tilt`].
pub fn poisson_is(lambdas: &[f64], weights: &[f64], gamma: f64, m: usize, rng: &RngStream) -> Result<EstimateReport> {
    let theta = tilt(lambdas, weights, gamma)?;
    poisson_is_with_theta(lambdas, weights, gamma, theta, m, rng)
}

/// [`poisson_is`] with an explicit tilt `theta` in `(0, 1]`.
pub fn poisson_is_with_theta(
    lambdas: &[f64],
    weights: &[f64],
    gamma: f64,
    theta: f64,
    m: usize,
    rng: &RngStream,
) -> Result<EstimateReport> {
    let start = Instant::now();
    if lambdas.len() != weights.len() || lambdas.is_empty() {
        return Err(Error::InvalidParameter("rates and weights must have equal nonzero length".into()));
    }
    if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidParameter("rates and weights must be finite and nonnegative".into()));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidParameter(format!("tilt must lie in (0, 1], got {theta}")));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("sample count must be >= 1".into()));
    }
    let tilted: Vec<f64> = lambdas.iter().map(|l| l * theta).collect();
    let samplers = poisson_samplers(&tilted)?;
    let ln_theta = theta.ln();
    let base: f64 = -lambdas.iter().map(|l| l * (1.0 - theta)).sum::<f64>();
    let moments = chunks(m)
        .map(|(idx, len)| {
            let mut r = rng.substream(idx);
            let mut acc = Moments::default();
            for _ in 0..len {
                let mut score = 0.0;
                let mut total = 0.0;
                for (p, w) in samplers.iter().zip(weights) {
                    let k = p.as_ref().map_or(0.0, |p| p.sample(&mut r));
                    score += if *w == 0.0 { 0.0 } else { w * k };
                    total += k;
                }
                let value = if score <= gamma { (base - total * ln_theta).exp() } else { 0.0 };
                acc.push(value);
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Moments::default(), Moments::merge);
    let wall = start.elapsed().as_secs_f64();
    Ok(EstimateReport::new(Method::Is, gamma, moments.mean, moments.variance(), m as u64, wall, rng.seed()))
}

/// [`poisson_is`] on a Poisson-kind problem.
pub fn poisson_is_problem(problem: &ProblemSpec, m: usize, rng: &RngStream) -> Result<EstimateReport> {
    let rates = problem
        .poisson_rates()
        .ok_or_else(|| Error::Unsupported("importance sampling needs a poisson problem".into()))?;
    let weights = match problem.importance() {
        ImportanceSpec::WeightedSum { weights } => weights.clone(),
        ImportanceSpec::Sum => vec![1.0; rates.len()],
        _ => return Err(Error::Unsupported("importance sampling needs a weighted-sum importance".into())),
    };
    poisson_is(&rates, &weights, problem.gamma(), m, rng)
}
