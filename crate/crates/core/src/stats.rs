//! Replication statistics (relative error, work-normalized relative variance), estimate
//! reports, and exact oracles for the problem families that admit one.

use serde::{Deserialize, Serialize};

use crate::dist::{reg_lower_inc_gamma, DistributionSpec, Tail};
use crate::error::{Error, Result};
use crate::model::{ImportanceSpec, ProblemKind, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Split,
    Naive,
    Is,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Split => "split",
            Method::Naive => "naive",
            Method::Is => "is",
        }
    }
}

/// Outcome of one estimation call.
///
/// `m` is the replication count for splitting and the sample count for the single-run
/// Monte Carlo estimators; `variance` is the matching sample variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    pub gamma: f64,
    pub mean: f64,
    pub variance: f64,
    /// Relative error; absent when the mean is zero.
    pub re: Option<f64>,
    /// `re^2 * wall_seconds`; absent with `re` or when timing is stripped.
    pub wnrv: Option<f64>,
    /// Seconds for the whole call, schedule construction included.
    pub wall_seconds: Option<f64>,
    /// Seconds spent building the level schedule (already part of `wall_seconds`).
    pub schedule_seconds: Option<f64>,
    pub m: u64,
    /// Samples per level (splitting only).
    pub s: Option<u64>,
    pub levels: Vec<f64>,
    /// Mean conditional survival fraction per level.
    pub per_level_survival: Vec<f64>,
    pub seed: u64,
}

impl EstimateReport {
    /// Builds a report from summary statistics; fills `re` and `wnrv`.
    pub fn new(method: Method, gamma: f64, mean: f64, variance: f64, m: u64, wall_seconds: f64, seed: u64) -> Self {
        let re = relative_error(mean, variance, m);
        Self {
            method,
            gamma,
            mean,
            variance,
            re,
            wnrv: re.map(|r| wnrv(r, wall_seconds)),
            wall_seconds: Some(wall_seconds),
            schedule_seconds: None,
            m,
            s: None,
            levels: Vec::new(),
            per_level_survival: Vec::new(),
            seed,
        }
    }

    /// Standard error of the reported mean.
    pub fn std_error(&self) -> f64 {
        (self.variance / self.m as f64).sqrt()
    }

    /// Drops the wall-clock dependent fields so the report is a pure function of the
    /// inputs and seed.
    pub fn without_timing(mut self) -> Self {
        self.wall_seconds = None;
        self.schedule_seconds = None;
        self.wnrv = None;
        self
    }
}

/// `sqrt(variance) / (mean * sqrt(m))`; `None` when the mean is not positive.
pub fn relative_error(mean: f64, variance: f64, m: u64) -> Option<f64> {
    if mean > 0.0 && m >= 1 {
        Some(variance.max(0.0).sqrt() / (mean * (m as f64).sqrt()))
    } else {
        None
    }
}

/// Work-normalized relative variance `re^2 * seconds`.
pub fn wnrv(re: f64, wall_seconds: f64) -> f64 {
    re * re * wall_seconds
}

/// Sample mean and unbiased sample variance (zero variance for fewer than two values).
pub fn mean_variance(xs: &[f64]) -> (f64, f64) {
    let mut acc = Moments::default();
    for &x in xs {
        acc.push(x);
    }
    (acc.mean, acc.variance())
}

/// Streaming first and second moments (Welford), mergeable across shards.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(self, other: Moments) -> Moments {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let n = self.count + other.count;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.count as f64 / n as f64;
        let m2 = self.m2 + other.m2 + d * d * (self.count as f64 * other.count as f64) / n as f64;
        Moments { count: n, mean, m2 }
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }
}

/// Two-sided Kolmogorov-Smirnov statistic of `samples` against `cdf`. Sorts in place.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

/// Which exact route [`oracle_exact`] used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleFamily {
    /// Sum of Exponential/Gamma marginals sharing one rate: a Gamma CDF.
    GammaSum,
    /// Weighted sum of Poissons: lattice enumeration.
    PoissonLattice,
    /// Two-coordinate ratio: one-dimensional quadrature.
    RatioQuadrature,
}

/// Lattice points visited before enumeration is declared unsupported.
pub const MAX_LATTICE_POINTS: u64 = 100_000_000;

/// Exact (or quadrature-accurate) value of `P[S(X) <= gamma]` for the supported families.
pub fn oracle_exact(problem: &ProblemSpec) -> Result<f64> {
    oracle_with_family(problem).map(|(v, _)| v)
}

pub fn oracle_with_family(problem: &ProblemSpec) -> Result<(f64, OracleFamily)> {
    let gamma = problem.gamma();
    match (problem.kind(), problem.importance()) {
        (ProblemKind::Poisson, ImportanceSpec::WeightedSum { weights }) => {
            let rates = problem.poisson_rates().expect("poisson problem has poisson marginals");
            poisson_lattice(&rates, weights, gamma).map(|v| (v, OracleFamily::PoissonLattice))
        }
        (ProblemKind::Continuous, ImportanceSpec::Sum) => {
            gamma_sum(problem.marginals(), gamma).map(|v| (v, OracleFamily::GammaSum))
        }
        (ProblemKind::Continuous, ImportanceSpec::Ratio { eta }) if problem.dim() == 2 => {
            let m = problem.marginals();
            Ok((ratio_quadrature(&m[0], &m[1], *eta, gamma), OracleFamily::RatioQuadrature))
        }
        _ => Err(Error::Unsupported("no exact oracle for this problem family".into())),
    }
}

fn gamma_sum(marginals: &[DistributionSpec], gamma: f64) -> Result<f64> {
    let mut shape = 0.0;
    let mut rate = None;
    for m in marginals {
        let (a, r) = match *m {
            DistributionSpec::Exponential { rate } => (1.0, rate),
            DistributionSpec::Gamma { shape, rate } => (shape, rate),
            _ => return Err(Error::Unsupported("sum oracle needs Exponential/Gamma marginals".into())),
        };
        match rate {
            None => rate = Some(r),
            Some(r0) if r0 == r => {}
            Some(_) => return Err(Error::Unsupported("sum oracle needs a common rate".into())),
        }
        shape += a;
    }
    let rate = rate.expect("non-empty marginals");
    Ok(if gamma <= 0.0 { 0.0 } else { reg_lower_inc_gamma(shape, rate * gamma) })
}

/// `P[sum_j w_j N_j <= gamma]` by depth-first enumeration of count vectors; the last
/// positive-weight coordinate is summed in closed form through the Poisson CDF.
fn poisson_lattice(rates: &[f64], weights: &[f64], gamma: f64) -> Result<f64> {
    if gamma < 0.0 {
        return Ok(0.0);
    }
    let coords: Vec<(f64, f64)> = rates.iter().zip(weights).filter(|(_, w)| **w > 0.0).map(|(l, w)| (*l, *w)).collect();
    let mut visited = 0u64;
    let v = lattice_rec(&coords, gamma, &mut visited)?;
    Ok(v)
}

fn lattice_rec(coords: &[(f64, f64)], budget: f64, visited: &mut u64) -> Result<f64> {
    let (&(lambda, w), rest) = coords.split_first().expect("non-empty");
    let kmax = ((budget / w) * (1.0 + 1e-12)).floor() as i64;
    if rest.is_empty() {
        *visited += 1;
        return Ok(crate::dist::poisson_cdf_at(lambda, kmax));
    }
    let mut total = 0.0;
    let mut ln_pmf = -lambda;
    for k in 0..=kmax {
        if k > 0 {
            ln_pmf += lambda.ln() - (k as f64).ln();
        }
        *visited += 1;
        if *visited > MAX_LATTICE_POINTS {
            return Err(Error::Unsupported(format!("lattice enumeration exceeds {MAX_LATTICE_POINTS} points")));
        }
        total += ln_pmf.exp() * lattice_rec(rest, budget - k as f64 * w, visited)?;
    }
    Ok(total)
}

/// `P[X_1 <= gamma (X_2 + eta)] = E[F_1(gamma (X_2 + eta))]`, integrated over the
/// upper-tail exponent `g` of `X_2 = F_2^{-1}(1 - e^{-g})` with weight `e^{-g}`.
fn ratio_quadrature(num: &DistributionSpec, den: &DistributionSpec, eta: f64, gamma: f64) -> f64 {
    if gamma <= 0.0 {
        return 0.0;
    }
    let f = |g: f64| {
        let x2 = den.quantile_neg_log(g, Tail::Upper);
        num.cdf(gamma * (x2 + eta)) * (-g).exp()
    };
    integrate_adaptive(f, 0.0, 745.0, 1e-11)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One Gauss-Kronrod 7/15 panel: (integral, error estimate).
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive Gauss-Kronrod quadrature to a relative tolerance.
pub fn integrate_adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    let mut panels: Vec<(f64, f64, f64, f64)> = Vec::new();
    // seed with a geometric split so mass concentrated near `a` is resolved early
    let mut edges = vec![a];
    let mut w = (b - a) * 1e-6;
    while a + w < b {
        edges.push(a + w);
        w *= 4.0;
    }
    edges.push(b);
    for pair in edges.windows(2) {
        let (v, e) = gk15(&f, pair[0], pair[1]);
        panels.push((pair[0], pair[1], v, e));
    }
    for _ in 0..5000 {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if err <= rel_tol * total.abs() || err < 1e-300 {
            return total;
        }
        let (idx, _) = panels.iter().enumerate().max_by(|x, y| x.1 .3.total_cmp(&y.1 .3)).expect("non-empty");
        let (lo, hi, _, _) = panels.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }
    panels.iter().map(|p| p.2).sum()
}
