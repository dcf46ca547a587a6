//! Multivariate Gamma and Poisson processes simulated by independent stationary
//! increments, plus the seeded random streams that drive them.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::error::{invalid_param, Error, Result};

/// Slack allowed when an advance lands marginally past `t = 1`.
pub const TIME_SLACK: f64 = 1e-12;

/// Deterministic random stream with cheap, order-independent substreams.
///
/// `substream(i)` depends only on the stream's seed and `i`, never on how many values
/// have been drawn, so replications can be dispatched in any order.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn substream(&self, index: u64) -> Self {
        Self::new(splitmix64(self.seed ^ splitmix64(index ^ 0xA076_1D64_78BD_642F)))
    }

    /// Uniform draw in the open interval `(0, 1)`.
    #[inline]
    pub fn open_unit(&mut self) -> f64 {
        // 53 random bits, offset by half an ulp
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProcessKind {
    Gamma,
    Poisson,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathValues {
    /// Gamma levels `G_i(t)`.
    Gamma(Vec<f64>),
    /// Poisson counts `X_i(t)`.
    Poisson(Vec<u64>),
}

/// Time and coordinates of a monotone multivariate path.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessState {
    pub t: f64,
    pub values: PathValues,
}

impl ProcessState {
    pub fn zero_gamma(n: usize) -> Self {
        Self { t: 0.0, values: PathValues::Gamma(vec![0.0; n]) }
    }

    pub fn zero_poisson(n: usize) -> Self {
        Self { t: 0.0, values: PathValues::Poisson(vec![0; n]) }
    }

    pub fn kind(&self) -> ProcessKind {
        match self.values {
            PathValues::Gamma(_) => ProcessKind::Gamma,
            PathValues::Poisson(_) => ProcessKind::Poisson,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.values {
            PathValues::Gamma(v) => v.len(),
            PathValues::Poisson(v) => v.len(),
        }
    }
}

fn check_step(t: f64, dt: f64) -> Result<f64> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid_param(format!("time step must be > 0, got {dt}")));
    }
    let next = t + dt;
    if next > 1.0 + TIME_SLACK {
        return Err(invalid_param(format!("advance to t = {next} overshoots the horizon t = 1")));
    }
    Ok(next.min(1.0))
}

/// Advances a Gamma path by `dt`: each coordinate gains an independent `Gamma(dt, 1)`.
pub fn advance_gamma(state: &ProcessState, dt: f64, rng: &mut RngStream) -> Result<ProcessState> {
    let PathValues::Gamma(values) = &state.values else {
        return Err(invalid_param("advance_gamma needs a gamma-kind state"));
    };
    let t = check_step(state.t, dt)?;
    let inc = GammaIncrement::new(dt)?;
    let values = values.iter().map(|v| v + inc.sample(rng)).collect();
    Ok(ProcessState { t, values: PathValues::Gamma(values) })
}

/// Advances a Poisson path by `dt`: coordinate `i` gains an independent
/// `Poisson(rates[i] * dt)` count.
pub fn advance_poisson(state: &ProcessState, dt: f64, rates: &[f64], rng: &mut RngStream) -> Result<ProcessState> {
    let PathValues::Poisson(values) = &state.values else {
        return Err(invalid_param("advance_poisson needs a poisson-kind state"));
    };
    if rates.len() != values.len() {
        return Err(invalid_param(format!("expected {} rates, got {}", values.len(), rates.len())));
    }
    let t = check_step(state.t, dt)?;
    let inc = PoissonIncrement::new(rates, dt)?;
    let mut values = values.clone();
    inc.add_to(&mut values, rng);
    Ok(ProcessState { t, values: PathValues::Poisson(values) })
}

/// One `Gamma(shape, 1)` draw. Valid for shapes well below one.
pub fn gamma_variate(shape: f64, rng: &mut RngStream) -> Result<f64> {
    Ok(GammaIncrement::new(shape)?.sample(rng))
}

/// One `Poisson(mean)` draw.
pub fn poisson_variate(mean: f64, rng: &mut RngStream) -> Result<u64> {
    if !(mean.is_finite() && mean > 0.0) {
        return Err(invalid_param(format!("poisson mean must be > 0, got {mean}")));
    }
    let d = Poisson::new(mean).map_err(|e| invalid_param(e.to_string()))?;
    Ok(d.sample(rng) as u64)
}

/// Sampler for `Gamma(shape, 1)` increments of a fixed length.
#[derive(Debug, Clone, Copy)]
pub struct GammaIncrement {
    dist: Gamma<f64>,
}

impl GammaIncrement {
    pub fn new(shape: f64) -> Result<Self> {
        if !(shape.is_finite() && shape > 0.0) {
            return Err(invalid_param(format!("gamma shape must be > 0, got {shape}")));
        }
        let dist = Gamma::new(shape, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(Self { dist })
    }

    #[inline]
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        self.dist.sample(rng)
    }
}

/// Per-coordinate Poisson increment samplers for one step length.
#[derive(Debug, Clone)]
pub struct PoissonIncrement {
    dists: Vec<Poisson<f64>>,
}

impl PoissonIncrement {
    pub fn new(rates: &[f64], dt: f64) -> Result<Self> {
        let dists = rates
            .iter()
            .map(|&r| {
                if !(r.is_finite() && r > 0.0) {
                    return Err(invalid_param(format!("poisson rate must be > 0, got {r}")));
                }
                Poisson::new(r * dt).map_err(|e| invalid_param(e.to_string()))
            })
            .collect::<Result<_>>()?;
        Ok(Self { dists })
    }

    #[inline]
    pub fn add_to(&self, counts: &mut [u64], rng: &mut RngStream) {
        for (c, d) in counts.iter_mut().zip(&self.dists) {
            *c += d.sample(rng) as u64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{reg_lower_inc_gamma, reg_upper_inc_gamma};
    use crate::stats::ks_statistic;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn same_seed_same_draws() {
        let mut a = RngStream::new(7);
        let mut b = RngStream::new(7);
        let s = ProcessState::zero_gamma(3);
        let x = advance_gamma(&s, 0.4, &mut a).unwrap();
        let y = advance_gamma(&s, 0.4, &mut b).unwrap();
        assert_eq!(x, y);
        let sa = RngStream::new(7).substream(3);
        let sb = RngStream::new(7).substream(3);
        assert_eq!(sa.seed(), sb.seed());
        assert_ne!(RngStream::new(7).substream(4).seed(), sa.seed());
    }

    #[test]
    fn substream_ignores_parent_position() {
        let mut a = RngStream::new(11);
        let fresh = a.substream(5).next_u64();
        for _ in 0..10 {
            a.next_u64();
        }
        assert_eq!(a.substream(5).next_u64(), fresh);
    }

    #[test]
    fn gamma_path_marginal_at_one_is_unit_exponential() {
        let mut rng = RngStream::new(1);
        let n = 100_000;
        let mut xs = Vec::with_capacity(n);
        for _ in 0..n {
            let mut s = ProcessState::zero_gamma(1);
            for dt in [0.1, 0.25, 0.05, 0.6] {
                let next = advance_gamma(&s, dt, &mut rng).unwrap();
                let (PathValues::Gamma(a), PathValues::Gamma(b)) = (&s.values, &next.values) else { unreachable!() };
                assert!(b[0] >= a[0]);
                s = next;
            }
            assert!((s.t - 1.0).abs() < 1e-15);
            let PathValues::Gamma(v) = s.values else { unreachable!() };
            xs.push(v[0]);
        }
        let d = ks_statistic(&mut xs, |x| 1.0 - (-x).exp());
        assert!(d < 1.63 / (n as f64).sqrt(), "KS {d}");
    }

    #[test]
    fn two_steps_match_one_step_moments() {
        let mut rng = RngStream::new(2);
        let n = 100_000;
        let (mut two, mut one) = (Vec::new(), Vec::new());
        for _ in 0..n {
            let s = ProcessState::zero_gamma(2);
            let a = advance_gamma(&advance_gamma(&s, 0.3, &mut rng).unwrap(), 0.7, &mut rng).unwrap();
            let b = advance_gamma(&s, 1.0, &mut rng).unwrap();
            let (PathValues::Gamma(a), PathValues::Gamma(b)) = (a.values, b.values) else { unreachable!() };
            two.push(a[1]);
            one.push(b[1]);
        }
        for xs in [&two, &one] {
            let (m, v) = mean_var(xs);
            // mean 1 with SE 1/sqrt(n); variance 1 with SE sqrt(8/n) (Exp(1) kurtosis 9)
            assert!((m - 1.0).abs() < 3.0 / (n as f64).sqrt(), "mean {m}");
            assert!((v - 1.0).abs() < 3.0 * (8.0 / n as f64).sqrt(), "var {v}");
        }
    }

    #[test]
    fn successive_increments_uncorrelated() {
        let mut rng = RngStream::new(3);
        let n = 100_000;
        let (mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let s0 = ProcessState::zero_gamma(1);
            let s1 = advance_gamma(&s0, 0.2, &mut rng).unwrap();
            let s2 = advance_gamma(&s1, 0.3, &mut rng).unwrap();
            let (PathValues::Gamma(v1), PathValues::Gamma(v2)) = (&s1.values, &s2.values) else { unreachable!() };
            a.push(v1[0]);
            b.push(v2[0] - v1[0]);
        }
        let (ma, va) = mean_var(&a);
        let (mb, vb) = mean_var(&b);
        let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n as f64 - 1.0);
        let corr = cov / (va * vb).sqrt();
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr {corr}");
    }

    #[test]
    fn advance_rejects_bad_steps() {
        let mut rng = RngStream::new(0);
        let s = ProcessState::zero_gamma(2);
        assert!(advance_gamma(&s, 0.0, &mut rng).is_err());
        assert!(advance_gamma(&s, -0.1, &mut rng).is_err());
        assert!(advance_gamma(&s, 1.5, &mut rng).is_err());
        let p = ProcessState::zero_poisson(2);
        assert!(advance_poisson(&p, 0.5, &[1.0, 0.0], &mut rng).is_err());
        assert!(advance_poisson(&p, 0.0, &[1.0, 1.0], &mut rng).is_err());
        assert!(advance_poisson(&p, 0.5, &[1.0], &mut rng).is_err());
        assert!(advance_gamma(&p, 0.5, &mut rng).is_err());
    }

    #[test]
    fn advance_keeps_input_and_lands_on_one() {
        let mut rng = RngStream::new(0);
        let s = ProcessState { t: 0.7, values: PathValues::Gamma(vec![0.5, 0.2]) };
        let next = advance_gamma(&s, 0.3, &mut rng).unwrap();
        assert_eq!(next.t, 1.0);
        assert_eq!(s.values, PathValues::Gamma(vec![0.5, 0.2]));
    }

    #[test]
    fn poisson_path_marginal() {
        let mut rng = RngStream::new(4);
        let n = 100_000;
        let mut zeros = 0usize;
        for _ in 0..n {
            let s = ProcessState::zero_poisson(1);
            let s = advance_poisson(&s, 1.0, &[1.0], &mut rng).unwrap();
            let PathValues::Poisson(v) = s.values else { unreachable!() };
            zeros += (v[0] == 0) as usize;
        }
        let p = (-1.0f64).exp();
        let phat = zeros as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((phat - p).abs() < 3.0 * se, "{phat}");
    }

    #[test]
    fn poisson_half_steps_match_full_step() {
        let mut rng = RngStream::new(5);
        let n = 100_000;
        let bins = 11;
        let mut two = vec![0f64; bins];
        let mut one = vec![0f64; bins];
        for _ in 0..n {
            let s = ProcessState::zero_poisson(1);
            let h = advance_poisson(&s, 0.5, &[2.0], &mut rng).unwrap();
            let h2 = advance_poisson(&h, 0.5, &[2.0], &mut rng).unwrap();
            let f = advance_poisson(&s, 1.0, &[2.0], &mut rng).unwrap();
            let (PathValues::Poisson(a), PathValues::Poisson(b), PathValues::Poisson(c)) =
                (&h.values, &h2.values, &f.values)
            else {
                unreachable!()
            };
            assert!(b[0] >= a[0]);
            two[(b[0] as usize).min(bins - 1)] += 1.0;
            one[(c[0] as usize).min(bins - 1)] += 1.0;
        }
        // two-sample chi-square homogeneity over non-empty bins
        let mut chi2 = 0.0;
        let mut dof = 0usize;
        for k in 0..bins {
            let tot = two[k] + one[k];
            if tot > 0.0 {
                let e = tot / 2.0;
                chi2 += (two[k] - e).powi(2) / e + (one[k] - e).powi(2) / e;
                dof += 1;
            }
        }
        let dof = (dof - 1) as f64;
        let p_value = reg_upper_inc_gamma(dof / 2.0, chi2 / 2.0);
        assert!(p_value > 0.01, "chi2 {chi2} dof {dof} p {p_value}");
    }

    #[test]
    fn gamma_variate_moments() {
        let mut rng = RngStream::new(6);
        let n = 1_000_000;
        for (shape, tol_sd) in [(1.0, 4.0), (3.0, 4.0)] {
            let xs: Vec<f64> = (0..n).map(|_| gamma_variate(shape, &mut rng).unwrap()).collect();
            let (m, v) = mean_var(&xs);
            let se_m = (shape / n as f64).sqrt();
            // Var of sample variance: (mu4 - sigma^4)/n with mu4 = 3k(k+2) for Gamma(k)
            let se_v = ((3.0 * shape * (shape + 2.0) - shape * shape) / n as f64).sqrt();
            assert!((m - shape).abs() < tol_sd * se_m, "shape {shape}: mean {m}");
            assert!((v - shape).abs() < tol_sd * se_v, "shape {shape}: var {v}");
        }
    }

    #[test]
    fn gamma_variate_small_shape_lower_tail() {
        let mut rng = RngStream::new(8);
        let n = 1_000_000;
        let shape = 0.05;
        let hits = (0..n).filter(|_| gamma_variate(shape, &mut rng).unwrap() < 1e-6).count();
        let p = reg_lower_inc_gamma(shape, 1e-6);
        let phat = hits as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((phat - p).abs() < 3.0 * se, "{phat} vs {p}");
    }

    #[test]
    fn gamma_variate_tiny_shape_is_nonnegative_and_finite() {
        let mut rng = RngStream::new(9);
        let mut total = 0.0;
        let n = 200_000;
        for _ in 0..n {
            let x = gamma_variate(1e-4, &mut rng).unwrap();
            assert!(x >= 0.0 && x.is_finite());
            total += x;
        }
        // mean 1e-4, sd of the mean sqrt(1e-4 / n)
        assert!((total / n as f64 - 1e-4).abs() < 4.0 * (1e-4 / n as f64).sqrt());
        assert!(gamma_variate(0.0, &mut rng).is_err());
        assert!(gamma_variate(-1.0, &mut rng).is_err());
    }
}
