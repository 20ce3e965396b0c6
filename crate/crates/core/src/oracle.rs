//! Independent verifiers.
//!
//! Nothing in here shares an evaluation path with the code it checks: the
//! path-tree recursion multiplies spot prices along each path instead of
//! indexing a recombining level, Monte Carlo estimates the Gaussian constants
//! empirically, and the Black–Scholes reference uses libm's `erfc` rather
//! than [`crate::normal`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::closedform::OptionKind;
use crate::error::{Error, Result};
use crate::lattice::BinomialTree;
use crate::riskcore::{self, DiscreteDistribution, RiskSpec, Side};

/// Reproducible random stream backed by ChaCha8.
#[derive(Debug, Clone)]
pub struct SeededSampler {
    seed: u64,
    rng: ChaCha8Rng,
}

impl SeededSampler {
    pub const ALGORITHM: &'static str = "ChaCha8";

    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent substream `stream` of the same seed.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

/// Largest tree depth accepted by [`enumerate_nested`].
pub const MAX_ENUMERATION_DEPTH: usize = 24;

/// Nested risk value by literal recursion over all `2^n` paths.
pub fn enumerate_nested(
    tree: &BinomialTree,
    measure: &RiskSpec,
    payoff: impl Fn(f64) -> f64,
    side: Side,
) -> Result<f64> {
    let n = tree.steps();
    if n > MAX_ENUMERATION_DEPTH {
        return Err(Error::Limit(format!(
            "path enumeration refuses n = {n} > {MAX_ENUMERATION_DEPTH} (2^n paths)"
        )));
    }
    let step = measure.for_step(tree.dt())?;
    let ctx = PathTree {
        up: tree.up(),
        down: tree.down(),
        p: tree.p(),
        disc: (-tree.rate() * tree.dt()).exp(),
        n,
        measure: step,
        side,
    };
    ctx.descend(0, tree.s0(), &payoff)
}

struct PathTree {
    up: f64,
    down: f64,
    p: f64,
    disc: f64,
    n: usize,
    measure: RiskSpec,
    side: Side,
}

impl PathTree {
    fn descend(&self, depth: usize, spot: f64, payoff: &impl Fn(f64) -> f64) -> Result<f64> {
        if depth == self.n {
            let v = payoff(spot);
            if !v.is_finite() {
                return Err(Error::Evaluation(format!("payoff not finite at S = {spot}")));
            }
            return Ok(v);
        }
        let hi = self.descend(depth + 1, spot * self.up, payoff)?;
        let lo = self.descend(depth + 1, spot * self.down, payoff)?;
        let dist = DiscreteDistribution::two_point(hi, lo, self.p)?;
        Ok(self.disc * riskcore::side_value(&self.measure, &dist, self.side))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

const MC_BATCHES: usize = 50;

/// Monte Carlo estimate of the nested semi-deviation of `W_T`.
///
/// Each of the `n` stages draws `samples` Gaussian increments of variance
/// `dt`, measures the empirical `SD_{p, beta sqrt(dt)}` of the increment
/// (translation equivariance moves the conditioning value `W_{t_i}` outside)
/// and the stage values are summed. The standard error comes from 50 batch
/// replicates.
pub fn mc_nested_wiener(
    horizon: f64,
    n: usize,
    order: f64,
    beta: f64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if samples < 10_000 {
        return Err(Error::param("samples", samples as f64, "need at least 10^4 samples"));
    }
    if n == 0 || !(horizon > 0.0) {
        return Err(Error::Validation("need n >= 1 stages and T > 0".into()));
    }
    if !(order >= 1.0) || !(beta >= 0.0) {
        return Err(Error::Domain("need p >= 1 and beta >= 0".into()));
    }
    let dt = horizon / n as f64;
    let level = beta * dt.sqrt();
    let per_batch = samples / MC_BATCHES;
    let mut rng = SeededSampler::new(seed);
    let mut totals = vec![0.0; MC_BATCHES];
    let mut buf = vec![0.0; per_batch];
    for _stage in 0..n {
        for total in totals.iter_mut() {
            for x in buf.iter_mut() {
                *x = dt.sqrt() * rng.normal();
            }
            *total += empirical_semi_deviation(&buf, order, level);
        }
    }
    let k = MC_BATCHES as f64;
    let mean = totals.iter().sum::<f64>() / k;
    let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok(McEstimate {
        estimate: mean,
        stderr: (var / k).sqrt(),
    })
}

fn empirical_semi_deviation(xs: &[f64], order: f64, level: f64) -> f64 {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let upper = xs.iter().map(|x| (x - mean).max(0.0).powf(order)).sum::<f64>() / m;
    mean + level * upper.powf(1.0 / order)
}

fn phi_ref(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Textbook Black–Scholes with continuous dividend yield `q`.
pub fn bs_reference(x: f64, k: f64, r: f64, q: f64, sigma: f64, tau: f64, kind: OptionKind) -> f64 {
    if tau <= 0.0 {
        return match kind {
            OptionKind::Call => (x - k).max(0.0),
            OptionKind::Put => (k - x).max(0.0),
        };
    }
    let sd = sigma * tau.sqrt();
    let d1 = (libm::log(x / k) + (r - q) * tau) / sd + 0.5 * sd;
    let d2 = d1 - sd;
    let a = x * libm::exp(-q * tau);
    let b = k * libm::exp(-r * tau);
    match kind {
        OptionKind::Call => a * phi_ref(d1) - b * phi_ref(d2),
        OptionKind::Put => b * phi_ref(-d2) - a * phi_ref(-d1),
    }
}

/// American option on a CRR lattice with dividend yield `q`.
///
/// Used as the reference for the free-boundary solver: a risk-averse
/// American value equals the classical one with the side's risk dividend.
#[allow(clippy::too_many_arguments)]
pub fn crr_american(x: f64, k: f64, r: f64, q: f64, sigma: f64, tau: f64, kind: OptionKind, steps: usize) -> f64 {
    let dt = tau / steps as f64;
    let u = libm::exp(sigma * dt.sqrt());
    let d = 1.0 / u;
    let growth = libm::exp((r - q) * dt);
    let p = (growth - d) / (u - d);
    let disc = libm::exp(-r * dt);
    let intrinsic = |s: f64| match kind {
        OptionKind::Call => (s - k).max(0.0),
        OptionKind::Put => (k - s).max(0.0),
    };
    // spot at node (level, ups) = x u^(2 ups - level), built by multiplication
    let mut spots: Vec<f64> = Vec::with_capacity(steps + 1);
    let mut s = x * d.powi(steps as i32);
    for _ in 0..=steps {
        spots.push(s);
        s *= u * u;
    }
    let mut v: Vec<f64> = spots.iter().map(|&s| intrinsic(s)).collect();
    for level in (0..steps).rev() {
        for j in 0..=level {
            spots[j] *= u;
            let cont = disc * (p * v[j + 1] + (1.0 - p) * v[j]);
            v[j] = cont.max(intrinsic(spots[j]));
        }
    }
    v[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_tree;

    #[test]
    fn sampler_is_reproducible() {
        let a: Vec<f64> = {
            let mut s = SeededSampler::new(42);
            (0..8).map(|_| s.normal()).collect()
        };
        let b: Vec<f64> = {
            let mut s = SeededSampler::new(42);
            (0..8).map(|_| s.normal()).collect()
        };
        assert_eq!(a, b);
        let mut c = SeededSampler::substream(42, 1);
        assert_ne!(a[0], c.normal());
    }

    #[test]
    fn enumeration_refuses_deep_trees() {
        let tree = build_tree(1.0, 0.03, 0.15, 1.0, 25).unwrap();
        let r = enumerate_nested(&tree, &RiskSpec::expectation(), |s| s, Side::Bid);
        assert!(matches!(r, Err(Error::Limit(_))));
    }

    #[test]
    fn enumeration_with_expectation_is_discounted_path_average() {
        let tree = build_tree(1.0, 0.03, 0.15, 1.0, 10).unwrap();
        let k = 1.05;
        let got = enumerate_nested(&tree, &RiskSpec::expectation(), |s| (s - k).max(0.0), Side::Ask).unwrap();
        // sum over k up-moves with binomial weights
        let n = 10;
        let mut want = 0.0;
        let mut binom = 1.0;
        for j in 0..=n {
            if j > 0 {
                binom *= (n - j + 1) as f64 / j as f64;
            }
            let s = tree.up().powi(j) * tree.down().powi(n - j);
            want += binom * tree.p().powi(j) * (1.0 - tree.p()).powi(n - j) * (s - k).max(0.0);
        }
        want *= (-0.03_f64).exp();
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn single_step_matches_riskcore() {
        let tree = build_tree(1.0, 0.0, 0.2, 0.5, 1).unwrap();
        let m = RiskSpec::semi_deviation(2.0, 0.3).unwrap();
        let dist = DiscreteDistribution::two_point(tree.up(), tree.down(), tree.p()).unwrap();
        let got = enumerate_nested(&tree, &m, |s| s, Side::Bid).unwrap();
        assert!((got - riskcore::bid_value(&m, &dist)).abs() < 1e-15);
    }

    #[test]
    fn reference_put_call_parity() {
        let (x, k, r, q, s, t) = (1.0, 1.2, 0.03, 0.02, 0.15, 1.0);
        let c = bs_reference(x, k, r, q, s, t, OptionKind::Call);
        let p = bs_reference(x, k, r, q, s, t, OptionKind::Put);
        assert!((c - p - (x * (-q * t).exp() - k * (-r * t).exp())).abs() < 1e-14);
    }

    #[test]
    fn american_lattice_dominates_european() {
        let am = crr_american(1.0, 1.0, 0.03, 0.0, 0.15, 1.0, OptionKind::Put, 2000);
        let eu = bs_reference(1.0, 1.0, 0.03, 0.0, 0.15, 1.0, OptionKind::Put);
        assert!(am > eu);
        // no early exercise for a call without dividends
        let amc = crr_american(1.0, 1.0, 0.03, 0.0, 0.15, 1.0, OptionKind::Call, 2000);
        let euc = bs_reference(1.0, 1.0, 0.03, 0.0, 0.15, 1.0, OptionKind::Call);
        assert!((amc - euc).abs() < 1e-3);
    }

    #[test]
    fn mc_requires_enough_samples() {
        assert!(mc_nested_wiener(1.0, 4, 1.0, 0.5, 100, 1).is_err());
    }
}
