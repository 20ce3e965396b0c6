//! Coherent risk measures on finite distributions.
//!
//! A [`RiskSpec`] names one of the implemented law-invariant coherent
//! measures; [`evaluate`] returns the seller's (ask) value `rho(Y)` and
//! [`bid_value`] the buyer's value `-rho(-Y)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::SeededSampler;
use crate::quadrature;

const PROB_SUM_TOL: f64 = 1e-12;

/// Which side of the market a value is quoted for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Buyer's price, `-rho(-Y)`.
    Bid,
    /// Seller's price, `rho(Y)`.
    Ask,
}

impl Side {
    /// `+1` for ask, `-1` for bid: the sign in front of the nonlinear risk term.
    pub fn sign(self) -> f64 {
        match self {
            Side::Bid => -1.0,
            Side::Ask => 1.0,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Bid => "bid",
            Side::Ask => "ask",
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bid" => Ok(Side::Bid),
            "ask" => Ok(Side::Ask),
            other => Err(Error::Validation(format!("unknown side '{other}' (expected bid|ask)"))),
        }
    }
}

/// A random variable with finitely many outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    outcomes: Vec<f64>,
    probabilities: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(outcomes: Vec<f64>, probabilities: Vec<f64>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::Validation("distribution has no outcomes".into()));
        }
        if outcomes.len() != probabilities.len() {
            return Err(Error::Validation(format!(
                "{} outcomes but {} probabilities",
                outcomes.len(),
                probabilities.len()
            )));
        }
        if outcomes.iter().any(|y| !y.is_finite()) {
            return Err(Error::Validation("outcomes must be finite".into()));
        }
        if probabilities.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::Validation("probabilities must be nonnegative".into()));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::Validation(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self {
            outcomes,
            probabilities,
        })
    }

    /// `up` with probability `p`, `down` with probability `1 - p`.
    pub fn two_point(up: f64, down: f64, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::param("p", p, "probability must lie in [0, 1]"));
        }
        Self::new(vec![up, down], vec![p, 1.0 - p])
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.outcomes, &self.probabilities)
    }

    /// Applies `f` outcome-wise on the same probability space.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            outcomes: self.outcomes.iter().map(|&y| f(y)).collect(),
            probabilities: self.probabilities.clone(),
        }
    }

    /// Outcome-wise sum of two variables defined on the same atoms.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.probabilities != other.probabilities {
            return Err(Error::Validation(
                "variables are not defined on a common sample space".into(),
            ));
        }
        Ok(Self {
            outcomes: self.outcomes.iter().zip(&other.outcomes).map(|(a, b)| a + b).collect(),
            probabilities: self.probabilities.clone(),
        })
    }
}

/// The coherent measure family and its level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RiskKind {
    Expectation,
    /// `E Y + level * ||(Y - E Y)_+||_order`.
    MeanSemiDeviation {
        order: f64,
        level: f64,
    },
    /// Upper-tail average value-at-risk at tail probability `level`.
    AVaR {
        level: f64,
    },
}

/// How a measure's level is adapted to the length of a time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelScaling {
    /// Use the level as given on every step.
    Fixed,
    /// Semi-deviation levels are multiplied by `sqrt(dt)`.
    SqrtDt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskSpec {
    pub kind: RiskKind,
    pub scaling: LevelScaling,
}

impl RiskSpec {
    pub fn expectation() -> Self {
        Self {
            kind: RiskKind::Expectation,
            scaling: LevelScaling::Fixed,
        }
    }

    pub fn semi_deviation(order: f64, level: f64) -> Result<Self> {
        check_semi_deviation(order, level)?;
        Ok(Self {
            kind: RiskKind::MeanSemiDeviation { order, level },
            scaling: LevelScaling::Fixed,
        })
    }

    pub fn avar(level: f64) -> Result<Self> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::param("alpha", level, "AVaR level must lie in (0, 1)"));
        }
        Ok(Self {
            kind: RiskKind::AVaR { level },
            scaling: LevelScaling::Fixed,
        })
    }

    pub fn with_scaling(mut self, scaling: LevelScaling) -> Self {
        self.scaling = scaling;
        self
    }

    /// The one-step measure used on a step of length `dt`.
    ///
    /// Only semi-deviation levels are rescaled; AVaR has no divisibility
    /// constant and keeps its level.
    pub fn for_step(&self, dt: f64) -> Result<RiskSpec> {
        match (self.kind, self.scaling) {
            (RiskKind::MeanSemiDeviation { order, level }, LevelScaling::SqrtDt) => {
                let scaled = level * dt.sqrt();
                if scaled > 1.0 {
                    return Err(Error::param(
                        "beta",
                        level,
                        format!("per-step level beta*sqrt(dt) = {scaled} exceeds 1"),
                    ));
                }
                Ok(RiskSpec {
                    kind: RiskKind::MeanSemiDeviation { order, level: scaled },
                    scaling: LevelScaling::Fixed,
                })
            }
            _ => Ok(RiskSpec {
                kind: self.kind,
                scaling: LevelScaling::Fixed,
            }),
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            RiskKind::Expectation => "expectation".into(),
            RiskKind::MeanSemiDeviation { order, level } => format!("SD(p={order}, beta={level})"),
            RiskKind::AVaR { level } => format!("AVaR(alpha={level})"),
        }
    }
}

fn check_semi_deviation(order: f64, level: f64) -> Result<()> {
    if !(order >= 1.0) || !order.is_finite() {
        return Err(Error::param("p", order, "semi-deviation order must be >= 1"));
    }
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::param("beta", level, "semi-deviation level must lie in [0, 1]"));
    }
    Ok(())
}

fn mean(outcomes: &[f64], probabilities: &[f64]) -> f64 {
    outcomes.iter().zip(probabilities).map(|(y, p)| y * p).sum()
}

/// `rho(Y)` of the measure applied to `dist`.
pub fn evaluate(measure: &RiskSpec, dist: &DiscreteDistribution) -> f64 {
    evaluate_kind(&measure.kind, &dist.outcomes, &dist.probabilities)
}

/// `-rho(-Y)`.
pub fn bid_value(measure: &RiskSpec, dist: &DiscreteDistribution) -> f64 {
    -evaluate(measure, &dist.map(|y| -y))
}

/// Value for the requested side.
pub fn side_value(measure: &RiskSpec, dist: &DiscreteDistribution, side: Side) -> f64 {
    match side {
        Side::Ask => evaluate(measure, dist),
        Side::Bid => bid_value(measure, dist),
    }
}

pub(crate) fn evaluate_kind(kind: &RiskKind, outcomes: &[f64], probabilities: &[f64]) -> f64 {
    match *kind {
        RiskKind::Expectation => mean(outcomes, probabilities),
        RiskKind::MeanSemiDeviation { order, level } => {
            let m = mean(outcomes, probabilities);
            if level == 0.0 {
                return m;
            }
            let upper: f64 = outcomes
                .iter()
                .zip(probabilities)
                .map(|(y, p)| {
                    let excess = (y - m).max(0.0);
                    if order == 1.0 {
                        p * excess
                    } else {
                        p * excess.powf(order)
                    }
                })
                .sum();
            let norm = if order == 1.0 { upper } else { upper.powf(1.0 / order) };
            m + level * norm
        }
        RiskKind::AVaR { level } => {
            let mut idx: Vec<usize> = (0..outcomes.len()).collect();
            idx.sort_by(|&a, &b| outcomes[b].total_cmp(&outcomes[a]));
            avar_sorted(level, idx.iter().map(|&i| (outcomes[i], probabilities[i])))
        }
    }
}

// Atoms in descending order of outcome; the tail mass `level` is filled from
// the top with a fractional weight on the atom straddling the quantile.
fn avar_sorted(level: f64, atoms: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut remaining = level;
    let mut acc = 0.0;
    for (y, p) in atoms {
        if remaining <= 0.0 {
            break;
        }
        let w = p.min(remaining);
        acc += w * y;
        remaining -= w;
    }
    acc / level
}

/// `rho` of the two-point variable `up` w.p. `p`, `down` w.p. `1 - p`.
///
/// Allocation-free path used by the lattice backward induction.
#[inline]
pub(crate) fn two_point(kind: &RiskKind, up: f64, down: f64, p: f64) -> f64 {
    let q = 1.0 - p;
    let m = p * up + q * down;
    match *kind {
        RiskKind::Expectation => m,
        RiskKind::MeanSemiDeviation { order, level } => {
            if level == 0.0 {
                return m;
            }
            // only the atom above the mean contributes
            let (excess, weight) = if up >= down { (up - m, p) } else { (down - m, q) };
            let excess = excess.max(0.0);
            let norm = if order == 1.0 {
                weight * excess
            } else {
                weight.powf(1.0 / order) * excess
            };
            m + level * norm
        }
        RiskKind::AVaR { level } => {
            let (hi, p_hi, lo, p_lo) = if up >= down { (up, p, down, q) } else { (down, q, up, p) };
            avar_sorted(level, [(hi, p_hi), (lo, p_lo)].into_iter())
        }
    }
}

/// Per-unit-time risk of a standard Gaussian increment for the
/// semi-deviation family scaled with `beta * sqrt(dt)`.
pub fn s_rho(order: f64, beta: f64) -> Result<f64> {
    if !(order >= 1.0) || !order.is_finite() {
        return Err(Error::Domain(format!("order p = {order} must be >= 1")));
    }
    if !(beta >= 0.0) {
        return Err(Error::Domain(format!("level beta = {beta} must be >= 0")));
    }
    let gamma = libm::tgamma(0.5 * (order + 1.0));
    Ok(beta * (2.0 * std::f64::consts::PI).powf(-0.5 / order) * 2f64.powf(0.5 - 0.5 / order) * gamma.powf(1.0 / order))
}

const HERMITE_NODES: usize = 200;
const HALF_LINE_NODES: usize = 40;
const HALF_LINE_PANELS: usize = 16;
const HALF_LINE_SPAN: f64 = 40.0;

/// `SD_{p, beta*sqrt(dt)}(sqrt(dt) W) / dt` for each `dt`, by quadrature.
///
/// The mean comes from a 200-node Gauss–Hermite rule; the semi-deviation
/// integral has a kink at the mean and is integrated on the half line above
/// it with a graded composite Gauss–Legendre rule instead.
pub fn s_rho_limit_probe(order: f64, beta: f64, dts: &[f64]) -> Result<Vec<f64>> {
    // domain checks
    s_rho(order, beta)?;
    if let Some(bad) = dts.iter().find(|dt| !(**dt > 0.0)) {
        return Err(Error::Domain(format!("time step {bad} must be positive")));
    }
    let hermite = quadrature::gauss_hermite(HERMITE_NODES);
    let legendre = quadrature::gauss_legendre(HALF_LINE_NODES);
    Ok(dts
        .iter()
        .map(|&dt| {
            let sd = dt.sqrt();
            let m = quadrature::gaussian_expectation(|z| sd * z, &hermite);
            // E[(X - m)_+^p] with X = sd * Z, substituting X = m + sd * u
            let shift = m / sd;
            let density = |u: f64| crate::normal::pdf(shift + u);
            let integrand = |u: f64| u.powf(order) * density(u);
            // geometric panels refine toward the kink at u = 0
            let mut upper = 0.0;
            let mut hi = HALF_LINE_SPAN;
            for _ in 0..HALF_LINE_PANELS {
                let lo = hi * 0.25;
                upper += quadrature::integrate(integrand, lo, hi, &legendre, 1);
                hi = lo;
            }
            upper += quadrature::integrate(integrand, 0.0, hi, &legendre, 1);
            let norm = sd * upper.powf(1.0 / order);
            (m + beta * sd * norm) / dt
        })
        .collect())
}

/// The five axioms checked by [`axiom_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axiom {
    Monotonicity,
    TranslationEquivariance,
    Subadditivity,
    PositiveHomogeneity,
    LawInvariance,
}

impl Axiom {
    pub const ALL: [Axiom; 5] = [
        Axiom::Monotonicity,
        Axiom::TranslationEquivariance,
        Axiom::Subadditivity,
        Axiom::PositiveHomogeneity,
        Axiom::LawInvariance,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Axiom::Monotonicity => "A1",
            Axiom::TranslationEquivariance => "A2",
            Axiom::Subadditivity => "A3",
            Axiom::PositiveHomogeneity => "A4",
            Axiom::LawInvariance => "A5",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub worst_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub measure: String,
    pub trials: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub axioms: Vec<CheckOutcome>,
    /// `-rho(-Y) <= rho(Y)` on the same corpus.
    pub bid_le_ask: CheckOutcome,
}

impl AxiomReport {
    pub fn all_passed(&self) -> bool {
        self.axioms.iter().all(|a| a.passed) && self.bid_le_ask.passed
    }
}

/// Absolute tolerance used for axiom checks.
pub const AXIOM_TOLERANCE: f64 = 1e-10;

/// Random discrete distribution: support 2..=20, outcomes uniform on
/// `[-10, 10]`, probabilities uniform on the simplex.
pub fn random_distribution(rng: &mut SeededSampler) -> DiscreteDistribution {
    let n = 2 + rng.index(19);
    random_distribution_with_support(rng, n)
}

fn random_distribution_with_support(rng: &mut SeededSampler, n: usize) -> DiscreteDistribution {
    let outcomes: Vec<f64> = (0..n).map(|_| rng.uniform_in(-10.0, 10.0)).collect();
    let probabilities = random_simplex(rng, n);
    DiscreteDistribution {
        outcomes,
        probabilities,
    }
}

fn random_simplex(rng: &mut SeededSampler, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.uniform()).ln()).collect();
    let total: f64 = raw.iter().sum();
    let mut probs: Vec<f64> = raw.iter().map(|x| x / total).collect();
    // put the rounding residue on the largest atom so the sum is 1 to the ulp
    let residue = 1.0 - probs.iter().sum::<f64>();
    if let Some(max) = probs.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *max += residue;
    }
    probs
}

/// Checks axioms A1–A5 and bid <= ask on `trials` seeded random cases.
pub fn axiom_report(measure: &RiskSpec, trials: usize, seed: u64) -> Result<AxiomReport> {
    if trials == 0 {
        return Err(Error::Validation("axiom report needs at least one trial".into()));
    }
    let mut rng = SeededSampler::new(seed);
    let mut worst = [0.0_f64; 5];
    let mut worst_bid_ask = 0.0_f64;
    let rho = |d: &DiscreteDistribution| evaluate(measure, d);

    for _ in 0..trials {
        let y = random_distribution(&mut rng);
        let base = rho(&y);

        // A1: Y <= Y' atom-wise
        let bumped = DiscreteDistribution {
            outcomes: y
                .outcomes
                .iter()
                .map(|v| {
                    v + if rng.uniform() < 0.3 {
                        0.0
                    } else {
                        rng.uniform_in(0.0, 5.0)
                    }
                })
                .collect(),
            probabilities: y.probabilities.clone(),
        };
        worst[0] = worst[0].max(base - rho(&bumped));

        // A2
        let c = rng.uniform_in(-20.0, 20.0);
        worst[1] = worst[1].max((rho(&y.map(|v| v + c)) - base - c).abs());

        // A3: Y' on the same atoms
        let other = DiscreteDistribution {
            outcomes: (0..y.len()).map(|_| rng.uniform_in(-10.0, 10.0)).collect(),
            probabilities: y.probabilities.clone(),
        };
        let sum = y.add(&other)?;
        worst[2] = worst[2].max(rho(&sum) - base - rho(&other));

        // A4
        for lambda in [0.0, 0.5, 2.0, 10.0, rng.uniform_in(0.0, 10.0)] {
            let scaled = rho(&y.map(|v| lambda * v));
            worst[3] = worst[3].max((scaled - lambda * base).abs() / (1.0 + base.abs()));
        }

        // A5: permuted atoms and a split atom have the same law
        let mut order: Vec<usize> = (0..y.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.index(i + 1));
        }
        let permuted = DiscreteDistribution {
            outcomes: order.iter().map(|&i| y.outcomes[i]).collect(),
            probabilities: order.iter().map(|&i| y.probabilities[i]).collect(),
        };
        let split_at = rng.index(y.len());
        let mut split = y.clone();
        let half = split.probabilities[split_at] * 0.5;
        split.probabilities[split_at] = half;
        split.outcomes.push(y.outcomes[split_at]);
        split.probabilities.push(half);
        worst[4] = worst[4]
            .max((rho(&permuted) - base).abs())
            .max((rho(&split) - base).abs());

        worst_bid_ask = worst_bid_ask.max(bid_value(measure, &y) - base);
    }

    let axioms = Axiom::ALL
        .iter()
        .zip(worst)
        .map(|(axiom, w)| CheckOutcome {
            name: format!("{} {:?}", axiom.code(), axiom),
            passed: w <= AXIOM_TOLERANCE,
            worst_violation: w.max(0.0),
        })
        .collect();
    Ok(AxiomReport {
        measure: measure.label(),
        trials,
        seed,
        tolerance: AXIOM_TOLERANCE,
        axioms,
        bid_le_ask: CheckOutcome {
            name: "bid <= ask".into(),
            passed: worst_bid_ask <= AXIOM_TOLERANCE,
            worst_violation: worst_bid_ask.max(0.0),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn coin() -> DiscreteDistribution {
        DiscreteDistribution::new(vec![2.0, 1.0], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn rejects_bad_distributions() {
        assert!(DiscreteDistribution::new(vec![1.0], vec![0.9]).is_err());
        assert!(DiscreteDistribution::new(vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(DiscreteDistribution::new(vec![], vec![]).is_err());
        assert!(DiscreteDistribution::new(vec![1.0, 2.0], vec![1.5, -0.5]).is_err());
        assert!(DiscreteDistribution::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn rejects_bad_levels() {
        assert!(RiskSpec::semi_deviation(0.5, 0.1).is_err());
        assert!(RiskSpec::semi_deviation(1.0, 1.1).is_err());
        assert!(RiskSpec::avar(0.0).is_err());
        assert!(RiskSpec::avar(1.0).is_err());
        assert!(s_rho(0.9, 1.0).is_err());
    }

    #[test]
    fn semi_deviation_on_a_coin() {
        // E = 1.5, E(Y - E)_+ = 0.25
        let sd = RiskSpec::semi_deviation(1.0, 0.2).unwrap();
        assert!((evaluate(&sd, &coin()) - 1.55).abs() < 1e-15);
        assert!((bid_value(&sd, &coin()) - 1.45).abs() < 1e-15);
    }

    #[test]
    fn zero_level_is_expectation() {
        let d = DiscreteDistribution::new(vec![3.0, -1.0, 7.5], vec![0.2, 0.5, 0.3]).unwrap();
        let sd = RiskSpec::semi_deviation(2.0, 0.0).unwrap();
        assert_eq!(evaluate(&sd, &d), d.mean());
        assert_eq!(evaluate(&RiskSpec::expectation(), &d), d.mean());
    }

    #[test]
    fn avar_interpolates_at_the_quantile() {
        // upper 30% tail: 0.2 at 10, 0.1 of the 0.5 atom at 4
        let d = DiscreteDistribution::new(vec![10.0, 4.0, -2.0], vec![0.2, 0.5, 0.3]).unwrap();
        let v = evaluate(&RiskSpec::avar(0.3).unwrap(), &d);
        assert!((v - (0.2 * 10.0 + 0.1 * 4.0) / 0.3).abs() < 1e-14);
        let near_one = evaluate(&RiskSpec::avar(1.0 - 1e-12).unwrap(), &d);
        assert!((near_one - d.mean()).abs() < 1e-10);
    }

    #[test]
    fn reweighted_probability_identity() {
        // -SD_{1,b}(-S) equals the expectation under p(1 - b(1 - p))
        let (s0, sigma, dt, r) = (1.0_f64, 0.15_f64, 0.01_f64, 0.03_f64);
        let up = (sigma * dt.sqrt()).exp();
        let down = 1.0 / up;
        let p = ((r * dt).exp() - down) / (up - down);
        for &beta in &[0.0, 0.05, 0.3, 1.0] {
            let d = DiscreteDistribution::two_point(s0 * up, s0 * down, p).unwrap();
            let sd = RiskSpec::semi_deviation(1.0, beta).unwrap();
            let pt = p * (1.0 - beta * (1.0 - p));
            let want = pt * s0 * up + (1.0 - pt) * s0 * down;
            assert!((bid_value(&sd, &d) - want).abs() < 1e-14, "beta={beta}");
        }
    }

    #[test]
    fn s_rho_constants() {
        let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        for &beta in &[0.0, 0.25, 1.0, 3.0] {
            assert!((s_rho(1.0, beta).unwrap() - beta * inv_sqrt_2pi).abs() < 1e-15);
        }
        assert!((s_rho(2.0, 1.0).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(s_rho(3.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn probe_is_scale_invariant_for_semi_deviation() {
        let dts = [1.0, 0.1, 0.01, 1e-4];
        for &(p, beta) in &[(1.0, 1.0), (2.0, 1.0), (1.5, 0.4), (3.0, 0.7)] {
            let want = s_rho(p, beta).unwrap();
            for v in s_rho_limit_probe(p, beta, &dts).unwrap() {
                assert!((v - want).abs() < 1e-10, "p={p} beta={beta}: {v} vs {want}");
            }
        }
        assert!(s_rho_limit_probe(1.0, 0.0, &[0.5]).unwrap()[0].abs() < 1e-13);
        assert!(s_rho_limit_probe(1.0, 1.0, &[0.0]).is_err());
    }

    #[test]
    fn step_scaling() {
        let sd = RiskSpec::semi_deviation(1.0, 0.5)
            .unwrap()
            .with_scaling(LevelScaling::SqrtDt);
        match sd.for_step(0.04).unwrap().kind {
            RiskKind::MeanSemiDeviation { level, .. } => assert!((level - 0.1).abs() < 1e-15),
            _ => unreachable!(),
        }
        let av = RiskSpec::avar(0.1).unwrap().with_scaling(LevelScaling::SqrtDt);
        assert_eq!(av.for_step(0.04).unwrap().kind, av.kind);
        assert!(RiskSpec::semi_deviation(1.0, 1.0)
            .unwrap()
            .with_scaling(LevelScaling::SqrtDt)
            .for_step(4.0)
            .is_err());
    }

    #[test]
    fn axiom_reports_pass_for_coherent_measures() {
        for m in [RiskSpec::expectation(), RiskSpec::semi_deviation(1.0, 0.5).unwrap()] {
            let rep = axiom_report(&m, 200, 11).unwrap();
            assert!(rep.all_passed(), "{rep:?}");
        }
        assert!(axiom_report(&RiskSpec::expectation(), 0, 1).is_err());
    }

    #[test]
    fn translation_by_constant() {
        let sd = RiskSpec::semi_deviation(1.0, 0.5).unwrap();
        let d = DiscreteDistribution::new(vec![0.3, -1.2, 4.4, 2.0], vec![0.1, 0.4, 0.3, 0.2]).unwrap();
        let shifted = evaluate(&sd, &d.map(|y| y + 3.7));
        assert!((shifted - evaluate(&sd, &d) - 3.7).abs() < 1e-12);
    }

    fn kinds() -> impl Strategy<Value = RiskKind> {
        prop_oneof![
            Just(RiskKind::Expectation),
            (1.0..4.0f64, 0.0..1.0f64).prop_map(|(order, level)| RiskKind::MeanSemiDeviation { order, level }),
            (0.01..0.99f64).prop_map(|level| RiskKind::AVaR { level }),
        ]
    }

    proptest! {
        #[test]
        fn two_point_fast_path_matches_general(kind in kinds(), up in -50.0..50.0f64,
                                               down in -50.0..50.0f64, p in 0.0..1.0f64) {
            let general = evaluate_kind(&kind, &[up, down], &[p, 1.0 - p]);
            let fast = two_point(&kind, up, down, p);
            prop_assert!((general - fast).abs() <= 1e-12 * (1.0 + general.abs()));
        }

        #[test]
        fn bid_never_exceeds_ask(kind in kinds(), seed in any::<u64>()) {
            let mut rng = SeededSampler::new(seed);
            let d = random_distribution(&mut rng);
            let m = RiskSpec { kind, scaling: LevelScaling::Fixed };
            prop_assert!(bid_value(&m, &d) <= evaluate(&m, &d) + 1e-12);
        }

        #[test]
        fn positive_homogeneity(kind in kinds(), seed in any::<u64>()) {
            let mut rng = SeededSampler::new(seed);
            let d = random_distribution(&mut rng);
            let m = RiskSpec { kind, scaling: LevelScaling::Fixed };
            let base = evaluate(&m, &d);
            for lambda in [0.0, 0.5, 2.0, 10.0] {
                let v = evaluate(&m, &d.map(|y| lambda * y));
                prop_assert!((v - lambda * base).abs() <= 1e-12 * (1.0 + (lambda * base).abs()));
            }
        }
    }
}
