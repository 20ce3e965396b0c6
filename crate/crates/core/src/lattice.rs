//! Recombining binomial lattices priced by nested one-step risk measures.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closedform::{self, OptionKind};
use crate::error::{Error, Result};
use crate::normal;
use crate::quadrature;
use crate::riskcore::{self, RiskKind, RiskSpec, Side};

/// Largest supported step count.
pub const MAX_STEPS: usize = 1_000_000;

/// Cox–Ross–Rubinstein lattice with `S -> S e^{±σ√Δt}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialTree {
    s0: f64,
    r: f64,
    sigma: f64,
    horizon: f64,
    n: usize,
    dt: f64,
    up: f64,
    down: f64,
    p: f64,
}

impl BinomialTree {
    pub fn s0(&self) -> f64 {
        self.s0
    }
    pub fn rate(&self) -> f64 {
        self.r
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn steps(&self) -> usize {
        self.n
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn up(&self) -> f64 {
        self.up
    }
    pub fn down(&self) -> f64 {
        self.down
    }
    /// Risk-neutral probability of an up move.
    pub fn p(&self) -> f64 {
        self.p
    }

    /// Spot after `ups` up-moves in `level` steps.
    pub fn node_price(&self, level: usize, ups: usize) -> f64 {
        let k = 2.0 * ups as f64 - level as f64;
        self.s0 * (k * self.sigma * self.dt.sqrt()).exp()
    }

    /// `p u + (1 - p) d - e^{r dt}`; zero up to rounding for a valid tree.
    pub fn martingale_defect(&self) -> f64 {
        self.p * self.up + (1.0 - self.p) * self.down - (self.r * self.dt).exp()
    }
}

pub fn build_tree(s0: f64, r: f64, sigma: f64, horizon: f64, n: usize) -> Result<BinomialTree> {
    if !(s0 > 0.0) {
        return Err(Error::param("S0", s0, "initial price must be positive"));
    }
    if !(sigma > 0.0) {
        return Err(Error::param("sigma", sigma, "volatility must be positive"));
    }
    if !(horizon > 0.0) {
        return Err(Error::param("T", horizon, "horizon must be positive"));
    }
    if !r.is_finite() {
        return Err(Error::param("r", r, "rate must be finite"));
    }
    if n == 0 || n > MAX_STEPS {
        return Err(Error::param(
            "n",
            n as f64,
            format!("step count must lie in 1..={MAX_STEPS}"),
        ));
    }
    let dt = horizon / n as f64;
    let v = sigma * dt.sqrt();
    let up = v.exp();
    let down = (-v).exp();
    // (e^{r dt} - e^{-v}) / (e^{v} - e^{-v}) in cancellation-free form
    let p = ((r * dt).exp_m1() - (-v).exp_m1()) / (2.0 * v.sinh());
    if !(p > 0.0 && p < 1.0) {
        let bound = if p <= 0.0 { "p > 0" } else { "p < 1" };
        return Err(Error::param(
            "p",
            p,
            format!("risk-neutral probability violates {bound}; need |r sqrt(dt)| < sigma"),
        ));
    }
    Ok(BinomialTree {
        s0,
        r,
        sigma,
        horizon,
        n,
        dt,
        up,
        down,
        p,
    })
}

/// Reweighted up-probability `p (1 - beta_dt (1 - p))` under which the
/// semi-deviation bid of an increasing payoff is an expectation.
pub fn risk_adjusted_prob(p: f64, beta_dt: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::param("p", p, "probability must lie in (0, 1)"));
    }
    if !(beta_dt >= 0.0) {
        return Err(Error::param("beta_dt", beta_dt, "level must be nonnegative"));
    }
    let pt = p * (1.0 - beta_dt * (1.0 - p));
    if !(0.0..=1.0).contains(&pt) {
        return Err(Error::param("p_tilde", pt, "adjusted probability left [0, 1]"));
    }
    Ok(pt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NestedOptions {
    /// Discount each step by `e^{-r dt}`.
    pub discounted: bool,
}

impl Default for NestedOptions {
    fn default() -> Self {
        Self { discounted: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NestedPriceResult {
    pub value: f64,
    pub side: Side,
    pub measure: RiskSpec,
    pub n: usize,
}

/// Nested risk value of `payoff(S_T)` by backward induction on the lattice.
pub fn price_nested(
    tree: &BinomialTree,
    measure: &RiskSpec,
    payoff: impl Fn(f64) -> f64,
    side: Side,
) -> Result<NestedPriceResult> {
    price_nested_with(tree, measure, payoff, side, NestedOptions::default())
}

pub fn price_nested_with(
    tree: &BinomialTree,
    measure: &RiskSpec,
    payoff: impl Fn(f64) -> f64,
    side: Side,
    options: NestedOptions,
) -> Result<NestedPriceResult> {
    let step = measure.for_step(tree.dt)?;
    let n = tree.n;
    let mut values: Vec<f64> = (0..=n).map(|j| payoff(tree.node_price(n, j))).collect();
    if let Some(j) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Evaluation(format!(
            "payoff is not finite at terminal node {j} (S = {})",
            tree.node_price(n, j)
        )));
    }
    let disc = if options.discounted {
        (-tree.r * tree.dt).exp()
    } else {
        1.0
    };
    let p = tree.p;
    let kind = step.kind;
    // values[j] holds the node with j up-moves; updating in increasing j
    // only reads values[j + 1] before it is overwritten
    for level in (0..n).rev() {
        for j in 0..=level {
            let (up, down) = (values[j + 1], values[j]);
            values[j] = disc * one_step(&kind, up, down, p, side);
        }
    }
    Ok(NestedPriceResult {
        value: values[0],
        side,
        measure: *measure,
        n,
    })
}

#[inline]
fn one_step(kind: &RiskKind, up: f64, down: f64, p: f64, side: Side) -> f64 {
    match side {
        Side::Ask => riskcore::two_point(kind, up, down, p),
        Side::Bid => -riskcore::two_point(kind, -up, -down, p),
    }
}

/// Market and contract inputs of a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSetup {
    pub s0: f64,
    pub strike: f64,
    pub r: f64,
    pub sigma: f64,
    pub horizon: f64,
    pub beta: f64,
}

impl ConvergenceSetup {
    /// `S0 = 1, K = 1.2, r = 3%, sigma = 15%, T = 1`.
    pub fn reference(beta: f64) -> Self {
        Self {
            s0: 1.0,
            strike: 1.2,
            r: 0.03,
            sigma: 0.15,
            horizon: 1.0,
            beta,
        }
    }

    /// Continuous dividend yield of the limiting bid model, `beta sigma / 2`.
    pub fn limit_dividend(&self) -> f64 {
        0.5 * self.beta * self.sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub dt: f64,
    pub bid: f64,
    pub ask: f64,
    /// European call with dividend yield `beta sigma / 2`, the bid limit.
    pub reference: f64,
    pub abs_error: f64,
}

/// Nested `SD(1, beta sqrt(dt))` call prices on trees of increasing size.
pub fn convergence_study(setup: &ConvergenceSetup, n_list: &[usize]) -> Result<Vec<ConvergenceRow>> {
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Validation("step counts must be strictly increasing".into()));
    }
    let measure = RiskSpec::semi_deviation(1.0, setup.beta)?.with_scaling(riskcore::LevelScaling::SqrtDt);
    let reference = closedform::dividend_value(
        OptionKind::Call,
        setup.s0,
        setup.strike,
        setup.r,
        setup.limit_dividend(),
        setup.sigma,
        setup.horizon,
    );
    let k = setup.strike;
    n_list
        .par_iter()
        .map(|&n| {
            let tree = build_tree(setup.s0, setup.r, setup.sigma, setup.horizon, n)?;
            let call = |s: f64| (s - k).max(0.0);
            let bid = price_nested(&tree, &measure, call, Side::Bid)?.value;
            let ask = price_nested(&tree, &measure, call, Side::Ask)?.value;
            Ok(ConvergenceRow {
                n,
                dt: tree.dt,
                bid,
                ask,
                reference,
                abs_error: (bid - reference).abs(),
            })
        })
        .collect()
}

/// Nested semi-deviation of a Wiener process's terminal value over a uniform
/// partition of `[0, T]` into `betas.len()` steps, step `i` at level
/// `betas[i] * sqrt(dt)`.
///
/// Each stage contributes `betas[i] * dt * c(p)` with `c(p) = s_rho(p, 1)`,
/// so `c(1) = 1/sqrt(2 pi)`.
pub fn nested_wiener_value(horizon: f64, order: f64, betas: &[f64]) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(Error::param("T", horizon, "horizon must be positive"));
    }
    if betas.is_empty() {
        return Err(Error::Validation("need at least one stage".into()));
    }
    if let Some(b) = betas.iter().find(|b| !(**b >= 0.0)) {
        return Err(Error::param("beta", *b, "levels must be nonnegative"));
    }
    let dt = horizon / betas.len() as f64;
    let unit = riskcore::s_rho(order, 1.0)?;
    Ok(betas.iter().map(|b| b * dt * unit).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvarNestingRow {
    pub n: usize,
    pub value: f64,
}

const AVAR_GRID_NODES: usize = 801;
const AVAR_TAIL_SPAN: f64 = 12.0;

/// Nested AVaR at a fixed (unscaled) level of `W_T` on uniform partitions
/// with `n` stages, evaluated numerically by backward induction on a grid in
/// the Wiener state.
///
/// Each stage maps `V` to `w -> AVaR_alpha(V(w + sqrt(dt) Z))`; for an
/// increasing `V` this is the Gaussian upper-tail integral
/// `(1/alpha) int_{z_alpha}^inf V(w + sqrt(dt) z) phi(z) dz`.
pub fn avar_nesting_demo(horizon: f64, n_list: &[usize], alpha: f64) -> Result<Vec<AvarNestingRow>> {
    RiskSpec::avar(alpha)?;
    if !(horizon > 0.0) {
        return Err(Error::param("T", horizon, "horizon must be positive"));
    }
    if n_list.contains(&0) {
        return Err(Error::Validation("stage counts must be positive".into()));
    }
    let z_alpha = normal::inverse_cdf(1.0 - alpha);
    let rule = quadrature::gauss_legendre(48);
    let panels = 8;
    // tail nodes and weights on [z_alpha, z_alpha + span], weights include phi / alpha
    let mut tail = Vec::with_capacity(rule.len() * panels);
    let h = AVAR_TAIL_SPAN / panels as f64;
    for k in 0..panels {
        let mid = z_alpha + (k as f64 + 0.5) * h;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let z = mid + 0.5 * h * x;
            tail.push((z, 0.5 * h * w * normal::pdf(z) / alpha));
        }
    }
    let half_width = 12.0 * horizon.sqrt();
    let grid: Vec<f64> = (0..AVAR_GRID_NODES)
        .map(|i| -half_width + 2.0 * half_width * i as f64 / (AVAR_GRID_NODES - 1) as f64)
        .collect();

    n_list
        .iter()
        .map(|&n| {
            let sd = (horizon / n as f64).sqrt();
            let mut v: Vec<f64> = grid.clone();
            for stage in 0..n {
                if v.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::Evaluation(format!(
                        "continuation value lost monotonicity at stage {stage}"
                    )));
                }
                v = grid
                    .iter()
                    .map(|&w| {
                        tail.iter()
                            .map(|&(z, wt)| wt * interpolate_linear(&grid, &v, w + sd * z))
                            .sum()
                    })
                    .collect();
            }
            Ok(AvarNestingRow {
                n,
                value: interpolate_linear(&grid, &v, 0.0),
            })
        })
        .collect()
}

// Piecewise-linear interpolation on a uniform grid, extended linearly outside.
fn interpolate_linear(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let n = grid.len();
    let h = grid[1] - grid[0];
    let pos = ((x - grid[0]) / h).floor();
    let i = (pos.max(0.0) as usize).min(n - 2);
    let t = (x - grid[i]) / h;
    values[i] + t * (values[i + 1] - values[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riskcore::LevelScaling;

    #[test]
    fn reference_tree_probability() {
        let tree = build_tree(1.0, 0.03, 0.15, 1.0, 100).unwrap();
        assert!((tree.p() - 0.5062511954145186).abs() < 1e-14, "{}", tree.p());
        assert!(tree.martingale_defect().abs() < 1e-15);
    }

    #[test]
    fn zero_rate_tilts_down() {
        for &(sigma, n) in &[(0.1, 4), (0.5, 50), (1.2, 3)] {
            let tree = build_tree(1.0, 0.0, sigma, 1.0, n).unwrap();
            assert!(tree.p() < 0.5);
        }
    }

    #[test]
    fn rejects_degenerate_trees() {
        assert!(build_tree(0.0, 0.03, 0.15, 1.0, 10).is_err());
        assert!(build_tree(1.0, 0.03, 0.0, 1.0, 10).is_err());
        assert!(build_tree(1.0, 0.03, 0.15, 1.0, 0).is_err());
        // r sqrt(dt) > sigma drives p above one
        let err = build_tree(1.0, 2.0, 0.1, 1.0, 1).unwrap_err();
        assert!(err.to_string().contains("p < 1"), "{err}");
    }

    #[test]
    fn adjusted_probability() {
        // p of the (r = 3%, sigma = 15%, dt = 0.01) tree; reference value from mpmath
        let p = build_tree(1.0, 0.03, 0.15, 1.0, 100).unwrap().p();
        assert!((risk_adjusted_prob(p, 0.1).unwrap() - 0.48125510315892967).abs() < 1e-14);
        assert!((risk_adjusted_prob(0.506251, 0.1).unwrap() - 0.4812549075001).abs() < 1e-13);
        assert_eq!(risk_adjusted_prob(0.3, 0.0).unwrap(), 0.3);
        assert!(risk_adjusted_prob(1.0, 0.1).is_err());
    }

    #[test]
    fn one_step_bid_of_the_stock() {
        let tree = build_tree(1.0, 0.03, 0.15, 0.25, 1).unwrap();
        let beta = 0.4;
        let m = RiskSpec::semi_deviation(1.0, beta)
            .unwrap()
            .with_scaling(LevelScaling::SqrtDt);
        let pt = risk_adjusted_prob(tree.p(), beta * tree.dt().sqrt()).unwrap();
        let undiscounted = pt * tree.up() + (1.0 - pt) * tree.down();
        let raw = price_nested_with(&tree, &m, |s| s, Side::Bid, NestedOptions { discounted: false }).unwrap();
        assert!((raw.value - undiscounted).abs() < 1e-15);
        let disc = price_nested(&tree, &m, |s| s, Side::Bid).unwrap();
        assert!((disc.value - undiscounted * (-0.03 * 0.25_f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn expectation_prices_the_stock_at_par() {
        let tree = build_tree(2.0, 0.05, 0.2, 3.0, 300).unwrap();
        let v = price_nested(&tree, &RiskSpec::expectation(), |s| s, Side::Ask).unwrap();
        assert!((v.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn nonfinite_payoff_is_rejected() {
        let tree = build_tree(1.0, 0.03, 0.15, 1.0, 4).unwrap();
        let r = price_nested(&tree, &RiskSpec::expectation(), |s| 1.0 / (s - s), Side::Bid);
        assert!(matches!(r, Err(Error::Evaluation(_))));
    }

    #[test]
    fn wiener_value_is_linear_in_time() {
        let c = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let v = nested_wiener_value(2.0, 1.0, &[0.5; 40]).unwrap();
        assert!((v - 2.0 * 0.5 * c).abs() < 1e-15);
        assert_eq!(nested_wiener_value(1.0, 2.0, &[0.0; 5]).unwrap(), 0.0);
        assert!(nested_wiener_value(1.0, 1.0, &[-0.1]).is_err());
    }

    #[test]
    fn single_stage_avar_is_gaussian_shortfall() {
        let alpha = 0.1;
        let rows = avar_nesting_demo(1.0, &[1], alpha).unwrap();
        let z = normal::inverse_cdf(1.0 - alpha);
        assert!((rows[0].value - normal::pdf(z) / alpha).abs() < 1e-10);
    }

    #[test]
    fn study_rejects_unsorted_lists() {
        assert!(convergence_study(&ConvergenceSetup::reference(0.5), &[400, 100]).is_err());
    }
}
