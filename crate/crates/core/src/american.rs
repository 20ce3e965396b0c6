//! American options under the risk-averse operator as a linear
//! complementarity problem
//!
//! ```text
//! min(-V_t - L V + r V, V - Ψ) = 0
//! ```
//!
//! Each time step is a policy iteration over the drift sign (as in
//! [`crate::pdesolve`]) wrapped around an obstacle solve: projected SOR
//! first, a penalty iteration if PSOR does not reach tolerance.

use serde::{Deserialize, Serialize};

use crate::closedform::{EuroParams, OptionKind};
use crate::error::{Error, Result};
use crate::pdesolve::{
    initial_policy, solve_european_with, solve_tridiagonal, DriftModel, Grid, Operator, PDESolution, Payoff, Problem,
    Scheme, StepSetup,
};
use crate::riskcore::Side;

pub const PSOR_OMEGA: f64 = 1.2;
pub const PSOR_TOLERANCE: f64 = 1e-9;
pub const PSOR_MAX_ITERATIONS: usize = 20_000;
pub const PENALTY: f64 = 1e7;
const PENALTY_MAX_ITERATIONS: usize = 200;
/// Default threshold on `V - Ψ` separating exercise from continuation.
pub const BOUNDARY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmerParams {
    #[serde(flatten)]
    pub euro: EuroParams,
    pub kind: OptionKind,
}

impl AmerParams {
    pub fn new(
        kind: OptionKind,
        spot: f64,
        strike: f64,
        rate: f64,
        sigma: f64,
        expiry: f64,
        s_rho: f64,
    ) -> Result<Self> {
        Ok(Self {
            euro: EuroParams::new(spot, strike, rate, sigma, expiry, s_rho)?,
            kind,
        })
    }

    pub fn payoff(&self) -> Payoff {
        Payoff::Vanilla {
            kind: self.kind,
            strike: self.euro.strike,
        }
    }

    pub fn with_s_rho(self, s_rho: f64) -> Self {
        Self {
            euro: self.euro.with_s_rho(s_rho),
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LcpMethod {
    /// PSOR, falling back to the penalty iteration when it stalls.
    Psor,
    Penalty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmerScheme {
    pub scheme: Scheme,
    pub method: LcpMethod,
    pub boundary_tolerance: f64,
}

impl Default for AmerScheme {
    fn default() -> Self {
        Self {
            scheme: Scheme::default(),
            method: LcpMethod::Psor,
            boundary_tolerance: BOUNDARY_TOLERANCE,
        }
    }
}

/// Exercise boundary `L(t)`; `None` where no interior node is exercised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExerciseBoundary {
    pub times: Vec<f64>,
    pub levels: Vec<Option<f64>>,
    pub side: Side,
    pub kind: OptionKind,
}

impl ExerciseBoundary {
    pub fn is_empty(&self) -> bool {
        let n = self.levels.len();
        // the expiry level is L(T) = K by convention and says nothing about early exercise
        self.levels[..n.saturating_sub(1)].iter().all(Option::is_none)
    }

    /// Boundary at the valuation time.
    pub fn initial(&self) -> Option<f64> {
        self.levels.first().copied().flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmericanSolution {
    pub params: AmerParams,
    pub side: Side,
    pub pde: PDESolution,
    pub boundary: ExerciseBoundary,
    /// Steps where PSOR gave up and the penalty iteration took over.
    pub penalty_fallbacks: usize,
}

impl AmericanSolution {
    pub fn value(&self) -> f64 {
        self.pde.value_at(0, self.params.euro.spot)
    }
}

pub fn solve_american(params: &AmerParams, side: Side, grid: &Grid) -> Result<AmericanSolution> {
    solve_american_with(params, side, grid, AmerScheme::default())
}

pub fn solve_american_with(params: &AmerParams, side: Side, grid: &Grid, cfg: AmerScheme) -> Result<AmericanSolution> {
    let model = DriftModel::RiskAverse {
        side,
        s_sigma: params.euro.s_rho * params.euro.sigma,
    };
    solve_lcp(params, side, grid, cfg, model)
}

/// Classical American solve with the spot drifting at `drift_rate`; the
/// risk-averse problem for a monotone payoff reduces to this with
/// `drift_rate = r ± s sigma`.
pub fn solve_american_fixed(
    params: &AmerParams,
    side: Side,
    grid: &Grid,
    drift_rate: f64,
    cfg: AmerScheme,
) -> Result<AmericanSolution> {
    solve_lcp(params, side, grid, cfg, DriftModel::Fixed { rate: drift_rate })
}

fn solve_lcp(
    params: &AmerParams,
    side: Side,
    grid: &Grid,
    cfg: AmerScheme,
    model: DriftModel,
) -> Result<AmericanSolution> {
    let euro = &params.euro;
    euro.validate()?;
    grid.validate()?;
    if !(cfg.boundary_tolerance >= 0.0) {
        return Err(Error::param(
            "boundary_tolerance",
            cfg.boundary_tolerance,
            "must be >= 0",
        ));
    }
    if cfg.scheme.theta == 0.0 {
        return Err(Error::param("theta", 0.0, "the obstacle solver needs an implicit part"));
    }
    let payoff = params.payoff();
    let problem = Problem {
        params: euro,
        payoff: &payoff,
        grid,
        scheme: cfg.scheme,
    };
    let x = grid.nodes();
    let op = Operator {
        x: &x,
        r: euro.rate,
        sigma: euro.sigma,
        model,
    };
    let times = problem.times();
    let thetas = problem.step_theta();
    let (nt, nx) = (grid.nt, x.len());
    let obstacle: Vec<f64> = x.iter().map(|&s| payoff.value(s)).collect();

    let mut values = vec![Vec::new(); nt + 1];
    values[nt] = obstacle.clone();
    let mut policies = vec![Vec::new(); nt];
    let mut iterations = vec![0usize; nt];
    let mut policy = initial_policy(&payoff, &x);
    let mut fallbacks = 0;

    for k in (0..nt).rev() {
        let tau = euro.expiry - times[k];
        let step = StepSetup {
            op: &op,
            dt: times[k + 1] - times[k],
            theta: thetas[k],
            lower: problem.boundary(&op, x[0], tau).max(obstacle[0]),
            upper: problem.boundary(&op, x[nx - 1], tau).max(obstacle[nx - 1]),
        };
        let (rhs, _) = step.rhs(&values[k + 1], &policy);
        let psi = &obstacle[1..nx - 1];
        let mut guess: Vec<f64> = values[k + 1][1..nx - 1].to_vec();
        let mut sweeps = 0;
        let v = loop {
            sweeps += 1;
            let (a, b, c, d) = step.system(&rhs, &policy);
            let interior = match cfg.method {
                LcpMethod::Psor => match psor(&a, &b, &c, &d, psi, &guess) {
                    Some(u) => u,
                    None => {
                        fallbacks += 1;
                        penalty(&a, &b, &c, &d, psi, &guess).map_err(|it| lcp_error(k, it))?
                    }
                },
                LcpMethod::Penalty => penalty(&a, &b, &c, &d, psi, &guess).map_err(|it| lcp_error(k, it))?,
            };
            let mut v = Vec::with_capacity(nx);
            v.push(step.lower);
            v.extend_from_slice(&interior);
            v.push(step.upper);
            let next = op.best_policy_within(&v, &policy, 10.0 * PSOR_TOLERANCE);
            if next == policy {
                break v;
            }
            if sweeps >= cfg.scheme.max_policy_sweeps {
                return Err(Error::Solver {
                    message: "policy iteration around the obstacle solve did not settle".into(),
                    time_level: k,
                    iterations: sweeps,
                });
            }
            policy = next;
            guess = interior;
        };
        if v.iter().any(|x| !x.is_finite()) {
            return Err(lcp_error(k, sweeps));
        }
        values[k] = v;
        iterations[k] = sweeps;
        policies[k] = policy.clone();
    }

    let mut pde = PDESolution {
        grid: *grid,
        x: x.clone(),
        times,
        values,
        step_theta: thetas,
        max_residual: 0.0,
        iterations_per_step: iterations,
        policies,
    };
    pde.max_residual = complementarity_residual(&pde, &op, &obstacle);
    let boundary = extract_boundary(&pde, &obstacle, params, side, cfg.boundary_tolerance);
    Ok(AmericanSolution {
        params: *params,
        side,
        pde,
        boundary,
        penalty_fallbacks: fallbacks,
    })
}

fn lcp_error(time_level: usize, iterations: usize) -> Error {
    Error::Solver {
        message: "obstacle problem did not converge (PSOR and penalty)".into(),
        time_level,
        iterations,
    }
}

/// Projected SOR for `M u >= d, u >= psi` with complementarity; `None` if the
/// iteration cap is hit.
fn psor(a: &[f64], b: &[f64], c: &[f64], d: &[f64], psi: &[f64], start: &[f64]) -> Option<Vec<f64>> {
    let m = d.len();
    let mut u: Vec<f64> = start.iter().zip(psi).map(|(s, p)| s.max(*p)).collect();
    for _ in 0..PSOR_MAX_ITERATIONS {
        let mut change = 0.0_f64;
        for i in 0..m {
            let left = if i > 0 { a[i] * u[i - 1] } else { 0.0 };
            let right = if i + 1 < m { c[i] * u[i + 1] } else { 0.0 };
            let gs = (d[i] - left - right) / b[i];
            let new = (u[i] + PSOR_OMEGA * (gs - u[i])).max(psi[i]);
            change = change.max((new - u[i]).abs());
            u[i] = new;
        }
        if change < PSOR_TOLERANCE {
            return Some(u);
        }
    }
    None
}

/// Penalty iteration: solve `(M + P) u = d + P psi` with `P` active where
/// `u < psi`, until the active set stops changing.
fn penalty(
    a: &[f64],
    b: &[f64],
    c: &[f64],
    d: &[f64],
    psi: &[f64],
    start: &[f64],
) -> std::result::Result<Vec<f64>, usize> {
    let m = d.len();
    let mut active: Vec<bool> = start.iter().zip(psi).map(|(u, p)| u < p).collect();
    for _ in 0..PENALTY_MAX_ITERATIONS {
        let mut bb = b.to_vec();
        let mut dd = d.to_vec();
        for i in 0..m {
            if active[i] {
                bb[i] += PENALTY;
                dd[i] += PENALTY * psi[i];
            }
        }
        let u = solve_tridiagonal(a, &bb, c, &dd);
        let next: Vec<bool> = u.iter().zip(psi).map(|(u, p)| u < p).collect();
        if next == active {
            return Ok(u);
        }
        active = next;
    }
    Err(PENALTY_MAX_ITERATIONS)
}

// Largest violation of min(dt * continuation residual, V - Ψ) = 0, scaled by 1 + |V|.
fn complementarity_residual(sol: &PDESolution, op: &Operator, psi: &[f64]) -> f64 {
    let nx = sol.x.len();
    let start = vec![1i8; nx];
    let mut worst = 0.0_f64;
    for k in 0..sol.times.len() - 1 {
        let dt = sol.times[k + 1] - sol.times[k];
        let theta = sol.step_theta[k];
        let (now, next) = (&sol.values[k], &sol.values[k + 1]);
        let l_now = op.apply(&op.best_policy(now, &start), now);
        let l_next = op.apply(&op.best_policy(next, &start), next);
        for i in 1..nx - 1 {
            let pde = -(next[i] - now[i]) - dt * (theta * l_now[i] + (1.0 - theta) * l_next[i]);
            let r = pde.min(now[i] - psi[i]).abs();
            worst = worst.max(r / (1.0 + now[i].abs()));
        }
    }
    worst
}

fn extract_boundary(sol: &PDESolution, psi: &[f64], params: &AmerParams, side: Side, tol: f64) -> ExerciseBoundary {
    let strike = params.euro.strike;
    let nt = sol.times.len() - 1;
    let levels = (0..=nt)
        .map(|k| {
            if k == nt {
                Some(strike)
            } else {
                boundary_level(&sol.x, &sol.values[k], psi, params.kind, strike, tol)
            }
        })
        .collect();
    ExerciseBoundary {
        times: sol.times.clone(),
        levels,
        side,
        kind: params.kind,
    }
}

fn boundary_level(x: &[f64], v: &[f64], psi: &[f64], kind: OptionKind, strike: f64, tol: f64) -> Option<f64> {
    let n = x.len();
    let gap = |i: usize| v[i] - psi[i];
    // walk from the deep in-the-money end; node 0 / n-1 carry Dirichlet data
    let order: Vec<usize> = match kind {
        OptionKind::Put => (0..n).take_while(|&i| x[i] < strike).collect(),
        OptionKind::Call => (0..n).rev().take_while(|&i| x[i] > strike).collect(),
    };
    let mut last = None;
    for (pos, &i) in order.iter().enumerate() {
        if gap(i) > tol {
            break;
        }
        last = Some(pos);
    }
    let pos = last?;
    if pos == 0 {
        return None;
    }
    let i = order[pos];
    let Some(&j) = order.get(pos + 1) else {
        return Some(strike);
    };
    let (g0, g1) = (gap(i), gap(j));
    let w = if g1 > g0 {
        ((tol - g0) / (g1 - g0)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Some(x[i] + w * (x[j] - x[i]))
}

/// Re-extracts the boundary with a different threshold.
pub fn exercise_boundary(solution: &AmericanSolution, tolerance: f64) -> ExerciseBoundary {
    let psi: Vec<f64> = solution
        .pde
        .x
        .iter()
        .map(|&s| solution.params.payoff().value(s))
        .collect();
    extract_boundary(&solution.pde, &psi, &solution.params, solution.side, tolerance)
}

/// American minus European value at `(t, S0)`, both from the same grid.
pub fn early_exercise_premium(params: &AmerParams, side: Side, grid: &Grid) -> Result<f64> {
    let am = solve_american(params, side, grid)?;
    let eu = solve_european_with(&params.euro, &params.payoff(), side, grid, Scheme::default())?;
    Ok(am.value() - eu.value_at(0, params.euro.spot))
}

/// `|V_x + 1|` just above the put boundary at the valuation time.
pub fn smooth_pasting_gap(solution: &AmericanSolution) -> Option<f64> {
    let level = solution.boundary.initial()?;
    let x = &solution.pde.x;
    let v = solution.pde.initial();
    let i = x.iter().position(|&s| s > level)?;
    if i + 1 >= x.len() {
        return None;
    }
    let slope = (v[i + 1] - v[i]) / (x[i + 1] - x[i]);
    Some((slope + 1.0).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    fn put(s_rho: f64) -> AmerParams {
        AmerParams::new(OptionKind::Put, 1.0, 1.0, 0.03, 0.15, 1.0, s_rho).unwrap()
    }

    fn call(s_rho: f64) -> AmerParams {
        AmerParams::new(OptionKind::Call, 1.0, 1.0, 0.03, 0.15, 1.0, s_rho).unwrap()
    }

    fn grid() -> Grid {
        Grid::for_strike(1.0, 401, 400).unwrap()
    }

    #[test]
    fn classical_put_matches_lattice() {
        let sol = solve_american(&put(0.0), Side::Bid, &grid()).unwrap();
        let reference = oracle::crr_american(1.0, 1.0, 0.03, 0.0, 0.15, 1.0, OptionKind::Put, 4000);
        assert!((sol.value() - reference).abs() < 2e-4, "{} vs {reference}", sol.value());
        assert_eq!(sol.penalty_fallbacks, 0);
    }

    #[test]
    fn risk_averse_sides_match_lattice_with_risk_dividend() {
        let s = 0.2;
        let ss = s * 0.15;
        for (p, side, q) in [
            (put(s), Side::Bid, -ss),
            (put(s), Side::Ask, ss),
            (call(s), Side::Bid, ss),
            (call(s), Side::Ask, -ss),
        ] {
            let sol = solve_american(&p, side, &grid()).unwrap();
            let reference = oracle::crr_american(1.0, 1.0, 0.03, q, 0.15, 1.0, p.kind, 4000);
            assert!(
                (sol.value() - reference).abs() < 3e-4,
                "{:?} {side:?}: {} vs {reference}",
                p.kind,
                sol.value()
            );
            let fixed = solve_american_fixed(&p, side, &grid(), 0.03 - q, AmerScheme::default()).unwrap();
            for (a, b) in sol.pde.initial().iter().zip(fixed.pde.initial()) {
                assert!((a - b).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn obstacle_and_ordering() {
        let g = grid();
        for p in [put(0.2), call(0.2)] {
            let bid = solve_american(&p, Side::Bid, &g).unwrap();
            let ask = solve_american(&p, Side::Ask, &g).unwrap();
            let psi: Vec<f64> = bid.pde.x.iter().map(|&s| p.payoff().value(s)).collect();
            for (sol, side) in [(&bid, Side::Bid), (&ask, Side::Ask)] {
                let eu = solve_european_with(&p.euro, &p.payoff(), side, &g, Scheme::default()).unwrap();
                for (i, &v) in sol.pde.initial().iter().enumerate() {
                    assert!(v >= psi[i] - 1e-12);
                    assert!(
                        v >= eu.initial()[i] - 1e-6,
                        "{:?} {side:?} x={} am={v} eu={}",
                        p.kind,
                        sol.pde.x[i],
                        eu.initial()[i]
                    );
                }
            }
            for (b, a) in bid.pde.initial().iter().zip(ask.pde.initial()) {
                assert!(b <= &(a + 1e-8));
            }
        }
    }

    #[test]
    fn put_boundary_shape() {
        let g = grid();
        let bid = solve_american(&put(0.2), Side::Bid, &g).unwrap();
        let ask = solve_american(&put(0.2), Side::Ask, &g).unwrap();
        let lb = &bid.boundary.levels;
        assert_eq!(*lb.last().unwrap(), Some(1.0));
        let h = g.nodes()[1];
        let near_expiry = lb[lb.len() - 2].unwrap();
        assert!((1.0 - near_expiry) < 0.1, "{near_expiry}");
        assert!(lb.iter().all(|l| l.unwrap() <= 1.0 + 1e-12));
        for w in lb.windows(2) {
            assert!(w[1].unwrap() >= w[0].unwrap() - h, "{w:?}");
        }
        for (b, a) in lb.iter().zip(&ask.boundary.levels) {
            assert!(b.unwrap() >= a.unwrap() - 1e-12);
        }
    }

    #[test]
    fn spread_raises_put_bid_boundary() {
        let g = grid();
        let levels: Vec<f64> = [0.0, 0.1, 0.3]
            .iter()
            .map(|&s| {
                solve_american(&put(s), Side::Bid, &g)
                    .unwrap()
                    .boundary
                    .initial()
                    .unwrap()
            })
            .collect();
        assert!(levels[0] < levels[1] && levels[1] < levels[2], "{levels:?}");
    }

    #[test]
    fn call_exercise_regions() {
        let g = grid();
        let neutral = solve_american(&call(0.0), Side::Ask, &g).unwrap();
        assert!(neutral.boundary.is_empty());
        assert!(early_exercise_premium(&call(0.0), Side::Ask, &g).unwrap().abs() < 1e-6);
        assert!(solve_american(&call(0.2), Side::Ask, &g).unwrap().boundary.is_empty());
        assert!(!solve_american(&call(0.2), Side::Bid, &g).unwrap().boundary.is_empty());
    }

    #[test]
    fn put_premium_is_positive() {
        let prem = early_exercise_premium(&put(0.1), Side::Bid, &grid()).unwrap();
        assert!(prem > 0.0);
        let deep = AmerParams::new(OptionKind::Put, 2.0, 1.0, 0.03, 0.15, 0.05, 0.1).unwrap();
        let g = Grid::for_strike(1.0, 401, 50).unwrap();
        assert!(early_exercise_premium(&deep, Side::Bid, &g).unwrap().abs() < 1e-10);
    }

    #[test]
    fn penalty_agrees_with_psor() {
        let cfg = AmerScheme {
            method: LcpMethod::Penalty,
            ..AmerScheme::default()
        };
        let g = Grid::for_strike(1.0, 201, 200).unwrap();
        let a = solve_american(&put(0.1), Side::Bid, &g).unwrap();
        let b = solve_american_with(&put(0.1), Side::Bid, &g, cfg).unwrap();
        assert!(a.pde.max_residual < 1e-7, "{}", a.pde.max_residual);
        for (x, y) in a.pde.initial().iter().zip(b.pde.initial()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn smooth_pasting_improves_with_refinement() {
        let gaps: Vec<f64> = [101, 201, 401]
            .iter()
            .map(|&nx| {
                let g = Grid::for_strike(1.0, nx, nx - 1).unwrap();
                smooth_pasting_gap(&solve_american(&put(0.1), Side::Bid, &g).unwrap()).unwrap()
            })
            .collect();
        assert!(gaps[2] < gaps[0], "{gaps:?}");
    }
}
