//! Finite differences for the nonlinear risk-averse Black–Scholes equation
//!
//! ```text
//! V_t + r x V_x + σ² x² V_xx / 2 ± s σ x |V_x| - r V = 0,   V(T, x) = Ψ(x)
//! ```
//!
//! with `+` for the ask and `-` for the bid. The absolute value is written as
//! an extremum over a sign `y ∈ {-1, +1}` of a linear drift
//! `(r ± s σ y) x`, and every time step is solved by policy iteration over
//! `y`: fix the sign field, solve the linear θ-scheme system, re-pick the
//! extremal sign node by node, repeat until the field is stable.

use serde::{Deserialize, Serialize};

use crate::closedform::{EuroParams, OptionKind};
use crate::error::{Error, Result};
use crate::riskcore::Side;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Uniform,
    LogUniform,
}

/// Space-time grid. `nx` counts space nodes, `nt` time steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub nt: usize,
    pub spacing: Spacing,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, nx: usize, nt: usize, spacing: Spacing) -> Result<Self> {
        let g = Self {
            x_min,
            x_max,
            nx,
            nt,
            spacing,
        };
        g.validate()?;
        Ok(g)
    }

    /// Uniform grid on `[0, ~4K]` with the strike on a node.
    pub fn for_strike(strike: f64, nx: usize, nt: usize) -> Result<Self> {
        if nx < 5 {
            return Err(Error::param("nx", nx as f64, "need at least 5 space nodes"));
        }
        let cells = nx - 1;
        let to_strike = ((cells as f64) / 4.0).round().max(1.0);
        let h = strike / to_strike;
        Self::new(0.0, h * cells as f64, nx, nt, Spacing::Uniform)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min >= 0.0) {
            return Err(Error::param("x_min", self.x_min, "lower bound must be >= 0"));
        }
        if !(self.x_max > self.x_min) || !self.x_max.is_finite() {
            return Err(Error::param("x_max", self.x_max, "upper bound must exceed x_min"));
        }
        if self.nx < 3 {
            return Err(Error::param("nx", self.nx as f64, "need at least 3 space nodes"));
        }
        if self.nt < 1 {
            return Err(Error::param("nt", self.nt as f64, "need at least one time step"));
        }
        if self.spacing == Spacing::LogUniform && self.x_min <= 0.0 {
            return Err(Error::param("x_min", self.x_min, "log-uniform spacing needs x_min > 0"));
        }
        Ok(())
    }

    pub fn nodes(&self) -> Vec<f64> {
        let n = self.nx - 1;
        match self.spacing {
            Spacing::Uniform => {
                let h = (self.x_max - self.x_min) / n as f64;
                (0..=n).map(|i| self.x_min + h * i as f64).collect()
            }
            Spacing::LogUniform => {
                let (a, b) = (self.x_min.ln(), self.x_max.ln());
                (0..=n).map(|i| (a + (b - a) * i as f64 / n as f64).exp()).collect()
            }
        }
    }

    /// Same domain with `factor` times as many cells in space and time.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            nx: (self.nx - 1) * factor + 1,
            nt: self.nt * factor,
            ..*self
        }
    }
}

/// Terminal payoff. Piecewise-linear payoffs extend linearly beyond their
/// outermost knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payoff {
    Vanilla { kind: OptionKind, strike: f64 },
    PiecewiseLinear { knots: Vec<(f64, f64)> },
}

impl Payoff {
    pub fn call(strike: f64) -> Self {
        Payoff::Vanilla {
            kind: OptionKind::Call,
            strike,
        }
    }

    pub fn put(strike: f64) -> Self {
        Payoff::Vanilla {
            kind: OptionKind::Put,
            strike,
        }
    }

    pub fn piecewise_linear(mut knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Validation("piecewise-linear payoff needs >= 2 knots".into()));
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Validation("payoff knots must have distinct abscissae".into()));
        }
        if knots.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::Validation("payoff knots must be finite".into()));
        }
        Ok(Payoff::PiecewiseLinear { knots })
    }

    pub fn value(&self, x: f64) -> f64 {
        let (slope, intercept) = self.linear_piece(x);
        match self {
            Payoff::Vanilla { kind, strike } => kind.payoff(x, *strike),
            Payoff::PiecewiseLinear { .. } => intercept + slope * x,
        }
    }

    /// `(slope, intercept)` of the linear piece containing `x`.
    pub(crate) fn linear_piece(&self, x: f64) -> (f64, f64) {
        match self {
            Payoff::Vanilla {
                kind: OptionKind::Call,
                strike,
            } if x > *strike => (1.0, -strike),
            Payoff::Vanilla {
                kind: OptionKind::Put,
                strike,
            } if x < *strike => (-1.0, *strike),
            Payoff::Vanilla { .. } => (0.0, 0.0),
            Payoff::PiecewiseLinear { knots } => {
                let n = knots.len();
                let i = match knots.iter().position(|k| k.0 > x) {
                    Some(0) => 0,
                    Some(i) => i - 1,
                    None => n - 2,
                }
                .min(n - 2);
                let (x0, y0) = knots[i];
                let (x1, y1) = knots[i + 1];
                let slope = (y1 - y0) / (x1 - x0);
                (slope, y0 - slope * x0)
            }
        }
    }

    /// Sign used where the payoff is locally flat.
    pub(crate) fn default_sign(&self, x_min: f64, x_max: f64) -> i8 {
        if self.value(x_max) < self.value(x_min) {
            -1
        } else {
            1
        }
    }
}

/// θ-scheme settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scheme {
    /// 1/2 is Crank–Nicolson, 1 implicit Euler, 0 explicit Euler.
    pub theta: f64,
    /// Fully implicit steps taken first from the payoff.
    pub rannacher_steps: usize,
    pub max_policy_sweeps: usize,
}

impl Default for Scheme {
    fn default() -> Self {
        Self {
            theta: 0.5,
            rannacher_steps: 2,
            max_policy_sweeps: 50,
        }
    }
}

impl Scheme {
    pub fn implicit() -> Self {
        Self {
            theta: 1.0,
            rannacher_steps: 0,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::param("theta", self.theta, "must lie in [0, 1]"));
        }
        if self.max_policy_sweeps == 0 {
            return Err(Error::param("max_policy_sweeps", 0.0, "must be positive"));
        }
        Ok(())
    }
}

/// Values `V(t_k, x_i)` on the grid plus solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PDESolution {
    pub grid: Grid,
    pub x: Vec<f64>,
    /// `times[nt]` is expiry.
    pub times: Vec<f64>,
    /// `values[k][i] = V(times[k], x[i])`.
    pub values: Vec<Vec<f64>>,
    /// θ used on the step from `times[k + 1]` back to `times[k]`.
    pub step_theta: Vec<f64>,
    pub max_residual: f64,
    /// Policy sweeps spent on each step.
    pub iterations_per_step: Vec<usize>,
    /// Converged sign field per step (0 on boundary nodes).
    pub policies: Vec<Vec<i8>>,
}

impl PDESolution {
    /// Wraps externally computed values (e.g. a closed form sampled on a
    /// grid) so they can be passed to [`residual_check`].
    pub fn from_surface(x: Vec<f64>, times: Vec<f64>, values: Vec<Vec<f64>>, theta: f64) -> Result<Self> {
        if times.len() < 2 || values.len() != times.len() || values.iter().any(|v| v.len() != x.len()) {
            return Err(Error::Validation("surface dimensions do not match the grid".into()));
        }
        let nt = times.len() - 1;
        let grid = Grid {
            x_min: x[0],
            x_max: x[x.len() - 1],
            nx: x.len(),
            nt,
            spacing: Spacing::Uniform,
        };
        Ok(Self {
            grid,
            x,
            times,
            values,
            step_theta: vec![theta; nt],
            max_residual: f64::NAN,
            iterations_per_step: vec![0; nt],
            policies: vec![],
        })
    }

    /// Values at the valuation time.
    pub fn initial(&self) -> &[f64] {
        &self.values[0]
    }

    /// Quadratic interpolation of time level `k` at spot `x`.
    pub fn value_at(&self, k: usize, x: f64) -> f64 {
        interpolate_quadratic(&self.x, &self.values[k], x)
    }
}

pub(crate) fn interpolate_quadratic(xs: &[f64], vs: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let i = match xs.iter().position(|&g| g >= x) {
        Some(0) => 1,
        Some(i) => i,
        None => n - 1,
    };
    // nodes i-1, i and the nearer of i-2 / i+1
    let j = if i + 1 < n && (i < 2 || (xs[i + 1] - x) < (x - xs[i - 2])) {
        i - 1
    } else {
        i - 2
    };
    let (x0, x1, x2) = (xs[j], xs[j + 1], xs[j + 2]);
    let (v0, v1, v2) = (vs[j], vs[j + 1], vs[j + 2]);
    v0 * (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2))
        + v1 * (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2))
        + v2 * (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1))
}

/// How the drift of the linearised operator depends on the sign policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum DriftModel {
    /// `r + side * s sigma * y`, `y` chosen per node.
    RiskAverse { side: Side, s_sigma: f64 },
    /// A single drift rate everywhere.
    Fixed { rate: f64 },
}

/// Spatial operator `L_y V = a V_{i-1} + b V_i + c V_{i+1}` on a fixed node set.
pub(crate) struct Operator<'a> {
    pub x: &'a [f64],
    pub r: f64,
    pub sigma: f64,
    pub model: DriftModel,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Row {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Operator<'_> {
    pub fn drift_rate(&self, y: i8) -> f64 {
        match self.model {
            DriftModel::RiskAverse { side, s_sigma } => self.r + side.sign() * s_sigma * y as f64,
            DriftModel::Fixed { rate } => rate,
        }
    }

    /// Stencil at interior node `i`. Central differences where they keep the
    /// off-diagonals nonnegative, upwinding otherwise.
    pub fn row(&self, i: usize, y: i8) -> Row {
        let x = self.x;
        let (hm, hp) = (x[i] - x[i - 1], x[i + 1] - x[i]);
        let diff = 0.5 * self.sigma * self.sigma * x[i] * x[i];
        let mu = self.drift_rate(y) * x[i];
        let s = hm + hp;
        let (mut a, mut b, mut c) = (2.0 * diff / (hm * s), -2.0 * diff / (hm * hp), 2.0 * diff / (hp * s));
        let (ca, cb, cc) = (-mu * hp / (hm * s), mu * (hp - hm) / (hm * hp), mu * hm / (hp * s));
        if a + ca >= 0.0 && c + cc >= 0.0 {
            a += ca;
            b += cb;
            c += cc;
        } else if mu >= 0.0 {
            b -= mu / hp;
            c += mu / hp;
        } else {
            a -= mu / hm;
            b += mu / hm;
        }
        Row { a, b: b - self.r, c }
    }

    fn apply_row(&self, i: usize, y: i8, v: &[f64]) -> f64 {
        let Row { a, b, c } = self.row(i, y);
        a * v[i - 1] + b * v[i] + c * v[i + 1]
    }

    /// Extremal sign per interior node for `v`: maximising `L_y v` on the ask,
    /// minimising on the bid. Ties keep the current sign.
    pub fn best_policy(&self, v: &[f64], current: &[i8]) -> Vec<i8> {
        self.best_policy_within(v, current, 0.0)
    }

    /// As [`Self::best_policy`], treating gaps explainable by an error of
    /// `noise` in the values as ties.
    pub fn best_policy_within(&self, v: &[f64], current: &[i8], noise: f64) -> Vec<i8> {
        let n = self.x.len();
        let mut out = current.to_vec();
        let DriftModel::RiskAverse { side, .. } = self.model else {
            return out;
        };
        for i in 1..n - 1 {
            let plus = self.apply_row(i, 1, v);
            let minus = self.apply_row(i, -1, v);
            let gap = side.sign() * (plus - minus);
            let mut tol = 1e-13 * (plus.abs() + minus.abs()) + 1e-300;
            if noise > 0.0 {
                let (p, m) = (self.row(i, 1), self.row(i, -1));
                tol += noise * (p.a.abs() + p.b.abs() + p.c.abs() + m.a.abs() + m.b.abs() + m.c.abs());
            }
            if gap > tol {
                out[i] = 1;
            } else if gap < -tol {
                out[i] = -1;
            }
        }
        out
    }

    /// `L_y v` at interior nodes (boundary entries are zero).
    pub fn apply(&self, policy: &[i8], v: &[f64]) -> Vec<f64> {
        let n = self.x.len();
        let mut out = vec![0.0; n];
        for i in 1..n - 1 {
            out[i] = self.apply_row(i, policy[i], v);
        }
        out
    }

    /// Far-field value of the payoff piece `slope x + intercept` after time `tau`.
    pub fn asymptotic(&self, x: f64, slope: f64, intercept: f64, tau: f64) -> f64 {
        let y = if slope < 0.0 { -1 } else { 1 };
        let growth = self.drift_rate(y) - self.r;
        intercept * (-self.r * tau).exp() + slope * x * (growth * tau).exp()
    }
}

/// Solves `a_i u_{i-1} + b_i u_i + c_i u_{i+1} = d_i` (Thomas algorithm).
pub(crate) fn solve_tridiagonal(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / m;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / m;
    }
    let mut u = vec![0.0; n];
    u[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        u[i] = dp[i] - cp[i] * u[i + 1];
    }
    u
}

/// Everything a backward step needs besides the current values.
pub(crate) struct StepSetup<'a> {
    pub op: &'a Operator<'a>,
    pub dt: f64,
    pub theta: f64,
    pub lower: f64,
    pub upper: f64,
}

impl StepSetup<'_> {
    /// Explicit part `v + (1 - θ) dt L v` with the policy optimal for `v`.
    pub fn rhs(&self, v_next: &[f64], policy: &[i8]) -> (Vec<f64>, Vec<i8>) {
        let best = self.op.best_policy(v_next, policy);
        let lv = self.op.apply(&best, v_next);
        let rhs = v_next
            .iter()
            .zip(&lv)
            .map(|(v, l)| v + (1.0 - self.theta) * self.dt * l)
            .collect();
        (rhs, best)
    }

    /// Tridiagonal system `(I - θ dt L_y) u = rhs` on interior nodes with the
    /// Dirichlet values folded into the right-hand side.
    pub fn system(&self, rhs: &[f64], policy: &[i8]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.op.x.len();
        let m = n - 2;
        let (mut a, mut b, mut c, mut d) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        for i in 1..n - 1 {
            let Row { a: ra, b: rb, c: rc } = self.op.row(i, policy[i]);
            let k = i - 1;
            a[k] = -self.theta * self.dt * ra;
            b[k] = 1.0 - self.theta * self.dt * rb;
            c[k] = -self.theta * self.dt * rc;
            d[k] = rhs[i];
        }
        d[0] -= a[0] * self.lower;
        d[m - 1] -= c[m - 1] * self.upper;
        a[0] = 0.0;
        c[m - 1] = 0.0;
        (a, b, c, d)
    }

    pub fn check_explicit_stability(&self, policy: &[i8]) -> Result<()> {
        let n = self.op.x.len();
        for i in 1..n - 1 {
            let row = self.op.row(i, policy[i]);
            let diag = 1.0 + (1.0 - self.theta) * self.dt * row.b;
            if diag < 0.0 {
                return Err(Error::param(
                    "dt",
                    self.dt,
                    format!("explicit step violates the CFL bound at x = {}", self.op.x[i]),
                ));
            }
        }
        Ok(())
    }
}

pub(crate) fn initial_policy(payoff: &Payoff, x: &[f64]) -> Vec<i8> {
    let n = x.len();
    let default = payoff.default_sign(x[0], x[n - 1]);
    let mut policy = vec![0i8; n];
    for i in 1..n - 1 {
        let slope = payoff.value(x[i + 1]) - payoff.value(x[i - 1]);
        policy[i] = if slope > 0.0 {
            1
        } else if slope < 0.0 {
            -1
        } else {
            default
        };
    }
    policy
}

/// Problem data shared by the European and American solvers.
pub(crate) struct Problem<'a> {
    pub params: &'a EuroParams,
    pub payoff: &'a Payoff,
    pub grid: &'a Grid,
    pub scheme: Scheme,
}

impl Problem<'_> {
    pub fn times(&self) -> Vec<f64> {
        let (t0, t1) = (self.params.time, self.params.expiry);
        let nt = self.grid.nt;
        (0..=nt)
            .map(|k| {
                if k == nt {
                    t1
                } else {
                    t0 + (t1 - t0) * k as f64 / nt as f64
                }
            })
            .collect()
    }

    pub fn step_theta(&self) -> Vec<f64> {
        let nt = self.grid.nt;
        // step k goes from times[k + 1] to times[k]; the first steps taken are the last indices
        (0..nt)
            .map(|k| {
                if nt - k <= self.scheme.rannacher_steps {
                    1.0
                } else {
                    self.scheme.theta
                }
            })
            .collect()
    }

    pub fn boundary(&self, op: &Operator, x: f64, tau: f64) -> f64 {
        let (slope, intercept) = self.payoff.linear_piece(x);
        op.asymptotic(x, slope, intercept, tau)
    }
}

pub fn solve_european(params: &EuroParams, payoff: &Payoff, side: Side, grid: &Grid) -> Result<PDESolution> {
    solve_european_with(params, payoff, side, grid, Scheme::default())
}

pub fn solve_european_with(
    params: &EuroParams,
    payoff: &Payoff,
    side: Side,
    grid: &Grid,
    scheme: Scheme,
) -> Result<PDESolution> {
    let model = DriftModel::RiskAverse {
        side,
        s_sigma: params.s_rho * params.sigma,
    };
    solve_linear_family(params, payoff, grid, scheme, model)
}

/// Linear Black–Scholes solve in which the spot drifts at `drift_rate`
/// while discounting stays at `r`; for a payoff with single-signed delta
/// this is the risk-averse problem with `drift_rate = r ± s sigma`.
pub fn solve_drift_shifted(
    params: &EuroParams,
    payoff: &Payoff,
    grid: &Grid,
    drift_rate: f64,
    scheme: Scheme,
) -> Result<PDESolution> {
    solve_linear_family(params, payoff, grid, scheme, DriftModel::Fixed { rate: drift_rate })
}

fn solve_linear_family(
    params: &EuroParams,
    payoff: &Payoff,
    grid: &Grid,
    scheme: Scheme,
    model: DriftModel,
) -> Result<PDESolution> {
    params.validate()?;
    grid.validate()?;
    scheme.validate()?;
    let problem = Problem {
        params,
        payoff,
        grid,
        scheme,
    };
    let x = grid.nodes();
    let op = Operator {
        x: &x,
        r: params.rate,
        sigma: params.sigma,
        model,
    };
    let times = problem.times();
    let thetas = problem.step_theta();
    let nt = grid.nt;
    let nx = x.len();

    let mut values = vec![Vec::new(); nt + 1];
    values[nt] = x.iter().map(|&s| payoff.value(s)).collect();
    let mut policies = vec![Vec::new(); nt];
    let mut iterations = vec![0usize; nt];
    let mut policy = initial_policy(payoff, &x);

    for k in (0..nt).rev() {
        let tau = params.expiry - times[k];
        let step = StepSetup {
            op: &op,
            dt: times[k + 1] - times[k],
            theta: thetas[k],
            lower: problem.boundary(&op, x[0], tau),
            upper: problem.boundary(&op, x[nx - 1], tau),
        };
        let (rhs, explicit_policy) = step.rhs(&values[k + 1], &policy);
        if step.theta == 0.0 {
            step.check_explicit_stability(&explicit_policy)?;
            let mut v = rhs;
            v[0] = step.lower;
            v[nx - 1] = step.upper;
            values[k] = v;
            policy = explicit_policy;
            iterations[k] = 1;
            policies[k] = policy.clone();
            continue;
        }
        let mut sweeps = 0;
        let v = loop {
            sweeps += 1;
            let (a, b, c, d) = step.system(&rhs, &policy);
            let interior = solve_tridiagonal(&a, &b, &c, &d);
            let mut v = Vec::with_capacity(nx);
            v.push(step.lower);
            v.extend_from_slice(&interior);
            v.push(step.upper);
            let next = op.best_policy(&v, &policy);
            if next == policy {
                break v;
            }
            if sweeps >= scheme.max_policy_sweeps {
                let changed = next.iter().zip(&policy).filter(|(a, b)| a != b).count();
                return Err(Error::Solver {
                    message: format!("policy iteration not stable; {changed} nodes still switching"),
                    time_level: k,
                    iterations: sweeps,
                });
            }
            policy = next;
        };
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Solver {
                message: "non-finite values".into(),
                time_level: k,
                iterations: sweeps,
            });
        }
        values[k] = v;
        iterations[k] = sweeps;
        policies[k] = policy.clone();
    }

    let mut solution = PDESolution {
        grid: *grid,
        x: x.clone(),
        times,
        values,
        step_theta: thetas,
        max_residual: 0.0,
        iterations_per_step: iterations,
        policies,
    };
    solution.max_residual = residual_with(&solution, &op);
    Ok(solution)
}

/// Largest scaled residual `|R| / (1 + |V|)` of the discretised equation over
/// all interior nodes and all steps; the terminal slice has no residual.
pub fn residual_check(solution: &PDESolution, params: &EuroParams, side: Side) -> f64 {
    let op = Operator {
        x: &solution.x,
        r: params.rate,
        sigma: params.sigma,
        model: DriftModel::RiskAverse {
            side,
            s_sigma: params.s_rho * params.sigma,
        },
    };
    residual_with(solution, &op)
}

fn residual_with(solution: &PDESolution, op: &Operator) -> f64 {
    let nx = solution.x.len();
    let nt = solution.times.len() - 1;
    let start = vec![1i8; nx];
    let mut worst = 0.0_f64;
    for k in 0..nt {
        let dt = solution.times[k + 1] - solution.times[k];
        let theta = solution.step_theta[k];
        let (now, next) = (&solution.values[k], &solution.values[k + 1]);
        let l_now = op.apply(&op.best_policy(now, &start), now);
        let l_next = op.apply(&op.best_policy(next, &start), next);
        for i in 1..nx - 1 {
            let r = (next[i] - now[i]) / dt + theta * l_now[i] + (1.0 - theta) * l_next[i];
            worst = worst.max(r.abs() / (1.0 + now[i].abs()));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedform;

    fn params(s_rho: f64) -> EuroParams {
        EuroParams::new(1.0, 1.2, 0.03, 0.15, 1.0, s_rho).unwrap()
    }

    fn max_error_on_band(sol: &PDESolution, p: &EuroParams, kind: OptionKind, side: Side) -> f64 {
        let k = p.strike;
        sol.x
            .iter()
            .zip(sol.initial())
            .filter(|(x, _)| **x >= 0.5 * k && **x <= 2.0 * k)
            .map(|(&x, &v)| (v - closedform::value(&p.with_spot(x), kind, side).unwrap()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(0.0, 1.0, 2, 10, Spacing::Uniform).is_err());
        assert!(Grid::new(0.0, 1.0, 10, 0, Spacing::Uniform).is_err());
        assert!(Grid::new(0.0, 1.0, 10, 10, Spacing::LogUniform).is_err());
        assert!(Grid::new(1.0, 1.0, 10, 10, Spacing::Uniform).is_err());
        let g = Grid::for_strike(1.2, 401, 100).unwrap();
        assert!(g.nodes().iter().any(|x| (x - 1.2).abs() < 1e-14));
        let lg = Grid::new(0.01, 10.0, 50, 10, Spacing::LogUniform).unwrap().nodes();
        assert!((lg[0] - 0.01).abs() < 1e-15 && (lg[49] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn piecewise_payoff_extends_linearly() {
        let straddle = Payoff::piecewise_linear(vec![(0.0, 1.0), (1.0, 0.0), (2.0, 1.0)]).unwrap();
        assert!((straddle.value(3.0) - 2.0).abs() < 1e-15);
        assert!((straddle.value(0.5) - 0.5).abs() < 1e-15);
        assert!(Payoff::piecewise_linear(vec![(1.0, 0.0)]).is_err());
        assert!(Payoff::piecewise_linear(vec![(1.0, 0.0), (1.0, 2.0)]).is_err());
        let (slope, intercept) = Payoff::call(1.0).linear_piece(5.0);
        assert_eq!((slope, intercept), (1.0, -1.0));
    }

    #[test]
    fn tridiagonal_solver() {
        let a = [0.0, -1.0, -1.0];
        let b = [4.0, 4.0, 4.0];
        let c = [-1.0, -1.0, 0.0];
        let u = solve_tridiagonal(&a, &b, &c, &[3.0, 2.0, 3.0]);
        for x in u {
            assert!((x - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn call_ask_matches_closed_form() {
        let p = params(0.2);
        let grid = Grid::for_strike(1.2, 400, 400).unwrap();
        let sol = solve_european(&p, &Payoff::call(1.2), Side::Ask, &grid).unwrap();
        let err = max_error_on_band(&sol, &p, OptionKind::Call, Side::Ask);
        assert!(err < 1e-3, "max error {err}");
        assert!(sol.max_residual < 1e-10, "{}", sol.max_residual);
    }

    #[test]
    fn monotone_payoff_gives_constant_policy() {
        let p = params(0.3);
        let grid = Grid::for_strike(1.2, 201, 100).unwrap();
        for (payoff, side, sign) in [
            (Payoff::call(1.2), Side::Ask, 1.0),
            (Payoff::call(1.2), Side::Bid, -1.0),
            (Payoff::put(1.2), Side::Ask, -1.0),
            (Payoff::put(1.2), Side::Bid, 1.0),
        ] {
            let nl = solve_european(&p, &payoff, side, &grid).unwrap();
            let y0 = nl.policies[0][1];
            assert!(nl
                .policies
                .iter()
                .all(|pol| pol[1..pol.len() - 1].iter().all(|&y| y == y0)));
            let rate = 0.03 + sign * 0.3 * 0.15;
            let lin = solve_drift_shifted(&p, &payoff, &grid, rate, Scheme::default()).unwrap();
            for (a, b) in nl.initial().iter().zip(lin.initial()) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn straddle_switches_policy_across_the_strike() {
        let p = params(0.3);
        let grid = Grid::for_strike(1.2, 201, 100).unwrap();
        let straddle = Payoff::piecewise_linear(vec![(0.0, 1.2), (1.2, 0.0), (2.4, 1.2)]).unwrap();
        let sol = solve_european(&p, &straddle, Side::Ask, &grid).unwrap();
        let pol = &sol.policies[0];
        assert_eq!(pol[1], -1);
        assert_eq!(pol[pol.len() - 2], 1);
        assert!(sol.max_residual < 1e-10);
        assert!(sol.iterations_per_step.iter().any(|&n| n > 1));
    }

    #[test]
    fn explicit_scheme_enforces_cfl() {
        let p = params(0.1);
        let grid = Grid::for_strike(1.2, 201, 10).unwrap();
        let explicit = Scheme {
            theta: 0.0,
            rannacher_steps: 0,
            ..Scheme::default()
        };
        let r = solve_european_with(&p, &Payoff::call(1.2), Side::Ask, &grid, explicit);
        assert!(matches!(r, Err(Error::Parameter { name: "dt", .. })));
        let fine_time = Grid {
            nt: 20_000,
            ..Grid::for_strike(1.2, 101, 1).unwrap()
        };
        assert!(solve_european_with(&p, &Payoff::call(1.2), Side::Ask, &fine_time, explicit).is_ok());
    }

    #[test]
    fn policy_iteration_cap_is_reported() {
        let p = params(0.3);
        let grid = Grid::for_strike(1.2, 101, 10).unwrap();
        let straddle = Payoff::piecewise_linear(vec![(0.0, 1.2), (1.2, 0.0), (2.4, 1.2)]).unwrap();
        let tight = Scheme {
            max_policy_sweeps: 1,
            ..Scheme::default()
        };
        let r = solve_european_with(&p, &straddle, Side::Ask, &grid, tight);
        assert!(matches!(r, Err(Error::Solver { .. })), "{r:?}");
    }

    #[test]
    fn log_grid_solve() {
        let p = params(0.1);
        let grid = Grid::new(0.05, 6.0, 400, 300, Spacing::LogUniform).unwrap();
        let sol = solve_european(&p, &Payoff::put(1.2), Side::Bid, &grid).unwrap();
        let err = max_error_on_band(&sol, &p, OptionKind::Put, Side::Bid);
        assert!(err < 2e-3, "{err}");
    }

    #[test]
    fn interpolation_reproduces_quadratics() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let vs: Vec<f64> = xs.iter().map(|x| 2.0 * x * x - x + 1.0).collect();
        for &x in &[0.0, 0.1, 1.37, 2.69, 2.7] {
            assert!((interpolate_quadratic(&xs, &vs, x) - (2.0 * x * x - x + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_spread_is_black_scholes() {
        let p = params(0.0);
        let grid = Grid::for_strike(1.2, 400, 400).unwrap();
        for kind in [OptionKind::Call, OptionKind::Put] {
            let payoff = Payoff::Vanilla { kind, strike: 1.2 };
            let sol = solve_european(&p, &payoff, Side::Bid, &grid).unwrap();
            let worst = sol
                .x
                .iter()
                .zip(sol.initial())
                .filter(|(x, _)| **x >= 0.6 && **x <= 2.4)
                .map(|(&x, &v)| (v - crate::oracle::bs_reference(x, 1.2, 0.03, 0.0, 0.15, 1.0, kind)).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-3, "{kind:?} {worst}");
        }
    }

    #[test]
    fn spread_orders_solutions() {
        let grid = Grid::for_strike(1.2, 201, 100).unwrap();
        let solve = |s: f64, side| solve_european(&params(s), &Payoff::call(1.2), side, &grid).unwrap();
        let asks: Vec<_> = [0.0, 0.1, 0.3].iter().map(|&s| solve(s, Side::Ask)).collect();
        let bids: Vec<_> = [0.0, 0.1, 0.3].iter().map(|&s| solve(s, Side::Bid)).collect();
        for w in asks.windows(2) {
            assert!(w[0].initial().iter().zip(w[1].initial()).all(|(a, b)| *b >= a - 1e-12));
        }
        for w in bids.windows(2) {
            assert!(w[0].initial().iter().zip(w[1].initial()).all(|(a, b)| *b <= a + 1e-12));
        }
        for (b, a) in bids.iter().zip(&asks) {
            assert!(b.initial().iter().zip(a.initial()).all(|(b, a)| *b <= a + 1e-8));
        }
    }

    #[test]
    fn implicit_scheme_respects_payoff_bounds() {
        let p = params(0.3);
        let grid = Grid::for_strike(1.2, 201, 50).unwrap();
        let sol = solve_european_with(&p, &Payoff::put(1.2), Side::Ask, &grid, Scheme::implicit()).unwrap();
        for (k, slice) in sol.values.iter().enumerate() {
            let bound = 1.2 * (-0.03 * (1.0 - sol.times[k])).exp();
            assert!(slice.iter().all(|&v| v >= -1e-14 && v <= bound + 1e-12));
        }
    }

    #[test]
    fn spatial_refinement_converges() {
        let p = params(0.1);
        let errs: Vec<f64> = [101, 201, 401]
            .iter()
            .map(|&nx| {
                let grid = Grid::for_strike(1.2, nx, 800).unwrap();
                let sol = solve_european(&p, &Payoff::call(1.2), Side::Bid, &grid).unwrap();
                max_error_on_band(&sol, &p, OptionKind::Call, Side::Bid)
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.0, "{errs:?}");
        }
    }

    #[test]
    fn closed_form_surface_has_small_residual() {
        let p = params(0.2);
        let nx = 1801;
        let nt = 1000;
        let x: Vec<f64> = (0..nx).map(|i| 0.6 + 1.8 * i as f64 / (nx - 1) as f64).collect();
        let times: Vec<f64> = (0..=nt).map(|k| 0.5 * k as f64 / nt as f64).collect();
        for (kind, side) in [(OptionKind::Call, Side::Ask), (OptionKind::Put, Side::Bid)] {
            let values = times
                .iter()
                .map(|&t| {
                    x.iter()
                        .map(|&s| closedform::value(&p.with_spot(s).with_time(t), kind, side).unwrap())
                        .collect()
                })
                .collect();
            let surface = PDESolution::from_surface(x.clone(), times.clone(), values, 0.5).unwrap();
            let res = residual_check(&surface, &p, side);
            assert!(res < 1e-6, "{kind:?} {side:?} {res}");
            let wrong = residual_check(&surface, &p, side.opposite());
            assert!(wrong > 1e-3);
        }
    }
}
