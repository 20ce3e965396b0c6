//! Risk-averse Merton consumption–investment problem with power utility.
//!
//! The value function has the form `R(t, x) = f(t)^γ x^(1-γ) / (1-γ)` with
//! `f' = ν f - 1`, `f(T) = ε`. Two readings of the constant `ν` are offered:
//!
//! * [`NuVariant::Printed`]: the constant as printed, cross term `-s/σ`.
//! * [`NuVariant::DriftShift`]: classical Merton with `μ` replaced by `μ - sσ`.
//!
//! [`adjudicate`] measures which reading satisfies which form of the HJB
//! equation, using exact partial derivatives of the ansatz.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MertonParams {
    pub r: f64,
    pub mu: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub s_rho: f64,
    pub horizon: f64,
    pub w0: f64,
}

impl MertonParams {
    /// The consumption-figure setting: γ = 0.4, r = 0.01, μ = 0.1, σ = 0.3,
    /// ε = 0.1, T = 4, w0 = 1.
    pub fn reference(s_rho: f64) -> Self {
        Self {
            r: 0.01,
            mu: 0.1,
            sigma: 0.3,
            gamma: 0.4,
            epsilon: 0.1,
            s_rho,
            horizon: 4.0,
            w0: 1.0,
        }
    }

    pub fn with_s_rho(self, s_rho: f64) -> Self {
        Self { s_rho, ..self }
    }

    /// Largest spread with a nonnegative risky allocation, `(μ - r) / σ`.
    pub fn max_s_rho(&self) -> f64 {
        (self.mu - self.r) / self.sigma
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("r", self.r),
            ("mu", self.mu),
            ("sigma", self.sigma),
            ("gamma", self.gamma),
            ("epsilon", self.epsilon),
            ("s_rho", self.s_rho),
            ("T", self.horizon),
            ("w0", self.w0),
        ] {
            if !v.is_finite() {
                return Err(Error::param(name, v, "must be finite"));
            }
        }
        if !(self.sigma > 0.0) {
            return Err(Error::param("sigma", self.sigma, "must be > 0"));
        }
        if self.gamma < 0.0 {
            return Err(Error::param("gamma", self.gamma, "must be >= 0"));
        }
        if self.gamma == 0.0 || self.gamma == 1.0 {
            return Err(Error::Domain(format!(
                "gamma = {} is excluded (need gamma not in {{0, 1}})",
                self.gamma
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::param("epsilon", self.epsilon, "must be > 0"));
        }
        if self.s_rho < 0.0 {
            return Err(Error::param("s_rho", self.s_rho, "must be >= 0"));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::param("T", self.horizon, "must be > 0"));
        }
        if !(self.w0 > 0.0) {
            return Err(Error::param("w0", self.w0, "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuVariant {
    Printed,
    DriftShift,
}

impl NuVariant {
    pub const ALL: [NuVariant; 2] = [NuVariant::Printed, NuVariant::DriftShift];

    pub fn as_str(self) -> &'static str {
        match self {
            NuVariant::Printed => "printed",
            NuVariant::DriftShift => "drift_shift",
        }
    }
}

impl std::str::FromStr for NuVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "printed" => Ok(NuVariant::Printed),
            "drift_shift" | "driftshift" => Ok(NuVariant::DriftShift),
            other => Err(Error::Validation(format!(
                "unknown nu variant '{other}' (printed|drift_shift)"
            ))),
        }
    }
}

pub fn nu(params: &MertonParams, variant: NuVariant) -> Result<f64> {
    params.validate()?;
    let MertonParams {
        r,
        mu,
        sigma,
        gamma: g,
        s_rho: s,
        ..
    } = *params;
    let k = (1.0 - g) / g;
    Ok(match variant {
        NuVariant::Printed => {
            let c1 = ((mu - r).powi(2) + s * s * sigma * sigma) / (2.0 * sigma * sigma);
            -r * k - (k / g) * (c1 - s / sigma)
        }
        NuVariant::DriftShift => {
            let excess = (mu - r - s * sigma).max(0.0);
            -k * (r + excess * excess / (2.0 * sigma * sigma * g))
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MertonSolution {
    pub params: MertonParams,
    pub variant: NuVariant,
    pub nu: f64,
    pub pi_star: f64,
}

impl MertonSolution {
    /// `f(t) = ε e^(-ντ) + (1 - e^(-ντ)) / ν` with `τ = T - t`; equals
    /// `ε + τ` at `ν = 0`.
    pub fn f(&self, t: f64) -> f64 {
        let tau = self.params.horizon - t;
        let nu = self.nu;
        let growth = if nu.abs() * tau < 1e-300 {
            tau
        } else {
            -(-nu * tau).exp_m1() / nu
        };
        self.params.epsilon * (-nu * tau).exp() + growth
    }

    /// `f'(t) = ν f(t) - 1`.
    pub fn f_prime(&self, t: f64) -> f64 {
        self.nu * self.f(t) - 1.0
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        let g = self.params.gamma;
        self.f(t).powf(g) * x.powf(1.0 - g) / (1.0 - g)
    }

    /// Consumption rate `x / f(t)`.
    pub fn consumption(&self, t: f64, x: f64) -> f64 {
        x / self.f(t)
    }

    /// `(R_t, R_x, R_xx)` of the ansatz.
    pub fn partials(&self, t: f64, x: f64) -> (f64, f64, f64) {
        let g = self.params.gamma;
        let f = self.f(t);
        let fg = f.powf(g);
        let r_t = g * f.powf(g - 1.0) * self.f_prime(t) * x.powf(1.0 - g) / (1.0 - g);
        let r_x = fg * x.powf(-g);
        let r_xx = -g * fg * x.powf(-g - 1.0);
        (r_t, r_x, r_xx)
    }
}

pub fn solution(params: &MertonParams, variant: NuVariant) -> Result<MertonSolution> {
    let nu = nu(params, variant)?;
    let pi_star = pi_star(params)?;
    Ok(MertonSolution {
        params: *params,
        variant,
        nu,
        pi_star,
    })
}

/// `max((μ - r - sσ) / (σ² γ), 0)`.
pub fn pi_star(params: &MertonParams) -> Result<f64> {
    params.validate()?;
    let p = params;
    Ok(((p.mu - p.r - p.s_rho * p.sigma) / (p.sigma * p.sigma * p.gamma)).max(0.0))
}

/// The equation a residual is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquationForm {
    /// The reduced equation with the `(μ-r)² + s²σ²` and `s R_x|R_x| / (σ R_xx)` terms.
    Reduced,
    /// The control form, maximised exactly over the allocation and consumption.
    Control,
}

impl EquationForm {
    pub const ALL: [EquationForm; 2] = [EquationForm::Reduced, EquationForm::Control];

    pub fn as_str(self) -> &'static str {
        match self {
            EquationForm::Reduced => "reduced",
            EquationForm::Control => "control",
        }
    }
}

// Residual and the sum of absolute term sizes at one point.
fn pointwise(params: &MertonParams, form: EquationForm, t_x: (f64, f64), d: (f64, f64, f64)) -> (f64, f64) {
    let MertonParams {
        r,
        mu,
        sigma,
        gamma: g,
        s_rho: s,
        ..
    } = *params;
    let (_, x) = t_x;
    let (r_t, r_x, r_xx) = d;
    let terms: Vec<f64> = match form {
        EquationForm::Reduced => vec![
            r_t,
            -((mu - r).powi(2) + s * s * sigma * sigma) * r_x * r_x / (2.0 * sigma * sigma * r_xx),
            s * r_x * r_x.abs() / (sigma * r_xx),
            r * x * r_x,
            g / (1.0 - g) * r_x.powf((g - 1.0) / g),
        ],
        EquationForm::Control => {
            // concave in the allocation on each half line; compare the two
            // one-sided optima and zero
            let hamiltonian = |pi: f64| {
                (mu - r) * pi * x * r_x + 0.5 * sigma * sigma * pi * pi * x * x * r_xx
                    - s * (sigma * pi * x * r_x).abs()
            };
            let curvature = sigma * sigma * x * x * r_xx;
            let up = (-((mu - r - s * sigma * r_x.signum()) * x * r_x) / curvature).max(0.0);
            let down = (-((mu - r + s * sigma * r_x.signum()) * x * r_x) / curvature).min(0.0);
            let best = hamiltonian(up).max(hamiltonian(down)).max(hamiltonian(0.0));
            let c = r_x.powf(-1.0 / g);
            let utility = c.powf(1.0 - g) / (1.0 - g) - c * r_x;
            vec![r_t, r * x * r_x, best, utility]
        }
    };
    let sum: f64 = terms.iter().sum();
    let scale: f64 = terms.iter().map(|v| v.abs()).sum();
    (sum, scale)
}

/// Largest relative residual `|Σ terms| / Σ |terms|` of `form` over the
/// `(t, x)` grid, using the exact ansatz partials.
pub fn hjb_residual(
    params: &MertonParams,
    variant: NuVariant,
    form: EquationForm,
    ts: &[f64],
    xs: &[f64],
) -> Result<f64> {
    residual_impl(params, variant, form, ts, xs, |sol, t, x| sol.partials(t, x))
}

/// As [`hjb_residual`] with central finite differences of `R` in place of
/// the exact partials.
pub fn hjb_residual_fd(
    params: &MertonParams,
    variant: NuVariant,
    form: EquationForm,
    ts: &[f64],
    xs: &[f64],
) -> Result<f64> {
    residual_impl(params, variant, form, ts, xs, |sol, t, x| {
        let ht = 1e-5 * sol.params.horizon;
        let hx = 1e-4 * x;
        let v = |dt: f64| sol.value(t + dt, x);
        let r_t = if t - ht < 0.0 {
            (-3.0 * v(0.0) + 4.0 * v(ht) - v(2.0 * ht)) / (2.0 * ht)
        } else if t + ht > sol.params.horizon {
            (3.0 * v(0.0) - 4.0 * v(-ht) + v(-2.0 * ht)) / (2.0 * ht)
        } else {
            (v(ht) - v(-ht)) / (2.0 * ht)
        };
        let r_x = (sol.value(t, x + hx) - sol.value(t, x - hx)) / (2.0 * hx);
        let r_xx = (sol.value(t, x + hx) - 2.0 * sol.value(t, x) + sol.value(t, x - hx)) / (hx * hx);
        (r_t, r_x, r_xx)
    })
}

fn residual_impl(
    params: &MertonParams,
    variant: NuVariant,
    form: EquationForm,
    ts: &[f64],
    xs: &[f64],
    derivs: impl Fn(&MertonSolution, f64, f64) -> (f64, f64, f64),
) -> Result<f64> {
    let sol = solution(params, variant)?;
    if let Some(&x) = xs.iter().find(|&&x| !(x > 0.0)) {
        return Err(Error::param("x", x, "wealth grid must be strictly positive"));
    }
    if let Some(&t) = ts.iter().find(|&&t| !(0.0..=params.horizon).contains(&t)) {
        return Err(Error::param("t", t, "time grid must lie in [0, T]"));
    }
    let mut worst = 0.0_f64;
    for &t in ts {
        for &x in xs {
            let (res, scale) = pointwise(params, form, (t, x), derivs(&sol, t, x));
            worst = worst.max(res.abs() / scale.max(f64::MIN_POSITIVE));
        }
    }
    Ok(worst)
}

/// Integrates `f' = ν f - 1` backward from `f(T) = ε` with classical RK4 and
/// returns the largest deviation from the closed form, relative to `max(1, |f|)`.
pub fn ode_check(params: &MertonParams, variant: NuVariant) -> Result<f64> {
    let sol = solution(params, variant)?;
    // at least 4000 steps, and |ν h| <= 0.01 so the truncation error stays negligible
    let steps = ((params.horizon * sol.nu.abs() / 0.01).ceil() as usize).clamp(4000, 2_000_000);
    let h = -params.horizon / steps as f64;
    let rhs = |f: f64| sol.nu * f - 1.0;
    let mut f = params.epsilon;
    let dev = |approx: f64, exact: f64| (approx - exact).abs() / exact.abs().max(1.0);
    let mut worst = dev(f, sol.f(params.horizon));
    for k in 0..steps {
        let k1 = rhs(f);
        let k2 = rhs(f + 0.5 * h * k1);
        let k3 = rhs(f + 0.5 * h * k2);
        let k4 = rhs(f + h * k3);
        f += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let t = params.horizon + h * (k + 1) as f64;
        worst = worst.max(dev(f, sol.f(t.max(0.0))));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsumptionRow {
    pub s_rho: f64,
    pub consumption: f64,
    pub pi_star: f64,
    pub nu: f64,
}

/// Initial consumption `c*(0, w0)` and allocation per spread.
pub fn consumption_curve(params: &MertonParams, s_rho_grid: &[f64], variant: NuVariant) -> Result<Vec<ConsumptionRow>> {
    let cap = params.max_s_rho();
    s_rho_grid
        .iter()
        .map(|&s| {
            if s >= cap * (1.0 - 1e-12) {
                return Err(Error::Domain(format!(
                    "s_rho = {s} must stay below (mu - r) / sigma = {cap}"
                )));
            }
            let sol = solution(&params.with_s_rho(s), variant)?;
            Ok(ConsumptionRow {
                s_rho: s,
                consumption: sol.consumption(0.0, params.w0),
                pi_star: sol.pi_star,
                nu: sol.nu,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjudicationEntry {
    pub variant: NuVariant,
    pub form: EquationForm,
    pub nu: f64,
    pub max_residual: f64,
    pub fd_residual: f64,
    pub ode_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjudicationReport {
    pub params: MertonParams,
    pub times: Vec<f64>,
    pub wealth: Vec<f64>,
    pub entries: Vec<AdjudicationEntry>,
    /// Variant with the smaller residual for each equation form.
    pub canonical: Vec<(EquationForm, NuVariant)>,
}

impl AdjudicationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }
}

/// Residual of every variant under every equation form on a `(t, x)` grid.
pub fn adjudicate(params: &MertonParams) -> Result<AdjudicationReport> {
    let times: Vec<f64> = (0..=8).map(|k| params.horizon * k as f64 / 8.0).collect();
    let wealth: Vec<f64> = (0..=8).map(|k| params.w0 * 2f64.powi(k - 4)).collect();
    let mut entries = Vec::new();
    for form in EquationForm::ALL {
        for variant in NuVariant::ALL {
            entries.push(AdjudicationEntry {
                variant,
                form,
                nu: nu(params, variant)?,
                max_residual: hjb_residual(params, variant, form, &times, &wealth)?,
                fd_residual: hjb_residual_fd(params, variant, form, &times, &wealth)?,
                ode_deviation: ode_check(params, variant)?,
            });
        }
    }
    let canonical = EquationForm::ALL
        .iter()
        .map(|&form| {
            let best = entries
                .iter()
                .filter(|e| e.form == form)
                .min_by(|a, b| a.max_residual.total_cmp(&b.max_residual))
                .expect("two variants per form");
            (form, best.variant)
        })
        .collect();
    Ok(AdjudicationReport {
        params: *params,
        times,
        wealth,
        entries,
        canonical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(p: &MertonParams) -> (Vec<f64>, Vec<f64>) {
        let ts = (0..=10).map(|k| p.horizon * k as f64 / 10.0).collect();
        let xs = [0.1, 0.5, 1.0, 2.0, 10.0].to_vec();
        (ts, xs)
    }

    #[test]
    fn variants_coincide_without_spread() {
        let p = MertonParams::reference(0.0);
        let classical = -(0.6 / 0.4) * (0.01 + 0.09f64.powi(2) / (2.0 * 0.09 * 0.4));
        for v in NuVariant::ALL {
            assert!((nu(&p, v).unwrap() - classical).abs() < 1e-15);
        }
        let (ts, xs) = grid(&p);
        for v in NuVariant::ALL {
            for form in EquationForm::ALL {
                assert!(hjb_residual(&p, v, form, &ts, &xs).unwrap() < 1e-12);
            }
        }
    }

    #[test]
    fn each_variant_solves_its_equation() {
        let p = MertonParams::reference(0.15);
        let (ts, xs) = grid(&p);
        assert!(hjb_residual(&p, NuVariant::Printed, EquationForm::Reduced, &ts, &xs).unwrap() < 1e-12);
        assert!(hjb_residual(&p, NuVariant::DriftShift, EquationForm::Control, &ts, &xs).unwrap() < 1e-12);
        assert!(hjb_residual(&p, NuVariant::Printed, EquationForm::Control, &ts, &xs).unwrap() > 1e-4);
        assert!(hjb_residual(&p, NuVariant::DriftShift, EquationForm::Reduced, &ts, &xs).unwrap() > 1e-4);
        let fd = hjb_residual_fd(&p, NuVariant::Printed, EquationForm::Reduced, &ts, &xs).unwrap();
        assert!(fd < 1e-5, "{fd}");
    }

    #[test]
    fn terminal_condition_and_limits() {
        let p = MertonParams::reference(0.1);
        let sol = solution(&p, NuVariant::Printed).unwrap();
        assert!((sol.f(4.0) - 0.1).abs() < 1e-12);
        let x = 1.7;
        assert!((sol.value(4.0, x) - 0.1f64.powf(0.4) * x.powf(0.6) / 0.6).abs() < 1e-12);
        assert!((sol.consumption(4.0, x) - x / 0.1).abs() < 1e-10);
        let flat = MertonSolution { nu: 0.0, ..sol };
        assert!((flat.f(1.0) - (0.1 + 3.0)).abs() < 1e-15);
        let tiny = MertonSolution { nu: 1e-12, ..sol };
        assert!((tiny.f(1.0) - 3.1).abs() < 1e-10);
    }

    #[test]
    fn ode_agrees_with_closed_form() {
        for s in [0.0, 0.1, 0.25] {
            for v in NuVariant::ALL {
                let dev = ode_check(&MertonParams::reference(s), v).unwrap();
                assert!(dev < 1e-8, "{dev}");
            }
        }
    }

    #[test]
    fn allocation_falls_to_zero_at_the_cap() {
        let p = MertonParams::reference(0.0);
        assert!((pi_star(&p).unwrap() - 0.09 / (0.09 * 0.4)).abs() < 1e-14);
        let cap = p.max_s_rho();
        assert_eq!(pi_star(&p.with_s_rho(cap)).unwrap(), 0.0);
        let pis: Vec<f64> = (0..=10)
            .map(|k| pi_star(&p.with_s_rho(cap * k as f64 / 10.0)).unwrap())
            .collect();
        assert!(pis.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn consumption_rises_with_spread() {
        let p = MertonParams::reference(0.0);
        let grid: Vec<f64> = (0..30).map(|k| k as f64 * 0.01).collect();
        for v in NuVariant::ALL {
            let rows = consumption_curve(&p, &grid, v).unwrap();
            assert!(rows.windows(2).all(|w| w[1].consumption >= w[0].consumption));
        }
        assert!(matches!(
            consumption_curve(&p, &[0.3], NuVariant::Printed),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn consumption_is_linear_in_wealth() {
        let sol = solution(&MertonParams::reference(0.2), NuVariant::Printed).unwrap();
        let c1 = sol.consumption(1.0, 1.0);
        for x in [0.5, 2.0, 7.0] {
            assert!((sol.consumption(1.0, x) - x * c1).abs() < 1e-13 * x);
        }
    }

    #[test]
    fn rejects_excluded_gamma() {
        for g in [0.0, 1.0] {
            let p = MertonParams {
                gamma: g,
                ..MertonParams::reference(0.0)
            };
            assert!(matches!(nu(&p, NuVariant::Printed), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn adjudication_picks_a_variant_per_form() {
        let report = adjudicate(&MertonParams::reference(0.15)).unwrap();
        assert_eq!(report.entries.len(), 4);
        assert!(report.canonical.contains(&(EquationForm::Reduced, NuVariant::Printed)));
        assert!(report
            .canonical
            .contains(&(EquationForm::Control, NuVariant::DriftShift)));
        assert!(report.to_json().contains("drift_shift"));
    }
}
