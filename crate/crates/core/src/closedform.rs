//! Closed-form risk-averse Black–Scholes values.
//!
//! Every formula here is the dividend-yield Black–Scholes price with a
//! generalized spread `q`:
//!
//! * risk-averse pricing: `q = ∓ s_rho sigma` (call bid/ask) and
//!   `q = ± s_rho sigma` (put bid/ask),
//! * the limit of the nested semi-deviation lattice: `q = beta sigma / 2`,
//! * Garman–Kohlhagen FX options: `q = r_f`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::cdf;
use crate::riskcore::Side;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    pub fn payoff(self, spot: f64, strike: f64) -> f64 {
        match self {
            OptionKind::Call => (spot - strike).max(0.0),
            OptionKind::Put => (strike - spot).max(0.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OptionKind::Call => "call",
            OptionKind::Put => "put",
        }
    }
}

impl std::str::FromStr for OptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "call" => Ok(OptionKind::Call),
            "put" => Ok(OptionKind::Put),
            other => Err(Error::Validation(format!(
                "unknown option kind '{other}' (expected call|put)"
            ))),
        }
    }
}

/// Sign of the spread term in `d1^±`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpreadSign {
    Plus,
    Minus,
}

impl SpreadSign {
    fn value(self) -> f64 {
        match self {
            SpreadSign::Plus => 1.0,
            SpreadSign::Minus => -1.0,
        }
    }
}

/// Market and contract data of a European option.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EuroParams {
    pub spot: f64,
    pub strike: f64,
    pub rate: f64,
    pub sigma: f64,
    /// Valuation time `t`.
    pub time: f64,
    /// Expiry `T`.
    pub expiry: f64,
    /// Risk-aversion coefficient `s_rho`, in Sharpe-ratio units.
    pub s_rho: f64,
}

impl EuroParams {
    pub fn new(spot: f64, strike: f64, rate: f64, sigma: f64, expiry: f64, s_rho: f64) -> Result<Self> {
        let p = Self {
            spot,
            strike,
            rate,
            sigma,
            time: 0.0,
            expiry,
            s_rho,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spot > 0.0) || !self.spot.is_finite() {
            return Err(Error::param("x", self.spot, "spot must be positive"));
        }
        if !(self.strike > 0.0) || !self.strike.is_finite() {
            return Err(Error::param("K", self.strike, "strike must be positive"));
        }
        if !self.rate.is_finite() {
            return Err(Error::param("r", self.rate, "rate must be finite"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::param("sigma", self.sigma, "volatility must be positive"));
        }
        if !(self.time >= 0.0) {
            return Err(Error::param("t", self.time, "valuation time must be >= 0"));
        }
        if !(self.expiry >= self.time) || !self.expiry.is_finite() {
            return Err(Error::param("T", self.expiry, "expiry must not precede valuation time"));
        }
        if !(self.s_rho >= 0.0) || !self.s_rho.is_finite() {
            return Err(Error::param("s_rho", self.s_rho, "risk coefficient must be >= 0"));
        }
        Ok(())
    }

    pub fn tau(&self) -> f64 {
        self.expiry - self.time
    }

    pub fn with_spot(mut self, spot: f64) -> Self {
        self.spot = spot;
        self
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn with_s_rho(mut self, s_rho: f64) -> Self {
        self.s_rho = s_rho;
        self
    }

    /// The dividend-yield spread used for `kind` quoted on `side`.
    pub fn spread(&self, kind: OptionKind, side: Side) -> f64 {
        let q = self.s_rho * self.sigma;
        match (kind, side) {
            (OptionKind::Call, Side::Bid) | (OptionKind::Put, Side::Ask) => q,
            (OptionKind::Call, Side::Ask) | (OptionKind::Put, Side::Bid) => -q,
        }
    }
}

/// `(d1^±, d2^±)`.
pub fn d_values(params: &EuroParams, sign: SpreadSign) -> Result<(f64, f64)> {
    params.validate()?;
    let tau = params.tau();
    if tau <= 0.0 {
        return Err(Error::Domain("d-values are undefined at expiry; use the payoff".into()));
    }
    let q = -sign.value() * params.s_rho * params.sigma;
    Ok(d_pair(params.spot, params.strike, params.rate, q, params.sigma, tau))
}

fn d_pair(x: f64, k: f64, r: f64, q: f64, sigma: f64, tau: f64) -> (f64, f64) {
    let vol = sigma * tau.sqrt();
    let d1 = ((x / k).ln() + (r - q + 0.5 * sigma * sigma) * tau) / vol;
    (d1, d1 - vol)
}

/// Black–Scholes value with continuous yield `q`; returns the payoff at `tau = 0`.
pub fn dividend_value(kind: OptionKind, x: f64, k: f64, r: f64, q: f64, sigma: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return kind.payoff(x, k);
    }
    if x <= 0.0 {
        return match kind {
            OptionKind::Call => 0.0,
            OptionKind::Put => k * (-r * tau).exp(),
        };
    }
    let (d1, d2) = d_pair(x, k, r, q, sigma, tau);
    let fwd = x * (-q * tau).exp();
    let disc_k = k * (-r * tau).exp();
    match kind {
        OptionKind::Call => fwd * cdf(d1) - disc_k * cdf(d2),
        OptionKind::Put => disc_k * cdf(-d2) - fwd * cdf(-d1),
    }
}

/// Risk-averse value of `kind` on `side`.
pub fn value(params: &EuroParams, kind: OptionKind, side: Side) -> Result<f64> {
    params.validate()?;
    Ok(dividend_value(
        kind,
        params.spot,
        params.strike,
        params.rate,
        params.spread(kind, side),
        params.sigma,
        params.tau(),
    ))
}

/// `V^± = x e^{±s σ τ} Φ(d1^±) - K e^{-rτ} Φ(d2^±)`; ask takes `+`, bid `-`.
pub fn call_value(params: &EuroParams, side: Side) -> Result<f64> {
    value(params, OptionKind::Call, side)
}

/// `V^∓ = K e^{-rτ} Φ(-d2^∓) - x e^{∓s σ τ} Φ(-d1^∓)`; bid takes the upper
/// sign branch (`V^+`), ask the lower (`V^-`).
pub fn put_value(params: &EuroParams, side: Side) -> Result<f64> {
    value(params, OptionKind::Put, side)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadRow {
    pub s_rho: f64,
    pub bid: f64,
    pub ask: f64,
    pub spread: f64,
}

/// Bid, ask and spread of `kind` along a grid of risk coefficients.
pub fn spread_curve(params: &EuroParams, kind: OptionKind, s_rho_grid: &[f64]) -> Result<Vec<SpreadRow>> {
    s_rho_grid
        .iter()
        .map(|&s| {
            let p = params.with_s_rho(s);
            let bid = value(&p, kind, Side::Bid)?;
            let ask = value(&p, kind, Side::Ask)?;
            Ok(SpreadRow {
                s_rho: s,
                bid,
                ask,
                spread: ask - bid,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceRow {
    pub spot: f64,
    pub s_rho: f64,
    pub call_bid: f64,
    pub call_ask: f64,
    pub put_bid: f64,
    pub put_ask: f64,
}

/// Price-versus-spot table for each risk coefficient.
pub fn price_curves(params: &EuroParams, spots: &[f64], s_rho_list: &[f64]) -> Result<Vec<PriceRow>> {
    let mut rows = Vec::with_capacity(spots.len() * s_rho_list.len());
    for &s in s_rho_list {
        for &x in spots {
            let p = params.with_s_rho(s).with_spot(x);
            rows.push(PriceRow {
                spot: x,
                s_rho: s,
                call_bid: call_value(&p, Side::Bid)?,
                call_ask: call_value(&p, Side::Ask)?,
                put_bid: put_value(&p, Side::Bid)?,
                put_ask: put_value(&p, Side::Ask)?,
            });
        }
    }
    Ok(rows)
}

/// `(mu_averse - r) / sigma`, the signed Sharpe-ratio-style risk coefficient;
/// `r - mu_averse` is the Z-spread.
pub fn z_spread(mu_averse: f64, r: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::param("sigma", sigma, "volatility must be positive"));
    }
    Ok((mu_averse - r) / sigma)
}

/// Garman–Kohlhagen value of a call on a foreign currency.
pub fn garman_kohlhagen_value(x: f64, k: f64, r_d: f64, r_f: f64, sigma: f64, tau: f64) -> Result<f64> {
    if !(x > 0.0 && k > 0.0) {
        return Err(Error::Domain("spot and strike must be positive".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::param("sigma", sigma, "volatility must be positive"));
    }
    if !(tau >= 0.0) {
        return Err(Error::param("tau", tau, "time to expiry must be >= 0"));
    }
    Ok(dividend_value(OptionKind::Call, x, k, r_d, r_f, sigma, tau))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference(s_rho: f64) -> EuroParams {
        EuroParams::new(1.0, 1.2, 0.03, 0.15, 1.0, s_rho).unwrap()
    }

    #[test]
    fn d_values_at_the_money() {
        let p = EuroParams::new(1.2, 1.2, 0.03, 0.15, 1.0, 0.0).unwrap();
        let (d1, d2) = d_values(&p, SpreadSign::Plus).unwrap();
        assert!((d1 - 0.275).abs() < 1e-15);
        assert!((d1 - d2 - 0.15).abs() < 1e-15);
        assert_eq!(d_values(&p, SpreadSign::Minus).unwrap(), (d1, d2));
        let expired = EuroParams { time: 1.0, ..p };
        assert!(matches!(d_values(&expired, SpreadSign::Plus), Err(Error::Domain(_))));
    }

    #[test]
    fn d_values_carry_the_spread() {
        let p = reference(0.2);
        let (up, _) = d_values(&p, SpreadSign::Plus).unwrap();
        let (dn, _) = d_values(&p, SpreadSign::Minus).unwrap();
        assert!((up - dn - 2.0 * 0.2 * 0.15 * 1.0 / 0.15).abs() < 1e-14);
    }

    #[test]
    fn zero_spread_collapses_sides() {
        let p = reference(0.0);
        assert_eq!(call_value(&p, Side::Bid).unwrap(), call_value(&p, Side::Ask).unwrap());
        let parity = call_value(&p, Side::Bid).unwrap() - put_value(&p, Side::Bid).unwrap();
        assert!((parity - (1.0 - 1.2 * (-0.03_f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn ordering_of_sides() {
        let p = reference(0.1);
        assert!(call_value(&p, Side::Bid).unwrap() < call_value(&p, Side::Ask).unwrap());
        let p = reference(0.2);
        assert!(put_value(&p, Side::Bid).unwrap() < put_value(&p, Side::Ask).unwrap());
    }

    #[test]
    fn expiry_returns_payoff() {
        let p = EuroParams {
            time: 1.0,
            ..reference(0.3)
        };
        assert_eq!(call_value(&p.with_spot(1.5), Side::Ask).unwrap(), 1.5 - 1.2);
        assert_eq!(put_value(&p, Side::Bid).unwrap(), 1.2 - 1.0);
    }

    #[test]
    fn garman_kohlhagen_is_the_call_bid() {
        let p = reference(0.25);
        let gk = garman_kohlhagen_value(1.0, 1.2, 0.03, 0.25 * 0.15, 0.15, 1.0).unwrap();
        assert!((gk - call_value(&p, Side::Bid).unwrap()).abs() < 1e-12);
        let plain = garman_kohlhagen_value(1.0, 1.2, 0.03, 0.0, 0.15, 1.0).unwrap();
        assert!((plain - call_value(&reference(0.0), Side::Ask).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn z_spread_units() {
        assert_eq!(z_spread(0.03, 0.03, 0.2).unwrap(), 0.0);
        assert!((z_spread(0.06, 0.03, 0.15).unwrap() - 0.2).abs() < 1e-15);
        assert!(z_spread(0.06, 0.03, 0.0).is_err());
    }

    #[test]
    fn spread_curve_starts_at_zero_and_grows() {
        let grid: Vec<f64> = (0..=50).map(|i| i as f64 * 0.01).collect();
        for kind in [OptionKind::Call, OptionKind::Put] {
            let rows = spread_curve(&reference(0.0), kind, &grid).unwrap();
            assert_eq!(rows[0].spread, 0.0);
            assert!(rows.windows(2).all(|w| w[1].spread > w[0].spread), "{kind:?}");
        }
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(EuroParams::new(-1.0, 1.0, 0.0, 0.2, 1.0, 0.0).is_err());
        assert!(EuroParams::new(1.0, 1.0, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(EuroParams::new(1.0, 1.0, 0.0, 0.2, 1.0, -0.1).is_err());
    }
}
