//! Seeded oracle-agreement suite behind the `selftest` command.
//!
//! The report holds only computed numbers and verdicts (no timings), so two
//! runs with the same seed serialise to identical bytes.

use serde::{Deserialize, Serialize};

use crate::american::{solve_american, AmerParams};
use crate::closedform::{self, EuroParams, OptionKind};
use crate::error::Result;
use crate::lattice::{self, build_tree, BinomialTree};
use crate::merton::{self, EquationForm, MertonParams, NuVariant};
use crate::oracle::{self, SeededSampler};
use crate::pdesolve::{solve_european, Grid, Payoff};
use crate::report::fmt_float;
use crate::riskcore::{self, LevelScaling, RiskSpec, Side};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfCheck {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTestReport {
    pub seed: u64,
    pub sampler: String,
    pub checks: Vec<SelfCheck>,
}

impl SelfTestReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("selftest seed={} sampler={}\n", self.seed, self.sampler);
        for c in &self.checks {
            out.push_str(&format!(
                "{} {} value={} tol={}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                fmt_float(c.value),
                fmt_float(c.tolerance)
            ));
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        out.push_str(&format!("{} checks, {} failed\n", self.checks.len(), failed));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }
}

fn at_most(name: &str, value: f64, tolerance: f64) -> SelfCheck {
    SelfCheck {
        name: name.to_string(),
        value,
        tolerance,
        passed: value <= tolerance,
    }
}

/// A random small lattice problem: tree, measure, call/put strike, side.
#[derive(Debug, Clone)]
pub struct LatticeCase {
    pub tree: BinomialTree,
    pub measure: RiskSpec,
    pub kind: OptionKind,
    pub strike: f64,
    pub side: Side,
}

/// Draws a lattice case with `1 <= n <= max_steps`.
pub fn random_lattice_case(rng: &mut SeededSampler, max_steps: usize) -> Result<LatticeCase> {
    loop {
        let n = 1 + rng.index(max_steps);
        let s0 = rng.uniform_in(0.5, 2.0);
        let r = rng.uniform_in(-0.02, 0.08);
        let sigma = rng.uniform_in(0.05, 0.6);
        let horizon = rng.uniform_in(0.1, 3.0);
        let measure = match rng.index(4) {
            0 => RiskSpec::expectation(),
            1 => RiskSpec::semi_deviation(1.0, rng.uniform_in(0.0, 1.0))?,
            2 => RiskSpec::semi_deviation(rng.uniform_in(1.0, 4.0), rng.uniform_in(0.0, 1.0))?
                .with_scaling(LevelScaling::SqrtDt),
            _ => RiskSpec::avar(rng.uniform_in(0.05, 0.95))?,
        };
        let kind = if rng.index(2) == 0 {
            OptionKind::Call
        } else {
            OptionKind::Put
        };
        let side = if rng.index(2) == 0 { Side::Bid } else { Side::Ask };
        let strike = s0 * rng.uniform_in(0.7, 1.3);
        // rejected draws (no-arbitrage violations, oversized levels) are redrawn
        let Ok(tree) = build_tree(s0, r, sigma, horizon, n) else {
            continue;
        };
        if measure.for_step(tree.dt()).is_err() {
            continue;
        }
        return Ok(LatticeCase {
            tree,
            measure,
            kind,
            strike,
            side,
        });
    }
}

/// Largest `|lattice - enumeration|` over `cases` random problems.
pub fn lattice_vs_enumeration(seed: u64, cases: usize, max_steps: usize) -> Result<f64> {
    let mut rng = SeededSampler::substream(seed, 3);
    let mut worst = 0.0_f64;
    for _ in 0..cases {
        let c = random_lattice_case(&mut rng, max_steps)?;
        let payoff = |s: f64| c.kind.payoff(s, c.strike);
        let lat = lattice::price_nested(&c.tree, &c.measure, payoff, c.side)?.value;
        let brute = oracle::enumerate_nested(&c.tree, &c.measure, payoff, c.side)?;
        worst = worst.max((lat - brute).abs());
    }
    Ok(worst)
}

pub fn run(seed: u64) -> Result<SelfTestReport> {
    let mut checks = Vec::new();

    let c1 = riskcore::s_rho(1.0, 0.5)?;
    checks.push(at_most(
        "s_rho(1,0.5) vs beta/sqrt(2pi)",
        (c1 - 0.5 / (2.0 * std::f64::consts::PI).sqrt()).abs(),
        1e-12,
    ));
    let c2 = riskcore::s_rho(2.0, 1.0)?;
    let probe = riskcore::s_rho_limit_probe(2.0, 1.0, &[1e-4])?[0];
    checks.push(at_most("s_rho(2,1) vs quadrature", (c2 - probe).abs(), 1e-10));

    checks.push(at_most(
        "lattice vs path enumeration",
        lattice_vs_enumeration(seed, 20, 10)?,
        1e-10,
    ));

    let mut worst = 0.0_f64;
    for &s in &[0.0, 0.1, 0.3] {
        for &x in &[0.6, 1.0, 1.2, 1.8] {
            let p = EuroParams::new(x, 1.2, 0.03, 0.15, 1.0, s)?;
            for kind in [OptionKind::Call, OptionKind::Put] {
                for side in [Side::Bid, Side::Ask] {
                    let q = p.spread(kind, side);
                    let a = closedform::value(&p, kind, side)?;
                    let b = oracle::bs_reference(x, 1.2, 0.03, q, 0.15, 1.0, kind);
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    checks.push(at_most("closed form vs dividend Black-Scholes", worst, 1e-12));

    let target = lattice::nested_wiener_value(1.0, 1.0, &[0.5; 4])?;
    let mc = oracle::mc_nested_wiener(1.0, 4, 1.0, 0.5, 100_000, seed)?;
    checks.push(SelfCheck {
        name: "nested Wiener value vs Monte Carlo (stderrs)".into(),
        value: (mc.estimate - target).abs() / mc.stderr,
        tolerance: 3.0,
        passed: (mc.estimate - target).abs() <= 3.0 * mc.stderr,
    });

    for (i, m) in [
        RiskSpec::expectation(),
        RiskSpec::semi_deviation(1.0, 0.5)?,
        RiskSpec::semi_deviation(2.0, 0.3)?,
        RiskSpec::avar(0.1)?,
    ]
    .iter()
    .enumerate()
    {
        let rep = riskcore::axiom_report(m, 200, seed.wrapping_add(i as u64))?;
        let worst = rep
            .axioms
            .iter()
            .chain(std::iter::once(&rep.bid_le_ask))
            .map(|a| a.worst_violation)
            .fold(0.0, f64::max);
        checks.push(SelfCheck {
            name: format!("axioms {}", m.label()),
            value: worst,
            tolerance: rep.tolerance,
            passed: rep.all_passed(),
        });
    }

    let p = EuroParams::new(1.0, 1.2, 0.03, 0.15, 1.0, 0.2)?;
    let grid = Grid::for_strike(1.2, 201, 200)?;
    let mut worst = 0.0_f64;
    for side in [Side::Bid, Side::Ask] {
        let sol = solve_european(&p, &Payoff::call(1.2), side, &grid)?;
        for (&x, &v) in sol.x.iter().zip(sol.initial()) {
            if (0.6..=2.4).contains(&x) {
                worst = worst.max((v - closedform::value(&p.with_spot(x), OptionKind::Call, side)?).abs());
            }
        }
    }
    checks.push(at_most("PDE vs closed form (201x200)", worst, 5e-3));

    let am = AmerParams::new(OptionKind::Put, 1.0, 1.0, 0.03, 0.15, 1.0, 0.2)?;
    let sol = solve_american(&am, Side::Bid, &Grid::for_strike(1.0, 201, 200)?)?;
    let crr = oracle::crr_american(1.0, 1.0, 0.03, -0.2 * 0.15, 0.15, 1.0, OptionKind::Put, 2000);
    checks.push(at_most(
        "American put bid vs CRR with risk dividend",
        (sol.value() - crr).abs(),
        2e-3,
    ));

    let mp = MertonParams::reference(0.1);
    let ode = NuVariant::ALL
        .iter()
        .map(|&v| merton::ode_check(&mp, v))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    checks.push(at_most("Merton RK4 vs closed form", ode, 1e-8));
    let m0 = MertonParams::reference(0.0);
    let ts: Vec<f64> = (0..=8).map(|k| 0.5 * k as f64).collect();
    let xs = [0.25, 1.0, 4.0];
    let mut hjb = 0.0_f64;
    for v in NuVariant::ALL {
        for f in EquationForm::ALL {
            hjb = hjb.max(merton::hjb_residual(&m0, v, f, &ts, &xs)?);
        }
    }
    checks.push(at_most("Merton HJB residual at s_rho = 0", hjb, 1e-9));

    let rows = lattice::avar_nesting_demo(1.0, &[1, 2, 4, 8, 16], 0.1)?;
    let increasing = rows.windows(2).all(|w| w[1].value > w[0].value);
    checks.push(SelfCheck {
        name: "nested AVaR increases with n".into(),
        value: rows.last().map_or(f64::NAN, |r| r.value),
        tolerance: rows.first().map_or(f64::NAN, |r| r.value),
        passed: increasing,
    });

    Ok(SelfTestReport {
        seed,
        sampler: SeededSampler::ALGORITHM.into(),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_cases_are_valid() {
        let mut rng = SeededSampler::new(9);
        for _ in 0..100 {
            let c = random_lattice_case(&mut rng, 12).unwrap();
            assert!(c.tree.steps() >= 1 && c.tree.steps() <= 12);
        }
    }

    #[test]
    fn report_text_is_stable() {
        let a = run(7).unwrap();
        assert!(a.all_passed(), "{}", a.to_text());
        assert_eq!(a.to_text(), run(7).unwrap().to_text());
    }
}
