//! Option pricing and portfolio choice under nested coherent risk measures.
//!
//! * [`riskcore`]: coherent measures on finite distributions and the
//!   divisibility constant `s_rho`.
//! * [`lattice`]: nested risk evaluation on binomial trees.
//! * [`closedform`]: explicit risk-averse European values.
//! * [`pdesolve`] and [`american`]: finite-difference solvers for the
//!   nonlinear pricing PDE and its free-boundary version.
//! * [`merton`]: the risk-averse consumption–investment problem.
//! * [`oracle`]: brute-force and Monte Carlo cross-checks.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod american;
pub mod closedform;
pub mod error;
pub mod lattice;
pub mod merton;
pub mod normal;
pub mod oracle;
pub mod pdesolve;
pub mod quadrature;
pub mod report;
pub mod riskcore;
pub mod selftest;

pub use closedform::{EuroParams, OptionKind};
pub use error::{Error, Result};
pub use lattice::BinomialTree;
pub use riskcore::{DiscreteDistribution, RiskKind, RiskSpec, Side};
