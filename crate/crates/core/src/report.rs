//! Plain-data tables for CSV/JSON output.
//!
//! Floats are written with 12 significant digits in the shortest of fixed or
//! scientific notation, so identical inputs give byte-identical files.

use serde::Serialize;

use crate::american::ExerciseBoundary;
use crate::closedform::{PriceRow, SpreadRow};
use crate::error::{Error, Result};
use crate::lattice::{AvarNestingRow, ConvergenceRow};
use crate::merton::ConsumptionRow;
use crate::pdesolve::PDESolution;

pub const SIGNIFICANT_DIGITS: usize = 12;

/// `%.12g`-style formatting.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Missing,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => fmt_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Num)
    }
}

/// A table with one header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| Error::Evaluation(format!("csv: {e}"));
        w.write_record(&self.header).map_err(fail)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(fail)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Evaluation(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Evaluation(e.to_string()))
    }

    /// Array of objects keyed by the header; numbers stay numbers.
    pub fn to_json(&self) -> String {
        let records: Vec<serde_json::Map<String, serde_json::Value>> = self
            .rows
            .iter()
            .map(|row| {
                self.header
                    .iter()
                    .zip(row)
                    .map(|(k, c)| {
                        let v = match c {
                            Cell::Num(v) => fmt_float(*v)
                                .parse::<f64>()
                                .ok()
                                .and_then(serde_json::Number::from_f64)
                                .map_or(serde_json::Value::Null, serde_json::Value::Number),
                            Cell::Int(v) => (*v).into(),
                            Cell::Text(s) => s.clone().into(),
                            Cell::Missing => serde_json::Value::Null,
                        };
                        (k.clone(), v)
                    })
                    .collect()
            })
            .collect();
        serde_json::to_string_pretty(&records).expect("json of plain values")
    }
}

/// Any serialisable value as pretty JSON.
pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serialises")
}

pub fn convergence_table(rows: &[ConvergenceRow]) -> Table {
    let mut t = Table::new(&["n", "dt", "bid", "ask", "reference", "abs_error"]);
    for r in rows {
        t.push(vec![
            r.n.into(),
            r.dt.into(),
            r.bid.into(),
            r.ask.into(),
            r.reference.into(),
            r.abs_error.into(),
        ]);
    }
    t
}

pub fn avar_table(rows: &[AvarNestingRow]) -> Table {
    let mut t = Table::new(&["n", "value"]);
    for r in rows {
        t.push(vec![r.n.into(), r.value.into()]);
    }
    t
}

pub fn spread_table(rows: &[SpreadRow]) -> Table {
    let mut t = Table::new(&["s_rho", "bid", "ask", "spread"]);
    for r in rows {
        t.push(vec![r.s_rho.into(), r.bid.into(), r.ask.into(), r.spread.into()]);
    }
    t
}

pub fn price_table(rows: &[PriceRow]) -> Table {
    let mut t = Table::new(&["spot", "s_rho", "call_bid", "call_ask", "put_bid", "put_ask"]);
    for r in rows {
        t.push(vec![
            r.spot.into(),
            r.s_rho.into(),
            r.call_bid.into(),
            r.call_ask.into(),
            r.put_bid.into(),
            r.put_ask.into(),
        ]);
    }
    t
}

pub fn consumption_table(rows: &[ConsumptionRow]) -> Table {
    let mut t = Table::new(&["s_rho", "consumption", "pi_star", "nu"]);
    for r in rows {
        t.push(vec![
            r.s_rho.into(),
            r.consumption.into(),
            r.pi_star.into(),
            r.nu.into(),
        ]);
    }
    t
}

/// `(x, V)` at time level `k`.
pub fn slice_table(solution: &PDESolution, k: usize) -> Table {
    let mut t = Table::new(&["x", "value"]);
    for (x, v) in solution.x.iter().zip(&solution.values[k]) {
        t.push(vec![(*x).into(), (*v).into()]);
    }
    t
}

/// `(t, L_bid, L_ask)`; empty cells where a side has no exercise region.
pub fn boundary_table(bid: &ExerciseBoundary, ask: &ExerciseBoundary) -> Result<Table> {
    if bid.times != ask.times {
        return Err(Error::Validation(
            "bid and ask boundaries use different time grids".into(),
        ));
    }
    let mut t = Table::new(&["t", "L_bid", "L_ask"]);
    for ((time, b), a) in bid.times.iter().zip(&bid.levels).zip(&ask.levels) {
        t.push(vec![(*time).into(), (*b).into(), (*a).into()]);
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverStats {
    pub max_residual: f64,
    pub total_policy_sweeps: usize,
    pub max_policy_sweeps: usize,
    pub steps: usize,
}

pub fn solver_stats(solution: &PDESolution) -> SolverStats {
    SolverStats {
        max_residual: solution.max_residual,
        total_policy_sweeps: solution.iterations_per_step.iter().sum(),
        max_policy_sweeps: solution.iterations_per_step.iter().copied().max().unwrap_or(0),
        steps: solution.iterations_per_step.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_float(0.0), "0");
        assert_eq!(fmt_float(1.0), "1");
        assert_eq!(fmt_float(-2.5), "-2.5");
        assert_eq!(fmt_float(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_float(123456.7890123456), "123456.789012");
        assert_eq!(fmt_float(1e-7), "1e-07");
        assert_eq!(fmt_float(-1.23456789012345e20), "-1.23456789012e+20");
        assert_eq!(fmt_float(0.0001), "0.0001");
        assert_eq!(fmt_float(999999999999.5), "1e+12");
        assert_eq!(fmt_float(f64::NAN), "nan");
    }

    #[test]
    fn csv_has_one_header_row() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![1.5.into(), Cell::Missing]);
        t.push(vec![2usize.into(), "x".into()]);
        assert_eq!(t.to_csv().unwrap(), "a,b\n1.5,\n2,x\n");
        assert!(t.to_json().contains("\"a\": 1.5"));
    }
}
