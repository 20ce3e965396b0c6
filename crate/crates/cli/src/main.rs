mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use config::{parse_grid, parse_list, ConfigFile};
use nested_risk::american::{self, AmerParams};
use nested_risk::closedform::{self, EuroParams, OptionKind};
use nested_risk::lattice::{self, ConvergenceSetup};
use nested_risk::merton::{self, MertonParams, NuVariant};
use nested_risk::pdesolve::{self, Grid, Payoff};
use nested_risk::report::{self, Cell, Table};
use nested_risk::{selftest, Error, Side};

#[derive(Parser, Debug)]
#[command(
    name = "nested-risk",
    version,
    about = "Risk-averse option prices, Merton consumption and self-checks"
)]
struct Cli {
    /// Settings file: `key = value` lines or a JSON object. Flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parameter sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Seed for randomised checks.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Option prices.
    #[command(subcommand)]
    Price(PriceCommand),
    /// Risk-averse Merton consumption curve or the nu adjudication report.
    Merton(MertonArgs),
    /// Lattice convergence table (or the AVaR nesting table with --avar).
    Converge(ConvergeArgs),
    /// Oracle agreement suite; exits 1 if any check fails.
    Selftest,
}

#[derive(Subcommand, Debug)]
enum PriceCommand {
    /// European bid/ask: summary, spot sweep or spread curve.
    Euro(EuroArgs),
    /// American bid/ask: summary, exercise boundaries or value slices.
    Amer(AmerArgs),
}

#[derive(Args, Debug)]
struct MarketArgs {
    #[arg(long = "K")]
    strike: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long = "T")]
    expiry: Option<f64>,
    #[arg(long)]
    spot: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Call,
    Put,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Closed,
    Pde,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct EuroArgs {
    #[command(flatten)]
    market: MarketArgs,
    #[arg(long = "s-rho")]
    s_rho: Option<f64>,
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Space nodes for --method pde.
    #[arg(long)]
    nx: Option<usize>,
    /// Time steps for --method pde.
    #[arg(long)]
    nt: Option<usize>,
    /// Spot grid `start:stop:step` or list; emits price curves.
    #[arg(long)]
    spots: Option<String>,
    /// Risk coefficients for the spot sweep (comma list).
    #[arg(long = "s-rho-list")]
    s_rho_list: Option<String>,
    /// Risk-coefficient grid; emits bid/ask/spread along it.
    #[arg(long = "spread-grid")]
    spread_grid: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AmerEmit {
    Summary,
    Boundary,
    Surface,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct AmerArgs {
    #[command(flatten)]
    market: MarketArgs,
    /// Risk coefficients: a comma list or `start:stop:step`.
    #[arg(long = "s-rho")]
    s_rho: Option<String>,
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    nt: Option<usize>,
    #[arg(long, value_enum)]
    emit: Option<AmerEmit>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct MertonArgs {
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    w0: Option<f64>,
    /// Risk-coefficient grid (default: 50 points on [0, (mu - r)/sigma)).
    #[arg(long = "s-rho-grid")]
    s_rho_grid: Option<String>,
    /// printed | drift_shift
    #[arg(long)]
    variant: Option<String>,
    /// Emit the nu adjudication report (JSON) at --s-rho instead of the curve.
    #[arg(long)]
    adjudicate: bool,
    #[arg(long = "s-rho")]
    s_rho: Option<f64>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct ConvergeArgs {
    #[arg(long)]
    beta: Option<f64>,
    /// Step counts (comma list).
    #[arg(long)]
    n: Option<String>,
    #[arg(long = "S0")]
    s0: Option<f64>,
    #[arg(long = "K")]
    strike: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// Nested AVaR of W_T at an unscaled level instead of the call study.
    #[arg(long)]
    avar: bool,
    #[arg(long)]
    alpha: Option<f64>,
}

enum Output {
    Table(Table),
    Text(String),
}

struct Ctx {
    cfg: ConfigFile,
    format: Format,
    seed: u64,
}

fn list_flag<T: std::str::FromStr>(raw: &Option<String>, name: &str) -> Result<Option<Vec<T>>, Error>
where
    T::Err: std::fmt::Display,
{
    raw.as_deref()
        .map(|s| parse_list(s).map_err(|e| Error::Validation(format!("--{name}: {e}"))))
        .transpose()
}

fn grid_flag(raw: &Option<String>, name: &str) -> Result<Option<Vec<f64>>, Error> {
    raw.as_deref()
        .map(|s| parse_grid(s).map_err(|e| Error::Validation(format!("--{name}: {e}"))))
        .transpose()
}

fn kinds(k: KindArg) -> Vec<OptionKind> {
    match k {
        KindArg::Call => vec![OptionKind::Call],
        KindArg::Put => vec![OptionKind::Put],
        KindArg::Both => vec![OptionKind::Call, OptionKind::Put],
    }
}

fn market(ctx: &Ctx, m: &MarketArgs, s_rho: f64, default_strike: f64) -> Result<EuroParams, Error> {
    let c = &ctx.cfg;
    EuroParams::new(
        c.pick(m.spot, "spot", 1.0)?,
        c.pick(m.strike, "K", default_strike)?,
        c.pick(m.r, "r", 0.03)?,
        c.pick(m.sigma, "sigma", 0.15)?,
        c.pick(m.expiry, "T", 1.0)?,
        s_rho,
    )
}

fn kind_from_config(ctx: &Ctx, flag: Option<KindArg>, default: KindArg) -> Result<KindArg, Error> {
    if let Some(k) = flag {
        return Ok(k);
    }
    let raw: String = ctx.cfg.pick(None, "kind", String::new())?;
    if raw.is_empty() {
        return Ok(default);
    }
    KindArg::from_str(&raw, true).map_err(|_| Error::Validation(format!("config key 'kind' = '{raw}': call|put|both")))
}

fn price_euro(ctx: &Ctx, a: &EuroArgs) -> Result<Output, Error> {
    let c = &ctx.cfg;
    let s_rho = c.pick(a.s_rho, "s_rho", 0.0)?;
    let params = market(ctx, &a.market, s_rho, 1.2)?;
    let kind = kind_from_config(ctx, a.kind, KindArg::Both)?;

    if let Some(grid) = grid_flag(&a.spread_grid, "spread-grid")? {
        let mut t = Table::new(&["kind", "s_rho", "bid", "ask", "spread"]);
        for k in kinds(kind) {
            for row in closedform::spread_curve(&params, k, &grid)? {
                t.push(vec![
                    k.as_str().into(),
                    row.s_rho.into(),
                    row.bid.into(),
                    row.ask.into(),
                    row.spread.into(),
                ]);
            }
        }
        return Ok(Output::Table(t));
    }
    if let Some(spots) = grid_flag(&a.spots, "spots")? {
        let list = c.pick_list(list_flag(&a.s_rho_list, "s-rho-list")?, "s_rho_list", vec![s_rho])?;
        return Ok(Output::Table(report::price_table(&closedform::price_curves(
            &params, &spots, &list,
        )?)));
    }

    let method = match a.method {
        Some(m) => m,
        None => {
            let raw: String = c.pick(None, "method", "closed".to_string())?;
            Method::from_str(&raw, true).map_err(|_| Error::Validation(format!("method '{raw}': closed|pde")))?
        }
    };
    let mut t = Table::new(&["kind", "method", "spot", "s_rho", "bid", "ask", "spread"]);
    for k in kinds(kind) {
        let (bid, ask) = match method {
            Method::Closed => (
                closedform::value(&params, k, Side::Bid)?,
                closedform::value(&params, k, Side::Ask)?,
            ),
            Method::Pde => {
                let grid = Grid::for_strike(params.strike, c.pick(a.nx, "nx", 401)?, c.pick(a.nt, "nt", 400)?)?;
                let payoff = Payoff::Vanilla {
                    kind: k,
                    strike: params.strike,
                };
                let solve = |side| pdesolve::solve_european(&params, &payoff, side, &grid);
                let (b, s) = rayon::join(|| solve(Side::Bid), || solve(Side::Ask));
                (b?.value_at(0, params.spot), s?.value_at(0, params.spot))
            }
        };
        let m = match method {
            Method::Closed => "closed",
            Method::Pde => "pde",
        };
        t.push(vec![
            k.as_str().into(),
            m.into(),
            params.spot.into(),
            s_rho.into(),
            bid.into(),
            ask.into(),
            (ask - bid).into(),
        ]);
    }
    Ok(Output::Table(t))
}

fn price_amer(ctx: &Ctx, a: &AmerArgs) -> Result<Output, Error> {
    let c = &ctx.cfg;
    let s_list = c.pick_list(grid_flag(&a.s_rho, "s-rho")?, "s_rho", vec![0.2])?;
    let kind = match kind_from_config(ctx, a.kind, KindArg::Put)? {
        KindArg::Call => OptionKind::Call,
        KindArg::Put => OptionKind::Put,
        KindArg::Both => return Err(Error::Validation("American pricing takes --kind call or put".into())),
    };
    let base = market(ctx, &a.market, 0.0, 1.0)?;
    let grid = Grid::for_strike(base.strike, c.pick(a.nx, "nx", 401)?, c.pick(a.nt, "nt", 400)?)?;
    let emit = match a.emit {
        Some(e) => e,
        None => {
            let raw: String = c.pick(None, "emit", "summary".to_string())?;
            AmerEmit::from_str(&raw, true)
                .map_err(|_| Error::Validation(format!("emit '{raw}': summary|boundary|surface")))?
        }
    };

    let solved: Vec<_> = s_list
        .par_iter()
        .map(|&s| {
            let p = AmerParams {
                euro: base.with_s_rho(s),
                kind,
            };
            p.euro.validate()?;
            let bid = american::solve_american(&p, Side::Bid, &grid)?;
            let ask = american::solve_american(&p, Side::Ask, &grid)?;
            let eu_bid = pdesolve::solve_european(&p.euro, &p.payoff(), Side::Bid, &grid)?;
            let eu_ask = pdesolve::solve_european(&p.euro, &p.payoff(), Side::Ask, &grid)?;
            Ok((
                s,
                bid,
                ask,
                eu_bid.value_at(0, p.euro.spot),
                eu_ask.value_at(0, p.euro.spot),
            ))
        })
        .collect::<Result<_, Error>>()?;

    let yes_no = |b: bool| Cell::from(if b { "yes" } else { "no" });
    let table = match emit {
        AmerEmit::Summary => {
            let mut t = Table::new(&[
                "kind",
                "s_rho",
                "bid",
                "ask",
                "spread",
                "european_bid",
                "european_ask",
                "bid_early_exercise",
                "ask_early_exercise",
                "L_bid_t0",
                "L_ask_t0",
            ]);
            for (s, bid, ask, eb, ea) in &solved {
                t.push(vec![
                    kind.as_str().into(),
                    (*s).into(),
                    bid.value().into(),
                    ask.value().into(),
                    (ask.value() - bid.value()).into(),
                    (*eb).into(),
                    (*ea).into(),
                    yes_no(!bid.boundary.is_empty()),
                    yes_no(!ask.boundary.is_empty()),
                    bid.boundary.initial().into(),
                    ask.boundary.initial().into(),
                ]);
            }
            t
        }
        AmerEmit::Boundary => {
            let mut t = Table::new(&["s_rho", "t", "L_bid", "L_ask"]);
            for (s, bid, ask, _, _) in &solved {
                let b = report::boundary_table(&bid.boundary, &ask.boundary)?;
                for row in b.rows {
                    let mut r = vec![Cell::from(*s)];
                    r.extend(row);
                    t.push(r);
                }
            }
            t
        }
        AmerEmit::Surface => {
            let mut t = Table::new(&["s_rho", "x", "bid", "ask", "payoff"]);
            for (s, bid, ask, _, _) in &solved {
                for (i, &x) in bid.pde.x.iter().enumerate() {
                    t.push(vec![
                        (*s).into(),
                        x.into(),
                        bid.pde.initial()[i].into(),
                        ask.pde.initial()[i].into(),
                        kind.payoff(x, base.strike).into(),
                    ]);
                }
            }
            t
        }
    };
    Ok(Output::Table(table))
}

fn merton_cmd(ctx: &Ctx, a: &MertonArgs) -> Result<Output, Error> {
    let c = &ctx.cfg;
    let d = MertonParams::reference(0.0);
    let base = MertonParams {
        r: c.pick(a.r, "r", d.r)?,
        mu: c.pick(a.mu, "mu", d.mu)?,
        sigma: c.pick(a.sigma, "sigma", d.sigma)?,
        gamma: c.pick(a.gamma, "gamma", d.gamma)?,
        epsilon: c.pick(a.epsilon, "epsilon", d.epsilon)?,
        s_rho: 0.0,
        horizon: c.pick(a.horizon, "T", d.horizon)?,
        w0: c.pick(a.w0, "w0", d.w0)?,
    };
    base.validate()?;
    if a.adjudicate || c.pick(None, "adjudicate", false)? {
        let s = c.pick(a.s_rho, "s_rho", 0.15)?;
        return Ok(Output::Text(merton::adjudicate(&base.with_s_rho(s))?.to_json() + "\n"));
    }
    let variant: NuVariant = c.pick(
        a.variant.as_deref().map(str::parse).transpose()?,
        "variant",
        NuVariant::Printed,
    )?;
    let cap = base.max_s_rho();
    let default_grid: Vec<f64> = (0..50).map(|k| cap * k as f64 / 50.0).collect();
    let grid = match grid_flag(&a.s_rho_grid, "s-rho-grid")? {
        Some(g) => g,
        None => c.pick_list(None, "s_rho_grid", default_grid)?,
    };
    Ok(Output::Table(report::consumption_table(&merton::consumption_curve(
        &base, &grid, variant,
    )?)))
}

fn converge_cmd(ctx: &Ctx, a: &ConvergeArgs) -> Result<Output, Error> {
    let c = &ctx.cfg;
    if a.avar || c.pick(None, "avar", false)? {
        let n = c.pick_list(list_flag(&a.n, "n")?, "n", vec![1, 2, 4, 8, 16])?;
        let rows = lattice::avar_nesting_demo(c.pick(a.horizon, "T", 1.0)?, &n, c.pick(a.alpha, "alpha", 0.1)?)?;
        return Ok(Output::Table(report::avar_table(&rows)));
    }
    let d = ConvergenceSetup::reference(0.5);
    let setup = ConvergenceSetup {
        s0: c.pick(a.s0, "S0", d.s0)?,
        strike: c.pick(a.strike, "K", d.strike)?,
        r: c.pick(a.r, "r", d.r)?,
        sigma: c.pick(a.sigma, "sigma", d.sigma)?,
        horizon: c.pick(a.horizon, "T", d.horizon)?,
        beta: c.pick(a.beta, "beta", d.beta)?,
    };
    let n = c.pick_list(list_flag(&a.n, "n")?, "n", vec![100, 400, 1600, 6400])?;
    Ok(Output::Table(report::convergence_table(&lattice::convergence_study(
        &setup, &n,
    )?)))
}

fn run(cli: &Cli) -> Result<(Output, bool), Error> {
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let format = match cli.format {
        Some(f) => f,
        None => {
            let raw: String = cfg.pick(None, "format", "csv".to_string())?;
            Format::from_str(&raw, true).map_err(|_| Error::Validation(format!("format '{raw}': csv|json")))?
        }
    };
    let seed = cfg.pick(cli.seed, "seed", 42)?;
    let threads: usize = cfg.pick(cli.threads, "threads", 0)?;
    if cli.threads == Some(0) {
        return Err(Error::Validation("--threads must be >= 1".into()));
    }
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    }
    let ctx = Ctx { cfg, format, seed };
    match &cli.command {
        Command::Price(PriceCommand::Euro(a)) => Ok((price_euro(&ctx, a)?, true)),
        Command::Price(PriceCommand::Amer(a)) => Ok((price_amer(&ctx, a)?, true)),
        Command::Merton(a) => Ok((merton_cmd(&ctx, a)?, true)),
        Command::Converge(a) => Ok((converge_cmd(&ctx, a)?, true)),
        Command::Selftest => {
            let rep = selftest::run(ctx.seed)?;
            let text = match ctx.format {
                Format::Json => rep.to_json() + "\n",
                Format::Csv => rep.to_text(),
            };
            Ok((Output::Text(text), rep.all_passed()))
        }
    }
    .and_then(|(o, ok)| match (o, ctx.format) {
        (Output::Table(t), Format::Csv) => Ok((Output::Text(t.to_csv()?), ok)),
        (Output::Table(t), Format::Json) => Ok((Output::Text(t.to_json() + "\n"), ok)),
        (o, _) => Ok((o, ok)),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok((Output::Text(text), ok)) => {
            let written = match &cli.out {
                Some(path) => std::fs::write(path, &text),
                None => std::io::stdout().write_all(text.as_bytes()),
            };
            if let Err(e) = written {
                eprintln!("error: cannot write output: {e}");
                return ExitCode::from(1);
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: self-test reported failures");
                ExitCode::from(1)
            }
        }
        Ok((Output::Table(_), _)) => unreachable!("tables are rendered in run"),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
