//! Batch front end. Every command reads one scenario (the shipped default
//! unless `--config` is given) and writes CSV, or JSON for single results,
//! to `--out` or stdout.
//!
//! Exit codes: 0 success, 2 malformed scenario, 3 solver failure,
//! 4 verification failure.

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{default_scenario, ScenarioFile};
use crate::cost::{closed_form, CostSummary, Density, TariffPlan, UsageModel, UserClass};
use crate::error::{Error, Result};
use crate::game::{best_response, follow_delay, TimingGame};
use crate::market::{duopoly_shares, ExtendedTime, MarketConfig};
use crate::multi::{solve_multi, MultiOptions};
use crate::nash::NashCheck;
use crate::profit::{
    profit_rollover, profit_shared, quadrature_profit, GameRef, OracleOptions, ProfitBreakdown, RolloverCosts,
    RolloverGame, SharedGame,
};
use crate::report::{fmt_g, Table};
use crate::rollover::classify_and_solve;
use crate::shared::classify_and_solve_shared;
use crate::sim::{simulate_rollover, simulate_shared, SimConfig};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "rollshare", version, about = "Upgrade-timing games for rollover and shared data plans")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario JSON; the shipped default when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Plan::Rollover)]
    pub plan: Plan,
    /// Grid resolution of sweeps.
    #[arg(long, global = true, default_value_t = 51)]
    pub grid: usize,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Certify every emitted profile with the full deviation grid.
    #[arg(long, global = true)]
    pub certify: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Plan {
    Rollover,
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Costs,
    Profits,
    Nash,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    /// Equilibrium profits against provider 0's share, one block per pool size.
    Share,
    /// Equilibrium profits against the new-user pool at the scenario's shares.
    Pool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expected monthly bills and family aggregates.
    Costs,
    /// Subscriber shares over time for a pair of upgrade times.
    Trajectory {
        #[arg(long, default_value = "0")]
        t0: ExtendedTime,
        #[arg(long, default_value = "inf")]
        t1: ExtendedTime,
        #[arg(long, default_value_t = 10.0)]
        t_max: f64,
    },
    /// Both providers' profits with per-phase breakdown.
    Profit {
        #[arg(long)]
        t0: ExtendedTime,
        #[arg(long)]
        t1: ExtendedTime,
    },
    /// A provider's best upgrade time against the rival's.
    BestResponse {
        #[arg(long, default_value_t = 0)]
        provider: usize,
        #[arg(long)]
        rival: ExtendedTime,
    },
    /// Classified and certified duopoly equilibrium, as JSON.
    Equilibrium,
    /// Regime and equilibrium times over share x new-user pool.
    RegimeMap {
        #[arg(long, default_value_t = 1.0)]
        eta0_max: f64,
    },
    /// Equilibrium profits along a share or pool sweep.
    ProfitCurves {
        #[arg(long, value_enum, default_value_t = Axis::Share)]
        axis: Axis,
        /// Pool sizes for the share axis, or the pool range end for the pool axis.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.1, 0.3, 0.6, 1.0])]
        eta0: Vec<f64>,
    },
    /// Rollover equilibrium among any number of providers, optionally swept
    /// over the traditional heavy-user cost.
    Multi {
        /// Override the rollover cost.
        #[arg(long)]
        rollover_cost: Option<f64>,
        #[arg(long)]
        from: Option<f64>,
        #[arg(long)]
        to: Option<f64>,
    },
    /// Oracle-equivalence and equilibrium suites.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
    },
    /// Monte Carlo profits; per-replication rows go to `--out`.
    Simulate {
        #[arg(long, default_value = "0")]
        t0: ExtendedTime,
        #[arg(long, default_value = "inf")]
        t1: ExtendedTime,
        #[arg(long, default_value_t = 200)]
        replications: usize,
        #[arg(long, default_value_t = 60)]
        months: usize,
        #[arg(long, default_value_t = 0.25)]
        dt: f64,
    },
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Config { .. }) { EXIT_CONFIG } else { EXIT_SOLVER };
        Failure { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        // A closed downstream pipe is not a failure of the command.
        let code = if e.kind() == io::ErrorKind::BrokenPipe { 0 } else { EXIT_SOLVER };
        Failure { code, message: format!("output: {e}") }
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(f) if f.code == 0 => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn load(common: &Common) -> Result<MarketConfig> {
    let file = match &common.config {
        Some(p) => ScenarioFile::load(p)?,
        None => default_scenario(),
    };
    file.to_config()
}

fn sink(common: &Common) -> io::Result<Box<dyn Write>> {
    Ok(match &common.out {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit(common: &Common, table: &Table) -> Outcome {
    let mut w = sink(common)?;
    table.write_to(&mut *w)?;
    Ok(())
}

fn emit_json<T: serde::Serialize>(common: &Common, value: &T) -> Outcome {
    let mut w = sink(common)?;
    let text =
        serde_json::to_string_pretty(value).map_err(|e| Failure { code: EXIT_SOLVER, message: e.to_string() })?;
    writeln!(w, "{text}")?;
    Ok(())
}

fn check(common: &Common) -> NashCheck {
    if common.certify {
        NashCheck::default()
    } else {
        NashCheck { grid_points: 800, ..NashCheck::default() }
    }
}

pub fn run(cli: &Cli) -> Outcome {
    let c = &cli.common;
    let cfg = load(c)?;
    match &cli.command {
        Command::Costs => costs(c, &cfg),
        Command::Trajectory { t0, t1, t_max } => trajectory(c, &cfg, *t0, *t1, *t_max),
        Command::Profit { t0, t1 } => profit(c, &cfg, *t0, *t1),
        Command::BestResponse { provider, rival } => best_response_cmd(c, &cfg, *provider, *rival),
        Command::Equilibrium => equilibrium(c, &cfg),
        Command::RegimeMap { eta0_max } => regime_map(c, &cfg, *eta0_max),
        Command::ProfitCurves { axis, eta0 } => profit_curves(c, &cfg, *axis, eta0),
        Command::Multi { rollover_cost, from, to } => multi(c, &cfg, *rollover_cost, *from, *to),
        Command::Verify { suite } => verify(c, &cfg, *suite),
        Command::Simulate { t0, t1, replications, months, dt } => {
            let sim = SimConfig { seed: c.seed, months: *months, dt: *dt, replications: *replications };
            simulate(c, &cfg, &sim, *t0, *t1)
        }
    }
}

fn costs(c: &Common, cfg: &MarketConfig) -> Outcome {
    let s = cfg.costs()?;
    let mut t = Table::new(&["quantity", "value"]);
    for (k, v) in [
        ("ec_light", s.ec_light),
        ("ec_heavy", s.ec_heavy),
        ("ec_heavy_rollover", s.ec_heavy_rollover),
        ("ec_family_hh", s.ec_family_hh),
        ("ec_family_hl", s.ec_family_hl),
        ("agg_individual", s.agg_individual),
        ("agg_shared", s.agg_shared),
    ] {
        t.push(vec![k.into(), fmt_g(v)]);
    }
    emit(c, &t)
}

fn trajectory(c: &Common, cfg: &MarketConfig, t0: ExtendedTime, t1: ExtendedTime, t_max: f64) -> Outcome {
    cfg.market.require_duopoly()?;
    let n = c.grid.max(2);
    let mut t = Table::new(&["t", "share0", "share1", "pool"]);
    for k in 0..n {
        let time = t_max * k as f64 / (n - 1) as f64;
        let s = duopoly_shares(&cfg.market, time, t0, t1);
        t.push(vec![fmt_g(time), fmt_g(s.providers[0]), fmt_g(s.providers[1]), fmt_g(s.pool)]);
    }
    emit(c, &t)
}

fn breakdown(
    plan: Plan,
    cfg: &MarketConfig,
    i: usize,
    own: ExtendedTime,
    rival: ExtendedTime,
) -> Result<ProfitBreakdown> {
    Ok(match plan {
        Plan::Rollover => profit_rollover(&RolloverGame::from_config(cfg)?, i, own, rival),
        Plan::Shared => profit_shared(&SharedGame::from_config(cfg)?, i, own, rival),
    })
}

fn profit(c: &Common, cfg: &MarketConfig, t0: ExtendedTime, t1: ExtendedTime) -> Outcome {
    cfg.market.require_duopoly()?;
    let mut t = Table::new(&["provider", "own_time", "rival_time", "branch", "total", "phase1", "phase2", "phase3"]);
    for (i, own, rival) in [(0, t0, t1), (1, t1, t0)] {
        let b = breakdown(c.plan, cfg, i, own, rival)?;
        let branch = if own.is_never() && rival.is_never() {
            "never"
        } else if own <= rival {
            "early"
        } else {
            "late"
        };
        t.push(vec![
            i.to_string(),
            own.to_string(),
            rival.to_string(),
            branch.into(),
            fmt_g(b.total),
            fmt_g(b.phase1),
            fmt_g(b.phase2),
            fmt_g(b.phase3),
        ]);
    }
    emit(c, &t)
}

fn best_response_row<G: TimingGame>(game: &G, i: usize, rival: ExtendedTime) -> Vec<String> {
    let br = best_response(game, i, rival);
    vec![
        i.to_string(),
        rival.to_string(),
        br.to_string(),
        fmt_g(game.profit(i, br, rival)),
        follow_delay(game, i).to_string(),
        fmt_g(game.kappa(i)),
    ]
}

fn best_response_cmd(c: &Common, cfg: &MarketConfig, provider: usize, rival: ExtendedTime) -> Outcome {
    cfg.market.require_duopoly()?;
    if provider > 1 {
        return Err(Error::Invalid(format!("provider must be 0 or 1, got {provider}")).into());
    }
    let mut t = Table::new(&["provider", "rival_time", "best_response", "profit", "follow_delay", "kappa"]);
    t.push(match c.plan {
        Plan::Rollover => best_response_row(&RolloverGame::from_config(cfg)?, provider, rival),
        Plan::Shared => best_response_row(&SharedGame::from_config(cfg)?, provider, rival),
    });
    emit(c, &t)
}

fn equilibrium(c: &Common, cfg: &MarketConfig) -> Outcome {
    match c.plan {
        Plan::Rollover => emit_json(c, &classify_and_solve(&RolloverGame::from_config(cfg)?, &check(c))?),
        Plan::Shared => emit_json(c, &classify_and_solve_shared(&SharedGame::from_config(cfg)?, &check(c))?),
    }
}

/// Regime label, times, profits and certificate gain of one duopoly cell.
fn solve_cell(
    plan: Plan,
    cfg: &MarketConfig,
    eta: f64,
    eta0: f64,
    check: &NashCheck,
) -> Result<Option<(String, Vec<ExtendedTime>, Vec<f64>, f64)>> {
    let market = cfg.market.with_duopoly_share(eta).with_eta0(eta0);
    let solved = match plan {
        Plan::Rollover => {
            let g = RolloverGame::from_config(cfg)?.with_market(market);
            classify_and_solve(&g, check).map(|r| (r.regime.label(), r.times, r.profits, r.certificate.max_gain))
        }
        Plan::Shared => {
            let g = SharedGame::from_config(cfg)?.with_market(market);
            classify_and_solve_shared(&g, check).map(|r| (r.regime.label(), r.times, r.profits, r.certificate.max_gain))
        }
    };
    match solved {
        Ok(x) => Ok(Some(x)),
        Err(Error::NoEquilibrium { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn regime_map(c: &Common, cfg: &MarketConfig, eta0_max: f64) -> Outcome {
    let n = c.grid.max(2);
    let check = check(c);
    let cells: Vec<(f64, f64)> = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .map(|(a, b)| (a as f64 / (n - 1) as f64, eta0_max * b as f64 / (n - 1) as f64))
        .collect();
    let rows: Vec<Vec<String>> = cells
        .par_iter()
        .map(|&(eta, eta0)| -> Result<Vec<String>> {
            let mut row = vec![fmt_g(eta), fmt_g(eta0)];
            match solve_cell(c.plan, cfg, eta, eta0, &check)? {
                Some((label, times, profits, gain)) => {
                    row.extend([
                        label,
                        times[0].to_string(),
                        times[1].to_string(),
                        fmt_g(profits[0]),
                        fmt_g(profits[1]),
                        fmt_g(gain),
                    ]);
                }
                None => {
                    row.extend(["none".into(), "nan".into(), "nan".into(), "nan".into(), "nan".into(), "nan".into()])
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new(&["eta", "eta0", "regime", "t0", "t1", "profit0", "profit1", "max_gain"]);
    for r in rows {
        t.push(r);
    }
    emit(c, &t)
}

fn never_profits(plan: Plan, cfg: &MarketConfig, eta: f64, eta0: f64) -> Result<[f64; 2]> {
    let market = cfg.market.with_duopoly_share(eta).with_eta0(eta0);
    Ok(match plan {
        Plan::Rollover => {
            let g = RolloverGame::from_config(cfg)?.with_market(market);
            [g.never_profit(0), g.never_profit(1)]
        }
        Plan::Shared => {
            let g = SharedGame::from_config(cfg)?.with_market(market);
            [g.never_profit(0), g.never_profit(1)]
        }
    })
}

fn profit_curves(c: &Common, cfg: &MarketConfig, axis: Axis, eta0s: &[f64]) -> Outcome {
    cfg.market.require_duopoly()?;
    let n = c.grid.max(2);
    let check = check(c);
    let cells: Vec<(f64, f64)> = match axis {
        Axis::Share => eta0s.iter().flat_map(|&e0| (0..n).map(move |k| (k as f64 / (n - 1) as f64, e0))).collect(),
        Axis::Pool => {
            let end = eta0s.iter().copied().fold(0.0, f64::max);
            (0..n).map(|k| (cfg.market.shares[0], end * k as f64 / (n - 1) as f64)).collect()
        }
    };
    let rows: Vec<Vec<String>> = cells
        .par_iter()
        .map(|&(eta, eta0)| -> Result<Vec<String>> {
            let never = never_profits(c.plan, cfg, eta, eta0)?;
            let mut row = vec![fmt_g(eta0), fmt_g(eta)];
            match solve_cell(c.plan, cfg, eta, eta0, &check)? {
                Some((label, _, profits, _)) => row.extend([label, fmt_g(profits[0]), fmt_g(profits[1])]),
                None => row.extend(["none".into(), "nan".into(), "nan".into()]),
            }
            row.extend([fmt_g(never[0]), fmt_g(never[1])]);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new(&["eta0", "eta", "regime", "profit0", "profit1", "never0", "never1"]);
    for r in rows {
        t.push(r);
    }
    emit(c, &t)
}

/// `0` immediate, `L` later, `N` never, per provider.
pub fn pattern(times: &[ExtendedTime]) -> String {
    times
        .iter()
        .map(|t| match t {
            ExtendedTime::Never => 'N',
            ExtendedTime::At(x) if *x == 0.0 => '0',
            ExtendedTime::At(_) => 'L',
        })
        .collect()
}

fn multi(c: &Common, cfg: &MarketConfig, rollover_cost: Option<f64>, from: Option<f64>, to: Option<f64>) -> Outcome {
    let base = cfg.costs()?;
    let r = rollover_cost.unwrap_or(base.ec_heavy_rollover);
    let costs: Vec<f64> = match (from, to) {
        (Some(a), Some(b)) => {
            let n = c.grid.max(2);
            (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
        }
        (None, None) => vec![base.ec_heavy],
        _ => return Err(Error::Invalid("--from and --to go together".into()).into()),
    };
    let opts = MultiOptions { check: check(c), ..MultiOptions::default() };
    let m = cfg.market.providers();
    let rows: Vec<Vec<String>> = costs
        .par_iter()
        .map(|&cost| -> Result<Vec<String>> {
            let g = RolloverGame::new(cfg.market.clone(), RolloverCosts { traditional: cost, rollover: r })?;
            let res = match solve_multi(&g, &opts) {
                Ok(res) => res,
                // One cell without a pure profile does not end a sweep.
                Err(Error::NoEquilibrium { gain }) if costs.len() > 1 => {
                    let mut row = vec![fmt_g(cost), fmt_g(r), "none".into()];
                    row.extend(std::iter::repeat_n(String::new(), 2 * m));
                    row.push(fmt_g(gain));
                    return Ok(row);
                }
                Err(e) => return Err(e),
            };
            let mut row = vec![fmt_g(cost), fmt_g(r), pattern(&res.times)];
            row.extend(res.times.iter().map(|t| t.to_string()));
            row.extend(res.profits.iter().map(|p| fmt_g(*p)));
            row.push(fmt_g(res.certificate.max_gain));
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut header = vec!["traditional_cost".to_string(), "rollover_cost".into(), "pattern".into()];
    header.extend((0..m).map(|k| format!("t{k}")));
    header.extend((0..m).map(|k| format!("profit{k}")));
    header.push("max_gain".into());
    let mut t = Table::new(&header);
    for row in rows {
        t.push(row);
    }
    emit(c, &t)
}

/// One verification line.
struct Check {
    suite: &'static str,
    name: String,
    passed: bool,
    detail: String,
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn verify_costs(cfg: &MarketConfig, seed: u64, out: &mut Vec<Check>) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases: Vec<(TariffPlan, f64, f64)> = Vec::new();
    let uniform_zero = |u: &UsageModel| u.min == 0.0 && matches!(u.density, Density::Uniform);
    if uniform_zero(&cfg.light) && uniform_zero(&cfg.heavy) {
        cases.push((cfg.plan, cfg.light.max, cfg.heavy.max));
    }
    for _ in 0..20 {
        let quota = rng.gen_range(1.0..5.0);
        let plan = TariffPlan::new(rng.gen_range(0.0..30.0), quota, rng.gen_range(1.0..20.0))?;
        cases.push((plan, rng.gen_range(0.2..1.0) * quota, rng.gen_range(1.0..4.0) * quota));
    }
    let mut worst: f64 = 0.0;
    let mut dominance = true;
    for (plan, dl, dh) in &cases {
        let light = UsageModel::uniform(UserClass::Light, 0.0, *dl)?;
        let heavy = UsageModel::uniform(UserClass::Heavy, 0.0, *dh)?;
        let s = CostSummary::compute(plan, &light, &heavy, 0.3)?;
        worst = worst
            .max(rel_gap(s.ec_heavy, closed_form::traditional(plan, *dh)))
            .max(rel_gap(s.ec_heavy_rollover, closed_form::rollover(plan, *dh)))
            .max(rel_gap(s.ec_family_hh, closed_form::family_heavy_heavy(plan, *dh)))
            .max(rel_gap(s.ec_family_hl, closed_form::family_heavy_light(plan, *dh, *dl)));
        dominance &= s.ec_heavy_rollover <= s.ec_heavy + 1e-12 && s.agg_shared <= s.agg_individual + 1e-12;
    }
    out.push(Check {
        suite: "costs",
        name: "closed forms match quadrature".into(),
        passed: worst <= 1e-8,
        detail: format!("{} cases, worst relative gap {worst:e}", cases.len()),
    });
    out.push(Check {
        suite: "costs",
        name: "rollover and pooled bills never exceed traditional".into(),
        passed: dominance,
        detail: String::new(),
    });
    Ok(())
}

const TIMING_PAIRS: [(f64, f64); 8] = [
    (0.0, 0.0),
    (0.0, 1.0),
    (1.0, 0.0),
    (0.5, 2.0),
    (2.0, 0.5),
    (1.0, f64::INFINITY),
    (f64::INFINITY, 1.0),
    (f64::INFINITY, f64::INFINITY),
];

fn verify_profits(cfg: &MarketConfig, out: &mut Vec<Check>) -> Result<()> {
    // With more providers, provider 0 faces the rest pooled into one rival.
    let pooled;
    let cfg = if cfg.market.providers() == 2 {
        cfg
    } else {
        pooled = MarketConfig { market: cfg.market.with_duopoly_share(cfg.market.shares[0]), ..cfg.clone() };
        &pooled
    };
    let rg = RolloverGame::from_config(cfg)?;
    let sg = SharedGame::from_config(cfg)?;
    for (name, game) in [("rollover", GameRef::Rollover(&rg)), ("shared", GameRef::Shared(&sg))] {
        let mut worst: f64 = 0.0;
        for (a, b) in TIMING_PAIRS {
            let (a, b) = (ExtendedTime::at(a)?, ExtendedTime::at(b)?);
            for (i, own, rival) in [(0, a, b), (1, b, a)] {
                let closed = match game {
                    GameRef::Rollover(g) => profit_rollover(g, i, own, rival).total,
                    GameRef::Shared(g) => profit_shared(g, i, own, rival).total,
                };
                let quad = quadrature_profit(game, i, own, rival, OracleOptions::default())?;
                worst = worst.max(rel_gap(closed, quad));
            }
        }
        out.push(Check {
            suite: "profits",
            name: format!("{name} closed form matches quadrature"),
            passed: worst <= 1e-7,
            detail: format!("worst relative gap {worst:e}"),
        });
    }
    Ok(())
}

fn verify_nash(cfg: &MarketConfig, check: &NashCheck, out: &mut Vec<Check>) -> Result<()> {
    let rg = RolloverGame::from_config(cfg)?;
    if cfg.market.providers() == 2 {
        let r = classify_and_solve(&rg, check)?;
        out.push(Check {
            suite: "nash",
            name: "rollover equilibrium certified".into(),
            passed: r.certificate.passed,
            detail: format!("{} at ({}, {}), gain {:e}", r.regime, r.times[0], r.times[1], r.certificate.max_gain),
        });
        let s = classify_and_solve_shared(&SharedGame::from_config(cfg)?, check)?;
        out.push(Check {
            suite: "nash",
            name: "shared equilibrium certified".into(),
            passed: s.certificate.passed,
            detail: format!("{} at ({}, {}), gain {:e}", s.regime, s.times[0], s.times[1], s.certificate.max_gain),
        });
    }
    let m = solve_multi(&rg, &MultiOptions { check: *check, ..MultiOptions::default() })?;
    out.push(Check {
        suite: "nash",
        name: "multi-provider equilibrium certified".into(),
        passed: m.certificate.passed,
        detail: format!("pattern {}, gain {:e}", pattern(&m.times), m.certificate.max_gain),
    });
    Ok(())
}

fn verify(c: &Common, cfg: &MarketConfig, suite: Suite) -> Outcome {
    let mut checks = Vec::new();
    if matches!(suite, Suite::Costs | Suite::All) {
        verify_costs(cfg, c.seed, &mut checks)?;
    }
    if matches!(suite, Suite::Profits | Suite::All) {
        verify_profits(cfg, &mut checks)?;
    }
    if matches!(suite, Suite::Nash | Suite::All) {
        verify_nash(cfg, &NashCheck::default(), &mut checks)?;
    }
    let mut t = Table::new(&["suite", "check", "result", "detail"]);
    for k in &checks {
        t.push(vec![
            k.suite.into(),
            k.name.clone(),
            if k.passed { "PASS" } else { "FAIL" }.into(),
            k.detail.replace(',', ";"),
        ]);
    }
    emit(c, &t)?;
    let failed = checks.iter().filter(|k| !k.passed).count();
    if failed > 0 {
        return Err(Failure { code: EXIT_VERIFY, message: format!("{failed} verification check(s) failed") });
    }
    Ok(())
}

fn simulate(c: &Common, cfg: &MarketConfig, sim: &SimConfig, t0: ExtendedTime, t1: ExtendedTime) -> Outcome {
    let (report, closed) = match c.plan {
        Plan::Rollover => {
            let g = RolloverGame::from_config(cfg)?;
            (
                simulate_rollover(cfg, sim, t0, t1)?,
                [profit_rollover(&g, 0, t0, t1).total, profit_rollover(&g, 1, t1, t0).total],
            )
        }
        Plan::Shared => {
            let g = SharedGame::from_config(cfg)?;
            (
                simulate_shared(cfg, sim, t0, t1)?,
                [profit_shared(&g, 0, t0, t1).total, profit_shared(&g, 1, t1, t0).total],
            )
        }
    };
    let mut summary = Table::new(&["provider", "mean", "std_error", "closed_form", "z"]);
    for (i, est) in report.profits.iter().enumerate() {
        summary.push(vec![
            i.to_string(),
            fmt_g(est.mean),
            fmt_g(est.std_error),
            fmt_g(closed[i]),
            fmt_g(est.z(closed[i])),
        ]);
    }
    match &c.out {
        Some(_) => {
            let mut reps = Table::new(&["rep", "provider", "profit", "n_switched", "n_new"]);
            for r in &report.records {
                reps.push(vec![
                    r.rep.to_string(),
                    r.provider.to_string(),
                    fmt_g(r.profit),
                    r.n_switched.to_string(),
                    r.n_new.to_string(),
                ]);
            }
            emit(c, &reps)?;
            eprint!("{}", summary.to_csv());
            Ok(())
        }
        None => emit(c, &summary),
    }
}
