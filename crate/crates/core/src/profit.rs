//! Discounted long-run profits of one provider for a pair of upgrade times.
//!
//! Closed forms integrate the piecewise-exponential revenue streams of the
//! churn dynamics against `e^{-S t}`. The three phases are: before anyone
//! upgrades, while only the leader has upgraded, and after both have.
//! [`quadrature_profit`] integrates the same streams numerically from the
//! headcounts in [`crate::market`] and serves as the independent oracle.

use serde::Serialize;

use crate::cost::CostSummary;
use crate::error::{invalid, Error, Result};
use crate::market::{rollover_phase_counts, shared_phase_counts, ExtendedTime, Market, MarketConfig};
use crate::numeric::quad::{breakpoints, integrate_pieces, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ProfitBreakdown {
    pub total: f64,
    pub phase1: f64,
    pub phase2: f64,
    pub phase3: f64,
}

impl ProfitBreakdown {
    fn from_phases(phase1: f64, phase2: f64, phase3: f64) -> Self {
        ProfitBreakdown { total: phase1 + phase2 + phase3, phase1, phase2, phase3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanType {
    Rollover,
    Shared,
}

impl std::str::FromStr for PlanType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rollover" => Ok(PlanType::Rollover),
            "shared" => Ok(PlanType::Shared),
            other => invalid(format!("unknown plan type {other:?}")),
        }
    }
}

/// Expected monthly bill of a heavy user before and after rollover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RolloverCosts {
    pub traditional: f64,
    pub rollover: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RolloverGame {
    pub market: Market,
    pub costs: RolloverCosts,
}

impl RolloverGame {
    pub fn new(market: Market, costs: RolloverCosts) -> Result<Self> {
        market.validate()?;
        if !(costs.rollover > 0.0 && costs.traditional >= costs.rollover && costs.traditional.is_finite()) {
            return invalid(format!(
                "costs must satisfy traditional >= rollover > 0, got {} and {}",
                costs.traditional, costs.rollover
            ));
        }
        Ok(RolloverGame { market, costs })
    }

    pub fn from_config(cfg: &MarketConfig) -> Result<Self> {
        let s = cfg.costs()?;
        RolloverGame::new(cfg.market.clone(), RolloverCosts { traditional: s.ec_heavy, rollover: s.ec_heavy_rollover })
    }

    pub fn with_market(&self, market: Market) -> RolloverGame {
        RolloverGame { market, costs: self.costs }
    }

    /// `c - r (churn + S) / S`: the per-user margin lost by upgrading now
    /// rather than waiting, net of the churn it prevents.
    pub fn reduction_margin(&self) -> f64 {
        let m = &self.market;
        self.costs.traditional - self.costs.rollover * (m.rates.churn + m.discount) / m.discount
    }
}

/// Expected monthly bills relevant to families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FamilyCosts {
    pub heavy: f64,
    pub light: f64,
    pub heavy_heavy: f64,
    pub heavy_light: f64,
}

impl From<&CostSummary> for FamilyCosts {
    fn from(s: &CostSummary) -> Self {
        FamilyCosts { heavy: s.ec_heavy, light: s.ec_light, heavy_heavy: s.ec_family_hh, heavy_light: s.ec_family_hl }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharedGame {
    pub market: Market,
    pub costs: FamilyCosts,
}

impl SharedGame {
    pub fn new(market: Market, costs: FamilyCosts) -> Result<Self> {
        market.validate()?;
        let c = costs;
        if ![c.heavy, c.light, c.heavy_heavy, c.heavy_light].iter().all(|x| x.is_finite() && *x > 0.0) {
            return invalid(format!("family costs must be finite and positive, got {c:?}"));
        }
        let game = SharedGame { market, costs };
        if game.agg_shared() > game.agg_individual() {
            return invalid("pooled family billing exceeds individual billing");
        }
        Ok(game)
    }

    pub fn from_config(cfg: &MarketConfig) -> Result<Self> {
        let s = cfg.costs()?;
        SharedGame::new(cfg.market.clone(), FamilyCosts::from(&s))
    }

    pub fn with_market(&self, market: Market) -> SharedGame {
        SharedGame { market, costs: self.costs }
    }

    /// Individual billing per family, weighted by type frequency.
    pub fn agg_individual(&self) -> f64 {
        let a = self.market.alpha;
        2.0 * a * self.costs.heavy + 2.0 * a * (1.0 - a) * self.costs.light
    }

    /// Pooled billing per family, weighted by type frequency.
    pub fn agg_shared(&self) -> f64 {
        let a = self.market.alpha;
        a * a * self.costs.heavy_heavy + 2.0 * a * (1.0 - a) * self.costs.heavy_light
    }
}

/// `e^{x a} * int_a^b e^{-(x + S) t} dt`, written to avoid overflow.
pub(crate) fn lagged(x: f64, s: f64, a: f64, b: Option<f64>) -> f64 {
    match b {
        Some(b) => ((-s * a).exp() - (-s * b - x * (b - a)).exp()) / (x + s),
        None => (-s * a).exp() / (x + s),
    }
}

/// `int_a^b e^{-S t} dt`.
pub(crate) fn window(s: f64, a: f64, b: Option<f64>) -> f64 {
    match b {
        Some(b) => ((-s * a).exp() - (-s * b).exp()) / s,
        None => (-s * a).exp() / s,
    }
}

pub fn profit_rollover_never(game: &RolloverGame, i: usize) -> f64 {
    let m = &game.market;
    2.0 * m.alpha * m.n_of(i) * game.costs.traditional / m.discount
}

pub fn profit_rollover(game: &RolloverGame, i: usize, t_i: ExtendedTime, t_j: ExtendedTime) -> ProfitBreakdown {
    let m = &game.market;
    let (a, s, lam, mu) = (m.alpha, m.discount, m.rates.churn, m.rates.arrival);
    let (ni, nj, n0) = (m.n_of(i), m.n_of(1 - i), m.n_new());
    let (c, r) = (game.costs.traditional, game.costs.rollover);
    match (t_i.finite(), t_j.finite()) {
        (None, None) => ProfitBreakdown::from_phases(profit_rollover_never(game, i), 0.0, 0.0),
        (Some(ti), tj) if t_i <= t_j => {
            let p1 = 2.0 * a * ni * c * window(s, 0.0, Some(ti));
            let p2 = 2.0
                * a
                * r
                * ((ni + nj + n0) * window(s, ti, tj) - nj * lagged(lam, s, ti, tj) - n0 * lagged(mu, s, ti, tj));
            let p3 = tj.map_or(0.0, |tj| {
                let d = tj - ti;
                let (kl, km) = ((-lam * d).exp(), (-mu * d).exp());
                r * (-s * tj).exp()
                    * ((2.0 * a * nj * (1.0 - kl) + 2.0 * a * ni + a * n0 * km + 2.0 * a * n0 * (1.0 - km)) / s
                        - a * n0 * km / (mu + s))
            });
            ProfitBreakdown::from_phases(p1, p2, p3)
        }
        (ti, Some(tj)) => {
            let p1 = 2.0 * a * ni * c * window(s, 0.0, Some(tj));
            let p2 = 2.0 * a * ni * c * lagged(lam, s, tj, ti);
            let p3 = ti.map_or(0.0, |ti| {
                let d = ti - tj;
                (-s * ti).exp()
                    * (2.0 * a * ni * (-lam * d).exp() * r / s
                        + a * n0 * (-mu * d).exp() * r * (1.0 / s - 1.0 / (mu + s)))
            });
            ProfitBreakdown::from_phases(p1, p2, p3)
        }
        (Some(_), None) => unreachable!("a finite time never exceeds Never"),
    }
}

pub fn profit_shared_never(game: &SharedGame, i: usize) -> f64 {
    let m = &game.market;
    let (a, c) = (m.alpha, &game.costs);
    (2.0 * a * m.n_of(i) * c.heavy + 2.0 * m.n_of(i) * a * (1.0 - a) * c.light) / m.discount
}

/// Shared-plan profit. `total` is the closed form of the whole stream; the
/// phases are integrated separately and sum to it up to rounding.
pub fn profit_shared(game: &SharedGame, i: usize, t_i: ExtendedTime, t_j: ExtendedTime) -> ProfitBreakdown {
    let m = &game.market;
    let (s, lam, mu) = (m.discount, m.rates.churn, m.rates.arrival);
    let (ei, ej) = (m.shares[i], m.shares[1 - i]);
    let (n, n0) = (m.n, m.n_new());
    let (dd, ee) = (game.agg_individual(), game.agg_shared());
    let lam_w = 1.0 / s - 1.0 / (lam + s);
    let mu_w = 1.0 / s - 1.0 / (mu + s);
    match (t_i.finite(), t_j.finite()) {
        (None, None) => {
            let v = ei * n * dd / s;
            ProfitBreakdown { total: v, phase1: v, phase2: 0.0, phase3: 0.0 }
        }
        (Some(ti), tj) if t_i <= t_j => {
            let x = ee * n * lam_w + ei * ei * n * ee / (lam + s) - ei * n * dd / s
                + ei * ej * n * dd / (lam + s)
                + n0 * ee * mu_w;
            let mut total = x * (-s * ti).exp() + ei * n * dd / s;
            if let Some(tj) = tj {
                total -= (1.0 - ei) * n * ee * lam_w * (-(lam + s) * tj + lam * ti).exp();
                total -= 0.5 * n0 * ee * mu_w * (-(mu + s) * tj + mu * ti).exp();
            }
            let p1 = ei * n * dd * window(s, 0.0, Some(ti));
            let p2 = (n * ee + n0 * ee) * window(s, ti, tj)
                + (ei * ej * n * dd - (1.0 - ei * ei) * n * ee) * lagged(lam, s, ti, tj)
                - n0 * ee * lagged(mu, s, ti, tj);
            let p3 = tj.map_or(0.0, |tj| {
                let d = tj - ti;
                let (kl, km) = ((-lam * d).exp(), (-mu * d).exp());
                (-s * tj).exp()
                    * (ee * n * (ei * ei + (1.0 - ei * ei) * (1.0 - kl)) / s
                        + ee * n * ei * ej * kl * lam_w
                        + ei * ej * kl * n * dd / (lam + s)
                        + n0 * ee * ((1.0 - km) / s + 0.5 * km * mu_w))
            });
            ProfitBreakdown { total, phase1: p1, phase2: p2, phase3: p3 }
        }
        (ti, Some(tj)) => {
            let mut total = ei * n * dd / s - ei * n * dd * lam_w * (-s * tj).exp();
            if let Some(ti) = ti {
                total +=
                    ei * n * (ee / s - ej * ee / (lam + s) - ei * dd / (lam + s)) * (-(lam + s) * ti + lam * tj).exp();
                total += 0.5 * n0 * ee * mu_w * (-(mu + s) * ti + mu * tj).exp();
            }
            let p1 = ei * n * dd * window(s, 0.0, Some(tj));
            let p2 = ei * n * dd * lagged(lam, s, tj, ti);
            let p3 = ti.map_or(0.0, |ti| {
                let d = ti - tj;
                let (kl, km) = ((-lam * d).exp(), (-mu * d).exp());
                (-s * ti).exp()
                    * (ei * ei * kl * n * ee / s
                        + ei * ej * kl * n * ee * lam_w
                        + ei * ej * kl * n * dd / (lam + s)
                        + 0.5 * n0 * km * ee * mu_w)
            });
            ProfitBreakdown { total, phase1: p1, phase2: p2, phase3: p3 }
        }
        (Some(_), None) => unreachable!("a finite time never exceeds Never"),
    }
}

/// Substituted equilibrium profits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EquilibriumFormula {
    /// Rollover, both upgrade at 0.
    RolloverSimultaneous,
    /// Rollover, this provider at 0 and the rival at its delayed response.
    RolloverFirst,
    /// Rollover, the rival at 0 and this provider at its delayed response.
    RolloverLate,
    SharedSimultaneous,
    SharedFirst,
    SharedLate,
}

/// `(1/k)^{(x + S)/(churn - arrival)}`, with `k = inf` giving 0.
fn decay_power(k: f64, x: f64, m: &Market) -> f64 {
    if k.is_infinite() {
        0.0
    } else {
        (1.0 / k).powf((x + m.discount) / m.rates.gap())
    }
}

/// Rollover equilibrium profit by substituted closed form. `kappa` is the
/// delayed provider's ratio (the rival's for `RolloverFirst`, own for
/// `RolloverLate`) and must exceed 1 for those two.
pub fn rollover_equilibrium_profit(
    game: &RolloverGame,
    i: usize,
    which: EquilibriumFormula,
    kappa: f64,
) -> Result<f64> {
    let m = &game.market;
    let (a, s, lam, mu) = (m.alpha, m.discount, m.rates.churn, m.rates.arrival);
    let (ni, nj, n0) = (m.n_of(i), m.n_of(1 - i), m.n_new());
    let (c, r) = (game.costs.traditional, game.costs.rollover);
    let mu_w = 1.0 / s - 1.0 / (s + mu);
    match which {
        EquilibriumFormula::RolloverSimultaneous => Ok(2.0 * a * ni * r / s + a * n0 * mu_w * r),
        EquilibriumFormula::RolloverFirst => {
            require_delay(kappa)?;
            let (xl, xm) = (decay_power(kappa, lam, m), decay_power(kappa, mu, m));
            Ok(2.0 * a * m.n * r / s
                - 2.0 * a * nj * r / (s + lam)
                - 2.0 * a * nj * r * (1.0 / s - 1.0 / (lam + s)) * xl
                + 2.0 * a * n0 * mu_w * r
                - a * n0 * mu_w * xm * r)
        }
        EquilibriumFormula::RolloverLate => {
            require_delay(kappa)?;
            let (xl, xm) = (decay_power(kappa, lam, m), decay_power(kappa, mu, m));
            Ok(2.0 * a * ni * c * (1.0 - xl) / (lam + s) + 2.0 * a * ni * r * xl / s + a * n0 * mu_w * xm * r)
        }
        _ => invalid("shared-plan formula requested for the rollover game"),
    }
}

pub fn shared_equilibrium_profit(game: &SharedGame, i: usize, which: EquilibriumFormula, kappa: f64) -> Result<f64> {
    let m = &game.market;
    let (s, lam, mu) = (m.discount, m.rates.churn, m.rates.arrival);
    let (ei, ej) = (m.shares[i], m.shares[1 - i]);
    let (n, n0) = (m.n, m.n_new());
    let (dd, ee) = (game.agg_individual(), game.agg_shared());
    let lam_w = 1.0 / s - 1.0 / (lam + s);
    let mu_w = 1.0 / s - 1.0 / (mu + s);
    match which {
        EquilibriumFormula::SharedSimultaneous => {
            Ok(ei * n * ee / s + ei * ej * n * (dd - ee) / (lam + s) + 0.5 * n0 * ee * mu_w)
        }
        EquilibriumFormula::SharedFirst => {
            require_delay(kappa)?;
            let (xl, xm) = (decay_power(kappa, lam, m), decay_power(kappa, mu, m));
            Ok(ee * n * lam_w + ei * ei * n * ee / (lam + s) + ei * ej * n * dd / (lam + s) + n0 * ee * mu_w
                - (1.0 - ei) * n * ee * lam_w * xl
                - 0.5 * n0 * ee * mu_w * xm)
        }
        EquilibriumFormula::SharedLate => {
            require_delay(kappa)?;
            let (xl, xm) = (decay_power(kappa, lam, m), decay_power(kappa, mu, m));
            Ok(ei * n * dd * (1.0 - xl) / (lam + s)
                + ei * n * ee * xl / s
                + ei * ej * n * (dd - ee) * xl / (lam + s)
                + 0.5 * n0 * ee * mu_w * xm)
        }
        _ => invalid("rollover formula requested for the shared game"),
    }
}

fn require_delay(kappa: f64) -> Result<()> {
    if kappa > 1.0 {
        Ok(())
    } else {
        invalid(format!("delayed-response formula needs kappa > 1, got {kappa}"))
    }
}

/// Horizon and tolerance for [`quadrature_profit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Integration horizon in units of `1/S`.
    pub horizon_scale: f64,
    /// Largest admissible tail bound relative to the estimate.
    pub tail_rel: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { horizon_scale: 60.0, tail_rel: 1e-9 }
    }
}

/// Either game, for oracle dispatch.
#[derive(Debug, Clone, Copy)]
pub enum GameRef<'a> {
    Rollover(&'a RolloverGame),
    Shared(&'a SharedGame),
}

impl GameRef<'_> {
    fn market(&self) -> &Market {
        match self {
            GameRef::Rollover(g) => &g.market,
            GameRef::Shared(g) => &g.market,
        }
    }

    fn revenue_rate(&self, i: usize, t: f64, t_i: ExtendedTime, t_j: ExtendedTime) -> f64 {
        match self {
            GameRef::Rollover(g) => {
                let k = rollover_phase_counts(&g.market, i, t, t_i, t_j);
                k.total() * if k.upgraded { g.costs.rollover } else { g.costs.traditional }
            }
            GameRef::Shared(g) => {
                let k = shared_phase_counts(&g.market, i, t, t_i, t_j);
                let c = &g.costs;
                let hh = &k.heavy_heavy;
                let hl = &k.heavy_light;
                hh.joint() * c.heavy_heavy
                    + hh.pure_own_individual * 2.0 * c.heavy
                    + hh.mixed_split * c.heavy
                    + hl.joint() * c.heavy_light
                    + hl.pure_own_individual * (c.heavy + c.light)
                    + hl.mixed_split * 0.5 * (c.heavy + c.light)
            }
        }
    }

    /// Upper bound on any revenue rate in the market.
    fn rate_bound(&self) -> f64 {
        let m = self.market();
        match self {
            GameRef::Rollover(g) => 2.0 * m.alpha * (m.n + m.n_new()) * g.costs.traditional.max(g.costs.rollover),
            GameRef::Shared(g) => {
                let c = &g.costs;
                let bill = (2.0 * c.heavy).max(c.heavy + c.light).max(c.heavy_heavy).max(c.heavy_light);
                (m.n + m.n_new()) * bill
            }
        }
    }
}

/// Numerical integral of provider `i`'s discounted revenue stream.
pub fn quadrature_profit(
    game: GameRef<'_>,
    i: usize,
    t_i: ExtendedTime,
    t_j: ExtendedTime,
    opts: OracleOptions,
) -> Result<f64> {
    let m = game.market();
    let s = m.discount;
    let horizon = opts.horizon_scale / s;
    let pts = breakpoints(0.0, horizon, [t_i.as_f64(), t_j.as_f64()]);
    let est = integrate_pieces(
        |t| game.revenue_rate(i, t, t_i, t_j) * (-s * t).exp(),
        &pts,
        Tolerance { abs: 1e-12, rel: 1e-11, max_intervals: 20_000 },
    )?;
    let tail = game.rate_bound() * (-s * horizon).exp() / s;
    let limit = opts.tail_rel * est.value.abs().max(f64::MIN_POSITIVE);
    if tail > limit {
        return Err(Error::Horizon { horizon, tail, limit });
    }
    Ok(est.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::ChurnRates;

    fn game() -> RolloverGame {
        let market = Market {
            n: 100.0,
            shares: vec![0.4, 0.6],
            eta0: 0.3,
            alpha: 0.25,
            rates: ChurnRates::new(1.0, 0.5).unwrap(),
            discount: 1.0,
        };
        RolloverGame::new(market, RolloverCosts { traditional: 27.5, rollover: 25.0 }).unwrap()
    }

    #[test]
    fn never_profit_example() {
        let g = game();
        let mut m = g.market.clone();
        m.shares = vec![1.0, 0.0];
        let g1 = g.with_market(m);
        assert!((profit_rollover_never(&g1, 0) - 1375.0).abs() < 1e-10);
        assert_eq!(profit_rollover_never(&g1, 1), 0.0);
    }

    #[test]
    fn never_never_matches_never_profit() {
        let g = game();
        let p = profit_rollover(&g, 0, ExtendedTime::Never, ExtendedTime::Never);
        assert_eq!(p.total, profit_rollover_never(&g, 0));
    }

    #[test]
    fn simultaneous_zero_is_closed_form() {
        let g = game();
        let p = profit_rollover(&g, 0, ExtendedTime::ZERO, ExtendedTime::ZERO).total;
        let e = rollover_equilibrium_profit(&g, 0, EquilibriumFormula::RolloverSimultaneous, 0.0).unwrap();
        assert!((p - e).abs() < 1e-10 * e);
    }

    #[test]
    fn oracle_detects_short_horizon() {
        let g = game();
        let err = quadrature_profit(
            GameRef::Rollover(&g),
            0,
            ExtendedTime::ZERO,
            ExtendedTime::Never,
            OracleOptions { horizon_scale: 10.0, ..Default::default() },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Horizon { .. }));
    }
}
