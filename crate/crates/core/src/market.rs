//! Market scenario and the deterministic churn dynamics.
//!
//! Once a provider upgrades, the rival's heavy users (rollover) or families
//! (shared) leave at rate `churn` and unlocked new users arrive at rate
//! `arrival`. Upgraded subscribers are locked in. After both have upgraded,
//! the remaining new pool and still-split families divide equally.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::cost::{CostSummary, TariffPlan, UsageModel, UserClass};
use crate::error::{invalid, Error, Result};

/// Upgrade time on `[0, inf]`; `Never` is the point at infinity.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum ExtendedTime {
    At(f64),
    Never,
}

impl ExtendedTime {
    pub const ZERO: ExtendedTime = ExtendedTime::At(0.0);

    pub fn at(t: f64) -> Result<Self> {
        if t.is_finite() && t >= 0.0 {
            Ok(ExtendedTime::At(t))
        } else if t == f64::INFINITY {
            Ok(ExtendedTime::Never)
        } else {
            invalid(format!("upgrade time must be >= 0, got {t}"))
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedTime::At(t) => Some(t),
            ExtendedTime::Never => None,
        }
    }

    pub fn is_never(self) -> bool {
        matches!(self, ExtendedTime::Never)
    }

    /// Float view with `Never` as `+inf`; for display and sorting only.
    pub fn as_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    pub fn min(self, other: ExtendedTime) -> ExtendedTime {
        if other < self {
            other
        } else {
            self
        }
    }

    /// `self + dt`, with `Never` absorbing.
    pub fn delay(self, dt: ExtendedTime) -> ExtendedTime {
        match (self, dt) {
            (ExtendedTime::At(a), ExtendedTime::At(b)) => ExtendedTime::At(a + b),
            _ => ExtendedTime::Never,
        }
    }
}

impl fmt::Display for ExtendedTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedTime::At(t) => write!(f, "{}", crate::report::fmt_g(*t)),
            ExtendedTime::Never => f.write_str("inf"),
        }
    }
}

impl FromStr for ExtendedTime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "never" => Ok(ExtendedTime::Never),
            other => match other.parse::<f64>() {
                Ok(t) => ExtendedTime::at(t),
                Err(_) => invalid(format!("cannot parse upgrade time {s:?}")),
            },
        }
    }
}

impl Serialize for ExtendedTime {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtendedTime::At(t) => s.serialize_f64(*t),
            ExtendedTime::Never => s.serialize_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChurnRates {
    /// Rate at which a laggard's existing subscribers switch.
    pub churn: f64,
    /// Rate at which unlocked new users subscribe.
    pub arrival: f64,
}

impl ChurnRates {
    pub fn new(churn: f64, arrival: f64) -> Result<Self> {
        let r = ChurnRates { churn, arrival };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.arrival > 0.0 && self.churn > self.arrival && self.churn.is_finite()) {
            return invalid(format!(
                "rates must satisfy churn > arrival > 0, got churn = {}, arrival = {}",
                self.churn, self.arrival
            ));
        }
        Ok(())
    }

    pub fn gap(&self) -> f64 {
        self.churn - self.arrival
    }
}

/// Population, shares and rates; everything the timing games need besides costs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Market {
    /// Half the existing population (users), or the number of families.
    pub n: f64,
    pub shares: Vec<f64>,
    /// New-user pool as a fraction of `n`.
    pub eta0: f64,
    /// Heavy-user fraction.
    pub alpha: f64,
    pub rates: ChurnRates,
    pub discount: f64,
}

impl Market {
    pub fn validate(&self) -> Result<()> {
        if !(self.n >= 0.0 && self.n.is_finite()) {
            return invalid(format!("population must be finite and >= 0, got {}", self.n));
        }
        if self.shares.len() < 2 {
            return invalid(format!("need at least two providers, got {}", self.shares.len()));
        }
        if let Some(s) = self.shares.iter().find(|s| !(**s >= 0.0 && **s <= 1.0)) {
            return invalid(format!("market shares must lie in [0, 1], got {s}"));
        }
        let total: f64 = self.shares.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("market shares must sum to 1, got {total}"));
        }
        if !(self.eta0 >= 0.0 && self.eta0.is_finite()) {
            return invalid(format!("new-user proportion must be finite and >= 0, got {}", self.eta0));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return invalid(format!("heavy-user fraction must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.discount > 0.0 && self.discount.is_finite()) {
            return invalid(format!("discount rate must be finite and > 0, got {}", self.discount));
        }
        self.rates.validate()
    }

    pub fn providers(&self) -> usize {
        self.shares.len()
    }

    pub fn n_of(&self, i: usize) -> f64 {
        self.shares[i] * self.n
    }

    pub fn n_new(&self) -> f64 {
        self.eta0 * self.n
    }

    /// Copy with duopoly shares `(eta, 1 - eta)`.
    pub fn with_duopoly_share(&self, eta: f64) -> Market {
        Market { shares: vec![eta, 1.0 - eta], ..self.clone() }
    }

    pub fn with_eta0(&self, eta0: f64) -> Market {
        Market { eta0, ..self.clone() }
    }

    pub(crate) fn require_duopoly(&self) -> Result<()> {
        if self.shares.len() != 2 {
            return invalid(format!("duopoly analysis needs exactly two shares, got {}", self.shares.len()));
        }
        Ok(())
    }
}

/// The full scenario: market plus tariff and usage models.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketConfig {
    pub market: Market,
    pub plan: TariffPlan,
    pub light: UsageModel,
    pub heavy: UsageModel,
}

impl MarketConfig {
    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        self.plan.validate()?;
        if self.light.class != UserClass::Light || self.heavy.class != UserClass::Heavy {
            return invalid("light and heavy usage models are swapped");
        }
        if self.light.max > self.plan.quota {
            return invalid(format!("light usage maximum {} exceeds the quota {}", self.light.max, self.plan.quota));
        }
        Ok(())
    }

    pub fn costs(&self) -> Result<CostSummary> {
        self.validate()?;
        CostSummary::compute(&self.plan, &self.light, &self.heavy, self.market.alpha)
    }
}

/// `eta_j e^{-churn (t - t_lead)}`.
pub fn laggard_share(eta_j: f64, rates: &ChurnRates, t: f64, t_lead: f64) -> f64 {
    eta_j * (-rates.churn * (t - t_lead).max(0.0)).exp()
}

/// `eta0 e^{-arrival (t - t_lead)}`.
pub fn new_pool_share(eta0: f64, rates: &ChurnRates, t: f64, t_lead: f64) -> f64 {
    eta0 * (-rates.arrival * (t - t_lead).max(0.0)).exp()
}

/// Share of a provider that upgraded at `t_i`, for `t_i <= t <= t_j`.
pub fn leader_share(market: &Market, i: usize, t: f64, t_i: f64, t_j: ExtendedTime) -> f64 {
    let snap = duopoly_shares(market, t, ExtendedTime::At(t_i), t_j);
    snap.providers[i]
}

/// Duopoly subscriber shares (of `n`) at time `t` for any pair of upgrade times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShareSnapshot {
    pub providers: [f64; 2],
    pub pool: f64,
}

pub fn duopoly_shares(market: &Market, t: f64, t0: ExtendedTime, t1: ExtendedTime) -> ShareSnapshot {
    let (e0, e1) = (market.shares[0], market.shares[1]);
    let (lead, first, second) = if t0 <= t1 { (0, t0, t1) } else { (1, t1, t0) };
    let Some(tl) = first.finite().filter(|tl| t >= *tl) else {
        return ShareSnapshot { providers: [e0, e1], pool: market.eta0 };
    };
    let phase2_end = second.finite().map_or(t, |tg| t.min(tg));
    let tau = phase2_end - tl;
    let keep = (-market.rates.churn * tau).exp();
    let pool_at_second = (-market.rates.arrival * tau).exp() * market.eta0;
    let lag_share = if lead == 0 { e1 } else { e0 };
    let lead_share = if lead == 0 { e0 } else { e1 };
    let mut leader = lead_share + lag_share * (1.0 - keep) + (market.eta0 - pool_at_second);
    let mut laggard = lag_share * keep;
    let mut pool = pool_at_second;
    if let Some(tg) = second.finite().filter(|tg| t > *tg) {
        let rest = pool_at_second * (-market.rates.arrival * (t - tg)).exp();
        let joined = pool_at_second - rest;
        leader += 0.5 * joined;
        laggard += 0.5 * joined;
        pool = rest;
    }
    let mut providers = [0.0; 2];
    providers[lead] = leader;
    providers[1 - lead] = laggard;
    ShareSnapshot { providers, pool }
}

/// Heavy-user headcounts held by one provider under the rollover game.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RolloverCounts {
    /// Provider's original heavy users still subscribed.
    pub own: f64,
    /// Heavy users switched in from the rival.
    pub switched_in: f64,
    /// New users acquired while this provider was the only upgrader.
    pub new_exclusive: f64,
    /// New users acquired while both had upgraded.
    pub new_split: f64,
    /// Whether this provider offers rollover at `t`.
    pub upgraded: bool,
}

impl RolloverCounts {
    pub fn total(&self) -> f64 {
        self.own + self.switched_in + self.new_exclusive + self.new_split
    }
}

struct Timeline {
    /// Time since the first upgrade, capped at the second upgrade.
    tau: f64,
    /// Time since the second upgrade, 0 before it.
    since_second: f64,
    /// Whether the second upgrade has happened by `t`.
    second_done: bool,
}

fn timeline(t: f64, first: f64, second: ExtendedTime) -> Timeline {
    match second.finite() {
        Some(tg) if t >= tg => Timeline { tau: tg - first, since_second: t - tg, second_done: true },
        _ => Timeline { tau: t - first, since_second: 0.0, second_done: false },
    }
}

pub fn rollover_phase_counts(
    market: &Market,
    i: usize,
    t: f64,
    t_i: ExtendedTime,
    t_j: ExtendedTime,
) -> RolloverCounts {
    let j = 1 - i;
    let two_a = 2.0 * market.alpha;
    let (ni, nj, n0) = (market.n_of(i), market.n_of(j), market.n_new());
    let first = t_i.min(t_j);
    let Some(tl) = first.finite().filter(|tl| t >= *tl) else {
        return RolloverCounts { own: two_a * ni, ..Default::default() };
    };
    let leading = t_i <= t_j;
    let second = if leading { t_j } else { t_i };
    let tl_line = timeline(t, tl, second);
    let lam = market.rates.churn;
    let mu = market.rates.arrival;
    let pool_left = (-mu * tl_line.tau).exp();
    let new_split = if tl_line.second_done {
        market.alpha * n0 * pool_left * (1.0 - (-mu * tl_line.since_second).exp())
    } else {
        0.0
    };
    if leading {
        RolloverCounts {
            own: two_a * ni,
            switched_in: two_a * nj * (1.0 - (-lam * tl_line.tau).exp()),
            new_exclusive: two_a * n0 * (1.0 - pool_left),
            new_split,
            upgraded: true,
        }
    } else {
        RolloverCounts {
            own: two_a * ni * (-lam * tl_line.tau).exp(),
            switched_in: 0.0,
            new_exclusive: 0.0,
            new_split,
            upgraded: tl_line.second_done,
        }
    }
}

/// Family counts of one type (heavy-heavy or heavy-light) seen by one provider.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct FamilyCounts {
    /// Own pure families, billed jointly.
    pub pure_own_shared: f64,
    /// Own pure families, billed per member.
    pub pure_own_individual: f64,
    /// Rival pure families that switched in, billed jointly.
    pub switched_in: f64,
    /// Mixed families consolidated here, billed jointly.
    pub mixed_consolidated: f64,
    /// Mixed families still split across providers; each provider bills its own member.
    pub mixed_split: f64,
    /// New families subscribed here, billed jointly.
    pub new_families: f64,
}

impl FamilyCounts {
    pub fn joint(&self) -> f64 {
        self.pure_own_shared + self.switched_in + self.mixed_consolidated + self.new_families
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SharedCounts {
    pub heavy_heavy: FamilyCounts,
    pub heavy_light: FamilyCounts,
    pub upgraded: bool,
}

/// Counts for a family type of total existing mass `w` and new mass `w0`.
fn family_counts(
    market: &Market,
    i: usize,
    t: f64,
    t_i: ExtendedTime,
    t_j: ExtendedTime,
    w: f64,
    w0: f64,
) -> (FamilyCounts, bool) {
    let (ei, ej) = (market.shares[i], market.shares[1 - i]);
    let first = t_i.min(t_j);
    let before =
        FamilyCounts { pure_own_individual: ei * ei * w, mixed_split: 2.0 * ei * ej * w, ..Default::default() };
    let Some(tl) = first.finite().filter(|tl| t >= *tl) else {
        return (before, false);
    };
    let leading = t_i <= t_j;
    let second = if leading { t_j } else { t_i };
    let line = timeline(t, tl, second);
    let (lam, mu) = (market.rates.churn, market.rates.arrival);
    let stay = (-lam * line.tau).exp();
    let pool_left = (-mu * line.tau).exp();
    // Mixed families still split at the second upgrade consolidate at rate
    // `churn` afterwards, half to each provider.
    let split_now = 2.0 * ei * ej * w * stay * (-lam * line.since_second).exp();
    let late_consolidated = ei * ej * w * stay * (1.0 - (-lam * line.since_second).exp());
    let late_new = 0.5 * w0 * pool_left * (1.0 - (-mu * line.since_second).exp());
    if leading {
        let counts = FamilyCounts {
            pure_own_shared: ei * ei * w,
            pure_own_individual: 0.0,
            switched_in: ej * ej * w * (1.0 - stay),
            mixed_consolidated: 2.0 * ei * ej * w * (1.0 - stay) + late_consolidated,
            mixed_split: split_now,
            new_families: w0 * (1.0 - pool_left) + late_new,
        };
        (counts, true)
    } else if line.second_done {
        let counts = FamilyCounts {
            pure_own_shared: ei * ei * w * stay,
            pure_own_individual: 0.0,
            switched_in: 0.0,
            mixed_consolidated: late_consolidated,
            mixed_split: split_now,
            new_families: late_new,
        };
        (counts, true)
    } else {
        let counts =
            FamilyCounts { pure_own_individual: ei * ei * w * stay, mixed_split: split_now, ..Default::default() };
        (counts, false)
    }
}

pub fn shared_phase_counts(market: &Market, i: usize, t: f64, t_i: ExtendedTime, t_j: ExtendedTime) -> SharedCounts {
    let a = market.alpha;
    let (w_hh, w_hl) = (a * a, 2.0 * a * (1.0 - a));
    let (n, n0) = (market.n, market.n_new());
    let (heavy_heavy, upgraded) = family_counts(market, i, t, t_i, t_j, w_hh * n, w_hh * n0);
    let (heavy_light, _) = family_counts(market, i, t, t_i, t_j, w_hl * n, w_hl * n0);
    SharedCounts { heavy_heavy, heavy_light, upgraded }
}
