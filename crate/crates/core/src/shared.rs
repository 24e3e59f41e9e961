//! Equilibrium upgrade timing for the shared-plan game, and the conditions
//! under which similar providers share even without new users.

use serde::Serialize;

use crate::equilibrium::{
    finish, first_sign_change, indifference_root, layout_times, lead_slope, settle, split_bound, Band,
    EquilibriumResult, Layout,
};
use crate::error::{Error, Result};
use crate::game::TimingGame;
use crate::market::Market;
use crate::nash::NashCheck;
use crate::numeric::roots::first_root;
use crate::profit::{shared_equilibrium_profit, EquilibriumFormula, FamilyCosts, SharedGame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SharedThresholds {
    /// Expected family bill under individual billing.
    pub individual_total: f64,
    /// Expected family bill under pooled billing.
    pub pooled_total: f64,
    /// New-user pool above which both providers share at once.
    pub large_pool_bound: Option<f64>,
    /// Pool at which a half-share provider is indifferent to leading.
    pub symmetric_pool_root: Option<f64>,
    /// Pool bound from the churn condition, clamped at 0.
    pub churn_pool_bound: Option<f64>,
    /// Upper end of the no-sharing regime; 0 when that regime is empty.
    pub small_pool_bound: Option<f64>,
    /// Share at or below which a follower responds immediately.
    pub follow_share: Option<f64>,
    /// Largest share that still leads against a delayed follower.
    pub lead_share_bound: Option<f64>,
    /// Share at which leading and following earn the same.
    pub indifference_share: Option<f64>,
    /// Shares below this lead while the rival waits.
    pub split_share: Option<f64>,
}

pub fn kappa_shared(game: &SharedGame, i: usize) -> f64 {
    game.kappa(i)
}

/// Normalized profit slope of a provider with share `eta` sharing at 0
/// while its rival follows at the delayed response. Negative values mean
/// leading at 0 pays.
pub fn lead_slope_shared(game: &SharedGame, eta: f64) -> f64 {
    let unit = game.with_market(Market { n: 1.0, ..game.market.clone() });
    lead_slope(&unit, eta)
}

/// Share at which the follower's ratio equals 1: the positive root of
/// `(D - E) x^2 - E (churn / S) x - E eta0 arrival / (2 S)`.
pub fn follow_share(game: &SharedGame) -> f64 {
    let m = &game.market;
    let (dd, ee) = (game.agg_individual(), game.agg_shared());
    let b = ee * m.rates.churn / m.discount;
    (b + (b * b + 2.0 * (dd - ee) * ee * m.eta0 * m.rates.arrival / m.discount).sqrt()) / (2.0 * (dd - ee))
}

fn check_supported(game: &SharedGame) -> Result<()> {
    let m = &game.market;
    let (dd, ee) = (game.agg_individual(), game.agg_shared());
    let cap = ee * (4.0 * m.rates.churn + m.discount) / m.discount;
    if dd >= cap {
        return Err(Error::Unsupported(format!(
            "individual family bill {dd} is at or above pooled bill times (4 churn + S) / S = {cap}"
        )));
    }
    Ok(())
}

pub fn thresholds(game: &SharedGame) -> Result<SharedThresholds> {
    game.market.require_duopoly()?;
    check_supported(game)?;
    let m = &game.market;
    let (s, lam, mu) = (m.discount, m.rates.churn, m.rates.arrival);
    let (dd, ee) = (game.agg_individual(), game.agg_shared());
    let mut th = SharedThresholds {
        individual_total: dd,
        pooled_total: ee,
        large_pool_bound: None,
        symmetric_pool_root: None,
        churn_pool_bound: None,
        small_pool_bound: None,
        follow_share: None,
        lead_share_bound: None,
        indifference_share: None,
        split_share: None,
    };
    if dd <= ee * (lam + s) / s {
        return Ok(th);
    }
    let large = 2.0 * (dd * s - ee * (lam + s)) / (ee * mu);
    th.large_pool_bound = Some(large);
    if m.eta0 >= large {
        return Ok(th);
    }
    let symmetric = |eta0: f64| lead_slope_shared(&game.with_market(m.with_eta0(eta0)), 0.5);
    let root = match first_root(symmetric, 0.0, large, "symmetric new-user pool root")? {
        Some(x) => x,
        None if symmetric(0.0) <= 0.0 => 0.0,
        None => large,
    };
    th.symmetric_pool_root = Some(root);
    let churn = ((dd * s - ee * (2.0 * lam + s)) / (2.0 * ee * mu)).max(0.0);
    th.churn_pool_bound = Some(churn);
    th.small_pool_bound = Some(root.max(0.0).min(churn));
    let rho = follow_share(game);
    th.follow_share = Some(rho);
    // The follower's ratio is positive only above this share.
    let floor = ee * lam / (s * (dd - ee));
    let lead = first_sign_change(|e| lead_slope_shared(game, e), 1.0 - floor - 1e-9, "lead share bound")?;
    th.lead_share_bound = Some(lead);
    let indiff = indifference_root(|x| leading_advantage(game, x), rho, "indifference share")?;
    th.indifference_share = Some(indiff);
    th.split_share = Some(split_bound(rho, lead, indiff).0);
    Ok(th)
}

fn leading_advantage(game: &SharedGame, x: f64) -> f64 {
    let g = game.with_market(game.market.with_duopoly_share(x));
    let first = shared_equilibrium_profit(&g, 0, EquilibriumFormula::SharedFirst, g.kappa(1));
    let late = shared_equilibrium_profit(&g, 0, EquilibriumFormula::SharedLate, g.kappa(0));
    match (first, late) {
        (Ok(a), Ok(b)) => a - b,
        _ => f64::NAN,
    }
}

pub fn classify_and_solve_shared(game: &SharedGame, check: &NashCheck) -> Result<EquilibriumResult<SharedThresholds>> {
    let th = thresholds(game)?;
    let mut notes = Vec::new();
    let eta0 = game.market.eta0;
    let (band, layout) = match th.large_pool_bound {
        None => (Band::MildReduction, Layout::Immediate),
        Some(large) if eta0 >= large => (Band::LargePool, Layout::Immediate),
        Some(_) => {
            let small = th.small_pool_bound.unwrap_or(0.0);
            let lead = th.lead_share_bound.unwrap_or(0.0);
            if small > 0.0 && eta0 <= small {
                (Band::Small, Layout::Standoff { lead_bound: lead })
            } else {
                let rho = th.follow_share.unwrap_or(1.0);
                let (bound, clamped) = split_bound(rho, lead, th.indifference_share.unwrap_or(1.0));
                if clamped {
                    notes.push("split share clamped into [0, 0.5]".into());
                }
                (Band::Medium, Layout::Split { bound })
            }
        }
    };
    let classified = layout_times(game, layout);
    let settled = settle(game, classified, check)?;
    Ok(finish(game, band, settled, th, notes))
}

/// Which family type's pooled saving is mild relative to the churn factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroPoolBranch {
    /// Mixed families save a lot, heavy pairs little: sharing needs many heavy users.
    HeavyPairsMild,
    /// Heavy pairs save a lot, mixed families little: sharing needs few heavy users.
    MixedPairsMild,
    BothMild,
    NeitherMild,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZeroPoolReport {
    /// `(EC_h + EC_l) / EC_hl`.
    pub mixed_ratio: f64,
    /// `2 EC_h / EC_hh`.
    pub heavy_ratio: f64,
    /// `(2 churn + S) / S`.
    pub churn_factor: f64,
    pub branch: ZeroPoolBranch,
    /// Heavy-user fraction at which the branch condition switches.
    pub alpha_bound: Option<f64>,
    pub branch_holds: bool,
    /// Individual billing times S at most pooled billing times `2 churn + S`.
    pub master_holds: bool,
    pub consistent: bool,
}

/// Conditions under which similar providers share even with no new users.
pub fn zero_new_user_conditions(costs: &FamilyCosts, alpha: f64, churn: f64, discount: f64) -> ZeroPoolReport {
    let (h, l, hh, hl) = (costs.heavy, costs.light, costs.heavy_heavy, costs.heavy_light);
    let f = (2.0 * churn + discount) / discount;
    let mixed_ratio = (h + l) / hl;
    let heavy_ratio = 2.0 * h / hh;
    let den = 2.0 * l + (hh - 2.0 * hl) * f;
    let alpha_bound = (den != 0.0).then(|| 2.0 * (h + l - f * hl) / den);
    let branch = match (mixed_ratio <= f, heavy_ratio <= f) {
        (false, true) => ZeroPoolBranch::HeavyPairsMild,
        (true, false) => ZeroPoolBranch::MixedPairsMild,
        (true, true) => ZeroPoolBranch::BothMild,
        (false, false) => ZeroPoolBranch::NeitherMild,
    };
    let branch_holds = match (branch, alpha_bound) {
        (ZeroPoolBranch::HeavyPairsMild, Some(b)) => alpha >= b,
        (ZeroPoolBranch::MixedPairsMild, Some(b)) => alpha <= b,
        (ZeroPoolBranch::BothMild, _) => true,
        _ => false,
    };
    let dd = 2.0 * alpha * h + 2.0 * alpha * (1.0 - alpha) * l;
    let ee = alpha * alpha * hh + 2.0 * alpha * (1.0 - alpha) * hl;
    let master_holds = dd * discount <= ee * (2.0 * churn + discount);
    ZeroPoolReport {
        mixed_ratio,
        heavy_ratio,
        churn_factor: f,
        branch,
        alpha_bound,
        branch_holds,
        master_holds,
        consistent: branch_holds == master_holds,
    }
}
