//! Equilibrium upgrade timing for the rollover game.

use rayon::prelude::*;
use serde::Serialize;

use crate::equilibrium::{
    finish, first_sign_change, indifference_root, layout_times, lead_slope, settle, split_bound, Band,
    EquilibriumResult, Layout,
};
use crate::error::{invalid, Error, Result};
use crate::game::TimingGame;
use crate::market::Market;
use crate::nash::NashCheck;
use crate::numeric::roots::{first_root, SCAN_POINTS, X_TOL};
use crate::profit::{rollover_equilibrium_profit, EquilibriumFormula, RolloverGame};

/// Share and pool bounds that partition the rollover game's equilibria.
/// Entries are `None` when the regime that uses them does not apply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeThresholds {
    /// Heavy-user margin lost by upgrading now instead of waiting; upgrading
    /// immediately is dominant when this is `<= 0`.
    pub reduction_margin: f64,
    /// New-user pool above which both providers upgrade at once.
    pub large_pool_bound: Option<f64>,
    /// New-user pool at or below which similar providers never upgrade.
    pub small_pool_bound: Option<f64>,
    /// Largest share that still leads against a delayed follower.
    pub lead_share_bound: Option<f64>,
    /// Share at or below which a follower responds immediately.
    pub follow_share: Option<f64>,
    /// Share at which leading and following earn the same.
    pub indifference_share: Option<f64>,
    /// Shares below this lead while the rival waits; shares between it and
    /// its mirror upgrade together.
    pub split_share: Option<f64>,
}

/// Ratio deciding whether provider `i` follows an upgraded rival at once
/// (`<= 1`) or after `ln(kappa) / (churn - arrival)`.
pub fn kappa(game: &RolloverGame, i: usize) -> f64 {
    game.kappa(i)
}

/// Leading-slope function: the normalized profit slope of a provider with
/// share `eta` upgrading at 0 while its rival follows at the delayed
/// response. Negative values mean leading at 0 pays. Defined for `eta < 1`.
pub fn lead_slope_fn(game: &RolloverGame, eta: f64) -> f64 {
    let unit = game.with_market(Market { n: 1.0, ..game.market.clone() });
    lead_slope(&unit, eta) / game.market.alpha
}

/// Keeps root searches off shares where the follower's ratio vanishes.
const SHARE_PAD: f64 = 1e-9;

fn follow_share(game: &RolloverGame) -> f64 {
    let m = &game.market;
    m.eta0 * game.costs.rollover * m.rates.arrival / (2.0 * m.discount * game.reduction_margin())
}

fn large_pool_bound(game: &RolloverGame) -> f64 {
    let m = &game.market;
    2.0 * m.discount / m.rates.arrival
        * (game.costs.traditional / game.costs.rollover - (m.rates.churn + m.discount) / m.discount)
}

/// Rejects cost reductions above the modelled range.
fn check_supported(game: &RolloverGame) -> Result<()> {
    let m = &game.market;
    let cap = game.costs.rollover * (2.0 * m.rates.churn + m.discount) / m.discount;
    if game.costs.traditional >= cap {
        return Err(Error::Unsupported(format!(
            "traditional cost {} is at or above rollover cost times (2 churn + S) / S = {cap}",
            game.costs.traditional
        )));
    }
    Ok(())
}

/// Thresholds for the game's new-user pool; they do not depend on the shares.
pub fn thresholds(game: &RolloverGame) -> Result<RegimeThresholds> {
    game.market.require_duopoly()?;
    check_supported(game)?;
    let margin = game.reduction_margin();
    let mut th = RegimeThresholds {
        reduction_margin: margin,
        large_pool_bound: None,
        small_pool_bound: None,
        lead_share_bound: None,
        follow_share: None,
        indifference_share: None,
        split_share: None,
    };
    if margin <= 0.0 {
        return Ok(th);
    }
    let large = large_pool_bound(game);
    th.large_pool_bound = Some(large);
    if game.market.eta0 >= large {
        return Ok(th);
    }
    let symmetric = |eta0: f64| lead_slope_fn(&game.with_market(game.market.with_eta0(eta0)), 0.5);
    th.small_pool_bound = first_root(symmetric, 0.0, large, "small new-user pool bound")?;
    let q = follow_share(game);
    th.follow_share = Some(q);
    let lead = first_sign_change(|e| lead_slope_fn(game, e), 1.0 - SHARE_PAD, "lead share bound")?;
    th.lead_share_bound = Some(lead);
    let indiff = indifference_root(|x| leading_advantage(game, x), q, "indifference share")?;
    th.indifference_share = Some(indiff);
    th.split_share = Some(split_bound(q, lead, indiff).0);
    Ok(th)
}

/// Profit of leading minus profit of following for a provider with share
/// `x`, from the substituted equilibrium formulas. Needs both ratios above 1.
fn leading_advantage(game: &RolloverGame, x: f64) -> f64 {
    let g = game.with_market(game.market.with_duopoly_share(x));
    let first = rollover_equilibrium_profit(&g, 0, EquilibriumFormula::RolloverFirst, g.kappa(1));
    let late = rollover_equilibrium_profit(&g, 0, EquilibriumFormula::RolloverLate, g.kappa(0));
    match (first, late) {
        (Ok(a), Ok(b)) => a - b,
        _ => f64::NAN,
    }
}

/// Classified equilibrium, certified and refined if the certificate fails.
pub fn classify_and_solve(game: &RolloverGame, check: &NashCheck) -> Result<EquilibriumResult<RegimeThresholds>> {
    let th = thresholds(game)?;
    let mut notes = Vec::new();
    let (band, layout) = match (th.large_pool_bound, th.small_pool_bound) {
        (None, _) => (Band::MildReduction, Layout::Immediate),
        (Some(large), _) if game.market.eta0 >= large => (Band::LargePool, Layout::Immediate),
        (Some(large), small) => {
            if let Some(s) = small {
                if s >= large / 2.0 {
                    notes.push(format!("small pool bound {s} is not below half the large pool bound {large}"));
                }
            }
            let lead = th.lead_share_bound.unwrap_or(0.0);
            match small {
                Some(s) if game.market.eta0 <= s => (Band::Small, Layout::Standoff { lead_bound: lead }),
                _ => {
                    let q = th.follow_share.unwrap_or(1.0);
                    let (bound, clamped) = split_bound(q, lead, th.indifference_share.unwrap_or(1.0));
                    if clamped {
                        notes.push("split share clamped into [0, 0.5]".into());
                    }
                    (Band::Medium, Layout::Split { bound })
                }
            }
        }
    };
    let classified = layout_times(game, layout);
    let settled = settle(game, classified, check)?;
    Ok(finish(game, band, settled, th, notes))
}

/// Share up to which provider `i`'s equilibrium profit exceeds its profit
/// when nobody upgrades, with the rival holding the rest. Equal profits, as
/// when neither provider upgrades, count as no gain.
pub fn profit_threshold(game: &RolloverGame, i: usize, check: &NashCheck) -> Result<f64> {
    game.market.require_duopoly()?;
    if game.market.eta0 >= 1.0 {
        return invalid(format!("profit threshold needs a new-user pool below 1, got {}", game.market.eta0));
    }
    let gain = |eta: f64| -> Result<bool> {
        let g = game.with_market(game.market.with_duopoly_share(if i == 0 { eta } else { 1.0 - eta }));
        let eq = classify_and_solve(&g, check)?;
        let never = g.never_profit(i);
        Ok(eq.profits[i] - never > 1e-9 * never.abs())
    };
    let lo = 1e-3;
    let xs: Vec<f64> = (0..SCAN_POINTS).map(|k| lo + (1.0 - lo) * k as f64 / (SCAN_POINTS - 1) as f64).collect();
    let signs: Vec<bool> = xs.par_iter().map(|&x| gain(x)).collect::<Result<_>>()?;
    let changes: Vec<usize> = (1..signs.len()).filter(|&k| signs[k] != signs[k - 1]).collect();
    match changes.as_slice() {
        [] => Ok(if signs[0] { 1.0 } else { 0.0 }),
        [k] if signs[k - 1] => {
            let (mut a, mut b) = (xs[k - 1], xs[*k]);
            while b - a > X_TOL {
                let mid = 0.5 * (a + b);
                if gain(mid)? {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            Ok(a)
        }
        _ => Err(Error::ThresholdNotUnique { count: changes.len() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::Shape;
    use crate::market::{ChurnRates, ExtendedTime};
    use crate::profit::RolloverCosts;

    fn game(c: f64, r: f64, eta0: f64, eta: f64) -> RolloverGame {
        let m = Market {
            n: 100.0,
            shares: vec![eta, 1.0 - eta],
            eta0,
            alpha: 0.25,
            rates: ChurnRates::new(1.0, 0.5).unwrap(),
            discount: 1.0,
        };
        RolloverGame::new(m, RolloverCosts { traditional: c, rollover: r }).unwrap()
    }

    /// The leading slope written out term by term.
    fn slope_written_out(g: &RolloverGame, eta_i: f64) -> f64 {
        let m = &g.market;
        let (c, r) = (g.costs.traditional, g.costs.rollover);
        let (lam, mu, s, e0) = (m.rates.churn, m.rates.arrival, m.discount, m.eta0);
        let eta_j = 1.0 - eta_i;
        let k = 2.0 * eta_j * g.reduction_margin() / (e0 * r * mu / s);
        let p1 = (1.0 / k).powf((lam + s) / (lam - mu));
        let p2 = (1.0 / k).powf((mu + s) / (lam - mu));
        2.0 * (eta_i * c - r + eta_j * s / (lam + s) * r)
            - 2.0 * eta_j * (lam / s - lam / (lam + s)) * r * p1
            - e0 * (mu / s - mu / (mu + s)) * r * p2
            - 2.0 * e0 * mu / (mu + s) * r
    }

    #[test]
    fn lead_slope_matches_written_form() {
        let g = game(8.0, 3.0, 0.4, 0.5);
        let q = follow_share(&g);
        assert!(q > 0.05);
        for eta in [0.0, 0.1, 0.3, 0.5, 0.9 * (1.0 - q), 1.0 - 0.5 * q, 0.99] {
            let a = lead_slope_fn(&g, eta);
            let b = slope_written_out(&g, eta);
            assert!((a - b).abs() < 1e-10 * b.abs().max(1.0), "{eta}: {a} vs {b}");
        }
    }

    #[test]
    fn mild_reduction_is_immediate() {
        let eq = classify_and_solve(&game(6.0, 3.0, 0.3, 0.3), &NashCheck::default()).unwrap();
        assert_eq!(eq.times, vec![ExtendedTime::ZERO; 2]);
        assert_eq!(eq.regime.label(), "mild-reduction-immediate");
    }

    #[test]
    fn no_pool_similar_shares_never_upgrade() {
        let eq = classify_and_solve(&game(8.0, 3.0, 0.0, 0.5), &NashCheck::default()).unwrap();
        assert_eq!(eq.times, vec![ExtendedTime::Never; 2]);
        assert_eq!(eq.regime.shape, Shape::NoUpgrade);
        assert!(eq.refinement.is_none());
    }

    #[test]
    fn large_pool_is_immediate() {
        let g = game(8.0, 3.0, 0.3, 0.3);
        let large = large_pool_bound(&g);
        let g = g.with_market(g.market.with_eta0(large * 1.01));
        let eq = classify_and_solve(&g, &NashCheck::default()).unwrap();
        assert_eq!(eq.regime.label(), "large-eta0-immediate");
    }

    #[test]
    fn unsupported_reduction() {
        assert!(matches!(thresholds(&game(15.0, 3.0, 0.3, 0.5)), Err(Error::Unsupported(_))));
    }

    #[test]
    fn threshold_bracket() {
        let g = game(8.0, 3.0, 0.3, 0.5);
        let check = NashCheck { grid_points: 400, ..NashCheck::default() };
        let th = profit_threshold(&g, 0, &check).unwrap();
        assert!(th > 0.0 && th < 1.0, "{th}");
    }
}
