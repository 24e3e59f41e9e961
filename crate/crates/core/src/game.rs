//! The two-provider timing game shared by the rollover and shared plans.

use crate::market::{ExtendedTime, Market};
use crate::numeric::roots::all_roots;
use crate::profit::{
    profit_rollover, profit_rollover_never, profit_shared, profit_shared_never, PlanType, RolloverGame, SharedGame,
};

pub trait TimingGame: Sync + Clone {
    fn market(&self) -> &Market;
    fn plan(&self) -> PlanType;
    /// Copy of the game with duopoly shares `(eta, 1 - eta)`.
    fn with_market(&self, market: Market) -> Self;
    fn profit(&self, i: usize, t_i: ExtendedTime, t_j: ExtendedTime) -> f64;
    fn never_profit(&self, i: usize) -> f64;
    /// Ratio of the marginal overage revenue kept by waiting to the marginal
    /// new-user revenue lost, for a provider that follows an upgraded rival.
    /// Values `<= 1` mean follow immediately.
    fn kappa(&self, i: usize) -> f64;
    /// Derivative in `t_i` of provider `i`'s profit on the branch `t_i <= t_j`.
    fn early_slope(&self, i: usize, t_i: f64, t_j: ExtendedTime) -> f64;
}

/// Delay after the rival's upgrade that maximizes a follower's profit.
pub fn follow_delay<G: TimingGame>(game: &G, i: usize) -> ExtendedTime {
    let k = game.kappa(i);
    // Within rounding of one the delay is noise; treat it as no delay.
    if k <= 1.0 + 8.0 * f64::EPSILON {
        ExtendedTime::ZERO
    } else if k.is_infinite() {
        ExtendedTime::Never
    } else {
        ExtendedTime::At(k.ln() / game.market().rates.gap())
    }
}

/// Exact best response of provider `i` to the rival's time `t_j`.
///
/// Against `Never` the early-branch profit is monotone in `t_i`, so the
/// answer is `0` or `Never`. Against `t_j = 0` the follower waits by
/// [`follow_delay`]. Otherwise the best early time (boundary or interior
/// stationary point) competes with the best late time. Ties go to the
/// earlier time.
pub fn best_response<G: TimingGame>(game: &G, i: usize, t_j: ExtendedTime) -> ExtendedTime {
    let Some(tj) = t_j.finite() else {
        let now = game.profit(i, ExtendedTime::ZERO, ExtendedTime::Never);
        return if now >= game.never_profit(i) { ExtendedTime::ZERO } else { ExtendedTime::Never };
    };
    let late = ExtendedTime::At(tj).delay(follow_delay(game, i));
    if tj == 0.0 {
        return late;
    }
    let mut candidates = vec![0.0];
    if let Ok(roots) = all_roots(|t| game.early_slope(i, t, t_j), 0.0, tj, "early stationary point") {
        candidates.extend(roots);
    }
    candidates.push(tj);
    let mut best = (f64::NEG_INFINITY, ExtendedTime::ZERO);
    for t in candidates {
        let v = game.profit(i, ExtendedTime::At(t), t_j);
        if v > best.0 {
            best = (v, ExtendedTime::At(t));
        }
    }
    if late == ExtendedTime::At(tj) {
        return best.1;
    }
    if best.0 >= game.profit(i, late, t_j) {
        best.1
    } else {
        late
    }
}

impl TimingGame for RolloverGame {
    fn market(&self) -> &Market {
        &self.market
    }

    fn plan(&self) -> PlanType {
        PlanType::Rollover
    }

    fn with_market(&self, market: Market) -> Self {
        RolloverGame::with_market(self, market)
    }

    fn profit(&self, i: usize, t_i: ExtendedTime, t_j: ExtendedTime) -> f64 {
        profit_rollover(self, i, t_i, t_j).total
    }

    fn never_profit(&self, i: usize) -> f64 {
        profit_rollover_never(self, i)
    }

    fn kappa(&self, i: usize) -> f64 {
        let m = &self.market;
        let num = 2.0 * m.shares[i] * self.reduction_margin();
        let den = m.eta0 * self.costs.rollover * m.rates.arrival / m.discount;
        ratio(num, den)
    }

    fn early_slope(&self, i: usize, t_i: f64, t_j: ExtendedTime) -> f64 {
        let m = &self.market;
        let (a, s, lam, mu) = (m.alpha, m.discount, m.rates.churn, m.rates.arrival);
        let (ni, nj, n0) = (m.n_of(i), m.n_of(1 - i), m.n_new());
        let (c, r) = (self.costs.traditional, self.costs.rollover);
        let ei = (-s * t_i).exp();
        let mut slope = 2.0 * a * ni * c * ei - 2.0 * a * r * (m.n + n0) * ei
            + 2.0 * a * r * nj * s * ei / (lam + s)
            + 2.0 * a * r * n0 * s * ei / (mu + s);
        if let Some(tj) = t_j.finite() {
            let d = tj - t_i;
            let ej = (-s * tj).exp();
            let (kl, km) = ((-lam * d).exp(), (-mu * d).exp());
            slope += 2.0 * a * r * nj * lam * ej * kl / (lam + s) + 2.0 * a * r * n0 * mu * ej * km / (mu + s);
            slope -= r * ej * ((2.0 * a * nj * lam * kl + a * n0 * mu * km) / s + a * n0 * mu * km / (mu + s));
        }
        slope
    }
}

impl TimingGame for SharedGame {
    fn market(&self) -> &Market {
        &self.market
    }

    fn plan(&self) -> PlanType {
        PlanType::Shared
    }

    fn with_market(&self, market: Market) -> Self {
        SharedGame::with_market(self, market)
    }

    fn profit(&self, i: usize, t_i: ExtendedTime, t_j: ExtendedTime) -> f64 {
        profit_shared(self, i, t_i, t_j).total
    }

    fn never_profit(&self, i: usize) -> f64 {
        profit_shared_never(self, i)
    }

    fn kappa(&self, i: usize) -> f64 {
        let m = &self.market;
        let (dd, ee) = (self.agg_individual(), self.agg_shared());
        let e = m.shares[i];
        let num = (dd - ee) * e * e - ee * (m.rates.churn / m.discount) * e;
        let den = 0.5 * ee * m.eta0 * m.rates.arrival / m.discount;
        ratio(num, den)
    }

    fn early_slope(&self, i: usize, t_i: f64, t_j: ExtendedTime) -> f64 {
        let m = &self.market;
        let (s, lam, mu) = (m.discount, m.rates.churn, m.rates.arrival);
        let (ei, ej) = (m.shares[i], m.shares[1 - i]);
        let (n, n0) = (m.n, m.n_new());
        let (dd, ee) = (self.agg_individual(), self.agg_shared());
        let lam_w = 1.0 / s - 1.0 / (lam + s);
        let mu_w = 1.0 / s - 1.0 / (mu + s);
        let x = ee * n * lam_w + ei * ei * n * ee / (lam + s) - ei * n * dd / s
            + ei * ej * n * dd / (lam + s)
            + n0 * ee * mu_w;
        let mut slope = -s * x * (-s * t_i).exp();
        if let Some(tj) = t_j.finite() {
            slope -= lam * (1.0 - ei) * n * ee * lam_w * (-(lam + s) * tj + lam * t_i).exp();
            slope -= mu * 0.5 * n0 * ee * mu_w * (-(mu + s) * tj + mu * t_i).exp();
        }
        slope
    }
}

/// `num / den` with a vanishing denominator sending positive numerators to
/// `+inf` and the rest to 0; both land on the correct side of 1.
fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}
