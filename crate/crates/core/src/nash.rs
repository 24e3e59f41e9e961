//! Epsilon-Nash certificates on a deviation grid.

use serde::Serialize;

use crate::game::{best_response, follow_delay, TimingGame};
use crate::market::{ExtendedTime, Market};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NashCheck {
    /// Number of grid steps on `[0, t_max]`.
    pub grid_points: usize,
    /// Tolerance relative to the largest profit in the profile.
    pub rel_eps: f64,
    /// Overrides the default horizon when set.
    pub t_max: Option<f64>,
}

impl Default for NashCheck {
    fn default() -> Self {
        NashCheck { grid_points: 4000, rel_eps: 1e-6, t_max: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificate {
    pub epsilon: f64,
    /// Largest profit gain any single provider achieves by deviating.
    pub max_gain: f64,
    pub worst_provider: usize,
    pub best_deviation: ExtendedTime,
    pub t_max: f64,
    pub grid_step: f64,
    pub passed: bool,
}

/// Horizon beyond which deviations are dominated by discounting: ten of the
/// slower time constants past the latest finite time of interest.
pub fn default_t_max(market: &Market, times: impl IntoIterator<Item = ExtendedTime>) -> f64 {
    let scale = (1.0 / market.discount).max(1.0 / market.rates.gap());
    let latest = times.into_iter().filter_map(ExtendedTime::finite).fold(0.0, f64::max);
    10.0 * scale + latest
}

/// `{0, step, ..., t_max, Never}`.
pub fn deviation_grid(t_max: f64, points: usize) -> (Vec<ExtendedTime>, f64) {
    let n = points.max(1);
    let step = t_max / n as f64;
    let mut grid: Vec<ExtendedTime> = (0..=n).map(|k| ExtendedTime::At(step * k as f64)).collect();
    grid.push(ExtendedTime::Never);
    (grid, step)
}

/// Certify `profile` for an `n`-player game given a profit oracle. `extra`
/// supplies additional per-player deviations (e.g. exact best responses).
pub fn certify<P, X>(
    profile: &[ExtendedTime],
    profit: P,
    grid: &[ExtendedTime],
    step: f64,
    rel_eps: f64,
    extra: X,
) -> Certificate
where
    P: Fn(usize, &[ExtendedTime]) -> f64 + Sync,
    X: Fn(usize, &[ExtendedTime]) -> Vec<ExtendedTime>,
{
    let current: Vec<f64> = (0..profile.len()).map(|k| profit(k, profile)).collect();
    let epsilon = rel_eps * current.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst = (f64::NEG_INFINITY, 0usize, profile[0]);
    let mut trial = profile.to_vec();
    for k in 0..profile.len() {
        let mut devs = grid.to_vec();
        devs.extend(extra(k, profile));
        for d in devs {
            trial[k] = d;
            let gain = profit(k, &trial) - current[k];
            if gain > worst.0 {
                worst = (gain, k, d);
            }
        }
        trial[k] = profile[k];
    }
    let t_max = grid.iter().filter_map(|t| t.finite()).fold(0.0, f64::max);
    Certificate {
        epsilon,
        max_gain: worst.0,
        worst_provider: worst.1,
        best_deviation: worst.2,
        t_max,
        grid_step: step,
        passed: worst.0 <= epsilon,
    }
}

/// Certificate for a duopoly profile, with the exact best responses added to
/// the deviation grid.
pub fn certify_duopoly<G: TimingGame>(game: &G, times: [ExtendedTime; 2], check: &NashCheck) -> Certificate {
    let t_max = check.t_max.unwrap_or_else(|| {
        default_t_max(game.market(), [times[0], times[1], follow_delay(game, 0), follow_delay(game, 1)])
    });
    let (grid, step) = deviation_grid(t_max, check.grid_points);
    certify(
        &times,
        |k, p| game.profit(k, p[k], p[1 - k]),
        &grid,
        step,
        check.rel_eps,
        |k, p| vec![best_response(game, k, p[1 - k])],
    )
}
