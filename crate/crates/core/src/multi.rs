//! Rollover timing with more than two providers.
//!
//! Once some providers have upgraded, every provider still on the old plan
//! loses heavy users at the churn rate and the departures split equally
//! among the upgraded set; the new-user pool drains at the arrival rate and
//! also splits equally among the upgraded set. For two providers this is
//! the duopoly model.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::ExtendedTime;
use crate::nash::{certify, default_t_max, deviation_grid, Certificate, NashCheck};
use crate::profit::{lagged, window, RolloverGame};

/// Whether symmetric providers all upgrade at once: the heavy-user margin
/// is below the marginal new-user revenue. Independent of the number of
/// providers.
pub fn symmetric_immediate_condition(game: &RolloverGame) -> bool {
    let m = &game.market;
    game.reduction_margin() < m.eta0 * game.costs.rollover * m.rates.arrival / m.discount
}

/// Discounted profit of provider `k` for an arbitrary profile.
pub fn multi_profit(game: &RolloverGame, k: usize, times: &[ExtendedTime]) -> f64 {
    let m = &game.market;
    let (a, s, lam, mu) = (m.alpha, m.discount, m.rates.churn, m.rates.arrival);
    let (c, r) = (game.costs.traditional, game.costs.rollover);
    let heavy = |j: usize| 2.0 * a * m.n_of(j);
    let pool = 2.0 * a * m.n_new();
    let Some(first) = times.iter().filter_map(|t| t.finite()).reduce(f64::min) else {
        return c * heavy(k) / s;
    };
    let own = heavy(k);
    let tk = times[k].finite();
    let mut total = c * own * window(s, 0.0, Some(tk.map_or(first, |t| t.min(first))));
    if tk.is_none_or(|t| t > first) {
        total += c * own * lagged(lam, s, first, tk);
    }
    let Some(tk) = tk else {
        return total;
    };
    total += r * own * (-lam * (tk - first)).exp() * (-s * tk).exp() / s;

    let mut marks: Vec<f64> = times.iter().filter_map(|t| t.finite()).filter(|&t| t >= tk).collect();
    marks.sort_by(f64::total_cmp);
    marks.dedup();
    // `e^{-x (t - first)} e^{-S t}` integrated over [lo, hi).
    let decayed = |x: f64, lo: f64, hi: Option<f64>| (-x * (lo - first)).exp() * lagged(x, s, lo, hi);
    let mut inflow = 0.0;
    for (idx, &lo) in marks.iter().enumerate() {
        let hi = marks.get(idx + 1).copied();
        let upgraded = times.iter().filter(|t| t.finite().is_some_and(|t| t <= lo)).count() as f64;
        let laggards: f64 = (0..times.len()).filter(|&j| !times[j].finite().is_some_and(|t| t <= lo)).map(heavy).sum();
        inflow += (lam * laggards * decayed(lam, lo, hi) + mu * pool * decayed(mu, lo, hi)) / upgraded;
    }
    total + r * inflow / s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiOptions {
    /// Spacing of the best-response grid; defaults to 0.05 of the faster
    /// time constant.
    pub grid_step: Option<f64>,
    /// Last finite grid time; defaults to the certification horizon.
    pub t_max: Option<f64>,
    pub check: NashCheck,
    pub max_rounds: usize,
}

impl Default for MultiOptions {
    fn default() -> Self {
        MultiOptions { grid_step: None, t_max: None, check: NashCheck::default(), max_rounds: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiResult {
    pub times: Vec<ExtendedTime>,
    pub profits: Vec<f64>,
    pub certificate: Certificate,
    pub grid_step: f64,
    pub t_max: f64,
    /// Best-response updates on the run that produced `times`.
    pub updates: usize,
    /// Profiles revisited when best responses cycled.
    pub cycle: Option<Vec<Vec<ExtendedTime>>>,
    /// Distinct fixed points reached from the all-`Never` and all-`0` starts.
    pub fixed_points: Vec<Vec<ExtendedTime>>,
}

pub fn default_grid_step(game: &RolloverGame) -> f64 {
    let m = &game.market;
    0.05 / m.discount.max(m.rates.gap())
}

/// Horizon covering every provider's delayed response to a single rival
/// holding the rest of the market.
fn default_horizon(game: &RolloverGame) -> f64 {
    let m = &game.market;
    let den = m.eta0 * game.costs.rollover * m.rates.arrival / m.discount;
    let delays = m.shares.iter().map(|&e| {
        let k = 2.0 * e * game.reduction_margin() / den;
        if k > 1.0 && k.is_finite() {
            ExtendedTime::At(k.ln() / m.rates.gap())
        } else {
            ExtendedTime::ZERO
        }
    });
    default_t_max(m, delays)
}

struct Search<'a> {
    game: &'a RolloverGame,
    grid: Vec<ExtendedTime>,
}

impl Search<'_> {
    /// Grid index of provider `k`'s best response; ties go to the earlier time.
    fn best_index(&self, k: usize, profile: &[usize]) -> usize {
        let times: Vec<ExtendedTime> = profile.iter().map(|&g| self.grid[g]).collect();
        let values: Vec<f64> = (0..self.grid.len())
            .into_par_iter()
            .map(|g| {
                let mut t = times.clone();
                t[k] = self.grid[g];
                multi_profit(self.game, k, &t)
            })
            .collect();
        let mut best = 0;
        for (g, v) in values.iter().enumerate() {
            if *v > values[best] {
                best = g;
            }
        }
        best
    }

    /// Ascending-index best responses, restarting from provider 0 after any
    /// change, until a full pass changes nothing or a profile repeats.
    fn iterate(&self, start: Vec<usize>, max_rounds: usize) -> (Vec<usize>, usize, Option<Vec<Vec<usize>>>) {
        let mut profile = start;
        let mut seen: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut order = vec![profile.clone()];
        seen.insert(profile.clone(), 0);
        let mut updates = 0;
        'outer: while updates < max_rounds {
            for k in 0..profile.len() {
                let b = self.best_index(k, &profile);
                if b != profile[k] {
                    profile[k] = b;
                    updates += 1;
                    if let Some(&at) = seen.get(&profile) {
                        return (profile, updates, Some(order[at..].to_vec()));
                    }
                    seen.insert(profile.clone(), order.len());
                    order.push(profile.clone());
                    continue 'outer;
                }
            }
            return (profile, updates, None);
        }
        (profile, updates, Some(order))
    }
}

/// Golden-section maximizer on `[lo, hi]`.
fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > 1e-11 * (1.0 + hi.abs()) {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for x in [lo, hi] {
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

/// Moves each finite upgrade time to its local optimum within one grid
/// step, in turn, until the profile settles.
fn polish(game: &RolloverGame, times: &mut [ExtendedTime], step: f64) {
    for _ in 0..50 {
        let mut moved = 0.0f64;
        for k in 0..times.len() {
            let Some(t) = times[k].finite() else { continue };
            let current = multi_profit(game, k, times);
            let eval = |x: f64| {
                let mut p = times.to_vec();
                p[k] = ExtendedTime::At(x);
                multi_profit(game, k, &p)
            };
            let (x, v) = golden_max(eval, (t - step).max(0.0), t + step);
            let zero = eval(0.0);
            let (x, v) = if zero >= v { (0.0, zero) } else { (x, v) };
            if v > current {
                moved = moved.max((x - t).abs());
                times[k] = ExtendedTime::At(x);
            }
        }
        if moved < 1e-10 {
            break;
        }
    }
}

/// Replaces late times whose removal changes no provider's profit by more
/// than a relative `1e-10` with `Never`; discounting has erased them.
fn snap_to_never(game: &RolloverGame, times: &mut [ExtendedTime]) {
    let mut order: Vec<usize> = (0..times.len()).filter(|&k| !times[k].is_never()).collect();
    order.sort_by(|&a, &b| times[b].as_f64().total_cmp(&times[a].as_f64()));
    for k in order {
        let before: Vec<f64> = (0..times.len()).map(|j| multi_profit(game, j, times)).collect();
        let scale = before.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut trial = times.to_vec();
        trial[k] = ExtendedTime::Never;
        let same = (0..times.len()).all(|j| (multi_profit(game, j, &trial) - before[j]).abs() <= 1e-10 * scale);
        if same {
            times[k] = ExtendedTime::Never;
        }
    }
}

fn certify_profile(game: &RolloverGame, times: &[ExtendedTime], check: &NashCheck) -> Certificate {
    let t_max = check.t_max.unwrap_or_else(|| default_t_max(&game.market, times.iter().copied()));
    let (grid, step) = deviation_grid(t_max, check.grid_points);
    certify(times, |k, p| multi_profit(game, k, p), &grid, step, check.rel_eps, |_, _| Vec::new())
}

/// Equilibrium by best-response iteration on a time grid, polished off-grid
/// and certified. Iteration runs from the all-`Never` and the all-`0`
/// profiles. The first decides, except that a no-upgrade outcome gives way
/// to a certified outcome of the second in which someone upgrades.
pub fn solve_multi(game: &RolloverGame, opts: &MultiOptions) -> Result<MultiResult> {
    let m = &game.market;
    let step = opts.grid_step.unwrap_or_else(|| default_grid_step(game));
    let t_max = opts.t_max.unwrap_or_else(|| default_horizon(game));
    if !(step > 0.0 && t_max > 0.0) {
        return Err(Error::Invalid(format!("grid step {step} and horizon {t_max} must be positive")));
    }
    let points = (t_max / step).ceil() as usize;
    let (grid, step) = deviation_grid(points as f64 * step, points);
    let never = grid.len() - 1;
    let search = Search { game, grid };
    let to_times = |p: &[usize]| -> Vec<ExtendedTime> { p.iter().map(|&g| search.grid[g]).collect() };
    let settle = |p: &[usize]| {
        let mut t = to_times(p);
        polish(game, &mut t, step);
        snap_to_never(game, &mut t);
        t
    };

    // One run per start; each yields a certified profile or the smallest gain seen.
    let mut runs: Vec<Run> = Vec::new();
    let mut smallest_gain = f64::INFINITY;
    for start in [never, 0] {
        let (profile, updates, cycle) = search.iterate(vec![start; m.providers()], opts.max_rounds);
        let visited = cycle.clone().unwrap_or_else(|| vec![profile]);
        let mut best: Option<(Vec<ExtendedTime>, Certificate)> = None;
        for p in &visited {
            let t = settle(p);
            let cert = certify_profile(game, &t, &opts.check);
            if best.as_ref().is_none_or(|(_, b)| cert.max_gain < b.max_gain) {
                best = Some((t, cert));
            }
        }
        let (times, certificate) = best.expect("at least one visited profile");
        smallest_gain = smallest_gain.min(certificate.max_gain);
        if certificate.passed {
            let cycle = cycle.map(|c| c.iter().map(|p| to_times(p)).collect());
            runs.push(Run { times, certificate, updates, cycle });
        }
    }
    let mut fixed_points: Vec<Vec<ExtendedTime>> = Vec::new();
    for r in runs.iter().filter(|r| r.cycle.is_none()) {
        if !fixed_points.contains(&r.times) {
            fixed_points.push(r.times.clone());
        }
    }
    // The all-`Never` run decides unless it found nobody upgrading and the
    // all-`0` run certified a profile in which someone does.
    let mut runs = runs.into_iter();
    let chosen = match (runs.next(), runs.next()) {
        (Some(a), Some(b)) if a.times.iter().all(|t| t.is_never()) && !b.times.iter().all(|t| t.is_never()) => b,
        (Some(a), _) => a,
        (None, _) => return Err(Error::NoEquilibrium { gain: smallest_gain }),
    };
    let profits = (0..chosen.times.len()).map(|k| multi_profit(game, k, &chosen.times)).collect();
    Ok(MultiResult {
        times: chosen.times,
        profits,
        certificate: chosen.certificate,
        grid_step: step,
        t_max,
        updates: chosen.updates,
        cycle: chosen.cycle,
        fixed_points,
    })
}

struct Run {
    times: Vec<ExtendedTime>,
    certificate: Certificate,
    updates: usize,
    cycle: Option<Vec<Vec<ExtendedTime>>>,
}
