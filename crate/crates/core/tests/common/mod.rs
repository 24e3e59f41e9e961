#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rollshare::market::{ChurnRates, ExtendedTime, Market};
use rollshare::profit::{FamilyCosts, RolloverCosts, RolloverGame, SharedGame};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn market(shares: &[f64], eta0: f64, alpha: f64, lam: f64, mu: f64, s: f64) -> Market {
    Market { n: 100.0, shares: shares.to_vec(), eta0, alpha, rates: ChurnRates::new(lam, mu).unwrap(), discount: s }
}

pub fn rollover_game(shares: &[f64], eta0: f64, c: f64, r: f64, lam: f64, mu: f64, s: f64) -> RolloverGame {
    let costs = RolloverCosts { traditional: c, rollover: r };
    RolloverGame::new(market(shares, eta0, 0.3, lam, mu, s), costs).unwrap()
}

/// Which part of the rollover parameter space a random game comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Zone {
    Mild,
    Reduced,
}

/// Random duopoly rollover game. `Reduced` games have a traditional cost
/// between the mild bound and the supported cap; the pool is drawn up to
/// 1.2 times the large-pool bound so every band occurs.
pub fn random_rollover(rng: &mut ChaCha8Rng, zone: Zone) -> RolloverGame {
    let lam = rng.gen_range(0.3..2.0);
    let mu = lam * rng.gen_range(0.1..0.9);
    let s = rng.gen_range(0.3..1.5);
    let r = rng.gen_range(2.0..30.0);
    let eta = rng.gen_range(0.05..0.95);
    let alpha = rng.gen_range(0.1..0.9);
    let (mild, cap) = (r * (lam + s) / s, r * (2.0 * lam + s) / s);
    let (c, eta0) = match zone {
        Zone::Mild => (rng.gen_range(r..mild), rng.gen_range(0.0..1.0)),
        Zone::Reduced => {
            let c = mild + (cap - mild) * rng.gen_range(0.02..0.98);
            let large = 2.0 * s / mu * (c / r - (lam + s) / s);
            (c, large * rng.gen_range(0.0..1.2))
        }
    };
    let m = Market {
        n: rng.gen_range(10.0..500.0),
        shares: vec![eta, 1.0 - eta],
        eta0,
        alpha,
        rates: ChurnRates::new(lam, mu).unwrap(),
        discount: s,
    };
    RolloverGame::new(m, RolloverCosts { traditional: c, rollover: r }).unwrap()
}

/// Random shared game. The churn rate is set relative to the pooled saving
/// so the individual bill lies below the supported cap; `spread` above 1
/// gives the mild case, below 1 the reduced case.
pub fn random_shared(rng: &mut ChaCha8Rng, spread: f64) -> SharedGame {
    let alpha = rng.gen_range(0.15..0.85);
    let fee = rng.gen_range(5.0..30.0);
    let light = fee;
    let heavy = fee + rng.gen_range(1.0..20.0);
    let heavy_heavy = 2.0 * fee + (2.0 * (heavy - fee)) * rng.gen_range(0.4..0.95);
    let heavy_light = 2.0 * fee + (heavy - fee) * rng.gen_range(0.2..0.9);
    let costs = FamilyCosts { heavy, light, heavy_heavy, heavy_light };
    let dd = 2.0 * alpha * heavy + 2.0 * alpha * (1.0 - alpha) * light;
    let ee = alpha * alpha * heavy_heavy + 2.0 * alpha * (1.0 - alpha) * heavy_light;
    let s = rng.gen_range(0.05..0.6);
    // Mild when churn >= S (D/E - 1); supported when churn > S (D/E - 1) / 4.
    let lam = s * (dd / ee - 1.0) * spread;
    let mu = lam * rng.gen_range(0.1..0.9);
    let eta = rng.gen_range(0.05..0.95);
    let large = (2.0 * (dd * s - ee * (lam + s)) / (ee * mu)).max(0.5);
    let m = Market {
        n: rng.gen_range(10.0..500.0),
        shares: vec![eta, 1.0 - eta],
        eta0: large * rng.gen_range(0.0..1.2),
        alpha,
        rates: ChurnRates::new(lam, mu).unwrap(),
        discount: s,
    };
    SharedGame::new(m, costs).unwrap()
}

/// Composite Simpson rule on each piece between consecutive `points`.
pub fn simpson<F: Fn(f64) -> f64>(f: F, points: &[f64], per_piece: usize) -> f64 {
    let n = per_piece + per_piece % 2;
    points
        .windows(2)
        .map(|w| {
            let h = (w[1] - w[0]) / n as f64;
            let mut acc = f(w[0]) + f(w[1]);
            for k in 1..n {
                acc += f(w[0] + h * k as f64) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            acc * h / 3.0
        })
        .sum()
}

/// Sorted breakpoints in `[a, b]`.
pub fn pieces(a: f64, b: f64, extra: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = extra.iter().copied().filter(|x| *x > a && *x < b).collect();
    v.push(a);
    v.push(b);
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn rk4_segment<D: Fn(&[f64], f64) -> Vec<f64>>(y: &mut [f64], a: f64, b: f64, h: f64, deriv: D) {
    if b <= a {
        return;
    }
    let steps = ((b - a) / h).ceil() as usize;
    let h = (b - a) / steps as f64;
    for k in 0..steps {
        let t = a + h * k as f64;
        let k1 = deriv(y, t);
        let y2: Vec<f64> = y.iter().zip(&k1).map(|(v, d)| v + 0.5 * h * d).collect();
        let k2 = deriv(&y2, t + 0.5 * h);
        let y3: Vec<f64> = y.iter().zip(&k2).map(|(v, d)| v + 0.5 * h * d).collect();
        let k3 = deriv(&y3, t + 0.5 * h);
        let y4: Vec<f64> = y.iter().zip(&k3).map(|(v, d)| v + h * d).collect();
        let k4 = deriv(&y4, t + h);
        for i in 0..y.len() {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// Segment boundaries of a duopoly timeline up to `horizon`.
fn segments(times: [ExtendedTime; 2], horizon: f64) -> Vec<f64> {
    let marks: Vec<f64> = times.iter().filter_map(|t| t.finite()).collect();
    pieces(0.0, horizon, &marks)
}

/// Discounted rollover revenue of both providers, from RK4 integration of
/// the heavy-user flows: `[h0, h1, pool, R0, R1]`.
pub fn ode_rollover(game: &RolloverGame, times: [ExtendedTime; 2]) -> [f64; 2] {
    let m = &game.market;
    let (lam, mu, s) = (m.rates.churn, m.rates.arrival, m.discount);
    let (c, r) = (game.costs.traditional, game.costs.rollover);
    let horizon = 60.0 / s;
    let h = 0.004 / lam.max(s);
    let mut y = vec![2.0 * m.alpha * m.n_of(0), 2.0 * m.alpha * m.n_of(1), 2.0 * m.alpha * m.n_new(), 0.0, 0.0];
    let cuts = segments(times, horizon);
    for w in cuts.windows(2) {
        let up = [0, 1].map(|k| times[k].finite().is_some_and(|t| t <= w[0]));
        let deriv = |y: &[f64], t: f64| {
            let mut d = vec![0.0; 5];
            match up {
                [true, false] | [false, true] => {
                    let (lead, lag) = if up[0] { (0, 1) } else { (1, 0) };
                    d[lag] = -lam * y[lag];
                    d[lead] = lam * y[lag] + mu * y[2];
                    d[2] = -mu * y[2];
                }
                [true, true] => {
                    d[0] = 0.5 * mu * y[2];
                    d[1] = 0.5 * mu * y[2];
                    d[2] = -mu * y[2];
                }
                [false, false] => {}
            }
            let disc = (-s * t).exp();
            for k in 0..2 {
                d[3 + k] = y[k] * if up[k] { r } else { c } * disc;
            }
            d
        };
        rk4_segment(&mut y, w[0], w[1], h, deriv);
    }
    [y[3], y[4]]
}

/// Discounted shared-plan revenue of both providers from RK4 integration of
/// the family flows. Per family type the state is: individual at 0,
/// individual at 1, joint at 0, joint at 1, split, pool.
pub fn ode_shared(game: &SharedGame, times: [ExtendedTime; 2]) -> [f64; 2] {
    let m = &game.market;
    let c = &game.costs;
    let (lam, mu, s) = (m.rates.churn, m.rates.arrival, m.discount);
    let a = m.alpha;
    let (e0, e1) = (m.shares[0], m.shares[1]);
    let horizon = 60.0 / s;
    let h = 0.004 / lam.max(s);
    // (mass, joint bill, individual bill, split bill per side)
    let types = [
        (a * a, c.heavy_heavy, 2.0 * c.heavy, c.heavy),
        (2.0 * a * (1.0 - a), c.heavy_light, c.heavy + c.light, 0.5 * (c.heavy + c.light)),
    ];
    let mut y = Vec::new();
    for (w, ..) in types {
        y.extend([e0 * e0 * w * m.n, e1 * e1 * w * m.n, 0.0, 0.0, 2.0 * e0 * e1 * w * m.n, w * m.n_new()]);
    }
    y.extend([0.0, 0.0]);
    let cuts = segments(times, horizon);
    for w in cuts.windows(2) {
        let up = [0, 1].map(|k| times[k].finite().is_some_and(|t| t <= w[0]));
        // Upgraded providers bill their own pure families jointly.
        for k in 0..2 {
            if up[k] {
                for f in 0..2 {
                    let b = 6 * f;
                    y[b + 2 + k] += y[b + k];
                    y[b + k] = 0.0;
                }
            }
        }
        let deriv = |y: &[f64], t: f64| {
            let mut d = vec![0.0; 14];
            let disc = (-s * t).exp();
            for (f, (_, joint, indiv, split)) in types.iter().enumerate() {
                let b = 6 * f;
                match up {
                    [true, false] | [false, true] => {
                        let (lead, lag) = if up[0] { (0, 1) } else { (1, 0) };
                        let out = lam * y[b + lag] + lam * y[b + 4] + mu * y[b + 5];
                        d[b + lag] = -lam * y[b + lag];
                        d[b + 4] = -lam * y[b + 4];
                        d[b + 5] = -mu * y[b + 5];
                        d[b + 2 + lead] = out;
                    }
                    [true, true] => {
                        let inflow = lam * y[b + 4] + mu * y[b + 5];
                        d[b + 4] = -lam * y[b + 4];
                        d[b + 5] = -mu * y[b + 5];
                        d[b + 2] = 0.5 * inflow;
                        d[b + 3] = 0.5 * inflow;
                    }
                    [false, false] => {}
                }
                for k in 0..2 {
                    d[12 + k] += (y[b + 2 + k] * joint + y[b + k] * indiv + y[b + 4] * split) * disc;
                }
            }
            d
        };
        rk4_segment(&mut y, w[0], w[1], h, deriv);
    }
    [y[12], y[13]]
}

/// Largest gain any provider gets by deviating to a point of the grid
/// `{0, t_max/points, ..., t_max, Never}`, and the epsilon `1e-6 max|profit|`.
pub fn deviation_gain<P: Fn(usize, &[ExtendedTime]) -> f64>(
    profile: &[ExtendedTime],
    profit: P,
    t_max: f64,
    points: usize,
) -> (f64, f64) {
    let current: Vec<f64> = (0..profile.len()).map(|k| profit(k, profile)).collect();
    let eps = 1e-6 * current.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut worst = f64::NEG_INFINITY;
    let mut trial = profile.to_vec();
    for k in 0..profile.len() {
        for g in 0..=points + 1 {
            trial[k] =
                if g > points { ExtendedTime::Never } else { ExtendedTime::At(t_max * g as f64 / points as f64) };
            worst = worst.max(profit(k, &trial) - current[k]);
        }
        trial[k] = profile[k];
    }
    (worst, eps)
}

/// Deviation horizon: ten of the slower time constants past the latest
/// finite time in the profile.
pub fn horizon(m: &Market, times: &[ExtendedTime]) -> f64 {
    let scale = (1.0 / m.discount).max(1.0 / m.rates.gap());
    10.0 * scale + times.iter().filter_map(|t| t.finite()).fold(0.0, f64::max)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
