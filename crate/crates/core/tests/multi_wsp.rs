mod common;

use common::{deviation_gain, market, random_rollover, rel_err, rng, Zone};
use proptest::prelude::*;
use rollshare::cli::pattern;
use rollshare::market::{ExtendedTime, Market};
use rollshare::multi::{multi_profit, solve_multi, symmetric_immediate_condition, MultiOptions};
use rollshare::nash::NashCheck;
use rollshare::profit::{profit_rollover, RolloverCosts, RolloverGame};
use rollshare::rollover::classify_and_solve;

const ZERO: ExtendedTime = ExtendedTime::ZERO;
const NEVER: ExtendedTime = ExtendedTime::Never;

/// Three-provider scenario used for the cost sweep.
fn table_game(c: f64, eta0: f64) -> RolloverGame {
    let m = market(&[0.1, 0.3, 0.6], eta0, 0.3, 0.78, 0.55, 1.0);
    RolloverGame::new(m, RolloverCosts { traditional: c, rollover: 3.0 }).unwrap()
}

fn symmetric(k: usize, c: f64, eta0: f64) -> RolloverGame {
    let m = market(&vec![1.0 / k as f64; k], eta0, 0.3, 0.78, 0.55, 1.0);
    RolloverGame::new(m, RolloverCosts { traditional: c, rollover: 3.0 }).unwrap()
}

/// Largest gain any provider gets from moving alone to a grid time or `Never`.
fn multi_gain(g: &RolloverGame, times: &[ExtendedTime], t_max: f64) -> (f64, f64) {
    deviation_gain(times, |k, p| multi_profit(g, k, p), t_max, 4_000)
}

#[test]
fn two_providers_agree_with_the_duopoly_solver() {
    let mut r = rng(17);
    let mut checked = 0;
    for _ in 0..25 {
        let g = random_rollover(&mut r, Zone::Reduced);
        let duo = classify_and_solve(&g, &NashCheck::default()).unwrap();
        let multi = solve_multi(&g, &MultiOptions::default()).unwrap();
        assert!(multi.certificate.passed);
        for i in 0..2 {
            let x = profit_rollover(&g, i, multi.times[i], multi.times[1 - i]).total;
            assert!(rel_err(x, multi.profits[i]) < 1e-12);
        }
        // Either solver may land on a different member of a set of
        // equilibria; compare only when the duopoly profile is the one reached.
        if multi.fixed_points.iter().all(|f| f.len() == 2) && multi.fixed_points.len() == 1 {
            for i in 0..2 {
                match (duo.times[i], multi.times[i]) {
                    (ExtendedTime::At(a), ExtendedTime::At(b)) => {
                        assert!((a - b).abs() <= multi.grid_step, "{a} vs {b}")
                    }
                    // Times late enough to be invisible after discounting are reported as `Never`.
                    (ExtendedTime::At(_), NEVER) => {}
                    (a, b) => assert_eq!(a, b, "{g:?}"),
                }
                assert!(rel_err(duo.profits[i], multi.profits[i]) < 1e-6, "{} vs {}", duo.profits[i], multi.profits[i]);
            }
            checked += 1;
        }
    }
    assert!(checked >= 15, "only {checked} comparable games");
}

#[test]
fn permuting_shares_permutes_the_profile() {
    for c in [5.0, 7.0, 9.5, 12.0, 20.0] {
        let g = table_game(c, 0.3);
        let base = solve_multi(&g, &MultiOptions::default()).unwrap();
        let perm = [2, 0, 1];
        let shares: Vec<f64> = perm.iter().map(|&k| g.market.shares[k]).collect();
        let h = g.with_market(Market { shares, ..g.market.clone() });
        let moved = solve_multi(&h, &MultiOptions::default()).unwrap();
        for (slot, &k) in perm.iter().enumerate() {
            match (moved.times[slot], base.times[k]) {
                (ExtendedTime::At(a), ExtendedTime::At(b)) => assert!((a - b).abs() < 1e-5, "cost {c}: {a} vs {b}"),
                (a, b) => assert_eq!(a, b, "cost {c}"),
            }
        }
    }
}

#[test]
fn returned_profiles_are_certified() {
    let mut r = rng(23);
    for k in 0..30 {
        let m = [2, 3, 4][k % 3];
        let mut shares: Vec<f64> = (0..m).map(|_| rand::Rng::gen_range(&mut r, 0.05..1.0)).collect();
        let total: f64 = shares.iter().sum();
        shares.iter_mut().for_each(|s| *s /= total);
        let eta0 = rand::Rng::gen_range(&mut r, 0.0..0.8);
        let c = rand::Rng::gen_range(&mut r, 4.0..15.0);
        let g = RolloverGame::new(
            Market { shares, ..market(&[1.0], eta0, 0.3, 0.78, 0.55, 1.0) },
            RolloverCosts { traditional: c, rollover: 3.0 },
        )
        .unwrap();
        let res = solve_multi(&g, &MultiOptions::default()).unwrap();
        assert!(res.certificate.passed);
        let (gain, eps) = multi_gain(&g, &res.times, res.t_max);
        assert!(gain <= eps, "{:?}: {:?} gain {gain}", g.market.shares, res.times);
    }
}

#[test]
fn immediate_condition_matches_solver_for_symmetric_providers() {
    for m in [2, 3, 5] {
        let g = symmetric(m, 3.0, 0.3);
        let edge = g.costs.rollover * (g.market.rates.churn + 1.0) + 0.3 * 3.0 * 0.55;
        for c in [edge - 0.5, edge - 0.05, edge + 0.05, edge + 0.5, edge + 2.0] {
            let g = symmetric(m, c, 0.3);
            let res = solve_multi(&g, &MultiOptions::default()).unwrap();
            let all_zero = res.times.iter().all(|&t| t == ZERO);
            assert_eq!(symmetric_immediate_condition(&g), all_zero, "m {m} cost {c}: {:?}", res.times);
        }
    }
}

#[test]
fn one_of_three_symmetric_providers_waits() {
    let g = symmetric(3, 6.5, 0.3);
    assert!(!symmetric_immediate_condition(&g));
    let res = solve_multi(&g, &MultiOptions::default()).unwrap();
    assert_eq!(res.times.iter().filter(|&&t| t == ZERO).count(), 2, "{:?}", res.times);
    assert_eq!(res.times.iter().filter(|t| t.finite().is_some_and(|x| x > 0.0)).count(), 1);
}

#[test]
fn cost_sweep_moves_through_the_stages_in_order() {
    let stages = ["000", "00L", "0LL", "0LN", "NNN"];
    let mut seen = Vec::new();
    for k in 0..=68 {
        let c = 3.0 + 0.25 * k as f64;
        let p = pattern(&solve_multi(&table_game(c, 0.3), &MultiOptions::default()).unwrap().times);
        let idx = stages.iter().position(|s| *s == p).unwrap_or_else(|| panic!("cost {c}: unexpected {p}"));
        if seen.last() != Some(&idx) {
            seen.push(idx);
        }
    }
    assert_eq!(seen, vec![0, 1, 2, 3, 4]);
    // The largest provider waits once the pool shrinks.
    let p = |eta0| pattern(&solve_multi(&table_game(5.5, eta0), &MultiOptions::default()).unwrap().times);
    assert_eq!(p(0.3), "000");
    assert_eq!(p(0.1), "00L");
}

#[test]
fn all_immediate_profit_splits_the_pool() {
    for m in [2, 3, 5] {
        let g = symmetric(m, 4.0, 0.4);
        let mk = &g.market;
        let (r, s, mu) = (g.costs.rollover, mk.discount, mk.rates.arrival);
        let expect = 2.0 * mk.alpha * mk.n / m as f64 * r / s
            + 2.0 / m as f64 * mk.alpha * mk.n_new() * r * (1.0 / s - 1.0 / (s + mu));
        let got = multi_profit(&g, 0, &vec![ZERO; m]);
        assert!(rel_err(got, expect) < 1e-12, "{got} vs {expect}");
    }
}

#[test]
fn lone_holdout_decays_at_the_churn_rate() {
    let g = symmetric(3, 8.0, 0.3);
    let m = &g.market;
    let got = multi_profit(&g, 2, &[ZERO, ZERO, NEVER]);
    let expect = g.costs.traditional * 2.0 * m.alpha * m.n_of(2) / (m.rates.churn + m.discount);
    assert!(rel_err(got, expect) < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn two_provider_profit_matches_duopoly(seed in any::<u64>(), a in 0.0..6.0f64, b in 0.0..6.0f64, na in any::<bool>(), nb in any::<bool>()) {
        let g = random_rollover(&mut rng(seed), Zone::Reduced);
        let ta = if na { NEVER } else { ExtendedTime::At(a) };
        let tb = if nb { NEVER } else { ExtendedTime::At(b) };
        for i in 0..2 {
            let p = if i == 0 { [ta, tb] } else { [tb, ta] };
            let x = multi_profit(&g, i, &p);
            let y = profit_rollover(&g, i, p[i], p[1 - i]).total;
            prop_assert!(rel_err(x, y) < 1e-12, "{} vs {}", x, y);
        }
    }

    #[test]
    fn total_heavy_revenue_is_conserved_at_once(seed in any::<u64>(), m in 2usize..6) {
        let mut r = rng(seed);
        let mut shares: Vec<f64> = (0..m).map(|_| rand::Rng::gen_range(&mut r, 0.05..1.0)).collect();
        let total: f64 = shares.iter().sum();
        shares.iter_mut().for_each(|s| *s /= total);
        let g = RolloverGame::new(
            Market { shares, ..market(&[1.0], 0.3, 0.3, 0.78, 0.55, 1.0) },
            RolloverCosts { traditional: 8.0, rollover: 3.0 },
        ).unwrap();
        let all: f64 = (0..m).map(|k| multi_profit(&g, k, &vec![ZERO; m])).sum();
        let mk = &g.market;
        let expect = 2.0 * mk.alpha * mk.n * 3.0 + 2.0 * mk.alpha * mk.n_new() * 3.0 * (1.0 - 1.0 / 1.55);
        prop_assert!(rel_err(all, expect) < 1e-12);
    }
}
