mod common;

use common::market;
use proptest::prelude::*;
use rollshare::market::{
    duopoly_shares, laggard_share, leader_share, new_pool_share, rollover_phase_counts, shared_phase_counts,
    ChurnRates, ExtendedTime, Market,
};

const NEVER: ExtendedTime = ExtendedTime::Never;

fn at(t: f64) -> ExtendedTime {
    ExtendedTime::At(t)
}

fn base() -> Market {
    market(&[0.4, 0.6], 0.3, 0.25, 1.0, 0.5, 1.0)
}

/// RK4 solution of the share ODEs from 0 to `t` for a leader at `t_lead`
/// and a follower at `t_follow`: `[leader, laggard, pool]`.
fn ode_shares(m: &Market, lead: usize, t_lead: f64, t_follow: f64, t: f64) -> [f64; 3] {
    let (lam, mu) = (m.rates.churn, m.rates.arrival);
    let mut y = [m.shares[lead], m.shares[1 - lead], m.eta0];
    let add = |y: [f64; 3], d: [f64; 3], k: f64| [y[0] + k * d[0], y[1] + k * d[1], y[2] + k * d[2]];
    let cuts = [0.0, t_lead.min(t), t_follow.min(t), t];
    for (phase, w) in cuts.windows(2).enumerate() {
        let deriv = |y: [f64; 3]| -> [f64; 3] {
            match phase {
                0 => [0.0; 3],
                1 => [lam * y[1] + mu * y[2], -lam * y[1], -mu * y[2]],
                _ => [0.5 * mu * y[2], 0.5 * mu * y[2], -mu * y[2]],
            }
        };
        let steps = 10_000;
        let h = (w[1] - w[0]) / steps as f64;
        for _ in 0..steps {
            let k1 = deriv(y);
            let k2 = deriv(add(y, k1, 0.5 * h));
            let k3 = deriv(add(y, k2, 0.5 * h));
            let k4 = deriv(add(y, k3, h));
            for i in 0..3 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
    y
}

#[test]
fn laggard_examples() {
    let r = ChurnRates::new(1.0, 0.5).unwrap();
    assert_eq!(laggard_share(0.6, &r, 2.0, 2.0), 0.6);
    let ode = ode_shares(&market(&[0.4, 0.6], 0.0, 0.25, 1.0, 0.5, 1.0), 0, 0.0, f64::INFINITY, 1.0);
    assert!((laggard_share(0.6, &r, 1.0, 0.0) - ode[1]).abs() < 1e-12);
    assert!((laggard_share(0.6, &r, 1.0, 0.0) - 0.22073).abs() < 1e-5);
    assert!(laggard_share(0.6, &r, 1e3, 0.0) < 1e-300);
}

#[test]
fn new_pool_examples() {
    let r = ChurnRates::new(1.0, 0.5).unwrap();
    assert_eq!(new_pool_share(0.3, &r, 1.0, 1.0), 0.3);
    let ode = ode_shares(&base(), 0, 0.0, f64::INFINITY, 2.0);
    assert!((new_pool_share(0.3, &r, 2.0, 0.0) - ode[2]).abs() < 1e-12);
    assert!(new_pool_share(0.3, &r, 1e4, 0.0) < 1e-300);
}

#[test]
fn leader_examples() {
    let m = base();
    assert_eq!(leader_share(&m, 0, 1.0, 1.0, NEVER), 0.4);
    assert!((leader_share(&m, 0, 1e3, 0.0, NEVER) - 1.3).abs() < 1e-12);
    let v = leader_share(&m, 0, 3.0, 1.0, NEVER);
    let expect = 0.4 + 0.6 * (1.0 - (-2.0f64).exp()) + 0.3 * (1.0 - (-1.0f64).exp());
    assert!((v - expect).abs() < 1e-14);
    assert!((v - 1.108435).abs() < 1e-6);
    let ode = ode_shares(&m, 0, 1.0, f64::INFINITY, 3.0);
    assert!((v - ode[0]).abs() < 1e-12);
}

#[test]
fn shares_follow_the_ode_through_all_phases() {
    let m = base();
    for (t0, t1) in [(0.5, 2.0), (1.5, 0.2), (1.0, 1.0)] {
        for t in [0.3, 1.2, 2.5, 6.0] {
            let snap = duopoly_shares(&m, t, at(t0), at(t1));
            let lead = if t0 <= t1 { 0 } else { 1 };
            let ode = ode_shares(&m, lead, t0.min(t1), t0.max(t1), t);
            assert!((snap.providers[lead] - ode[0]).abs() < 1e-9, "{t0} {t1} {t}");
            assert!((snap.providers[1 - lead] - ode[1]).abs() < 1e-9);
            assert!((snap.pool - ode[2]).abs() < 1e-9);
        }
    }
}

#[test]
fn rollover_counts_by_phase() {
    let m = base();
    let two_a = 2.0 * m.alpha;
    let before = rollover_phase_counts(&m, 0, 0.5, at(1.0), at(2.0));
    assert_eq!((before.switched_in, before.new_exclusive, before.new_split), (0.0, 0.0, 0.0));
    assert_eq!(before.own, two_a * m.n_of(0));
    let mid = rollover_phase_counts(&m, 0, 1.5, at(1.0), at(2.0));
    assert!((mid.switched_in - two_a * m.n_of(1) * (1.0 - (-0.5f64).exp())).abs() < 1e-12);
    assert!((mid.new_exclusive - two_a * m.n_new() * (1.0 - (-0.25f64).exp())).abs() < 1e-12);
    // Long after both upgrades, new users add up to the whole pool.
    let gap = 1.0f64;
    let lead = rollover_phase_counts(&m, 0, 200.0, at(1.0), at(2.0));
    let lag = rollover_phase_counts(&m, 1, 200.0, at(2.0), at(1.0));
    let left = m.alpha * m.n_new() * (-0.5 * gap).exp();
    assert!(
        (lead.new_exclusive + lead.new_split - (two_a * m.n_new() * (1.0 - (-0.5 * gap).exp()) + left)).abs() < 1e-9
    );
    assert!((lag.new_split - left).abs() < 1e-9);
    assert!((lead.new_exclusive + lead.new_split + lag.new_split - two_a * m.n_new()).abs() < 1e-9);
    // Upgrading together splits new users evenly.
    let a = rollover_phase_counts(&m, 0, 3.0, at(1.0), at(1.0));
    let b = rollover_phase_counts(&m, 1, 3.0, at(1.0), at(1.0));
    assert_eq!(a.new_split, b.new_split);
    assert!((a.new_split - m.alpha * m.n_new() * (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    assert_eq!(a.switched_in, 0.0);
}

#[test]
fn no_light_users_means_no_mixed_type_families() {
    let m = Market { alpha: 1.0, ..base() };
    for t in [0.0, 1.5, 5.0] {
        let c = shared_phase_counts(&m, 0, t, at(1.0), at(2.0));
        let hl = c.heavy_light;
        assert_eq!(hl.joint() + hl.pure_own_individual + hl.mixed_split, 0.0);
    }
}

#[test]
fn random_pairing_fractions() {
    let m = market(&[0.5, 0.5], 0.0, 0.5, 1.0, 0.5, 1.0);
    let c = shared_phase_counts(&m, 0, 0.0, NEVER, NEVER);
    let w = m.alpha * m.alpha * m.n;
    assert!((c.heavy_heavy.pure_own_individual - 0.25 * w).abs() < 1e-12);
    assert!((c.heavy_heavy.mixed_split - 0.5 * w).abs() < 1e-12);
    let other = shared_phase_counts(&m, 1, 0.0, NEVER, NEVER);
    assert!((other.heavy_heavy.pure_own_individual - 0.25 * w).abs() < 1e-12);
    let a = m.alpha;
    assert!((a * a + 2.0 * a * (1.0 - a) + (1.0 - a) * (1.0 - a) - 1.0).abs() < 1e-15);
}

/// Families of one type across both providers plus the unabsorbed pool.
fn family_total(m: &Market, t: f64, t0: ExtendedTime, t1: ExtendedTime, heavy_pairs: bool) -> f64 {
    let pick = |i: usize| {
        let c = shared_phase_counts(m, i, t, if i == 0 { t0 } else { t1 }, if i == 0 { t1 } else { t0 });
        if heavy_pairs {
            c.heavy_heavy
        } else {
            c.heavy_light
        }
    };
    let (a, b) = (pick(0), pick(1));
    let w = if heavy_pairs { m.alpha * m.alpha } else { 2.0 * m.alpha * (1.0 - m.alpha) };
    let first = t0.min(t1).finite().filter(|f| *f <= t);
    let pool = w * m.n_new() * first.map_or(1.0, |f| (-m.rates.arrival * (t - f)).exp());
    a.joint() + b.joint() + a.pure_own_individual + b.pure_own_individual + a.mixed_split + pool
}

fn arb_market() -> impl Strategy<Value = Market> {
    (0.0..1.0f64, 0.0..1.0f64, 0.05..0.95f64, 0.1..3.0f64, 0.05..0.95f64).prop_map(|(eta, eta0, alpha, lam, frac)| {
        Market {
            n: 100.0,
            shares: vec![eta, 1.0 - eta],
            eta0,
            alpha,
            rates: ChurnRates::new(lam, lam * frac).unwrap(),
            discount: 1.0,
        }
    })
}

fn arb_time() -> impl Strategy<Value = ExtendedTime> {
    prop_oneof![4 => (0.0..5.0f64).prop_map(ExtendedTime::At), 1 => Just(NEVER)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn shares_are_conserved(m in arb_market(), t0 in arb_time(), t1 in arb_time(), t in 0.0..10.0f64) {
        let s = duopoly_shares(&m, t, t0, t1);
        prop_assert!((s.providers[0] + s.providers[1] + s.pool - 1.0 - m.eta0).abs() < 1e-12);
        prop_assert!(s.providers.iter().all(|x| *x >= 0.0) && s.pool >= 0.0);
    }

    #[test]
    fn shares_are_continuous_at_upgrades(m in arb_market(), a in 0.0..4.0f64, gap in 0.0..3.0f64) {
        let (t0, t1) = (at(a), at(a + gap));
        for mark in [a, a + gap] {
            let x = duopoly_shares(&m, mark - 1e-9, t0, t1);
            let y = duopoly_shares(&m, mark + 1e-9, t0, t1);
            prop_assert!((x.providers[0] - y.providers[0]).abs() < 1e-7);
            prop_assert!((x.providers[1] - y.providers[1]).abs() < 1e-7);
            prop_assert!((x.pool - y.pool).abs() < 1e-7);
            let (p, q) = (rollover_phase_counts(&m, 1, mark - 1e-9, t1, t0), rollover_phase_counts(&m, 1, mark + 1e-9, t1, t0));
            prop_assert!((p.total() - q.total()).abs() < 1e-5);
        }
    }

    #[test]
    fn leader_grows_and_pools_shrink(m in arb_market(), a in 0.0..3.0f64, t in 0.0..8.0f64, dt in 0.0..2.0f64) {
        if t >= a {
            prop_assert!(leader_share(&m, 0, t + dt, a, NEVER) >= leader_share(&m, 0, t, a, NEVER) - 1e-15);
        }
        prop_assert!(laggard_share(m.shares[1], &m.rates, t + dt, a) <= laggard_share(m.shares[1], &m.rates, t, a));
        prop_assert!(new_pool_share(m.eta0, &m.rates, t + dt, a) <= new_pool_share(m.eta0, &m.rates, t, a));
    }

    #[test]
    fn family_types_are_conserved(m in arb_market(), t0 in arb_time(), t1 in arb_time(), t in 0.0..10.0f64) {
        for heavy_pairs in [true, false] {
            let w = if heavy_pairs { m.alpha * m.alpha } else { 2.0 * m.alpha * (1.0 - m.alpha) };
            let total = family_total(&m, t, t0, t1, heavy_pairs);
            prop_assert!((total - w * (m.n + m.n_new())).abs() < 1e-9 * (1.0 + total), "{total}");
        }
        let c = shared_phase_counts(&m, 0, t, t0, t1);
        for f in [c.heavy_heavy, c.heavy_light] {
            let parts = [f.pure_own_shared, f.pure_own_individual, f.switched_in, f.mixed_consolidated, f.mixed_split, f.new_families];
            prop_assert!(parts.iter().all(|x| *x >= -1e-12));
        }
    }

    #[test]
    fn heavy_users_are_conserved(m in arb_market(), t0 in arb_time(), t1 in arb_time(), t in 0.0..10.0f64) {
        let a = rollover_phase_counts(&m, 0, t, t0, t1);
        let b = rollover_phase_counts(&m, 1, t, t1, t0);
        let first = t0.min(t1).finite().filter(|f| *f <= t);
        let pool = 2.0 * m.alpha * m.n_new() * first.map_or(1.0, |f| (-m.rates.arrival * (t - f)).exp());
        let total = a.total() + b.total() + pool;
        prop_assert!((total - 2.0 * m.alpha * (m.n + m.n_new())).abs() < 1e-9 * total);
    }
}
