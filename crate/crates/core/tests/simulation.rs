use rollshare::config::default_scenario;
use rollshare::market::{duopoly_shares, ExtendedTime, MarketConfig};
use rollshare::profit::{profit_rollover, profit_shared, RolloverGame, SharedGame};
use rollshare::sim::{simulate_rollover, simulate_shared, SimConfig};

fn scenario(n: f64, shares: [f64; 2]) -> MarketConfig {
    let mut cfg = default_scenario().to_config().unwrap();
    cfg.market.n = n;
    cfg.market.shares = shares.to_vec();
    cfg
}

fn sim() -> SimConfig {
    SimConfig { seed: 11, months: 48, dt: 0.5, replications: 200 }
}

const PROFILES: [(ExtendedTime, ExtendedTime); 4] = [
    (ExtendedTime::At(0.5), ExtendedTime::At(2.0)),
    (ExtendedTime::At(1.5), ExtendedTime::At(0.0)),
    (ExtendedTime::At(1.0), ExtendedTime::Never),
    (ExtendedTime::Never, ExtendedTime::Never),
];

#[test]
fn rollover_estimates_match_closed_form() {
    let cfg = scenario(4000.0, [0.4, 0.6]);
    let game = RolloverGame::from_config(&cfg).unwrap();
    for (a, b) in PROFILES {
        let rep = simulate_rollover(&cfg, &sim(), a, b).unwrap();
        for (i, (ti, tj)) in [(a, b), (b, a)].into_iter().enumerate() {
            let exact = profit_rollover(&game, i, ti, tj).total;
            let z = rep.profits[i].z(exact);
            println!("rollover {a} {b} provider {i}: {:?} vs {exact} z {z:.2}", rep.profits[i]);
            assert!(z < 3.5, "z = {z}");
        }
    }
}

#[test]
fn shared_estimates_match_closed_form() {
    let cfg = scenario(4000.0, [0.4, 0.6]);
    let game = SharedGame::from_config(&cfg).unwrap();
    for (a, b) in PROFILES {
        let rep = simulate_shared(&cfg, &sim(), a, b).unwrap();
        for (i, (ti, tj)) in [(a, b), (b, a)].into_iter().enumerate() {
            let exact = profit_shared(&game, i, ti, tj).total;
            let z = rep.profits[i].z(exact);
            println!("shared {a} {b} provider {i}: {:?} vs {exact} z {z:.2}", rep.profits[i]);
            assert!(z < 3.5, "z = {z}");
        }
    }
}

#[test]
fn rollover_trajectory_tracks_shares() {
    let cfg = scenario(2000.0, [0.4, 0.6]);
    let (a, b) = (ExtendedTime::At(1.0), ExtendedTime::At(3.0));
    let rep = simulate_rollover(&cfg, &sim(), a, b).unwrap();
    let scale = 2.0 * cfg.market.alpha * cfg.market.n;
    let mut worst: f64 = 0.0;
    for p in rep.trajectory.iter().take(20) {
        let snap = duopoly_shares(&cfg.market, p.t, a, b);
        for i in 0..2 {
            let z = p.providers[i].z(scale * snap.providers[i]);
            worst = worst.max(z);
        }
        assert_eq!(p.conservation_error, 0.0);
    }
    assert!(worst < 4.0, "worst z {worst}");
}

#[test]
fn identical_seed_is_bit_identical() {
    let cfg = scenario(300.0, [0.3, 0.7]);
    let s = SimConfig { replications: 20, ..sim() };
    let a = simulate_shared(&cfg, &s, ExtendedTime::At(0.7), ExtendedTime::At(1.9)).unwrap();
    let b = simulate_shared(&cfg, &s, ExtendedTime::At(0.7), ExtendedTime::At(1.9)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn all_heavy_market_has_no_heavy_light_families() {
    let mut cfg = scenario(300.0, [0.5, 0.5]);
    cfg.market.alpha = 1.0;
    let s = SimConfig { replications: 10, ..sim() };
    let rep = simulate_shared(&cfg, &s, ExtendedTime::Never, ExtendedTime::Never).unwrap();
    // Every family is heavy-heavy: individual billing is two heavy bills.
    let costs = rollshare::cost::expected_cost_traditional(&cfg.plan, &cfg.heavy).unwrap();
    let exact = 0.5 * 300.0 * 2.0 * costs / cfg.market.discount;
    assert!(rep.profits[0].z(exact) < 4.0);
}
