//! Agent-based Monte Carlo market, an independent statistical check of the
//! closed-form profits and subscriber trajectories.
//!
//! Every heavy user (rollover) or heavy-containing family (shared) is an
//! agent. Switching and new-user activation run on exponential clocks that
//! start at the first upgrade; usage is drawn afresh each billing month and
//! billed by the tariff in force. Revenue is discounted exactly over each
//! stretch of a month an agent spends in one billing state.
//!
//! Replication `k` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream
//! `k`, so results do not depend on thread scheduling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp};
use rayon::prelude::*;
use serde::Serialize;

use crate::cost::{Density, TariffPlan, UsageModel};
use crate::error::{invalid, Error, Result};
use crate::market::{ExtendedTime, Market, MarketConfig};

/// Tail of the discount factor the horizon must reach.
const HORIZON_DECAYS: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub seed: u64,
    /// Simulated billing months.
    pub months: usize,
    /// Spacing of the recorded subscriber trajectory, in months.
    pub dt: f64,
    pub replications: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { seed: 0, months: 60, dt: 0.25, replications: 200 }
    }
}

impl SimConfig {
    pub fn validate(&self, discount: f64) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return invalid(format!("trajectory step must be positive, got {}", self.dt));
        }
        if self.replications < 2 {
            return invalid(format!("need at least two replications for a standard error, got {}", self.replications));
        }
        let horizon = self.months as f64;
        if horizon * discount < HORIZON_DECAYS {
            return Err(Error::Horizon { horizon, tail: (-discount * horizon).exp(), limit: (-HORIZON_DECAYS).exp() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    fn of(xs: impl Iterator<Item = f64> + Clone) -> Estimate {
        let n = xs.clone().count() as f64;
        let mean = xs.clone().sum::<f64>() / n;
        let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        Estimate { mean, std_error: (var / n).sqrt() }
    }

    /// `|mean - target|` in standard errors.
    pub fn z(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.std_error.max(f64::MIN_POSITIVE)
    }
}

/// One provider's outcome in one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub provider: usize,
    pub profit: f64,
    /// Agents that moved in from the rival (switchers, and for families also
    /// consolidated mixed families).
    pub n_switched: usize,
    /// New users or families that subscribed here.
    pub n_new: usize,
}

/// Mean agents held per provider and still in the new-user pool at `t`. A
/// family split across providers counts one half to each.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub providers: Vec<Estimate>,
    pub pool: Estimate,
    /// Largest deviation of any replication's total from its own agent count.
    pub conservation_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub profits: Vec<Estimate>,
    pub records: Vec<ReplicationRecord>,
    pub trajectory: Vec<TrajectoryPoint>,
}

/// Inverse-CDF sampler for a usage model.
#[derive(Debug, Clone)]
struct Sampler {
    min: f64,
    max: f64,
    /// Knots and cumulative mass at each knot, for tabulated densities.
    table: Option<(Vec<(f64, f64)>, Vec<f64>)>,
}

impl Sampler {
    fn new(u: &UsageModel) -> Sampler {
        let table = match &u.density {
            Density::Uniform => None,
            Density::Tabulated(k) => {
                let mut cum = vec![0.0];
                for w in k.windows(2) {
                    let last = *cum.last().unwrap_or(&0.0);
                    cum.push(last + 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1));
                }
                Some((k.clone(), cum))
            }
        };
        Sampler { min: u.min, max: u.max, table }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        let v: f64 = rng.gen();
        match &self.table {
            None => self.min + (self.max - self.min) * v,
            Some((knots, cum)) => {
                let target = v * cum[cum.len() - 1];
                let k = cum.partition_point(|c| *c <= target).clamp(1, knots.len() - 1);
                let ((x0, f0), (x1, f1)) = (knots[k - 1], knots[k]);
                let rest = target - cum[k - 1];
                let slope = (f1 - f0) / (x1 - x0);
                let root = (f0 * f0 + 2.0 * slope * rest).max(0.0).sqrt();
                let s = if f0 + root > 0.0 { 2.0 * rest / (f0 + root) } else { 0.0 };
                (x0 + s).min(x1)
            }
        }
    }
}

/// Billing state of an agent over a stretch of time.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Billing {
    Pool,
    Traditional(usize),
    Rollover(usize),
    /// Both family members billed separately at one provider.
    Individual(usize),
    /// Family split across providers; the heavy member is at the given one.
    Split {
        heavy: usize,
    },
    Joint(usize),
}

impl Billing {
    /// Agent weight held by provider `p`.
    fn weight(self, p: usize) -> f64 {
        match self {
            Billing::Pool => 0.0,
            Billing::Split { .. } => 0.5,
            Billing::Traditional(q) | Billing::Rollover(q) | Billing::Individual(q) | Billing::Joint(q) => {
                f64::from(u8::from(q == p))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    HeavyUser,
    HeavyHeavy,
    HeavyLight,
}

/// An agent's billing path: state `k` holds from `path[k].0` until the next start.
#[derive(Debug, Clone)]
struct Agent {
    kind: Kind,
    path: Vec<(f64, Billing)>,
    /// Provider gaining a switcher and provider gaining a new subscriber.
    switched_to: Option<usize>,
    joined: Option<usize>,
}

impl Agent {
    fn fixed(kind: Kind, b: Billing) -> Agent {
        Agent { kind, path: vec![(0.0, b)], switched_to: None, joined: None }
    }

    fn state_at(&self, t: f64) -> Billing {
        let k = self.path.partition_point(|(s, _)| *s <= t);
        self.path[k.max(1) - 1].1
    }
}

/// Leader, laggard, first and second upgrade time of a duopoly profile.
struct Order {
    leader: usize,
    first: f64,
    second: f64,
}

fn order(times: [ExtendedTime; 2]) -> Option<Order> {
    let leader = if times[0] <= times[1] { 0 } else { 1 };
    let first = times[leader].finite()?;
    Some(Order { leader, first, second: times[1 - leader].as_f64() })
}

/// `floor(x)` plus a Bernoulli draw of the fractional part.
fn stochastic_round<R: Rng>(x: f64, rng: &mut R) -> u64 {
    let base = x.floor();
    base as u64 + u64::from(rng.gen::<f64>() < x - base)
}

fn binomial<R: Rng>(n: u64, p: f64, rng: &mut R) -> u64 {
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).map_or(0, |b| b.sample(rng))
}

fn rollover_agents<R: Rng>(market: &Market, times: [ExtendedTime; 2], rng: &mut R) -> Vec<Agent> {
    let a = market.alpha;
    let lam = Exp::new(market.rates.churn).expect("positive churn rate");
    let mu = Exp::new(market.rates.arrival).expect("positive arrival rate");
    let billed = |p: usize, from: f64| -> Vec<(f64, Billing)> {
        match times[p].finite() {
            Some(tp) if tp <= from => vec![(from, Billing::Rollover(p))],
            Some(tp) => vec![(from, Billing::Traditional(p)), (tp, Billing::Rollover(p))],
            None => vec![(from, Billing::Traditional(p))],
        }
    };
    let mut agents = Vec::new();
    let ord = order(times);
    for p in 0..2 {
        let heavy = binomial(stochastic_round(2.0 * market.n_of(p), rng), a, rng);
        for _ in 0..heavy {
            let mut agent = Agent { kind: Kind::HeavyUser, path: billed(p, 0.0), switched_to: None, joined: None };
            if let Some(o) = ord.as_ref().filter(|o| o.leader != p) {
                let tau = o.first + lam.sample(rng);
                if tau < o.second {
                    agent.path.retain(|(s, _)| *s < tau);
                    agent.path.extend(billed(o.leader, tau));
                    agent.switched_to = Some(o.leader);
                }
            }
            agents.push(agent);
        }
    }
    let new_heavy = binomial(stochastic_round(2.0 * market.n_new(), rng), a, rng);
    for _ in 0..new_heavy {
        let mut agent = Agent::fixed(Kind::HeavyUser, Billing::Pool);
        if let Some(o) = &ord {
            let tau = o.first + mu.sample(rng);
            let to = if tau < o.second { o.leader } else { usize::from(rng.gen::<bool>()) };
            agent.path.extend(billed(to, tau));
            agent.joined = Some(to);
        }
        agents.push(agent);
    }
    agents
}

fn shared_agents<R: Rng>(market: &Market, times: [ExtendedTime; 2], rng: &mut R) -> Vec<Agent> {
    let a = market.alpha;
    let lam = Exp::new(market.rates.churn).expect("positive churn rate");
    let mu = Exp::new(market.rates.arrival).expect("positive arrival rate");
    let (e0, e1) = (market.shares[0], market.shares[1]);
    let ord = order(times);
    let kind_of = |rng: &mut R| -> Option<Kind> {
        let v: f64 = rng.gen();
        if v < a * a {
            Some(Kind::HeavyHeavy)
        } else if v < a * a + 2.0 * a * (1.0 - a) {
            Some(Kind::HeavyLight)
        } else {
            None
        }
    };
    let mut agents = Vec::new();
    for _ in 0..stochastic_round(market.n, rng) {
        let Some(kind) = kind_of(rng) else { continue };
        let v: f64 = rng.gen();
        let pure = if v < e0 * e0 {
            Some(0)
        } else if v < e0 * e0 + e1 * e1 {
            Some(1)
        } else {
            None
        };
        let mut agent = match pure {
            Some(p) => Agent::fixed(kind, Billing::Individual(p)),
            None => {
                let heavy = if kind == Kind::HeavyHeavy { 0 } else { usize::from(rng.gen::<bool>()) };
                Agent::fixed(kind, Billing::Split { heavy })
            }
        };
        if let Some(o) = &ord {
            match pure {
                Some(p) if p == o.leader => agent.path.push((o.first, Billing::Joint(p))),
                Some(p) => {
                    let tau = o.first + lam.sample(rng);
                    if tau < o.second {
                        agent.path.push((tau, Billing::Joint(o.leader)));
                        agent.switched_to = Some(o.leader);
                    } else if o.second.is_finite() {
                        agent.path.push((o.second, Billing::Joint(p)));
                    }
                }
                None => {
                    let tau = o.first + lam.sample(rng);
                    let to = if tau < o.second {
                        Some(o.leader)
                    } else if o.second.is_finite() {
                        Some(usize::from(rng.gen::<bool>()))
                    } else {
                        None
                    };
                    if let Some(to) = to {
                        agent.path.push((tau, Billing::Joint(to)));
                        agent.switched_to = Some(to);
                    }
                }
            }
        }
        agents.push(agent);
    }
    for _ in 0..stochastic_round(market.n_new(), rng) {
        let Some(kind) = kind_of(rng) else { continue };
        let mut agent = Agent::fixed(kind, Billing::Pool);
        if let Some(o) = &ord {
            let tau = o.first + mu.sample(rng);
            let to = if tau < o.second { o.leader } else { usize::from(rng.gen::<bool>()) };
            agent.path.push((tau, Billing::Joint(to)));
            agent.joined = Some(to);
        }
        agents.push(agent);
    }
    agents
}

struct Usage {
    plan: TariffPlan,
    heavy: Sampler,
    light: Sampler,
}

/// Monthly bills an agent generates in each state, credited per provider.
struct MonthBills {
    traditional: f64,
    rollover: f64,
    /// Separate member bills (heavy, other) and the pooled family bill.
    members: (f64, f64),
    joint: f64,
}

impl MonthBills {
    fn credit(&self, b: Billing, amount: f64, profits: &mut [f64; 2]) {
        match b {
            Billing::Pool => {}
            Billing::Traditional(p) => profits[p] += self.traditional * amount,
            Billing::Rollover(p) => profits[p] += self.rollover * amount,
            Billing::Individual(p) => profits[p] += (self.members.0 + self.members.1) * amount,
            Billing::Split { heavy } => {
                profits[heavy] += self.members.0 * amount;
                profits[1 - heavy] += self.members.1 * amount;
            }
            Billing::Joint(p) => profits[p] += self.joint * amount,
        }
    }
}

/// `int_a^b e^{-S t} dt`.
fn discounted(s: f64, a: f64, b: f64) -> f64 {
    ((-s * a).exp() - (-s * b).exp()) / s
}

struct Replication {
    profits: [f64; 2],
    switched: [usize; 2],
    joined: [usize; 2],
    /// Per trajectory point: holdings of provider 0, provider 1, pool.
    holdings: Vec<[f64; 3]>,
    agents: usize,
}

fn run_replication(
    market: &Market,
    usage: &Usage,
    sim: &SimConfig,
    times: [ExtendedTime; 2],
    rep: usize,
    build: fn(&Market, [ExtendedTime; 2], &mut ChaCha8Rng) -> Vec<Agent>,
) -> Replication {
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    rng.set_stream(rep as u64);
    let agents = build(market, times, &mut rng);
    let s = market.discount;
    let quota = usage.plan.quota;
    let mut profits = [0.0; 2];
    for agent in &agents {
        let mut previous = usage.heavy.draw(&mut rng);
        for m in 0..sim.months {
            let (start, end) = (m as f64, (m + 1) as f64);
            let heavy = usage.heavy.draw(&mut rng);
            let other = match agent.kind {
                Kind::HeavyUser => 0.0,
                Kind::HeavyHeavy => usage.heavy.draw(&mut rng),
                Kind::HeavyLight => usage.light.draw(&mut rng),
            };
            let bills = MonthBills {
                traditional: usage.plan.bill(heavy, 0.0),
                rollover: usage.plan.bill(heavy, (quota - previous).max(0.0)),
                members: (usage.plan.bill(heavy, 0.0), usage.plan.bill(other, 0.0)),
                joint: usage.plan.family_bill(heavy + other),
            };
            previous = heavy;
            for (k, &(from, state)) in agent.path.iter().enumerate() {
                let until = agent.path.get(k + 1).map_or(f64::INFINITY, |x| x.0);
                let (a, b) = (from.max(start), until.min(end));
                if b > a {
                    bills.credit(state, discounted(s, a, b), &mut profits);
                }
            }
        }
    }
    let points = (sim.months as f64 / sim.dt).floor() as usize + 1;
    let holdings = (0..points)
        .map(|k| {
            let t = k as f64 * sim.dt;
            let mut h = [0.0; 3];
            for agent in &agents {
                let st = agent.state_at(t);
                if st == Billing::Pool {
                    h[2] += 1.0;
                } else {
                    h[0] += st.weight(0);
                    h[1] += st.weight(1);
                }
            }
            h
        })
        .collect();
    let mut switched = [0; 2];
    let mut joined = [0; 2];
    for agent in &agents {
        if let Some(p) = agent.switched_to {
            switched[p] += 1;
        }
        if let Some(p) = agent.joined {
            joined[p] += 1;
        }
    }
    Replication { profits, switched, joined, holdings, agents: agents.len() }
}

fn simulate(
    cfg: &MarketConfig,
    sim: &SimConfig,
    times: [ExtendedTime; 2],
    build: fn(&Market, [ExtendedTime; 2], &mut ChaCha8Rng) -> Vec<Agent>,
) -> Result<SimReport> {
    cfg.validate()?;
    cfg.market.require_duopoly()?;
    sim.validate(cfg.market.discount)?;
    let usage = Usage { plan: cfg.plan, heavy: Sampler::new(&cfg.heavy), light: Sampler::new(&cfg.light) };
    let reps: Vec<Replication> = (0..sim.replications)
        .into_par_iter()
        .map(|rep| run_replication(&cfg.market, &usage, sim, times, rep, build))
        .collect();
    let profits = (0..2).map(|p| Estimate::of(reps.iter().map(move |r| r.profits[p]))).collect();
    let records = reps
        .iter()
        .enumerate()
        .flat_map(|(rep, r)| {
            (0..2).map(move |p| ReplicationRecord {
                rep,
                provider: p,
                profit: r.profits[p],
                n_switched: r.switched[p],
                n_new: r.joined[p],
            })
        })
        .collect();
    let points = reps.first().map_or(0, |r| r.holdings.len());
    let trajectory = (0..points)
        .map(|k| TrajectoryPoint {
            t: k as f64 * sim.dt,
            providers: (0..2).map(|p| Estimate::of(reps.iter().map(move |r| r.holdings[k][p]))).collect(),
            pool: Estimate::of(reps.iter().map(|r| r.holdings[k][2])),
            conservation_error: reps
                .iter()
                .map(|r| (r.holdings[k].iter().sum::<f64>() - r.agents as f64).abs())
                .fold(0.0, f64::max),
        })
        .collect();
    Ok(SimReport { profits, records, trajectory })
}

/// Monte Carlo estimate of both providers' rollover-game profits. Agents are
/// heavy users; light users pay the same under either tariff and are left out.
pub fn simulate_rollover(
    cfg: &MarketConfig,
    sim: &SimConfig,
    t_i: ExtendedTime,
    t_j: ExtendedTime,
) -> Result<SimReport> {
    simulate(cfg, sim, [t_i, t_j], rollover_agents)
}

/// Monte Carlo estimate of both providers' shared-plan profits. Agents are
/// families with at least one heavy member.
pub fn simulate_shared(cfg: &MarketConfig, sim: &SimConfig, t_i: ExtendedTime, t_j: ExtendedTime) -> Result<SimReport> {
    simulate(cfg, sim, [t_i, t_j], shared_agents)
}
