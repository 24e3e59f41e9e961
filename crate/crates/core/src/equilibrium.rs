//! Result types and the certify-then-refine step shared by both duopoly solvers.
//!
//! A classification yields a candidate profile. It is returned only after it
//! passes the epsilon-Nash check. Otherwise the other structural profiles
//! (asymmetric either way, simultaneous, no upgrade) are tried in a fixed
//! order, then exact best-response iteration; the result records the
//! rejected profile and its deviation gain.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{best_response, follow_delay, TimingGame};
use crate::market::ExtendedTime;
use crate::nash::{certify_duopoly, Certificate, NashCheck};
use crate::numeric::roots::first_root;
use crate::profit::PlanType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Band {
    /// The overage loss is small enough that upgrading now always pays.
    MildReduction,
    /// The new-user pool alone justifies upgrading now.
    LargePool,
    Medium,
    Small,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    BothImmediate,
    Asymmetric,
    NoUpgrade,
    Other,
}

impl Shape {
    pub fn of(times: &[ExtendedTime]) -> Shape {
        let zero = |t: &ExtendedTime| *t == ExtendedTime::ZERO;
        if times.iter().all(zero) {
            Shape::BothImmediate
        } else if times.iter().all(|t| t.is_never()) {
            Shape::NoUpgrade
        } else if times.len() == 2 && times.iter().filter(|t| zero(t)).count() == 1 {
            Shape::Asymmetric
        } else {
            Shape::Other
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Regime {
    pub band: Band,
    pub shape: Shape,
}

impl Regime {
    pub fn label(&self) -> String {
        let band = match self.band {
            Band::MildReduction => "mild-reduction",
            Band::LargePool => "large-eta0",
            Band::Medium => "medium",
            Band::Small => "small",
        };
        let shape = match (self.band, self.shape) {
            (Band::MildReduction | Band::LargePool, Shape::BothImmediate) => "immediate",
            (_, Shape::BothImmediate) => "both-immediate",
            (_, Shape::Asymmetric) => "asymmetric",
            (_, Shape::NoUpgrade) => "no-upgrade",
            (_, Shape::Other) => "other",
        };
        format!("{band}-{shape}")
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefineMethod {
    Candidate,
    BestResponseIteration,
}

/// Record of a classification profile that failed certification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Refinement {
    pub classified_times: [ExtendedTime; 2],
    pub classified_gain: f64,
    pub method: RefineMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumResult<T> {
    pub plan: PlanType,
    pub times: Vec<ExtendedTime>,
    pub profits: Vec<f64>,
    pub regime: Regime,
    pub thresholds: T,
    pub certificate: Certificate,
    pub refinement: Option<Refinement>,
    pub notes: Vec<String>,
}

/// Structural profiles in the order tried after a failed classification:
/// smaller provider first, simultaneous, larger provider first, no upgrade.
fn fallback_profiles<G: TimingGame>(game: &G) -> Vec<[ExtendedTime; 2]> {
    let shares = &game.market().shares;
    let small = if shares[0] <= shares[1] { 0 } else { 1 };
    let asym = |lead: usize| {
        let mut t = [ExtendedTime::ZERO; 2];
        t[1 - lead] = follow_delay(game, 1 - lead);
        t
    };
    vec![asym(small), [ExtendedTime::ZERO; 2], asym(1 - small), [ExtendedTime::Never; 2]]
}

const MAX_ITERATIONS: usize = 200;

fn same_time(a: ExtendedTime, b: ExtendedTime) -> bool {
    match (a, b) {
        (ExtendedTime::At(x), ExtendedTime::At(y)) => (x - y).abs() <= 1e-9 * (1.0 + x.abs()),
        _ => a == b,
    }
}

fn iterate_best_responses<G: TimingGame>(game: &G) -> [ExtendedTime; 2] {
    let mut p = [ExtendedTime::Never; 2];
    for _ in 0..MAX_ITERATIONS {
        let t0 = best_response(game, 0, p[1]);
        let t1 = best_response(game, 1, t0);
        let done = same_time(t0, p[0]) && same_time(t1, p[1]);
        p = [t0, t1];
        if done {
            break;
        }
    }
    p
}

pub(crate) struct Settled {
    pub times: [ExtendedTime; 2],
    pub certificate: Certificate,
    pub refinement: Option<Refinement>,
}

pub(crate) fn settle<G: TimingGame>(game: &G, classified: [ExtendedTime; 2], check: &NashCheck) -> Result<Settled> {
    let cert = certify_duopoly(game, classified, check);
    if cert.passed {
        return Ok(Settled { times: classified, certificate: cert, refinement: None });
    }
    let mut smallest_gain = cert.max_gain;
    let record = |method| Refinement { classified_times: classified, classified_gain: cert.max_gain, method };
    for cand in fallback_profiles(game) {
        if cand == classified {
            continue;
        }
        let c = certify_duopoly(game, cand, check);
        if c.passed {
            return Ok(Settled { times: cand, certificate: c, refinement: Some(record(RefineMethod::Candidate)) });
        }
        smallest_gain = smallest_gain.min(c.max_gain);
    }
    let fixed = iterate_best_responses(game);
    let c = certify_duopoly(game, fixed, check);
    if c.passed {
        return Ok(Settled {
            times: fixed,
            certificate: c,
            refinement: Some(record(RefineMethod::BestResponseIteration)),
        });
    }
    Err(Error::NoEquilibrium { gain: smallest_gain.min(c.max_gain) })
}

pub(crate) fn finish<G: TimingGame, T>(
    game: &G,
    band: Band,
    settled: Settled,
    thresholds: T,
    notes: Vec<String>,
) -> EquilibriumResult<T> {
    let t = settled.times;
    EquilibriumResult {
        plan: game.plan(),
        times: t.to_vec(),
        profits: vec![game.profit(0, t[0], t[1]), game.profit(1, t[1], t[0])],
        regime: Regime { band, shape: Shape::of(&t) },
        thresholds,
        certificate: settled.certificate,
        refinement: settled.refinement,
        notes,
    }
}

/// Share layout of a classified duopoly profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Layout {
    Immediate,
    /// Providers with share at most the bound lead; similar shares never upgrade.
    Standoff {
        lead_bound: f64,
    },
    /// Providers below the bound lead; shares in between upgrade together.
    Split {
        bound: f64,
    },
}

pub(crate) fn layout_times<G: TimingGame>(game: &G, layout: Layout) -> [ExtendedTime; 2] {
    let e = game.market().shares[0];
    let lead = |i: usize| {
        let mut t = [ExtendedTime::ZERO; 2];
        t[1 - i] = follow_delay(game, 1 - i);
        t
    };
    match layout {
        Layout::Immediate => [ExtendedTime::ZERO; 2],
        Layout::Standoff { lead_bound } => {
            if e <= lead_bound {
                lead(0)
            } else if e < 1.0 - lead_bound {
                [ExtendedTime::Never; 2]
            } else {
                lead(1)
            }
        }
        Layout::Split { bound } => {
            if e < bound {
                lead(0)
            } else if e > 1.0 - bound {
                lead(1)
            } else {
                [ExtendedTime::ZERO; 2]
            }
        }
    }
}

/// Slope of provider 0's profit at upgrade time 0 when provider 1 follows
/// after `ln(kappa) / (churn - arrival)`, with duopoly shares `(eta, 1 - eta)`.
/// A negative delay is used as is, so the slope continues smoothly past the
/// share at which the follower would respond at once. `NaN` where the
/// follower's ratio is not positive.
pub(crate) fn lead_slope<G: TimingGame>(game: &G, eta: f64) -> f64 {
    let g = game.with_market(game.market().with_duopoly_share(eta));
    let k = g.kappa(1);
    let late = if k.is_infinite() {
        ExtendedTime::Never
    } else if k > 0.0 {
        ExtendedTime::At(k.ln() / g.market().rates.gap())
    } else {
        return f64::NAN;
    };
    g.early_slope(0, 0.0, late)
}

/// First root of `f` on `[0, upper]`. Without a sign change the result is
/// `upper` when `f(0) < 0` and `0` otherwise.
pub(crate) fn first_sign_change<F: Fn(f64) -> f64>(f: F, upper: f64, what: &str) -> Result<f64> {
    if upper <= 0.0 {
        return Ok(0.0);
    }
    match first_root(&f, 0.0, upper, what)? {
        Some(x) => Ok(x),
        None => Ok(if f(0.0) < 0.0 { upper } else { 0.0 }),
    }
}

/// Share at which a provider is indifferent between leading and following,
/// searched strictly between the immediate-follow shares. `1` when absent.
pub(crate) fn indifference_root<F: Fn(f64) -> f64>(diff: F, follow_share: f64, what: &str) -> Result<f64> {
    if follow_share >= 0.5 {
        return Ok(1.0);
    }
    let pad = 1e-12;
    Ok(first_root(diff, follow_share + pad, 1.0 - follow_share - pad, what)?.unwrap_or(1.0))
}

/// Nested bound separating asymmetric from simultaneous upgrades, and
/// whether it had to be clamped into `[0, 0.5]`.
pub(crate) fn split_bound(follow_share: f64, lead_bound: f64, indifference: f64) -> (f64, bool) {
    let inner = (1.0 - lead_bound).max(follow_share).min(lead_bound.min(1.0 - follow_share));
    let raw = (1.0 - indifference).max(inner);
    let clamped = raw.clamp(0.0, 0.5);
    (clamped, clamped != raw)
}
