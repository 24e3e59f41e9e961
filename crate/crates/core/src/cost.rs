//! Expected monthly bills under the traditional, rollover and shared tariffs.
//!
//! Every expectation is computed by adaptive quadrature of its defining
//! integral, with breakpoints at the kinks of the integrand, so arbitrary
//! usage supports `[d, D]` and tabulated densities are handled. The uniform
//! closed forms for `d = 0` live in [`closed_form`] and serve as a cross-check.
//!
//! Consecutive months are treated as independent draws from the same usage
//! model; the rollover bill only looks back one month.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::quad::{breakpoints, integrate_pieces, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TariffPlan {
    /// Lump-sum monthly fee.
    pub fee: f64,
    /// Monthly data quota.
    pub quota: f64,
    /// Price per unit of data beyond the quota.
    pub overage_price: f64,
}

impl TariffPlan {
    pub fn new(fee: f64, quota: f64, overage_price: f64) -> Result<Self> {
        let plan = TariffPlan { fee, quota, overage_price };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fee >= 0.0 && self.fee.is_finite()) {
            return invalid(format!("fee must be finite and >= 0, got {}", self.fee));
        }
        if !(self.quota > 0.0 && self.quota.is_finite()) {
            return invalid(format!("quota must be finite and > 0, got {}", self.quota));
        }
        if !(self.overage_price >= 0.0 && self.overage_price.is_finite()) {
            return invalid(format!("overage price must be finite and >= 0, got {}", self.overage_price));
        }
        Ok(())
    }

    /// Bill for one month of usage `u` with `extra` quota carried over.
    pub fn bill(&self, u: f64, extra: f64) -> f64 {
        self.fee + self.overage_price * (u - self.quota - extra).max(0.0)
    }

    /// Bill of a two-member family pooling quota and fee.
    pub fn family_bill(&self, total_usage: f64) -> f64 {
        2.0 * self.fee + self.overage_price * (total_usage - 2.0 * self.quota).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UserClass {
    Light,
    Heavy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Density {
    Uniform,
    /// Piecewise-linear density through `(u, f(u))` knots spanning the support.
    Tabulated(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageModel {
    pub class: UserClass,
    pub min: f64,
    pub max: f64,
    pub density: Density,
}

const NORMALIZATION_TOL: f64 = 1e-9;

impl UsageModel {
    /// Uniform usage on `[min, max]`; `min == max` is a deterministic usage.
    pub fn uniform(class: UserClass, min: f64, max: f64) -> Result<Self> {
        if !(min >= 0.0 && min <= max && max.is_finite()) {
            return invalid(format!("usage bounds must satisfy 0 <= d <= D, got d = {min}, D = {max}"));
        }
        Ok(UsageModel { class, min, max, density: Density::Uniform })
    }

    /// Piecewise-linear density; knots must be increasing, non-negative and
    /// integrate to one within 1e-9.
    pub fn tabulated(class: UserClass, knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return invalid("tabulated density needs at least two knots");
        }
        if knots[0].0 < 0.0 {
            return invalid(format!("usage must be non-negative, first knot at {}", knots[0].0));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return invalid(format!("knots must be strictly increasing: {} then {}", w[0].0, w[1].0));
            }
        }
        if let Some(&(u, f)) = knots.iter().find(|(u, f)| !(f.is_finite() && *f >= 0.0 && u.is_finite())) {
            return invalid(format!("density must be finite and non-negative, got f({u}) = {f}"));
        }
        let mass: f64 = knots.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return invalid(format!("tabulated density integrates to {mass}, not 1"));
        }
        let (min, max) = (knots[0].0, knots[knots.len() - 1].0);
        Ok(UsageModel { class, min, max, density: Density::Tabulated(knots) })
    }

    pub fn is_point_mass(&self) -> bool {
        self.max == self.min
    }

    pub fn pdf(&self, u: f64) -> f64 {
        if u < self.min || u > self.max {
            return 0.0;
        }
        match &self.density {
            Density::Uniform => {
                if self.is_point_mass() {
                    f64::INFINITY
                } else {
                    1.0 / (self.max - self.min)
                }
            }
            Density::Tabulated(knots) => {
                let k = knots.partition_point(|(x, _)| *x <= u);
                if k == 0 {
                    return knots[0].1;
                }
                if k == knots.len() {
                    return knots[k - 1].1;
                }
                let ((x0, f0), (x1, f1)) = (knots[k - 1], knots[k]);
                f0 + (f1 - f0) * (u - x0) / (x1 - x0)
            }
        }
    }

    /// Support endpoints and interior knots.
    pub fn knots(&self) -> Vec<f64> {
        match &self.density {
            Density::Uniform => vec![self.min, self.max],
            Density::Tabulated(k) => k.iter().map(|(u, _)| *u).collect(),
        }
    }

    /// `E[g(u)]`; `kinks` lists points where `g` is not smooth.
    pub fn expect<F: Fn(f64) -> f64>(&self, g: F, kinks: &[f64]) -> Result<f64> {
        if self.is_point_mass() {
            return Ok(g(self.min));
        }
        let pts = breakpoints(self.min, self.max, self.knots().into_iter().chain(kinks.iter().copied()));
        let est = integrate_pieces(|u| g(u) * self.pdf(u), &pts, Tolerance::default())?;
        Ok(est.value)
    }

    /// `E[(u - q)^+]`.
    pub fn overage_mean(&self, q: f64) -> Result<f64> {
        if q >= self.max {
            return Ok(0.0);
        }
        self.expect(|u| (u - q).max(0.0), &[q])
    }

    /// `P(u >= q)`.
    pub fn prob_at_least(&self, q: f64) -> Result<f64> {
        if q <= self.min {
            return Ok(1.0);
        }
        if q > self.max {
            return Ok(0.0);
        }
        self.expect(|u| if u >= q { 1.0 } else { 0.0 }, &[q])
    }
}

/// Runs `f` in a closure context that cannot return errors, surfacing the
/// first inner error afterwards.
fn with_inner<T>(f: impl FnOnce(&dyn Fn(Result<f64>) -> f64) -> Result<T>) -> Result<T> {
    let slot: RefCell<Option<Error>> = RefCell::new(None);
    let take = |r: Result<f64>| match r {
        Ok(v) => v,
        Err(e) => {
            slot.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    let out = f(&take);
    match slot.into_inner() {
        Some(e) => Err(e),
        None => out,
    }
}

/// `P + p E[(u - B)^+]`.
pub fn expected_cost_traditional(plan: &TariffPlan, usage: &UsageModel) -> Result<f64> {
    plan.validate()?;
    if usage.max <= plan.quota {
        return Ok(plan.fee);
    }
    Ok(plan.fee + plan.overage_price * usage.overage_mean(plan.quota)?)
}

/// `P + p E[(u_t - B - (B - u_{t-1})^+)^+]` with independent consecutive months.
///
/// Conditioning on last month's usage `v`: for `v >= B` the quota is `B`,
/// otherwise it is `2B - v`.
pub fn expected_cost_rollover(plan: &TariffPlan, usage: &UsageModel) -> Result<f64> {
    plan.validate()?;
    if usage.class == UserClass::Light {
        return invalid("rollover cost is only defined for heavy users");
    }
    if usage.max <= plan.quota {
        return Ok(plan.fee);
    }
    let b = plan.quota;
    let full = usage.prob_at_least(b)? * usage.overage_mean(b)?;
    let kinks: Vec<f64> = usage.knots().iter().map(|k| 2.0 * b - k).chain([b]).collect();
    let carried =
        with_inner(|take| usage.expect(|v| if v < b { take(usage.overage_mean(2.0 * b - v)) } else { 0.0 }, &kinks))?;
    Ok(plan.fee + plan.overage_price * (full + carried))
}

/// Density of the summed usage of two independent members.
#[derive(Debug, Clone)]
pub struct FamilyDensity {
    pub a: UsageModel,
    pub b: UsageModel,
}

impl FamilyDensity {
    pub fn support(&self) -> (f64, f64) {
        (self.a.min + self.b.min, self.a.max + self.b.max)
    }

    pub fn pdf(&self, u: f64) -> Result<f64> {
        let (a, b) = (&self.a, &self.b);
        match (a.is_point_mass(), b.is_point_mass()) {
            (true, true) => return invalid("sum of two deterministic usages has no density"),
            (true, false) => return Ok(b.pdf(u - a.min)),
            (false, true) => return Ok(a.pdf(u - b.min)),
            _ => {}
        }
        let lo = a.min.max(u - b.max);
        let hi = a.max.min(u - b.min);
        if hi <= lo {
            return Ok(0.0);
        }
        let pts = breakpoints(lo, hi, a.knots().into_iter().chain(b.knots().into_iter().map(|k| u - k)));
        Ok(integrate_pieces(|x| a.pdf(x) * b.pdf(u - x), &pts, Tolerance::default())?.value)
    }

    /// Knots of the convolution: pairwise sums of member knots.
    pub fn knots(&self) -> Vec<f64> {
        let mut out: Vec<f64> =
            self.a.knots().iter().flat_map(|x| self.b.knots().into_iter().map(move |y| x + y)).collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    pub fn total_mass(&self) -> Result<f64> {
        let (lo, hi) = self.support();
        if hi == lo {
            return Ok(1.0);
        }
        let pts = breakpoints(lo, hi, self.knots());
        with_inner(|take| Ok(integrate_pieces(|u| take(self.pdf(u)), &pts, Tolerance::default())?.value))
    }
}

pub fn family_usage_density(a: &UsageModel, b: &UsageModel) -> FamilyDensity {
    FamilyDensity { a: a.clone(), b: b.clone() }
}

/// `2P + p E[(u_a + u_b - 2B)^+]`.
pub fn expected_cost_family(plan: &TariffPlan, a: &UsageModel, b: &UsageModel) -> Result<f64> {
    plan.validate()?;
    let q = 2.0 * plan.quota;
    if a.max + b.max <= q {
        return Ok(2.0 * plan.fee);
    }
    let kinks: Vec<f64> = b.knots().iter().map(|k| q - k).collect();
    let over = with_inner(|take| a.expect(|x| take(b.overage_mean(q - x)), &kinks))?;
    Ok(2.0 * plan.fee + plan.overage_price * over)
}

/// Per-family billing before (`individual`) and after (`shared`) pooling,
/// weighted by the random-pairing type frequencies.
pub fn aggregates(plan: &TariffPlan, light: &UsageModel, heavy: &UsageModel, alpha: f64) -> Result<(f64, f64)> {
    let s = CostSummary::compute(plan, light, heavy, alpha)?;
    Ok((s.agg_individual, s.agg_shared))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostSummary {
    pub ec_light: f64,
    pub ec_heavy: f64,
    pub ec_heavy_rollover: f64,
    pub ec_family_hh: f64,
    pub ec_family_hl: f64,
    /// Individual billing of a random heavy-containing family, `2a EC_h + 2a(1-a) EC_l`.
    pub agg_individual: f64,
    /// Pooled billing of the same families, `a^2 EC_hh + 2a(1-a) EC_hl`.
    pub agg_shared: f64,
}

impl CostSummary {
    pub fn compute(plan: &TariffPlan, light: &UsageModel, heavy: &UsageModel, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return invalid(format!("heavy-user fraction must lie in (0, 1), got {alpha}"));
        }
        if light.class != UserClass::Light || heavy.class != UserClass::Heavy {
            return invalid("light and heavy usage models are swapped");
        }
        if light.max > plan.quota {
            return invalid(format!("light usage maximum {} exceeds the quota {}", light.max, plan.quota));
        }
        let ec_light = expected_cost_traditional(plan, light)?;
        let ec_heavy = expected_cost_traditional(plan, heavy)?;
        let ec_heavy_rollover = expected_cost_rollover(plan, heavy)?;
        let ec_family_hh = expected_cost_family(plan, heavy, heavy)?;
        let ec_family_hl = expected_cost_family(plan, heavy, light)?;
        let agg_individual = 2.0 * alpha * ec_heavy + 2.0 * alpha * (1.0 - alpha) * ec_light;
        let agg_shared = alpha * alpha * ec_family_hh + 2.0 * alpha * (1.0 - alpha) * ec_family_hl;
        Ok(CostSummary {
            ec_light,
            ec_heavy,
            ec_heavy_rollover,
            ec_family_hh,
            ec_family_hl,
            agg_individual,
            agg_shared,
        })
    }
}

/// Closed forms for uniform usage on `[0, D]`.
pub mod closed_form {
    use super::TariffPlan;

    pub fn traditional(plan: &TariffPlan, d_max: f64) -> f64 {
        let over = (d_max - plan.quota).max(0.0);
        plan.fee + plan.overage_price * over * over / (2.0 * d_max)
    }

    pub fn rollover(plan: &TariffPlan, d_max: f64) -> f64 {
        let b = plan.quota;
        if d_max <= b {
            return plan.fee;
        }
        let d2 = d_max * d_max;
        let base = 2.0 * (d_max - b).powi(3) / (3.0 * d2);
        if d_max <= 2.0 * b {
            plan.fee + plan.overage_price * base
        } else {
            plan.fee + plan.overage_price * (base - (d_max - 2.0 * b).powi(3) / (6.0 * d2))
        }
    }

    pub fn family_heavy_heavy(plan: &TariffPlan, d_max: f64) -> f64 {
        let b = plan.quota;
        let (p, d2) = (plan.overage_price, d_max * d_max);
        if d_max <= 2.0 * b {
            2.0 * plan.fee + 4.0 * p * (d_max - b).max(0.0).powi(3) / (3.0 * d2)
        } else {
            2.0 * plan.fee + p * (d_max.powi(3) - 2.0 * b * d2 + 4.0 * b.powi(3) / 3.0) / d2
        }
    }

    /// Heavy maximum `d_heavy`, light maximum `d_light <= B`.
    pub fn family_heavy_light(plan: &TariffPlan, d_heavy: f64, d_light: f64) -> f64 {
        let b = plan.quota;
        let p = plan.overage_price;
        if d_heavy <= 2.0 * b {
            2.0 * plan.fee + p * (d_heavy + d_light - 2.0 * b).max(0.0).powi(3) / (6.0 * d_heavy * d_light)
        } else {
            let inner = d_heavy * d_heavy / 2.0 - 2.0 * b * d_heavy
                + 2.0 * b * b
                + d_light * d_light / 6.0
                + d_heavy * d_light / 2.0
                - b * d_light;
            2.0 * plan.fee + p * inner / d_heavy
        }
    }
}
