//! JSON scenario files.
//!
//! ```json
//! {
//!   "plan": {"P": 20, "B": 3, "p": 10},
//!   "users": {"alpha": 0.25, "light": {"d": 0, "D": 2}, "heavy": {"d": 0, "D": 6}},
//!   "market": {"N": 100, "shares": [0.4, 0.6], "eta0": 0.3},
//!   "rates": {"lambda": 1, "lambda0": 0.5},
//!   "discount": {"S": 1}
//! }
//! ```
//!
//! A usage entry may add `"density": [[u, f(u)], ...]`, a piecewise-linear
//! density whose first and last knots are `d` and `D`. Unknown keys are
//! rejected at every level.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cost::{TariffPlan, UsageModel, UserClass};
use crate::error::{Error, Result};
use crate::market::{ChurnRates, Market, MarketConfig};

/// Scenario shipped with the binary.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub plan: PlanSection,
    pub users: UsersSection,
    pub market: MarketSection,
    pub rates: RatesSection,
    pub discount: DiscountSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    #[serde(rename = "P")]
    pub fee: f64,
    #[serde(rename = "B")]
    pub quota: f64,
    #[serde(rename = "p")]
    pub overage_price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsersSection {
    pub alpha: f64,
    pub light: UsageSection,
    pub heavy: UsageSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsageSection {
    pub d: f64,
    #[serde(rename = "D")]
    pub max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    #[serde(rename = "N")]
    pub n: f64,
    pub shares: Vec<f64>,
    pub eta0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    pub lambda: f64,
    pub lambda0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscountSection {
    #[serde(rename = "S")]
    pub s: f64,
}

fn config_error(path: &str, message: impl Into<String>) -> Error {
    Error::Config { path: path.into(), message: message.into() }
}

fn usage(class: UserClass, u: &UsageSection, path: &str) -> Result<UsageModel> {
    let built = match &u.density {
        None => UsageModel::uniform(class, u.d, u.max),
        Some(knots) => {
            let (first, last) = match (knots.first(), knots.last()) {
                (Some(a), Some(b)) => (a.0, b.0),
                _ => return Err(config_error(&format!("{path}.density"), "needs at least two knots")),
            };
            if first != u.d || last != u.max {
                return Err(config_error(
                    &format!("{path}.density"),
                    format!("knots span [{first}, {last}] but the support is [{}, {}]", u.d, u.max),
                ));
            }
            UsageModel::tabulated(class, knots.clone())
        }
    };
    built.map_err(|e| config_error(path, e.to_string()))
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<ScenarioFile> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_error(&path, e.into_inner().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<ScenarioFile> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(".", format!("cannot read {}: {e}", path.display())))?;
        ScenarioFile::parse(&text)
    }

    /// Validated scenario; errors name the offending field.
    pub fn to_config(&self) -> Result<MarketConfig> {
        let plan = TariffPlan::new(self.plan.fee, self.plan.quota, self.plan.overage_price)
            .map_err(|e| config_error("plan", e.to_string()))?;
        let light = usage(UserClass::Light, &self.users.light, "users.light")?;
        let heavy = usage(UserClass::Heavy, &self.users.heavy, "users.heavy")?;
        let rates =
            ChurnRates::new(self.rates.lambda, self.rates.lambda0).map_err(|e| config_error("rates", e.to_string()))?;
        let market = Market {
            n: self.market.n,
            shares: self.market.shares.clone(),
            eta0: self.market.eta0,
            alpha: self.users.alpha,
            rates,
            discount: self.discount.s,
        };
        market.validate().map_err(|e| config_error("market", e.to_string()))?;
        let cfg = MarketConfig { market, plan, light, heavy };
        cfg.validate().map_err(|e| config_error("users", e.to_string()))?;
        Ok(cfg)
    }
}

pub fn default_scenario() -> ScenarioFile {
    ScenarioFile::parse(DEFAULT_CONFIG).expect("shipped default config parses")
}
