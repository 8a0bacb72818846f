//! Investment policies as pure feedback maps, and the optimal and
//! reference policies for both fee schemes.

use std::fmt;
use std::sync::Arc;

use crate::closed_form::effective_risk_aversion;
use crate::error::{Error, Origin, Result};
use crate::market::{FeeScheme, MarketParams};

/// Absolute cap on proportions returned by any policy.
pub const DEFAULT_POLICY_BOUND: f64 = 50.0;

/// State visible to a wealth policy at the left endpoint of a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WealthState {
    pub t: f64,
    pub wealth: f64,
    pub fees: f64,
    pub fund: f64,
    /// High-water mark; `None` under the mutual scheme.
    pub mark: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundState {
    pub t: f64,
    pub fund: f64,
    pub mark: Option<f64>,
}

type WealthFn = dyn Fn(&WealthState) -> Result<f64> + Send + Sync;
type FundFn = dyn Fn(&FundState) -> Result<f64> + Send + Sync;

#[derive(Clone)]
enum WealthRule {
    Constant(f64),
    SetAside { merton: f64 },
    Custom(Arc<WealthFn>),
}

/// Proportion of private wealth held in the private risky asset.
#[derive(Clone)]
pub struct WealthPolicy {
    rule: WealthRule,
    descriptor: String,
    bound: f64,
}

impl fmt::Debug for WealthPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WealthPolicy")
            .field("descriptor", &self.descriptor)
            .field("bound", &self.bound)
            .finish()
    }
}

impl WealthPolicy {
    pub fn constant(pi: f64) -> Self {
        WealthPolicy {
            rule: WealthRule::Constant(pi),
            descriptor: format!("constant({pi})"),
            bound: DEFAULT_POLICY_BOUND,
        }
    }

    /// Earned fees stay in the safe asset; the excess `F - C` is held in
    /// the risky asset at the proportion `merton`.
    pub fn set_aside(merton: f64) -> Self {
        WealthPolicy {
            rule: WealthRule::SetAside { merton },
            descriptor: format!("set_aside(merton={merton})"),
            bound: DEFAULT_POLICY_BOUND,
        }
    }

    pub fn custom<F>(descriptor: impl Into<String>, f: F) -> Self
    where
        F: Fn(&WealthState) -> Result<f64> + Send + Sync + 'static,
    {
        WealthPolicy {
            rule: WealthRule::Custom(Arc::new(f)),
            descriptor: descriptor.into(),
            bound: DEFAULT_POLICY_BOUND,
        }
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = bound.abs();
        self
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self.rule {
            WealthRule::Constant(c) => Some(c),
            _ => None,
        }
    }

    /// Merton factor of a set-aside policy.
    pub fn set_aside_merton(&self) -> Option<f64> {
        match self.rule {
            WealthRule::SetAside { merton } => Some(merton),
            _ => None,
        }
    }

    /// Proportion at `state`, saturated at `±bound`.
    pub fn evaluate(&self, state: &WealthState) -> Result<f64> {
        let raw = match &self.rule {
            WealthRule::Constant(c) => *c,
            WealthRule::SetAside { merton } => {
                if !(state.wealth > 0.0) {
                    return Err(Error::Evaluation(format!(
                        "set-aside policy needs positive wealth, got {} at t = {}",
                        state.wealth, state.t
                    )));
                }
                (1.0 - state.fees / state.wealth) * merton
            }
            WealthRule::Custom(f) => f(state)?,
        };
        if !raw.is_finite() {
            return Err(Error::Evaluation(format!(
                "policy `{}` returned {raw} at t = {}",
                self.descriptor, state.t
            )));
        }
        Ok(raw.clamp(-self.bound, self.bound))
    }
}

#[derive(Clone)]
enum FundRule {
    Constant(f64),
    Custom(Arc<FundFn>),
}

/// Proportion of the fund held in the fund's risky asset.
#[derive(Clone)]
pub struct FundPolicy {
    rule: FundRule,
    descriptor: String,
    bound: f64,
}

impl fmt::Debug for FundPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FundPolicy")
            .field("descriptor", &self.descriptor)
            .field("bound", &self.bound)
            .finish()
    }
}

impl FundPolicy {
    pub fn constant(pi: f64) -> Self {
        FundPolicy {
            rule: FundRule::Constant(pi),
            descriptor: format!("constant({pi})"),
            bound: DEFAULT_POLICY_BOUND,
        }
    }

    pub fn custom<F>(descriptor: impl Into<String>, f: F) -> Self
    where
        F: Fn(&FundState) -> Result<f64> + Send + Sync + 'static,
    {
        FundPolicy {
            rule: FundRule::Custom(Arc::new(f)),
            descriptor: descriptor.into(),
            bound: DEFAULT_POLICY_BOUND,
        }
    }

    pub fn with_descriptor(mut self, descriptor: impl Into<String>) -> Self {
        self.descriptor = descriptor.into();
        self
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = bound.abs();
        self
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self.rule {
            FundRule::Constant(c) => Some(c.clamp(-self.bound, self.bound)),
            FundRule::Custom(_) => None,
        }
    }

    pub fn evaluate(&self, state: &FundState) -> Result<f64> {
        let raw = match &self.rule {
            FundRule::Constant(c) => *c,
            FundRule::Custom(f) => f(state)?,
        };
        if !raw.is_finite() {
            return Err(Error::Evaluation(format!(
                "policy `{}` returned {raw} at t = {}",
                self.descriptor, state.t
            )));
        }
        Ok(raw.clamp(-self.bound, self.bound))
    }
}

/// Merton proportion `mu / (gamma sigma^2)`.
pub fn merton_proportion(mu: f64, sigma: f64, gamma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::domain(Origin::Policies, "sigma", "must be positive"));
    }
    if !(gamma > 0.0) {
        return Err(Error::domain(Origin::Policies, "gamma", "must be positive"));
    }
    Ok(mu / (gamma * sigma * sigma))
}

/// Optimal constant fund proportion. Under performance fees the manager
/// acts with the effective risk aversion `alpha + (1 - alpha) gamma`; under
/// management fees with `gamma` itself, whatever the fee rate.
pub fn optimal_fund_policy(scheme: FeeScheme, market: &MarketParams, gamma: f64) -> Result<FundPolicy> {
    let (effective, label) = match scheme {
        FeeScheme::Hedge { alpha } => (effective_risk_aversion(alpha, gamma)?, "hedge"),
        FeeScheme::Mutual { .. } => (gamma, "mutual"),
    };
    let pi = merton_proportion(market.mu_x, market.sigma_x, effective)?;
    Ok(FundPolicy::constant(pi).with_descriptor(format!(
        "optimal_fund({label}, effective_gamma={effective}): {pi}"
    )))
}

/// Optimal wealth policy `(1 - C_t / F_t) * mu_f / (gamma sigma_f^2)` for
/// either scheme; the scheme only enters through the fee state `C_t`.
pub fn optimal_wealth_policy(
    scheme: FeeScheme,
    market: &MarketParams,
    gamma: f64,
) -> Result<WealthPolicy> {
    let merton = merton_proportion(market.mu_f, market.sigma_f, gamma)?;
    let mut p = WealthPolicy::set_aside(merton);
    p.descriptor = format!("optimal_wealth({}, merton={merton})", scheme.name());
    Ok(p)
}

/// Log-optimal feedback policies in the coordinates `xi = ln(x/z)`,
/// `phi = ln(f/z)` with `z` the high-water mark gain.
pub fn heuristic_policy_xi_phi(_xi: f64, phi: f64, market: &MarketParams, alpha: f64) -> (f64, f64) {
    let pi_x = market.mu_x / (market.sigma_x * market.sigma_x);
    let set_aside = alpha / (1.0 - alpha) * (-phi).exp();
    let pi_f = (1.0 - set_aside) * market.mu_f / (market.sigma_f * market.sigma_f);
    (pi_x, pi_f)
}
