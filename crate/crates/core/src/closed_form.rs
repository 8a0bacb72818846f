//! Closed-form welfare, effective risk aversion, attention thresholds and
//! the fee-indifference rate.

use serde::Serialize;

use crate::error::{Error, Origin, Result};
use crate::market::{sharpe, MarketParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Fund,
    Private,
    Tie,
}

/// Optimal equivalent safe rate as the larger of a fund (fee) branch and a
/// private-investment branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelfareBreakdown {
    pub fund_branch: f64,
    pub private_branch: f64,
    pub value: f64,
    pub active_branch: Branch,
}

impl WelfareBreakdown {
    fn new(fund_branch: f64, private_branch: f64) -> Self {
        let active_branch = if fund_branch > private_branch {
            Branch::Fund
        } else if private_branch > fund_branch {
            Branch::Private
        } else {
            Branch::Tie
        };
        WelfareBreakdown {
            fund_branch,
            private_branch,
            value: fund_branch.max(private_branch),
            active_branch,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::domain(
            Origin::ClosedForm,
            "alpha",
            format!("must lie in [0, 1), got {alpha}"),
        ))
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(
            Origin::ClosedForm,
            "gamma",
            format!("must be positive, got {gamma}"),
        ))
    }
}

fn sharpes(market: &MarketParams) -> Result<(f64, f64)> {
    Ok((
        sharpe(market.mu_x, market.sigma_x)?,
        sharpe(market.mu_f, market.sigma_f)?,
    ))
}

/// `alpha + (1 - alpha) gamma`.
pub fn effective_risk_aversion(alpha: f64, gamma: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_gamma(gamma)?;
    Ok(alpha + (1.0 - alpha) * gamma)
}

/// Hedge-fund welfare: `max((1-a) nu_x^2 / (2 g*), nu_f^2 / (2 g))`.
pub fn esr_hedge_closed(market: &MarketParams, alpha: f64, gamma: f64) -> Result<WelfareBreakdown> {
    let gamma_star = effective_risk_aversion(alpha, gamma)?;
    let (nu_x, nu_f) = sharpes(market)?;
    Ok(WelfareBreakdown::new(
        (1.0 - alpha) * nu_x * nu_x / (2.0 * gamma_star),
        nu_f * nu_f / (2.0 * gamma),
    ))
}

/// Mutual-fund welfare: `max(nu_x^2 / (2 g) - phi, nu_f^2 / (2 g))`.
pub fn esr_mutual_closed(market: &MarketParams, phi: f64, gamma: f64) -> Result<WelfareBreakdown> {
    check_gamma(gamma)?;
    if !(phi >= 0.0 && phi.is_finite()) {
        return Err(Error::domain(Origin::ClosedForm, "phi", "must be nonnegative"));
    }
    let (nu_x, nu_f) = sharpes(market)?;
    Ok(WelfareBreakdown::new(
        nu_x * nu_x / (2.0 * gamma) - phi,
        nu_f * nu_f / (2.0 * gamma),
    ))
}

/// Minimum ratio `nu_x / nu_f` above which a hedge-fund manager's welfare
/// comes from the fund: `sqrt(1 + a / ((1 - a) g))`.
pub fn attention_threshold_hedge(alpha: f64, gamma: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_gamma(gamma)?;
    Ok((1.0 + alpha / ((1.0 - alpha) * gamma)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MutualAttention {
    pub fund_focus: bool,
    /// `(nu_x^2 - nu_f^2) / 2 - gamma phi`; the condition is `margin > 0`.
    pub margin: f64,
}

pub fn attention_condition_mutual(market: &MarketParams, phi: f64, gamma: f64) -> Result<MutualAttention> {
    check_gamma(gamma)?;
    let (nu_x, nu_f) = sharpes(market)?;
    let lhs = nu_x * nu_x / 2.0 - nu_f * nu_f / 2.0;
    let rhs = gamma * phi;
    Ok(MutualAttention {
        fund_focus: lhs > rhs,
        margin: lhs - rhs,
    })
}

/// Performance fee at which the hedge attention threshold binds; above it
/// welfare no longer depends on the fee.
pub fn fee_indifference_alpha(market: &MarketParams, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let (nu_x, nu_f) = sharpes(market)?;
    if !(nu_f > 0.0 && nu_x > nu_f) {
        return Err(Error::domain(
            Origin::ClosedForm,
            "market",
            format!("needs nu_x > nu_f > 0, got nu_x = {nu_x}, nu_f = {nu_f}"),
        ));
    }
    let excess = gamma * ((nu_x / nu_f).powi(2) - 1.0);
    let alpha = excess / (1.0 + excess);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::numerical(
            Origin::ClosedForm,
            format!("indifference fee {alpha} outside (0, 1)"),
        ));
    }
    Ok(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::fixtures::market;

    fn sharpe_market(nu_x: f64, nu_f: f64) -> MarketParams {
        MarketParams {
            mu_x: nu_x * 0.2,
            sigma_x: 0.2,
            mu_f: nu_f * 0.1,
            sigma_f: 0.1,
            rho: 0.0,
        }
    }

    #[test]
    fn effective_risk_aversion_examples() {
        assert!((effective_risk_aversion(0.2, 0.5).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(effective_risk_aversion(0.0, 0.7).unwrap(), 0.7);
        assert_eq!(effective_risk_aversion(0.35, 1.0).unwrap(), 1.0);
        assert!(effective_risk_aversion(1.0, 0.5).is_err());
        assert!(effective_risk_aversion(0.2, 0.0).is_err());
    }

    #[test]
    fn hedge_welfare_examples() {
        let w = esr_hedge_closed(&market(), 0.2, 1.0).unwrap();
        assert!((w.fund_branch - 0.1).abs() < 1e-15);
        assert!((w.private_branch - 0.08).abs() < 1e-15);
        assert_eq!(w.value, w.fund_branch);
        assert_eq!(w.active_branch, Branch::Fund);

        let w = esr_hedge_closed(&sharpe_market(0.0, 0.4), 0.2, 0.5).unwrap();
        assert_eq!(w.active_branch, Branch::Private);
        assert!((w.value - 0.16).abs() < 1e-15);

        let w = esr_hedge_closed(&market(), 1e-12, 0.5).unwrap();
        assert!((w.fund_branch - 0.25).abs() < 1e-9);
    }

    #[test]
    fn mutual_welfare_examples() {
        let w = esr_mutual_closed(&market(), 0.01, 1.0).unwrap();
        assert!((w.fund_branch - 0.115).abs() < 1e-15);
        assert!((w.private_branch - 0.08).abs() < 1e-15);
        assert_eq!(w.active_branch, Branch::Fund);
        assert_eq!(esr_mutual_closed(&market(), 0.0, 1.0).unwrap().fund_branch, 0.125);
        assert_eq!(
            esr_mutual_closed(&market(), 5.0, 1.0).unwrap().active_branch,
            Branch::Private
        );
    }

    #[test]
    fn attention_threshold_examples() {
        let t = attention_threshold_hedge(0.2, 1.0).unwrap();
        assert!((t - 1.118_033_988_749_895).abs() < 1e-12);
        assert_eq!(attention_threshold_hedge(0.0, 0.3).unwrap(), 1.0);
        assert!(attention_threshold_hedge(0.2, 1e-12).unwrap() > 1e5);
    }

    #[test]
    fn mutual_attention_examples() {
        let a = attention_condition_mutual(&market(), 0.01, 1.0).unwrap();
        assert!(a.fund_focus);
        assert!((a.margin - 0.035).abs() < 1e-15);
        let equal = sharpe_market(0.4, 0.4);
        assert!(!attention_condition_mutual(&equal, 0.001, 1.0).unwrap().fund_focus);
        // nu_x^2/2 - nu_f^2/2 = 0.125 - 0.0 with nu_f = 0, gamma phi = 0.125 exactly
        let boundary = sharpe_market(0.5, 0.0);
        let a = attention_condition_mutual(&boundary, 0.125, 1.0).unwrap();
        assert!(!a.fund_focus);
        assert_eq!(a.margin, 0.0);
    }

    #[test]
    fn indifference_fee_examples() {
        let m = sharpe_market(0.5, 0.4);
        let a = fee_indifference_alpha(&m, 1.0).unwrap();
        assert!((a - 0.36).abs() < 1e-12);
        let near = fee_indifference_alpha(&sharpe_market(0.400_001, 0.4), 1.0).unwrap();
        assert!(near > 0.0 && near < 1e-5);
        assert!(fee_indifference_alpha(&sharpe_market(0.3, 0.4), 1.0).is_err());
        for gamma in [0.3, 0.7, 1.0] {
            let a = fee_indifference_alpha(&m, gamma).unwrap();
            let w = esr_hedge_closed(&m, a, gamma).unwrap();
            assert!((w.fund_branch - w.private_branch).abs() < 1e-12);
        }
    }

    #[test]
    fn branch_switch_matches_threshold() {
        for gamma in [0.25, 0.6, 1.0] {
            for i in 0..20 {
                let alpha = 0.02 + 0.045 * i as f64;
                for nu_x in [0.3, 0.45, 0.6, 0.9] {
                    let m = sharpe_market(nu_x, 0.4);
                    let w = esr_hedge_closed(&m, alpha, gamma).unwrap();
                    let t = attention_threshold_hedge(alpha, gamma).unwrap();
                    assert_eq!(w.active_branch == Branch::Fund, nu_x / 0.4 > t);
                }
            }
        }
    }

    #[test]
    fn welfare_monotone_in_fee_then_flat() {
        let m = sharpe_market(0.5, 0.4);
        let gamma = 1.0;
        let a_star = fee_indifference_alpha(&m, gamma).unwrap();
        let mut last = f64::INFINITY;
        for i in 0..40 {
            let alpha = i as f64 * 0.024;
            let w = esr_hedge_closed(&m, alpha, gamma).unwrap();
            assert!(w.value <= last);
            if alpha > a_star {
                assert_eq!(w.value, w.private_branch);
            }
            last = w.value;
        }
    }

    #[test]
    fn mutual_branch_matches_condition() {
        for phi in [0.0, 0.01, 0.05, 0.2] {
            for gamma in [0.3, 1.0, 2.0] {
                let w = esr_mutual_closed(&market(), phi, gamma).unwrap();
                let a = attention_condition_mutual(&market(), phi, gamma).unwrap();
                assert_eq!(w.active_branch == Branch::Fund, a.fund_focus);
                assert!(w.value >= market().mu_f.powi(2) / market().sigma_f.powi(2) / (2.0 * gamma) - 1e-15);
            }
        }
    }
}
