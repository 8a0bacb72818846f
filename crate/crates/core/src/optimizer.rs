//! Grid search over constant fund proportions under common random numbers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::{esr_hedge_closed, esr_mutual_closed, Branch};
use crate::error::{Error, Origin, Result};
use crate::fund::hedge_terminal;
use crate::market::{FeeScheme, MarketParams, ValidatedScenario};
use crate::montecarlo::{PathKernel, PolicyPair};
use crate::paths::{step_coefficients, terminal_constant, Checksum, PathGenerator};
use crate::policies::{merton_proportion, optimal_fund_policy, FundPolicy, WealthPolicy};
use crate::welfare::{esr, EsrEstimate};

/// Private-wealth policy held fixed while the fund proportion varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WealthRule {
    /// Everything in the safe asset, so welfare comes from fees alone.
    #[default]
    Zero,
    /// Fees set aside, the rest in the private Merton portfolio.
    Optimal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSearchResult {
    pub grid: Vec<f64>,
    pub estimates: Vec<EsrEstimate>,
    pub argmax: f64,
    pub argmax_index: usize,
    /// Closed-form optimal fund proportion.
    pub prediction: f64,
    pub gap: f64,
    pub wealth_rule: WealthRule,
    pub seed: u64,
    pub horizon: f64,
    pub n_paths: usize,
    /// Checksum of every increment consumed.
    pub checksum: u64,
    /// Checksum of the fund-asset increments alone.
    pub fund_noise_checksum: u64,
    /// `max - mean` of the profile.
    pub profile_spread: f64,
    /// Root mean square of the candidates' standard errors.
    pub pooled_std_error: f64,
    /// `profile_spread <= 2 pooled_std_error`.
    pub flat: bool,
}

fn check_grid(pi_grid: &[f64]) -> Result<()> {
    if pi_grid.is_empty() {
        return Err(Error::domain(Origin::Optimizer, "pi_grid", "empty grid"));
    }
    if pi_grid.iter().any(|p| !p.is_finite()) {
        return Err(Error::domain(Origin::Optimizer, "pi_grid", "non-finite candidate"));
    }
    Ok(())
}

/// `lo, lo + step, ..., hi` with the endpoint included when it lies on the grid.
pub fn proportion_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::domain(Origin::Optimizer, "pi_grid", "needs pi_min <= pi_max and pi_step > 0"));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + step * i as f64).collect())
}

struct PathOutcome {
    wealth: Vec<f64>,
    checksum: u64,
    fund_checksum: u64,
}

/// Estimates the ESR of every candidate fund proportion on one shared set of
/// paths and reports the maximizer. Ties go to the smaller index.
pub fn grid_search_fund(scenario: &ValidatedScenario, pi_grid: &[f64], rule: WealthRule) -> Result<GridSearchResult> {
    check_grid(pi_grid)?;
    let m = scenario.market;
    let gamma = scenario.gamma();
    let merton_f = merton_proportion(m.mu_f, m.sigma_f, gamma)?;
    let wealth = match rule {
        WealthRule::Zero => WealthPolicy::constant(0.0),
        WealthRule::Optimal => WealthPolicy::set_aside(merton_f),
    };
    let pair = PolicyPair {
        fund: FundPolicy::constant(0.0),
        wealth,
    };
    let kernel = PathKernel::new(scenario, &pair);
    let gen = PathGenerator::new(scenario);
    let n_steps = scenario.n_steps;
    let dt = scenario.dt();
    let (x0, f0) = (scenario.sim.x0, scenario.sim.f0);
    let coeffs: Vec<(f64, f64)> = pi_grid
        .iter()
        .map(|&pi| step_coefficients(pi, m.mu_x, m.sigma_x, dt))
        .collect();
    let drifts: Vec<f64> = coeffs.iter().map(|c| c.0).collect();
    let vols: Vec<f64> = coeffs.iter().map(|c| c.1).collect();
    let nc = pi_grid.len();

    let outcomes: Vec<PathOutcome> = (0..scenario.n_paths())
        .into_par_iter()
        .map_init(
            || (vec![0.0; n_steps], vec![0.0; n_steps], vec![0.0; nc], vec![0.0; nc]),
            |(dw_x, dw_f, r, r_star), p| {
                gen.fill(p, dw_x, dw_f);
                let mut hx = Checksum::new();
                hx.update(dw_x);
                let fund_checksum = hx.finish();
                let mut h = Checksum::new();
                h.update(dw_x);
                h.update(dw_f);
                let base = match rule {
                    WealthRule::Zero => f0,
                    WealthRule::Optimal => f0 * terminal_constant(merton_f, m.mu_f, m.sigma_f, dt, dw_f).exp(),
                };
                let fees: Vec<f64> = match scenario.fees {
                    FeeScheme::Hedge { alpha } => {
                        r.iter_mut().for_each(|v| *v = 0.0);
                        r_star.iter_mut().for_each(|v| *v = 0.0);
                        for &w in dw_x.iter() {
                            for c in 0..nc {
                                let v = r[c] + (drifts[c] + vols[c] * w);
                                r[c] = v;
                                if v > r_star[c] {
                                    r_star[c] = v;
                                }
                            }
                        }
                        (0..nc).map(|c| hedge_terminal(r[c], r_star[c], alpha, x0).2).collect()
                    }
                    FeeScheme::Mutual { .. } => pi_grid
                        .iter()
                        .map(|&pi| kernel.fund_terminal_constant(pi, dw_x).2)
                        .collect(),
                };
                PathOutcome {
                    wealth: fees.iter().map(|c| base + c).collect(),
                    checksum: h.finish(),
                    fund_checksum,
                }
            },
        )
        .collect();

    let mut checksum = Checksum::new();
    let mut fund_checksum = Checksum::new();
    for o in &outcomes {
        checksum.combine(o.checksum);
        fund_checksum.combine(o.fund_checksum);
    }
    let estimates = (0..nc)
        .map(|c| {
            let column: Vec<f64> = outcomes.iter().map(|o| o.wealth[c]).collect();
            esr(&column, scenario.horizon(), gamma).map_err(|e| match e {
                Error::Domain { message, .. } => Error::domain(
                    Origin::Optimizer,
                    "pi_grid",
                    format!("candidate {}: {message}", pi_grid[c]),
                ),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut argmax_index = 0;
    for (i, e) in estimates.iter().enumerate() {
        if e.value > estimates[argmax_index].value {
            argmax_index = i;
        }
    }
    let prediction = optimal_fund_policy(scenario.fees, &m, gamma)?
        .constant_value()
        .unwrap_or(f64::NAN);
    let mean = estimates.iter().map(|e| e.value).sum::<f64>() / nc as f64;
    let profile_spread = estimates[argmax_index].value - mean;
    let pooled_std_error = if nc > 0 && estimates.iter().all(|e| e.std_error.is_finite()) {
        (estimates.iter().map(|e| e.std_error * e.std_error).sum::<f64>() / nc as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(GridSearchResult {
        grid: pi_grid.to_vec(),
        argmax: pi_grid[argmax_index],
        argmax_index,
        prediction,
        gap: pi_grid[argmax_index] - prediction,
        wealth_rule: rule,
        seed: scenario.seed(),
        horizon: scenario.horizon(),
        n_paths: scenario.n_paths(),
        checksum: checksum.finish(),
        fund_noise_checksum: fund_checksum.finish(),
        profile_spread,
        pooled_std_error,
        flat: profile_spread <= 2.0 * pooled_std_error,
        estimates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationCell {
    pub rho: f64,
    pub mu_f: f64,
    pub argmax: f64,
    pub argmax_index: usize,
    pub esr_at_argmax: f64,
    pub fund_noise_checksum: u64,
    pub active_branch: Branch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationReport {
    pub cells: Vec<SeparationCell>,
    pub prediction: f64,
    pub grid_step: f64,
    /// Every cell has the same argmax.
    pub identical_argmax: bool,
    /// Argmaxes span at most one grid step.
    pub agree_within_one_step: bool,
    /// Every argmax lies within one grid step of the prediction.
    pub near_prediction: bool,
    /// Every cell consumed the same fund-asset noise.
    pub common_fund_noise: bool,
    pub wealth_rule: WealthRule,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
}

fn active_branch(scheme: FeeScheme, market: &MarketParams, gamma: f64) -> Result<Branch> {
    Ok(match scheme {
        FeeScheme::Hedge { alpha } => esr_hedge_closed(market, alpha, gamma)?.active_branch,
        FeeScheme::Mutual { phi } => esr_mutual_closed(market, phi, gamma)?.active_branch,
    })
}

/// Runs [`grid_search_fund`] for every `(rho, mu_f)` pair on the same seed.
/// Under the optimal wealth rule the fund branch must be active in every
/// cell, otherwise the fund argmax is not identified.
pub fn separation_experiment(
    scenario: &ValidatedScenario,
    pi_grid: &[f64],
    rho_list: &[f64],
    mu_f_list: &[f64],
    rule: WealthRule,
) -> Result<SeparationReport> {
    if rho_list.is_empty() {
        return Err(Error::domain(Origin::Optimizer, "rho_list", "empty list"));
    }
    if mu_f_list.is_empty() {
        return Err(Error::domain(Origin::Optimizer, "mu_f_list", "empty list"));
    }
    check_grid(pi_grid)?;
    let mut variants = Vec::new();
    for &rho in rho_list {
        for &mu_f in mu_f_list {
            let s = scenario.with_market(MarketParams {
                rho,
                mu_f,
                ..scenario.market
            })?;
            let branch = active_branch(s.fees, &s.market, s.gamma())?;
            if rule == WealthRule::Optimal && branch != Branch::Fund {
                return Err(Error::domain(
                    Origin::Optimizer,
                    "market",
                    format!("fund branch inactive at rho = {rho}, mu_f = {mu_f}"),
                ));
            }
            variants.push((s, branch));
        }
    }
    let mut cells = Vec::with_capacity(variants.len());
    let mut prediction = f64::NAN;
    for (s, branch) in &variants {
        let r = grid_search_fund(s, pi_grid, rule)?;
        prediction = r.prediction;
        cells.push(SeparationCell {
            rho: s.market.rho,
            mu_f: s.market.mu_f,
            argmax: r.argmax,
            argmax_index: r.argmax_index,
            esr_at_argmax: r.estimates[r.argmax_index].value,
            fund_noise_checksum: r.fund_noise_checksum,
            active_branch: *branch,
        });
    }
    let grid_step = pi_grid
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(f64::INFINITY, f64::min);
    let grid_step = if grid_step.is_finite() { grid_step } else { 0.0 };
    let tol = grid_step * (1.0 + 1e-9);
    let lo = cells.iter().map(|c| c.argmax).fold(f64::INFINITY, f64::min);
    let hi = cells.iter().map(|c| c.argmax).fold(f64::NEG_INFINITY, f64::max);
    Ok(SeparationReport {
        identical_argmax: cells.iter().all(|c| c.argmax_index == cells[0].argmax_index),
        agree_within_one_step: hi - lo <= tol,
        near_prediction: cells.iter().all(|c| (c.argmax - prediction).abs() <= tol),
        common_fund_noise: cells.iter().all(|c| c.fund_noise_checksum == cells[0].fund_noise_checksum),
        cells,
        prediction,
        grid_step,
        wealth_rule: rule,
        horizon: scenario.horizon(),
        n_paths: scenario.n_paths(),
        seed: scenario.seed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::fixtures::*;
    use crate::montecarlo::simulate_terminal;

    #[test]
    fn proportion_grid_includes_endpoint() {
        let g = proportion_grid(0.0, 6.0, 0.25).unwrap();
        assert_eq!(g.len(), 25);
        assert_eq!(g[24], 6.0);
        assert!(proportion_grid(1.0, 0.0, 0.25).is_err());
    }

    #[test]
    fn single_point_grid() {
        let s = scenario(FeeScheme::Hedge { alpha: 0.2 }, 1.0, small_sim(2.0, 0.01, 20, 1));
        let r = grid_search_fund(&s, &[1.7], WealthRule::Zero).unwrap();
        assert_eq!(r.argmax, 1.7);
        assert_eq!(r.argmax_index, 0);
        assert!(grid_search_fund(&s, &[], WealthRule::Zero).is_err());
    }

    #[test]
    fn candidates_match_streaming_simulation() {
        for fees in [FeeScheme::Hedge { alpha: 0.2 }, FeeScheme::Mutual { phi: 0.01 }] {
            for rule in [WealthRule::Zero, WealthRule::Optimal] {
                let s = scenario(fees, 1.0, small_sim(3.0, 0.01, 30, 4));
                let grid = [0.5, 3.0];
                let r = grid_search_fund(&s, &grid, rule).unwrap();
                for (i, &pi) in grid.iter().enumerate() {
                    let wealth = match rule {
                        WealthRule::Zero => WealthPolicy::constant(0.0),
                        WealthRule::Optimal => WealthPolicy::set_aside(merton_proportion(0.04, 0.10, 1.0).unwrap()),
                    };
                    let pair = PolicyPair {
                        fund: FundPolicy::constant(pi),
                        wealth,
                    };
                    let sample = simulate_terminal(&s, &pair).unwrap();
                    let e = esr(&sample.paths.iter().map(|p| p.wealth).collect::<Vec<_>>(), 3.0, 1.0).unwrap();
                    assert_eq!(e, r.estimates[i]);
                    assert_eq!(sample.checksum, r.checksum);
                }
            }
        }
    }

    #[test]
    fn reruns_reproduce_bits() {
        let s = scenario(FeeScheme::Hedge { alpha: 0.2 }, 1.0, small_sim(5.0, 0.01, 50, 77));
        let g = proportion_grid(0.0, 6.0, 0.5).unwrap();
        let a = grid_search_fund(&s, &g, WealthRule::Optimal).unwrap();
        let b = grid_search_fund(&s, &g, WealthRule::Optimal).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ties_go_to_smaller_proportion() {
        let s = scenario(FeeScheme::Hedge { alpha: 0.2 }, 1.0, small_sim(1.0, 0.01, 10, 0))
            .with_market(MarketParams { mu_x: 0.0, ..market() })
            .unwrap();
        let r = grid_search_fund(&s, &[0.0, 0.0], WealthRule::Zero).unwrap();
        assert_eq!(r.argmax_index, 0);
    }

    #[test]
    fn private_branch_profile_is_flat() {
        let m = MarketParams {
            mu_f: 0.12,
            ..market()
        };
        let s = scenario(FeeScheme::Hedge { alpha: 0.2 }, 1.0, small_sim(50.0, 0.05, 400, 12))
            .with_market(m)
            .unwrap();
        let g = proportion_grid(0.0, 6.0, 0.5).unwrap();
        let r = grid_search_fund(&s, &g, WealthRule::Optimal).unwrap();
        assert!(r.flat, "{} vs {}", r.profile_spread, r.pooled_std_error);
    }

    #[test]
    fn separation_rejects_empty_lists_and_shares_fund_noise() {
        let s = scenario(FeeScheme::Hedge { alpha: 0.2 }, 1.0, small_sim(2.0, 0.01, 20, 3));
        let g = [2.0, 3.0];
        let e = separation_experiment(&s, &g, &[], &[0.0], WealthRule::Zero).unwrap_err();
        assert_eq!(e.field(), Some("rho_list"));
        let r = separation_experiment(&s, &g, &[-0.5, 0.9], &[0.0, 0.04], WealthRule::Optimal).unwrap();
        assert_eq!(r.cells.len(), 4);
        assert!(r.common_fund_noise);
    }

    #[test]
    fn separation_requires_fund_branch_under_optimal_rule() {
        let s = scenario(FeeScheme::Hedge { alpha: 0.2 }, 1.0, small_sim(1.0, 0.01, 5, 3));
        let e = separation_experiment(&s, &[3.0], &[0.0], &[0.2], WealthRule::Optimal).unwrap_err();
        assert_eq!(e.kind(), "domain");
        assert!(separation_experiment(&s, &[3.0], &[0.0], &[0.2], WealthRule::Zero).is_ok());
    }
}
