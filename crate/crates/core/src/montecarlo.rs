//! Streaming Monte Carlo over paths: each path's increments are generated,
//! consumed and dropped, so horizons and path counts are not bounded by
//! memory. Per-path arithmetic matches the batch routines in `paths`, `fund`
//! and `wealth` operation for operation.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Origin, Result};
use crate::fund::{fee_factor, hedge_terminal};
use crate::market::{FeeScheme, ValidatedScenario};
use crate::paths::{step_coefficients, terminal_constant, Checksum, PathGenerator};
use crate::policies::{
    optimal_fund_policy, optimal_wealth_policy, FundPolicy, FundState, WealthPolicy, WealthState,
};

#[derive(Debug, Clone)]
pub struct PolicyPair {
    pub fund: FundPolicy,
    pub wealth: WealthPolicy,
}

impl PolicyPair {
    /// Optimal fund and wealth policies for the scenario's fee scheme.
    pub fn optimal(scenario: &ValidatedScenario) -> Result<Self> {
        Ok(PolicyPair {
            fund: optimal_fund_policy(scenario.fees, &scenario.market, scenario.gamma())?,
            wealth: optimal_wealth_policy(scenario.fees, &scenario.market, scenario.gamma())?,
        })
    }
}

/// Which terminal quantity welfare is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EsrTarget {
    /// The manager's private wealth.
    #[default]
    Wealth,
    /// The fund's net asset value.
    Fund,
}

/// Terminal values of one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathTerminal {
    pub fund: f64,
    /// High-water mark; NaN under the mutual scheme.
    pub mark: f64,
    pub fees: f64,
    pub wealth: f64,
}

/// Terminal values of every path, in path order.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalSample {
    pub paths: Vec<PathTerminal>,
    /// Checksum of the increments consumed, combined in path order.
    pub checksum: u64,
}

impl TerminalSample {
    pub fn target(&self, target: EsrTarget) -> Vec<f64> {
        self.paths
            .iter()
            .map(|p| match target {
                EsrTarget::Wealth => p.wealth,
                EsrTarget::Fund => p.fund,
            })
            .collect()
    }
}

enum WealthMode {
    /// `F = f0 e^{G} + C` with `G` the log return at the Merton proportion.
    SetAside { merton: f64 },
    /// All wealth in the safe asset: `F = f0 + C`.
    SafeOnly,
    Feedback,
}

/// Per-path simulator shared by the ESR estimators and the optimizer.
pub(crate) struct PathKernel<'a> {
    scenario: &'a ValidatedScenario,
    policies: &'a PolicyPair,
    wealth_mode: WealthMode,
}

impl<'a> PathKernel<'a> {
    pub(crate) fn new(scenario: &'a ValidatedScenario, policies: &'a PolicyPair) -> Self {
        let wealth_mode = if let Some(merton) = policies.wealth.set_aside_merton() {
            WealthMode::SetAside { merton }
        } else if policies.wealth.constant_value() == Some(0.0) {
            WealthMode::SafeOnly
        } else {
            WealthMode::Feedback
        };
        PathKernel {
            scenario,
            policies,
            wealth_mode,
        }
    }

    /// Log return of the excess wealth under the set-aside policy.
    fn set_aside_log_return(&self, merton: f64, dw_f: &[f64]) -> f64 {
        let m = &self.scenario.market;
        terminal_constant(merton, m.mu_f, m.sigma_f, self.scenario.dt(), dw_f)
    }

    fn finish_wealth(&self, dw_f: &[f64], fees: f64) -> Option<f64> {
        let f0 = self.scenario.sim.f0;
        match self.wealth_mode {
            WealthMode::SetAside { merton } => {
                Some(f0 * self.set_aside_log_return(merton, dw_f).exp() + fees)
            }
            WealthMode::SafeOnly => Some(f0 + fees),
            WealthMode::Feedback => None,
        }
    }

    pub(crate) fn run(&self, path: usize, dw_x: &[f64], dw_f: &[f64]) -> Result<PathTerminal> {
        match (self.policies.fund.constant_value(), &self.wealth_mode) {
            (Some(pi), WealthMode::SetAside { .. } | WealthMode::SafeOnly) => {
                let (fund, mark, fees) = self.fund_terminal_constant(pi, dw_x);
                let wealth = self.finish_wealth(dw_f, fees).expect("non-feedback mode");
                Ok(PathTerminal {
                    fund,
                    mark,
                    fees,
                    wealth,
                })
            }
            _ => self.run_stepwise(path, dw_x, dw_f),
        }
    }

    /// Terminal `(X, X*, C)` under a constant fund proportion.
    pub(crate) fn fund_terminal_constant(&self, pi: f64, dw_x: &[f64]) -> (f64, f64, f64) {
        let s = self.scenario;
        let (mu, sigma, dt, x0) = (s.market.mu_x, s.market.sigma_x, s.dt(), s.sim.x0);
        let (drift, vol) = step_coefficients(pi, mu, sigma, dt);
        match s.fees {
            FeeScheme::Hedge { alpha } => {
                let mut r = 0.0f64;
                let mut r_star = 0.0f64;
                for &w in dw_x {
                    r += drift + vol * w;
                    if r > r_star {
                        r_star = r;
                    }
                }
                hedge_terminal(r, r_star, alpha, x0)
            }
            FeeScheme::Mutual { phi } => {
                let half = 0.5 * phi * dt;
                let mut r = 0.0f64;
                let mut x_prev = x0 * (0.0f64 - phi * (0.0 * dt)).exp();
                let mut acc = 0.0;
                for (k, &w) in dw_x.iter().enumerate() {
                    r += drift + vol * w;
                    let x = x0 * (r - phi * ((k + 1) as f64 * dt)).exp();
                    acc += half * (x_prev + x);
                    x_prev = x;
                }
                (x_prev, f64::NAN, acc)
            }
        }
    }

    /// General route: feedback policies on either account.
    fn run_stepwise(&self, path: usize, dw_x: &[f64], dw_f: &[f64]) -> Result<PathTerminal> {
        let s = self.scenario;
        let m = &s.market;
        let dt = s.dt();
        let (x0, f0) = (s.sim.x0, s.sim.f0);
        let (hedge, alpha, phi) = match s.fees {
            FeeScheme::Hedge { alpha } => (true, alpha, 0.0),
            FeeScheme::Mutual { phi } => (false, 0.0, phi),
        };
        let k_fee = fee_factor(alpha);
        let half = 0.5 * phi * dt;

        let mut r = 0.0f64;
        let mut r_star = 0.0f64;
        let mut x = x0;
        let mut mark = x0;
        let mut c = 0.0f64;
        let mut f = f0;
        for k in 0..dw_x.len() {
            let t = k as f64 * dt;
            let mark_opt = hedge.then_some(mark);
            let pi_x = self.policies.fund.evaluate(&FundState {
                t,
                fund: x,
                mark: mark_opt,
            })?;
            let pi_f = match self.wealth_mode {
                WealthMode::Feedback => self.policies.wealth.evaluate(&WealthState {
                    t,
                    wealth: f,
                    fees: c,
                    fund: x,
                    mark: mark_opt,
                })?,
                _ => 0.0,
            };
            let (drift, vol) = step_coefficients(pi_x, m.mu_x, m.sigma_x, dt);
            r += drift + vol * dw_x[k];
            let (x_next, c_next) = if hedge {
                if r > r_star {
                    r_star = r;
                }
                let drag = alpha * r_star;
                mark = x0 * (r_star - drag).exp();
                (x0 * (r - drag).exp(), k_fee * (mark - x0))
            } else {
                let xn = x0 * (r - phi * ((k + 1) as f64 * dt)).exp();
                (xn, c + half * (x + xn))
            };
            if let WealthMode::Feedback = self.wealth_mode {
                let next = f + f * pi_f * (m.mu_f * dt + m.sigma_f * dw_f[k]) + (c_next - c);
                if !(next > 0.0) {
                    return Err(Error::Stability {
                        path,
                        step: k,
                        message: format!(
                            "wealth {next} after step under policy `{}`",
                            self.policies.wealth.descriptor()
                        ),
                        origin: Origin::WealthDynamics,
                    });
                }
                f = next;
            }
            x = x_next;
            c = c_next;
        }
        let wealth = self.finish_wealth(dw_f, c).unwrap_or(f);
        Ok(PathTerminal {
            fund: x,
            mark: if hedge { mark } else { f64::NAN },
            fees: c,
            wealth,
        })
    }
}

/// Simulates every path of the scenario under `policies`, keeping only
/// terminal values. Results do not depend on the number of threads.
pub fn simulate_terminal(scenario: &ValidatedScenario, policies: &PolicyPair) -> Result<TerminalSample> {
    let gen = PathGenerator::new(scenario);
    let kernel = PathKernel::new(scenario, policies);
    let n_steps = scenario.n_steps;
    let results: Vec<Result<(PathTerminal, u64)>> = (0..scenario.n_paths())
        .into_par_iter()
        .map_init(
            || (vec![0.0; n_steps], vec![0.0; n_steps]),
            |(dw_x, dw_f), p| {
                gen.fill(p, dw_x, dw_f);
                let mut h = Checksum::new();
                h.update(dw_x);
                h.update(dw_f);
                kernel.run(p, dw_x, dw_f).map(|t| (t, h.finish()))
            },
        )
        .collect();
    let mut paths = Vec::with_capacity(results.len());
    let mut checksum = Checksum::new();
    for r in results {
        let (t, h) = r?;
        checksum.combine(h);
        paths.push(t);
    }
    Ok(TerminalSample {
        paths,
        checksum: checksum.finish(),
    })
}
