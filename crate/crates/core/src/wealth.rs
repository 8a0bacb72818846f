//! Private wealth driven by a wealth policy and the fund's fee stream.

use rayon::prelude::*;

use crate::error::{Error, Origin, Result};
use crate::fund::FundTrajectory;
use crate::market::ValidatedScenario;
use crate::paths::{accumulate_constant, PathBatch, ReturnGrid};
use crate::policies::{merton_proportion, WealthPolicy, WealthState};

#[derive(Debug, Clone, PartialEq)]
pub struct WealthTrajectory {
    pub policy_id: String,
    pub dt: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    f: Vec<f64>,
    c: Vec<f64>,
    excess: Option<Vec<f64>>,
}

impl WealthTrajectory {
    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn wealth(&self, path: usize) -> &[f64] {
        let n = self.n_nodes();
        &self.f[path * n..(path + 1) * n]
    }

    pub fn fees(&self, path: usize) -> &[f64] {
        let n = self.n_nodes();
        &self.c[path * n..(path + 1) * n]
    }

    pub fn terminal_wealth(&self, path: usize) -> f64 {
        self.wealth(path)[self.n_steps]
    }

    /// `F - C` at every node of `path`. Exact for the set-aside route, which
    /// builds the excess before adding fees.
    pub fn excess(&self, path: usize) -> Vec<f64> {
        if let Some(e) = &self.excess {
            let n = self.n_nodes();
            return e[path * n..(path + 1) * n].to_vec();
        }
        self.wealth(path)
            .iter()
            .zip(self.fees(path))
            .map(|(f, c)| f - c)
            .collect()
    }
}

fn check_alignment(fees: &FundTrajectory, batch: &PathBatch) -> Result<()> {
    if fees.n_paths != batch.n_paths || fees.n_steps != batch.n_steps {
        return Err(Error::domain(
            Origin::WealthDynamics,
            "batch",
            format!(
                "fee stream is {} x {}, batch is {} x {}",
                fees.n_paths, fees.n_steps, batch.n_paths, batch.n_steps
            ),
        ));
    }
    Ok(())
}

/// Explicit scheme `F_{k+1} = F_k + F_k pi_k (mu_f dt + sigma_f dW_k) + dC_k`
/// with `pi_k` read from the policy at the left endpoint.
pub fn simulate_wealth_feedback(
    policy: &WealthPolicy,
    fees: &FundTrajectory,
    scenario: &ValidatedScenario,
    batch: &PathBatch,
) -> Result<WealthTrajectory> {
    check_alignment(fees, batch)?;
    let f0 = scenario.sim.f0;
    let (mu, sigma) = (scenario.market.mu_f, scenario.market.sigma_f);
    let dt = batch.dt;
    let n_steps = batch.n_steps;
    let n = n_steps + 1;

    let rows: Vec<Result<Vec<f64>>> = (0..batch.n_paths)
        .into_par_iter()
        .map(|p| {
            let dw = batch.dw_f(p);
            let c = fees.fees(p);
            let x = fees.x(p);
            let mark = fees.x_star(p);
            let mut f = vec![0.0; n];
            f[0] = f0;
            for k in 0..n_steps {
                let state = WealthState {
                    t: k as f64 * dt,
                    wealth: f[k],
                    fees: c[k],
                    fund: x[k],
                    mark: mark.map(|m| m[k]),
                };
                let pi = policy.evaluate(&state)?;
                let next = f[k] + f[k] * pi * (mu * dt + sigma * dw[k]) + (c[k + 1] - c[k]);
                if !(next > 0.0) {
                    return Err(Error::Stability {
                        path: p,
                        step: k,
                        message: format!(
                            "wealth {next} after step under policy `{}`",
                            policy.descriptor()
                        ),
                        origin: Origin::WealthDynamics,
                    });
                }
                f[k + 1] = next;
            }
            Ok(f)
        })
        .collect();

    let mut f = Vec::with_capacity(batch.n_paths * n);
    for row in rows {
        f.extend(row?);
    }
    let c = (0..fees.n_paths).flat_map(|p| fees.fees(p).to_vec()).collect();
    Ok(WealthTrajectory {
        policy_id: policy.descriptor().to_string(),
        dt,
        n_paths: batch.n_paths,
        n_steps,
        f,
        c,
        excess: None,
    })
}

/// `F = f0 e^{G} + C` on one path, where `g` is the cumulative log return
/// of the excess wealth. `excess` receives `f0 e^{G}`.
pub fn set_aside_row(g: &[f64], f0: f64, c: &[f64], excess: &mut [f64], out: &mut [f64]) {
    for k in 0..g.len() {
        excess[k] = f0 * g[k].exp();
        out[k] = excess[k] + c[k];
    }
}

/// Optimal wealth via its set-aside decomposition: earned fees sit in the
/// safe asset and the excess `F - C` compounds as a constant-proportion
/// portfolio at the Merton proportion.
pub fn simulate_wealth_optimal(
    fees: &FundTrajectory,
    scenario: &ValidatedScenario,
    batch: &PathBatch,
) -> Result<WealthTrajectory> {
    check_alignment(fees, batch)?;
    let (mu, sigma) = (scenario.market.mu_f, scenario.market.sigma_f);
    let m = merton_proportion(mu, sigma, scenario.gamma())?;
    let f0 = scenario.sim.f0;
    let dt = batch.dt;
    let n = batch.n_steps + 1;
    let mut f = vec![0.0; batch.n_paths * n];
    let mut excess = vec![0.0; batch.n_paths * n];
    f.par_chunks_mut(n)
        .zip(excess.par_chunks_mut(n))
        .enumerate()
        .for_each_init(
            || vec![0.0; n],
            |g, (p, (out, ex))| {
                accumulate_constant(m, mu, sigma, dt, batch.dw_f(p), g);
                set_aside_row(g, f0, fees.fees(p), ex, out);
            },
        );
    let c = (0..fees.n_paths).flat_map(|p| fees.fees(p).to_vec()).collect();
    Ok(WealthTrajectory {
        policy_id: format!("optimal_set_aside(merton={m})"),
        dt,
        n_paths: batch.n_paths,
        n_steps: batch.n_steps,
        f,
        c,
        excess: Some(excess),
    })
}

/// Path-major fee increments `C_{k+1} - C_k`.
pub fn fee_increments(fees: &FundTrajectory) -> Vec<f64> {
    (0..fees.n_paths)
        .flat_map(|p| {
            let c = fees.fees(p);
            c.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>()
        })
        .collect()
}

/// Left-endpoint Stieltjes sum `sum_k e^{R_T - R_{t_k}} dC_k` per path, so
/// that terminal wealth is `f0 e^{R_T}` plus this value.
pub fn fee_inflow_integral(r_f: &ReturnGrid, fee_increments: &[f64]) -> Result<Vec<f64>> {
    let n_steps = r_f.n_steps;
    if fee_increments.len() != r_f.n_paths * n_steps {
        return Err(Error::domain(
            Origin::WealthDynamics,
            "fee_increments",
            format!(
                "expected {} increments, got {}",
                r_f.n_paths * n_steps,
                fee_increments.len()
            ),
        ));
    }
    Ok((0..r_f.n_paths)
        .into_par_iter()
        .map(|p| {
            let r = r_f.row(p);
            let r_t = r[n_steps];
            fee_increments[p * n_steps..(p + 1) * n_steps]
                .iter()
                .enumerate()
                .map(|(k, dc)| (r_t - r[k]).exp() * dc)
                .sum()
        })
        .collect())
}
