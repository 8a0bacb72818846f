//! Equivalent safe rate estimators from simulated terminal wealth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Origin, Result};
use crate::market::{SimConfig, ValidatedScenario};
use crate::montecarlo::{simulate_terminal, EsrTarget, PolicyPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Utility {
    Log,
    Power { gamma: f64 },
}

impl Utility {
    /// Log utility at `gamma == 1`, power otherwise.
    pub fn for_gamma(gamma: f64) -> Self {
        if gamma == 1.0 {
            Utility::Log
        } else {
            Utility::Power { gamma }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EsrEstimate {
    pub value: f64,
    /// NaN when fewer than two paths are available.
    pub std_error: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub utility: Utility,
}

fn check_inputs(wealth: &[f64], horizon: f64) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::domain(Origin::Welfare, "horizon", format!("must be positive, got {horizon}")));
    }
    if wealth.is_empty() {
        return Err(Error::domain(Origin::Welfare, "terminal_wealth", "no paths"));
    }
    if let Some((i, w)) = wealth.iter().enumerate().find(|(_, w)| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::domain(
            Origin::Welfare,
            "terminal_wealth",
            format!("path {i} has nonpositive or non-finite wealth {w}"),
        ));
    }
    Ok(())
}

fn mean_and_sd(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// `mean(ln F_T) / T` with standard error `sd(ln F_T) / (T sqrt(N))`.
pub fn esr_log(wealth: &[f64], horizon: f64) -> Result<EsrEstimate> {
    check_inputs(wealth, horizon)?;
    let n = wealth.len();
    let (mean, sd) = mean_and_sd(wealth.iter().map(|w| w.ln()), n);
    Ok(EsrEstimate {
        value: mean / horizon,
        std_error: sd / (horizon * (n as f64).sqrt()),
        horizon,
        n_paths: n,
        utility: Utility::Log,
    })
}

/// Log of the shifted power mean `ln mean(exp(p ln F - shift))` and the
/// shifted weights' relative standard error.
fn shifted_log_mean(wealth: &[f64], p: f64) -> Result<(f64, f64, f64)> {
    let shift = wealth
        .iter()
        .map(|w| p * w.ln())
        .fold(f64::NEG_INFINITY, f64::max);
    let n = wealth.len();
    let weights = wealth.iter().map(move |w| (p * w.ln() - shift).exp());
    let (m, sd) = mean_and_sd(weights, n);
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::numerical(
            Origin::Welfare,
            format!("power mean underflowed after shifting (p = {p})"),
        ));
    }
    Ok((shift, m, sd))
}

fn check_power_gamma(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) || gamma == 1.0 {
        return Err(Error::domain(
            Origin::Welfare,
            "gamma",
            format!("power utility needs gamma > 0, gamma != 1, got {gamma}"),
        ));
    }
    Ok(1.0 - gamma)
}

/// `(1/(pT)) ln mean(F_T^p)` with `p = 1 - gamma`, evaluated through a
/// shifted log-sum-exp. The standard error is the delta-method one.
pub fn esr_power(wealth: &[f64], horizon: f64, gamma: f64) -> Result<EsrEstimate> {
    check_inputs(wealth, horizon)?;
    let p = check_power_gamma(gamma)?;
    let n = wealth.len();
    let (shift, m, sd) = shifted_log_mean(wealth, p)?;
    let value = (shift + m.ln()) / (p * horizon);
    if !value.is_finite() {
        return Err(Error::numerical(Origin::Welfare, "non-finite power estimate"));
    }
    Ok(EsrEstimate {
        value,
        std_error: sd / (m * (n as f64).sqrt()) / (p.abs() * horizon),
        horizon,
        n_paths: n,
        utility: Utility::Power { gamma },
    })
}

/// Power estimate with a bootstrap standard error from `resamples` draws.
pub fn esr_power_bootstrap(wealth: &[f64], horizon: f64, gamma: f64, resamples: usize, seed: u64) -> Result<EsrEstimate> {
    let mut est = esr_power(wealth, horizon, gamma)?;
    if resamples < 2 {
        return Err(Error::domain(Origin::Welfare, "bootstrap", "needs at least two resamples"));
    }
    let p = 1.0 - gamma;
    let logs: Vec<f64> = wealth.iter().map(|w| p * w.ln()).collect();
    let shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - shift).exp()).collect();
    let n = wealth.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut s = 0.0;
        for _ in 0..n {
            s += weights[rng.random_range(0..n)];
        }
        draws.push((shift + (s / n as f64).ln()) / (p * horizon));
    }
    let (_, sd) = mean_and_sd(draws.iter().copied(), resamples);
    est.std_error = sd;
    Ok(est)
}

/// Log or power estimate depending on `gamma`.
pub fn esr(wealth: &[f64], horizon: f64, gamma: f64) -> Result<EsrEstimate> {
    if gamma == 1.0 {
        esr_log(wealth, horizon)
    } else {
        esr_power(wealth, horizon, gamma)
    }
}

/// Simulates the scenario and estimates the ESR of `target`.
pub fn estimate_esr(scenario: &ValidatedScenario, policies: &PolicyPair, target: EsrTarget) -> Result<EsrEstimate> {
    let sample = simulate_terminal(scenario, policies)?;
    esr(&sample.target(target), scenario.horizon(), scenario.gamma())
}

/// Seed for the `index`-th independent batch derived from a base seed.
pub fn derived_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// One estimate per horizon, each on its own batch.
pub fn esr_curve(
    scenario: &ValidatedScenario,
    policies: &PolicyPair,
    horizons: &[f64],
    target: EsrTarget,
) -> Result<Vec<EsrEstimate>> {
    if horizons.is_empty() {
        return Err(Error::domain(Origin::Welfare, "horizons", "empty list"));
    }
    if horizons.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain(Origin::Welfare, "horizons", "must be increasing"));
    }
    horizons
        .iter()
        .enumerate()
        .map(|(i, &horizon)| {
            let s = scenario.with_sim(SimConfig {
                horizon,
                seed: derived_seed(scenario.seed(), i),
                ..scenario.sim
            })?;
            estimate_esr(&s, policies, target)
        })
        .collect()
}
