//! Scenario files: TOML with `[market]`, `[fees]`, `[preferences]`,
//! `[simulation]` and `[experiment]` sections. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Origin, Result};
use crate::market::{validate, FeeScheme, MarketParams, PreferenceParams, SimConfig, ValidatedScenario};
use crate::montecarlo::EsrTarget;
use crate::optimizer::WealthRule;
use crate::policies::DEFAULT_POLICY_BOUND;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    market: MarketParams,
    fees: RawFees,
    preferences: PreferenceParams,
    #[serde(default)]
    simulation: RawSimulation,
    #[serde(default)]
    experiment: RawExperiment,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFees {
    alpha: Option<f64>,
    phi: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    #[serde(alias = "horizon_T")]
    horizon: Option<f64>,
    dt: Option<f64>,
    n_paths: Option<usize>,
    seed: Option<u64>,
    x0: Option<f64>,
    f0: Option<f64>,
    memory_budget_mb: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawPolicy {
    Value(f64),
    Name(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    fund_policy: Option<RawPolicy>,
    wealth_policy: Option<RawPolicy>,
    target: Option<EsrTarget>,
    horizons: Option<Vec<f64>>,
    pi_min: Option<f64>,
    pi_max: Option<f64>,
    pi_step: Option<f64>,
    wealth_rule: Option<WealthRule>,
    rho_list: Option<Vec<f64>>,
    mu_f_list: Option<Vec<f64>>,
    deltas: Option<Vec<f64>>,
    grid_n: Option<usize>,
    xi_min: Option<f64>,
    phi_min: Option<f64>,
    phi_max: Option<f64>,
    singular_margin: Option<f64>,
    policy_bound: Option<f64>,
    bootstrap: Option<usize>,
    trajectory_paths: Option<usize>,
}

/// A policy chosen in a scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyChoice {
    Optimal,
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub fund_policy: PolicyChoice,
    pub wealth_policy: PolicyChoice,
    pub target: EsrTarget,
    pub horizons: Option<Vec<f64>>,
    pub pi_grid: Option<PiGrid>,
    pub wealth_rule: WealthRule,
    pub rho_list: Option<Vec<f64>>,
    pub mu_f_list: Option<Vec<f64>>,
    pub deltas: Option<Vec<f64>>,
    pub grid_n: usize,
    pub xi_min: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub singular_margin: f64,
    pub policy_bound: f64,
    pub bootstrap: Option<usize>,
    pub trajectory_paths: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            fund_policy: PolicyChoice::Optimal,
            wealth_policy: PolicyChoice::Optimal,
            target: EsrTarget::Wealth,
            horizons: None,
            pi_grid: None,
            wealth_rule: WealthRule::Zero,
            rho_list: None,
            mu_f_list: None,
            deltas: None,
            grid_n: 50,
            xi_min: -5.0,
            phi_min: -4.0,
            phi_max: 4.0,
            singular_margin: crate::hjb::DEFAULT_SINGULAR_MARGIN,
            policy_bound: DEFAULT_POLICY_BOUND,
            bootstrap: None,
            trajectory_paths: 5,
        }
    }
}

impl ExperimentSpec {
    /// The proportion grid, required by `optimize` and `separation`.
    pub fn require_pi_grid(&self) -> Result<&PiGrid> {
        self.pi_grid
            .as_ref()
            .ok_or_else(|| Error::parse(None, "[experiment] needs pi_min, pi_max and pi_step"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub scenario: ValidatedScenario,
    pub experiment: ExperimentSpec,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn section_line(text: &str, name: &str) -> Option<usize> {
    let header = format!("[{name}]");
    text.lines()
        .position(|l| l.trim() == header)
        .map(|i| i + 1)
}

fn policy_choice(raw: Option<RawPolicy>, key: &str, line: Option<usize>) -> Result<PolicyChoice> {
    match raw {
        None => Ok(PolicyChoice::Optimal),
        Some(RawPolicy::Value(v)) => Ok(PolicyChoice::Constant(v)),
        Some(RawPolicy::Name(s)) if s == "optimal" => Ok(PolicyChoice::Optimal),
        Some(RawPolicy::Name(s)) => Err(Error::parse(
            line,
            format!("`{key}` must be \"optimal\" or a number, got \"{s}\""),
        )),
    }
}

/// Parses and validates a scenario document.
pub fn parse_config_str(text: &str) -> Result<Config> {
    let raw: RawFile = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start));
        Error::parse(line, e.message().to_string())
    })?;
    let fees_line = section_line(text, "fees");
    let fees = match (raw.fees.alpha, raw.fees.phi) {
        (Some(alpha), None) => FeeScheme::Hedge { alpha },
        (None, Some(phi)) => FeeScheme::Mutual { phi },
        _ => return Err(Error::parse(fees_line, "exactly one fee scheme (alpha or phi) must be set")),
    };
    let d = SimConfig::default();
    let s = raw.simulation;
    let sim = SimConfig {
        horizon: s.horizon.unwrap_or(d.horizon),
        dt: s.dt.unwrap_or(d.dt),
        n_paths: s.n_paths.unwrap_or(d.n_paths),
        seed: s.seed.unwrap_or(d.seed),
        x0: s.x0.unwrap_or(d.x0),
        f0: s.f0.unwrap_or(d.f0),
        memory_budget_mb: s.memory_budget_mb.unwrap_or(d.memory_budget_mb),
    };
    let scenario = validate(raw.market, fees, raw.preferences, sim)?;

    let e = raw.experiment;
    let exp_line = section_line(text, "experiment");
    let def = ExperimentSpec::default();
    let pi_grid = match (e.pi_min, e.pi_max, e.pi_step) {
        (Some(min), Some(max), Some(step)) => Some(PiGrid { min, max, step }),
        (None, None, None) => None,
        _ => {
            return Err(Error::parse(
                exp_line,
                "pi_min, pi_max and pi_step must be given together",
            ))
        }
    };
    let experiment = ExperimentSpec {
        fund_policy: policy_choice(e.fund_policy, "fund_policy", exp_line)?,
        wealth_policy: policy_choice(e.wealth_policy, "wealth_policy", exp_line)?,
        target: e.target.unwrap_or(def.target),
        horizons: e.horizons,
        pi_grid,
        wealth_rule: e.wealth_rule.unwrap_or(def.wealth_rule),
        rho_list: e.rho_list,
        mu_f_list: e.mu_f_list,
        deltas: e.deltas,
        grid_n: e.grid_n.unwrap_or(def.grid_n),
        xi_min: e.xi_min.unwrap_or(def.xi_min),
        phi_min: e.phi_min.unwrap_or(def.phi_min),
        phi_max: e.phi_max.unwrap_or(def.phi_max),
        singular_margin: e.singular_margin.unwrap_or(def.singular_margin),
        policy_bound: e.policy_bound.unwrap_or(def.policy_bound),
        bootstrap: e.bootstrap,
        trajectory_paths: e.trajectory_paths.unwrap_or(def.trajectory_paths),
    };
    if !(experiment.policy_bound > 0.0) {
        return Err(Error::domain(Origin::ExperimentCli, "policy_bound", "must be positive"));
    }
    Ok(Config { scenario, experiment })
}

pub fn parse_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}
