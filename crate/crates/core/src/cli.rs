//! Subcommand dispatch and artifact writing for the `fundlab` binary.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::closed_form::{
    attention_condition_mutual, attention_threshold_hedge, effective_risk_aversion, esr_hedge_closed,
    esr_mutual_closed, fee_indifference_alpha, WelfareBreakdown,
};
use crate::config::{parse_config, Config, PolicyChoice};
use crate::error::{Error, Origin, Result};
use crate::fund::simulate_fund;
use crate::hjb::{hjb_residual_grid, GridSpec};
use crate::market::{FeeScheme, SimConfig, ValidatedScenario};
use crate::montecarlo::{simulate_terminal, EsrTarget, PolicyPair};
use crate::optimizer::{grid_search_fund, proportion_grid, separation_experiment};
use crate::paths::{cumulative_return, generate_increments, Component, Proportion};
use crate::policies::{merton_proportion, optimal_fund_policy, FundPolicy, WealthPolicy};
use crate::wealth::{simulate_wealth_feedback, simulate_wealth_optimal};
use crate::welfare::{esr, esr_curve, esr_power_bootstrap, EsrEstimate};

#[derive(Debug, Parser)]
#[command(name = "fundlab", version, about = "Fund manager welfare simulation and verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Simulate,
    Esr,
    Thresholds,
    HjbCheck,
    Optimize,
    Separation,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate fund, fee and wealth paths and summarize terminal values.
    Simulate(RunArgs),
    /// Estimate the equivalent safe rate and compare with the closed form.
    Esr(RunArgs),
    /// Closed-form welfare, attention thresholds and indifference fee.
    Thresholds(RunArgs),
    /// Check the HJB candidate on a grid.
    HjbCheck(RunArgs),
    /// Grid search over constant fund proportions.
    Optimize(RunArgs),
    /// Grid search across correlations and private drifts.
    Separation(RunArgs),
}

impl Command {
    pub fn split(&self) -> (CommandKind, &RunArgs) {
        match self {
            Command::Simulate(a) => (CommandKind::Simulate, a),
            Command::Esr(a) => (CommandKind::Esr, a),
            Command::Thresholds(a) => (CommandKind::Thresholds, a),
            Command::HjbCheck(a) => (CommandKind::HjbCheck, a),
            Command::Optimize(a) => (CommandKind::Optimize, a),
            Command::Separation(a) => (CommandKind::Separation, a),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the number of paths.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Overrides the horizon in years.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Write per-step trajectories of the first paths (simulate).
    #[arg(long)]
    pub trajectories: bool,
    /// Write the Brownian increments of the first paths (simulate).
    #[arg(long)]
    pub dump_paths: bool,
}

impl CommandKind {
    pub fn name(&self) -> &'static str {
        match self {
            CommandKind::Simulate => "simulate",
            CommandKind::Esr => "esr",
            CommandKind::Thresholds => "thresholds",
            CommandKind::HjbCheck => "hjb-check",
            CommandKind::Optimize => "optimize",
            CommandKind::Separation => "separation",
        }
    }
}

/// Machine-readable error record printed on failure.
pub fn error_json(e: &Error) -> Value {
    let mut v = json!({
        "kind": e.kind(),
        "origin": e.origin(),
        "message": e.to_string(),
    });
    if let Some(field) = e.field() {
        v["field"] = json!(field);
    }
    v
}

/// Writes `contents` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<()> {
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, dir.join(name))?;
    Ok(())
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn apply_overrides(scenario: &ValidatedScenario, args: &RunArgs) -> Result<ValidatedScenario> {
    if args.seed.is_none() && args.paths.is_none() && args.horizon.is_none() {
        return Ok(scenario.clone());
    }
    scenario.with_sim(SimConfig {
        seed: args.seed.unwrap_or(scenario.sim.seed),
        n_paths: args.paths.unwrap_or(scenario.sim.n_paths),
        horizon: args.horizon.unwrap_or(scenario.sim.horizon),
        ..scenario.sim
    })
}

fn policies(config: &Config, scenario: &ValidatedScenario) -> Result<PolicyPair> {
    let e = &config.experiment;
    let fund = match e.fund_policy {
        PolicyChoice::Optimal => optimal_fund_policy(scenario.fees, &scenario.market, scenario.gamma())?,
        PolicyChoice::Constant(v) => FundPolicy::constant(v),
    }
    .with_bound(e.policy_bound);
    let wealth = match e.wealth_policy {
        PolicyChoice::Optimal => WealthPolicy::set_aside(merton_proportion(
            scenario.market.mu_f,
            scenario.market.sigma_f,
            scenario.gamma(),
        )?),
        PolicyChoice::Constant(v) => WealthPolicy::constant(v),
    }
    .with_bound(e.policy_bound);
    Ok(PolicyPair { fund, wealth })
}

fn closed_form(scenario: &ValidatedScenario) -> Result<WelfareBreakdown> {
    match scenario.fees {
        FeeScheme::Hedge { alpha } => esr_hedge_closed(&scenario.market, alpha, scenario.gamma()),
        FeeScheme::Mutual { phi } => esr_mutual_closed(&scenario.market, phi, scenario.gamma()),
    }
}

fn header(kind: CommandKind, config: &Config, scenario: &ValidatedScenario) -> Value {
    json!({
        "command": kind.name(),
        "scenario": scenario,
        "seed": scenario.seed(),
        "experiment": config.experiment,
    })
}

fn to_json<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::numerical(Origin::ExperimentCli, e.to_string()))
}

/// Runs one subcommand and returns the one-line summary.
pub fn run(kind: CommandKind, args: &RunArgs) -> Result<String> {
    let config = parse_config(&args.config)?;
    let scenario = apply_overrides(&config.scenario, args)?;
    fs::create_dir_all(&args.out)?;
    let mut summary = header(kind, &config, &scenario);
    let line = match kind {
        CommandKind::Simulate => run_simulate(&config, &scenario, args, &mut summary)?,
        CommandKind::Esr => run_esr(&config, &scenario, &mut summary)?,
        CommandKind::Thresholds => run_thresholds(&scenario, &mut summary)?,
        CommandKind::HjbCheck => run_hjb(&config, &scenario, &args.out, &mut summary)?,
        CommandKind::Optimize => run_optimize(&config, &scenario, &args.out, &mut summary)?,
        CommandKind::Separation => run_separation(&config, &scenario, &mut summary)?,
    };
    let mut text = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::numerical(Origin::ExperimentCli, e.to_string()))?;
    text.push('\n');
    write_atomic(&args.out, "summary.json", text.as_bytes())?;
    Ok(line)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

fn run_simulate(config: &Config, scenario: &ValidatedScenario, args: &RunArgs, summary: &mut Value) -> Result<String> {
    let pair = policies(config, scenario)?;
    let sample = simulate_terminal(scenario, &pair)?;
    let p = &sample.paths;
    summary["policies"] = json!({"fund": pair.fund.descriptor(), "wealth": pair.wealth.descriptor()});
    summary["checksum"] = json!(format!("{:016x}", sample.checksum));
    summary["terminal"] = json!({
        "mean_fund": mean(p.iter().map(|t| t.fund)),
        "mean_fees": mean(p.iter().map(|t| t.fees)),
        "mean_wealth": mean(p.iter().map(|t| t.wealth)),
        "min_wealth": p.iter().map(|t| t.wealth).fold(f64::INFINITY, f64::min),
    });
    let k = config.experiment.trajectory_paths.min(scenario.n_paths());
    if (args.trajectories || args.dump_paths) && k > 0 {
        let small = scenario.with_sim(SimConfig {
            n_paths: k,
            ..scenario.sim
        })?;
        let batch = generate_increments(&small)?;
        if args.dump_paths {
            let mut csv = String::from("path,step,dw_x,dw_f\n");
            for path in 0..k {
                for (step, (x, f)) in batch.dw_x(path).iter().zip(batch.dw_f(path)).enumerate() {
                    let _ = writeln!(csv, "{path},{step},{},{}", fmt_f64(*x), fmt_f64(*f));
                }
            }
            write_atomic(&args.out, "paths.csv", csv.as_bytes())?;
        }
        if args.trajectories {
            let pi = pair.fund.constant_value().ok_or_else(|| {
                Error::domain(Origin::ExperimentCli, "fund_policy", "trajectories need a constant fund policy")
            })?;
            let m = &small.market;
            let r = cumulative_return(&Proportion::Constant(pi), m.mu_x, m.sigma_x, &batch, Component::Fund)?;
            let fund = simulate_fund(&r, &small)?;
            let wealth = if pair.wealth.set_aside_merton().is_some() {
                simulate_wealth_optimal(&fund, &small, &batch)?
            } else {
                simulate_wealth_feedback(&pair.wealth, &fund, &small, &batch)?
            };
            let mut csv = String::from("path,t,x,x_star,fees,wealth\n");
            for path in 0..k {
                let marks = fund.x_star(path);
                for step in 0..fund.n_nodes() {
                    let mark = marks.map(|m| fmt_f64(m[step])).unwrap_or_default();
                    let _ = writeln!(
                        csv,
                        "{path},{},{},{mark},{},{}",
                        fmt_f64(fund.time(step)),
                        fmt_f64(fund.x(path)[step]),
                        fmt_f64(fund.fees(path)[step]),
                        fmt_f64(wealth.wealth(path)[step]),
                    );
                }
            }
            write_atomic(&args.out, "trajectories.csv", csv.as_bytes())?;
        }
    }
    Ok(format!(
        "simulate: {} paths over {} years, mean terminal wealth {:.6}",
        scenario.n_paths(),
        scenario.horizon(),
        summary["terminal"]["mean_wealth"].as_f64().unwrap_or(f64::NAN)
    ))
}

fn estimate_record(e: &EsrEstimate, closed: f64) -> Value {
    json!({
        "T": e.horizon,
        "n_paths": e.n_paths,
        "esr": e.value,
        "stderr": e.std_error,
        "utility": e.utility,
        "closed_form": closed,
        "abs_gap": (e.value - closed).abs(),
    })
}

fn run_esr(config: &Config, scenario: &ValidatedScenario, summary: &mut Value) -> Result<String> {
    let pair = policies(config, scenario)?;
    let target = config.experiment.target;
    let cf = closed_form(scenario)?;
    let closed = match target {
        EsrTarget::Wealth => cf.value,
        EsrTarget::Fund => f64::NAN,
    };
    let sample = simulate_terminal(scenario, &pair)?;
    let values = sample.target(target);
    let gamma = scenario.gamma();
    let estimate = match config.experiment.bootstrap {
        Some(n) if gamma != 1.0 => esr_power_bootstrap(&values, scenario.horizon(), gamma, n, scenario.seed())?,
        _ => esr(&values, scenario.horizon(), gamma)?,
    };
    summary["policy"] = json!({"fund": pair.fund.descriptor(), "wealth": pair.wealth.descriptor()});
    summary["scheme"] = json!(scenario.fees.name());
    summary["gamma"] = json!(gamma);
    summary["target"] = to_json(&target)?;
    summary["closed_form_breakdown"] = to_json(&cf)?;
    summary["checksum"] = json!(format!("{:016x}", sample.checksum));
    let record = estimate_record(&estimate, closed);
    for (k, v) in record.as_object().into_iter().flatten() {
        summary[k] = v.clone();
    }
    if let Some(horizons) = &config.experiment.horizons {
        let curve = esr_curve(scenario, &pair, horizons, target)?;
        summary["curve"] = json!(curve.iter().map(|e| estimate_record(e, closed)).collect::<Vec<_>>());
    }
    Ok(format!(
        "esr: {:.6} (stderr {:.6}) vs closed form {:.6}",
        estimate.value, estimate.std_error, closed
    ))
}

fn run_thresholds(scenario: &ValidatedScenario, summary: &mut Value) -> Result<String> {
    let m = &scenario.market;
    let gamma = scenario.gamma();
    let cf = closed_form(scenario)?;
    let ratio = scenario.nu_x / scenario.nu_f;
    let indifference = fee_indifference_alpha(m, gamma).ok();
    let fund_policy = optimal_fund_policy(scenario.fees, m, gamma)?;
    let mut rec = json!({
        "nu_x": scenario.nu_x,
        "nu_f": scenario.nu_f,
        "sharpe_ratio_ratio": ratio,
        "welfare": cf,
        "fee_indifference_alpha": indifference,
        "optimal_fund_proportion": fund_policy.constant_value(),
        "private_merton_proportion": merton_proportion(m.mu_f, m.sigma_f, gamma)?,
    });
    let line = match scenario.fees {
        FeeScheme::Hedge { alpha } => {
            let threshold = attention_threshold_hedge(alpha, gamma)?;
            rec["effective_risk_aversion"] = json!(effective_risk_aversion(alpha, gamma)?);
            rec["attention_threshold"] = json!(threshold);
            rec["fund_focus"] = json!(ratio > threshold);
            format!("thresholds: hedge attention threshold {threshold:.10}, ratio {ratio:.6}")
        }
        FeeScheme::Mutual { phi } => {
            let a = attention_condition_mutual(m, phi, gamma)?;
            rec["attention_margin"] = json!(a.margin);
            rec["fund_focus"] = json!(a.fund_focus);
            format!("thresholds: mutual attention margin {:.10}", a.margin)
        }
    };
    summary["thresholds"] = rec;
    Ok(line)
}

fn run_hjb(config: &Config, scenario: &ValidatedScenario, out: &Path, summary: &mut Value) -> Result<String> {
    let FeeScheme::Hedge { alpha } = scenario.fees else {
        return Err(Error::domain(Origin::HjbChecker, "fees", "the HJB check needs a performance fee alpha"));
    };
    let e = &config.experiment;
    let grid = GridSpec {
        n_xi: e.grid_n,
        n_phi: e.grid_n,
        xi_min: e.xi_min,
        phi_min: e.phi_min,
        phi_max: e.phi_max,
        margin: e.singular_margin,
    };
    let deltas = e.deltas.clone().unwrap_or_else(|| vec![0.0, 0.4, 1.0 - alpha]);
    let mut reports = Vec::new();
    let mut csv = String::from("delta,xi,phi,pi_x,pi_f,residual\n");
    let mut worst: f64 = 0.0;
    let mut worst_boundary: f64 = 0.0;
    for &delta in &deltas {
        let r = hjb_residual_grid(delta, alpha, &scenario.market, &grid)?;
        for n in &r.nodes {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                fmt_f64(delta),
                fmt_f64(n.xi),
                fmt_f64(n.phi),
                fmt_f64(n.pi_x),
                fmt_f64(n.pi_f),
                fmt_f64(n.residual)
            );
        }
        worst = worst.max(r.max_abs_residual);
        worst_boundary = worst_boundary.max(r.max_abs_boundary_residual);
        reports.push(json!({
            "delta": r.delta,
            "b": r.b,
            "beta": r.beta,
            "n_nodes": r.nodes.len(),
            "excluded_phi": r.excluded_phi,
            "max_abs_residual": r.max_abs_residual,
            "max_abs_boundary_residual": r.max_abs_boundary_residual,
            "max_policy_deviation": r.max_policy_deviation,
        }));
    }
    write_atomic(out, "residuals.csv", csv.as_bytes())?;
    summary["grid"] = to_json(&grid)?;
    summary["reports"] = json!(reports);
    Ok(format!(
        "hjb-check: max |residual| {worst:.3e}, max |boundary residual| {worst_boundary:.3e}"
    ))
}

fn run_optimize(config: &Config, scenario: &ValidatedScenario, out: &Path, summary: &mut Value) -> Result<String> {
    let g = config.experiment.require_pi_grid()?;
    let grid = proportion_grid(g.min, g.max, g.step)?;
    let r = grid_search_fund(scenario, &grid, config.experiment.wealth_rule)?;
    let mut csv = String::from("pi_x,esr,stderr\n");
    for (pi, e) in r.grid.iter().zip(&r.estimates) {
        let _ = writeln!(csv, "{},{},{}", fmt_f64(*pi), fmt_f64(e.value), fmt_f64(e.std_error));
    }
    write_atomic(out, "grid.csv", csv.as_bytes())?;
    summary["result"] = json!({
        "argmax": r.argmax,
        "argmax_index": r.argmax_index,
        "prediction": r.prediction,
        "gap": r.gap,
        "wealth_rule": r.wealth_rule,
        "horizon": r.horizon,
        "n_paths": r.n_paths,
        "checksum": format!("{:016x}", r.checksum),
        "fund_noise_checksum": format!("{:016x}", r.fund_noise_checksum),
        "profile_spread": r.profile_spread,
        "pooled_std_error": r.pooled_std_error,
        "flat": r.flat,
    });
    Ok(format!(
        "optimize: argmax {} vs prediction {:.6} at T = {}",
        r.argmax, r.prediction, r.horizon
    ))
}

fn run_separation(config: &Config, scenario: &ValidatedScenario, summary: &mut Value) -> Result<String> {
    let e = &config.experiment;
    let g = e.require_pi_grid()?;
    let grid = proportion_grid(g.min, g.max, g.step)?;
    let rho_list = e
        .rho_list
        .clone()
        .ok_or_else(|| Error::parse(None, "[experiment] needs rho_list"))?;
    let mu_f_list = e
        .mu_f_list
        .clone()
        .ok_or_else(|| Error::parse(None, "[experiment] needs mu_f_list"))?;
    let r = separation_experiment(scenario, &grid, &rho_list, &mu_f_list, e.wealth_rule)?;
    summary["result"] = to_json(&r)?;
    Ok(format!(
        "separation: identical argmax {}, within one step of prediction {}",
        r.identical_argmax, r.near_prediction
    ))
}
