//! C ABI over `fundlab`. Every function returns an [`FlStatus`]; on failure
//! the message is available from [`fl_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fundlab::closed_form::{
    attention_threshold_hedge, effective_risk_aversion, esr_hedge_closed, esr_mutual_closed,
    fee_indifference_alpha, Branch, WelfareBreakdown,
};
use fundlab::hjb::{hjb_residual_grid, GridSpec};
use fundlab::market::{validate, FeeScheme, MarketParams, PreferenceParams, SimConfig, ValidatedScenario};
use fundlab::montecarlo::{EsrTarget, PolicyPair};
use fundlab::policies::{merton_proportion, optimal_fund_policy};
use fundlab::welfare::estimate_esr;
use fundlab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlStatus {
    Ok = 0,
    Domain = 1,
    Resource = 2,
    Stability = 3,
    Evaluation = 4,
    Numerical = 5,
    Parse = 6,
    Io = 7,
    NullPointer = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlFeeKind {
    Hedge = 0,
    Mutual = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlBranch {
    Fund = 0,
    Private = 1,
    Tie = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlTarget {
    Wealth = 0,
    Fund = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlMarket {
    pub mu_x: f64,
    pub sigma_x: f64,
    pub mu_f: f64,
    pub sigma_f: f64,
    pub rho: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlSimConfig {
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub x0: f64,
    pub f0: f64,
    pub memory_budget_mb: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlWelfare {
    pub fund_branch: f64,
    pub private_branch: f64,
    pub value: f64,
    pub active_branch: FlBranch,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlEsr {
    pub value: f64,
    pub std_error: f64,
    pub horizon: f64,
    pub n_paths: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlHjbSummary {
    pub beta: f64,
    pub max_abs_residual: f64,
    pub max_abs_boundary_residual: f64,
    pub max_policy_deviation: f64,
    pub n_nodes: usize,
}

/// Opaque validated scenario.
pub struct FlScenario {
    inner: ValidatedScenario,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FlStatus {
    match e {
        Error::Domain { .. } => FlStatus::Domain,
        Error::Resource(_) => FlStatus::Resource,
        Error::Stability { .. } => FlStatus::Stability,
        Error::Evaluation(_) => FlStatus::Evaluation,
        Error::Numerical { .. } => FlStatus::Numerical,
        Error::Parse { .. } => FlStatus::Parse,
        Error::Io(_) => FlStatus::Io,
    }
}

fn guard<F: FnOnce() -> Result<(), FlStatus>>(f: F) -> FlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FlStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside fundlab".to_string());
            FlStatus::Panic
        }
    }
}

fn lift<T>(r: fundlab::Result<T>) -> Result<T, FlStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, FlStatus> {
    if p.is_null() {
        set_error(format!("null pointer passed as `{name}`"));
        Err(FlStatus::NullPointer)
    } else {
        Ok(&*p)
    }
}

unsafe fn write<T>(p: *mut T, v: T, name: &str) -> Result<(), FlStatus> {
    if p.is_null() {
        set_error(format!("null pointer passed as `{name}`"));
        Err(FlStatus::NullPointer)
    } else {
        p.write(v);
        Ok(())
    }
}

fn market_of(m: &FlMarket) -> MarketParams {
    MarketParams {
        mu_x: m.mu_x,
        sigma_x: m.sigma_x,
        mu_f: m.mu_f,
        sigma_f: m.sigma_f,
        rho: m.rho,
    }
}

fn welfare_of(w: WelfareBreakdown) -> FlWelfare {
    FlWelfare {
        fund_branch: w.fund_branch,
        private_branch: w.private_branch,
        value: w.value,
        active_branch: match w.active_branch {
            Branch::Fund => FlBranch::Fund,
            Branch::Private => FlBranch::Private,
            Branch::Tie => FlBranch::Tie,
        },
    }
}

/// Simulation settings with the library defaults.
#[no_mangle]
pub extern "C" fn fl_sim_config_default() -> FlSimConfig {
    let d = SimConfig::default();
    FlSimConfig {
        horizon: d.horizon,
        dt: d.dt,
        n_paths: d.n_paths,
        seed: d.seed,
        x0: d.x0,
        f0: d.f0,
        memory_budget_mb: d.memory_budget_mb,
    }
}

/// Validates the inputs and stores a new scenario handle in `out`. The
/// handle must be released with [`fl_scenario_free`].
///
/// # Safety
/// `market` and `sim` must point to valid structs and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn fl_scenario_new(
    market: *const FlMarket,
    fee_kind: FlFeeKind,
    fee_rate: f64,
    gamma: f64,
    sim: *const FlSimConfig,
    out: *mut *mut FlScenario,
) -> FlStatus {
    guard(|| {
        let m = deref(market, "market")?;
        let s = deref(sim, "sim")?;
        if out.is_null() {
            set_error("null pointer passed as `out`".to_string());
            return Err(FlStatus::NullPointer);
        }
        let fees = match fee_kind {
            FlFeeKind::Hedge => FeeScheme::Hedge { alpha: fee_rate },
            FlFeeKind::Mutual => FeeScheme::Mutual { phi: fee_rate },
        };
        let sim = SimConfig {
            horizon: s.horizon,
            dt: s.dt,
            n_paths: s.n_paths,
            seed: s.seed,
            x0: s.x0,
            f0: s.f0,
            memory_budget_mb: s.memory_budget_mb,
        };
        let inner = lift(validate(market_of(m), fees, PreferenceParams { gamma }, sim))?;
        write(out, Box::into_raw(Box::new(FlScenario { inner })), "out")
    })
}

/// Releases a scenario handle. Null is ignored.
///
/// # Safety
/// `scenario` must come from [`fl_scenario_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fl_scenario_free(scenario: *mut FlScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Number of time steps and whether the risk aversion lies in `(0, 1]`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fl_scenario_info(
    scenario: *const FlScenario,
    n_steps: *mut usize,
    proven_regime: *mut bool,
) -> FlStatus {
    guard(|| {
        let s = &deref(scenario, "scenario")?.inner;
        write(n_steps, s.n_steps, "n_steps")?;
        write(proven_regime, s.proven_regime, "proven_regime")
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_effective_risk_aversion(alpha: f64, gamma: f64, out: *mut f64) -> FlStatus {
    guard(|| write(out, lift(effective_risk_aversion(alpha, gamma))?, "out"))
}

/// Closed-form optimal equivalent safe rate of the scenario's fee scheme.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fl_esr_closed(scenario: *const FlScenario, out: *mut FlWelfare) -> FlStatus {
    guard(|| {
        let s = &deref(scenario, "scenario")?.inner;
        let w = match s.fees {
            FeeScheme::Hedge { alpha } => esr_hedge_closed(&s.market, alpha, s.gamma()),
            FeeScheme::Mutual { phi } => esr_mutual_closed(&s.market, phi, s.gamma()),
        };
        write(out, welfare_of(lift(w)?), "out")
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_attention_threshold_hedge(alpha: f64, gamma: f64, out: *mut f64) -> FlStatus {
    guard(|| write(out, lift(attention_threshold_hedge(alpha, gamma))?, "out"))
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fl_fee_indifference_alpha(market: *const FlMarket, gamma: f64, out: *mut f64) -> FlStatus {
    guard(|| {
        let m = market_of(deref(market, "market")?);
        write(out, lift(fee_indifference_alpha(&m, gamma))?, "out")
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_merton_proportion(mu: f64, sigma: f64, gamma: f64, out: *mut f64) -> FlStatus {
    guard(|| write(out, lift(merton_proportion(mu, sigma, gamma))?, "out"))
}

/// Optimal constant fund proportion and the private Merton proportion
/// applied to wealth net of earned fees.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fl_optimal_policies(
    scenario: *const FlScenario,
    fund_proportion: *mut f64,
    private_merton: *mut f64,
) -> FlStatus {
    guard(|| {
        let s = &deref(scenario, "scenario")?.inner;
        let fund = lift(optimal_fund_policy(s.fees, &s.market, s.gamma()))?;
        let merton = lift(merton_proportion(s.market.mu_f, s.market.sigma_f, s.gamma()))?;
        write(fund_proportion, fund.constant_value().unwrap_or(f64::NAN), "fund_proportion")?;
        write(private_merton, merton, "private_merton")
    })
}

/// Monte Carlo equivalent safe rate under the optimal policies.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fl_estimate_esr(scenario: *const FlScenario, target: FlTarget, out: *mut FlEsr) -> FlStatus {
    guard(|| {
        let s = &deref(scenario, "scenario")?.inner;
        let pair = lift(PolicyPair::optimal(s))?;
        let target = match target {
            FlTarget::Wealth => EsrTarget::Wealth,
            FlTarget::Fund => EsrTarget::Fund,
        };
        let e = lift(estimate_esr(s, &pair, target))?;
        write(
            out,
            FlEsr {
                value: e.value,
                std_error: e.std_error,
                horizon: e.horizon,
                n_paths: e.n_paths,
            },
            "out",
        )
    })
}

/// HJB plug-in check of the log-utility candidate on the default grid.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fl_hjb_check(
    delta: f64,
    alpha: f64,
    market: *const FlMarket,
    out: *mut FlHjbSummary,
) -> FlStatus {
    guard(|| {
        let m = market_of(deref(market, "market")?);
        let r = lift(hjb_residual_grid(delta, alpha, &m, &GridSpec::default()))?;
        write(
            out,
            FlHjbSummary {
                beta: r.beta,
                max_abs_residual: r.max_abs_residual,
                max_abs_boundary_residual: r.max_abs_boundary_residual,
                max_policy_deviation: r.max_policy_deviation,
                n_nodes: r.nodes.len(),
            },
            "out",
        )
    })
}

/// Message of the last failure on this thread, or null. Release it with
/// [`fl_string_free`].
#[no_mangle]
pub extern "C" fn fl_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        Some(s) => s.clone().into_raw(),
        None => ptr::null_mut(),
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
