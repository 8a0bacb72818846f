//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use fundlab::closed_form::{attention_threshold_hedge, esr_hedge_closed, esr_mutual_closed, Branch};
use fundlab::fund::{simulate_fund, simulate_hedge_fund, simulate_hedge_fund_euler};
use fundlab::hjb::{hjb_residual_grid, GridSpec};
use fundlab::market::{validate, FeeScheme, MarketParams, PreferenceParams, SimConfig, ValidatedScenario};
use fundlab::montecarlo::{simulate_terminal, EsrTarget, PolicyPair, TerminalSample};
use fundlab::optimizer::{grid_search_fund, proportion_grid, separation_experiment, WealthRule};
use fundlab::paths::{cumulative_return, generate_increments, running_max_in_place, running_min_in_place, Component, PathGenerator, Proportion};
use fundlab::policies::{merton_proportion, FundPolicy, WealthPolicy};
use fundlab::wealth::simulate_wealth_feedback;
use fundlab::welfare::{esr_log, esr_power};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn market() -> MarketParams {
    MarketParams {
        mu_x: 0.08,
        sigma_x: 0.16,
        mu_f: 0.04,
        sigma_f: 0.10,
        rho: 0.0,
    }
}

fn sim(horizon: f64, dt: f64, n_paths: usize, seed: u64) -> SimConfig {
    SimConfig {
        horizon,
        dt,
        n_paths,
        seed,
        ..SimConfig::default()
    }
}

fn scenario(fees: FeeScheme, gamma: f64, sim: SimConfig) -> ValidatedScenario {
    validate(market(), fees, PreferenceParams { gamma }, sim).expect("valid scenario")
}

fn full_sim(seed: u64) -> SimConfig {
    sim(200.0, 0.01, 10_000, seed)
}

fn welfare_criterion(fees: FeeScheme, closed: f64, seed: u64) -> (Verdict, TerminalSample) {
    let s = scenario(fees, 1.0, full_sim(seed));
    let pair = PolicyPair::optimal(&s).unwrap();
    let sample = simulate_terminal(&s, &pair).unwrap();
    let e = esr_log(&sample.target(EsrTarget::Wealth), s.horizon()).unwrap();
    let tol = f64::max(0.01, 3.0 * e.std_error);
    let gap = (e.value - closed).abs();
    (
        verdict(
            gap <= tol,
            format!(
                "estimate {:.5} (se {:.5}) vs closed form {closed:.5}, |gap| {gap:.5} <= {tol:.5}",
                e.value, e.std_error
            ),
        ),
        sample,
    )
}

fn criterion_1() -> (Verdict, TerminalSample) {
    let closed = esr_hedge_closed(&market(), 0.2, 1.0).unwrap();
    assert!((closed.value - 0.1).abs() < 1e-15);
    welfare_criterion(FeeScheme::Hedge { alpha: 0.2 }, closed.value, 1)
}

fn criterion_2() -> Verdict {
    let closed = esr_mutual_closed(&market(), 0.01, 1.0).unwrap();
    assert!((closed.value - 0.115).abs() < 1e-15);
    welfare_criterion(FeeScheme::Mutual { phi: 0.01 }, closed.value, 2).0
}

fn criterion_3() -> Verdict {
    let s = scenario(FeeScheme::Hedge { alpha: 0.2 }, 1.0, sim(1.0, 1e-4, 100, 3));
    let fine = generate_increments(&s).unwrap();
    let pi = 3.125;
    let max_error = |factor: usize| {
        let b = fine.coarsen(factor).unwrap();
        let r = cumulative_return(&Proportion::Constant(pi), 0.08, 0.16, &b, Component::Fund).unwrap();
        let exact = simulate_hedge_fund(&r, 0.2, 1.0).unwrap();
        let euler = simulate_hedge_fund_euler(pi, &s, &b).unwrap();
        (0..b.n_paths)
            .map(|p| ((euler.terminal_x(p) - exact.terminal_x(p)) / exact.terminal_x(p)).abs())
            .fold(0.0, f64::max)
    };
    let fine_err = max_error(1);
    let coarse_err = max_error(4);
    verdict(
        fine_err <= 0.02 && fine_err < coarse_err,
        format!("max relative error {fine_err:.2e} at dt=1e-4, {coarse_err:.2e} at dt=4e-4"),
    )
}

fn trapezoid(x: &[f64], dt: f64) -> f64 {
    x.windows(2).map(|w| 0.5 * dt * (w[0] + w[1])).sum()
}

/// Returns the verdict and whether every hedge trajectory's mark equals the
/// running maximum of its values.
fn criterion_4() -> (Verdict, bool) {
    let n_paths = 200;
    let mut worst: f64 = 0.0;
    let mut marks_match = true;
    for fees in [FeeScheme::Hedge { alpha: 0.2 }, FeeScheme::Mutual { phi: 0.01 }] {
        let s = scenario(fees, 1.0, sim(200.0, 0.01, n_paths, 4));
        let batch = generate_increments(&s).unwrap();
        let r = cumulative_return(&Proportion::Constant(3.125), 0.08, 0.16, &batch, Component::Fund).unwrap();
        let fund = simulate_fund(&r, &s).unwrap();
        let wealth = simulate_wealth_feedback(&WealthPolicy::constant(0.0), &fund, &s, &batch).unwrap();
        for p in 0..n_paths {
            let x = fund.x(p);
            let expected = match fees {
                FeeScheme::Hedge { alpha } => {
                    let mut running = x.to_vec();
                    running_max_in_place(&mut running);
                    if running.as_slice() != fund.x_star(p).unwrap() {
                        marks_match = false;
                    }
                    1.0 + alpha / (1.0 - alpha) * (running[running.len() - 1] - 1.0)
                }
                FeeScheme::Mutual { phi } => 1.0 + phi * trapezoid(x, s.dt()),
            };
            let got = wealth.terminal_wealth(p);
            worst = worst.max(((got - expected) / expected).abs());
        }
    }
    (
        verdict(worst <= 1e-12, format!("max relative deviation {worst:.2e} over 2 x {n_paths} paths, T=200")),
        marks_match,
    )
}

fn criterion_5() -> Verdict {
    let alpha = 0.2;
    let mut worst: f64 = 0.0;
    let mut worst_boundary: f64 = 0.0;
    let mut worst_policy: f64 = 0.0;
    let mut policies: Vec<Vec<(f64, f64)>> = Vec::new();
    for delta in [0.0, 0.4, 1.0 - alpha] {
        let r = hjb_residual_grid(delta, alpha, &market(), &GridSpec::default()).unwrap();
        worst = worst.max(r.max_abs_residual);
        worst_boundary = worst_boundary.max(r.max_abs_boundary_residual);
        worst_policy = worst_policy.max(r.max_policy_deviation);
        policies.push(r.nodes.iter().map(|n| (n.pi_x, n.pi_f)).collect());
    }
    let spread = policies[1..]
        .iter()
        .flat_map(|p| p.iter().zip(&policies[0]))
        .fold(0.0f64, |m, (a, b)| m.max((a.0 - b.0).abs()).max((a.1 - b.1).abs()));
    verdict(
        worst <= 1e-10 && worst_boundary <= 1e-12 && worst_policy <= 1e-12 && spread <= 1e-12,
        format!(
            "max |HJB| {worst:.1e}, max |BC| {worst_boundary:.1e}, policy deviation {worst_policy:.1e}, delta spread {spread:.1e}"
        ),
    )
}

fn criterion_6() -> Verdict {
    let t = attention_threshold_hedge(0.2, 1.0).unwrap();
    let mut consistent = true;
    for i in 0..20 {
        let alpha = 0.025 + 0.045 * i as f64;
        for (mu_x, gamma) in [(0.08, 1.0), (0.06, 1.0), (0.1, 0.5), (0.045, 0.8)] {
            let m = MarketParams { mu_x, ..market() };
            let w = esr_hedge_closed(&m, alpha, gamma).unwrap();
            let th = attention_threshold_hedge(alpha, gamma).unwrap();
            let ratio = (mu_x / 0.16) / 0.4;
            if (w.active_branch == Branch::Fund) != (ratio > th) {
                consistent = false;
            }
        }
    }
    verdict(
        (t - 1.1180).abs() <= 5e-4 && consistent,
        format!("threshold {t:.6}, branch switch consistent on 20-point alpha grid: {consistent}"),
    )
}

fn criterion_7() -> Verdict {
    let s = scenario(FeeScheme::Hedge { alpha: 0.2 }, 1.0, full_sim(7));
    let grid = proportion_grid(0.0, 6.0, 0.25).unwrap();
    let r = separation_experiment(&s, &grid, &[-0.5, 0.0, 0.5, 0.9], &[0.0, 0.02, 0.04], WealthRule::Optimal).unwrap();
    let argmaxes: Vec<String> = r.cells.iter().map(|c| format!("{}", c.argmax)).collect();
    verdict(
        r.identical_argmax && r.near_prediction && r.common_fund_noise,
        format!(
            "argmax per cell [{}], prediction {}, common fund noise {}",
            argmaxes.join(", "),
            r.prediction,
            r.common_fund_noise
        ),
    )
}

fn criterion_8(shared: &TerminalSample) -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    let pi = merton_proportion(0.08, 0.16, 1.0).unwrap();
    let target = 0.5 * 0.5 / 2.0;
    for (fees, seed) in [(FeeScheme::Hedge { alpha: 0.0 }, 81), (FeeScheme::Mutual { phi: 0.0 }, 82)] {
        let s = scenario(fees, 1.0, full_sim(seed));
        let pair = PolicyPair {
            fund: FundPolicy::constant(pi),
            wealth: WealthPolicy::constant(0.0),
        };
        let sample = simulate_terminal(&s, &pair).unwrap();
        let e = esr_log(&sample.target(EsrTarget::Fund), s.horizon()).unwrap();
        let tol = f64::max(0.01, 3.0 * e.std_error);
        pass &= (e.value - target).abs() <= tol;
        parts.push(format!("{} {:.5} (se {:.5})", fees.name(), e.value, e.std_error));
    }
    let w = shared.target(EsrTarget::Wealth);
    let l = esr_log(&w, 200.0).unwrap().value;
    let p = esr_power(&w, 200.0, 0.999).unwrap().value;
    pass &= (l - p).abs() <= 1e-3;
    verdict(
        pass,
        format!("no-fee fund ESR {} vs {target}; |power(0.999) - log| = {:.2e}", parts.join(", "), (l - p).abs()),
    )
}

fn criterion_9(marks_match: bool) -> Verdict {
    let gen = PathGenerator::with_grid(9, 0.3, 0.01, 100);
    let (mut dx, mut df) = (vec![0.0; 100], vec![0.0; 100]);
    let mut lemma = true;
    for p in 0..1000 {
        gen.fill(p, &mut dx, &mut df);
        let cum = |d: &[f64]| {
            let mut out = vec![0.0];
            for v in d {
                out.push(out[out.len() - 1] + v);
            }
            out
        };
        let (x, y) = (cum(&dx), cum(&df));
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let (mut xm, mut ym, mut sm) = (x.clone(), y.clone(), sum.clone());
        running_max_in_place(&mut xm);
        running_min_in_place(&mut ym);
        running_max_in_place(&mut sm);
        lemma &= (0..x.len()).all(|k| xm[k] + ym[k] <= sm[k] + 1e-12);
    }

    let s = scenario(FeeScheme::Hedge { alpha: 0.2 }, 1.0, sim(20.0, 0.01, 2000, 99));
    let pair = PolicyPair::optimal(&s).unwrap();
    let grid = proportion_grid(2.0, 4.0, 0.5).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let sample = simulate_terminal(&s, &pair).unwrap();
            let bits: Vec<u64> = sample
                .paths
                .iter()
                .flat_map(|t| [t.fund.to_bits(), t.mark.to_bits(), t.fees.to_bits(), t.wealth.to_bits()])
                .collect();
            let g = grid_search_fund(&s, &grid, WealthRule::Optimal).unwrap();
            (sample.checksum, bits, serde_json::to_string(&g).unwrap())
        })
    };
    let one = run(1);
    let deterministic = [2, 8].iter().all(|&t| run(t) == one);
    verdict(
        lemma && marks_match && deterministic,
        format!(
            "running max/min inequality on 1000 paths: {lemma}; mark equals running max: {marks_match}; identical bytes under 1/2/8 threads: {deterministic}"
        ),
    )
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: u32, name: &str, start: Instant, v: Verdict| {
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {id} [{name}]: {} - {} ({:.1}s)",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    };
    let t = Instant::now();
    let (v1, shared) = criterion_1();
    report(1, "hedge welfare", t, v1);
    let t = Instant::now();
    report(2, "mutual welfare", t, criterion_2());
    let t = Instant::now();
    report(3, "euler vs transform", t, criterion_3());
    let t = Instant::now();
    let (v4, marks_match) = criterion_4();
    report(4, "accounting identity", t, v4);
    let t = Instant::now();
    report(5, "hjb plug-in", t, criterion_5());
    let t = Instant::now();
    report(6, "attention threshold", t, criterion_6());
    let t = Instant::now();
    report(7, "portfolio separation", t, criterion_7());
    let t = Instant::now();
    report(8, "merton sanity", t, criterion_8(&shared));
    let t = Instant::now();
    report(9, "property suites", t, criterion_9(marks_match));
    if failed == 0 {
        println!("acceptance: all 9 criteria PASS");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria FAIL");
        ExitCode::FAILURE
    }
}
