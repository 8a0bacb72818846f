//! Fund value, high-water mark and cumulative fees.
//!
//! The exact route maps a cumulative-return grid through the closed-form
//! pathwise solution of the fee-adjusted dynamics. The Euler route
//! integrates the same dynamics step by step and exists to cross-check it.

use rayon::prelude::*;

use crate::error::{Error, Origin, Result};
use crate::market::{FeeScheme, ValidatedScenario};
use crate::paths::{PathBatch, ReturnGrid};

/// Fees earned per dollar of net profit: `alpha / (1 - alpha)`.
#[inline]
pub fn fee_factor(alpha: f64) -> f64 {
    alpha / (1.0 - alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FundTrajectory {
    pub scheme: FeeScheme,
    pub dt: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub x0: f64,
    x: Vec<f64>,
    x_star: Option<Vec<f64>>,
    c: Vec<f64>,
}

impl FundTrajectory {
    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    fn slice<'a>(&self, v: &'a [f64], path: usize) -> &'a [f64] {
        let n = self.n_nodes();
        &v[path * n..(path + 1) * n]
    }

    pub fn x(&self, path: usize) -> &[f64] {
        self.slice(&self.x, path)
    }

    /// High-water mark row; `None` for the mutual scheme.
    pub fn x_star(&self, path: usize) -> Option<&[f64]> {
        self.x_star.as_deref().map(|v| self.slice(v, path))
    }

    pub fn fees(&self, path: usize) -> &[f64] {
        self.slice(&self.c, path)
    }

    pub fn terminal_x(&self, path: usize) -> f64 {
        self.x(path)[self.n_steps]
    }

    pub fn terminal_fees(&self, path: usize) -> f64 {
        self.fees(path)[self.n_steps]
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

/// Exact hedge-fund transform of one path: `X = x0 e^{R - a R*}`,
/// `X* = x0 e^{R* - a R*}`, `C = a/(1-a) (X* - x0)` with `R*` the running
/// maximum of `R`. Written so that `X == X*` bitwise wherever `R == R*`.
pub fn hedge_transform_row(
    r: &[f64],
    alpha: f64,
    x0: f64,
    x: &mut [f64],
    x_star: &mut [f64],
    c: &mut [f64],
) {
    let k_fee = fee_factor(alpha);
    let mut r_star = f64::NEG_INFINITY;
    for k in 0..r.len() {
        if r[k] > r_star {
            r_star = r[k];
        }
        let drag = alpha * r_star;
        x[k] = x0 * (r[k] - drag).exp();
        x_star[k] = x0 * (r_star - drag).exp();
        c[k] = k_fee * (x_star[k] - x0);
    }
}

/// Terminal `(X_T, X*_T, C_T)` of the hedge transform given `R_T` and `R*_T`.
#[inline]
pub fn hedge_terminal(r_t: f64, r_star_t: f64, alpha: f64, x0: f64) -> (f64, f64, f64) {
    let drag = alpha * r_star_t;
    let x = x0 * (r_t - drag).exp();
    let xs = x0 * (r_star_t - drag).exp();
    (x, xs, fee_factor(alpha) * (xs - x0))
}

/// Exact mutual-fund transform of one path: `X = x0 e^{R_t - phi t}`, fees
/// `C_t = phi * int_0^t X ds` by the cumulative trapezoid rule.
pub fn mutual_transform_row(r: &[f64], phi: f64, x0: f64, dt: f64, x: &mut [f64], c: &mut [f64]) {
    let half = 0.5 * phi * dt;
    let mut acc = 0.0;
    for k in 0..r.len() {
        x[k] = x0 * (r[k] - phi * (k as f64 * dt)).exp();
        if k > 0 {
            acc += half * (x[k - 1] + x[k]);
        }
        c[k] = acc;
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::domain(
            Origin::FundDynamics,
            "alpha",
            format!("must lie in [0, 1), got {alpha}"),
        ))
    }
}

fn check_x0(x0: f64) -> Result<()> {
    if x0 > 0.0 && x0.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(Origin::FundDynamics, "x0", "must be positive"))
    }
}

/// Hedge fund trajectories from cumulative fund returns (exact route).
pub fn simulate_hedge_fund(r: &ReturnGrid, alpha: f64, x0: f64) -> Result<FundTrajectory> {
    check_alpha(alpha)?;
    check_x0(x0)?;
    let n = r.n_nodes();
    let len = r.n_paths * n;
    let mut x = vec![0.0; len];
    let mut x_star = vec![0.0; len];
    let mut c = vec![0.0; len];
    x.par_chunks_mut(n)
        .zip(x_star.par_chunks_mut(n))
        .zip(c.par_chunks_mut(n))
        .enumerate()
        .for_each(|(p, ((x, xs), c))| hedge_transform_row(r.row(p), alpha, x0, x, xs, c));
    Ok(FundTrajectory {
        scheme: FeeScheme::Hedge { alpha },
        dt: r.dt,
        n_paths: r.n_paths,
        n_steps: r.n_steps,
        x0,
        x,
        x_star: Some(x_star),
        c,
    })
}

/// Mutual fund trajectories from cumulative fund returns (exact route).
pub fn simulate_mutual_fund(r: &ReturnGrid, phi: f64, x0: f64, dt: f64) -> Result<FundTrajectory> {
    if !(phi >= 0.0 && phi.is_finite()) {
        return Err(Error::domain(Origin::FundDynamics, "phi", "must be nonnegative"));
    }
    check_x0(x0)?;
    let n = r.n_nodes();
    let len = r.n_paths * n;
    let mut x = vec![0.0; len];
    let mut c = vec![0.0; len];
    x.par_chunks_mut(n)
        .zip(c.par_chunks_mut(n))
        .enumerate()
        .for_each(|(p, (x, c))| mutual_transform_row(r.row(p), phi, x0, dt, x, c));
    Ok(FundTrajectory {
        scheme: FeeScheme::Mutual { phi },
        dt,
        n_paths: r.n_paths,
        n_steps: r.n_steps,
        x0,
        x,
        x_star: None,
        c,
    })
}

/// Dispatches to the exact transform of the scenario's fee scheme.
pub fn simulate_fund(r: &ReturnGrid, scenario: &ValidatedScenario) -> Result<FundTrajectory> {
    match scenario.fees {
        FeeScheme::Hedge { alpha } => simulate_hedge_fund(r, alpha, scenario.sim.x0),
        FeeScheme::Mutual { phi } => simulate_mutual_fund(r, phi, scenario.sim.x0, r.dt),
    }
}

/// Explicit scheme for the hedge-fund dynamics with a constant proportion.
///
/// A step whose pre-fee value crosses the current mark keeps only the
/// fraction `1 - alpha` of the excess above the mark, which then becomes the
/// new mark. Uses `batch.dt` as the step.
pub fn simulate_hedge_fund_euler(
    pi_x: f64,
    scenario: &ValidatedScenario,
    batch: &PathBatch,
) -> Result<FundTrajectory> {
    let alpha = match scenario.fees {
        FeeScheme::Hedge { alpha } => alpha,
        FeeScheme::Mutual { .. } => {
            return Err(Error::domain(
                Origin::FundDynamics,
                "fees",
                "Euler high-water-mark scheme needs a hedge fee scheme",
            ))
        }
    };
    if !pi_x.is_finite() {
        return Err(Error::domain(Origin::FundDynamics, "pi_x", "must be finite"));
    }
    let x0 = scenario.sim.x0;
    let (mu, sigma) = (scenario.market.mu_x, scenario.market.sigma_x);
    let dt = batch.dt;
    let n_steps = batch.n_steps;
    let n = n_steps + 1;
    let k_fee = fee_factor(alpha);
    let keep = 1.0 - alpha;

    let rows: Vec<Result<(Vec<f64>, Vec<f64>, Vec<f64>)>> = (0..batch.n_paths)
        .into_par_iter()
        .map(|p| {
            let dw = batch.dw_x(p);
            let mut x = vec![0.0; n];
            let mut xs = vec![0.0; n];
            let mut c = vec![0.0; n];
            x[0] = x0;
            xs[0] = x0;
            for k in 0..n_steps {
                let pre = x[k] * (1.0 + pi_x * (mu * dt + sigma * dw[k]));
                if !(pre > 0.0) {
                    return Err(Error::Stability {
                        path: p,
                        step: k,
                        message: format!(
                            "fund value {pre} after step; dt {dt} too large for leverage {pi_x}"
                        ),
                        origin: Origin::FundDynamics,
                    });
                }
                if pre > xs[k] {
                    x[k + 1] = xs[k] + keep * (pre - xs[k]);
                    xs[k + 1] = x[k + 1];
                } else {
                    x[k + 1] = pre;
                    xs[k + 1] = xs[k];
                }
                c[k + 1] = c[k] + k_fee * (xs[k + 1] - xs[k]);
            }
            Ok((x, xs, c))
        })
        .collect();

    let mut x = Vec::with_capacity(batch.n_paths * n);
    let mut x_star = Vec::with_capacity(batch.n_paths * n);
    let mut c = Vec::with_capacity(batch.n_paths * n);
    for row in rows {
        let (a, b, d) = row?;
        x.extend(a);
        x_star.extend(b);
        c.extend(d);
    }
    Ok(FundTrajectory {
        scheme: scenario.fees,
        dt,
        n_paths: batch.n_paths,
        n_steps,
        x0,
        x,
        x_star: Some(x_star),
        c,
    })
}
