//! Plug-in check of the log-utility candidate value function
//! `v(xi, phi) = delta xi + b ln|alpha - (1 - alpha) e^phi|` with
//! `b = 1 - delta / (1 - alpha)`, in the coordinates `xi = ln(x/z)`,
//! `phi = ln(f/z)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Origin, Result};
use crate::market::{sharpe, MarketParams};

pub const DEFAULT_SINGULAR_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CandidateValue {
    pub delta: f64,
    pub alpha: f64,
    pub b: f64,
    /// `ln(alpha / (1 - alpha))`, where the logarithm's argument vanishes.
    pub singular_phi: f64,
    pub margin: f64,
}

impl CandidateValue {
    pub fn new(delta: f64, alpha: f64) -> Result<Self> {
        Self::with_margin(delta, alpha, DEFAULT_SINGULAR_MARGIN)
    }

    pub fn with_margin(delta: f64, alpha: f64, margin: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(Origin::HjbChecker, "alpha", format!("must lie in (0, 1), got {alpha}")));
        }
        if !delta.is_finite() {
            return Err(Error::domain(Origin::HjbChecker, "delta", "must be finite"));
        }
        if !(margin >= 0.0) {
            return Err(Error::domain(Origin::HjbChecker, "singular_margin", "must be nonnegative"));
        }
        Ok(CandidateValue {
            delta,
            alpha,
            b: 1.0 - delta / (1.0 - alpha),
            singular_phi: (alpha / (1.0 - alpha)).ln(),
            margin,
        })
    }

    fn check_node(&self, phi: f64) -> Result<()> {
        if (phi - self.singular_phi).abs() < self.margin {
            return Err(Error::domain(
                Origin::HjbChecker,
                "phi",
                format!("{phi} lies within {} of the singular point {}", self.margin, self.singular_phi),
            ));
        }
        Ok(())
    }

    /// Value and analytic derivatives at `(xi, phi)`.
    pub fn derivatives(&self, xi: f64, phi: f64) -> Result<Derivatives> {
        self.check_node(phi)?;
        let (g, g1, g2) = log_part(phi, self.alpha);
        Ok(Derivatives {
            v: self.delta * xi + self.b * g,
            v_xi: self.delta,
            v_phi: self.b * g1,
            v_xixi: 0.0,
            v_phiphi: self.b * g2,
            v_xiphi: 0.0,
        })
    }
}

/// `ln|D|`, `d/dphi` and `d^2/dphi^2` with `A = (1-alpha)e^phi`, `D = alpha - A`.
fn log_part(phi: f64, alpha: f64) -> (f64, f64, f64) {
    let a = (1.0 - alpha) * phi.exp();
    let d = alpha - a;
    (d.abs().ln(), -a / d, -a * alpha / (d * d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Derivatives {
    pub v: f64,
    pub v_xi: f64,
    pub v_phi: f64,
    pub v_xixi: f64,
    pub v_phiphi: f64,
    pub v_xiphi: f64,
}

pub fn candidate_derivatives(xi: f64, phi: f64, delta: f64, alpha: f64) -> Result<Derivatives> {
    CandidateValue::new(delta, alpha)?.derivatives(xi, phi)
}

/// Maximizers of the HJB right-hand side given the value derivatives.
fn foc_quotients(d: &Derivatives, m: &MarketParams) -> (f64, f64, f64) {
    let p = d.v_xixi - d.v_xi;
    let q = d.v_phiphi - d.v_phi;
    let c = m.rho * d.v_xiphi;
    let det = p * q - c * c;
    let num_x = m.sigma_f * m.mu_x * d.v_xi * q - m.rho * m.sigma_x * m.mu_f * d.v_xiphi * d.v_phi;
    let num_f = m.sigma_x * m.mu_f * d.v_phi * p - m.rho * m.sigma_f * m.mu_x * d.v_xiphi * d.v_xi;
    let pi_x = -num_x / (m.sigma_x * m.sigma_x * m.sigma_f * det);
    let pi_f = -num_f / (m.sigma_x * m.sigma_f * m.sigma_f * det);
    (pi_x, pi_f, det)
}

/// First-order-condition policies at `(xi, phi)`.
///
/// When `delta = 0` or `b = 0` the candidate degenerates in one coordinate
/// and both quotients become `0/0`. Because `v_xiphi = 0`, numerator and
/// denominator share the factor `delta * b`, so the continuous extension is
/// evaluated with that coordinate's derivatives taken per unit coefficient.
pub fn foc_policies_for(cand: &CandidateValue, xi: f64, phi: f64, market: &MarketParams) -> Result<(f64, f64)> {
    let d = cand.derivatives(xi, phi)?;
    let (pi_x, pi_f, det) = foc_quotients(&d, market);
    if det != 0.0 {
        return finite_policies(pi_x, pi_f, xi, phi);
    }
    if cand.delta == 0.0 || cand.b == 0.0 {
        let (_, g1, g2) = log_part(phi, cand.alpha);
        let unit = Derivatives {
            v: d.v,
            v_xi: if cand.delta == 0.0 { 1.0 } else { d.v_xi },
            v_phi: if cand.b == 0.0 { g1 } else { d.v_phi },
            v_xixi: d.v_xixi,
            v_phiphi: if cand.b == 0.0 { g2 } else { d.v_phiphi },
            v_xiphi: d.v_xiphi,
        };
        let (pi_x, pi_f, det) = foc_quotients(&unit, market);
        if det != 0.0 {
            return finite_policies(pi_x, pi_f, xi, phi);
        }
    }
    Err(Error::numerical(
        Origin::HjbChecker,
        format!("vanishing first-order-condition denominator at xi = {xi}, phi = {phi}"),
    ))
}

fn finite_policies(pi_x: f64, pi_f: f64, xi: f64, phi: f64) -> Result<(f64, f64)> {
    if pi_x.is_finite() && pi_f.is_finite() {
        Ok((pi_x, pi_f))
    } else {
        Err(Error::numerical(
            Origin::HjbChecker,
            format!("non-finite policy at xi = {xi}, phi = {phi}"),
        ))
    }
}

pub fn foc_policies(xi: f64, phi: f64, delta: f64, alpha: f64, market: &MarketParams) -> Result<(f64, f64)> {
    foc_policies_for(&CandidateValue::new(delta, alpha)?, xi, phi, market)
}

/// `(delta/2) nu_x^2 + (1 - delta/(1 - alpha)) (1/2) nu_f^2`.
pub fn beta_of_delta(delta: f64, alpha: f64, market: &MarketParams) -> Result<f64> {
    let nu_x = sharpe(market.mu_x, market.sigma_x)?;
    let nu_f = sharpe(market.mu_f, market.sigma_f)?;
    Ok(0.5 * delta * nu_x * nu_x + (1.0 - delta / (1.0 - alpha)) * 0.5 * nu_f * nu_f)
}

/// HJB right-hand side at given policies.
fn hjb_rhs(d: &Derivatives, m: &MarketParams, pi_x: f64, pi_f: f64) -> f64 {
    let sx = m.sigma_x * pi_x;
    let sf = m.sigma_f * pi_f;
    m.mu_x * pi_x * d.v_xi
        + m.mu_f * pi_f * d.v_phi
        + 0.5 * sx * sx * (d.v_xixi - d.v_xi)
        + 0.5 * sf * sf * (d.v_phiphi - d.v_phi)
        + m.rho * sx * sf * d.v_xiphi
}

/// Boundary condition at `xi = 0`:
/// `(1 - alpha) - v_xi + v_phi (alpha e^-phi - (1 - alpha))`.
pub fn boundary_residual(cand: &CandidateValue, phi: f64) -> Result<f64> {
    let d = cand.derivatives(0.0, phi)?;
    let a = cand.alpha;
    Ok((1.0 - a) - d.v_xi + d.v_phi * (a * (-phi).exp() - (1.0 - a)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub n_xi: usize,
    pub n_phi: usize,
    pub xi_min: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub margin: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n_xi: 50,
            n_phi: 50,
            xi_min: -5.0,
            phi_min: -4.0,
            phi_max: 4.0,
            margin: DEFAULT_SINGULAR_MARGIN,
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HjbNode {
    pub xi: f64,
    pub phi: f64,
    pub pi_x: f64,
    pub pi_f: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryNode {
    pub phi: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HjbResidualReport {
    pub delta: f64,
    pub alpha: f64,
    pub b: f64,
    pub beta: f64,
    pub grid: GridSpec,
    /// Interior nodes (`xi < 0`) outside the singular margin.
    pub nodes: Vec<HjbNode>,
    /// Nodes at `xi = 0`.
    pub boundary: Vec<BoundaryNode>,
    /// Grid `phi` values dropped for lying inside the singular margin.
    pub excluded_phi: Vec<f64>,
    pub max_abs_residual: f64,
    pub max_abs_boundary_residual: f64,
    /// Largest deviation of the policies from the log-optimal closed forms.
    pub max_policy_deviation: f64,
}

/// Evaluates the HJB and boundary residuals of the candidate on a grid over
/// `[xi_min, 0] x [phi_min, phi_max]`.
pub fn hjb_residual_grid(delta: f64, alpha: f64, market: &MarketParams, grid: &GridSpec) -> Result<HjbResidualReport> {
    if grid.n_xi < 2 || grid.n_phi < 1 {
        return Err(Error::domain(Origin::HjbChecker, "grid", "needs n_xi >= 2 and n_phi >= 1"));
    }
    if !(grid.xi_min < 0.0) || !(grid.phi_max >= grid.phi_min) {
        return Err(Error::domain(Origin::HjbChecker, "grid", "needs xi_min < 0 and phi_min <= phi_max"));
    }
    let cand = CandidateValue::with_margin(delta, alpha, grid.margin)?;
    let beta = beta_of_delta(delta, alpha, market)?;
    let xis = linspace(grid.xi_min, 0.0, grid.n_xi);
    let (phis, excluded_phi): (Vec<f64>, Vec<f64>) = linspace(grid.phi_min, grid.phi_max, grid.n_phi)
        .into_iter()
        .partition(|phi| (phi - cand.singular_phi).abs() >= cand.margin);
    let interior: Vec<(f64, f64)> = xis[..xis.len() - 1]
        .iter()
        .flat_map(|&xi| phis.iter().map(move |&phi| (xi, phi)))
        .collect();
    let nodes = interior
        .par_iter()
        .map(|&(xi, phi)| {
            let (pi_x, pi_f) = foc_policies_for(&cand, xi, phi, market)?;
            let d = cand.derivatives(xi, phi)?;
            Ok(HjbNode {
                xi,
                phi,
                pi_x,
                pi_f,
                residual: hjb_rhs(&d, market, pi_x, pi_f) - beta,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let boundary = phis
        .iter()
        .map(|&phi| Ok(BoundaryNode { phi, residual: boundary_residual(&cand, phi)? }))
        .collect::<Result<Vec<_>>>()?;
    let max_abs = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, |m, r| m.max(r.abs()));
    let max_policy_deviation = nodes.iter().fold(0.0f64, |m, n| {
        let (hx, hf) = crate::policies::heuristic_policy_xi_phi(n.xi, n.phi, market, alpha);
        m.max((n.pi_x - hx).abs()).max((n.pi_f - hf).abs())
    });
    Ok(HjbResidualReport {
        delta,
        alpha,
        b: cand.b,
        beta,
        grid: *grid,
        max_abs_residual: max_abs(&mut nodes.iter().map(|n| n.residual)),
        max_abs_boundary_residual: max_abs(&mut boundary.iter().map(|n| n.residual)),
        max_policy_deviation,
        nodes,
        boundary,
        excluded_phi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::esr_hedge_closed;
    use crate::market::fixtures::market;
    use crate::policies::heuristic_policy_xi_phi;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn candidate_example() {
        let d = candidate_derivatives(0.0, 0.0, 0.0, 0.2).unwrap();
        assert!((d.v - 0.6f64.ln()).abs() < 1e-15);
        assert!((d.v + 0.5108).abs() < 1e-4);
        assert_eq!(d.v_xi, 0.0);
        assert_eq!(d.v_xixi, 0.0);
        assert_eq!(d.v_xiphi, 0.0);
    }

    #[test]
    fn singular_margin_rejected() {
        let s = (0.2f64 / 0.8).ln();
        let e = candidate_derivatives(0.0, s + 1e-4, 0.4, 0.2).unwrap_err();
        assert_eq!(e.field(), Some("phi"));
        assert!(candidate_derivatives(0.0, s + 2e-3, 0.4, 0.2).is_ok());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-5;
        let mut checked = 0;
        while checked < 100 {
            let alpha = rng.random_range(0.05..0.6);
            let delta = rng.random_range(0.0..1.0);
            let xi = rng.random_range(-5.0..0.0);
            let phi = rng.random_range(-4.0..4.0);
            let c = CandidateValue::new(delta, alpha).unwrap();
            if (phi - c.singular_phi).abs() < 0.05 {
                continue;
            }
            let d = c.derivatives(xi, phi).unwrap();
            let v = |x: f64, p: f64| c.derivatives(x, p).unwrap().v;
            let dp = (v(xi, phi + h) - v(xi, phi - h)) / (2.0 * h);
            let dx = (v(xi + h, phi) - v(xi - h, phi)) / (2.0 * h);
            let vp = |p: f64| c.derivatives(xi, p).unwrap().v_phi;
            let dpp = (vp(phi + h) - vp(phi - h)) / (2.0 * h);
            let vx = |p: f64| c.derivatives(xi, p).unwrap().v_xi;
            let dxp = (vx(phi + h) - vx(phi - h)) / (2.0 * h);
            let tol = 1e-6 * (1.0 + d.v_phi.abs().max(d.v_phiphi.abs()));
            assert!((d.v_phi - dp).abs() <= tol, "{alpha} {phi}: {} vs {dp}", d.v_phi);
            assert!((d.v_xi - dx).abs() <= 1e-6);
            assert!((d.v_phiphi - dpp).abs() <= tol, "{alpha} {phi}: {} vs {dpp}", d.v_phiphi);
            assert!((d.v_xiphi - dxp).abs() <= 1e-6);
            checked += 1;
        }
    }

    #[test]
    fn foc_example_and_delta_independence() {
        let m = market();
        let (px, pf) = foc_policies(0.0, 0.0, 0.4, 0.2, &m).unwrap();
        assert!((px - 3.125).abs() < 1e-12);
        assert!((pf - 3.0).abs() < 1e-12);
        for delta in [0.0, 0.4, 0.8] {
            let (x, f) = foc_policies(0.0, 0.0, delta, 0.2, &m).unwrap();
            assert!((x - px).abs() < 1e-12 && (f - pf).abs() < 1e-12);
        }
    }

    #[test]
    fn foc_near_singular_point_sets_everything_aside() {
        let phi = (0.25f64).ln() + 1.5e-3;
        let (_, pf) = foc_policies(-1.0, phi, 0.4, 0.2, &market()).unwrap();
        assert!(pf.abs() < 1e-2);
    }

    #[test]
    fn foc_independent_of_rho() {
        for rho in [-0.9, 0.0, 0.5, 1.0] {
            let m = MarketParams { rho, ..market() };
            let (x, f) = foc_policies(-2.0, 1.3, 0.3, 0.2, &m).unwrap();
            let (hx, hf) = heuristic_policy_xi_phi(-2.0, 1.3, &m, 0.2);
            assert!((x - hx).abs() < 1e-12 && (f - hf).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_endpoints() {
        let m = market();
        assert!((beta_of_delta(0.0, 0.2, &m).unwrap() - 0.08).abs() < 1e-15);
        assert!((beta_of_delta(1.0 - 0.2, 0.2, &m).unwrap() - 0.1).abs() < 1e-15);
        let best = beta_of_delta(0.0, 0.2, &m)
            .unwrap()
            .max(beta_of_delta(1.0 - 0.2, 0.2, &m).unwrap());
        assert!((best - esr_hedge_closed(&m, 0.2, 1.0).unwrap().value).abs() < 1e-15);
        let (b0, b1, b2) = (
            beta_of_delta(0.1, 0.2, &m).unwrap(),
            beta_of_delta(0.35, 0.2, &m).unwrap(),
            beta_of_delta(0.6, 0.2, &m).unwrap(),
        );
        assert!(((b1 - b0) / 0.25 - (b2 - b1) / 0.25).abs() < 1e-12);
    }

    #[test]
    fn residual_grid_vanishes() {
        let m = market();
        for delta in [0.0, 0.4, 1.0 - 0.2] {
            let r = hjb_residual_grid(delta, 0.2, &m, &GridSpec::default()).unwrap();
            assert!(r.max_abs_residual <= 1e-10, "{delta}: {}", r.max_abs_residual);
            assert!(r.max_abs_boundary_residual <= 1e-12);
            assert!(r.max_policy_deviation <= 1e-12);
            assert_eq!(r.nodes.len() + r.excluded_phi.len() * 49, 49 * 50);
            let reported = r.nodes.iter().fold(0.0f64, |a, n| a.max(n.residual.abs()));
            assert_eq!(reported, r.max_abs_residual);
        }
    }

    #[test]
    fn grid_excludes_singular_nodes() {
        let g = GridSpec {
            n_phi: 3,
            phi_min: (0.25f64).ln(),
            phi_max: (0.25f64).ln() + 2.0,
            ..GridSpec::default()
        };
        let r = hjb_residual_grid(0.4, 0.2, &market(), &g).unwrap();
        assert_eq!(r.excluded_phi.len(), 1);
        assert_eq!(r.boundary.len(), 2);
    }

    proptest! {
        #[test]
        fn boundary_condition_holds(alpha in 0.01f64..0.95, delta in -1.0f64..2.0, phi in -6.0f64..6.0) {
            let c = CandidateValue::new(delta, alpha).unwrap();
            prop_assume!((phi - c.singular_phi).abs() > 1e-2);
            prop_assert!(boundary_residual(&c, phi).unwrap().abs() <= 1e-12);
        }

        #[test]
        fn foc_matches_log_optimal(alpha in 0.01f64..0.95, delta in 0.0f64..1.0, xi in -5.0f64..0.0, phi in -4.0f64..4.0, rho in -1.0f64..1.0) {
            let c = CandidateValue::new(delta, alpha).unwrap();
            prop_assume!((phi - c.singular_phi).abs() > 1e-2);
            let m = MarketParams { rho, ..market() };
            let (x, f) = foc_policies_for(&c, xi, phi, &m).unwrap();
            let (hx, hf) = heuristic_policy_xi_phi(xi, phi, &m, alpha);
            prop_assert!((x - hx).abs() <= 1e-12 * (1.0 + hx.abs()));
            prop_assert!((f - hf).abs() <= 1e-12 * (1.0 + hf.abs()));
        }
    }
}
