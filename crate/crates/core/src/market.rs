//! Model parameters: market, fee scheme, preferences and simulation grid.
//!
//! Everything downstream consumes a [`ValidatedScenario`], which is only
//! obtainable through [`validate`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Origin, Result};

/// Relative tolerance on `horizon / dt` being an integer.
const TILING_TOL: f64 = 1e-9;

/// Default cap on the in-memory increment batch.
pub const DEFAULT_MEMORY_BUDGET_MB: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub mu_x: f64,
    pub sigma_x: f64,
    pub mu_f: f64,
    pub sigma_f: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum FeeScheme {
    /// Performance fee `alpha` on increases of the high-water mark.
    Hedge { alpha: f64 },
    /// Management fee at annual rate `phi` of assets.
    Mutual { phi: f64 },
}

impl FeeScheme {
    pub fn is_no_fee(&self) -> bool {
        match *self {
            FeeScheme::Hedge { alpha } => alpha == 0.0,
            FeeScheme::Mutual { phi } => phi == 0.0,
        }
    }

    pub fn is_hedge(&self) -> bool {
        matches!(self, FeeScheme::Hedge { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeeScheme::Hedge { .. } => "hedge",
            FeeScheme::Mutual { .. } => "mutual",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceParams {
    pub gamma: f64,
}

impl PreferenceParams {
    /// Utility exponent `1 - gamma`.
    pub fn p(&self) -> f64 {
        1.0 - self.gamma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub x0: f64,
    pub f0: f64,
    pub memory_budget_mb: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: 200.0,
            dt: 0.01,
            n_paths: 10_000,
            seed: 0,
            x0: 1.0,
            f0: 1.0,
            memory_budget_mb: DEFAULT_MEMORY_BUDGET_MB,
        }
    }
}

/// A frozen, validated scenario with derived quantities precomputed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidatedScenario {
    pub market: MarketParams,
    pub fees: FeeScheme,
    pub prefs: PreferenceParams,
    pub sim: SimConfig,
    pub nu_x: f64,
    pub nu_f: f64,
    pub p: f64,
    pub n_steps: usize,
    /// `0 < gamma <= 1`, where the optimality results are proven.
    pub proven_regime: bool,
    pub no_fee: bool,
}

impl ValidatedScenario {
    pub fn dt(&self) -> f64 {
        self.sim.dt
    }

    pub fn horizon(&self) -> f64 {
        self.sim.horizon
    }

    pub fn n_paths(&self) -> usize {
        self.sim.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.sim.seed
    }

    pub fn gamma(&self) -> f64 {
        self.prefs.gamma
    }

    /// Copy with a different market, revalidated.
    pub fn with_market(&self, market: MarketParams) -> Result<Self> {
        validate(market, self.fees, self.prefs, self.sim)
    }

    pub fn with_fees(&self, fees: FeeScheme) -> Result<Self> {
        validate(self.market, fees, self.prefs, self.sim)
    }

    pub fn with_sim(&self, sim: SimConfig) -> Result<Self> {
        validate(self.market, self.fees, self.prefs, sim)
    }

    pub fn with_prefs(&self, prefs: PreferenceParams) -> Result<Self> {
        validate(self.market, self.fees, prefs, self.sim)
    }
}

/// Sharpe ratio `mu / sigma`.
pub fn sharpe(mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::domain(
            Origin::MarketModel,
            "sigma",
            format!("volatility must be positive and finite, got {sigma}"),
        ));
    }
    if !mu.is_finite() {
        return Err(Error::domain(
            Origin::MarketModel,
            "mu",
            "drift must be finite",
        ));
    }
    Ok(mu / sigma)
}

fn require(cond: bool, field: &str, message: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::domain(Origin::MarketModel, field, message))
    }
}

pub fn validate(
    market: MarketParams,
    fees: FeeScheme,
    prefs: PreferenceParams,
    sim: SimConfig,
) -> Result<ValidatedScenario> {
    require(market.mu_x.is_finite(), "mu_x", "must be finite")?;
    require(market.mu_f.is_finite(), "mu_f", "must be finite")?;
    require(
        market.sigma_x > 0.0 && market.sigma_x.is_finite(),
        "sigma_x",
        format!("must be positive, got {}", market.sigma_x),
    )?;
    require(
        market.sigma_f > 0.0 && market.sigma_f.is_finite(),
        "sigma_f",
        format!("must be positive, got {}", market.sigma_f),
    )?;
    require(
        market.rho.abs() <= 1.0,
        "rho",
        format!("correlation must lie in [-1, 1], got {}", market.rho),
    )?;

    match fees {
        FeeScheme::Hedge { alpha } => require(
            (0.0..1.0).contains(&alpha),
            "alpha",
            format!("performance fee must lie in [0, 1), got {alpha}"),
        )?,
        FeeScheme::Mutual { phi } => require(
            phi >= 0.0 && phi.is_finite(),
            "phi",
            format!("management fee must be nonnegative, got {phi}"),
        )?,
    }

    require(
        prefs.gamma > 0.0 && prefs.gamma.is_finite(),
        "gamma",
        format!("risk aversion must be positive, got {}", prefs.gamma),
    )?;

    require(
        sim.horizon > 0.0 && sim.horizon.is_finite(),
        "horizon",
        format!("must be positive, got {}", sim.horizon),
    )?;
    require(
        sim.dt > 0.0 && sim.dt.is_finite(),
        "dt",
        format!("must be positive, got {}", sim.dt),
    )?;
    let ratio = sim.horizon / sim.dt;
    let n_steps = ratio.round();
    require(
        n_steps >= 1.0 && (ratio - n_steps).abs() <= TILING_TOL * n_steps.max(1.0),
        "dt",
        format!("step {} does not tile the horizon {}", sim.dt, sim.horizon),
    )?;
    require(sim.n_paths >= 1, "n_paths", "need at least one path")?;
    require(
        sim.x0 > 0.0 && sim.x0.is_finite(),
        "x0",
        format!("initial fund value must be positive, got {}", sim.x0),
    )?;
    require(
        sim.f0 > 0.0 && sim.f0.is_finite(),
        "f0",
        format!("initial wealth must be positive, got {}", sim.f0),
    )?;

    let nu_x = sharpe(market.mu_x, market.sigma_x)?;
    let nu_f = sharpe(market.mu_f, market.sigma_f)?;

    Ok(ValidatedScenario {
        market,
        fees,
        prefs,
        sim,
        nu_x,
        nu_f,
        p: prefs.p(),
        n_steps: n_steps as usize,
        proven_regime: prefs.gamma <= 1.0,
        no_fee: fees.is_no_fee(),
    })
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn hedge(alpha: f64) -> FeeScheme {
        FeeScheme::Hedge { alpha }
    }

    #[test]
    fn negative_volatility_is_rejected() {
        let mut m = market();
        m.sigma_x = -0.1;
        let err = validate(m, hedge(0.2), PreferenceParams { gamma: 1.0 }, SimConfig::default())
            .unwrap_err();
        assert_eq!(err.field(), Some("sigma_x"));
    }

    #[test]
    fn in_range_inputs_are_proven_regime() {
        let s = scenario(hedge(0.2), 1.0, SimConfig::default());
        assert!(s.proven_regime);
        assert!(!s.no_fee);
        assert_eq!(s.n_steps, 20_000);
        assert_eq!(s.p, 0.0);
    }

    #[test]
    fn gamma_above_one_is_flagged_not_rejected() {
        let s = scenario(hedge(0.2), 1.2, SimConfig::default());
        assert!(!s.proven_regime);
    }

    #[test]
    fn field_errors_name_the_offender() {
        let p = PreferenceParams { gamma: 1.0 };
        let sim = SimConfig::default();
        let mut m = market();
        m.rho = 1.5;
        assert_eq!(validate(m, hedge(0.2), p, sim).unwrap_err().field(), Some("rho"));
        assert_eq!(
            validate(market(), hedge(1.0), p, sim).unwrap_err().field(),
            Some("alpha")
        );
        assert_eq!(
            validate(market(), FeeScheme::Mutual { phi: -0.01 }, p, sim)
                .unwrap_err()
                .field(),
            Some("phi")
        );
        let bad_dt = SimConfig { dt: 0.0, ..sim };
        assert_eq!(
            validate(market(), hedge(0.2), p, bad_dt).unwrap_err().field(),
            Some("dt")
        );
        let non_tiling = SimConfig {
            horizon: 1.0,
            dt: 0.3,
            ..sim
        };
        assert_eq!(
            validate(market(), hedge(0.2), p, non_tiling)
                .unwrap_err()
                .field(),
            Some("dt")
        );
    }

    #[test]
    fn zero_fees_are_degenerate_but_accepted() {
        assert!(scenario(hedge(0.0), 1.0, SimConfig::default()).no_fee);
        assert!(scenario(FeeScheme::Mutual { phi: 0.0 }, 1.0, SimConfig::default()).no_fee);
    }

    #[test]
    fn sharpe_examples() {
        assert!((sharpe(0.08, 0.16).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(sharpe(0.0, 0.2).unwrap(), 0.0);
        assert!((sharpe(0.04, 0.10).unwrap() - 0.4).abs() < 1e-15);
        assert!(sharpe(0.1, 0.0).is_err());
    }

    #[test]
    fn validate_is_idempotent_and_sharpes_are_bitwise() {
        let s = scenario(hedge(0.2), 0.5, SimConfig::default());
        let again = validate(s.market, s.fees, s.prefs, s.sim).unwrap();
        assert_eq!(s, again);
        assert_eq!(s.nu_x.to_bits(), sharpe(0.08, 0.16).unwrap().to_bits());
        assert_eq!(s.nu_f.to_bits(), sharpe(0.04, 0.10).unwrap().to_bits());
    }
}
