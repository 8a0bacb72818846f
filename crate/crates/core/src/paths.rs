//! Correlated Brownian increments and cumulative log-return grids.
//!
//! Each path owns an independent ChaCha8 stream selected by the path index,
//! seeded from the scenario seed, and consumed in step order. Increments of a
//! path therefore depend only on `(seed, path, step)`, never on scheduling.
//!
//! The fund increment is drawn first and the private increment is built as
//! `rho * dW_x + sqrt(1 - rho^2) * dW_perp`, so the fund's driving noise is
//! the same for every correlation under a fixed seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Origin, Result};
use crate::market::ValidatedScenario;

/// Per-path increment generator. Cheap to copy; holds no stream state.
#[derive(Debug, Clone, Copy)]
pub struct PathGenerator {
    seed: u64,
    rho: f64,
    rho_perp: f64,
    sqrt_dt: f64,
    n_steps: usize,
}

impl PathGenerator {
    pub fn new(scenario: &ValidatedScenario) -> Self {
        Self::with_grid(
            scenario.seed(),
            scenario.market.rho,
            scenario.dt(),
            scenario.n_steps,
        )
    }

    pub fn with_grid(seed: u64, rho: f64, dt: f64, n_steps: usize) -> Self {
        let rho_perp = if rho.abs() == 1.0 {
            0.0
        } else {
            (1.0 - rho * rho).sqrt()
        };
        PathGenerator {
            seed,
            rho,
            rho_perp,
            sqrt_dt: dt.sqrt(),
            n_steps,
        }
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    fn stream(&self, path: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path as u64);
        rng
    }

    /// Fills the two increment rows of `path`. Both slices must hold `n_steps`.
    pub fn fill(&self, path: usize, dw_x: &mut [f64], dw_f: &mut [f64]) {
        debug_assert_eq!(dw_x.len(), self.n_steps);
        debug_assert_eq!(dw_f.len(), self.n_steps);
        let mut rng = self.stream(path);
        for (x, f) in dw_x.iter_mut().zip(dw_f.iter_mut()) {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            *x = self.sqrt_dt * z1;
            *f = if self.rho == 1.0 {
                *x
            } else if self.rho == -1.0 {
                -*x
            } else if self.rho == 0.0 {
                self.sqrt_dt * z2
            } else {
                self.sqrt_dt * (self.rho * z1 + self.rho_perp * z2)
            };
        }
    }
}

/// Which Brownian component of a batch to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Fund,
    Private,
}

/// `n_paths x n_steps` increments of the two correlated Brownian motions,
/// stored path-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub dt: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    dw_x: Vec<f64>,
    dw_f: Vec<f64>,
}

impl PathBatch {
    /// Wraps externally supplied increments (path-major, `n_paths * n_steps`).
    pub fn from_increments(
        dt: f64,
        n_paths: usize,
        n_steps: usize,
        dw_x: Vec<f64>,
        dw_f: Vec<f64>,
    ) -> Result<Self> {
        if dw_x.len() != n_paths * n_steps || dw_f.len() != n_paths * n_steps {
            return Err(Error::domain(
                Origin::PathEngine,
                "increments",
                format!(
                    "expected {} entries per component, got {} and {}",
                    n_paths * n_steps,
                    dw_x.len(),
                    dw_f.len()
                ),
            ));
        }
        if !(dt > 0.0) {
            return Err(Error::domain(Origin::PathEngine, "dt", "must be positive"));
        }
        Ok(PathBatch {
            dt,
            n_steps,
            n_paths,
            dw_x,
            dw_f,
        })
    }

    pub fn component(&self, c: Component) -> &[f64] {
        match c {
            Component::Fund => &self.dw_x,
            Component::Private => &self.dw_f,
        }
    }

    pub fn path(&self, c: Component, path: usize) -> &[f64] {
        let n = self.n_steps;
        &self.component(c)[path * n..(path + 1) * n]
    }

    pub fn dw_x(&self, path: usize) -> &[f64] {
        self.path(Component::Fund, path)
    }

    pub fn dw_f(&self, path: usize) -> &[f64] {
        self.path(Component::Private, path)
    }

    /// Sums consecutive groups of `factor` increments: the same Brownian
    /// path observed on a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> Result<PathBatch> {
        if factor == 0 || self.n_steps % factor != 0 {
            return Err(Error::domain(
                Origin::PathEngine,
                "factor",
                format!("{factor} does not divide {} steps", self.n_steps),
            ));
        }
        let sum = |v: &[f64]| -> Vec<f64> {
            v.chunks(factor).map(|c| c.iter().sum()).collect()
        };
        Ok(PathBatch {
            dt: self.dt * factor as f64,
            n_steps: self.n_steps / factor,
            n_paths: self.n_paths,
            dw_x: sum(&self.dw_x),
            dw_f: sum(&self.dw_f),
        })
    }

    /// Checksum over the bit patterns of both components, path-major.
    pub fn checksum(&self) -> u64 {
        let mut h = Checksum::new();
        for p in 0..self.n_paths {
            h.update(self.dw_x(p));
            h.update(self.dw_f(p));
        }
        h.finish()
    }
}

/// Streaming FNV-style hash over whole `f64` bit patterns, one multiply
/// per word.
#[derive(Debug, Clone, Copy)]
pub struct Checksum(u64);

impl Checksum {
    pub fn new() -> Self {
        Checksum(0xcbf2_9ce4_8422_2325)
    }

    pub fn update(&mut self, values: &[f64]) {
        for v in values {
            self.combine(v.to_bits());
        }
    }

    pub fn combine(&mut self, word: u64) {
        self.0 ^= word;
        self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        self.0 ^= self.0 >> 29;
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Checksum {
    fn default() -> Self {
        Self::new()
    }
}

/// Bytes needed to hold a batch of the given shape.
pub fn batch_bytes(n_paths: usize, n_steps: usize) -> usize {
    n_paths
        .saturating_mul(n_steps)
        .saturating_mul(2 * std::mem::size_of::<f64>())
}

/// Generates the full increment batch in memory. Fails with a resource error
/// when the batch exceeds the scenario's memory budget; large runs stream
/// paths through [`PathGenerator`] instead.
pub fn generate_increments(scenario: &ValidatedScenario) -> Result<PathBatch> {
    let n_paths = scenario.n_paths();
    let n_steps = scenario.n_steps;
    let need = batch_bytes(n_paths, n_steps);
    let budget = scenario.sim.memory_budget_mb.saturating_mul(1 << 20);
    if need > budget {
        return Err(Error::Resource(format!(
            "batch of {n_paths} x {n_steps} needs {} MiB, budget is {} MiB; stream paths in chunks",
            need >> 20,
            scenario.sim.memory_budget_mb
        )));
    }
    let gen = PathGenerator::new(scenario);
    let mut dw_x = vec![0.0; n_paths * n_steps];
    let mut dw_f = vec![0.0; n_paths * n_steps];
    dw_x.par_chunks_mut(n_steps)
        .zip(dw_f.par_chunks_mut(n_steps))
        .enumerate()
        .for_each(|(p, (x, f))| gen.fill(p, x, f));
    Ok(PathBatch {
        dt: scenario.dt(),
        n_steps,
        n_paths,
        dw_x,
        dw_f,
    })
}

/// Per-path, per-node values on a uniform grid; row `p` has `n_steps + 1`
/// entries starting at time 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnGrid {
    pub dt: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    values: Vec<f64>,
}

impl ReturnGrid {
    pub fn from_rows(dt: f64, rows: &[Vec<f64>]) -> Result<Self> {
        let n_nodes = rows.first().map(|r| r.len()).unwrap_or(0);
        if n_nodes == 0 || rows.iter().any(|r| r.len() != n_nodes) {
            return Err(Error::domain(
                Origin::PathEngine,
                "rows",
                "rows must be nonempty and of equal length",
            ));
        }
        Ok(ReturnGrid {
            dt,
            n_paths: rows.len(),
            n_steps: n_nodes - 1,
            values: rows.concat(),
        })
    }

    pub(crate) fn from_flat(dt: f64, n_paths: usize, n_steps: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n_paths * (n_steps + 1));
        ReturnGrid {
            dt,
            n_paths,
            n_steps,
            values,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn row(&self, path: usize) -> &[f64] {
        let n = self.n_nodes();
        &self.values[path * n..(path + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n_nodes())
    }

    pub fn terminal(&self, path: usize) -> f64 {
        self.row(path)[self.n_steps]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    fn map_rows(&self, f: impl Fn(&mut [f64]) + Sync + Send) -> ReturnGrid {
        let mut out = self.clone();
        let n = out.n_nodes();
        out.values.par_chunks_mut(n).for_each(f);
        out
    }
}

/// Investment proportion fed to [`cumulative_return`].
#[derive(Debug, Clone, PartialEq)]
pub enum Proportion {
    Constant(f64),
    /// Path-major `n_paths x n_steps` left-endpoint values.
    Grid(Vec<f64>),
}

/// Drift and volatility of one log-return step at proportion `pi`.
#[inline]
pub(crate) fn step_coefficients(pi: f64, mu: f64, sigma: f64, dt: f64) -> (f64, f64) {
    let vol = sigma * pi;
    ((mu * pi - 0.5 * vol * vol) * dt, vol)
}

/// Accumulates `R_{k+1} = R_k + drift + vol * dW_k` into `out` (length
/// `dw.len() + 1`) for a constant proportion.
pub fn accumulate_constant(pi: f64, mu: f64, sigma: f64, dt: f64, dw: &[f64], out: &mut [f64]) {
    let (drift, vol) = step_coefficients(pi, mu, sigma, dt);
    out[0] = 0.0;
    let mut r = 0.0;
    for (o, &w) in out[1..].iter_mut().zip(dw) {
        r += drift + vol * w;
        *o = r;
    }
}

/// Terminal value of [`accumulate_constant`] without storing the grid.
pub fn terminal_constant(pi: f64, mu: f64, sigma: f64, dt: f64, dw: &[f64]) -> f64 {
    let (drift, vol) = step_coefficients(pi, mu, sigma, dt);
    let mut r = 0.0;
    for &w in dw {
        r += drift + vol * w;
    }
    r
}

/// Cumulative log returns of a proportion `pi` held in an asset with drift
/// `mu` and volatility `sigma`, driven by one component of `batch`.
/// Proportions are evaluated at the left endpoint of each step.
pub fn cumulative_return(
    pi: &Proportion,
    mu: f64,
    sigma: f64,
    batch: &PathBatch,
    component: Component,
) -> Result<ReturnGrid> {
    let n_steps = batch.n_steps;
    let n_paths = batch.n_paths;
    match pi {
        Proportion::Constant(c) if !c.is_finite() => {
            return Err(Error::domain(Origin::PathEngine, "pi", "proportion must be finite"))
        }
        Proportion::Grid(g) => {
            if g.len() != n_paths * n_steps {
                return Err(Error::domain(
                    Origin::PathEngine,
                    "pi",
                    format!("grid has {} entries, batch needs {}", g.len(), n_paths * n_steps),
                ));
            }
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::domain(
                    Origin::PathEngine,
                    "pi",
                    format!("non-finite proportion at path {}, step {}", i / n_steps, i % n_steps),
                ));
            }
        }
        _ => {}
    }
    let dt = batch.dt;
    let incr = batch.component(component);
    let mut values = vec![0.0; n_paths * (n_steps + 1)];
    values
        .par_chunks_mut(n_steps + 1)
        .enumerate()
        .for_each(|(p, out)| {
            let dw = &incr[p * n_steps..(p + 1) * n_steps];
            match pi {
                Proportion::Constant(c) => accumulate_constant(*c, mu, sigma, dt, dw, out),
                Proportion::Grid(g) => {
                    let pis = &g[p * n_steps..(p + 1) * n_steps];
                    out[0] = 0.0;
                    let mut r = 0.0;
                    for k in 0..n_steps {
                        let (drift, vol) = step_coefficients(pis[k], mu, sigma, dt);
                        r += drift + vol * dw[k];
                        out[k + 1] = r;
                    }
                }
            }
        });
    Ok(ReturnGrid::from_flat(dt, n_paths, n_steps, values))
}

pub fn running_max_in_place(row: &mut [f64]) {
    let mut m = f64::NEG_INFINITY;
    for v in row.iter_mut() {
        if *v > m {
            m = *v;
        }
        *v = m;
    }
}

pub fn running_min_in_place(row: &mut [f64]) {
    let mut m = f64::INFINITY;
    for v in row.iter_mut() {
        if *v < m {
            m = *v;
        }
        *v = m;
    }
}

/// Pathwise running maximum over the grid.
pub fn running_max(grid: &ReturnGrid) -> ReturnGrid {
    grid.map_rows(running_max_in_place)
}

/// Pathwise running minimum over the grid.
pub fn running_min(grid: &ReturnGrid) -> ReturnGrid {
    grid.map_rows(running_min_in_place)
}
