//! Simulation studies: RMSE of oracle-tuned fits as a function of the mesh
//! size, for the univariate exponential and a bivariate exponential
//! surface.
//!
//! The solver works with the unnormalized loss `‖y − Of‖²`; study
//! parameters and reported λ values use the per-observation scale
//! `(1/n)‖y − Of‖² + λP`, so solver λ values are `n` times larger.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffops::{null_space_basis, penalty_operator, NormOrder, PenaltySpec};
use crate::error::{invalid, MbsError, Result};
use crate::interp::mlp_for_mesh;
use crate::mesh::{Mesh, TensorMesh};
use crate::solver::{lambda_grid, lambda_max, solve_path, AdmmOptions, MbsProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    UnivariateExp,
    BivariateExp,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::UnivariateExp => "univariate-exp",
            Scenario::BivariateExp => "bivariate-exp",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Scenario::UnivariateExp => 1,
            Scenario::BivariateExp => 2,
        }
    }

    /// The true regression function.
    pub fn truth(&self, x: &[f64]) -> f64 {
        match self {
            Scenario::UnivariateExp => (PI * x[0]).exp(),
            Scenario::BivariateExp => (PI * x[0] * x[1]).exp(),
        }
    }
}

fn default_replications() -> usize {
    50
}
fn default_lambda_count() -> usize {
    50
}
fn default_lambda_min() -> f64 {
    1e-3
}
fn default_noise_sd() -> f64 {
    1.0
}
/// Study fits only feed an oracle MSE, which moves by well under 0.1% between
/// these tolerances and the solver defaults.
fn default_solver() -> AdmmOptions {
    AdmmOptions {
        tol_abs: 1e-6,
        tol_rel: 1e-4,
        polish: false,
        ..AdmmOptions::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub scenario: Scenario,
    pub ns: Vec<usize>,
    /// Mesh points per axis.
    pub ms: Vec<usize>,
    /// `(r, k)` pairs with `k <= r`.
    pub rk_pairs: Vec<(usize, usize)>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_lambda_count")]
    pub lambda_count: usize,
    /// Smallest λ on the per-observation scale.
    #[serde(default = "default_lambda_min")]
    pub lambda_min: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    #[serde(default = "default_solver")]
    pub solver: AdmmOptions,
}

impl StudyConfig {
    pub fn new(scenario: Scenario, ns: Vec<usize>, ms: Vec<usize>, rk_pairs: Vec<(usize, usize)>) -> Self {
        Self {
            scenario,
            ns,
            ms,
            rk_pairs,
            replications: default_replications(),
            lambda_count: default_lambda_count(),
            lambda_min: default_lambda_min(),
            seed: 0,
            noise_sd: default_noise_sd(),
            solver: default_solver(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ns.is_empty() || self.ms.is_empty() || self.rk_pairs.is_empty() {
            return invalid("ns, ms and rk_pairs must be non-empty");
        }
        if self.replications == 0 {
            return invalid("replications must be at least 1");
        }
        if self.lambda_count < 2 {
            return invalid("lambda_count must be at least 2");
        }
        if !(self.lambda_min > 0.0 && self.lambda_min.is_finite()) {
            return invalid("lambda_min must be positive");
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return invalid("noise_sd must be nonnegative");
        }
        if let Some(n) = self.ns.iter().find(|&&n| n == 0) {
            return invalid(format!("sample sizes must be positive, got {n}"));
        }
        if let Some((r, k)) = self.rk_pairs.iter().find(|(r, k)| k > r) {
            return invalid(format!("interpolation order k = {k} exceeds r = {r}"));
        }
        let max_r = self.rk_pairs.iter().map(|p| p.0).max().unwrap_or(0);
        if let Some(m) = self.ms.iter().find(|&&m| m < max_r + 2) {
            return invalid(format!("mesh size {m} is below max(r) + 2 = {}", max_r + 2));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub scenario: Scenario,
    pub n: usize,
    /// Mesh points per axis.
    pub m: usize,
    pub r: usize,
    pub k: usize,
    /// Replicates that produced a fit.
    pub replications: usize,
    pub failures: usize,
    /// `(Σ_j MSE_j)^{1/2}` with `MSE_j = Σ_i (f̂(x_i) − f(x_i))²`.
    pub rmse_sum: f64,
    /// `(mean_j MSE_j / n)^{1/2}`.
    pub rmse_mean: f64,
    /// Median oracle λ on the per-observation scale.
    pub best_lambda_median: f64,
    pub runtime_ms: f64,
}

/// A simulated sample: covariates (one vector per observation), noisy
/// responses and the true function at the covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
    pub truth: Vec<f64>,
}

fn rng_for(seed: u64, n: usize, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 32) ^ replicate as u64);
    rng
}

fn generate(scenario: Scenario, n: usize, rng: &mut ChaCha8Rng, noise_sd: f64) -> Sample {
    let p = scenario.dim();
    let mut xs: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.random::<f64>()).collect()).collect();
    if p == 1 {
        xs.sort_by(|a, b| a[0].total_cmp(&b[0]));
    }
    let noise = Normal::new(0.0, noise_sd).expect("validated standard deviation");
    let truth: Vec<f64> = xs.iter().map(|x| scenario.truth(x)).collect();
    let ys = truth.iter().map(|t| t + noise.sample(rng)).collect();
    Sample { xs, ys, truth }
}

/// `n` sorted uniform covariates on `[0, 1]`, `y = e^{πx} + N(0, 1)`.
pub fn generate_univariate(n: usize, seed: u64) -> Sample {
    generate(Scenario::UnivariateExp, n, &mut ChaCha8Rng::seed_from_u64(seed), 1.0)
}

/// `n` uniform covariates on `[0, 1]²`, `y = e^{π x₁ x₂} + N(0, 1)`.
pub fn generate_bivariate(n: usize, seed: u64) -> Sample {
    generate(Scenario::BivariateExp, n, &mut ChaCha8Rng::seed_from_u64(seed), 1.0)
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    n: usize,
    m: usize,
    r: usize,
    k: usize,
}

#[derive(Debug, Clone, Copy)]
struct Outcome {
    mse: f64,
    lambda: f64,
    millis: f64,
}

fn replicate(config: &StudyConfig, cell: Cell, rep: usize) -> Result<Outcome> {
    let start = Instant::now();
    let scenario = config.scenario;
    let sample = generate(
        scenario,
        cell.n,
        &mut rng_for(config.seed, cell.n, rep),
        config.noise_sd,
    );
    let axis = Mesh::regular(0.0, 1.0, cell.m)?;
    let tmesh = TensorMesh::new(vec![axis; scenario.dim()])?;
    let spec = match scenario {
        Scenario::UnivariateExp => PenaltySpec::univariate(cell.r, NormOrder::ONE)?,
        Scenario::BivariateExp => PenaltySpec::bivariate_isotropic(cell.r, NormOrder::ONE)?,
    };
    let interp = mlp_for_mesh(&sample.xs, &tmesh, cell.k)?.matrix;
    let penalty = penalty_operator(&tmesh, &spec)?;
    let prob = MbsProblem::new(sample.ys, interp, penalty, 0.0)?
        .with_null_space(null_space_basis(&tmesh, &spec)?)?;
    let n = cell.n as f64;
    let lmin = config.lambda_min * n;
    // a fit that is already in the null space still gets a valid grid
    let lmax = lambda_max(&prob)?.max(10.0 * lmin);
    let grid = lambda_grid(lmax, config.lambda_count, lmin)?;
    let path = solve_path(&prob, &grid, &config.solver)?;
    let (mse, lambda) = path
        .iter()
        .map(|fit| {
            let mse: f64 = fit
                .fitted
                .iter()
                .zip(&sample.truth)
                .map(|(f, t)| (f - t) * (f - t))
                .sum();
            (mse, fit.lambda / n)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or_else(|| MbsError::InvalidArgument("empty lambda path".into()))?;
    Ok(Outcome {
        mse,
        lambda,
        millis: start.elapsed().as_secs_f64() * 1e3,
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    if v.len() % 2 == 1 {
        v[h]
    } else {
        0.5 * (v[h - 1] + v[h])
    }
}

#[cfg(feature = "parallel")]
fn run_tasks<T: Send>(count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_tasks<T: Send>(count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..count).map(f).collect()
}

/// Runs every `(n, (r, k), m)` cell of the study, in that nesting order.
///
/// Replicate `j` at sample size `n` uses the same data for every mesh size
/// and order pair. A replicate whose fit fails is counted in `failures`
/// and left out of the aggregates.
pub fn run_rmse_study(config: &StudyConfig) -> Result<Vec<StudyRow>> {
    config.validate()?;
    let mut cells = Vec::new();
    for &n in &config.ns {
        for &(r, k) in &config.rk_pairs {
            for &m in &config.ms {
                cells.push(Cell { n, m, r, k });
            }
        }
    }
    let reps = config.replications;
    let outcomes = run_tasks(cells.len() * reps, |t| replicate(config, cells[t / reps], t % reps));
    Ok(cells
        .iter()
        .zip(outcomes.chunks(reps))
        .map(|(cell, results)| {
            let ok: Vec<Outcome> = results.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
            let total_mse: f64 = ok.iter().map(|o| o.mse).sum();
            let count = ok.len();
            StudyRow {
                scenario: config.scenario,
                n: cell.n,
                m: cell.m,
                r: cell.r,
                k: cell.k,
                replications: count,
                failures: reps - count,
                rmse_sum: total_mse.sqrt(),
                rmse_mean: if count == 0 {
                    f64::NAN
                } else {
                    (total_mse / count as f64 / cell.n as f64).sqrt()
                },
                best_lambda_median: median(ok.iter().map(|o| o.lambda).collect()),
                runtime_ms: ok.iter().map(|o| o.millis).sum(),
            }
        })
        .collect())
}

/// Column order of [`write_csv`].
pub const CSV_COLUMNS: [&str; 10] = [
    "scenario",
    "n",
    "m",
    "r",
    "k",
    "replications",
    "rmse_sum",
    "rmse_mean",
    "best_lambda_median",
    "runtime_ms",
];

pub fn write_csv<W: Write>(rows: &[StudyRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| MbsError::InvalidArgument(format!("writing CSV: {e}"));
    w.write_record(CSV_COLUMNS).map_err(io)?;
    for row in rows {
        w.write_record([
            row.scenario.name().to_string(),
            row.n.to_string(),
            row.m.to_string(),
            row.r.to_string(),
            row.k.to_string(),
            row.replications.to_string(),
            row.rmse_sum.to_string(),
            row.rmse_mean.to_string(),
            row.best_lambda_median.to_string(),
            format!("{:.3}", row.runtime_ms),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| MbsError::InvalidArgument(format!("writing CSV: {e}")))?;
    Ok(())
}

/// The rows as a JSON array of records.
pub fn to_json(rows: &[StudyRow]) -> String {
    serde_json::to_string_pretty(rows).expect("rows serialize")
}
