//! Monte-Carlo harness: repeated simulate-estimate runs over a grid of
//! diffusivities, with per-diffusivity aggregates (bias, variance, MSE,
//! interval coverage, studentized-error normality) and a log-log rate fit
//! of MSE against diffusivity.
//!
//! Run `r` at diffusivity index `i` uses the seed
//! `derive_seed(base_seed, i, r)`, so any run can be reproduced in
//! isolation. Runs execute in a dedicated thread pool; results are
//! collected in run order and aggregated sequentially, so every number is
//! independent of the worker count and of scheduling.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimate::{
    estimate_global, estimate_localized, estimate_spectral, EstimateResult, KnownPhysics, Window,
};
use crate::grid::GridSpec;
use crate::model::ModelSpec;
use crate::simulate::{simulate_with, ForwardPolicy, SimOptions};
use crate::stats::ks_distance_to_normal;

/// Which estimator the harness runs on each simulated trajectory.
#[derive(Clone, Debug)]
pub enum EstimatorChoice {
    Global,
    Localized(Window),
    Spectral { modes: Option<usize> },
}

/// Full experiment description.
#[derive(Clone, Debug)]
pub struct McConfig {
    /// Model template; its diffusivity is overridden per sweep point and
    /// its intensity must be constant (it is the target of the study).
    pub model: ModelSpec,
    pub grid: GridSpec,
    /// Diffusivity sweep, typically decreasing.
    pub nus: Vec<f64>,
    /// Runs per diffusivity.
    pub runs: usize,
    pub base_seed: u64,
    /// Miscoverage level for the per-run confidence intervals.
    pub alpha_bar: f64,
    pub estimator: EstimatorChoice,
    pub forward: ForwardPolicy,
    pub sim: SimOptions,
}

impl McConfig {
    /// Validates the whole configuration and returns the true intensity.
    pub fn validate(&self) -> Result<f64> {
        let true_theta = self.model.theta().as_const().ok_or_else(|| {
            Error::invalid("the harness needs a constant true intensity to measure errors against")
        })?;
        if self.runs < 2 {
            return Err(Error::invalid(format!("runs = {} but at least 2 are needed", self.runs)));
        }
        if self.nus.is_empty() {
            return Err(Error::invalid("the diffusivity sweep is empty"));
        }
        for (i, &nu) in self.nus.iter().enumerate() {
            if !(nu.is_finite() && nu > 0.0) {
                return Err(Error::invalid(format!("sweep diffusivity #{i} = {nu} must be positive")));
            }
            if self.nus[..i].contains(&nu) {
                return Err(Error::invalid(format!("sweep diffusivity {nu} appears twice")));
            }
        }
        if !(self.alpha_bar > 0.0 && self.alpha_bar < 1.0) {
            return Err(Error::invalid(format!(
                "miscoverage level alpha_bar = {} must lie in (0, 1)",
                self.alpha_bar
            )));
        }
        // Deterministic failures should surface here, not once per run.
        if self.model.dom().modes() > self.grid.m() - 1 {
            return Err(Error::invalid(format!(
                "truncation K = {} exceeds the grid capacity M - 1 = {}",
                self.model.dom().modes(),
                self.grid.m() - 1
            )));
        }
        self.model.sigma().nodal(self.grid.m())?;
        if !self.model.reaction().linear_growth()
            && self.grid.n() < self.grid.m().saturating_mul(self.grid.m())
            && !self.sim.force
        {
            return Err(Error::MeshGuard { m: self.grid.m(), n: self.grid.n() });
        }
        Ok(true_theta)
    }
}

/// What one run produced.
#[derive(Clone, Debug)]
pub enum RunOutcome {
    Estimate(EstimateResult),
    BlowUp { step: usize, sup: f64 },
    Failed { code: &'static str, message: String },
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub outcome: RunOutcome,
}

impl RunRecord {
    pub fn estimate(&self) -> Option<&EstimateResult> {
        match &self.outcome {
            RunOutcome::Estimate(e) => Some(e),
            _ => None,
        }
    }
}

/// Aggregates over the usable runs at one diffusivity. The variance is the
/// population variance over the runs, so `mse = bias^2 + variance` holds
/// as an identity.
#[derive(Clone, Debug)]
pub struct NuAggregates {
    pub used: usize,
    pub mean: f64,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    /// Fraction of runs whose interval contains the true intensity.
    pub coverage: f64,
    /// Mean of the studentized errors `sqrt(fisher) (theta_hat - theta)`.
    pub z_mean: f64,
    /// Population variance of the studentized errors.
    pub z_var: f64,
    /// Kolmogorov-Smirnov distance of the studentized errors from the
    /// standard normal.
    pub ks: f64,
}

#[derive(Clone, Debug)]
pub struct NuResult {
    pub nu: f64,
    pub attempted: usize,
    pub blowups: usize,
    pub records: Vec<RunRecord>,
    /// `None` when no run was usable.
    pub aggregates: Option<NuAggregates>,
}

#[derive(Clone, Debug)]
pub struct McResult {
    pub true_theta: f64,
    pub alpha_bar: f64,
    pub base_seed: u64,
    pub per_nu: Vec<NuResult>,
}

impl McResult {
    /// `(nu, mse)` pairs for every sweep point with usable runs.
    pub fn mse_points(&self) -> Vec<(f64, f64)> {
        self.per_nu
            .iter()
            .filter_map(|r| r.aggregates.as_ref().map(|a| (r.nu, a.mse)))
            .collect()
    }
}

/// Per-run seed: an avalanche mix of the base seed with the sweep index
/// and run index, so distinct cells get unrelated generator states.
pub fn derive_seed(base: u64, stream: u64, run: u64) -> u64 {
    let mut z = base
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ run.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    for _ in 0..2 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Worker count from `SPDE_LAB_THREADS`; unset, empty, or `0` means pick
/// automatically.
pub fn workers_from_env() -> Option<usize> {
    match std::env::var("SPDE_LAB_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(0) | Err(_) => None,
            Ok(n) => Some(n),
        },
        Err(_) => None,
    }
}

fn run_one(cfg: &McConfig, nu_index: usize, run: usize) -> RunRecord {
    let nu = cfg.nus[nu_index];
    let seed = derive_seed(cfg.base_seed, nu_index as u64, run as u64);
    let outcome = (|| -> Result<EstimateResult> {
        let model = cfg.model.clone().with_nu(nu)?;
        let traj = simulate_with(&model, &cfg.grid, seed, &cfg.sim)?;
        let phys = KnownPhysics::new(
            model.dom().clone(),
            nu,
            model.reaction().clone(),
            model.sigma().clone(),
            cfg.forward,
        )?;
        match &cfg.estimator {
            EstimatorChoice::Global => estimate_global(&traj, &phys, cfg.alpha_bar),
            EstimatorChoice::Localized(w) => estimate_localized(&traj, &phys, w, cfg.alpha_bar),
            EstimatorChoice::Spectral { modes } => {
                estimate_spectral(&traj, &phys, *modes, cfg.alpha_bar)
            }
        }
    })();
    let outcome = match outcome {
        Ok(est) => RunOutcome::Estimate(est),
        Err(Error::BlowUp { step, sup }) => RunOutcome::BlowUp { step, sup },
        Err(e) => RunOutcome::Failed { code: e.code(), message: e.to_string() },
    };
    RunRecord { run, seed, outcome }
}

fn aggregate(nu: f64, true_theta: f64, records: Vec<RunRecord>) -> Result<NuResult> {
    let attempted = records.len();
    let blowups = records
        .iter()
        .filter(|r| matches!(r.outcome, RunOutcome::BlowUp { .. }))
        .count();
    if blowups * 10 > attempted {
        return Err(Error::TooManyBlowups { nu, blowups, attempted });
    }
    let estimates: Vec<&EstimateResult> = records.iter().filter_map(|r| r.estimate()).collect();
    let aggregates = if estimates.is_empty() {
        None
    } else {
        let used = estimates.len();
        let n = used as f64;
        let mean = estimates.iter().map(|e| e.theta_hat).sum::<f64>() / n;
        let bias = mean - true_theta;
        let variance =
            estimates.iter().map(|e| (e.theta_hat - mean).powi(2)).sum::<f64>() / n;
        let mse =
            estimates.iter().map(|e| (e.theta_hat - true_theta).powi(2)).sum::<f64>() / n;
        let coverage = estimates
            .iter()
            .filter(|e| e.ci.0 <= true_theta && true_theta <= e.ci.1)
            .count() as f64
            / n;
        let z: Vec<f64> = estimates
            .iter()
            .map(|e| (e.theta_hat - true_theta) * e.fisher.sqrt())
            .collect();
        let z_mean = z.iter().sum::<f64>() / n;
        let z_var = z.iter().map(|v| (v - z_mean).powi(2)).sum::<f64>() / n;
        let ks = ks_distance_to_normal(&z)?;
        Some(NuAggregates { used, mean, bias, variance, mse, coverage, z_mean, z_var, ks })
    };
    Ok(NuResult { nu, attempted, blowups, records, aggregates })
}

/// Runs the experiment with the worker count taken from the environment.
pub fn run_mc(cfg: &McConfig) -> Result<McResult> {
    run_mc_with_workers(cfg, workers_from_env())
}

/// Runs the experiment on `workers` threads (`None` picks automatically).
/// The output is identical for every worker count.
pub fn run_mc_with_workers(cfg: &McConfig, workers: Option<usize>) -> Result<McResult> {
    let true_theta = cfg.validate()?;
    let cells: Vec<(usize, usize)> = (0..cfg.nus.len())
        .flat_map(|i| (0..cfg.runs).map(move |r| (i, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
    let mut records: Vec<RunRecord> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(i, r)| run_one(cfg, i, r))
            .collect()
    });

    let mut chunks = Vec::with_capacity(cfg.nus.len());
    for _ in 0..cfg.nus.len() {
        let chunk = records.split_off(records.len() - cfg.runs);
        debug_assert!(chunk.iter().enumerate().all(|(r, rec)| rec.run == r));
        chunks.push(chunk);
    }
    chunks.reverse();
    let mut per_nu = Vec::with_capacity(cfg.nus.len());
    for (&nu, chunk) in cfg.nus.iter().zip(chunks) {
        per_nu.push(aggregate(nu, true_theta, chunk)?);
    }
    Ok(McResult {
        true_theta,
        alpha_bar: cfg.alpha_bar,
        base_seed: cfg.base_seed,
        per_nu,
    })
}

/// Requires at least 30 usable runs before reporting coverage and
/// normality diagnostics for one sweep point.
pub fn coverage_and_normality(result: &NuResult) -> Result<NuAggregates> {
    let aggregates = result
        .aggregates
        .as_ref()
        .ok_or(Error::TooFewRuns { got: 0, need: 30 })?;
    if aggregates.used < 30 {
        return Err(Error::TooFewRuns { got: aggregates.used, need: 30 });
    }
    Ok(aggregates.clone())
}

/// Ordinary least squares of `ln mse` on `ln nu`.
#[derive(Clone, Copy, Debug)]
pub struct RateFit {
    /// Exponent in `mse ~ nu^slope`.
    pub slope: f64,
    /// `ln` of the prefactor.
    pub intercept: f64,
    pub r2: f64,
    pub n_points: usize,
}

/// Fits `ln mse = intercept + slope ln nu` over at least three sweep
/// points with positive, distinct diffusivities and positive MSEs.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::RateFitInput {
            what: format!("need at least 3 sweep points, got {}", points.len()),
        });
    }
    for (i, &(nu, mse)) in points.iter().enumerate() {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::RateFitInput { what: format!("diffusivity #{i} = {nu} not positive") });
        }
        if !(mse.is_finite() && mse > 0.0) {
            return Err(Error::RateFitInput { what: format!("MSE #{i} = {mse} not positive") });
        }
        if points[..i].iter().any(|&(prev, _)| prev == nu) {
            return Err(Error::RateFitInput { what: format!("diffusivity {nu} appears twice") });
        }
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(nu, _)| nu.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, mse)| mse.ln()).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - y_mean).powi(2)).sum();
    let r2 = if ss_tot <= f64::MIN_POSITIVE {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(RateFit { slope, intercept, r2, n_points: points.len() })
}
