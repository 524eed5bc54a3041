//! Estimation of the posterior centre `Q_n†` from observed data.
//!
//! Each observation is pushed through its implicit-CDF value
//! `V_i = P_{i-1}(y_i)` and the copula update, with a rearrangement after
//! every step. The result is averaged over several orderings of the data and
//! the bandwidth constant `c` is chosen by the prequential log score.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QmpError, Result};
use crate::grid::{
    implicit_cdf_sorted, interpolate, quantile_density_into, rearrange_in_place, GridFunction,
    ProperQuantile, UniformGrid, DEFAULT_GRID_SIZE,
};
use crate::kernels::{GridUpdater, Schedule};
use crate::rng::{self, Domain};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Learning-rate constant `a`; `None` uses [`default_learning_rate`].
    pub learning_rate: Option<f64>,
    /// Bandwidth constant `c`; `None` tunes it with [`tune_bandwidth_c`].
    pub bandwidth_c: Option<f64>,
    pub bandwidth_k: f64,
    pub grid_size: usize,
    pub n_permutations: usize,
    pub c_grid_size: usize,
    pub permutation_seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            learning_rate: None,
            bandwidth_c: None,
            bandwidth_k: 0.5,
            grid_size: DEFAULT_GRID_SIZE,
            n_permutations: 10,
            c_grid_size: 20,
            permutation_seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_permutations < 1 {
            return Err(QmpError::InvalidConfig("n_permutations must be >= 1".into()));
        }
        if self.c_grid_size < 2 {
            return Err(QmpError::InvalidConfig("c_grid_size must be >= 2".into()));
        }
        if let Some(a) = self.learning_rate {
            if !(a.is_finite() && a >= 0.0) {
                return Err(QmpError::InvalidConfig(format!(
                    "learning rate must be finite and non-negative, got {a}"
                )));
            }
        }
        UniformGrid::new(self.grid_size)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Permutation-averaged, rearranged `Q_n†`.
    pub posterior_center: ProperQuantile,
    /// Schedule with the resolved `a` and the selected `c`.
    pub schedule: Schedule,
    pub n_obs: usize,
    /// Permutation-averaged prequential log score at the selected `c`.
    pub prequential_score: f64,
    /// `V_i = P_{i-1}(y_i)` along the original data ordering.
    pub per_observation_uniforms: Option<Vec<f64>>,
    /// `(c, score)` for every candidate when `c` was tuned.
    pub c_scores: Option<Vec<(f64, f64)>>,
}

/// Output of a single pass over one ordering of the data.
#[derive(Debug, Clone, PartialEq)]
pub struct SinglePass {
    pub quantile: ProperQuantile,
    pub prequential_score: f64,
    pub uniforms: Vec<f64>,
}

pub(crate) fn validate_observations(y: &[f64], min_len: usize) -> Result<()> {
    if y.len() < min_len {
        return Err(QmpError::DegenerateData(format!(
            "need at least {min_len} observations, got {}",
            y.len()
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(QmpError::DegenerateData(format!(
            "observation {i} is not finite"
        )));
    }
    Ok(())
}

/// `Q₀(u) = min(y) + (max(y) - min(y)) u`, the quantile function of the
/// uniform distribution over the data range.
pub fn init_q0(y: &[f64], grid: &UniformGrid) -> Result<ProperQuantile> {
    validate_observations(y, 1)?;
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(QmpError::DegenerateData(format!(
            "all observations equal {lo}; the data range is empty"
        )));
    }
    let values = grid.points().iter().map(|&u| lo + (hi - lo) * u).collect();
    ProperQuantile::from_sorted(grid.clone(), values)
}

/// `√12` times the sample standard deviation (denominator `n - 1`).
pub fn default_learning_rate(y: &[f64]) -> Result<f64> {
    validate_observations(y, 2)?;
    let sd = stats::sample_sd(y);
    if !(sd > 0.0) {
        return Err(QmpError::DegenerateData(
            "sample variance is zero; the learning rate is undefined".into(),
        ));
    }
    Ok(12f64.sqrt() * sd)
}

/// One rearranged pass over `y` in the given order, starting at `q0`.
///
/// The prequential score is `-Σ log q†_{i-1}(V_i)` with the finite-difference
/// quantile density interpolated at `V_i`.
pub fn fit_once_from(q0: &ProperQuantile, y: &[f64], schedule: &Schedule) -> SinglePass {
    let grid = q0.grid().clone();
    let points = grid.points();
    let spacing = grid.spacing();
    let updater = GridUpdater::new(points);
    let mut values = q0.values().to_vec();
    let mut density = vec![0.0; values.len()];
    let mut score = 0.0;
    let mut uniforms = Vec::with_capacity(y.len());
    for (idx, &obs) in y.iter().enumerate() {
        let i = idx + 1;
        let v = implicit_cdf_sorted(points, &values, obs);
        quantile_density_into(&values, spacing, &mut density);
        score -= interpolate(points, &density, v).ln();
        uniforms.push(v);
        updater.apply(&mut values, schedule.alpha(i), v, schedule.rho(i));
        rearrange_in_place(&mut values);
    }
    SinglePass {
        quantile: ProperQuantile::from_sorted(grid, values)
            .expect("rearranged values are sorted and finite"),
        prequential_score: score,
        uniforms,
    }
}

/// [`fit_once_from`] starting from [`init_q0`].
pub fn fit_once(y: &[f64], schedule: &Schedule, grid: &UniformGrid) -> Result<SinglePass> {
    schedule.validate()?;
    let q0 = init_q0(y, grid)?;
    Ok(fit_once_from(&q0, y, schedule))
}

/// The data orderings used for permutation averaging. Ordering 0 is the
/// original order; ordering `m` is a shuffle drawn from stream `m`.
pub fn permutations(y: &[f64], n_permutations: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..n_permutations)
        .map(|m| {
            let mut perm = y.to_vec();
            if m > 0 {
                let mut rng = rng::stream(seed, Domain::Permutation, m as u64);
                perm.shuffle(&mut rng);
            }
            perm
        })
        .collect()
}

/// Candidate bandwidth constants `c_m = m / (size + 1)`, `m = 1..=size`.
pub fn c_candidates(size: usize) -> Vec<f64> {
    (1..=size).map(|m| m as f64 / (size + 1) as f64).collect()
}

/// Arg-max of `score` over [`c_candidates`]; ties go to the smaller `c`.
/// Returns the selected `c` and the full `(c, score)` table.
pub fn select_c<F>(size: usize, score: F) -> Result<(f64, Vec<(f64, f64)>)>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let cands = c_candidates(size);
    let scores = cands
        .par_iter()
        .map(|&c| score(c))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (m, s) in scores.iter().enumerate() {
        if *s > scores[best] || scores[best].is_nan() && !s.is_nan() {
            best = m;
        }
    }
    let table = cands.iter().copied().zip(scores).collect();
    Ok((cands[best], table))
}

fn averaged_score(q0: &ProperQuantile, orderings: &[Vec<f64>], schedule: &Schedule) -> f64 {
    let scores: Vec<f64> = orderings
        .par_iter()
        .map(|ys| fit_once_from(q0, ys, schedule).prequential_score)
        .collect();
    scores.iter().sum::<f64>() / scores.len() as f64
}

/// Selects `c` by maximising the permutation-averaged prequential log score.
pub fn tune_bandwidth_c(y: &[f64], config: &FitConfig) -> Result<f64> {
    Ok(tune_bandwidth_c_table(y, config)?.0)
}

fn tune_bandwidth_c_table(y: &[f64], config: &FitConfig) -> Result<(f64, Vec<(f64, f64)>)> {
    config.validate()?;
    let grid = UniformGrid::new(config.grid_size)?;
    let q0 = init_q0(y, &grid)?;
    let a = match config.learning_rate {
        Some(a) => a,
        None => default_learning_rate(y)?,
    };
    let orderings = permutations(y, config.n_permutations, config.permutation_seed);
    select_c(config.c_grid_size, |c| {
        let schedule = Schedule::new(a, c, config.bandwidth_k)?;
        Ok(averaged_score(&q0, &orderings, &schedule))
    })
}

/// Fits `Q_n†`: resolves `a`, tunes `c` unless given, runs one pass per
/// ordering, averages the passes pointwise and rearranges the average.
pub fn fit(y: &[f64], config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    validate_observations(y, 2)?;
    let grid = UniformGrid::new(config.grid_size)?;
    let q0 = init_q0(y, &grid)?;
    let a = match config.learning_rate {
        Some(a) => a,
        None => default_learning_rate(y)?,
    };
    let (c, c_scores) = match config.bandwidth_c {
        Some(c) => (c, None),
        None => {
            let (c, table) = tune_bandwidth_c_table(y, config)?;
            (c, Some(table))
        }
    };
    let schedule = Schedule::new(a, c, config.bandwidth_k)?;
    let orderings = permutations(y, config.n_permutations, config.permutation_seed);
    let passes: Vec<SinglePass> = orderings
        .par_iter()
        .map(|ys| fit_once_from(&q0, ys, &schedule))
        .collect();

    let n_u = grid.size();
    let mut avg = vec![0.0; n_u];
    for pass in &passes {
        for (a, v) in avg.iter_mut().zip(pass.quantile.values()) {
            *a += v;
        }
    }
    let m = passes.len() as f64;
    for a in avg.iter_mut() {
        *a /= m;
    }
    rearrange_in_place(&mut avg);
    let score = passes.iter().map(|p| p.prequential_score).sum::<f64>() / m;
    let uniforms = passes.into_iter().next().map(|p| p.uniforms);

    Ok(FitResult {
        posterior_center: ProperQuantile::from_sorted(grid, avg)?,
        schedule,
        n_obs: y.len(),
        prequential_score: score,
        per_observation_uniforms: uniforms,
        c_scores,
    })
}
