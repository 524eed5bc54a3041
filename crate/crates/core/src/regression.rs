//! Linear quantile regression, `Q(u | x) = β(u)ᵀ x`, with the copula update
//! applied to the coefficient functions.
//!
//! Fitting and sampling run on standardized data (response and non-intercept
//! covariates centred and scaled by their population sd); coefficients are
//! mapped back to the original scale on output.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QmpError, Result};
use crate::estimation::{select_c, FitConfig};
use crate::grid::{
    implicit_cdf_sorted, interpolate, quantile_density_into, rearrange_in_place,
    ProperQuantile, UniformGrid,
};
use crate::kernels::{GridUpdater, Schedule};
use crate::resampling::{
    cholesky_lower, gp_kernel_matrix, lower_matvec, standard_normals, Functional, PosteriorDraws,
    SampleMode, DEFAULT_EXTRA_STEPS, DEFAULT_GP_JITTER,
};
use crate::rng::{self, Domain};
use crate::stats;

/// Per-column location and scale. Column 0 is the intercept and keeps
/// mean 0, sd 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub y_mean: f64,
    pub y_sd: f64,
    pub x_mean: Vec<f64>,
    pub x_sd: Vec<f64>,
}

/// Response `y` and design `X` (row-major, `n × p`, first column all ones).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegDataset {
    y: Vec<f64>,
    x: Vec<f64>,
    p: usize,
    standardization: Standardization,
}

impl RegDataset {
    pub fn new(y: Vec<f64>, design: Vec<Vec<f64>>) -> Result<Self> {
        let n = y.len();
        if design.len() != n {
            return Err(QmpError::DimensionMismatch {
                expected: n,
                got: design.len(),
            });
        }
        let p = design.first().map_or(1, Vec::len);
        if p == 0 {
            return Err(QmpError::DimensionMismatch { expected: 1, got: 0 });
        }
        if n < p + 1 {
            return Err(QmpError::DegenerateData(format!(
                "need at least {} rows for {p} coefficients, got {n}",
                p + 1
            )));
        }
        let mut x = Vec::with_capacity(n * p);
        for (i, row) in design.iter().enumerate() {
            if row.len() != p {
                return Err(QmpError::DimensionMismatch {
                    expected: p,
                    got: row.len(),
                });
            }
            if row[0] != 1.0 {
                return Err(QmpError::DegenerateData(format!(
                    "row {i}: first design column must be the intercept 1, got {}",
                    row[0]
                )));
            }
            x.extend_from_slice(row);
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(QmpError::DegenerateData(format!("response {i} is not finite")));
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(QmpError::DegenerateData(format!(
                "row {} column {}: covariate is not finite",
                k / p,
                k % p
            )));
        }

        let y_sd = stats::population_sd(&y);
        if !(y_sd > 0.0) {
            return Err(QmpError::DegenerateData("response has zero variance".into()));
        }
        let mut x_mean = vec![0.0; p];
        let mut x_sd = vec![1.0; p];
        for j in 1..p {
            let col: Vec<f64> = (0..n).map(|i| x[i * p + j]).collect();
            x_mean[j] = stats::mean(&col);
            x_sd[j] = stats::population_sd(&col);
            if !(x_sd[j] > 0.0) {
                return Err(QmpError::DegenerateData(format!(
                    "covariate column {j} has zero variance"
                )));
            }
        }
        let standardization = Standardization {
            y_mean: stats::mean(&y),
            y_sd,
            x_mean,
            x_sd,
        };
        Ok(RegDataset {
            y,
            x,
            p,
            standardization,
        })
    }

    /// Builds the design by prepending an intercept column to `covariates`.
    pub fn with_intercept(y: Vec<f64>, covariates: Vec<Vec<f64>>) -> Result<Self> {
        let design = covariates
            .into_iter()
            .map(|row| std::iter::once(1.0).chain(row).collect())
            .collect();
        Self::new(y, design)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    pub fn standardized_y(&self) -> Vec<f64> {
        let s = &self.standardization;
        self.y.iter().map(|v| (v - s.y_mean) / s.y_sd).collect()
    }

    /// Row-major standardized design, intercept column left at 1.
    pub fn standardized_x(&self) -> Vec<f64> {
        let s = &self.standardization;
        self.x
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let j = k % self.p;
                if j == 0 {
                    1.0
                } else {
                    (v - s.x_mean[j]) / s.x_sd[j]
                }
            })
            .collect()
    }

    /// `(1/n) Σ x̃_i x̃_iᵀ` on the standardized design, intercept included.
    pub fn covariance_estimate(&self) -> DMatrix<f64> {
        let xs = self.standardized_x();
        let n = self.n();
        let w = vec![1.0 / n as f64; n];
        weighted_gram(&xs, self.p, &w)
    }
}

impl Standardization {
    pub fn y_to_original(&self, ys: f64) -> f64 {
        self.y_mean + self.y_sd * ys
    }

    pub fn x_to_original(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter()
            .enumerate()
            .map(|(j, v)| if j == 0 { 1.0 } else { self.x_mean[j] + self.x_sd[j] * v })
            .collect()
    }

    /// Maps standardized coefficients `β̃` (length `p`) to the original scale.
    pub fn coefficients_to_original(&self, bs: &[f64]) -> Vec<f64> {
        let p = bs.len();
        let mut out = vec![0.0; p];
        let mut shift = 0.0;
        for j in 1..p {
            out[j] = self.y_sd * bs[j] / self.x_sd[j];
            shift += out[j] * self.x_mean[j];
        }
        out[0] = self.y_mean + self.y_sd * bs[0] - shift;
        out
    }
}

fn weighted_gram(xs: &[f64], p: usize, w: &[f64]) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(p, p);
    for (row, &wk) in xs.chunks_exact(p).zip(w) {
        for a in 0..p {
            for b in 0..=a {
                g[(a, b)] += wk * row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            g[(b, a)] = g[(a, b)];
        }
    }
    g
}

/// Coefficient functions on the grid, `coeffs[j * n_U + m] = β_j(u_m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientGrid {
    pub grid: UniformGrid,
    pub p: usize,
    pub coeffs: Vec<f64>,
}

impl CoefficientGrid {
    pub fn zeros(grid: UniformGrid, p: usize) -> Self {
        let coeffs = vec![0.0; p * grid.size()];
        CoefficientGrid { grid, p, coeffs }
    }

    pub fn coefficient(&self, j: usize) -> &[f64] {
        let n = self.grid.size();
        &self.coeffs[j * n..(j + 1) * n]
    }

    /// `∫ β_j(u) du` for every `j`.
    pub fn integrated(&self) -> Vec<f64> {
        (0..self.p)
            .map(|j| crate::grid::mean_of_values(self.coefficient(j)))
            .collect()
    }

    pub fn to_original(&self, s: &Standardization) -> CoefficientGrid {
        map_coefficients(&self.coeffs, self.grid.size(), self.p, s, &self.grid)
    }
}

fn map_coefficients(
    coeffs: &[f64],
    n_u: usize,
    p: usize,
    s: &Standardization,
    grid: &UniformGrid,
) -> CoefficientGrid {
    let mut out = vec![0.0; p * n_u];
    let mut col = vec![0.0; p];
    for m in 0..n_u {
        for (j, c) in col.iter_mut().enumerate() {
            *c = coeffs[j * n_u + m];
        }
        for (j, v) in s.coefficients_to_original(&col).into_iter().enumerate() {
            out[j * n_u + m] = v;
        }
    }
    CoefficientGrid {
        grid: grid.clone(),
        p,
        coeffs: out,
    }
}

fn combine_into(coeffs: &[f64], n_u: usize, x: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (j, &xj) in x.iter().enumerate() {
        for (o, b) in out.iter_mut().zip(&coeffs[j * n_u..(j + 1) * n_u]) {
            *o += b * xj;
        }
    }
}

/// `Σ_j β_j(u_m) x_j` before rearrangement.
pub fn conditional_values(beta: &CoefficientGrid, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != beta.p {
        return Err(QmpError::DimensionMismatch {
            expected: beta.p,
            got: x.len(),
        });
    }
    let mut out = vec![0.0; beta.grid.size()];
    combine_into(&beta.coeffs, beta.grid.size(), x, &mut out);
    Ok(out)
}

/// Increasing rearrangement of `β(u)ᵀ x`.
pub fn conditional_quantile(beta: &CoefficientGrid, x: &[f64]) -> Result<ProperQuantile> {
    let mut v = conditional_values(beta, x)?;
    rearrange_in_place(&mut v);
    ProperQuantile::from_sorted(beta.grid.clone(), v)
}

fn reg_init_values(y: &[f64], grid: &UniformGrid, p: usize) -> Result<CoefficientGrid> {
    let q25 = stats::quantile(y, 0.25);
    let q75 = stats::quantile(y, 0.75);
    if !(q75 > q25) {
        return Err(QmpError::DegenerateData(format!(
            "lower and upper quartiles coincide at {q25}"
        )));
    }
    let slope = (q75 - q25) / 0.5;
    let mut beta = CoefficientGrid::zeros(grid.clone(), p);
    for (b, &u) in beta.coeffs.iter_mut().zip(grid.points()) {
        *b = q25 + slope * (u - 0.25);
    }
    Ok(beta)
}

/// Intercept on the line through the quartiles of `y`, other coefficients
/// zero.
pub fn reg_init(data: &RegDataset, grid: &UniformGrid) -> Result<CoefficientGrid> {
    reg_init_values(data.y(), grid, data.p())
}

/// Determinant of the covariance of the standardized non-intercept
/// covariates (1 when there are none). Errors when the design is singular.
pub fn check_design(data: &RegDataset) -> Result<f64> {
    let p = data.p();
    if p == 1 {
        return Ok(1.0);
    }
    let det = data
        .covariance_estimate()
        .view((1, 1), (p - 1, p - 1))
        .into_owned()
        .determinant();
    if !(det > 1e-10) {
        return Err(QmpError::SingularDesign(format!(
            "covariate covariance is singular (determinant {det:.3e})"
        )));
    }
    Ok(det)
}

/// `√12 σ̂ / det Σ̂_x`, with `σ̂` the least-squares residual sd of the
/// standardized response and `Σ̂_x` the covariance of the standardized
/// non-intercept covariates.
pub fn reg_default_learning_rate(data: &RegDataset) -> Result<f64> {
    let p = data.p();
    let n = data.n();
    let det = check_design(data)?;
    let xs = data.standardized_x();
    let ys = data.standardized_y();
    let xm = DMatrix::from_row_slice(n, p, &xs);
    let yv = DVector::from_vec(ys);
    let xtx = xm.transpose() * &xm;
    let xty = xm.transpose() * &yv;
    let chol = nalgebra::linalg::Cholesky::new(xtx)
        .ok_or_else(|| QmpError::SingularDesign("normal equations are singular".into()))?;
    let beta = chol.solve(&xty);
    let resid = yv - xm * beta;
    let dof = (n - p) as f64;
    let sigma = (resid.norm_squared() / dof).sqrt();
    if !(sigma > 0.0) {
        return Err(QmpError::DegenerateData(
            "least-squares residuals are all zero".into(),
        ));
    }
    Ok(12f64.sqrt() * sigma / det)
}

/// One pass in the given row order on standardized data. Returns the
/// coefficients and the prequential log score.
fn reg_pass(
    beta0: &CoefficientGrid,
    xs: &[f64],
    ys: &[f64],
    order: &[usize],
    schedule: &Schedule,
) -> (CoefficientGrid, f64) {
    let grid = &beta0.grid;
    let n_u = grid.size();
    let p = beta0.p;
    let points = grid.points();
    let updater = GridUpdater::new(points);
    let mut beta = beta0.clone();
    let mut cq = vec![0.0; n_u];
    let mut density = vec![0.0; n_u];
    let mut terms = vec![0.0; n_u];
    let mut score = 0.0;
    for (step, &r) in order.iter().enumerate() {
        let i = step + 1;
        let x = &xs[r * p..(r + 1) * p];
        combine_into(&beta.coeffs, n_u, x, &mut cq);
        rearrange_in_place(&mut cq);
        let v = implicit_cdf_sorted(points, &cq, ys[r]);
        quantile_density_into(&cq, grid.spacing(), &mut density);
        score -= interpolate(points, &density, v).ln();
        updater.terms_into(v, schedule.rho(i), &mut terms);
        let alpha = schedule.alpha(i);
        apply_rank_one(&mut beta.coeffs, n_u, alpha, &terms, x);
    }
    (beta, score)
}

fn apply_rank_one(coeffs: &mut [f64], n_u: usize, alpha: f64, terms: &[f64], x: &[f64]) {
    for (j, &xj) in x.iter().enumerate() {
        let w = alpha * xj;
        for (b, t) in coeffs[j * n_u..(j + 1) * n_u].iter_mut().zip(terms) {
            *b += w * t;
        }
    }
}

fn row_orders(n: usize, n_permutations: usize, seed: u64) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    (0..n_permutations)
        .map(|m| {
            let mut order: Vec<usize> = (0..n).collect();
            if m > 0 {
                let mut rng = rng::stream(seed, Domain::Permutation, m as u64);
                order.shuffle(&mut rng);
            }
            order
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegFitResult {
    /// Coefficients on the standardized scale, used for sampling.
    pub standardized: CoefficientGrid,
    /// Coefficients on the original scale.
    pub coefficients: CoefficientGrid,
    pub schedule: Schedule,
    pub n_obs: usize,
    pub prequential_score: f64,
    pub standardization: Standardization,
    pub c_scores: Option<Vec<(f64, f64)>>,
}

/// Fits the coefficient functions, averaging over orderings and tuning `c`
/// by the regression prequential score unless `config.bandwidth_c` is set.
pub fn reg_fit(data: &RegDataset, config: &FitConfig) -> Result<RegFitResult> {
    config.validate()?;
    check_design(data)?;
    let grid = UniformGrid::new(config.grid_size)?;
    let xs = data.standardized_x();
    let ys = data.standardized_y();
    let beta0 = reg_init_values(&ys, &grid, data.p())?;
    let a = match config.learning_rate {
        Some(a) => a,
        None => reg_default_learning_rate(data)?,
    };
    let orders = row_orders(data.n(), config.n_permutations, config.permutation_seed);
    let run_all = |schedule: &Schedule| -> Vec<(CoefficientGrid, f64)> {
        orders
            .par_iter()
            .map(|o| reg_pass(&beta0, &xs, &ys, o, schedule))
            .collect()
    };
    let (c, c_scores) = match config.bandwidth_c {
        Some(c) => (c, None),
        None => {
            let (c, table) = select_c(config.c_grid_size, |c| {
                let s = Schedule::new(a, c, config.bandwidth_k)?;
                let runs = run_all(&s);
                Ok(runs.iter().map(|r| r.1).sum::<f64>() / runs.len() as f64)
            })?;
            (c, Some(table))
        }
    };
    let schedule = Schedule::new(a, c, config.bandwidth_k)?;
    let runs = run_all(&schedule);
    let m = runs.len() as f64;
    let mut avg = CoefficientGrid::zeros(grid.clone(), data.p());
    for (beta, _) in &runs {
        for (a, b) in avg.coeffs.iter_mut().zip(&beta.coeffs) {
            *a += b;
        }
    }
    for a in avg.coeffs.iter_mut() {
        *a /= m;
    }
    let score = runs.iter().map(|r| r.1).sum::<f64>() / m;
    let s = data.standardization().clone();
    Ok(RegFitResult {
        coefficients: avg.to_original(&s),
        standardized: avg,
        schedule,
        n_obs: data.n(),
        prequential_score: score,
        standardization: s,
        c_scores,
    })
}

/// Flat Dirichlet weights from normalized unit exponentials.
pub fn bb_weights<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= total;
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CovariateWeights {
    /// A fresh `Dir(1, …, 1)` draw for every posterior sample.
    FlatDirichlet,
    /// The same weights for every sample.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegSampleConfig {
    pub n_samples: usize,
    pub horizon: Option<usize>,
    pub seed: u64,
    pub mode: SampleMode,
    pub weights: CovariateWeights,
    pub gp_jitter: f64,
}

impl Default for RegSampleConfig {
    fn default() -> Self {
        RegSampleConfig {
            n_samples: 5000,
            horizon: None,
            seed: 0,
            mode: SampleMode::Approximate,
            weights: CovariateWeights::FlatDirichlet,
            gp_jitter: DEFAULT_GP_JITTER,
        }
    }
}

impl RegSampleConfig {
    pub fn resolved_horizon(&self, n_obs: usize) -> usize {
        self.horizon.unwrap_or(n_obs + DEFAULT_EXTRA_STEPS)
    }

    fn validate(&self, n_obs: usize) -> Result<()> {
        if self.n_samples == 0 {
            return Err(QmpError::InvalidConfig("n_samples must be positive".into()));
        }
        if self.resolved_horizon(n_obs) < n_obs {
            return Err(QmpError::InvalidConfig(format!(
                "horizon {} is below the number of observations {n_obs}",
                self.resolved_horizon(n_obs)
            )));
        }
        if let CovariateWeights::Fixed(w) = &self.weights {
            if w.len() != n_obs {
                return Err(QmpError::DimensionMismatch {
                    expected: n_obs,
                    got: w.len(),
                });
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(QmpError::InvalidConfig("weights must be non-negative".into()));
            }
        }
        Ok(())
    }

    fn weights<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        match &self.weights {
            CovariateWeights::FlatDirichlet => bb_weights(n, rng),
            CovariateWeights::Fixed(w) => w.clone(),
        }
    }
}

/// Posterior coefficient draws on the standardized scale,
/// `draws[(b * p + j) * n_U + m] = β̃_j(u_m)` for sample `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegPosteriorDraws {
    pub grid: UniformGrid,
    pub p: usize,
    pub n_samples: usize,
    pub center: CoefficientGrid,
    pub standardization: Standardization,
    pub draws: Vec<f64>,
}

impl RegPosteriorDraws {
    pub fn sample_coeffs(&self, b: usize) -> &[f64] {
        let w = self.p * self.grid.size();
        &self.draws[b * w..(b + 1) * w]
    }

    /// `∫ β̃_j du` for one sample, standardized scale.
    pub fn beta_bar(&self, b: usize) -> Vec<f64> {
        let n_u = self.grid.size();
        self.sample_coeffs(b)
            .chunks_exact(n_u)
            .map(crate::grid::mean_of_values)
            .collect()
    }

    /// `∫ β_j du` for one sample, original scale.
    pub fn beta_bar_original(&self, b: usize) -> Vec<f64> {
        self.standardization
            .coefficients_to_original(&self.beta_bar(b))
    }

    pub fn sample_original(&self, b: usize) -> CoefficientGrid {
        map_coefficients(
            self.sample_coeffs(b),
            self.grid.size(),
            self.p,
            &self.standardization,
            &self.grid,
        )
    }

    /// Posterior draws of `Q(· | x)` for an original-scale design row `x`.
    pub fn conditional_draws(&self, x: &[f64], functionals: &[Functional]) -> Result<PosteriorDraws> {
        let center_orig = self.center.to_original(&self.standardization);
        let center = conditional_quantile(&center_orig, x)?;
        let n_u = self.grid.size();
        let mut rows = vec![0.0; self.n_samples * n_u];
        rows.par_chunks_mut(n_u).enumerate().for_each(|(b, row)| {
            let beta = self.sample_original(b);
            combine_into(&beta.coeffs, n_u, x, row);
            rearrange_in_place(row);
        });
        let mut fs = vec![Functional::Mean];
        fs.extend(functionals.iter().copied().filter(|f| *f != Functional::Mean));
        Ok(PosteriorDraws::from_rows(center, rows, &fs, None))
    }
}

/// Weighted-empirical row sampler on cumulative weights.
fn cumulative(w: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    w.iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

fn draw_row<R: Rng>(cum: &[f64], rng: &mut R) -> usize {
    let total = *cum.last().expect("non-empty weights");
    let r = rng.random::<f64>() * total;
    cum.partition_point(|&c| c <= r).min(cum.len() - 1)
}

/// Exact regression resampling: per sample, draw covariate weights, then for
/// `i = n+1..N` draw a covariate row from the weighted empirical
/// distribution and `V_i ~ U(0,1)` and apply the rank-one update.
pub fn reg_sample_exact(
    fit: &RegFitResult,
    data: &RegDataset,
    config: &RegSampleConfig,
) -> Result<RegPosteriorDraws> {
    config.validate(data.n())?;
    check_fit_matches(fit, data)?;
    let xs = data.standardized_x();
    let p = data.p();
    let n_u = fit.standardized.grid.size();
    let horizon = config.resolved_horizon(fit.n_obs);
    let updater = GridUpdater::new(fit.standardized.grid.points());
    let s = &fit.schedule;
    let mut draws = vec![0.0; config.n_samples * p * n_u];
    draws
        .par_chunks_mut(p * n_u)
        .enumerate()
        .for_each(|(b, out)| {
            let mut rng = rng::stream(config.seed, Domain::RegressionExact, b as u64);
            let w = config.weights(data.n(), &mut rng);
            let cum = cumulative(&w);
            out.copy_from_slice(&fit.standardized.coeffs);
            let mut terms = vec![0.0; n_u];
            for i in fit.n_obs + 1..=horizon {
                let r = draw_row(&cum, &mut rng);
                let v: f64 = rng.random();
                updater.terms_into(v, s.rho(i), &mut terms);
                apply_rank_one(out, n_u, s.alpha(i), &terms, &xs[r * p..(r + 1) * p]);
            }
        });
    Ok(RegPosteriorDraws {
        grid: fit.standardized.grid.clone(),
        p,
        n_samples: config.n_samples,
        center: fit.standardized.clone(),
        standardization: fit.standardization.clone(),
        draws,
    })
}

/// Per-sample `Σ_x(w)` and the base-GP increment `S = L_x Z`, where the rows
/// of `Z` are independent draws with kernel `gp_kernel(·, ·, ρ_{n+1})`.
/// Returns `S` row-major `p × n_U` for every sample.
pub fn reg_gp_increments(
    fit: &RegFitResult,
    data: &RegDataset,
    config: &RegSampleConfig,
) -> Result<Vec<f64>> {
    config.validate(data.n())?;
    let xs = data.standardized_x();
    let p = data.p();
    let grid = &fit.standardized.grid;
    let n_u = grid.size();
    let rho = fit.schedule.rho(fit.n_obs + 1);
    let chol = cholesky_lower(gp_kernel_matrix(grid.points(), rho, config.gp_jitter))?;
    let mut out = vec![0.0; config.n_samples * p * n_u];
    out.par_chunks_mut(p * n_u)
        .enumerate()
        .map(|(b, s)| {
            let mut rng = rng::stream(config.seed, Domain::RegressionGp, b as u64);
            let w = config.weights(data.n(), &mut rng);
            let lx = cholesky_lower(weighted_gram(&xs, p, &w)).map_err(|_| {
                QmpError::Factorization(format!(
                    "weighted covariate matrix is not positive definite for sample {b}"
                ))
            })?;
            let mut z = vec![0.0; n_u];
            let mut base = vec![0.0; p * n_u];
            for zj in base.chunks_exact_mut(n_u) {
                standard_normals(&mut rng, &mut z);
                lower_matvec(&chol, &z, zj);
            }
            for j in 0..p {
                let row = &mut s[j * n_u..(j + 1) * n_u];
                for k in 0..=j {
                    let l = lx[(j, k)];
                    for (r, zk) in row.iter_mut().zip(&base[k * n_u..(k + 1) * n_u]) {
                        *r += l * zk;
                    }
                }
            }
            Ok(())
        })
        .collect::<Result<Vec<()>>>()?;
    Ok(out)
}

/// Approximate regression sampling: `β̃ = β_n + a/√(n+1) · L_x Z`.
pub fn reg_sample_approx(
    fit: &RegFitResult,
    data: &RegDataset,
    config: &RegSampleConfig,
) -> Result<RegPosteriorDraws> {
    check_fit_matches(fit, data)?;
    let mut draws = reg_gp_increments(fit, data, config)?;
    let scale = fit.schedule.a / ((fit.n_obs + 1) as f64).sqrt();
    let w = fit.standardized.coeffs.len();
    draws.par_chunks_mut(w).for_each(|row| {
        for (d, c) in row.iter_mut().zip(&fit.standardized.coeffs) {
            *d = c + scale * *d;
        }
    });
    Ok(RegPosteriorDraws {
        grid: fit.standardized.grid.clone(),
        p: data.p(),
        n_samples: config.n_samples,
        center: fit.standardized.clone(),
        standardization: fit.standardization.clone(),
        draws,
    })
}

pub fn reg_sample(
    fit: &RegFitResult,
    data: &RegDataset,
    config: &RegSampleConfig,
) -> Result<RegPosteriorDraws> {
    match config.mode {
        SampleMode::Exact => reg_sample_exact(fit, data, config),
        SampleMode::Approximate => reg_sample_approx(fit, data, config),
    }
}

fn check_fit_matches(fit: &RegFitResult, data: &RegDataset) -> Result<()> {
    if fit.standardized.p != data.p() {
        return Err(QmpError::DimensionMismatch {
            expected: fit.standardized.p,
            got: data.p(),
        });
    }
    if fit.n_obs != data.n() {
        return Err(QmpError::DimensionMismatch {
            expected: fit.n_obs,
            got: data.n(),
        });
    }
    Ok(())
}
