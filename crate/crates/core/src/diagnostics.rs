//! Numerical checks of the copula identities the method relies on, and a
//! convergence trace for exact resampling.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimation::FitResult;
use crate::grid::{GridFunction, UniformGrid};
use crate::kernels::{
    copula_conditional, copula_density_scores, gp_kernel, std_normal_pdf, update_term,
    GridUpdater, Rho, Schedule,
};
use crate::quadrature::{integrate, integrate_2d};
use crate::resampling::SampleConfig;
use crate::rng::{self, Domain};

pub const MARTINGALE_TOLERANCE: f64 = 1e-6;
pub const KERNEL_IDENTITY_TOLERANCE: f64 = 1e-5;
pub const DENSITY_NORM_TOLERANCE: f64 = 1e-3;
pub const ORDERING_SLACK: f64 = -1e-10;

/// Number of explicit terms in the kernel-ordering series before the tail
/// is bracketed.
pub const ORDERING_EXPLICIT_TERMS: usize = 20_000;

const QUAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckPoint {
    pub inputs: BTreeMap<String, f64>,
    pub computed: f64,
    pub expected: f64,
    pub error: f64,
}

impl CheckPoint {
    fn new(inputs: &[(&str, f64)], computed: f64, expected: f64, error: f64) -> Self {
        CheckPoint {
            inputs: inputs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            computed,
            expected,
            error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub max_abs_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: Vec<CheckPoint>,
}

impl CheckReport {
    /// The same report judged against a different tolerance.
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self.passed = self.max_abs_error <= tolerance;
        self
    }

    fn from_points(name: &str, tolerance: f64, detail: Vec<CheckPoint>) -> Self {
        let max_abs_error = detail.iter().map(|p| p.error).fold(0.0, f64::max);
        CheckReport {
            name: name.into(),
            max_abs_error,
            tolerance,
            passed: max_abs_error <= tolerance,
            detail,
        }
    }
}

/// `|∫₀¹ H_ρ(u, v) dv - u|` at every mesh point and `ρ`.
pub fn check_martingale_kernel(rhos: &[Rho], mesh: &UniformGrid) -> CheckReport {
    let cases: Vec<(Rho, f64)> = rhos
        .iter()
        .flat_map(|&r| mesh.points().iter().map(move |&u| (r, u)))
        .collect();
    let detail = cases
        .par_iter()
        .map(|&(rho, u)| {
            let int = integrate(|v| copula_conditional(u, v, rho), 0.0, 1.0, QUAD_TOL).value;
            CheckPoint::new(&[("rho", rho.value()), ("u", u)], int, u, (int - u).abs())
        })
        .collect();
    CheckReport::from_points("martingale_kernel", MARTINGALE_TOLERANCE, detail)
}

/// `|∫₀¹ (u - H)(u' - H) dv - k_ρ(u, u')|` for each `(u, u', ρ)`.
pub fn check_kernel_identity(triples: &[(f64, f64, Rho)]) -> CheckReport {
    let detail = triples
        .par_iter()
        .map(|&(u, u2, rho)| {
            let int = integrate(
                |v| update_term(u, v, rho) * update_term(u2, v, rho),
                0.0,
                1.0,
                QUAD_TOL,
            )
            .value;
            let k = gp_kernel(u, u2, rho);
            CheckPoint::new(
                &[("u", u), ("u2", u2), ("rho", rho.value())],
                int,
                k,
                (int - k).abs(),
            )
        })
        .collect();
    CheckReport::from_points("kernel_identity", KERNEL_IDENTITY_TOLERANCE, detail)
}

/// `n` triples with `u, u'` uniform on `(0.01, 0.99)` and `ρ` uniform on
/// `(0.05, 0.99)`.
pub fn random_triples(n: usize, seed: u64) -> Vec<(f64, f64, Rho)> {
    let mut rng = rng::stream(seed, Domain::Diagnostics, 0);
    (0..n)
        .map(|_| {
            let u = 0.01 + 0.98 * rng.random::<f64>();
            let u2 = 0.01 + 0.98 * rng.random::<f64>();
            let r = 0.05 + 0.94 * rng.random::<f64>();
            (u, u2, Rho::new(r).expect("in range"))
        })
        .collect()
}

/// `n` pairs with `u, u'` uniform on `(0.01, 0.99)`.
pub fn random_pairs(n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = rng::stream(seed, Domain::Diagnostics, 1);
    (0..n)
        .map(|_| (0.01 + 0.98 * rng.random::<f64>(), 0.01 + 0.98 * rng.random::<f64>()))
        .collect()
}

/// Relative error of `∫∫ c_ρ² du dv` against `1 / (1 - ρ²)`.
///
/// The integral is taken over normal scores, where the integrand
/// `c_ρ(Φx, Φy)² φ(x) φ(y)` is smooth, on a square wide enough that the
/// neglected mass is far below the tolerance.
pub fn check_density_norm(rhos: &[Rho]) -> CheckReport {
    let detail = rhos
        .par_iter()
        .map(|&rho| {
            let r = rho.value();
            let expected = 1.0 / (1.0 - r * r);
            let half = 12.0 * ((1.0 + r * r) / (1.0 - r * r)).sqrt().max(1.0);
            let int = integrate_2d(
                |x, y| {
                    let c = copula_density_scores(x, y, rho);
                    c * c * std_normal_pdf(x) * std_normal_pdf(y)
                },
                (-half, half),
                (-half, half),
                1e-7 * expected,
            )
            .value;
            let rel = (int - expected).abs() / expected;
            CheckPoint::new(&[("rho", r)], int, expected, rel)
        })
        .collect();
    CheckReport::from_points("density_norm", DENSITY_NORM_TOLERANCE, detail)
}

/// Trigamma `ψ₁(x) = Σ_{k≥0} 1/(x+k)²` for `x > 0`.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 20.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let r = 1.0 / x;
    let r2 = r * r;
    acc + r
        + 0.5 * r2
        + r * r2 * (1.0 / 6.0 - r2 * (1.0 / 30.0 - r2 * (1.0 / 42.0 - r2 / 30.0)))
}

/// The three terms of the kernel ordering at one `(n, u, u')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderingTerms {
    /// `k_{ρ_{n+1}}(u, u')`.
    pub lower: f64,
    /// Point estimate of `r_n⁻¹ Σ_{i>n} α_i² k_{ρ_i}(u, u')`.
    pub middle: f64,
    /// Rigorous bracket on the middle term from the truncated tail.
    pub middle_lo: f64,
    pub middle_hi: f64,
    /// `min(u, u') - u u'`.
    pub upper: f64,
}

/// Sums the series explicitly over `i = n+1..=n+M` and brackets the
/// remainder between `k_{ρ_{n+M+1}}` and the Brownian-bridge kernel, using
/// that `k_ρ` increases with `ρ` and `ρ_i` increases with `i`.
pub fn ordering_terms(n: usize, schedule: &Schedule, u: f64, u2: f64) -> OrderingTerms {
    let upper = u.min(u2) - u * u2;
    let m_end = n + ORDERING_EXPLICIT_TERMS;
    let mut head = 0.0;
    let mut head_w = 0.0;
    for i in n + 1..=m_end {
        let w = 1.0 / ((i + 1) as f64).powi(2);
        head += w * gp_kernel(u, u2, schedule.rho(i));
        head_w += w;
    }
    // Σ_{i>m_end} 1/(i+1)² = ψ₁(m_end + 2)
    let tail_w = trigamma((m_end + 2) as f64);
    let total_w = head_w + tail_w;
    let tail_lo = gp_kernel(u, u2, schedule.rho(m_end + 1));
    let middle_lo = (head + tail_w * tail_lo) / total_w;
    let middle_hi = (head + tail_w * upper) / total_w;
    OrderingTerms {
        lower: gp_kernel(u, u2, schedule.rho(n + 1)),
        middle: 0.5 * (middle_lo + middle_hi),
        middle_lo,
        middle_hi,
        upper,
    }
}

/// Checks `k_{ρ_{n+1}} ≤ r_n⁻¹ k_n ≤ min(u, u') - u u'` for every `n` and
/// pair. The reported error is the worst violation, zero when both
/// inequalities hold; the check passes when every slack is at least
/// `-1e-10`.
pub fn check_kernel_ordering(
    n_values: &[usize],
    schedule: &Schedule,
    pairs: &[(f64, f64)],
) -> CheckReport {
    let cases: Vec<(usize, f64, f64)> = n_values
        .iter()
        .flat_map(|&n| pairs.iter().map(move |&(u, u2)| (n, u, u2)))
        .collect();
    let detail: Vec<CheckPoint> = cases
        .par_iter()
        .map(|&(n, u, u2)| {
            let t = ordering_terms(n, schedule, u, u2);
            let slack_lo = t.middle_lo - t.lower;
            let slack_hi = t.upper - t.middle_hi;
            let violation = (-slack_lo.min(slack_hi)).max(0.0);
            CheckPoint {
                inputs: [
                    ("n".to_string(), n as f64),
                    ("u".to_string(), u),
                    ("u2".to_string(), u2),
                    ("lower".to_string(), t.lower),
                    ("upper".to_string(), t.upper),
                    ("middle_lo".to_string(), t.middle_lo),
                    ("middle_hi".to_string(), t.middle_hi),
                    ("truncation_halfwidth".to_string(), 0.5 * (t.middle_hi - t.middle_lo)),
                ]
                .into_iter()
                .collect(),
                computed: t.middle,
                expected: t.upper,
                error: violation,
            }
        })
        .collect();
    CheckReport::from_points("kernel_ordering", -ORDERING_SLACK, detail)
}

/// Runs the default suite: martingale kernel on a 20-point mesh at
/// `ρ ∈ {0.3, 0.7, 0.99}`, density norm at `ρ ∈ {0.3, 0.5, 0.8}`, kernel
/// identity on 25 random triples and kernel ordering at `n ∈ {10, 100}`
/// with `a = 1, c = 0.5, k = 0.5` on 25 random pairs.
pub fn default_checks(seed: u64) -> Vec<CheckReport> {
    let r = |v| Rho::new(v).expect("in range");
    let mesh = UniformGrid::new(20).expect("valid size");
    let schedule = Schedule::new(1.0, 0.5, 0.5).expect("valid schedule");
    vec![
        check_martingale_kernel(&[r(0.3), r(0.7), r(0.99)], &mesh),
        check_density_norm(&[r(0.3), r(0.5), r(0.8)]),
        check_kernel_identity(&random_triples(25, seed)),
        check_kernel_ordering(&[10, 100], &schedule, &random_pairs(25, seed)),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: usize,
    /// `sup_j |Q_i(u_j) - Q_{i-stride}(u_j)|`.
    pub sup_increment: f64,
    /// `Σ α` over the window, an upper bound on the increment.
    pub alpha_bound: f64,
}

/// Sup-norm increments of the exact chain for sample `sample_index`, taken
/// every `stride` steps. Uses the same random stream as exact sampling, so
/// the chain ends at that sample's pre-rearrangement draw.
pub fn convergence_trace(
    fit: &FitResult,
    config: &SampleConfig,
    stride: usize,
    sample_index: usize,
) -> Result<Vec<TracePoint>> {
    if stride == 0 {
        return Err(crate::QmpError::InvalidConfig("stride must be positive".into()));
    }
    let horizon = config.resolved_horizon(fit.n_obs);
    let grid = fit.posterior_center.grid();
    let updater = GridUpdater::new(grid.points());
    let s = &fit.schedule;
    let mut rng = rng::stream(config.seed, Domain::ExactResampling, sample_index as u64);
    let mut q = fit.posterior_center.values().to_vec();
    let mut last = q.clone();
    let mut bound = 0.0;
    let mut out = Vec::new();
    for i in fit.n_obs + 1..=horizon {
        let v: f64 = rng.random();
        updater.apply(&mut q, s.alpha(i), v, s.rho(i));
        bound += s.alpha(i);
        if (i - fit.n_obs).is_multiple_of(stride) || i == horizon {
            let sup = q
                .iter()
                .zip(&last)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            out.push(TracePoint {
                step: i,
                sup_increment: sup,
                alpha_bound: bound,
            });
            last.copy_from_slice(&q);
            bound = 0.0;
        }
    }
    Ok(out)
}
