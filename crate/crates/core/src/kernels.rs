//! Scalar kernels: the standard normal CDF and quantile, the bivariate normal
//! CDF, the Gaussian copula (CDF, conditional, density), the recursive update
//! term and the GP covariance kernel built from them.
//!
//! Every function here is pure. Probability arguments that feed `Φ⁻¹` are
//! clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` so that grid endpoints and
//! sampled uniforms never produce infinities.

#![allow(clippy::excessive_precision)]

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

use crate::error::{QmpError, Result};

/// Clamp applied to probabilities before they are mapped through `Φ⁻¹`.
pub const PROB_CLAMP: f64 = 1e-12;

/// Upper cap returned by [`copula_density`] near the corners of the square.
pub const DENSITY_CAP: f64 = 1e300;

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// A copula correlation strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Rho(f64);

impl Rho {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value < 1.0 {
            Ok(Rho(value))
        } else {
            Err(QmpError::Domain(format!(
                "correlation must lie in (0, 1), got {value}"
            )))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// `ρ²`, the correlation of the covariance kernel built from `ρ`.
    pub fn squared(self) -> Rho {
        Rho(self.0 * self.0)
    }
}

impl TryFrom<f64> for Rho {
    type Error = QmpError;
    fn try_from(value: f64) -> Result<Self> {
        Rho::new(value)
    }
}

impl From<Rho> for f64 {
    fn from(r: Rho) -> f64 {
        r.0
    }
}

/// Learning-rate and bandwidth constants.
///
/// `alpha(i) = a / (i + 1)` and `rho(i) = sqrt(1 - c i^(-k))` for `i >= 1`.
/// `a = 0` is accepted and freezes every update; it exists for sanity checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub a: f64,
    pub c: f64,
    pub k: f64,
}

impl Schedule {
    pub fn new(a: f64, c: f64, k: f64) -> Result<Self> {
        let s = Schedule { a, c, k };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a >= 0.0) {
            return Err(QmpError::InvalidConfig(format!(
                "learning rate a must be finite and non-negative, got {}",
                self.a
            )));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(QmpError::InvalidConfig(format!(
                "bandwidth constant c must lie in (0, 1), got {}",
                self.c
            )));
        }
        if !(self.k > 0.0 && self.k < 1.0) {
            return Err(QmpError::InvalidConfig(format!(
                "bandwidth exponent k must lie in (0, 1), got {}",
                self.k
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn alpha(&self, i: usize) -> f64 {
        self.a / (i as f64 + 1.0)
    }

    #[inline]
    pub fn rho(&self, i: usize) -> Rho {
        debug_assert!(i >= 1);
        Rho((1.0 - self.c * (i as f64).powf(-self.k)).sqrt())
    }

    pub fn with_c(&self, c: f64) -> Schedule {
        Schedule { c, ..*self }
    }
}

#[inline]
fn clamp_prob(u: f64) -> f64 {
    u.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Standard normal CDF `Φ(z)`.
#[inline]
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Beyond this many standard deviations [`cdf_saturated`] returns 0 or 1.
/// `Φ(8.5)` already rounds to 1.0 and `Φ(-8.5) < 1e-17`.
pub const CDF_SATURATION: f64 = 8.5;

const CDF_TABLE_STEPS_PER_UNIT: f64 = 64.0;

// Quintic Hermite pieces of Φ on [-8.5, 8.5] matching Φ, φ and φ' at both
// ends of each cell; the interpolation error is below 2e-15.
fn cdf_table() -> &'static [[f64; 6]] {
    static TABLE: OnceLock<Vec<[f64; 6]>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let h = 1.0 / CDF_TABLE_STEPS_PER_UNIT;
        let cells = (2.0 * CDF_SATURATION * CDF_TABLE_STEPS_PER_UNIT).round() as usize;
        (0..=cells)
            .map(|k| {
                let a = -CDF_SATURATION + k as f64 * h;
                let b = a + h;
                let (y0, y1) = (std_normal_cdf(a), std_normal_cdf(b));
                let (d0, d1) = (h * std_normal_pdf(a), h * std_normal_pdf(b));
                let (s0, s1) = (-h * h * a * std_normal_pdf(a), -h * h * b * std_normal_pdf(b));
                let dy = y1 - y0;
                [
                    y0,
                    d0,
                    0.5 * s0,
                    10.0 * dy - 6.0 * d0 - 4.0 * d1 - 1.5 * s0 + 0.5 * s1,
                    -15.0 * dy + 8.0 * d0 + 7.0 * d1 + 1.5 * s0 - s1,
                    6.0 * dy - 3.0 * d0 - 3.0 * d1 - 0.5 * s0 + 0.5 * s1,
                ]
            })
            .collect()
    })
}

/// `Φ(z)` from a piecewise quintic table, snapped to 0 and 1 past
/// [`CDF_SATURATION`]. Absolute error against [`std_normal_cdf`] is below
/// 1e-14. This is the form used by the conditional copula, which runs in
/// the innermost loops.
#[inline]
pub fn cdf_saturated(z: f64) -> f64 {
    cdf_with_table(cdf_table(), z)
}

#[inline(always)]
fn cdf_with_table(table: &[[f64; 6]], z: f64) -> f64 {
    if z >= CDF_SATURATION {
        1.0
    } else if z <= -CDF_SATURATION {
        0.0
    } else if z.is_nan() {
        f64::NAN
    } else {
        let t = (z + CDF_SATURATION) * CDF_TABLE_STEPS_PER_UNIT;
        let k = t as usize;
        let f = t - k as f64;
        let c = &table[k];
        c[0] + f * (c[1] + f * (c[2] + f * (c[3] + f * (c[4] + f * c[5]))))
    }
}

/// Standard normal density `φ(z)`.
#[inline]
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}

/// Standard normal quantile `Φ⁻¹(u)` for `u` in the open unit interval.
pub fn std_normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(QmpError::Domain(format!(
            "normal quantile needs 0 < u < 1, got {u}"
        )));
    }
    Ok(probit(u))
}

/// `Φ⁻¹` of the clamped probability. Never fails.
#[inline]
pub fn probit_clamped(u: f64) -> f64 {
    probit(clamp_prob(u))
}

// Wichura's AS 241 (PPND16) followed by one Newton step against `std_normal_cdf`.
fn probit(p: f64) -> f64 {
    let z = ppnd16(p);
    let err = std_normal_cdf(z) - p;
    let dens = std_normal_pdf(z);
    if dens > 0.0 {
        z - err / dens
    } else {
        z
    }
}

fn ppnd16(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        133.141_667_891_784_377_45,
        1_971.590_950_306_551_442_7,
        13_731.693_765_509_461_125,
        45_921.953_931_549_871_457,
        67_265.770_927_008_700_853,
        33_430.575_583_588_128_105,
        2_509.080_928_730_122_672_7,
    ];
    const B: [f64; 8] = [
        1.0,
        42.313_330_701_600_911_252,
        687.187_007_492_057_908_3,
        5_394.196_021_424_751_107_7,
        21_213.794_301_586_595_867,
        39_307.895_800_092_710_61,
        28_729.085_735_721_942_674,
        5_226.495_278_852_545_925,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        0.241_780_725_177_450_611_77,
        0.022_723_844_989_269_184_583_3,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        0.689_767_334_985_100_004_55,
        0.148_103_976_427_480_074_59,
        0.015_198_666_563_616_457_196_6,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        0.296_560_571_828_504_891_23,
        0.026_532_189_526_576_123_093,
        0.001_242_660_947_388_078_438_6,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        0.599_832_206_555_887_937_69,
        0.136_929_880_922_735_805_31,
        0.014_875_361_290_850_614_852_5,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];

    fn poly(c: &[f64; 8], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

// Gauss-Legendre half-rules (weight, abscissa) on [-1, 1], as used by Genz's BVND.
const GL6: [(f64, f64); 3] = [
    (0.171_324_492_379_170_5, -0.932_469_514_203_152_2),
    (0.360_761_573_048_138_4, -0.661_209_386_466_264_7),
    (0.467_913_934_572_691_0, -0.238_619_186_083_197_0),
];
const GL12: [(f64, f64); 6] = [
    (0.047_175_336_386_511_77, -0.981_560_634_246_719_1),
    (0.106_939_325_995_318_3, -0.904_117_256_370_475_0),
    (0.160_078_328_543_346_4, -0.769_902_674_194_305_0),
    (0.203_167_426_723_065_9, -0.587_317_954_286_617_1),
    (0.233_492_536_538_354_7, -0.367_831_498_998_180_2),
    (0.249_147_045_813_402_9, -0.125_233_408_511_469_2),
];
const GL20: [(f64, f64); 10] = [
    (0.017_614_007_139_152_12, -0.993_128_599_185_094_9),
    (0.040_601_429_800_386_94, -0.963_971_927_277_913_8),
    (0.062_672_048_334_109_06, -0.912_234_428_251_325_9),
    (0.083_276_741_576_704_75, -0.839_116_971_822_218_8),
    (0.101_930_119_817_240_4, -0.746_331_906_460_150_8),
    (0.118_194_531_961_518_4, -0.636_053_680_726_515_0),
    (0.131_688_638_449_176_6, -0.510_867_001_950_827_1),
    (0.142_096_109_318_382_1, -0.373_706_088_715_419_6),
    (0.149_172_986_472_603_7, -0.227_785_851_141_645_1),
    (0.152_753_387_130_725_9, -0.076_526_521_133_497_33),
];

/// Upper-orthant probability `P(X > dh, Y > dk)` for a standard bivariate
/// normal with correlation `r` (Drezner–Wesolowsky integrand, Gauss–Legendre
/// rule chosen by `|r|`, Genz's expansion for `|r| > 0.925`).
fn bvnd(dh: f64, dk: f64, r: f64) -> f64 {
    let (h, k) = (dh, dk);
    let hk = h * k;
    let quad: &[(f64, f64)] = if r.abs() < 0.3 {
        &GL6
    } else if r.abs() < 0.75 {
        &GL12
    } else {
        &GL20
    };
    let two_pi = 2.0 * PI;

    if r.abs() < 0.925 {
        let mut bvn = 0.0;
        if r != 0.0 {
            let hs = (h * h + k * k) / 2.0;
            let asr = r.asin();
            for &(w, x) in quad {
                for is in [-1.0, 1.0] {
                    let sn = (asr * (is * x + 1.0) / 2.0).sin();
                    bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
                }
            }
            bvn *= asr / (2.0 * two_pi);
        }
        return bvn + std_normal_cdf(-h) * std_normal_cdf(-k);
    }

    // r >= 0.925 here; strongly negative correlations are reflected by the caller.
    let mut bvn = 0.0;
    if r.abs() < 1.0 {
        let a_s = (1.0 - r) * (1.0 + r);
        let mut a = a_s.sqrt();
        let b_s = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        let asr = -(b_s / a_s + hk) / 2.0;
        if asr > -100.0 {
            bvn = a
                * asr.exp()
                * (1.0 - c * (b_s - a_s) * (1.0 - d * b_s / 5.0) / 3.0 + c * d * a_s * a_s / 5.0);
        }
        if -hk < 100.0 {
            let b = b_s.sqrt();
            bvn -= (-hk / 2.0).exp()
                * SQRT_2PI
                * std_normal_cdf(-b / a)
                * b
                * (1.0 - c * b_s * (1.0 - d * b_s / 5.0) / 3.0);
        }
        a /= 2.0;
        for &(w, x) in quad {
            for is in [-1.0, 1.0] {
                let xs = (a * (is * x + 1.0)).powi(2);
                let rs = (1.0 - xs).sqrt();
                let asr = -(b_s / xs + hk) / 2.0;
                if asr > -100.0 {
                    bvn += a
                        * w
                        * asr.exp()
                        * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                            - (1.0 + c * xs * (1.0 + d * xs)));
                }
            }
        }
        bvn /= -two_pi;
    }
    bvn + std_normal_cdf(-h.max(k))
}

/// Standard bivariate normal CDF `Φ₂(h, k; ρ)` for `|ρ| < 1`.
pub fn bivariate_normal_cdf(h: f64, k: f64, rho: f64) -> f64 {
    let upper = if rho <= -0.925 {
        // P(X > -h, Y > -k; ρ) = P(X > -h) - P(X > -h, Y > k; -ρ)
        std_normal_cdf(h) - bvnd(-h, k, -rho)
    } else {
        bvnd(-h, -k, rho)
    };
    upper.clamp(0.0, 1.0)
}

/// Gaussian copula CDF `C_ρ(u, v) = Φ₂(Φ⁻¹(u), Φ⁻¹(v); ρ)`.
pub fn copula_cdf(u: f64, v: f64, rho: Rho) -> f64 {
    let c = bivariate_normal_cdf(probit_clamped(u), probit_clamped(v), rho.value());
    // Fréchet bounds.
    c.clamp((u + v - 1.0).max(0.0), u.min(v))
}

/// Conditional copula `H_ρ(u, v) = Φ((Φ⁻¹(u) - ρ Φ⁻¹(v)) / sqrt(1 - ρ²))`.
#[inline]
pub fn copula_conditional(u: f64, v: f64, rho: Rho) -> f64 {
    let r = rho.value();
    cdf_saturated((probit_clamped(u) - r * probit_clamped(v)) / (1.0 - r * r).sqrt())
}

/// Gaussian copula density `c_ρ(u, v)`, capped at [`DENSITY_CAP`].
pub fn copula_density(u: f64, v: f64, rho: Rho) -> f64 {
    copula_density_scores(probit_clamped(u), probit_clamped(v), rho)
}

/// [`copula_density`] at normal scores `z_u = Φ⁻¹(u)`, `z_v = Φ⁻¹(v)`.
pub fn copula_density_scores(zu: f64, zv: f64, rho: Rho) -> f64 {
    let r = rho.value();
    let one_m = 1.0 - r * r;
    let expo = (2.0 * r * zu * zv - r * r * (zu * zu + zv * zv)) / (2.0 * one_m);
    let d = expo.exp() / one_m.sqrt();
    if d.is_finite() {
        d.min(DENSITY_CAP)
    } else {
        DENSITY_CAP
    }
}

/// The recursive update term `u - H_ρ(u, v)`.
#[inline]
pub fn update_term(u: f64, v: f64, rho: Rho) -> f64 {
    u - copula_conditional(u, v, rho)
}

/// GP covariance kernel `k_ρ(u, u') = C_{ρ²}(u, u') - u u'`.
pub fn gp_kernel(u: f64, u2: f64, rho: Rho) -> f64 {
    let k = copula_cdf(u, u2, rho.squared()) - u * u2;
    k.clamp(0.0, u.min(u2) - u * u2)
}

/// Grid-vectorised form of [`update_term`] with the normal scores of the
/// grid cached. `apply` produces values bit-identical to calling
/// `update_term(u_j, v, rho)` for every grid point.
#[derive(Debug, Clone)]
pub struct GridUpdater {
    points: Vec<f64>,
    scores: Vec<f64>,
}

impl GridUpdater {
    pub fn new(points: &[f64]) -> Self {
        GridUpdater {
            points: points.to_vec(),
            scores: points.iter().map(|&u| probit_clamped(u)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Writes `u_j - H_ρ(u_j, v)` into `out`.
    pub fn terms_into(&self, v: f64, rho: Rho, out: &mut [f64]) {
        let r = rho.value();
        let shift = r * probit_clamped(v);
        let scale = (1.0 - r * r).sqrt();
        let table = cdf_table();
        for ((o, &u), &z) in out.iter_mut().zip(&self.points).zip(&self.scores) {
            *o = u - cdf_with_table(table, (z - shift) / scale);
        }
    }

    /// `values[j] += alpha * (u_j - H_ρ(u_j, v))`.
    #[inline]
    pub fn apply(&self, values: &mut [f64], alpha: f64, v: f64, rho: Rho) {
        let r = rho.value();
        let shift = r * probit_clamped(v);
        let scale = (1.0 - r * r).sqrt();
        let table = cdf_table();
        for ((q, &u), &z) in values.iter_mut().zip(&self.points).zip(&self.scores) {
            *q += alpha * (u - cdf_with_table(table, (z - shift) / scale));
        }
    }
}
