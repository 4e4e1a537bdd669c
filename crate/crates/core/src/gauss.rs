//! Normal and truncated-normal numerics.
//!
//! Every likelihood ratio in this crate reduces to differences of the standard
//! normal CDF, frequently with both endpoints deep in one tail. All such
//! quantities are therefore computed in log space:
//!
//! - `Φ` itself comes from the complementary error function.
//! - `log Φ(z)` for `z < -8√2` uses the rational asymptotic form of
//!   `erfc(x)·exp(x²)` so it stays finite far past the point where `Φ`
//!   underflows.
//! - `log(Φ(hi) - Φ(lo))` reflects the interval into the lower half line, and
//!   switches to Gauss–Legendre integration of the density when the two CDF
//!   values would cancel.
//!
//! Arguments beyond [`SATURATION_Z`] in magnitude are clamped; the resulting
//! log values are finite (of order `-SATURATION_Z² / 2`) rather than `-∞`.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `ln √(2π)`
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Standardized arguments are clamped to `±SATURATION_Z` before tail evaluation.
pub const SATURATION_Z: f64 = 1.0e8;

/// Positive nodes and weights of the 16-point Gauss–Legendre rule on [-1, 1].
const GL16: [(f64, f64); 8] = [
    (0.095_012_509_837_637_454, 0.189_450_610_455_068_59),
    (0.281_603_550_779_258_92, 0.182_603_415_044_923_61),
    (0.458_016_777_657_227_37, 0.169_156_519_395_002_62),
    (0.617_876_244_402_643_77, 0.149_595_988_816_576_76),
    (0.755_404_408_355_003, 0.124_628_971_255_534_03),
    (0.865_631_202_387_831_76, 0.095_158_511_682_492_591),
    (0.944_575_023_073_232_6, 0.062_253_523_938_647_706),
    (0.989_400_934_991_649_94, 0.027_152_459_411_754_037),
];

// ---------------------------------------------------------------------------
// Scalar primitives
// ---------------------------------------------------------------------------

#[inline]
pub fn log_std_normal_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

#[inline]
pub fn std_normal_pdf(z: f64) -> f64 {
    log_std_normal_pdf(z).exp()
}

/// Standard normal distribution function.
pub fn std_normal_cdf(z: f64) -> Result<f64> {
    if z.is_nan() {
        return Err(Error::NonFinite("z"));
    }
    Ok(phi(z))
}

#[inline]
pub(crate) fn phi(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// `erfc(x)·exp(x²)` for `x > 8` (GSL `log_erfc8` rational form).
#[allow(clippy::excessive_precision)]
fn erfc8_scaled(x: f64) -> f64 {
    const P: [f64; 6] = [
        2.978_865_626_393_992_888_62,
        7.409_740_605_964_741_794_425,
        6.160_209_853_109_630_544_090_6,
        5.019_049_726_784_267_463_450_058,
        1.275_366_644_729_965_952_479_585_264,
        0.564_189_583_547_755_074_125_320_170_4,
    ];
    const Q: [f64; 7] = [
        3.369_075_206_982_752_767_7,
        9.608_965_327_192_787_870_698,
        17.081_440_747_466_004_315_710_95,
        12.048_951_927_855_129_036_034_049_1,
        9.396_034_016_235_054_150_430_579_648,
        2.260_528_520_767_326_969_591_866_945,
        1.0,
    ];
    let num = P.iter().rev().fold(0.0, |acc, c| acc * x + c);
    let den = Q.iter().rev().fold(0.0, |acc, c| acc * x + c);
    num / den
}

/// `log Φ(z)`, finite for every finite argument.
pub fn log_std_normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z >= 0.0 {
        return (-0.5 * libm::erfc(z * FRAC_1_SQRT_2)).ln_1p();
    }
    let z = z.max(-SATURATION_Z);
    let x = -z * FRAC_1_SQRT_2;
    if x <= 8.0 {
        (0.5 * libm::erfc(x)).ln()
    } else {
        erfc8_scaled(x).ln() - 0.5 * z * z - LN_2
    }
}

/// `log(exp(a) + exp(b))`
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log(Φ(hi) − Φ(lo))` for `lo < hi`.
pub fn log_phi_diff(lo: f64, hi: f64) -> Result<f64> {
    if lo.is_nan() || hi.is_nan() {
        return Err(Error::NonFinite("log_phi_diff endpoint"));
    }
    if lo >= hi {
        return Err(Error::invalid(
            "lo",
            format!("lower endpoint {lo} must be below upper endpoint {hi}"),
        ));
    }
    Ok(ln_phi_diff(lo, hi))
}

/// Unchecked core of [`log_phi_diff`]; callers guarantee `lo < hi`.
pub(crate) fn ln_phi_diff(lo: f64, hi: f64) -> f64 {
    if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
        return 0.0;
    }
    // Reflect so the interval sits mostly on the negative half line.
    let (lo, hi) = if lo + hi > 0.0 { (-hi, -lo) } else { (lo, hi) };
    let lo = lo.max(-SATURATION_Z);
    let hi = hi.min(SATURATION_Z);
    if lo >= hi {
        // Both endpoints saturated to the same point.
        return log_std_normal_cdf(hi);
    }

    if hi > 0.0 {
        // Straddles zero with |lo| >= hi.
        let tails = phi(lo) + phi(-hi);
        if tails < 0.5 {
            return (-tails).ln_1p();
        }
        let mass = 0.5 * (libm::erf(hi * FRAC_1_SQRT_2) - libm::erf(lo * FRAC_1_SQRT_2));
        return mass.ln();
    }

    // Entirely in the lower tail; `hi` is the endpoint nearest the mode.
    let width = hi - lo;
    if width * (width - 2.0 * hi) <= 8.0 {
        return hi_anchored_quadrature(lo, hi);
    }
    let log_hi = log_std_normal_cdf(hi);
    let log_lo = log_std_normal_cdf(lo);
    log_hi + (-(log_lo - log_hi).exp()).ln_1p()
}

/// `log ∫_lo^hi φ(t) dt` by Gauss–Legendre, anchored at `hi ≤ 0`.
fn hi_anchored_quadrature(lo: f64, hi: f64) -> f64 {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let kernel = |t: f64| (-0.5 * (t - hi) * (t + hi)).exp();
    let sum: f64 = GL16
        .iter()
        .map(|&(node, weight)| weight * (kernel(mid - half * node) + kernel(mid + half * node)))
        .sum();
    log_std_normal_pdf(hi) + (half * sum).ln()
}

/// Inverse of `log Φ`: the `z` with `log Φ(z) = log_p`.
pub fn std_normal_quantile_log(log_p: f64) -> f64 {
    if log_p.is_nan() || log_p > 0.0 {
        return f64::NAN;
    }
    if log_p == 0.0 {
        return f64::INFINITY;
    }
    if log_p == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if log_p > -LN_2 {
        // Upper half: solve on the complement.
        let log_q = (-log_p.exp_m1()).ln();
        return -std_normal_quantile_log(log_q);
    }
    // Abramowitz & Stegun 26.2.23 starting point, then Newton on log Φ.
    let t = (-2.0 * log_p).sqrt();
    let mut z = -(t
        - (2.515_517 + 0.802_853 * t + 0.010_328 * t * t)
            / (1.0 + 1.432_788 * t + 0.189_269 * t * t + 0.001_308 * t * t * t));
    for _ in 0..64 {
        let lc = log_std_normal_cdf(z);
        let slope = (log_std_normal_pdf(z) - lc).exp();
        let step = (lc - log_p) / slope;
        z -= step;
        if step.abs() <= 1e-15 * (1.0 + z.abs()) {
            break;
        }
    }
    z
}

pub fn std_normal_quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p <= 0.5 {
        std_normal_quantile_log(p.ln())
    } else {
        -std_normal_quantile_log((1.0 - p).ln())
    }
}

/// Inverse-CDF draw from the standard normal truncated to `(lo, hi)`, given
/// `u` uniform on `(0, 1)`.
pub fn sample_truncated_std(lo: f64, hi: f64, u: f64) -> f64 {
    if lo + hi > 0.0 {
        return -sample_truncated_std(-hi, -lo, u);
    }
    let log_target = log_add_exp(log_std_normal_cdf(lo), u.ln() + ln_phi_diff(lo, hi));
    std_normal_quantile_log(log_target.min(0.0)).clamp(lo, hi)
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Support of a (possibly truncated) normal mixing density.
///
/// Endpoint openness is recorded for documentation only: single points carry
/// no mass under a continuous density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Support {
    FullLine,
    /// Open interval `(lo, hi)`; endpoints may be infinite.
    Interval { lo: f64, hi: f64 },
    /// `(-∞, -delta] ∪ [delta, ∞)`.
    TwoTails { delta: f64 },
    /// Half-open interval `[lo, hi)`.
    HalfInterval { lo: f64, hi: f64 },
}

impl Support {
    /// The region of practical equivalence `(-delta, delta)`.
    pub fn rope(delta: f64) -> Self {
        Support::Interval {
            lo: -delta,
            hi: delta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Support::FullLine => Ok(()),
            Support::Interval { lo, hi } | Support::HalfInterval { lo, hi } => {
                if lo.is_nan() || hi.is_nan() {
                    return Err(Error::NonFinite("support endpoint"));
                }
                if lo >= hi {
                    return Err(Error::invalid(
                        "support",
                        format!("interval requires lo < hi, got ({lo}, {hi})"),
                    ));
                }
                Ok(())
            }
            Support::TwoTails { delta } => {
                if delta > 0.0 && delta.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid(
                        "delta",
                        format!("two-tail threshold must be positive and finite, got {delta}"),
                    ))
                }
            }
        }
    }

    pub fn contains(&self, theta: f64) -> bool {
        match *self {
            Support::FullLine => true,
            Support::Interval { lo, hi } => lo < theta && theta < hi,
            Support::HalfInterval { lo, hi } => lo <= theta && theta < hi,
            Support::TwoTails { delta } => theta.abs() >= delta,
        }
    }

    /// Disjoint intervals making up the support, in increasing order.
    pub fn pieces(&self) -> Vec<(f64, f64)> {
        match *self {
            Support::FullLine => vec![(f64::NEG_INFINITY, f64::INFINITY)],
            Support::Interval { lo, hi } | Support::HalfInterval { lo, hi } => vec![(lo, hi)],
            Support::TwoTails { delta } => {
                vec![(f64::NEG_INFINITY, -delta), (delta, f64::INFINITY)]
            }
        }
    }

    /// `log P(θ ∈ support)` for `θ ~ N(mean, sd²)`.
    pub fn log_mass(&self, mean: f64, sd: f64) -> f64 {
        match *self {
            Support::FullLine => 0.0,
            Support::Interval { lo, hi } | Support::HalfInterval { lo, hi } => {
                ln_phi_diff((lo - mean) / sd, (hi - mean) / sd)
            }
            Support::TwoTails { delta } => log_add_exp(
                log_std_normal_cdf((-delta - mean) / sd),
                log_std_normal_cdf((mean - delta) / sd),
            ),
        }
    }
}

/// Normal mixing distribution `N(mu, tau²)` restricted to `support` and
/// renormalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingSpec {
    mu: f64,
    tau: f64,
    support: Support,
}

impl MixingSpec {
    pub fn new(mu: f64, tau: f64, support: Support) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::NonFinite("mu"));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid("tau", format!("must be positive, got {tau}")));
        }
        support.validate()?;
        Ok(Self { mu, tau, support })
    }

    pub fn full_line(mu: f64, tau: f64) -> Result<Self> {
        Self::new(mu, tau, Support::FullLine)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn support(&self) -> Support {
        self.support
    }

    /// `log` of the untruncated normal's mass on the support.
    pub fn log_support_mass(&self) -> f64 {
        self.support.log_mass(self.mu, self.tau)
    }

    /// Ratio between this density and the untruncated one on the support.
    pub fn truncation_constant(&self) -> f64 {
        (-self.log_support_mass()).exp()
    }

    pub fn pdf(&self, theta: f64) -> f64 {
        truncated_normal_pdf(theta, self)
    }

    /// Inverse-CDF draw given `u` uniform on (0, 1) and, for two-tailed
    /// supports, an independent `side` uniform picking the tail in proportion
    /// to its mass.
    pub fn sample(&self, u: f64, side: f64) -> f64 {
        let standardize = |t: f64| (t - self.mu) / self.tau;
        let z = match self.support {
            Support::FullLine => std_normal_quantile(u),
            Support::Interval { lo, hi } | Support::HalfInterval { lo, hi } => {
                sample_truncated_std(standardize(lo), standardize(hi), u)
            }
            Support::TwoTails { delta } => {
                let log_left = log_std_normal_cdf(standardize(-delta));
                let log_right = log_std_normal_cdf(-standardize(delta));
                let p_left = (log_left - log_add_exp(log_left, log_right)).exp();
                if side < p_left {
                    sample_truncated_std(f64::NEG_INFINITY, standardize(-delta), u)
                } else {
                    sample_truncated_std(standardize(delta), f64::INFINITY, u)
                }
            }
        };
        self.mu + self.tau * z
    }
}

/// Density of a (truncated) normal mixing distribution.
pub fn truncated_normal_pdf(theta: f64, spec: &MixingSpec) -> f64 {
    if !spec.support.contains(theta) {
        return 0.0;
    }
    let z = (theta - spec.mu) / spec.tau;
    (log_std_normal_pdf(z) - spec.tau.ln() - spec.log_support_mass()).exp()
}

/// Running sufficient statistics of a normal sample with known variance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SuffStats {
    pub n: u64,
    pub sum_x: f64,
}

impl SuffStats {
    pub fn new(n: u64, sum_x: f64) -> Result<Self> {
        if !sum_x.is_finite() {
            return Err(Error::NonFinite("sum_x"));
        }
        if n == 0 && sum_x != 0.0 {
            return Err(Error::invalid("sum_x", "must be zero when n = 0"));
        }
        Ok(Self { n, sum_x })
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        xs.iter().fold(Self::default(), |s, &x| s.push(x))
    }

    #[must_use]
    pub fn push(self, x: f64) -> Self {
        Self {
            n: self.n + 1,
            sum_x: self.sum_x + x,
        }
    }

    pub fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum_x / self.n as f64)
    }
}

/// Conjugate normal posterior of θ after `n` observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorState {
    pub mu_tilde: f64,
    pub tau_tilde: f64,
    pub n: u64,
}

impl PosteriorState {
    /// The posterior under a prior truncated to `support`: same bounds, updated
    /// location and scale.
    pub fn truncated(&self, support: Support) -> Result<MixingSpec> {
        MixingSpec::new(self.mu_tilde, self.tau_tilde, support)
    }
}

/// Normal–normal conjugate update. The truncation bounds of `spec` carry over
/// unchanged to the posterior.
pub fn posterior_update(spec: &MixingSpec, stats: &SuffStats, sigma: f64) -> Result<PosteriorState> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma", format!("must be positive, got {sigma}")));
    }
    Ok(posterior_unchecked(spec.mu, spec.tau, stats, sigma))
}

#[inline]
pub(crate) fn posterior_unchecked(mu: f64, tau: f64, stats: &SuffStats, sigma: f64) -> PosteriorState {
    if stats.n == 0 {
        return PosteriorState {
            mu_tilde: mu,
            tau_tilde: tau,
            n: 0,
        };
    }
    let tau2 = tau * tau;
    let sigma2 = sigma * sigma;
    let denom = stats.n as f64 * tau2 + sigma2;
    PosteriorState {
        mu_tilde: (stats.sum_x * tau2 + sigma2 * mu) / denom,
        tau_tilde: tau * sigma / denom.sqrt(),
        n: stats.n,
    }
}

/// Posterior mass of the ROPE and the reciprocal constant `c_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RopeMass {
    /// `log(Φ(b_n) − Φ(a_n))`
    pub log_mass: f64,
    /// `(−δ − μ̃)/τ̃`
    pub a_n: f64,
    /// `(δ − μ̃)/τ̃`
    pub b_n: f64,
}

impl RopeMass {
    pub fn mass(&self) -> f64 {
        self.log_mass.exp()
    }

    pub fn log_c_n(&self) -> f64 {
        -self.log_mass
    }

    /// `1 / mass`, saturating at `f64::MAX`.
    pub fn c_n(&self) -> f64 {
        (-self.log_mass).exp().min(f64::MAX)
    }
}

pub fn rope_mass_and_cn(post: &PosteriorState, delta: f64) -> Result<RopeMass> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::invalid("delta", format!("must be positive, got {delta}")));
    }
    let a_n = (-delta - post.mu_tilde) / post.tau_tilde;
    let b_n = (delta - post.mu_tilde) / post.tau_tilde;
    let log_mass = if a_n < b_n { ln_phi_diff(a_n, b_n) } else { f64::NEG_INFINITY };
    Ok(RopeMass { log_mass, a_n, b_n })
}
