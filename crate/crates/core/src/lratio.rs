//! Log likelihood ratios for every test variant.
//!
//! All mixture variants share one structure. With normal data of known
//! variance and a normal mixing density `N(0, τ²)` restricted to a support
//! `S`, the marginal likelihood over `S` equals the full-line marginal times
//! `P_post(S) / P_prior(S)`, where `P_post` is the conjugate posterior
//! `N(μ̃, τ̃²)`. The full-line marginal cancels from the ratio, so
//!
//! ```text
//! log Λ_n = [log P_post(S₁) − log P_prior(S₁)] − [log P_post(S₀) − log P_prior(S₀)]
//! ```
//!
//! with `S₀`, `S₁` the null and alternative supports. The nested truncated
//! test has `S₀ = (−δ, δ)`, `S₁ = ℝ`; the disjoint test replaces `S₁` by the
//! two tails. The one-sided variants follow the same pattern with half-line
//! supports. Prior masses are fixed per variant and cached at construction.
//!
//! [`log_lambda_quadrature`] integrates the defining ratio directly and is
//! the independent check on every closed form here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::{log_add_exp, posterior_unchecked, MixingSpec, SuffStats, Support};
use crate::quadrature::log_integrate_exp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VariantKind {
    /// Wald's SPRT between two simple hypotheses.
    ClassicSprt { theta0: f64, theta1: f64 },
    /// Mixture SPRT: point null against `N(theta0, τ²)` mixing.
    Msprt { theta0: f64 },
    /// Null mixing truncated to `(−δ, δ)`, alternative on the full line.
    TruncNested { delta: f64 },
    /// Null mixing on `(−δ, δ)`, alternative on the two tails.
    TruncDisjoint { delta: f64 },
    /// Practical superiority, null on `(−∞, δ)`, alternative on the full line.
    OneSidedNaiveSup { delta: f64 },
    /// Practical superiority, null on `[0, δ)`, alternative on `[0, ∞)`.
    OneSidedCorrectSup { delta: f64 },
    /// Practical inferiority, null on `(−δ, 0]`, alternative on `(−∞, 0]`.
    OneSidedCorrectInf { delta: f64 },
}

impl VariantKind {
    pub const NAMES: [&'static str; 7] = [
        "classic-sprt",
        "msprt",
        "trunc-nested",
        "trunc-disjoint",
        "one-sided-naive",
        "one-sided-correct-sup",
        "one-sided-correct-inf",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            VariantKind::ClassicSprt { .. } => "classic-sprt",
            VariantKind::Msprt { .. } => "msprt",
            VariantKind::TruncNested { .. } => "trunc-nested",
            VariantKind::TruncDisjoint { .. } => "trunc-disjoint",
            VariantKind::OneSidedNaiveSup { .. } => "one-sided-naive",
            VariantKind::OneSidedCorrectSup { .. } => "one-sided-correct-sup",
            VariantKind::OneSidedCorrectInf { .. } => "one-sided-correct-inf",
        }
    }

    /// Build a variant from its name. `delta` feeds the truncated variants,
    /// `theta0`/`theta1` the SPRT and mSPRT.
    pub fn from_name(name: &str, delta: f64, theta0: f64, theta1: f64) -> Result<Self> {
        Ok(match name {
            "classic-sprt" => VariantKind::ClassicSprt { theta0, theta1 },
            "msprt" => VariantKind::Msprt { theta0 },
            "trunc-nested" => VariantKind::TruncNested { delta },
            "trunc-disjoint" => VariantKind::TruncDisjoint { delta },
            "one-sided-naive" => VariantKind::OneSidedNaiveSup { delta },
            "one-sided-correct-sup" | "one-sided-correct" => VariantKind::OneSidedCorrectSup { delta },
            "one-sided-correct-inf" => VariantKind::OneSidedCorrectInf { delta },
            other => {
                return Err(Error::invalid(
                    "variant",
                    format!("unknown variant `{other}` (expected one of {})", Self::NAMES.join(", ")),
                ))
            }
        })
    }

    pub fn delta(&self) -> Option<f64> {
        match *self {
            VariantKind::ClassicSprt { .. } | VariantKind::Msprt { .. } => None,
            VariantKind::TruncNested { delta }
            | VariantKind::TruncDisjoint { delta }
            | VariantKind::OneSidedNaiveSup { delta }
            | VariantKind::OneSidedCorrectSup { delta }
            | VariantKind::OneSidedCorrectInf { delta } => Some(delta),
        }
    }

    /// `(null support, alternative support)` for the support-pair variants.
    pub fn supports(&self) -> Option<(Support, Support)> {
        let inf = f64::INFINITY;
        match *self {
            VariantKind::ClassicSprt { .. } | VariantKind::Msprt { .. } => None,
            VariantKind::TruncNested { delta } => Some((Support::rope(delta), Support::FullLine)),
            VariantKind::TruncDisjoint { delta } => Some((Support::rope(delta), Support::TwoTails { delta })),
            VariantKind::OneSidedNaiveSup { delta } => {
                Some((Support::Interval { lo: -inf, hi: delta }, Support::FullLine))
            }
            VariantKind::OneSidedCorrectSup { delta } => Some((
                Support::HalfInterval { lo: 0.0, hi: delta },
                Support::HalfInterval { lo: 0.0, hi: inf },
            )),
            VariantKind::OneSidedCorrectInf { delta } => Some((
                Support::Interval { lo: -delta, hi: 0.0 },
                Support::Interval { lo: -inf, hi: 0.0 },
            )),
        }
    }
}

/// Mixing under the null: a point mass (SPRT, mSPRT) or a spread density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NullMixing {
    Point(f64),
    Spread(MixingSpec),
}

/// A validated test variant together with the mixing scale `tau` and the known
/// data standard deviation `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariantSpec {
    kind: VariantKind,
    tau: f64,
    sigma: f64,
    prior_log_mass_null: f64,
    prior_log_mass_alt: f64,
}

impl VariantSpec {
    pub fn new(kind: VariantKind, tau: f64, sigma: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid("tau", format!("must be positive, got {tau}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", format!("must be positive, got {sigma}")));
        }
        match kind {
            VariantKind::ClassicSprt { theta0, theta1 } => {
                if !(theta0.is_finite() && theta1.is_finite()) {
                    return Err(Error::NonFinite("theta0/theta1"));
                }
                if theta0 == theta1 {
                    return Err(Error::invalid("theta1", "must differ from theta0"));
                }
            }
            VariantKind::Msprt { theta0 } => {
                if !theta0.is_finite() {
                    return Err(Error::NonFinite("theta0"));
                }
            }
            _ => {
                let delta = kind.delta().unwrap_or(f64::NAN);
                if delta.is_nan() || delta <= 0.0 {
                    return Err(Error::invalid("delta", format!("must be positive, got {delta}")));
                }
            }
        }
        let (prior_log_mass_null, prior_log_mass_alt) = match kind.supports() {
            Some((null, alt)) => (null.log_mass(0.0, tau), alt.log_mass(0.0, tau)),
            None => (0.0, 0.0),
        };
        Ok(Self {
            kind,
            tau,
            sigma,
            prior_log_mass_null,
            prior_log_mass_alt,
        })
    }

    pub fn kind(&self) -> VariantKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn is_mixture(&self) -> bool {
        !matches!(self.kind, VariantKind::ClassicSprt { .. })
    }

    pub fn null_mixing(&self) -> Option<NullMixing> {
        match self.kind {
            VariantKind::ClassicSprt { .. } => None,
            VariantKind::Msprt { theta0 } => Some(NullMixing::Point(theta0)),
            kind => {
                let (null, _) = kind.supports()?;
                MixingSpec::new(0.0, self.tau, null).ok().map(NullMixing::Spread)
            }
        }
    }

    pub fn alt_mixing(&self) -> Option<MixingSpec> {
        match self.kind {
            VariantKind::ClassicSprt { .. } => None,
            VariantKind::Msprt { theta0 } => MixingSpec::full_line(theta0, self.tau).ok(),
            kind => {
                let (_, alt) = kind.supports()?;
                MixingSpec::new(0.0, self.tau, alt).ok()
            }
        }
    }

    /// Closed-form `log Λ_n`. Exactly zero at `n = 0`.
    pub fn log_lambda(&self, stats: &SuffStats) -> f64 {
        if stats.n == 0 {
            return 0.0;
        }
        let n = stats.n as f64;
        let s = stats.sum_x;
        let sigma2 = self.sigma * self.sigma;
        match self.kind {
            VariantKind::ClassicSprt { theta0, theta1 } => {
                (theta1 - theta0) * s / sigma2 - n * (theta1 * theta1 - theta0 * theta0) / (2.0 * sigma2)
            }
            VariantKind::Msprt { theta0 } => {
                let tau2 = self.tau * self.tau;
                let centred = s - n * theta0;
                let v = sigma2 + n * tau2;
                -0.5 * (n * tau2 / sigma2).ln_1p() + tau2 * centred * centred / (2.0 * sigma2 * v)
            }
            kind => {
                let (null, alt) = kind.supports().expect("support-pair variant");
                let post = posterior_unchecked(0.0, self.tau, stats, self.sigma);
                let alt_term = alt.log_mass(post.mu_tilde, post.tau_tilde) - self.prior_log_mass_alt;
                let null_term = null.log_mass(post.mu_tilde, post.tau_tilde) - self.prior_log_mass_null;
                alt_term - null_term
            }
        }
    }
}

/// Free-function form of [`VariantSpec::log_lambda`].
pub fn log_lambda(variant: &VariantSpec, stats: &SuffStats) -> f64 {
    variant.log_lambda(stats)
}

/// `log Λ_n` by direct adaptive quadrature of the numerator and denominator
/// integrals (and of each mixing density's normalizer). Independent of every
/// normal-CDF routine.
pub fn log_lambda_quadrature(variant: &VariantSpec, stats: &SuffStats) -> Result<f64> {
    let n = stats.n as f64;
    let s = stats.sum_x;
    let sigma2 = variant.sigma * variant.sigma;
    let tau = variant.tau;
    // log of Π f_θ(x_i) / Π f_0(x_i)
    let loglik = move |theta: f64| (theta * s - 0.5 * n * theta * theta) / sigma2;

    let log_marginal = |support: Support, mu: f64| -> Result<f64> {
        let kernel = move |theta: f64| -0.5 * ((theta - mu) / tau).powi(2);
        let precision = n / sigma2 + 1.0 / (tau * tau);
        let mode = (s / sigma2 + mu / (tau * tau)) / precision;
        let spread = precision.sqrt().recip();
        let mut num = f64::NEG_INFINITY;
        let mut den = f64::NEG_INFINITY;
        for (lo, hi) in support.pieces() {
            num = log_add_exp(num, log_integrate_exp(|t| loglik(t) + kernel(t), lo, hi, mode, spread)?);
            den = log_add_exp(den, log_integrate_exp(kernel, lo, hi, mu, tau)?);
        }
        Ok(num - den)
    };

    match variant.kind {
        VariantKind::ClassicSprt { .. } => Err(Error::Unsupported(
            "the classic SPRT has no mixing integral to evaluate".into(),
        )),
        VariantKind::Msprt { theta0 } => Ok(log_marginal(Support::FullLine, theta0)? - loglik(theta0)),
        kind => {
            let (null, alt) = kind.supports().expect("support-pair variant");
            Ok(log_marginal(alt, 0.0)? - log_marginal(null, 0.0)?)
        }
    }
}

/// Worst disagreement between the closed form and quadrature over random
/// configurations of one variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleSweep {
    pub variant: &'static str,
    pub samples: u64,
    pub max_abs_diff: f64,
    /// `(delta or theta0, tau, sigma, n, sum_x)` at the worst case.
    pub worst: (f64, f64, f64, u64, f64),
}

/// Compare [`log_lambda`] with [`log_lambda_quadrature`] on `samples` random
/// configurations of the variant named `name`.
///
/// Configurations: `τ ∈ {0.1, 10^-0.5, 1}`, `σ ∈ {0.5, 1, 2}`, `δ/τ`
/// log-uniform on `[0.01, 3]`, `n` uniform on `0..=500`, and `Σx` simulated
/// from `N(θ, σ²)` with `θ/δ` uniform on `(−2, 2)`.
pub fn oracle_sweep(name: &str, samples: u64, seed: u64) -> Result<OracleSweep> {
    if samples == 0 {
        return Err(Error::invalid("samples", "must be at least 1"));
    }
    let probe = VariantKind::from_name(name, 1.0, 0.0, 1.0)?;
    if matches!(probe, VariantKind::ClassicSprt { .. }) {
        return Err(Error::Unsupported(
            "the classic SPRT has no mixing integral to evaluate".into(),
        ));
    }
    let key = crate::rng::StreamKey::new(seed, &format!("oracle/{name}"));
    let mut best = OracleSweep {
        variant: probe.name(),
        samples,
        max_abs_diff: 0.0,
        worst: (0.0, 0.0, 0.0, 0, 0.0),
    };
    for i in 0..samples {
        let mut d = key.stream(i);
        let tau = [0.1, 10f64.powf(-0.5), 1.0][(d.uniform() * 3.0) as usize % 3];
        let sigma = [0.5, 1.0, 2.0][(d.uniform() * 3.0) as usize % 3];
        let delta = tau * 10f64.powf(-2.0 + d.uniform() * (3f64.log10() + 2.0));
        let theta = (4.0 * d.uniform() - 2.0) * delta;
        let theta0 = 2.0 * d.uniform() - 1.0;
        let n = (d.uniform() * 501.0) as u64;
        let sum_x = if n == 0 { 0.0 } else { n as f64 * theta + sigma * (n as f64).sqrt() * d.normal() };
        let kind = VariantKind::from_name(name, delta, theta0, 0.0)?;
        let v = VariantSpec::new(kind, tau, sigma)?;
        let st = SuffStats::new(n, sum_x)?;
        let diff = (v.log_lambda(&st) - log_lambda_quadrature(&v, &st)?).abs();
        if diff.is_nan() || diff > best.max_abs_diff {
            best.max_abs_diff = diff;
            let lead = kind.delta().unwrap_or(theta0);
            best.worst = (lead, tau, sigma, n, sum_x);
        }
    }
    Ok(best)
}
