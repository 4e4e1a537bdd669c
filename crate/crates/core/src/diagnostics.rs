//! Monte Carlo checks of the validity machinery.
//!
//! Three quantities are estimated under a true mean `θ0`:
//!
//! - the base-case expectation `E_θ0(Λ_1)`,
//! - the one-step factor `E_θ0(Λ_{n+1}/Λ_n | x_1..x_n)`,
//! - the expected posterior tail/ROPE ratio one step ahead.
//!
//! Each also has a deterministic counterpart computed by quadrature over the
//! next observation, so Monte Carlo output can be judged against the exact
//! expectation rather than only against a hoped-for bound.
//!
//! Draws are split into fixed chunks of [`CHUNK`] and chunk `i` reads stream
//! `i` of the estimator's key. Chunk summaries are merged in index order, so
//! an estimate is bit-identical at any thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::{
    log_add_exp, log_std_normal_cdf, log_std_normal_pdf, posterior_unchecked, PosteriorState, SuffStats,
};
use crate::lratio::{NullMixing, VariantKind, VariantSpec};
use crate::quadrature::integrate;
use crate::rng::{Draws, StreamKey};

pub const CHUNK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_draws: u64,
    pub seed: u64,
}

impl McEstimate {
    /// `mean ≤ bound + k·se`
    pub fn le_within(&self, bound: f64, k: f64) -> bool {
        self.mean <= bound + k * self.std_error
    }

    /// `|mean − other.mean|` in units of the combined standard error.
    pub fn z_against(&self, other: &McEstimate) -> f64 {
        let se = self.std_error.hypot(other.std_error);
        let d = (self.mean - other.mean).abs();
        if se > 0.0 {
            d / se
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpectationMode {
    /// Exact inner integrals from the closed-form ratio.
    ClosedForm,
    /// Inner integrals estimated by sampling θ from each mixing distribution.
    NestedSampling,
}

impl ExpectationMode {
    pub fn name(&self) -> &'static str {
        match self {
            ExpectationMode::ClosedForm => "closed-form",
            ExpectationMode::NestedSampling => "nested-sampling",
        }
    }
}

/// Running sample moments, mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let w = other.n as f64 / n as f64;
        Moments {
            n,
            mean: self.mean + d * w,
            m2: self.m2 + other.m2 + d * d * self.n as f64 * w,
        }
    }
}

/// Average `sample(draws)` over `n_draws` chunked, parallel draws.
fn chunked_mean<F>(key: StreamKey, n_draws: u64, seed: u64, sample: F) -> McEstimate
where
    F: Fn(&mut Draws) -> f64 + Sync,
{
    let n_chunks = n_draws.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut draws = key.stream(c);
            let len = CHUNK.min(n_draws - c * CHUNK);
            let mut m = Moments::default();
            for _ in 0..len {
                m.push(sample(&mut draws));
            }
            m
        })
        .collect();
    let total = parts.into_iter().fold(Moments::default(), Moments::merge);
    let var = if total.n > 1 { total.m2 / (total.n - 1) as f64 } else { 0.0 };
    McEstimate {
        mean: total.mean,
        std_error: (var / total.n as f64).sqrt(),
        n_draws,
        seed,
    }
}

fn require_mixture(variant: &VariantSpec) -> Result<()> {
    if variant.is_mixture() {
        Ok(())
    } else {
        Err(Error::invalid("variant", "diagnostics require a mixture variant"))
    }
}

fn require_draws(name: &'static str, n: u64) -> Result<()> {
    if n == 0 {
        Err(Error::invalid(name, "must be at least 1"))
    } else {
        Ok(())
    }
}

/// Monte Carlo estimate of `E_θ0(Λ_1)`.
pub fn mc_base_case_expectation(
    theta0: f64,
    variant: &VariantSpec,
    mode: ExpectationMode,
    n_outer: u64,
    n_inner: u64,
    seed: u64,
) -> Result<McEstimate> {
    require_mixture(variant)?;
    require_draws("n_outer", n_outer)?;
    if !theta0.is_finite() {
        return Err(Error::NonFinite("theta0"));
    }
    let sigma = variant.sigma();
    match mode {
        ExpectationMode::ClosedForm => {
            let key = StreamKey::new(seed, "base-case/closed-form");
            Ok(chunked_mean(key, n_outer, seed, |d| {
                let x = theta0 + sigma * d.normal();
                variant.log_lambda(&SuffStats { n: 1, sum_x: x }).exp()
            }))
        }
        ExpectationMode::NestedSampling => {
            require_draws("n_inner", n_inner)?;
            let alt = variant.alt_mixing().expect("mixture variant");
            let null = variant.null_mixing().expect("mixture variant");
            let key = StreamKey::new(seed, "base-case/nested-sampling");
            let loglik = move |theta: f64, x: f64| -0.5 * ((x - theta) / sigma).powi(2);
            Ok(chunked_mean(key, n_outer, seed, |d| {
                let x = theta0 + sigma * d.normal();
                let log_mean = |d: &mut Draws, spec: &crate::gauss::MixingSpec| {
                    let mut acc = f64::NEG_INFINITY;
                    for _ in 0..n_inner {
                        let (u, side) = (d.uniform(), d.uniform());
                        acc = log_add_exp(acc, loglik(spec.sample(u, side), x));
                    }
                    acc - (n_inner as f64).ln()
                };
                let num = log_mean(d, &alt);
                let den = match null {
                    NullMixing::Point(t) => loglik(t, x),
                    NullMixing::Spread(spec) => log_mean(d, &spec),
                };
                (num - den).exp()
            }))
        }
    }
}

/// Monte Carlo estimate of `E_θ0(Λ_{n+1}/Λ_n | prefix)`.
pub fn supermartingale_check(
    theta0: f64,
    variant: &VariantSpec,
    prefix: &SuffStats,
    n_draws: u64,
    seed: u64,
) -> Result<McEstimate> {
    require_mixture(variant)?;
    require_draws("n_draws", n_draws)?;
    let sigma = variant.sigma();
    let base = variant.log_lambda(prefix);
    let key = StreamKey::new(seed, "one-step-factor");
    Ok(chunked_mean(key, n_draws, seed, |d| {
        let x = theta0 + sigma * d.normal();
        (variant.log_lambda(&prefix.push(x)) - base).exp()
    }))
}

/// `log` of the posterior tail/ROPE mass ratio
/// `(Φ(a_n) + 1 − Φ(b_n)) / (Φ(b_n) − Φ(a_n))`.
pub fn log_tail_rope_ratio(post: &PosteriorState, delta: f64) -> Result<f64> {
    let rope = crate::gauss::rope_mass_and_cn(post, delta)?;
    let log_tails = log_add_exp(log_std_normal_cdf(rope.a_n), log_std_normal_cdf(-rope.b_n));
    Ok(log_tails - rope.log_mass)
}

/// The posterior tail/ROPE mass ratio, which equals `c_n − 1`.
pub fn tail_rope_ratio(post: &PosteriorState, delta: f64) -> Result<f64> {
    Ok(log_tail_rope_ratio(post, delta)?.exp())
}

fn rope_delta(variant: &VariantSpec) -> Result<f64> {
    match variant.kind() {
        VariantKind::TruncNested { delta } | VariantKind::TruncDisjoint { delta } => Ok(delta),
        _ => Err(Error::invalid("variant", "the tail/ROPE ratio is defined for two-sided truncated variants")),
    }
}

/// Monte Carlo estimate of the tail/ROPE ratio after one more observation
/// drawn from `N(θ0, σ²)`, given `prefix`. Compare with
/// [`tail_rope_ratio`] at the prefix posterior.
pub fn tail_ratio_decrease_check(
    theta0: f64,
    variant: &VariantSpec,
    prefix: &SuffStats,
    n_draws: u64,
    seed: u64,
) -> Result<McEstimate> {
    let delta = rope_delta(variant)?;
    require_draws("n_draws", n_draws)?;
    let (tau, sigma) = (variant.tau(), variant.sigma());
    let key = StreamKey::new(seed, "tail-ratio");
    Ok(chunked_mean(key, n_draws, seed, |d| {
        let x = theta0 + sigma * d.normal();
        let post = posterior_unchecked(0.0, tau, &prefix.push(x), sigma);
        log_tail_rope_ratio(&post, delta).map_or(f64::NAN, f64::exp)
    }))
}

/// Current tail/ROPE ratio for `prefix` under `variant`'s prior.
pub fn current_tail_ratio(variant: &VariantSpec, prefix: &SuffStats) -> Result<f64> {
    let delta = rope_delta(variant)?;
    let post = posterior_unchecked(0.0, variant.tau(), prefix, variant.sigma());
    tail_rope_ratio(&post, delta)
}

/// `E[exp(h(x))]` for `x ~ N(θ0, σ²)` by quadrature over the standard score.
fn expect_exp(theta0: f64, sigma: f64, h: impl Fn(f64) -> f64) -> Result<f64> {
    const Z_RANGE: f64 = 40.0;
    let r = integrate(
        |z| (h(theta0 + sigma * z) + log_std_normal_pdf(z)).exp(),
        -Z_RANGE,
        Z_RANGE,
        160,
        1e-11,
        0.0,
    )?;
    Ok(r.value)
}

/// Exact `E_θ0(Λ_{n+1}/Λ_n | prefix)` by quadrature. With an empty prefix
/// this is the base-case expectation `E_θ0(Λ_1)`.
pub fn exact_one_step_factor(theta0: f64, variant: &VariantSpec, prefix: &SuffStats) -> Result<f64> {
    require_mixture(variant)?;
    let base = variant.log_lambda(prefix);
    expect_exp(theta0, variant.sigma(), |x| variant.log_lambda(&prefix.push(x)) - base)
}

/// Exact one-step expected tail/ROPE ratio by quadrature.
pub fn exact_next_tail_ratio(theta0: f64, variant: &VariantSpec, prefix: &SuffStats) -> Result<f64> {
    let delta = rope_delta(variant)?;
    let (tau, sigma) = (variant.tau(), variant.sigma());
    expect_exp(theta0, sigma, |x| {
        let post = posterior_unchecked(0.0, tau, &prefix.push(x), sigma);
        log_tail_rope_ratio(&post, delta).unwrap_or(f64::NAN)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::rope_mass_and_cn;
    use proptest::prelude::*;

    fn nested(delta: f64) -> VariantSpec {
        VariantSpec::new(VariantKind::TruncNested { delta }, 1.0, 1.0).unwrap()
    }

    fn prior() -> PosteriorState {
        PosteriorState {
            mu_tilde: 0.0,
            tau_tilde: 1.0,
            n: 0,
        }
    }

    #[test]
    fn moments_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let mut whole = Moments::default();
        xs.iter().for_each(|&x| whole.push(x));
        let merged = xs.chunks(77).fold(Moments::default(), |acc, c| {
            let mut m = Moments::default();
            c.iter().for_each(|&x| m.push(x));
            acc.merge(m)
        });
        assert!((whole.mean - merged.mean).abs() < 1e-12);
        assert!((whole.m2 - merged.m2).abs() < 1e-8 * whole.m2);
    }

    #[test]
    fn tail_ratio_at_prior() {
        // (1 − 0.682689492137086) / 0.682689492137086
        let r = tail_rope_ratio(&prior(), 1.0).unwrap();
        assert!((r - 0.464_794_773_491_544).abs() < 1e-13);
        assert_eq!(tail_rope_ratio(&prior(), 1e6).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_estimate_matches_exact() {
        let v = nested(1.0);
        let exact = exact_one_step_factor(0.0, &v, &SuffStats::default()).unwrap();
        // independent 40-digit value of E_0(Λ_1) at δ = τ = σ = 1
        assert!((exact - 0.943_51).abs() < 1e-4, "{exact}");
        let est = mc_base_case_expectation(0.0, &v, ExpectationMode::ClosedForm, 100_000, 0, 11).unwrap();
        assert!((est.mean - exact).abs() < 4.0 * est.std_error, "{est:?} vs {exact}");
        assert!(est.le_within(1.0, 3.0));
    }

    #[test]
    fn nested_sampling_agrees_with_closed_form() {
        for (delta, theta0) in [(1.0, 0.5), (0.3, -0.1), (2.0, 1.5)] {
            let v = nested(delta);
            let a = mc_base_case_expectation(theta0, &v, ExpectationMode::ClosedForm, 20_000, 0, 5).unwrap();
            let b = mc_base_case_expectation(theta0, &v, ExpectationMode::NestedSampling, 400, 2000, 6).unwrap();
            assert!(a.z_against(&b) < 4.0, "{delta} {theta0}: {a:?} vs {b:?}");
        }
        let m = VariantSpec::new(VariantKind::Msprt { theta0: 0.0 }, 1.0, 1.0).unwrap();
        let a = mc_base_case_expectation(0.0, &m, ExpectationMode::ClosedForm, 20_000, 0, 5).unwrap();
        let b = mc_base_case_expectation(0.0, &m, ExpectationMode::NestedSampling, 400, 2000, 6).unwrap();
        assert!(a.z_against(&b) < 4.0);
    }

    #[test]
    fn msprt_is_a_martingale() {
        let m = VariantSpec::new(VariantKind::Msprt { theta0: 0.0 }, 1.0, 1.0).unwrap();
        for prefix in [SuffStats::default(), SuffStats { n: 30, sum_x: 4.0 }] {
            let e = exact_one_step_factor(0.0, &m, &prefix).unwrap();
            assert!((e - 1.0).abs() < 1e-9, "{e}");
        }
    }

    #[test]
    fn wide_rope_gives_unit_ratio() {
        let v = nested(1e12);
        let est = mc_base_case_expectation(0.3, &v, ExpectationMode::ClosedForm, 1000, 0, 1).unwrap();
        assert_eq!((est.mean, est.std_error), (1.0, 0.0));
        let est = supermartingale_check(0.3, &v, &SuffStats { n: 5, sum_x: 1.0 }, 1000, 1).unwrap();
        assert_eq!(est.mean, 1.0);
        let est = tail_ratio_decrease_check(0.3, &v, &SuffStats { n: 5, sum_x: 1.0 }, 1000, 1).unwrap();
        assert_eq!(est.mean, 0.0);
    }

    #[test]
    fn one_step_at_empty_prefix_is_base_case() {
        let v = nested(1.0);
        let a = mc_base_case_expectation(0.2, &v, ExpectationMode::ClosedForm, 50_000, 0, 3).unwrap();
        let b = supermartingale_check(0.2, &v, &SuffStats::default(), 50_000, 4).unwrap();
        assert!(a.z_against(&b) < 4.0);
    }

    #[test]
    fn one_step_factor_tracks_quadrature() {
        let v = nested(1.0);
        let prefix = SuffStats { n: 50, sum_x: 40.0 };
        let exact = exact_one_step_factor(0.8, &v, &prefix).unwrap();
        let est = supermartingale_check(0.8, &v, &prefix, 100_000, 9).unwrap();
        assert!((est.mean - exact).abs() < 4.0 * est.std_error);
    }

    #[test]
    fn tail_ratio_check_tracks_quadrature() {
        let v = nested(1.0);
        let exact = exact_next_tail_ratio(0.0, &v, &SuffStats::default()).unwrap();
        let est = tail_ratio_decrease_check(0.0, &v, &SuffStats::default(), 100_000, 2).unwrap();
        assert!((est.mean - exact).abs() < 4.0 * est.std_error);
        // at the origin the one-step expected ratio falls below its prior value
        assert!(exact < tail_rope_ratio(&prior(), 1.0).unwrap());
    }

    #[test]
    fn estimates_are_reproducible() {
        let v = nested(0.5);
        let a = supermartingale_check(0.1, &v, &SuffStats { n: 3, sum_x: 0.2 }, 10_000, 42).unwrap();
        let b = supermartingale_check(0.1, &v, &SuffStats { n: 3, sum_x: 0.2 }, 10_000, 42).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| supermartingale_check(0.1, &v, &SuffStats { n: 3, sum_x: 0.2 }, 10_000, 42).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn invalid_inputs() {
        let sprt = VariantSpec::new(VariantKind::ClassicSprt { theta0: 0.0, theta1: 1.0 }, 1.0, 1.0).unwrap();
        assert!(mc_base_case_expectation(0.0, &sprt, ExpectationMode::ClosedForm, 10, 0, 1).is_err());
        assert!(mc_base_case_expectation(0.0, &nested(1.0), ExpectationMode::ClosedForm, 0, 0, 1).is_err());
        assert!(mc_base_case_expectation(0.0, &nested(1.0), ExpectationMode::NestedSampling, 10, 0, 1).is_err());
        assert!(tail_ratio_decrease_check(0.0, &sprt, &SuffStats::default(), 10, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn tail_ratio_equals_cn_minus_one(mu in -3.0f64..3.0, delta in 0.05f64..2.0, k in 0.5f64..5.0) {
            let post = PosteriorState { mu_tilde: mu * delta, tau_tilde: k * delta, n: 1 };
            let lhs = tail_rope_ratio(&post, delta).unwrap();
            let rhs = rope_mass_and_cn(&post, delta).unwrap().c_n() - 1.0;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1e-300) + 1e-15, "{} vs {}", lhs, rhs);
        }
    }
}
