//! Monte Carlo harness for operating characteristics.
//!
//! Replicate `r` of a scenario reads stream `r` of the key derived from
//! `(master_seed, scenario_id)`, and observations are generated lazily until
//! the test stops. Work is spread over a rayon pool, results are collected in
//! input order, and every sum is taken sequentially, so output is identical
//! for any worker count.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::{MixingSpec, Support};
use crate::lratio::{VariantKind, VariantSpec};
use crate::rng::StreamKey;
use crate::sequential::{run_stream, TestConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimVariant {
    Msprt,
    TruncNested,
    TruncDisjoint,
    OneSidedNaive,
    OneSidedCorrectSup,
    OneSidedCorrectInf,
}

impl SimVariant {
    pub fn name(&self) -> &'static str {
        self.kind(1.0).name()
    }

    /// The variant's kind for a ROPE half-width `delta`. The mSPRT tests the
    /// point null `θ = 0`.
    pub fn kind(&self, delta: f64) -> VariantKind {
        match self {
            SimVariant::Msprt => VariantKind::Msprt { theta0: 0.0 },
            SimVariant::TruncNested => VariantKind::TruncNested { delta },
            SimVariant::TruncDisjoint => VariantKind::TruncDisjoint { delta },
            SimVariant::OneSidedNaive => VariantKind::OneSidedNaiveSup { delta },
            SimVariant::OneSidedCorrectSup => VariantKind::OneSidedCorrectSup { delta },
            SimVariant::OneSidedCorrectInf => VariantKind::OneSidedCorrectInf { delta },
        }
    }
}

fn one() -> f64 {
    1.0
}

/// One cell of a simulation grid. The true mean is
/// `θ = theta_over_delta · δ` with `δ = delta_over_tau · τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimScenario {
    pub scenario_id: String,
    pub variant: SimVariant,
    pub theta_over_delta: f64,
    pub delta_over_tau: f64,
    pub tau2: f64,
    #[serde(default = "one")]
    pub sigma2: f64,
    pub alpha: f64,
    pub max_n: u64,
    pub n_replicates: u64,
    pub master_seed: u64,
}

impl SimScenario {
    pub fn tau(&self) -> f64 {
        self.tau2.sqrt()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn delta(&self) -> f64 {
        self.delta_over_tau * self.tau()
    }

    pub fn theta(&self) -> f64 {
        self.theta_over_delta * self.delta()
    }

    pub fn variant_spec(&self) -> Result<VariantSpec> {
        VariantSpec::new(self.variant.kind(self.delta()), self.tau(), self.sigma())
    }

    pub fn test_config(&self) -> Result<TestConfig> {
        TestConfig::new(self.variant_spec()?, self.alpha, self.max_n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenario_id.is_empty() {
            return Err(Error::invalid("scenario_id", "must not be empty"));
        }
        for (name, v) in [
            ("delta_over_tau", self.delta_over_tau),
            ("tau2", self.tau2),
            ("sigma2", self.sigma2),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if !self.theta_over_delta.is_finite() {
            return Err(Error::NonFinite("theta_over_delta"));
        }
        if self.n_replicates == 0 {
            return Err(Error::invalid("n_replicates", "must be at least 1"));
        }
        self.test_config().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub scenario_id: String,
    pub rejection_rate: f64,
    pub rejection_se: f64,
    pub mean_relative_stop: f64,
    pub stop_se: f64,
    pub n_replicates: u64,
}

#[derive(Debug, Clone, Copy)]
struct Outcome {
    rejected: bool,
    relative_stop: f64,
}

fn summarize(scenario_id: &str, outcomes: &[Outcome]) -> SimRecord {
    let b = outcomes.len() as f64;
    let rejections = outcomes.iter().filter(|o| o.rejected).count() as f64;
    let p = rejections / b;
    let stop_sum: f64 = outcomes.iter().map(|o| o.relative_stop).sum();
    let stop_mean = stop_sum / b;
    let stop_var = if outcomes.len() > 1 {
        outcomes.iter().map(|o| (o.relative_stop - stop_mean).powi(2)).sum::<f64>() / (b - 1.0)
    } else {
        0.0
    };
    SimRecord {
        scenario_id: scenario_id.to_owned(),
        rejection_rate: p,
        rejection_se: (p * (1.0 - p) / b).sqrt(),
        mean_relative_stop: stop_mean,
        stop_se: (stop_var / b).sqrt(),
        n_replicates: outcomes.len() as u64,
    }
}

fn replicate(cfg: &TestConfig, theta: f64, sigma: f64, key: &StreamKey, r: u64) -> Result<Outcome> {
    let mut draws = key.stream(r);
    let res = run_stream(cfg, std::iter::repeat_with(|| theta + sigma * draws.normal()))?;
    Ok(Outcome {
        rejected: res.verdict.rejects(),
        relative_stop: res.relative_stop,
    })
}

/// Run `f` on a pool of `jobs` workers (`0` lets rayon decide).
pub fn with_workers<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Unsupported(format!("could not start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn check_unique<'a>(ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateScenario(id.to_owned()));
        }
    }
    Ok(())
}

/// Simulate every scenario and return one record per scenario, in order.
pub fn run_grid(scenarios: &[SimScenario], jobs: usize) -> Result<Vec<SimRecord>> {
    check_unique(scenarios.iter().map(|s| s.scenario_id.as_str()))?;
    for s in scenarios {
        s.validate()?;
    }
    with_workers(jobs, || {
        scenarios
            .par_iter()
            .map(|s| {
                let cfg = s.test_config()?;
                let key = StreamKey::new(s.master_seed, &s.scenario_id);
                let (theta, sigma) = (s.theta(), s.sigma());
                let outcomes = (0..s.n_replicates)
                    .into_par_iter()
                    .map(|r| replicate(&cfg, theta, sigma, &key, r))
                    .collect::<Result<Vec<_>>>()?;
                Ok(summarize(&s.scenario_id, &outcomes))
            })
            .collect()
    })?
}

// ---------------------------------------------------------------------------
// Preset grids
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridPreset {
    TwoSidedNull,
    TwoSidedAlt,
    Disjoint,
    OneSidedNaive,
    OneSidedCorrect,
}

impl GridPreset {
    pub fn name(&self) -> &'static str {
        match self {
            GridPreset::TwoSidedNull => "two-sided-null",
            GridPreset::TwoSidedAlt => "two-sided-alt",
            GridPreset::Disjoint => "disjoint",
            GridPreset::OneSidedNaive => "one-sided-naive",
            GridPreset::OneSidedCorrect => "one-sided-correct",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptions {
    /// Multiplies `B` and `M` (rounded up, at least 1).
    pub scale: f64,
    /// Desk preset: `B = 500`, `M ∈ {100, 1000}`, `δ/τ ∈ {0.1, 1, 3}`.
    pub desk: bool,
    pub seed: u64,
}

impl GridOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            scale: 1.0,
            desk: false,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::invalid("scale", format!("must be positive, got {}", self.scale)));
        }
        Ok(())
    }

    fn scaled(&self, v: u64) -> u64 {
        ((v as f64 * self.scale).ceil() as u64).max(1)
    }

    fn replicates(&self) -> u64 {
        self.scaled(if self.desk { 500 } else { 2000 })
    }

    fn horizons(&self) -> Vec<u64> {
        let base: &[u64] = if self.desk { &[100, 1000] } else { &[100, 1000, 10_000] };
        base.iter().map(|&m| self.scaled(m)).collect()
    }

    fn delta_over_tau(&self) -> &'static [f64] {
        if self.desk {
            &[0.1, 1.0, 3.0]
        } else {
            &[0.01, 0.1, 1.0, 2.0, 3.0]
        }
    }
}

const TWO_SIDED_NULL: [f64; 9] = [-0.8, -0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6, 0.8];
const TWO_SIDED_ALT: [f64; 10] = [-1.8, -1.6, -1.4, -1.2, -1.0, 1.0, 1.2, 1.4, 1.6, 1.8];
const ONE_SIDED_NULL: [f64; 14] = [
    -1.8, -1.6, -1.4, -1.2, -1.0, -0.8, -0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6, 0.8,
];
const ONE_SIDED_ALT: [f64; 5] = [1.0, 1.2, 1.4, 1.6, 1.8];
const ALPHAS: [f64; 3] = [0.01, 0.05, 0.1];
const TAU2S: [f64; 3] = [0.01, 0.1, 1.0];

/// Stable key for a scenario; also keys its random streams.
pub fn scenario_key(
    prefix: &str,
    variant: SimVariant,
    theta_over_delta: f64,
    delta_over_tau: f64,
    tau2: f64,
    alpha: f64,
    max_n: u64,
) -> String {
    format!(
        "{prefix}/{}/t{theta_over_delta}/d{delta_over_tau}/v{tau2}/a{alpha}/m{max_n}",
        variant.name()
    )
}

/// The cross-product grid of a preset, in a fixed order.
pub fn paper_grid(preset: GridPreset, options: &GridOptions) -> Result<Vec<SimScenario>> {
    options.validate()?;
    let (variant, thetas): (SimVariant, Vec<f64>) = match preset {
        GridPreset::TwoSidedNull => (SimVariant::TruncNested, TWO_SIDED_NULL.to_vec()),
        GridPreset::TwoSidedAlt => (SimVariant::TruncNested, TWO_SIDED_ALT.to_vec()),
        GridPreset::Disjoint => (
            SimVariant::TruncDisjoint,
            TWO_SIDED_NULL.iter().chain(&TWO_SIDED_ALT).copied().collect(),
        ),
        GridPreset::OneSidedNaive => (
            SimVariant::OneSidedNaive,
            ONE_SIDED_NULL.iter().chain(&ONE_SIDED_ALT).copied().collect(),
        ),
        GridPreset::OneSidedCorrect => (
            SimVariant::OneSidedCorrectSup,
            ONE_SIDED_NULL.iter().chain(&ONE_SIDED_ALT).copied().collect(),
        ),
    };
    let b = options.replicates();
    let mut out = Vec::new();
    for &t in &thetas {
        for &m in &options.horizons() {
            for &alpha in &ALPHAS {
                for &tau2 in &TAU2S {
                    for &d in options.delta_over_tau() {
                        out.push(SimScenario {
                            scenario_id: scenario_key(preset.name(), variant, t, d, tau2, alpha, m),
                            variant,
                            theta_over_delta: t,
                            delta_over_tau: d,
                            tau2,
                            sigma2: 1.0,
                            alpha,
                            max_n: m,
                            n_replicates: b,
                            master_seed: options.seed,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Comparison against the mSPRT on common streams
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub scenario_id: String,
    pub power_trunc: f64,
    pub power_msprt: f64,
    /// `power_trunc / power_msprt`; `None` when the mSPRT never rejected.
    pub power_ratio: Option<f64>,
    /// Ratio of mean relative stopping times.
    pub stop_ratio: Option<f64>,
    /// Delta-method standard error of `power_ratio`, using the covariance of
    /// the paired outcomes.
    pub power_ratio_se: Option<f64>,
    pub stop_ratio_se: Option<f64>,
    pub flags: Vec<String>,
}

/// Sample covariance of paired values, divided by `B` (covariance of means).
fn mean_cov(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    if a.len() < 2 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0) / n
}

fn ratio_with_se(a: &[f64], b: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    if mb == 0.0 {
        return (None, None);
    }
    let r = ma / mb;
    let (vaa, vbb, vab) = (mean_cov(a, a), mean_cov(b, b), mean_cov(a, b));
    let var = (vaa - 2.0 * r * vab + r * r * vbb) / (mb * mb);
    (Some(r), Some(var.max(0.0).sqrt()))
}

/// Feed every replicate stream to both the scenario's truncated test and the
/// mSPRT with the same mixing scale, then compare power and stopping time.
pub fn compare_to_msprt(scenarios: &[SimScenario], jobs: usize) -> Result<Vec<ComparisonRecord>> {
    check_unique(scenarios.iter().map(|s| s.scenario_id.as_str()))?;
    for s in scenarios {
        s.validate()?;
        if s.theta_over_delta.abs() < 1.0 {
            return Err(Error::invalid(
                "theta_over_delta",
                format!(
                    "comparison is defined on the alternative grid |θ/δ| ≥ 1, scenario `{}` has {}",
                    s.scenario_id, s.theta_over_delta
                ),
            ));
        }
    }
    with_workers(jobs, || {
        scenarios
            .par_iter()
            .map(|s| {
                let trunc = s.test_config()?;
                let msprt = TestConfig::new(
                    VariantSpec::new(VariantKind::Msprt { theta0: 0.0 }, s.tau(), s.sigma())?,
                    s.alpha,
                    s.max_n,
                )?;
                let key = StreamKey::new(s.master_seed, &s.scenario_id);
                let (theta, sigma) = (s.theta(), s.sigma());
                let pairs = (0..s.n_replicates)
                    .into_par_iter()
                    .map(|r| {
                        Ok((
                            replicate(&trunc, theta, sigma, &key, r)?,
                            replicate(&msprt, theta, sigma, &key, r)?,
                        ))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(compare_outcomes(&s.scenario_id, &pairs))
            })
            .collect()
    })?
}

fn compare_outcomes(scenario_id: &str, pairs: &[(Outcome, Outcome)]) -> ComparisonRecord {
    let indicator = |o: &Outcome| if o.rejected { 1.0 } else { 0.0 };
    let rej_t: Vec<f64> = pairs.iter().map(|(t, _)| indicator(t)).collect();
    let rej_m: Vec<f64> = pairs.iter().map(|(_, m)| indicator(m)).collect();
    let stop_t: Vec<f64> = pairs.iter().map(|(t, _)| t.relative_stop).collect();
    let stop_m: Vec<f64> = pairs.iter().map(|(_, m)| m.relative_stop).collect();
    let b = pairs.len() as f64;
    let power_trunc = rej_t.iter().sum::<f64>() / b;
    let power_msprt = rej_m.iter().sum::<f64>() / b;
    let (power_ratio, power_ratio_se) = ratio_with_se(&rej_t, &rej_m);
    let (stop_ratio, stop_ratio_se) = ratio_with_se(&stop_t, &stop_m);
    let mut flags = Vec::new();
    if power_ratio.is_none() {
        flags.push(if power_trunc == 0.0 {
            "power-ratio-undefined-0/0".to_owned()
        } else {
            "power-ratio-undefined-msprt-zero".to_owned()
        });
    }
    if stop_ratio.is_none() {
        flags.push("stop-ratio-undefined".to_owned());
    }
    ComparisonRecord {
        scenario_id: scenario_id.to_owned(),
        power_trunc,
        power_msprt,
        power_ratio,
        stop_ratio,
        power_ratio_se,
        stop_ratio_se,
        flags,
    }
}

// ---------------------------------------------------------------------------
// Misspecified mixing scale
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// θ drawn inside the ROPE.
    Null,
    /// θ drawn from the two tails outside the ROPE.
    Alternative,
}

impl Side {
    pub fn name(&self) -> &'static str {
        match self {
            Side::Null => "null",
            Side::Alternative => "alternative",
        }
    }
}

/// Point `x > 0` where the densities of `N(0, γ²)` and `N(0, τ²)` cross.
/// `None` when `τ = γ`.
pub fn intersection_point(gamma: f64, tau: f64) -> Option<f64> {
    if gamma == tau {
        return None;
    }
    let (g2, t2) = (gamma * gamma, tau * tau);
    Some((2.0 * g2 * t2 * (tau / gamma).ln() / (t2 - g2)).sqrt())
}

/// A misspecification cell: θ comes from the true prior `N(0, γ²)` restricted
/// to one side of the ROPE, while the nested truncated test mixes with sd
/// `τ = (τ/γ)·γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MisspecScenario {
    pub scenario_id: String,
    pub gamma2: f64,
    pub tau_over_gamma: f64,
    /// δ relative to the density intersection point (relative to τ when τ = γ).
    pub delta_over_x: f64,
    pub side: Side,
    pub alpha: f64,
    pub max_n: u64,
}

impl MisspecScenario {
    pub fn gamma(&self) -> f64 {
        self.gamma2.sqrt()
    }

    pub fn tau(&self) -> f64 {
        self.tau_over_gamma * self.gamma()
    }

    pub fn delta(&self) -> f64 {
        let reference = intersection_point(self.gamma(), self.tau()).unwrap_or(self.tau());
        self.delta_over_x * reference
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma2", self.gamma2),
            ("tau_over_gamma", self.tau_over_gamma),
            ("delta_over_x", self.delta_over_x),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        self.test_config().map(|_| ())
    }

    pub fn test_config(&self) -> Result<TestConfig> {
        let v = VariantSpec::new(VariantKind::TruncNested { delta: self.delta() }, self.tau(), 1.0)?;
        TestConfig::new(v, self.alpha, self.max_n)
    }

    /// Distribution of θ for this side.
    pub fn theta_prior(&self) -> Result<MixingSpec> {
        let support = match self.side {
            Side::Null => Support::rope(self.delta()),
            Side::Alternative => Support::TwoTails { delta: self.delta() },
        };
        MixingSpec::new(0.0, self.gamma(), support)
    }
}

const GAMMA2S: [f64; 3] = [0.01, 0.1, 1.0];
const TAU_OVER_GAMMA: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];
const DELTA_OVER_X: [f64; 5] = [0.01, 0.1, 1.0, 2.0, 3.0];

/// Misspecification grid. The desk preset keeps `γ² = 1`, `α ∈ {0.05, 0.1}`
/// and `M ∈ {100, 1000}`.
pub fn misspec_grid(options: &GridOptions) -> Result<Vec<MisspecScenario>> {
    options.validate()?;
    let gamma2s: &[f64] = if options.desk { &[1.0] } else { &GAMMA2S };
    let alphas: &[f64] = if options.desk { &[0.05, 0.1] } else { &ALPHAS };
    let mut out = Vec::new();
    for side in [Side::Null, Side::Alternative] {
        for &gamma2 in gamma2s {
            for &tau_over_gamma in &TAU_OVER_GAMMA {
                for &delta_over_x in &DELTA_OVER_X {
                    for &max_n in &options.horizons() {
                        for &alpha in alphas {
                            out.push(MisspecScenario {
                                scenario_id: format!(
                                    "misspec/{}/g{gamma2}/r{tau_over_gamma}/x{delta_over_x}/a{alpha}/m{max_n}",
                                    side.name()
                                ),
                                gamma2,
                                tau_over_gamma,
                                delta_over_x,
                                side,
                                alpha,
                                max_n,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Number of replicates the misspecification preset uses under `options`.
pub fn misspec_replicates(options: &GridOptions) -> u64 {
    options.replicates()
}

/// Each replicate draws a fresh θ from the true prior (first two uniforms of
/// its stream), then a data stream from `N(θ, 1)`.
pub fn run_misspec(grid: &[MisspecScenario], n_replicates: u64, seed: u64, jobs: usize) -> Result<Vec<SimRecord>> {
    if n_replicates == 0 {
        return Err(Error::invalid("n_replicates", "must be at least 1"));
    }
    check_unique(grid.iter().map(|s| s.scenario_id.as_str()))?;
    for s in grid {
        s.validate()?;
    }
    with_workers(jobs, || {
        grid.par_iter()
            .map(|s| {
                let cfg = s.test_config()?;
                let prior = s.theta_prior()?;
                let key = StreamKey::new(seed, &s.scenario_id);
                let outcomes = (0..n_replicates)
                    .into_par_iter()
                    .map(|r| {
                        let mut draws = key.stream(r);
                        let (u, side) = (draws.uniform(), draws.uniform());
                        let theta = prior.sample(u, side);
                        let res = run_stream(&cfg, std::iter::repeat_with(|| theta + draws.normal()))?;
                        Ok(Outcome {
                            rejected: res.verdict.rejects(),
                            relative_stop: res.relative_stop,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(summarize(&s.scenario_id, &outcomes))
            })
            .collect()
    })?
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(id: &str, t: f64, d: f64, b: u64, m: u64) -> SimScenario {
        SimScenario {
            scenario_id: id.into(),
            variant: SimVariant::TruncNested,
            theta_over_delta: t,
            delta_over_tau: d,
            tau2: 1.0,
            sigma2: 1.0,
            alpha: 0.05,
            max_n: m,
            n_replicates: b,
            master_seed: 7,
        }
    }

    #[test]
    fn grid_cardinalities() {
        let o = GridOptions::new(1);
        assert_eq!(paper_grid(GridPreset::TwoSidedNull, &o).unwrap().len(), 1215);
        assert_eq!(paper_grid(GridPreset::TwoSidedAlt, &o).unwrap().len(), 1350);
        assert_eq!(paper_grid(GridPreset::Disjoint, &o).unwrap().len(), 19 * 135);
        assert_eq!(paper_grid(GridPreset::OneSidedNaive, &o).unwrap().len(), 19 * 135);
        assert_eq!(misspec_grid(&o).unwrap().len(), 2 * 3 * 5 * 5 * 3 * 3);
        let alt = paper_grid(GridPreset::TwoSidedAlt, &o).unwrap();
        let mut ts: Vec<f64> = alt.iter().map(|s| s.theta_over_delta).collect();
        ts.dedup();
        assert_eq!(ts, TWO_SIDED_ALT.to_vec());
        assert!(alt.iter().all(|s| s.n_replicates == 2000 && s.sigma2 == 1.0));
    }

    #[test]
    fn scaling_and_desk() {
        let o = GridOptions {
            scale: 0.25,
            desk: false,
            seed: 1,
        };
        let g = paper_grid(GridPreset::TwoSidedNull, &o).unwrap();
        assert_eq!(g.len(), 1215);
        assert!(g.iter().all(|s| s.n_replicates == 500));
        let mut ms: Vec<u64> = g.iter().map(|s| s.max_n).collect();
        ms.sort_unstable();
        ms.dedup();
        assert_eq!(ms, vec![25, 250, 2500]);
        let desk = GridOptions {
            scale: 1.0,
            desk: true,
            seed: 1,
        };
        assert_eq!(paper_grid(GridPreset::TwoSidedNull, &desk).unwrap().len(), 9 * 2 * 3 * 3 * 3);
        let zero = GridOptions {
            scale: 0.0,
            desk: false,
            seed: 1,
        };
        assert!(paper_grid(GridPreset::TwoSidedNull, &zero).is_err());
    }

    #[test]
    fn scenario_ids_unique() {
        let o = GridOptions::new(1);
        for p in [GridPreset::TwoSidedNull, GridPreset::Disjoint, GridPreset::OneSidedCorrect] {
            let g = paper_grid(p, &o).unwrap();
            assert!(check_unique(g.iter().map(|s| s.scenario_id.as_str())).is_ok());
        }
        let g = misspec_grid(&o).unwrap();
        assert!(check_unique(g.iter().map(|s| s.scenario_id.as_str())).is_ok());
    }

    #[test]
    fn intersection_point_values() {
        let x = intersection_point(1.0, 10.0).unwrap();
        assert!((x - 2.156_777_006_682_338_4).abs() < 1e-13);
        // the two densities really do cross there
        let d = |s: f64| (-0.5 * (x / s).powi(2)).exp() / s;
        assert!((d(1.0) - d(10.0)).abs() < 1e-15);
        assert_eq!(intersection_point(0.5, 0.5), None);
        let x = intersection_point(1.0, 0.1).unwrap();
        assert!((d2(x, 1.0) - d2(x, 0.1)).abs() < 1e-14);
    }

    fn d2(x: f64, s: f64) -> f64 {
        (-0.5 * (x / s).powi(2)).exp() / s
    }

    #[test]
    fn rejects_bad_grids() {
        let a = scenario("a", 0.0, 1.0, 10, 10);
        assert!(matches!(run_grid(&[a.clone(), a.clone()], 1), Err(Error::DuplicateScenario(_))));
        let zero_b = scenario("z", 0.0, 1.0, 0, 10);
        assert!(run_grid(&[zero_b], 1).is_err());
        assert!(compare_to_msprt(&[scenario("in", 0.5, 1.0, 10, 10)], 1).is_err());
        assert!(run_misspec(&[], 0, 1, 1).is_err());
    }

    #[test]
    fn deterministic_across_workers() {
        let grid: Vec<SimScenario> = [(0.0, 1.0), (0.8, 3.0), (1.4, 0.1)]
            .iter()
            .enumerate()
            .map(|(i, &(t, d))| scenario(&format!("s{i}"), t, d, 64, 200))
            .collect();
        let a = run_grid(&grid, 1).unwrap();
        let b = run_grid(&grid, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_rejections_means_full_horizon() {
        let r = run_grid(&[scenario("flat", 0.0, 100.0, 50, 20)], 2).unwrap();
        assert_eq!(r[0].rejection_rate, 0.0);
        assert_eq!(r[0].mean_relative_stop, 1.0);
        assert_eq!(r[0].stop_se, 0.0);
    }

    #[test]
    fn strong_effect_is_detected() {
        let r = run_grid(&[scenario("strong", 1.8, 1.0, 100, 500)], 2).unwrap();
        assert!(r[0].rejection_rate > 0.9);
        assert!(r[0].mean_relative_stop < 0.5);
    }

    #[test]
    fn comparison_on_common_streams() {
        let grid = vec![scenario("c", 1.8, 0.01, 200, 300)];
        let c = compare_to_msprt(&grid, 2).unwrap();
        let r = c[0].power_ratio.unwrap();
        assert!((r - 1.0).abs() <= 2.0 * c[0].power_ratio_se.unwrap() + 1e-12, "{c:?}");
        assert!(c[0].flags.is_empty());
    }

    #[test]
    fn comparison_flags_undefined_ratio() {
        let pairs = [(
            Outcome {
                rejected: false,
                relative_stop: 1.0,
            },
            Outcome {
                rejected: false,
                relative_stop: 1.0,
            },
        ); 5];
        let c = compare_outcomes("x", &pairs);
        assert_eq!(c.power_ratio, None);
        assert_eq!(c.flags, vec!["power-ratio-undefined-0/0".to_owned()]);
        assert_eq!(c.stop_ratio, Some(1.0));
    }

    #[test]
    fn misspec_runs_deterministically() {
        let grid: Vec<MisspecScenario> = [(Side::Null, 0.1), (Side::Alternative, 10.0), (Side::Null, 1.0)]
            .iter()
            .enumerate()
            .map(|(i, &(side, r))| MisspecScenario {
                scenario_id: format!("m{i}"),
                gamma2: 1.0,
                tau_over_gamma: r,
                delta_over_x: 1.0,
                side,
                alpha: 0.05,
                max_n: 100,
            })
            .collect();
        let a = run_misspec(&grid, 40, 3, 1).unwrap();
        let b = run_misspec(&grid, 40, 3, 3).unwrap();
        assert_eq!(a, b);
        assert!(grid[2].delta() == 1.0);
    }

    #[test]
    fn scenario_round_trips_through_serde() {
        let s = scenario("rt", 0.4, 1.0, 10, 10);
        let json = serde_json::to_string(&s).unwrap();
        let back: SimScenario = serde_json::from_str(&json).unwrap();
        assert_eq!(s, back);
    }
}
