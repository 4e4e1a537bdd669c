//! Streaming test engine.
//!
//! A [`TestState`] is a small value updated one observation at a time. The
//! log likelihood ratio is always recomputed from the sufficient statistics,
//! never accumulated, so a state depends on the data only through `(n, Σx)`.
//!
//! Stopping: reject `H0` at the first `n ≤ M` with `p_n = min(1, 1/Λ_n) ≤ α`
//! (inclusive). If `n` reaches `M` first, the test accepts `H0` at the
//! horizon. Wald's SPRT with a Type II budget `β` instead uses the boundaries
//! `A = (1 − β)/α` and `B = β/(1 − α)` and may accept early.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::SuffStats;
use crate::lratio::{VariantKind, VariantSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestConfig {
    pub variant: VariantSpec,
    pub alpha: f64,
    pub max_n: u64,
    /// Type II budget for the two-boundary SPRT. `None` runs the SPRT as a
    /// test of power one (upper boundary only).
    pub beta: Option<f64>,
    pub record_trajectory: bool,
}

impl TestConfig {
    pub fn new(variant: VariantSpec, alpha: f64, max_n: u64) -> Result<Self> {
        let cfg = Self {
            variant,
            alpha,
            max_n,
            beta: None,
            record_trajectory: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        self.beta = Some(beta);
        self.validate()?;
        Ok(self)
    }

    #[must_use]
    pub fn with_trajectory(mut self, record: bool) -> Self {
        self.record_trajectory = record;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        if self.max_n == 0 {
            return Err(Error::invalid("max_n", "must be at least 1"));
        }
        if let Some(beta) = self.beta {
            if !matches!(self.variant.kind(), VariantKind::ClassicSprt { .. }) {
                return Err(Error::invalid(
                    "beta",
                    "a lower boundary exists only for the classic SPRT",
                ));
            }
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::invalid("beta", format!("must lie in (0, 1), got {beta}")));
            }
            if self.alpha + beta >= 1.0 {
                return Err(Error::invalid("beta", "alpha + beta must be below 1"));
            }
        }
        Ok(())
    }

    /// Rejection threshold on the p-value scale: `α`, or `1/A` for the
    /// two-boundary SPRT.
    pub fn p_threshold(&self) -> f64 {
        match self.beta {
            Some(beta) => self.alpha / (1.0 - beta),
            None => self.alpha,
        }
    }

    /// Upper boundary `A` on `Λ_n`.
    pub fn upper_boundary(&self) -> f64 {
        1.0 / self.p_threshold()
    }

    /// Lower boundary `B` on `Λ_n`, two-boundary SPRT only.
    pub fn lower_boundary(&self) -> Option<f64> {
        self.beta.map(|beta| beta / (1.0 - self.alpha))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Verdict {
    Continue,
    RejectNull { at_n: u64 },
    AcceptAtHorizon { at_n: u64 },
    AcceptNullEarly { at_n: u64 },
}

impl Verdict {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, Verdict::Continue)
    }

    pub fn rejects(&self) -> bool {
        matches!(self, Verdict::RejectNull { .. })
    }

    pub fn at_n(&self) -> Option<u64> {
        match *self {
            Verdict::Continue => None,
            Verdict::RejectNull { at_n } | Verdict::AcceptAtHorizon { at_n } | Verdict::AcceptNullEarly { at_n } => {
                Some(at_n)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Continue => "continue",
            Verdict::RejectNull { .. } => "reject-null",
            Verdict::AcceptAtHorizon { .. } => "accept-at-horizon",
            Verdict::AcceptNullEarly { .. } => "accept-null-early",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.at_n() {
            Some(n) => write!(f, "{} at n = {n}", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestState {
    pub stats: SuffStats,
    pub log_lambda: f64,
    pub p_inst: f64,
    pub p_running_min: f64,
    pub verdict: Verdict,
}

impl TestState {
    pub fn init(_config: &TestConfig) -> Self {
        Self {
            stats: SuffStats::default(),
            log_lambda: 0.0,
            p_inst: 1.0,
            p_running_min: 1.0,
            verdict: Verdict::Continue,
        }
    }

    pub fn n(&self) -> u64 {
        self.stats.n
    }

    /// Feed one observation and return the updated state.
    pub fn observe(&self, x: f64, config: &TestConfig) -> Result<Self> {
        if self.verdict.is_terminal() {
            return Err(Error::AlreadyTerminated(self.verdict.to_string()));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("observation"));
        }
        let stats = self.stats.push(x);
        let log_lambda = config.variant.log_lambda(&stats);
        let p_inst = p_value(log_lambda);
        let n = stats.n;
        let verdict = if p_inst <= config.p_threshold() {
            Verdict::RejectNull { at_n: n }
        } else if config.lower_boundary().is_some_and(|b| log_lambda <= b.ln()) {
            Verdict::AcceptNullEarly { at_n: n }
        } else if n >= config.max_n {
            Verdict::AcceptAtHorizon { at_n: n }
        } else {
            Verdict::Continue
        };
        Ok(Self {
            stats,
            log_lambda,
            p_inst,
            p_running_min: self.p_running_min.min(p_inst),
            verdict,
        })
    }
}

/// `min(1, 1/Λ)` from `log Λ`.
pub fn p_value(log_lambda: f64) -> f64 {
    if log_lambda <= 0.0 {
        1.0
    } else {
        (-log_lambda).exp()
    }
}

pub fn init(config: &TestConfig) -> TestState {
    TestState::init(config)
}

pub fn observe(state: &TestState, x: f64, config: &TestConfig) -> Result<TestState> {
    state.observe(x, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub n: u64,
    pub log_lambda: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub verdict: Verdict,
    pub stopping_n: u64,
    /// `stopping_n / M`
    pub relative_stop: f64,
    pub log_lambda: f64,
    pub p_value: f64,
    pub p_running_min: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<TrajectoryPoint>>,
}

/// Run a test over `observations` until a verdict. Consumes the iterator
/// lazily, so an infinite generator is fine.
pub fn run_stream<I>(config: &TestConfig, observations: I) -> Result<TestResult>
where
    I: IntoIterator<Item = f64>,
{
    config.validate()?;
    let mut state = TestState::init(config);
    let mut trajectory = config.record_trajectory.then(Vec::new);
    let mut obs = observations.into_iter();
    while !state.verdict.is_terminal() {
        let Some(x) = obs.next() else {
            return Err(Error::StreamExhausted { consumed: state.n() });
        };
        state = state.observe(x, config)?;
        if let Some(t) = trajectory.as_mut() {
            t.push(TrajectoryPoint {
                n: state.n(),
                log_lambda: state.log_lambda,
                p_value: state.p_inst,
            });
        }
    }
    let stopping_n = state.n();
    Ok(TestResult {
        verdict: state.verdict,
        stopping_n,
        relative_stop: stopping_n as f64 / config.max_n as f64,
        log_lambda: state.log_lambda,
        p_value: state.p_inst,
        p_running_min: state.p_running_min,
        trajectory,
    })
}
