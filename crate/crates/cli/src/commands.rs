use std::fs;
use std::io::{self, BufRead, BufReader};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use tmsprt::diagnostics::{self, ExpectationMode};
use tmsprt::lratio::{oracle_sweep, VariantKind, VariantSpec};
use tmsprt::rng::StreamKey;
use tmsprt::sims::{self, GridOptions, GridPreset, SimScenario, SimVariant};
use tmsprt::{SuffStats, TestConfig, TestState, Verdict};

use crate::cli::{
    ExpectationArgs, MartingaleArgs, ModeArg, ModelArgs, OracleArgs, PresetArg, SimulateArgs, TestArgs, VariantArg,
};
use crate::output::{self, fmt_sig, DiagnosticRow, RunManifest};

pub const EXIT_EXHAUSTED: u8 = 2;

fn variant_spec(m: &ModelArgs) -> Result<VariantSpec> {
    let name = m.variant.name();
    let needs_delta = !matches!(m.variant, VariantArg::ClassicSprt | VariantArg::Msprt);
    let delta = match (needs_delta, m.delta) {
        (true, None) => bail!("--delta is required for variant {name}"),
        (_, d) => d.unwrap_or(f64::NAN),
    };
    let theta1 = match (m.variant, m.theta1) {
        (VariantArg::ClassicSprt, None) => bail!("--theta1 is required for variant classic-sprt"),
        (_, t) => t.unwrap_or(f64::NAN),
    };
    let kind = VariantKind::from_name(name, delta, m.theta0, theta1)?;
    Ok(VariantSpec::new(kind, m.tau, m.sigma)?)
}

/// Rounded to nine significant digits for reporting.
fn sig(v: f64) -> f64 {
    fmt_sig(v).parse().unwrap_or(v)
}

#[derive(Debug, Serialize)]
struct VerdictRecord {
    verdict: &'static str,
    n: u64,
    relative_stop: f64,
    log_lambda: f64,
    p_value: f64,
}

impl VerdictRecord {
    fn new(verdict: &'static str, state: &TestState, max_n: u64) -> Self {
        Self {
            verdict,
            n: state.n(),
            relative_stop: sig(state.n() as f64 / max_n as f64),
            log_lambda: sig(state.log_lambda),
            p_value: sig(state.p_inst),
        }
    }
}

/// Parse one input line: `None` for blank and comment lines.
fn parse_line(line: &str, lineno: usize) -> Result<Option<f64>> {
    let body = line.split('#').next().unwrap_or("").trim();
    if body.is_empty() {
        return Ok(None);
    }
    let x: f64 = body
        .parse()
        .map_err(|_| anyhow!("line {lineno}: cannot parse `{body}` as a number"))?;
    if !x.is_finite() {
        bail!("line {lineno}: observation `{body}` is not finite");
    }
    Ok(Some(x))
}

pub fn test(args: TestArgs) -> Result<ExitCode> {
    let variant = variant_spec(&args.model)?;
    let mut config = TestConfig::new(variant, args.alpha, args.max_n)?;
    if let Some(beta) = args.beta {
        config = config.with_beta(beta)?;
    }
    let reader: Box<dyn BufRead> = match &args.input {
        Some(p) => Box::new(BufReader::new(
            fs::File::open(p).with_context(|| format!("cannot read `{}`", p.display()))?,
        )),
        None => Box::new(io::stdin().lock()),
    };
    let mut state = TestState::init(&config);
    let mut lines = reader.lines().enumerate();
    while !state.verdict.is_terminal() {
        let Some((i, line)) = lines.next() else {
            let record = VerdictRecord::new("input-exhausted", &state, config.max_n);
            println!("{}", serde_json::to_string(&record)?);
            eprintln!(
                "input exhausted after {} observations without a verdict (max-n {})",
                state.n(),
                config.max_n
            );
            return Ok(ExitCode::from(EXIT_EXHAUSTED));
        };
        let line = line.with_context(|| format!("line {}: read failed", i + 1))?;
        if let Some(x) = parse_line(&line, i + 1)? {
            state = state.observe(x, &config)?;
            if args.verbose {
                eprintln!("{}\t{}\t{}", state.n(), fmt_sig(state.log_lambda), fmt_sig(state.p_inst));
            }
        }
    }
    let name = match state.verdict {
        Verdict::Continue => unreachable!("loop exits on a terminal verdict"),
        v => v.name(),
    };
    println!("{}", serde_json::to_string(&VerdictRecord::new(name, &state, config.max_n))?);
    Ok(ExitCode::SUCCESS)
}

/// One `[[scenario]]` table of a simulate config file. The master seed comes
/// from `--seed`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigScenario {
    scenario_id: String,
    variant: SimVariant,
    theta_over_delta: f64,
    delta_over_tau: f64,
    tau2: f64,
    #[serde(default = "unit")]
    sigma2: f64,
    alpha: f64,
    max_n: u64,
    n_replicates: u64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    scenario: Vec<ConfigScenario>,
}

fn load_config(path: &std::path::Path, seed: u64) -> Result<Vec<SimScenario>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read `{}`", path.display()))?;
    let file: ConfigFile = toml::from_str(&text).with_context(|| format!("invalid config `{}`", path.display()))?;
    Ok(file
        .scenario
        .into_iter()
        .map(|c| SimScenario {
            scenario_id: c.scenario_id,
            variant: c.variant,
            theta_over_delta: c.theta_over_delta,
            delta_over_tau: c.delta_over_tau,
            tau2: c.tau2,
            sigma2: c.sigma2,
            alpha: c.alpha,
            max_n: c.max_n,
            n_replicates: c.n_replicates,
            master_seed: seed,
        })
        .collect())
}

fn grid_preset(p: PresetArg) -> Option<GridPreset> {
    Some(match p {
        PresetArg::TwoSidedNull => GridPreset::TwoSidedNull,
        PresetArg::TwoSidedAlt | PresetArg::MsprtComparison => GridPreset::TwoSidedAlt,
        PresetArg::Disjoint => GridPreset::Disjoint,
        PresetArg::OneSidedNaive => GridPreset::OneSidedNaive,
        PresetArg::OneSidedCorrect => GridPreset::OneSidedCorrect,
        PresetArg::Misspec => return None,
    })
}

pub fn simulate(args: SimulateArgs) -> Result<ExitCode> {
    let (mut manifest, _) = RunManifest::start("simulate", args.seed);
    manifest.config_path = args.config.clone();
    manifest.param("scale", args.scale);
    manifest.param("desk", args.desk);
    manifest.param("jobs", args.jobs);
    manifest.param("out", &args.out);
    let options = GridOptions {
        scale: args.scale,
        desk: args.desk,
        seed: args.seed,
    };
    let out = output::sink(Some(&args.out))?;
    let rows = match (args.preset, &args.config) {
        (Some(PresetArg::Misspec), _) => {
            let grid = sims::misspec_grid(&options)?;
            let b = sims::misspec_replicates(&options);
            manifest.param("preset", "misspec");
            manifest.param("n_replicates", b);
            let records = sims::run_misspec(&grid, b, args.seed, args.jobs)?;
            output::write_misspec_csv(out, &grid, &records, args.seed)?;
            records.len()
        }
        (preset, config) => {
            let scenarios = match (preset, config) {
                (Some(p), _) => {
                    manifest.param("preset", preset_name(p));
                    sims::paper_grid(grid_preset(p).expect("grid preset"), &options)?
                }
                (None, Some(path)) => load_config(path, args.seed)?,
                (None, None) => bail!("either --preset or --config is required"),
            };
            let compare = args.compare || preset == Some(PresetArg::MsprtComparison);
            manifest.param("compare_to_msprt", compare);
            manifest.param("n_scenarios", scenarios.len());
            if compare {
                let records = sims::compare_to_msprt(&scenarios, args.jobs)?;
                output::write_comparison_csv(out, &records)?;
                records.len()
            } else {
                let records = sims::run_grid(&scenarios, args.jobs)?;
                output::write_sim_csv(out, &scenarios, &records)?;
                records.len()
            }
        }
    };
    let manifest_path = manifest.finish(&args.out)?;
    eprintln!(
        "wrote {rows} rows to {} (manifest {})",
        args.out.display(),
        manifest_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn preset_name(p: PresetArg) -> &'static str {
    match p {
        PresetArg::TwoSidedNull => "two-sided-null",
        PresetArg::TwoSidedAlt => "two-sided-alt",
        PresetArg::Disjoint => "disjoint",
        PresetArg::OneSidedNaive => "one-sided-naive",
        PresetArg::OneSidedCorrect => "one-sided-correct",
        PresetArg::Misspec => "misspec",
        PresetArg::MsprtComparison => "msprt-comparison",
    }
}

fn model_params(manifest: &mut RunManifest, m: &ModelArgs) {
    manifest.param("variant", m.variant.name());
    manifest.param("delta", m.delta);
    manifest.param("tau", m.tau);
    manifest.param("sigma", m.sigma);
    manifest.param("theta0", m.theta0);
    manifest.param("theta1", m.theta1);
}

pub fn expectation(args: ExpectationArgs) -> Result<ExitCode> {
    let variant = variant_spec(&args.model)?;
    let mode = match args.mode {
        ModeArg::ClosedForm => ExpectationMode::ClosedForm,
        ModeArg::NestedSampling => ExpectationMode::NestedSampling,
    };
    let mut rows = Vec::new();
    for &theta0 in &args.true_mean {
        let est = diagnostics::mc_base_case_expectation(theta0, &variant, mode, args.n_draws, args.n_inner, args.seed)?;
        rows.push(DiagnosticRow {
            theta0,
            variant: variant.name(),
            mode: mode.name(),
            estimate: est,
        });
    }
    output::write_diagnostic_csv(output::sink(args.out.as_deref())?, &rows)?;
    if let Some(path) = &args.out {
        let (mut manifest, _) = RunManifest::start("expectation", args.seed);
        model_params(&mut manifest, &args.model);
        manifest.param("true_mean", &args.true_mean);
        manifest.param("mode", mode.name());
        manifest.param("n_draws", args.n_draws);
        manifest.param("n_inner", args.n_inner);
        manifest.finish(path)?;
    }
    Ok(ExitCode::SUCCESS)
}

pub fn martingale(args: MartingaleArgs) -> Result<ExitCode> {
    let variant = variant_spec(&args.model)?;
    let mode = if args.tail_ratio { "tail-ratio" } else { "one-step" };
    let mut rows = Vec::new();
    for &theta0 in &args.true_mean {
        let prefix = if args.simulate_prefix {
            let mut d = StreamKey::new(args.seed, "prefix").stream(0);
            (0..args.prefix_n).fold(SuffStats::default(), |s, _| s.push(theta0 + variant.sigma() * d.normal()))
        } else {
            SuffStats::new(args.prefix_n, args.prefix_sum)?
        };
        let est = if args.tail_ratio {
            diagnostics::tail_ratio_decrease_check(theta0, &variant, &prefix, args.n_draws, args.seed)?
        } else {
            diagnostics::supermartingale_check(theta0, &variant, &prefix, args.n_draws, args.seed)?
        };
        rows.push(DiagnosticRow {
            theta0,
            variant: variant.name(),
            mode,
            estimate: est,
        });
    }
    output::write_diagnostic_csv(output::sink(args.out.as_deref())?, &rows)?;
    if let Some(path) = &args.out {
        let (mut manifest, _) = RunManifest::start("martingale", args.seed);
        model_params(&mut manifest, &args.model);
        manifest.param("true_mean", &args.true_mean);
        manifest.param("mode", mode);
        manifest.param("prefix_n", args.prefix_n);
        manifest.param("prefix_sum", args.prefix_sum);
        manifest.param("simulate_prefix", args.simulate_prefix);
        manifest.param("n_draws", args.n_draws);
        manifest.finish(path)?;
    }
    Ok(ExitCode::SUCCESS)
}

pub fn oracle_check(args: OracleArgs) -> Result<ExitCode> {
    let names: Vec<&str> = match args.variant {
        Some(v) => vec![v.name()],
        None => VariantKind::NAMES.to_vec(),
    };
    let mut failed = false;
    for name in names {
        if name == "classic-sprt" {
            println!("{name:<22} skipped: no mixing integral to evaluate");
            continue;
        }
        let r = oracle_sweep(name, args.samples, args.seed)?;
        let ok = r.max_abs_diff <= args.tolerance;
        failed |= !ok;
        println!(
            "{name:<22} samples {:>6}  max |diff| {:<14} {}",
            r.samples,
            fmt_sig(r.max_abs_diff),
            if ok { "ok" } else { "FAIL" }
        );
    }
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}
