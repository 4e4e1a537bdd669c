use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use serde_json::Value;

use tmsprt::diagnostics::McEstimate;
use tmsprt::sims::{ComparisonRecord, MisspecScenario, SimRecord, SimScenario};

/// Nine significant digits, trailing zeros dropped.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = 8 - exp;
    if (0..=12).contains(&decimals) {
        let s = format!("{v:.*}", decimals as usize);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_owned()
        } else {
            s
        }
    } else {
        format!("{v:.8e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_sig).unwrap_or_default()
}

pub const SIM_COLUMNS: [&str; 13] = [
    "scenario_id",
    "variant",
    "theta_over_delta",
    "delta_over_tau",
    "tau2",
    "alpha",
    "max_n",
    "n_replicates",
    "rejection_rate",
    "rejection_se",
    "mean_relative_stop",
    "stop_se",
    "master_seed",
];

pub const MISSPEC_EXTRA: [&str; 4] = ["gamma2", "tau_over_gamma", "delta_over_x", "side"];

pub const COMPARISON_COLUMNS: [&str; 6] = [
    "scenario_id",
    "power_trunc",
    "power_msprt",
    "power_ratio",
    "stop_ratio",
    "flags",
];

pub const DIAGNOSTIC_COLUMNS: [&str; 7] = ["theta0", "variant", "mode", "estimate", "std_error", "n_draws", "seed"];

fn sim_stats(r: &SimRecord) -> [String; 4] {
    [
        fmt_sig(r.rejection_rate),
        fmt_sig(r.rejection_se),
        fmt_sig(r.mean_relative_stop),
        fmt_sig(r.stop_se),
    ]
}

pub fn write_sim_csv<W: Write>(w: W, scenarios: &[SimScenario], records: &[SimRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SIM_COLUMNS)?;
    for (s, r) in scenarios.iter().zip(records) {
        let mut row = vec![
            s.scenario_id.clone(),
            s.variant.name().to_owned(),
            fmt_sig(s.theta_over_delta),
            fmt_sig(s.delta_over_tau),
            fmt_sig(s.tau2),
            fmt_sig(s.alpha),
            s.max_n.to_string(),
            r.n_replicates.to_string(),
        ];
        row.extend(sim_stats(r));
        row.push(s.master_seed.to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_misspec_csv<W: Write>(
    w: W,
    grid: &[MisspecScenario],
    records: &[SimRecord],
    seed: u64,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SIM_COLUMNS.iter().chain(&MISSPEC_EXTRA))?;
    for (s, r) in grid.iter().zip(records) {
        let mut row = vec![
            s.scenario_id.clone(),
            "trunc-nested".to_owned(),
            String::new(),
            fmt_sig(s.delta() / s.tau()),
            fmt_sig(s.tau() * s.tau()),
            fmt_sig(s.alpha),
            s.max_n.to_string(),
            r.n_replicates.to_string(),
        ];
        row.extend(sim_stats(r));
        row.push(seed.to_string());
        row.extend([
            fmt_sig(s.gamma2),
            fmt_sig(s.tau_over_gamma),
            fmt_sig(s.delta_over_x),
            s.side.name().to_owned(),
        ]);
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_comparison_csv<W: Write>(w: W, records: &[ComparisonRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(COMPARISON_COLUMNS)?;
    for r in records {
        out.write_record([
            r.scenario_id.clone(),
            fmt_sig(r.power_trunc),
            fmt_sig(r.power_msprt),
            opt(r.power_ratio),
            opt(r.stop_ratio),
            r.flags.join(";"),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub struct DiagnosticRow<'a> {
    pub theta0: f64,
    pub variant: &'a str,
    pub mode: &'a str,
    pub estimate: McEstimate,
}

pub fn write_diagnostic_csv<W: Write>(w: W, rows: &[DiagnosticRow<'_>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(DIAGNOSTIC_COLUMNS)?;
    for r in rows {
        out.write_record([
            fmt_sig(r.theta0),
            r.variant.to_owned(),
            r.mode.to_owned(),
            fmt_sig(r.estimate.mean),
            fmt_sig(r.estimate.std_error),
            r.estimate.n_draws.to_string(),
            r.estimate.seed.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Open `path` for writing, or standard output when `None`.
pub fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            File::create(p).with_context(|| format!("cannot write `{}`", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub resolved_parameters: BTreeMap<String, Value>,
    pub master_seed: u64,
    pub toolkit_version: &'static str,
    pub started_at: String,
    pub finished_at: String,
}

impl RunManifest {
    pub fn start(command: &str, master_seed: u64) -> (Self, DateTime<Utc>) {
        let now = Utc::now();
        (
            Self {
                command: command.to_owned(),
                config_path: None,
                resolved_parameters: BTreeMap::new(),
                master_seed,
                toolkit_version: env!("CARGO_PKG_VERSION"),
                started_at: now.to_rfc3339_opts(SecondsFormat::Millis, true),
                finished_at: String::new(),
            },
            now,
        )
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.resolved_parameters.insert(key.to_owned(), v);
    }

    /// Stamp the finish time and write the manifest beside `data_path`.
    pub fn finish(mut self, data_path: &Path) -> Result<PathBuf> {
        self.finished_at = Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true);
        let mut name = data_path.as_os_str().to_owned();
        name.push(".manifest.json");
        let path = PathBuf::from(name);
        let file = File::create(&path).with_context(|| format!("cannot write `{}`", path.display()))?;
        serde_json::to_writer_pretty(file, &self)?;
        Ok(path)
    }
}
