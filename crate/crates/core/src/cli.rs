//! Run manifests, sweeps and the on-disk output formats.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig, TrustMode};
use crate::sim::{run_scenario_with, SimError, SimOptions, SimResult, Summary};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("unknown sweep parameter `{0}` (expected ped<j>.trust, horizon, gamma_ini, delta, lambda, u_max or kp)")]
    UnknownParam(String),
    #[error("sweep value {value} is not valid for {param}: {reason}")]
    BadValue {
        param: SweepParam,
        value: f64,
        reason: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Numeric scenario field that a sweep may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Fixed trust of pedestrian `j` (1-based).
    PedTrust(usize),
    Horizon,
    GammaIni,
    Delta,
    Lambda,
    UMax,
    Kp,
}

impl FromStr for SweepParam {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let p = match s {
            "horizon" => Self::Horizon,
            "gamma_ini" => Self::GammaIni,
            "delta" => Self::Delta,
            "lambda" => Self::Lambda,
            "u_max" => Self::UMax,
            "kp" => Self::Kp,
            _ => s
                .strip_prefix("ped")
                .and_then(|r| r.strip_suffix(".trust"))
                .and_then(|j| j.parse::<usize>().ok())
                .filter(|j| *j >= 1)
                .map(Self::PedTrust)
                .ok_or_else(|| CliError::UnknownParam(s.to_string()))?,
        };
        Ok(p)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PedTrust(j) => write!(f, "ped{j}.trust"),
            Self::Horizon => f.write_str("horizon"),
            Self::GammaIni => f.write_str("gamma_ini"),
            Self::Delta => f.write_str("delta"),
            Self::Lambda => f.write_str("lambda"),
            Self::UMax => f.write_str("u_max"),
            Self::Kp => f.write_str("kp"),
        }
    }
}

impl SweepParam {
    /// Copy of `base` with this parameter set to `value`, re-validated.
    pub fn apply(&self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig, CliError> {
        let bad = |reason: &str| CliError::BadValue {
            param: *self,
            value,
            reason: reason.to_string(),
        };
        let mut cfg = base.clone();
        match *self {
            Self::PedTrust(j) => {
                let ped = cfg
                    .pedestrians
                    .get_mut(j - 1)
                    .ok_or_else(|| bad("no such pedestrian"))?;
                ped.trust = TrustMode::Fixed { value };
            }
            Self::Horizon => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(bad("horizon must be a positive integer"));
                }
                cfg.horizon = value as usize;
            }
            Self::GammaIni => cfg.gamma_ini = value,
            Self::Delta => cfg.delta = value,
            Self::Lambda => cfg.lambda = value,
            Self::UMax => cfg.u_max = value,
            Self::Kp => cfg.kp = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// One CLI invocation. Runs are deterministic, so there is no seed.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub scenario: PathBuf,
    pub sweep: Option<Sweep>,
    pub out_dir: PathBuf,
    pub strict: bool,
    pub options: SimOptions,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub label: String,
    pub value: Option<f64>,
    pub dir: PathBuf,
    pub result: SimResult,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub runs: Vec<RunOutput>,
    pub exit_code: i32,
}

/// Trace header for `n_peds` pedestrians.
pub fn trace_header(n_peds: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["step", "time_s", "ego_x", "ego_y", "u_x", "u_y", "ref_x", "ref_y"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for j in 1..=n_peds {
        for field in ["x", "y", "dist", "trust", "gamma", "h"] {
            cols.push(format!("ped{j}_{field}"));
        }
    }
    cols.extend(["min_cbf_residual", "solver_status", "solve_time_s"].map(String::from));
    cols
}

pub fn write_trace_csv<W: Write>(mut w: W, result: &SimResult, n_peds: usize) -> io::Result<()> {
    writeln!(w, "{}", trace_header(n_peds).join(","))?;
    for r in &result.trace {
        let mut fields = vec![
            r.step.to_string(),
            r.time.to_string(),
            r.ego.x.to_string(),
            r.ego.y.to_string(),
            r.control.x.to_string(),
            r.control.y.to_string(),
            r.reference.x.to_string(),
            r.reference.y.to_string(),
        ];
        for p in &r.pedestrians {
            fields.extend(
                [p.position.x, p.position.y, p.distance, p.trust, p.gamma, p.h].map(|v| v.to_string()),
            );
        }
        fields.push(r.min_cbf_residual.map_or_else(String::new, |v| v.to_string()));
        fields.push(r.status.to_string());
        fields.push(r.solve_time.to_string());
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

fn write_run(dir: &Path, cfg: &ScenarioConfig, result: &SimResult) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let trace_path = dir.join("trace.csv");
    let file = fs::File::create(&trace_path).map_err(io_err(&trace_path))?;
    let mut buf = io::BufWriter::new(file);
    write_trace_csv(&mut buf, result, cfg.pedestrians.len()).map_err(io_err(&trace_path))?;
    buf.flush().map_err(io_err(&trace_path))?;

    let summary_path = dir.join("summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&result.summary)?)
        .map_err(io_err(&summary_path))?;
    let cfg_path = dir.join("effective_config.toml");
    fs::write(&cfg_path, cfg.to_toml()?).map_err(io_err(&cfg_path))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ComparisonEntry<'a> {
    value: f64,
    dir: String,
    #[serde(flatten)]
    summary: &'a Summary,
    /// Per pedestrian, distance to the ego at every step.
    distance_series: Vec<Vec<f64>>,
    time_s: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct Comparison<'a> {
    param: String,
    runs: Vec<ComparisonEntry<'a>>,
}

fn sweep_label(param: SweepParam, value: f64) -> String {
    format!("{param}={value}")
}

/// Execute a manifest and write all outputs.
pub fn execute(manifest: &RunManifest) -> Result<Report, CliError> {
    let base = ScenarioConfig::from_file(&manifest.scenario)?;
    let jobs: Vec<(String, Option<f64>, ScenarioConfig)> = match &manifest.sweep {
        Some(s) if !s.values.is_empty() => s
            .values
            .iter()
            .map(|v| Ok((sweep_label(s.param, *v), Some(*v), s.param.apply(&base, *v)?)))
            .collect::<Result<_, CliError>>()?,
        _ => vec![("run".to_string(), None, base)],
    };
    let single = jobs.len() == 1 && jobs[0].1.is_none();

    let runs = jobs
        .into_par_iter()
        .map(|(label, value, cfg)| {
            let result = run_scenario_with(&cfg, &manifest.options)?;
            let dir = if single {
                manifest.out_dir.clone()
            } else {
                manifest.out_dir.join(&label)
            };
            write_run(&dir, &cfg, &result)?;
            Ok(RunOutput {
                label,
                value,
                dir,
                result,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    if let Some(s) = manifest.sweep.as_ref().filter(|_| !single) {
        let comparison = Comparison {
            param: s.param.to_string(),
            runs: runs
                .iter()
                .map(|r| ComparisonEntry {
                    value: r.value.unwrap_or(f64::NAN),
                    dir: r.label.clone(),
                    summary: &r.result.summary,
                    distance_series: (0..r.result.summary.min_dist_per_ped.len())
                        .map(|j| r.result.distance_series(j))
                        .collect(),
                    time_s: r.result.trace.iter().map(|t| t.time).collect(),
                })
                .collect(),
        };
        let path = manifest.out_dir.join("comparison.json");
        fs::write(&path, serde_json::to_string_pretty(&comparison)?).map_err(io_err(&path))?;
    }

    let failed = runs
        .iter()
        .any(|r| r.result.summary.violations > 0 || r.result.ended_in_fallback());
    Ok(Report {
        exit_code: if manifest.strict && failed { 1 } else { 0 },
        runs,
    })
}
