use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use trustnav::cli::{execute, RunManifest, Sweep, SweepParam};
use trustnav::sim::{SimOptions, Timing};

#[derive(Parser, Debug)]
#[command(name = "trustnav", version, about = "Trust-aware MPC-CBF scenario runner")]
struct Args {
    /// Exit with status 1 if any run breaches the safety radius or ends stuck in the fallback.
    #[arg(long, global = true)]
    strict: bool,
    /// Update dynamic trust every N simulation steps (overrides the config).
    #[arg(long, global = true, value_name = "N")]
    trust_decimation: Option<u64>,
    /// Record wall-clock solve times; traces are then no longer reproducible.
    #[arg(long, global = true)]
    wall_clock: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a single scenario.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario once per value of one parameter.
    Sweep {
        config: PathBuf,
        /// ped<j>.trust, horizon, gamma_ini, delta, lambda, u_max or kp.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn default_out(config: &Path) -> PathBuf {
    let stem = config.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
    PathBuf::from("out").join(stem)
}

fn main() -> anyhow::Result<ExitCode> {
    let args = Args::parse();
    let options = SimOptions {
        timing: if args.wall_clock { Timing::WallClock } else { Timing::Off },
        trust_decimation: args.trust_decimation,
    };
    let manifest = match args.command {
        Command::Run { config, out } => RunManifest {
            out_dir: out.unwrap_or_else(|| default_out(&config)),
            scenario: config,
            sweep: None,
            strict: args.strict,
            options,
        },
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => RunManifest {
            out_dir: out.unwrap_or_else(|| default_out(&config)),
            scenario: config,
            sweep: Some(Sweep {
                param: param.parse::<SweepParam>()?,
                values,
            }),
            strict: args.strict,
            options,
        },
    };
    let report = execute(&manifest).with_context(|| format!("running {}", manifest.scenario.display()))?;
    for run in &report.runs {
        let s = &run.result.summary;
        let dists: Vec<String> = s.min_dist_per_ped.iter().map(|d| format!("{d:.4}")).collect();
        println!(
            "{}: steps_to_goal={} min_dist=[{}] violations={} fallback_steps={} -> {}",
            run.label,
            s.steps_to_goal.map_or("none".into(), |n| n.to_string()),
            dists.join(", "),
            s.violations,
            s.fallback_steps,
            run.dir.display()
        );
    }
    Ok(ExitCode::from(report.exit_code as u8))
}
