mod common;

use std::fs;
use std::process::Command;

use common::{bundled, bundled_names, scenario_dir};
use trustnav::cli::{execute, trace_header, RunManifest, Sweep, SweepParam};
use trustnav::config::{ScenarioConfig, TrustMode};
use trustnav::sim::SimOptions;

fn manifest(file: &str, sweep: Option<Sweep>, out: &std::path::Path) -> RunManifest {
    RunManifest {
        scenario: scenario_dir().join(file),
        sweep,
        out_dir: out.to_path_buf(),
        strict: false,
        options: SimOptions::default(),
    }
}

#[test]
fn scenario1_initial_conditions() {
    let cfg = bundled("scenario1.toml");
    assert_eq!(cfg.ego_start, [20.0, 5.0]);
    assert_eq!(cfg.goal, [20.0, 45.0]);
    assert_eq!(cfg.horizon, 7);
    assert_eq!((cfg.dt, cfg.radius, cfg.gamma_ini, cfg.delta, cfg.lambda), (0.05, 3.0, 0.03, 0.08, 1.5));
    assert_eq!(cfg.pedestrians.len(), 1);
    assert_eq!(cfg.pedestrians[0].start, [21.0, 25.0]);
    assert_eq!(cfg.pedestrians[0].velocity, [0.0, 0.0]);
}

#[test]
fn every_bundled_config_round_trips() {
    for name in bundled_names() {
        let cfg = bundled(&name);
        let again = ScenarioConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again, "{name}");
    }
}

#[test]
fn trust_sweep_emits_traces_and_comparison() {
    let tmp = tempfile::tempdir().unwrap();
    let sweep = Sweep {
        param: SweepParam::PedTrust(1),
        values: vec![0.0, 0.25, 0.5, 0.75, 1.0],
    };
    let report = execute(&manifest("scenario1.toml", Some(sweep), tmp.path())).unwrap();
    assert_eq!(report.runs.len(), 5);
    assert_eq!(report.exit_code, 0);
    for run in &report.runs {
        let csv = fs::read_to_string(run.dir.join("trace.csv")).unwrap();
        assert_eq!(csv.lines().count(), run.result.trace.len() + 1);
        assert!(run.dir.join("summary.json").exists());
        let eff = ScenarioConfig::from_file(run.dir.join("effective_config.toml")).unwrap();
        assert_eq!(eff.pedestrians[0].trust, TrustMode::Fixed { value: run.value.unwrap() });
    }
    let cmp: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("comparison.json")).unwrap()).unwrap();
    assert_eq!(cmp["param"], "ped1.trust");
    let runs = cmp["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 5);
    for (r, tau) in runs.iter().zip([0.0, 0.25, 0.5, 0.75, 1.0]) {
        assert_eq!(r["value"].as_f64().unwrap(), tau);
        assert_eq!(r["min_dist_per_ped"].as_array().unwrap().len(), 1);
    }
}

#[test]
fn horizon_sweep_emits_distance_series() {
    let tmp = tempfile::tempdir().unwrap();
    let sweep = Sweep {
        param: SweepParam::Horizon,
        values: vec![1.0, 2.0, 3.0, 4.0],
    };
    let report = execute(&manifest("scenario3.toml", Some(sweep), tmp.path())).unwrap();
    let cmp: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("comparison.json")).unwrap()).unwrap();
    for (entry, run) in cmp["runs"].as_array().unwrap().iter().zip(&report.runs) {
        let series = entry["distance_series"].as_array().unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(series[0].as_array().unwrap().len(), run.result.trace.len());
        assert_eq!(entry["time_s"].as_array().unwrap().len(), run.result.trace.len());
    }
}

#[test]
fn empty_sweep_is_single_run() {
    let tmp = tempfile::tempdir().unwrap();
    let sweep = Sweep {
        param: SweepParam::Horizon,
        values: vec![],
    };
    let report = execute(&manifest("scenario1.toml", Some(sweep), tmp.path())).unwrap();
    assert_eq!(report.runs.len(), 1);
    assert!(tmp.path().join("trace.csv").exists());
    assert!(!tmp.path().join("comparison.json").exists());
}

#[test]
fn trace_header_is_fixed() {
    let tmp = tempfile::tempdir().unwrap();
    execute(&manifest("scenario2.toml", None, tmp.path())).unwrap();
    let csv = fs::read_to_string(tmp.path().join("trace.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(
        header,
        "step,time_s,ego_x,ego_y,u_x,u_y,ref_x,ref_y,\
         ped1_x,ped1_y,ped1_dist,ped1_trust,ped1_gamma,ped1_h,\
         ped2_x,ped2_y,ped2_dist,ped2_trust,ped2_gamma,ped2_h,\
         min_cbf_residual,solver_status,solve_time_s"
    );
    assert_eq!(header, trace_header(2).join(","));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    for key in ["min_dist_per_ped", "steps_to_goal", "violations", "fallback_steps", "total_solve_time_s"] {
        assert!(summary.get(key).is_some(), "{key}");
    }
}

#[test]
fn sweep_rejects_unknown_pedestrian() {
    let tmp = tempfile::tempdir().unwrap();
    let sweep = Sweep {
        param: SweepParam::PedTrust(3),
        values: vec![0.5],
    };
    assert!(execute(&manifest("scenario1.toml", Some(sweep), tmp.path())).is_err());
}

#[test]
fn unwritable_output_is_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let err = execute(&manifest("scenario1.toml", None, &blocker.join("sub"))).unwrap_err();
    assert!(matches!(err, trustnav::cli::CliError::Io { .. }), "{err}");
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trustnav"))
}

#[test]
fn binary_rejects_invalid_gamma_config() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario_dir().join("scenario1.toml"))
        .unwrap()
        .replace("gamma_ini = 0.03", "gamma_ini = 0.5")
        .replace("delta = 0.08", "delta = 0.6");
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, text).unwrap();
    let out = bin().arg("run").arg(&cfg).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma_ini + delta must be ≤ 1"));
}

#[test]
fn binary_strict_flags_violations() {
    let tmp = tempfile::tempdir().unwrap();
    // Pedestrian starts inside the safety radius, so the first rows violate it.
    let text = fs::read_to_string(scenario_dir().join("scenario1.toml"))
        .unwrap()
        .replace("start = [21.0, 25.0]", "start = [21.0, 6.0]");
    let cfg = tmp.path().join("close.toml");
    fs::write(&cfg, text).unwrap();
    let run = |strict: bool| {
        let mut c = bin();
        if strict {
            c.arg("--strict");
        }
        c.arg("run").arg(&cfg).arg("--out").arg(tmp.path().join("o")).output().unwrap()
    };
    assert!(run(false).status.success());
    assert_eq!(run(true).status.code(), Some(1));
}

#[test]
fn binary_sweep_and_decimation_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["--trust-decimation", "5", "sweep"])
        .arg(scenario_dir().join("case2_attentive.toml"))
        .args(["--param", "horizon", "--values", "3,7", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("horizon=3/trace.csv").exists());
    assert!(tmp.path().join("horizon=7/trace.csv").exists());
    assert!(tmp.path().join("comparison.json").exists());
}
