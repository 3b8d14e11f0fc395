#![allow(dead_code)]

use std::io::Write;
use std::path::PathBuf;

use trustnav::config::ScenarioConfig;

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

pub fn bundled(name: &str) -> ScenarioConfig {
    ScenarioConfig::from_file(scenario_dir().join(name)).expect("bundled scenario parses")
}

pub fn bundled_names() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(scenario_dir())
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".toml"))
        .collect();
    names.sort();
    names
}

/// Print one verdict line straight to stdout so it survives output capture.
pub fn verdict(criterion: &str, ok: bool, detail: impl AsRef<str>) -> bool {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "[criterion {criterion}] {}: {}",
        if ok { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    ok
}
