//! Shared by the golden-file test and the acceptance suite.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use referkit_cli::{run, RunConfig};
use serde_json::Value;

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden")
}

/// Case names, i.e. `NAME.case.json` files with a `NAME.golden.json` beside them.
pub fn golden_cases() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(golden_dir())
        .unwrap()
        .filter_map(|e| e.unwrap().file_name().into_string().ok())
        .filter_map(|f| f.strip_suffix(".case.json").map(str::to_string))
        .collect();
    names.sort();
    names
}

pub fn case_config(name: &str) -> RunConfig {
    let text = std::fs::read_to_string(golden_dir().join(format!("{name}.case.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn same(a: &Value, b: &Value) -> bool {
    match (a, b) {
        // Bit-exact: both sides carry shortest round-trip decimals.
        (Value::Number(x), Value::Number(y)) => match (x.as_f64(), y.as_f64()) {
            (Some(x), Some(y)) => x.to_bits() == y.to_bits(),
            _ => x == y,
        },
        _ => a == b,
    }
}

/// Runs `name` twice into `out_dir`, checks the two reports are
/// byte-identical and that the table matches the golden file exactly.
pub fn check_golden_case(name: &str, out_dir: &Path) -> Result<(), String> {
    let echo = case_config(name);
    let mut config = echo.resolved(&golden_dir());
    config.output = out_dir.join(format!("{name}.json"));
    config.plot_output = None;

    run(&config, &echo).map_err(|e| format!("first run: {e}"))?;
    let first = std::fs::read(&config.output).unwrap();
    run(&config, &echo).map_err(|e| format!("second run: {e}"))?;
    let second = std::fs::read(&config.output).unwrap();
    if first != second {
        return Err("two runs produced different bytes".into());
    }

    let got: Value = serde_json::from_slice(&first).unwrap();
    let text = std::fs::read_to_string(golden_dir().join(format!("{name}.golden.json"))).unwrap();
    let want: Value = serde_json::from_str(&text).unwrap();
    for key in ["scheme", "measure", "metric", "n_examples", "n_classes"] {
        if got[key] != want[key] {
            return Err(format!("{key}: {} vs golden {}", got[key], want[key]));
        }
    }
    let (got_levels, want_levels) = (got["levels"].as_array().unwrap(), want["levels"].as_array().unwrap());
    if got_levels.len() != want_levels.len() {
        return Err(format!("{} levels vs golden {}", got_levels.len(), want_levels.len()));
    }
    for (g, w) in got_levels.iter().zip(want_levels) {
        for (key, wv) in w.as_object().unwrap() {
            if !same(&g[key], wv) {
                return Err(format!("level {}: {key} = {} vs golden {wv}", w["level"], g[key]));
            }
        }
    }
    Ok(())
}
