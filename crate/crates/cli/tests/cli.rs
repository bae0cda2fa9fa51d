use dfrc_core::{default_scenario, parse_document};
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[scenario]
n_tx = 2
n_rx = 2
n_subcarriers = 4
irs_element_counts = 3
n_doppler_slices = 2
comm_sinr_threshold_db = 0.0

[solver]
max_outer = 3
"#;

fn dfrc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dfrc")).args(args).output().expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(&path, SMALL).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_csv(path: &Path) -> (String, Vec<String>) {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines().map(str::to_string);
    let header = lines.next().unwrap();
    (header, lines.collect())
}

#[test]
fn defaults_round_trip_through_the_parser() {
    let out = dfrc(&["defaults"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let doc = parse_document(&text).unwrap();
    assert_eq!(doc.scenario.resolve().unwrap(), default_scenario());
    let flag = dfrc(&["--dump-defaults"]);
    assert_eq!(String::from_utf8(flag.stdout).unwrap(), text);
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    assert_eq!(dfrc(&[]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[scenario]\nn_tx = 0\n").unwrap();
    let out = dfrc(&["optimize", "-c", bad.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_tx"));
    fs::write(&bad, "[scenario]\nunknown_key = 1\n").unwrap();
    assert_eq!(dfrc(&["optimize", "-c", bad.to_str().unwrap()]).status.code(), Some(2));
    let cfg = small_config(dir.path());
    assert_eq!(dfrc(&["optimize", "-c", &cfg, "--variant", "bogus"]).status.code(), Some(2));
    assert_eq!(dfrc(&["sweep", "-c", &cfg, "--values", "1,2"]).status.code(), Some(2));
    assert_eq!(dfrc(&["optimize", "-c", "/nonexistent/config.toml"]).status.code(), Some(2));
}

#[test]
fn optimize_writes_reports_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out_dir = dir.path().join("run");
    let chan = dir.path().join("channels.csv");
    let out = dfrc(&[
        "optimize",
        "-c",
        &cfg,
        "-o",
        out_dir.to_str().unwrap(),
        "--variant",
        "multi-irs",
        "--variant",
        "non-irs-dfrc",
        "--dump-channels",
        chan.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["summary.csv", "convergence.csv", "manifest.json", "report_multi-irs.json", "report_non-irs-dfrc.json"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    assert!(chan.exists());
    let (_, rows) = read_csv(&out_dir.join("summary.csv"));
    assert_eq!(rows.len(), 2);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["scenario_sha256"].as_str().unwrap().len(), 64);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report_multi-irs.json")).unwrap()).unwrap();
    assert!(report["iterations"].as_array().unwrap().len() <= 3);
}

#[test]
fn roc_table_sweep_and_beampattern_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = |name: &str| dir.path().join(name).to_str().unwrap().to_string();

    let out = dfrc(&["roc", "-c", &cfg, "-o", &o("roc"), "--n-mont", "50", "--variant", "multi-irs"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("roc/roc.csv"));
    assert_eq!(header, "gamma,p_fa,p_d,n_mont,variant");
    assert_eq!(rows.len(), 101);

    let out = dfrc(&["table", "-c", &cfg, "-o", &o("table"), "--variant", "single-irs"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("table/table.csv"));
    assert_eq!(header, "system,beamforming,min_radar_sinr_db");
    assert_eq!(rows.len(), 2);

    let out = dfrc(&["sweep", "-c", &cfg, "-o", &o("sweep"), "--axis", "power-dbw", "--values", "4,8", "--variant", "multi-irs"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = read_csv(&dir.path().join("sweep/sweep.csv"));
    assert_eq!(rows.len(), 2);

    let out = dfrc(&["beampattern", "-c", &cfg, "-o", &o("beam"), "--angle-step-deg", "30", "--variant", "multi-irs"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = read_csv(&dir.path().join("beam/beampattern.csv"));
    // 7 angles on [-90, 90] times 4 subcarriers.
    assert_eq!(rows.len(), 28);
}

#[test]
fn unreachable_threshold_is_a_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hard.toml");
    fs::write(&path, SMALL.replace("comm_sinr_threshold_db = 0.0", "comm_sinr_threshold_db = 60.0")).unwrap();
    let out = dfrc(&["optimize", "-c", path.to_str().unwrap(), "-o", dir.path().to_str().unwrap(), "--variant", "non-irs-dfrc"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
