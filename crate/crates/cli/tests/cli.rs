use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn roughmckv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roughmckv"))
        .args(args)
        .env("ROUGHMCKV_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary_value(dir: &Path, key: &str) -> String {
    let text = fs::read_to_string(dir.join("summary.txt")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")).map(str::to_string))
        .unwrap_or_else(|| panic!("{key} missing from summary:\n{text}"))
}

#[test]
fn unknown_experiment_exits_with_two() {
    let o = roughmckv(&["rde", "--experiment", "no-such-thing"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("available: smooth-linear"));
}

#[test]
fn unsupported_command_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = roughmckv(&[
        "tail",
        "--experiment",
        "smooth-linear",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("supported: sigma-tail"));
}

#[test]
fn bad_config_value_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(
        &cfg,
        "experiment = \"smooth-linear\"\nlevel = 8\nalpha = 0.7\n",
    )
    .unwrap();
    let o = roughmckv(&["lift", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("bad.toml:3:"), "{err}");
    assert!(err.contains("(1/3, 1/2)"), "{err}");
}

#[test]
fn malformed_config_and_missing_file_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("typo.toml");
    fs::write(&cfg, "experiment = \"smooth-linear\"\nlevle = 8\n").unwrap();
    let o = roughmckv(&["lift", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("typo.toml:2:"), "{}", stderr(&o));
    let o = roughmckv(&[
        "lift",
        "--config",
        dir.path().join("absent.toml").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn flags_override_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("out");
    fs::write(
        &cfg,
        format!(
            "experiment = \"smooth-linear\"\nlevel = 6\nout = {:?}\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = roughmckv(&["lift", "--config", cfg.to_str().unwrap(), "--level", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(summary_value(&out, "steps"), "128");
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("level=7"));
    assert!(manifest.contains("rough_path.csv module=core-algebra ops=lift_smooth_path"));
}

#[test]
fn rde_matches_the_exponential() {
    let dir = tempfile::tempdir().unwrap();
    let o = roughmckv(&[
        "rde",
        "--experiment",
        "smooth-linear",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let err: f64 = summary_value(dir.path(), "sup_error").parse().unwrap();
    assert!(err < 1e-4);
    let header = fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    assert!(header.starts_with("t,x,exact\n"));
}

#[test]
fn conv_table_ends_with_a_slope_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = roughmckv(&[
        "conv",
        "--experiment",
        "smooth-linear",
        "--levels",
        "6,7,8,9",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("conv.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "level,steps,gap");
    assert_eq!(lines.len(), 6);
    let slope: f64 = lines[5].strip_prefix("slope,,").unwrap().parse().unwrap();
    // the Davie scheme is second order on smooth drivers: one level halves h
    assert!((slope + 2.0).abs() < 0.2, "{slope}");
}

#[test]
fn identical_runs_write_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = roughmckv(&[
            "mckv",
            "--experiment",
            "meanfield-nonlocal",
            "--N",
            "128",
            "--level",
            "6",
            "--seed",
            "4",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for file in [
        "ensemble.csv",
        "trace.csv",
        "marginals.csv",
        "summary.txt",
        "manifest.txt",
    ] {
        let x = fs::read(a.path().join(file)).unwrap();
        let y = fs::read(b.path().join(file)).unwrap();
        assert!(x == y, "{file} differs between runs");
    }
}

#[test]
fn tail_writes_histogram_and_drivers() {
    let dir = tempfile::tempdir().unwrap();
    let o = roughmckv(&[
        "tail",
        "--experiment",
        "sigma-tail",
        "--N",
        "150",
        "--level",
        "6",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let drivers = fs::read_to_string(dir.path().join("drivers.csv")).unwrap();
    assert!(drivers.starts_with("sample_id,F_alpha,FF_2alpha,N\n"));
    assert_eq!(drivers.lines().count(), 151);
    assert!(dir.path().join("histogram.csv").exists());
}

#[test]
fn fpcheck_on_the_flow_corpus_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = roughmckv(&[
        "fpcheck",
        "--experiment",
        "flow-sigma0",
        "--N",
        "4000",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(summary_value(dir.path(), "verdict"), "PASS");
    let defect = fs::read_to_string(dir.path().join("defect.csv")).unwrap();
    assert!(defect.starts_with("phi_id,s,t,defect,ci_low,ci_high\n"));
}

#[test]
fn fpcheck_on_the_linear_mean_field_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = roughmckv(&[
        "fpcheck",
        "--experiment",
        "meanfield-linear",
        "--N",
        "4096",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(summary_value(dir.path(), "verdict"), "PASS");
    let exponent: f64 = summary_value(dir.path(), "exponent").parse().unwrap();
    assert!(exponent >= 3.0 * 0.45 - 0.2);
}
