use std::collections::HashMap;
use std::path::PathBuf;
use std::process::{Command, Output};

use qab_core::config::load_config;
use qab_core::powerflow::power_dispatch;
use qab_core::sweep::GRID_CSV_HEADER;
use qab_core::timedomain::WAVEFORM_CSV_HEADER;

fn config(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs", name]
        .iter()
        .collect();
    p.to_string_lossy().into_owned()
}

fn qab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> HashMap<String, String> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn num(r: &HashMap<String, String>, key: &str) -> f64 {
    r[key]
        .parse()
        .unwrap_or_else(|_| panic!("{key} = {}", r[key]))
}

#[test]
fn solve_reports_phase_shifts_that_deliver_the_demand() {
    let cfg_path = config("table1.toml");
    let out = qab(&["solve", "--config", &cfg_path, "--p2", "250", "--p4", "250"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = report(&out);
    let delta = [
        num(&r, "delta1"),
        num(&r, "delta2"),
        num(&r, "delta3"),
        num(&r, "delta4"),
    ];
    let cfg = load_config(&cfg_path).unwrap().with_delta(delta);
    let p = power_dispatch(&cfg).unwrap();
    // 9 significant digits in the report
    assert!((p.p[1] + 250.0).abs() < 1e-5);
    assert!((p.p[3] + 250.0).abs() < 1e-5);
    assert!(p.p13.abs() < 1e-5);
    assert!(r["delta2"].contains('e'));
}

#[test]
fn solve_total_split() {
    let out = qab(&[
        "solve",
        "--config",
        &config("table1.toml"),
        "--p-total",
        "400",
        "--split",
        "0.25",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert!((num(&r, "p2") + 100.0).abs() < 1e-6);
    assert!((num(&r, "p4") + 300.0).abs() < 1e-6);
}

#[test]
fn low_power_zvs_verdicts() {
    let out = qab(&["zvs", "--config", &config("experiment_v.toml")]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let verdicts: Vec<&str> = (1..=4).map(|k| r[&format!("zvs{k}")].as_str()).collect();
    assert_eq!(verdicts, ["true", "false", "true", "false"]);
    let td = report(&qab(&[
        "zvs",
        "--timedomain",
        "--config",
        &config("experiment_v.toml"),
    ]));
    assert_eq!(td["zvs1"], "true");
    assert_eq!(td["zvs2"], "false");
}

#[test]
fn missing_config_is_io_failure() {
    let out = qab(&["analyze", "--config", "/no/such/qab.toml"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/qab.toml"));
}

#[test]
fn unwritable_output_fails_before_computing() {
    let out = qab(&[
        "zvs-map",
        "--config",
        &config("table1.toml"),
        "--m2",
        "0.8:1.5:200",
        "--m4",
        "0.75:1.25:200",
        "--out",
        "/no/such/dir/map.csv",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/dir/map.csv"));
}

#[test]
fn invalid_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("table1.toml")).unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, text.replace("delta2 = 0.4560", "delta2 = 1.5")).unwrap();
    let out = qab(&["analyze", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let unknown = dir.path().join("unknown.toml");
    std::fs::write(
        &unknown,
        text.replace("fs = 25e3", "fs = 25e3\ndeadtime = 1e-7"),
    )
    .unwrap();
    let out = qab(&["analyze", "--config", unknown.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("deadtime"));
}

#[test]
fn usage_errors() {
    assert_eq!(qab(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        qab(&["solve", "--config", &config("table1.toml")])
            .status
            .code(),
        Some(1)
    );
    let bad_axis = qab(&["zvs-map", "--config", &config("table1.toml"), "--m2", "1:2"]);
    assert_eq!(bad_axis.status.code(), Some(1));
}

#[test]
fn impossible_demand_does_not_converge() {
    let out = qab(&[
        "solve",
        "--config",
        &config("table1.toml"),
        "--p2",
        "1e6",
        "--p4",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_passes_and_flags_impossible_tolerance() {
    let ok = qab(&["compare", "--config", &config("table1.toml")]);
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(report(&ok)["pass"], "true");
    let strict = qab(&[
        "compare",
        "--config",
        &config("table1.toml"),
        "--tol-amp",
        "0",
        "--samples-per-cycle",
        "64",
    ]);
    assert_eq!(strict.status.code(), Some(4));
}

#[test]
fn simulate_writes_waveform_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("wave.csv");
    let out = qab(&[
        "simulate",
        "--config",
        &config("table1.toml"),
        "--cycles",
        "2",
        "--samples-per-cycle",
        "128",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], WAVEFORM_CSV_HEADER);
    assert_eq!(lines.len(), 1 + 2 * 128 + 1);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 11));
    assert_eq!(
        qab(&[
            "simulate",
            "--config",
            &config("table1.toml"),
            "--samples-per-cycle",
            "8"
        ])
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn grid_commands_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let out = qab(&[
            "zvs-map",
            "--config",
            &config("table1.toml"),
            "--m2",
            "0.8:1.5:3",
            "--m4",
            "0.75:1.25:4",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        (std::fs::read(&path).unwrap(), out.stdout)
    };
    let (a, sa) = run("a.csv");
    let (b, sb) = run("b.csv");
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next(), Some(GRID_CSV_HEADER));
    assert_eq!(text.lines().count(), 1 + 12);
}

#[test]
fn sweep_commands_to_stdout() {
    let out = qab(&[
        "power-sweep",
        "--config",
        &config("table1.toml"),
        "--p",
        "0:500:6",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",1")));

    let out = qab(&[
        "power-ratio-map",
        "--config",
        &config("table1.toml"),
        "--m4",
        "0.75:1.25:2",
        "--p",
        "0:380:2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 5);
}

#[test]
fn redundancy_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("red.csv");
    let out = qab(&[
        "redundancy",
        "--config",
        &config("table1.toml"),
        "--p-total",
        "350",
        "--offset",
        "-0.5:0.5:5",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert!((num(&r, "p1_max") - num(&r, "p1_min")).abs() <= 1e-9 * num(&r, "p1_max"));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("offset,p1,i1_peak"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn help_lists_flags_with_units() {
    for (cmd, needles) in [
        ("solve", &["--p2", "--p4", "--p-total", "--split", "W"][..]),
        ("compare", &["--tol-amp", "PCT", "--tol-phase", "DEG"][..]),
        ("zvs-map", &["--m2", "--m4", "a:b:n"][..]),
        (
            "simulate",
            &["--cycles", "--samples-per-cycle", "--out"][..],
        ),
    ] {
        let out = qab(&[cmd, "--help"]);
        assert_eq!(out.status.code(), Some(0));
        let text = String::from_utf8(out.stdout).unwrap();
        for n in needles {
            assert!(text.contains(n), "{cmd} --help lacks {n}");
        }
    }
}
