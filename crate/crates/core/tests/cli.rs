use std::path::Path;
use std::process::{Command, Output};

use fhn::harness::export::parse_csv;
use fhn::harness::reference::{reference_solve, uniform_times};
use fhn::model::{cubic, FhnParams, DEFAULT_IC};
use serde_json::Value;

fn fhn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fhn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or_else(|_| panic!("not a number: '{s}'"))
}

#[test]
fn hopf_prints_two_points() {
    let out = fhn(&["hopf", "--params", "0.22,1.18,0.008,0", "--range", "0,1"]);
    assert_eq!(out.status.code(), Some(0));
    let (header, rows) = parse_csv(&stdout(&out));
    assert_eq!(header, ["I_crit", "v_star", "omega_imag"]);
    assert_eq!(rows.len(), 2);
    assert!((num(&rows[0][0]) - 0.1025).abs() < 5e-4);
    assert!((num(&rows[1][0]) - 0.4963).abs() < 5e-4);
    assert!((num(&rows[0][2]) - 11.12).abs() < 0.05);
}

#[test]
fn negative_step_is_rejected_with_flag_name() {
    let out = fhn(&["simulate", "--method", "euler", "--tau", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--tau"), "{}", stderr(&out));
}

#[test]
fn invalid_parameters_are_bad_arguments() {
    for args in [
        &["equilibria", "--params", "0.22,1.18,0,0.6"][..],
        &["equilibria", "--params", "0.22,1.18"][..],
        &["hopf", "--range", "1,0"][..],
        &["simulate", "--method", "taylor", "--degree", "13"][..],
        &["simulate", "--method", "rk45"][..],
        &["equilibria", "--format", "xml"][..],
        &["converge", "--method", "euler"][..],
        &["bifurcation", "--points", "1"][..],
    ] {
        let out = fhn(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn divergence_is_a_numerical_failure() {
    let out = fhn(&["simulate", "--method", "euler", "--tau", "0.5", "--horizon", "100"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(!stderr(&out).is_empty());
}

#[test]
fn help_succeeds() {
    let out = fhn(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("check-stability"));
}

#[test]
fn reference_csv_round_trips_bit_for_bit() {
    let out = fhn(&["simulate", "--method", "reference", "--samples", "50"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let (header, rows) = parse_csv(&stdout(&out));
    assert_eq!(header, ["t", "v", "w"]);
    let times = uniform_times(0.0, 1.0, 50);
    let r = reference_solve(&FhnParams::standard(0.6), DEFAULT_IC, 1.0, &times).unwrap();
    assert_eq!(rows.len(), 51);
    for ((row, &t), s) in rows.iter().zip(&times).zip(&r.states) {
        assert_eq!(num(&row[0]).to_bits(), t.to_bits());
        assert_eq!(num(&row[1]).to_bits(), s.v.to_bits());
        assert_eq!(num(&row[2]).to_bits(), s.w.to_bits());
    }
}

fn json_cells(text: &str) -> (Vec<String>, Vec<Vec<Value>>) {
    let v: Value = serde_json::from_str(text).unwrap();
    let cols = v["columns"].as_array().unwrap().iter().map(|c| c.as_str().unwrap().to_string()).collect();
    let rows = v["rows"].as_array().unwrap().iter().map(|r| r.as_array().unwrap().clone()).collect();
    (cols, rows)
}

fn assert_same_content(csv: &str, json: &str) {
    let (h1, r1) = parse_csv(csv);
    let (h2, r2) = json_cells(json);
    assert_eq!(h1, h2);
    assert_eq!(r1.len(), r2.len());
    for (a, b) in r1.iter().zip(&r2) {
        for (x, y) in a.iter().zip(b) {
            match y {
                Value::Null => assert_eq!(x, ""),
                Value::String(s) => assert_eq!(x, s),
                Value::Number(n) => assert_eq!(num(x).to_bits(), n.as_f64().unwrap().to_bits(), "{x} vs {n}"),
                other => panic!("unexpected cell {other}"),
            }
        }
    }
}

#[test]
fn json_and_csv_carry_identical_numbers() {
    for args in [
        &["equilibria"][..],
        &["hopf"][..],
        &["simulate", "--method", "euler", "--horizon", "0.05"][..],
        &["simulate", "--method", "taylor-piecewise", "--horizon", "0.1", "--n-sub", "20", "--samples", "40"][..],
        &["bifurcation", "--points", "12", "--cycle-horizon", "1", "--cycle-step", "1e-4"][..],
        &["check-stability", "--horizon", "0.05"][..],
    ] {
        let csv = fhn(args);
        let mut json_args = args.to_vec();
        json_args.extend(["--format", "json"]);
        let json = fhn(&json_args);
        assert_eq!(csv.status.code(), Some(0), "{args:?}");
        assert_eq!(json.status.code(), Some(0), "{args:?}");
        assert_same_content(&stdout(&csv), &stdout(&json));
    }
}

#[test]
fn converge_writes_table_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = fhn(&["converge", "--degrees", "4,5,6", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for name in ["convergence_v.csv", "convergence_w.csv"] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let (header, rows) = parse_csv(&text);
        assert_eq!(header, ["t", "err_N4", "err_N5", "err_N6"]);
        assert_eq!(rows.len(), 11);
        assert_eq!(num(&rows[10][0]), 1.0);
        assert!(rows.iter().flatten().all(|c| num(c) >= 0.0));
    }
    let (header, rows) = parse_csv(&std::fs::read_to_string(dir.path().join("cpu.csv")).unwrap());
    assert_eq!(header, ["N", "seconds"]);
    let n: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(n, ["4", "5", "6"]);
    assert!(rows.iter().all(|r| r[1].split('.').nth(1).map(str::len) == Some(3)));
}

#[test]
fn converge_marks_failed_rows_empty() {
    let dir = tempfile::tempdir().unwrap();
    let out = fhn(&["converge", "--degrees", "4,13", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("N = 13"));
    let (_, rows) = parse_csv(&std::fs::read_to_string(dir.path().join("convergence_v.csv")).unwrap());
    assert!(rows.iter().all(|r| !r[1].is_empty() && r[2].is_empty()));
}

#[test]
fn phase_portrait_is_consistent() {
    let p = FhnParams::standard(0.05);
    let out = fhn(&["phase", "--params", "0.22,1.18,0.008,0.05", "--samples", "200"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let (header, rows) = parse_csv(&stdout(&out));
    assert_eq!(header, ["kind", "t", "v", "w"]);
    let of = |kind: &str| rows.iter().filter(|r| r[0] == kind).collect::<Vec<_>>();
    assert_eq!(of("ic").len(), 1);
    assert_eq!(of("trajectory").len(), 201);
    assert_eq!(of("v-nullcline").len(), 1000);
    assert_eq!(of("w-nullcline").len(), 1000);
    let traj_t: Vec<f64> = of("trajectory").iter().map(|r| num(&r[1])).collect();
    assert!(traj_t.windows(2).all(|w| w[0] < w[1]));
    assert!(of("v-nullcline").iter().chain(&of("w-nullcline")).all(|r| r[1].is_empty()));

    let eqs = of("equilibrium");
    assert_eq!(eqs.len(), 1);
    let (v, w) = (num(&eqs[0][2]), num(&eqs[0][3]));
    assert!((v - 0.0495).abs() < 5e-4 && (w - 0.042).abs() < 5e-4);
    // The equilibrium lies on both curves...
    assert!((w - (cubic(v, p.a) + p.current)).abs() <= 1e-6);
    assert!((w - v / p.gamma).abs() <= 1e-6);
    // ...and between neighbouring samples of each.
    for kind in ["v-nullcline", "w-nullcline"] {
        let nearest = of(kind).iter().map(|r| (num(&r[2]) - v).abs()).fold(f64::INFINITY, f64::min);
        assert!(nearest <= 1e-3, "{kind}: {nearest}");
    }
}

#[test]
fn bifurcation_columns_follow_flag() {
    let out = fhn(&["bifurcation", "--points", "30", "--cycle-horizon", "2", "--cycle-step", "1e-4"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let (header, rows) = parse_csv(&stdout(&out));
    assert_eq!(header, ["I", "v_star", "stable", "re_l1", "re_l2", "im_l1", "lc_min", "lc_max"]);
    assert_eq!(rows.len(), 30);
    for r in &rows {
        assert!(r[2] == "0" || r[2] == "1");
        let stable = r[2] == "1";
        assert_eq!(stable, r[6].is_empty() && r[7].is_empty());
        assert_eq!(stable, num(&r[3]) < 0.0 && num(&r[4]) < 0.0);
        if !stable {
            assert!(num(&r[6]) < num(&r[7]));
        }
    }
}

#[test]
fn check_stability_reports_every_step() {
    let out = fhn(&["check-stability"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let (header, rows) = parse_csv(&stdout(&out));
    assert_eq!(&header[..4], ["k", "t", "v", "w"]);
    assert_eq!(rows.len(), 4001);
    let ok = header.iter().position(|h| h == "membrane_ok").unwrap();
    assert!(rows.iter().all(|r| r[ok] == "1"));
    assert!(stderr(&out).contains("membrane: satisfied at all 4001 steps"));
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    write(&cfg, "# stable spiral\nI = 0.05\nformat = json\n");
    let out = fhn(&["equilibria", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let (cols, rows) = json_cells(&stdout(&out));
    assert_eq!(cols[0], "v_star");
    assert!((rows[0][0].as_f64().unwrap() - 0.0495).abs() < 5e-4);

    // command-line parameters win over the file
    let out = fhn(&["equilibria", "--config", cfg.to_str().unwrap(), "--params", "0.22,1.18,0.008,0.6", "--format", "csv"]);
    let (_, rows) = parse_csv(&stdout(&out));
    assert!((num(&rows[0][0]) - 0.8141).abs() < 5e-4);

    write(&cfg, "speed = 3\n");
    let out = fhn(&["equilibria", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("speed"));

    let missing = dir.path().join("missing.cfg");
    assert_eq!(fhn(&["equilibria", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eq.csv");
    let out = fhn(&["equilibria", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).is_empty());
    assert!(std::fs::read_to_string(&path).unwrap().starts_with("v_star,w_star"));
}

#[test]
fn simulate_methods_agree_roughly() {
    let run = |method: &str| {
        let out = fhn(&["simulate", "--method", method, "--horizon", "0.2", "--samples", "20", "--tau", "1e-5"]);
        assert_eq!(out.status.code(), Some(0), "{method}: {}", stderr(&out));
        let (_, rows) = parse_csv(&stdout(&out));
        let last = rows.last().unwrap();
        (num(&last[0]), num(&last[1]), num(&last[2]))
    };
    let reference = run("reference");
    for method in ["euler", "taylor-piecewise"] {
        let (t, v, w) = run(method);
        assert!((t - 0.2).abs() < 1e-12);
        assert!((v - reference.1).abs() < 1e-3 && (w - reference.2).abs() < 1e-3, "{method}");
    }
}
