use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn combmem(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_combmem"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let body = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, body)
}

fn column(body: &[Vec<String>], i: usize) -> Vec<f64> {
    body.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.json");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn eigen_writes_sorted_values_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let o = combmem(&["eigen"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, body) = rows(&out.join("eigen.csv"));
    assert_eq!(header[1], "s [1]");
    assert_eq!(header.len(), 5 + 90);
    let s = column(&body, 1);
    assert_eq!(s.len(), 90);
    assert!(s.windows(2).all(|w| w[0] >= w[1]));
    assert!(s[..5].iter().all(|&v| v >= 0.9) && s[9] <= 0.5);
    let summary: Value = serde_json::from_slice(&std::fs::read(out.join("eigen.json")).unwrap()).unwrap();
    assert!((summary["singular_values"][0].as_f64().unwrap() - s[0]).abs() < 1e-15);
    assert!(out.join("eigen.gp").exists());

    let again = dir.path().join("b");
    combmem(&["eigen"], &again);
    for f in ["eigen.csv", "eigen.json", "eigen.gp"] {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn malformed_or_unknown_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    for body in ["{not json", r#"{"n_pulses": 90, "colour": 1}"#, r#"{"length": -3}"#] {
        let cfg = write_config(dir.path(), body);
        let out = dir.path().join("out");
        let o = combmem(&["eigen", "--config", &cfg], &out);
        assert_eq!(o.status.code(), Some(2), "{body}");
        assert!(!out.exists(), "{body}");
    }
    let o = combmem(&["eigen", "--config", "/nonexistent/cfg.json"], &dir.path().join("x"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2_and_help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(combmem(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(combmem(&["spectrum", "--stage", "sideways"], dir.path()).status.code(), Some(2));
    assert_eq!(combmem(&["efficiency", "--shifters", "maybe"], dir.path()).status.code(), Some(2));
    let help = Command::new(env!("CARGO_BIN_EXE_combmem")).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("verify"));
}

#[test]
fn efficiency_single_point_and_shape() {
    let dir = tempfile::tempdir().unwrap();
    let o = combmem(&["efficiency", "--n-range", "90:90:1", "--lengths", "10", "--shifters", "false"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let (header, body) = rows(&dir.path().join("efficiency.csv"));
    assert_eq!(header, ["N [pulses]", "L [optical depth]", "shifters", "efficiency [1]"]);
    assert_eq!(body.len(), 1);
    let e = column(&body, 3)[0];
    assert!((e - 0.9).abs() <= 0.05, "{e}");

    let o = combmem(&["efficiency", "--n-range", "1:300:1", "--lengths", "10"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let (_, body) = rows(&dir.path().join("efficiency.csv"));
    let v = column(&body, 3);
    let peak = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
    assert!(peak > 5 && peak < 100);
    assert!(v[200..].windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn efficiency_rejects_empty_range() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert_eq!(combmem(&["efficiency", "--n-range", "10:5:1"], &out).status.code(), Some(2));
    assert_eq!(combmem(&["efficiency", "--n-range", "1:5:0"], &out).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"lengths": [30], "n_range": "1:3:1", "phase_shifters": false}"#);
    let o = combmem(&["efficiency", "--config", &cfg, "--lengths", "5,7", "--shifters", "true"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let (_, body) = rows(&dir.path().join("efficiency.csv"));
    assert_eq!(body.len(), 6);
    assert!(body.iter().all(|r| r[2] == "true"));
    assert_eq!(column(&body, 1), [5.0, 5.0, 5.0, 7.0, 7.0, 7.0]);
}

#[test]
fn spectra_have_comb_minima_and_flatten_without_squeezing() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(combmem(&["spectrum", "--stage", "in"], dir.path()).status.code(), Some(0));
    let (header, body) = rows(&dir.path().join("spectrum_in.csv"));
    assert_eq!(header, ["omega [rad/tau]", "S [shot noise]"]);
    assert_eq!(body.len(), 2000);
    let w = column(&body, 0);
    let s = column(&body, 1);
    let step = w[1] - w[0];
    let spacing = 2.0 * std::f64::consts::PI / 10_000.0;
    let minima: Vec<usize> = (1..s.len() - 1).filter(|&i| s[i] < s[i - 1] && s[i] <= s[i + 1]).collect();
    assert_eq!(minima.len(), 5);
    for i in minima {
        let k = (w[i] / spacing).round();
        assert!((w[i] - k * spacing).abs() <= step);
    }

    let cfg = write_config(dir.path(), r#"{"kappa_t": 0.0}"#);
    for stage in ["in", "out"] {
        let out = dir.path().join(stage);
        assert_eq!(combmem(&["spectrum", "--config", &cfg, "--stage", stage], &out).status.code(), Some(0));
        let (_, body) = rows(&out.join(format!("spectrum_{stage}.csv")));
        assert!(column(&body, 1).iter().all(|&v| v == 1.0), "{stage}");
    }
}

#[test]
fn retrieved_dips_follow_input_dips() {
    let dir = tempfile::tempdir().unwrap();
    combmem(&["spectrum", "--stage", "in"], dir.path());
    assert_eq!(combmem(&["spectrum", "--stage", "out", "--retained", "6"], dir.path()).status.code(), Some(0));
    let s_in = column(&rows(&dir.path().join("spectrum_in.csv")).1, 1);
    let s_out = column(&rows(&dir.path().join("spectrum_out.csv")).1, 1);
    let dip_in = 1.0 - s_in.iter().copied().fold(f64::INFINITY, f64::min);
    let dip_out = 1.0 - s_out.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(dip_out <= dip_in && dip_out >= 0.9 * dip_in, "{dip_in} {dip_out}");
}

#[test]
fn squeezing_needs_inputs_and_fixes_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("none");
    assert_eq!(combmem(&["squeezing"], &out).status.code(), Some(2));
    assert!(!out.exists());
    assert_eq!(combmem(&["squeezing", "--input-db", "1.0,2.0"], &out).status.code(), Some(2));

    let o = combmem(&["squeezing", "--input-db", "0,0,0,0"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let (_, body) = rows(&dir.path().join("squeezing.csv"));
    assert!(column(&body, 3).iter().all(|&v| v == 0.0));

    let o = combmem(&["squeezing", "--input-db", "-4.2,-3.2,-2.1,-1,-1,-1"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let (header, body) = rows(&dir.path().join("squeezing.csv"));
    assert_eq!(header, ["mode [index]", "input_db [dB]", "transfer [1]", "output_db [dB]"]);
    assert!(column(&body, 2).iter().all(|f| (0.0..=1.0).contains(f)));
    let outputs = column(&body, 3);
    for (got, want) in outputs.iter().zip([-3.7, -1.7, -0.4]) {
        assert!((got - want).abs() <= 0.4);
    }
    let report: Value = serde_json::from_slice(&std::fs::read(dir.path().join("squeezing.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 6);
}

#[test]
fn verify_passes_by_default_and_names_a_forced_failure() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good");
    let o = combmem(&["verify"], &good);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_slice(&std::fs::read(good.join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], Value::Bool(true));
    for c in report["checks"].as_array().unwrap() {
        assert_eq!(c["status"], "pass", "{c}");
        assert!(c["name"].is_string() && c.get("measured").is_some());
    }

    let cfg = write_config(dir.path(), r#"{"quadrature_nodes": 1}"#);
    let bad = dir.path().join("bad");
    let o = combmem(&["verify", "--config", &cfg], &bad);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("memory_config"));
    let report: Value = serde_json::from_slice(&std::fs::read(bad.join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], Value::Bool(false));
    let first = &report["checks"][0];
    assert_eq!((first["name"].as_str(), first["status"].as_str()), (Some("memory_config"), Some("fail")));
}

#[test]
fn bad_node_count_is_a_config_error_outside_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"quadrature_nodes": 1}"#);
    let out = dir.path().join("o");
    assert_eq!(combmem(&["eigen", "--config", &cfg], &out).status.code(), Some(2));
    assert!(!out.exists());
}
