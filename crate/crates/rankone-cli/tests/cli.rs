use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rankone"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("rankone-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(args: &[&str], dir: &Path) -> (i32, Value) {
    let out = bin().args(args).current_dir(dir).output().unwrap();
    let code = out.status.code().unwrap();
    let doc = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (code, doc)
}

fn gen_planted(dir: &Path) {
    let (code, doc) = run(&["gen", "--kind", "planted-yes", "--n", "3", "--dim", "3", "--seed", "7", "--out", "p"], dir);
    assert_eq!(code, 0);
    assert_eq!(doc["checks"]["plant_quality"], 1.0);
}

#[test]
fn planted_instance_solves() {
    let d = scratch("solve");
    gen_planted(&d);
    let (code, doc) = run(&["solve", "p.sub"], &d);
    assert_eq!(code, 0, "{doc}");
    assert_eq!(doc["status"], "OK");
    assert!(doc["result"]["candidate"]["quality"].as_f64().unwrap() >= 0.9375);
    assert_eq!(doc["checks"]["within_iteration_bound"], true);
}

#[test]
fn reports_are_byte_identical() {
    let d = scratch("det");
    gen_planted(&d);
    let a = bin().args(["solve", "p.sub", "--seed", "4"]).current_dir(&d).output().unwrap();
    let b = bin().args(["solve", "p.sub", "--seed", "4"]).current_dir(&d).output().unwrap();
    assert_eq!(a.stdout, b.stdout);
    let sub = std::fs::read(d.join("p.sub")).unwrap();
    let d2 = scratch("det2");
    gen_planted(&d2);
    assert_eq!(sub, std::fs::read(d2.join("p.sub")).unwrap());
    assert!(!String::from_utf8(a.stdout).unwrap().contains("timing_ms"));
    let (_, t) = run(&["solve", "p.sub", "--timing"], &d);
    assert!(t["timing_ms"].as_f64().is_some());
}

#[test]
fn far_instance_fails_with_exit_one() {
    let d = scratch("far");
    let (_, g) = run(&["gen", "--kind", "random-no", "--n", "2", "--dim", "1", "--seed", "3", "--out", "q"], &d);
    assert_eq!(g["result"]["farness"]["certified"], true);
    assert!(g["result"]["farness"]["certified_lower"].as_f64().unwrap() > 0.25);
    let (code, doc) = run(&["solve", "q.sub"], &d);
    assert_eq!(code, 1);
    assert_eq!(doc["status"], "FAIL");
    assert_eq!(doc["result"]["outcome"], "infeasible");
}

#[test]
fn rank_one_projector_measurement_recovers_the_product() {
    let d = scratch("meas");
    let a = [1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0];
    let b = [0.0, 0.6, 0.8];
    let w: Vec<f64> = a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect();
    let mut s = String::from("MEASUREMENT 3\n9 9\n");
    for i in 0..9 {
        let row: Vec<String> = (0..9).map(|j| format!("{}", w[i] * w[j])).collect();
        s += &(row.join(" ") + "\n");
    }
    std::fs::write(d.join("m.txt"), s).unwrap();
    let (code, doc) = run(&["solve", "m.txt"], &d);
    assert_eq!(code, 0, "{doc}");
    let c = &doc["result"]["candidate"];
    let u: Vec<f64> = serde_json::from_value(c["u0"].clone()).unwrap();
    let v: Vec<f64> = serde_json::from_value(c["v0"].clone()).unwrap();
    let mut err = 0.0f64;
    let mut norm = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            norm += (u[i] * v[j]).powi(2);
        }
    }
    let sign = (u[0] * v[1]).signum();
    for i in 0..3 {
        for j in 0..3 {
            err += (sign * u[i] * v[j] / norm.sqrt() - a[i] * b[j]).powi(2);
        }
    }
    assert!(err.sqrt() < 1e-4, "{err}");
    assert!(c["acceptance"].as_f64().unwrap() > 1.0 - 1e-6);
}

#[test]
fn check_accepts_the_plant() {
    let d = scratch("check");
    gen_planted(&d);
    let (code, doc) = run(&["check", "p.sub", "p.plant"], &d);
    assert_eq!(code, 0);
    assert!((doc["result"]["quality"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn complex_reduce_is_complete_and_solves() {
    let d = scratch("complex");
    let (code, _) = run(&["gen", "--kind", "complex-planted", "--n", "2", "--dim", "1", "--seed", "1", "--out", "c"], &d);
    assert_eq!(code, 0);
    for gauge in [true, false] {
        let mut args = vec!["reduce", "c.csub", "--answer", "c.cplant", "--write", "y.sub"];
        if gauge {
            args.push("--gauge");
        }
        let (code, doc) = run(&args, &d);
        assert_eq!(code, 0, "{doc}");
        assert_eq!(doc["checks"]["completeness"], true);
    }
    assert!(std::fs::read_to_string(d.join("y.sub")).unwrap().starts_with("SUBSPACE 4"));
    let (code, doc) = run(&["solve", "c.csub"], &d);
    assert_eq!(code, 0, "{doc}");
    assert!(doc["result"]["complex"]["relative_residual"].as_f64().unwrap() <= 0.25);
    let (code, _) = run(&["check", "c.csub", "c.cplant"], &d);
    assert_eq!(code, 0);
}

#[test]
fn rectangle_report_shape() {
    let d = scratch("rect");
    let (n, big_n) = (4, 200);
    let mut s = format!("FACTORS {n} {big_n}\n{n} {big_n}\n");
    for r in 0..n {
        let row: Vec<&str> = (0..big_n).map(|i| if i % n == r { "1" } else { "0" }).collect();
        s += &(row.join(" ") + "\n");
    }
    std::fs::write(d.join("u.txt"), s).unwrap();
    let (code, doc) = run(&["rectangle", "u.txt", "--k", "1", "--eps", "0.3", "--out", "r.json"], &d);
    assert_eq!(code, 0);
    assert_eq!(doc, Value::Null);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    let res = &doc["result"];
    assert_eq!(res["indices"].as_array().unwrap().len(), big_n / n);
    assert!(res["distance"].as_f64().unwrap() <= 0.3);
    assert!((res["kl_deficiency"].as_f64().unwrap() - (n as f64).ln()).abs() < 1e-12);
    assert_eq!(doc["config"]["k"], 1.0);
    for key in ["rounds", "densities", "stop"] {
        assert!(!res[key].is_null(), "{key}");
    }
}

#[test]
fn config_file_with_flags_winning() {
    let d = scratch("config");
    gen_planted(&d);
    std::fs::write(d.join("c.toml"), "eps = 0.5\nseed = 9\n").unwrap();
    let (_, doc) = run(&["check", "p.sub", "p.plant", "--config", "c.toml", "--seed", "2"], &d);
    assert_eq!(doc["config"]["eps"], 0.5);
    assert_eq!(doc["config"]["seed"], 2);
    std::fs::write(d.join("bad.toml"), "epsilon = 0.5\n").unwrap();
    let (code, doc) = run(&["check", "p.sub", "p.plant", "--config", "bad.toml"], &d);
    assert_eq!(code, 4);
    assert_eq!(doc["status"], "ERROR");
}

#[test]
fn exit_codes() {
    let d = scratch("codes");
    let (code, doc) = run(&["solve", "missing.sub"], &d);
    assert_eq!(code, 3);
    assert_eq!(doc["error"]["kind"], "io");
    std::fs::write(d.join("junk.sub"), "SUBSPACE 2 1\n2 2\n1 x\n0 0\n").unwrap();
    assert_eq!(run(&["solve", "junk.sub"], &d).0, 4);
    std::fs::write(d.join("what.txt"), "NONSENSE 1\n").unwrap();
    assert_eq!(run(&["solve", "what.txt"], &d).0, 4);
    assert_eq!(run(&["solve"], &d).0, 2);
    assert_eq!(run(&["gen", "--kind", "planted-yes", "--n", "3", "--dim", "3"], &d).0, 4);
}
