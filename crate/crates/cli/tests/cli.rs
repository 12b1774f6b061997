use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn dhlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dhlab"))
        .args(args)
        .env_remove("DHLAB_CACHE")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is a JSON error object")
}

fn write_config(dir: &Path, name: &str, k: &str, delta: &str) -> String {
    let path = dir.join(name);
    fs::write(
        &path,
        format!(r#"{{"lambda": ["1", "sqrt(2)", "-1", "-1"], "k": "{k}", "omega": "0", "delta": "{delta}"}}"#),
    )
    .unwrap();
    path.display().to_string()
}

fn p(path: &Path) -> String {
    path.display().to_string()
}

#[test]
fn optimize_prints_exact_rationals() {
    let out = dhlab(&["optimize"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["u_star"], "1/14");
    assert_eq!(v["w_expr"], "(7-6k)/(14k)");
    assert_eq!(v["k_range"]["k"], "(1, 7/6)");
    assert_eq!(v["binding"], serde_json::json!(["u_le_1_14", "minor_arc"]));
    assert_eq!(v["pieces"][0]["slack"]["level_set"], "1/28");
    assert_eq!(v["manifest_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn optimize_reads_program_files() {
    let dir = TempDir::new().unwrap();
    let prog = dir.path().join("p.json");
    // pin u = 1/20 in the default system
    fs::write(
        &prog,
        r#"{"variables": ["w", "u"], "objective": "w", "constraints": [
            {"id": "x_le_1", "coeffs": {"x": "1"}, "sense": "<=", "rhs": "1"},
            {"id": "w_nonneg", "coeffs": {"w": "1"}, "sense": ">=", "rhs": "0"},
            {"id": "u_pin", "coeffs": {"u": "1"}, "sense": "<=", "rhs": "1/20"},
            {"id": "u_pin_lo", "coeffs": {"u": "1"}, "sense": ">=", "rhs": "1/20"},
            {"id": "minor_arc", "coeffs": {"w": "-1", "u": "1", "x": "1/2"}, "sense": ">=", "rhs": "1/2"},
            {"id": "level_set", "coeffs": {"w": "-1", "u": "-2", "x": "1/2"}, "sense": ">=", "rhs": "1/4"}
        ]}"#,
    )
    .unwrap();
    let out = dhlab(&["optimize", "--program", &p(&prog)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["u_star"], "1/20");
    assert_eq!(v["w_affine"], "x/2 - 9/20");

    fs::write(&prog, r#"{"variables": ["w"], "objective": "w", "constraints": ["#).unwrap();
    let out = dhlab(&["optimize", "--program", &p(&prog)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["code"], "parse");
}

#[test]
fn cf_lists_sqrt2_convergents() {
    let out = dhlab(&["cf", "--lambda1", "sqrt(2)", "--lambda2", "1", "--count", "6"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    let qs: Vec<u64> = v.as_array().unwrap().iter().map(|c| c["q"].as_u64().unwrap()).collect();
    let a: Vec<i64> = v.as_array().unwrap().iter().map(|c| c["a"].as_i64().unwrap()).collect();
    assert_eq!(qs, [1, 2, 5, 12, 29, 70]);
    assert_eq!(a, [1, 3, 7, 17, 41, 99]);
}

#[test]
fn plan_windows_follow_convergents() {
    let out = dhlab(&["plan", "--count", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    let qs: Vec<u64> = v.as_array().unwrap().iter().map(|w| w["q"].as_u64().unwrap()).collect();
    // default lambda1/lambda2 = 1/sqrt(2)
    assert_eq!(qs, [3, 7, 17]);
    for w in v.as_array().unwrap() {
        let q = w["q"].as_f64().unwrap();
        let x = w["x"].as_f64().unwrap();
        assert!((x.powf(3.0 / 7.0) - q).abs() / q < 1e-12);
    }
}

#[test]
fn weights_csv_is_complete() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("w.csv");
    let out = dhlab(&["weights", "--x", "1e6", "--delta", "1/100", "--out", &p(&csv)]);
    assert_eq!(out.status.code(), Some(0));
    let s = stdout_json(&out);
    assert_eq!(s["m_lo"], 100);
    assert_eq!(s["m_hi"], 1000);
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("m,rho\r\n"));
    assert_eq!(text.lines().count(), 1 + 901);
    let sum: i64 = text.lines().skip(1).map(|l| l.trim().split(',').nth(1).unwrap().parse::<i64>().unwrap()).sum();
    assert_eq!(sum, s["sum_rho"].as_i64().unwrap());
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("w.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["manifest_hash"], s["manifest_hash"]);
    assert_eq!(manifest["command"], "weights");
    assert!(manifest["timing"]["elapsed_ms"].is_u64());
}

#[test]
fn expsum_kinds_write_three_columns() {
    let dir = TempDir::new().unwrap();
    for kind in ["sk", "uk", "tk", "s2t"] {
        let csv = dir.path().join(format!("{kind}.csv"));
        let out = dhlab(&["expsum", "--kind", kind, "--x", "1e4", "--alphas", "0:1/100:5", "--out", &p(&csv)]);
        assert_eq!(out.status.code(), Some(0), "{kind}: {}", String::from_utf8_lossy(&out.stderr));
        let text = fs::read_to_string(&csv).unwrap();
        assert!(text.starts_with("alpha,re,im\r\n"));
        assert_eq!(text.lines().count(), 6);
    }
    let out = dhlab(&["expsum", "--kind", "zz", "--x", "1e4", "--alphas", "0:1:2", "--out", &p(&dir.path().join("z.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["code"], "parse");
}

#[test]
fn search_is_deterministic_across_runs_and_threads() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let run = |dir: &Path, threads: &str| {
        let out = dhlab(&["--threads", threads, "search", "--x", "1e4", "--out", &p(&dir.join("s.jsonl"))]);
        assert_eq!(out.status.code(), Some(0));
        out
    };
    let first = run(a.path(), "1");
    let second = run(b.path(), "4");
    assert_eq!(first.stdout, second.stdout);
    let ra = fs::read(a.path().join("s.jsonl")).unwrap();
    let rb = fs::read(b.path().join("s.jsonl")).unwrap();
    assert_eq!(ra, rb);
    let summary = stdout_json(&first);
    assert_eq!(summary["schema"], "search_summary");
    assert_eq!(summary["count"].as_u64().unwrap() as usize, String::from_utf8(ra).unwrap().lines().count());
    let line = fs::read_to_string(a.path().join("s.jsonl")).unwrap();
    let rec: Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    for key in ["p1", "p2", "p3", "p4", "value", "residual", "eta"] {
        assert!(rec.get(key).is_some(), "missing {key}");
    }
    assert!(rec["residual"].as_f64().unwrap() <= rec["eta"].as_f64().unwrap());
}

#[test]
fn sweep_and_out_do_not_mix() {
    let dir = TempDir::new().unwrap();
    let out = dhlab(&["search", "--x", "1e4,2e4", "--out", &p(&dir.path().join("s.jsonl"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["code"], "usage");
}

#[test]
fn verify_rejects_invalid_configs_before_any_check() {
    let dir = TempDir::new().unwrap();
    for (name, k, delta) in [("k.json", "6/5", "1/100"), ("d.json", "21/20", "9/10")] {
        let cfg = write_config(dir.path(), name, k, delta);
        let out = dhlab(&["verify", "--config", &cfg]);
        assert_eq!(out.status.code(), Some(1));
        let v = stdout_json(&out);
        assert_eq!(v["passed"], false);
        assert_eq!(v["failed"], serde_json::json!(["validate_instance"]));
        assert_eq!(v["checks"].as_array().unwrap().len(), 1);
        assert_eq!(v["checks"][0]["detail"]["error"]["code"], "invalid_instance");
    }
}

#[test]
fn verify_runs_the_checks_in_order() {
    let out = dhlab(&["verify"]);
    let v = stdout_json(&out);
    let names: Vec<&str> = v["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(
        names,
        [
            "validate_instance",
            "sieve_weights",
            "kernel_plancherel",
            "parseval_oracle",
            "euler_bound_stability",
            "exponent_program",
            "convergents_legendre",
            "search_oracle"
        ]
    );
    let passed = v["passed"].as_bool().unwrap();
    assert_eq!(out.status.code(), Some(if passed { 0 } else { 1 }));
}

#[test]
fn verify_default_config_passes() {
    let out = dhlab(&["verify"]);
    let v = stdout_json(&out);
    assert_eq!(v["failed"], serde_json::json!([]), "{}", serde_json::to_string_pretty(&v["checks"]).unwrap());
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn other_commands_reject_invalid_configs_as_usage_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "k.json", "6/5", "1/100");
    let out = dhlab(&["search", "--config", &cfg, "--x", "1e4"]);
    assert_eq!(out.status.code(), Some(2));
    let e = stderr_json(&out);
    assert_eq!(e["code"], "invalid_instance");
    assert_eq!(e["context"]["command"], "search");
    assert!(e["message"].as_str().unwrap().len() > 0);
}

#[test]
fn usage_errors_are_machine_readable() {
    let out = dhlab(&["search"]);
    assert_eq!(out.status.code(), Some(2));
    let e = stderr_json(&out);
    assert_eq!(e["code"], "usage");
    assert!(e["context"].is_object());

    let out = dhlab(&["weights", "--x", "lots", "--out", "/dev/null"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["code"], "parse");

    let out = dhlab(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn arcs_report_feeds_three_region_csvs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", "11/10", "1/10");
    let report = dir.path().join("arcs.json");
    let out = dhlab(&["arcs", "--config", &cfg, "--x", "400", "--eta", "1", "--grid-points", "32", "--out", &p(&report)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["parseval"]["holds"], true);
    let tags: Vec<&str> = v["regions"].as_array().unwrap().iter().map(|r| r["tag"].as_str().unwrap()).collect();
    assert_eq!(tags, ["major", "minor", "trivial", "real"]);
    for r in v["regions"].as_array().unwrap() {
        for key in ["value_re", "value_im", "err", "tail"] {
            assert!(r.get(key).is_some());
        }
    }
    assert!(dir.path().join("arcs.json.manifest.json").exists());

    let out_dir = dir.path().join("plots");
    let out = dhlab(&["report", &p(&report), "--out-dir", &p(&out_dir)]);
    assert_eq!(out.status.code(), Some(0));
    for region in ["major", "minor", "trivial"] {
        let text = fs::read_to_string(out_dir.join(format!("arcs_{region}.csv"))).unwrap();
        assert!(text.starts_with("alpha,abs\r\n"));
        assert_eq!(text.lines().count(), 33);
    }
    assert_eq!(stdout_json(&out)["files"].as_array().unwrap().len(), 3);
}

#[test]
fn sweep_report_has_one_row_per_window() {
    let dir = TempDir::new().unwrap();
    let sweep = dir.path().join("sweep.json");
    let out = dhlab(&["search", "--x", "1e4,2e4,4e4", "--summary", &p(&sweep)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["schema"], "search_sweep");
    let out = dhlab(&["report", &p(&sweep), "--out-dir", &p(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("n_trend.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "X,count,predicted,ratio,complete");
    assert_eq!(rows.len(), 4);
}

#[test]
fn report_rejects_empty_and_unknown_inputs() {
    let out = dhlab(&["report"]);
    assert_eq!(out.status.code(), Some(2));
    let e = stderr_json(&out);
    assert_eq!(e["message"], "nothing to report");

    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"schema": "something_else"}"#).unwrap();
    let out = dhlab(&["report", &p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["code"], "mismatch");
}

#[test]
fn levelset_reports_measure_and_bound() {
    let out = dhlab(&["levelset", "--x", "1e5", "--y", "1e-3", "--samples", "2000", "--seed", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["schema"], "levelset_report");
    assert!(v["lemma_bound"].as_f64().unwrap() > 0.0);
    assert!(v["measure"].as_f64().unwrap() >= 0.0);
    assert_eq!(v["all_witnessed"], true);
}

#[test]
fn table_cache_flag_overrides_environment() {
    let env_dir = TempDir::new().unwrap();
    let flag_dir = TempDir::new().unwrap();
    let run = |extra: &[&str]| {
        let mut args = vec!["search", "--x", "1e4"];
        args.extend_from_slice(extra);
        Command::new(env!("CARGO_BIN_EXE_dhlab"))
            .args(&args)
            .env("DHLAB_CACHE", env_dir.path())
            .output()
            .unwrap()
    };
    let plain = dhlab(&["search", "--x", "1e4"]);
    let via_env = run(&[]);
    assert!(env_dir.path().join("primes.dhlt").exists());
    let flag = p(flag_dir.path());
    let via_flag = run(&["--table-cache", &flag]);
    assert!(flag_dir.path().join("primes.dhlt").exists());
    // a second run loads the cache instead of rebuilding
    let cached = run(&["--table-cache", &flag]);
    assert_eq!(plain.stdout, via_env.stdout);
    assert_eq!(plain.stdout, via_flag.stdout);
    assert_eq!(plain.stdout, cached.stdout);
}
