use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use subdiff::specfun::{ml_eval, SeriesControl};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(cmd: &str, cfg: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subdiff"))
        .args([cmd, "--config"])
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(["--threads", "1"])
        .output()
        .expect("run subdiff")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn verify_passes_on_default_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("verify", &config("default.json"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.path().join("verify.json"));
    assert_eq!(v["all_pass"], true);
    assert!(v["checks"].as_array().unwrap().len() >= 10);
}

#[test]
fn single_mode_forward_matches_mittag_leffler() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("forward", &config("linear_single_mode.json"), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,mode_1,mode_2,mode_3,mode_4");
    let mut rows = 0;
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let want = ml_eval(0.5, 1.0, -4.0 * cols[0].sqrt(), SeriesControl::default()).unwrap();
        assert!((cols[2] - want).abs() < 1e-4, "t = {}", cols[0]);
        assert_eq!(cols[1], 0.0);
        rows += 1;
    }
    assert_eq!(rows, 129);
}

#[test]
fn artifacts_are_byte_identical_across_runs() {
    for cmd in ["forward", "optimize"] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        assert!(run(cmd, &config("default.json"), a.path()).status.success());
        assert!(run(cmd, &config("default.json"), b.path()).status.success());
        let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(names.len() >= 4);
        for n in names {
            assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap(), "{n:?}");
        }
    }
}

#[test]
fn csv_uses_round_trip_digits_and_newlines() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run("forward", &config("default.json"), dir.path()).status.success());
    for name in ["trajectory.csv", "physical.csv"] {
        let csv = fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(!csv.contains('\r'));
        assert!(csv.ends_with('\n'));
        let row = csv.lines().nth(2).unwrap();
        for cell in row.split(',') {
            let mantissa = cell.trim_start_matches('-').split('e').next().unwrap();
            assert_eq!(mantissa.replace('.', "").len(), 17, "{cell}");
        }
    }
}

#[test]
fn resolved_config_echoes_derived_indices() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run("basis", &config("default.json"), dir.path()).status.success());
    let r = json(&dir.path().join("resolved_config.json"));
    let theta = r["derived"]["theta"].as_f64().unwrap();
    assert!((theta - 0.45).abs() < 1e-15);
    assert!((r["derived"]["xi"].as_f64().unwrap() - 0.5 * theta / (1.0 - theta)).abs() < 1e-15);
    assert!(r["derived"]["sigma"].as_f64().unwrap() > 1.0);
    assert_eq!(r["config"]["picard"]["max_iter"], 200);
    let report = json(&dir.path().join("report.json"));
    assert!(report["gram_deviation"].as_f64().unwrap() < 1e-12);
}

fn write_modified(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let mut v = json(&config("default.json"));
    edit(&mut v);
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_string(&v).unwrap()).unwrap();
    p
}

#[test]
fn small_rho_with_admissible_set_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_modified(dir.path(), |v| {
        v["indices"]["rho"] = 0.4.into();
        v["admissible_set"]["rho"] = 0.4.into();
    });
    let out = run("forward", &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("admissible_set.rho") && err.contains("1/2 < rho"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn malformed_configs_exit_2_with_field_paths() {
    let cases: Vec<(Box<dyn FnOnce(&mut serde_json::Value)>, &str)> = vec![
        (Box::new(|v| v["grids"]["n_steps"] = (-3).into()), "grids.n_steps"),
        (Box::new(|v| v["indices"]["gamma"] = 1.5.into()), "indices.gamma"),
        (Box::new(|v| v["cost"]["a2"] = 1.0.into()), "cost.a2"),
        (Box::new(|v| v["bogus"] = 1.into()), "bogus"),
        (Box::new(|v| v["initial"] = serde_json::json!({"coefficients": [1.0]})), "initial.coefficients"),
    ];
    for (edit, path) in cases {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_modified(dir.path(), edit);
        let out = run("forward", &cfg, dir.path());
        assert_eq!(out.status.code(), Some(2), "{path}");
        assert!(String::from_utf8_lossy(&out.stderr).contains(path), "{path}");
    }
}

#[test]
fn gradient_check_passes_on_every_shipped_config() {
    let mut seen = 0;
    for entry in fs::read_dir(config("")).unwrap() {
        let path = entry.unwrap().path();
        let dir = tempfile::tempdir().unwrap();
        let fwd = run("forward", &path, dir.path());
        assert!(fwd.status.success());
        let status = &json(&dir.path().join("report.json"))["status"];
        if status.get("blowup_at").is_some() {
            continue;
        }
        let out = run("gradcheck", &path, dir.path());
        assert!(out.status.success(), "{path:?}");
        let r = json(&dir.path().join("report.json"));
        assert_eq!(r["pass"], true, "{path:?}");
        assert!(r["check"]["best_relative_error"].as_f64().unwrap() <= 1e-3);
        seen += 1;
    }
    assert!(seen >= 5);
}

#[test]
fn adjoint_and_optimize_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run("adjoint", &config("default.json"), dir.path()).status.success());
    let r = json(&dir.path().join("report.json"));
    assert!(r["duality_gap"].as_f64().unwrap() < 1e-10);
    assert!(dir.path().join("gradient.csv").exists());

    let dir = tempfile::tempdir().unwrap();
    assert!(run("optimize", &config("default.json"), dir.path()).status.success());
    let r = json(&dir.path().join("report.json"));
    let its = r["iterations"].as_array().unwrap();
    let costs: Vec<f64> = its.iter().map(|i| i["cost"].as_f64().unwrap()).collect();
    assert!(costs.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(r["final"]["converged"], true);
    assert!(r["final"]["vi_residual"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn blowup_config_reports_escape_time() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run("forward", &config("blowup.json"), dir.path()).status.success());
    let r = json(&dir.path().join("report.json"));
    let t = r["status"]["blowup_at"]["time"].as_f64().unwrap();
    assert!(t > 0.3 && t < 1.0);
    assert_eq!(r["solve"]["blowup"], true);
}
