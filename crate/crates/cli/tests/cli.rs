use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const PURE_STEP_SWEEP: &str = r#"
[experiment]
kind = "sweep"

[potential]
kind = "pure-step"
v_left = 0.0
v_right = 1.0

[energy]
segments = [[0.05, 0.95, 256], [1.05, 4.0, 512]]
"#;

const FREE_DELAY: &str = r#"
[experiment]
kind = "delay"

[potential]
kind = "pure-step"
v_left = 0.0
v_right = 0.0

[[packet]]
center_x = 0.0
center_p = 1.4142135623730951
spread = 15.0
windows = [[1.5, 2.5]]

[numerics]
t_asym = 40.0
t_max = 50.0
dt = 0.01

[radii]
values = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0]
"#;

// t_asym far too short for the packet to leave the step
const SHORT_HORIZON: &str = r#"
[experiment]
kind = "delay"

[potential]
kind = "smooth-step"
v_left = 0.0
v_right = 1.0
width = 1.0

[[packet]]
center_x = 0.0
center_p = 1.4142135623730951
spread = 6.0
windows = [[1.5, 2.5]]

[numerics]
t_asym = 15.0
t_max = 15.0
dt = 0.01

[radii]
values = [2.0, 4.0, 6.0, 8.0, 10.0]
"#;

fn stepdelay(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stepdelay"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_config(dir: &Path, name: &str, body: &str, verb: &str) -> (Output, std::path::PathBuf) {
    let cfg = dir.join(name);
    fs::write(&cfg, body).unwrap();
    let out = dir.join(format!("{name}.out"));
    let o = stepdelay(&[verb, cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    (o, out)
}

fn csv_rows(text: &str) -> Vec<std::collections::HashMap<String, String>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines
        .map(|l| {
            header
                .iter()
                .zip(l.split(','))
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect()
        })
        .collect()
}

fn num(row: &std::collections::HashMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap()
}

#[test]
fn pure_step_sweep_has_vanishing_diagonal_delay() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, out) = run_config(tmp.path(), "sweep.toml", PURE_STEP_SWEEP, "run");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("scattering.csv")).unwrap();
    let rows = csv_rows(&csv);
    assert_eq!(rows.len(), 768);
    let mut above = 0;
    for r in rows.iter().filter(|r| r["regime"] == "two-channel") {
        above += 1;
        let t_ll = num(r, "t_ll_re").hypot(num(r, "t_ll_im"));
        let t_rr = num(r, "t_rr_re").hypot(num(r, "t_rr_im"));
        assert!(
            t_ll <= 1e-6 && t_rr <= 1e-6,
            "E = {}: {t_ll:e} {t_rr:e}",
            r["E"]
        );
        assert!(num(r, "unitarity_defect") <= 1e-6);
    }
    assert_eq!(above, 512);
    // one-channel: |s_ll| = 1
    for r in rows.iter().filter(|r| r["regime"] == "one-channel") {
        assert!((num(r, "s_ll_re").hypot(num(r, "s_ll_im")) - 1.0).abs() < 1e-6);
        assert!(r["s_rl_re"].is_empty());
    }
}

#[test]
fn manifest_lists_every_file_with_its_checksum() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, out) = run_config(tmp.path(), "sweep.toml", PURE_STEP_SWEEP, "sweep");
    assert!(o.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("MANIFEST.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert_eq!(files.len(), 2);
    for f in files {
        let bytes = fs::read(out.join(f["name"].as_str().unwrap())).unwrap();
        assert_eq!(f["bytes"].as_u64().unwrap() as usize, bytes.len());
        assert_eq!(
            f["sha256"].as_str().unwrap(),
            hex::encode(Sha256::digest(&bytes))
        );
    }
    assert_eq!(manifest["config"]["potential"]["kind"], "pure-step");
    assert_eq!(manifest["config"]["tolerances"]["moller"], 1e-3);
    assert_eq!(manifest["experiment"], "sweep");
}

#[test]
fn repeated_runs_give_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sweep.toml");
    fs::write(&cfg, PURE_STEP_SWEEP).unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (dir, threads) in [(&a, "1"), (&b, "2")] {
        let o = stepdelay(&[
            "run",
            cfg.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert!(o.status.success());
    }
    assert_eq!(
        fs::read(a.join("scattering.csv")).unwrap(),
        fs::read(b.join("scattering.csv")).unwrap()
    );
}

#[test]
fn free_delay_report_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, out) = run_config(tmp.path(), "free.toml", FREE_DELAY, "run");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("delay_0.json")).unwrap()).unwrap();
    assert!(report["tau_ew"]["value"].as_f64().unwrap().abs() < 1e-8);
    assert!(report["plateau"]["value"].as_f64().unwrap().abs() < 1e-6);
    let rows = csv_rows(&fs::read_to_string(out.join("delay_0.csv")).unwrap());
    assert_eq!(rows.len(), 6);
    for r in &rows {
        for key in [
            "tau_in",
            "tau_out",
            "tau_sym",
            "sigma_in",
            "sigma_out",
            "tau_l",
            "tau_r",
        ] {
            assert!(num(r, key).abs() < 1e-6, "{key} at R = {}", r["R"]);
        }
    }
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("kind.toml", "[experiment]\nkind = \"fly\"\n".to_string()),
        (
            "tol.toml",
            format!("{PURE_STEP_SWEEP}\n[tolerances]\ntail = -1.0\n"),
        ),
        ("key.toml", format!("{PURE_STEP_SWEEP}\nbogus = 1\n")),
        (
            "pot.toml",
            PURE_STEP_SWEEP.replace("v_right = 1.0", "v_right = -1.0"),
        ),
        (
            "nopacket.toml",
            FREE_DELAY.split("[[packet]]").next().unwrap().to_string(),
        ),
    ];
    for (name, body) in cases {
        let (o, _) = run_config(tmp.path(), name, &body, "run");
        assert_eq!(
            o.status.code(),
            Some(2),
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let cfg = tmp.path().join("sweep.toml");
    fs::write(&cfg, PURE_STEP_SWEEP).unwrap();
    let o = stepdelay(&["run", cfg.to_str().unwrap(), "--tol-scale", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn io_errors_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let o = stepdelay(&["run", tmp.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));

    let cfg = tmp.path().join("sweep.toml");
    fs::write(&cfg, PURE_STEP_SWEEP).unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "").unwrap();
    let o = stepdelay(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        blocker.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn failed_certificate_exits_3_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, out) = run_config(tmp.path(), "short.toml", SHORT_HORIZON, "run");
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("moller-defect"));
    assert!(!out.join("MANIFEST.json").exists());
}
