use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tls_locator::ramp::RampPlan;

fn run(stage: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tls-locator"))
        .arg(stage)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, v: &Value) -> std::path::PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn small_config() -> Value {
    json!({
        "geometry": { "fine_spacing_nm": 1.0, "edge_spacing_nm": 0.5 },
        "ensemble": {
            "jj_per_ghz": 3.0,
            "tunable_per_ghz": 10.0,
            "fixed_g_mhz": 0.2,
            "p_range_debye": [1.0, 10.0],
            "crossing_v": [-15.0, 15.0]
        },
        "ramp": serde_json::to_value(RampPlan::staircase(-30.0, 30.0, 10.0, 0.14)).unwrap(),
        "sweep": { "range_um": 50.0, "step_um": 50.0, "frames_step_um": 25.0, "cutoffs_debye": [5.0, 10.0] }
    })
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("synth", &dir.path().join("absent.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_stage_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &json!({}));
    let out = run("simulate", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn schema_error_names_the_offending_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &json!({ "geometry": { "film_thickness_nm": "thick" } }));
    let out = run("simulate-fields", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("geometry.film_thickness_nm"), "{err}");

    let cfg = write_config(dir.path(), &json!({ "qubit": { "t1": 8.3 } }));
    let out = run("synth", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t1"));
}

#[test]
fn invalid_config_value_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &json!({ "geometry": { "fine_margin_nm": 100.0 } }));
    let out = run("simulate-fields", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &json!({}));
    let out = Command::new(env!("CARGO_BIN_EXE_tls-locator"))
        .args(["synth", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .env("TLS_LOCATOR_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_upstream_artifact_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_config());
    let out = run("fit", &cfg, dir.path(), &[]);
    assert_ne!(out.status.code(), Some(0));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

fn read(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn stages_chain_through_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), &small_config());
    for stage in ["simulate-fields", "synth", "fit", "localize", "score", "error-sweep"] {
        let o = run(stage, &cfg, &out, &["--seed", "3", "--preset", "paper"]);
        assert_eq!(o.status.code(), Some(0), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
        let manifest = out.join(format!("manifest_{}.json", stage.replace('-', "_")));
        assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), manifest.display().to_string());
        let m = read(&manifest);
        assert_eq!(m["seed"], 3);
        assert_eq!(m["preset"], "paper");
        for f in m["outputs"].as_array().unwrap() {
            assert!(Path::new(f["path"].as_str().unwrap()).exists(), "{f}");
            assert_eq!(f["sha256"].as_str().unwrap().len(), 64);
        }
    }

    let header = std::fs::read_to_string(out.join("profile_OxV.csv")).unwrap();
    assert!(header.starts_with("x_nm,e_t_V_per_m_per_V,e_b_V_per_m_per_V,alpha_tb_rad,e_q_V_per_m_per_V\n"));
    let map = std::fs::read_to_string(out.join("map.csv")).unwrap();
    assert!(map.starts_with("step,V_t,V_b,f_GHz,rate_per_us\n"));

    let results = read(&out.join("results.json"));
    for r in results.as_array().unwrap() {
        assert!(r["trace_id"].is_u64());
        assert!(r["unlocated"].is_boolean());
        let w: f64 = r["solutions"].as_array().unwrap().iter().map(|s| s["weight"].as_f64().unwrap()).sum();
        if !r["unlocated"].as_bool().unwrap() && !r["solutions"].as_array().unwrap().is_empty() {
            assert!((w - 1.0).abs() < 1e-9, "{r}");
        }
    }
    let hist = std::fs::read_to_string(out.join("histograms.csv")).unwrap();
    assert!(hist.starts_with("interface,bin_lo_nm,bin_hi_nm,weight\n"));

    let score = read(&out.join("score.json"));
    let planted = score["tunable_planted"].as_u64().unwrap();
    assert!(planted > 0);
    assert!(score["tunable_ratio_ok"].as_u64().unwrap() * 10 >= planted * 8, "{score}");

    let summary = read(&out.join("sweep_summary.json"));
    assert!(summary.is_object());
    let frames = std::fs::read_to_string(out.join("sweep_frames.csv")).unwrap();
    assert_eq!(frames.lines().count(), 1 + 25);

    // Same seed, same artifacts.
    let again = dir.path().join("again");
    for stage in ["simulate-fields", "synth"] {
        assert_eq!(run(stage, &cfg, &again, &["--seed", "3", "--preset", "paper"]).status.code(), Some(0));
    }
    assert_eq!(std::fs::read(out.join("truth.json")).unwrap(), std::fs::read(again.join("truth.json")).unwrap());
    assert_eq!(std::fs::read(out.join("map.csv")).unwrap(), std::fs::read(again.join("map.csv")).unwrap());
}
