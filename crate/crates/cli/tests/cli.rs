use std::path::Path;
use std::process::{Command, Output};

fn coulomb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coulomb"))
        .args(args)
        .env_remove("COULOMB_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn text(out: &[u8]) -> String {
    String::from_utf8_lossy(out).into_owned()
}

const TINY: &str = r#"{
  "manifold": "torus2",
  "n_list": [4, 6],
  "beta_rule": "n2",
  "r_list": [0.1, 0.2, 0.3],
  "chains": 12,
  "sweeps": 30,
  "burn_in": 30,
  "seed": 5,
  "grid_resolution": 16,
  "fitted_c": 1.5
}"#;

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn invalid_manifold_is_a_usage_error() {
    let out = coulomb(&["kernel-table", "--manifold", "klein", "--t", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    for id in ["torus2", "torus3", "sphere2"] {
        assert!(err.contains(id), "{err}");
    }
}

#[test]
fn kernel_table_rows() {
    let out = coulomb(&["kernel-table", "--manifold", "torus2", "--t", "0.01,0.1,10", "--random-pairs", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = text(&out.stdout);
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert!(header.contains(&"mass"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 6);
    for row in rows.iter().filter(|r| r[0] == "10") {
        let p: f64 = row[3].parse().unwrap();
        assert!((p - 1.0).abs() <= 1e-10);
    }
}

#[test]
fn corrupted_eigen_table_fails_semigroup() {
    let dir = tempfile::tempdir().unwrap();
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_coulomb"))
            .args(["verify", "--suite", "spectral", "--manifold", "torus2"])
            .env("COULOMB_CACHE_DIR", dir.path())
            .output()
            .unwrap()
    };
    // first run populates the cache and passes
    assert_eq!(run().status.code(), Some(0));
    let table = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "spec1"))
        .expect("table written");
    let mut bytes = std::fs::read(&table).unwrap();
    // header: 5 magic bytes, two u32; scale every nonzero eigenvalue
    for chunk in bytes[13..].chunks_mut(8) {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        chunk.copy_from_slice(&(v * 1.3).to_le_bytes());
    }
    std::fs::write(&table, bytes).unwrap();
    let out = run();
    assert_eq!(out.status.code(), Some(1));
    let all = text(&out.stdout) + &text(&out.stderr);
    assert!(all.contains("FAIL") && all.contains("semigroup"), "{all}");
}

#[test]
fn experiment_is_deterministic_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = coulomb(&["experiment", "--config", &cfg, "-o", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    }
    let csv_a = std::fs::read(a.join("results.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("results.csv")).unwrap());
    assert_eq!(text(&csv_a).lines().count(), 1 + 2 * 3);
    assert!(a.join("plot.gp").exists() && a.join("rates.csv").exists());

    // drop one cell checkpoint as if the run had been interrupted
    std::fs::remove_file(a.join("cells/cell-001.json")).unwrap();
    let o = coulomb(&["experiment", "--config", &cfg, "-o", a.to_str().unwrap(), "--resume"]);
    assert_eq!(o.status.code(), Some(0));
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["cells_resumed"], serde_json::json!([0]));
    assert_eq!(manifest["cells_run"], serde_json::json!([1]));
    assert_eq!(std::fs::read(a.join("results.csv")).unwrap(), csv_a);
    let listed: Vec<&str> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["path"].as_str().unwrap())
        .collect();
    for name in ["results.csv", "rates.csv", "plot.gp", "cells/cell-000.json", "cells/cell-001.json"] {
        assert!(listed.contains(&name), "{name} missing from manifest");
    }
}

#[test]
fn resume_ignores_checkpoints_from_another_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("o");
    assert_eq!(coulomb(&["experiment", "--config", &cfg, "-o", out.to_str().unwrap()]).status.code(), Some(0));
    let cfg = write_config(dir.path(), &TINY.replace("\"seed\": 5", "\"seed\": 6"));
    let o = coulomb(&["experiment", "--config", &cfg, "-o", out.to_str().unwrap(), "--resume"]);
    assert_eq!(o.status.code(), Some(0));
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["cells_resumed"], serde_json::json!([]));
}

#[test]
fn config_errors_report_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("\"chains\": 12", "\"chains\": -3"));
    let o = coulomb(&["experiment", "--config", &cfg, "-o", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("chains"), "{}", text(&o.stderr));
    let cfg = write_config(dir.path(), &TINY.replace("\"n2\"", "\"n3\""));
    let o = coulomb(&["experiment", "--config", &cfg, "-o", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("beta_rule"), "{}", text(&o.stderr));
}

#[test]
fn transport_two_point_example() {
    let dir = tempfile::tempdir().unwrap();
    let mu = dir.path().join("mu.json");
    let nu = dir.path().join("nu.json");
    std::fs::write(&mu, r#"{"manifold": "torus2", "coords": [[0, 0], [0.5, 0]], "weights": [0.5, 0.5]}"#).unwrap();
    std::fs::write(&nu, r#"{"coords": [[0.25, 0], [0.75, 0]], "weights": [0.5, 0.5]}"#).unwrap();
    let plan = dir.path().join("plan.csv");
    let o = coulomb(&[
        "transport",
        "--mu",
        mu.to_str().unwrap(),
        "--nu",
        nu.to_str().unwrap(),
        "--manifold",
        "torus2",
        "--plan",
        plan.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let w: f64 = text(&o.stdout).lines().next().unwrap().split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((w - 0.25).abs() < 1e-12);
    let plan = std::fs::read_to_string(plan).unwrap();
    assert_eq!(plan.lines().next(), Some("source,sink,mass"));
    assert_eq!(plan.lines().count(), 3);
}

#[test]
fn sample_checkpoint_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("ck.json");
    let ck2 = dir.path().join("ck2.json");
    let o = coulomb(&[
        "sample", "--manifold", "sphere2", "--n", "6", "--beta", "36", "--sweeps", "20", "--burn-in", "20", "-o",
        ck.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let o = coulomb(&["sample", "--resume", ck.to_str().unwrap(), "--sweeps", "10", "-o", ck2.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ck2).unwrap()).unwrap();
    assert_eq!(v["sweeps"], 50);
    assert_eq!(v["manifold"], "sphere2");
    assert_eq!(v["points"].as_array().unwrap().len(), 6);
}

#[test]
fn equilibrium_reports_entropy() {
    let o = coulomb(&[
        "equilibrium",
        "--manifold",
        "torus2",
        "--potential",
        r#"{"type": "cosine", "amplitude": 0.012665147955292222}"#,
        "--resolution",
        "32",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let out = text(&o.stdout);
    let entropy: f64 = out.lines().next().unwrap().split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!(entropy > 0.06 && entropy < 0.07, "{out}");
    let o = coulomb(&["equilibrium", "--manifold", "sphere2", "--potential", r#"{"type": "cosine", "amplitude": 1}"#]);
    assert_eq!(o.status.code(), Some(2));
}
