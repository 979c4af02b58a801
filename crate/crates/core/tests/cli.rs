use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kfssi::io::read_factor;
use serde_json::Value;
use tempfile::TempDir;

fn kfssi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kfssi")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = kfssi(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(args: &[&str]) -> i32 {
    kfssi(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Three two-minute datasets from seed 40.
fn simulated() -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sim");
    ok(&["simulate", "--out", s(&out), "--seed", "40", "--datasets", "3", "--duration", "120"]);
    (dir, out)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn mode_freqs(report: &Value) -> Vec<f64> {
    report["interpretation"]["modes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["frequency"].as_f64().unwrap())
        .collect()
}

#[test]
fn simulate_is_deterministic() {
    let (dir, a) = simulated();
    let b = dir.path().join("again");
    ok(&["simulate", "--out", s(&b), "--seed", "40", "--datasets", "3", "--duration", "120"]);
    for i in 0..3 {
        let name = format!("dataset_{i:02}.csv");
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
    }
    let truth = json(&a.join("truth.json"));
    assert_eq!(truth["modes"]["mode_count"], 3);
    assert_eq!(truth["seeds"], serde_json::json!([40, 41, 42]));
    assert!(fs::read_to_string(a.join("manifest.csv")).unwrap().starts_with("path,group\n"));
}

#[test]
fn zero_duration_is_invalid_input() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&["simulate", "--out", s(dir.path()), "--duration", "0"]), 2);
}

#[test]
fn every_algorithm_finds_the_first_mode() {
    let (dir, sim) = simulated();
    let truth = json(&sim.join("truth.json"));
    let f1 = truth["modes"]["frequencies"][0].as_f64().unwrap();
    let d0 = sim.join("dataset_00.csv");
    for alg in ["ssi", "kfssi", "mlsce"] {
        let out = dir.path().join(alg);
        ok(&["identify", "--algorithm", alg, "--input", s(&d0), "--out", s(&out)]);
        let report = json(&out.join("interpretation.json"));
        assert_eq!(report["algorithm"], alg);
        let freqs = mode_freqs(&report);
        // plain SSI is free to lock onto harmonic lines here
        if alg != "ssi" {
            assert!(freqs.iter().any(|f| (f - f1).abs() < 0.02 * f1), "{alg}: {freqs:?}");
        }
        for file in ["stabilization.csv", "spectrum.csv"] {
            assert!(out.join(file).exists(), "{alg}: missing {file}");
        }
    }
    let out = dir.path().join("enhanced");
    ok(&["identify", "--algorithm", "enhanced-kfssi", "--manifest", s(&sim.join("manifest.csv")), "--out", s(&out)]);
    assert!(out.join("factor.txt").exists());
    let freqs = mode_freqs(&json(&out.join("interpretation.json")));
    assert!(freqs.iter().any(|f| (f - f1).abs() < 0.02 * f1));
}

#[test]
fn plain_algorithms_take_one_dataset() {
    let (_dir, sim) = simulated();
    let (a, b) = (sim.join("dataset_00.csv"), sim.join("dataset_01.csv"));
    assert_eq!(code(&["identify", "--input", s(&a), "--input", s(&b), "--out", s(&sim)]), 2);
}

#[test]
fn factor_chaining_matches_one_pass() {
    let (dir, sim) = simulated();
    let d: Vec<PathBuf> = (0..3).map(|i| sim.join(format!("dataset_{i:02}.csv"))).collect();
    let (first, chained, direct) = (dir.path().join("f01.txt"), dir.path().join("f012.txt"), dir.path().join("all.txt"));
    let out = dir.path().join("o");
    let enh = ["identify", "--algorithm", "enhanced-kfssi", "--out", s(&out)];
    ok(&[&enh[..], &["--input", s(&d[0]), "--input", s(&d[1]), "--factor-out", s(&first)]].concat());
    ok(&[&enh[..], &["--input", s(&d[2]), "--factor-in", s(&first), "--factor-out", s(&chained)]].concat());
    ok(&[&enh[..], &["--manifest", s(&sim.join("manifest.csv")), "--factor-out", s(&direct)]].concat());
    let (a, b) = (read_factor(&chained).unwrap(), read_factor(&direct).unwrap());
    assert!((a.l() - b.l()).amax() < 1e-9 * b.l().amax());
    assert_eq!(a.meta.sample_count, b.meta.sample_count);
}

#[test]
fn aggregate_needs_three_datasets() {
    let (dir, _sim) = simulated();
    let manifest = dir.path().join("two.csv");
    fs::write(&manifest, "path\nsim/dataset_00.csv\nsim/dataset_01.csv\n").unwrap();
    assert_eq!(code(&["aggregate", "--manifest", s(&manifest), "--out", s(&dir.path().join("agg"))]), 2);
}

#[test]
fn identical_datasets_have_zero_spread() {
    let (dir, _sim) = simulated();
    let manifest = dir.path().join("same.csv");
    fs::write(&manifest, "path\nsim/dataset_00.csv\nsim/dataset_00.csv\nsim/dataset_00.csv\n").unwrap();
    let out = dir.path().join("agg");
    ok(&["aggregate", "--manifest", s(&manifest), "--algorithms", "kfssi", "--out", s(&out)]);
    let mut r = csv::Reader::from_path(out.join("box_stats.csv")).unwrap();
    let h = r.headers().unwrap().clone();
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert!(!rows.is_empty());
    for row in rows {
        assert_eq!(row[col("freq_q1")], row[col("freq_q3")]);
        assert_eq!(row[col("damp_min")], row[col("damp_max")]);
        assert_eq!(&row[col("n")], "3");
    }
}

#[test]
fn manifest_groups_aggregate_separately() {
    let (dir, _sim) = simulated();
    let manifest = dir.path().join("groups.csv");
    let mut text = String::from("path,group\n");
    for g in ["low", "high"] {
        for i in 0..3 {
            text.push_str(&format!("sim/dataset_{i:02}.csv,{g}\n"));
        }
    }
    fs::write(&manifest, text).unwrap();
    let out = dir.path().join("agg");
    ok(&["aggregate", "--manifest", s(&manifest), "--out", s(&out)]);
    let rows = json(&out.join("aggregate.json"));
    let keys: Vec<(String, String)> = rows
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r["group"].as_str().unwrap().into(), r["algorithm"].as_str().unwrap().into()))
        .collect();
    let k = |g: &str, a: &str| (g.to_string(), a.to_string());
    assert_eq!(
        keys,
        [k("high", "kfssi"), k("high", "enhanced-kfssi"), k("low", "kfssi"), k("low", "enhanced-kfssi")]
    );
}

#[test]
fn idling_rotor_cannot_supply_harmonics() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("idle.json");
    fs::write(
        &cfg,
        r#"{"sim": {"datasets": 1, "excitation": {"noise_std": 1.0, "harmonics": null, "duration": 60.0, "rate": 25.0, "seed": 3}}}"#,
    )
    .unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&sim)]);
    let d0 = sim.join("dataset_00.csv");
    assert_eq!(code(&["identify", "--input", s(&d0), "--out", s(&sim)]), 5);
    assert_eq!(code(&["localize", "--input", s(&d0), "--out", s(&sim)]), 5);
}

#[test]
fn localize_uses_the_requested_multipliers() {
    let (_dir, sim) = simulated();
    let out = sim.join("loc");
    ok(&["localize", "--input", s(&sim.join("dataset_00.csv")), "--multipliers", "1,3,6,9,12", "--out", s(&out)]);
    let set = json(&out.join("harmonics.json"));
    assert_eq!(set["labels"], serde_json::json!(["1P", "3P", "6P", "9P", "12P"]));
    let summary = json(&out.join("localize.json"));
    assert_eq!(summary["method"], "rotor");
    assert!(!out.join("kurtosis.csv").exists());
}

#[test]
fn localize_indicators_write_curves_and_verdicts() {
    let (_dir, sim) = simulated();
    let out = sim.join("loc");
    ok(&["localize", "--input", s(&sim.join("dataset_00.csv")), "--indicators", "--out", s(&out)]);
    let k = fs::read_to_string(out.join("kurtosis.csv")).unwrap();
    assert!(k.starts_with("freq,value,kind\n"));
    assert!(out.join("entropy.csv").exists());
    let summary = json(&out.join("localize.json"));
    assert_eq!(summary["kurtosis_verdicts"].as_array().unwrap().len(), 10);
}

#[test]
fn unknown_config_file_is_an_io_error() {
    assert_eq!(code(&["simulate", "--config", "/nonexistent/cfg.json"]), 3);
}

#[test]
fn normalize_divides_reported_frequencies() {
    let (dir, sim) = simulated();
    let d0 = sim.join("dataset_00.csv");
    let (a, b) = (dir.path().join("hz"), dir.path().join("norm"));
    ok(&["identify", "--input", s(&d0), "--out", s(&a)]);
    ok(&["identify", "--input", s(&d0), "--normalize", "12.5", "--out", s(&b)]);
    let (hz, norm) = (mode_freqs(&json(&a.join("interpretation.json"))), mode_freqs(&json(&b.join("interpretation.json"))));
    assert_eq!(hz.len(), norm.len());
    for (h, n) in hz.iter().zip(&norm) {
        assert!((h / 12.5 - n).abs() < 1e-12);
    }
    assert_eq!(code(&["identify", "--input", s(&d0), "--normalize", "0", "--out", s(&b)]), 2);
}
