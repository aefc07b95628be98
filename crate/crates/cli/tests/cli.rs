use std::path::Path;
use std::process::Command;

use pxfb_cli::artifacts::{read_csv, Table, RECORD_FILE};
use pxfb_cli::config::{load_config, parse_json, parse_toml};
use pxfb_cli::{execute, read_record, replot, verify};

const BIN: &str = env!("CARGO_BIN_EXE_pxfb");

const FLATNESS: &str = r#"
kind = "flatness_iteration"
seed = 3

[grid]
dim = 2
lower = -1.0
upper = 1.0
cells = 128

[exponent]
kind = "affine"
p_c = 2.0
slope = [0.1, 0.0]

[solver]
tolerance = 1e-10
delta = 1e-7

[params]
source = "paraboloid"
curvature = 0.2
rbar = 0.5
steps = 3
resampling = "lattice"
"#;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn pxfb(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

#[test]
fn full_config_is_echoed_in_the_record() {
    let tmp = tempfile::tempdir().unwrap();
    let config = parse_toml(FLATNESS).unwrap();
    let (dir, record) = execute(&config, Some(tmp.path()));
    let record = record.unwrap();
    assert_eq!(record.config, config);
    assert_eq!(record.config.solver.delta, 1e-7);
    assert_eq!(record.config.params["curvature"], 0.2);
    let reread = load_config(&dir.unwrap().join("config.json")).unwrap();
    assert_eq!(reread, config);
}

#[test]
fn every_listed_artifact_exists() {
    let tmp = tempfile::tempdir().unwrap();
    let (dir, record) = execute(&parse_toml(FLATNESS).unwrap(), Some(tmp.path()));
    let (dir, record) = (dir.unwrap(), record.unwrap());
    assert!(record.artifacts.iter().any(|a| a.ends_with(".svg")));
    for a in &record.artifacts {
        assert!(dir.join(a).exists(), "{a} missing");
    }
    let (headers, rows) = read_csv(&dir.join("trace.csv")).unwrap();
    assert_eq!(headers[..3], ["k", "rho", "eps"]);
    assert_eq!(rows.len(), 4);
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("schema.json")).unwrap()).unwrap();
    assert_eq!(schema["tables"]["trace.csv"][2]["name"], "eps");
}

#[test]
fn run_id_ignores_the_output_root() {
    let a = parse_toml(FLATNESS).unwrap();
    let mut b = a.clone();
    b.output = "elsewhere".into();
    assert_eq!(pxfb_cli::artifacts::run_id(&a).unwrap(), pxfb_cli::artifacts::run_id(&b).unwrap());
    b.seed += 1;
    assert_ne!(pxfb_cli::artifacts::run_id(&a).unwrap(), pxfb_cli::artifacts::run_id(&b).unwrap());
}

#[test]
fn json_config_runs_like_toml() {
    let toml = parse_toml(FLATNESS).unwrap();
    let json = parse_json(&serde_json::to_string(&toml).unwrap()).unwrap();
    assert_eq!(toml, json);
}

#[test]
fn verify_and_replot_a_stored_run() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "kind = \"norm_suite\"\nseed = 2\n[grid]\ndim = 2\ncells = 8\n[params]\nsamples = 20\n";
    let (dir, record) = execute(&parse_toml(text).unwrap(), Some(tmp.path()));
    let dir = dir.unwrap();
    assert_eq!(record.unwrap().status, "ok");
    assert_eq!(verify(&dir).unwrap().metrics["bracket_passes"], 20);
    std::fs::remove_dir_all(dir.join("plots")).unwrap();
    let (written, _) = replot(&dir).unwrap();
    assert_eq!(written.len(), 1);
    assert!(dir.join(&written[0]).exists());
}

#[test]
fn tampered_record_fails_verification() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "kind = \"norm_suite\"\n[grid]\ndim = 1\ncells = 8\n[params]\nsamples = 10\n";
    let (dir, _) = execute(&parse_toml(text).unwrap(), Some(tmp.path()));
    let dir = dir.unwrap();
    let mut record = read_record(&dir).unwrap();
    record.metrics.insert("bracket_passes".into(), 9.into());
    std::fs::write(dir.join(RECORD_FILE), serde_json::to_string(&record).unwrap()).unwrap();
    assert_eq!(verify(&dir).unwrap_err().exit_code(), 4);
}

#[test]
fn empty_table_gives_a_note_and_no_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "kind = \"norm_suite\"\n[grid]\ndim = 1\ncells = 8\n[params]\nsamples = 3\n";
    let (dir, _) = execute(&parse_toml(text).unwrap(), Some(tmp.path()));
    let dir = dir.unwrap();
    std::fs::remove_dir_all(dir.join("plots")).unwrap();
    let (_, rows) = read_csv(&dir.join("norms.csv")).unwrap();
    assert_eq!(rows.len(), 3);
    Table::new("norms", &[("sample", ""), ("modular", ""), ("norm", "")]).write(&dir).unwrap();
    let (written, notes) = replot(&dir).unwrap();
    assert!(written.is_empty());
    assert_eq!(notes, ["table norms is empty; no plot"]);
}

#[test]
fn binary_runs_and_echoes_the_normalized_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "e.toml", "kind = \"energy_benchmark\"\n[grid]\ndim = 1\nlower = 0.0\nupper = 1.0\ncells = 64\n[params]\na = 0.5\nq = 1.0\n");
    let out = pxfb(&["--out", tmp.path().join("runs").to_str().unwrap(), "--threads", "2", "run", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let (echo, summary) = stdout.split_once("status: ").unwrap();
    let echoed = parse_toml(echo).unwrap();
    assert_eq!((echoed.solver.tolerance, echoed.solver.delta), (1e-9, 1e-8));
    assert!(summary.starts_with("ok") && summary.contains("x_star_expected = 0.5"));
}

#[test]
fn seed_flag_overrides_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "n.toml", "kind = \"norm_suite\"\nseed = 1\n[grid]\ndim = 1\ncells = 4\n[params]\nsamples = 5\n");
    let runs = tmp.path().join("runs");
    for seed in ["7", "8"] {
        assert!(pxfb(&["--out", runs.to_str().unwrap(), "--seed", seed, "run", cfg.to_str().unwrap()]).status.success());
    }
    let seeds: Vec<u64> = std::fs::read_dir(&runs)
        .unwrap()
        .map(|e| read_record(&e.unwrap().path()).unwrap().config.seed)
        .collect();
    assert_eq!(seeds.len(), 2);
    assert!(seeds.contains(&7) && seeds.contains(&8));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("runs");
    let out = out_dir.to_str().unwrap();
    let bad = write(tmp.path(), "bad.toml", "kind = \"norm_suite\"\n[grid]\ncells = 4\n[exponent]\nkind = \"constant\"\np0 = 0.9\n");
    let o = pxfb(&["--out", out, "run", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("1 < p_min"));

    let missing = write(tmp.path(), "m.toml", "kind = \"energy_benchmark\"\n[grid]\ncells = 4\n");
    let o = pxfb(&["--out", out, "run", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("a, q"));

    let slow = write(
        tmp.path(),
        "slow.toml",
        "kind = \"dirichlet_benchmark\"\n[grid]\ndim = 1\ncells = 256\n[solver]\nmax_iterations = 3\nnested_start = false\n[params]\ncase = \"oned_p3\"\n",
    );
    let o = pxfb(&["--out", out, "run", slow.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let dir = std::fs::read_dir(&out_dir).unwrap().next().unwrap().unwrap().path();
    let record = read_record(&dir).unwrap();
    assert_eq!(record.status, "failed");
    assert!(record.partial);

    let o = pxfb(&["verify", tmp.path().join("nowhere").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn identical_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let config = parse_toml(FLATNESS).unwrap();
    let (da, _) = execute(&config, Some(a.path()));
    let (db, _) = execute(&config, Some(b.path()));
    let (da, db) = (da.unwrap(), db.unwrap());
    let mut names: Vec<_> = std::fs::read_dir(&da).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in names {
        let pa = da.join(&name);
        if pa.is_dir() || name == "timing.txt" {
            continue;
        }
        assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(db.join(&name)).unwrap(), "{name:?}");
    }
}
