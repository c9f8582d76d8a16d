use absorption_lab::harness::{run, Experiment, ExperimentConfig, Manifest};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::process::Command;

fn lab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_absorb-lab"))
}

fn status(args: &[&str]) -> i32 {
    lab().args(args).output().unwrap().status.code().unwrap()
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(status(&["classify", "-f", "u*ln(u+1)^3", "-o", out]), 0);
    assert_eq!(status(&["classify", "-f", "u^^2", "-o", out]), 2);
    assert_eq!(status(&["classify", "-f", "u^2", "-o", out, "-s", "N=0"]), 2);
    assert_eq!(status(&["nonunique", "-f", "u^2", "-o", out]), 3);
    assert_eq!(status(&["minmax", "-f", "u*ln(u+1)^1.5", "-o", out]), 3);
    // u^2 is not admissible as k δ₀ data in N = 3
    assert_eq!(status(&["dirac", "-f", "u^2", "-o", out]), 3);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("flow.toml");
    std::fs::write(
        &cfg,
        "experiment = \"flow\"\nnonlinearity = \"u^2\"\nN = 3\n[params]\nsamples = 5\na = [1.0]\n",
    )
    .unwrap();
    let out = dir.path().join("run");
    let code = lab()
        .args(["--config", cfg.to_str().unwrap(), "-o", out.to_str().unwrap(), "-s", "samples=7"])
        .status()
        .unwrap()
        .code();
    assert_eq!(code, Some(0));
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let csv = manifest.files.iter().find(|f| f.file == "flow.csv").unwrap();
    assert_eq!(csv.rows, Some(7));
    check_hashes(&out, &manifest);
}

fn check_hashes(dir: &Path, m: &Manifest) {
    for f in &m.files {
        let bytes = std::fs::read(dir.join(&f.file)).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&bytes)), f.sha256, "{}", f.file);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let mut cfg = ExperimentConfig::new(Experiment::Dirac, "u*ln(u+1)^3", 3);
    for kv in ["k=100", "t0=1e-4", "T=0.3", "t_min=1e-2", "samples=3", "rtol=1e-4", "nodes=300"] {
        cfg.apply_override(kv).unwrap();
    }
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = run(&cfg, Some(a.path())).unwrap();
    let mb = run(&cfg, Some(b.path())).unwrap();
    assert!(ma.ok(), "{:?}", ma.postconditions);
    assert_eq!(ma.files, mb.files);
    check_hashes(a.path(), &ma);
    let text = std::fs::read_to_string(a.path().join("field.csv")).unwrap();
    let first = text.lines().nth(1).unwrap();
    // 17 significant digits
    assert!(first.split(',').all(|x| x.contains("e") && x.split('e').next().unwrap().len() == 18), "{first}");
}

#[test]
fn regimes_skip_ladder_for_inadmissible_powers() {
    let mut cfg = ExperimentConfig::new(Experiment::Regimes, "", 3);
    cfg.apply_override("family=power").unwrap();
    cfg.apply_override("params=[2.0, 3.0, 4.0]").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let m = run(&cfg, Some(dir.path())).unwrap();
    let rows: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("regimes.json")).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    // β ≥ 2/N: k δ₀ is not admissible, so no ladder
    assert!(rows.iter().all(|r| r["ladder"].is_null() && r["admissible"] == false));
    assert!(m.ok());
}
