use std::fs;
use std::path::Path;
use std::process::Command;

fn lab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sinr-lab"))
}

fn config(name: &str) -> String {
    format!("{}/../../configs/{name}.toml", env!("CARGO_MANIFEST_DIR"))
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn runs_are_reproducible_and_replayable() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for out in [&a, &b] {
        let st = lab()
            .args(["scgf", "--config", &config("scgf"), "--seed", "9", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(st.success());
    }
    assert_eq!(read(&a, "report.csv"), read(&b, "report.csv"));
    let st = lab().arg("replay").arg("--manifest").arg(a.join("manifest.json")).arg("--out").arg(&c).output().unwrap().status;
    assert!(st.success());
    assert_eq!(read(&a, "report.csv"), read(&c, "report.csv"));
    let manifest = String::from_utf8(read(&a, "manifest.json")).unwrap();
    assert!(manifest.contains("\"seed_root\": 9"), "{manifest}");
}

#[test]
fn malformed_config_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "seed_root = 1\n[model]\ndomain = { bounds = [[0, 1]] }\npower_rate = 1.0\npathloss_exponent = 3.0\nnoise = 1.0\n").unwrap();
    let out = lab().arg("aep").arg("--config").arg(&bad).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda_grid"));

    fs::write(&bad, "lambda_grid = [4, 2]\n[model]\ndomain = { bounds = [[0, 1]] }\npower_rate = 1.0\npathloss_exponent = 3.0\nnoise = 1.0\n").unwrap();
    let out = lab().arg("aep").arg("--config").arg(&bad).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mismatched_experiment_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("experiment = \"aep\"\n{}", fs::read_to_string(config("mcmillan")).unwrap());
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, text).unwrap();
    let st = lab().arg("mcmillan").arg("--config").arg(&cfg).arg("--out").arg(tmp.path().join("o")).output().unwrap().status;
    assert_eq!(st.code(), Some(2));
}

#[test]
fn mcmillan_writes_the_oracle_record() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("m");
    let st = lab().args(["mcmillan", "--config", &config("mcmillan"), "--out"]).arg(&out).output().unwrap().status;
    assert!(st.success());
    let oracle: serde_json::Value = serde_json::from_slice(&read(&out, "oracle.json")).unwrap();
    let rec = &oracle[0];
    assert_eq!(rec["count"], 12870);
    assert_eq!(rec["instance_hash"].as_str().unwrap().len(), 64);
    let csv = String::from_utf8(read(&out, "report.csv")).unwrap();
    assert!(csv.starts_with("lambda,value,stderr,hits,ess,target"));
}

#[test]
fn generate_writes_parseable_networks() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("g");
    let st = lab().args(["generate", "--config", &config("generate"), "--out"]).arg(&out).output().unwrap().status;
    assert!(st.success());
    for k in 0..3 {
        let text = fs::read_to_string(out.join(format!("network_{k}.txt"))).unwrap();
        sinr_core::model::parse_network(&text).unwrap();
    }
}
