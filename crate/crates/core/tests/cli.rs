mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dsp_slp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsp-slp"))
        .args(args)
        .env_remove("DSP_SLP_SEED")
        .output()
        .expect("binary runs")
}

fn corpus(name: &str) -> String {
    common::corpus_dir().join(format!("{name}.sir")).display().to_string()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn pack_writes_ir_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mvm.sir");
    let json = dir.path().join("stats.json");
    let o = dsp_slp(&["pack", &corpus("mvm"), "--passes", "muladd:8", "-o", path(&out), "--stats-json", path(&json)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("units 64 -> 32, density 2.00"), "{}", stdout(&o));
    let packed = fs::read_to_string(&out).unwrap();
    assert!(packed.contains("@silvia.mad2x8.chain"));
    let stats: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(stats["units_before"], 64);
    assert_eq!(stats["units_after"], 32);
    assert_eq!(stats["passes"][0]["pass"], "muladd:8");
}

#[test]
fn pack_without_output_prints_ir() {
    let o = dsp_slp(&["pack", &corpus("shared_factor"), "--passes", "muladd:8"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("func @shared_factor"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("density"));
}

#[test]
fn empty_kernel_reports_na() {
    let o = dsp_slp(&["pack", &corpus("empty"), "--passes", "add:12"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("density n/a"));
}

#[test]
fn parse_error_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.sir");
    fs::write(&bad, "func @f( {\n").unwrap();
    assert_eq!(dsp_slp(&["pack", path(&bad), "--passes", "add:12"]).status.code(), Some(1));
    assert_eq!(dsp_slp(&["ddg", path(&bad)]).status.code(), Some(1));
    let missing = dir.path().join("missing.sir");
    assert_eq!(dsp_slp(&["verify", path(&missing), path(&missing)]).status.code(), Some(1));
}

#[test]
fn bad_config_exits_2() {
    let k = corpus("mvm");
    assert_eq!(dsp_slp(&["pack", &k, "--passes", "add:16"]).status.code(), Some(2));
    assert_eq!(dsp_slp(&["pack", &k, "--passes", ","]).status.code(), Some(2));
    assert_eq!(dsp_slp(&["pack", &k, "--passes", "muladd:8", "--max-chain-len", "0"]).status.code(), Some(2));
}

#[test]
fn verify_self_and_mutant() {
    let k = corpus("mvm");
    let o = dsp_slp(&["verify", &k, &k, "--trials", "50", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("(seed 3)"));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mvm.packed.sir");
    assert!(dsp_slp(&["pack", &k, "--passes", "muladd:8", "-o", path(&out)]).status.success());
    // Swap the two lanes read out of the first packed call.
    let text = fs::read_to_string(&out).unwrap();
    let (l0, l1) = (", 0\n", ", 1\n");
    let first0 = text.find(l0).unwrap();
    let first1 = text.find(l1).unwrap();
    let mut bytes = text.into_bytes();
    bytes[first0 + 2] = b'1';
    bytes[first1 + 2] = b'0';
    let mutant = dir.path().join("mutant.sir");
    fs::write(&mutant, bytes).unwrap();
    let o = dsp_slp(&["verify", &k, path(&mutant), "--trials", "100"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).contains("NOT equivalent; counterexample:"));
}

#[test]
fn verify_seed_from_environment() {
    let k = corpus("vadd");
    let o = Command::new(env!("CARGO_BIN_EXE_dsp-slp"))
        .args(["verify", &k, &k, "--trials", "10"])
        .env("DSP_SLP_SEED", "99")
        .output()
        .unwrap();
    assert!(stdout(&o).contains("(seed 99)"));
}

#[test]
fn verify_signature_mismatch_exits_2() {
    let o = dsp_slp(&["verify", &corpus("scal"), &corpus("axpy")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ddg_reports_raise() {
    let o = dsp_slp(&["ddg", &corpus("recurrence")]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.starts_with("minII=2 critical cycle:"), "{s}");
    assert!(s.contains("pack{a,b} → minII=3 II-RAISED [muladd:8]"), "{s}");

    let o = dsp_slp(&["ddg", &corpus("recurrence"), "--latency", "mul=3"]);
    assert!(stdout(&o).starts_with("minII=4"), "{}", stdout(&o));
    assert_eq!(dsp_slp(&["ddg", &corpus("recurrence"), "--latency", "mul"]).status.code(), Some(2));
}

#[test]
fn ddg_zero_distance_cycle_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("zero.sir");
    fs::write(
        &f,
        "func @z(%x: i8) {\n  %a = add i8 %x, %x\n  %b = add i8 %a, %x\n}\n;; carried %b -> %a distance 0\n",
    )
    .unwrap();
    assert_eq!(dsp_slp(&["ddg", path(&f)]).status.code(), Some(5));
}
