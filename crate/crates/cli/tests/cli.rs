use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn kakutani(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kakutani"))
        .args(args)
        .env_remove("KAKUTANI_ALPHA")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn gen(dir: &TempDir, name: &str) -> PathBuf {
    let p = dir.path().join(format!("{name}.json"));
    let o = kakutani(&["gen-fixture", name, "--out", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    p
}

/// Runs `cmd --instance input --out <dir>/<out>` and returns (exit, document).
fn run(dir: &TempDir, cmd: &str, input: &Path, out: &str, extra: &[&str]) -> (i32, Value) {
    let p = dir.path().join(out);
    let mut args = vec![cmd, "--instance", input.to_str().unwrap(), "--out", p.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = kakutani(&args);
    let c = code(&o);
    assert_ne!(c, 1, "{cmd} failed: {}", stderr(&o));
    (c, read(&p))
}

#[test]
fn every_fixture_is_emitted() {
    let dir = TempDir::new().unwrap();
    for (name, kind) in [
        ("constant-ball", "kakutani"),
        ("affine-brouwer", "brouwer"),
        ("quadratic-game", "game"),
        ("gcircuit-2node", "gcircuit"),
        ("symmetric-economy", "economy"),
        ("asymmetric-economy", "economy"),
    ] {
        assert_eq!(read(&gen(&dir, name))["kind"], kind);
    }
    let o = kakutani(&["gen-fixture", "moebius"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("unknown fixture"));
}

#[test]
fn constant_ball_fixed_point_and_check() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "constant-ball");
    let (c, doc) = run(&dir, "solve-kakutani", &inst, "out.json", &[]);
    assert_eq!(c, 0);
    assert_eq!(doc["status"], "fixed_point");
    let (c, chk) = run(&dir, "check", &dir.path().join("out.json"), "chk.json", &[]);
    assert_eq!(c, 0);
    assert_eq!(chk["status"], "verified");
}

#[test]
fn affine_brouwer_residual_is_within_gamma() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "affine-brouwer");
    let (c, doc) = run(&dir, "solve-kakutani", &inst, "out.json", &[]);
    assert_eq!(c, 0);
    let r: f64 = doc["brouwer_residual"].as_str().unwrap().parse().unwrap();
    assert!(r <= 0.2, "{r}");
    assert_eq!(run(&dir, "check", &dir.path().join("out.json"), "chk.json", &[]).0, 0);
}

#[test]
fn convex_utility_with_audit_gives_a_replayable_certificate() {
    let dir = TempDir::new().unwrap();
    let mut doc = read(&gen(&dir, "quadratic-game"));
    doc["game"]["utilities"][0] = json!({"poly": {"dim": 2, "monomials": [{"coeff": "1", "exps": [2, 0]}]}});
    let inst = dir.path().join("convex.json");
    std::fs::write(&inst, doc.to_string()).unwrap();
    let (c, out) = run(&dir, "solve-game", &inst, "out.json", &["--audit", "--seed", "3"]);
    assert_eq!(c, 2);
    assert_eq!(out["status"], "concavity_violation");
    let (c, chk) = run(&dir, "check", &dir.path().join("out.json"), "chk.json", &[]);
    assert_eq!(c, 2);
    assert_eq!(chk["status"], "certificate_replays");
}

#[test]
fn gcircuit_pipeline_replays_within_c() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "gcircuit-2node");
    let (c, game) = run(&dir, "reduce-gcircuit", &inst, "game.json", &[]);
    assert_eq!(c, 0);
    assert_eq!(game["kind"], "game");
    let (c, out) = run(&dir, "solve-game", &dir.path().join("game.json"), "out.json", &[]);
    assert_eq!(c, 0);
    let r: f64 = out["gcircuit_residual"].as_str().unwrap().parse().unwrap();
    assert!(r <= 0.1, "{r}");
    let x: Vec<f64> = out["report"]["x"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().parse().unwrap()).collect();
    // x₂ + ½ is the node vector; the exact solution is (1, ½)
    assert!((x[2] + 0.5 - 1.0).abs() <= 0.1 && (x[3] + 0.5 - 0.5).abs() <= 0.1, "{x:?}");
    let (c, chk) = run(&dir, "check", &dir.path().join("out.json"), "chk.json", &[]);
    assert_eq!(c, 0);
    assert!(chk["detail"].as_str().unwrap().contains("gcircuit_residual"));
}

#[test]
fn symmetric_economy_solves_and_checks() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "symmetric-economy");
    let (c, out) = run(&dir, "solve-walras", &inst, "out.json", &[]);
    assert_eq!(c, 0);
    let p: f64 = out["outcome"]["p"][0].as_str().unwrap().parse().unwrap();
    assert!((p - 0.5).abs() <= 0.05, "{p}");
    assert_eq!(run(&dir, "check", &dir.path().join("out.json"), "chk.json", &[]).0, 0);
}

#[test]
fn outcomes_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    for name in ["constant-ball", "affine-brouwer", "quadratic-game"] {
        let inst = gen(&dir, name);
        let cmd = if name == "quadratic-game" { "solve-game" } else { "solve-kakutani" };
        run(&dir, cmd, &inst, "a.json", &["--workers", "1"]);
        run(&dir, cmd, &inst, "b.json", &["--workers", "1"]);
        let a = std::fs::read(dir.path().join("a.json")).unwrap();
        assert_eq!(a, std::fs::read(dir.path().join("b.json")).unwrap(), "{name}");
    }
}

#[test]
fn berge_audit_passes_and_is_seeded() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let o = kakutani(&["audit-berge", "--pairs", "40", "--seed", "5", "--out", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(read(&a)["status"], "pass");
    assert_eq!(read(&a), read(&b));
    assert_eq!(read(&a)["report"]["pairs"].as_array().unwrap().len(), 40);
}

#[test]
fn schema_errors_carry_a_pointer() {
    let dir = TempDir::new().unwrap();
    let mut doc = read(&gen(&dir, "symmetric-economy"));
    doc["economy"]["endowments"][1] = json!(["1", "-1"]);
    let inst = dir.path().join("bad.json");
    std::fs::write(&inst, doc.to_string()).unwrap();
    let o = kakutani(&["solve-walras", "--instance", inst.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("/economy/endowments"), "{}", stderr(&o));
}

#[test]
fn bad_flags_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "constant-ball");
    let i = inst.to_str().unwrap();
    for args in [
        vec!["solve-kakutani", "--instance", i, "--alpha", "1.5"],
        vec!["solve-kakutani", "--instance", i, "--workers", "0"],
        vec!["solve-kakutani", "--instance", i, "--xi", "0.1"],
        vec!["solve-walras", "--instance", i],
        vec!["solve-kakutani"],
    ] {
        assert_eq!(code(&kakutani(&args)), 1, "{args:?}");
    }
}

#[test]
fn environment_overrides_flags() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "constant-ball");
    let out = dir.path().join("out.json");
    let o = Command::new(env!("CARGO_BIN_EXE_kakutani"))
        .args(["solve-kakutani", "--instance", inst.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .env("KAKUTANI_ALPHA", "0.05")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(read(&out)["alpha"], "0.05");
}
