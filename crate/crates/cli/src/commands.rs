use crate::instance::{fixture, Instance, Overrides, FIXTURES};
use anyhow::{bail, Context, Result};
use kakutani_core::berge::AuditSpec;
use kakutani_core::games::{
    check_equilibrium, detect_concavity_violation, detect_lipschitz_violation, replay_emptiness_at, solve_equilibrium,
    ConcaveGame, EquilibriumReport, GameCertificate, GameOutcome, GameSolveOptions,
};
use kakutani_core::json::{s, J};
use kakutani_core::kakutani::{
    check_fixed_point, replay_lipschitz_cert, solve_with, Correspondence, KakutaniOutcome, Residual, SolveOptions,
};
use kakutani_core::numerics::rational::to_f64;
use kakutani_core::reductions::{brouwer_to_kakutani, gcircuit_to_game, map_back, verify_gcircuit, GCircuitInstance};
use kakutani_core::walras::{check_walras, solve_walras, solver_correspondence, WalrasResult, WalrasSolveOptions};
use serde_json::{json, Value};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Solution,
    Certificate,
    Failed,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Solution => 0,
            Status::Certificate => 2,
            Status::Failed => 1,
        }
    }
}

pub struct Report {
    pub doc: Value,
    pub status: Status,
    pub summary: String,
}

#[derive(Debug, Clone, Default)]
pub struct Settings {
    pub overrides: Overrides,
    pub grid_exp: Option<u32>,
    pub workers: usize,
    pub seed: Option<u64>,
}

impl Settings {
    fn kakutani(&self) -> SolveOptions {
        SolveOptions { window_ell: self.grid_exp, workers: self.workers, ..SolveOptions::default() }
    }
}

fn residual_of(out: &KakutaniOutcome) -> Option<f64> {
    match out {
        KakutaniOutcome::FixedPoint { residual, .. } | KakutaniOutcome::Accepted { residual, .. } => Some(*residual),
        _ => None,
    }
}

pub fn solve_kakutani(inst: Instance, raw: Value, st: &Settings) -> Result<Report> {
    let (f, alpha, brouwer) = match inst {
        Instance::Kakutani { f, alpha } => (f, alpha, None),
        Instance::Brouwer { b, alpha } => (brouwer_to_kakutani(&b)?, alpha, Some(b)),
        other => bail!("solve-kakutani takes a kakutani or brouwer instance, got {}", other.kind()),
    };
    let (out, stats) = solve_with(&f, alpha, &st.kakutani())?;
    let mut doc = json!({
        "command": "solve-kakutani",
        "status": out.tag(),
        "alpha": s(alpha),
        "outcome": out.to_json(),
        "stats": stats.to_json(),
        "instance": raw,
    });
    let mut summary = out.tag().to_string();
    if let Some(r) = residual_of(&out) {
        summary += &format!(" residual={r:.3e}");
    }
    if let (Some(b), KakutaniOutcome::FixedPoint { x, .. }) = (&brouwer, &out) {
        let r = b.residual(x)?;
        doc["brouwer_residual"] = s(r);
        summary += &format!(" brouwer_residual={r:.3e}");
    }
    let status = if out.is_fixed_point() { Status::Solution } else { Status::Certificate };
    Ok(Report { doc, status, summary })
}

fn equilibrium_ok(rep: &EquilibriumReport, game: &ConcaveGame) -> bool {
    rep.feasible && rep.max_regret() <= 3.0 * game.eps && !rep.empty_slice.contains(&true)
}

/// `‖v − M(v)‖∞` at the mapped-back equilibrium, and whether it is within `c`.
fn gcircuit_check(g: &GCircuitInstance, rep: &EquilibriumReport) -> Result<(f64, bool)> {
    let r = verify_gcircuit(g, &map_back(g, rep))?;
    Ok((r, r <= to_f64(&g.c)))
}

fn certificate_report(command: &str, cert: &GameCertificate, raw: Value, extra: Value) -> Report {
    let mut doc = json!({"command": command, "status": cert.tag(), "certificate": cert.to_json(), "instance": raw});
    if let Value::Object(m) = extra {
        doc.as_object_mut().expect("object").extend(m);
    }
    Report { doc, status: Status::Certificate, summary: cert.tag().to_string() }
}

pub fn solve_game(inst: Instance, raw: Value, st: &Settings, audit: Option<usize>) -> Result<Report> {
    let Instance::Game { game, gcircuit } = inst else {
        bail!("solve-game takes a game instance, got {}", inst.kind());
    };
    if let Some(trials) = audit {
        let seed = st.seed.unwrap_or(0);
        let found = match detect_concavity_violation(&game, trials, seed)? {
            Some(c) => Some(c),
            None => detect_lipschitz_violation(&game, trials, seed)?,
        };
        if let Some(cert) = found {
            return Ok(certificate_report("solve-game", &cert, raw, json!({})));
        }
    }
    let opts = GameSolveOptions { kakutani: st.kakutani(), alpha: st.overrides.alpha, ..GameSolveOptions::default() };
    let (out, info) = solve_equilibrium(&game, &opts)?;
    let rep = match out {
        GameOutcome::Equilibrium(rep) => rep,
        GameOutcome::Certificate(cert) => {
            return Ok(certificate_report("solve-game", &cert, raw, json!({"info": info.to_json()})))
        }
    };
    let mut ok = equilibrium_ok(&rep, &game);
    let mut doc = json!({
        "command": "solve-game",
        "report": rep.to_json(),
        "info": info.to_json(),
        "instance": raw,
    });
    let mut summary = format!("max_regret={:.3e} bound={:.3e}", rep.max_regret(), 3.0 * game.eps);
    if let Some(g) = &gcircuit {
        let (r, within) = gcircuit_check(g, &rep)?;
        doc["gcircuit_residual"] = s(r);
        summary += &format!(" gcircuit_residual={r:.3e}");
        ok &= within;
    }
    let tag = if ok { "equilibrium" } else { "unverified" };
    doc["status"] = json!(tag);
    let status = if ok { Status::Solution } else { Status::Failed };
    Ok(Report { doc, status, summary: format!("{tag} {summary}") })
}

pub fn solve_walras_cmd(inst: Instance, raw: Value, st: &Settings) -> Result<Report> {
    let Instance::Economy(econ) = inst else {
        bail!("solve-walras takes an economy instance, got {}", inst.kind());
    };
    let opts = WalrasSolveOptions { kakutani: st.kakutani(), alpha: st.overrides.alpha, ..WalrasSolveOptions::default() };
    let (res, info) = solve_walras(&econ, &opts)?;
    Ok(match res {
        WalrasResult::Equilibrium(out) => {
            let ok = out.passes();
            let status = if ok { "equilibrium" } else { "unverified" };
            let summary = format!(
                "{status} regret={:.3e} clearance={:.3e} p={:?}",
                out.max_regret(),
                out.max_clearance(),
                out.p.iter().map(|t| (t * 1e4).round() / 1e4).collect::<Vec<_>>()
            );
            Report {
                doc: json!({
                    "command": "solve-walras",
                    "status": status,
                    "outcome": out.to_json(),
                    "info": info.to_json(),
                    "instance": raw,
                }),
                status: if ok { Status::Solution } else { Status::Failed },
                summary,
            }
        }
        WalrasResult::Certificate(cert) => Report {
            doc: json!({
                "command": "solve-walras",
                "status": cert.tag(),
                "outcome": cert.to_json(),
                "info": info.to_json(),
                "instance": raw,
            }),
            status: Status::Certificate,
            summary: cert.tag().to_string(),
        },
    })
}

pub fn reduce_gcircuit(inst: Instance) -> Result<Report> {
    let Instance::GCircuit(g) = inst else {
        bail!("reduce-gcircuit takes a gcircuit instance, got {}", inst.kind());
    };
    let game = gcircuit_to_game(&g)?;
    let summary = format!("{} nodes -> 2 players, k={}, epsilon={:.3e}", g.n, game.k(), game.eps);
    Ok(Report {
        doc: json!({"kind": "game", "game": game.to_json(), "gcircuit": g.to_json()}),
        status: Status::Solution,
        summary,
    })
}

pub fn audit_berge(inst: Option<Instance>, st: &Settings, pairs: Option<usize>) -> Result<Report> {
    let mut spec = match inst {
        None => AuditSpec::default(),
        Some(Instance::Berge(spec)) => spec,
        Some(other) => bail!("audit-berge takes a berge instance, got {}", other.kind()),
    };
    if let Some(seed) = st.seed {
        spec.seed = seed;
    }
    if let Some(p) = pairs {
        spec.pairs = p;
    }
    let rep = spec.run(st.workers)?;
    let ok = rep.holder_ok() && rep.value_ok();
    let summary = format!(
        "{} {} pairs max_ratio={:.4} kappa={:.4}",
        if ok { "pass" } else { "fail" },
        rep.pairs.len(),
        rep.max_ratio,
        rep.kappa
    );
    Ok(Report {
        doc: json!({
            "command": "audit-berge",
            "status": if ok { "pass" } else { "fail" },
            "spec": spec.to_json(),
            "report": rep.to_json(),
        }),
        status: if ok { Status::Solution } else { Status::Failed },
        summary,
    })
}

fn kakutani_check(f: &Correspondence, alpha: f64, out: &J) -> Result<(Status, String)> {
    let tag = out.field("type")?.as_str()?;
    match tag {
        "fixed_point" | "accepted" => {
            let x = out.field("x")?.as_vec()?;
            Ok(match check_fixed_point(f, &x, alpha)? {
                Residual::Value { residual, .. } => {
                    let st = if residual <= alpha { Status::Solution } else { Status::Failed };
                    (st, format!("residual={residual:.3e} alpha={alpha:.3e}"))
                }
                Residual::Empty(_) => (Status::Failed, "value at x is empty".into()),
            })
        }
        "empty_cert" => {
            let x = out.field("x")?.as_vec()?;
            Ok(match check_fixed_point(f, &x, alpha)? {
                Residual::Empty(c) if c.holds() => (Status::Certificate, "emptiness replays".into()),
                _ => (Status::Failed, "emptiness does not replay".into()),
            })
        }
        _ => {
            let cert = KakutaniOutcome::from_json(out)?;
            Ok(if replay_lipschitz_cert(f, &cert)? {
                (Status::Certificate, "lipschitz violation replays".into())
            } else {
                (Status::Failed, "lipschitz violation does not replay".into())
            })
        }
    }
}

fn game_check(game: &ConcaveGame, gcircuit: Option<&GCircuitInstance>, doc: &J) -> Result<(Status, String)> {
    if let Some(cj) = doc.opt("certificate") {
        let replays = match cj.field("type")?.as_str()? {
            "almost_emptiness" => replay_emptiness_at(game, &cj.field("x")?.as_vec()?)?,
            _ => GameCertificate::from_json(&cj)?.replay(game)?,
        };
        return Ok(if replays {
            (Status::Certificate, "certificate replays".into())
        } else {
            (Status::Failed, "certificate does not replay".into())
        });
    }
    let x = doc.field("report")?.field("x")?.as_vec()?;
    let rep = check_equilibrium(game, &x, game.eps, game.eta)?;
    let mut ok = equilibrium_ok(&rep, game);
    let mut msg = format!("max_regret={:.3e} bound={:.3e}", rep.max_regret(), 3.0 * game.eps);
    if let Some(g) = gcircuit {
        let (r, within) = gcircuit_check(g, &rep)?;
        ok &= within;
        msg += &format!(" gcircuit_residual={r:.3e} c={}", to_f64(&g.c));
    }
    Ok((if ok { Status::Solution } else { Status::Failed }, msg))
}

/// Re-verifies an outcome document written by one of the solve commands.
pub fn check(doc: &Value) -> Result<Report> {
    let j = J::root(doc);
    let command = j.field("command")?.as_str()?;
    let (inst, _) = Instance::parse(&doc["instance"], &Overrides::default()).context("reading /instance")?;
    let (status, summary) = match (command, inst) {
        ("solve-kakutani", Instance::Kakutani { f, .. }) => {
            kakutani_check(&f, j.field("alpha")?.as_scalar()?, &j.field("outcome")?)?
        }
        ("solve-kakutani", Instance::Brouwer { b, .. }) => {
            let f = brouwer_to_kakutani(&b)?;
            let (st, mut msg) = kakutani_check(&f, j.field("alpha")?.as_scalar()?, &j.field("outcome")?)?;
            if st == Status::Solution {
                msg += &format!(" brouwer_residual={:.3e}", b.residual(&j.field("outcome")?.field("x")?.as_vec()?)?);
            }
            (st, msg)
        }
        ("solve-game", Instance::Game { game, gcircuit }) => game_check(&game, gcircuit.as_ref(), &j)?,
        ("solve-walras", Instance::Economy(econ)) => {
            let out = j.field("outcome")?;
            if j.field("status")?.as_str()? == "equilibrium" || j.field("status")?.as_str()? == "unverified" {
                let p = out.field("p")?.as_vec()?;
                let allocations = out.field("allocations")?.as_matrix()?;
                let rep = check_walras(&econ, &p, &allocations, econ.eps)?;
                let msg = format!("regret={:.3e} clearance={:.3e}", rep.max_regret(), rep.max_clearance());
                (if rep.passes() { Status::Solution } else { Status::Failed }, msg)
            } else {
                let opts = WalrasSolveOptions {
                    alpha: Some(j.field("info")?.field("alpha")?.as_scalar()?),
                    ..WalrasSolveOptions::default()
                };
                let f = solver_correspondence(&econ, &opts);
                let alpha = j.field("info")?.field("kakutani")?.field("epsilon")?.as_scalar()? * 10.0;
                kakutani_check(&f, alpha, &out)?
            }
        }
        (c, inst) => bail!("cannot check a {c:?} outcome on a {} instance", inst.kind()),
    };
    Ok(Report {
        doc: json!({"command": "check", "checked": command, "status": match status {
            Status::Solution => "verified",
            Status::Certificate => "certificate_replays",
            Status::Failed => "rejected",
        }, "detail": summary}),
        status,
        summary,
    })
}

/// Wall time of each solve; the instance, or every catalog fixture.
pub fn bench(inst: Option<(Instance, Value)>, st: &Settings, repeat: usize) -> Result<Report> {
    let jobs: Vec<(String, Value)> = match inst {
        Some((_, raw)) => vec![("instance".into(), raw)],
        None => FIXTURES.iter().map(|n| Ok((n.to_string(), fixture(n)?))).collect::<Result<_>>()?,
    };
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for (name, raw) in jobs {
        let mut times = Vec::new();
        let mut last = Status::Failed;
        for _ in 0..repeat.max(1) {
            let (inst, raw) = Instance::parse(&raw, &st.overrides)?;
            let t = Instant::now();
            let rep = match inst {
                Instance::GCircuit(_) => {
                    let reduced = reduce_gcircuit(inst)?;
                    let (g, raw) = Instance::parse(&reduced.doc, &Overrides::default())?;
                    solve_game(g, raw, st, None)?
                }
                Instance::Kakutani { .. } | Instance::Brouwer { .. } => solve_kakutani(inst, raw, st)?,
                Instance::Game { .. } => solve_game(inst, raw, st, None)?,
                Instance::Economy(_) => solve_walras_cmd(inst, raw, st)?,
                Instance::Berge(_) => audit_berge(Some(inst), st, None)?,
            };
            times.push(t.elapsed().as_secs_f64());
            last = rep.status;
        }
        let best = times.iter().cloned().fold(f64::INFINITY, f64::min);
        lines.push(format!("{name}={best:.2}s"));
        rows.push(json!({"name": name, "seconds": times, "exit": last.exit_code()}));
    }
    let status = if rows.iter().all(|r| r["exit"] != 1) { Status::Solution } else { Status::Failed };
    Ok(Report { doc: json!({"command": "bench", "runs": rows}), status, summary: lines.join(" ") })
}
