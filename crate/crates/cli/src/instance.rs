//! Instance files: a `"kind"` tag plus the payload of one solver.

use anyhow::{bail, Context, Result};
use kakutani_core::berge::AuditSpec;
use kakutani_core::bodies::{BodySpec, WellBounded};
use kakutani_core::games::{ConcaveGame, Utility};
use kakutani_core::json::{s, J};
use kakutani_core::kakutani::{Conditioning, Correspondence, MapTemplate, Mode};
use kakutani_core::numerics::rational::rat;
use kakutani_core::numerics::Polynomial;
use kakutani_core::reductions::{BrouwerInstance, GCircuitInstance};
use kakutani_core::walras::ExchangeEconomy;
use serde_json::{json, Value};
use std::path::Path;

pub const FIXTURES: [&str; 6] =
    ["constant-ball", "affine-brouwer", "quadratic-game", "gcircuit-2node", "symmetric-economy", "asymmetric-economy"];

pub enum Instance {
    Kakutani { f: Correspondence, alpha: f64 },
    /// Solved through `F(x) = B̄(M(x), γ/2)`; `alpha` defaults to `γ/2`.
    Brouwer { b: BrouwerInstance, alpha: f64 },
    /// `gcircuit` is set when the game came out of `reduce-gcircuit`.
    Game { game: ConcaveGame, gcircuit: Option<GCircuitInstance> },
    GCircuit(GCircuitInstance),
    Economy(ExchangeEconomy),
    Berge(AuditSpec),
}

/// Command-line values that replace fields of the instance before parsing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub eta: Option<f64>,
    pub xi: Option<f64>,
}

fn set(v: &mut Value, key: &str, x: Option<f64>) {
    if let (Some(x), Some(obj)) = (x, v.as_object_mut()) {
        obj.insert(key.to_string(), s(x));
    }
}

impl Instance {
    pub fn kind(&self) -> &'static str {
        match self {
            Instance::Kakutani { .. } => "kakutani",
            Instance::Brouwer { .. } => "brouwer",
            Instance::Game { .. } => "game",
            Instance::GCircuit(_) => "gcircuit",
            Instance::Economy(_) => "economy",
            Instance::Berge(_) => "berge",
        }
    }

    /// Applies `ov` to the document and parses it.
    pub fn parse(doc: &Value, ov: &Overrides) -> Result<(Self, Value)> {
        let mut v = doc.clone();
        let kind = J::root(doc).field("kind")?.as_str()?.to_string();
        set(&mut v, "alpha", ov.alpha);
        match kind.as_str() {
            "kakutani" => set(&mut v["correspondence"], "eta", ov.eta),
            "game" => {
                set(&mut v["game"], "epsilon", ov.epsilon);
                set(&mut v["game"], "eta", ov.eta);
            }
            "economy" => {
                set(&mut v["economy"], "epsilon", ov.epsilon);
                set(&mut v["economy"], "xi", ov.xi);
            }
            _ => {}
        }
        let j = J::root(&v);
        let inst = match kind.as_str() {
            "kakutani" => Instance::Kakutani {
                f: Correspondence::from_json(&j.field("correspondence")?)?,
                alpha: j.scalar_or("alpha", 0.1)?,
            },
            "brouwer" => {
                let b = BrouwerInstance::from_json(&j.field("brouwer")?)?;
                let alpha = j.scalar_or("alpha", b.gamma / 2.0)?;
                Instance::Brouwer { b, alpha }
            }
            "game" => {
                let gj = j.field("game")?;
                let mut game = ConcaveGame::from_json(&gj)?;
                // a strongly concave document carries no η; it is set after lifting
                if let Some(eta) = ov.eta {
                    game.eta = eta;
                }
                let gcircuit = j.opt("gcircuit").map(|g| GCircuitInstance::from_json(&g)).transpose()?;
                Instance::Game { game, gcircuit }
            }
            "gcircuit" => Instance::GCircuit(GCircuitInstance::from_json(&j.field("gcircuit")?)?),
            "economy" => Instance::Economy(ExchangeEconomy::from_json(&j.field("economy")?)?),
            "berge" => Instance::Berge(AuditSpec::from_json(&j.field("audit")?)?),
            other => return Err(j.field("kind")?.err(&format!("unknown instance kind {other:?}")).into()),
        };
        for (name, x) in [("alpha", ov.alpha), ("epsilon", ov.epsilon), ("eta", ov.eta), ("xi", ov.xi)] {
            if x.is_some() && !applies(&inst, name) {
                bail!("--{name} does not apply to a {} instance", inst.kind());
            }
        }
        Ok((inst, v))
    }
}

fn applies(inst: &Instance, flag: &str) -> bool {
    matches!(
        (inst, flag),
        (Instance::Kakutani { .. }, "alpha" | "eta")
            | (Instance::Brouwer { .. }, "alpha")
            | (Instance::Game { .. }, "alpha" | "epsilon" | "eta")
            | (Instance::Economy(_), "alpha" | "epsilon" | "xi")
    )
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn cube(k: usize) -> WellBounded {
    WellBounded::new(BodySpec::cube(k, -1.0, 1.0), 1.0, (k as f64).sqrt()).with_center(vec![0.0; k])
}

/// `u1 = −(x1 − ½)²`, `u2 = −(x2 − x1)²` on `[−1,1]²`.
fn quadratic_game(eps: f64) -> Result<ConcaveGame> {
    let poly = |terms: &[(i64, i64, [u32; 2])]| {
        Polynomial::new(2, terms.iter().map(|(n, d, e)| (rat(*n, *d), e.to_vec())).collect())
    };
    let u1 = poly(&[(-1, 1, [2, 0]), (1, 1, [1, 0]), (-1, 4, [0, 0])])?;
    let u2 = poly(&[(-1, 1, [0, 2]), (2, 1, [1, 1]), (-1, 1, [2, 0])])?;
    Ok(ConcaveGame::new(vec![0..1, 1..2], vec![Utility::Poly(u1), Utility::Poly(u2)], cube(2), 4.0, eps, 0.001)?)
}

pub fn fixture(name: &str) -> Result<Value> {
    Ok(match name {
        "constant-ball" => {
            let c = vec![0.3, 0.7];
            let wb = WellBounded::new(BodySpec::ball(c.clone(), 0.05), 0.05, 0.05).with_center(c);
            let f = Correspondence::from_template(
                2,
                Mode::Projection,
                Conditioning::new(0.05, 0.0),
                MapTemplate::Constant(wb),
            )?;
            json!({"kind": "kakutani", "alpha": s(0.1), "correspondence": f.to_json().expect("template map")})
        }
        "affine-brouwer" => {
            let b = BrouwerInstance::affine(2, rat(1, 2), rat(1, 4), 0.2)?;
            json!({"kind": "brouwer", "alpha": s(0.1), "brouwer": b.to_json()})
        }
        "quadratic-game" => json!({"kind": "game", "game": quadratic_game(0.02)?.to_json()}),
        "gcircuit-2node" => json!({"kind": "gcircuit", "gcircuit": GCircuitInstance::two_node(rat(1, 10)).to_json()}),
        "symmetric-economy" => json!({"kind": "economy", "economy": ExchangeEconomy::symmetric(0.05).to_json()}),
        "asymmetric-economy" => json!({"kind": "economy", "economy": ExchangeEconomy::asymmetric(0.05).to_json()}),
        _ => bail!("unknown fixture {name:?}; the catalog is {}", FIXTURES.join(", ")),
    })
}
