//! Linear arithmetic circuits over the gate set {+, −, min, max, ×ζ} with
//! rational constants, evaluated in floating point.

use serde_json::{json, Value};

use super::linalg::Matrix;
use super::rational::{format_rational, to_f64, Rational};
use crate::error::{check_dim, Error, Result};
use crate::json::J;

#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    Input(usize),
    Const(Rational),
    Add(usize, usize),
    Sub(usize, usize),
    Min(usize, usize),
    Max(usize, usize),
    Scale(usize, Rational),
}

impl Gate {
    fn args(&self) -> Vec<usize> {
        match *self {
            Gate::Input(_) | Gate::Const(_) => vec![],
            Gate::Add(a, b) | Gate::Sub(a, b) | Gate::Min(a, b) | Gate::Max(a, b) => vec![a, b],
            Gate::Scale(a, _) => vec![a],
        }
    }
}

/// A topologically ordered gate DAG: every gate reads only earlier gates.
#[derive(Debug, Clone, PartialEq)]
pub struct LinCircuit {
    inputs: usize,
    gates: Vec<Gate>,
    consts: Vec<f64>,
    outputs: Vec<usize>,
}

impl LinCircuit {
    pub fn new(inputs: usize, gates: Vec<Gate>, outputs: Vec<usize>) -> Result<Self> {
        for (i, g) in gates.iter().enumerate() {
            if let Gate::Input(k) = g {
                if *k >= inputs {
                    return Err(Error::InvalidCircuit(format!("gate {i} reads input {k} of {inputs}")));
                }
            }
            if let Some(a) = g.args().into_iter().find(|&a| a >= i) {
                return Err(Error::InvalidCircuit(format!("gate {i} reads gate {a}, which does not precede it")));
            }
        }
        if let Some(o) = outputs.iter().find(|&&o| o >= gates.len()) {
            return Err(Error::InvalidCircuit(format!("output refers to missing gate {o}")));
        }
        let consts = gates
            .iter()
            .map(|g| match g {
                Gate::Const(c) | Gate::Scale(_, c) => to_f64(c),
                _ => 0.0,
            })
            .collect();
        Ok(LinCircuit { inputs, gates, consts, outputs })
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn size(&self) -> usize {
        self.gates.len()
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.inputs, x.len())?;
        let mut v = vec![0.0; self.gates.len()];
        for (i, g) in self.gates.iter().enumerate() {
            v[i] = match *g {
                Gate::Input(k) => x[k],
                Gate::Const(_) => self.consts[i],
                Gate::Add(a, b) => v[a] + v[b],
                Gate::Sub(a, b) => v[a] - v[b],
                Gate::Min(a, b) => v[a].min(v[b]),
                Gate::Max(a, b) => v[a].max(v[b]),
                Gate::Scale(a, _) => self.consts[i] * v[a],
            };
        }
        Ok(self.outputs.iter().map(|&o| v[o]).collect())
    }

    /// One subgradient row per output. At min/max ties the first argument is
    /// taken as the active branch.
    pub fn subgradient(&self, x: &[f64]) -> Result<Matrix> {
        check_dim(self.inputs, x.len())?;
        let n = self.inputs;
        let mut v = vec![0.0; self.gates.len()];
        let mut d = vec![0.0; self.gates.len() * n];
        for (i, g) in self.gates.iter().enumerate() {
            let (val, src): (f64, Vec<(usize, f64)>) = match *g {
                Gate::Input(k) => {
                    d[i * n + k] = 1.0;
                    (x[k], vec![])
                }
                Gate::Const(_) => (self.consts[i], vec![]),
                Gate::Add(a, b) => (v[a] + v[b], vec![(a, 1.0), (b, 1.0)]),
                Gate::Sub(a, b) => (v[a] - v[b], vec![(a, 1.0), (b, -1.0)]),
                Gate::Min(a, b) => {
                    if v[a] <= v[b] {
                        (v[a], vec![(a, 1.0)])
                    } else {
                        (v[b], vec![(b, 1.0)])
                    }
                }
                Gate::Max(a, b) => {
                    if v[a] >= v[b] {
                        (v[a], vec![(a, 1.0)])
                    } else {
                        (v[b], vec![(b, 1.0)])
                    }
                }
                Gate::Scale(a, _) => (self.consts[i] * v[a], vec![(a, self.consts[i])]),
            };
            v[i] = val;
            for (s, w) in src {
                for k in 0..n {
                    d[i * n + k] += w * d[s * n + k];
                }
            }
        }
        let mut m = Matrix::zeros(self.outputs.len(), n);
        for (r, &o) in self.outputs.iter().enumerate() {
            m.data[r * n..(r + 1) * n].copy_from_slice(&d[o * n..(o + 1) * n]);
        }
        Ok(m)
    }

    pub fn to_json(&self) -> Value {
        let gates: Vec<Value> = self
            .gates
            .iter()
            .map(|g| match g {
                Gate::Input(k) => json!({"op": "input", "args": [k]}),
                Gate::Const(c) => json!({"op": "const", "args": [], "value": format_rational(c)}),
                Gate::Add(a, b) => json!({"op": "add", "args": [a, b]}),
                Gate::Sub(a, b) => json!({"op": "sub", "args": [a, b]}),
                Gate::Min(a, b) => json!({"op": "min", "args": [a, b]}),
                Gate::Max(a, b) => json!({"op": "max", "args": [a, b]}),
                Gate::Scale(a, c) => json!({"op": "scale", "args": [a], "value": format_rational(c)}),
            })
            .collect();
        json!({"inputs": self.inputs, "gates": gates, "outputs": self.outputs})
    }

    pub fn from_json(j: &J) -> Result<LinCircuit> {
        let inputs = j.field("inputs")?.as_usize()?;
        let mut gates = Vec::new();
        for g in j.field("gates")?.items()? {
            let op = g.field("op")?.as_str()?;
            let args: Vec<usize> = match g.opt("args") {
                Some(a) => a.items()?.iter().map(|x| x.as_usize()).collect::<Result<_>>()?,
                None => vec![],
            };
            let need = |k: usize| -> Result<()> {
                if args.len() == k {
                    Ok(())
                } else {
                    Err(g.err(&format!("gate {op:?} takes {k} argument(s)")))
                }
            };
            let gate = match op {
                "input" => {
                    need(1)?;
                    Gate::Input(args[0])
                }
                "const" => Gate::Const(g.field("value")?.as_rational()?),
                "add" => {
                    need(2)?;
                    Gate::Add(args[0], args[1])
                }
                "sub" => {
                    need(2)?;
                    Gate::Sub(args[0], args[1])
                }
                "min" => {
                    need(2)?;
                    Gate::Min(args[0], args[1])
                }
                "max" => {
                    need(2)?;
                    Gate::Max(args[0], args[1])
                }
                "scale" => {
                    need(1)?;
                    Gate::Scale(args[0], g.field("value")?.as_rational()?)
                }
                other => return Err(g.field("op")?.err(&format!("unknown gate {other:?}"))),
            };
            gates.push(gate);
        }
        let outputs = j.field("outputs")?.items()?.iter().map(|x| x.as_usize()).collect::<Result<_>>()?;
        LinCircuit::new(inputs, gates, outputs).map_err(|e| j.err(&e.to_string()))
    }
}

/// Incremental circuit construction; every method returns the new gate id.
#[derive(Debug, Clone, Default)]
pub struct CircuitBuilder {
    inputs: usize,
    gates: Vec<Gate>,
}

impl CircuitBuilder {
    pub fn new(inputs: usize) -> Self {
        CircuitBuilder { inputs, gates: Vec::new() }
    }

    fn push(&mut self, g: Gate) -> usize {
        self.gates.push(g);
        self.gates.len() - 1
    }

    pub fn input(&mut self, k: usize) -> usize {
        self.push(Gate::Input(k))
    }
    pub fn constant(&mut self, c: Rational) -> usize {
        self.push(Gate::Const(c))
    }
    pub fn add(&mut self, a: usize, b: usize) -> usize {
        self.push(Gate::Add(a, b))
    }
    pub fn sub(&mut self, a: usize, b: usize) -> usize {
        self.push(Gate::Sub(a, b))
    }
    pub fn min(&mut self, a: usize, b: usize) -> usize {
        self.push(Gate::Min(a, b))
    }
    pub fn max(&mut self, a: usize, b: usize) -> usize {
        self.push(Gate::Max(a, b))
    }
    pub fn scale(&mut self, a: usize, c: Rational) -> usize {
        self.push(Gate::Scale(a, c))
    }

    pub fn build(self, outputs: Vec<usize>) -> Result<LinCircuit> {
        LinCircuit::new(self.inputs, self.gates, outputs)
    }
}
