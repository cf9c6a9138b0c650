//! Path-tracking JSON reader. Every schema error carries the JSON pointer of
//! the offending value.

use serde_json::Value;

use crate::error::{Error, Result};
use crate::numerics::rational::{format_scalar, parse_rational, parse_scalar, Rational};

#[derive(Clone, Copy)]
enum Seg<'a> {
    Key(&'a str),
    Idx(usize),
}

/// A borrowed JSON value together with its location in the document.
#[derive(Clone)]
pub struct J<'a> {
    pub value: &'a Value,
    path: Vec<String>,
}

impl<'a> J<'a> {
    pub fn root(value: &'a Value) -> Self {
        J { value, path: Vec::new() }
    }

    fn child(&self, seg: Seg<'_>, value: &'a Value) -> J<'a> {
        let mut path = self.path.clone();
        path.push(match seg {
            Seg::Key(k) => k.replace('~', "~0").replace('/', "~1"),
            Seg::Idx(i) => i.to_string(),
        });
        J { value, path }
    }

    pub fn pointer(&self) -> String {
        if self.path.is_empty() {
            "/".to_string()
        } else {
            self.path.iter().map(|s| format!("/{s}")).collect()
        }
    }

    pub fn err(&self, msg: &str) -> Error {
        Error::Schema { pointer: self.pointer(), msg: msg.to_string() }
    }

    pub fn field(&self, key: &str) -> Result<J<'a>> {
        match self.value {
            Value::Object(m) => match m.get(key) {
                Some(v) => Ok(self.child(Seg::Key(key), v)),
                None => Err(self.err(&format!("missing field {key:?}"))),
            },
            _ => Err(self.err("expected an object")),
        }
    }

    pub fn opt(&self, key: &str) -> Option<J<'a>> {
        match self.value {
            Value::Object(m) => m.get(key).filter(|v| !v.is_null()).map(|v| self.child(Seg::Key(key), v)),
            _ => None,
        }
    }

    pub fn items(&self) -> Result<Vec<J<'a>>> {
        match self.value {
            Value::Array(a) => Ok(a.iter().enumerate().map(|(i, v)| self.child(Seg::Idx(i), v)).collect()),
            _ => Err(self.err("expected an array")),
        }
    }

    pub fn as_str(&self) -> Result<&'a str> {
        self.value.as_str().ok_or_else(|| self.err("expected a string"))
    }

    pub fn as_usize(&self) -> Result<usize> {
        match self.value {
            Value::Number(n) => n.as_u64().map(|v| v as usize).ok_or_else(|| self.err("expected a non-negative integer")),
            Value::String(s) => s.trim().parse().map_err(|_| self.err("expected a non-negative integer")),
            _ => Err(self.err("expected a non-negative integer")),
        }
    }

    pub fn as_bool(&self) -> Result<bool> {
        self.value.as_bool().ok_or_else(|| self.err("expected a boolean"))
    }

    /// Accepts JSON numbers, decimal strings, and "num/den" strings.
    pub fn as_scalar(&self) -> Result<f64> {
        match self.value {
            Value::Number(n) => n.as_f64().ok_or_else(|| self.err("expected a scalar")),
            Value::String(s) => parse_scalar(s).map_err(|e| self.err(&e.to_string())),
            _ => Err(self.err("expected a scalar (number or string)")),
        }
    }

    pub fn as_rational(&self) -> Result<Rational> {
        match self.value {
            Value::Number(n) => parse_rational(&n.to_string()).map_err(|e| self.err(&e.to_string())),
            Value::String(s) => parse_rational(s).map_err(|e| self.err(&e.to_string())),
            _ => Err(self.err("expected a scalar (number or string)")),
        }
    }

    pub fn as_vec(&self) -> Result<Vec<f64>> {
        self.items()?.iter().map(|x| x.as_scalar()).collect()
    }

    pub fn as_matrix(&self) -> Result<Vec<Vec<f64>>> {
        self.items()?.iter().map(|x| x.as_vec()).collect()
    }

    pub fn scalar_or(&self, key: &str, default: f64) -> Result<f64> {
        self.opt(key).map_or(Ok(default), |v| v.as_scalar())
    }
}

/// Scalar as a decimal string.
pub fn s(x: f64) -> Value {
    Value::String(format_scalar(x))
}

pub fn sv(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| s(x)).collect())
}
