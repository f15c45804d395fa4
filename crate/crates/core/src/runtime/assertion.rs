use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::preamble::Preamble;

/// Predicates usable without a preamble entry; each takes two arguments.
pub const BUILTIN_PREDICATES: &[&str] = &["eq", "neq", "contains"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Operand {
    Var(String),
    Lit(Value),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Expr {
    Eq(String, String),
    Neq(String, String),
    FieldEq {
        left: String,
        path: String,
        right: Operand,
    },
    StructEq {
        left: String,
        right: String,
        #[serde(default)]
        ignore: Vec<String>,
    },
    Contains(String, String),
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Not(Box<Expr>),
}

impl Expr {
    fn vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Eq(a, b) | Expr::Neq(a, b) | Expr::Contains(a, b) => out.extend([a.as_str(), b.as_str()]),
            Expr::FieldEq { left, right, .. } => {
                out.push(left);
                if let Operand::Var(v) = right {
                    out.push(v);
                }
            }
            Expr::StructEq { left, right, .. } => out.extend([left.as_str(), right.as_str()]),
            Expr::And(xs) | Expr::Or(xs) => xs.iter().for_each(|x| x.vars(out)),
            Expr::Not(x) => x.vars(out),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionSpec {
    pub params: Vec<String>,
    pub body: Expr,
}

impl AssertionSpec {
    pub(crate) fn check(&self) -> Result<(), String> {
        let declared: BTreeSet<&str> = self.params.iter().map(String::as_str).collect();
        if declared.len() != self.params.len() {
            return Err("parameter names must be distinct".into());
        }
        let mut used = Vec::new();
        self.body.vars(&mut used);
        match used.into_iter().find(|v| !declared.contains(v)) {
            Some(v) => Err(format!("body refers to undeclared parameter `{v}`")),
            None => Ok(()),
        }
    }

    fn builtin(name: &str) -> Option<AssertionSpec> {
        let (a, b) = ("a".to_string(), "b".to_string());
        let body = match name {
            "eq" => Expr::Eq(a.clone(), b.clone()),
            "neq" => Expr::Neq(a.clone(), b.clone()),
            "contains" => Expr::Contains(a.clone(), b.clone()),
            _ => return None,
        };
        Some(AssertionSpec {
            params: vec![a, b],
            body,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AssertionError {
    #[error("unknown assertion `{0}`")]
    Unknown(String),
    #[error("assertion expects {expected} arguments, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("field `{path}` is absent from `{param}`")]
    MissingField { param: String, path: String },
}

/// Evaluates an assertion on concrete argument values.
pub fn eval_assertion(spec: &AssertionSpec, args: &[Value]) -> Result<bool, AssertionError> {
    if spec.params.len() != args.len() {
        return Err(AssertionError::Arity {
            expected: spec.params.len(),
            got: args.len(),
        });
    }
    let scope = Scope { spec, args };
    scope.eval(&spec.body)
}

/// Resolves `name` against the preamble (then builtins) and evaluates it.
pub fn eval_named(preamble: &Preamble, name: &str, args: &[Value]) -> Result<bool, AssertionError> {
    match preamble.assertions.get(name) {
        Some(spec) => eval_assertion(spec, args),
        None => match AssertionSpec::builtin(name) {
            Some(spec) => eval_assertion(&spec, args),
            None => Err(AssertionError::Unknown(name.to_string())),
        },
    }
}

struct Scope<'a> {
    spec: &'a AssertionSpec,
    args: &'a [Value],
}

impl Scope<'_> {
    fn get(&self, name: &str) -> &Value {
        let i = self
            .spec
            .params
            .iter()
            .position(|p| p == name)
            .expect("checked at load");
        &self.args[i]
    }

    fn eval(&self, expr: &Expr) -> Result<bool, AssertionError> {
        Ok(match expr {
            Expr::Eq(a, b) => values_equal(self.get(a), self.get(b), &[]),
            Expr::Neq(a, b) => !values_equal(self.get(a), self.get(b), &[]),
            Expr::FieldEq { left, path, right } => {
                let mut v = self.get(left);
                for seg in path.split('.').filter(|s| !s.is_empty()) {
                    let next = match v {
                        Value::Object(m) => m.get(seg),
                        Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get(i)),
                        _ => None,
                    };
                    v = next.ok_or_else(|| AssertionError::MissingField {
                        param: left.clone(),
                        path: path.clone(),
                    })?;
                }
                let rhs = match right {
                    Operand::Var(name) => self.get(name),
                    Operand::Lit(lit) => lit,
                };
                values_equal(v, rhs, &[])
            }
            Expr::StructEq { left, right, ignore } => values_equal(self.get(left), self.get(right), ignore),
            Expr::Contains(a, b) => contains(self.get(a), self.get(b)),
            Expr::And(xs) => {
                for x in xs {
                    if !self.eval(x)? {
                        return Ok(false);
                    }
                }
                true
            }
            Expr::Or(xs) => {
                for x in xs {
                    if self.eval(x)? {
                        return Ok(true);
                    }
                }
                false
            }
            Expr::Not(x) => !self.eval(x)?,
        })
    }
}

/// Deep equality that ignores object key order, compares numbers by value
/// and skips the listed top-level object fields.
pub fn values_equal(a: &Value, b: &Value, ignore: &[String]) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => match (x.as_i64(), y.as_i64()) {
            (Some(i), Some(j)) => i == j,
            _ => match (x.as_u64(), y.as_u64()) {
                (Some(i), Some(j)) => i == j,
                _ => x.as_f64() == y.as_f64(),
            },
        },
        (Value::Array(xs), Value::Array(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| values_equal(x, y, &[]))
        }
        (Value::Object(xm), Value::Object(ym)) => {
            let keep = |k: &&String| !ignore.contains(k);
            let xk: BTreeSet<&String> = xm.keys().filter(keep).collect();
            let yk: BTreeSet<&String> = ym.keys().filter(keep).collect();
            xk == yk && xk.into_iter().all(|k| values_equal(&xm[k], &ym[k], &[]))
        }
        _ => a == b,
    }
}

/// `haystack` holds `needle`: an array element equal to it, a substring of
/// a string, or a key of an object.
fn contains(haystack: &Value, needle: &Value) -> bool {
    match (haystack, needle) {
        (Value::Array(items), _) => items.iter().any(|x| values_equal(x, needle, &[])),
        (Value::String(s), Value::String(n)) => s.contains(n.as_str()),
        (Value::Object(m), Value::String(k)) => m.contains_key(k),
        _ => false,
    }
}
