use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::assertion::{AssertionSpec, BUILTIN_PREDICATES};
use crate::ast::TypeName;

/// Declarative recipe for request payload values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum GeneratorSpec {
    Const {
        value: Value,
    },
    Uuid,
    RandString {
        len: usize,
    },
    RandInt {
        lo: i64,
        hi: i64,
    },
    OneOf {
        values: Vec<Value>,
    },
    Object {
        fields: BTreeMap<String, GeneratorSpec>,
    },
    FromFile {
        path: PathBuf,
        #[serde(default)]
        strategy: FileStrategy,
    },
    /// The configured API key (after any environment override).
    AuthKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum FileStrategy {
    #[default]
    Cycle,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorDef {
    #[serde(flatten)]
    pub spec: GeneratorSpec,
    #[serde(rename = "oracleDomain", default, skip_serializing_if = "Option::is_none")]
    pub oracle_domain: Option<Vec<Value>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AliasTarget {
    One(String),
    Many(Vec<String>),
}

impl AliasTarget {
    pub fn names(&self) -> Vec<&str> {
        match self {
            AliasTarget::One(s) => vec![s.as_str()],
            AliasTarget::Many(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuthLocation {
    #[default]
    Header,
    Query,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(rename = "in", default, skip_serializing_if = "Option::is_none")]
    pub location: Option<AuthLocation>,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDomain {
    pub code: u16,
    #[serde(rename = "type")]
    pub ty: TypeName,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OracleConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rec_bound: Option<usize>,
    #[serde(default)]
    pub domains: BTreeMap<String, Vec<Value>>,
    #[serde(default)]
    pub input_domains: Vec<InputDomain>,
}

/// Generators, assertions, parameter aliases and auth for one model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Preamble {
    #[serde(default)]
    pub generators: BTreeMap<String, GeneratorDef>,
    #[serde(default)]
    pub assertions: BTreeMap<String, AssertionSpec>,
    #[serde(default)]
    pub aliases: BTreeMap<String, AliasTarget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth: Option<AuthConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
    /// Contents of `fromFile` sources, keyed by the path as written.
    #[serde(skip)]
    pub files: BTreeMap<PathBuf, Vec<Value>>,
}

#[derive(Debug, thiserror::Error)]
pub enum PreambleError {
    #[error("malformed preamble: {0}")]
    Malformed(String),
    #[error("cannot read `{path}`: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("`{path}` line {line}: {message}")]
    BadSourceLine {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("generator `{0}`: {1}")]
    InvalidGenerator(String, String),
    #[error("assertion `{0}`: {1}")]
    InvalidAssertion(String, String),
}

pub const BUILTIN_GENERATORS: &[&str] = &["anyInt", "anyString", "anyBool", "uuid"];

pub fn builtin_generator(name: &str) -> Option<GeneratorSpec> {
    Some(match name {
        "anyInt" => GeneratorSpec::RandInt { lo: 0, hi: 1_000_000 },
        "anyString" => GeneratorSpec::RandString { len: 12 },
        "anyBool" => GeneratorSpec::OneOf {
            values: vec![Value::Bool(true), Value::Bool(false)],
        },
        "uuid" => GeneratorSpec::Uuid,
        _ => return None,
    })
}

impl Preamble {
    /// Parses a preamble document (JSON, or YAML when `yaml` is set) and
    /// loads `fromFile` sources relative to `base_dir`.
    pub fn from_slice(bytes: &[u8], yaml: bool, base_dir: &Path) -> Result<Preamble, PreambleError> {
        let mut preamble: Preamble = if yaml {
            serde_yaml::from_slice(bytes).map_err(|e| PreambleError::Malformed(e.to_string()))?
        } else {
            serde_json::from_slice(bytes).map_err(|e| PreambleError::Malformed(e.to_string()))?
        };
        preamble.check()?;
        preamble.load_files(base_dir)?;
        Ok(preamble)
    }

    pub fn load(path: &Path) -> Result<Preamble, PreambleError> {
        let bytes = std::fs::read(path).map_err(|source| PreambleError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let yaml = matches!(path.extension().and_then(|e| e.to_str()), Some("yaml" | "yml"));
        Preamble::from_slice(&bytes, yaml, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn generator(&self, name: &str) -> Option<GeneratorSpec> {
        self.generators
            .get(name)
            .map(|d| d.spec.clone())
            .or_else(|| builtin_generator(name))
    }

    pub fn has_predicate(&self, name: &str) -> bool {
        self.assertions.contains_key(name) || BUILTIN_PREDICATES.contains(&name)
    }

    pub fn predicate_arity(&self, name: &str) -> Option<usize> {
        match self.assertions.get(name) {
            Some(spec) => Some(spec.params.len()),
            None if BUILTIN_PREDICATES.contains(&name) => Some(2),
            None => None,
        }
    }

    /// Candidate specification parameter names for a model variable: the
    /// variable's own name first, then its aliases.
    pub fn param_candidates<'a>(&'a self, var: &'a str) -> Vec<&'a str> {
        let mut out = vec![var];
        if let Some(target) = self.aliases.get(var) {
            out.extend(target.names());
        }
        out
    }

    fn check(&self) -> Result<(), PreambleError> {
        fn check_spec(name: &str, spec: &GeneratorSpec) -> Result<(), PreambleError> {
            match spec {
                GeneratorSpec::RandInt { lo, hi } if lo > hi => Err(PreambleError::InvalidGenerator(
                    name.into(),
                    format!("randInt bounds {lo} > {hi}"),
                )),
                GeneratorSpec::OneOf { values } if values.is_empty() => Err(PreambleError::InvalidGenerator(
                    name.into(),
                    "oneOf needs at least one value".into(),
                )),
                GeneratorSpec::Object { fields } => fields.values().try_for_each(|f| check_spec(name, f)),
                _ => Ok(()),
            }
        }
        for (name, def) in &self.generators {
            check_spec(name, &def.spec)?;
            if def.oracle_domain.as_ref().is_some_and(Vec::is_empty) {
                return Err(PreambleError::InvalidGenerator(
                    name.clone(),
                    "oracleDomain is empty".into(),
                ));
            }
        }
        for (name, spec) in &self.assertions {
            spec.check()
                .map_err(|m| PreambleError::InvalidAssertion(name.clone(), m))?;
        }
        if let Some(oracle) = &self.oracle {
            if let Some((g, _)) = oracle.domains.iter().find(|(_, v)| v.is_empty()) {
                return Err(PreambleError::InvalidGenerator(
                    g.clone(),
                    "oracle domain is empty".into(),
                ));
            }
            if let Some(d) = oracle.input_domains.iter().find(|d| d.values.is_empty()) {
                return Err(PreambleError::Malformed(format!(
                    "input domain for C{} {} is empty",
                    d.code, d.ty
                )));
            }
        }
        Ok(())
    }

    fn load_files(&mut self, base_dir: &Path) -> Result<(), PreambleError> {
        fn collect(spec: &GeneratorSpec, out: &mut Vec<PathBuf>) {
            match spec {
                GeneratorSpec::FromFile { path, .. } => out.push(path.clone()),
                GeneratorSpec::Object { fields } => fields.values().for_each(|f| collect(f, out)),
                _ => {}
            }
        }
        let mut paths = Vec::new();
        self.generators.values().for_each(|d| collect(&d.spec, &mut paths));
        for path in paths {
            let full = if path.is_absolute() {
                path.clone()
            } else {
                base_dir.join(&path)
            };
            let text = std::fs::read_to_string(&full).map_err(|source| PreambleError::Io {
                path: full.clone(),
                source,
            })?;
            let mut values = Vec::new();
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let v = serde_json::from_str(line).map_err(|e| PreambleError::BadSourceLine {
                    path: full.clone(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                values.push(v);
            }
            self.files.insert(path, values);
        }
        Ok(())
    }

    /// Auth value with the `COTS_API_KEY` environment override applied.
    pub fn auth_value(&self) -> Option<String> {
        std::env::var("COTS_API_KEY")
            .ok()
            .filter(|v| !v.is_empty())
            .or_else(|| self.auth.as_ref().map(|a| a.value.clone()))
    }
}
