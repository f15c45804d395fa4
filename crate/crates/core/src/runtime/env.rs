use std::sync::Arc;

use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnvError {
    #[error("variable `{0}` is already bound")]
    Rebinding(String),
    #[error("variable `{0}` is not bound")]
    Unbound(String),
}

#[derive(Debug)]
struct Binding {
    name: String,
    value: Value,
    next: Option<Arc<Binding>>,
}

/// Immutable variable environment. Extending returns a new environment
/// that shares its tail with the old one.
#[derive(Debug, Clone, Default)]
pub struct Env {
    head: Option<Arc<Binding>>,
    len: usize,
}

impl Env {
    pub fn new() -> Env {
        Env::default()
    }

    pub fn bind(&self, name: &str, value: Value) -> Result<Env, EnvError> {
        if self.contains(name) {
            return Err(EnvError::Rebinding(name.to_string()));
        }
        Ok(Env {
            head: Some(Arc::new(Binding {
                name: name.to_string(),
                value,
                next: self.head.clone(),
            })),
            len: self.len + 1,
        })
    }

    pub fn lookup(&self, name: &str) -> Result<&Value, EnvError> {
        self.links()
            .find(|b| b.name == name)
            .map(|b| &b.value)
            .ok_or_else(|| EnvError::Unbound(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.links().any(|b| b.name == name)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn links(&self) -> impl Iterator<Item = &Binding> {
        std::iter::successors(self.head.as_deref(), |b| b.next.as_deref())
    }

    /// Bindings in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        let mut all: Vec<&Binding> = self.links().collect();
        all.reverse();
        all.into_iter().map(|b| (b.name.as_str(), &b.value))
    }

    pub fn names(&self) -> Vec<&str> {
        self.iter().map(|(n, _)| n).collect()
    }
}

impl PartialEq for Env {
    fn eq(&self, other: &Env) -> bool {
        self.len == other.len && self.iter().eq(other.iter())
    }
}
