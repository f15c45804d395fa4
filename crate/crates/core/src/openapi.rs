//! The slice of an OpenAPI 3.x document needed to drive tests: operations
//! by `operationId`, their parameters, bodies and responses, and component
//! schemas reduced to a structural form.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocFormat {
    Json,
    Yaml,
}

impl DocFormat {
    /// Guesses the format from a file name; anything not ending in `.json`
    /// is treated as YAML.
    pub fn from_path(path: &std::path::Path) -> DocFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => DocFormat::Json,
            _ => DocFormat::Yaml,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum JsonSchema {
    Any,
    Integer,
    Number,
    String,
    Boolean,
    Object {
        properties: BTreeMap<String, JsonSchema>,
        required: BTreeSet<String>,
    },
    Array(Box<JsonSchema>),
    Ref(String),
    Nullable(Box<JsonSchema>),
}

impl JsonSchema {
    fn refs(&self, out: &mut BTreeSet<String>) {
        match self {
            JsonSchema::Ref(name) => {
                out.insert(name.clone());
            }
            JsonSchema::Object { properties, .. } => properties.values().for_each(|s| s.refs(out)),
            JsonSchema::Array(item) | JsonSchema::Nullable(item) => item.refs(out),
            _ => {}
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            JsonSchema::Any => "any",
            JsonSchema::Integer => "integer",
            JsonSchema::Number => "number",
            JsonSchema::String => "string",
            JsonSchema::Boolean => "boolean",
            JsonSchema::Object { .. } => "object",
            JsonSchema::Array(_) => "array",
            JsonSchema::Ref(_) => "reference",
            JsonSchema::Nullable(_) => "nullable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ParamLocation {
    Path,
    Query,
    Header,
}

impl fmt::Display for ParamLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamLocation::Path => "path",
            ParamLocation::Query => "query",
            ParamLocation::Header => "header",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub location: ParamLocation,
    pub schema: JsonSchema,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperationShape {
    pub method: String,
    pub path_template: String,
    pub params: Vec<Param>,
    pub request_body: Option<JsonSchema>,
    pub responses: BTreeMap<u16, Option<JsonSchema>>,
}

impl OperationShape {
    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiKeyScheme {
    pub name: String,
    pub location: ParamLocation,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ApiSpec {
    pub operations: BTreeMap<String, OperationShape>,
    pub schemas: BTreeMap<String, JsonSchema>,
    pub base_url_hint: Option<String>,
    pub api_key: Option<ApiKeyScheme>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpecError {
    #[error("malformed OpenAPI document: {0}")]
    MalformedDocument(String),
    #[error("operationId `{0}` is used by more than one operation")]
    DuplicateOperationId(String),
    #[error("reference `{0}` does not resolve to a component schema")]
    DanglingRef(String),
}

const METHODS: &[&str] = &["get", "put", "post", "delete", "options", "head", "patch", "trace"];
const SCHEMA_PREFIX: &str = "#/components/schemas/";

/// Loads an OpenAPI 3.0/3.1 document.
pub fn load_spec(document: &[u8], format: DocFormat) -> Result<ApiSpec, SpecError> {
    let doc: Value = match format {
        DocFormat::Json => serde_json::from_slice(document).map_err(|e| SpecError::MalformedDocument(e.to_string()))?,
        DocFormat::Yaml => serde_yaml::from_slice(document).map_err(|e| SpecError::MalformedDocument(e.to_string()))?,
    };
    Loader {
        doc: &doc,
        spec: ApiSpec::default(),
    }
    .load()
}

struct Loader<'d> {
    doc: &'d Value,
    spec: ApiSpec,
}

impl<'d> Loader<'d> {
    fn warn(&mut self, msg: impl Into<String>) {
        self.spec.warnings.push(msg.into());
    }

    fn load(mut self) -> Result<ApiSpec, SpecError> {
        let Some(root) = self.doc.as_object() else {
            return Err(SpecError::MalformedDocument("top level is not a mapping".into()));
        };
        match root.get("openapi").and_then(Value::as_str) {
            Some(v) if v.starts_with("3.0") || v.starts_with("3.1") => {}
            Some(v) => return Err(SpecError::MalformedDocument(format!("unsupported OpenAPI version {v}"))),
            None => self.warn("document has no `openapi` version; assuming 3.0"),
        }
        self.spec.base_url_hint = root
            .get("servers")
            .and_then(|s| s.get(0))
            .and_then(|s| s.get("url"))
            .and_then(Value::as_str)
            .map(str::to_string);

        let components = root.get("components");
        if let Some(schemas) = components.and_then(|c| c.get("schemas")).and_then(Value::as_object) {
            for (name, raw) in schemas {
                let schema = self.schema(raw, &format!("{SCHEMA_PREFIX}{name}"))?;
                self.spec.schemas.insert(name.clone(), schema);
            }
        }
        if let Some(schemes) = components
            .and_then(|c| c.get("securitySchemes"))
            .and_then(Value::as_object)
        {
            for (name, raw) in schemes {
                let raw = self.deref(raw, "#/components/securitySchemes/")?;
                match raw.get("type").and_then(Value::as_str) {
                    Some("apiKey") => {
                        let location = match raw.get("in").and_then(Value::as_str) {
                            Some("query") => ParamLocation::Query,
                            Some("header") => ParamLocation::Header,
                            other => {
                                self.warn(format!("security scheme `{name}`: unsupported location {other:?}"));
                                continue;
                            }
                        };
                        let Some(key_name) = raw.get("name").and_then(Value::as_str) else {
                            return Err(SpecError::MalformedDocument(format!(
                                "security scheme `{name}` has no name"
                            )));
                        };
                        if self.spec.api_key.is_some() {
                            self.warn(format!(
                                "security scheme `{name}` ignored: only one API key is supported"
                            ));
                        } else {
                            self.spec.api_key = Some(ApiKeyScheme {
                                name: key_name.to_string(),
                                location,
                            });
                        }
                    }
                    other => self.warn(format!("security scheme `{name}` of type {other:?} is not supported")),
                }
            }
        }

        if let Some(paths) = root.get("paths") {
            let Some(paths) = paths.as_object() else {
                return Err(SpecError::MalformedDocument("`paths` is not a mapping".into()));
            };
            for (path, item) in paths {
                self.path_item(path, item)?;
            }
        }

        let mut refs = BTreeSet::new();
        for s in self.spec.schemas.values() {
            s.refs(&mut refs);
        }
        for op in self.spec.operations.values() {
            op.params.iter().for_each(|p| p.schema.refs(&mut refs));
            if let Some(b) = &op.request_body {
                b.refs(&mut refs);
            }
            op.responses.values().flatten().for_each(|s| s.refs(&mut refs));
        }
        if let Some(missing) = refs.into_iter().find(|r| !self.spec.schemas.contains_key(r)) {
            return Err(SpecError::DanglingRef(format!("{SCHEMA_PREFIX}{missing}")));
        }
        Ok(self.spec)
    }

    /// Follows a local `$ref` into `#/components/...`.
    fn deref(&self, raw: &'d Value, expected_prefix: &str) -> Result<&'d Value, SpecError> {
        let mut current = raw;
        for _ in 0..16 {
            let Some(r) = current.get("$ref").and_then(Value::as_str) else {
                return Ok(current);
            };
            if !r.starts_with(expected_prefix) {
                return Err(SpecError::DanglingRef(r.to_string()));
            }
            current = r
                .strip_prefix("#/")
                .and_then(|p| {
                    p.split('/')
                        .try_fold(self.doc, |v, seg| v.get(seg.replace("~1", "/").replace("~0", "~")))
                })
                .ok_or_else(|| SpecError::DanglingRef(r.to_string()))?;
        }
        Err(SpecError::MalformedDocument("reference cycle".into()))
    }

    fn schema(&mut self, raw: &Value, at: &str) -> Result<JsonSchema, SpecError> {
        if raw.as_bool() == Some(true) {
            return Ok(JsonSchema::Any);
        }
        let Some(obj) = raw.as_object() else {
            return Err(SpecError::MalformedDocument(format!("{at}: schema is not a mapping")));
        };
        if let Some(r) = obj.get("$ref") {
            let r = r.as_str().unwrap_or_default();
            return match r.strip_prefix(SCHEMA_PREFIX) {
                Some(name) => Ok(JsonSchema::Ref(name.to_string())),
                None => Err(SpecError::DanglingRef(r.to_string())),
            };
        }
        for key in ["oneOf", "anyOf", "allOf", "not"] {
            if obj.contains_key(key) {
                self.warn(format!("{at}: `{key}` is not supported; schema accepts any value"));
                return Ok(JsonSchema::Any);
            }
        }
        let mut nullable = obj.get("nullable").and_then(Value::as_bool).unwrap_or(false);
        let ty = match obj.get("type") {
            Some(Value::String(t)) => Some(t.as_str()),
            Some(Value::Array(ts)) => {
                let kinds: Vec<&str> = ts.iter().filter_map(Value::as_str).filter(|t| *t != "null").collect();
                nullable |= ts.iter().any(|t| t == "null");
                match kinds.as_slice() {
                    [one] => Some(*one),
                    [] => None,
                    _ => {
                        self.warn(format!(
                            "{at}: multiple types are not supported; schema accepts any value"
                        ));
                        return Ok(JsonSchema::Any);
                    }
                }
            }
            _ if obj.contains_key("properties") => Some("object"),
            _ => None,
        };
        let schema = match ty {
            Some("integer") => JsonSchema::Integer,
            Some("number") => JsonSchema::Number,
            Some("string") => JsonSchema::String,
            Some("boolean") => JsonSchema::Boolean,
            Some("array") => match obj.get("items") {
                Some(items) => JsonSchema::Array(Box::new(self.schema(items, &format!("{at}/items"))?)),
                None => JsonSchema::Array(Box::new(JsonSchema::Any)),
            },
            Some("object") => {
                let mut properties = BTreeMap::new();
                if let Some(props) = obj.get("properties").and_then(Value::as_object) {
                    for (name, p) in props {
                        properties.insert(name.clone(), self.schema(p, &format!("{at}/properties/{name}"))?);
                    }
                }
                let required = obj
                    .get("required")
                    .and_then(Value::as_array)
                    .map(|r| r.iter().filter_map(Value::as_str).map(str::to_string).collect())
                    .unwrap_or_default();
                JsonSchema::Object { properties, required }
            }
            Some(other) => return Err(SpecError::MalformedDocument(format!("{at}: unknown type `{other}`"))),
            None => JsonSchema::Any,
        };
        Ok(if nullable {
            JsonSchema::Nullable(Box::new(schema))
        } else {
            schema
        })
    }

    fn params(&mut self, raw: Option<&'d Value>, at: &str, out: &mut Vec<Param>) -> Result<(), SpecError> {
        let Some(list) = raw.and_then(Value::as_array) else {
            return Ok(());
        };
        for p in list {
            let p = self.deref(p, "#/components/parameters/")?;
            let name = p
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| SpecError::MalformedDocument(format!("{at}: parameter without a name")))?;
            let location = match p.get("in").and_then(Value::as_str) {
                Some("path") => ParamLocation::Path,
                Some("query") => ParamLocation::Query,
                Some("header") => ParamLocation::Header,
                other => {
                    self.warn(format!("{at}: parameter `{name}` in {other:?} is not supported"));
                    continue;
                }
            };
            let schema = match p.get("schema") {
                Some(s) => self.schema(s, &format!("{at}/parameters/{name}"))?,
                None => JsonSchema::Any,
            };
            let required =
                location == ParamLocation::Path || p.get("required").and_then(Value::as_bool).unwrap_or(false);
            out.retain(|q: &Param| !(q.name == name && q.location == location));
            out.push(Param {
                name: name.to_string(),
                location,
                schema,
                required,
            });
        }
        Ok(())
    }

    fn content_schema(&mut self, holder: &Value, at: &str) -> Result<Option<JsonSchema>, SpecError> {
        let Some(content) = holder.get("content").and_then(Value::as_object) else {
            return Ok(None);
        };
        let media = content
            .get("application/json")
            .or_else(|| content.iter().find(|(k, _)| k.contains("json")).map(|(_, v)| v))
            .or_else(|| content.values().next());
        match media.and_then(|m| m.get("schema")) {
            Some(s) => Ok(Some(self.schema(s, at)?)),
            None => Ok(None),
        }
    }

    fn path_item(&mut self, path: &str, item: &'d Value) -> Result<(), SpecError> {
        let item = self.deref(item, "#/components/pathItems/")?;
        let mut shared = Vec::new();
        self.params(item.get("parameters"), path, &mut shared)?;
        for method in METHODS {
            let Some(op) = item.get(*method) else { continue };
            let at = format!("{} {path}", method.to_uppercase());
            let Some(op_id) = op.get("operationId").and_then(Value::as_str) else {
                self.warn(format!("{at}: no operationId; operation skipped"));
                continue;
            };
            for key in ["callbacks", "links"] {
                if op.get(key).is_some() {
                    self.warn(format!("{at}: `{key}` ignored"));
                }
            }
            let mut params = shared.clone();
            self.params(op.get("parameters"), &at, &mut params)?;
            for hole in path_holes(path) {
                if !params
                    .iter()
                    .any(|p| p.name == hole && p.location == ParamLocation::Path)
                {
                    self.warn(format!("{at}: path parameter `{hole}` undeclared; assuming a string"));
                    params.push(Param {
                        name: hole,
                        location: ParamLocation::Path,
                        schema: JsonSchema::String,
                        required: true,
                    });
                }
            }
            let request_body = match op.get("requestBody") {
                Some(b) => {
                    let b = self.deref(b, "#/components/requestBodies/")?;
                    Some(
                        self.content_schema(b, &format!("{at} requestBody"))?
                            .unwrap_or(JsonSchema::Any),
                    )
                }
                None => None,
            };
            let mut responses = BTreeMap::new();
            if let Some(rs) = op.get("responses").and_then(Value::as_object) {
                for (code, r) in rs {
                    let Some(code_num) = code.parse::<u16>().ok().filter(|c| (100..=599).contains(c)) else {
                        self.warn(format!("{at}: response `{code}` ignored"));
                        continue;
                    };
                    let r = self.deref(r, "#/components/responses/")?;
                    let schema = self.content_schema(r, &format!("{at} response {code}"))?;
                    responses.insert(code_num, schema);
                }
            }
            let shape = OperationShape {
                method: method.to_uppercase(),
                path_template: path.to_string(),
                params,
                request_body,
                responses,
            };
            if self.spec.operations.insert(op_id.to_string(), shape).is_some() {
                return Err(SpecError::DuplicateOperationId(op_id.to_string()));
            }
        }
        Ok(())
    }
}

/// Names of the `{holes}` in a path template, in order.
pub fn path_holes(template: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let Some(close) = rest[open..].find('}') else { break };
        out.push(rest[open + 1..open + close].to_string());
        rest = &rest[open + close + 1..];
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchemaViolation {
    TypeMismatch {
        path: String,
        expected: String,
        found: String,
    },
    MissingField {
        path: String,
        field: String,
    },
    UnresolvedRef(String),
}

impl SchemaViolation {
    pub fn missing(field: &str) -> SchemaViolation {
        SchemaViolation::MissingField {
            path: "$".into(),
            field: field.into(),
        }
    }
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemaViolation::TypeMismatch { path, expected, found } => {
                write!(f, "{path}: expected {expected}, found {found}")
            }
            SchemaViolation::MissingField { path, field } => write!(f, "{path}: missing required field `{field}`"),
            SchemaViolation::UnresolvedRef(r) => write!(f, "schema reference `{r}` does not resolve"),
        }
    }
}

pub fn json_kind(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_f64() => "number",
        Value::Number(_) => "integer",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn is_integral(n: &serde_json::Number) -> bool {
    n.is_i64() || n.is_u64() || n.as_f64().is_some_and(|f| f.fract() == 0.0)
}

/// Structural conformance of `value` to `schema`; `schemas` resolves
/// references. Extra object fields are allowed.
pub fn validate_value(
    schemas: &BTreeMap<String, JsonSchema>,
    schema: &JsonSchema,
    value: &Value,
) -> Vec<SchemaViolation> {
    let mut out = Vec::new();
    validate_at(schemas, schema, value, "$", 0, &mut out);
    out
}

fn validate_at(
    schemas: &BTreeMap<String, JsonSchema>,
    schema: &JsonSchema,
    value: &Value,
    path: &str,
    depth: usize,
    out: &mut Vec<SchemaViolation>,
) {
    let mismatch = |out: &mut Vec<SchemaViolation>, expected: &str| {
        out.push(SchemaViolation::TypeMismatch {
            path: path.to_string(),
            expected: expected.to_string(),
            found: json_kind(value).to_string(),
        })
    };
    match schema {
        JsonSchema::Any => {}
        JsonSchema::Nullable(inner) => {
            if !value.is_null() {
                validate_at(schemas, inner, value, path, depth, out);
            }
        }
        JsonSchema::Ref(name) => match schemas.get(name) {
            Some(target) if depth < 64 => validate_at(schemas, target, value, path, depth + 1, out),
            _ => out.push(SchemaViolation::UnresolvedRef(name.clone())),
        },
        JsonSchema::Integer => match value {
            Value::Number(n) if is_integral(n) => {}
            _ => mismatch(out, "integer"),
        },
        JsonSchema::Number => {
            if !value.is_number() {
                mismatch(out, "number")
            }
        }
        JsonSchema::String => {
            if !value.is_string() {
                mismatch(out, "string")
            }
        }
        JsonSchema::Boolean => {
            if !value.is_boolean() {
                mismatch(out, "boolean")
            }
        }
        JsonSchema::Array(item) => match value {
            Value::Array(items) => {
                for (i, v) in items.iter().enumerate() {
                    validate_at(schemas, item, v, &format!("{path}[{i}]"), depth, out);
                }
            }
            _ => mismatch(out, "array"),
        },
        JsonSchema::Object { properties, required } => match value {
            Value::Object(fields) => {
                for r in required {
                    if !fields.contains_key(r) {
                        out.push(SchemaViolation::MissingField {
                            path: path.to_string(),
                            field: r.clone(),
                        });
                    }
                }
                for (name, sub) in properties {
                    if let Some(v) = fields.get(name) {
                        validate_at(schemas, sub, v, &format!("{path}.{name}"), depth, out);
                    }
                }
            }
            _ => mismatch(out, "object"),
        },
    }
}

/// Follows references until a non-reference schema is reached.
pub fn resolve<'s>(schemas: &'s BTreeMap<String, JsonSchema>, mut schema: &'s JsonSchema) -> Option<&'s JsonSchema> {
    for _ in 0..64 {
        match schema {
            JsonSchema::Ref(name) => schema = schemas.get(name)?,
            other => return Some(other),
        }
    }
    None
}
