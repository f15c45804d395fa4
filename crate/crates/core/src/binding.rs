//! Resolution of model prefixes to concrete HTTP shapes.
//!
//! Every send branch is matched to its OpenAPI operation and each argument
//! is assigned a slot: a declared parameter with the same name (or one of
//! the variable's aliases), else the request body when exactly one argument
//! is left over. Every receive branch is matched to a declared response of
//! the preceding request, and its payload variables to projections of the
//! response body.

use std::collections::BTreeMap;
use std::fmt;

use crate::ast::{Arg, ModelIndex, NodeId, NodeRef, RecvBranch, SendBranch, Session, TypeName};
use crate::openapi::{resolve, validate_value, ApiSpec, JsonSchema, OperationShape, ParamLocation};
use crate::runtime::{AuthLocation, Generator, Preamble};

pub const DEFAULT_API_KEY_HEADER: &str = "X-API-Key";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Slot {
    Path(String),
    Query(String),
    Header(String),
    Body,
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Path(p) => write!(f, "path `{p}`"),
            Slot::Query(p) => write!(f, "query `{p}`"),
            Slot::Header(p) => write!(f, "header `{p}`"),
            Slot::Body => f.write_str("request body"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SendPlan {
    pub op_id: String,
    pub method: String,
    pub path_template: String,
    /// One slot per model argument, in argument order.
    pub slots: Vec<Slot>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Projection {
    WholeBody,
    Field(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecvPlan {
    pub op_id: String,
    pub code: u16,
    pub schema: Option<JsonSchema>,
    /// One projection per declared payload variable.
    pub projections: Vec<Projection>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthPlan {
    pub name: String,
    pub location: AuthLocation,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BindingPlan {
    pub sends: BTreeMap<NodeId, SendPlan>,
    pub recvs: BTreeMap<NodeId, RecvPlan>,
    pub schemas: BTreeMap<String, JsonSchema>,
    pub auth: Option<AuthPlan>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BindError {
    #[error("unknown operationId `{0}`")]
    UnknownOperationId(String),
    #[error("operation `{op}` declares no response {code}")]
    UnknownResponseCode { op: String, code: u16 },
    #[error("response {code} of `{op}` has no body schema, so it cannot bind payload variables")]
    NoResponseSchema { op: String, code: u16 },
    #[error("argument `{arg}` of `{op}` matches no parameter and cannot be the request body")]
    UnboundArg { op: String, arg: String },
    #[error("arguments {args:?} of `{op}` all fall through to the request body")]
    AmbiguousBody { op: String, args: Vec<String> },
    #[error("required path parameter `{param}` of `{op}` is not supplied")]
    MissingPathParam { op: String, param: String },
    #[error("type `{0}` is not a component schema")]
    UnknownSchemaType(String),
    #[error("`{var}: {ty}` does not fit {slot} of `{op}` (schema kind {kind})")]
    ArgTypeMismatch {
        op: String,
        var: String,
        ty: TypeName,
        slot: String,
        kind: String,
    },
    #[error("payload variable `{var}` of `{op}` response {code} matches nothing in the response body")]
    DeclNotInBody { op: String, code: u16, var: String },
    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),
    #[error("generator `{generator}` does not produce values of type {ty}: {detail}")]
    GeneratorTypeMismatch {
        generator: String,
        ty: TypeName,
        detail: String,
    },
    #[error("unknown assertion `{0}`")]
    UnknownPredicate(String),
    #[error("assertion `{name}` takes {expected} arguments, model passes {got}")]
    PredicateArity { name: String, expected: usize, got: usize },
    #[error("request `{0}` is not followed by a receive")]
    MissingResponse(String),
    #[error("receive C{0} at {1} does not follow a request")]
    OrphanReceive(u16, String),
}

pub fn type_schema(ty: &TypeName) -> JsonSchema {
    match ty {
        TypeName::Int => JsonSchema::Integer,
        TypeName::Float => JsonSchema::Number,
        TypeName::String => JsonSchema::String,
        TypeName::Bool => JsonSchema::Boolean,
        TypeName::Named(n) => JsonSchema::Ref(n.clone()),
    }
}

/// Can a value of model type `ty` sit where `schema` is expected?
fn compatible(schemas: &BTreeMap<String, JsonSchema>, ty: &TypeName, schema: &JsonSchema) -> bool {
    if let (TypeName::Named(n), JsonSchema::Ref(m)) = (ty, schema) {
        if n == m {
            return true;
        }
    }
    let Some(target) = resolve(schemas, schema) else {
        return false;
    };
    let target = match target {
        JsonSchema::Nullable(inner) => match resolve(schemas, inner) {
            Some(t) => t,
            None => return false,
        },
        t => t,
    };
    match (ty, target) {
        (_, JsonSchema::Any) => true,
        (TypeName::Int, JsonSchema::Integer | JsonSchema::Number) => true,
        (TypeName::Float, JsonSchema::Number) => true,
        (TypeName::String, JsonSchema::String) => true,
        (TypeName::Bool, JsonSchema::Boolean) => true,
        (TypeName::Named(n), t) => match resolve(schemas, &JsonSchema::Ref(n.clone())) {
            Some(JsonSchema::Any) => true,
            Some(own) => own.kind_name() == t.kind_name(),
            None => false,
        },
        _ => false,
    }
}

/// Binds a well-formed model to an API description. Either every prefix
/// is resolved or every problem found is returned.
pub fn bind(model: &Session, spec: &ApiSpec, preamble: &Preamble) -> Result<BindingPlan, Vec<BindError>> {
    let index = ModelIndex::new(model);
    let mut binder = Binder {
        index: &index,
        spec,
        preamble,
        errors: Vec::new(),
        plan: BindingPlan {
            sends: BTreeMap::new(),
            recvs: BTreeMap::new(),
            schemas: spec.schemas.clone(),
            auth: None,
        },
    };
    binder.session(index.root(), None, &mut Vec::new());
    binder.plan.auth = preamble.auth.as_ref().map(|cfg| AuthPlan {
        name: cfg
            .name
            .clone()
            .or_else(|| spec.api_key.as_ref().map(|k| k.name.clone()))
            .unwrap_or_else(|| DEFAULT_API_KEY_HEADER.to_string()),
        location: cfg.location.unwrap_or(match spec.api_key.as_ref().map(|k| k.location) {
            Some(ParamLocation::Query) => AuthLocation::Query,
            _ => AuthLocation::Header,
        }),
        value: preamble.auth_value().unwrap_or_default(),
    });
    if binder.errors.is_empty() {
        Ok(binder.plan)
    } else {
        Err(binder.errors)
    }
}

struct Binder<'i, 'a> {
    index: &'i ModelIndex<'a>,
    spec: &'i ApiSpec,
    preamble: &'i Preamble,
    errors: Vec<BindError>,
    plan: BindingPlan,
}

impl Binder<'_, '_> {
    fn known_type(&mut self, ty: &TypeName) -> bool {
        match ty {
            TypeName::Named(n) if !self.spec.schemas.contains_key(n) => {
                let err = BindError::UnknownSchemaType(n.clone());
                if !self.errors.contains(&err) {
                    self.errors.push(err);
                }
                false
            }
            _ => true,
        }
    }

    /// `after` is the operation whose response the session must handle.
    fn session(&mut self, id: NodeId, after: Option<&str>, scope: &mut Vec<(String, TypeName)>) {
        let node = self.index.node(id);
        let NodeRef::Session(session) = node.node else {
            unreachable!()
        };
        let children = node.children.clone();
        match session {
            Session::External(branches) => {
                for (b, bid) in branches.iter().zip(children) {
                    self.recv(bid, b, after, scope);
                }
            }
            _ if after.is_some_and(|op| self.spec.operations.contains_key(op)) => {
                self.errors.push(BindError::MissingResponse(after.unwrap().to_string()));
                self.session_inner(session, children, scope);
            }
            _ => self.session_inner(session, children, scope),
        }
    }

    fn session_inner(&mut self, session: &Session, children: Vec<NodeId>, scope: &mut Vec<(String, TypeName)>) {
        match session {
            Session::Internal(branches) => {
                for (b, bid) in branches.iter().zip(children) {
                    self.send(bid, b, scope);
                }
            }
            Session::Rec { .. } => self.session(children[0], None, scope),
            _ => {}
        }
    }

    fn send(&mut self, id: NodeId, branch: &SendBranch, scope: &mut Vec<(String, TypeName)>) {
        let mark = scope.len();
        for arg in &branch.args {
            if let Arg::Fresh { name, ty, generator } = arg {
                if self.known_type(ty) {
                    self.check_generator(generator, ty);
                }
                scope.push((name.clone(), ty.clone()));
            }
        }
        let cont = self.index.node(id).children[0];
        match self.spec.operations.get(&branch.op) {
            Some(op) => {
                let scope_at_send = scope[..mark].to_vec();
                if let Some(plan) = self.plan_send(branch, op, &scope_at_send) {
                    self.plan.sends.insert(id, plan);
                }
            }
            None => self.errors.push(BindError::UnknownOperationId(branch.op.clone())),
        }
        self.session(cont, Some(&branch.op), scope);
        scope.truncate(mark);
    }

    fn check_generator(&mut self, generator: &str, ty: &TypeName) {
        let Some(spec) = self.preamble.generator(generator) else {
            self.errors.push(BindError::UnknownGenerator(generator.to_string()));
            return;
        };
        let schema = type_schema(ty);
        let mismatch = |detail: String| BindError::GeneratorTypeMismatch {
            generator: generator.to_string(),
            ty: ty.clone(),
            detail,
        };
        match Generator::new(self.preamble, 0).generate(&spec) {
            Ok(sample) => {
                let violations = validate_value(&self.spec.schemas, &schema, &sample);
                if let Some(v) = violations.first() {
                    self.errors.push(mismatch(format!("sample {sample}: {v}")));
                }
            }
            Err(e) => self.errors.push(mismatch(e.to_string())),
        }
        let domain = self
            .preamble
            .generators
            .get(generator)
            .and_then(|d| d.oracle_domain.as_ref());
        for value in domain.into_iter().flatten() {
            if let Some(v) = validate_value(&self.spec.schemas, &schema, value).first() {
                self.errors.push(mismatch(format!("oracle domain value {value}: {v}")));
            }
        }
    }

    fn plan_send(
        &mut self,
        branch: &SendBranch,
        op: &OperationShape,
        scope: &[(String, TypeName)],
    ) -> Option<SendPlan> {
        let before = self.errors.len();
        let arg_type = |arg: &Arg| -> Option<TypeName> {
            match arg {
                Arg::Fresh { ty, .. } => Some(ty.clone()),
                Arg::Ref(x) => scope.iter().rev().find(|(n, _)| n == x).map(|(_, t)| t.clone()),
            }
        };
        let mut slots: Vec<Option<Slot>> = vec![None; branch.args.len()];
        let mut used: Vec<&str> = Vec::new();
        for (i, arg) in branch.args.iter().enumerate() {
            let found = self
                .preamble
                .param_candidates(arg.name())
                .into_iter()
                .find_map(|c| op.param(c).filter(|p| !used.contains(&p.name.as_str())));
            if let Some(param) = found {
                used.push(&param.name);
                if let Some(ty) = arg_type(arg) {
                    if !compatible(&self.spec.schemas, &ty, &param.schema) {
                        self.errors.push(BindError::ArgTypeMismatch {
                            op: branch.op.clone(),
                            var: arg.name().to_string(),
                            ty,
                            slot: format!("{} parameter `{}`", param.location, param.name),
                            kind: param.schema.kind_name().to_string(),
                        });
                    }
                }
                slots[i] = Some(match param.location {
                    ParamLocation::Path => Slot::Path(param.name.clone()),
                    ParamLocation::Query => Slot::Query(param.name.clone()),
                    ParamLocation::Header => Slot::Header(param.name.clone()),
                });
            }
        }
        let leftover: Vec<usize> = (0..slots.len()).filter(|i| slots[*i].is_none()).collect();
        match (leftover.as_slice(), &op.request_body) {
            ([], _) => {}
            ([i], Some(body)) => {
                let arg = &branch.args[*i];
                if let Some(ty) = arg_type(arg) {
                    if !compatible(&self.spec.schemas, &ty, body) {
                        self.errors.push(BindError::ArgTypeMismatch {
                            op: branch.op.clone(),
                            var: arg.name().to_string(),
                            ty,
                            slot: "request body".into(),
                            kind: body.kind_name().to_string(),
                        });
                    }
                }
                slots[*i] = Some(Slot::Body);
            }
            (many, Some(_)) => self.errors.push(BindError::AmbiguousBody {
                op: branch.op.clone(),
                args: many.iter().map(|i| branch.args[*i].name().to_string()).collect(),
            }),
            (many, None) => {
                for i in many {
                    self.errors.push(BindError::UnboundArg {
                        op: branch.op.clone(),
                        arg: branch.args[*i].name().to_string(),
                    });
                }
            }
        }
        for p in op.params.iter().filter(|p| p.location == ParamLocation::Path) {
            if !used.contains(&p.name.as_str()) {
                self.errors.push(BindError::MissingPathParam {
                    op: branch.op.clone(),
                    param: p.name.clone(),
                });
            }
        }
        if self.errors.len() > before {
            return None;
        }
        Some(SendPlan {
            op_id: branch.op.clone(),
            method: op.method.clone(),
            path_template: op.path_template.clone(),
            slots: slots.into_iter().map(Option::unwrap).collect(),
        })
    }

    fn recv(&mut self, id: NodeId, branch: &RecvBranch, after: Option<&str>, scope: &mut Vec<(String, TypeName)>) {
        let mark = scope.len();
        for d in &branch.decls {
            self.known_type(&d.ty);
            scope.push((d.name.clone(), d.ty.clone()));
        }
        if let Some(call) = &branch.assertion {
            match self.preamble.predicate_arity(&call.predicate) {
                None => self.errors.push(BindError::UnknownPredicate(call.predicate.clone())),
                Some(n) if n != call.args.len() => self.errors.push(BindError::PredicateArity {
                    name: call.predicate.clone(),
                    expected: n,
                    got: call.args.len(),
                }),
                Some(_) => {}
            }
        }
        match after {
            None => self
                .errors
                .push(BindError::OrphanReceive(branch.code, self.index.node(id).path.clone())),
            Some(op_id) => {
                if let Some(op) = self.spec.operations.get(op_id) {
                    if let Some(plan) = self.plan_recv(op_id, op, branch) {
                        self.plan.recvs.insert(id, plan);
                    }
                }
            }
        }
        let cont = self.index.node(id).children[0];
        self.session(cont, None, scope);
        scope.truncate(mark);
    }

    fn plan_recv(&mut self, op_id: &str, op: &OperationShape, branch: &RecvBranch) -> Option<RecvPlan> {
        let Some(schema) = op.responses.get(&branch.code) else {
            self.errors.push(BindError::UnknownResponseCode {
                op: op_id.to_string(),
                code: branch.code,
            });
            return None;
        };
        let mut projections = Vec::new();
        if !branch.decls.is_empty() {
            let Some(schema) = schema else {
                self.errors.push(BindError::NoResponseSchema {
                    op: op_id.to_string(),
                    code: branch.code,
                });
                return None;
            };
            let schemas = &self.spec.schemas;
            let fields = match resolve(schemas, schema) {
                Some(JsonSchema::Object { properties, .. }) => Some(properties),
                _ => None,
            };
            let field_for = |var: &str, ty: &TypeName| -> Option<Projection> {
                let props = fields?;
                self.preamble
                    .param_candidates(var)
                    .into_iter()
                    .find(|c| props.get(*c).is_some_and(|s| compatible(schemas, ty, s)))
                    .map(|c| Projection::Field(c.to_string()))
            };
            let single = branch.decls.len() == 1;
            for d in &branch.decls {
                let projection = if single && compatible(schemas, &d.ty, schema) {
                    Some(Projection::WholeBody)
                } else {
                    field_for(&d.name, &d.ty)
                };
                match projection {
                    Some(p) => projections.push(p),
                    None => {
                        self.errors.push(BindError::DeclNotInBody {
                            op: op_id.to_string(),
                            code: branch.code,
                            var: d.name.clone(),
                        });
                        return None;
                    }
                }
            }
        }
        Some(RecvPlan {
            op_id: op_id.to_string(),
            code: branch.code,
            schema: schema.clone(),
            projections,
        })
    }
}
