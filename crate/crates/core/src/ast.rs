//! Abstract syntax of session-type test models.
//!
//! A model is a tree of internal choices (the client picks a request to
//! send), external choices (the server picks the response code),
//! recursion binders and `end`. Every send and every receive is a branch
//! of a choice; a plain `!op(..).?C200()...` chain is a one-branch internal
//! choice followed by a one-branch external choice.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Session {
    Internal(Vec<SendBranch>),
    External(Vec<RecvBranch>),
    Rec { var: String, body: Box<Session> },
    Var(String),
    End,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SendBranch {
    pub op: String,
    pub args: Vec<Arg>,
    pub cont: Session,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Arg {
    /// A variable bound earlier in the run.
    Ref(String),
    /// `name: Type(generator)`, bound here from a generator.
    Fresh {
        name: String,
        ty: TypeName,
        generator: String,
    },
}

impl Arg {
    pub fn name(&self) -> &str {
        match self {
            Arg::Ref(name) | Arg::Fresh { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RecvBranch {
    pub code: u16,
    pub decls: Vec<Decl>,
    pub assertion: Option<AssertionCall>,
    pub cont: Session,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Decl {
    pub name: String,
    pub ty: TypeName,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AssertionCall {
    pub predicate: String,
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum TypeName {
    Int,
    String,
    Bool,
    Float,
    Named(String),
}

impl TypeName {
    pub fn from_ident(ident: &str) -> TypeName {
        match ident {
            "Int" => TypeName::Int,
            "String" => TypeName::String,
            "Bool" => TypeName::Bool,
            "Float" => TypeName::Float,
            other => TypeName::Named(other.to_string()),
        }
    }
}

impl fmt::Display for TypeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeName::Int => f.write_str("Int"),
            TypeName::String => f.write_str("String"),
            TypeName::Bool => f.write_str("Bool"),
            TypeName::Float => f.write_str("Float"),
            TypeName::Named(name) => f.write_str(name),
        }
    }
}

impl From<TypeName> for String {
    fn from(ty: TypeName) -> String {
        ty.to_string()
    }
}

impl From<String> for TypeName {
    fn from(s: String) -> TypeName {
        TypeName::from_ident(&s)
    }
}

pub const KEYWORDS: &[&str] = &["rec", "end"];

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_') && !KEYWORDS.contains(&s)
}

pub fn is_rec_var_name(s: &str) -> bool {
    is_identifier(s) && s.starts_with(|c: char| c.is_ascii_uppercase())
}

/// Preorder position of a node in a model: session nodes and choice
/// branches share one numbering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum NodeRef<'a> {
    Session(&'a Session),
    Send(&'a SendBranch),
    Recv(&'a RecvBranch),
}

#[derive(Debug, Clone)]
pub struct IndexedNode<'a> {
    pub node: NodeRef<'a>,
    /// Branches of a choice, the body of a `rec`, or the continuation of a
    /// branch.
    pub children: Vec<NodeId>,
    pub path: String,
}

/// Flat preorder view of a model with stable node ids.
#[derive(Debug, Clone)]
pub struct ModelIndex<'a> {
    nodes: Vec<IndexedNode<'a>>,
}

impl<'a> ModelIndex<'a> {
    pub fn new(root: &'a Session) -> Self {
        let mut index = ModelIndex { nodes: Vec::new() };
        index.visit_session(root, "root".to_string());
        index
    }

    fn push(&mut self, node: NodeRef<'a>, path: String) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(IndexedNode {
            node,
            children: Vec::new(),
            path,
        });
        id
    }

    fn visit_session(&mut self, session: &'a Session, path: String) -> NodeId {
        let id = self.push(NodeRef::Session(session), path.clone());
        let children = match session {
            Session::Internal(branches) => branches
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    let bpath = format!("{path}/+[{i}:{}]", b.op);
                    let bid = self.push(NodeRef::Send(b), bpath.clone());
                    let cont = self.visit_session(&b.cont, bpath);
                    self.nodes[bid.0 as usize].children.push(cont);
                    bid
                })
                .collect(),
            Session::External(branches) => branches
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    let bpath = format!("{path}/&[{i}:C{}]", b.code);
                    let bid = self.push(NodeRef::Recv(b), bpath.clone());
                    let cont = self.visit_session(&b.cont, bpath);
                    self.nodes[bid.0 as usize].children.push(cont);
                    bid
                })
                .collect(),
            Session::Rec { var, body } => vec![self.visit_session(body, format!("{path}/rec {var}"))],
            Session::Var(_) | Session::End => Vec::new(),
        };
        self.nodes[id.0 as usize].children = children;
        id
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, id: NodeId) -> Option<&IndexedNode<'a>> {
        self.nodes.get(id.0 as usize)
    }

    pub fn node(&self, id: NodeId) -> &IndexedNode<'a> {
        &self.nodes[id.0 as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &IndexedNode<'a>)> {
        self.nodes.iter().enumerate().map(|(i, n)| (NodeId(i as u32), n))
    }

    /// Ids of every send and receive prefix.
    pub fn prefixes(&self) -> BTreeSet<NodeId> {
        self.iter()
            .filter(|(_, n)| matches!(n.node, NodeRef::Send(_) | NodeRef::Recv(_)))
            .map(|(id, _)| id)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WfErrorKind {
    EmptyChoice,
    UnboundRecursionVariable(String),
    InvalidRecVarName(String),
    InvalidIdentifier(String),
    DuplicateArg(String),
    DuplicateDecl(String),
    UnboundVariable(String),
    Rebinding(String),
    InvalidStatusCode(u16),
    DuplicateResponseCode(u16),
}

impl fmt::Display for WfErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WfErrorKind::EmptyChoice => write!(f, "choice has no branches"),
            WfErrorKind::UnboundRecursionVariable(x) => {
                write!(f, "recursion variable `{x}` has no enclosing `rec {x}`")
            }
            WfErrorKind::InvalidRecVarName(x) => {
                write!(f, "`{x}` is not a valid recursion variable (must start uppercase)")
            }
            WfErrorKind::InvalidIdentifier(x) => write!(f, "`{x}` is not a valid identifier"),
            WfErrorKind::DuplicateArg(x) => write!(f, "argument `{x}` appears twice in one request"),
            WfErrorKind::DuplicateDecl(x) => write!(f, "payload variable `{x}` declared twice"),
            WfErrorKind::UnboundVariable(x) => write!(f, "variable `{x}` is used before it is bound"),
            WfErrorKind::Rebinding(x) => write!(f, "variable `{x}` is already bound on this path"),
            WfErrorKind::InvalidStatusCode(c) => write!(f, "status code {c} is outside 100..=599"),
            WfErrorKind::DuplicateResponseCode(c) => {
                write!(f, "response code C{c} appears in more than one branch")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WellFormednessError {
    pub node: NodeId,
    pub path: String,
    pub kind: WfErrorKind,
}

impl fmt::Display for WellFormednessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}", self.kind, self.path)
    }
}

impl std::error::Error for WellFormednessError {}

/// Checks every structural side condition a model must satisfy before it
/// can be bound or executed. Returns all violations, in preorder.
pub fn check_well_formed(model: &Session) -> Vec<WellFormednessError> {
    let index = ModelIndex::new(model);
    let mut errors = Vec::new();
    let mut checker = WfChecker {
        index: &index,
        errors: &mut errors,
    };
    checker.session(index.root(), &mut Vec::new(), &mut Vec::new());
    errors
}

struct WfChecker<'i, 'a> {
    index: &'i ModelIndex<'a>,
    errors: &'i mut Vec<WellFormednessError>,
}

impl WfChecker<'_, '_> {
    fn report(&mut self, node: NodeId, kind: WfErrorKind) {
        self.errors.push(WellFormednessError {
            node,
            path: self.index.node(node).path.clone(),
            kind,
        });
    }

    fn check_ident(&mut self, node: NodeId, name: &str) {
        if !is_identifier(name) {
            self.report(node, WfErrorKind::InvalidIdentifier(name.to_string()));
        }
    }

    fn session(&mut self, id: NodeId, bound: &mut Vec<String>, recs: &mut Vec<String>) {
        let entry = self.index.node(id);
        let NodeRef::Session(session) = entry.node else {
            unreachable!("session id points at a branch")
        };
        let children = entry.children.clone();
        match session {
            Session::End => {}
            Session::Var(x) => {
                if !recs.iter().any(|r| r == x) {
                    self.report(id, WfErrorKind::UnboundRecursionVariable(x.clone()));
                }
            }
            Session::Rec { var, .. } => {
                if !is_rec_var_name(var) {
                    self.report(id, WfErrorKind::InvalidRecVarName(var.clone()));
                }
                recs.push(var.clone());
                self.session(children[0], bound, recs);
                recs.pop();
            }
            Session::Internal(branches) => {
                if branches.is_empty() {
                    self.report(id, WfErrorKind::EmptyChoice);
                }
                for (branch, bid) in branches.iter().zip(children) {
                    self.send(bid, branch, bound, recs);
                }
            }
            Session::External(branches) => {
                if branches.is_empty() {
                    self.report(id, WfErrorKind::EmptyChoice);
                }
                let mut seen = BTreeSet::new();
                for (branch, bid) in branches.iter().zip(children) {
                    if !seen.insert(branch.code) {
                        self.report(bid, WfErrorKind::DuplicateResponseCode(branch.code));
                    }
                    self.recv(bid, branch, bound, recs);
                }
            }
        }
    }

    fn send(&mut self, id: NodeId, branch: &SendBranch, bound: &mut Vec<String>, recs: &mut Vec<String>) {
        self.check_ident(id, &branch.op);
        let mark = bound.len();
        let mut names = BTreeSet::new();
        for arg in &branch.args {
            let name = arg.name();
            self.check_ident(id, name);
            if !names.insert(name.to_string()) {
                self.report(id, WfErrorKind::DuplicateArg(name.to_string()));
                continue;
            }
            match arg {
                Arg::Ref(x) => {
                    if !bound[..mark].contains(x) {
                        self.report(id, WfErrorKind::UnboundVariable(x.clone()));
                    }
                }
                Arg::Fresh { name, ty, generator } => {
                    if let TypeName::Named(t) = ty {
                        self.check_ident(id, t);
                    }
                    self.check_ident(id, generator);
                    if bound[..mark].contains(name) {
                        self.report(id, WfErrorKind::Rebinding(name.clone()));
                    } else {
                        bound.push(name.clone());
                    }
                }
            }
        }
        let cont = self.index.node(id).children[0];
        self.session(cont, bound, recs);
        bound.truncate(mark);
    }

    fn recv(&mut self, id: NodeId, branch: &RecvBranch, bound: &mut Vec<String>, recs: &mut Vec<String>) {
        if !(100..=599).contains(&branch.code) {
            self.report(id, WfErrorKind::InvalidStatusCode(branch.code));
        }
        let mark = bound.len();
        let mut names = BTreeSet::new();
        for decl in &branch.decls {
            self.check_ident(id, &decl.name);
            if let TypeName::Named(t) = &decl.ty {
                self.check_ident(id, t);
            }
            if !names.insert(decl.name.clone()) {
                self.report(id, WfErrorKind::DuplicateDecl(decl.name.clone()));
            } else if bound[..mark].contains(&decl.name) {
                self.report(id, WfErrorKind::Rebinding(decl.name.clone()));
            } else {
                bound.push(decl.name.clone());
            }
        }
        if let Some(call) = &branch.assertion {
            self.check_ident(id, &call.predicate);
            for arg in &call.args {
                if !bound.contains(arg) {
                    self.report(id, WfErrorKind::UnboundVariable(arg.clone()));
                }
            }
        }
        let cont = self.index.node(id).children[0];
        self.session(cont, bound, recs);
        bound.truncate(mark);
    }
}

/// Data variables used in `session` but not bound on the path that reaches
/// the use, given the names already in scope.
pub fn free_vars(session: &Session, bound_so_far: &BTreeSet<String>) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut bound: Vec<String> = bound_so_far.iter().cloned().collect();
    collect_free(session, &mut bound, &mut out);
    out
}

fn collect_free(session: &Session, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    match session {
        Session::End | Session::Var(_) => {}
        Session::Rec { body, .. } => collect_free(body, bound, out),
        Session::Internal(branches) => {
            for b in branches {
                let mark = bound.len();
                for arg in &b.args {
                    match arg {
                        Arg::Ref(x) if !bound[..mark].contains(x) => {
                            out.insert(x.clone());
                        }
                        Arg::Ref(_) => {}
                        Arg::Fresh { name, .. } => bound.push(name.clone()),
                    }
                }
                collect_free(&b.cont, bound, out);
                bound.truncate(mark);
            }
        }
        Session::External(branches) => {
            for b in branches {
                let mark = bound.len();
                bound.extend(b.decls.iter().map(|d| d.name.clone()));
                if let Some(call) = &b.assertion {
                    for a in &call.args {
                        if !bound.contains(a) {
                            out.insert(a.clone());
                        }
                    }
                }
                collect_free(&b.cont, bound, out);
                bound.truncate(mark);
            }
        }
    }
}

/// Names of generators referenced anywhere in the model.
pub fn generators(session: &Session) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    walk(session, &mut |s| {
        if let Session::Internal(branches) = s {
            for b in branches {
                for arg in &b.args {
                    if let Arg::Fresh { generator, .. } = arg {
                        out.insert(generator.clone());
                    }
                }
            }
        }
    });
    out
}

/// Visits every session node in preorder.
pub fn walk<'a>(session: &'a Session, f: &mut impl FnMut(&'a Session)) {
    f(session);
    match session {
        Session::Internal(branches) => branches.iter().for_each(|b| walk(&b.cont, f)),
        Session::External(branches) => branches.iter().for_each(|b| walk(&b.cont, f)),
        Session::Rec { body, .. } => walk(body, f),
        Session::Var(_) | Session::End => {}
    }
}
