//! Bounded trace semantics of models.
//!
//! A model denotes the set of complete traces it admits. Generated values
//! range over finite per-generator domains and received payloads over
//! finite per-(code, type) domains. Recursion is unfolded at most
//! `rec_bound` times per binder; a branch that would need one more jump
//! contributes nothing.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ast::{check_well_formed, Arg, RecvBranch, SendBranch, Session, TypeName, WfErrorKind};
use crate::runtime::{eval_named, values_equal, Env, EnvError, Preamble};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Send,
    Recv,
}

/// An instantiated prefix: an operation call with its argument values, or
/// a response code (label `C<code>`) with its payload values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub dir: Direction,
    pub label: String,
    pub payload: Vec<Value>,
}

impl Event {
    pub fn send(op: &str, payload: Vec<Value>) -> Event {
        Event {
            dir: Direction::Send,
            label: op.to_string(),
            payload,
        }
    }

    pub fn recv(code: u16, payload: Vec<Value>) -> Event {
        Event {
            dir: Direction::Recv,
            label: recv_label(code),
            payload,
        }
    }

    fn payload_key(&self) -> Vec<String> {
        self.payload.iter().map(Value::to_string).collect()
    }
}

pub fn recv_label(code: u16) -> String {
    format!("C{code}")
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.dir, &self.label)
            .cmp(&(other.dir, &other.label))
            .then_with(|| self.payload_key().cmp(&other.payload_key()))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = match self.dir {
            Direction::Send => '!',
            Direction::Recv => '?',
        };
        write!(f, "{mark}{}({})", self.label, self.payload_key().join(","))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trace(pub Vec<Event>);

impl Trace {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Canonical one-line form: events separated by spaces, `ε` when empty.
impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("ε");
        }
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnumConfig {
    pub rec_bound: usize,
    pub domains: BTreeMap<String, Vec<Value>>,
    pub input_domains: BTreeMap<(u16, TypeName), Vec<Value>>,
}

impl EnumConfig {
    pub fn new(rec_bound: usize) -> EnumConfig {
        EnumConfig {
            rec_bound,
            ..EnumConfig::default()
        }
    }

    pub fn domain(mut self, generator: &str, values: Vec<Value>) -> Self {
        self.domains.insert(generator.to_string(), values);
        self
    }

    pub fn input_domain(mut self, code: u16, ty: TypeName, values: Vec<Value>) -> Self {
        self.input_domains.insert((code, ty), values);
        self
    }

    /// Collects domains from generator `oracleDomain` entries and the
    /// `oracle` section. `rec_bound` overrides the section's bound.
    pub fn from_preamble(preamble: &Preamble, rec_bound: Option<usize>) -> Result<EnumConfig, SemanticsError> {
        let oracle = preamble.oracle.as_ref();
        let rec_bound = rec_bound
            .or_else(|| oracle.and_then(|o| o.rec_bound))
            .ok_or(SemanticsError::UnboundedModel)?;
        let mut cfg = EnumConfig::new(rec_bound);
        for (name, def) in &preamble.generators {
            if let Some(values) = &def.oracle_domain {
                cfg.domains.insert(name.clone(), values.clone());
            }
        }
        if let Some(o) = oracle {
            for (name, values) in &o.domains {
                cfg.domains.insert(name.clone(), values.clone());
            }
            for d in &o.input_domains {
                cfg.input_domains.insert((d.code, d.ty.clone()), d.values.clone());
            }
        }
        Ok(cfg)
    }

    /// Every generator and receive type the model uses has a non-empty domain.
    pub fn check(&self, model: &Session) -> Result<(), SemanticsError> {
        let closed: Vec<String> = check_well_formed(model)
            .into_iter()
            .filter_map(|e| match e.kind {
                WfErrorKind::UnboundRecursionVariable(x) => Some(x),
                _ => None,
            })
            .collect();
        if let Some(x) = closed.into_iter().next() {
            return Err(SemanticsError::OpenModel(x));
        }
        let mut result = Ok(());
        crate::ast::walk(model, &mut |s| {
            if result.is_err() {
                return;
            }
            match s {
                Session::Internal(bs) => {
                    for arg in bs.iter().flat_map(|b| &b.args) {
                        if let Arg::Fresh { generator, .. } = arg {
                            if self.domains.get(generator).is_none_or(Vec::is_empty) {
                                result = Err(SemanticsError::MissingDomain(generator.clone()));
                            }
                        }
                    }
                }
                Session::External(bs) => {
                    for b in bs {
                        for d in &b.decls {
                            if self
                                .input_domains
                                .get(&(b.code, d.ty.clone()))
                                .is_none_or(Vec::is_empty)
                            {
                                result = Err(SemanticsError::MissingDomain(format!("C{}:{}", b.code, d.ty)));
                            }
                        }
                    }
                }
                _ => {}
            }
        });
        result
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SemanticsError {
    #[error("no oracle domain for `{0}`")]
    MissingDomain(String),
    #[error("no recursion bound given")]
    UnboundedModel,
    #[error("recursion variable `{0}` is not bound by an enclosing `rec`")]
    OpenModel(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Unfolding context of one recursion binder: its body, the environment at
/// entry and the jumps still allowed.
#[derive(Clone)]
struct Frame<'m> {
    var: &'m str,
    body: &'m Session,
    env: Env,
    remaining: usize,
}

#[derive(Clone, Default)]
struct RecCtx<'m>(Vec<Frame<'m>>);

impl<'m> RecCtx<'m> {
    fn enter(&self, var: &'m str, body: &'m Session, env: &Env, bound: usize) -> RecCtx<'m> {
        let mut frames = self.0.clone();
        frames.retain(|f| f.var != var);
        frames.push(Frame {
            var,
            body,
            env: env.clone(),
            remaining: bound,
        });
        RecCtx(frames)
    }

    /// The context after jumping back to `var`, or `None` once the bound is
    /// spent. Binders nested inside `var` are dropped: they are re-entered
    /// (with fresh counters) when the body is unfolded again.
    fn jump(&self, var: &str) -> Option<(Frame<'m>, RecCtx<'m>)> {
        let i = self.0.iter().rposition(|f| f.var == var)?;
        let frame = &self.0[i];
        if frame.remaining == 0 {
            return None;
        }
        let mut frames = self.0[..=i].to_vec();
        frames[i].remaining -= 1;
        Some((frames[i].clone(), RecCtx(frames)))
    }
}

fn assertion_holds(preamble: &Preamble, branch: &RecvBranch, env: &Env) -> Result<bool, SemanticsError> {
    let Some(call) = &branch.assertion else { return Ok(true) };
    let args = call
        .args
        .iter()
        .map(|a| env.lookup(a).cloned())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(eval_named(preamble, &call.predicate, &args).unwrap_or(false))
}

/// Cartesian product of the candidate lists.
fn tuples(choices: &[Vec<Value>]) -> Vec<Vec<Value>> {
    let mut out = vec![Vec::new()];
    for options in choices {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                options.iter().map(move |v| {
                    let mut t = prefix.clone();
                    t.push(v.clone());
                    t
                })
            })
            .collect();
    }
    out
}

/// All traces of `model` under `cfg`, starting from `env`.
pub fn enumerate_traces(
    model: &Session,
    cfg: &EnumConfig,
    preamble: &Preamble,
    env: &Env,
) -> Result<BTreeSet<Trace>, SemanticsError> {
    cfg.check(model)?;
    let en = Enumerator { cfg, preamble };
    Ok(en
        .traces(model, env, &RecCtx::default())?
        .into_iter()
        .map(Trace)
        .collect())
}

struct Enumerator<'c> {
    cfg: &'c EnumConfig,
    preamble: &'c Preamble,
}

impl Enumerator<'_> {
    fn traces<'m>(&self, s: &'m Session, env: &Env, ctx: &RecCtx<'m>) -> Result<Vec<Vec<Event>>, SemanticsError> {
        match s {
            Session::End => Ok(vec![Vec::new()]),
            Session::Var(x) => match ctx.jump(x) {
                Some((frame, ctx)) => self.traces(frame.body, &frame.env, &ctx),
                None => Ok(Vec::new()),
            },
            Session::Rec { var, body } => self.traces(body, env, &ctx.enter(var, body, env, self.cfg.rec_bound)),
            Session::Internal(branches) => {
                let mut out = Vec::new();
                for b in branches {
                    for values in tuples(&self.arg_choices(b, env)?) {
                        let mut inner = env.clone();
                        for (arg, v) in b.args.iter().zip(&values) {
                            if let Arg::Fresh { name, .. } = arg {
                                inner = inner.bind(name, v.clone())?;
                            }
                        }
                        let head = Event::send(&b.op, values);
                        for tail in self.traces(&b.cont, &inner, ctx)? {
                            out.push(prepend(&head, tail));
                        }
                    }
                }
                Ok(out)
            }
            Session::External(branches) => {
                let mut out = Vec::new();
                for b in branches {
                    let choices: Vec<Vec<Value>> = b
                        .decls
                        .iter()
                        .map(|d| self.cfg.input_domains[&(b.code, d.ty.clone())].clone())
                        .collect();
                    for values in tuples(&choices) {
                        let mut inner = env.clone();
                        for (d, v) in b.decls.iter().zip(&values) {
                            inner = inner.bind(&d.name, v.clone())?;
                        }
                        if !assertion_holds(self.preamble, b, &inner)? {
                            continue;
                        }
                        let head = Event::recv(b.code, values);
                        for tail in self.traces(&b.cont, &inner, ctx)? {
                            out.push(prepend(&head, tail));
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    fn arg_choices(&self, b: &SendBranch, env: &Env) -> Result<Vec<Vec<Value>>, SemanticsError> {
        b.args
            .iter()
            .map(|arg| match arg {
                Arg::Ref(x) => Ok(vec![env.lookup(x)?.clone()]),
                Arg::Fresh { generator, .. } => Ok(self.cfg.domains[generator].clone()),
            })
            .collect()
    }
}

fn prepend(head: &Event, mut tail: Vec<Event>) -> Vec<Event> {
    tail.insert(0, head.clone());
    tail
}

/// Whether `trace` is a complete trace of `model`, decided by stepping the
/// model against the trace rather than enumerating the set.
pub fn trace_membership(
    model: &Session,
    cfg: &EnumConfig,
    preamble: &Preamble,
    env: &Env,
    trace: &Trace,
) -> Result<bool, SemanticsError> {
    cfg.check(model)?;
    let en = Enumerator { cfg, preamble };
    en.member(model, env, &RecCtx::default(), &trace.0)
}

fn in_domain(domain: &[Value], v: &Value) -> bool {
    domain.iter().any(|d| values_equal(d, v, &[]))
}

impl Enumerator<'_> {
    fn member<'m>(&self, s: &'m Session, env: &Env, ctx: &RecCtx<'m>, rest: &[Event]) -> Result<bool, SemanticsError> {
        match s {
            Session::End => Ok(rest.is_empty()),
            Session::Var(x) => match ctx.jump(x) {
                Some((frame, ctx)) => self.member(frame.body, &frame.env, &ctx, rest),
                None => Ok(false),
            },
            Session::Rec { var, body } => self.member(body, env, &ctx.enter(var, body, env, self.cfg.rec_bound), rest),
            Session::Internal(branches) => {
                let Some((e, rest)) = rest.split_first() else {
                    return Ok(false);
                };
                if e.dir != Direction::Send {
                    return Ok(false);
                }
                for b in branches
                    .iter()
                    .filter(|b| b.op == e.label && b.args.len() == e.payload.len())
                {
                    let mut inner = env.clone();
                    let mut ok = true;
                    for (arg, v) in b.args.iter().zip(&e.payload) {
                        ok = match arg {
                            Arg::Ref(x) => values_equal(env.lookup(x)?, v, &[]),
                            Arg::Fresh { name, generator, .. } => {
                                inner = inner.bind(name, v.clone())?;
                                in_domain(&self.cfg.domains[generator], v)
                            }
                        };
                        if !ok {
                            break;
                        }
                    }
                    if ok && self.member(&b.cont, &inner, ctx, rest)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            Session::External(branches) => {
                let Some((e, rest)) = rest.split_first() else {
                    return Ok(false);
                };
                if e.dir != Direction::Recv {
                    return Ok(false);
                }
                for b in branches
                    .iter()
                    .filter(|b| recv_label(b.code) == e.label && b.decls.len() == e.payload.len())
                {
                    let mut inner = env.clone();
                    let mut ok = true;
                    for (d, v) in b.decls.iter().zip(&e.payload) {
                        inner = inner.bind(&d.name, v.clone())?;
                        ok &= in_domain(&self.cfg.input_domains[&(b.code, d.ty.clone())], v);
                    }
                    if ok && assertion_holds(self.preamble, b, &inner)? && self.member(&b.cont, &inner, ctx, rest)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
        }
    }
}
