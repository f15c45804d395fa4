//! Shared helpers for integration tests: a random model builder, a
//! synthetic API for random models, a scripted service stub and a naive
//! reference implementation of the trace semantics.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use cots::ast::{Arg, AssertionCall, Decl, RecvBranch, SendBranch, Session, TypeName};
use cots::driver::{HttpRequest, HttpResponse, Transport, TransportError};
use cots::openapi::{ApiSpec, JsonSchema, OperationShape, Param, ParamLocation};
use cots::runtime::{eval_named, GeneratorDef, GeneratorSpec, Preamble};
use cots::semantics::{EnumConfig, Event, Trace};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

/// Parameters of the random model builder.
#[derive(Debug, Clone)]
pub struct Shape {
    pub max_prefixes: usize,
    /// Every request is followed by a receive and receives follow only
    /// requests, so the model can be bound and driven.
    pub shaped: bool,
    pub max_depth: usize,
    pub max_branches: usize,
    pub max_args: usize,
    pub types: Vec<TypeName>,
    pub assertions: bool,
}

impl Shape {
    /// Small driveable models over scalar types.
    pub fn small() -> Shape {
        Shape {
            max_prefixes: 5,
            shaped: true,
            max_depth: 6,
            max_branches: 2,
            max_args: 2,
            types: vec![TypeName::Int, TypeName::String, TypeName::Bool],
            assertions: true,
        }
    }

    /// Driveable models with at most three prefixes.
    pub fn three_prefix() -> Shape {
        Shape {
            max_prefixes: 3,
            ..Shape::small()
        }
    }

    /// Larger models exercising all syntax.
    pub fn syntax() -> Shape {
        Shape {
            max_prefixes: 12,
            shaped: false,
            max_depth: 8,
            max_branches: 3,
            max_args: 3,
            types: vec![
                TypeName::Int,
                TypeName::String,
                TypeName::Bool,
                TypeName::Float,
                TypeName::Named("Customer".into()),
                TypeName::Named("CardIdList".into()),
            ],
            assertions: true,
        }
    }
}

pub fn generator_for(ty: &TypeName) -> String {
    format!("g{ty}")
}

const CODES: [u16; 6] = [200, 201, 204, 400, 404, 500];
const OPS: [&str; 4] = ["getCust", "addCust", "deleteCust", "listCards"];

struct Builder<'s> {
    rng: ChaCha8Rng,
    shape: &'s Shape,
    budget: usize,
    vars: usize,
    recs: usize,
    ops: usize,
    guarded: bool,
}

/// A random well-formed model, a pure function of `seed` and `shape`.
pub fn random_model(seed: u64, shape: &Shape) -> Session {
    let mut b = Builder {
        rng: ChaCha8Rng::seed_from_u64(seed),
        shape,
        budget: shape.max_prefixes,
        vars: 0,
        recs: 0,
        ops: 0,
        guarded: false,
    };
    b.session(&[], &[], 0, false)
}

impl Builder<'_> {
    fn fresh_var(&mut self) -> String {
        self.vars += 1;
        format!("v{}", self.vars)
    }

    fn session(&mut self, scope: &[String], recs: &[String], depth: usize, after_send: bool) -> Session {
        if self.shape.shaped && after_send {
            return self.external(scope, recs, depth);
        }
        let need = if self.shape.shaped { 2 } else { 1 };
        let room = self.budget >= need && depth < self.shape.max_depth;
        // Mostly keep building while there is budget, and jump back only
        // once a loop body has done something; rarely emit degenerate forms.
        let mut options = vec![("end", if room { 1 } else { 4 })];
        if !recs.is_empty() {
            options.push(("var", if self.guarded { 4 } else { 0 }));
        }
        if room {
            options.push(("rec", 2));
            options.push(("int", 6));
            if !self.shape.shaped {
                options.push(("ext", 3));
            }
        }
        match options.choose_weighted(&mut self.rng, |o| o.1).unwrap().0 {
            "end" => Session::End,
            "var" => Session::Var(recs.choose(&mut self.rng).unwrap().clone()),
            "rec" => {
                self.recs += 1;
                let var = format!("X{}", self.recs);
                let mut inner = recs.to_vec();
                inner.push(var.clone());
                let saved = std::mem::replace(&mut self.guarded, self.rng.random_bool(0.05));
                let body = self.session(scope, &inner, depth + 1, false);
                self.guarded = saved;
                Session::Rec {
                    var,
                    body: Box::new(body),
                }
            }
            "int" => self.internal(scope, recs, depth),
            _ => self.external(scope, recs, depth),
        }
    }

    fn internal(&mut self, scope: &[String], recs: &[String], depth: usize) -> Session {
        let need = if self.shape.shaped { 2 } else { 1 };
        let n = self.rng.random_range(1..=self.shape.max_branches);
        let mut branches = Vec::new();
        for _ in 0..n {
            if self.budget < need {
                break;
            }
            self.budget -= need - usize::from(self.shape.shaped);
            let op = if self.shape.shaped {
                self.ops += 1;
                format!("op{}", self.ops)
            } else {
                OPS.choose(&mut self.rng).unwrap().to_string()
            };
            let mut args = Vec::new();
            let mut used = BTreeSet::new();
            let mut inner = scope.to_vec();
            for _ in 0..self.rng.random_range(0..=self.shape.max_args) {
                let free: Vec<&String> = scope.iter().filter(|v| !used.contains(*v)).collect();
                if !free.is_empty() && self.rng.random_bool(0.5) {
                    let v = (*free.choose(&mut self.rng).unwrap()).clone();
                    used.insert(v.clone());
                    args.push(Arg::Ref(v));
                } else {
                    let name = self.fresh_var();
                    let ty = self.shape.types.choose(&mut self.rng).unwrap().clone();
                    inner.push(name.clone());
                    used.insert(name.clone());
                    args.push(Arg::Fresh {
                        name,
                        generator: generator_for(&ty),
                        ty,
                    });
                }
            }
            let saved = std::mem::replace(&mut self.guarded, true);
            let cont = self.session(&inner, recs, depth + 1, true);
            self.guarded = saved;
            branches.push(SendBranch { op, args, cont });
        }
        Session::Internal(branches)
    }

    fn external(&mut self, scope: &[String], recs: &[String], depth: usize) -> Session {
        let n = self.rng.random_range(1..=self.shape.max_branches);
        let mut codes: Vec<u16> = CODES.to_vec();
        let mut branches = Vec::new();
        for i in 0..n {
            if i > 0 && self.budget == 0 {
                break;
            }
            self.budget = self.budget.saturating_sub(1);
            let code = codes.remove(self.rng.random_range(0..codes.len()));
            let mut decls = Vec::new();
            let mut inner = scope.to_vec();
            for _ in 0..self.rng.random_range(0..=self.shape.max_args.min(2)) {
                let name = self.fresh_var();
                let ty = self.shape.types.choose(&mut self.rng).unwrap().clone();
                inner.push(name.clone());
                decls.push(Decl { name, ty });
            }
            let assertion = if self.shape.assertions && !inner.is_empty() && self.rng.random_bool(0.3) {
                Some(AssertionCall {
                    predicate: if self.rng.random_bool(0.5) { "eq" } else { "neq" }.into(),
                    args: match inner.choose_multiple(&mut self.rng, 2).collect::<Vec<_>>()[..] {
                        [a, b] => vec![a.clone(), b.clone()],
                        [a] => vec![a.clone(), a.clone()],
                        _ => unreachable!(),
                    },
                })
            } else {
                None
            };
            let saved = std::mem::replace(&mut self.guarded, true);
            let cont = self.session(&inner, recs, depth + 1, false);
            self.guarded = saved;
            branches.push(RecvBranch {
                code,
                decls,
                assertion,
                cont,
            });
        }
        Session::External(branches)
    }
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

/// An API with one `POST /<op>` per request of a shaped model. Arguments
/// travel as query parameters and payload variables as fields of an
/// object body.
pub fn synthetic_spec(model: &Session) -> ApiSpec {
    let mut spec = ApiSpec::default();
    cots::ast::walk(model, &mut |s| {
        if let Session::Internal(branches) = s {
            for b in branches {
                let Session::External(recvs) = &b.cont else {
                    panic!("shaped model")
                };
                let params = b
                    .args
                    .iter()
                    .map(|a| Param {
                        name: a.name().to_string(),
                        location: ParamLocation::Query,
                        schema: match a {
                            Arg::Fresh { ty, .. } => type_schema(ty),
                            Arg::Ref(_) => JsonSchema::Any,
                        },
                        required: true,
                    })
                    .collect();
                let responses = recvs
                    .iter()
                    .map(|r| {
                        let schema = (!r.decls.is_empty()).then(|| JsonSchema::Object {
                            properties: r.decls.iter().map(|d| (d.name.clone(), type_schema(&d.ty))).collect(),
                            required: r.decls.iter().map(|d| d.name.clone()).collect(),
                        });
                        (r.code, schema)
                    })
                    .collect();
                spec.operations.insert(
                    b.op.clone(),
                    OperationShape {
                        method: "POST".into(),
                        path_template: format!("/{}", b.op),
                        params,
                        request_body: None,
                        responses,
                    },
                );
            }
        }
    });
    spec
}

/// Finite domains for scalar types, `size` values each.
pub fn scalar_domain(ty: &TypeName, size: usize) -> Vec<Value> {
    let all = match ty {
        TypeName::Int => vec![json!(1), json!(2)],
        TypeName::String => vec![json!("a"), json!("b")],
        TypeName::Bool => vec![json!(true), json!(false)],
        TypeName::Float => vec![json!(0.5), json!(1.5)],
        TypeName::Named(_) => vec![json!({"k": 1}), json!({"k": 2})],
    };
    all.into_iter().take(size.clamp(1, 2)).collect()
}

/// Domains for every generator and (code, type) pair a model can use.
pub fn domains(types: &[TypeName], gen_size: usize, input_size: usize, rec_bound: usize) -> EnumConfig {
    let mut cfg = EnumConfig::new(rec_bound);
    for ty in types {
        cfg.domains.insert(generator_for(ty), scalar_domain(ty, gen_size));
        for code in CODES {
            cfg.input_domains
                .insert((code, ty.clone()), scalar_domain(ty, input_size));
        }
    }
    cfg
}

/// Generators drawing from exactly the enumeration domains.
pub fn preamble_for(cfg: &EnumConfig) -> Preamble {
    let mut p = Preamble::default();
    for (name, values) in &cfg.domains {
        p.generators.insert(
            name.clone(),
            GeneratorDef {
                spec: GeneratorSpec::OneOf { values: values.clone() },
                oracle_domain: Some(values.clone()),
            },
        );
    }
    p
}

/// Answers each request with a randomly chosen declared response whose
/// payload fields come from the input domains.
pub struct StubService {
    pub spec: ApiSpec,
    pub cfg: EnumConfig,
    pub rng: ChaCha8Rng,
}

impl StubService {
    pub fn new(spec: ApiSpec, cfg: EnumConfig, seed: u64) -> Self {
        StubService {
            spec,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

fn schema_type(s: &JsonSchema) -> TypeName {
    match s {
        JsonSchema::Integer => TypeName::Int,
        JsonSchema::Number => TypeName::Float,
        JsonSchema::Boolean => TypeName::Bool,
        JsonSchema::String => TypeName::String,
        JsonSchema::Ref(n) => TypeName::Named(n.clone()),
        other => panic!("unexpected schema {other:?}"),
    }
}

impl Transport for StubService {
    fn execute(&mut self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let op = request.path.trim_start_matches('/').split('?').next().unwrap();
        let shape = &self.spec.operations[op];
        let codes: Vec<u16> = shape.responses.keys().copied().collect();
        let code = *codes.choose(&mut self.rng).unwrap();
        let body = match &shape.responses[&code] {
            Some(JsonSchema::Object { properties, .. }) => {
                let mut obj = serde_json::Map::new();
                for (name, s) in properties {
                    let domain = &self.cfg.input_domains[&(code, schema_type(s))];
                    obj.insert(name.clone(), domain.choose(&mut self.rng).unwrap().clone());
                }
                Value::Object(obj).to_string()
            }
            _ => String::new(),
        };
        Ok(HttpResponse { status: code, body })
    }
}

// ---------------------------------------------------------------------
// Naive reference semantics: unfold recursion syntactically, then
// substitute values for variables and build the set directly.

#[derive(Debug, Clone)]
enum NArg {
    Var(String),
    Val(Value),
    Fresh(String, String),
}

type NRecv = (u16, Vec<(String, TypeName)>, Option<(String, Vec<NArg>)>, N);

#[derive(Debug, Clone)]
enum N {
    End,
    Stop,
    Int(Vec<(String, Vec<NArg>, N)>),
    Ext(Vec<NRecv>),
}

/// Replaces free occurrences of recursion variable `x` by `with`.
fn subst_rec(s: &Session, x: &str, with: &Session) -> Session {
    match s {
        Session::Var(y) if y == x => with.clone(),
        Session::Rec { var, .. } if var == x => s.clone(),
        Session::Rec { var, body } => Session::Rec {
            var: var.clone(),
            body: Box::new(subst_rec(body, x, with)),
        },
        Session::Internal(bs) => Session::Internal(
            bs.iter()
                .map(|b| SendBranch {
                    op: b.op.clone(),
                    args: b.args.clone(),
                    cont: subst_rec(&b.cont, x, with),
                })
                .collect(),
        ),
        Session::External(bs) => Session::External(
            bs.iter()
                .map(|b| RecvBranch {
                    code: b.code,
                    decls: b.decls.clone(),
                    assertion: b.assertion.clone(),
                    cont: subst_rec(&b.cont, x, with),
                })
                .collect(),
        ),
        other => other.clone(),
    }
}

const STOP: &str = "__stop__";

/// `rec X.S` allowing `k` jumps is `S[X := rec X.S allowing k-1 jumps]`,
/// and allowing no jump at all is `S[X := stop]`.
fn unfold(s: &Session, k: usize) -> N {
    match s {
        Session::End => N::End,
        Session::Var(x) if x == STOP => N::Stop,
        Session::Var(x) => panic!("free recursion variable {x}"),
        Session::Rec { var, body } => {
            let mut approx = subst_rec(body, var, &Session::Var(STOP.into()));
            for _ in 0..k {
                approx = subst_rec(body, var, &approx);
            }
            unfold(&approx, k)
        }
        Session::Internal(bs) => N::Int(
            bs.iter()
                .map(|b| {
                    let args = b
                        .args
                        .iter()
                        .map(|a| match a {
                            Arg::Ref(x) => NArg::Var(x.clone()),
                            Arg::Fresh { name, generator, .. } => NArg::Fresh(name.clone(), generator.clone()),
                        })
                        .collect();
                    (b.op.clone(), args, unfold(&b.cont, k))
                })
                .collect(),
        ),
        Session::External(bs) => N::Ext(
            bs.iter()
                .map(|b| {
                    let decls = b.decls.iter().map(|d| (d.name.clone(), d.ty.clone())).collect();
                    let assertion = b.assertion.as_ref().map(|a| {
                        (
                            a.predicate.clone(),
                            a.args.iter().map(|x| NArg::Var(x.clone())).collect(),
                        )
                    });
                    (b.code, decls, assertion, unfold(&b.cont, k))
                })
                .collect(),
        ),
    }
}

fn subst_args(args: &[NArg], x: &str, v: &Value) -> Vec<NArg> {
    args.iter()
        .map(|a| match a {
            NArg::Var(y) if y == x => NArg::Val(v.clone()),
            other => other.clone(),
        })
        .collect()
}

/// Substitutes `v` for free occurrences of data variable `x`.
fn subst_val(n: &N, x: &str, v: &Value) -> N {
    match n {
        N::End | N::Stop => n.clone(),
        N::Int(bs) => N::Int(
            bs.iter()
                .map(|(op, args, cont)| {
                    let rebinds = args.iter().any(|a| matches!(a, NArg::Fresh(n, _) if n == x));
                    let cont = if rebinds { cont.clone() } else { subst_val(cont, x, v) };
                    (op.clone(), subst_args(args, x, v), cont)
                })
                .collect(),
        ),
        N::Ext(bs) => N::Ext(
            bs.iter()
                .map(|(code, decls, assertion, cont)| {
                    if decls.iter().any(|(n, _)| n == x) {
                        return (*code, decls.clone(), assertion.clone(), cont.clone());
                    }
                    let assertion = assertion.as_ref().map(|(p, args)| (p.clone(), subst_args(args, x, v)));
                    (*code, decls.clone(), assertion, subst_val(cont, x, v))
                })
                .collect(),
        ),
    }
}

fn product(choices: &[Vec<Value>]) -> Vec<Vec<Value>> {
    choices.iter().fold(vec![vec![]], |acc, options| {
        acc.into_iter()
            .flat_map(|p| {
                options.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(v.clone());
                    q
                })
            })
            .collect()
    })
}

fn naive_set(n: &N, cfg: &EnumConfig, preamble: &Preamble) -> BTreeSet<Trace> {
    match n {
        N::End => BTreeSet::from([Trace::default()]),
        N::Stop => BTreeSet::new(),
        N::Int(bs) => {
            let mut out = BTreeSet::new();
            for (op, args, cont) in bs {
                let choices: Vec<Vec<Value>> = args
                    .iter()
                    .map(|a| match a {
                        NArg::Val(v) => vec![v.clone()],
                        NArg::Fresh(_, g) => cfg.domains[g].clone(),
                        NArg::Var(x) => panic!("unbound {x}"),
                    })
                    .collect();
                for values in product(&choices) {
                    let mut k = cont.clone();
                    for (a, v) in args.iter().zip(&values) {
                        if let NArg::Fresh(x, _) = a {
                            k = subst_val(&k, x, v);
                        }
                    }
                    for mut tail in naive_set(&k, cfg, preamble) {
                        tail.0.insert(0, Event::send(op, values.clone()));
                        out.insert(tail);
                    }
                }
            }
            out
        }
        N::Ext(bs) => {
            let mut out = BTreeSet::new();
            for (code, decls, assertion, cont) in bs {
                let choices: Vec<Vec<Value>> = decls
                    .iter()
                    .map(|(_, ty)| cfg.input_domains[&(*code, ty.clone())].clone())
                    .collect();
                for values in product(&choices) {
                    let mut k = cont.clone();
                    let mut a = assertion.clone();
                    for ((x, _), v) in decls.iter().zip(&values) {
                        k = subst_val(&k, x, v);
                        a = a.map(|(p, args)| (p, subst_args(&args, x, v)));
                    }
                    if let Some((p, args)) = &a {
                        let vals: Vec<Value> = args
                            .iter()
                            .map(|x| match x {
                                NArg::Val(v) => v.clone(),
                                other => panic!("unsubstituted {other:?}"),
                            })
                            .collect();
                        if !eval_named(preamble, p, &vals).unwrap_or(false) {
                            continue;
                        }
                    }
                    for mut tail in naive_set(&k, cfg, preamble) {
                        tail.0.insert(0, Event::recv(*code, values.clone()));
                        out.insert(tail);
                    }
                }
            }
            out
        }
    }
}

/// Reference trace set of a closed model.
pub fn naive_traces(model: &Session, cfg: &EnumConfig, preamble: &Preamble) -> BTreeSet<Trace> {
    naive_set(&unfold(model, cfg.rec_bound), cfg, preamble)
}

pub fn count_prefixes(model: &Session) -> usize {
    let mut n = 0;
    cots::ast::walk(model, &mut |s| match s {
        Session::Internal(b) => n += b.len(),
        Session::External(b) => n += b.len(),
        _ => {}
    });
    n
}

pub fn type_list(model: &Session) -> BTreeMap<String, TypeName> {
    let mut out = BTreeMap::new();
    cots::ast::walk(model, &mut |s| {
        if let Session::Internal(bs) = s {
            for b in bs {
                for a in &b.args {
                    if let Arg::Fresh { name, ty, .. } = a {
                        out.insert(name.clone(), ty.clone());
                    }
                }
            }
        }
    });
    out
}

// ---------------------------------------------------------------------
// Shipped fixtures driven against the mock service.

use cots::binding::{bind, BindingPlan};
use cots::driver::{CampaignConfig, CampaignReport, Driver, RunConfig, Timing, UreqTransport};
use cots::openapi::{load_spec, DocFormat};
use cots::parser::{parse_file, ParsedModel};

pub const SPEC: &str = "shop-features.openapi.yaml";

pub struct Fixture {
    pub model: ParsedModel,
    pub spec: ApiSpec,
    pub preamble: Preamble,
    pub plan: BindingPlan,
}

impl Fixture {
    pub fn load(capi: &str, name: &str, preamble: &str) -> Fixture {
        let file = parse_file(&fixture_text(capi)).unwrap();
        let model = file.select(Some(name)).unwrap().clone();
        let spec = load_spec(fixture_text(SPEC).as_bytes(), DocFormat::Yaml).unwrap();
        let preamble = Preamble::load(&fixture(preamble)).unwrap();
        let plan = bind(&model.root, &spec, &preamble).unwrap();
        Fixture {
            model,
            spec,
            preamble,
            plan,
        }
    }

    pub fn shop_ext() -> Fixture {
        Fixture::load("shop.capi", "S_shopExt", "shop.preamble.json")
    }

    pub fn shop() -> Fixture {
        Fixture::load("shop.capi", "S_shop", "shop.preamble.json")
    }

    pub fn features() -> Fixture {
        Fixture::load("features.capi", "S_features", "features.preamble.json")
    }

    /// Fixture exercising the given fault flag.
    pub fn for_fault(name: &str) -> Fixture {
        if name == "F5" {
            Fixture::features()
        } else {
            Fixture::shop_ext()
        }
    }

    pub fn campaign(&self, base_url: &str, runs: usize, seed: u64) -> CampaignReport {
        let mut cfg = RunConfig::new(base_url, seed);
        cfg.timing = Timing::Zero;
        let driver = Driver::new(&self.model.root, &self.plan, &self.preamble);
        let timeout = cfg.request_timeout;
        let connect = move || -> Box<dyn Transport> { Box::new(UreqTransport::new(timeout)) };
        driver
            .run_campaign(&cfg, &CampaignConfig::new(runs, seed), &connect)
            .unwrap()
    }
}

// ---------------------------------------------------------------------
// Golden structures of the shipped listing models.

pub fn send(op: &str, args: Vec<Arg>, cont: Session) -> Session {
    Session::Internal(vec![SendBranch {
        op: op.into(),
        args,
        cont,
    }])
}

pub fn branch(op: &str, args: Vec<Arg>, cont: Session) -> SendBranch {
    SendBranch {
        op: op.into(),
        args,
        cont,
    }
}

pub fn recv(code: u16, decls: &[(&str, TypeName)], assertion: Option<(&str, &[&str])>, cont: Session) -> Session {
    Session::External(vec![RecvBranch {
        code,
        decls: decls
            .iter()
            .map(|(n, ty)| Decl {
                name: n.to_string(),
                ty: ty.clone(),
            })
            .collect(),
        assertion: assertion.map(|(p, args)| AssertionCall {
            predicate: p.into(),
            args: args.iter().map(|a| a.to_string()).collect(),
        }),
        cont,
    }])
}

pub fn fresh(name: &str, ty: TypeName, generator: &str) -> Arg {
    Arg::Fresh {
        name: name.into(),
        ty,
        generator: generator.into(),
    }
}

pub fn var(name: &str) -> Arg {
    Arg::Ref(name.into())
}

fn named_ty(n: &str) -> TypeName {
    TypeName::Named(n.into())
}

pub fn shop_listing_golden() -> Session {
    let x = || Session::Var("X".into());
    let key_cust = || vec![var("apiKey"), var("custId")];
    let with = |mut a: Vec<Arg>, b: Arg| {
        a.push(b);
        a
    };
    send(
        "addCust",
        vec![
            fresh("apiKey", TypeName::String, "genApiKey"),
            fresh("c1", named_ty("Customer"), "genCustInfo"),
        ],
        recv(
            201,
            &[("custId", TypeName::String)],
            None,
            Session::Rec {
                var: "X".into(),
                body: Box::new(Session::Internal(vec![
                    branch(
                        "addCard",
                        with(key_cust(), fresh("card", named_ty("Card"), "getCardInfo")),
                        recv(201, &[("CardId", TypeName::String)], None, x()),
                    ),
                    branch(
                        "addAddr",
                        with(key_cust(), fresh("addr", named_ty("Address"), "getAddrInfo")),
                        recv(201, &[("addressId", TypeName::String)], None, x()),
                    ),
                    branch(
                        "getCust",
                        key_cust(),
                        recv(
                            200,
                            &[("c2", named_ty("Customer"))],
                            Some(("checkCustomer", &["c1", "c2"])),
                            x(),
                        ),
                    ),
                    branch("deleteCust", key_cust(), recv(204, &[], None, Session::End)),
                ])),
            },
        ),
    )
}

pub fn features_service_golden() -> Session {
    Session::Rec {
        var: "X".into(),
        body: Box::new(send(
            "addFeature",
            vec![fresh("feat1", TypeName::String, "genFeatName")],
            recv(
                201,
                &[],
                None,
                send(
                    "addFeature",
                    vec![fresh("feat2", TypeName::String, "genFeatName")],
                    recv(
                        201,
                        &[],
                        None,
                        send(
                            "addConstraint",
                            vec![var("feat1"), var("feat2")],
                            recv(
                                201,
                                &[],
                                None,
                                send(
                                    "delFeature",
                                    vec![var("feat1")],
                                    recv(400, &[], None, Session::Var("X".into())),
                                ),
                            ),
                        ),
                    ),
                ),
            ),
        )),
    }
}
