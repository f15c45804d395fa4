//! Executes bound models against a live service.
//!
//! The driver walks the model: at an internal choice it picks a branch
//! with the seeded choice stream, generates or looks up the arguments and
//! sends the request; at an external choice it dispatches on the response
//! status, validates the body, binds the payload variables and evaluates
//! the branch assertion. The first oracle violation ends the run.

mod http;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use self::http::{HttpRequest, HttpResponse, Transport, TransportError, UreqTransport};
use crate::ast::{Arg, ModelIndex, NodeId, NodeRef, Session};
use crate::binding::{BindingPlan, Projection, Slot};
use crate::openapi::validate_value;
use crate::report::{coverage, CoverageReport};
use crate::runtime::generate::CHOICE_STREAM;
use crate::runtime::{eval_named, seeded_rng, AuthLocation, Env, EnvError, GenerateError, Generator, Preamble};
use crate::semantics::{Event, Trace};

pub const DEFAULT_MAX_REC_UNFOLDINGS: usize = 50;
pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(10);

/// Unreserved characters stay literal in path segments and query values.
const COMPONENT: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Timing {
    #[default]
    Wall,
    /// Durations are recorded as zero so logs are reproducible byte for byte.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub base_url: String,
    pub seed: u64,
    pub max_rec_unfoldings: usize,
    pub request_timeout: Duration,
    /// Branch weights keyed by branch path (as printed by validation
    /// errors) or by operationId. Unlisted branches weigh 1.
    pub choice_weights: BTreeMap<String, f64>,
    pub timing: Timing,
}

impl RunConfig {
    pub fn new(base_url: &str, seed: u64) -> Self {
        RunConfig {
            base_url: base_url.trim_end_matches('/').to_string(),
            seed,
            max_rec_unfoldings: DEFAULT_MAX_REC_UNFOLDINGS,
            request_timeout: DEFAULT_REQUEST_TIMEOUT,
            choice_weights: BTreeMap::new(),
            timing: Timing::Wall,
        }
    }

    pub fn validate(&self) -> Result<(), DriverError> {
        if self.max_rec_unfoldings == 0 {
            return Err(DriverError::Config("maxRecUnfoldings must be at least 1".into()));
        }
        if let Some((k, w)) = self.choice_weights.iter().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
            return Err(DriverError::Config(format!(
                "weight of `{k}` must be positive, got {w}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all_fields = "camelCase")]
pub enum Verdict {
    Pass,
    BadStatusCode {
        expected: Vec<u16>,
        actual: u16,
    },
    BadResponseBody {
        violations: Vec<String>,
    },
    AssertionFail {
        predicate: String,
        args: Vec<Value>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
    TransportError {
        detail: String,
    },
    ModelExhausted {
        rec_bound: usize,
    },
}

impl Verdict {
    pub fn kind(&self) -> &'static str {
        match self {
            Verdict::Pass => "Pass",
            Verdict::BadStatusCode { .. } => "BadStatusCode",
            Verdict::BadResponseBody { .. } => "BadResponseBody",
            Verdict::AssertionFail { .. } => "AssertionFail",
            Verdict::TransportError { .. } => "TransportError",
            Verdict::ModelExhausted { .. } => "ModelExhausted",
        }
    }

    /// One of the three oracle violations.
    pub fn is_fault(&self) -> bool {
        matches!(
            self,
            Verdict::BadStatusCode { .. } | Verdict::BadResponseBody { .. } | Verdict::AssertionFail { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpExchange {
    pub request: HttpRequest,
    /// Absent when the transport failed.
    pub response: Option<HttpResponse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub base_url: String,
    pub trace: Trace,
    pub http_log: Vec<HttpExchange>,
    pub verdict: Verdict,
    pub covered_nodes: BTreeSet<NodeId>,
    pub covered_branches: BTreeSet<NodeId>,
    pub duration_ms: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum DriverError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("no binding for prefix {0}")]
    MissingPlan(NodeId),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

struct Frame {
    var: String,
    body: NodeId,
    env: Env,
    jumps: usize,
}

/// A model bound to an API, ready to run.
pub struct Driver<'a> {
    index: ModelIndex<'a>,
    plan: &'a BindingPlan,
    preamble: &'a Preamble,
}

impl<'a> Driver<'a> {
    pub fn new(model: &'a Session, plan: &'a BindingPlan, preamble: &'a Preamble) -> Self {
        Driver {
            index: ModelIndex::new(model),
            plan,
            preamble,
        }
    }

    pub fn index(&self) -> &ModelIndex<'a> {
        &self.index
    }

    pub fn run_once(
        &self,
        run: usize,
        cfg: &RunConfig,
        transport: &mut dyn Transport,
    ) -> Result<RunRecord, DriverError> {
        cfg.validate()?;
        let started = Instant::now();
        let mut state = RunState {
            record: RunRecord {
                run,
                seed: cfg.seed,
                base_url: cfg.base_url.clone(),
                trace: Trace::default(),
                http_log: Vec::new(),
                verdict: Verdict::Pass,
                covered_nodes: BTreeSet::new(),
                covered_branches: BTreeSet::new(),
                duration_ms: 0,
            },
            choices: seeded_rng(cfg.seed, CHOICE_STREAM),
            generator: Generator::new(self.preamble, cfg.seed),
        };
        state.record.verdict = self.walk(cfg, transport, &mut state)?;
        state.record.duration_ms = match cfg.timing {
            Timing::Wall => started.elapsed().as_millis() as u64,
            Timing::Zero => 0,
        };
        Ok(state.record)
    }

    fn walk(&self, cfg: &RunConfig, transport: &mut dyn Transport, st: &mut RunState) -> Result<Verdict, DriverError> {
        let mut node = self.index.root();
        let mut env = Env::new();
        let mut frames: Vec<Frame> = Vec::new();
        loop {
            let indexed = self.index.node(node);
            let NodeRef::Session(session) = indexed.node else {
                unreachable!("walk visits sessions only")
            };
            match session {
                Session::End => return Ok(Verdict::Pass),
                Session::Rec { var, .. } => {
                    frames.retain(|f| &f.var != var);
                    frames.push(Frame {
                        var: var.clone(),
                        body: indexed.children[0],
                        env: env.clone(),
                        jumps: 0,
                    });
                    node = indexed.children[0];
                }
                Session::Var(x) => {
                    let i = frames.iter().rposition(|f| &f.var == x).expect("closed model");
                    frames.truncate(i + 1);
                    let frame = &mut frames[i];
                    if frame.jumps >= cfg.max_rec_unfoldings {
                        return Ok(Verdict::ModelExhausted {
                            rec_bound: cfg.max_rec_unfoldings,
                        });
                    }
                    frame.jumps += 1;
                    env = frame.env.clone();
                    node = frame.body;
                }
                Session::Internal(branches) => {
                    let pick = self.choose(cfg, &indexed.children, &mut st.choices);
                    let send_id = indexed.children[pick];
                    let branch = &branches[pick];
                    st.record.covered_branches.insert(send_id);
                    let mut values = Vec::with_capacity(branch.args.len());
                    for arg in &branch.args {
                        let v = match arg {
                            Arg::Ref(x) => env.lookup(x)?.clone(),
                            Arg::Fresh { name, generator, .. } => {
                                let spec = self
                                    .preamble
                                    .generator(generator)
                                    .ok_or_else(|| GenerateError::MissingSource(generator.into()))?;
                                let v = st.generator.generate(&spec)?;
                                env = env.bind(name, v.clone())?;
                                v
                            }
                        };
                        values.push(v);
                    }
                    let plan = self.plan.sends.get(&send_id).ok_or(DriverError::MissingPlan(send_id))?;
                    let request = self.build_request(cfg, plan, &values);
                    st.record.trace.0.push(Event::send(&branch.op, values));
                    st.record.covered_nodes.insert(send_id);
                    let outcome = transport.execute(&request);
                    st.record.http_log.push(HttpExchange {
                        request,
                        response: outcome.as_ref().ok().cloned(),
                    });
                    let response = match outcome {
                        Ok(r) => r,
                        Err(e) => return Ok(Verdict::TransportError { detail: e.0 }),
                    };
                    let recv_choice = self.index.node(self.index.node(send_id).children[0]);
                    let NodeRef::Session(Session::External(recvs)) = recv_choice.node else {
                        unreachable!("binding guarantees a receive after each request")
                    };
                    let Some(pick) = recvs.iter().position(|r| r.code == response.status) else {
                        return Ok(Verdict::BadStatusCode {
                            expected: recvs.iter().map(|r| r.code).collect(),
                            actual: response.status,
                        });
                    };
                    let recv_id = recv_choice.children[pick];
                    let branch = &recvs[pick];
                    st.record.covered_branches.insert(recv_id);
                    let plan = self.plan.recvs.get(&recv_id).ok_or(DriverError::MissingPlan(recv_id))?;
                    let payload = match self.check_body(plan, &response.body) {
                        Ok(p) => p,
                        Err(violations) => return Ok(Verdict::BadResponseBody { violations }),
                    };
                    for (d, v) in branch.decls.iter().zip(&payload) {
                        env = env.bind(&d.name, v.clone())?;
                    }
                    st.record.trace.0.push(Event::recv(branch.code, payload));
                    st.record.covered_nodes.insert(recv_id);
                    if let Some(call) = &branch.assertion {
                        let args = call
                            .args
                            .iter()
                            .map(|a| env.lookup(a).cloned())
                            .collect::<Result<Vec<_>, _>>()?;
                        let detail = match eval_named(self.preamble, &call.predicate, &args) {
                            Ok(true) => None,
                            Ok(false) => Some(None),
                            Err(e) => Some(Some(e.to_string())),
                        };
                        if let Some(detail) = detail {
                            return Ok(Verdict::AssertionFail {
                                predicate: call.predicate.clone(),
                                args,
                                detail,
                            });
                        }
                    }
                    node = self.index.node(recv_id).children[0];
                }
                Session::External(_) => unreachable!("binding rejects receives that follow no request"),
            }
        }
    }

    fn choose(&self, cfg: &RunConfig, branches: &[NodeId], rng: &mut ChaCha8Rng) -> usize {
        if branches.len() == 1 {
            return 0;
        }
        if cfg.choice_weights.is_empty() {
            return rng.random_range(0..branches.len());
        }
        let weights: Vec<f64> = branches
            .iter()
            .map(|id| {
                let path = &self.index.node(*id).path;
                let op = match self.index.node(*id).node {
                    NodeRef::Send(b) => b.op.as_str(),
                    _ => "",
                };
                cfg.choice_weights
                    .get(path)
                    .or_else(|| cfg.choice_weights.get(op))
                    .copied()
                    .unwrap_or(1.0)
            })
            .collect();
        WeightedIndex::new(&weights).expect("weights validated").sample(rng)
    }

    fn build_request(&self, cfg: &RunConfig, plan: &crate::binding::SendPlan, values: &[Value]) -> HttpRequest {
        let mut path = plan.path_template.clone();
        let mut query: Vec<(String, String)> = Vec::new();
        let mut headers: Vec<(String, String)> = Vec::new();
        let mut body = None;
        for (slot, value) in plan.slots.iter().zip(values) {
            match slot {
                Slot::Path(name) => {
                    let encoded = utf8_percent_encode(&scalar_text(value), COMPONENT).to_string();
                    path = path.replace(&format!("{{{name}}}"), &encoded);
                }
                Slot::Query(name) => query.push((name.clone(), scalar_text(value))),
                Slot::Header(name) => headers.push((name.clone(), scalar_text(value))),
                Slot::Body => body = Some(value.to_string()),
            }
        }
        if let Some(auth) = &self.plan.auth {
            match auth.location {
                AuthLocation::Header => {
                    if !headers.iter().any(|(k, _)| k.eq_ignore_ascii_case(&auth.name)) {
                        headers.push((auth.name.clone(), auth.value.clone()));
                    }
                }
                AuthLocation::Query => {
                    if !query.iter().any(|(k, _)| *k == auth.name) {
                        query.push((auth.name.clone(), auth.value.clone()));
                    }
                }
            }
        }
        if !query.is_empty() {
            let parts: Vec<String> = query
                .iter()
                .map(|(k, v)| {
                    format!(
                        "{}={}",
                        utf8_percent_encode(k, COMPONENT),
                        utf8_percent_encode(v, COMPONENT)
                    )
                })
                .collect();
            path = format!("{path}?{}", parts.join("&"));
        }
        headers.push(("Accept".into(), "application/json".into()));
        if body.is_some() {
            headers.push(("Content-Type".into(), "application/json".into()));
        }
        HttpRequest {
            method: plan.method.clone(),
            url: format!("{}{path}", cfg.base_url),
            path,
            headers,
            body,
        }
    }

    /// Validates the body against the branch schema and projects the
    /// payload variables out of it.
    fn check_body(&self, plan: &crate::binding::RecvPlan, body: &str) -> Result<Vec<Value>, Vec<String>> {
        let Some(schema) = &plan.schema else {
            return Ok(Vec::new());
        };
        let value: Value = serde_json::from_str(body).map_err(|e| vec![format!("body is not JSON: {e}")])?;
        let violations = validate_value(&self.plan.schemas, schema, &value);
        if !violations.is_empty() {
            return Err(violations.iter().map(ToString::to_string).collect());
        }
        plan.projections
            .iter()
            .map(|p| match p {
                Projection::WholeBody => Ok(value.clone()),
                Projection::Field(f) => value
                    .get(f)
                    .cloned()
                    .ok_or_else(|| vec![format!("$: missing field `{f}` bound by the model")]),
            })
            .collect()
    }

    /// Runs `campaign.runs` runs with seeds `base_seed + i`. Each run gets
    /// a fresh transport from `connect`.
    pub fn run_campaign(
        &self,
        cfg: &RunConfig,
        campaign: &CampaignConfig,
        connect: &(dyn Fn() -> Box<dyn Transport> + Sync),
    ) -> Result<CampaignReport, DriverError> {
        cfg.validate()?;
        let one = |i: usize| {
            let mut run_cfg = cfg.clone();
            run_cfg.seed = campaign.base_seed.wrapping_add(i as u64);
            self.run_once(i, &run_cfg, connect().as_mut())
        };
        let mut records = Vec::with_capacity(campaign.runs);
        if campaign.parallelism <= 1 {
            for i in 0..campaign.runs {
                let record = one(i)?;
                let stop = campaign.stop_on_first_fail && record.verdict.is_fault();
                records.push(record);
                if stop {
                    break;
                }
            }
        } else {
            let next = AtomicUsize::new(0);
            let stop = AtomicBool::new(false);
            let done: Mutex<Vec<Result<RunRecord, DriverError>>> = Mutex::new(Vec::new());
            std::thread::scope(|s| {
                for _ in 0..campaign.parallelism.min(campaign.runs.max(1)) {
                    s.spawn(|| loop {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        if i >= campaign.runs || stop.load(Ordering::SeqCst) {
                            break;
                        }
                        let result = one(i);
                        if campaign.stop_on_first_fail && result.as_ref().is_ok_and(|r| r.verdict.is_fault()) {
                            stop.store(true, Ordering::SeqCst);
                        }
                        done.lock().expect("no panics while holding the lock").push(result);
                    });
                }
            });
            for r in done.into_inner().expect("workers joined") {
                records.push(r?);
            }
            records.sort_by_key(|r| r.run);
        }
        Ok(CampaignReport::new(&self.index, records))
    }
}

struct RunState<'p> {
    record: RunRecord,
    choices: ChaCha8Rng,
    generator: Generator<'p>,
}

/// Text of a value placed in a path, query or header slot.
fn scalar_text(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CampaignConfig {
    pub runs: usize,
    pub base_seed: u64,
    pub stop_on_first_fail: bool,
    /// Concurrent runs. Runs against a stateful service may interfere with
    /// each other when this exceeds 1.
    pub parallelism: usize,
}

impl CampaignConfig {
    pub fn new(runs: usize, base_seed: u64) -> Self {
        CampaignConfig {
            runs,
            base_seed,
            stop_on_first_fail: false,
            parallelism: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerdictCounts {
    pub pass: usize,
    pub bad_status_code: usize,
    pub bad_response_body: usize,
    pub assertion_fail: usize,
    pub transport_error: usize,
    pub model_exhausted: usize,
}

impl VerdictCounts {
    pub fn add(&mut self, v: &Verdict) {
        *match v {
            Verdict::Pass => &mut self.pass,
            Verdict::BadStatusCode { .. } => &mut self.bad_status_code,
            Verdict::BadResponseBody { .. } => &mut self.bad_response_body,
            Verdict::AssertionFail { .. } => &mut self.assertion_fail,
            Verdict::TransportError { .. } => &mut self.transport_error,
            Verdict::ModelExhausted { .. } => &mut self.model_exhausted,
        } += 1;
    }

    pub fn faults(&self) -> usize {
        self.bad_status_code + self.bad_response_body + self.assertion_fail
    }

    pub fn total(&self) -> usize {
        self.faults() + self.pass + self.transport_error + self.model_exhausted
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignReport {
    pub records: Vec<RunRecord>,
    pub counts: VerdictCounts,
    pub coverage: CoverageReport,
}

impl CampaignReport {
    pub fn new(index: &ModelIndex<'_>, records: Vec<RunRecord>) -> Self {
        let mut counts = VerdictCounts::default();
        records.iter().for_each(|r| counts.add(&r.verdict));
        let coverage = coverage(index, &records).expect("records come from this model");
        CampaignReport {
            records,
            counts,
            coverage,
        }
    }

    /// Process exit status: 1 on any oracle violation, else 3 on any
    /// transport failure, else 0.
    pub fn exit_code(&self) -> i32 {
        if self.counts.faults() > 0 {
            1
        } else if self.counts.transport_error > 0 {
            3
        } else {
            0
        }
    }
}
