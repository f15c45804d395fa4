use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use cots::ast::Session;
use cots::binding::{bind, BindingPlan};
use cots::driver::{CampaignConfig, Driver, RunConfig, Timing, Transport, UreqTransport};
use cots::mock::{serve, FaultFlags, MockConfig, DEFAULT_API_KEY};
use cots::openapi::{load_spec, ApiSpec, DocFormat};
use cots::parser::{parse_file, ParseError, ParsedModel};
use cots::report::write_outputs;
use cots::runtime::{Env, Preamble};
use cots::semantics::{enumerate_traces, EnumConfig};

const EXIT_OK: u8 = 0;
const EXIT_FAULT: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_TRANSPORT: u8 = 3;

/// Model-based testing for REST services.
#[derive(Parser)]
#[command(name = "cots", version)]
struct Cli {
    /// Model to use when a file defines several.
    #[arg(long, global = true)]
    model_name: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model and its binding to an OpenAPI document.
    Validate(Inputs),
    /// Run a test campaign against a live service.
    Run(RunArgs),
    /// Enumerate the bounded trace set of a model.
    Enumerate(EnumerateArgs),
    /// Serve the fault-injectable fixture service.
    Mock(MockArgs),
}

#[derive(Args)]
struct Inputs {
    /// Model file (`.capi`).
    model: PathBuf,
    /// OpenAPI document, JSON or YAML.
    #[arg(long)]
    spec: PathBuf,
    /// Preamble with generators, assertions, aliases and auth.
    #[arg(long)]
    preamble: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Base URL of the service under test; defaults to the document's first server.
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long, default_value_t = 1)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for runs.jsonl, coverage.json and replay scripts.
    #[arg(long, default_value = "cots-out")]
    out: PathBuf,
    /// Loop iterations allowed per recursion binder before a run is cut off.
    #[arg(long, default_value_t = cots::driver::DEFAULT_MAX_REC_UNFOLDINGS)]
    max_rec_unfoldings: usize,
    /// Per-request timeout in milliseconds.
    #[arg(long, default_value_t = 10_000)]
    timeout_ms: u64,
    /// JSON object of branch weights keyed by branch path or operationId.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    stop_on_first_fail: bool,
    /// Concurrent runs. Runs against a stateful service may then interfere.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Record every duration as 0 so logs are reproducible byte for byte.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct EnumerateArgs {
    model: PathBuf,
    /// Preamble holding the oracle domains.
    #[arg(long)]
    preamble: Option<PathBuf>,
    /// Unfoldings per recursion binder; defaults to the preamble's oracle.recBound.
    #[arg(long)]
    rec_bound: Option<usize>,
    /// Print every trace.
    #[arg(long)]
    dump: bool,
}

#[derive(Args)]
struct MockArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Faults to enable, e.g. `F1,F5`.
    #[arg(long, value_parser = parse_faults, default_value = "")]
    faults: FaultFlags,
    #[arg(long, default_value = DEFAULT_API_KEY)]
    api_key: String,
    /// Do not log requests to stderr.
    #[arg(long)]
    quiet: bool,
}

fn parse_faults(s: &str) -> Result<FaultFlags, String> {
    FaultFlags::parse_list(s).map_err(|e| e.to_string())
}

/// A failure that maps to a specific exit status.
#[derive(Debug)]
struct Invalid(Vec<String>);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0.join("\n"))
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl ToString) -> anyhow::Error {
    Invalid(vec![msg.to_string()]).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            match e.downcast_ref::<Invalid>() {
                Some(Invalid(lines)) => lines.iter().for_each(|l| eprintln!("error: {l}")),
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::from(EXIT_INVALID)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8> {
    let name = cli.model_name.as_deref();
    match &cli.command {
        Command::Validate(inputs) => {
            let loaded = Loaded::new(inputs, name)?;
            println!(
                "ok: model `{}` binds {} requests and {} responses",
                loaded.model.name,
                loaded.plan.sends.len(),
                loaded.plan.recvs.len()
            );
            Ok(EXIT_OK)
        }
        Command::Run(args) => run(args, name),
        Command::Enumerate(args) => enumerate(args, name),
        Command::Mock(args) => mock(args),
    }
}

struct Loaded {
    model: ParsedModel,
    spec: ApiSpec,
    preamble: Preamble,
    plan: BindingPlan,
}

impl Loaded {
    fn new(inputs: &Inputs, name: Option<&str>) -> Result<Loaded> {
        let model = load_model(&inputs.model, name)?;
        let bytes = fs::read(&inputs.spec).with_context(|| format!("cannot read {}", inputs.spec.display()))?;
        let spec = load_spec(&bytes, DocFormat::from_path(&inputs.spec)).map_err(invalid)?;
        for w in &spec.warnings {
            eprintln!("warning: {w}");
        }
        let preamble = load_preamble(inputs.preamble.as_deref())?;
        let plan = bind(&model.root, &spec, &preamble)
            .map_err(|errs| Invalid(errs.iter().map(ToString::to_string).collect()))?;
        Ok(Loaded {
            model,
            spec,
            preamble,
            plan,
        })
    }
}

fn load_model(path: &Path, name: Option<&str>) -> Result<ParsedModel> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let file = parse_file(&text).map_err(|e| match e {
        ParseError::WellFormedness { model, errors } => Invalid(
            errors
                .iter()
                .map(|(err, span)| match span {
                    Some(s) => format!("{}:{s}: model `{model}`: {err}", path.display()),
                    None => format!("{}: model `{model}`: {err}", path.display()),
                })
                .collect(),
        ),
        other => Invalid(vec![format!("{}:{other}", path.display())]),
    })?;
    Ok(file.select(name).map_err(invalid)?.clone())
}

fn load_preamble(path: Option<&Path>) -> Result<Preamble> {
    match path {
        Some(p) => Preamble::load(p).map_err(invalid),
        None => Ok(Preamble::default()),
    }
}

fn run(args: &RunArgs, name: Option<&str>) -> Result<u8> {
    let loaded = Loaded::new(&args.inputs, name)?;
    let base_url = args
        .base_url
        .clone()
        .or_else(|| loaded.spec.base_url_hint.clone())
        .ok_or_else(|| invalid("no --base-url given and the document declares no server"))?;
    let mut cfg = RunConfig::new(&base_url, args.seed);
    cfg.max_rec_unfoldings = args.max_rec_unfoldings;
    cfg.request_timeout = Duration::from_millis(args.timeout_ms);
    cfg.timing = if args.no_timing { Timing::Zero } else { Timing::Wall };
    if let Some(path) = &args.weights {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        cfg.choice_weights = serde_json::from_str::<BTreeMap<String, f64>>(&text)
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    }
    cfg.validate().map_err(invalid)?;
    let campaign = CampaignConfig {
        runs: args.runs,
        base_seed: args.seed,
        stop_on_first_fail: args.stop_on_first_fail,
        parallelism: args.parallel.max(1),
    };
    let driver = Driver::new(&loaded.model.root, &loaded.plan, &loaded.preamble);
    let timeout = cfg.request_timeout;
    let connect = move || -> Box<dyn Transport> { Box::new(UreqTransport::new(timeout)) };
    let report = driver.run_campaign(&cfg, &campaign, &connect)?;
    let written = write_outputs(&args.out, &report).with_context(|| format!("writing {}", args.out.display()))?;
    let c = &report.counts;
    let mut out = std::io::stdout().lock();
    writeln!(out, "model            {}", loaded.model.name)?;
    writeln!(out, "runs             {}", c.total())?;
    for (label, n) in [
        ("Pass", c.pass),
        ("BadStatusCode", c.bad_status_code),
        ("BadResponseBody", c.bad_response_body),
        ("AssertionFail", c.assertion_fail),
        ("TransportError", c.transport_error),
        ("ModelExhausted", c.model_exhausted),
    ] {
        writeln!(out, "{label:<16} {n}")?;
    }
    let cov = &report.coverage;
    for (label, r) in [("node coverage", cov.nodes), ("branch coverage", cov.branches)] {
        writeln!(out, "{label:<16} {}/{} ({:.1}%)", r.covered, r.total, r.ratio() * 100.0)?;
    }
    let scripts = written
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "sh"))
        .count();
    writeln!(
        out,
        "output           {} ({scripts} replay scripts)",
        args.out.display()
    )?;
    Ok(match report.exit_code() {
        1 => EXIT_FAULT,
        3 => EXIT_TRANSPORT,
        _ => EXIT_OK,
    })
}

fn enumerate(args: &EnumerateArgs, name: Option<&str>) -> Result<u8> {
    let model = load_model(&args.model, name)?;
    let preamble = load_preamble(args.preamble.as_deref())?;
    let rec_bound = match (args.rec_bound, uses_recursion(&model.root)) {
        (Some(k), _) => Some(k),
        (None, false) => Some(0),
        (None, true) => None,
    };
    let cfg = EnumConfig::from_preamble(&preamble, rec_bound).map_err(invalid)?;
    let traces = enumerate_traces(&model.root, &cfg, &preamble, &Env::new()).map_err(invalid)?;
    let mut out = std::io::stdout().lock();
    if args.dump {
        for t in &traces {
            writeln!(out, "{t}")?;
        }
    }
    let n = traces.len();
    writeln!(out, "{n} {}", if n == 1 { "trace" } else { "traces" })?;
    Ok(EXIT_OK)
}

fn uses_recursion(s: &Session) -> bool {
    let mut found = false;
    cots::ast::walk(s, &mut |n| found |= matches!(n, Session::Rec { .. }));
    found
}

fn mock(args: &MockArgs) -> Result<u8> {
    let cfg = MockConfig {
        host: args.host.clone(),
        api_key: args.api_key.clone(),
        faults: args.faults,
        log_requests: !args.quiet,
    };
    let server = serve(args.port, cfg)?;
    println!("mock service listening on {}", server.base_url());
    std::io::stdout().flush()?;
    server.wait();
    Ok(EXIT_OK)
}
