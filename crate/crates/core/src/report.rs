//! Campaign outputs: model coverage, JSON Lines run logs and shell scripts
//! that replay a run with curl.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::ast::{ModelIndex, NodeId};
use crate::driver::{CampaignReport, RunRecord, Verdict};
use crate::semantics::Direction;

/// Serialized payloads longer than this are cut short in `runs.jsonl`.
pub const PAYLOAD_LIMIT: usize = 2048;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub covered: usize,
    pub total: usize,
}

impl Ratio {
    /// Covered fraction; an empty dimension counts as fully covered.
    pub fn ratio(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.covered as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub nodes: Ratio,
    pub branches: Ratio,
    #[serde(skip)]
    pub covered_nodes: BTreeSet<NodeId>,
    #[serde(skip)]
    pub covered_branches: BTreeSet<NodeId>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("run {run} refers to node {node}, which is not a prefix of this model")]
    ForeignRecord { run: usize, node: NodeId },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Node coverage counts prefixes that were instantiated; branch coverage
/// counts choice arms that were selected or dispatched to.
pub fn coverage(index: &ModelIndex<'_>, records: &[RunRecord]) -> Result<CoverageReport, ReportError> {
    let prefixes = index.prefixes();
    let mut report = CoverageReport::default();
    for r in records {
        for (set, ids) in [
            (&mut report.covered_nodes, &r.covered_nodes),
            (&mut report.covered_branches, &r.covered_branches),
        ] {
            for id in ids {
                if !prefixes.contains(id) {
                    return Err(ReportError::ForeignRecord { run: r.run, node: *id });
                }
                set.insert(*id);
            }
        }
    }
    report.nodes = Ratio {
        covered: report.covered_nodes.len(),
        total: prefixes.len(),
    };
    report.branches = Ratio {
        covered: report.covered_branches.len(),
        total: prefixes.len(),
    };
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub dir: Direction,
    pub label: String,
    pub payload: Value,
}

/// One line of `runs.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub run: usize,
    pub seed: u64,
    pub verdict: Verdict,
    pub events: Vec<LogEvent>,
    pub ms: u64,
}

impl LogEntry {
    pub fn from_record(record: &RunRecord) -> LogEntry {
        let events = record
            .trace
            .0
            .iter()
            .map(|e| {
                let full = Value::Array(e.payload.clone());
                let text = full.to_string();
                let payload = if text.len() > PAYLOAD_LIMIT {
                    let mut cut = PAYLOAD_LIMIT;
                    while !text.is_char_boundary(cut) {
                        cut -= 1;
                    }
                    json!({"truncated": &text[..cut], "bytes": text.len(), "sidecar": sidecar_name(record.run)})
                } else {
                    full
                };
                LogEvent {
                    dir: e.dir,
                    label: e.label.clone(),
                    payload,
                }
            })
            .collect();
        LogEntry {
            run: record.run,
            seed: record.seed,
            verdict: record.verdict.clone(),
            events,
            ms: record.duration_ms,
        }
    }

    pub fn is_truncated(&self) -> bool {
        self.events.iter().any(|e| e.payload.get("truncated").is_some())
    }
}

pub fn sidecar_name(run: usize) -> String {
    format!("run-{run}.json")
}

pub fn repro_name(run: usize) -> String {
    format!("repro-run-{run}.sh")
}

/// Writes one JSON object per run, flushing after each line.
pub fn write_log(records: &[RunRecord], sink: &mut dyn Write) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *sink, &LogEntry::from_record(r))?;
        sink.write_all(b"\n")?;
        sink.flush()?;
    }
    Ok(())
}

/// Quotes `s` for a POSIX shell.
pub fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

/// A shell script replaying every request of `record` in order. Each curl
/// prints the status code it received on stdout; bodies go to stderr.
pub fn emit_curl(record: &RunRecord) -> String {
    let mut out = String::from("#!/bin/sh\n");
    let _ = writeln!(out, "# Replays run {} (seed {}).", record.run, record.seed);
    let _ = writeln!(
        out,
        "BASE_URL=\"${{BASE_URL:-{}}}\"",
        record.base_url.replace(['"', '$', '`', '\\'], "")
    );
    for exchange in &record.http_log {
        let req = &exchange.request;
        let mut line = format!(
            "curl -s -g -o /dev/stderr -w '%{{http_code}}\\n' -X {} \"$BASE_URL\"{}",
            req.method,
            shell_quote(&req.path)
        );
        for (k, v) in &req.headers {
            let _ = write!(line, " -H {}", shell_quote(&format!("{k}: {v}")));
        }
        if let Some(body) = &req.body {
            let _ = write!(line, " --data-binary {}", shell_quote(body));
        }
        out.push_str(&line);
        out.push('\n');
    }
    let observed = record
        .http_log
        .last()
        .and_then(|x| x.response.as_ref())
        .map(|r| r.status);
    let observed_text = observed.map_or("no response".to_string(), |s| s.to_string());
    let expected = match &record.verdict {
        Verdict::BadStatusCode { expected, .. } => expected.iter().map(u16::to_string).collect::<Vec<_>>().join(" or "),
        Verdict::TransportError { .. } => "a response".into(),
        _ => observed_text.clone(),
    };
    let _ = writeln!(
        out,
        "# final request: expected {expected}, observed {observed_text} ({})",
        verdict_summary(&record.verdict)
    );
    out
}

fn verdict_summary(v: &Verdict) -> String {
    match v {
        Verdict::Pass => "Pass".into(),
        Verdict::BadStatusCode { .. } => "BadStatusCode".into(),
        Verdict::BadResponseBody { violations } => format!("BadResponseBody: {}", violations.join("; ")),
        Verdict::AssertionFail { predicate, detail, .. } => match detail {
            Some(d) => format!("AssertionFail: {predicate}: {d}"),
            None => format!("AssertionFail: {predicate}"),
        },
        Verdict::TransportError { detail } => format!("TransportError: {detail}"),
        Verdict::ModelExhausted { rec_bound } => format!("ModelExhausted after {rec_bound} unfoldings"),
    }
    .replace('\n', " ")
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8], mode: Option<u32>) -> io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    #[cfg(unix)]
    if let Some(mode) = mode {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(fs::Permissions::from_mode(mode))?;
    }
    #[cfg(not(unix))]
    let _ = mode;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Writes `runs.jsonl`, `coverage.json`, a replay script per faulty run
/// and a full-record sidecar per run whose log line was truncated.
pub fn write_outputs(dir: &Path, report: &CampaignReport) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut log = Vec::new();
    write_log(&report.records, &mut log)?;
    let path = dir.join("runs.jsonl");
    write_atomic(&path, &log, None)?;
    written.push(path);
    let mut cov = serde_json::to_vec_pretty(&report.coverage).expect("coverage serializes");
    cov.push(b'\n');
    let path = dir.join("coverage.json");
    write_atomic(&path, &cov, None)?;
    written.push(path);
    for r in &report.records {
        if LogEntry::from_record(r).is_truncated() {
            let path = dir.join(sidecar_name(r.run));
            write_atomic(&path, &serde_json::to_vec_pretty(r).expect("record serializes"), None)?;
            written.push(path);
        }
        if r.verdict.is_fault() {
            let path = dir.join(repro_name(r.run));
            write_atomic(&path, emit_curl(r).as_bytes(), Some(0o755))?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{HttpExchange, HttpRequest, HttpResponse};
    use crate::parser::parse_model;
    use crate::semantics::{Event, Trace};

    fn record(verdict: Verdict) -> RunRecord {
        RunRecord {
            run: 0,
            seed: 42,
            base_url: "http://127.0.0.1:9".into(),
            trace: Trace(vec![Event::send("getCust", vec![json!("k"), json!("c1")])]),
            http_log: vec![HttpExchange {
                request: HttpRequest {
                    method: "GET".into(),
                    url: "http://127.0.0.1:9/customer/c1".into(),
                    path: "/customer/c1".into(),
                    headers: vec![("X-API-Key".into(), "k".into())],
                    body: None,
                },
                response: Some(HttpResponse {
                    status: 200,
                    body: "{}".into(),
                }),
            }],
            verdict,
            covered_nodes: BTreeSet::new(),
            covered_branches: BTreeSet::new(),
            duration_ms: 3,
        }
    }

    #[test]
    fn empty_coverage() {
        let m = parse_model("S = !a().?C200().end").unwrap();
        let c = coverage(&ModelIndex::new(&m.root), &[]).unwrap();
        assert_eq!(c.nodes, Ratio { covered: 0, total: 2 });
        assert_eq!(c.branches.total, 2);
        let mut r = record(Verdict::Pass);
        r.covered_nodes.insert(NodeId(0));
        assert!(matches!(
            coverage(&ModelIndex::new(&m.root), &[r]),
            Err(ReportError::ForeignRecord { .. })
        ));
    }

    #[test]
    fn single_get_script() {
        let script = emit_curl(&record(Verdict::BadStatusCode {
            expected: vec![404],
            actual: 200,
        }));
        let lines: Vec<&str> = script.lines().collect();
        assert_eq!(lines[0], "#!/bin/sh");
        assert_eq!(lines[2], "BASE_URL=\"${BASE_URL:-http://127.0.0.1:9}\"");
        assert_eq!(
            lines[3],
            "curl -s -g -o /dev/stderr -w '%{http_code}\\n' -X GET \"$BASE_URL\"'/customer/c1' -H 'X-API-Key: k'"
        );
        assert_eq!(lines[4], "# final request: expected 404, observed 200 (BadStatusCode)");
    }

    #[test]
    fn quoting() {
        assert_eq!(shell_quote("it's"), r"'it'\''s'");
        assert_eq!(shell_quote(""), "''");
    }

    #[test]
    fn log_line_shape_and_round_trip() {
        let r = record(Verdict::Pass);
        let mut buf = Vec::new();
        write_log(std::slice::from_ref(&r), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        let v: Value = serde_json::from_str(text.trim_end()).unwrap();
        let keys: BTreeSet<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, BTreeSet::from(["run", "seed", "verdict", "events", "ms"]));
        assert_eq!(v["verdict"]["kind"], "Pass");
        assert_eq!(v["events"][0]["dir"], "send");
        let back: LogEntry = serde_json::from_value(v).unwrap();
        assert_eq!(back, LogEntry::from_record(&r));
        let mut empty = Vec::new();
        write_log(&[], &mut empty).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn long_payloads_are_truncated() {
        let mut r = record(Verdict::Pass);
        r.trace.0[0].payload = vec![json!("x".repeat(3000))];
        let entry = LogEntry::from_record(&r);
        assert!(entry.is_truncated());
        assert_eq!(
            entry.events[0].payload["truncated"].as_str().unwrap().len(),
            PAYLOAD_LIMIT
        );
        assert_eq!(entry.events[0].payload["sidecar"], "run-0.json");
    }

    #[test]
    fn atomic_write_sets_mode() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.sh");
        write_atomic(&p, b"#!/bin/sh\n", Some(0o755)).unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"#!/bin/sh\n");
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            assert_eq!(fs::metadata(&p).unwrap().permissions().mode() & 0o777, 0o755);
        }
    }
}
