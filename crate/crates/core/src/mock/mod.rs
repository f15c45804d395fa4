//! A fault-injectable HTTP service implementing the fixture shop and
//! features APIs.
//!
//! Besides the API it serves an admin plane that the fixture OpenAPI
//! document does not describe: `POST /__admin/reset` drops all data and
//! `GET`/`PUT /__admin/faults` read and switch the fault flags.

mod app;

use std::collections::BTreeMap;
use std::net::{SocketAddr, TcpListener};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use axum::body::{Body, Bytes};
use axum::extract::State;
use axum::http::{HeaderMap, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use percent_encoding::percent_decode_str;
use serde_json::Value;

pub use app::{FaultFlags, MockApp, Reply, UnknownFault, FAULT_NAMES};

pub const DEFAULT_API_KEY: &str = "cots-demo-key";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockConfig {
    pub host: String,
    pub api_key: String,
    pub faults: FaultFlags,
    /// Log one line per request to stderr.
    pub log_requests: bool,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            host: "127.0.0.1".into(),
            api_key: DEFAULT_API_KEY.into(),
            faults: FaultFlags::none(),
            log_requests: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MockError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure { addr: String, source: std::io::Error },
    #[error("cannot start the server runtime: {0}")]
    Runtime(std::io::Error),
}

/// A running mock service. Dropping the handle stops the server.
pub struct MockServer {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
    app: Arc<Mutex<MockApp>>,
}

impl MockServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn set_faults(&self, faults: FaultFlags) {
        self.app.lock().expect("mock state").faults = faults;
    }

    pub fn reset(&self) {
        self.app.lock().expect("mock state").reset();
    }

    /// Blocks until the server stops, which only happens on shutdown.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Starts serving on `cfg.host:port` in a background thread. Port 0 picks
/// a free port; see [`MockServer::addr`].
pub fn serve(port: u16, cfg: MockConfig) -> Result<MockServer, MockError> {
    let addr = format!("{}:{port}", cfg.host);
    let listener = TcpListener::bind(&addr).map_err(|source| MockError::BindFailure {
        addr: addr.clone(),
        source,
    })?;
    listener
        .set_nonblocking(true)
        .map_err(|source| MockError::BindFailure { addr, source })?;
    let local = listener.local_addr().map_err(MockError::Runtime)?;
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(MockError::Runtime)?;
    let app = Arc::new(Mutex::new(MockApp::new(&cfg.api_key, cfg.faults)));
    let shared = Shared {
        app: app.clone(),
        log: cfg.log_requests,
    };
    let router = Router::new().fallback(handle).with_state(shared);
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let listener = {
        let _guard = runtime.enter();
        tokio::net::TcpListener::from_std(listener).map_err(MockError::Runtime)?
    };
    let thread = std::thread::spawn(move || {
        runtime.block_on(async move {
            let _ = axum::serve(listener, router)
                .with_graceful_shutdown(async move {
                    let _ = rx.await;
                })
                .await;
        });
    });
    Ok(MockServer {
        addr: local,
        shutdown: Some(tx),
        thread: Some(thread),
        app,
    })
}

#[derive(Clone)]
struct Shared {
    app: Arc<Mutex<MockApp>>,
    log: bool,
}

fn json_response(status: u16, body: Option<Value>) -> Response {
    let status = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    match body {
        Some(v) => (status, [("content-type", "application/json")], v.to_string()).into_response(),
        None => (status, Body::empty()).into_response(),
    }
}

async fn handle(State(shared): State<Shared>, method: Method, uri: Uri, headers: HeaderMap, body: Bytes) -> Response {
    let path = percent_decode_str(uri.path()).decode_utf8_lossy().into_owned();
    let query: BTreeMap<String, String> = uri
        .query()
        .unwrap_or("")
        .split('&')
        .filter(|kv| !kv.is_empty())
        .map(|kv| {
            let (k, v) = kv.split_once('=').unwrap_or((kv, ""));
            let dec = |s: &str| {
                percent_decode_str(&s.replace('+', " "))
                    .decode_utf8_lossy()
                    .into_owned()
            };
            (dec(k), dec(v))
        })
        .collect();
    let mut app = shared.app.lock().expect("mock state");
    let reply = match (method.as_str(), path.as_str()) {
        ("POST", "/__admin/reset") => {
            app.reset();
            Reply {
                status: 204,
                body: None,
            }
        }
        ("GET", "/__admin/faults") => Reply {
            status: 200,
            body: Some(serde_json::to_value(app.faults).expect("flags serialize")),
        },
        ("PUT", "/__admin/faults") => match serde_json::from_slice::<BTreeMap<String, bool>>(&body) {
            Ok(changes) => {
                let mut faults = app.faults;
                match changes.iter().try_for_each(|(k, on)| faults.set(k, *on)) {
                    Ok(()) => {
                        app.faults = faults;
                        Reply {
                            status: 200,
                            body: Some(serde_json::to_value(faults).expect("flags serialize")),
                        }
                    }
                    Err(e) => Reply {
                        status: 400,
                        body: Some(serde_json::json!({ "error": e.to_string() })),
                    },
                }
            }
            Err(e) => Reply {
                status: 400,
                body: Some(serde_json::json!({ "error": e.to_string() })),
            },
        },
        _ => {
            let key = headers.get("x-api-key").and_then(|v| v.to_str().ok());
            app.handle(method.as_str(), &path, &query, key, &body)
        }
    };
    if shared.log {
        eprintln!("{} {} -> {}", method, uri, reply.status);
    }
    json_response(reply.status, reply.body)
}
