use std::time::Duration;

use serde::{Deserialize, Serialize};
use ureq::http;

/// A fully resolved request. `path` is relative to the base URL and
/// includes the query string; `url` is the absolute form actually sent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpRequest {
    pub method: String,
    pub url: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct TransportError(pub String);

/// Anything that can answer requests: a real HTTP client or a stub.
pub trait Transport {
    fn execute(&mut self, request: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

/// Blocking HTTP/1.1 client. One instance serves one run: no retries, no
/// redirects and no cookie jar.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .max_redirects(0)
            .build()
            .into();
        UreqTransport { agent }
    }
}

impl Transport for UreqTransport {
    fn execute(&mut self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let mut builder = http::Request::builder()
            .method(request.method.as_str())
            .uri(&request.url);
        for (name, value) in &request.headers {
            builder = builder.header(name, value);
        }
        let err = |e: &dyn std::fmt::Display| TransportError(e.to_string());
        let result = match &request.body {
            Some(body) => self.agent.run(builder.body(body.clone()).map_err(|e| err(&e))?),
            None => self.agent.run(builder.body(()).map_err(|e| err(&e))?),
        };
        let mut response = result.map_err(|e| err(&e))?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string().map_err(|e| err(&e))?;
        Ok(HttpResponse { status, body })
    }
}
