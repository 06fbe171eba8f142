//! Minimal HTTP request/response types shared by the in-process router,
//! the tiny_http adapter, and the outbound clients.
//!
//! Clients (harvester, SWORD, bulk export) talk through the [`Transport`]
//! trait: [`HttpTransport`] goes over the network, [`InProcessTransport`]
//! dispatches straight into another node's router so multi-node tests run
//! hermetically in one process.

use std::collections::HashMap;
use std::io::Read;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use crate::clock::Clock;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
    Put,
    Delete,
    Other,
}

impl Method {
    pub fn parse(s: &str) -> Method {
        match s.to_ascii_uppercase().as_str() {
            "GET" => Method::Get,
            "POST" => Method::Post,
            "PUT" => Method::Put,
            "DELETE" => Method::Delete,
            _ => Method::Other,
        }
    }
}

/// An inbound request as seen by the node router.
#[derive(Debug, Clone)]
pub struct Request {
    pub method: Method,
    /// Percent-decoded path, no query string.
    pub path: String,
    /// Raw query string without the leading `?`.
    pub query: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Request {
    pub fn get(path_and_query: &str) -> Request {
        let (path, query) = match path_and_query.split_once('?') {
            Some((p, q)) => (p.to_string(), q.to_string()),
            None => (path_and_query.to_string(), String::new()),
        };
        Request {
            method: Method::Get,
            path,
            query,
            headers: Vec::new(),
            body: Vec::new(),
        }
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn with_header(mut self, name: &str, value: &str) -> Request {
        self.headers.push((name.to_string(), value.to_string()));
        self
    }

    /// Decoded `key=value` pairs in order of appearance. Pairs that are
    /// not valid UTF-8 after percent-decoding are kept with lossy text so
    /// the protocol layer can reject them itself.
    pub fn query_pairs(&self) -> Vec<(String, String)> {
        parse_query(&self.query)
    }
}

#[derive(Debug, Clone)]
pub struct Response {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Response {
    pub fn new(status: u16) -> Response {
        Response {
            status,
            headers: Vec::new(),
            body: Vec::new(),
        }
    }

    pub fn with_header(mut self, name: &str, value: &str) -> Response {
        self.headers.push((name.to_string(), value.to_string()));
        self
    }

    pub fn xml(status: u16, body: String) -> Response {
        Response {
            status,
            headers: vec![(
                "Content-Type".to_string(),
                "text/xml; charset=UTF-8".to_string(),
            )],
            body: body.into_bytes(),
        }
    }

    pub fn json(status: u16, body: String) -> Response {
        Response {
            status,
            headers: vec![("Content-Type".to_string(), "application/json".to_string())],
            body: body.into_bytes(),
        }
    }

    pub fn text(status: u16, body: &str) -> Response {
        Response {
            status,
            headers: vec![(
                "Content-Type".to_string(),
                "text/plain; charset=UTF-8".to_string(),
            )],
            body: body.as_bytes().to_vec(),
        }
    }

    pub fn not_found(msg: &str) -> Response {
        Response::text(404, msg)
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn body_string(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

pub fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'%' if i + 2 < bytes.len() => {
                let hi = (bytes[i + 1] as char).to_digit(16);
                let lo = (bytes[i + 2] as char).to_digit(16);
                if let (Some(h), Some(l)) = (hi, lo) {
                    out.push((h * 16 + l) as u8);
                    i += 3;
                } else {
                    out.push(b'%');
                    i += 1;
                }
            }
            b'+' => {
                out.push(b' ');
                i += 1;
            }
            c => {
                out.push(c);
                i += 1;
            }
        }
    }
    String::from_utf8_lossy(&out).into_owned()
}

pub fn percent_encode(s: &str) -> String {
    let mut out = String::new();
    for b in s.as_bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(*b as char)
            }
            _ => out.push_str(&format!("%{:02X}", b)),
        }
    }
    out
}

/// Join a base URL and an absolute path without doubling slashes, so
/// configured endpoints may carry a trailing slash or not.
pub fn join_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}

/// Parse a raw query string into decoded pairs, order preserved.
pub fn parse_query(raw: &str) -> Vec<(String, String)> {
    if raw.is_empty() {
        return Vec::new();
    }
    raw.split('&')
        .filter(|s| !s.is_empty())
        .map(|pair| match pair.split_once('=') {
            Some((k, v)) => (percent_decode(k), percent_decode(v)),
            None => (percent_decode(pair), String::new()),
        })
        .collect()
}

pub fn encode_query(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| format!("{}={}", percent_encode(k), percent_encode(v)))
        .collect::<Vec<_>>()
        .join("&")
}

/// An outbound request addressed by full URL.
#[derive(Debug, Clone)]
pub struct OutboundRequest {
    pub method: Method,
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl OutboundRequest {
    pub fn get(url: String) -> OutboundRequest {
        OutboundRequest {
            method: Method::Get,
            url,
            headers: Vec::new(),
            body: Vec::new(),
        }
    }

    pub fn with_header(mut self, name: &str, value: &str) -> OutboundRequest {
        self.headers.push((name.to_string(), value.to_string()));
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("unreachable endpoint {url}: {detail}")]
    Unreachable { url: String, detail: String },
    #[error("transport failure for {url}: {detail}")]
    Io { url: String, detail: String },
}

/// Network abstraction for all outbound HTTP.
pub trait Transport: Send + Sync {
    fn execute(&self, req: &OutboundRequest) -> Result<Response, TransportError>;
}

/// Real HTTP transport. Plain `http://` only; the node network runs on
/// private links and TLS termination is left to front proxies.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        HttpTransport {
            agent: config.into(),
        }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        HttpTransport::new(Duration::from_secs(30))
    }
}

impl Transport for HttpTransport {
    fn execute(&self, req: &OutboundRequest) -> Result<Response, TransportError> {
        let sent = match req.method {
            Method::Get | Method::Delete => {
                let mut builder = if req.method == Method::Get {
                    self.agent.get(&req.url)
                } else {
                    self.agent.delete(&req.url)
                };
                for (k, v) in &req.headers {
                    builder = builder.header(k.as_str(), v.as_str());
                }
                builder.call()
            }
            Method::Post | Method::Put => {
                let mut builder = if req.method == Method::Post {
                    self.agent.post(&req.url)
                } else {
                    self.agent.put(&req.url)
                };
                for (k, v) in &req.headers {
                    builder = builder.header(k.as_str(), v.as_str());
                }
                builder.send(&req.body[..])
            }
            Method::Other => {
                return Err(TransportError::Io {
                    url: req.url.clone(),
                    detail: "unsupported method".to_string(),
                })
            }
        };
        let result = sent.map_err(|e| TransportError::Unreachable {
            url: req.url.clone(),
            detail: e.to_string(),
        })?;
        let status = result.status().as_u16();
        let mut headers = Vec::new();
        for (name, value) in result.headers() {
            headers.push((
                name.as_str().to_string(),
                value.to_str().unwrap_or("").to_string(),
            ));
        }
        let mut body = Vec::new();
        result
            .into_body()
            .into_reader()
            .read_to_end(&mut body)
            .map_err(|e| TransportError::Io {
                url: req.url.clone(),
                detail: e.to_string(),
            })?;
        Ok(Response {
            status,
            headers,
            body,
        })
    }
}

/// Routes requests to in-process handlers registered under base URLs.
/// Unregistered bases fail like an unreachable host, which lets tests
/// exercise retry paths too.
type RouteHandler = Arc<dyn Fn(Request) -> Response + Send + Sync>;

#[derive(Default)]
pub struct InProcessTransport {
    routes: RwLock<HashMap<String, RouteHandler>>,
}

impl InProcessTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<F>(&self, base_url: &str, handler: F)
    where
        F: Fn(Request) -> Response + Send + Sync + 'static,
    {
        self.routes
            .write()
            .unwrap()
            .insert(base_url.trim_end_matches('/').to_string(), Arc::new(handler));
    }

    pub fn unregister(&self, base_url: &str) {
        self.routes
            .write()
            .unwrap()
            .remove(base_url.trim_end_matches('/'));
    }
}

impl Transport for InProcessTransport {
    fn execute(&self, req: &OutboundRequest) -> Result<Response, TransportError> {
        let routes = self.routes.read().unwrap();
        let (base, handler) = routes
            .iter()
            .filter(|(base, _)| {
                req.url.starts_with(base.as_str())
                    && matches!(
                        req.url[base.len()..].chars().next(),
                        None | Some('/') | Some('?')
                    )
            })
            .max_by_key(|(base, _)| base.len())
            .map(|(b, h)| (b.clone(), h.clone()))
            .ok_or_else(|| TransportError::Unreachable {
                url: req.url.clone(),
                detail: "no in-process route".to_string(),
            })?;
        drop(routes);
        let rest = &req.url[base.len()..];
        let (path, query) = match rest.split_once('?') {
            Some((p, q)) => (p, q),
            None => (rest, ""),
        };
        let path = if path.is_empty() { "/" } else { path };
        let inner = Request {
            method: req.method,
            path: percent_decode(path),
            query: query.to_string(),
            headers: req.headers.clone(),
            body: req.body.clone(),
        };
        Ok(handler(inner))
    }
}

/// Run `attempt` with up to three retries after transport failures,
/// sleeping 1 s, 2 s, 4 s between tries. Responses of any HTTP status
/// count as success here; callers interpret status codes themselves.
pub fn with_transport_retries<T>(
    clock: &dyn Clock,
    mut attempt: impl FnMut() -> Result<T, TransportError>,
) -> Result<T, TransportError> {
    let mut delay = Duration::from_secs(1);
    let mut last_err = None;
    for try_no in 0..4 {
        if try_no > 0 {
            clock.sleep(delay);
            delay *= 2;
        }
        match attempt() {
            Ok(v) => return Ok(v),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt ran"))
}
