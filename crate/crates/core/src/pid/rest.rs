//! REST surface of the PID registry.
//!
//! - `POST /pid/handles/<prefix>` — mint (bearer token)
//! - `GET /pid/handles/<prefix>/<suffix...>` — resolve (public);
//!   200 with a JSON value list and an `X-Derived: true|false` header
//! - `PUT` / `DELETE /pid/handles/<prefix>/<suffix...>` — update /
//!   remove (bearer token)

use serde::{Deserialize, Serialize};

use crate::wire::{Method, Request, Response};

use super::{Handle, HandleRegistry, HandleValue, NewHandleValue, PidError};

#[derive(Debug, Deserialize)]
struct MintBody {
    #[serde(default)]
    suffix: Option<String>,
    values: Vec<NewHandleValue>,
}

#[derive(Debug, Deserialize)]
struct UpdateBody {
    values: Vec<NewHandleValue>,
}

#[derive(Debug, Serialize)]
struct HandleBody<'a> {
    handle: String,
    values: &'a [HandleValue],
}

#[derive(Debug, Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: String,
}

fn error_response(status: u16, code: &str, message: String) -> Response {
    Response::json(
        status,
        serde_json::to_string(&ErrorBody {
            error: code,
            message,
        })
        .unwrap(),
    )
}

fn pid_error_response(err: PidError) -> Response {
    let (status, code) = match &err {
        PidError::NotFound(_) => (404, "NotFound"),
        PidError::InvalidHandle(_) => (400, "InvalidHandle"),
        PidError::InvalidSuffix(_) => (400, "InvalidSuffix"),
        PidError::SuffixTaken(_) => (409, "SuffixTaken"),
        PidError::EmptyValues => (400, "EmptyValues"),
        PidError::InvalidValues(_) => (400, "InvalidValues"),
        PidError::Log(_) => (500, "Storage"),
    };
    error_response(status, code, err.to_string())
}

fn handle_body(handle: &Handle) -> String {
    serde_json::to_string(&HandleBody {
        handle: handle.text(),
        values: &handle.values,
    })
    .unwrap()
}

fn authorized(req: &Request, token: &str) -> bool {
    req.header("Authorization")
        .map(|h| h.trim())
        .is_some_and(|h| {
            h.strip_prefix("Bearer ")
                .is_some_and(|t| t.trim() == token)
        })
}

/// Dispatch a request under `/pid/handles/`. `tail` is the path after
/// that prefix, percent-decoded.
pub fn handle_request(
    registry: &HandleRegistry,
    deposit_token: &str,
    req: &Request,
    tail: &str,
) -> Response {
    let tail = tail.trim_matches('/');
    match req.method {
        Method::Post => {
            if !authorized(req, deposit_token) {
                return error_response(401, "Unauthorized", "missing or bad bearer token".into());
            }
            if tail != registry.prefix() {
                return error_response(
                    404,
                    "NotFound",
                    format!("this node mints under prefix {}", registry.prefix()),
                );
            }
            let body: MintBody = match serde_json::from_slice(&req.body) {
                Ok(b) => b,
                Err(e) => return error_response(400, "BadRequest", e.to_string()),
            };
            match registry.mint(body.suffix.as_deref(), body.values) {
                Ok(handle) => Response::json(201, handle_body(&handle)),
                Err(e) => pid_error_response(e),
            }
        }
        Method::Get => match registry.resolve(tail) {
            Ok(resolution) => Response::json(
                200,
                serde_json::to_string(&resolution.values).unwrap(),
            )
            .with_header("X-Derived", if resolution.derived { "true" } else { "false" }),
            Err(e) => pid_error_response(e),
        },
        Method::Put => {
            if !authorized(req, deposit_token) {
                return error_response(401, "Unauthorized", "missing or bad bearer token".into());
            }
            let body: UpdateBody = match serde_json::from_slice(&req.body) {
                Ok(b) => b,
                Err(e) => return error_response(400, "BadRequest", e.to_string()),
            };
            match registry.update(tail, body.values) {
                Ok(handle) => Response::json(200, handle_body(&handle)),
                Err(e) => pid_error_response(e),
            }
        }
        Method::Delete => {
            if !authorized(req, deposit_token) {
                return error_response(401, "Unauthorized", "missing or bad bearer token".into());
            }
            match registry.remove(tail) {
                Ok(()) => Response::new(204),
                Err(e) => pid_error_response(e),
            }
        }
        _ => error_response(405, "MethodNotAllowed", "use GET/POST/PUT/DELETE".into()),
    }
}
