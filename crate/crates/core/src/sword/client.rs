//! Deposit client used by the bulk-ingest CLI.
//!
//! Computes the package MD5 locally and declares it, so the server
//! rejects corrupted uploads; retries transport failures with the same
//! 1 s / 2 s / 4 s backoff as the harvester, and never retries once any
//! HTTP response arrived — a 2xx must not be deposited twice.

use std::path::Path;

use crate::clock::Clock;
use crate::metadata::ValidationReport;
use crate::store::md5_hex;
use crate::wire::{
    with_transport_retries, Method, OutboundRequest, Transport, TransportError,
};

use super::xml::{parse_error_xml, parse_receipt_xml, parse_service_document_xml};
use super::{DepositReceipt, ServiceDocument, PACKAGING_LAGO_SAF_ZIP};

#[derive(Debug, thiserror::Error)]
pub enum SwordClientError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("unauthorized: check the deposit token")]
    Unauthorized,
    #[error("server rejected the package checksum")]
    ChecksumMismatch,
    #[error("server does not accept this packaging")]
    UnsupportedPackaging,
    #[error("metadata validation failed: {summary}")]
    ValidationRejected {
        summary: String,
        report: Option<ValidationReport>,
    },
    #[error("invalid package at {path:?}: {message}")]
    InvalidPackage { path: String, message: String },
    #[error("unknown collection")]
    UnknownCollection,
    #[error("collection is a mirror; deposits are forbidden")]
    MirrorCollection,
    #[error("server error {code}: {message}")]
    Server { code: String, message: String },
    #[error("malformed server response: {0}")]
    Malformed(String),
    #[error("cannot read package: {0}")]
    Io(#[from] std::io::Error),
}

pub struct SwordClient<'a> {
    pub transport: &'a dyn Transport,
    pub clock: &'a dyn Clock,
    /// Node base URL, e.g. `http://host:8080`.
    pub endpoint: String,
    pub token: String,
}

impl<'a> SwordClient<'a> {
    pub fn new(
        transport: &'a dyn Transport,
        clock: &'a dyn Clock,
        endpoint: &str,
        token: &str,
    ) -> SwordClient<'a> {
        SwordClient {
            transport,
            clock,
            endpoint: endpoint.trim_end_matches('/').to_string(),
            token: token.to_string(),
        }
    }

    pub fn service_document(&self) -> Result<ServiceDocument, SwordClientError> {
        let req = OutboundRequest::get(format!("{}/sword/servicedocument", self.endpoint))
            .with_header("Authorization", &format!("Bearer {}", self.token));
        let resp = with_transport_retries(self.clock, || self.transport.execute(&req))?;
        if resp.status == 200 {
            parse_service_document_xml(&resp.body_string())
                .map_err(|e| SwordClientError::Malformed(e.to_string()))
        } else {
            Err(self.error_from_response(resp.status, &resp.body_string()))
        }
    }

    /// Deposit a ZIP package read from disk.
    pub fn deposit_file(
        &self,
        collection_id: &str,
        package_path: &Path,
        slug: Option<&str>,
    ) -> Result<DepositReceipt, SwordClientError> {
        let bytes = std::fs::read(package_path)?;
        self.deposit_bytes(collection_id, &bytes, slug)
    }

    pub fn deposit_bytes(
        &self,
        collection_id: &str,
        zip_bytes: &[u8],
        slug: Option<&str>,
    ) -> Result<DepositReceipt, SwordClientError> {
        let md5 = md5_hex(zip_bytes);
        let mut req = OutboundRequest {
            method: Method::Post,
            url: format!("{}/sword/deposit/{}", self.endpoint, collection_id),
            headers: Vec::new(),
            body: zip_bytes.to_vec(),
        }
        .with_header("Authorization", &format!("Bearer {}", self.token))
        .with_header("Content-Type", "application/zip")
        .with_header("X-Packaging", PACKAGING_LAGO_SAF_ZIP)
        .with_header("Content-MD5", &md5);
        if let Some(slug) = slug {
            req = req.with_header("Slug", slug);
        }
        let resp = with_transport_retries(self.clock, || self.transport.execute(&req))?;
        if resp.status == 201 {
            parse_receipt_xml(&resp.body_string())
                .map_err(|e| SwordClientError::Malformed(e.to_string()))
        } else {
            Err(self.error_from_response(resp.status, &resp.body_string()))
        }
    }

    fn error_from_response(&self, status: u16, body: &str) -> SwordClientError {
        let wire = match parse_error_xml(body) {
            Ok(wire) => wire,
            Err(_) => {
                return SwordClientError::Server {
                    code: format!("HTTP {status}"),
                    message: body.chars().take(200).collect(),
                }
            }
        };
        match wire.code.as_str() {
            "Unauthorized" => SwordClientError::Unauthorized,
            "ChecksumMismatch" => SwordClientError::ChecksumMismatch,
            "UnsupportedPackaging" => SwordClientError::UnsupportedPackaging,
            "ValidationRejected" => SwordClientError::ValidationRejected {
                summary: wire
                    .issues
                    .as_ref()
                    .map(|r| r.summary())
                    .unwrap_or_else(|| wire.message.clone()),
                report: wire.issues,
            },
            "InvalidPackage" => SwordClientError::InvalidPackage {
                path: wire.path.unwrap_or_default(),
                message: wire.message,
            },
            "UnknownCollection" => SwordClientError::UnknownCollection,
            "MirrorCollection" => SwordClientError::MirrorCollection,
            code => SwordClientError::Server {
                code: code.to_string(),
                message: wire.message,
            },
        }
    }
}
