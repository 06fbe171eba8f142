//! SWORD deposit surface: service-document discovery plus package
//! deposit into a collection, modeled on the v1.3 AtomPub flow with one
//! artifact-defined packaging format (`lago-saf-zip`, a zipped SAF item
//! directory). Server and client share the XML forms defined here.

mod client;
mod server;
mod xml;

pub use client::{SwordClient, SwordClientError};
pub use server::DepositContext;
pub use xml::{
    parse_error_xml, parse_receipt_xml, parse_service_document_xml, render_error_xml,
    render_receipt_xml, render_service_document_xml,
};

use uuid::Uuid;

use crate::metadata::ValidationReport;

/// The only packaging token this node accepts.
pub const PACKAGING_LAGO_SAF_ZIP: &str = "lago-saf-zip";

/// Namespace of receipt and error documents.
pub const SWORD_XMLNS: &str = "urn:lago:sword:1.0";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceCollection {
    pub href: String,
    pub title: String,
    pub accepted_packaging: Vec<String>,
    pub accepted_media_types: Vec<String>,
}

/// What a depositor can discover about this node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceDocument {
    pub version: String,
    pub max_upload_bytes: u64,
    pub collections: Vec<ServiceCollection>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepositReceipt {
    pub item_uuid: Uuid,
    pub oai_identifier: String,
    pub pid: Option<String>,
    pub treatment: String,
    /// URL of the created item's content listing.
    pub location: String,
}

/// Server-side deposit failure. Every variant maps to one HTTP status
/// and a machine-readable code in the error XML body.
#[derive(Debug, thiserror::Error)]
pub enum DepositError {
    #[error("missing or bad bearer token")]
    Unauthorized,
    #[error("packaging {0:?} is not supported")]
    UnsupportedPackaging(String),
    #[error("declared MD5 {declared} does not match computed {computed}")]
    ChecksumMismatch { declared: String, computed: String },
    #[error("invalid package at {path:?}: {detail}")]
    InvalidPackage { path: String, detail: String },
    #[error("metadata validation failed: {}", .0.summary())]
    ValidationRejected(ValidationReport),
    #[error("unknown collection {0:?}")]
    UnknownCollection(String),
    #[error("collection {0:?} mirrors a peer; deposits are forbidden")]
    MirrorCollection(String),
    #[error("package exceeds the {0}-byte upload limit")]
    TooLarge(u64),
    #[error("storage failure: {0}")]
    Storage(String),
}

impl DepositError {
    pub fn http_status(&self) -> u16 {
        match self {
            DepositError::Unauthorized => 401,
            DepositError::UnsupportedPackaging(_) => 415,
            DepositError::ChecksumMismatch { .. } => 412,
            DepositError::InvalidPackage { .. } => 400,
            DepositError::ValidationRejected(_) => 422,
            DepositError::UnknownCollection(_) => 404,
            DepositError::MirrorCollection(_) => 403,
            DepositError::TooLarge(_) => 400,
            DepositError::Storage(_) => 500,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            DepositError::Unauthorized => "Unauthorized",
            DepositError::UnsupportedPackaging(_) => "UnsupportedPackaging",
            DepositError::ChecksumMismatch { .. } => "ChecksumMismatch",
            DepositError::InvalidPackage { .. } => "InvalidPackage",
            DepositError::ValidationRejected(_) => "ValidationRejected",
            DepositError::UnknownCollection(_) => "UnknownCollection",
            DepositError::MirrorCollection(_) => "MirrorCollection",
            DepositError::TooLarge(_) => "TooLarge",
            DepositError::Storage(_) => "Storage",
        }
    }
}
