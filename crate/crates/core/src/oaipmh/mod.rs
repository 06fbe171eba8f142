//! OAI-PMH 2.0: the data-provider endpoint served over the store and the
//! harvester client used by federation and the bulk-export CLI.
//!
//! The wire format follows the public OAI-PMH 2.0 protocol document:
//! six verbs, in-band error codes, second-granularity UTC datestamps,
//! and incomplete lists continued by resumption tokens.

mod harvester;
mod model;
mod provider;
mod token;

pub use harvester::{harvest, HarvestError, HarvestQuery, HarvestReport};
pub use model::{
    parse_oai_response, render_oai_response, IdentifyInfo, MetadataFormatInfo, OaiBody, OaiError,
    OaiRecord, OaiResponse, ProtocolError, RecordHeader, RequestEcho, SetInfo, TokenInfo,
};
pub use provider::{Provider, ProviderConfig};
pub use token::{TokenError, TokenPayload, TOKEN_TTL_SECS};

use std::fmt;
use std::str::FromStr;

use uuid::Uuid;

/// Protocol namespace of every response envelope.
pub const OAI_PMH_XMLNS: &str = "http://www.openarchives.org/OAI/2.0/";

/// Metadata prefix of the mandatory Dublin Core format.
pub const OAI_DC_PREFIX: &str = "oai_dc";
/// Metadata prefix of the site-local lossless format.
pub const LAGO_PREFIX: &str = "lago";

pub const OAI_DC_SCHEMA: &str = "http://www.openarchives.org/OAI/2.0/oai_dc.xsd";
pub const LAGO_SCHEMA: &str = "urn:lago:metadata:1.0#schema";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OaiVerb {
    Identify,
    ListMetadataFormats,
    ListSets,
    ListIdentifiers,
    ListRecords,
    GetRecord,
}

impl OaiVerb {
    pub fn parse(s: &str) -> Option<OaiVerb> {
        Some(match s {
            "Identify" => OaiVerb::Identify,
            "ListMetadataFormats" => OaiVerb::ListMetadataFormats,
            "ListSets" => OaiVerb::ListSets,
            "ListIdentifiers" => OaiVerb::ListIdentifiers,
            "ListRecords" => OaiVerb::ListRecords,
            "GetRecord" => OaiVerb::GetRecord,
            _ => return None,
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            OaiVerb::Identify => "Identify",
            OaiVerb::ListMetadataFormats => "ListMetadataFormats",
            OaiVerb::ListSets => "ListSets",
            OaiVerb::ListIdentifiers => "ListIdentifiers",
            OaiVerb::ListRecords => "ListRecords",
            OaiVerb::GetRecord => "GetRecord",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OaiErrorCode {
    BadVerb,
    BadArgument,
    BadResumptionToken,
    CannotDisseminateFormat,
    IdDoesNotExist,
    NoRecordsMatch,
    NoMetadataFormats,
    NoSetHierarchy,
}

impl OaiErrorCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            OaiErrorCode::BadVerb => "badVerb",
            OaiErrorCode::BadArgument => "badArgument",
            OaiErrorCode::BadResumptionToken => "badResumptionToken",
            OaiErrorCode::CannotDisseminateFormat => "cannotDisseminateFormat",
            OaiErrorCode::IdDoesNotExist => "idDoesNotExist",
            OaiErrorCode::NoRecordsMatch => "noRecordsMatch",
            OaiErrorCode::NoMetadataFormats => "noMetadataFormats",
            OaiErrorCode::NoSetHierarchy => "noSetHierarchy",
        }
    }

    pub fn parse(s: &str) -> Option<OaiErrorCode> {
        Some(match s {
            "badVerb" => OaiErrorCode::BadVerb,
            "badArgument" => OaiErrorCode::BadArgument,
            "badResumptionToken" => OaiErrorCode::BadResumptionToken,
            "cannotDisseminateFormat" => OaiErrorCode::CannotDisseminateFormat,
            "idDoesNotExist" => OaiErrorCode::IdDoesNotExist,
            "noRecordsMatch" => OaiErrorCode::NoRecordsMatch,
            "noMetadataFormats" => OaiErrorCode::NoMetadataFormats,
            "noSetHierarchy" => OaiErrorCode::NoSetHierarchy,
            _ => return None,
        })
    }
}

/// Identifier of a record as served by a node: `oai:<nodeName>:<uuid>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OaiIdentifier {
    pub node: String,
    pub uuid: Uuid,
}

impl OaiIdentifier {
    pub fn new(node: &str, uuid: Uuid) -> OaiIdentifier {
        OaiIdentifier {
            node: node.to_string(),
            uuid,
        }
    }
}

impl fmt::Display for OaiIdentifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "oai:{}:{}", self.node, self.uuid)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("invalid OAI identifier {0:?}")]
pub struct OaiIdentifierParseError(pub String);

impl FromStr for OaiIdentifier {
    type Err = OaiIdentifierParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let rest = s
            .strip_prefix("oai:")
            .ok_or_else(|| OaiIdentifierParseError(s.to_string()))?;
        let (node, uuid) = rest
            .split_once(':')
            .ok_or_else(|| OaiIdentifierParseError(s.to_string()))?;
        if node.is_empty() {
            return Err(OaiIdentifierParseError(s.to_string()));
        }
        let uuid = Uuid::parse_str(uuid).map_err(|_| OaiIdentifierParseError(s.to_string()))?;
        Ok(OaiIdentifier {
            node: node.to_string(),
            uuid,
        })
    }
}
