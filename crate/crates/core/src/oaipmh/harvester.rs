//! Harvester client: runs a ListRecords query against a provider,
//! follows resumption tokens to exhaustion, and reports the incremental
//! checkpoint for the next run.

use crate::clock::{Clock, Datestamp};
use crate::wire::{encode_query, with_transport_retries, OutboundRequest, Transport, TransportError};

use super::model::{parse_oai_response, OaiBody, OaiRecord, ProtocolError};
use super::OaiErrorCode;

#[derive(Debug, Clone)]
pub struct HarvestQuery {
    pub base_url: String,
    pub metadata_prefix: String,
    pub from: Option<Datestamp>,
    pub until: Option<Datestamp>,
    pub set: Option<String>,
}

impl HarvestQuery {
    pub fn new(base_url: &str, metadata_prefix: &str) -> HarvestQuery {
        HarvestQuery {
            base_url: base_url.trim_end_matches('/').to_string(),
            metadata_prefix: metadata_prefix.to_string(),
            from: None,
            until: None,
            set: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HarvestReport {
    pub received: usize,
    pub deleted: usize,
    pub pages: usize,
    /// Maximum datestamp seen across all records.
    pub max_datestamp: Option<Datestamp>,
}

impl HarvestReport {
    /// Checkpoint for the next incremental harvest: one second past the
    /// maximum datestamp seen, so an unchanged provider yields zero
    /// records on the next run (from/until are inclusive on the wire).
    pub fn next_from(&self) -> Option<Datestamp> {
        self.max_datestamp.map(|d| d.succ())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarvestError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Harvest every record matching `query`, calling `on_record` once per
/// record, deleted headers included.
///
/// Transport failures retry 3 times with 1 s / 2 s / 4 s backoff. A
/// badResumptionToken mid-stream (e.g. the provider restarted past our
/// token TTL) triggers one full restart of the harvest before failing.
/// noRecordsMatch is not an error: it reports zero counts.
pub fn harvest(
    transport: &dyn Transport,
    clock: &dyn Clock,
    query: &HarvestQuery,
    on_record: &mut dyn FnMut(&OaiRecord),
) -> Result<HarvestReport, HarvestError> {
    let mut restarted = false;
    'restart: loop {
        let mut report = HarvestReport::default();
        let mut token: Option<String> = None;
        loop {
            let url = page_url(query, token.as_deref());
            let response = with_transport_retries(clock, || {
                let resp = transport.execute(&OutboundRequest::get(url.clone()))?;
                if resp.status != 200 {
                    return Err(TransportError::Io {
                        url: url.clone(),
                        detail: format!("unexpected HTTP status {}", resp.status),
                    });
                }
                Ok(resp)
            })?;
            let parsed = parse_oai_response(&response.body_string())?;
            report.pages += 1;

            match parsed.body {
                OaiBody::Errors(errors) => {
                    if errors.iter().any(|e| e.code == OaiErrorCode::NoRecordsMatch) {
                        return Ok(report);
                    }
                    let is_stale_token = errors
                        .iter()
                        .any(|e| e.code == OaiErrorCode::BadResumptionToken);
                    if is_stale_token && token.is_some() && !restarted {
                        restarted = true;
                        continue 'restart;
                    }
                    return Err(ProtocolError::new(
                        "error",
                        format!(
                            "provider returned {}",
                            errors
                                .iter()
                                .map(|e| e.code.as_str())
                                .collect::<Vec<_>>()
                                .join(", ")
                        ),
                    )
                    .into());
                }
                OaiBody::ListRecords { records, token: t } => {
                    for record in &records {
                        report.received += 1;
                        if record.header.deleted {
                            report.deleted += 1;
                        }
                        report.max_datestamp = Some(
                            report
                                .max_datestamp
                                .map_or(record.header.datestamp, |m| m.max(record.header.datestamp)),
                        );
                        on_record(record);
                    }
                    match t {
                        Some(info) if !info.value.is_empty() => token = Some(info.value),
                        _ => return Ok(report),
                    }
                }
                other => {
                    return Err(ProtocolError::new(
                        "ListRecords",
                        format!("expected a ListRecords payload, got {}", body_name(&other)),
                    )
                    .into())
                }
            }
        }
    }
}

fn body_name(body: &OaiBody) -> &'static str {
    match body {
        OaiBody::Errors(_) => "errors",
        OaiBody::Identify(_) => "Identify",
        OaiBody::ListMetadataFormats(_) => "ListMetadataFormats",
        OaiBody::ListSets(_) => "ListSets",
        OaiBody::ListIdentifiers { .. } => "ListIdentifiers",
        OaiBody::ListRecords { .. } => "ListRecords",
        OaiBody::GetRecord(_) => "GetRecord",
    }
}

fn page_url(query: &HarvestQuery, token: Option<&str>) -> String {
    let mut pairs: Vec<(String, String)> = vec![("verb".into(), "ListRecords".into())];
    match token {
        Some(t) => pairs.push(("resumptionToken".into(), t.to_string())),
        None => {
            pairs.push(("metadataPrefix".into(), query.metadata_prefix.clone()));
            if let Some(f) = query.from {
                pairs.push(("from".into(), f.to_string()));
            }
            if let Some(u) = query.until {
                pairs.push(("until".into(), u.to_string()));
            }
            if let Some(s) = &query.set {
                pairs.push(("set".into(), s.clone()));
            }
        }
    }
    format!("{}?{}", query.base_url, encode_query(&pairs))
}
