//! Bulk export: harvest a node's records in the lago format and write
//! them back out as SAF packages, fetching and verifying every
//! bitstream. Export of a deposit is metadata-lossless modulo the
//! `identifier.uri` field the deposit added.

use std::path::Path;

use crate::clock::{Clock, Datestamp};
use crate::metadata::parse_lago_document;
use crate::oaipmh::{harvest, HarvestQuery, OaiIdentifier, OaiRecord};
use crate::store::md5_hex;
use crate::wire::{with_transport_retries, OutboundRequest, Transport};

use super::saf::{ensure_empty_dir, write_saf_package};
use super::{BatchReport, IngestError, ItemOutcome, ItemStatus};

#[derive(Debug, Clone)]
pub struct BulkExportOptions {
    pub endpoint: String,
    pub set: Option<String>,
    pub from: Option<Datestamp>,
}

/// Export every active record the query matches into `out_dir`, one SAF
/// package per item named `item_<index>`. An item whose bitstream fails
/// its MD5 check is marked failed and removed; the batch continues.
pub fn bulk_export(
    transport: &dyn Transport,
    clock: &dyn Clock,
    options: &BulkExportOptions,
    out_dir: &Path,
) -> Result<BatchReport, IngestError> {
    ensure_empty_dir(out_dir)?;
    let started = clock.now_precise();

    let mut query = HarvestQuery::new(&crate::wire::join_url(&options.endpoint, "oai"), "lago");
    query.set = options.set.clone();
    query.from = options.from;
    let mut records: Vec<OaiRecord> = Vec::new();
    harvest(transport, clock, &query, &mut |record| {
        if !record.header.deleted {
            records.push(record.clone());
        }
    })?;

    let mut per_item = Vec::with_capacity(records.len());
    for (index, record) in records.iter().enumerate() {
        let dir = out_dir.join(format!("item_{index:04}"));
        let status = match export_one(transport, clock, &options.endpoint, record, &dir) {
            Ok(()) => ItemStatus::Exported,
            Err(error) => {
                let _ = std::fs::remove_dir_all(&dir);
                ItemStatus::Failed { error }
            }
        };
        per_item.push(ItemOutcome {
            package_dir: dir,
            status,
        });
    }

    let elapsed = (clock.now_precise() - started)
        .to_std()
        .unwrap_or_default();
    Ok(BatchReport::tally(per_item, elapsed))
}

fn export_one(
    transport: &dyn Transport,
    clock: &dyn Clock,
    endpoint: &str,
    record: &OaiRecord,
    dir: &Path,
) -> Result<(), String> {
    let payload = record
        .metadata_xml
        .as_deref()
        .ok_or_else(|| "record has no metadata payload".to_string())?;
    let doc = parse_lago_document(payload).map_err(|e| e.to_string())?;

    let identifier: OaiIdentifier = record
        .header
        .identifier
        .parse()
        .map_err(|_| format!("unparseable identifier {:?}", record.header.identifier))?;

    let mut files = Vec::with_capacity(doc.bitstreams.len());
    for bref in &doc.bitstreams {
        let url = crate::wire::join_url(
            endpoint,
            &format!(
                "items/{}/bitstreams/{}",
                identifier.uuid,
                crate::wire::percent_encode(&bref.name)
            ),
        );
        let resp = with_transport_retries(clock, || {
            transport.execute(&OutboundRequest::get(url.clone()))
        })
        .map_err(|e| e.to_string())?;
        if resp.status != 200 {
            return Err(integrity_or_http_error(&resp, &bref.name));
        }
        let computed = md5_hex(&resp.body);
        if computed != bref.md5 {
            return Err(format!(
                "IntegrityError: bitstream {:?} has md5 {computed}, expected {}",
                bref.name, bref.md5
            ));
        }
        files.push((bref.name.clone(), resp.body));
    }

    write_saf_package(dir, &doc.record, &files).map_err(|e| e.to_string())
}

fn integrity_or_http_error(resp: &crate::wire::Response, name: &str) -> String {
    let body = resp.body_string();
    if resp.status == 500 && body.contains("no longer match") {
        format!("IntegrityError: server detected corruption serving {name:?}: {body}")
    } else {
        format!("HTTP {} fetching {name:?}: {body}", resp.status)
    }
}
