//! One incremental sync of one peer.
//!
//! Sync copies catalogs, never authorship: the origin node stays the
//! single writer for its items, and a record that originated here is
//! skipped when it echoes back (loop prevention). Harvests are
//! idempotent, so a failed run simply retries from the old checkpoint.

use crate::clock::Clock;
use crate::metadata::parse_lago_document;
use crate::oaipmh::{
    harvest, parse_oai_response, HarvestError, HarvestQuery, OaiBody, OaiIdentifier, OaiRecord,
};
use crate::store::{md5_hex, NewFile, OriginTag, Store, UpsertOutcome, UpsertPayload};
use crate::wire::{with_transport_retries, OutboundRequest, Transport, TransportError};

use super::{PeerConfig, SyncReport, SyncStateStore};

#[derive(Debug, thiserror::Error)]
pub enum SyncError {
    #[error("transport: {0}")]
    Transport(#[from] TransportError),
    #[error("protocol: {0}")]
    Protocol(String),
}

impl From<HarvestError> for SyncError {
    fn from(e: HarvestError) -> SyncError {
        match e {
            HarvestError::Transport(t) => SyncError::Transport(t),
            HarvestError::Protocol(p) => SyncError::Protocol(p.to_string()),
        }
    }
}

/// Everything sync needs from the node.
pub struct SyncEnv<'a> {
    pub store: &'a Store,
    pub transport: &'a dyn Transport,
    pub clock: &'a dyn Clock,
    pub node_name: &'a str,
    pub transitive: bool,
}

/// Harvest `peer` once from its checkpoint and apply every record to
/// the local mirror. The checkpoint advances only on full success; the
/// state store records the outcome either way.
pub fn sync_once(
    env: &SyncEnv,
    peer: &PeerConfig,
    state: &SyncStateStore,
) -> Result<SyncReport, SyncError> {
    let started = env.clock.now();
    let started_precise = env.clock.now_precise();
    let result = run_sync(env, peer, state, started);
    let finished_at = env.clock.now();
    let duration_ms = (env.clock.now_precise() - started_precise)
        .num_milliseconds()
        .max(0) as u64;

    match result {
        Ok((mut report, max_datestamp)) => {
            report.duration_ms = duration_ms;
            let _ = state.update(&peer.peer_name, |s| {
                if let Some(max) = max_datestamp {
                    s.last_checkpoint = Some(match s.last_checkpoint {
                        Some(old) => old.max(max),
                        None => max,
                    });
                }
                s.consecutive_failures = 0;
                s.last_result = Some(super::SyncOutcome {
                    ok: true,
                    error: None,
                    report: Some(report.clone()),
                    finished_at,
                });
            });
            Ok(report)
        }
        Err(e) => {
            let _ = state.update(&peer.peer_name, |s| {
                s.consecutive_failures += 1;
                s.last_result = Some(super::SyncOutcome {
                    ok: false,
                    error: Some(e.to_string()),
                    report: None,
                    finished_at,
                });
            });
            Err(e)
        }
    }
}

fn run_sync(
    env: &SyncEnv,
    peer: &PeerConfig,
    state: &SyncStateStore,
    started: crate::clock::Datestamp,
) -> Result<(SyncReport, Option<crate::clock::Datestamp>), SyncError> {
    verify_peer_identity(env, peer)?;

    let sets = match &peer.sets {
        Some(sets) => sets.clone(),
        None => discover_peer_sets(env, peer)?,
    };

    let from = state.get(&peer.peer_name).last_checkpoint.map(|c| c.succ());

    let mut report = SyncReport {
        peer_name: peer.peer_name.clone(),
        received: 0,
        created: 0,
        updated: 0,
        deleted: 0,
        skipped_foreign: 0,
        unchanged: 0,
        started_at: started,
        duration_ms: 0,
    };
    let mut max_datestamp = None;

    for set in &sets {
        let mut query = HarvestQuery::new(&crate::wire::join_url(&peer.base_url, "oai"), "lago");
        query.from = from;
        query.set = Some(set.clone());
        let mut apply_error: Option<SyncError> = None;
        let harvest_report = harvest(env.transport, env.clock, &query, &mut |record| {
            if apply_error.is_some() {
                return;
            }
            match apply_record(env, peer, record) {
                Ok(outcome) => {
                    report.received += 1;
                    match outcome {
                        Applied::Created => report.created += 1,
                        Applied::Updated => report.updated += 1,
                        Applied::Tombstoned => report.deleted += 1,
                        Applied::SkippedForeign => report.skipped_foreign += 1,
                        Applied::Unchanged => report.unchanged += 1,
                    }
                }
                Err(e) => apply_error = Some(e),
            }
        })?;
        if let Some(e) = apply_error {
            return Err(e);
        }
        if let Some(m) = harvest_report.max_datestamp {
            max_datestamp = Some(match max_datestamp {
                Some(old) if old > m => old,
                _ => m,
            });
        }
    }

    Ok((report, max_datestamp))
}

/// The peer must identify as the configured name — a misrouted base URL
/// or a duplicate node name in the deployment is a config error worth
/// refusing to sync with.
fn verify_peer_identity(env: &SyncEnv, peer: &PeerConfig) -> Result<(), SyncError> {
    let url = format!("{}?verb=Identify", crate::wire::join_url(&peer.base_url, "oai"));
    let resp = with_transport_retries(env.clock, || {
        env.transport.execute(&OutboundRequest::get(url.clone()))
    })?;
    let parsed = parse_oai_response(&resp.body_string())
        .map_err(|e| SyncError::Protocol(e.to_string()))?;
    let info = match parsed.body {
        OaiBody::Identify(info) => info,
        other => {
            return Err(SyncError::Protocol(format!(
                "peer Identify returned {:?}",
                std::mem::discriminant(&other)
            )))
        }
    };
    if info.repository_name == env.node_name {
        return Err(SyncError::Protocol(format!(
            "peer at {} identifies with this node's own name {:?}",
            peer.base_url, env.node_name
        )));
    }
    if info.repository_name != peer.peer_name {
        return Err(SyncError::Protocol(format!(
            "peer at {} identifies as {:?}, config says {:?}",
            peer.base_url, info.repository_name, peer.peer_name
        )));
    }
    Ok(())
}

/// Peers are harvested through their `local:*` sets only, so items hop
/// exactly one edge and the complete graph converges in one round.
/// With `transitive` on, `mirror:*` sets propagate too.
fn discover_peer_sets(env: &SyncEnv, peer: &PeerConfig) -> Result<Vec<String>, SyncError> {
    let url = format!("{}?verb=ListSets", crate::wire::join_url(&peer.base_url, "oai"));
    let resp = with_transport_retries(env.clock, || {
        env.transport.execute(&OutboundRequest::get(url.clone()))
    })?;
    let parsed = parse_oai_response(&resp.body_string())
        .map_err(|e| SyncError::Protocol(e.to_string()))?;
    match parsed.body {
        OaiBody::ListSets(sets) => Ok(sets
            .into_iter()
            .map(|s| s.spec)
            .filter(|spec| {
                spec.starts_with("local:") || (env.transitive && spec.starts_with("mirror:"))
            })
            .collect()),
        OaiBody::Errors(errors)
            if errors
                .iter()
                .any(|e| e.code == crate::oaipmh::OaiErrorCode::NoSetHierarchy) =>
        {
            Ok(Vec::new())
        }
        other => Err(SyncError::Protocol(format!(
            "peer ListSets returned {:?}",
            std::mem::discriminant(&other)
        ))),
    }
}

enum Applied {
    Created,
    Updated,
    Tombstoned,
    SkippedForeign,
    Unchanged,
}

fn apply_record(env: &SyncEnv, peer: &PeerConfig, record: &OaiRecord) -> Result<Applied, SyncError> {
    let served_identifier = record.header.identifier.as_str();

    if record.header.deleted {
        let outcome = env
            .store
            .upsert_mirror_item(
                &peer.peer_name,
                OriginTag {
                    node_name: peer.peer_name.clone(),
                    original_identifier: Some(served_identifier.to_string()),
                },
                served_identifier,
                UpsertPayload::Deleted,
            )
            .map_err(|e| SyncError::Protocol(format!("local store rejected tombstone: {e}")))?;
        return Ok(match outcome {
            UpsertOutcome::Tombstoned => Applied::Tombstoned,
            _ => Applied::Unchanged,
        });
    }

    let payload = record
        .metadata_xml
        .as_deref()
        .ok_or_else(|| SyncError::Protocol(format!("record {served_identifier} has no metadata")))?;
    let doc = parse_lago_document(payload)
        .map_err(|e| SyncError::Protocol(format!("record {served_identifier}: {e}")))?;

    let (origin_node, origin_identifier) = match &doc.origin {
        Some(origin) => (origin.node.clone(), origin.identifier.clone()),
        None => (peer.peer_name.clone(), served_identifier.to_string()),
    };
    if origin_node == env.node_name {
        return Ok(Applied::SkippedForeign);
    }

    let content = if peer.mirror_content {
        Some(fetch_content(env, peer, record, &doc)?)
    } else {
        None
    };

    let outcome = env
        .store
        .upsert_mirror_item(
            &peer.peer_name,
            OriginTag {
                node_name: origin_node,
                original_identifier: Some(origin_identifier),
            },
            served_identifier,
            UpsertPayload::Active {
                metadata: doc.record,
                bitstream_refs: doc.bitstreams,
                content,
            },
        )
        .map_err(|e| SyncError::Protocol(format!("local store rejected record: {e}")))?;
    Ok(match outcome {
        UpsertOutcome::Created => Applied::Created,
        UpsertOutcome::Updated => Applied::Updated,
        UpsertOutcome::Tombstoned => Applied::Tombstoned,
        UpsertOutcome::Unchanged => Applied::Unchanged,
    })
}

fn fetch_content(
    env: &SyncEnv,
    peer: &PeerConfig,
    record: &OaiRecord,
    doc: &crate::metadata::LagoDocument,
) -> Result<Vec<NewFile>, SyncError> {
    let identifier: OaiIdentifier = record
        .header
        .identifier
        .parse()
        .map_err(|_| SyncError::Protocol(format!("bad identifier {}", record.header.identifier)))?;
    let mut files = Vec::with_capacity(doc.bitstreams.len());
    for bref in &doc.bitstreams {
        let url = crate::wire::join_url(
            &peer.base_url,
            &format!(
                "items/{}/bitstreams/{}",
                identifier.uuid,
                crate::wire::percent_encode(&bref.name)
            ),
        );
        let resp = with_transport_retries(env.clock, || {
            env.transport.execute(&OutboundRequest::get(url.clone()))
        })?;
        if resp.status != 200 {
            return Err(SyncError::Protocol(format!(
                "peer returned HTTP {} for bitstream {:?}",
                resp.status, bref.name
            )));
        }
        if md5_hex(&resp.body) != bref.md5 {
            return Err(SyncError::Protocol(format!(
                "bitstream {:?} failed its MD5 check",
                bref.name
            )));
        }
        files.push(NewFile {
            name: bref.name.clone(),
            media_type: bref.media_type.clone(),
            bytes: resp.body,
        });
    }
    Ok(files)
}
