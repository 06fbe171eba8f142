//! The peer-sync scheduler: one loop per peer, immediate first sync,
//! then every `intervalSeconds` with ±10% jitter. Consecutive failures
//! back off exponentially (interval ×2 per failure, capped at 24 h) and
//! reset on success. A shutdown signal finishes in-flight syncs, then
//! every loop exits.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::Serialize;

use crate::clock::{Clock, Shutdown, WaitOutcome};
use crate::jsonlog::JsonLog;
use crate::store::Store;
use crate::wire::Transport;

use super::{sync_once, PeerConfig, SyncEnv, SyncStateStore};

const BACKOFF_CAP: Duration = Duration::from_secs(24 * 3600);

/// Shared state the scheduler threads work over.
pub struct SyncContext {
    pub store: Arc<Store>,
    pub transport: Arc<dyn Transport>,
    pub clock: Arc<dyn Clock>,
    pub node_name: String,
    pub transitive: bool,
    pub peers: Vec<PeerConfig>,
    pub state: Arc<SyncStateStore>,
    /// Operational log (line-delimited JSON events); `None` disables it.
    ops_log: Option<Mutex<JsonLog>>,
}

#[derive(Serialize)]
struct OpsEvent<'a> {
    event: &'a str,
    peer: &'a str,
    at: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<String>,
}

impl SyncContext {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: Arc<Store>,
        transport: Arc<dyn Transport>,
        clock: Arc<dyn Clock>,
        node_name: &str,
        transitive: bool,
        peers: Vec<PeerConfig>,
        state: Arc<SyncStateStore>,
        ops_log_path: Option<PathBuf>,
    ) -> std::io::Result<SyncContext> {
        let ops_log = match ops_log_path {
            Some(path) => Some(Mutex::new(
                JsonLog::open_append(&path).map_err(|e| std::io::Error::other(e.to_string()))?,
            )),
            None => None,
        };
        Ok(SyncContext {
            store,
            transport,
            clock,
            node_name: node_name.to_string(),
            transitive,
            peers,
            state,
            ops_log,
        })
    }

    fn log(&self, event: &str, peer: &str, detail: Option<String>) {
        if let Some(log) = &self.ops_log {
            let _ = log.lock().unwrap().append(&OpsEvent {
                event,
                peer,
                at: self.clock.now().to_string(),
                detail,
            });
        }
    }

    fn env(&self) -> SyncEnv<'_> {
        SyncEnv {
            store: &self.store,
            transport: self.transport.as_ref(),
            clock: self.clock.as_ref(),
            node_name: &self.node_name,
            transitive: self.transitive,
        }
    }

    /// Sync one peer now, with logging and state recording.
    pub fn sync_peer(&self, peer: &PeerConfig) -> Result<super::SyncReport, super::SyncError> {
        self.log("sync-start", &peer.peer_name, None);
        match sync_once(&self.env(), peer, &self.state) {
            Ok(report) => {
                self.log(
                    "sync-finish",
                    &peer.peer_name,
                    Some(format!(
                        "received={} created={} updated={} deleted={} skippedForeign={} unchanged={}",
                        report.received,
                        report.created,
                        report.updated,
                        report.deleted,
                        report.skipped_foreign,
                        report.unchanged
                    )),
                );
                Ok(report)
            }
            Err(e) => {
                self.log("sync-error", &peer.peer_name, Some(e.to_string()));
                Err(e)
            }
        }
    }
}

/// Delay before the next sync of a peer: jittered interval normally,
/// deterministic exponential backoff while the peer is failing.
fn next_delay(interval: Duration, consecutive_failures: u32) -> Duration {
    if consecutive_failures > 0 {
        let factor = 1u64 << consecutive_failures.min(20);
        (interval * factor as u32).min(BACKOFF_CAP)
    } else {
        let jitter = rand::rng().random_range(0.9..=1.1);
        interval.mul_f64(jitter)
    }
}

/// Run sync loops for every configured peer until `shutdown` is
/// signalled. Blocks the calling thread; in-flight syncs finish before
/// it returns.
pub fn run_scheduler(ctx: &Arc<SyncContext>, shutdown: &Shutdown) {
    std::thread::scope(|scope| {
        for peer in &ctx.peers {
            let ctx = Arc::clone(ctx);
            let shutdown = shutdown.clone();
            scope.spawn(move || loop {
                if shutdown.is_signalled() {
                    break;
                }
                let _ = ctx.sync_peer(peer);
                let failures = ctx.state.get(&peer.peer_name).consecutive_failures;
                let delay = next_delay(Duration::from_secs(peer.interval_seconds), failures);
                if ctx.clock.sleep_cancellable(delay, &shutdown) == WaitOutcome::Cancelled {
                    break;
                }
            });
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_is_exponential_and_capped() {
        let base = Duration::from_secs(900);
        assert_eq!(next_delay(base, 1), base * 2);
        assert_eq!(next_delay(base, 3), base * 8);
        assert_eq!(next_delay(base, 30), BACKOFF_CAP);
    }

    #[test]
    fn healthy_delay_stays_within_jitter_band() {
        let base = Duration::from_secs(100);
        for _ in 0..200 {
            let d = next_delay(base, 0);
            assert!(d >= Duration::from_secs(90), "{d:?}");
            assert!(d <= Duration::from_secs(110), "{d:?}");
        }
    }
}
