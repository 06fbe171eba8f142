//! Federation: node configuration, the peer-sync engine, and the
//! scheduler that keeps a network of nodes converging on a shared
//! catalog through periodic incremental harvests.

mod scheduler;
mod sync;

pub use scheduler::{run_scheduler, SyncContext};
pub use sync::{sync_once, SyncEnv, SyncError};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::clock::Datestamp;

fn default_page_size() -> usize {
    100
}

fn default_interval() -> u64 {
    900
}

fn default_max_upload() -> u64 {
    512 * 1024 * 1024
}

/// One peer this node harvests from.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct PeerConfig {
    pub peer_name: String,
    pub base_url: String,
    /// Sets to harvest; default is every `local:*` set the peer exposes
    /// (plus its `mirror:*` sets when `transitive` is on).
    #[serde(default)]
    pub sets: Option<Vec<String>>,
    #[serde(default = "default_interval")]
    pub interval_seconds: u64,
    /// Fetch bitstream content as well as metadata. Off by default:
    /// metadata-only mirroring.
    #[serde(default)]
    pub mirror_content: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct CollectionBootstrap {
    pub id: String,
    pub name: String,
}

fn default_collections() -> Vec<CollectionBootstrap> {
    vec![CollectionBootstrap {
        id: "data".to_string(),
        name: "Data".to_string(),
    }]
}

/// Node configuration, loaded from a TOML file (`--config` or the
/// `LAGO_NODE_CONFIG` environment variable). Schema documented in
/// `docs/FORMATS.md`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct NodeConfig {
    pub node_name: String,
    pub http_bind: String,
    pub pid_prefix: String,
    pub deposit_token: String,
    #[serde(default = "default_page_size")]
    pub page_size: usize,
    pub data_dir: PathBuf,
    /// Base URL peers and depositors reach this node at; defaults to
    /// `http://<httpBind>`.
    #[serde(default)]
    pub public_base_url: Option<String>,
    #[serde(default)]
    pub admin_email: Option<String>,
    #[serde(default = "default_max_upload")]
    pub max_upload_bytes: u64,
    /// Path to a profile TOML overriding the built-in default.
    #[serde(default)]
    pub profile: Option<PathBuf>,
    /// Harvest peers' mirror sets too (sparse topologies).
    #[serde(default)]
    pub transitive: bool,
    #[serde(default = "default_collections")]
    pub collections: Vec<CollectionBootstrap>,
    #[serde(default)]
    pub peers: Vec<PeerConfig>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {detail}")]
    Unreadable { path: PathBuf, detail: String },
    #[error("config is not valid TOML: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl NodeConfig {
    pub fn load(path: &Path) -> Result<NodeConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        let config: NodeConfig = toml::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.node_name.is_empty()
            || !self
                .node_name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        {
            return Err(ConfigError::Invalid(format!(
                "nodeName {:?} must be a plain token",
                self.node_name
            )));
        }
        if !crate::pid::is_valid_prefix(&self.pid_prefix) {
            return Err(ConfigError::Invalid(format!(
                "pidPrefix {:?} must be dotted-numeric",
                self.pid_prefix
            )));
        }
        if self.page_size == 0 {
            return Err(ConfigError::Invalid("pageSize must be >= 1".to_string()));
        }
        let mut names = std::collections::BTreeSet::new();
        for peer in &self.peers {
            if peer.peer_name == self.node_name {
                return Err(ConfigError::Invalid(format!(
                    "peer {:?} has this node's own name",
                    peer.peer_name
                )));
            }
            if !names.insert(&peer.peer_name) {
                return Err(ConfigError::Invalid(format!(
                    "peer {:?} is listed twice",
                    peer.peer_name
                )));
            }
            if peer.interval_seconds == 0 {
                return Err(ConfigError::Invalid(format!(
                    "peer {:?} intervalSeconds must be >= 1",
                    peer.peer_name
                )));
            }
        }
        Ok(())
    }

    /// URL this node is reachable at.
    pub fn base_url(&self) -> String {
        self.public_base_url
            .clone()
            .unwrap_or_else(|| format!("http://{}", self.http_bind))
            .trim_end_matches('/')
            .to_string()
    }
}

/// Counters of one sync run.
/// `received == created + updated + deleted + skipped_foreign + unchanged`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SyncReport {
    pub peer_name: String,
    pub received: usize,
    pub created: usize,
    pub updated: usize,
    pub deleted: usize,
    pub skipped_foreign: usize,
    pub unchanged: usize,
    pub started_at: Datestamp,
    pub duration_ms: u64,
}

impl SyncReport {
    pub fn conserved(&self) -> bool {
        self.received
            == self.created + self.updated + self.deleted + self.skipped_foreign + self.unchanged
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SyncOutcome {
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub report: Option<SyncReport>,
    pub finished_at: Datestamp,
}

/// Persistent per-peer sync progress. The checkpoint only ever
/// advances; it survives restarts via `sync_state.json` in the data dir.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PeerSyncState {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub last_checkpoint: Option<Datestamp>,
    pub consecutive_failures: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub last_result: Option<SyncOutcome>,
}

pub struct SyncStateStore {
    path: Option<PathBuf>,
    map: Mutex<BTreeMap<String, PeerSyncState>>,
}

impl SyncStateStore {
    pub fn open(data_dir: &Path) -> std::io::Result<SyncStateStore> {
        let path = data_dir.join("sync_state.json");
        let map = match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).unwrap_or_default(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(e),
        };
        Ok(SyncStateStore {
            path: Some(path),
            map: Mutex::new(map),
        })
    }

    pub fn in_memory() -> SyncStateStore {
        SyncStateStore {
            path: None,
            map: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn get(&self, peer: &str) -> PeerSyncState {
        self.map.lock().unwrap().get(peer).cloned().unwrap_or_default()
    }

    pub fn peers(&self) -> Vec<(String, PeerSyncState)> {
        self.map
            .lock()
            .unwrap()
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    /// Mutate one peer's state and persist the whole map atomically
    /// (write-then-rename).
    pub fn update(
        &self,
        peer: &str,
        mutate: impl FnOnce(&mut PeerSyncState),
    ) -> std::io::Result<()> {
        let mut map = self.map.lock().unwrap();
        let entry = map.entry(peer.to_string()).or_default();
        let checkpoint_before = entry.last_checkpoint;
        mutate(entry);
        // the checkpoint may never move backwards
        if let (Some(before), Some(after)) = (checkpoint_before, entry.last_checkpoint) {
            if after < before {
                entry.last_checkpoint = Some(before);
            }
        } else if checkpoint_before.is_some() && entry.last_checkpoint.is_none() {
            entry.last_checkpoint = checkpoint_before;
        }
        if let Some(path) = &self.path {
            let tmp = path.with_extension("tmp");
            std::fs::write(&tmp, serde_json::to_string_pretty(&*map).unwrap())?;
            std::fs::rename(&tmp, path)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
nodeName = "nodeA"
httpBind = "127.0.0.1:8080"
pidPrefix = "20.500.0001"
depositToken = "sekrit"
dataDir = "/tmp/nodeA"
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let config: NodeConfig = toml::from_str(MINIMAL).unwrap();
        config.validate().unwrap();
        assert_eq!(config.page_size, 100);
        assert_eq!(config.base_url(), "http://127.0.0.1:8080");
        assert_eq!(config.collections.len(), 1);
        assert_eq!(config.collections[0].id, "data");
        assert!(!config.transitive);
        assert!(config.peers.is_empty());
    }

    #[test]
    fn peer_validation_rules() {
        let mut text = MINIMAL.to_string();
        text.push_str(
            "[[peers]]\npeerName = \"nodeA\"\nbaseUrl = \"http://b\"\n",
        );
        let config: NodeConfig = toml::from_str(&text).unwrap();
        assert!(config.validate().is_err(), "own name as peer");

        let mut text = MINIMAL.to_string();
        text.push_str(
            "[[peers]]\npeerName = \"b\"\nbaseUrl = \"http://b\"\n[[peers]]\npeerName = \"b\"\nbaseUrl = \"http://b2\"\n",
        );
        let config: NodeConfig = toml::from_str(&text).unwrap();
        assert!(config.validate().is_err(), "duplicate peer");
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let mut text = MINIMAL.to_string();
        text.push_str("surprise = true\n");
        assert!(toml::from_str::<NodeConfig>(&text).is_err());
    }

    #[test]
    fn sync_state_persists_and_checkpoint_never_regresses() {
        let dir = tempfile::tempdir().unwrap();
        let later: Datestamp = "2020-01-02T00:00:00Z".parse().unwrap();
        let earlier: Datestamp = "2020-01-01T00:00:00Z".parse().unwrap();
        {
            let state = SyncStateStore::open(dir.path()).unwrap();
            state
                .update("nodeB", |s| s.last_checkpoint = Some(later))
                .unwrap();
            state
                .update("nodeB", |s| s.last_checkpoint = Some(earlier))
                .unwrap();
            assert_eq!(state.get("nodeB").last_checkpoint, Some(later));
            state
                .update("nodeB", |s| s.last_checkpoint = None)
                .unwrap();
            assert_eq!(state.get("nodeB").last_checkpoint, Some(later));
        }
        let state = SyncStateStore::open(dir.path()).unwrap();
        assert_eq!(state.get("nodeB").last_checkpoint, Some(later));
    }
}
