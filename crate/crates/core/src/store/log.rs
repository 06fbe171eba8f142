//! Append-only catalog record log.
//!
//! One UTF-8 JSON object per line in the order the events happened;
//! replay rebuilds the full catalog state. The exact line schema is
//! documented in `docs/FORMATS.md`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::jsonlog::JsonLog;
pub use crate::jsonlog::LogError;

use crate::clock::Datestamp;
use crate::metadata::MetadataRecord;

use super::{Bitstream, Item, ItemStatus, OriginTag};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "kebab-case")]
pub(super) enum LogEvent {
    Community {
        id: String,
        name: String,
    },
    Collection {
        id: String,
        name: String,
        community: String,
        kind: String,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        mirror_of: Option<String>,
    },
    Create {
        item: ItemRecord,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        alias: Option<String>,
    },
    Update {
        uuid: Uuid,
        datestamp: Datestamp,
        metadata: MetadataRecord,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        bitstreams: Option<Vec<Bitstream>>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        alias: Option<String>,
    },
    Delete {
        uuid: Uuid,
        datestamp: Datestamp,
    },
}

/// Item snapshot as written to the log on create.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(super) struct ItemRecord {
    pub uuid: Uuid,
    pub collection: String,
    pub datestamp: Datestamp,
    pub status: ItemStatus,
    pub origin: OriginTag,
    pub metadata: MetadataRecord,
    pub bitstreams: Vec<Bitstream>,
}

impl From<&Item> for ItemRecord {
    fn from(item: &Item) -> ItemRecord {
        ItemRecord {
            uuid: item.uuid,
            collection: item.collection.clone(),
            datestamp: item.datestamp,
            status: item.status,
            origin: item.origin.clone(),
            metadata: item.metadata.clone(),
            bitstreams: item.bitstreams.clone(),
        }
    }
}

impl From<ItemRecord> for Item {
    fn from(rec: ItemRecord) -> Item {
        Item {
            uuid: rec.uuid,
            collection: rec.collection,
            datestamp: rec.datestamp,
            status: rec.status,
            origin: rec.origin,
            metadata: rec.metadata,
            bitstreams: rec.bitstreams,
        }
    }
}

pub(super) struct CatalogLog {
    inner: JsonLog,
}

impl CatalogLog {
    pub fn open_append(path: &Path) -> Result<CatalogLog, LogError> {
        Ok(CatalogLog {
            inner: JsonLog::open_append(path)?,
        })
    }

    pub fn append(&mut self, event: &LogEvent) -> Result<(), LogError> {
        self.inner.append(event)
    }

    pub fn replay(path: &Path) -> Result<Vec<LogEvent>, LogError> {
        JsonLog::replay(path)
    }
}
