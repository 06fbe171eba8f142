//! Local catalog and content store.
//!
//! Communities hold collections, collections hold items, items carry
//! metadata and content-addressed bitstreams. Deleted items stay forever
//! as tombstones so harvesters can propagate deletions. State is an
//! in-memory image of an append-only record log (`catalog.log`) plus a
//! blob directory; see `docs/FORMATS.md` for both layouts.
//!
//! Concurrency contract: one writer at a time (mutations serialize on an
//! internal lock), any number of readers, and readers always see a state
//! no older than the last completed write.

mod blobs;
mod log;

pub use self::log::LogError;
pub use blobs::{md5_hex, BlobDir};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::clock::{Clock, Datestamp};
use crate::metadata::{validate_record, BitstreamRef, LagoProfile, MetadataRecord, ValidationReport};

use self::log::{CatalogLog, ItemRecord, LogEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemStatus {
    Active,
    Deleted,
}

/// Where an item came from. Locally created items carry this node's name
/// and no original identifier; mirrored items carry the origin node and
/// the OAI identifier the item had there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginTag {
    #[serde(rename = "node")]
    pub node_name: String,
    #[serde(rename = "originalIdentifier", skip_serializing_if = "Option::is_none", default)]
    pub original_identifier: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bitstream {
    pub name: String,
    #[serde(rename = "size")]
    pub size_bytes: u64,
    pub md5: String,
    #[serde(rename = "mediaType")]
    pub media_type: String,
    #[serde(rename = "storageKey")]
    pub storage_key: String,
}

impl Bitstream {
    pub fn to_ref(&self) -> BitstreamRef {
        BitstreamRef {
            name: self.name.clone(),
            size_bytes: self.size_bytes,
            md5: self.md5.clone(),
            media_type: self.media_type.clone(),
        }
    }
}

/// Catalog unit. A value snapshot; mutate through [`Store`] operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Item {
    pub uuid: Uuid,
    pub collection: String,
    pub metadata: MetadataRecord,
    pub bitstreams: Vec<Bitstream>,
    pub datestamp: Datestamp,
    pub status: ItemStatus,
    pub origin: OriginTag,
}

impl Item {
    pub fn is_deleted(&self) -> bool {
        self.status == ItemStatus::Deleted
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollectionKind {
    Local,
    Mirror,
}

impl fmt::Display for CollectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CollectionKind::Local => "local",
            CollectionKind::Mirror => "mirror",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Collection {
    pub id: String,
    pub name: String,
    pub community: String,
    pub kind: CollectionKind,
    /// Peer node this collection mirrors; `Some` iff kind is Mirror.
    pub mirror_of: Option<String>,
}

impl Collection {
    pub fn set_spec(&self) -> SetSpec {
        SetSpec {
            kind: self.kind,
            collection: self.id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Community {
    pub id: String,
    pub name: String,
}

/// Selective-harvesting partition name: `<kind>:<collectionId>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SetSpec {
    pub kind: CollectionKind,
    pub collection: String,
}

impl fmt::Display for SetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.collection)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid setSpec {0:?}, expected local:<collection> or mirror:<collection>")]
pub struct SetSpecParseError(pub String);

impl FromStr for SetSpec {
    type Err = SetSpecParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, collection) = s.split_once(':').ok_or_else(|| SetSpecParseError(s.into()))?;
        let kind = match kind {
            "local" => CollectionKind::Local,
            "mirror" => CollectionKind::Mirror,
            _ => return Err(SetSpecParseError(s.into())),
        };
        if collection.is_empty() || collection.contains(':') {
            return Err(SetSpecParseError(s.into()));
        }
        Ok(SetSpec {
            kind,
            collection: collection.to_string(),
        })
    }
}

/// A file handed to `create_item` for storage.
#[derive(Debug, Clone)]
pub struct NewFile {
    pub name: String,
    pub media_type: String,
    pub bytes: Vec<u8>,
}

impl NewFile {
    pub fn new(name: &str, bytes: Vec<u8>) -> NewFile {
        NewFile {
            name: name.to_string(),
            media_type: media_type_for(name).to_string(),
            bytes,
        }
    }
}

/// Media type from the file extension; unknown extensions are served as
/// opaque bytes.
pub fn media_type_for(name: &str) -> &'static str {
    match name.rsplit_once('.').map(|(_, ext)| ext.to_ascii_lowercase()) {
        Some(ext) => match ext.as_str() {
            "txt" | "log" => "text/plain",
            "csv" => "text/csv",
            "json" => "application/json",
            "xml" => "text/xml",
            "gz" => "application/gzip",
            "zip" => "application/zip",
            "h5" | "hdf5" => "application/x-hdf5",
            "root" => "application/x-root",
            "png" => "image/png",
            "pdf" => "application/pdf",
            _ => "application/octet-stream",
        },
        None => "application/octet-stream",
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unknown collection {0:?}")]
    UnknownCollection(String),
    #[error("unknown community {0:?}")]
    UnknownCommunity(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("collection {0:?} is a mirror; local items must go to a local collection")]
    MirrorCollection(String),
    #[error("unknown item {0}")]
    UnknownItem(Uuid),
    #[error("item {0} is deleted")]
    ItemDeleted(Uuid),
    #[error("unknown bitstream {0:?}")]
    UnknownBitstream(String),
    #[error("metadata validation failed: {}", .0.summary())]
    ValidationRejected(ValidationReport),
    #[error("invalid datestamp range or page limit")]
    InvalidRange,
    #[error("invalid file name {0:?}")]
    InvalidFileName(String),
    #[error("stored bytes for {storage_key} no longer match md5 (expected {expected}, got {actual})")]
    Integrity {
        storage_key: String,
        expected: String,
        actual: String,
    },
    #[error("storage i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Log(#[from] LogError),
}

#[derive(Default)]
struct CatalogState {
    communities: BTreeMap<String, Community>,
    collections: BTreeMap<String, Collection>,
    items: HashMap<Uuid, Item>,
    order: BTreeSet<(Datestamp, Uuid)>,
    by_origin: HashMap<String, Uuid>,
    by_alias: HashMap<String, Uuid>,
}

/// What `upsert_mirror_item` found to do.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UpsertOutcome {
    Created,
    Updated,
    Tombstoned,
    Unchanged,
}

/// Payload of one harvested record applied to the local mirror.
pub enum UpsertPayload {
    Active {
        metadata: MetadataRecord,
        bitstream_refs: Vec<BitstreamRef>,
        /// Fetched content keyed by bitstream name, when content
        /// mirroring is on.
        content: Option<Vec<NewFile>>,
    },
    Deleted,
}

pub struct Store {
    node_name: String,
    clock: Arc<dyn Clock>,
    state: RwLock<CatalogState>,
    log: Mutex<CatalogLog>,
    blobs: BlobDir,
    fail_next_commit: AtomicBool,
}

impl Store {
    pub fn open(
        data_dir: &Path,
        node_name: &str,
        clock: Arc<dyn Clock>,
    ) -> Result<Store, StoreError> {
        std::fs::create_dir_all(data_dir)?;
        let blobs = BlobDir::open(&data_dir.join("blobs"))?;
        let log_path = data_dir.join("catalog.log");
        let events = CatalogLog::replay(&log_path)?;
        let mut state = CatalogState::default();
        for event in events {
            apply_event(&mut state, event);
        }
        Ok(Store {
            node_name: node_name.to_string(),
            clock,
            state: RwLock::new(state),
            log: Mutex::new(CatalogLog::open_append(&log_path)?),
            blobs,
            fail_next_commit: AtomicBool::new(false),
        })
    }

    pub fn node_name(&self) -> &str {
        &self.node_name
    }

    /// Test hook: make the next log commit fail as if the disk did,
    /// after blobs were written. Used by deposit-atomicity tests.
    pub fn fail_next_commit(&self) {
        self.fail_next_commit.store(true, Ordering::SeqCst);
    }

    fn commit(&self, event: &LogEvent) -> Result<(), StoreError> {
        if self.fail_next_commit.swap(false, Ordering::SeqCst) {
            return Err(StoreError::Io(std::io::Error::other(
                "injected commit fault",
            )));
        }
        self.log.lock().unwrap().append(event)?;
        Ok(())
    }

    pub fn create_community(&self, id: &str, name: &str) -> Result<Community, StoreError> {
        let mut state = self.state.write().unwrap();
        if state.communities.contains_key(id) {
            return Err(StoreError::DuplicateId(id.to_string()));
        }
        let event = LogEvent::Community {
            id: id.to_string(),
            name: name.to_string(),
        };
        self.commit(&event)?;
        apply_event(&mut state, event);
        Ok(state.communities[id].clone())
    }

    pub fn create_collection(
        &self,
        id: &str,
        name: &str,
        community: &str,
        kind: CollectionKind,
        mirror_of: Option<&str>,
    ) -> Result<Collection, StoreError> {
        let mut state = self.state.write().unwrap();
        if state.collections.contains_key(id) {
            return Err(StoreError::DuplicateId(id.to_string()));
        }
        if !state.communities.contains_key(community) {
            return Err(StoreError::UnknownCommunity(community.to_string()));
        }
        debug_assert_eq!(kind == CollectionKind::Mirror, mirror_of.is_some());
        let event = LogEvent::Collection {
            id: id.to_string(),
            name: name.to_string(),
            community: community.to_string(),
            kind: kind.to_string(),
            mirror_of: mirror_of.map(str::to_string),
        };
        self.commit(&event)?;
        apply_event(&mut state, event);
        Ok(state.collections[id].clone())
    }

    pub fn communities(&self) -> Vec<Community> {
        self.state
            .read()
            .unwrap()
            .communities
            .values()
            .cloned()
            .collect()
    }

    pub fn collections(&self) -> Vec<Collection> {
        self.state
            .read()
            .unwrap()
            .collections
            .values()
            .cloned()
            .collect()
    }

    pub fn collection(&self, id: &str) -> Option<Collection> {
        self.state.read().unwrap().collections.get(id).cloned()
    }

    /// Create a locally authored item. Metadata must validate with zero
    /// errors against `profile`; files are hashed and stored
    /// content-addressed.
    pub fn create_item(
        &self,
        collection: &str,
        metadata: MetadataRecord,
        files: Vec<NewFile>,
        profile: &LagoProfile,
    ) -> Result<Item, StoreError> {
        self.create_item_with_uuid(Uuid::new_v4(), collection, metadata, files, profile)
    }

    /// Like `create_item` with a caller-chosen UUID, so a PID minted
    /// ahead of the catalog write can reference the item location.
    pub fn create_item_with_uuid(
        &self,
        uuid: Uuid,
        collection: &str,
        metadata: MetadataRecord,
        files: Vec<NewFile>,
        profile: &LagoProfile,
    ) -> Result<Item, StoreError> {
        let report = validate_record(&metadata, profile);
        if !report.ok {
            return Err(StoreError::ValidationRejected(report));
        }
        validate_file_names(&files)?;

        let mut state = self.state.write().unwrap();
        match state.collections.get(collection) {
            None => return Err(StoreError::UnknownCollection(collection.to_string())),
            Some(c) if c.kind == CollectionKind::Mirror => {
                return Err(StoreError::MirrorCollection(collection.to_string()))
            }
            Some(_) => {}
        }
        if state.items.contains_key(&uuid) {
            return Err(StoreError::DuplicateId(uuid.to_string()));
        }

        let (bitstreams, new_blobs) = self.write_blobs(&files)?;
        let item = Item {
            uuid,
            collection: collection.to_string(),
            metadata: metadata.canonicalize(),
            bitstreams,
            datestamp: self.clock.now(),
            status: ItemStatus::Active,
            origin: OriginTag {
                node_name: self.node_name.clone(),
                original_identifier: None,
            },
        };
        let event = LogEvent::Create {
            item: ItemRecord::from(&item),
            alias: None,
        };
        if let Err(e) = self.commit(&event) {
            for key in new_blobs {
                let _ = self.blobs.remove(&key);
            }
            return Err(e);
        }
        apply_event(&mut state, event);
        Ok(item)
    }

    fn write_blobs(&self, files: &[NewFile]) -> Result<(Vec<Bitstream>, Vec<String>), StoreError> {
        let mut bitstreams = Vec::with_capacity(files.len());
        let mut new_blobs: Vec<String> = Vec::new();
        for file in files {
            let (key, created) = match self.blobs.write(&file.bytes) {
                Ok(pair) => pair,
                Err(e) => {
                    for key in &new_blobs {
                        let _ = self.blobs.remove(key);
                    }
                    return Err(e.into());
                }
            };
            if created {
                new_blobs.push(key.clone());
            }
            bitstreams.push(Bitstream {
                name: file.name.clone(),
                size_bytes: file.bytes.len() as u64,
                md5: key.clone(),
                media_type: file.media_type.clone(),
                storage_key: key,
            });
        }
        Ok((bitstreams, new_blobs))
    }

    /// Replace an item's metadata, bumping its datestamp.
    pub fn update_item(
        &self,
        uuid: Uuid,
        metadata: MetadataRecord,
        profile: &LagoProfile,
    ) -> Result<Item, StoreError> {
        let report = validate_record(&metadata, profile);
        if !report.ok {
            return Err(StoreError::ValidationRejected(report));
        }
        let mut state = self.state.write().unwrap();
        let item = state.items.get(&uuid).ok_or(StoreError::UnknownItem(uuid))?;
        if item.is_deleted() {
            return Err(StoreError::ItemDeleted(uuid));
        }
        let datestamp = self.next_datestamp(item.datestamp);
        let event = LogEvent::Update {
            uuid,
            datestamp,
            metadata: metadata.canonicalize(),
            bitstreams: None,
            alias: None,
        };
        self.commit(&event)?;
        apply_event(&mut state, event);
        Ok(state.items[&uuid].clone())
    }

    /// Mark an item deleted, keeping the tombstone forever. Idempotent:
    /// deleting a tombstone returns it unchanged.
    pub fn soft_delete_item(&self, uuid: Uuid) -> Result<Item, StoreError> {
        let mut state = self.state.write().unwrap();
        let item = state.items.get(&uuid).ok_or(StoreError::UnknownItem(uuid))?;
        if item.is_deleted() {
            return Ok(item.clone());
        }
        let datestamp = self.next_datestamp(item.datestamp);
        let event = LogEvent::Delete { uuid, datestamp };
        self.commit(&event)?;
        apply_event(&mut state, event);
        Ok(state.items[&uuid].clone())
    }

    fn next_datestamp(&self, previous: Datestamp) -> Datestamp {
        self.clock.now().max(previous)
    }

    pub fn get_item(&self, uuid: Uuid) -> Result<Item, StoreError> {
        self.state
            .read()
            .unwrap()
            .items
            .get(&uuid)
            .cloned()
            .ok_or(StoreError::UnknownItem(uuid))
    }

    pub fn find_by_origin_identifier(&self, identifier: &str) -> Option<Item> {
        let state = self.state.read().unwrap();
        state
            .by_origin
            .get(identifier)
            .or_else(|| state.by_alias.get(identifier))
            .and_then(|uuid| state.items.get(uuid))
            .cloned()
    }

    /// Items (tombstones included) with `from <= datestamp <= until`,
    /// in (datestamp, uuid) ascending order, windowed by offset/limit.
    /// `total` is the full match count independent of the window.
    pub fn list_items(
        &self,
        from: Option<Datestamp>,
        until: Option<Datestamp>,
        set: Option<&SetSpec>,
        offset: usize,
        limit: usize,
    ) -> Result<ItemPage, StoreError> {
        if limit == 0 {
            return Err(StoreError::InvalidRange);
        }
        if let (Some(f), Some(u)) = (from, until) {
            if f > u {
                return Err(StoreError::InvalidRange);
            }
        }
        let state = self.state.read().unwrap();
        let collection_filter: Option<&Collection> = match set {
            None => None,
            Some(spec) => match state.collections.get(&spec.collection) {
                Some(c) if c.kind == spec.kind => Some(c),
                // unknown or kind-mismatched set matches nothing
                _ => {
                    return Ok(ItemPage {
                        items: Vec::new(),
                        total: 0,
                    })
                }
            },
        };

        let mut matched = Vec::new();
        for (datestamp, uuid) in &state.order {
            if let Some(f) = from {
                if *datestamp < f {
                    continue;
                }
            }
            if let Some(u) = until {
                if *datestamp > u {
                    break;
                }
            }
            let item = &state.items[uuid];
            if let Some(c) = collection_filter {
                if item.collection != c.id {
                    continue;
                }
            }
            matched.push(item);
        }
        let total = matched.len();
        let items = matched
            .into_iter()
            .skip(offset)
            .take(limit)
            .cloned()
            .collect();
        Ok(ItemPage { items, total })
    }

    /// Read the full content of a stored bitstream, verifying its MD5.
    pub fn open_bitstream(&self, storage_key: &str) -> Result<Vec<u8>, StoreError> {
        let bytes = self
            .blobs
            .read(storage_key)?
            .ok_or_else(|| StoreError::UnknownBitstream(storage_key.to_string()))?;
        let actual = md5_hex(&bytes);
        if actual != storage_key {
            return Err(StoreError::Integrity {
                storage_key: storage_key.to_string(),
                expected: storage_key.to_string(),
                actual,
            });
        }
        Ok(bytes)
    }

    /// Apply one harvested record to the local mirror of `peer`.
    /// Keyed by the record's origin identifier; last harvest wins.
    pub fn upsert_mirror_item(
        &self,
        peer: &str,
        origin: OriginTag,
        served_identifier: &str,
        payload: UpsertPayload,
    ) -> Result<UpsertOutcome, StoreError> {
        let origin_id = origin
            .original_identifier
            .clone()
            .unwrap_or_else(|| served_identifier.to_string());

        let mut state = self.state.write().unwrap();
        let existing = state
            .by_origin
            .get(&origin_id)
            .or_else(|| state.by_alias.get(served_identifier))
            .and_then(|uuid| state.items.get(uuid))
            .cloned();

        match payload {
            UpsertPayload::Deleted => match existing {
                None => Ok(UpsertOutcome::Unchanged),
                Some(item) if item.is_deleted() => Ok(UpsertOutcome::Unchanged),
                Some(item) => {
                    let datestamp = self.next_datestamp(item.datestamp);
                    let event = LogEvent::Delete {
                        uuid: item.uuid,
                        datestamp,
                    };
                    self.commit(&event)?;
                    apply_event(&mut state, event);
                    Ok(UpsertOutcome::Tombstoned)
                }
            },
            UpsertPayload::Active {
                metadata,
                bitstream_refs,
                content,
            } => {
                let metadata = metadata.canonicalize();
                let bitstreams = self.mirror_bitstreams(&bitstream_refs, content)?;
                match existing {
                    Some(item)
                        if !item.is_deleted()
                            && item.metadata == metadata
                            && item.bitstreams == bitstreams =>
                    {
                        state.by_alias.insert(served_identifier.to_string(), item.uuid);
                        Ok(UpsertOutcome::Unchanged)
                    }
                    Some(item) => {
                        let datestamp = self.next_datestamp(item.datestamp);
                        let event = LogEvent::Update {
                            uuid: item.uuid,
                            datestamp,
                            metadata,
                            bitstreams: Some(bitstreams),
                            alias: Some(served_identifier.to_string()),
                        };
                        self.commit(&event)?;
                        apply_event(&mut state, event);
                        Ok(UpsertOutcome::Updated)
                    }
                    None => {
                        let collection_id = self.ensure_mirror_collection(&mut state, peer)?;
                        let item = Item {
                            uuid: Uuid::new_v4(),
                            collection: collection_id,
                            metadata,
                            bitstreams,
                            datestamp: self.clock.now(),
                            status: ItemStatus::Active,
                            origin: OriginTag {
                                node_name: origin.node_name,
                                original_identifier: Some(origin_id),
                            },
                        };
                        let event = LogEvent::Create {
                            item: ItemRecord::from(&item),
                            alias: Some(served_identifier.to_string()),
                        };
                        self.commit(&event)?;
                        apply_event(&mut state, event);
                        Ok(UpsertOutcome::Created)
                    }
                }
            }
        }
    }

    fn mirror_bitstreams(
        &self,
        refs: &[BitstreamRef],
        content: Option<Vec<NewFile>>,
    ) -> Result<Vec<Bitstream>, StoreError> {
        if let Some(files) = content {
            let mut by_name: HashMap<&str, &NewFile> =
                files.iter().map(|f| (f.name.as_str(), f)).collect();
            for r in refs {
                if let Some(f) = by_name.remove(r.name.as_str()) {
                    let (key, _) = self.blobs.write(&f.bytes)?;
                    if key != r.md5 {
                        return Err(StoreError::Integrity {
                            storage_key: key,
                            expected: r.md5.clone(),
                            actual: md5_hex(&f.bytes),
                        });
                    }
                }
            }
        }
        Ok(refs
            .iter()
            .map(|r| Bitstream {
                name: r.name.clone(),
                size_bytes: r.size_bytes,
                md5: r.md5.clone(),
                media_type: r.media_type.clone(),
                storage_key: r.md5.clone(),
            })
            .collect())
    }

    fn ensure_mirror_collection(
        &self,
        state: &mut CatalogState,
        peer: &str,
    ) -> Result<String, StoreError> {
        if let Some(c) = state.collections.get(peer) {
            if c.kind != CollectionKind::Mirror {
                return Err(StoreError::DuplicateId(format!(
                    "collection id {peer:?} exists locally and cannot hold the {peer} mirror"
                )));
            }
            return Ok(c.id.clone());
        }
        if !state.communities.contains_key("mirrors") {
            let event = LogEvent::Community {
                id: "mirrors".to_string(),
                name: "Mirrored peers".to_string(),
            };
            self.commit(&event)?;
            apply_event(state, event);
        }
        let event = LogEvent::Collection {
            id: peer.to_string(),
            name: format!("Mirror of {peer}"),
            community: "mirrors".to_string(),
            kind: CollectionKind::Mirror.to_string(),
            mirror_of: Some(peer.to_string()),
        };
        self.commit(&event)?;
        apply_event(state, event);
        Ok(peer.to_string())
    }

    /// Total items in the catalog, tombstones included.
    pub fn catalog_size(&self) -> usize {
        self.state.read().unwrap().items.len()
    }

    pub fn earliest_datestamp(&self) -> Option<Datestamp> {
        self.state
            .read()
            .unwrap()
            .order
            .iter()
            .next()
            .map(|(d, _)| *d)
    }

    pub fn blob_count(&self) -> usize {
        self.blobs.count()
    }

    /// On-disk path of a stored blob. Exposed for corruption fixtures
    /// and operational tooling.
    pub fn blob_path(&self, storage_key: &str) -> PathBuf {
        self.blobs.path_for(storage_key)
    }

    /// Deterministic digest of the whole catalog, for convergence and
    /// idempotence checks.
    pub fn catalog_digest(&self) -> String {
        let state = self.state.read().unwrap();
        let mut lines: Vec<String> = Vec::with_capacity(state.items.len());
        for item in state.items.values() {
            let origin = item
                .origin
                .original_identifier
                .clone()
                .unwrap_or_else(|| format!("local:{}", item.uuid));
            let meta = item
                .metadata
                .fields()
                .iter()
                .map(|f| f.to_string())
                .collect::<Vec<_>>()
                .join("|");
            let content = item
                .bitstreams
                .iter()
                .map(|b| format!("{}:{}", b.name, b.md5))
                .collect::<Vec<_>>()
                .join("|");
            lines.push(format!(
                "{origin}\t{:?}\t{meta}\t{content}",
                item.status
            ));
        }
        lines.sort();
        md5_hex(lines.join("\n").as_bytes())
    }
}

fn validate_file_names(files: &[NewFile]) -> Result<(), StoreError> {
    let mut seen = BTreeSet::new();
    for f in files {
        let name = f.name.as_str();
        let bad = name.is_empty()
            || name.starts_with('/')
            || name.contains('\\')
            || name.contains('\0')
            || name.split('/').any(|seg| seg.is_empty() || seg == "." || seg == "..");
        if bad {
            return Err(StoreError::InvalidFileName(name.to_string()));
        }
        if !seen.insert(name) {
            return Err(StoreError::InvalidFileName(format!(
                "{name} appears more than once"
            )));
        }
    }
    Ok(())
}

fn apply_event(state: &mut CatalogState, event: LogEvent) {
    match event {
        LogEvent::Community { id, name } => {
            state
                .communities
                .insert(id.clone(), Community { id, name });
        }
        LogEvent::Collection {
            id,
            name,
            community,
            kind,
            mirror_of,
        } => {
            let kind = if kind == "mirror" {
                CollectionKind::Mirror
            } else {
                CollectionKind::Local
            };
            state.collections.insert(
                id.clone(),
                Collection {
                    id,
                    name,
                    community,
                    kind,
                    mirror_of,
                },
            );
        }
        LogEvent::Create { item, alias } => {
            let item: Item = item.into();
            let uuid = item.uuid;
            state.order.insert((item.datestamp, uuid));
            if let Some(origin_id) = &item.origin.original_identifier {
                state.by_origin.insert(origin_id.clone(), uuid);
            }
            if let Some(alias) = alias {
                state.by_alias.insert(alias, uuid);
            }
            state.items.insert(uuid, item);
        }
        LogEvent::Update {
            uuid,
            datestamp,
            metadata,
            bitstreams,
            alias,
        } => {
            if let Some(item) = state.items.get_mut(&uuid) {
                state.order.remove(&(item.datestamp, uuid));
                item.datestamp = datestamp;
                item.metadata = metadata;
                if let Some(b) = bitstreams {
                    item.bitstreams = b;
                }
                item.status = ItemStatus::Active;
                state.order.insert((datestamp, uuid));
                if let Some(alias) = alias {
                    state.by_alias.insert(alias, uuid);
                }
            }
        }
        LogEvent::Delete { uuid, datestamp } => {
            if let Some(item) = state.items.get_mut(&uuid) {
                state.order.remove(&(item.datestamp, uuid));
                item.datestamp = datestamp;
                item.status = ItemStatus::Deleted;
                item.metadata = MetadataRecord::new();
                item.bitstreams = Vec::new();
                state.order.insert((datestamp, uuid));
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ItemPage {
    pub items: Vec<Item>,
    pub total: usize,
}
