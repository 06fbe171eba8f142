//! Server side of the deposit flow.
//!
//! A deposit is atomic: every fallible step (auth, packaging, checksum,
//! ZIP/SAF parsing, profile validation) runs before any mutation, and
//! the two mutations that follow (PID mint, catalog create) compensate
//! each other on failure — a failed deposit leaves catalog size, blob
//! count, and PID registry size exactly as they were.

use uuid::Uuid;

use crate::ingest::saf::parse_saf_zip;
use crate::metadata::{validate_record, LagoProfile};
use crate::oaipmh::OaiIdentifier;
use crate::pid::{HandleRegistry, NewHandleValue, PidError};
use crate::store::{md5_hex, CollectionKind, NewFile, Store, StoreError};

use super::{
    DepositError, DepositReceipt, ServiceCollection, ServiceDocument, PACKAGING_LAGO_SAF_ZIP,
};

/// Everything the deposit surface needs from the node.
pub struct DepositContext<'a> {
    pub store: &'a Store,
    pub pids: &'a HandleRegistry,
    pub profile: &'a LagoProfile,
    pub node_name: &'a str,
    /// Public base URL used in hrefs, locations, and minted PID values.
    pub base_url: &'a str,
    pub deposit_token: &'a str,
    pub max_upload_bytes: u64,
}

impl<'a> DepositContext<'a> {
    fn check_auth(&self, bearer_token: Option<&str>) -> Result<(), DepositError> {
        match bearer_token {
            Some(token) if token == self.deposit_token => Ok(()),
            _ => Err(DepositError::Unauthorized),
        }
    }

    /// List depositable collections. Mirror collections never appear.
    pub fn service_document(
        &self,
        bearer_token: Option<&str>,
    ) -> Result<ServiceDocument, DepositError> {
        self.check_auth(bearer_token)?;
        let collections = self
            .store
            .collections()
            .into_iter()
            .filter(|c| c.kind == CollectionKind::Local)
            .map(|c| ServiceCollection {
                href: format!("{}/sword/deposit/{}", self.base_url, c.id),
                title: c.name,
                accepted_packaging: vec![PACKAGING_LAGO_SAF_ZIP.to_string()],
                accepted_media_types: vec!["application/zip".to_string()],
            })
            .collect();
        Ok(ServiceDocument {
            version: "1.3".to_string(),
            max_upload_bytes: self.max_upload_bytes,
            collections,
        })
    }

    pub fn deposit(
        &self,
        collection_id: &str,
        packaging: Option<&str>,
        declared_md5: Option<&str>,
        slug: Option<&str>,
        zip_bytes: &[u8],
        bearer_token: Option<&str>,
    ) -> Result<DepositReceipt, DepositError> {
        self.check_auth(bearer_token)?;

        match self.store.collection(collection_id) {
            None => return Err(DepositError::UnknownCollection(collection_id.to_string())),
            Some(c) if c.kind == CollectionKind::Mirror => {
                return Err(DepositError::MirrorCollection(collection_id.to_string()))
            }
            Some(_) => {}
        }

        match packaging {
            Some(PACKAGING_LAGO_SAF_ZIP) => {}
            other => {
                return Err(DepositError::UnsupportedPackaging(
                    other.unwrap_or("<none>").to_string(),
                ))
            }
        }

        if zip_bytes.len() as u64 > self.max_upload_bytes {
            return Err(DepositError::TooLarge(self.max_upload_bytes));
        }

        if let Some(declared) = declared_md5 {
            let computed = md5_hex(zip_bytes);
            if !declared.eq_ignore_ascii_case(&computed) {
                return Err(DepositError::ChecksumMismatch {
                    declared: declared.to_string(),
                    computed,
                });
            }
        }

        let package = parse_saf_zip(zip_bytes).map_err(|e| DepositError::InvalidPackage {
            path: e.offending_path().unwrap_or("<archive>").to_string(),
            detail: e.to_string(),
        })?;

        let report = validate_record(&package.record, self.profile);
        if !report.ok {
            return Err(DepositError::ValidationRejected(report));
        }

        // All checks passed; now the two mutations, with compensation.
        let uuid = Uuid::new_v4();
        let handle = self.mint_pid(uuid, slug)?;

        let mut metadata = package.record.clone();
        metadata
            .set_pid(&format!("hdl:{}", handle.text()))
            .map_err(|e| DepositError::Storage(e.to_string()))?;

        let files: Vec<NewFile> = package
            .files
            .iter()
            .map(|(name, bytes)| NewFile::new(name, bytes.clone()))
            .collect();

        let item = match self
            .store
            .create_item_with_uuid(uuid, collection_id, metadata, files, self.profile)
        {
            Ok(item) => item,
            Err(e) => {
                // roll the mint back so the registry is unchanged
                let _ = self.pids.remove(&handle.text());
                return Err(match e {
                    StoreError::ValidationRejected(report) => {
                        DepositError::ValidationRejected(report)
                    }
                    StoreError::UnknownCollection(c) => DepositError::UnknownCollection(c),
                    StoreError::MirrorCollection(c) => DepositError::MirrorCollection(c),
                    StoreError::InvalidFileName(name) => DepositError::InvalidPackage {
                        path: name,
                        detail: "unsafe file name".to_string(),
                    },
                    other => DepositError::Storage(other.to_string()),
                });
            }
        };

        let oai_identifier = OaiIdentifier::new(self.node_name, item.uuid).to_string();
        Ok(DepositReceipt {
            item_uuid: item.uuid,
            oai_identifier,
            pid: Some(handle.text()),
            treatment: format!(
                "deposited into collection {:?}; {} bitstream(s) stored; PID minted",
                collection_id,
                item.bitstreams.len()
            ),
            location: format!("{}/items/{}", self.base_url, item.uuid),
        })
    }

    fn mint_pid(
        &self,
        uuid: Uuid,
        slug: Option<&str>,
    ) -> Result<crate::pid::Handle, DepositError> {
        let values = vec![NewHandleValue::url(
            1,
            &format!("{}/items/{}", self.base_url, uuid),
        )];
        // the slug is a suggestion: fall back to a generated suffix when
        // taken or unusable
        if let Some(slug) = slug {
            match self.pids.mint(Some(slug), values.clone()) {
                Ok(handle) => return Ok(handle),
                Err(PidError::SuffixTaken(_)) | Err(PidError::InvalidSuffix(_)) => {}
                Err(e) => return Err(DepositError::Storage(e.to_string())),
            }
        }
        self.pids
            .mint(None, values)
            .map_err(|e| DepositError::Storage(e.to_string()))
    }
}
