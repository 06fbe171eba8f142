//! Bulk ingest/export toolkit: scan a CSV manifest of local data trees
//! into SAF packages, deposit them in batch over SWORD, and export a
//! remote node's records back to SAF.

mod deposit;
mod export;
mod manifest;
pub mod saf;

pub use deposit::{bulk_deposit, BulkDepositOptions, RECEIPT_CACHE_FILE};
pub use export::{bulk_export, BulkExportOptions};
pub use manifest::{scan_manifest, ManifestError, RowError, ScanReport};
pub use saf::{build_saf, PackageError, SafError, SafPackage};

use std::path::PathBuf;
use std::time::Duration;

/// One manifest row resolved into a ready-to-package item.
#[derive(Debug, Clone)]
pub struct ItemDescriptor {
    /// 1-based data row number in the manifest.
    pub row: usize,
    pub record: crate::metadata::MetadataRecord,
    pub files: Vec<SourceFile>,
}

#[derive(Debug, Clone)]
pub struct SourceFile {
    /// Name inside the package (relative).
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ItemStatus {
    Deposited {
        item_uuid: String,
        pid: Option<String>,
    },
    Exported,
    Skipped {
        item_uuid: String,
        pid: Option<String>,
    },
    Failed {
        error: String,
    },
}

impl ItemStatus {
    pub fn label(&self) -> &'static str {
        match self {
            ItemStatus::Deposited { .. } => "deposited",
            ItemStatus::Exported => "exported",
            ItemStatus::Skipped { .. } => "skipped",
            ItemStatus::Failed { .. } => "failed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ItemOutcome {
    pub package_dir: PathBuf,
    pub status: ItemStatus,
}

/// Per-item outcomes in input order plus totals. `succeeded + failed +
/// skipped` always equals the number of input packages.
#[derive(Debug, Clone, Default)]
pub struct BatchReport {
    pub per_item: Vec<ItemOutcome>,
    pub succeeded: usize,
    pub failed: usize,
    pub skipped: usize,
    pub elapsed: Duration,
}

impl BatchReport {
    pub(crate) fn tally(per_item: Vec<ItemOutcome>, elapsed: Duration) -> BatchReport {
        let mut report = BatchReport {
            per_item,
            elapsed,
            ..BatchReport::default()
        };
        for item in &report.per_item {
            match item.status {
                ItemStatus::Deposited { .. } | ItemStatus::Exported => report.succeeded += 1,
                ItemStatus::Skipped { .. } => report.skipped += 1,
                ItemStatus::Failed { .. } => report.failed += 1,
            }
        }
        report
    }

    pub fn ok(&self) -> bool {
        self.failed == 0
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("no SAF packages found under {0}")]
    NoPackagesFound(PathBuf),
    #[error(transparent)]
    Saf(#[from] SafError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Harvest(#[from] crate::oaipmh::HarvestError),
}
