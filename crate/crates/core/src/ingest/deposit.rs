//! Resumable batch deposit: zip each SAF package directory and push it
//! through the SWORD client with bounded parallelism.
//!
//! Succeeded packages are recorded in a receipt-cache file inside the
//! SAF directory (`deposited.receipts`, lines of
//! `packageDir\titemUuid\tpid`), so a rerun skips them — batches resume
//! instead of double-depositing. One failed item never aborts the rest.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use fs2::FileExt;

use crate::clock::Clock;
use crate::sword::SwordClient;
use crate::wire::Transport;

use super::saf::zip_saf_dir;
use super::{BatchReport, IngestError, ItemOutcome, ItemStatus};

pub const RECEIPT_CACHE_FILE: &str = "deposited.receipts";

#[derive(Debug, Clone)]
pub struct BulkDepositOptions {
    pub endpoint: String,
    pub collection: String,
    pub token: String,
    pub parallelism: usize,
}

/// Find the SAF package directories under `saf_dir`, sorted by name.
pub(crate) fn find_packages(saf_dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(saf_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(IngestError::NoPackagesFound(saf_dir.to_path_buf()));
    }
    Ok(dirs)
}

struct ReceiptCache {
    path: PathBuf,
    seen: HashMap<String, (String, Option<String>)>,
}

impl ReceiptCache {
    fn load(saf_dir: &Path) -> std::io::Result<ReceiptCache> {
        let path = saf_dir.join(RECEIPT_CACHE_FILE);
        let mut seen = HashMap::new();
        match std::fs::read_to_string(&path) {
            Ok(text) => {
                for line in text.lines() {
                    let mut parts = line.split('\t');
                    if let (Some(dir), Some(uuid)) = (parts.next(), parts.next()) {
                        let pid = parts.next().filter(|p| !p.is_empty()).map(str::to_string);
                        seen.insert(dir.to_string(), (uuid.to_string(), pid));
                    }
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e),
        }
        Ok(ReceiptCache { path, seen })
    }

    fn lookup(&self, package_name: &str) -> Option<&(String, Option<String>)> {
        self.seen.get(package_name)
    }

    /// Append one line under an exclusive file lock, so concurrent
    /// workers (and concurrent CLI runs) never interleave partial lines.
    fn record(&self, package_name: &str, uuid: &str, pid: Option<&str>) -> std::io::Result<()> {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)?;
        file.lock_exclusive()?;
        let mut file = file;
        let line = format!("{package_name}\t{uuid}\t{}\n", pid.unwrap_or(""));
        let result = file.write_all(line.as_bytes()).and_then(|_| file.flush());
        let _ = fs2::FileExt::unlock(&file);
        result
    }
}

/// Deposit every package under `saf_dir`. Outcomes keep input order
/// regardless of which worker finished first; the exit contract for the
/// CLI is nonzero iff any item failed.
pub fn bulk_deposit(
    transport: &dyn Transport,
    clock: &dyn Clock,
    saf_dir: &Path,
    options: &BulkDepositOptions,
) -> Result<BatchReport, IngestError> {
    let packages = find_packages(saf_dir)?;
    let cache = ReceiptCache::load(saf_dir)?;
    let parallelism = options.parallelism.max(1).min(packages.len());
    let started = clock.now_precise();

    let outcomes: Mutex<Vec<Option<ItemOutcome>>> =
        Mutex::new((0..packages.len()).map(|_| None).collect());
    let next_index = AtomicUsize::new(0);

    std::thread::scope(|scope| {
        for _ in 0..parallelism {
            scope.spawn(|| loop {
                let index = next_index.fetch_add(1, Ordering::SeqCst);
                if index >= packages.len() {
                    break;
                }
                let package_dir = &packages[index];
                let name = package_dir
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();

                let status = if let Some((uuid, pid)) = cache.lookup(&name) {
                    ItemStatus::Skipped {
                        item_uuid: uuid.clone(),
                        pid: pid.clone(),
                    }
                } else {
                    deposit_one(transport, clock, package_dir, options).map_or_else(
                        |error| ItemStatus::Failed { error },
                        |(uuid, pid)| {
                            if let Err(e) = cache.record(&name, &uuid, pid.as_deref()) {
                                // the deposit itself succeeded; a cache
                                // write failure only costs resumability
                                eprintln!("warning: receipt cache write failed: {e}");
                            }
                            ItemStatus::Deposited {
                                item_uuid: uuid,
                                pid,
                            }
                        },
                    )
                };
                outcomes.lock().unwrap()[index] = Some(ItemOutcome {
                    package_dir: package_dir.clone(),
                    status,
                });
            });
        }
    });

    let per_item: Vec<ItemOutcome> = outcomes
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|o| o.expect("every index was processed"))
        .collect();
    let elapsed = (clock.now_precise() - started)
        .to_std()
        .unwrap_or_default();
    Ok(BatchReport::tally(per_item, elapsed))
}

fn deposit_one(
    transport: &dyn Transport,
    clock: &dyn Clock,
    package_dir: &Path,
    options: &BulkDepositOptions,
) -> Result<(String, Option<String>), String> {
    let zip = zip_saf_dir(package_dir).map_err(|e| e.to_string())?;
    let client = SwordClient::new(transport, clock, &options.endpoint, &options.token);
    let receipt = client
        .deposit_bytes(&options.collection, &zip, None)
        .map_err(|e| e.to_string())?;
    Ok((receipt.item_uuid.to_string(), receipt.pid))
}
