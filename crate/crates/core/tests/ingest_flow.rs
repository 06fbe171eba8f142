//! The batch toolkit end to end: manifest scan, SAF build, bulk deposit
//! over SWORD, and bulk export back out — against an in-process node.

mod common;

use std::path::Path;

use common::{sample_bytes, tick_while, TestNet};
use lago_core::ingest::{
    build_saf, bulk_deposit, bulk_export, scan_manifest, BulkDepositOptions, BulkExportOptions,
    ItemStatus, RECEIPT_CACHE_FILE,
};
use lago_core::metadata::LagoProfile;

const HEADER: &str = "sourcePath,title,dateIssued,type,site,detector,rcut,altitude";

/// Write `n` single-file items and a manifest describing them.
fn write_manifest(dir: &Path, n: usize) -> std::path::PathBuf {
    let mut text = String::from(HEADER);
    text.push('\n');
    for i in 0..n {
        let file = format!("run{i:03}.dat");
        std::fs::write(dir.join(&file), sample_bytes(i as u64, 64 + i * 7)).unwrap();
        text.push_str(&format!(
            "{file},Run {i:03},2016-01-{:02},raw,chacaltaya,wcd-01,{:.1},5240\n",
            (i % 27) + 1,
            (i % 280) as f64 / 10.0
        ));
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn deposit_options(_net: &TestNet) -> BulkDepositOptions {
    BulkDepositOptions {
        endpoint: "http://nodeA".to_string(),
        collection: "data".to_string(),
        token: format!("token-{}", "nodeA"),
        parallelism: 4,
    }
}

#[test]
fn scan_build_deposit_export_round_trip() {
    let net = TestNet::new(&["nodeA"], false);
    let work = tempfile::tempdir().unwrap();
    let manifest = write_manifest(work.path(), 10);

    let scan = scan_manifest(&manifest, &LagoProfile::default_profile()).unwrap();
    assert_eq!(scan.descriptors.len(), 10);
    assert!(scan.row_errors.is_empty());

    let saf_dir = work.path().join("saf");
    let dirs = build_saf(&scan.descriptors, &saf_dir).unwrap();
    assert_eq!(dirs.len(), 10);

    let node = net.node("nodeA");
    let before = node.store().catalog_size();
    let report = bulk_deposit(
        net.transport.as_ref(),
        net.clock.as_ref(),
        &saf_dir,
        &deposit_options(&net),
    )
    .unwrap();
    assert_eq!(report.succeeded, 10);
    assert_eq!(report.failed, 0);
    assert_eq!(report.skipped, 0);
    assert_eq!(node.store().catalog_size(), before + 10);

    // outcomes keep input order
    let names: Vec<String> = report
        .per_item
        .iter()
        .map(|o| o.package_dir.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);

    // export everything back
    let out_dir = work.path().join("export");
    let export = bulk_export(
        net.transport.as_ref(),
        net.clock.as_ref(),
        &BulkExportOptions {
            endpoint: "http://nodeA".to_string(),
            set: None,
            from: None,
        },
        &out_dir,
    )
    .unwrap();
    assert_eq!(export.succeeded, 10);
    assert_eq!(export.failed, 0);

    // every exported package equals its original modulo identifier.uri,
    // and data files are byte-identical
    let mut originals: Vec<_> = scan.descriptors.iter().collect();
    originals.sort_by_key(|d| d.row);
    let mut matched = 0;
    for exported_dir in std::fs::read_dir(&out_dir).unwrap() {
        let exported_dir = exported_dir.unwrap().path();
        if !exported_dir.is_dir() {
            continue;
        }
        let package = lago_core::ingest::saf::read_saf_dir(&exported_dir).unwrap();
        assert!(package.record.pid().unwrap().starts_with("hdl:20.500.0001/"));
        let mut stripped = lago_core::metadata::MetadataRecord::new();
        for f in package.record.fields() {
            if !(f.element() == "identifier" && f.qualifier() == Some("uri")) {
                stripped.push(f.clone());
            }
        }
        let original = originals
            .iter()
            .find(|d| {
                d.record.first_value("title", None) == stripped.first_value("title", None)
            })
            .expect("exported item matches an original");
        assert_eq!(stripped, original.record.canonicalize());
        for source in &original.files {
            let original_bytes = std::fs::read(&source.path).unwrap();
            let exported_bytes = std::fs::read(exported_dir.join(&source.name)).unwrap();
            assert_eq!(original_bytes, exported_bytes, "{}", source.name);
        }
        matched += 1;
    }
    assert_eq!(matched, 10);
}

#[test]
fn rerun_skips_previously_deposited_packages() {
    let net = TestNet::new(&["nodeA"], false);
    let work = tempfile::tempdir().unwrap();
    let manifest = write_manifest(work.path(), 4);
    let scan = scan_manifest(&manifest, &LagoProfile::default_profile()).unwrap();
    let saf_dir = work.path().join("saf");
    build_saf(&scan.descriptors, &saf_dir).unwrap();

    let node = net.node("nodeA");
    let first = bulk_deposit(
        net.transport.as_ref(),
        net.clock.as_ref(),
        &saf_dir,
        &deposit_options(&net),
    )
    .unwrap();
    assert_eq!(first.succeeded, 4);
    assert!(saf_dir.join(RECEIPT_CACHE_FILE).is_file());
    let count_after_first = node.store().catalog_size();

    let second = bulk_deposit(
        net.transport.as_ref(),
        net.clock.as_ref(),
        &saf_dir,
        &deposit_options(&net),
    )
    .unwrap();
    assert_eq!(second.succeeded, 0);
    assert_eq!(second.skipped, 4);
    assert_eq!(second.failed, 0);
    assert_eq!(node.store().catalog_size(), count_after_first);

    // skipped outcomes still carry the original uuid and pid
    for outcome in &second.per_item {
        match &outcome.status {
            ItemStatus::Skipped { item_uuid, pid } => {
                assert!(!item_uuid.is_empty());
                assert!(pid.as_deref().unwrap().starts_with("20.500.0001/"));
            }
            other => panic!("expected skipped, got {other:?}"),
        }
    }
}

#[test]
fn one_bad_package_fails_alone() {
    let net = TestNet::new(&["nodeA"], false);
    let work = tempfile::tempdir().unwrap();
    let manifest = write_manifest(work.path(), 5);
    let scan = scan_manifest(&manifest, &LagoProfile::default_profile()).unwrap();
    let saf_dir = work.path().join("saf");
    let dirs = build_saf(&scan.descriptors, &saf_dir).unwrap();

    // corrupt the third package's dublin_core.xml
    std::fs::write(dirs[2].join("dublin_core.xml"), "<dublin_core><broken").unwrap();

    let report = bulk_deposit(
        net.transport.as_ref(),
        net.clock.as_ref(),
        &saf_dir,
        &deposit_options(&net),
    )
    .unwrap();
    assert_eq!(report.succeeded, 4);
    assert_eq!(report.failed, 1);
    assert!(!report.ok());
    match &report.per_item[2].status {
        ItemStatus::Failed { error } => assert!(error.contains("dublin_core.xml"), "{error}"),
        other => panic!("expected failure, got {other:?}"),
    }
    assert_eq!(net.node("nodeA").store().catalog_size(), 4);
}

#[test]
fn multiple_scattered_failures_stay_isolated() {
    let net = TestNet::new(&["nodeA"], false);
    let work = tempfile::tempdir().unwrap();
    let manifest = write_manifest(work.path(), 6);
    let scan = scan_manifest(&manifest, &LagoProfile::default_profile()).unwrap();
    let saf_dir = work.path().join("saf");
    let dirs = build_saf(&scan.descriptors, &saf_dir).unwrap();

    // break packages 1 and 3 in different ways
    std::fs::write(dirs[1].join("metadata_lago.xml"), "<lago garbage").unwrap();
    std::fs::remove_file(dirs[3].join("contents")).unwrap();

    let report = bulk_deposit(
        net.transport.as_ref(),
        net.clock.as_ref(),
        &saf_dir,
        &deposit_options(&net),
    )
    .unwrap();
    assert_eq!(report.succeeded, 4);
    assert_eq!(report.failed, 2);
    assert_eq!(report.succeeded + report.failed + report.skipped, 6);
    for (index, outcome) in report.per_item.iter().enumerate() {
        let failed = matches!(outcome.status, ItemStatus::Failed { .. });
        assert_eq!(failed, index == 1 || index == 3, "package {index}");
    }
    assert_eq!(net.node("nodeA").store().catalog_size(), 4);
}

#[test]
fn export_marks_corrupted_bitstreams_failed_and_continues() {
    let net = TestNet::new(&["nodeA"], false);
    let work = tempfile::tempdir().unwrap();
    let manifest = write_manifest(work.path(), 5);
    let scan = scan_manifest(&manifest, &LagoProfile::default_profile()).unwrap();
    let saf_dir = work.path().join("saf");
    build_saf(&scan.descriptors, &saf_dir).unwrap();
    bulk_deposit(
        net.transport.as_ref(),
        net.clock.as_ref(),
        &saf_dir,
        &deposit_options(&net),
    )
    .unwrap();

    // corrupt one stored blob on disk
    let node = net.node("nodeA");
    let items = node.store().list_items(None, None, None, 0, 100).unwrap().items;
    let victim = &items[2];
    let path = node.store().blob_path(&victim.bitstreams[0].storage_key);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] ^= 0xFF;
    std::fs::write(&path, bytes).unwrap();

    let out_dir = work.path().join("export");
    let report = tick_while(&net.clock, || {
        bulk_export(
            net.transport.as_ref(),
            net.clock.as_ref(),
            &BulkExportOptions {
                endpoint: "http://nodeA".to_string(),
                set: None,
                from: None,
            },
            &out_dir,
        )
    })
    .unwrap();
    assert_eq!(report.succeeded, 4);
    assert_eq!(report.failed, 1);
    let failures: Vec<&str> = report
        .per_item
        .iter()
        .filter_map(|o| match &o.status {
            ItemStatus::Failed { error } => Some(error.as_str()),
            _ => None,
        })
        .collect();
    assert_eq!(failures.len(), 1);
    assert!(failures[0].contains("IntegrityError"), "{}", failures[0]);
    // the failed package directory was removed
    assert_eq!(std::fs::read_dir(&out_dir).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count(), 4);
}

#[test]
fn export_honours_from_and_set_filters() {
    let net = TestNet::new(&["nodeA"], false);
    net.seed_items("nodeA", 3);
    let work = tempfile::tempdir().unwrap();

    let out = work.path().join("none");
    let report = bulk_export(
        net.transport.as_ref(),
        net.clock.as_ref(),
        &BulkExportOptions {
            endpoint: "http://nodeA".to_string(),
            set: None,
            from: Some("2031-01-01T00:00:00Z".parse().unwrap()),
        },
        &out,
    )
    .unwrap();
    assert_eq!(report.succeeded + report.failed + report.skipped, 0);
    assert!(report.ok());

    let out = work.path().join("ghost-set");
    let report = bulk_export(
        net.transport.as_ref(),
        net.clock.as_ref(),
        &BulkExportOptions {
            endpoint: "http://nodeA".to_string(),
            set: Some("local:ghost".to_string()),
            from: None,
        },
        &out,
    )
    .unwrap();
    assert_eq!(report.per_item.len(), 0);
}

#[test]
fn deposit_against_unreachable_endpoint_reports_failures() {
    let net = TestNet::new(&["nodeA"], false);
    let work = tempfile::tempdir().unwrap();
    let manifest = write_manifest(work.path(), 2);
    let scan = scan_manifest(&manifest, &LagoProfile::default_profile()).unwrap();
    let saf_dir = work.path().join("saf");
    build_saf(&scan.descriptors, &saf_dir).unwrap();

    let options = BulkDepositOptions {
        endpoint: "http://ghost".to_string(),
        collection: "data".to_string(),
        token: "t".to_string(),
        parallelism: 2,
    };
    let report = tick_while(&net.clock, || {
        bulk_deposit(net.transport.as_ref(), net.clock.as_ref(), &saf_dir, &options)
    })
    .unwrap();
    assert_eq!(report.failed, 2);
    assert_eq!(report.succeeded, 0);
}

#[test]
fn endpoints_with_trailing_slashes_work() {
    let net = TestNet::new(&["nodeA"], false);
    let work = tempfile::tempdir().unwrap();
    let manifest = write_manifest(work.path(), 2);
    let scan = scan_manifest(&manifest, &LagoProfile::default_profile()).unwrap();
    let saf_dir = work.path().join("saf");
    build_saf(&scan.descriptors, &saf_dir).unwrap();

    let report = bulk_deposit(
        net.transport.as_ref(),
        net.clock.as_ref(),
        &saf_dir,
        &BulkDepositOptions {
            endpoint: "http://nodeA/".to_string(),
            collection: "data".to_string(),
            token: "token-nodeA".to_string(),
            parallelism: 1,
        },
    )
    .unwrap();
    assert_eq!(report.succeeded, 2);

    let out = work.path().join("export");
    let export = bulk_export(
        net.transport.as_ref(),
        net.clock.as_ref(),
        &BulkExportOptions {
            endpoint: "http://nodeA/".to_string(),
            set: None,
            from: None,
        },
        &out,
    )
    .unwrap();
    assert_eq!(export.succeeded, 2);
}

#[test]
fn missing_saf_dir_is_an_error() {
    let net = TestNet::new(&["nodeA"], false);
    let empty = tempfile::tempdir().unwrap();
    let err = bulk_deposit(
        net.transport.as_ref(),
        net.clock.as_ref(),
        empty.path(),
        &deposit_options(&net),
    )
    .unwrap_err();
    assert!(err.to_string().contains("no SAF packages"));
}
