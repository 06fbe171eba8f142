//! Acceptance suite. Each test is one release criterion, checked at its
//! stated tolerance against an independent oracle, and prints one
//! PASS line (visible with `cargo test --test acceptance -- --nocapture`).

mod common;

use std::collections::HashSet;
use std::time::Instant;

use common::{sample_bytes, sample_record, TestNet};
use lago_core::clock::Datestamp;
use lago_core::ingest::{
    build_saf, bulk_deposit, bulk_export, scan_manifest, BulkDepositOptions, BulkExportOptions,
};
use lago_core::metadata::{LagoProfile, MetadataRecord};
use lago_core::oaipmh::{harvest, HarvestQuery};
use lago_core::pid::NewHandleValue;
use lago_core::store::CollectionKind;
use lago_core::wire::{Method, Request};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

// ---------------------------------------------------------------------
// independent OAI-PMH envelope validator
//
// A structural re-encoding of the protocol's response schema, written
// against the public protocol document and deliberately not sharing any
// code with the provider or the harvester's parser.
// ---------------------------------------------------------------------

const OAI_NS: &str = "http://www.openarchives.org/OAI/2.0/";
const VERBS: [&str; 6] = [
    "Identify",
    "ListMetadataFormats",
    "ListSets",
    "ListIdentifiers",
    "ListRecords",
    "GetRecord",
];
const ERROR_CODES: [&str; 8] = [
    "badVerb",
    "badArgument",
    "badResumptionToken",
    "cannotDisseminateFormat",
    "idDoesNotExist",
    "noRecordsMatch",
    "noMetadataFormats",
    "noSetHierarchy",
];

fn validate_oai_envelope(xml: &str) -> Result<(), String> {
    use quick_xml::events::Event;
    let mut reader = quick_xml::Reader::from_str(xml);
    reader.config_mut().trim_text(true);

    // the root element
    let root = loop {
        match reader.read_event().map_err(|e| format!("not XML: {e}"))? {
            Event::Start(el) => break el.to_owned(),
            Event::Decl(_) | Event::Comment(_) | Event::PI(_) => continue,
            other => return Err(format!("unexpected {other:?} before root")),
        }
    };
    if root.name().as_ref() != b"OAI-PMH" {
        return Err("root element is not OAI-PMH".to_string());
    }
    let ns_ok = root.attributes().flatten().any(|a| {
        a.key.as_ref() == b"xmlns" && a.value.as_ref() == OAI_NS.as_bytes()
    });
    if !ns_ok {
        return Err("root lacks the protocol namespace".to_string());
    }

    // top-level children in order
    let mut children: Vec<String> = Vec::new();
    let mut error_codes: Vec<String> = Vec::new();
    let mut response_date_text = String::new();
    let mut request_attr_count = 0usize;
    let mut depth = 0usize;
    loop {
        match reader.read_event().map_err(|e| format!("not XML: {e}"))? {
            Event::Start(el) => {
                if depth == 0 {
                    let name = String::from_utf8_lossy(el.name().as_ref()).into_owned();
                    if name == "error" {
                        let code = el
                            .attributes()
                            .flatten()
                            .find(|a| a.key.as_ref() == b"code")
                            .map(|a| String::from_utf8_lossy(&a.value).into_owned())
                            .ok_or("error element without code")?;
                        error_codes.push(code);
                    }
                    if name == "request" {
                        request_attr_count = el.attributes().flatten().count();
                    }
                    children.push(name);
                }
                depth += 1;
            }
            Event::Empty(el) => {
                if depth == 0 {
                    let name = String::from_utf8_lossy(el.name().as_ref()).into_owned();
                    if name == "error" {
                        let code = el
                            .attributes()
                            .flatten()
                            .find(|a| a.key.as_ref() == b"code")
                            .map(|a| String::from_utf8_lossy(&a.value).into_owned())
                            .ok_or("error element without code")?;
                        error_codes.push(code);
                    }
                    children.push(name);
                }
            }
            Event::Text(t) => {
                if depth == 1 && children.last().map(String::as_str) == Some("responseDate") {
                    response_date_text = t.unescape().map_err(|e| e.to_string())?.into_owned();
                }
            }
            Event::End(_) => {
                if depth == 0 {
                    break; // end of OAI-PMH
                }
                depth -= 1;
            }
            Event::Eof => break,
            _ => {}
        }
    }

    if children.first().map(String::as_str) != Some("responseDate") {
        return Err(format!("first child is {:?}, not responseDate", children.first()));
    }
    response_date_text
        .trim()
        .parse::<Datestamp>()
        .map_err(|_| format!("responseDate {response_date_text:?} is not UTC-seconds"))?;
    if children.get(1).map(String::as_str) != Some("request") {
        return Err(format!("second child is {:?}, not request", children.get(1)));
    }
    let rest = &children[2..];
    if rest.is_empty() {
        return Err("no payload and no errors".to_string());
    }
    let all_errors = rest.iter().all(|c| c == "error");
    let one_verb = rest.len() == 1 && VERBS.contains(&rest[0].as_str());
    if all_errors {
        for code in &error_codes {
            if !ERROR_CODES.contains(&code.as_str()) {
                return Err(format!("illegal error code {code:?}"));
            }
        }
        // badVerb/badArgument responses must not echo request attributes
        if error_codes
            .iter()
            .any(|c| c == "badVerb" || c == "badArgument")
            && request_attr_count != 0
        {
            return Err(format!(
                "badVerb/badArgument response echoes {request_attr_count} request attribute(s)"
            ));
        }
        Ok(())
    } else if one_verb {
        Ok(())
    } else {
        Err(format!("illegal top-level children {rest:?}"))
    }
}

// ---------------------------------------------------------------------

#[test]
fn acceptance_1_oai_pmh_conformance() {
    let started = Instant::now();
    let net = TestNet::new(&["nodeA"], false);
    net.seed_items("nodeA", 1000);
    let node = net.node("nodeA");

    // oracle: the store's own count, independent of the protocol path
    let oracle = node.store().list_items(None, None, None, 0, 2000).unwrap();
    assert_eq!(oracle.total, 1000);
    let oracle_ids: HashSet<String> = oracle
        .items
        .iter()
        .map(|i| format!("oai:nodeA:{}", i.uuid))
        .collect();

    let mut query = "verb=ListRecords&metadataPrefix=oai_dc".to_string();
    let mut pages = 0;
    let mut harvested: HashSet<String> = HashSet::new();
    let mut cursors = Vec::new();
    loop {
        let resp = node.handle(Request::get(&format!("/oai?{query}")));
        assert_eq!(resp.status, 200);
        let body = resp.body_string();
        validate_oai_envelope(&body).expect("page must be schema-valid");
        pages += 1;
        assert!(pages <= 10, "more pages than ceil(1000/100)");

        for piece in body.split("<identifier>").skip(1) {
            let id = piece.split('<').next().unwrap().to_string();
            assert!(harvested.insert(id), "duplicate identifier on page {pages}");
        }

        let token_attrs = body
            .split("<resumptionToken")
            .nth(1)
            .map(|s| s.split('>').next().unwrap().to_string());
        match token_attrs {
            Some(attrs) => {
                assert!(
                    attrs.contains("completeListSize=\"1000\""),
                    "page {pages}: {attrs}"
                );
                let cursor: usize = attrs
                    .split("cursor=\"")
                    .nth(1)
                    .and_then(|s| s.split('"').next())
                    .and_then(|s| s.parse().ok())
                    .expect("cursor attribute");
                cursors.push(cursor);
                // empty element form means the final page
                let token_value = body
                    .split("<resumptionToken")
                    .nth(1)
                    .unwrap()
                    .split_once('>')
                    .map(|(head, tail)| {
                        if head.ends_with('/') {
                            String::new()
                        } else {
                            tail.split('<').next().unwrap().to_string()
                        }
                    })
                    .unwrap();
                if token_value.is_empty() {
                    break;
                }
                query = format!("verb=ListRecords&resumptionToken={token_value}");
            }
            None => panic!("page {pages} of a 10-page list must carry a token"),
        }
    }

    assert_eq!(pages, 10, "exactly 10 pages");
    assert_eq!(harvested.len(), 1000, "exactly 1000 unique identifiers");
    assert_eq!(harvested, oracle_ids, "protocol ids equal the store's ids");
    assert_eq!(cursors, vec![0, 100, 200, 300, 400, 500, 600, 700, 800, 900]);

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 30, "took {elapsed:?}, budget 30 s");
    println!("acceptance 1 (OAI-PMH conformance, 1000 items / 10 pages): PASS in {elapsed:?}");
}

#[test]
fn acceptance_2_error_totality_fuzz() {
    let started = Instant::now();
    let net = TestNet::new(&["nodeA"], false);
    net.seed_items("nodeA", 25);
    let node = net.node("nodeA");

    let keys = [
        "verb",
        "metadataPrefix",
        "from",
        "until",
        "set",
        "resumptionToken",
        "identifier",
        "junk",
        "VERB",
        "",
        "ver b",
    ];
    let values = [
        "Identify",
        "ListRecords",
        "ListIdentifiers",
        "GetRecord",
        "ListSets",
        "ListMetadataFormats",
        "oai_dc",
        "lago",
        "marc21",
        "",
        "2020-01-01",
        "2020-01-01T00:00:00Z",
        "2020-13-45",
        "9999-99-99T99:99:99Z",
        "local:data",
        "mirror:",
        "junk::set",
        "oai:nodeA:00000000-0000-0000-0000-000000000000",
        "oai:nodeA:not-a-uuid",
        "%zz%%",
        "%00%01%02",
        "a&b=c",
        "\u{202E}evil\u{0}",
        "<xml injection=\"true\"/>",
        "xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx",
        "token.with.dots",
    ];

    let mut rng = StdRng::seed_from_u64(0x1a60_dada);
    for round in 0..10_000 {
        let n = rng.random_range(0..6);
        let mut parts: Vec<String> = (0..n)
            .map(|_| {
                let key = keys[rng.random_range(0..keys.len())];
                let value = values[rng.random_range(0..values.len())];
                if rng.random_bool(0.2) {
                    format!("{key}={}", lago_core::wire::percent_encode(value))
                } else {
                    format!("{key}={value}")
                }
            })
            .collect();
        if rng.random_bool(0.1) {
            parts.push("rawjunk".to_string());
        }
        // bias towards requests that carry a verb so success documents
        // are exercised too
        if rng.random_bool(0.6) {
            let verb = VERBS[rng.random_range(0..VERBS.len())];
            parts.insert(0, format!("verb={verb}"));
            if rng.random_bool(0.5) {
                parts.insert(1, "metadataPrefix=oai_dc".to_string());
            }
        }
        let query = parts.join("&");

        let resp = node.handle(Request {
            method: Method::Get,
            path: "/oai".to_string(),
            query: query.clone(),
            headers: Vec::new(),
            body: Vec::new(),
        });
        assert_eq!(resp.status, 200, "round {round}: query {query:?} gave HTTP {}", resp.status);
        let body = resp.body_string();
        validate_oai_envelope(&body)
            .unwrap_or_else(|e| panic!("round {round}: query {query:?}: {e}\n{body}"));
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}, budget 60 s");
    println!("acceptance 2 (error totality, 10000 fuzzed queries): PASS in {elapsed:?}");
}

#[test]
fn acceptance_3_incremental_harvest_exactness() {
    let started = Instant::now();
    let net = TestNet::new(&["nodeA"], false);
    let items = net.seed_items("nodeA", 20);
    let node = net.node("nodeA");

    let full = harvest(
        net.transport.as_ref(),
        net.clock.as_ref(),
        &HarvestQuery::new("http://nodeA/oai", "lago"),
        &mut |_| {},
    )
    .unwrap();
    assert_eq!(full.received, 20);
    let checkpoint = full.next_from().unwrap();

    for item in items.iter().take(7) {
        net.clock.advance_secs(1);
        let mut meta = item.metadata.clone();
        meta.add("description", None, "revised").unwrap();
        node.store()
            .update_item(item.uuid, meta, node.profile())
            .unwrap();
    }
    for item in items.iter().skip(7).take(2) {
        net.clock.advance_secs(1);
        node.store().soft_delete_item(item.uuid).unwrap();
    }

    let mut query = HarvestQuery::new("http://nodeA/oai", "lago");
    query.from = Some(checkpoint);
    let mut deleted_headers = 0;
    let incremental = harvest(
        net.transport.as_ref(),
        net.clock.as_ref(),
        &query,
        &mut |r| {
            if r.header.deleted {
                deleted_headers += 1;
            }
        },
    )
    .unwrap();

    assert_eq!(incremental.received, 9, "exactly the 7 updates + 2 deletes");
    assert_eq!(incremental.deleted, 2);
    assert_eq!(deleted_headers, 2);

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 10, "took {elapsed:?}, budget 10 s");
    println!("acceptance 3 (incremental harvest exactness, 7+2 of 20): PASS in {elapsed:?}");
}

#[test]
fn acceptance_4_pid_on_the_fly() {
    let started = Instant::now();
    let net = TestNet::new(&["nodeA"], false);
    let pids = net.node("nodeA").pids();

    pids.mint(
        Some("LAGO-DATA"),
        vec![NewHandleValue::template(
            1,
            "URL=https://node.example/d/{part}",
        )],
    )
    .unwrap();
    assert_eq!(pids.len(), 1);

    let mut rng = StdRng::seed_from_u64(0x09a9_d1e5);
    let mut parts: HashSet<String> = HashSet::new();
    while parts.len() < 10_000 {
        let len = rng.random_range(1..24);
        let part: String = (0..len)
            .map(|_| {
                let chars = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789._~-";
                chars[rng.random_range(0..chars.len())] as char
            })
            .collect();
        parts.insert(part);
    }

    for part in &parts {
        let resolution = pids
            .resolve(&format!("20.500.0001/LAGO-DATA/{part}"))
            .unwrap_or_else(|e| panic!("part {part:?}: {e}"));
        assert!(resolution.derived, "part {part:?} must be derived");
        assert_eq!(
            resolution.values[0].data,
            format!("https://node.example/d/{part}")
        );
    }
    assert_eq!(pids.len(), 1, "registry size must stay exactly 1");

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 10, "took {elapsed:?}, budget 10 s");
    println!("acceptance 4 (10000 part identifiers, one registration): PASS in {elapsed:?}");
}

#[test]
fn acceptance_5_deposit_atomicity() {
    let started = Instant::now();
    let net = TestNet::new(&["nodeA"], false);
    let node = net.node("nodeA");

    // a valid package for the mutation-stage failure classes
    let pkg_dir = tempfile::tempdir().unwrap();
    let pkg = pkg_dir.path().join("item_0000");
    lago_core::ingest::saf::write_saf_package(
        &pkg,
        &sample_record(7),
        &[("payload.dat".to_string(), sample_bytes(7, 99))],
    )
    .unwrap();
    let good_zip = lago_core::ingest::saf::zip_saf_dir(&pkg).unwrap();

    // a structurally valid zip with a broken SAF layout
    let bad_layout_dir = pkg_dir.path().join("bad_layout");
    std::fs::create_dir_all(&bad_layout_dir).unwrap();
    std::fs::write(bad_layout_dir.join("stray.bin"), b"no control files").unwrap();
    let bad_layout_zip = lago_core::ingest::saf::zip_saf_dir(&bad_layout_dir).unwrap();

    // a package whose metadata misses every required field
    let invalid_meta_pkg = pkg_dir.path().join("invalid_meta");
    let mut bad_record = MetadataRecord::new();
    bad_record.add("description", None, "no required fields").unwrap();
    lago_core::ingest::saf::write_saf_package(&invalid_meta_pkg, &bad_record, &[]).unwrap();
    let invalid_meta_zip = lago_core::ingest::saf::zip_saf_dir(&invalid_meta_pkg).unwrap();

    let deposit = |body: Vec<u8>, md5: Option<&str>, fault: bool| -> u16 {
        if fault {
            node.store().fail_next_commit();
        }
        let mut headers = vec![
            ("Authorization".to_string(), "Bearer token-nodeA".to_string()),
            ("Content-Type".to_string(), "application/zip".to_string()),
            ("X-Packaging".to_string(), "lago-saf-zip".to_string()),
        ];
        if let Some(md5) = md5 {
            headers.push(("Content-MD5".to_string(), md5.to_string()));
        }
        node.handle(Request {
            method: Method::Post,
            path: "/sword/deposit/data".to_string(),
            query: String::new(),
            headers,
            body,
        })
        .status
    };

    let snapshot = || {
        (
            node.store().catalog_size(),
            node.store().blob_count(),
            node.pids().len(),
        )
    };

    type FailureClass<'a> = (&'a str, Vec<u8>, Option<&'a str>, bool, u16);
    let failure_classes: Vec<FailureClass> = vec![
        ("bad zip", b"this is not a zip archive".to_vec(), None, false, 400),
        ("bad SAF layout", bad_layout_zip, None, false, 400),
        ("metadata invalid", invalid_meta_zip, None, false, 422),
        (
            "checksum mismatch",
            good_zip.clone(),
            Some("00000000000000000000000000000000"),
            false,
            412,
        ),
        ("storage fault", good_zip.clone(), None, true, 500),
    ];

    for (name, body, md5, fault, expected_status) in failure_classes {
        let before = snapshot();
        let status = deposit(body, md5, fault);
        assert_eq!(status, expected_status, "failure class {name:?}");
        let after = snapshot();
        assert_eq!(
            before, after,
            "failure class {name:?} must leave catalog, blobs and PIDs bit-identical"
        );
    }

    // the fixture is not vacuous: the same good package deposits cleanly
    let before = snapshot();
    assert_eq!(deposit(good_zip, None, false), 201);
    assert_eq!(snapshot(), (before.0 + 1, before.1 + 1, before.2 + 1));

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 10, "took {elapsed:?}, budget 10 s");
    println!("acceptance 5 (deposit atomicity, 5 failure classes): PASS in {elapsed:?}");
}

#[test]
fn acceptance_6_round_trip_law() {
    let started = Instant::now();
    let net = TestNet::new(&["nodeA"], false);
    let work = tempfile::tempdir().unwrap();
    let mut rng = StdRng::seed_from_u64(0x0a11_0f17);

    // 20 random items with random small files (sizes 0..400, so the
    // empty-file edge case appears too)
    let mut manifest = String::from(
        "sourcePath,title,dateIssued,type,site,detector,rcut,altitude,extra\n",
    );
    for i in 0..20 {
        let dir = work.path().join(format!("src{i:02}"));
        std::fs::create_dir_all(&dir).unwrap();
        let file_count = rng.random_range(1..4);
        for f in 0..file_count {
            let len = if i == 0 && f == 0 {
                0
            } else {
                rng.random_range(1..400)
            };
            std::fs::write(
                dir.join(format!("f{f}.dat")),
                sample_bytes(i as u64 * 31 + f as u64, len),
            )
            .unwrap();
        }
        manifest.push_str(&format!(
            "src{i:02},Random item {i:02} #{},2016-02-{:02},{},site-{},det-{},{:.1},{}{}\n",
            rng.random_range(0..1_000_000),
            (i % 28) + 1,
            ["raw", "analysis", "simulation"][i % 3],
            i % 5,
            i % 4,
            rng.random_range(0.0..30.0),
            rng.random_range(-100..7000),
            if i % 2 == 0 { ",creator=LAGO Collaboration" } else { "," },
        ));
    }
    let manifest_path = work.path().join("manifest.csv");
    std::fs::write(&manifest_path, manifest).unwrap();

    let scan = scan_manifest(&manifest_path, &LagoProfile::default_profile()).unwrap();
    assert_eq!(scan.descriptors.len(), 20, "{:?}", scan.row_errors);

    let saf_dir = work.path().join("saf");
    build_saf(&scan.descriptors, &saf_dir).unwrap();

    let report = bulk_deposit(
        net.transport.as_ref(),
        net.clock.as_ref(),
        &saf_dir,
        &BulkDepositOptions {
            endpoint: "http://nodeA".to_string(),
            collection: "data".to_string(),
            token: "token-nodeA".to_string(),
            parallelism: 4,
        },
    )
    .unwrap();
    assert_eq!(report.succeeded, 20);

    let export_dir = work.path().join("export");
    let export = bulk_export(
        net.transport.as_ref(),
        net.clock.as_ref(),
        &BulkExportOptions {
            endpoint: "http://nodeA".to_string(),
            set: None,
            from: None,
        },
        &export_dir,
    )
    .unwrap();
    assert_eq!(export.succeeded, 20);
    assert_eq!(export.failed, 0);

    let mut matched = 0;
    for entry in std::fs::read_dir(&export_dir).unwrap() {
        let dir = entry.unwrap().path();
        if !dir.is_dir() {
            continue;
        }
        let package = lago_core::ingest::saf::read_saf_dir(&dir).unwrap();

        // exactly one identifier.uri was added
        let pids = package.record.values_of("identifier", Some("uri"));
        assert_eq!(pids.len(), 1);
        assert!(pids[0].starts_with("hdl:20.500.0001/"));

        // modulo that field, the lago metadata equals the original
        let mut stripped = MetadataRecord::new();
        for field in package.record.fields() {
            if !(field.element() == "identifier" && field.qualifier() == Some("uri")) {
                stripped.push(field.clone());
            }
        }
        let original = scan
            .descriptors
            .iter()
            .find(|d| d.record.first_value("title", None) == stripped.first_value("title", None))
            .expect("every export matches an original");
        assert_eq!(stripped.canonicalize(), original.record.canonicalize());

        // data files byte-identical
        assert_eq!(package.files.len(), original.files.len());
        for source in &original.files {
            let exported = std::fs::read(dir.join(&source.name)).unwrap();
            let original_bytes = std::fs::read(&source.path).unwrap();
            assert_eq!(exported, original_bytes, "file {}", source.name);
        }
        matched += 1;
    }
    assert_eq!(matched, 20);

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 30, "took {elapsed:?}, budget 30 s");
    println!("acceptance 6 (round-trip law, 20 random items): PASS in {elapsed:?}");
}

#[test]
fn acceptance_7_federation_convergence() {
    let started = Instant::now();
    let names = ["nodeA", "nodeB", "nodeC", "nodeD", "nodeE"];
    let net = TestNet::new(&names, true);
    for name in &names {
        net.seed_items(name, 50);
    }

    // scheduler rounds: every node harvests every peer once per round
    let mut converged_at = None;
    for round in 1..=3 {
        net.sync_round();
        if names
            .iter()
            .all(|n| net.node(n).store().catalog_size() == 250)
        {
            converged_at = Some(round);
            break;
        }
    }
    let converged_at = converged_at.expect("must converge within 3 rounds");
    for name in &names {
        assert_eq!(
            net.node(name).store().catalog_size(),
            250,
            "{name}: 50 local + 200 mirrored"
        );
    }

    // digests before the extra round, to prove it is a no-op
    let digests_before: Vec<String> = names
        .iter()
        .map(|n| net.node(n).store().catalog_digest())
        .collect();

    // a further round reports received=0 on every edge
    let reports = net.sync_round();
    assert_eq!(reports.len(), 20, "5 nodes x 4 peers");
    for report in &reports {
        assert_eq!(
            report.received, 0,
            "edge to {} saw changes after convergence",
            report.peer_name
        );
        assert!(report.conserved());
    }
    let digests_after: Vec<String> = names
        .iter()
        .map(|n| net.node(n).store().catalog_digest())
        .collect();
    assert_eq!(digests_before, digests_after, "extra round is a no-op");

    // no item is ever mirrored onto its origin node
    for name in &names {
        let node = net.node(name);
        let items = node.store().list_items(None, None, None, 0, 1000).unwrap();
        assert_eq!(items.total, 250);
        for item in &items.items {
            let kind = node.store().collection(&item.collection).unwrap().kind;
            if item.origin.node_name == *name {
                assert_eq!(
                    kind,
                    CollectionKind::Local,
                    "{name}: own item {} sits in a mirror collection",
                    item.uuid
                );
            } else {
                assert_eq!(kind, CollectionKind::Mirror);
            }
        }
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 120, "took {elapsed:?}, budget 120 s");
    println!(
        "acceptance 7 (federation convergence, 5 nodes to 250 items in {converged_at} round(s)): PASS in {elapsed:?}"
    );
}

#[test]
fn acceptance_8_build_saf_determinism() {
    let started = Instant::now();
    let work = tempfile::tempdir().unwrap();

    let mut manifest =
        String::from("sourcePath,title,dateIssued,type,site,detector,rcut,altitude\n");
    for i in 0..6 {
        let file = format!("d{i}.dat");
        std::fs::write(work.path().join(&file), sample_bytes(i, 128)).unwrap();
        manifest.push_str(&format!(
            "{file},Det {i},2016-01-01,raw,site,det-{i},1.{i},100\n"
        ));
    }
    let manifest_path = work.path().join("manifest.csv");
    std::fs::write(&manifest_path, manifest).unwrap();
    let scan = scan_manifest(&manifest_path, &LagoProfile::default_profile()).unwrap();

    let run_a = work.path().join("a");
    let run_b = work.path().join("b");
    build_saf(&scan.descriptors, &run_a).unwrap();
    build_saf(&scan.descriptors, &run_b).unwrap();

    assert_eq!(
        tree_digest(&run_a),
        tree_digest(&run_b),
        "two runs over identical input must be byte-identical"
    );

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 5, "took {elapsed:?}, budget 5 s");
    println!("acceptance 8 (build_saf determinism, tree-hash equality): PASS in {elapsed:?}");
}

/// Recursive digest over relative paths and file bytes.
fn tree_digest(root: &std::path::Path) -> String {
    let mut entries = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                let digest = lago_core::store::md5_hex(&std::fs::read(&path).unwrap());
                entries.push(format!("{rel}:{digest}"));
            }
        }
    }
    entries.sort();
    lago_core::store::md5_hex(entries.join("\n").as_bytes())
}
