//! Multi-node federation behaviour over the in-process network.

mod common;

use std::sync::Arc;
use std::time::Duration;

use common::{peer, sample_record, tick_while, TestNet};
use lago_core::clock::Shutdown;
use lago_core::federation::{run_scheduler, SyncContext, SyncStateStore};
use lago_core::store::{CollectionKind, NewFile};
use lago_core::wire::Request;

#[test]
fn first_sync_mirrors_everything_second_sync_is_empty() {
    let net = TestNet::new(&["nodeA", "nodeB"], true);
    net.seed_items("nodeB", 50);

    let node_a = net.node("nodeA");
    let report = node_a.sync_peer(&peer("nodeB")).unwrap();
    assert_eq!(report.received, 50);
    assert_eq!(report.created, 50);
    assert!(report.conserved());
    assert_eq!(node_a.store().catalog_size(), 50);

    let again = node_a.sync_peer(&peer("nodeB")).unwrap();
    assert_eq!(again.received, 0, "immediate re-sync sees no changes");
    assert_eq!(node_a.store().catalog_size(), 50);

    // mirrored items live in the peer's mirror collection
    let collection = node_a.store().collection("nodeB").unwrap();
    assert_eq!(collection.kind, CollectionKind::Mirror);
    assert_eq!(collection.mirror_of.as_deref(), Some("nodeB"));
}

#[test]
fn peer_base_urls_with_trailing_slashes_work() {
    let net = TestNet::new(&["nodeA", "nodeB"], false);
    net.seed_items("nodeB", 3);
    let mut slashed = peer("nodeB");
    slashed.base_url = "http://nodeB/".to_string();
    let report = net.node("nodeA").sync_peer(&slashed).unwrap();
    assert_eq!(report.created, 3);
}

#[test]
fn own_items_echoed_back_are_skipped_as_foreign() {
    let net = TestNet::new(&["nodeA", "nodeB"], true);
    net.seed_items("nodeA", 3);

    // nodeB mirrors nodeA's items
    let report = net.node("nodeB").sync_peer(&peer("nodeA")).unwrap();
    assert_eq!(report.created, 3);

    // force nodeA to read nodeB's mirror set: configure the peer with
    // that set explicitly — every record originated here
    let mut echo_peer = peer("nodeB");
    echo_peer.sets = Some(vec!["mirror:nodeA".to_string()]);
    let report = net.node("nodeA").sync_peer(&echo_peer).unwrap();
    assert_eq!(report.skipped_foreign, 3);
    assert_eq!(report.created, 0);
    assert_eq!(net.node("nodeA").store().catalog_size(), 3, "no echo copies");
    assert!(report.conserved());
}

#[test]
fn peer_deletions_propagate_as_tombstones() {
    let net = TestNet::new(&["nodeA", "nodeB"], true);
    let items = net.seed_items("nodeB", 5);

    let node_a = net.node("nodeA");
    node_a.sync_peer(&peer("nodeB")).unwrap();
    assert_eq!(node_a.store().catalog_size(), 5);

    for item in items.iter().take(3) {
        net.clock.advance_secs(1);
        net.node("nodeB").store().soft_delete_item(item.uuid).unwrap();
    }
    let report = node_a.sync_peer(&peer("nodeB")).unwrap();
    assert_eq!(report.deleted, 3);
    assert_eq!(report.received, 3);

    let mirrored = node_a
        .store()
        .list_items(None, None, None, 0, 100)
        .unwrap()
        .items;
    let tombstones = mirrored.iter().filter(|i| i.is_deleted()).count();
    assert_eq!(tombstones, 3);
    assert_eq!(node_a.store().catalog_size(), 5, "tombstones stay");
}

#[test]
fn peer_updates_overwrite_mirror_copies() {
    let net = TestNet::new(&["nodeA", "nodeB"], true);
    let items = net.seed_items("nodeB", 2);
    let node_a = net.node("nodeA");
    node_a.sync_peer(&peer("nodeB")).unwrap();

    net.clock.advance_secs(1);
    let mut revised = sample_record(0);
    revised.add("description", None, "revised upstream").unwrap();
    net.node("nodeB")
        .store()
        .update_item(items[0].uuid, revised.clone(), net.node("nodeB").profile())
        .unwrap();

    let report = node_a.sync_peer(&peer("nodeB")).unwrap();
    assert_eq!(report.updated, 1);
    let mirrored = node_a
        .store()
        .find_by_origin_identifier(&format!("oai:nodeB:{}", items[0].uuid))
        .unwrap();
    assert_eq!(mirrored.metadata, revised.canonicalize());
}

#[test]
fn failed_peer_does_not_advance_checkpoint() {
    let net = TestNet::new(&["nodeA"], false);
    let node_a = net.node("nodeA");
    let err = tick_while(&net.clock, || node_a.sync_peer(&peer("ghost"))).unwrap_err();
    assert!(err.to_string().contains("transport"));
    let state = node_a.sync_state().get("ghost");
    assert_eq!(state.consecutive_failures, 1);
    assert!(state.last_checkpoint.is_none());
    assert!(!state.last_result.unwrap().ok);
}

#[test]
fn misidentified_peer_is_refused() {
    let net = TestNet::new(&["nodeA", "nodeB"], false);
    // config says the peer at nodeB's URL is called "nodeC"
    let mut wrong = peer("nodeB");
    wrong.peer_name = "nodeC".to_string();
    let err = net.node("nodeA").sync_peer(&wrong).unwrap_err();
    assert!(err.to_string().contains("identifies as"), "{err}");
}

#[test]
fn content_mirroring_copies_blobs_when_enabled() {
    let net = TestNet::new(&["nodeA", "nodeB"], true);
    let node_b = net.node("nodeB");
    net.clock.advance_secs(1);
    node_b
        .store()
        .create_item(
            "data",
            sample_record(0),
            vec![NewFile::new("payload.dat", b"mirror me".to_vec())],
            node_b.profile(),
        )
        .unwrap();

    let node_a = net.node("nodeA");
    // metadata-only by default
    node_a.sync_peer(&peer("nodeB")).unwrap();
    assert_eq!(node_a.store().blob_count(), 0);
    let mirrored = node_a.store().list_items(None, None, None, 0, 10).unwrap().items;
    assert_eq!(mirrored[0].bitstreams.len(), 1, "refs are kept either way");

    // with mirrorContent on, a fresh node pulls the bytes too
    let net2 = TestNet::new(&["nodeC"], false);
    let routed = node_b.clone();
    net2.transport
        .register("http://nodeB", move |req| routed.handle(req));
    let mut content_peer = peer("nodeB");
    content_peer.mirror_content = true;
    let report = net2.node("nodeC").sync_peer(&content_peer).unwrap();
    assert_eq!(report.created, 1);
    assert_eq!(net2.node("nodeC").store().blob_count(), 1);
    let mirrored = net2
        .node("nodeC")
        .store()
        .list_items(None, None, None, 0, 10)
        .unwrap()
        .items;
    let bytes = net2
        .node("nodeC")
        .store()
        .open_bitstream(&mirrored[0].bitstreams[0].storage_key)
        .unwrap();
    assert_eq!(bytes, b"mirror me");
}

#[test]
fn scheduler_syncs_each_peer_about_once_per_interval() {
    let net = TestNet::new(&["hub", "left", "right"], false);
    net.seed_items("left", 2);
    net.seed_items("right", 2);

    let hub = net.node("hub");
    let mut left = peer("left");
    left.interval_seconds = 1;
    let mut right = peer("right");
    right.interval_seconds = 1;

    // count sync runs per peer by watching Identify requests
    let counting = Arc::new(CountingTransport {
        inner: net.transport.clone(),
        identifies: std::sync::Mutex::new(std::collections::BTreeMap::new()),
    });

    let ctx = Arc::new(
        SyncContext::new(
            hub.store_arc(),
            counting.clone(),
            net.clock.clone(),
            "hub",
            false,
            vec![left, right],
            Arc::new(SyncStateStore::in_memory()),
            None,
        )
        .unwrap(),
    );

    let shutdown = Shutdown::new();
    let scheduler_ctx = ctx.clone();
    let scheduler_shutdown = shutdown.clone();
    let handle = std::thread::spawn(move || {
        run_scheduler(&scheduler_ctx, &scheduler_shutdown);
    });

    // drive 5 fake seconds in small steps so jittered deadlines hit
    for _ in 0..50 {
        std::thread::sleep(Duration::from_millis(8));
        net.clock.advance(Duration::from_millis(100));
    }
    shutdown.signal();
    handle.join().unwrap();

    let counts = counting.identifies.lock().unwrap().clone();
    for name in ["left", "right"] {
        let state = ctx.state.get(name);
        let outcome = state.last_result.expect("peer was synced");
        assert!(outcome.ok);
        assert_eq!(state.consecutive_failures, 0);
        let syncs = counts.get(&format!("http://{name}")).copied().unwrap_or(0);
        assert!(
            (4..=6).contains(&syncs),
            "{name}: {syncs} syncs in 5 s at a 1 s interval"
        );
    }
    assert_eq!(hub.store().catalog_size(), 4);
}

struct CountingTransport {
    inner: Arc<lago_core::wire::InProcessTransport>,
    identifies: std::sync::Mutex<std::collections::BTreeMap<String, usize>>,
}

impl lago_core::wire::Transport for CountingTransport {
    fn execute(
        &self,
        req: &lago_core::wire::OutboundRequest,
    ) -> Result<lago_core::wire::Response, lago_core::wire::TransportError> {
        if req.url.contains("verb=Identify") {
            let base = req.url.split("/oai").next().unwrap_or("").to_string();
            *self.identifies.lock().unwrap().entry(base).or_insert(0) += 1;
        }
        self.inner.execute(req)
    }
}

/// Wraps a transport and cuts the line after a fixed number of calls.
struct FlakyTransport {
    inner: Arc<lago_core::wire::InProcessTransport>,
    calls: std::sync::atomic::AtomicUsize,
    fail_after: usize,
}

impl lago_core::wire::Transport for FlakyTransport {
    fn execute(
        &self,
        req: &lago_core::wire::OutboundRequest,
    ) -> Result<lago_core::wire::Response, lago_core::wire::TransportError> {
        let n = self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        if n >= self.fail_after {
            return Err(lago_core::wire::TransportError::Unreachable {
                url: req.url.clone(),
                detail: "injected line cut".to_string(),
            });
        }
        self.inner.execute(req)
    }
}

#[test]
fn interrupted_syncs_converge_to_the_uninterrupted_catalog() {
    use lago_core::federation::{sync_once, SyncEnv, SyncStateStore};
    use lago_core::store::Store;

    let net = TestNet::new(&["source"], false);
    // 250 items = 3 ListRecords pages, so cuts land before, between and
    // inside the record stream (requests: Identify, ListSets, pages...)
    net.seed_items("source", 250);

    // reference: one uninterrupted sync
    let reference_dir = tempfile::tempdir().unwrap();
    let reference = Store::open(reference_dir.path(), "mirror", net.clock.clone()).unwrap();
    let state = SyncStateStore::in_memory();
    sync_once(
        &SyncEnv {
            store: &reference,
            transport: net.transport.as_ref(),
            clock: net.clock.as_ref(),
            node_name: "mirror",
            transitive: false,
        },
        &peer("source"),
        &state,
    )
    .unwrap();
    let reference_digest = reference.catalog_digest();

    // cut the line at several points; a retry run must land on the
    // same catalog
    for fail_after in [1, 2, 3, 4] {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path(), "mirror", net.clock.clone()).unwrap();
        let state = SyncStateStore::in_memory();
        let flaky = FlakyTransport {
            inner: net.transport.clone(),
            calls: std::sync::atomic::AtomicUsize::new(0),
            fail_after,
        };
        let interrupted = tick_while(&net.clock, || {
            sync_once(
                &SyncEnv {
                    store: &store,
                    transport: &flaky,
                    clock: net.clock.as_ref(),
                    node_name: "mirror",
                    transitive: false,
                },
                &peer("source"),
                &state,
            )
        });
        assert!(interrupted.is_err(), "fail_after={fail_after} must fail");
        assert!(state.get("source").last_checkpoint.is_none());

        sync_once(
            &SyncEnv {
                store: &store,
                transport: net.transport.as_ref(),
                clock: net.clock.as_ref(),
                node_name: "mirror",
                transitive: false,
            },
            &peer("source"),
            &state,
        )
        .unwrap();
        assert_eq!(
            store.catalog_digest(),
            reference_digest,
            "fail_after={fail_after}: retry must converge to the reference catalog"
        );
    }
}

#[test]
fn sync_events_land_in_the_ops_log() {
    let net = TestNet::new(&["nodeA", "nodeB"], true);
    net.seed_items("nodeB", 2);
    let node_a = net.node("nodeA");
    node_a.sync_peer(&peer("nodeB")).unwrap();

    let ops = std::fs::read_to_string(node_a.config().data_dir.join("ops.log")).unwrap();
    let lines: Vec<&str> = ops.lines().collect();
    assert!(lines.iter().any(|l| l.contains("\"event\":\"sync-start\"")));
    assert!(lines
        .iter()
        .any(|l| l.contains("\"event\":\"sync-finish\"") && l.contains("received=2")));
    for line in lines {
        serde_json::from_str::<serde_json::Value>(line).expect("ops log lines are JSON");
    }
}

#[test]
fn healthz_reflects_sync_state() {
    let net = TestNet::new(&["nodeA", "nodeB"], true);
    net.seed_items("nodeB", 1);
    let node_a = net.node("nodeA");

    let before: serde_json::Value =
        serde_json::from_slice(&node_a.handle(Request::get("/healthz")).body).unwrap();
    assert_eq!(before["peers"][0]["status"], "never-synced");

    node_a.sync_peer(&peer("nodeB")).unwrap();
    let after: serde_json::Value =
        serde_json::from_slice(&node_a.handle(Request::get("/healthz")).body).unwrap();
    assert_eq!(after["peers"][0]["status"], "ok");
    assert_eq!(after["peers"][0]["lastReceived"], 1);
    assert_eq!(after["catalogSize"], 1);
}
