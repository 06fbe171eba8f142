//! Shared fixtures: an in-process network of nodes wired through
//! `InProcessTransport`, all sharing one fake clock.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use lago_core::clock::FakeClock;
use lago_core::federation::{NodeConfig, PeerConfig, SyncReport};
use lago_core::metadata::MetadataRecord;
use lago_core::node::Node;
use lago_core::store::{Item, NewFile};
use lago_core::wire::InProcessTransport;

pub struct TestNet {
    pub clock: Arc<FakeClock>,
    pub transport: Arc<InProcessTransport>,
    pub nodes: BTreeMap<String, Arc<Node>>,
    _dirs: Vec<tempfile::TempDir>,
}

pub fn net_config(
    name: &str,
    data_dir: &std::path::Path,
    peers: Vec<PeerConfig>,
) -> NodeConfig {
    let text = format!(
        r#"
nodeName = "{name}"
httpBind = "127.0.0.1:0"
pidPrefix = "20.500.0001"
depositToken = "token-{name}"
dataDir = "{}"
publicBaseUrl = "http://{name}"
"#,
        data_dir.display()
    );
    let mut config: NodeConfig = toml::from_str(&text).expect("config parses");
    config.peers = peers;
    config
}

impl TestNet {
    /// Build `names.len()` nodes; with `complete_graph` every node peers
    /// with every other.
    pub fn new(names: &[&str], complete_graph: bool) -> TestNet {
        let clock = Arc::new(FakeClock::at_2020());
        let transport = Arc::new(InProcessTransport::new());
        let mut nodes = BTreeMap::new();
        let mut dirs = Vec::new();
        for name in names {
            let dir = tempfile::tempdir().unwrap();
            let peers = if complete_graph {
                names
                    .iter()
                    .filter(|p| *p != name)
                    .map(|p| peer(p))
                    .collect()
            } else {
                Vec::new()
            };
            let config = net_config(name, dir.path(), peers);
            let node = Node::open(config, clock.clone(), transport.clone()).unwrap();
            let routed = node.clone();
            transport.register(&format!("http://{name}"), move |req| routed.handle(req));
            nodes.insert(name.to_string(), node);
            dirs.push(dir);
        }
        TestNet {
            clock,
            transport,
            nodes,
            _dirs: dirs,
        }
    }

    pub fn node(&self, name: &str) -> &Arc<Node> {
        &self.nodes[name]
    }

    /// Create `n` metadata-only items on a node, one fake second apart.
    pub fn seed_items(&self, name: &str, n: usize) -> Vec<Item> {
        let node = self.node(name);
        (0..n)
            .map(|i| {
                self.clock.advance_secs(1);
                node.store()
                    .create_item("data", sample_record(i), Vec::new(), node.profile())
                    .unwrap()
            })
            .collect()
    }

    /// One full sync round: every node harvests every one of its peers.
    /// Returns all reports.
    pub fn sync_round(&self) -> Vec<SyncReport> {
        let mut reports = Vec::new();
        for node in self.nodes.values() {
            for peer in node.config().peers.clone() {
                reports.push(node.sync_peer(&peer).expect("sync must succeed"));
            }
        }
        reports
    }
}

pub fn peer(name: &str) -> PeerConfig {
    let text = format!("peerName = \"{name}\"\nbaseUrl = \"http://{name}\"\n");
    toml::from_str(&text).expect("peer config parses")
}

/// A conforming record with fields varied by `i`.
pub fn sample_record(i: usize) -> MetadataRecord {
    let mut r = MetadataRecord::new();
    r.add("title", None, &format!("Run {i:04}")).unwrap();
    r.add("date", Some("issued"), "2016-03-01").unwrap();
    r.add(
        "type",
        None,
        ["raw", "analysis", "simulation"][i % 3],
    )
    .unwrap();
    r.add("coverage", Some("site"), "chacaltaya").unwrap();
    r.add("lago", Some("detector"), &format!("wcd-{:02}", i % 7)).unwrap();
    r.add("lago", Some("rcut"), &format!("{:.1}", (i % 280) as f64 / 10.0)).unwrap();
    r.add("lago", Some("altitude"), "5240").unwrap();
    r
}

/// Run `f` while a helper thread keeps advancing the fake clock, so
/// retry backoff sleeps inside `f` complete instead of blocking forever.
pub fn tick_while<T>(clock: &Arc<FakeClock>, f: impl FnOnce() -> T) -> T {
    let ticker = clock.clone();
    let done = Arc::new(std::sync::atomic::AtomicBool::new(false));
    let done2 = done.clone();
    let handle = std::thread::spawn(move || {
        while !done2.load(std::sync::atomic::Ordering::SeqCst) {
            ticker.advance(std::time::Duration::from_millis(500));
            std::thread::sleep(std::time::Duration::from_millis(1));
        }
    });
    let result = f();
    done.store(true, std::sync::atomic::Ordering::SeqCst);
    handle.join().unwrap();
    result
}

/// Deterministic pseudo-random file bytes.
pub fn sample_bytes(seed: u64, len: usize) -> Vec<u8> {
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
    (0..len)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state & 0xFF) as u8
        })
        .collect()
}

/// A record fully populated from the given file list, ready to deposit.
pub fn files_as_new(files: &[(String, Vec<u8>)]) -> Vec<NewFile> {
    files
        .iter()
        .map(|(name, bytes)| NewFile::new(name, bytes.clone()))
        .collect()
}
