//! One repository node: store, PID registry, profile, and all HTTP
//! surfaces behind a single router, plus the peer-sync scheduler.
//!
//! Surfaces:
//! - `GET|POST /oai` — OAI-PMH 2.0 data provider
//! - `GET /sword/servicedocument`, `POST /sword/deposit/<collection>`
//! - `POST|GET|PUT|DELETE /pid/handles/...`
//! - `GET /items/<uuid>/bitstreams/<name>` — content with `Content-MD5`
//! - `GET /healthz` — node name, catalog size, per-peer sync status
//!
//! [`Node::handle`] is a pure request→response function over the node's
//! state, so tests and the in-process federation drive it directly;
//! [`Node::serve`] exposes it over tiny_http with a worker pool.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use uuid::Uuid;

use crate::clock::{Clock, Shutdown};
use crate::federation::{NodeConfig, PeerConfig, SyncContext, SyncReport, SyncStateStore};
use crate::metadata::LagoProfile;
use crate::oaipmh::{Provider, ProviderConfig};
use crate::pid::HandleRegistry;
use crate::store::{md5_hex, CollectionKind, Store, StoreError};
use crate::sword::{render_error_xml, render_receipt_xml, render_service_document_xml};
use crate::sword::DepositContext;
use crate::wire::{Method, Request, Response, Transport};

#[derive(Debug, thiserror::Error)]
pub enum NodeError {
    #[error(transparent)]
    Config(#[from] crate::federation::ConfigError),
    #[error("store: {0}")]
    Store(#[from] StoreError),
    #[error("pid registry: {0}")]
    Pid(#[from] crate::pid::PidError),
    #[error("profile: {0}")]
    Profile(#[from] crate::metadata::ProfileError),
    #[error("cannot bind {addr}: {detail}")]
    Bind { addr: String, detail: String },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub struct Node {
    config: NodeConfig,
    base_url: String,
    store: Arc<Store>,
    pids: HandleRegistry,
    profile: LagoProfile,
    provider_cfg: ProviderConfig,
    clock: Arc<dyn Clock>,
    transport: Arc<dyn Transport>,
    sync_state: Arc<SyncStateStore>,
}

impl Node {
    /// Open (or create) a node on its data directory and bootstrap the
    /// configured collections.
    pub fn open(
        config: NodeConfig,
        clock: Arc<dyn Clock>,
        transport: Arc<dyn Transport>,
    ) -> Result<Arc<Node>, NodeError> {
        config.validate()?;
        std::fs::create_dir_all(&config.data_dir)?;
        let store = Arc::new(Store::open(
            &config.data_dir,
            &config.node_name,
            clock.clone(),
        )?);
        let pids = HandleRegistry::open(&config.data_dir, &config.pid_prefix, clock.clone())?;
        let profile = match &config.profile {
            Some(path) => LagoProfile::load(path)?,
            None => LagoProfile::default_profile(),
        };
        let sync_state = Arc::new(SyncStateStore::open(&config.data_dir)?);

        if store.communities().is_empty() {
            store.create_community("lago", "LAGO")?;
        }
        for bootstrap in &config.collections {
            if store.collection(&bootstrap.id).is_none() {
                store.create_collection(
                    &bootstrap.id,
                    &bootstrap.name,
                    "lago",
                    CollectionKind::Local,
                    None,
                )?;
            }
        }

        let base_url = config.base_url();
        let mut provider_cfg = ProviderConfig::new(
            &config.node_name,
            &format!("{base_url}/oai"),
            config.page_size,
        );
        if let Some(email) = &config.admin_email {
            provider_cfg.admin_email = email.clone();
        }
        // stable across restarts, different per node and token
        provider_cfg.token_secret = format!(
            "lago-token:{}:{}",
            config.node_name,
            md5_hex(config.deposit_token.as_bytes())
        );

        Ok(Arc::new(Node {
            base_url,
            config,
            store,
            pids,
            profile,
            provider_cfg,
            clock,
            transport,
            sync_state,
        }))
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Shared handle to the store, for embedding in a [`SyncContext`].
    pub fn store_arc(&self) -> Arc<Store> {
        self.store.clone()
    }

    pub fn pids(&self) -> &HandleRegistry {
        &self.pids
    }

    pub fn profile(&self) -> &LagoProfile {
        &self.profile
    }

    pub fn sync_state(&self) -> &SyncStateStore {
        &self.sync_state
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn deposit_ctx(&self) -> DepositContext<'_> {
        DepositContext {
            store: &self.store,
            pids: &self.pids,
            profile: &self.profile,
            node_name: &self.config.node_name,
            base_url: &self.base_url,
            deposit_token: &self.config.deposit_token,
            max_upload_bytes: self.config.max_upload_bytes,
        }
    }

    fn sync_context(&self, ops_log: bool) -> std::io::Result<SyncContext> {
        SyncContext::new(
            self.store.clone(),
            self.transport.clone(),
            self.clock.clone(),
            &self.config.node_name,
            self.config.transitive,
            self.config.peers.clone(),
            self.sync_state.clone(),
            ops_log.then(|| self.config.data_dir.join("ops.log")),
        )
    }

    /// Sync one peer immediately (used by tests and one-shot tooling).
    pub fn sync_peer(
        &self,
        peer: &PeerConfig,
    ) -> Result<SyncReport, crate::federation::SyncError> {
        let ctx = self
            .sync_context(true)
            .map_err(|e| crate::federation::SyncError::Protocol(e.to_string()))?;
        ctx.sync_peer(peer)
    }

    /// Route one request. Never panics; panics in handlers are caught
    /// by the HTTP workers in `serve`.
    pub fn handle(&self, req: Request) -> Response {
        let path = req.path.trim_end_matches('/');
        let segments: Vec<&str> = req.path.split('/').filter(|s| !s.is_empty()).collect();

        match (req.method, path, segments.as_slice()) {
            (Method::Get, "/oai", _) => self.handle_oai(&req.query_pairs()),
            (Method::Post, "/oai", _) => {
                // POST parameter parity: form-encoded body joins the query
                let mut pairs = req.query_pairs();
                pairs.extend(crate::wire::parse_query(&String::from_utf8_lossy(
                    &req.body,
                )));
                self.handle_oai(&pairs)
            }
            (Method::Get, "/healthz", _) => Response::json(200, self.healthz_json()),
            (Method::Get, "/sword/servicedocument", _) => self.handle_service_document(&req),
            (Method::Post, _, ["sword", "deposit", collection]) => {
                self.handle_deposit(&req, collection)
            }
            (_, _, ["pid", "handles", ..]) => {
                let tail = segments[2..].join("/");
                crate::pid::rest::handle_request(
                    &self.pids,
                    &self.config.deposit_token,
                    &req,
                    &tail,
                )
            }
            (Method::Get, _, ["items", uuid, "bitstreams", name @ ..]) if !name.is_empty() => {
                self.handle_bitstream(uuid, &name.join("/"))
            }
            (Method::Get, _, ["items", uuid]) => self.handle_item(uuid),
            _ => Response::not_found("unknown path"),
        }
    }

    fn handle_oai(&self, pairs: &[(String, String)]) -> Response {
        let provider = Provider::new(&self.store, &self.provider_cfg, self.clock.as_ref());
        Response::xml(200, provider.handle_to_xml(pairs))
    }

    fn handle_service_document(&self, req: &Request) -> Response {
        match self.deposit_ctx().service_document(bearer_token(req)) {
            Ok(doc) => Response::xml(
                200,
                render_service_document_xml(&doc, &self.config.node_name),
            ),
            Err(e) => Response::xml(e.http_status(), render_error_xml(&e)),
        }
    }

    fn handle_deposit(&self, req: &Request, collection: &str) -> Response {
        let result = self.deposit_ctx().deposit(
            collection,
            req.header("X-Packaging"),
            req.header("Content-MD5"),
            req.header("Slug"),
            &req.body,
            bearer_token(req),
        );
        match result {
            Ok(receipt) => {
                Response::xml(201, render_receipt_xml(&receipt)).with_header("Location", &receipt.location)
            }
            Err(e) => Response::xml(e.http_status(), render_error_xml(&e)),
        }
    }

    /// JSON view of one item, the target of deposit-receipt locations.
    /// Tombstones still answer (deleted items are reported deleted,
    /// never absent), with metadata and bitstreams withheld.
    fn handle_item(&self, uuid_text: &str) -> Response {
        let uuid = match Uuid::parse_str(uuid_text) {
            Ok(uuid) => uuid,
            Err(_) => return Response::not_found("not a valid item uuid"),
        };
        let item = match self.store.get_item(uuid) {
            Ok(item) => item,
            Err(_) => return Response::not_found("unknown item"),
        };
        let bitstreams: Vec<serde_json::Value> = item
            .bitstreams
            .iter()
            .map(|b| {
                serde_json::json!({
                    "name": b.name,
                    "size": b.size_bytes,
                    "md5": b.md5,
                    "mediaType": b.media_type,
                    "href": format!("{}/items/{}/bitstreams/{}", self.base_url, item.uuid, b.name),
                })
            })
            .collect();
        let metadata: Vec<serde_json::Value> = item
            .metadata
            .fields()
            .iter()
            .map(|f| {
                serde_json::json!({
                    "element": f.element(),
                    "qualifier": f.qualifier(),
                    "value": f.value(),
                    "lang": f.language(),
                })
            })
            .collect();
        Response::json(
            200,
            serde_json::json!({
                "uuid": item.uuid.to_string(),
                "collection": item.collection,
                "datestamp": item.datestamp.to_string(),
                "status": if item.is_deleted() { "deleted" } else { "active" },
                "oaiIdentifier": format!("oai:{}:{}", self.config.node_name, item.uuid),
                "metadata": metadata,
                "bitstreams": bitstreams,
            })
            .to_string(),
        )
    }

    fn handle_bitstream(&self, uuid_text: &str, name: &str) -> Response {
        let uuid = match Uuid::parse_str(uuid_text) {
            Ok(uuid) => uuid,
            Err(_) => return Response::not_found("not a valid item uuid"),
        };
        let item = match self.store.get_item(uuid) {
            Ok(item) => item,
            Err(_) => return Response::not_found("unknown item"),
        };
        if item.is_deleted() {
            return Response::text(410, "item is deleted");
        }
        let Some(bitstream) = item.bitstreams.iter().find(|b| b.name == name) else {
            return Response::not_found("unknown bitstream");
        };
        match self.store.open_bitstream(&bitstream.storage_key) {
            Ok(bytes) => Response {
                status: 200,
                headers: vec![
                    ("Content-Type".to_string(), bitstream.media_type.clone()),
                    ("Content-MD5".to_string(), bitstream.md5.clone()),
                ],
                body: bytes,
            },
            Err(e @ StoreError::Integrity { .. }) => Response::text(500, &e.to_string()),
            Err(StoreError::UnknownBitstream(_)) => {
                Response::not_found("content not stored on this node")
            }
            Err(e) => Response::text(500, &e.to_string()),
        }
    }

    pub fn healthz_json(&self) -> String {
        let peers: Vec<serde_json::Value> = self
            .config
            .peers
            .iter()
            .map(|peer| {
                let state = self.sync_state.get(&peer.peer_name);
                let status = match &state.last_result {
                    None => "never-synced",
                    Some(outcome) if outcome.ok => "ok",
                    Some(_) => "failing",
                };
                serde_json::json!({
                    "peerName": peer.peer_name,
                    "status": status,
                    "lastCheckpoint": state.last_checkpoint.map(|c| c.to_string()),
                    "consecutiveFailures": state.consecutive_failures,
                    "lastError": state.last_result.as_ref().and_then(|o| o.error.clone()),
                    "lastReceived": state
                        .last_result
                        .as_ref()
                        .and_then(|o| o.report.as_ref())
                        .map(|r| r.received),
                })
            })
            .collect();
        serde_json::json!({
            "node": self.config.node_name,
            "catalogSize": self.store.catalog_size(),
            "peers": peers,
        })
        .to_string()
    }

    /// Run the scheduler loops until shutdown. Blocks.
    pub fn run_scheduler(&self, shutdown: &Shutdown) -> std::io::Result<()> {
        let ctx = Arc::new(self.sync_context(true)?);
        crate::federation::run_scheduler(&ctx, shutdown);
        Ok(())
    }

    /// Serve HTTP and run the scheduler until `shutdown` is signalled.
    /// Startup failures (unbindable port) return an error naming the
    /// address; runtime request errors never crash the process.
    pub fn serve(self: &Arc<Self>, shutdown: &Shutdown) -> Result<(), NodeError> {
        let addr = self.config.http_bind.clone();
        let server = tiny_http::Server::http(&addr).map_err(|e| NodeError::Bind {
            addr: addr.clone(),
            detail: e.to_string(),
        })?;
        let server = Arc::new(server);

        std::thread::scope(|scope| {
            let scheduler_node = Arc::clone(self);
            let scheduler_shutdown = shutdown.clone();
            scope.spawn(move || {
                let _ = scheduler_node.run_scheduler(&scheduler_shutdown);
            });

            for _ in 0..4 {
                let node = Arc::clone(self);
                let server = Arc::clone(&server);
                let shutdown = shutdown.clone();
                scope.spawn(move || loop {
                    match server.recv_timeout(std::time::Duration::from_millis(100)) {
                        Ok(Some(http_req)) => node.handle_http(http_req),
                        Ok(None) => {
                            if shutdown.is_signalled() {
                                break;
                            }
                        }
                        Err(_) => {
                            if shutdown.is_signalled() {
                                break;
                            }
                        }
                    }
                });
            }
        });
        Ok(())
    }

    fn handle_http(&self, mut http_req: tiny_http::Request) {
        let method = Method::parse(http_req.method().as_str());
        let url = http_req.url().to_string();
        let (raw_path, raw_query) = match url.split_once('?') {
            Some((p, q)) => (p.to_string(), q.to_string()),
            None => (url, String::new()),
        };
        let headers: Vec<(String, String)> = http_req
            .headers()
            .iter()
            .map(|h| (h.field.to_string(), h.value.to_string()))
            .collect();
        // bound body reads so an oversized upload cannot exhaust memory
        let limit = self.config.max_upload_bytes.saturating_add(1024 * 1024);
        let mut body = Vec::new();
        let _ = std::io::Read::read_to_end(
            &mut std::io::Read::take(http_req.as_reader(), limit + 1),
            &mut body,
        );
        if body.len() as u64 > limit {
            let _ = http_req.respond(
                tiny_http::Response::from_string("request body exceeds the upload limit")
                    .with_status_code(413),
            );
            return;
        }

        let request = Request {
            method,
            path: crate::wire::percent_decode(&raw_path),
            query: raw_query,
            headers,
            body,
        };

        let response = catch_unwind(AssertUnwindSafe(|| self.handle(request)))
            .unwrap_or_else(|_| Response::text(500, "internal error"));

        let mut out = tiny_http::Response::from_data(response.body).with_status_code(response.status);
        for (name, value) in response.headers {
            if let Ok(header) = tiny_http::Header::from_bytes(name.as_bytes(), value.as_bytes()) {
                out.add_header(header);
            }
        }
        let _ = http_req.respond(out);
    }
}

fn bearer_token(req: &Request) -> Option<&str> {
    req.header("Authorization")
        .and_then(|h| h.trim().strip_prefix("Bearer "))
        .map(str::trim)
}

/// Config for a throwaway test node bound to `data_dir`.
pub fn test_config(node_name: &str, data_dir: &std::path::Path) -> NodeConfig {
    let text = format!(
        r#"
nodeName = "{node_name}"
httpBind = "127.0.0.1:0"
pidPrefix = "20.500.0001"
depositToken = "sekrit-{node_name}"
dataDir = "{}"
publicBaseUrl = "http://{node_name}"
"#,
        data_dir.display()
    );
    toml::from_str(&text).expect("test config parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FakeClock;
    use crate::metadata::example_record;
    use crate::wire::InProcessTransport;

    fn test_node() -> (tempfile::TempDir, Arc<Node>, Arc<FakeClock>) {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(FakeClock::at_2020());
        let node = Node::open(
            test_config("nodeA", &dir.path().join("data")),
            clock.clone(),
            Arc::new(InProcessTransport::new()),
        )
        .unwrap();
        (dir, node, clock)
    }

    #[test]
    fn fresh_node_reports_empty_health() {
        let (_dir, node, _clock) = test_node();
        let resp = node.handle(Request::get("/healthz"));
        assert_eq!(resp.status, 200);
        let health: serde_json::Value = serde_json::from_slice(&resp.body).unwrap();
        assert_eq!(health["node"], "nodeA");
        assert_eq!(health["catalogSize"], 0);
        assert_eq!(health["peers"], serde_json::json!([]));
    }

    #[test]
    fn oai_is_served_on_get_and_post() {
        let (_dir, node, _clock) = test_node();
        let get = node.handle(Request::get("/oai?verb=Identify"));
        assert_eq!(get.status, 200);
        assert_eq!(get.header("Content-Type"), Some("text/xml; charset=UTF-8"));
        assert!(get.body_string().contains("<repositoryName>nodeA</repositoryName>"));

        let post = node.handle(Request {
            method: Method::Post,
            path: "/oai".into(),
            query: String::new(),
            headers: vec![(
                "Content-Type".into(),
                "application/x-www-form-urlencoded".into(),
            )],
            body: b"verb=Identify".to_vec(),
        });
        assert_eq!(post.status, 200);
        assert!(post.body_string().contains("<repositoryName>nodeA</repositoryName>"));
    }

    #[test]
    fn bitstream_endpoint_serves_content_with_md5_header() {
        let (_dir, node, _clock) = test_node();
        let item = node
            .store()
            .create_item(
                "data",
                example_record(),
                vec![crate::store::NewFile::new("run.dat", b"payload".to_vec())],
                node.profile(),
            )
            .unwrap();
        let path = format!("/items/{}/bitstreams/run.dat", item.uuid);
        let resp = node.handle(Request::get(&path));
        assert_eq!(resp.status, 200);
        assert_eq!(resp.body, b"payload");
        assert_eq!(
            resp.header("Content-MD5"),
            Some(item.bitstreams[0].md5.as_str())
        );

        let ghost = format!("/items/{}/bitstreams/run.dat", Uuid::new_v4());
        assert_eq!(node.handle(Request::get(&ghost)).status, 404);
        let wrong_name = format!("/items/{}/bitstreams/none.dat", item.uuid);
        assert_eq!(node.handle(Request::get(&wrong_name)).status, 404);

        node.store().soft_delete_item(item.uuid).unwrap();
        assert_eq!(node.handle(Request::get(&path)).status, 410);
    }

    #[test]
    fn unknown_paths_are_404() {
        let (_dir, node, _clock) = test_node();
        assert_eq!(node.handle(Request::get("/")).status, 404);
        assert_eq!(node.handle(Request::get("/favicon.ico")).status, 404);
        assert_eq!(node.handle(Request::get("/items/x")).status, 404);
    }

    #[test]
    fn item_view_serves_active_items_and_tombstones() {
        let (_dir, node, _clock) = test_node();
        let item = node
            .store()
            .create_item(
                "data",
                example_record(),
                vec![crate::store::NewFile::new("run.dat", b"abc".to_vec())],
                node.profile(),
            )
            .unwrap();

        let resp = node.handle(Request::get(&format!("/items/{}", item.uuid)));
        assert_eq!(resp.status, 200);
        let view: serde_json::Value = serde_json::from_slice(&resp.body).unwrap();
        assert_eq!(view["status"], "active");
        assert_eq!(view["bitstreams"][0]["name"], "run.dat");
        assert!(view["bitstreams"][0]["href"]
            .as_str()
            .unwrap()
            .ends_with("/bitstreams/run.dat"));

        node.store().soft_delete_item(item.uuid).unwrap();
        let resp = node.handle(Request::get(&format!("/items/{}", item.uuid)));
        assert_eq!(resp.status, 200, "tombstones are reported deleted, not absent");
        let view: serde_json::Value = serde_json::from_slice(&resp.body).unwrap();
        assert_eq!(view["status"], "deleted");
        assert_eq!(view["metadata"], serde_json::json!([]));

        let ghost = node.handle(Request::get(&format!("/items/{}", Uuid::new_v4())));
        assert_eq!(ghost.status, 404);
    }

    #[test]
    fn after_deposit_health_counts_one() {
        let (_dir, node, _clock) = test_node();
        let pkg_dir = tempfile::tempdir().unwrap();
        let pkg = pkg_dir.path().join("item_0000");
        crate::ingest::saf::write_saf_package(
            &pkg,
            &example_record(),
            &[("run.dat".to_string(), b"xyz".to_vec())],
        )
        .unwrap();
        let zip = crate::ingest::saf::zip_saf_dir(&pkg).unwrap();

        let resp = node.handle(Request {
            method: Method::Post,
            path: "/sword/deposit/data".into(),
            query: String::new(),
            headers: vec![
                ("Authorization".into(), "Bearer sekrit-nodeA".into()),
                ("Content-Type".into(), "application/zip".into()),
                ("X-Packaging".into(), "lago-saf-zip".into()),
            ],
            body: zip,
        });
        assert_eq!(resp.status, 201, "{}", resp.body_string());
        let health: serde_json::Value =
            serde_json::from_slice(&node.handle(Request::get("/healthz")).body).unwrap();
        assert_eq!(health["catalogSize"], 1);
    }

    #[test]
    fn serve_reports_unbindable_port() {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(FakeClock::at_2020());
        let holder = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = holder.local_addr().unwrap().to_string();
        let mut config = test_config("nodeA", &dir.path().join("data"));
        config.http_bind = addr.clone();
        let node = Node::open(config, clock, Arc::new(InProcessTransport::new())).unwrap();
        let err = node.serve(&Shutdown::new()).unwrap_err();
        match err {
            NodeError::Bind { addr: reported, .. } => assert_eq!(reported, addr),
            other => panic!("expected Bind error, got {other}"),
        }
    }
}
