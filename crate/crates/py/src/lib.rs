//! Python bindings for the LAGO repository node.
//!
//! Exposes the main types and operations in-process: metadata records
//! and profile validation, the PID registry with template part
//! identifiers, and a whole node whose HTTP surfaces are driven
//! directly through `Node.request` — no listener required.
//!
//!     from lago_node import Record, Profile, HandleRegistry, PyNode
//!     r = Record()
//!     r.add("title", "Run 42")
//!     print(Profile.default().validate(r))

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use lago_core::clock::SystemClock;
use lago_core::metadata::{
    parse_lago_xml, to_lago_xml, to_oai_dc_xml, LagoProfile, MetadataField, MetadataRecord,
};
use lago_core::node::Node;
use lago_core::pid::{HandleRegistry as CoreRegistry, NewHandleValue};
use lago_core::wire::{HttpTransport, Method, Request};

/// (index, type, data) triples as returned to Python.
type ValueTriples = Vec<(u32, String, String)>;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// An ordered Dublin Core + LAGO profile metadata record.
#[pyclass(from_py_object)]
#[derive(Clone)]
struct Record {
    inner: MetadataRecord,
}

#[pymethods]
impl Record {
    #[new]
    fn new() -> Record {
        Record {
            inner: MetadataRecord::new(),
        }
    }

    /// Append a field. `qualifier` and `lang` are optional.
    #[pyo3(signature = (element, value, qualifier=None, lang=None))]
    fn add(
        &mut self,
        element: &str,
        value: &str,
        qualifier: Option<&str>,
        lang: Option<&str>,
    ) -> PyResult<()> {
        let field = MetadataField::new(element, qualifier, value, lang).map_err(value_err)?;
        self.inner.push(field);
        Ok(())
    }

    /// Fields as (element, qualifier, value, lang) tuples, in order.
    fn fields(&self) -> Vec<(String, Option<String>, String, Option<String>)> {
        self.inner
            .fields()
            .iter()
            .map(|f| {
                (
                    f.element().to_string(),
                    f.qualifier().map(str::to_string),
                    f.value().to_string(),
                    f.language().map(str::to_string),
                )
            })
            .collect()
    }

    /// Deterministically sorted copy.
    fn canonicalize(&self) -> Record {
        Record {
            inner: self.inner.canonicalize(),
        }
    }

    fn to_oai_dc_xml(&self) -> String {
        to_oai_dc_xml(&self.inner)
    }

    fn to_lago_xml(&self) -> String {
        to_lago_xml(&self.inner)
    }

    /// Parse a lago-format document back into a record.
    #[staticmethod]
    fn parse_lago_xml(xml: &str) -> PyResult<Record> {
        Ok(Record {
            inner: parse_lago_xml(xml).map_err(value_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Record({} field(s))", self.inner.len())
    }
}

/// Validation profile: required pairs, vocabularies, numeric ranges.
#[pyclass]
struct Profile {
    inner: LagoProfile,
}

#[pymethods]
impl Profile {
    /// The built-in default site profile.
    #[staticmethod]
    fn default() -> Profile {
        Profile {
            inner: LagoProfile::default_profile(),
        }
    }

    /// Load a profile TOML file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Profile> {
        Ok(Profile {
            inner: LagoProfile::load(&path).map_err(value_err)?,
        })
    }

    /// Validate a record. Returns (ok, [(severity, field, message), ...]).
    fn validate(&self, record: &Record) -> (bool, Vec<(String, String, String)>) {
        let report = lago_core::metadata::validate_record(&record.inner, &self.inner);
        let issues = report
            .issues
            .iter()
            .map(|i| {
                (
                    match i.severity {
                        lago_core::metadata::Severity::Error => "error".to_string(),
                        lago_core::metadata::Severity::Warning => "warning".to_string(),
                    },
                    i.field_path.clone(),
                    i.message.clone(),
                )
            })
            .collect();
        (report.ok, issues)
    }
}

/// Handle-style PID registry with template part identifiers.
#[pyclass]
struct HandleRegistry {
    inner: CoreRegistry,
}

#[pymethods]
impl HandleRegistry {
    /// In-memory registry under `prefix`.
    #[new]
    fn new(prefix: &str) -> HandleRegistry {
        HandleRegistry {
            inner: CoreRegistry::in_memory(prefix, Arc::new(SystemClock)),
        }
    }

    /// Registry persisted under `data_dir/handles.log`.
    #[staticmethod]
    fn open(data_dir: PathBuf, prefix: &str) -> PyResult<HandleRegistry> {
        Ok(HandleRegistry {
            inner: CoreRegistry::open(&data_dir, prefix, Arc::new(SystemClock))
                .map_err(value_err)?,
        })
    }

    /// Mint a handle. `values` is a list of (index, type, data) tuples;
    /// returns the handle text.
    #[pyo3(signature = (values, suffix=None))]
    fn mint(&self, values: Vec<(u32, String, String)>, suffix: Option<&str>) -> PyResult<String> {
        let values = values
            .into_iter()
            .map(|(index, value_type, data)| NewHandleValue {
                index,
                value_type,
                data,
            })
            .collect();
        let handle = self.inner.mint(suffix, values).map_err(value_err)?;
        Ok(handle.text())
    }

    /// Resolve handle text. Returns (derived, [(index, type, data), ...]).
    fn resolve(&self, text: &str) -> PyResult<(bool, ValueTriples)> {
        let resolution = self.inner.resolve(text).map_err(value_err)?;
        let values = resolution
            .values
            .into_iter()
            .map(|v| (v.index, v.value_type, v.data))
            .collect();
        Ok((resolution.derived, values))
    }

    fn update(&self, text: &str, values: Vec<(u32, String, String)>) -> PyResult<()> {
        let values = values
            .into_iter()
            .map(|(index, value_type, data)| NewHandleValue {
                index,
                value_type,
                data,
            })
            .collect();
        self.inner.update(text, values).map_err(value_err)?;
        Ok(())
    }

    fn remove(&self, text: &str) -> PyResult<()> {
        self.inner.remove(text).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// A whole repository node driven in-process.
#[pyclass]
struct PyNode {
    inner: Arc<Node>,
}

#[pymethods]
impl PyNode {
    /// Create or reopen a node on `data_dir`.
    #[new]
    #[pyo3(signature = (data_dir, name="pynode", deposit_token="sekrit", pid_prefix="20.500.0001"))]
    fn new(
        data_dir: PathBuf,
        name: &str,
        deposit_token: &str,
        pid_prefix: &str,
    ) -> PyResult<PyNode> {
        let text = format!(
            "nodeName = {name:?}\nhttpBind = \"127.0.0.1:0\"\npidPrefix = {pid_prefix:?}\n\
             depositToken = {deposit_token:?}\ndataDir = {:?}\npublicBaseUrl = \"http://{name}\"\n",
            data_dir.display().to_string(),
        );
        let config = toml::from_str(&text).map_err(value_err)?;
        let node = Node::open(
            config,
            Arc::new(SystemClock),
            Arc::new(HttpTransport::default()),
        )
        .map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(PyNode { inner: node })
    }

    /// Drive any HTTP surface directly. Returns (status, body_bytes).
    #[pyo3(signature = (method, path, query=None, body=None, headers=None))]
    fn request<'py>(
        &self,
        py: Python<'py>,
        method: &str,
        path: &str,
        query: Option<&str>,
        body: Option<&[u8]>,
        headers: Option<Vec<(String, String)>>,
    ) -> (u16, Bound<'py, PyBytes>) {
        let response = self.inner.handle(Request {
            method: Method::parse(method),
            path: path.to_string(),
            query: query.unwrap_or("").to_string(),
            headers: headers.unwrap_or_default(),
            body: body.map(|b| b.to_vec()).unwrap_or_default(),
        });
        (response.status, PyBytes::new(py, &response.body))
    }

    /// Run one OAI-PMH request; returns the response XML.
    fn oai(&self, params: Vec<(String, String)>) -> String {
        let query = lago_core::wire::encode_query(&params);
        let response = self.inner.handle(Request {
            method: Method::Get,
            path: "/oai".to_string(),
            query,
            headers: Vec::new(),
            body: Vec::new(),
        });
        String::from_utf8_lossy(&response.body).into_owned()
    }

    /// Catalog a local item. Returns its OAI identifier.
    #[pyo3(signature = (record, files=None, collection="data"))]
    fn create_item(
        &self,
        record: &Record,
        files: Option<Vec<(String, Vec<u8>)>>,
        collection: &str,
    ) -> PyResult<String> {
        let files = files
            .unwrap_or_default()
            .into_iter()
            .map(|(name, bytes)| lago_core::store::NewFile::new(&name, bytes))
            .collect();
        let item = self
            .inner
            .store()
            .create_item(collection, record.inner.clone(), files, self.inner.profile())
            .map_err(value_err)?;
        Ok(format!(
            "oai:{}:{}",
            self.inner.config().node_name,
            item.uuid
        ))
    }

    fn catalog_size(&self) -> usize {
        self.inner.store().catalog_size()
    }

    fn healthz(&self) -> String {
        self.inner.healthz_json()
    }

    /// The node's deposit token (handy for driving `request`).
    fn deposit_token(&self) -> String {
        self.inner.config().deposit_token.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "PyNode(name={:?}, items={})",
            self.inner.config().node_name,
            self.inner.store().catalog_size()
        )
    }
}

#[pymodule]
fn lago_node(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Record>()?;
    m.add_class::<Profile>()?;
    m.add_class::<HandleRegistry>()?;
    m.add_class::<PyNode>()?;
    Ok(())
}
