//! Persistent-identifier service: a Handle-style registry with
//! allocation, management, resolution, and template part identifiers.
//!
//! A handle whose value list carries a `TEMPLATE` entry acts as a base:
//! any suffix extension of it resolves on the fly by substituting the
//! extension into the template pattern, so one registration serves an
//! unlimited family of identifiers. Resolution never mutates the
//! registry.
//!
//! The registry here is a local, protocol-faithful emulation of an EPIC
//! style PID service, persisted in the same record-log style as the
//! catalog. [`rest`] exposes it over HTTP.

pub mod rest;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::clock::{Clock, Datestamp};
use crate::jsonlog::{JsonLog, LogError};

/// Value type token marking a template rule.
pub const TEMPLATE_TYPE: &str = "TEMPLATE";
/// The placeholder substituted with the part identifier.
pub const PART_PLACEHOLDER: &str = "{part}";

#[derive(Debug, thiserror::Error)]
pub enum PidError {
    #[error("invalid handle text {0:?}")]
    InvalidHandle(String),
    #[error("invalid suffix {0:?}: segments must match [A-Za-z0-9._~-]+ joined by '/'")]
    InvalidSuffix(String),
    #[error("suffix {0:?} is already registered")]
    SuffixTaken(String),
    #[error("a handle needs at least one value")]
    EmptyValues,
    #[error("invalid handle values: {0}")]
    InvalidValues(String),
    #[error("handle {0:?} not found")]
    NotFound(String),
    #[error(transparent)]
    Log(#[from] LogError),
}

/// A typed value stored under a handle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandleValue {
    pub index: u32,
    #[serde(rename = "type")]
    pub value_type: String,
    pub data: String,
    pub timestamp: Datestamp,
}

/// Input form of a value, before the registry assigns its timestamp.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewHandleValue {
    pub index: u32,
    #[serde(rename = "type")]
    pub value_type: String,
    pub data: String,
}

impl NewHandleValue {
    pub fn url(index: u32, url: &str) -> NewHandleValue {
        NewHandleValue {
            index,
            value_type: "URL".to_string(),
            data: url.to_string(),
        }
    }

    pub fn template(index: u32, pattern: &str) -> NewHandleValue {
        NewHandleValue {
            index,
            value_type: TEMPLATE_TYPE.to_string(),
            data: pattern.to_string(),
        }
    }
}

/// A registered persistent identifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handle {
    pub prefix: String,
    pub suffix: String,
    pub values: Vec<HandleValue>,
}

impl Handle {
    /// Canonical text form `<prefix>/<suffix>`, as minted.
    pub fn text(&self) -> String {
        format!("{}/{}", self.prefix, self.suffix)
    }

    fn template(&self) -> Option<&HandleValue> {
        self.values.iter().find(|v| v.value_type == TEMPLATE_TYPE)
    }
}

/// Result of resolving handle text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolution {
    pub values: Vec<HandleValue>,
    /// True when the values were computed from a template base rather
    /// than read from a registration.
    pub derived: bool,
}

/// One `TYPE=pattern` line of a template value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateRule {
    pub lines: Vec<(String, String)>,
}

impl TemplateRule {
    /// Parse template data: newline-separated `TYPE=pattern` lines, with
    /// `{part}` appearing at least once overall.
    pub fn parse(data: &str) -> Result<TemplateRule, PidError> {
        let mut lines = Vec::new();
        for line in data.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (vtype, pattern) = line.split_once('=').ok_or_else(|| {
                PidError::InvalidValues(format!("template line {line:?} is not TYPE=pattern"))
            })?;
            let vtype = vtype.trim();
            if vtype.is_empty() || vtype == TEMPLATE_TYPE {
                return Err(PidError::InvalidValues(format!(
                    "template line {line:?} has an invalid value type"
                )));
            }
            lines.push((vtype.to_string(), pattern.to_string()));
        }
        if lines.is_empty() {
            return Err(PidError::InvalidValues("template has no rules".to_string()));
        }
        if !lines.iter().any(|(_, p)| p.contains(PART_PLACEHOLDER)) {
            return Err(PidError::InvalidValues(format!(
                "template contains no {PART_PLACEHOLDER} placeholder"
            )));
        }
        Ok(TemplateRule { lines })
    }

    /// Derive the value list for a part identifier. `{part}` is replaced
    /// verbatim, not URL-decoded.
    pub fn derive(&self, part: &str, timestamp: Datestamp) -> Vec<HandleValue> {
        self.lines
            .iter()
            .enumerate()
            .map(|(i, (vtype, pattern))| HandleValue {
                index: (i + 1) as u32,
                value_type: vtype.clone(),
                data: pattern.replace(PART_PLACEHOLDER, part),
                timestamp,
            })
            .collect()
    }
}

pub fn is_valid_prefix(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_digit() || c == '.')
}

fn is_valid_segment(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '~' | '-'))
}

pub fn is_valid_suffix(s: &str) -> bool {
    !s.is_empty() && s.split('/').all(is_valid_segment)
}

/// Split handle text into (prefix, suffix); the suffix may contain `/`.
pub fn parse_handle_text(text: &str) -> Result<(&str, &str), PidError> {
    let (prefix, suffix) = text
        .split_once('/')
        .ok_or_else(|| PidError::InvalidHandle(text.to_string()))?;
    if !is_valid_prefix(prefix) || !is_valid_suffix(suffix) {
        return Err(PidError::InvalidHandle(text.to_string()));
    }
    Ok((prefix, suffix))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum RegistryEvent {
    Mint { handle: Handle },
    Update { suffix: String, values: Vec<HandleValue> },
    Remove { suffix: String },
}

/// The handle registry for one prefix. Reads are lock-free over a shared
/// snapshot; mutations serialize through the single writer.
pub struct HandleRegistry {
    prefix: String,
    clock: Arc<dyn Clock>,
    // keyed by lowercased suffix; the Handle keeps the as-minted form
    state: RwLock<BTreeMap<String, Handle>>,
    log: Option<Mutex<JsonLog>>,
}

impl HandleRegistry {
    /// Open a registry persisted at `<data_dir>/handles.log`.
    pub fn open(
        data_dir: &Path,
        prefix: &str,
        clock: Arc<dyn Clock>,
    ) -> Result<HandleRegistry, PidError> {
        let path = data_dir.join("handles.log");
        let mut state = BTreeMap::new();
        for event in JsonLog::replay::<RegistryEvent>(&path)? {
            apply(&mut state, event);
        }
        Ok(HandleRegistry {
            prefix: prefix.to_string(),
            clock,
            state: RwLock::new(state),
            log: Some(Mutex::new(JsonLog::open_append(&path)?)),
        })
    }

    /// Purely in-memory registry, for tests and embedding.
    pub fn in_memory(prefix: &str, clock: Arc<dyn Clock>) -> HandleRegistry {
        HandleRegistry {
            prefix: prefix.to_string(),
            clock,
            state: RwLock::new(BTreeMap::new()),
            log: None,
        }
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn len(&self) -> usize {
        self.state.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn commit(&self, event: &RegistryEvent) -> Result<(), PidError> {
        if let Some(log) = &self.log {
            log.lock().unwrap().append(event)?;
        }
        Ok(())
    }

    /// Register a new handle. Without a suffix a fresh 128-bit-unique
    /// token is generated.
    pub fn mint(
        &self,
        suffix: Option<&str>,
        values: Vec<NewHandleValue>,
    ) -> Result<Handle, PidError> {
        let values = self.check_values(values)?;
        if let Some(s) = suffix {
            if !is_valid_suffix(s) {
                return Err(PidError::InvalidSuffix(s.to_string()));
            }
        }
        let mut state = self.state.write().unwrap();
        let suffix = match suffix {
            Some(s) => {
                if state.contains_key(&s.to_lowercase()) {
                    return Err(PidError::SuffixTaken(s.to_string()));
                }
                s.to_string()
            }
            None => loop {
                let candidate = uuid::Uuid::new_v4().simple().to_string();
                if !state.contains_key(&candidate) {
                    break candidate;
                }
            },
        };
        let handle = Handle {
            prefix: self.prefix.clone(),
            suffix: suffix.clone(),
            values,
        };
        let event = RegistryEvent::Mint {
            handle: handle.clone(),
        };
        self.commit(&event)?;
        apply(&mut state, event);
        Ok(handle)
    }

    fn check_values(&self, values: Vec<NewHandleValue>) -> Result<Vec<HandleValue>, PidError> {
        if values.is_empty() {
            return Err(PidError::EmptyValues);
        }
        let mut indexes = std::collections::BTreeSet::new();
        let mut templates = 0;
        for v in &values {
            if v.index == 0 {
                return Err(PidError::InvalidValues("indexes start at 1".to_string()));
            }
            if !indexes.insert(v.index) {
                return Err(PidError::InvalidValues(format!(
                    "duplicate index {}",
                    v.index
                )));
            }
            if v.value_type == TEMPLATE_TYPE {
                templates += 1;
                TemplateRule::parse(&v.data)?;
            }
        }
        if templates > 1 {
            return Err(PidError::InvalidValues(
                "at most one TEMPLATE value per handle".to_string(),
            ));
        }
        let now = self.clock.now();
        Ok(values
            .into_iter()
            .map(|v| HandleValue {
                index: v.index,
                value_type: v.value_type,
                data: v.data,
                timestamp: now,
            })
            .collect())
    }

    /// Resolve handle text: exact match first, then the longest
    /// registered template base, splitting the suffix right to left.
    pub fn resolve(&self, text: &str) -> Result<Resolution, PidError> {
        let (prefix, suffix) = parse_handle_text(text)?;
        if !prefix.eq_ignore_ascii_case(&self.prefix) {
            return Err(PidError::NotFound(text.to_string()));
        }
        let state = self.state.read().unwrap();
        let lc = suffix.to_lowercase();
        if let Some(handle) = state.get(&lc) {
            return Ok(Resolution {
                values: handle.values.clone(),
                derived: false,
            });
        }
        let segments: Vec<&str> = lc.split('/').collect();
        for cut in (1..segments.len()).rev() {
            let base = segments[..cut].join("/");
            if let Some(handle) = state.get(&base) {
                if let Some(template) = handle.template() {
                    let rule = TemplateRule::parse(&template.data)
                        .expect("registered templates always parse");
                    // substitute the as-given remainder, not the lowercased key
                    let part = rest_of_suffix(suffix, cut);
                    return Ok(Resolution {
                        values: rule.derive(part, template.timestamp),
                        derived: true,
                    });
                }
            }
        }
        Err(PidError::NotFound(text.to_string()))
    }

    /// Replace the value list of an exact registration.
    pub fn update(&self, text: &str, values: Vec<NewHandleValue>) -> Result<Handle, PidError> {
        let (prefix, suffix) = parse_handle_text(text)?;
        if !prefix.eq_ignore_ascii_case(&self.prefix) {
            return Err(PidError::NotFound(text.to_string()));
        }
        let values = self.check_values(values)?;
        let mut state = self.state.write().unwrap();
        let lc = suffix.to_lowercase();
        if !state.contains_key(&lc) {
            return Err(PidError::NotFound(text.to_string()));
        }
        let event = RegistryEvent::Update { suffix: lc.clone(), values };
        self.commit(&event)?;
        apply(&mut state, event);
        Ok(state[&lc].clone())
    }

    /// Delete an exact registration. Derived resolutions under a removed
    /// template base become NotFound.
    pub fn remove(&self, text: &str) -> Result<(), PidError> {
        let (prefix, suffix) = parse_handle_text(text)?;
        if !prefix.eq_ignore_ascii_case(&self.prefix) {
            return Err(PidError::NotFound(text.to_string()));
        }
        let mut state = self.state.write().unwrap();
        let lc = suffix.to_lowercase();
        if !state.contains_key(&lc) {
            return Err(PidError::NotFound(text.to_string()));
        }
        let event = RegistryEvent::Remove { suffix: lc };
        self.commit(&event)?;
        apply(&mut state, event);
        Ok(())
    }
}

fn rest_of_suffix(suffix: &str, cut: usize) -> &str {
    // byte offset of segment `cut` in the original (non-lowercased) text
    let mut offset = 0;
    for (i, seg) in suffix.split('/').enumerate() {
        if i == cut {
            return &suffix[offset..];
        }
        offset += seg.len() + 1;
    }
    ""
}

fn apply(state: &mut BTreeMap<String, Handle>, event: RegistryEvent) {
    match event {
        RegistryEvent::Mint { handle } => {
            state.insert(handle.suffix.to_lowercase(), handle);
        }
        RegistryEvent::Update { suffix, values } => {
            if let Some(h) = state.get_mut(&suffix) {
                h.values = values;
            }
        }
        RegistryEvent::Remove { suffix } => {
            state.remove(&suffix);
        }
    }
}
