//! Metadata record model: qualified Dublin Core plus the LAGO
//! application profile, validation against a profile, and the canonical
//! XML serializations used on every wire.

mod profile;
mod xml;

pub use profile::{LagoProfile, NumericRange, ProfileError, ValueFormat};
pub use xml::{
    dc_flat_view, parse_lago_document, parse_lago_xml, to_lago_xml, to_oai_dc_xml, BitstreamRef,
    DocumentOrigin, LagoDocument, SchemaError, DC_XMLNS, LAGO_XMLNS, OAI_DC_XMLNS,
};

use std::fmt;

use serde::{Deserialize, Serialize};

/// The 15 unqualified Dublin Core elements.
pub const DC_ELEMENTS: [&str; 15] = [
    "title",
    "creator",
    "subject",
    "description",
    "publisher",
    "contributor",
    "date",
    "type",
    "format",
    "identifier",
    "source",
    "language",
    "relation",
    "coverage",
    "rights",
];

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FieldError {
    #[error("invalid element token {0:?}")]
    InvalidElement(String),
    #[error("invalid qualifier token {0:?}")]
    InvalidQualifier(String),
    #[error("invalid language tag {0:?}")]
    InvalidLanguage(String),
    #[error("field value is empty")]
    EmptyValue,
    #[error("field value contains characters not representable in XML")]
    UnrepresentableValue,
}

fn is_element_token(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some('a'..='z'))
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit())
}

fn is_xml_char(c: char) -> bool {
    matches!(c, '\t' | '\n' | '\r')
        || ('\u{20}'..='\u{D7FF}').contains(&c)
        || ('\u{E000}'..='\u{FFFD}').contains(&c)
        || c >= '\u{10000}'
}

/// One metadata statement: element, optional qualifier, value, optional
/// ISO-639-1 language.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MetadataField {
    element: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    qualifier: Option<String>,
    value: String,
    #[serde(skip_serializing_if = "Option::is_none", default, rename = "lang")]
    language: Option<String>,
}

impl MetadataField {
    /// Build a field, trimming surrounding whitespace from the value.
    pub fn new(
        element: &str,
        qualifier: Option<&str>,
        value: &str,
        language: Option<&str>,
    ) -> Result<MetadataField, FieldError> {
        if !is_element_token(element) {
            return Err(FieldError::InvalidElement(element.to_string()));
        }
        if let Some(q) = qualifier {
            if !is_element_token(q) {
                return Err(FieldError::InvalidQualifier(q.to_string()));
            }
        }
        if let Some(l) = language {
            if l.len() != 2 || !l.chars().all(|c| c.is_ascii_lowercase()) {
                return Err(FieldError::InvalidLanguage(l.to_string()));
            }
        }
        let value = value.trim();
        if value.is_empty() {
            return Err(FieldError::EmptyValue);
        }
        if !value.chars().all(is_xml_char) {
            return Err(FieldError::UnrepresentableValue);
        }
        Ok(MetadataField {
            element: element.to_string(),
            qualifier: qualifier.map(str::to_string),
            value: value.to_string(),
            language: language.map(str::to_string),
        })
    }

    pub fn element(&self) -> &str {
        &self.element
    }

    pub fn qualifier(&self) -> Option<&str> {
        self.qualifier.as_deref()
    }

    pub fn value(&self) -> &str {
        &self.value
    }

    pub fn language(&self) -> Option<&str> {
        self.language.as_deref()
    }

    /// `element` or `element.qualifier`, the path form used in reports.
    pub fn path(&self) -> String {
        match &self.qualifier {
            Some(q) => format!("{}.{}", self.element, q),
            None => self.element.clone(),
        }
    }

    fn sort_key(&self) -> (&str, Option<&str>, &str, Option<&str>) {
        (
            &self.element,
            self.qualifier.as_deref(),
            &self.value,
            self.language.as_deref(),
        )
    }
}

impl fmt::Display for MetadataField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.path(), self.value)
    }
}

/// An ordered list of metadata fields attached to an item.
///
/// Serialization preserves field order; [`MetadataRecord::canonicalize`]
/// sorts fields into the deterministic (element, qualifier, value,
/// language) order used for equality comparisons across the network.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetadataRecord {
    fields: Vec<MetadataField>,
}

impl MetadataRecord {
    pub fn new() -> MetadataRecord {
        MetadataRecord::default()
    }

    pub fn from_fields(fields: Vec<MetadataField>) -> MetadataRecord {
        MetadataRecord { fields }
    }

    pub fn push(&mut self, field: MetadataField) {
        self.fields.push(field);
    }

    /// Convenience constructor used heavily in tests and bindings.
    pub fn add(
        &mut self,
        element: &str,
        qualifier: Option<&str>,
        value: &str,
    ) -> Result<(), FieldError> {
        self.push(MetadataField::new(element, qualifier, value, None)?);
        Ok(())
    }

    pub fn fields(&self) -> &[MetadataField] {
        &self.fields
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn values_of(&self, element: &str, qualifier: Option<&str>) -> Vec<&str> {
        self.fields
            .iter()
            .filter(|f| f.element == element && f.qualifier.as_deref() == qualifier)
            .map(|f| f.value.as_str())
            .collect()
    }

    pub fn first_value(&self, element: &str, qualifier: Option<&str>) -> Option<&str> {
        self.values_of(element, qualifier).into_iter().next()
    }

    /// The PID slot: the single `identifier.uri` value, when present.
    pub fn pid(&self) -> Option<&str> {
        self.first_value("identifier", Some("uri"))
    }

    /// Set the PID slot, replacing any existing `identifier.uri` fields.
    pub fn set_pid(&mut self, uri: &str) -> Result<(), FieldError> {
        self.fields
            .retain(|f| !(f.element == "identifier" && f.qualifier.as_deref() == Some("uri")));
        self.push(MetadataField::new("identifier", Some("uri"), uri, None)?);
        Ok(())
    }

    /// Deterministically sorted copy. Idempotent.
    pub fn canonicalize(&self) -> MetadataRecord {
        let mut fields = self.fields.clone();
        fields.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        MetadataRecord { fields }
    }

    pub fn is_canonical(&self) -> bool {
        self.fields
            .windows(2)
            .all(|w| w[0].sort_key() <= w[1].sort_key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub severity: Severity,
    #[serde(rename = "fieldPath")]
    pub field_path: String,
    pub message: String,
}

/// Result of checking a record against a profile. Problems are always
/// reported here, never thrown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    fn from_issues(issues: Vec<ValidationIssue>) -> ValidationReport {
        let ok = !issues.iter().any(|i| i.severity == Severity::Error);
        ValidationReport { ok, issues }
    }

    pub fn error_count(&self) -> usize {
        self.issues
            .iter()
            .filter(|i| i.severity == Severity::Error)
            .count()
    }

    pub fn summary(&self) -> String {
        self.issues
            .iter()
            .map(|i| {
                format!(
                    "{}: {}: {}",
                    match i.severity {
                        Severity::Error => "error",
                        Severity::Warning => "warning",
                    },
                    i.field_path,
                    i.message
                )
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Check a record against a profile. Pure: identical inputs always
/// produce identical reports.
pub fn validate_record(record: &MetadataRecord, profile: &LagoProfile) -> ValidationReport {
    let mut issues = Vec::new();

    for key in profile.required_pairs() {
        if record
            .fields
            .iter()
            .any(|f| f.element == key.0 && f.qualifier.as_deref() == key.1.as_deref())
        {
            continue;
        }
        issues.push(ValidationIssue {
            severity: Severity::Error,
            field_path: pair_path(&key.0, key.1.as_deref()),
            message: "required field is missing".to_string(),
        });
    }

    for field in &record.fields {
        let pair = (field.element.as_str(), field.qualifier.as_deref());

        if let Some(vocab) = profile.vocabulary(pair.0, pair.1) {
            if !vocab.contains(field.value.as_str()) {
                issues.push(ValidationIssue {
                    severity: Severity::Error,
                    field_path: field.path(),
                    message: format!(
                        "value {:?} not in controlled vocabulary [{}]",
                        field.value,
                        vocab.iter().cloned().collect::<Vec<_>>().join(", ")
                    ),
                });
            }
        }

        if let Some(range) = profile.range(pair.0, pair.1) {
            match field.value.parse::<f64>() {
                Ok(v) if v.is_finite() && v >= range.min && v <= range.max => {}
                Ok(v) => issues.push(ValidationIssue {
                    severity: Severity::Error,
                    field_path: field.path(),
                    message: format!(
                        "value {} outside range [{}, {}] {}",
                        v, range.min, range.max, range.unit
                    ),
                }),
                Err(_) => issues.push(ValidationIssue {
                    severity: Severity::Error,
                    field_path: field.path(),
                    message: format!("value {:?} is not numeric", field.value),
                }),
            }
        }

        match profile.format(pair.0, pair.1) {
            Some(ValueFormat::Date) => {
                if chrono::NaiveDate::parse_from_str(&field.value, "%Y-%m-%d").is_err() {
                    issues.push(ValidationIssue {
                        severity: Severity::Error,
                        field_path: field.path(),
                        message: format!("value {:?} is not a YYYY-MM-DD date", field.value),
                    });
                }
            }
            Some(ValueFormat::Token) => {
                let ok = !field.value.is_empty()
                    && field
                        .value
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
                if !ok {
                    issues.push(ValidationIssue {
                        severity: Severity::Error,
                        field_path: field.path(),
                        message: format!("value {:?} is not a plain token", field.value),
                    });
                }
            }
            None => {}
        }

        if !profile.is_known(pair.0, pair.1) {
            issues.push(ValidationIssue {
                severity: Severity::Warning,
                field_path: field.path(),
                message: "field is not part of the profile".to_string(),
            });
        }
    }

    let pid_count = record.values_of("identifier", Some("uri")).len();
    if pid_count > 1 {
        issues.push(ValidationIssue {
            severity: Severity::Error,
            field_path: "identifier.uri".to_string(),
            message: format!("{pid_count} identifier.uri fields; at most one is allowed"),
        });
    }

    ValidationReport::from_issues(issues)
}

pub(crate) fn pair_path(element: &str, qualifier: Option<&str>) -> String {
    match qualifier {
        Some(q) => format!("{element}.{q}"),
        None => element.to_string(),
    }
}

/// A record carrying all seven default-profile fields, used by tests and
/// the Python smoke script as a known-good starting point.
pub fn example_record() -> MetadataRecord {
    let mut r = MetadataRecord::new();
    r.add("title", None, "Run 42").unwrap();
    r.add("date", Some("issued"), "2016-03-01").unwrap();
    r.add("type", None, "raw").unwrap();
    r.add("coverage", Some("site"), "chacaltaya").unwrap();
    r.add("lago", Some("detector"), "wcd-01").unwrap();
    r.add("lago", Some("rcut"), "10.8").unwrap();
    r.add("lago", Some("altitude"), "5240").unwrap();
    r
}
