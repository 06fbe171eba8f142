//! The LAGO application profile: which (element, qualifier) pairs a
//! conforming record must carry, controlled vocabularies, numeric
//! plausibility ranges, and value-format rules.
//!
//! Profiles live in a TOML file so a site can override the defaults
//! without rebuilding. The embedded default is
//! `resources/default-profile.toml`; its schema is documented in
//! `docs/FORMATS.md`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;

use super::pair_path;

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error("cannot read profile file {path}: {source}")]
    Unreadable {
        path: String,
        source: std::io::Error,
    },
    #[error("profile file is not valid TOML: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("profile rule for {pair}: {message}")]
    BadRule { pair: String, message: String },
}

/// Value-format rules a profile can attach to a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueFormat {
    /// `YYYY-MM-DD` calendar date.
    Date,
    /// Plain token: ASCII alphanumerics plus `.`, `_`, `-`.
    Token,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericRange {
    pub min: f64,
    pub max: f64,
    pub unit: String,
}

type PairKey = (String, Option<String>);

#[derive(Debug, Clone, Default)]
pub struct LagoProfile {
    required: Vec<PairKey>,
    vocabularies: BTreeMap<PairKey, BTreeSet<String>>,
    ranges: BTreeMap<PairKey, NumericRange>,
    formats: BTreeMap<PairKey, ValueFormat>,
    known: BTreeSet<PairKey>,
}

#[derive(Debug, Deserialize)]
struct ProfileFile {
    #[serde(default)]
    field: Vec<FieldRule>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldRule {
    element: String,
    qualifier: Option<String>,
    #[serde(default)]
    required: bool,
    vocabulary: Option<Vec<String>>,
    format: Option<String>,
    range: Option<RangeRule>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RangeRule {
    min: f64,
    max: f64,
    #[serde(default)]
    unit: String,
}

const DEFAULT_PROFILE_TOML: &str = include_str!("../../resources/default-profile.toml");

impl LagoProfile {
    /// The built-in site profile: title, date.issued, type, coverage.site,
    /// lago.detector, lago.rcut and lago.altitude are required, with the
    /// three-valued type vocabulary and the rcut/altitude plausibility
    /// ranges.
    pub fn default_profile() -> LagoProfile {
        LagoProfile::from_toml_str(DEFAULT_PROFILE_TOML)
            .expect("embedded default profile must parse")
    }

    pub fn load(path: &Path) -> Result<LagoProfile, ProfileError> {
        let text = std::fs::read_to_string(path).map_err(|e| ProfileError::Unreadable {
            path: path.display().to_string(),
            source: e,
        })?;
        LagoProfile::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<LagoProfile, ProfileError> {
        let file: ProfileFile = toml::from_str(text)?;
        let mut profile = LagoProfile::default();
        for rule in file.field {
            let key: PairKey = (rule.element.clone(), rule.qualifier.clone());
            let pair = pair_path(&key.0, key.1.as_deref());
            if !super::is_element_token(&key.0)
                || key.1.as_deref().is_some_and(|q| !super::is_element_token(q))
            {
                return Err(ProfileError::BadRule {
                    pair,
                    message: "element/qualifier must match [a-z][a-z0-9]*".to_string(),
                });
            }
            if profile.known.contains(&key) {
                return Err(ProfileError::BadRule {
                    pair,
                    message: "duplicate rule for this pair".to_string(),
                });
            }
            if rule.required {
                profile.required.push(key.clone());
            }
            if let Some(vocab) = rule.vocabulary {
                if vocab.is_empty() {
                    return Err(ProfileError::BadRule {
                        pair,
                        message: "vocabulary must not be empty".to_string(),
                    });
                }
                profile
                    .vocabularies
                    .insert(key.clone(), vocab.into_iter().collect());
            }
            if let Some(range) = rule.range {
                if range.min.partial_cmp(&range.max) != Some(std::cmp::Ordering::Less)
                    && range.min != range.max
                {
                    return Err(ProfileError::BadRule {
                        pair,
                        message: "range min must be <= max".to_string(),
                    });
                }
                profile.ranges.insert(
                    key.clone(),
                    NumericRange {
                        min: range.min,
                        max: range.max,
                        unit: range.unit,
                    },
                );
            }
            if let Some(format) = rule.format {
                let f = match format.as_str() {
                    "date" => ValueFormat::Date,
                    "token" => ValueFormat::Token,
                    other => {
                        return Err(ProfileError::BadRule {
                            pair,
                            message: format!("unknown format {other:?} (expected date|token)"),
                        })
                    }
                };
                profile.formats.insert(key.clone(), f);
            }
            profile.known.insert(key);
        }
        Ok(profile)
    }

    pub fn required_pairs(&self) -> &[PairKey] {
        &self.required
    }

    pub fn vocabulary(&self, element: &str, qualifier: Option<&str>) -> Option<&BTreeSet<String>> {
        self.vocabularies
            .get(&(element.to_string(), qualifier.map(str::to_string)))
    }

    pub fn range(&self, element: &str, qualifier: Option<&str>) -> Option<&NumericRange> {
        self.ranges
            .get(&(element.to_string(), qualifier.map(str::to_string)))
    }

    pub fn format(&self, element: &str, qualifier: Option<&str>) -> Option<ValueFormat> {
        self.formats
            .get(&(element.to_string(), qualifier.map(str::to_string)))
            .copied()
    }

    pub fn is_known(&self, element: &str, qualifier: Option<&str>) -> bool {
        self.known
            .contains(&(element.to_string(), qualifier.map(str::to_string)))
    }
}
