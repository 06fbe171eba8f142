//! The data-provider side: dispatches a query-parameter map to one of
//! the six verbs over the store, always producing a well-formed OAI-PMH
//! response — protocol errors go in-band, never as transport failures.

use crate::clock::{Clock, Datestamp};
use crate::metadata::{to_oai_dc_xml, DocumentOrigin, LagoDocument};
use crate::store::{Item, SetSpec, Store, StoreError};

use super::model::*;
use super::token::{TokenError, TokenPayload};
use super::{
    OaiErrorCode, OaiIdentifier, OaiVerb, LAGO_PREFIX, LAGO_SCHEMA, OAI_DC_PREFIX, OAI_DC_SCHEMA,
};
use crate::metadata::LAGO_XMLNS;
use crate::metadata::OAI_DC_XMLNS;

pub struct ProviderConfig {
    pub node_name: String,
    /// Base URL echoed in the `<request>` element and reported by
    /// Identify.
    pub base_url: String,
    pub page_size: usize,
    pub admin_email: String,
    /// Stable secret sealing resumption tokens. Derived from node
    /// identity so tokens stay valid across restarts.
    pub token_secret: String,
}

impl ProviderConfig {
    pub fn new(node_name: &str, base_url: &str, page_size: usize) -> ProviderConfig {
        ProviderConfig {
            node_name: node_name.to_string(),
            base_url: base_url.to_string(),
            page_size: page_size.max(1),
            admin_email: format!("admin@{node_name}.invalid"),
            token_secret: format!("lago-token:{node_name}"),
        }
    }
}

pub struct Provider<'a> {
    store: &'a Store,
    cfg: &'a ProviderConfig,
    clock: &'a dyn Clock,
}

/// Which arguments each verb admits.
const COMMON: &[&str] = &["verb"];

struct ParsedArgs {
    verb: OaiVerb,
    identifier: Option<String>,
    metadata_prefix: Option<String>,
    from: Option<(Datestamp, bool)>,
    until: Option<(Datestamp, bool)>,
    set: Option<String>,
    resumption_token: Option<String>,
    echo: Vec<(String, String)>,
}

enum ArgOutcome {
    Ok(ParsedArgs),
    Errors(Vec<OaiError>, /* echo attrs */ Vec<(String, String)>),
}

impl<'a> Provider<'a> {
    pub fn new(store: &'a Store, cfg: &'a ProviderConfig, clock: &'a dyn Clock) -> Provider<'a> {
        Provider { store, cfg, clock }
    }

    /// Handle a decoded query-parameter list and render the response.
    pub fn handle_to_xml(&self, params: &[(String, String)]) -> String {
        render_oai_response(&self.handle(params))
    }

    pub fn handle(&self, params: &[(String, String)]) -> OaiResponse {
        let (body, echo) = self.dispatch(params);
        OaiResponse {
            response_date: self.clock.now(),
            request: RequestEcho {
                base_url: self.cfg.base_url.clone(),
                attributes: echo,
            },
            body,
        }
    }

    fn dispatch(&self, params: &[(String, String)]) -> (OaiBody, Vec<(String, String)>) {
        let (body, echo) = match self.parse_args(params) {
            ArgOutcome::Errors(errors, echo) => (OaiBody::Errors(errors), echo),
            ArgOutcome::Ok(args) => {
                let echo = args.echo.clone();
                let body = match args.verb {
                    OaiVerb::Identify => self.identify(),
                    OaiVerb::ListMetadataFormats => self.list_metadata_formats(&args),
                    OaiVerb::ListSets => self.list_sets(&args),
                    OaiVerb::GetRecord => self.get_record(&args),
                    OaiVerb::ListIdentifiers | OaiVerb::ListRecords => self.list(&args),
                };
                (body, echo)
            }
        };
        // badVerb/badArgument responses must not echo request attributes
        let suppress_echo = matches!(
            &body,
            OaiBody::Errors(errors) if errors
                .iter()
                .any(|e| matches!(e.code, OaiErrorCode::BadVerb | OaiErrorCode::BadArgument))
        );
        let echo = if suppress_echo { Vec::new() } else { echo };
        (body, echo)
    }

    // -----------------------------------------------------------------
    // argument validation
    // -----------------------------------------------------------------

    fn parse_args(&self, params: &[(String, String)]) -> ArgOutcome {
        let mut errors = Vec::new();

        // duplicate keys are illegal regardless of verb
        let mut keys: Vec<&str> = params.iter().map(|(k, _)| k.as_str()).collect();
        keys.sort_unstable();
        let had_duplicates = keys.windows(2).any(|w| w[0] == w[1]);
        if had_duplicates {
            errors.push(OaiError {
                code: OaiErrorCode::BadArgument,
                message: "request repeats an argument".to_string(),
            });
        }

        let find = |name: &str| {
            params
                .iter()
                .find(|(k, _)| k == name)
                .map(|(_, v)| v.clone())
        };

        let verb = match find("verb") {
            None => {
                errors.push(OaiError {
                    code: OaiErrorCode::BadVerb,
                    message: "request has no verb argument".to_string(),
                });
                return ArgOutcome::Errors(errors, Vec::new());
            }
            Some(v) => match OaiVerb::parse(&v) {
                Some(verb) => verb,
                None => {
                    errors.push(OaiError {
                        code: OaiErrorCode::BadVerb,
                        message: format!("unknown verb {v:?}"),
                    });
                    return ArgOutcome::Errors(errors, Vec::new());
                }
            },
        };

        let allowed: &[&str] = match verb {
            OaiVerb::Identify => &[],
            OaiVerb::ListMetadataFormats => &["identifier"],
            OaiVerb::ListSets => &["resumptionToken"],
            OaiVerb::GetRecord => &["identifier", "metadataPrefix"],
            OaiVerb::ListIdentifiers | OaiVerb::ListRecords => {
                &["metadataPrefix", "from", "until", "set", "resumptionToken"]
            }
        };
        for (k, v) in params {
            if k == "verb" {
                continue;
            }
            if !allowed.contains(&k.as_str()) {
                errors.push(OaiError {
                    code: OaiErrorCode::BadArgument,
                    message: format!("argument {k:?} is illegal for verb {}", verb.as_str()),
                });
            } else if v.is_empty() {
                errors.push(OaiError {
                    code: OaiErrorCode::BadArgument,
                    message: format!("argument {k:?} has an empty value"),
                });
            }
        }

        let resumption_token = find("resumptionToken");
        if resumption_token.is_some() {
            let extra: Vec<&str> = params
                .iter()
                .map(|(k, _)| k.as_str())
                .filter(|k| !COMMON.contains(k) && *k != "resumptionToken")
                .collect();
            if !extra.is_empty() {
                errors.push(OaiError {
                    code: OaiErrorCode::BadArgument,
                    message: "resumptionToken is an exclusive argument".to_string(),
                });
            }
        }

        let mut from = None;
        let mut until = None;
        if let Some(v) = find("from") {
            match parse_time_arg(&v, false) {
                Some(parsed) => from = Some(parsed),
                None => errors.push(OaiError {
                    code: OaiErrorCode::BadArgument,
                    message: format!("from {v:?} is not a UTC date or datetime"),
                }),
            }
        }
        if let Some(v) = find("until") {
            match parse_time_arg(&v, true) {
                Some(parsed) => until = Some(parsed),
                None => errors.push(OaiError {
                    code: OaiErrorCode::BadArgument,
                    message: format!("until {v:?} is not a UTC date or datetime"),
                }),
            }
        }
        if let (Some((f, fg)), Some((u, ug))) = (from, until) {
            if fg != ug {
                errors.push(OaiError {
                    code: OaiErrorCode::BadArgument,
                    message: "from and until use different granularities".to_string(),
                });
            }
            if f > u {
                errors.push(OaiError {
                    code: OaiErrorCode::BadArgument,
                    message: "from is later than until".to_string(),
                });
            }
        }

        match verb {
            OaiVerb::GetRecord => {
                if find("identifier").is_none() || find("metadataPrefix").is_none() {
                    errors.push(OaiError {
                        code: OaiErrorCode::BadArgument,
                        message: "GetRecord requires identifier and metadataPrefix".to_string(),
                    });
                }
            }
            OaiVerb::ListIdentifiers | OaiVerb::ListRecords
                if resumption_token.is_none() && find("metadataPrefix").is_none() =>
            {
                errors.push(OaiError {
                    code: OaiErrorCode::BadArgument,
                    message: format!("{} requires metadataPrefix", verb.as_str()),
                });
            }
            _ => {}
        }

        let echo: Vec<(String, String)> = params
            .iter()
            .filter(|(k, _)| k == "verb" || allowed.contains(&k.as_str()))
            .cloned()
            .collect();

        if !errors.is_empty() {
            return ArgOutcome::Errors(errors, echo);
        }
        ArgOutcome::Ok(ParsedArgs {
            verb,
            identifier: find("identifier"),
            metadata_prefix: find("metadataPrefix"),
            from,
            until,
            set: find("set"),
            resumption_token,
            echo,
        })
    }

    // -----------------------------------------------------------------
    // verbs
    // -----------------------------------------------------------------

    fn identify(&self) -> OaiBody {
        OaiBody::Identify(IdentifyInfo {
            repository_name: self.cfg.node_name.clone(),
            base_url: self.cfg.base_url.clone(),
            protocol_version: "2.0".to_string(),
            admin_email: self.cfg.admin_email.clone(),
            earliest_datestamp: self
                .store
                .earliest_datestamp()
                .unwrap_or_else(|| Datestamp::from_unix(0)),
            deleted_record: "persistent".to_string(),
            granularity: "YYYY-MM-DDThh:mm:ssZ".to_string(),
        })
    }

    fn list_metadata_formats(&self, args: &ParsedArgs) -> OaiBody {
        if let Some(id) = &args.identifier {
            if self.lookup_identifier(id).is_none() {
                return one_error(
                    OaiErrorCode::IdDoesNotExist,
                    format!("identifier {id:?} is unknown here"),
                );
            }
        }
        // both formats are advertised for every item
        OaiBody::ListMetadataFormats(vec![
            MetadataFormatInfo {
                prefix: OAI_DC_PREFIX.to_string(),
                schema: OAI_DC_SCHEMA.to_string(),
                namespace: OAI_DC_XMLNS.to_string(),
            },
            MetadataFormatInfo {
                prefix: LAGO_PREFIX.to_string(),
                schema: LAGO_SCHEMA.to_string(),
                namespace: LAGO_XMLNS.to_string(),
            },
        ])
    }

    fn list_sets(&self, args: &ParsedArgs) -> OaiBody {
        if args.resumption_token.is_some() {
            // set lists are never paginated here, so no token we issued
            // can be valid
            return one_error(
                OaiErrorCode::BadResumptionToken,
                "this repository does not paginate set lists".to_string(),
            );
        }
        let collections = self.store.collections();
        if collections.is_empty() {
            return one_error(
                OaiErrorCode::NoSetHierarchy,
                "no sets are configured".to_string(),
            );
        }
        OaiBody::ListSets(
            collections
                .iter()
                .map(|c| SetInfo {
                    spec: c.set_spec().to_string(),
                    name: c.name.clone(),
                })
                .collect(),
        )
    }

    fn get_record(&self, args: &ParsedArgs) -> OaiBody {
        let prefix = args.metadata_prefix.as_deref().unwrap_or_default();
        if !is_supported_prefix(prefix) {
            return one_error(
                OaiErrorCode::CannotDisseminateFormat,
                format!("metadataPrefix {prefix:?} is not supported"),
            );
        }
        let id = args.identifier.as_deref().unwrap_or_default();
        let item = match self.lookup_identifier(id) {
            Some(item) => item,
            None => {
                return one_error(
                    OaiErrorCode::IdDoesNotExist,
                    format!("identifier {id:?} is unknown here"),
                )
            }
        };
        OaiBody::GetRecord(self.record_for(&item, prefix))
    }

    fn list(&self, args: &ParsedArgs) -> OaiBody {
        // resume or start fresh
        let (payload, continued) = match &args.resumption_token {
            Some(token) => {
                match TokenPayload::decode(token, &self.cfg.token_secret, self.clock.now()) {
                    Ok(p) => (p, true),
                    Err(e) => {
                        return one_error(
                            OaiErrorCode::BadResumptionToken,
                            match e {
                                TokenError::Expired => "resumption token expired".to_string(),
                                _ => "resumption token is invalid".to_string(),
                            },
                        )
                    }
                }
            }
            None => {
                let prefix = args.metadata_prefix.clone().unwrap_or_default();
                if !is_supported_prefix(&prefix) {
                    return one_error(
                        OaiErrorCode::CannotDisseminateFormat,
                        format!("metadataPrefix {prefix:?} is not supported"),
                    );
                }
                (
                    TokenPayload::new(
                        &prefix,
                        args.from.map(|(d, _)| d),
                        args.until.map(|(d, _)| d),
                        args.set.as_deref(),
                        0,
                        self.clock.now(),
                    ),
                    false,
                )
            }
        };

        let set = match payload.set.as_deref() {
            None => None,
            Some(raw) => match raw.parse::<SetSpec>() {
                Ok(spec) => Some(spec),
                Err(_) => {
                    return one_error(
                        OaiErrorCode::BadArgument,
                        format!("set {raw:?} is not a <kind>:<collection> spec"),
                    )
                }
            },
        };

        let page = match self.store.list_items(
            payload.from,
            payload.until,
            set.as_ref(),
            payload.offset,
            self.cfg.page_size,
        ) {
            Ok(page) => page,
            Err(StoreError::InvalidRange) => {
                return one_error(
                    OaiErrorCode::BadArgument,
                    "from is later than until".to_string(),
                )
            }
            Err(e) => {
                // store reads are in-memory; anything else is a bug
                return one_error(OaiErrorCode::BadArgument, e.to_string());
            }
        };

        if page.total == 0 {
            return one_error(
                OaiErrorCode::NoRecordsMatch,
                "the combination of from, until and set matches no records".to_string(),
            );
        }

        let next_offset = payload.offset.saturating_add(page.items.len());
        let token = if next_offset < page.total {
            let next = TokenPayload::new(
                &payload.metadata_prefix,
                payload.from,
                payload.until,
                payload.set.as_deref(),
                next_offset,
                self.clock.now(),
            );
            Some(TokenInfo {
                value: next.encode(&self.cfg.token_secret),
                complete_list_size: Some(page.total),
                cursor: Some(payload.offset),
            })
        } else if continued {
            // final page of a token-continued list: empty token
            Some(TokenInfo {
                value: String::new(),
                complete_list_size: Some(page.total),
                cursor: Some(payload.offset),
            })
        } else {
            None
        };

        match args.verb {
            OaiVerb::ListIdentifiers => OaiBody::ListIdentifiers {
                headers: page.items.iter().map(|i| self.header_for(i)).collect(),
                token,
            },
            _ => OaiBody::ListRecords {
                records: page
                    .items
                    .iter()
                    .map(|i| self.record_for(i, &payload.metadata_prefix))
                    .collect(),
                token,
            },
        }
    }

    // -----------------------------------------------------------------
    // record assembly
    // -----------------------------------------------------------------

    fn lookup_identifier(&self, text: &str) -> Option<Item> {
        let id: OaiIdentifier = text.parse().ok()?;
        if id.node != self.cfg.node_name {
            return None;
        }
        self.store.get_item(id.uuid).ok()
    }

    fn header_for(&self, item: &Item) -> RecordHeader {
        let sets = self
            .store
            .collection(&item.collection)
            .map(|c| vec![c.set_spec().to_string()])
            .unwrap_or_default();
        RecordHeader {
            identifier: OaiIdentifier::new(&self.cfg.node_name, item.uuid).to_string(),
            datestamp: item.datestamp,
            sets,
            deleted: item.is_deleted(),
        }
    }

    fn record_for(&self, item: &Item, prefix: &str) -> OaiRecord {
        let metadata_xml = if item.is_deleted() {
            None
        } else if prefix == LAGO_PREFIX {
            let origin_identifier = item.origin.original_identifier.clone().unwrap_or_else(|| {
                OaiIdentifier::new(&item.origin.node_name, item.uuid).to_string()
            });
            Some(
                LagoDocument {
                    record: item.metadata.clone(),
                    origin: Some(DocumentOrigin {
                        node: item.origin.node_name.clone(),
                        identifier: origin_identifier,
                    }),
                    bitstreams: item.bitstreams.iter().map(|b| b.to_ref()).collect(),
                }
                .to_xml_fragment(),
            )
        } else {
            Some(to_oai_dc_xml(&item.metadata))
        };
        OaiRecord {
            header: self.header_for(item),
            metadata_xml,
        }
    }
}

fn one_error(code: OaiErrorCode, message: String) -> OaiBody {
    OaiBody::Errors(vec![OaiError { code, message }])
}

fn is_supported_prefix(prefix: &str) -> bool {
    prefix == OAI_DC_PREFIX || prefix == LAGO_PREFIX
}

/// Parse a from/until value at either legal granularity. Returns the
/// instant and whether it was date-granular (for the equal-granularity
/// check). Date-granular `until` means end of that day.
fn parse_time_arg(value: &str, is_until: bool) -> Option<(Datestamp, bool)> {
    if let Ok(d) = value.parse::<Datestamp>() {
        return Some((d, false));
    }
    let date = chrono::NaiveDate::parse_from_str(value, "%Y-%m-%d").ok()?;
    let time = if is_until {
        date.and_hms_opt(23, 59, 59)?
    } else {
        date.and_hms_opt(0, 0, 0)?
    };
    Some((
        Datestamp::from_datetime(chrono::DateTime::from_naive_utc_and_offset(time, chrono::Utc)),
        true,
    ))
}
