//! XML forms of the deposit surface: the AtomPub-style service
//! document, deposit receipts, and machine-readable error bodies.

use quick_xml::events::{BytesDecl, BytesStart, BytesText, Event};
use quick_xml::Reader;
use quick_xml::Writer;

use crate::metadata::{Severity, ValidationIssue, ValidationReport};

use super::{DepositError, DepositReceipt, ServiceCollection, ServiceDocument, SWORD_XMLNS};

const APP_XMLNS: &str = "http://www.w3.org/2007/app";
const ATOM_XMLNS: &str = "http://www.w3.org/2005/Atom";
const SWORD_TERMS_XMLNS: &str = "http://purl.org/net/sword/";

fn decl(writer: &mut Writer<Vec<u8>>) {
    writer
        .write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))
        .unwrap();
}

fn start(writer: &mut Writer<Vec<u8>>, tag: &str) {
    writer.write_event(Event::Start(BytesStart::new(tag))).unwrap();
}

fn end(writer: &mut Writer<Vec<u8>>, tag: &str) {
    writer
        .write_event(Event::End(BytesStart::new(tag).to_end()))
        .unwrap();
}

fn text_element(writer: &mut Writer<Vec<u8>>, tag: &str, text: &str) {
    start(writer, tag);
    writer.write_event(Event::Text(BytesText::new(text))).unwrap();
    end(writer, tag);
}

pub fn render_service_document_xml(doc: &ServiceDocument, workspace_title: &str) -> String {
    let mut writer = Writer::new_with_indent(Vec::new(), b' ', 2);
    decl(&mut writer);
    let mut root = BytesStart::new("service");
    root.push_attribute(("xmlns", APP_XMLNS));
    root.push_attribute(("xmlns:atom", ATOM_XMLNS));
    root.push_attribute(("xmlns:sword", SWORD_TERMS_XMLNS));
    writer.write_event(Event::Start(root)).unwrap();
    text_element(&mut writer, "sword:version", &doc.version);
    text_element(
        &mut writer,
        "sword:maxUploadSize",
        &doc.max_upload_bytes.to_string(),
    );
    start(&mut writer, "workspace");
    text_element(&mut writer, "atom:title", workspace_title);
    for c in &doc.collections {
        let mut el = BytesStart::new("collection");
        el.push_attribute(("href", c.href.as_str()));
        writer.write_event(Event::Start(el)).unwrap();
        text_element(&mut writer, "atom:title", &c.title);
        for media in &c.accepted_media_types {
            text_element(&mut writer, "accept", media);
        }
        for packaging in &c.accepted_packaging {
            text_element(&mut writer, "sword:acceptPackaging", packaging);
        }
        end(&mut writer, "collection");
    }
    end(&mut writer, "workspace");
    end(&mut writer, "service");
    let mut bytes = writer.into_inner();
    bytes.push(b'\n');
    String::from_utf8(bytes).unwrap()
}

pub fn render_receipt_xml(receipt: &DepositReceipt) -> String {
    let mut writer = Writer::new_with_indent(Vec::new(), b' ', 2);
    decl(&mut writer);
    let mut root = BytesStart::new("receipt");
    root.push_attribute(("xmlns", SWORD_XMLNS));
    writer.write_event(Event::Start(root)).unwrap();
    text_element(&mut writer, "itemUuid", &receipt.item_uuid.to_string());
    text_element(&mut writer, "oaiIdentifier", &receipt.oai_identifier);
    if let Some(pid) = &receipt.pid {
        text_element(&mut writer, "pid", pid);
    }
    text_element(&mut writer, "treatment", &receipt.treatment);
    text_element(&mut writer, "location", &receipt.location);
    end(&mut writer, "receipt");
    let mut bytes = writer.into_inner();
    bytes.push(b'\n');
    String::from_utf8(bytes).unwrap()
}

pub fn render_error_xml(error: &DepositError) -> String {
    let mut writer = Writer::new_with_indent(Vec::new(), b' ', 2);
    decl(&mut writer);
    let mut root = BytesStart::new("error");
    root.push_attribute(("xmlns", SWORD_XMLNS));
    root.push_attribute(("code", error.code()));
    writer.write_event(Event::Start(root)).unwrap();
    text_element(&mut writer, "message", &error.to_string());
    match error {
        DepositError::InvalidPackage { path, .. } => {
            text_element(&mut writer, "path", path);
        }
        DepositError::ValidationRejected(report) => {
            start(&mut writer, "issues");
            for issue in &report.issues {
                let mut el = BytesStart::new("issue");
                el.push_attribute((
                    "severity",
                    match issue.severity {
                        Severity::Error => "error",
                        Severity::Warning => "warning",
                    },
                ));
                el.push_attribute(("field", issue.field_path.as_str()));
                writer.write_event(Event::Start(el)).unwrap();
                writer
                    .write_event(Event::Text(BytesText::new(&issue.message)))
                    .unwrap();
                end(&mut writer, "issue");
            }
            end(&mut writer, "issues");
        }
        _ => {}
    }
    end(&mut writer, "error");
    let mut bytes = writer.into_inner();
    bytes.push(b'\n');
    String::from_utf8(bytes).unwrap()
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("malformed {document} document: {detail}")]
pub struct WireParseError {
    pub document: &'static str,
    pub detail: String,
}

fn wire_err(document: &'static str, detail: impl Into<String>) -> WireParseError {
    WireParseError {
        document,
        detail: detail.into(),
    }
}

struct Walk<'a> {
    reader: Reader<&'a [u8]>,
}

impl<'a> Walk<'a> {
    fn new(input: &'a str) -> Walk<'a> {
        let mut reader = Reader::from_str(input);
        reader.config_mut().trim_text(true);
        Walk { reader }
    }

    fn text_until(&mut self, tag: &str, doc: &'static str) -> Result<String, WireParseError> {
        let mut out = String::new();
        loop {
            match self.reader.read_event() {
                Ok(Event::Text(t)) => {
                    out.push_str(&t.unescape().map_err(|e| wire_err(doc, e.to_string()))?)
                }
                Ok(Event::End(e)) if e.local_name().as_ref() == tag.as_bytes() => return Ok(out),
                Ok(Event::Eof) => return Err(wire_err(doc, format!("unclosed {tag}"))),
                Ok(_) => {}
                Err(e) => return Err(wire_err(doc, e.to_string())),
            }
        }
    }
}

fn attr(el: &BytesStart, name: &str) -> Option<String> {
    el.attributes().flatten().find_map(|a| {
        (a.key.local_name().as_ref() == name.as_bytes())
            .then(|| a.unescape_value().ok().map(|v| v.into_owned()))
            .flatten()
    })
}

pub fn parse_service_document_xml(xml: &str) -> Result<ServiceDocument, WireParseError> {
    const DOC: &str = "service";
    let mut w = Walk::new(xml);
    let mut doc = ServiceDocument {
        version: String::new(),
        max_upload_bytes: 0,
        collections: Vec::new(),
    };
    let mut current: Option<ServiceCollection> = None;
    loop {
        match w.reader.read_event() {
            Ok(Event::Start(el)) => {
                let name = String::from_utf8_lossy(el.local_name().as_ref()).into_owned();
                match name.as_str() {
                    "version" => doc.version = w.text_until("version", DOC)?,
                    "maxUploadSize" => {
                        let text = w.text_until("maxUploadSize", DOC)?;
                        doc.max_upload_bytes = text
                            .trim()
                            .parse()
                            .map_err(|_| wire_err(DOC, format!("bad maxUploadSize {text:?}")))?;
                    }
                    "collection" => {
                        current = Some(ServiceCollection {
                            href: attr(&el, "href")
                                .ok_or_else(|| wire_err(DOC, "collection without href"))?,
                            title: String::new(),
                            accepted_packaging: Vec::new(),
                            accepted_media_types: Vec::new(),
                        });
                    }
                    "title" => {
                        let text = w.text_until("title", DOC)?;
                        if let Some(c) = current.as_mut() {
                            c.title = text;
                        }
                    }
                    "accept" => {
                        let text = w.text_until("accept", DOC)?;
                        if let Some(c) = current.as_mut() {
                            c.accepted_media_types.push(text);
                        }
                    }
                    "acceptPackaging" => {
                        let text = w.text_until("acceptPackaging", DOC)?;
                        if let Some(c) = current.as_mut() {
                            c.accepted_packaging.push(text);
                        }
                    }
                    _ => {}
                }
            }
            Ok(Event::End(el)) if el.local_name().as_ref() == b"collection" => {
                if let Some(c) = current.take() {
                    doc.collections.push(c);
                }
            }
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(e) => return Err(wire_err(DOC, e.to_string())),
        }
    }
    if doc.version.is_empty() {
        return Err(wire_err(DOC, "missing sword:version"));
    }
    Ok(doc)
}

pub fn parse_receipt_xml(xml: &str) -> Result<DepositReceipt, WireParseError> {
    const DOC: &str = "receipt";
    let mut w = Walk::new(xml);
    let mut item_uuid = None;
    let mut oai_identifier = None;
    let mut pid = None;
    let mut treatment = String::new();
    let mut location = String::new();
    loop {
        match w.reader.read_event() {
            Ok(Event::Start(el)) => {
                let name = String::from_utf8_lossy(el.local_name().as_ref()).into_owned();
                if name == "receipt" {
                    continue;
                }
                let text = w.text_until(&name, DOC)?;
                match name.as_str() {
                    "itemUuid" => {
                        item_uuid = Some(
                            uuid::Uuid::parse_str(text.trim())
                                .map_err(|_| wire_err(DOC, format!("bad itemUuid {text:?}")))?,
                        )
                    }
                    "oaiIdentifier" => oai_identifier = Some(text),
                    "pid" => pid = Some(text),
                    "treatment" => treatment = text,
                    "location" => location = text,
                    _ => {}
                }
            }
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(e) => return Err(wire_err(DOC, e.to_string())),
        }
    }
    Ok(DepositReceipt {
        item_uuid: item_uuid.ok_or_else(|| wire_err(DOC, "missing itemUuid"))?,
        oai_identifier: oai_identifier.ok_or_else(|| wire_err(DOC, "missing oaiIdentifier"))?,
        pid,
        treatment,
        location,
    })
}

/// Parsed form of a server error body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireError {
    pub code: String,
    pub message: String,
    pub path: Option<String>,
    pub issues: Option<ValidationReport>,
}

pub fn parse_error_xml(xml: &str) -> Result<WireError, WireParseError> {
    const DOC: &str = "error";
    let mut w = Walk::new(xml);
    let mut code = None;
    let mut message = String::new();
    let mut path = None;
    let mut issues: Option<Vec<ValidationIssue>> = None;
    loop {
        match w.reader.read_event() {
            Ok(Event::Start(el)) => {
                let name = String::from_utf8_lossy(el.local_name().as_ref()).into_owned();
                match name.as_str() {
                    "error" => code = attr(&el, "code"),
                    "message" => message = w.text_until("message", DOC)?,
                    "path" => path = Some(w.text_until("path", DOC)?),
                    "issues" => issues = Some(Vec::new()),
                    "issue" => {
                        let severity = if attr(&el, "severity").as_deref() == Some("warning") {
                            Severity::Warning
                        } else {
                            Severity::Error
                        };
                        let field_path = attr(&el, "field").unwrap_or_default();
                        let text = w.text_until("issue", DOC)?;
                        issues.get_or_insert_with(Vec::new).push(ValidationIssue {
                            severity,
                            field_path,
                            message: text,
                        });
                    }
                    _ => {}
                }
            }
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(e) => return Err(wire_err(DOC, e.to_string())),
        }
    }
    let issues = issues.map(|list| ValidationReport {
        ok: !list.iter().any(|i| i.severity == Severity::Error),
        issues: list,
    });
    Ok(WireError {
        code: code.ok_or_else(|| wire_err(DOC, "missing code attribute"))?,
        message,
        path,
        issues,
    })
}
