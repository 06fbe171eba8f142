//! Parsed form of OAI-PMH responses, shared by the provider (render)
//! and the harvester (parse). `render` and `parse` are inverses on the
//! supported subset; unknown elements in foreign responses are skipped,
//! not fatal.

use quick_xml::events::{BytesDecl, BytesStart, BytesText, Event};
use quick_xml::Reader;
use quick_xml::Writer;

use crate::clock::Datestamp;

use super::{OaiErrorCode, OAI_PMH_XMLNS};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("protocol error at {element}: {message}")]
pub struct ProtocolError {
    /// Path of the offending or missing element.
    pub element: String,
    pub message: String,
}

impl ProtocolError {
    pub fn new(element: &str, message: impl Into<String>) -> ProtocolError {
        ProtocolError {
            element: element.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OaiError {
    pub code: OaiErrorCode,
    pub message: String,
}

/// The `<request>` echo element: base URL plus the echoed attributes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RequestEcho {
    pub base_url: String,
    pub attributes: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentifyInfo {
    pub repository_name: String,
    pub base_url: String,
    pub protocol_version: String,
    pub admin_email: String,
    pub earliest_datestamp: Datestamp,
    pub deleted_record: String,
    pub granularity: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetadataFormatInfo {
    pub prefix: String,
    pub schema: String,
    pub namespace: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetInfo {
    pub spec: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordHeader {
    pub identifier: String,
    pub datestamp: Datestamp,
    pub sets: Vec<String>,
    pub deleted: bool,
}

/// One record: header plus, for non-deleted records, the raw metadata
/// payload XML (the content of `<metadata>`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OaiRecord {
    pub header: RecordHeader,
    pub metadata_xml: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenInfo {
    /// Empty string on the final page of a paginated list.
    pub value: String,
    pub complete_list_size: Option<usize>,
    pub cursor: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OaiBody {
    Errors(Vec<OaiError>),
    Identify(IdentifyInfo),
    ListMetadataFormats(Vec<MetadataFormatInfo>),
    ListSets(Vec<SetInfo>),
    ListIdentifiers {
        headers: Vec<RecordHeader>,
        token: Option<TokenInfo>,
    },
    ListRecords {
        records: Vec<OaiRecord>,
        token: Option<TokenInfo>,
    },
    GetRecord(OaiRecord),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OaiResponse {
    pub response_date: Datestamp,
    pub request: RequestEcho,
    pub body: OaiBody,
}

impl OaiResponse {
    pub fn errors(&self) -> Option<&[OaiError]> {
        match &self.body {
            OaiBody::Errors(errors) => Some(errors),
            _ => None,
        }
    }

    pub fn has_error(&self, code: OaiErrorCode) -> bool {
        self.errors()
            .is_some_and(|errs| errs.iter().any(|e| e.code == code))
    }
}

// ---------------------------------------------------------------------
// render
// ---------------------------------------------------------------------

/// Serialize a response envelope. Metadata payloads are embedded as-is.
pub fn render_oai_response(resp: &OaiResponse) -> String {
    let mut writer = Writer::new(Vec::new());
    writer
        .write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))
        .unwrap();
    let mut root = BytesStart::new("OAI-PMH");
    root.push_attribute(("xmlns", OAI_PMH_XMLNS));
    root.push_attribute(("xmlns:xsi", "http://www.w3.org/2001/XMLSchema-instance"));
    root.push_attribute((
        "xsi:schemaLocation",
        "http://www.openarchives.org/OAI/2.0/ http://www.openarchives.org/OAI/2.0/OAI-PMH.xsd",
    ));
    writer.write_event(Event::Start(root)).unwrap();

    text_element(&mut writer, "responseDate", &resp.response_date.to_string());

    let mut request = BytesStart::new("request");
    for (k, v) in &resp.request.attributes {
        request.push_attribute((k.as_str(), sanitize_xml(v).as_ref()));
    }
    writer.write_event(Event::Start(request)).unwrap();
    writer
        .write_event(Event::Text(BytesText::new(&sanitize_xml(
            &resp.request.base_url,
        ))))
        .unwrap();
    writer
        .write_event(Event::End(BytesStart::new("request").to_end()))
        .unwrap();

    match &resp.body {
        OaiBody::Errors(errors) => {
            for e in errors {
                let mut el = BytesStart::new("error");
                el.push_attribute(("code", e.code.as_str()));
                writer.write_event(Event::Start(el)).unwrap();
                writer
                    .write_event(Event::Text(BytesText::new(&sanitize_xml(&e.message))))
                    .unwrap();
                writer
                    .write_event(Event::End(BytesStart::new("error").to_end()))
                    .unwrap();
            }
        }
        OaiBody::Identify(info) => {
            start(&mut writer, "Identify");
            text_element(&mut writer, "repositoryName", &info.repository_name);
            text_element(&mut writer, "baseURL", &info.base_url);
            text_element(&mut writer, "protocolVersion", &info.protocol_version);
            text_element(&mut writer, "adminEmail", &info.admin_email);
            text_element(
                &mut writer,
                "earliestDatestamp",
                &info.earliest_datestamp.to_string(),
            );
            text_element(&mut writer, "deletedRecord", &info.deleted_record);
            text_element(&mut writer, "granularity", &info.granularity);
            end(&mut writer, "Identify");
        }
        OaiBody::ListMetadataFormats(formats) => {
            start(&mut writer, "ListMetadataFormats");
            for f in formats {
                start(&mut writer, "metadataFormat");
                text_element(&mut writer, "metadataPrefix", &f.prefix);
                text_element(&mut writer, "schema", &f.schema);
                text_element(&mut writer, "metadataNamespace", &f.namespace);
                end(&mut writer, "metadataFormat");
            }
            end(&mut writer, "ListMetadataFormats");
        }
        OaiBody::ListSets(sets) => {
            start(&mut writer, "ListSets");
            for s in sets {
                start(&mut writer, "set");
                text_element(&mut writer, "setSpec", &s.spec);
                text_element(&mut writer, "setName", &s.name);
                end(&mut writer, "set");
            }
            end(&mut writer, "ListSets");
        }
        OaiBody::ListIdentifiers { headers, token } => {
            start(&mut writer, "ListIdentifiers");
            for h in headers {
                write_header(&mut writer, h);
            }
            if let Some(t) = token {
                write_token(&mut writer, t);
            }
            end(&mut writer, "ListIdentifiers");
        }
        OaiBody::ListRecords { records, token } => {
            start(&mut writer, "ListRecords");
            for r in records {
                write_record(&mut writer, r);
            }
            if let Some(t) = token {
                write_token(&mut writer, t);
            }
            end(&mut writer, "ListRecords");
        }
        OaiBody::GetRecord(record) => {
            start(&mut writer, "GetRecord");
            write_record(&mut writer, record);
            end(&mut writer, "GetRecord");
        }
    }

    writer
        .write_event(Event::End(BytesStart::new("OAI-PMH").to_end()))
        .unwrap();
    let mut bytes = writer.into_inner();
    bytes.push(b'\n');
    String::from_utf8(bytes).expect("writer output is UTF-8")
}

/// Replace characters that cannot appear in XML 1.0 documents; applied
/// to echoed request values so hostile queries cannot break the
/// envelope.
fn sanitize_xml(s: &str) -> std::borrow::Cow<'_, str> {
    let ok = s.chars().all(|c| {
        matches!(c, '\t' | '\n' | '\r')
            || ('\u{20}'..='\u{D7FF}').contains(&c)
            || ('\u{E000}'..='\u{FFFD}').contains(&c)
            || c >= '\u{10000}'
    });
    if ok {
        std::borrow::Cow::Borrowed(s)
    } else {
        std::borrow::Cow::Owned(
            s.chars()
                .map(|c| {
                    if matches!(c, '\t' | '\n' | '\r')
                        || ('\u{20}'..='\u{D7FF}').contains(&c)
                        || ('\u{E000}'..='\u{FFFD}').contains(&c)
                        || c >= '\u{10000}'
                    {
                        c
                    } else {
                        '\u{FFFD}'
                    }
                })
                .collect(),
        )
    }
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
    writer
        .write_event(Event::Text(BytesText::new(&sanitize_xml(text))))
        .unwrap();
    end(writer, tag);
}

fn write_header(writer: &mut Writer<Vec<u8>>, h: &RecordHeader) {
    let mut el = BytesStart::new("header");
    if h.deleted {
        el.push_attribute(("status", "deleted"));
    }
    writer.write_event(Event::Start(el)).unwrap();
    text_element(writer, "identifier", &h.identifier);
    text_element(writer, "datestamp", &h.datestamp.to_string());
    for set in &h.sets {
        text_element(writer, "setSpec", set);
    }
    end(writer, "header");
}

fn write_record(writer: &mut Writer<Vec<u8>>, r: &OaiRecord) {
    start(writer, "record");
    write_header(writer, &r.header);
    if let Some(payload) = &r.metadata_xml {
        start(writer, "metadata");
        // payload is pre-serialized XML, injected verbatim
        writer
            .get_mut()
            .extend_from_slice(payload.trim().as_bytes());
        end(writer, "metadata");
    }
    end(writer, "record");
}

fn write_token(writer: &mut Writer<Vec<u8>>, t: &TokenInfo) {
    let mut el = BytesStart::new("resumptionToken");
    if let Some(size) = t.complete_list_size {
        el.push_attribute(("completeListSize", size.to_string().as_str()));
    }
    if let Some(cursor) = t.cursor {
        el.push_attribute(("cursor", cursor.to_string().as_str()));
    }
    if t.value.is_empty() {
        writer.write_event(Event::Empty(el)).unwrap();
    } else {
        writer.write_event(Event::Start(el)).unwrap();
        writer
            .write_event(Event::Text(BytesText::new(&t.value)))
            .unwrap();
        end(writer, "resumptionToken");
    }
}

// ---------------------------------------------------------------------
// parse
// ---------------------------------------------------------------------

struct Cursor<'a> {
    reader: Reader<&'a [u8]>,
    input: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(input: &'a str) -> Cursor<'a> {
        let mut reader = Reader::from_str(input);
        reader.config_mut().trim_text(true);
        Cursor { reader, input }
    }

    fn next(&mut self) -> Result<Event<'a>, ProtocolError> {
        self.reader
            .read_event()
            .map_err(|e| ProtocolError::new("document", e.to_string()))
    }

    /// Skip to the end of `el`, returning the raw inner XML.
    fn raw_inner(&mut self, el: &BytesStart) -> Result<&'a str, ProtocolError> {
        let span = self
            .reader
            .read_to_end(el.name())
            .map_err(|e| ProtocolError::new("document", e.to_string()))?;
        Ok(&self.input[span.start as usize..span.end as usize])
    }

    fn text_until_end(&mut self, tag: &str) -> Result<String, ProtocolError> {
        let mut out = String::new();
        loop {
            match self.next()? {
                Event::Text(t) => out.push_str(
                    &t.unescape()
                        .map_err(|e| ProtocolError::new(tag, e.to_string()))?,
                ),
                Event::CData(c) => out.push_str(&String::from_utf8_lossy(&c.into_inner())),
                Event::End(e) if e.local_name().as_ref() == tag.as_bytes() => return Ok(out),
                Event::Eof => return Err(ProtocolError::new(tag, "unexpected end of document")),
                Event::Start(child) => {
                    // tolerate and skip unexpected children
                    let name = child.to_owned();
                    self.reader
                        .read_to_end(name.name())
                        .map_err(|e| ProtocolError::new(tag, e.to_string()))?;
                }
                _ => {}
            }
        }
    }
}

fn local(el: &BytesStart) -> String {
    String::from_utf8_lossy(el.local_name().as_ref()).into_owned()
}

/// Parse a response envelope. Unknown elements are skipped so foreign
/// providers with extensions still harvest.
pub fn parse_oai_response(xml: &str) -> Result<OaiResponse, ProtocolError> {
    let mut c = Cursor::new(xml);

    // find root
    loop {
        match c.next()? {
            Event::Start(el) => {
                if local(&el) != "OAI-PMH" {
                    return Err(ProtocolError::new(
                        "OAI-PMH",
                        format!("unexpected root element {:?}", local(&el)),
                    ));
                }
                break;
            }
            Event::Decl(_) | Event::Comment(_) | Event::PI(_) | Event::DocType(_) => {}
            Event::Eof => return Err(ProtocolError::new("OAI-PMH", "empty document")),
            Event::Text(_) => {}
            other => {
                return Err(ProtocolError::new(
                    "OAI-PMH",
                    format!("unexpected {other:?} before root"),
                ))
            }
        }
    }

    let mut response_date: Option<Datestamp> = None;
    let mut request: Option<RequestEcho> = None;
    let mut errors: Vec<OaiError> = Vec::new();
    let mut body: Option<OaiBody> = None;

    loop {
        match c.next()? {
            Event::Start(el) => {
                let name = local(&el);
                match name.as_str() {
                    "responseDate" => {
                        let text = c.text_until_end("responseDate")?;
                        response_date = Some(text.trim().parse().map_err(|_| {
                            ProtocolError::new("responseDate", format!("bad datestamp {text:?}"))
                        })?);
                    }
                    "request" => {
                        let mut attributes = Vec::new();
                        for attr in el.attributes() {
                            let attr = attr
                                .map_err(|e| ProtocolError::new("request", e.to_string()))?;
                            attributes.push((
                                String::from_utf8_lossy(attr.key.local_name().as_ref())
                                    .into_owned(),
                                attr.unescape_value()
                                    .map_err(|e| ProtocolError::new("request", e.to_string()))?
                                    .into_owned(),
                            ));
                        }
                        let base_url = c.text_until_end("request")?;
                        request = Some(RequestEcho {
                            base_url,
                            attributes,
                        });
                    }
                    "error" => {
                        let code_text = attr_value(&el, "code").unwrap_or_default();
                        let code = OaiErrorCode::parse(&code_text).ok_or_else(|| {
                            ProtocolError::new("error", format!("unknown error code {code_text:?}"))
                        })?;
                        let message = c.text_until_end("error")?;
                        errors.push(OaiError { code, message });
                    }
                    "Identify" => body = Some(parse_identify(&mut c)?),
                    "ListMetadataFormats" => body = Some(parse_formats(&mut c)?),
                    "ListSets" => body = Some(parse_sets(&mut c)?),
                    "ListIdentifiers" => body = Some(parse_list_identifiers(&mut c)?),
                    "ListRecords" => body = Some(parse_list_records(&mut c)?),
                    "GetRecord" => body = Some(parse_get_record(&mut c)?),
                    _ => {
                        c.raw_inner(&el)?;
                    }
                }
            }
            Event::Empty(el) => {
                if local(&el) == "error" {
                    let code_text = attr_value(&el, "code").unwrap_or_default();
                    let code = OaiErrorCode::parse(&code_text).ok_or_else(|| {
                        ProtocolError::new("error", format!("unknown error code {code_text:?}"))
                    })?;
                    errors.push(OaiError {
                        code,
                        message: String::new(),
                    });
                }
            }
            Event::End(el) if el.local_name().as_ref() == b"OAI-PMH" => break,
            Event::Eof => break,
            _ => {}
        }
    }

    let response_date =
        response_date.ok_or_else(|| ProtocolError::new("responseDate", "element is missing"))?;
    let request = request.ok_or_else(|| ProtocolError::new("request", "element is missing"))?;
    let body = if !errors.is_empty() {
        OaiBody::Errors(errors)
    } else {
        body.ok_or_else(|| ProtocolError::new("OAI-PMH", "no verb payload and no errors"))?
    };
    Ok(OaiResponse {
        response_date,
        request,
        body,
    })
}

fn attr_value(el: &BytesStart, name: &str) -> Option<String> {
    el.attributes().flatten().find_map(|a| {
        if a.key.local_name().as_ref() == name.as_bytes() {
            Some(a.unescape_value().ok()?.into_owned())
        } else {
            None
        }
    })
}

fn parse_identify(c: &mut Cursor) -> Result<OaiBody, ProtocolError> {
    let mut repository_name = String::new();
    let mut base_url = String::new();
    let mut protocol_version = String::new();
    let mut admin_email = String::new();
    let mut earliest: Option<Datestamp> = None;
    let mut deleted_record = String::new();
    let mut granularity = String::new();
    loop {
        match c.next()? {
            Event::Start(el) => {
                let name = local(&el);
                let text = c.text_until_end(&name)?;
                match name.as_str() {
                    "repositoryName" => repository_name = text,
                    "baseURL" => base_url = text,
                    "protocolVersion" => protocol_version = text,
                    "adminEmail" => admin_email = text,
                    "earliestDatestamp" => {
                        earliest = Some(text.trim().parse().map_err(|_| {
                            ProtocolError::new("earliestDatestamp", format!("bad value {text:?}"))
                        })?)
                    }
                    "deletedRecord" => deleted_record = text,
                    "granularity" => granularity = text,
                    _ => {}
                }
            }
            Event::End(el) if el.local_name().as_ref() == b"Identify" => break,
            Event::Eof => return Err(ProtocolError::new("Identify", "unexpected end")),
            _ => {}
        }
    }
    Ok(OaiBody::Identify(IdentifyInfo {
        repository_name,
        base_url,
        protocol_version,
        admin_email,
        earliest_datestamp: earliest
            .ok_or_else(|| ProtocolError::new("earliestDatestamp", "element is missing"))?,
        deleted_record,
        granularity,
    }))
}

fn parse_formats(c: &mut Cursor) -> Result<OaiBody, ProtocolError> {
    let mut formats = Vec::new();
    loop {
        match c.next()? {
            Event::Start(el) if local(&el) == "metadataFormat" => {
                let mut prefix = String::new();
                let mut schema = String::new();
                let mut namespace = String::new();
                loop {
                    match c.next()? {
                        Event::Start(child) => {
                            let name = local(&child);
                            let text = c.text_until_end(&name)?;
                            match name.as_str() {
                                "metadataPrefix" => prefix = text,
                                "schema" => schema = text,
                                "metadataNamespace" => namespace = text,
                                _ => {}
                            }
                        }
                        Event::End(e) if e.local_name().as_ref() == b"metadataFormat" => break,
                        Event::Eof => {
                            return Err(ProtocolError::new("metadataFormat", "unexpected end"))
                        }
                        _ => {}
                    }
                }
                formats.push(MetadataFormatInfo {
                    prefix,
                    schema,
                    namespace,
                });
            }
            Event::End(el) if el.local_name().as_ref() == b"ListMetadataFormats" => break,
            Event::Eof => return Err(ProtocolError::new("ListMetadataFormats", "unexpected end")),
            _ => {}
        }
    }
    Ok(OaiBody::ListMetadataFormats(formats))
}

fn parse_sets(c: &mut Cursor) -> Result<OaiBody, ProtocolError> {
    let mut sets = Vec::new();
    loop {
        match c.next()? {
            Event::Start(el) if local(&el) == "set" => {
                let mut spec = String::new();
                let mut name = String::new();
                loop {
                    match c.next()? {
                        Event::Start(child) => {
                            let child_name = local(&child);
                            let text = c.text_until_end(&child_name)?;
                            match child_name.as_str() {
                                "setSpec" => spec = text,
                                "setName" => name = text,
                                _ => {}
                            }
                        }
                        Event::End(e) if e.local_name().as_ref() == b"set" => break,
                        Event::Eof => return Err(ProtocolError::new("set", "unexpected end")),
                        _ => {}
                    }
                }
                sets.push(SetInfo { spec, name });
            }
            Event::End(el) if el.local_name().as_ref() == b"ListSets" => break,
            Event::Eof => return Err(ProtocolError::new("ListSets", "unexpected end")),
            _ => {}
        }
    }
    Ok(OaiBody::ListSets(sets))
}

fn parse_header(c: &mut Cursor, el: &BytesStart) -> Result<RecordHeader, ProtocolError> {
    let deleted = attr_value(el, "status").as_deref() == Some("deleted");
    let mut identifier = String::new();
    let mut datestamp: Option<Datestamp> = None;
    let mut sets = Vec::new();
    loop {
        match c.next()? {
            Event::Start(child) => {
                let name = local(&child);
                let text = c.text_until_end(&name)?;
                match name.as_str() {
                    "identifier" => identifier = text,
                    "datestamp" => {
                        datestamp = Some(text.trim().parse().map_err(|_| {
                            ProtocolError::new("header/datestamp", format!("bad value {text:?}"))
                        })?)
                    }
                    "setSpec" => sets.push(text),
                    _ => {}
                }
            }
            Event::End(e) if e.local_name().as_ref() == b"header" => break,
            Event::Eof => return Err(ProtocolError::new("header", "unexpected end")),
            _ => {}
        }
    }
    Ok(RecordHeader {
        identifier,
        datestamp: datestamp
            .ok_or_else(|| ProtocolError::new("header/datestamp", "element is missing"))?,
        sets,
        deleted,
    })
}

fn parse_record(c: &mut Cursor) -> Result<OaiRecord, ProtocolError> {
    let mut header: Option<RecordHeader> = None;
    let mut metadata_xml: Option<String> = None;
    loop {
        match c.next()? {
            Event::Start(el) => match local(&el).as_str() {
                "header" => header = Some(parse_header(c, &el)?),
                "metadata" => {
                    metadata_xml = Some(c.raw_inner(&el)?.trim().to_string());
                }
                _ => {
                    c.raw_inner(&el)?;
                }
            },
            Event::Empty(el) if local(&el) == "header" => {
                return Err(ProtocolError::new("header", "header has no children"))
            }
            Event::End(e) if e.local_name().as_ref() == b"record" => break,
            Event::Eof => return Err(ProtocolError::new("record", "unexpected end")),
            _ => {}
        }
    }
    Ok(OaiRecord {
        header: header.ok_or_else(|| ProtocolError::new("record/header", "element is missing"))?,
        metadata_xml,
    })
}

fn parse_token(c: &mut Cursor, el: &BytesStart, empty: bool) -> Result<TokenInfo, ProtocolError> {
    let complete_list_size = attr_value(el, "completeListSize").and_then(|v| v.parse().ok());
    let cursor = attr_value(el, "cursor").and_then(|v| v.parse().ok());
    let value = if empty {
        String::new()
    } else {
        c.text_until_end("resumptionToken")?.trim().to_string()
    };
    Ok(TokenInfo {
        value,
        complete_list_size,
        cursor,
    })
}

fn parse_list_identifiers(c: &mut Cursor) -> Result<OaiBody, ProtocolError> {
    let mut headers = Vec::new();
    let mut token = None;
    loop {
        match c.next()? {
            Event::Start(el) => match local(&el).as_str() {
                "header" => headers.push(parse_header(c, &el)?),
                "resumptionToken" => token = Some(parse_token(c, &el, false)?),
                _ => {
                    c.raw_inner(&el)?;
                }
            },
            Event::Empty(el) if local(&el) == "resumptionToken" => {
                token = Some(parse_token(c, &el, true)?)
            }
            Event::End(el) if el.local_name().as_ref() == b"ListIdentifiers" => break,
            Event::Eof => return Err(ProtocolError::new("ListIdentifiers", "unexpected end")),
            _ => {}
        }
    }
    Ok(OaiBody::ListIdentifiers { headers, token })
}

fn parse_list_records(c: &mut Cursor) -> Result<OaiBody, ProtocolError> {
    let mut records = Vec::new();
    let mut token = None;
    loop {
        match c.next()? {
            Event::Start(el) => match local(&el).as_str() {
                "record" => records.push(parse_record(c)?),
                "resumptionToken" => token = Some(parse_token(c, &el, false)?),
                _ => {
                    c.raw_inner(&el)?;
                }
            },
            Event::Empty(el) if local(&el) == "resumptionToken" => {
                token = Some(parse_token(c, &el, true)?)
            }
            Event::End(el) if el.local_name().as_ref() == b"ListRecords" => break,
            Event::Eof => return Err(ProtocolError::new("ListRecords", "unexpected end")),
            _ => {}
        }
    }
    Ok(OaiBody::ListRecords { records, token })
}

fn parse_get_record(c: &mut Cursor) -> Result<OaiBody, ProtocolError> {
    let mut record = None;
    loop {
        match c.next()? {
            Event::Start(el) if local(&el) == "record" => record = Some(parse_record(c)?),
            Event::Start(el) => {
                c.raw_inner(&el)?;
            }
            Event::End(el) if el.local_name().as_ref() == b"GetRecord" => break,
            Event::Eof => return Err(ProtocolError::new("GetRecord", "unexpected end")),
            _ => {}
        }
    }
    Ok(OaiBody::GetRecord(record.ok_or_else(|| {
        ProtocolError::new("GetRecord/record", "element is missing")
    })?))
}
