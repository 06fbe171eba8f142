//! Canonical XML forms of metadata records.
//!
//! Two serializations exist: the mandatory OAI Dublin Core container
//! (`oai_dc`, lossy flattening) and the site-local `lago` document,
//! which is lossless and also carries item-level provenance and a
//! bitstream manifest when used on the OAI wire.

use quick_xml::events::{BytesDecl, BytesStart, BytesText, Event};
use quick_xml::name::ResolveResult;
use quick_xml::NsReader;
use quick_xml::Writer;

use super::{MetadataField, MetadataRecord, DC_ELEMENTS};

/// Namespace of the artifact-owned lago metadata schema.
pub const LAGO_XMLNS: &str = "urn:lago:metadata:1.0";
/// The standard OAI Dublin Core container namespace.
pub const OAI_DC_XMLNS: &str = "http://www.openarchives.org/OAI/2.0/oai_dc/";
/// Dublin Core element set namespace.
pub const DC_XMLNS: &str = "http://purl.org/dc/elements/1.1/";

const OAI_DC_SCHEMA_LOCATION: &str =
    "http://www.openarchives.org/OAI/2.0/oai_dc/ http://www.openarchives.org/OAI/2.0/oai_dc.xsd";
const XSI_XMLNS: &str = "http://www.w3.org/2001/XMLSchema-instance";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("schema error at byte {offset}: {message}")]
pub struct SchemaError {
    pub offset: u64,
    pub message: String,
}

impl SchemaError {
    fn new(offset: u64, message: impl Into<String>) -> SchemaError {
        SchemaError {
            offset,
            message: message.into(),
        }
    }
}

/// Origin provenance carried on the wire for federation loop prevention.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentOrigin {
    /// Name of the node where the item was originally created.
    pub node: String,
    /// OAI identifier the item had on its origin node.
    pub identifier: String,
}

/// Reference to one content file of an item, without the bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitstreamRef {
    pub name: String,
    pub size_bytes: u64,
    pub md5: String,
    pub media_type: String,
}

/// A full lago-format document: the record plus optional provenance and
/// bitstream manifest. SAF `metadata_lago.xml` files are record-only;
/// OAI responses carry all three parts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LagoDocument {
    pub record: MetadataRecord,
    pub origin: Option<DocumentOrigin>,
    pub bitstreams: Vec<BitstreamRef>,
}

impl LagoDocument {
    pub fn record_only(record: MetadataRecord) -> LagoDocument {
        LagoDocument {
            record,
            origin: None,
            bitstreams: Vec::new(),
        }
    }

    /// Serialize with a leading XML declaration, 2-space indent, `\n`
    /// line ends, and fixed attribute order. Byte-deterministic for
    /// equal inputs.
    pub fn to_xml(&self) -> String {
        self.serialize(true)
    }

    /// Like `to_xml` but without the XML declaration, for embedding in
    /// another document (OAI `<metadata>` payloads).
    pub fn to_xml_fragment(&self) -> String {
        self.serialize(false)
    }

    fn serialize(&self, with_decl: bool) -> String {
        let mut writer = Writer::new_with_indent(Vec::new(), b' ', 2);
        if with_decl {
            writer
                .write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))
                .unwrap();
        }
        let mut root = BytesStart::new("lago");
        root.push_attribute(("xmlns", LAGO_XMLNS));
        writer.write_event(Event::Start(root)).unwrap();

        if let Some(origin) = &self.origin {
            let mut el = BytesStart::new("origin");
            el.push_attribute(("node", origin.node.as_str()));
            el.push_attribute(("identifier", origin.identifier.as_str()));
            writer.write_event(Event::Empty(el)).unwrap();
        }
        for field in self.record.fields() {
            let mut el = BytesStart::new("field");
            el.push_attribute(("element", field.element()));
            if let Some(q) = field.qualifier() {
                el.push_attribute(("qualifier", q));
            }
            if let Some(l) = field.language() {
                el.push_attribute(("lang", l));
            }
            writer.write_event(Event::Start(el)).unwrap();
            writer
                .write_event(Event::Text(BytesText::new(field.value())))
                .unwrap();
            writer
                .write_event(Event::End(BytesStart::new("field").to_end()))
                .unwrap();
        }
        for b in &self.bitstreams {
            let mut el = BytesStart::new("bitstream");
            el.push_attribute(("name", b.name.as_str()));
            el.push_attribute(("size", b.size_bytes.to_string().as_str()));
            el.push_attribute(("md5", b.md5.as_str()));
            el.push_attribute(("mediaType", b.media_type.as_str()));
            writer.write_event(Event::Empty(el)).unwrap();
        }

        writer
            .write_event(Event::End(BytesStart::new("lago").to_end()))
            .unwrap();
        let mut bytes = writer.into_inner();
        if with_decl {
            bytes.push(b'\n');
        }
        String::from_utf8(bytes).expect("writer output is UTF-8")
    }
}

/// Serialize a bare record as a lago document.
pub fn to_lago_xml(record: &MetadataRecord) -> String {
    LagoDocument::record_only(record.clone()).to_xml()
}

/// Parse a lago document and return only its record.
pub fn parse_lago_xml(xml: &str) -> Result<MetadataRecord, SchemaError> {
    parse_lago_document(xml).map(|doc| doc.record)
}

/// Parse a full lago document. Only documents whose root element is
/// `lago` in [`LAGO_XMLNS`] are accepted; unknown child elements are
/// skipped, malformed `field` attributes are errors.
pub fn parse_lago_document(xml: &str) -> Result<LagoDocument, SchemaError> {
    let mut reader = NsReader::from_str(xml);
    reader.config_mut().trim_text(true);

    let mut doc = LagoDocument::default();
    let mut saw_root = false;

    loop {
        let pos = reader.buffer_position();
        let (ns, event) = match reader.read_resolved_event() {
            Ok(pair) => pair,
            Err(e) => return Err(SchemaError::new(reader.buffer_position(), e.to_string())),
        };
        let is_empty = matches!(&event, Event::Empty(_));
        match &event {
            Event::Decl(_) | Event::Comment(_) | Event::PI(_) | Event::DocType(_) => continue,
            Event::Text(t) => {
                let text = t
                    .unescape()
                    .map_err(|e| SchemaError::new(pos, e.to_string()))?;
                if !text.trim().is_empty() {
                    return Err(SchemaError::new(pos, "unexpected text outside fields"));
                }
            }
            Event::Start(el) | Event::Empty(el) => {
                let local = el.local_name();
                let local = std::str::from_utf8(local.as_ref()).unwrap_or("");
                if !saw_root {
                    if local != "lago" {
                        return Err(SchemaError::new(
                            pos,
                            format!("unknown root element {local:?}, expected lago"),
                        ));
                    }
                    match &ns {
                        ResolveResult::Bound(b) if b.as_ref() == LAGO_XMLNS.as_bytes() => {}
                        _ => {
                            return Err(SchemaError::new(
                                pos,
                                format!("root element is not in the {LAGO_XMLNS} namespace"),
                            ))
                        }
                    }
                    saw_root = true;
                    continue;
                }
                match local {
                    "field" => {
                        let (element, qualifier, lang) = read_field_attrs(&reader, el, pos)?;
                        let value = if is_empty {
                            String::new()
                        } else {
                            read_element_text(&mut reader, "field")?
                        };
                        let field = MetadataField::new(
                            &element,
                            qualifier.as_deref(),
                            &value,
                            lang.as_deref(),
                        )
                        .map_err(|e| SchemaError::new(pos, e.to_string()))?;
                        doc.record.push(field);
                    }
                    "origin" => {
                        let mut node = None;
                        let mut identifier = None;
                        for attr in el.attributes() {
                            let attr = attr.map_err(|e| SchemaError::new(pos, e.to_string()))?;
                            let key = local_attr_name(&attr.key);
                            let value = attr
                                .decode_and_unescape_value(reader.decoder())
                                .map_err(|e| SchemaError::new(pos, e.to_string()))?
                                .into_owned();
                            match key.as_str() {
                                "node" => node = Some(value),
                                "identifier" => identifier = Some(value),
                                _ => {}
                            }
                        }
                        match (node, identifier) {
                            (Some(node), Some(identifier)) => {
                                doc.origin = Some(DocumentOrigin { node, identifier });
                            }
                            _ => {
                                return Err(SchemaError::new(
                                    pos,
                                    "origin element requires node and identifier attributes",
                                ))
                            }
                        }
                        if !is_empty {
                            reader
                                .read_to_end(el.name())
                                .map_err(|e| SchemaError::new(pos, e.to_string()))?;
                        }
                    }
                    "bitstream" => {
                        let b = read_bitstream_attrs(&reader, el, pos)?;
                        doc.bitstreams.push(b);
                        if !is_empty {
                            reader
                                .read_to_end(el.name())
                                .map_err(|e| SchemaError::new(pos, e.to_string()))?;
                        }
                    }
                    _ => {
                        // Forward compatibility: skip unknown elements.
                        if !is_empty {
                            reader
                                .read_to_end(el.name())
                                .map_err(|e| SchemaError::new(pos, e.to_string()))?;
                        }
                    }
                }
            }
            Event::End(_) => {}
            Event::Eof => break,
            _ => {}
        }
    }

    if !saw_root {
        return Err(SchemaError::new(
            reader.buffer_position(),
            "document has no root element",
        ));
    }
    Ok(doc)
}

fn local_attr_name(key: &quick_xml::name::QName) -> String {
    let local = key.local_name();
    String::from_utf8_lossy(local.as_ref()).into_owned()
}

fn read_field_attrs(
    reader: &NsReader<&[u8]>,
    el: &BytesStart,
    pos: u64,
) -> Result<(String, Option<String>, Option<String>), SchemaError> {
    let mut element = None;
    let mut qualifier = None;
    let mut lang = None;
    for attr in el.attributes() {
        let attr = attr.map_err(|e| SchemaError::new(pos, e.to_string()))?;
        let key = local_attr_name(&attr.key);
        let value = attr
            .decode_and_unescape_value(reader.decoder())
            .map_err(|e| SchemaError::new(pos, e.to_string()))?
            .into_owned();
        match key.as_str() {
            "element" => element = Some(value),
            "qualifier" => qualifier = Some(value),
            "lang" => lang = Some(value),
            other => {
                return Err(SchemaError::new(
                    pos,
                    format!("unexpected field attribute {other:?}"),
                ))
            }
        }
    }
    match element {
        Some(element) => Ok((element, qualifier, lang)),
        None => Err(SchemaError::new(pos, "field is missing element attribute")),
    }
}

fn read_bitstream_attrs(
    reader: &NsReader<&[u8]>,
    el: &BytesStart,
    pos: u64,
) -> Result<BitstreamRef, SchemaError> {
    let mut name = None;
    let mut size = None;
    let mut md5 = None;
    let mut media_type = None;
    for attr in el.attributes() {
        let attr = attr.map_err(|e| SchemaError::new(pos, e.to_string()))?;
        let key = local_attr_name(&attr.key);
        let value = attr
            .decode_and_unescape_value(reader.decoder())
            .map_err(|e| SchemaError::new(pos, e.to_string()))?
            .into_owned();
        match key.as_str() {
            "name" => name = Some(value),
            "size" => {
                size = Some(value.parse::<u64>().map_err(|_| {
                    SchemaError::new(pos, format!("bitstream size {value:?} is not an integer"))
                })?)
            }
            "md5" => md5 = Some(value),
            "mediaType" => media_type = Some(value),
            _ => {}
        }
    }
    match (name, size, md5) {
        (Some(name), Some(size_bytes), Some(md5)) => Ok(BitstreamRef {
            name,
            size_bytes,
            md5,
            media_type: media_type.unwrap_or_else(|| "application/octet-stream".to_string()),
        }),
        _ => Err(SchemaError::new(
            pos,
            "bitstream element requires name, size and md5 attributes",
        )),
    }
}

fn read_element_text(reader: &mut NsReader<&[u8]>, closing: &str) -> Result<String, SchemaError> {
    let mut out = String::new();
    loop {
        let pos = reader.buffer_position();
        let event = reader
            .read_event()
            .map_err(|e| SchemaError::new(reader.buffer_position(), e.to_string()))?;
        match event {
            Event::Text(t) => {
                out.push_str(&t.unescape().map_err(|e| SchemaError::new(pos, e.to_string()))?)
            }
            Event::CData(c) => out.push_str(&String::from_utf8_lossy(&c.into_inner())),
            Event::End(e) if e.local_name().as_ref() == closing.as_bytes() => return Ok(out),
            Event::Eof => return Err(SchemaError::new(pos, format!("unclosed {closing} element"))),
            Event::Start(_) | Event::Empty(_) => {
                return Err(SchemaError::new(
                    pos,
                    format!("unexpected child element inside {closing}"),
                ))
            }
            _ => {}
        }
    }
}

/// Serialize the oai_dc projection of a record: qualified fields flatten
/// to their base Dublin Core element, non-DC fields become
/// `dc:description` statements of the form `element.qualifier=value`.
pub fn to_oai_dc_xml(record: &MetadataRecord) -> String {
    let record = record.canonicalize();
    let mut writer = Writer::new_with_indent(Vec::new(), b' ', 2);
    let mut root = BytesStart::new("oai_dc:dc");
    root.push_attribute(("xmlns:oai_dc", OAI_DC_XMLNS));
    root.push_attribute(("xmlns:dc", DC_XMLNS));
    root.push_attribute(("xmlns:xsi", XSI_XMLNS));
    root.push_attribute(("xsi:schemaLocation", OAI_DC_SCHEMA_LOCATION));
    writer.write_event(Event::Start(root)).unwrap();

    for (element, value, language) in dc_flat_view(&record) {
        let tag = format!("dc:{element}");
        let mut el = BytesStart::new(tag.clone());
        if let Some(lang) = language {
            el.push_attribute(("xml:lang", lang));
        }
        writer.write_event(Event::Start(el)).unwrap();
        writer
            .write_event(Event::Text(BytesText::new(&value)))
            .unwrap();
        writer
            .write_event(Event::End(BytesStart::new(tag).to_end()))
            .unwrap();
    }

    writer
        .write_event(Event::End(BytesStart::new("oai_dc:dc").to_end()))
        .unwrap();
    String::from_utf8(writer.into_inner()).expect("writer output is UTF-8")
}

/// The unqualified-mapping rule, shared by the oai_dc wire form and the
/// SAF `dublin_core.xml` file: qualified Dublin Core fields flatten to
/// their base element, non-DC fields become `description` values of the
/// form `element.qualifier=value`.
pub fn dc_flat_view(record: &MetadataRecord) -> Vec<(&'static str, String, Option<&str>)> {
    record
        .fields()
        .iter()
        .map(|field| {
            match DC_ELEMENTS.iter().find(|e| **e == field.element()) {
                Some(element) => (*element, field.value().to_string(), field.language()),
                None => {
                    let key = super::pair_path(field.element(), field.qualifier());
                    (
                        "description",
                        format!("{}={}", key, field.value()),
                        field.language(),
                    )
                }
            }
        })
        .collect()
}
