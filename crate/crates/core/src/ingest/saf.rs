//! Simple Archive Format packages: one directory per item holding
//! `dublin_core.xml`, `metadata_lago.xml`, a `contents` manifest, and
//! the data files themselves. The on-disk layout is documented
//! bit-exactly in `docs/FORMATS.md`; building the same input twice
//! produces byte-identical trees.

use std::collections::BTreeMap;
use std::io::{Cursor, Read, Write};
use std::path::{Path, PathBuf};

use quick_xml::events::{BytesDecl, BytesStart, BytesText, Event};
use quick_xml::Reader;
use quick_xml::Writer;

use crate::metadata::{dc_flat_view, parse_lago_document, to_lago_xml, MetadataRecord};

use super::ItemDescriptor;

pub const DUBLIN_CORE_FILE: &str = "dublin_core.xml";
pub const METADATA_LAGO_FILE: &str = "metadata_lago.xml";
pub const CONTENTS_FILE: &str = "contents";

const CONTROL_FILES: [&str; 3] = [DUBLIN_CORE_FILE, METADATA_LAGO_FILE, CONTENTS_FILE];

/// Parsed, validated content of one SAF item directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafPackage {
    pub record: MetadataRecord,
    /// Data files in `contents` order.
    pub files: Vec<(String, Vec<u8>)>,
}

#[derive(Debug, thiserror::Error)]
pub enum SafError {
    #[error("output directory {0} is not empty")]
    OutDirNotEmpty(PathBuf),
    #[error("saf i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Why a package failed to parse, naming the first offending entry.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PackageError {
    #[error("not a readable ZIP archive: {detail}")]
    BadZip { detail: String },
    #[error("bad package layout at {path:?}: {detail}")]
    Layout { path: String, detail: String },
}

impl PackageError {
    fn layout(path: &str, detail: impl Into<String>) -> PackageError {
        PackageError::Layout {
            path: path.to_string(),
            detail: detail.into(),
        }
    }

    /// The first offending entry, when the failure is about one.
    pub fn offending_path(&self) -> Option<&str> {
        match self {
            PackageError::Layout { path, .. } => Some(path),
            PackageError::BadZip { .. } => None,
        }
    }
}

/// Write one SAF package directory. The record is canonicalized first;
/// output is byte-deterministic for equal inputs.
pub fn write_saf_package(
    dir: &Path,
    record: &MetadataRecord,
    files: &[(String, Vec<u8>)],
) -> Result<(), SafError> {
    std::fs::create_dir_all(dir)?;
    let record = record.canonicalize();
    std::fs::write(dir.join(DUBLIN_CORE_FILE), dublin_core_xml(&record))?;
    std::fs::write(dir.join(METADATA_LAGO_FILE), to_lago_xml(&record))?;
    let mut contents = String::new();
    for (name, _) in files {
        contents.push_str(name);
        contents.push_str("\tbundle:ORIGINAL\n");
    }
    std::fs::write(dir.join(CONTENTS_FILE), contents)?;
    for (name, bytes) in files {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

/// Build one package per descriptor under `out_dir`, named
/// `item_<zero-padded index>`. `out_dir` must be empty or absent.
pub fn build_saf(descriptors: &[ItemDescriptor], out_dir: &Path) -> Result<Vec<PathBuf>, SafError> {
    ensure_empty_dir(out_dir)?;
    let mut dirs = Vec::with_capacity(descriptors.len());
    for (index, descriptor) in descriptors.iter().enumerate() {
        let dir = out_dir.join(format!("item_{index:04}"));
        let mut files = Vec::with_capacity(descriptor.files.len());
        for source in &descriptor.files {
            files.push((source.name.clone(), std::fs::read(&source.path)?));
        }
        write_saf_package(&dir, &descriptor.record, &files)?;
        dirs.push(dir);
    }
    Ok(dirs)
}

pub fn ensure_empty_dir(dir: &Path) -> Result<(), SafError> {
    match std::fs::read_dir(dir) {
        Ok(mut entries) => {
            if entries.next().is_some() {
                return Err(SafError::OutDirNotEmpty(dir.to_path_buf()));
            }
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            std::fs::create_dir_all(dir)?;
        }
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

/// DSpace-style batch metadata file: one `dcvalue` per flattened field.
fn dublin_core_xml(record: &MetadataRecord) -> String {
    let mut writer = Writer::new_with_indent(Vec::new(), b' ', 2);
    writer
        .write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))
        .unwrap();
    let mut root = BytesStart::new("dublin_core");
    root.push_attribute(("schema", "dc"));
    writer.write_event(Event::Start(root)).unwrap();
    for (element, value, language) in dc_flat_view(record) {
        let mut el = BytesStart::new("dcvalue");
        el.push_attribute(("element", element));
        el.push_attribute(("qualifier", "none"));
        if let Some(lang) = language {
            el.push_attribute(("language", lang));
        }
        writer.write_event(Event::Start(el)).unwrap();
        writer
            .write_event(Event::Text(BytesText::new(&value)))
            .unwrap();
        writer
            .write_event(Event::End(BytesStart::new("dcvalue").to_end()))
            .unwrap();
    }
    writer
        .write_event(Event::End(BytesStart::new("dublin_core").to_end()))
        .unwrap();
    let mut bytes = writer.into_inner();
    bytes.push(b'\n');
    String::from_utf8(bytes).expect("writer output is UTF-8")
}

fn check_dublin_core_xml(path: &str, text: &str) -> Result<(), PackageError> {
    let mut reader = Reader::from_str(text);
    let mut saw_root = false;
    loop {
        match reader.read_event() {
            Ok(Event::Start(el)) | Ok(Event::Empty(el)) => {
                if !saw_root {
                    if el.local_name().as_ref() != b"dublin_core" {
                        return Err(PackageError::layout(
                            path,
                            "root element must be dublin_core",
                        ));
                    }
                    saw_root = true;
                }
            }
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(e) => return Err(PackageError::layout(path, e.to_string())),
        }
    }
    if !saw_root {
        return Err(PackageError::layout(path, "file is empty"));
    }
    Ok(())
}

fn is_safe_relative_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('/')
        && !name.contains('\\')
        && !name.contains('\0')
        && name
            .split('/')
            .all(|seg| !seg.is_empty() && seg != "." && seg != "..")
}

/// Validate and assemble a package from its file map. Shared by the
/// directory reader and the ZIP parser.
fn assemble(files: BTreeMap<String, Vec<u8>>) -> Result<SafPackage, PackageError> {
    for control in CONTROL_FILES {
        if !files.contains_key(control) {
            return Err(PackageError::layout(control, "control file is missing"));
        }
    }

    let contents_text = String::from_utf8(files[CONTENTS_FILE].clone())
        .map_err(|_| PackageError::layout(CONTENTS_FILE, "contents is not UTF-8"))?;
    let mut listed = Vec::new();
    for line in contents_text.lines() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let name = line.split('\t').next().unwrap_or_default();
        if !is_safe_relative_name(name) {
            return Err(PackageError::layout(
                name,
                "contents names a non-relative or unsafe path",
            ));
        }
        if CONTROL_FILES.contains(&name) {
            return Err(PackageError::layout(name, "contents lists a control file"));
        }
        if listed.contains(&name.to_string()) {
            return Err(PackageError::layout(name, "contents lists a file twice"));
        }
        listed.push(name.to_string());
    }

    for name in &listed {
        if !files.contains_key(name) {
            return Err(PackageError::layout(
                name,
                "file is listed in contents but missing from the package",
            ));
        }
    }
    for name in files.keys() {
        if CONTROL_FILES.contains(&name.as_str()) {
            continue;
        }
        if !listed.contains(name) {
            return Err(PackageError::layout(
                name,
                "file is present but not listed in contents",
            ));
        }
    }

    check_dublin_core_xml(
        DUBLIN_CORE_FILE,
        &String::from_utf8(files[DUBLIN_CORE_FILE].clone())
            .map_err(|_| PackageError::layout(DUBLIN_CORE_FILE, "not UTF-8"))?,
    )?;

    let lago_text = String::from_utf8(files[METADATA_LAGO_FILE].clone())
        .map_err(|_| PackageError::layout(METADATA_LAGO_FILE, "not UTF-8"))?;
    let record = parse_lago_document(&lago_text)
        .map_err(|e| PackageError::layout(METADATA_LAGO_FILE, e.to_string()))?
        .record;

    let mut ordered = Vec::with_capacity(listed.len());
    let mut files = files;
    for name in listed {
        let bytes = files.remove(&name).expect("checked above");
        ordered.push((name, bytes));
    }
    Ok(SafPackage {
        record,
        files: ordered,
    })
}

/// Read and validate one SAF item directory.
pub fn read_saf_dir(dir: &Path) -> Result<SafPackage, PackageError> {
    let mut files = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| PackageError::Layout {
        path: dir.display().to_string(),
        detail: e.to_string(),
    })?;
    for entry in entries {
        let entry = entry.map_err(|e| PackageError::Layout {
            path: dir.display().to_string(),
            detail: e.to_string(),
        })?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.path().is_dir() {
            return Err(PackageError::layout(&name, "subdirectories are not allowed"));
        }
        let bytes = std::fs::read(entry.path()).map_err(|e| PackageError::Layout {
            path: name.clone(),
            detail: e.to_string(),
        })?;
        files.insert(name, bytes);
    }
    assemble(files)
}

/// Zip a SAF directory with its directory name as the single top-level
/// entry prefix, the shape `parse_saf_zip` expects.
pub fn zip_saf_dir(dir: &Path) -> Result<Vec<u8>, SafError> {
    let top = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "item".to_string());
    let mut names: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();

    let mut writer = zip::ZipWriter::new(Cursor::new(Vec::new()));
    let options = zip::write::SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Deflated);
    for name in names {
        writer
            .start_file(format!("{top}/{name}"), options)
            .map_err(|e| SafError::Io(std::io::Error::other(e)))?;
        let bytes = std::fs::read(dir.join(&name))?;
        writer.write_all(&bytes)?;
    }
    let cursor = writer
        .finish()
        .map_err(|e| SafError::Io(std::io::Error::other(e)))?;
    Ok(cursor.into_inner())
}

/// Parse a deposit ZIP: exactly one top-level item directory conforming
/// to the SAF layout.
pub fn parse_saf_zip(bytes: &[u8]) -> Result<SafPackage, PackageError> {
    let mut archive =
        zip::ZipArchive::new(Cursor::new(bytes)).map_err(|e| PackageError::BadZip {
            detail: e.to_string(),
        })?;
    let mut files = BTreeMap::new();
    let mut top: Option<String> = None;
    for i in 0..archive.len() {
        let mut entry = archive.by_index(i).map_err(|e| PackageError::BadZip {
            detail: e.to_string(),
        })?;
        let raw_name = entry.name().to_string();
        if raw_name.ends_with('/') {
            continue; // directory marker
        }
        if !is_safe_relative_name(&raw_name) {
            return Err(PackageError::layout(&raw_name, "unsafe path in archive"));
        }
        let (entry_top, rest) = raw_name.split_once('/').ok_or_else(|| {
            PackageError::layout(&raw_name, "entry is not inside an item directory")
        })?;
        match &top {
            None => top = Some(entry_top.to_string()),
            Some(existing) if existing == entry_top => {}
            Some(_) => {
                return Err(PackageError::layout(
                    &raw_name,
                    "archive holds more than one top-level directory",
                ))
            }
        }
        if rest.contains('/') {
            return Err(PackageError::layout(
                &raw_name,
                "nested directories are not allowed in an item",
            ));
        }
        let mut bytes = Vec::new();
        entry
            .read_to_end(&mut bytes)
            .map_err(|e| PackageError::BadZip {
                detail: e.to_string(),
            })?;
        files.insert(rest.to_string(), bytes);
    }
    if top.is_none() {
        return Err(PackageError::BadZip {
            detail: "archive is empty".to_string(),
        });
    }
    assemble(files)
}
