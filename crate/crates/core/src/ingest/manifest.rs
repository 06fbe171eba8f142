//! CSV manifest scanning: maps site data trees to profile fields.
//!
//! Fixed header: `sourcePath,title,dateIssued,type,site,detector,rcut,
//! altitude`, then any number of extra columns whose cells hold
//! `element.qualifier=value` (or `element=value`) statements. One data
//! row per item. `sourcePath` is a file (one bitstream) or a directory
//! (every regular file directly inside, sorted by name), resolved
//! relative to the manifest's own directory.

use std::path::{Path, PathBuf};

use crate::metadata::{LagoProfile, MetadataField, MetadataRecord};

use super::{ItemDescriptor, SourceFile};

pub const FIXED_COLUMNS: [&str; 8] = [
    "sourcePath",
    "title",
    "dateIssued",
    "type",
    "site",
    "detector",
    "rcut",
    "altitude",
];

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {detail}")]
    Unreadable { path: PathBuf, detail: String },
    #[error("manifest has a header but no data rows")]
    Empty,
    #[error("manifest header must start with {expected:?}, got {got:?}", expected = FIXED_COLUMNS)]
    BadHeader { got: Vec<String> },
    #[error("csv parse error: {0}")]
    Csv(String),
}

/// A row that was excluded, with why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based data row number (header not counted).
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct ScanReport {
    pub descriptors: Vec<ItemDescriptor>,
    pub row_errors: Vec<RowError>,
}

/// Read a manifest and resolve every row. Rows that fail validation or
/// reference missing sources are excluded and reported with their row
/// number; good rows become descriptors.
pub fn scan_manifest(csv_path: &Path, profile: &LagoProfile) -> Result<ScanReport, ManifestError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(csv_path)
        .map_err(|e| ManifestError::Unreadable {
            path: csv_path.to_path_buf(),
            detail: e.to_string(),
        })?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| ManifestError::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.len() < FIXED_COLUMNS.len()
        || !headers
            .iter()
            .zip(FIXED_COLUMNS.iter())
            .all(|(h, f)| h == f)
    {
        return Err(ManifestError::BadHeader { got: headers });
    }

    let base_dir = csv_path.parent().unwrap_or_else(|| Path::new("."));
    let mut report = ScanReport::default();
    let mut row_number = 0usize;
    for row in reader.records() {
        row_number += 1;
        let row = row.map_err(|e| ManifestError::Csv(e.to_string()))?;
        match resolve_row(&row, row_number, base_dir, profile) {
            Ok(descriptor) => report.descriptors.push(descriptor),
            Err(message) => report.row_errors.push(RowError {
                row: row_number,
                message,
            }),
        }
    }
    if row_number == 0 {
        return Err(ManifestError::Empty);
    }
    Ok(report)
}

fn resolve_row(
    row: &csv::StringRecord,
    row_number: usize,
    base_dir: &Path,
    profile: &LagoProfile,
) -> Result<ItemDescriptor, String> {
    let cell = |i: usize| row.get(i).unwrap_or("").trim();

    let mut record = MetadataRecord::new();
    let mut push = |element: &str, qualifier: Option<&str>, value: &str| -> Result<(), String> {
        if value.is_empty() {
            return Ok(());
        }
        let field = MetadataField::new(element, qualifier, value, None)
            .map_err(|e| format!("column {}: {e}", crate::metadata::pair_path(element, qualifier)))?;
        record.push(field);
        Ok(())
    };
    push("title", None, cell(1))?;
    push("date", Some("issued"), cell(2))?;
    push("type", None, cell(3))?;
    push("coverage", Some("site"), cell(4))?;
    push("lago", Some("detector"), cell(5))?;
    push("lago", Some("rcut"), cell(6))?;
    push("lago", Some("altitude"), cell(7))?;

    for i in FIXED_COLUMNS.len()..row.len() {
        let extra = cell(i);
        if extra.is_empty() {
            continue;
        }
        let (key, value) = extra
            .split_once('=')
            .ok_or_else(|| format!("extra cell {extra:?} is not element[.qualifier]=value"))?;
        let (element, qualifier) = match key.split_once('.') {
            Some((e, q)) => (e, Some(q)),
            None => (key, None),
        };
        push(element, qualifier, value)?;
    }

    let validation = crate::metadata::validate_record(&record, profile);
    if !validation.ok {
        return Err(validation.summary());
    }

    let source = cell(0);
    if source.is_empty() {
        return Err("sourcePath is empty".to_string());
    }
    let source_path = base_dir.join(source);
    let files = collect_sources(&source_path)?;

    Ok(ItemDescriptor {
        row: row_number,
        record,
        files,
    })
}

fn collect_sources(path: &Path) -> Result<Vec<SourceFile>, String> {
    let meta = std::fs::metadata(path)
        .map_err(|_| format!("source missing: {}", path.display()))?;
    if meta.is_file() {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .ok_or_else(|| format!("source {} has no file name", path.display()))?;
        return Ok(vec![SourceFile {
            name,
            path: path.to_path_buf(),
        }]);
    }
    let mut files = Vec::new();
    let entries =
        std::fs::read_dir(path).map_err(|e| format!("cannot list {}: {e}", path.display()))?;
    for entry in entries {
        let entry = entry.map_err(|e| e.to_string())?;
        if entry.path().is_file() {
            files.push(SourceFile {
                name: entry.file_name().to_string_lossy().into_owned(),
                path: entry.path(),
            });
        }
    }
    files.sort_by(|a, b| a.name.cmp(&b.name));
    if files.is_empty() {
        return Err(format!("source directory {} holds no files", path.display()));
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metadata::LagoProfile;

    const HEADER: &str = "sourcePath,title,dateIssued,type,site,detector,rcut,altitude";

    fn write_manifest(dir: &Path, rows: &[String]) -> PathBuf {
        let path = dir.join("manifest.csv");
        let mut text = String::from(HEADER);
        text.push('\n');
        for row in rows {
            text.push_str(row);
            text.push('\n');
        }
        std::fs::write(&path, text).unwrap();
        path
    }

    fn touch(dir: &Path, name: &str) {
        std::fs::write(dir.join(name), format!("bytes:{name}")).unwrap();
    }

    #[test]
    fn three_valid_rows_give_three_descriptors() {
        let dir = tempfile::tempdir().unwrap();
        for n in ["a.dat", "b.dat", "c.dat"] {
            touch(dir.path(), n);
        }
        let manifest = write_manifest(
            dir.path(),
            &[
                "a.dat,Run A,2016-01-01,raw,chacaltaya,wcd-01,10.8,5240".to_string(),
                "b.dat,Run B,2016-01-02,analysis,chacaltaya,wcd-01,10.8,5240".to_string(),
                "c.dat,Run C,2016-01-03,simulation,chacaltaya,wcd-01,10.8,5240".to_string(),
            ],
        );
        let report = scan_manifest(&manifest, &LagoProfile::default_profile()).unwrap();
        assert_eq!(report.descriptors.len(), 3);
        assert!(report.row_errors.is_empty());
        assert_eq!(report.descriptors[0].files.len(), 1);
        assert_eq!(report.descriptors[0].files[0].name, "a.dat");
    }

    #[test]
    fn bad_vocabulary_row_is_excluded_with_row_number() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "a.dat");
        touch(dir.path(), "b.dat");
        let manifest = write_manifest(
            dir.path(),
            &[
                "a.dat,Run A,2016-01-01,raw,chacaltaya,wcd-01,10.8,5240".to_string(),
                "b.dat,Run B,2016-01-02,cooked,chacaltaya,wcd-01,10.8,5240".to_string(),
            ],
        );
        let report = scan_manifest(&manifest, &LagoProfile::default_profile()).unwrap();
        assert_eq!(report.descriptors.len(), 1);
        assert_eq!(report.row_errors.len(), 1);
        assert_eq!(report.row_errors[0].row, 2);
        assert!(report.row_errors[0].message.contains("vocabulary"));
    }

    #[test]
    fn missing_source_is_excluded_with_message() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_manifest(
            dir.path(),
            &["ghost.dat,Run,2016-01-01,raw,site,det,10,100".to_string()],
        );
        let report = scan_manifest(&manifest, &LagoProfile::default_profile()).unwrap();
        assert!(report.descriptors.is_empty());
        assert_eq!(report.row_errors.len(), 1);
        assert!(report.row_errors[0].message.contains("source missing"));
    }

    #[test]
    fn directory_source_collects_sorted_files() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("run042");
        std::fs::create_dir(&data).unwrap();
        touch(&data, "z.dat");
        touch(&data, "a.dat");
        let manifest = write_manifest(
            dir.path(),
            &["run042,Run,2016-01-01,raw,site,det,10,100".to_string()],
        );
        let report = scan_manifest(&manifest, &LagoProfile::default_profile()).unwrap();
        let names: Vec<&str> = report.descriptors[0]
            .files
            .iter()
            .map(|f| f.name.as_str())
            .collect();
        assert_eq!(names, vec!["a.dat", "z.dat"]);
    }

    #[test]
    fn extra_columns_become_fields() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "a.dat");
        let path = dir.path().join("manifest.csv");
        std::fs::write(
            &path,
            format!(
                "{HEADER},extra1,extra2\n\
                 a.dat,Run,2016-01-01,raw,site,det,10,100,creator=Collaboration,description.note=night run\n"
            ),
        )
        .unwrap();
        let report = scan_manifest(&path, &LagoProfile::default_profile()).unwrap();
        let record = &report.descriptors[0].record;
        assert_eq!(record.first_value("creator", None), Some("Collaboration"));
        assert_eq!(
            record.first_value("description", Some("note")),
            Some("night run")
        );
    }

    #[test]
    fn header_and_empty_manifest_errors() {
        let dir = tempfile::tempdir().unwrap();
        let bad_header = dir.path().join("bad.csv");
        std::fs::write(&bad_header, "path,name\nx,y\n").unwrap();
        assert!(matches!(
            scan_manifest(&bad_header, &LagoProfile::default_profile()),
            Err(ManifestError::BadHeader { .. })
        ));

        let empty = dir.path().join("empty.csv");
        std::fs::write(&empty, format!("{HEADER}\n")).unwrap();
        assert!(matches!(
            scan_manifest(&empty, &LagoProfile::default_profile()),
            Err(ManifestError::Empty)
        ));

        assert!(matches!(
            scan_manifest(&dir.path().join("absent.csv"), &LagoProfile::default_profile()),
            Err(ManifestError::Unreadable { .. })
        ));
    }
}
