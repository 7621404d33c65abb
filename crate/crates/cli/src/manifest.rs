//! The manifest CSV: `id,source,organ,pixel_size,width,height,image_path,mask`.
//! The mask field is empty (no mask), an inline RLE string, or a path.
//! Relative paths resolve against the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ftu_core::{Rle, SampleMeta};
use ftu_pipeline::augment::{LabeledSample, MaskRef};

use crate::errors::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestRow {
    id: String,
    source: String,
    organ: String,
    pixel_size: f64,
    width: usize,
    height: usize,
    image_path: String,
    mask: String,
}

/// One parsed manifest entry. An empty mask field reads as an empty RLE.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub meta: SampleMeta,
    pub image_path: PathBuf,
    pub mask: MaskRef,
}

impl ManifestEntry {
    pub fn to_labeled_sample(&self) -> LabeledSample {
        LabeledSample {
            meta: self.meta.clone(),
            image_path: self.image_path.clone(),
            mask: self.mask.clone(),
        }
    }
}

/// The mask field is inline RLE iff it contains only digits and whitespace.
fn parse_mask_field(field: &str, base: &Path) -> Result<MaskRef> {
    let trimmed = field.trim();
    if trimmed.is_empty() {
        return Ok(MaskRef::Rle(Rle::empty()));
    }
    if trimmed.chars().all(|c| c.is_ascii_digit() || c.is_whitespace()) {
        let rle = Rle::from_text(trimmed).map_err(CliError::data)?;
        return Ok(MaskRef::Rle(rle));
    }
    Ok(MaskRef::Path(resolve(base, trimmed)))
}

fn resolve(base: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads and validates a manifest. Structural problems (missing columns,
/// unreadable CSV) are config errors; bad row values are data errors.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let mut entries = Vec::new();
    for (line, row) in reader.deserialize::<ManifestRow>().enumerate() {
        let row = row.map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let context = format!("{} row {}", path.display(), line + 1);
        let source = row
            .source
            .parse()
            .map_err(|e| CliError::data(format!("{context}: {e}")))?;
        let organ = row
            .organ
            .parse()
            .map_err(|e| CliError::data(format!("{context}: {e}")))?;
        let meta = SampleMeta {
            id: row.id,
            source,
            organ,
            pixel_size: row.pixel_size,
            thickness: None,
            width: row.width,
            height: row.height,
            age: None,
            sex: None,
        };
        meta.validate().map_err(|e| CliError::data(format!("{context}: {e}")))?;
        let mask = parse_mask_field(&row.mask, &base)
            .map_err(|e| CliError::data(format!("{context}: {e}")))?;
        entries.push(ManifestEntry {
            meta,
            image_path: resolve(&base, &row.image_path),
            mask,
        });
    }
    let mut seen = std::collections::HashSet::new();
    for entry in &entries {
        if !seen.insert(entry.meta.id.as_str()) {
            return Err(CliError::data(format!(
                "{}: duplicate sample id {:?}",
                path.display(),
                entry.meta.id
            )));
        }
    }
    Ok(entries)
}

/// A writable manifest row, used by prepare and pseudo-label outputs.
#[derive(Debug, Clone, Serialize)]
pub struct OutputRow {
    pub id: String,
    pub source: String,
    pub organ: String,
    pub pixel_size: f64,
    pub width: usize,
    pub height: usize,
    pub image_path: String,
    pub mask: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub round: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empty: Option<u8>,
}

pub fn write_output_manifest(path: &Path, rows: &[OutputRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    }
    writer
        .flush()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(())
}
