//! `ftu prepare`: rescale every manifest sample to its target pixel size
//! and optionally histogram-match it against a reference pool, writing the
//! rasters plus a manifest that records applied factors and references.

use std::path::Path;

use rayon::prelude::*;

use ftu_core::io::{read_image_png, read_mask_png, write_image_png, write_mask_png};
use ftu_core::{rle_decode, BinaryMask, SeededRng};
use ftu_pipeline::augment::MaskRef;
use ftu_pipeline::color::match_to_random_reference;
use ftu_pipeline::scale::{effective_scale, prepare_sample};

use crate::config::PipelineConfig;
use crate::errors::{CliError, Result};
use crate::manifest::{read_manifest, write_output_manifest, ManifestEntry, OutputRow};
use crate::stage::StagedDir;

pub fn run(config: &PipelineConfig, manifest_path: &Path, output: &Path) -> Result<()> {
    let entries = read_manifest(manifest_path)?;
    preflight(&entries)?;
    let references = load_reference_pool(config)?;

    let staged = StagedDir::new(output)?;
    let image_dir = staged.subdir(&config.io.image_dir)?;
    let mask_dir = staged.subdir(&config.io.mask_dir)?;
    let root_rng = SeededRng::new(config.seed).split("prepare");

    let rows: Vec<OutputRow> = entries
        .par_iter()
        .map(|entry| -> Result<OutputRow> {
            let id = &entry.meta.id;
            let image = read_image_png(&entry.image_path)
                .map_err(|e| CliError::data(format!("sample {id:?}: {e}")))?;
            let mask = load_mask(entry)?;
            let (image, mask) = prepare_sample(&image, &mask, &entry.meta, &config.scale)
                .map_err(CliError::from)?;
            let factor = effective_scale(entry.meta.organ, entry.meta.source, &config.scale)
                .map_err(CliError::from)?;

            let (image, reference) = match &references {
                Some((pool, names)) => {
                    let mut rng = root_rng.split(id);
                    let (matched, index) = match_to_random_reference(
                        &image,
                        pool,
                        config.color.match_probability,
                        &mut rng,
                    )
                    .map_err(CliError::from)?;
                    (matched, index.map(|i| names[i].clone()))
                }
                None => (image, None),
            };

            write_image_png(&image, image_dir.join(format!("{id}.png")))
                .map_err(|e| CliError::data(format!("sample {id:?}: {e}")))?;
            write_mask_png(&mask, mask_dir.join(format!("{id}.png")))
                .map_err(|e| CliError::data(format!("sample {id:?}: {e}")))?;

            Ok(OutputRow {
                id: id.clone(),
                source: entry.meta.source.to_string(),
                organ: entry.meta.organ.to_string(),
                // The written rasters live at the rescaled resolution.
                pixel_size: entry.meta.pixel_size * factor,
                width: image.width(),
                height: image.height(),
                image_path: format!("{}/{id}.png", config.io.image_dir),
                mask: format!("{}/{id}.png", config.io.mask_dir),
                factor: Some(factor),
                reference,
                round: None,
                empty: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    write_output_manifest(&staged.path().join("manifest.csv"), &rows)?;
    staged.commit()?;
    Ok(())
}

fn preflight(entries: &[ManifestEntry]) -> Result<()> {
    for entry in entries {
        if !entry.image_path.is_file() {
            return Err(CliError::data(format!(
                "sample {:?}: image {} not found",
                entry.meta.id,
                entry.image_path.display()
            )));
        }
        if let MaskRef::Path(path) = &entry.mask {
            if !path.is_file() {
                return Err(CliError::data(format!(
                    "sample {:?}: mask {} not found",
                    entry.meta.id,
                    path.display()
                )));
            }
        }
    }
    Ok(())
}

pub(crate) fn load_mask(entry: &ManifestEntry) -> Result<BinaryMask> {
    let id = &entry.meta.id;
    match &entry.mask {
        MaskRef::Path(path) => read_mask_png(path)
            .map_err(|e| CliError::data(format!("sample {id:?}: {e}"))),
        MaskRef::Rle(rle) => rle_decode(rle, entry.meta.width, entry.meta.height)
            .map_err(|e| CliError::data(format!("sample {id:?}: {e}"))),
    }
}

/// Loads every PNG in the reference directory, sorted by file name so the
/// pool ordering (and thus reference selection) is stable.
fn load_reference_pool(
    config: &PipelineConfig,
) -> Result<Option<(Vec<ftu_core::ByteImage>, Vec<String>)>> {
    let Some(dir) = &config.color.reference_dir else {
        return Ok(None);
    };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::data(format!(
            "reference directory {} holds no PNG images",
            dir.display()
        )));
    }
    let mut pool = Vec::with_capacity(paths.len());
    let mut names = Vec::with_capacity(paths.len());
    for path in paths {
        pool.push(
            read_image_png(&path)
                .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?,
        );
        names.push(
            path.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
    }
    Ok(Some((pool, names)))
}
