//! `ftu pseudo-label`: label a pool of images with the configured ensemble
//! and write a pseudo manifest with inline RLE masks, the labeling round,
//! and an empty-mask flag.

use std::path::Path;

use ftu_core::io::read_image_png;
use ftu_core::{rle_encode, ByteImage, ProbMap, SampleMeta};
use ftu_pipeline::infer::pseudo_label;
use ftu_pipeline::scale::{effective_scale, resize_image, resize_mask_to};
use ftu_pipeline::{PipelineError, Result as PipelineResult};

use crate::config::PipelineConfig;
use crate::errors::{CliError, Result};
use crate::manifest::{read_manifest, write_output_manifest, OutputRow};
use crate::stack::{build_members, predict_with_members};
use crate::stage::StagedDir;

pub fn run(
    config: &PipelineConfig,
    manifest_path: &Path,
    output: &Path,
    round: u32,
) -> Result<()> {
    let entries = read_manifest(manifest_path)?;
    for entry in &entries {
        if !entry.image_path.is_file() {
            return Err(CliError::data(format!(
                "sample {:?}: image {} not found",
                entry.meta.id,
                entry.image_path.display()
            )));
        }
    }
    let members = build_members(config)?;

    // The pool holds source-rescaled images, so the predictor sees the same
    // pixel sizes it would at inference time.
    let mut pool: Vec<(ByteImage, SampleMeta)> = Vec::with_capacity(entries.len());
    for entry in &entries {
        let id = &entry.meta.id;
        let image = read_image_png(&entry.image_path)
            .map_err(|e| CliError::data(format!("sample {id:?}: {e}")))?;
        let factor = effective_scale(entry.meta.organ, entry.meta.source, &config.scale)
            .map_err(CliError::from)?;
        let scaled = resize_image(&image, factor).map_err(CliError::from)?;
        pool.push((scaled, entry.meta.clone()));
    }

    let predict_fn = |image: &ByteImage| -> PipelineResult<ProbMap> {
        predict_with_members(image, config, &members)
    };
    let labeled = pseudo_label(&pool, &predict_fn, &config.post, round).map_err(CliError::from)?;

    let staged = StagedDir::new(output)?;
    let mut rows = Vec::with_capacity(labeled.len());
    for (entry, result) in entries.iter().zip(&labeled) {
        let full = resize_mask_to(&result.mask, entry.meta.width, entry.meta.height)
            .map_err(|e| CliError::from(PipelineError::for_sample(&entry.meta.id, e)))?;
        let rle = rle_encode(&full);
        rows.push(OutputRow {
            id: entry.meta.id.clone(),
            source: entry.meta.source.to_string(),
            organ: entry.meta.organ.to_string(),
            pixel_size: entry.meta.pixel_size,
            width: entry.meta.width,
            height: entry.meta.height,
            image_path: entry.image_path.display().to_string(),
            mask: rle.to_text(),
            factor: None,
            reference: None,
            round: Some(result.round),
            empty: Some(u8::from(rle.is_empty())),
        });
    }
    write_output_manifest(&staged.path().join("pseudo_manifest.csv"), &rows)?;
    staged.commit()?;
    Ok(())
}
