//! `ftu infer`: per image, downscale by the source factor, run the
//! configured ensemble through the sliding window (with TTA when enabled),
//! post-process, resize the mask back to the native frame, and emit
//! probability maps, PNG masks, and the RLE submission file.

use std::path::Path;

use rayon::prelude::*;

use ftu_core::io::{read_image_png, write_mask_png, write_probmap_file};
use ftu_core::rle_encode;
use ftu_pipeline::post::postprocess;
use ftu_pipeline::scale::resize_mask_to;
use ftu_pipeline::PipelineError;

use crate::config::PipelineConfig;
use crate::errors::{CliError, Result};
use crate::manifest::{read_manifest, ManifestEntry};
use crate::stack::{build_members, infer_image};
use crate::stage::StagedDir;

pub fn run(config: &PipelineConfig, manifest_path: &Path, output: &Path) -> Result<()> {
    let entries = read_manifest(manifest_path)?;
    preflight(&entries)?;
    let members = build_members(config)?;

    let staged = StagedDir::new(output)?;
    let mask_dir = staged.subdir(&config.io.mask_dir)?;
    let probmap_dir = if config.io.write_probmaps {
        Some(staged.subdir(&config.io.probmap_dir)?)
    } else {
        None
    };

    let rows: Vec<(String, String)> = entries
        .par_iter()
        .map(|entry| -> Result<(String, String)> {
            let id = entry.meta.id.clone();
            let annotate =
                |e: PipelineError| CliError::from(PipelineError::for_sample(&id, e));
            let image = read_image_png(&entry.image_path)
                .map_err(|e| CliError::data(format!("sample {id:?}: {e}")))?;
            if image.width() != entry.meta.width || image.height() != entry.meta.height {
                return Err(CliError::data(format!(
                    "sample {id:?}: image is {}x{} but the manifest says {}x{}",
                    image.width(),
                    image.height(),
                    entry.meta.width,
                    entry.meta.height
                )));
            }
            let (map, _factor) =
                infer_image(&image, entry.meta.organ, entry.meta.source, config, &members)
                    .map_err(annotate)?;
            let mask_scaled = postprocess(&map, entry.meta.organ, &config.post)
                .map_err(annotate)?;
            let mask_full = resize_mask_to(&mask_scaled, image.width(), image.height())
                .map_err(annotate)?;

            if let Some(dir) = &probmap_dir {
                write_probmap_file(&map, dir.join(format!("{id}.pmap")))
                    .map_err(|e| CliError::data(format!("sample {id:?}: {e}")))?;
            }
            write_mask_png(&mask_full, mask_dir.join(format!("{id}.png")))
                .map_err(|e| CliError::data(format!("sample {id:?}: {e}")))?;
            Ok((id, rle_encode(&mask_full).to_text()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut writer = csv::Writer::from_path(staged.path().join(&config.io.submission_file))
        .map_err(|e| CliError::data(e.to_string()))?;
    writer
        .write_record(["id", "rle"])
        .map_err(|e| CliError::data(e.to_string()))?;
    for (id, rle) in &rows {
        writer
            .write_record([id.as_str(), rle.as_str()])
            .map_err(|e| CliError::data(e.to_string()))?;
    }
    writer.flush().map_err(|e| CliError::data(e.to_string()))?;
    drop(writer);

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
    }
    Ok(())
}
