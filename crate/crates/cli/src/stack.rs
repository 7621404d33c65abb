//! The per-image inference stack shared by `infer` and `pseudo-label`:
//! source-dependent downscale, per-member sliding window with optional
//! flip TTA, and probability ensembling.

use ftu_core::{ByteImage, Organ, ProbMap, Source};
use ftu_pipeline::infer::{
    ensemble, plan_tiles, predict_sliding, tta_predict, ExternalPredictor, Predictor,
    ReferencePredictor,
};
use ftu_pipeline::scale::{effective_scale, resize_image};
use ftu_pipeline::Result as PipelineResult;

use crate::config::{PipelineConfig, PredictorSpec};
use crate::errors::{CliError, Result};

pub struct EnsembleMember {
    pub predictor: Box<dyn Predictor>,
    pub weight: f64,
    pub label: String,
}

/// Instantiates the configured ensemble. External members are spawned once
/// and shared across worker threads; their calls serialize on the pipe.
pub fn build_members(config: &PipelineConfig) -> Result<Vec<EnsembleMember>> {
    if config.inference.members.is_empty() {
        return Err(CliError::config("inference.members must list at least one predictor"));
    }
    config
        .inference
        .members
        .iter()
        .map(|member| {
            let predictor: Box<dyn Predictor> = match &member.predictor {
                PredictorSpec::Reference(name) => {
                    Box::new(ReferencePredictor::parse(name).map_err(CliError::config)?)
                }
                PredictorSpec::External { command } => {
                    Box::new(ExternalPredictor::spawn(command).map_err(|e| {
                        CliError::Protocol(e.to_string())
                    })?)
                }
            };
            Ok(EnsembleMember {
                predictor,
                weight: member.weight,
                label: member.predictor.describe(),
            })
        })
        .collect()
}

/// Runs every member over the image through the sliding window (with TTA
/// when enabled) and averages the per-member maps. TTA is averaged per
/// member before the cross-member ensemble.
pub fn predict_with_members(
    image: &ByteImage,
    config: &PipelineConfig,
    members: &[EnsembleMember],
) -> PipelineResult<ProbMap> {
    let grid = plan_tiles(
        image.width(),
        image.height(),
        config.inference.window,
        config.inference.overlap,
    )?;
    let mut maps = Vec::with_capacity(members.len());
    let mut weights = Vec::with_capacity(members.len());
    for member in members {
        let map = if config.inference.tta {
            tta_predict(image, &|img| predict_sliding(img, member.predictor.as_ref(), &grid))?
        } else {
            predict_sliding(image, member.predictor.as_ref(), &grid)?
        };
        maps.push(map);
        weights.push(member.weight);
    }
    ensemble(&maps, Some(&weights))
}

/// Downscales the image by its source factor and runs the ensemble.
/// Returns the ensembled map at the working resolution plus the factor.
pub fn infer_image(
    image: &ByteImage,
    organ: Organ,
    source: Source,
    config: &PipelineConfig,
    members: &[EnsembleMember],
) -> PipelineResult<(ProbMap, f64)> {
    let factor = effective_scale(organ, source, &config.scale)?;
    let scaled = resize_image(image, factor)?;
    Ok((predict_with_members(&scaled, config, members)?, factor))
}
