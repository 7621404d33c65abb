//! Pixel-size domain adaptation.
//!
//! HPA slides are acquired at a fixed 0.4 µm/px while HuBMAP resolution
//! varies per organ, so training images are rescaled by a per-organ factor
//! N to reach HuBMAP scale and by a further factor M that adjusts the
//! effective receptive field. The same M scaler is applied at inference so
//! train and test pixel sizes stay matched.

use std::collections::BTreeMap;

use ftu_core::{BinaryMask, ByteImage, Organ, SampleMeta, Source};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

/// Per-organ pixel sizes and scale factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrganScale {
    /// HPA acquisition resolution, µm per pixel.
    pub hpa_pixel_size: f64,
    /// HuBMAP acquisition resolution, µm per pixel.
    pub hubmap_pixel_size: f64,
    /// HPA-to-HuBMAP downscale factor.
    pub n: f64,
    /// Receptive-field scaler applied to both domains.
    pub m: f64,
}

/// The full per-organ scale table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OrganScaleConfig {
    organs: BTreeMap<Organ, OrganScale>,
}

impl Default for OrganScaleConfig {
    fn default() -> Self {
        let mut organs = BTreeMap::new();
        organs.insert(
            Organ::Kidney,
            OrganScale { hpa_pixel_size: 0.4, hubmap_pixel_size: 0.229, n: 1.25, m: 2.0 },
        );
        organs.insert(
            Organ::LargeIntestine,
            OrganScale { hpa_pixel_size: 0.4, hubmap_pixel_size: 0.7562, n: 0.5725, m: 2.0 },
        );
        organs.insert(
            Organ::Lung,
            OrganScale { hpa_pixel_size: 0.4, hubmap_pixel_size: 0.4945, n: 1.8905, m: 1.0 },
        );
        organs.insert(
            Organ::Prostate,
            OrganScale { hpa_pixel_size: 0.4, hubmap_pixel_size: 6.263, n: 15.65, m: 0.3 },
        );
        organs.insert(
            Organ::Spleen,
            OrganScale { hpa_pixel_size: 0.4, hubmap_pixel_size: 0.4945, n: 1.23625, m: 2.0 },
        );
        Self { organs }
    }
}

impl OrganScaleConfig {
    pub fn get(&self, organ: Organ) -> Result<&OrganScale> {
        self.organs.get(&organ).ok_or(PipelineError::MissingOrganConfig(organ))
    }

    pub fn set(&mut self, organ: Organ, scale: OrganScale) {
        self.organs.insert(organ, scale);
    }

    pub fn validate(&self) -> Result<()> {
        for organ in Organ::ALL {
            let scale = self.get(organ)?;
            for (name, value) in [
                ("hpa_pixel_size", scale.hpa_pixel_size),
                ("hubmap_pixel_size", scale.hubmap_pixel_size),
                ("n", scale.n),
                ("m", scale.m),
            ] {
                if !(value > 0.0) || !value.is_finite() {
                    return Err(PipelineError::InvalidArgument(format!(
                        "scale.{organ}.{name} must be a positive number, got {value}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The resize factor for one sample: HPA images take the full N*M chain,
/// HuBMAP (and the HuBMAP-stained GTEX pool) only the receptive-field M.
/// A factor f maps a dimension d to round(d / f).
pub fn effective_scale(organ: Organ, source: Source, config: &OrganScaleConfig) -> Result<f64> {
    let scale = config.get(organ)?;
    Ok(match source {
        Source::Hpa => scale.n * scale.m,
        Source::Hubmap | Source::Gtex => scale.m,
    })
}

/// round(dim / factor), half away from zero, floored at 1.
pub fn scaled_dim(dim: usize, factor: f64) -> usize {
    ((dim as f64 / factor).round() as usize).max(1)
}

fn check_factor(factor: f64) -> Result<()> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(PipelineError::InvalidArgument(format!(
            "resize factor must be positive, got {factor}"
        )));
    }
    Ok(())
}

/// Bilinear resize to round(dims / factor), half-pixel-center mapping.
pub fn resize_image(image: &ByteImage, factor: f64) -> Result<ByteImage> {
    check_factor(factor)?;
    let out_w = scaled_dim(image.width(), factor);
    let out_h = scaled_dim(image.height(), factor);
    resize_image_to(image, out_w, out_h)
}

/// Bilinear resize to explicit output dimensions.
pub fn resize_image_to(image: &ByteImage, out_w: usize, out_h: usize) -> Result<ByteImage> {
    if out_w == 0 || out_h == 0 {
        return Err(PipelineError::InvalidArgument(
            "output dimensions must be >= 1".into(),
        ));
    }
    let (in_w, in_h, channels) = (image.width(), image.height(), image.channels());
    let x_ratio = in_w as f64 / out_w as f64;
    let y_ratio = in_h as f64 / out_h as f64;
    let mut data = vec![0u8; out_w * out_h * channels];
    for oy in 0..out_h {
        let sy = ((oy as f64 + 0.5) * y_ratio - 0.5).clamp(0.0, (in_h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        let fy = sy - y0 as f64;
        for ox in 0..out_w {
            let sx = ((ox as f64 + 0.5) * x_ratio - 0.5).clamp(0.0, (in_w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(in_w - 1);
            let fx = sx - x0 as f64;
            for c in 0..channels {
                let v00 = image.get(x0, y0, c) as f64;
                let v10 = image.get(x1, y0, c) as f64;
                let v01 = image.get(x0, y1, c) as f64;
                let v11 = image.get(x1, y1, c) as f64;
                let top = v00 + fx * (v10 - v00);
                let bottom = v01 + fx * (v11 - v01);
                let value = top + fy * (bottom - top);
                data[(oy * out_w + ox) * channels + c] = value.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(ByteImage::new(out_w, out_h, channels, data)?)
}

/// Nearest-neighbor resize with the same dimension rule as [`resize_image`].
pub fn resize_mask(mask: &BinaryMask, factor: f64) -> Result<BinaryMask> {
    check_factor(factor)?;
    let out_w = scaled_dim(mask.width(), factor);
    let out_h = scaled_dim(mask.height(), factor);
    resize_mask_to(mask, out_w, out_h)
}

/// Nearest-neighbor resize to explicit output dimensions.
pub fn resize_mask_to(mask: &BinaryMask, out_w: usize, out_h: usize) -> Result<BinaryMask> {
    if out_w == 0 || out_h == 0 {
        return Err(PipelineError::InvalidArgument(
            "output dimensions must be >= 1".into(),
        ));
    }
    let (in_w, in_h) = (mask.width(), mask.height());
    let x_ratio = in_w as f64 / out_w as f64;
    let y_ratio = in_h as f64 / out_h as f64;
    let mut data = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        let sy = (((oy as f64 + 0.5) * y_ratio).floor() as usize).min(in_h - 1);
        for ox in 0..out_w {
            let sx = (((ox as f64 + 0.5) * x_ratio).floor() as usize).min(in_w - 1);
            data.push(mask.get(sx, sy));
        }
    }
    Ok(BinaryMask::new(out_w, out_h, data)?)
}

/// Rescales an image/mask pair to the sample's target pixel size.
pub fn prepare_sample(
    image: &ByteImage,
    mask: &BinaryMask,
    meta: &SampleMeta,
    config: &OrganScaleConfig,
) -> Result<(ByteImage, BinaryMask)> {
    if image.width() != mask.width() || image.height() != mask.height() {
        return Err(PipelineError::DimensionMismatch(format!(
            "sample {:?}: image {}x{} vs mask {}x{}",
            meta.id,
            image.width(),
            image.height(),
            mask.width(),
            mask.height()
        )));
    }
    if image.width() != meta.width || image.height() != meta.height {
        return Err(PipelineError::DimensionMismatch(format!(
            "sample {:?}: image {}x{} vs metadata {}x{}",
            meta.id,
            image.width(),
            image.height(),
            meta.width,
            meta.height
        )));
    }
    let factor = effective_scale(meta.organ, meta.source, config)?;
    Ok((resize_image(image, factor)?, resize_mask(mask, factor)?))
}
