//! Color-space domain adaptation: histogram matching against reference
//! images plus hue/saturation/value, contrast, and gamma jitter.

use ftu_core::{ByteImage, SeededRng};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

/// Cumulative distribution of one 8-bit channel, cdf[v] = P(value <= v).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelCdf {
    values: [f64; 256],
}

impl ChannelCdf {
    fn from_counts(counts: &[u64; 256], total: u64) -> Self {
        let mut values = [0.0; 256];
        let mut cumulative = 0u64;
        for v in 0..256 {
            cumulative += counts[v];
            values[v] = cumulative as f64 / total as f64;
        }
        Self { values }
    }

    pub fn get(&self, value: u8) -> f64 {
        self.values[value as usize]
    }

    pub fn as_slice(&self) -> &[f64; 256] {
        &self.values
    }
}

fn channel_counts(image: &ByteImage, channel: usize) -> [u64; 256] {
    let mut counts = [0u64; 256];
    let step = image.channels();
    for px in image.data()[channel..].iter().step_by(step) {
        counts[*px as usize] += 1;
    }
    counts
}

/// Empirical CDF of one channel.
pub fn channel_cdf(image: &ByteImage, channel: usize) -> Result<ChannelCdf> {
    if channel >= image.channels() {
        return Err(PipelineError::InvalidArgument(format!(
            "channel {channel} out of range for {}-channel image",
            image.channels()
        )));
    }
    let counts = channel_counts(image, channel);
    Ok(ChannelCdf::from_counts(&counts, (image.width() * image.height()) as u64))
}

/// Remaps each channel of `source` so its value distribution matches
/// `reference`: value v goes to the smallest reference value r with
/// reference_cdf(r) >= source_cdf(v). The comparison runs on exact integer
/// counts, so ties resolve deterministically.
pub fn histogram_match(source: &ByteImage, reference: &ByteImage) -> Result<ByteImage> {
    if source.channels() != reference.channels() {
        return Err(PipelineError::DimensionMismatch(format!(
            "histogram_match: source has {} channels, reference {}",
            source.channels(),
            reference.channels()
        )));
    }
    let n_src = (source.width() * source.height()) as u128;
    let n_ref = (reference.width() * reference.height()) as u128;
    let mut out = source.clone();
    for channel in 0..source.channels() {
        let src_counts = channel_counts(source, channel);
        let ref_counts = channel_counts(reference, channel);
        let mut src_le = 0u128;
        let mut ref_le = 0u128;
        let mut r = 0usize;
        let mut lut = [0u8; 256];
        for v in 0..256 {
            src_le += src_counts[v] as u128;
            // Smallest r with ref_cdf[r] >= src_cdf[v], compared as
            // ref_le(r) * n_src >= src_le(v) * n_ref.
            while r < 255 && (ref_le + ref_counts[r] as u128) * n_src < src_le * n_ref {
                ref_le += ref_counts[r] as u128;
                r += 1;
            }
            lut[v] = r as u8;
        }
        for y in 0..source.height() {
            for x in 0..source.width() {
                out.set(x, y, channel, lut[source.get(x, y, channel) as usize]);
            }
        }
    }
    Ok(out)
}

/// Picks a reference uniformly from the pool and matches against it with
/// the given probability. Returns the chosen reference index, if any.
pub fn match_to_random_reference(
    image: &ByteImage,
    references: &[ByteImage],
    probability: f64,
    rng: &mut SeededRng,
) -> Result<(ByteImage, Option<usize>)> {
    if references.is_empty() {
        return Err(PipelineError::InvalidArgument(
            "histogram matching requested with an empty reference pool".into(),
        ));
    }
    let apply = rng.bool_with(probability);
    let index = rng.range_usize(references.len());
    if !apply {
        return Ok((image.clone(), None));
    }
    Ok((histogram_match(image, &references[index])?, Some(index)))
}

/// Jitter ranges. Every range contains its identity element; each
/// sub-transform fires independently with its own probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColorJitterParams {
    /// Hue rotation is drawn from [-hue_shift_deg, +hue_shift_deg].
    pub hue_shift_deg: f64,
    pub hue_probability: f64,
    pub saturation_range: (f64, f64),
    pub saturation_probability: f64,
    pub value_range: (f64, f64),
    pub value_probability: f64,
    pub contrast_range: (f64, f64),
    pub contrast_probability: f64,
    pub gamma_range: (f64, f64),
    pub gamma_probability: f64,
}

impl Default for ColorJitterParams {
    fn default() -> Self {
        Self {
            hue_shift_deg: 20.0,
            hue_probability: 0.5,
            saturation_range: (0.7, 1.3),
            saturation_probability: 0.5,
            value_range: (0.7, 1.3),
            value_probability: 0.5,
            contrast_range: (0.7, 1.3),
            contrast_probability: 0.5,
            gamma_range: (0.7, 1.5),
            gamma_probability: 0.5,
        }
    }
}

impl ColorJitterParams {
    /// All ranges collapsed to their identity element.
    pub fn identity() -> Self {
        Self {
            hue_shift_deg: 0.0,
            hue_probability: 0.5,
            saturation_range: (1.0, 1.0),
            saturation_probability: 0.5,
            value_range: (1.0, 1.0),
            value_probability: 0.5,
            contrast_range: (1.0, 1.0),
            contrast_probability: 0.5,
            gamma_range: (1.0, 1.0),
            gamma_probability: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hue_shift_deg < 0.0 {
            return Err(PipelineError::InvalidArgument(
                "hue_shift_deg must be >= 0".into(),
            ));
        }
        for (name, (lo, hi)) in [
            ("saturation_range", self.saturation_range),
            ("value_range", self.value_range),
            ("contrast_range", self.contrast_range),
            ("gamma_range", self.gamma_range),
        ] {
            if !(lo <= hi) || !(lo <= 1.0 && 1.0 <= hi) || lo <= 0.0 {
                return Err(PipelineError::InvalidArgument(format!(
                    "{name} [{lo}, {hi}] must be positive and contain the identity 1.0"
                )));
            }
        }
        for (name, p) in [
            ("hue_probability", self.hue_probability),
            ("saturation_probability", self.saturation_probability),
            ("value_probability", self.value_probability),
            ("contrast_probability", self.contrast_probability),
            ("gamma_probability", self.gamma_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(PipelineError::InvalidArgument(format!(
                    "{name} must be in [0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let c = v * s;
    let hh = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hh.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hh as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r + m, g + m, b + m)
}

fn apply_hsv(image: &mut ByteImage, hue_shift: f64, sat_mul: f64, val_mul: f64) {
    let (w, h) = (image.width(), image.height());
    for y in 0..h {
        for x in 0..w {
            let r = image.get(x, y, 0) as f64 / 255.0;
            let g = image.get(x, y, 1) as f64 / 255.0;
            let b = image.get(x, y, 2) as f64 / 255.0;
            let (hue, sat, val) = rgb_to_hsv(r, g, b);
            let (r2, g2, b2) = hsv_to_rgb(
                hue + hue_shift,
                (sat * sat_mul).clamp(0.0, 1.0),
                (val * val_mul).clamp(0.0, 1.0),
            );
            image.set(x, y, 0, (r2 * 255.0).round().clamp(0.0, 255.0) as u8);
            image.set(x, y, 1, (g2 * 255.0).round().clamp(0.0, 255.0) as u8);
            image.set(x, y, 2, (b2 * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
}

/// out = clamp(mean + factor * (in - mean)) around the image mean.
fn apply_contrast(image: &mut ByteImage, factor: f64) {
    let mean = image.data().iter().map(|&v| v as f64).sum::<f64>() / image.data().len() as f64;
    let mut lut = [0u8; 256];
    for (v, slot) in lut.iter_mut().enumerate() {
        *slot = (mean + factor * (v as f64 - mean)).round().clamp(0.0, 255.0) as u8;
    }
    apply_lut(image, &lut);
}

/// out = 255 * (in / 255)^gamma.
fn apply_gamma(image: &mut ByteImage, gamma: f64) {
    let mut lut = [0u8; 256];
    for (v, slot) in lut.iter_mut().enumerate() {
        *slot = (255.0 * (v as f64 / 255.0).powf(gamma)).round().clamp(0.0, 255.0) as u8;
    }
    apply_lut(image, &lut);
}

fn apply_lut(image: &mut ByteImage, lut: &[u8; 256]) {
    let (w, h, c) = (image.width(), image.height(), image.channels());
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                image.set(x, y, ch, lut[image.get(x, y, ch) as usize]);
            }
        }
    }
}

/// Applies hue/saturation/value, contrast, and gamma jitter. Parameters are
/// drawn from `rng` on a fixed schedule, so a given seed always produces the
/// same output, and drawn identity parameters leave the pixels untouched.
pub fn color_jitter(
    image: &ByteImage,
    params: &ColorJitterParams,
    rng: &mut SeededRng,
) -> Result<ByteImage> {
    params.validate()?;
    let hsv_requested = params.hue_probability > 0.0
        || params.saturation_probability > 0.0
        || params.value_probability > 0.0;
    if image.channels() == 1 && hsv_requested {
        return Err(PipelineError::InvalidArgument(
            "hue/saturation/value jitter requires a 3-channel image".into(),
        ));
    }

    // Fixed draw schedule: coin then parameter for each sub-transform.
    let hue_on = rng.bool_with(params.hue_probability);
    let hue_shift = rng.range_f64(-params.hue_shift_deg, params.hue_shift_deg);
    let sat_on = rng.bool_with(params.saturation_probability);
    let sat_mul = rng.range_f64(params.saturation_range.0, params.saturation_range.1);
    let val_on = rng.bool_with(params.value_probability);
    let val_mul = rng.range_f64(params.value_range.0, params.value_range.1);
    let con_on = rng.bool_with(params.contrast_probability);
    let contrast = rng.range_f64(params.contrast_range.0, params.contrast_range.1);
    let gam_on = rng.bool_with(params.gamma_probability);
    let gamma = rng.range_f64(params.gamma_range.0, params.gamma_range.1);

    let hue_shift = if hue_on { hue_shift } else { 0.0 };
    let sat_mul = if sat_on { sat_mul } else { 1.0 };
    let val_mul = if val_on { val_mul } else { 1.0 };
    let contrast = if con_on { contrast } else { 1.0 };
    let gamma = if gam_on { gamma } else { 1.0 };

    let mut out = image.clone();
    if hue_shift != 0.0 || sat_mul != 1.0 || val_mul != 1.0 {
        apply_hsv(&mut out, hue_shift, sat_mul, val_mul);
    }
    if contrast != 1.0 {
        apply_contrast(&mut out, contrast);
    }
    if gamma != 1.0 {
        apply_gamma(&mut out, gamma);
    }
    Ok(out)
}
