//! The predictor contract and the built-in reference predictors used for
//! pipeline tests and protocol checks. Neural models plug in behind the
//! same trait, in-process or over the subprocess protocol.

use ftu_core::{ByteImage, ProbMap};

use crate::error::{PipelineError, Result};

/// Maps an RGB (or gray) tile to a same-sized probability map. Must be
/// deterministic per tile and callable from multiple threads.
pub trait Predictor: Send + Sync {
    fn predict(&self, tile: &ByteImage) -> Result<ProbMap>;

    /// Short label used in error messages.
    fn name(&self) -> String {
        "predictor".to_owned()
    }
}

#[inline]
pub fn byte_to_unit(v: u8) -> f32 {
    v as f32 / 255.0
}

/// Deterministic analytic predictors. `predict_units` is shared between the
/// in-process path and the subprocess protocol server so both produce
/// bit-identical outputs.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferencePredictor {
    /// The same probability everywhere.
    Constant(f32),
    /// Echoes the normalized green channel (channel 0 for gray input).
    ChannelIdentity,
    /// Sigmoid of centered luminance: 1 / (1 + exp(-gain * (lum - 0.5))).
    LuminanceSigmoid { gain: f32 },
}

impl ReferencePredictor {
    /// Parses a config spec like `constant:0.6`, `channel-identity`, or
    /// `luminance-sigmoid:4`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (kind, arg) = match spec.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (spec, None),
        };
        match (kind, arg) {
            ("constant", Some(a)) => {
                let value: f32 = a.parse().map_err(|_| {
                    PipelineError::InvalidArgument(format!("bad constant value {a:?}"))
                })?;
                if !(0.0..=1.0).contains(&value) {
                    return Err(PipelineError::InvalidArgument(format!(
                        "constant predictor value must be in [0, 1], got {value}"
                    )));
                }
                Ok(ReferencePredictor::Constant(value))
            }
            ("channel-identity", None) => Ok(ReferencePredictor::ChannelIdentity),
            ("luminance-sigmoid", arg) => {
                let gain: f32 = match arg {
                    Some(a) => a.parse().map_err(|_| {
                        PipelineError::InvalidArgument(format!("bad sigmoid gain {a:?}"))
                    })?,
                    None => 4.0,
                };
                Ok(ReferencePredictor::LuminanceSigmoid { gain })
            }
            _ => Err(PipelineError::InvalidArgument(format!(
                "unknown reference predictor {spec:?}"
            ))),
        }
    }

    pub fn spec_string(&self) -> String {
        match self {
            ReferencePredictor::Constant(v) => format!("constant:{v}"),
            ReferencePredictor::ChannelIdentity => "channel-identity".to_owned(),
            ReferencePredictor::LuminanceSigmoid { gain } => format!("luminance-sigmoid:{gain}"),
        }
    }

    /// Predicts one tile given as normalized floats, H x W x C interleaved.
    pub fn predict_units(
        &self,
        width: usize,
        height: usize,
        channels: usize,
        data: &[f32],
    ) -> Result<Vec<f32>> {
        if data.len() != width * height * channels {
            return Err(PipelineError::Protocol(format!(
                "tile payload {} != {width}x{height}x{channels}",
                data.len()
            )));
        }
        let pixels = width * height;
        Ok(match self {
            ReferencePredictor::Constant(value) => vec![*value; pixels],
            ReferencePredictor::ChannelIdentity => {
                let channel = if channels >= 3 { 1 } else { 0 };
                (0..pixels).map(|i| data[i * channels + channel]).collect()
            }
            ReferencePredictor::LuminanceSigmoid { gain } => (0..pixels)
                .map(|i| {
                    let lum = if channels >= 3 {
                        0.299f32 * data[i * channels]
                            + 0.587f32 * data[i * channels + 1]
                            + 0.114f32 * data[i * channels + 2]
                    } else {
                        data[i * channels]
                    };
                    1.0 / (1.0 + (-gain * (lum - 0.5)).exp())
                })
                .collect(),
        })
    }
}

impl Predictor for ReferencePredictor {
    fn predict(&self, tile: &ByteImage) -> Result<ProbMap> {
        let units: Vec<f32> = tile.data().iter().map(|&v| byte_to_unit(v)).collect();
        let data = self.predict_units(tile.width(), tile.height(), tile.channels(), &units)?;
        Ok(ProbMap::new(tile.width(), tile.height(), data)?)
    }

    fn name(&self) -> String {
        self.spec_string()
    }
}
