//! Per-slide metadata: data source, organ class, and acquisition details.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// The five FTU organ classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Organ {
    Kidney,
    LargeIntestine,
    Lung,
    Prostate,
    Spleen,
}

impl Organ {
    pub const ALL: [Organ; 5] = [
        Organ::Kidney,
        Organ::LargeIntestine,
        Organ::Lung,
        Organ::Prostate,
        Organ::Spleen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Organ::Kidney => "kidney",
            Organ::LargeIntestine => "large_intestine",
            Organ::Lung => "lung",
            Organ::Prostate => "prostate",
            Organ::Spleen => "spleen",
        }
    }
}

impl fmt::Display for Organ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Organ {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kidney" => Ok(Organ::Kidney),
            "large_intestine" | "largeintestine" => Ok(Organ::LargeIntestine),
            "lung" => Ok(Organ::Lung),
            "prostate" => Ok(Organ::Prostate),
            "spleen" => Ok(Organ::Spleen),
            _ => Err(CoreError::UnknownOrgan(s.to_owned())),
        }
    }
}

/// Slide provenance. HPA is the training domain; HuBMAP the test domain;
/// GTEX feeds the pseudo-label pools and is stained like HuBMAP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "HPA")]
    Hpa,
    #[serde(rename = "HuBMAP")]
    Hubmap,
    #[serde(rename = "GTEX")]
    Gtex,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Hpa => "HPA",
            Source::Hubmap => "HuBMAP",
            Source::Gtex => "GTEX",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Source {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hpa" => Ok(Source::Hpa),
            "hubmap" => Ok(Source::Hubmap),
            "gtex" => Ok(Source::Gtex),
            _ => Err(CoreError::UnknownSource(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Male,
    Female,
}

/// One slide's metadata record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub id: String,
    pub source: Source,
    pub organ: Organ,
    /// Physical resolution in µm per pixel.
    pub pixel_size: f64,
    /// Tissue slice thickness in µm, when known.
    #[serde(default)]
    pub thickness: Option<f64>,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub age: Option<u32>,
    #[serde(default)]
    pub sex: Option<Sex>,
}

impl SampleMeta {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(CoreError::InvalidMeta("empty sample id".into()));
        }
        if !(self.pixel_size > 0.0) {
            return Err(CoreError::InvalidMeta(format!(
                "sample {:?}: pixel_size must be > 0, got {}",
                self.id, self.pixel_size
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(CoreError::InvalidMeta(format!(
                "sample {:?}: dimensions must be >= 1, got {}x{}",
                self.id, self.width, self.height
            )));
        }
        Ok(())
    }
}
