//! Checkpoint parameter sets and their elementwise averaging, plus the
//! PSET container: `"PSET" | entry count u32 | per entry: name length u16,
//! UTF-8 name, array length u32, float32 values`, all little-endian.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ftu_core::CoreError;

use crate::error::{PipelineError, Result};

pub const PARAMETER_SET_MAGIC: &[u8; 4] = b"PSET";

/// An ordered mapping from parameter name to a flat float array.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    entries: Vec<(String, Vec<f32>)>,
}

impl ParameterSet {
    pub fn new(entries: Vec<(String, Vec<f32>)>) -> Result<Self> {
        let mut seen = HashMap::new();
        for (i, (name, _)) in entries.iter().enumerate() {
            if let Some(prev) = seen.insert(name.as_str(), i) {
                return Err(PipelineError::SchemaMismatch(format!(
                    "duplicate parameter name {name:?} at entries {prev} and {i}"
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(String, Vec<f32>)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&[f32]> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, values)| values.as_slice())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Elementwise arithmetic mean of the checkpoints, per named array. All
/// operands must share the same names and array lengths; the output keeps
/// the first checkpoint's entry order.
pub fn average_parameters(checkpoints: &[ParameterSet]) -> Result<ParameterSet> {
    let first = checkpoints
        .first()
        .ok_or_else(|| PipelineError::InvalidArgument("no checkpoints to average".into()))?;
    for (i, other) in checkpoints.iter().enumerate().skip(1) {
        if other.len() != first.len() {
            return Err(PipelineError::SchemaMismatch(format!(
                "checkpoint {i} has {} entries, expected {}",
                other.len(),
                first.len()
            )));
        }
    }
    let mut entries = Vec::with_capacity(first.len());
    for (name, values) in first.entries() {
        let mut sums = vec![0f64; values.len()];
        for (i, checkpoint) in checkpoints.iter().enumerate() {
            let other = checkpoint.get(name).ok_or_else(|| {
                PipelineError::SchemaMismatch(format!("checkpoint {i} is missing {name:?}"))
            })?;
            if other.len() != values.len() {
                return Err(PipelineError::SchemaMismatch(format!(
                    "checkpoint {i} entry {name:?} has length {}, expected {}",
                    other.len(),
                    values.len()
                )));
            }
            for (sum, &v) in sums.iter_mut().zip(other) {
                *sum += v as f64;
            }
        }
        let n = checkpoints.len() as f64;
        entries.push((name.clone(), sums.into_iter().map(|s| (s / n) as f32).collect()));
    }
    ParameterSet::new(entries)
}

pub fn write_parameter_set<W: Write>(set: &ParameterSet, mut dst: W) -> Result<()> {
    dst.write_all(PARAMETER_SET_MAGIC).map_err(CoreError::Io)?;
    let count = u32::try_from(set.len())
        .map_err(|_| PipelineError::InvalidArgument("too many entries".into()))?;
    dst.write_all(&count.to_le_bytes()).map_err(CoreError::Io)?;
    for (name, values) in set.entries() {
        let name_len = u16::try_from(name.len()).map_err(|_| {
            PipelineError::InvalidArgument(format!("parameter name too long: {name:?}"))
        })?;
        dst.write_all(&name_len.to_le_bytes()).map_err(CoreError::Io)?;
        dst.write_all(name.as_bytes()).map_err(CoreError::Io)?;
        let len = u32::try_from(values.len())
            .map_err(|_| PipelineError::InvalidArgument("array too long".into()))?;
        dst.write_all(&len.to_le_bytes()).map_err(CoreError::Io)?;
        let mut buf = Vec::with_capacity(values.len() * 4);
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        dst.write_all(&buf).map_err(CoreError::Io)?;
    }
    Ok(())
}

pub fn read_parameter_set<R: Read>(mut src: R) -> Result<ParameterSet> {
    let mut magic = [0u8; 4];
    src.read_exact(&mut magic).map_err(CoreError::Io)?;
    if &magic != PARAMETER_SET_MAGIC {
        return Err(CoreError::BadMagic {
            expected: String::from_utf8_lossy(PARAMETER_SET_MAGIC).into_owned(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        }
        .into());
    }
    let mut u32_buf = [0u8; 4];
    src.read_exact(&mut u32_buf).map_err(CoreError::Io)?;
    let count = u32::from_le_bytes(u32_buf) as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let mut u16_buf = [0u8; 2];
        src.read_exact(&mut u16_buf).map_err(CoreError::Io)?;
        let name_len = u16::from_le_bytes(u16_buf) as usize;
        let mut name = vec![0u8; name_len];
        src.read_exact(&mut name).map_err(CoreError::Io)?;
        let name = String::from_utf8(name).map_err(|_| {
            PipelineError::Protocol("parameter name is not valid UTF-8".into())
        })?;
        src.read_exact(&mut u32_buf).map_err(CoreError::Io)?;
        let len = u32::from_le_bytes(u32_buf) as usize;
        let mut payload = vec![0u8; len * 4];
        src.read_exact(&mut payload).map_err(CoreError::Io)?;
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        entries.push((name, values));
    }
    let mut probe = [0u8; 1];
    if src.read(&mut probe).map_err(CoreError::Io)? != 0 {
        return Err(CoreError::TrailingBytes.into());
    }
    ParameterSet::new(entries)
}

pub fn write_parameter_set_file<P: AsRef<Path>>(set: &ParameterSet, path: P) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).map_err(CoreError::Io)?);
    write_parameter_set(set, &mut out)?;
    out.flush().map_err(CoreError::Io)?;
    Ok(())
}

pub fn read_parameter_set_file<P: AsRef<Path>>(path: P) -> Result<ParameterSet> {
    read_parameter_set(BufReader::new(File::open(path).map_err(CoreError::Io)?))
}
