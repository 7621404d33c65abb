//! Run-length codec for binary masks.
//!
//! Runs index the column-major flattening of the mask, 1-indexed: pixel
//! (row, col) sits at flat position `col * height + row + 1`. The text form
//! is the usual submission encoding, space-separated `start length` pairs.

use crate::error::{CoreError, Result};
use crate::raster::BinaryMask;

/// One maximal run of foreground pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Run {
    /// 1-indexed position in the column-major flattening.
    pub start: u64,
    pub length: u64,
}

/// An ordered list of maximal, non-overlapping, non-adjacent runs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Rle {
    runs: Vec<Run>,
}

impl Rle {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Validates ordering, positivity, and maximality of the given runs.
    pub fn from_runs(runs: Vec<Run>) -> Result<Self> {
        for (i, run) in runs.iter().enumerate() {
            if run.start == 0 {
                return Err(CoreError::InvalidRle(format!("run {i} start must be >= 1")));
            }
            if run.length == 0 {
                return Err(CoreError::InvalidRle(format!("run {i} length must be >= 1")));
            }
            if i > 0 {
                let prev = runs[i - 1];
                let prev_end = prev.start + prev.length - 1;
                if run.start <= prev_end {
                    return Err(CoreError::InvalidRle(format!(
                        "run {i} starting at {} overlaps run {} ending at {prev_end}",
                        run.start,
                        i - 1
                    )));
                }
                if run.start == prev_end + 1 {
                    return Err(CoreError::InvalidRle(format!(
                        "run {i} starting at {} is adjacent to run {}; runs must be maximal",
                        run.start,
                        i - 1
                    )));
                }
            }
        }
        Ok(Self { runs })
    }

    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    /// Total number of encoded foreground pixels.
    pub fn pixel_count(&self) -> u64 {
        self.runs.iter().map(|r| r.length).sum()
    }

    /// Space-separated `start length` pairs; empty string for the empty mask.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, run) in self.runs.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&format!("{} {}", run.start, run.length));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Ok(Self::empty());
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() % 2 != 0 {
            return Err(CoreError::RleParse(format!(
                "odd token count {}; expected start/length pairs",
                tokens.len()
            )));
        }
        let mut runs = Vec::with_capacity(tokens.len() / 2);
        for pair in tokens.chunks_exact(2) {
            let start: u64 = pair[0]
                .parse()
                .map_err(|_| CoreError::RleParse(format!("bad start {:?}", pair[0])))?;
            let length: u64 = pair[1]
                .parse()
                .map_err(|_| CoreError::RleParse(format!("bad length {:?}", pair[1])))?;
            runs.push(Run { start, length });
        }
        Self::from_runs(runs)
    }
}

/// Encodes a mask as maximal column-major runs.
pub fn rle_encode(mask: &BinaryMask) -> Rle {
    let (w, h) = (mask.width(), mask.height());
    let mut runs = Vec::new();
    let mut open: Option<Run> = None;
    for col in 0..w {
        for row in 0..h {
            let flat = (col * h + row) as u64 + 1;
            if mask.get(col, row) == 1 {
                match open.as_mut() {
                    Some(run) if run.start + run.length == flat => run.length += 1,
                    _ => {
                        if let Some(run) = open.take() {
                            runs.push(run);
                        }
                        open = Some(Run { start: flat, length: 1 });
                    }
                }
            } else if let Some(run) = open.take() {
                runs.push(run);
            }
        }
    }
    if let Some(run) = open {
        runs.push(run);
    }
    Rle { runs }
}

/// Exact inverse of [`rle_encode`] for runs that fit in `width` x `height`.
pub fn rle_decode(rle: &Rle, width: usize, height: usize) -> Result<BinaryMask> {
    let pixels = (width as u64) * (height as u64);
    let mut mask = BinaryMask::zeros(width, height)?;
    for (index, run) in rle.runs().iter().enumerate() {
        let end = run.start + run.length - 1;
        if run.start == 0 || end > pixels {
            return Err(CoreError::RleOutOfRange {
                index,
                start: run.start,
                length: run.length,
                end,
                width,
                height,
                pixels,
            });
        }
        for flat in run.start - 1..run.start - 1 + run.length {
            let col = (flat / height as u64) as usize;
            let row = (flat % height as u64) as usize;
            mask.set(col, row, 1);
        }
    }
    Ok(mask)
}
