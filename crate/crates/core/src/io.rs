//! File formats: the PMAP probability-map container and PNG raster interchange.
//!
//! PMAP layout, all little-endian:
//! `"PMAP" | width u32 | height u32 | width*height float32, row-major`.
//! Masks interchange as 8-bit single-channel PNG with values {0, 255}.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{CoreError, Result};
use crate::raster::{BinaryMask, ByteImage, ProbMap};

pub const PROBMAP_MAGIC: &[u8; 4] = b"PMAP";

pub fn write_probmap<W: Write>(map: &ProbMap, mut dst: W) -> Result<()> {
    dst.write_all(PROBMAP_MAGIC)?;
    dst.write_all(&(map.width() as u32).to_le_bytes())?;
    dst.write_all(&(map.height() as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(map.data().len() * 4);
    for &v in map.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    dst.write_all(&buf)?;
    Ok(())
}

pub fn write_probmap_file<P: AsRef<Path>>(map: &ProbMap, path: P) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_probmap(map, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Reads a PMAP stream. Rejects bad magic, truncation, trailing bytes, and
/// any stored value outside [0, 1].
pub fn read_probmap<R: Read>(mut src: R) -> Result<ProbMap> {
    let mut magic = [0u8; 4];
    read_exact_or_truncated(&mut src, &mut magic, 4)?;
    if &magic != PROBMAP_MAGIC {
        return Err(CoreError::BadMagic {
            expected: String::from_utf8_lossy(PROBMAP_MAGIC).into_owned(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let mut dim = [0u8; 4];
    read_exact_or_truncated(&mut src, &mut dim, 8)?;
    let width = u32::from_le_bytes(dim) as usize;
    read_exact_or_truncated(&mut src, &mut dim, 12)?;
    let height = u32::from_le_bytes(dim) as usize;
    if width == 0 || height == 0 {
        return Err(CoreError::InvalidRaster(format!(
            "probmap dimensions must be >= 1, got {width}x{height}"
        )));
    }
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| CoreError::InvalidRaster("probmap dimensions overflow".into()))?;
    let mut payload = vec![0u8; expected];
    read_exact_or_truncated(&mut src, &mut payload, 12 + expected)?;
    let mut probe = [0u8; 1];
    if src.read(&mut probe)? != 0 {
        return Err(CoreError::TrailingBytes);
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    ProbMap::new(width, height, data)
}

pub fn read_probmap_file<P: AsRef<Path>>(path: P) -> Result<ProbMap> {
    read_probmap(BufReader::new(File::open(path)?))
}

fn read_exact_or_truncated<R: Read>(src: &mut R, buf: &mut [u8], expected: usize) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = src.read(&mut buf[filled..])?;
        if n == 0 {
            return Err(CoreError::Truncated {
                expected,
                found: expected - (buf.len() - filled),
            });
        }
        filled += n;
    }
    Ok(())
}

pub fn write_mask_png<P: AsRef<Path>>(mask: &BinaryMask, path: P) -> Result<()> {
    let pixels: Vec<u8> = mask.data().iter().map(|&v| v * 255).collect();
    let img = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, pixels)
        .expect("mask buffer length is validated at construction");
    img.save(path)?;
    Ok(())
}

pub fn read_mask_png<P: AsRef<Path>>(path: P) -> Result<BinaryMask> {
    let decoded = image::open(&path)?;
    let gray = match decoded {
        DynamicImage::ImageLuma8(img) => img,
        other => {
            return Err(CoreError::InvalidMaskPng(format!(
                "{}: got {:?} pixels",
                path.as_ref().display(),
                other.color()
            )))
        }
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let mut data = Vec::with_capacity(w * h);
    for &v in gray.as_raw() {
        match v {
            0 => data.push(0),
            255 => data.push(1),
            other => {
                return Err(CoreError::InvalidMaskPng(format!(
                    "{}: pixel value {other}",
                    path.as_ref().display()
                )))
            }
        }
    }
    BinaryMask::new(w, h, data)
}

pub fn write_image_png<P: AsRef<Path>>(img: &ByteImage, path: P) -> Result<()> {
    match img.channels() {
        1 => {
            let gray =
                GrayImage::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec())
                    .expect("image buffer length is validated at construction");
            gray.save(path)?;
        }
        _ => {
            let rgb =
                RgbImage::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec())
                    .expect("image buffer length is validated at construction");
            rgb.save(path)?;
        }
    }
    Ok(())
}

/// Decodes a PNG into a [`ByteImage`]. Gray stays single-channel, color
/// becomes RGB; alpha channels are dropped.
pub fn read_image_png<P: AsRef<Path>>(path: P) -> Result<ByteImage> {
    let decoded = image::open(&path)?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    match decoded {
        DynamicImage::ImageLuma8(img) => ByteImage::new(w, h, 1, img.into_raw()),
        DynamicImage::ImageLumaA8(img) => {
            let data = img.into_raw().chunks_exact(2).map(|px| px[0]).collect();
            ByteImage::new(w, h, 1, data)
        }
        DynamicImage::ImageRgb8(img) => ByteImage::new(w, h, 3, img.into_raw()),
        DynamicImage::ImageRgba8(img) => {
            let mut data = Vec::with_capacity(w * h * 3);
            for px in img.into_raw().chunks_exact(4) {
                data.extend_from_slice(&px[..3]);
            }
            ByteImage::new(w, h, 3, data)
        }
        other => Err(CoreError::UnsupportedImage(format!(
            "{}: {:?}",
            path.as_ref().display(),
            other.color()
        ))),
    }
}
