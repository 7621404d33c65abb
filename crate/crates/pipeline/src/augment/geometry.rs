//! Paired geometric transforms. Images resample bilinearly, masks with
//! nearest neighbor, and out-of-bounds reads reflect at the borders so no
//! new intensity values are introduced.

use ftu_core::{BinaryMask, ByteImage, SeededRng};

use crate::error::{PipelineError, Result};

/// The eight symmetries of the square grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dihedral {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipHorizontal,
    FlipVertical,
    Transpose,
    AntiTranspose,
}

impl Dihedral {
    pub const ALL: [Dihedral; 8] = [
        Dihedral::Identity,
        Dihedral::Rot90,
        Dihedral::Rot180,
        Dihedral::Rot270,
        Dihedral::FlipHorizontal,
        Dihedral::FlipVertical,
        Dihedral::Transpose,
        Dihedral::AntiTranspose,
    ];

    pub fn from_index(index: u8) -> Result<Self> {
        Self::ALL
            .get(index as usize)
            .copied()
            .ok_or_else(|| PipelineError::InvalidArgument(format!(
                "dihedral element must be 0..=7, got {index}"
            )))
    }

    pub fn index(self) -> u8 {
        Self::ALL.iter().position(|&e| e == self).unwrap() as u8
    }

    pub fn inverse(self) -> Self {
        match self {
            Dihedral::Rot90 => Dihedral::Rot270,
            Dihedral::Rot270 => Dihedral::Rot90,
            other => other,
        }
    }

    /// Whether the transform swaps width and height.
    fn swaps_dims(self) -> bool {
        matches!(
            self,
            Dihedral::Rot90 | Dihedral::Rot270 | Dihedral::Transpose | Dihedral::AntiTranspose
        )
    }

    /// Source pixel for output position (x, y) given input dims (w, h).
    #[inline]
    fn source(self, x: usize, y: usize, w: usize, h: usize) -> (usize, usize) {
        match self {
            Dihedral::Identity => (x, y),
            Dihedral::Rot90 => (y, h - 1 - x),
            Dihedral::Rot180 => (w - 1 - x, h - 1 - y),
            Dihedral::Rot270 => (w - 1 - y, x),
            Dihedral::FlipHorizontal => (w - 1 - x, y),
            Dihedral::FlipVertical => (x, h - 1 - y),
            Dihedral::Transpose => (y, x),
            Dihedral::AntiTranspose => (w - 1 - y, h - 1 - x),
        }
    }
}

/// Applies one dihedral element to an image/mask pair.
pub fn apply_dihedral(
    image: &ByteImage,
    mask: &BinaryMask,
    element: Dihedral,
) -> Result<(ByteImage, BinaryMask)> {
    check_pair_dims(image, mask)?;
    let (w, h) = (image.width(), image.height());
    let (out_w, out_h) = if element.swaps_dims() { (h, w) } else { (w, h) };
    let channels = image.channels();
    let mut img_data = Vec::with_capacity(w * h * channels);
    let mut mask_data = Vec::with_capacity(w * h);
    for y in 0..out_h {
        for x in 0..out_w {
            let (sx, sy) = element.source(x, y, w, h);
            for c in 0..channels {
                img_data.push(image.get(sx, sy, c));
            }
            mask_data.push(mask.get(sx, sy));
        }
    }
    Ok((
        ByteImage::new(out_w, out_h, channels, img_data)?,
        BinaryMask::new(out_w, out_h, mask_data)?,
    ))
}

/// Folds an index into [0, n) by reflecting at the borders (edge repeated).
pub(crate) fn reflect(i: i64, n: i64) -> usize {
    debug_assert!(n >= 1);
    if n == 1 {
        return 0;
    }
    let period = 2 * n;
    let m = i.rem_euclid(period);
    if m < n {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

fn bilinear_reflect(image: &ByteImage, sx: f64, sy: f64, c: usize) -> f64 {
    let (w, h) = (image.width() as i64, image.height() as i64);
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let x0 = x0 as i64;
    let y0 = y0 as i64;
    let xa = reflect(x0, w);
    let xb = reflect(x0 + 1, w);
    let ya = reflect(y0, h);
    let yb = reflect(y0 + 1, h);
    let v00 = image.get(xa, ya, c) as f64;
    let v10 = image.get(xb, ya, c) as f64;
    let v01 = image.get(xa, yb, c) as f64;
    let v11 = image.get(xb, yb, c) as f64;
    let top = v00 + fx * (v10 - v00);
    let bottom = v01 + fx * (v11 - v01);
    top + fy * (bottom - top)
}

fn nearest_reflect(mask: &BinaryMask, sx: f64, sy: f64) -> u8 {
    let x = reflect((sx + 0.5).floor() as i64, mask.width() as i64);
    let y = reflect((sy + 0.5).floor() as i64, mask.height() as i64);
    mask.get(x, y)
}

fn check_pair_dims(image: &ByteImage, mask: &BinaryMask) -> Result<()> {
    if image.width() != mask.width() || image.height() != mask.height() {
        return Err(PipelineError::DimensionMismatch(format!(
            "image {}x{} vs mask {}x{}",
            image.width(),
            image.height(),
            mask.width(),
            mask.height()
        )));
    }
    Ok(())
}

/// Warps both rasters through an inverse map from output to source coords.
fn warp_pair(
    image: &ByteImage,
    mask: &BinaryMask,
    map: impl Fn(f64, f64) -> (f64, f64),
) -> (ByteImage, BinaryMask) {
    let (w, h, channels) = (image.width(), image.height(), image.channels());
    let mut img_data = Vec::with_capacity(w * h * channels);
    let mut mask_data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = map(x as f64, y as f64);
            for c in 0..channels {
                img_data.push(bilinear_reflect(image, sx, sy, c).round().clamp(0.0, 255.0) as u8);
            }
            mask_data.push(nearest_reflect(mask, sx, sy));
        }
    }
    (
        ByteImage::new(w, h, channels, img_data).expect("dims preserved"),
        BinaryMask::new(w, h, mask_data).expect("dims preserved"),
    )
}

/// One composed affine transform: scale and rotation about the raster
/// center plus a translation in fractions of the image dimensions. Draw
/// order is scale, shift x, shift y, angle. A positive 90-degree angle
/// matches [`Dihedral::Rot90`].
pub fn affine_jitter(
    image: &ByteImage,
    mask: &BinaryMask,
    scale_range: (f64, f64),
    shift_range: (f64, f64),
    rotate_range: (f64, f64),
    rng: &mut SeededRng,
) -> Result<(ByteImage, BinaryMask)> {
    check_pair_dims(image, mask)?;
    let scale = rng.range_f64(scale_range.0, scale_range.1);
    let shift_x = rng.range_f64(shift_range.0, shift_range.1) * image.width() as f64;
    let shift_y = rng.range_f64(shift_range.0, shift_range.1) * image.height() as f64;
    let angle = rng.range_f64(rotate_range.0, rotate_range.1).to_radians();
    if !(scale > 0.0) {
        return Err(PipelineError::InvalidArgument(format!(
            "affine scale must be positive, got {scale}"
        )));
    }
    let (sin, cos) = angle.sin_cos();
    let cx = (image.width() - 1) as f64 / 2.0;
    let cy = (image.height() - 1) as f64 / 2.0;
    let map = |x: f64, y: f64| {
        let dx = x - cx - shift_x;
        let dy = y - cy - shift_y;
        let rx = (cos * dx + sin * dy) / scale;
        let ry = (-sin * dx + cos * dy) / scale;
        (cx + rx, cy + ry)
    };
    Ok(warp_pair(image, mask, map))
}

/// Elastic warp: a uniform random displacement field smoothed by a Gaussian
/// of width `sigma` and scaled by `alpha` pixels. The same field moves both
/// rasters. `alpha` of zero is the exact identity.
pub fn elastic_transform(
    image: &ByteImage,
    mask: &BinaryMask,
    alpha: f64,
    sigma: f64,
    rng: &mut SeededRng,
) -> Result<(ByteImage, BinaryMask)> {
    check_pair_dims(image, mask)?;
    if alpha < 0.0 {
        return Err(PipelineError::InvalidArgument(format!(
            "elastic alpha must be >= 0, got {alpha}"
        )));
    }
    if !(sigma > 0.0) {
        return Err(PipelineError::InvalidArgument(format!(
            "elastic sigma must be > 0, got {sigma}"
        )));
    }
    if alpha == 0.0 {
        return Ok((image.clone(), mask.clone()));
    }
    let (w, h) = (image.width(), image.height());
    let mut field_x = Vec::with_capacity(w * h);
    for _ in 0..w * h {
        field_x.push(rng.range_f64(-1.0, 1.0));
    }
    let mut field_y = Vec::with_capacity(w * h);
    for _ in 0..w * h {
        field_y.push(rng.range_f64(-1.0, 1.0));
    }
    let field_x = gaussian_blur(&field_x, w, h, sigma);
    let field_y = gaussian_blur(&field_y, w, h, sigma);
    let map = |x: f64, y: f64| {
        let idx = y as usize * w + x as usize;
        (x + alpha * field_x[idx], y + alpha * field_y[idx])
    };
    Ok(warp_pair(image, mask, map))
}

/// Separable Gaussian filter with reflected borders.
fn gaussian_blur(field: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    for d in -radius..=radius {
        kernel.push((-((d * d) as f64) / (2.0 * sigma * sigma)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= norm;
    }

    let mut horizontal = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, d) in (-radius..=radius).enumerate() {
                acc += kernel[ki] * field[y * w + reflect(x as i64 + d, w as i64)];
            }
            horizontal[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, d) in (-radius..=radius).enumerate() {
                acc += kernel[ki] * horizontal[reflect(y as i64 + d, h as i64) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker(w: usize, h: usize) -> (ByteImage, BinaryMask) {
        let mut rng = SeededRng::new(31);
        let img_data: Vec<u8> = (0..w * h * 3).map(|_| rng.range_usize(256) as u8).collect();
        let mask_data: Vec<u8> = (0..w * h).map(|_| rng.range_usize(2) as u8).collect();
        (
            ByteImage::new(w, h, 3, img_data).unwrap(),
            BinaryMask::new(w, h, mask_data).unwrap(),
        )
    }

    #[test]
    fn identity_element_is_identity() {
        let (img, mask) = checker(5, 4);
        let (i2, m2) = apply_dihedral(&img, &mask, Dihedral::Identity).unwrap();
        assert_eq!(i2, img);
        assert_eq!(m2, mask);
    }

    #[test]
    fn hflip_twice_is_identity() {
        let (img, mask) = checker(6, 3);
        let (i1, m1) = apply_dihedral(&img, &mask, Dihedral::FlipHorizontal).unwrap();
        let (i2, m2) = apply_dihedral(&i1, &m1, Dihedral::FlipHorizontal).unwrap();
        assert_eq!(i2, img);
        assert_eq!(m2, mask);
    }

    #[test]
    fn rot90_fixture_2x2() {
        // [[a, b], [c, d]] -> [[c, a], [d, b]]
        let img = ByteImage::new(2, 2, 1, vec![b'a', b'b', b'c', b'd']).unwrap();
        let mask = BinaryMask::zeros(2, 2).unwrap();
        let (out, _) = apply_dihedral(&img, &mask, Dihedral::Rot90).unwrap();
        assert_eq!(out.data(), &[b'c', b'a', b'd', b'b']);
    }

    #[test]
    fn every_element_composed_with_inverse_is_identity() {
        let (img, mask) = checker(7, 5);
        for element in Dihedral::ALL {
            let (i1, m1) = apply_dihedral(&img, &mask, element).unwrap();
            let (i2, m2) = apply_dihedral(&i1, &m1, element.inverse()).unwrap();
            assert_eq!(i2, img, "{element:?}");
            assert_eq!(m2, mask, "{element:?}");
        }
    }

    #[test]
    fn invalid_element_index_is_rejected() {
        assert!(Dihedral::from_index(7).is_ok());
        assert!(Dihedral::from_index(8).is_err());
    }

    #[test]
    fn affine_identity_ranges_are_bit_exact() {
        let (img, mask) = checker(9, 9);
        let mut rng = SeededRng::new(2);
        let (i2, m2) = affine_jitter(
            &img,
            &mask,
            (1.0, 1.0),
            (0.0, 0.0),
            (0.0, 0.0),
            &mut rng,
        )
        .unwrap();
        assert_eq!(i2, img);
        assert_eq!(m2, mask);
    }

    #[test]
    fn affine_quarter_turn_matches_dihedral_on_squares() {
        let (img, mask) = checker(8, 8);
        let mut rng = SeededRng::new(3);
        let (ai, am) = affine_jitter(
            &img,
            &mask,
            (1.0, 1.0),
            (0.0, 0.0),
            (90.0, 90.0),
            &mut rng,
        )
        .unwrap();
        let (di, dm) = apply_dihedral(&img, &mask, Dihedral::Rot90).unwrap();
        assert_eq!(ai, di);
        assert_eq!(am, dm);
    }

    #[test]
    fn affine_preserves_constant_masks() {
        let img = ByteImage::filled(12, 10, 3, 50).unwrap();
        let mask = BinaryMask::filled(12, 10, 1).unwrap();
        let mut rng = SeededRng::new(4);
        let (i2, m2) = affine_jitter(
            &img,
            &mask,
            (0.8, 1.2),
            (-0.2, 0.2),
            (-45.0, 45.0),
            &mut rng,
        )
        .unwrap();
        assert!(m2.data().iter().all(|&v| v == 1));
        assert!(i2.data().iter().all(|&v| v == 50));
    }

    #[test]
    fn elastic_zero_alpha_is_identity() {
        let (img, mask) = checker(10, 6);
        let mut rng = SeededRng::new(5);
        let (i2, m2) = elastic_transform(&img, &mask, 0.0, 4.0, &mut rng).unwrap();
        assert_eq!(i2, img);
        assert_eq!(m2, mask);
    }

    #[test]
    fn elastic_constant_image_stays_constant_and_mask_stays_binary() {
        let img = ByteImage::filled(16, 16, 1, 99).unwrap();
        let mut mask = BinaryMask::zeros(16, 16).unwrap();
        for i in 0..16 {
            mask.set(i, i, 1);
        }
        let mut rng = SeededRng::new(6);
        let (i2, m2) = elastic_transform(&img, &mask, 12.0, 3.0, &mut rng).unwrap();
        assert!(i2.data().iter().all(|&v| v == 99));
        assert!(m2.data().iter().all(|&v| v <= 1));
        assert_eq!((m2.width(), m2.height()), (16, 16));
    }

    #[test]
    fn elastic_rejects_bad_parameters() {
        let (img, mask) = checker(4, 4);
        let mut rng = SeededRng::new(7);
        assert!(elastic_transform(&img, &mask, -1.0, 3.0, &mut rng).is_err());
        assert!(elastic_transform(&img, &mask, 1.0, 0.0, &mut rng).is_err());
    }

    #[test]
    fn reflect_folds_indices() {
        assert_eq!(reflect(-1, 4), 0);
        assert_eq!(reflect(-2, 4), 1);
        assert_eq!(reflect(0, 4), 0);
        assert_eq!(reflect(3, 4), 3);
        assert_eq!(reflect(4, 4), 3);
        assert_eq!(reflect(5, 4), 2);
        assert_eq!(reflect(9, 1), 0);
    }
}
