//! Training-time augmentation and dataset composition: dihedral/affine/
//! elastic transforms, within-class CutMix, foreground-biased tile
//! sampling, and epoch scheduling over labeled and pseudo-labeled pools.

mod geometry;

pub use geometry::{affine_jitter, apply_dihedral, elastic_transform, Dihedral};

use std::collections::HashSet;
use std::path::PathBuf;

use ftu_core::{BinaryMask, ByteImage, Organ, Rle, SampleMeta, SeededRng};

use crate::error::{PipelineError, Result};

/// Where a tile was cut from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileOrigin {
    pub sample_id: String,
    pub x: usize,
    pub y: usize,
}

/// One training crop with its mask and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTile {
    pub image: ByteImage,
    pub mask: BinaryMask,
    pub organ: Organ,
    pub origin: TileOrigin,
}

impl LabeledTile {
    pub fn new(image: ByteImage, mask: BinaryMask, organ: Organ, origin: TileOrigin) -> Result<Self> {
        if image.width() != mask.width() || image.height() != mask.height() {
            return Err(PipelineError::DimensionMismatch(format!(
                "tile image {}x{} vs mask {}x{}",
                image.width(),
                image.height(),
                mask.width(),
                mask.height()
            )));
        }
        Ok(Self { image, mask, organ, origin })
    }
}

/// How CutMix draws its replacement rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CutmixBoxLaw {
    /// Independent uniform corners, sorted. Boxes of any size, including
    /// empty and full.
    UniformCorners,
    /// A box covering the given fraction of the tile area, uniformly placed.
    FixedAreaRatio(f64),
}

/// Replaces a rectangle of `a` with the same rectangle of `b`. Both tiles
/// must share organ and dimensions; the result keeps `a`'s origin.
pub fn cutmix(a: &LabeledTile, b: &LabeledTile, rng: &mut SeededRng) -> Result<LabeledTile> {
    cutmix_with_law(a, b, CutmixBoxLaw::UniformCorners, rng)
}

pub fn cutmix_with_law(
    a: &LabeledTile,
    b: &LabeledTile,
    law: CutmixBoxLaw,
    rng: &mut SeededRng,
) -> Result<LabeledTile> {
    if a.organ != b.organ {
        return Err(PipelineError::OrganMismatch(format!(
            "cutmix requires same-organ tiles, got {} and {}",
            a.organ, b.organ
        )));
    }
    let (w, h) = (a.image.width(), a.image.height());
    if (b.image.width(), b.image.height()) != (w, h) {
        return Err(PipelineError::DimensionMismatch(format!(
            "cutmix tiles differ: {}x{} vs {}x{}",
            w,
            h,
            b.image.width(),
            b.image.height()
        )));
    }
    let (x_range, y_range) = match law {
        CutmixBoxLaw::UniformCorners => {
            let xa = rng.range_usize(w + 1);
            let xb = rng.range_usize(w + 1);
            let ya = rng.range_usize(h + 1);
            let yb = rng.range_usize(h + 1);
            (xa.min(xb)..xa.max(xb), ya.min(yb)..ya.max(yb))
        }
        CutmixBoxLaw::FixedAreaRatio(ratio) => {
            if !(0.0..=1.0).contains(&ratio) {
                return Err(PipelineError::InvalidArgument(format!(
                    "cutmix area ratio must be in [0, 1], got {ratio}"
                )));
            }
            let bw = ((w as f64 * ratio.sqrt()).round() as usize).min(w);
            let bh = ((h as f64 * ratio.sqrt()).round() as usize).min(h);
            let x0 = rng.range_usize(w - bw + 1);
            let y0 = rng.range_usize(h - bh + 1);
            (x0..x0 + bw, y0..y0 + bh)
        }
    };
    Ok(mix_box(a, b, x_range, y_range))
}

/// Pixels inside the box come from `b`, the rest from `a`.
fn mix_box(
    a: &LabeledTile,
    b: &LabeledTile,
    x_range: std::ops::Range<usize>,
    y_range: std::ops::Range<usize>,
) -> LabeledTile {
    let mut image = a.image.clone();
    let mut mask = a.mask.clone();
    for y in y_range {
        for x in x_range.clone() {
            for c in 0..image.channels() {
                image.set(x, y, c, b.image.get(x, y, c));
            }
            mask.set(x, y, b.mask.get(x, y));
        }
    }
    LabeledTile { image, mask, organ: a.organ, origin: a.origin.clone() }
}

fn pad_reflect_image(image: &ByteImage, target_w: usize, target_h: usize) -> ByteImage {
    let (w, h, channels) = (image.width(), image.height(), image.channels());
    let mut data = Vec::with_capacity(target_w * target_h * channels);
    for y in 0..target_h {
        let sy = geometry::reflect(y as i64, h as i64);
        for x in 0..target_w {
            let sx = geometry::reflect(x as i64, w as i64);
            for c in 0..channels {
                data.push(image.get(sx, sy, c));
            }
        }
    }
    ByteImage::new(target_w, target_h, channels, data).expect("target dims are positive")
}

fn pad_reflect_mask(mask: &BinaryMask, target_w: usize, target_h: usize) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut data = Vec::with_capacity(target_w * target_h);
    for y in 0..target_h {
        let sy = geometry::reflect(y as i64, h as i64);
        for x in 0..target_w {
            data.push(mask.get(geometry::reflect(x as i64, w as i64), sy));
        }
    }
    BinaryMask::new(target_w, target_h, data).expect("target dims are positive")
}

/// Cuts one `size` x `size` tile. With probability `p_nonempty` the crop is
/// centered on a uniformly drawn foreground pixel (clamped to bounds);
/// otherwise, or when the mask is empty, the crop position is uniform.
/// Images smaller than the tile are reflection-padded first.
pub fn sample_tile(
    image: &ByteImage,
    mask: &BinaryMask,
    organ: Organ,
    sample_id: &str,
    size: usize,
    p_nonempty: f64,
    rng: &mut SeededRng,
) -> Result<LabeledTile> {
    if image.width() != mask.width() || image.height() != mask.height() {
        return Err(PipelineError::DimensionMismatch(format!(
            "image {}x{} vs mask {}x{}",
            image.width(),
            image.height(),
            mask.width(),
            mask.height()
        )));
    }
    if size == 0 {
        return Err(PipelineError::InvalidArgument("tile size must be >= 1".into()));
    }
    let target_w = image.width().max(size);
    let target_h = image.height().max(size);
    let (padded_img, padded_mask);
    let (img, msk) = if target_w != image.width() || target_h != image.height() {
        padded_img = pad_reflect_image(image, target_w, target_h);
        padded_mask = pad_reflect_mask(mask, target_w, target_h);
        (&padded_img, &padded_mask)
    } else {
        (image, mask)
    };

    let (w, h) = (img.width(), img.height());
    let centered = rng.bool_with(p_nonempty);
    let foreground: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| msk.get(x, y) == 1)
        .collect();

    let (x0, y0) = if centered && !foreground.is_empty() {
        let (fx, fy) = foreground[rng.range_usize(foreground.len())];
        let x0 = (fx as i64 - (size / 2) as i64).clamp(0, (w - size) as i64) as usize;
        let y0 = (fy as i64 - (size / 2) as i64).clamp(0, (h - size) as i64) as usize;
        (x0, y0)
    } else {
        (rng.range_usize(w - size + 1), rng.range_usize(h - size + 1))
    };

    LabeledTile::new(
        img.crop(x0, y0, size, size)?,
        msk.crop(x0, y0, size, size)?,
        organ,
        TileOrigin { sample_id: sample_id.to_owned(), x: x0, y: y0 },
    )
}

/// Reference to a mask: an on-disk raster or an inline run-length encoding.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskRef {
    Path(PathBuf),
    Rle(Rle),
}

/// One dataset entry: metadata plus raster locations.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub meta: SampleMeta,
    pub image_path: PathBuf,
    pub mask: MaskRef,
}

/// A named pool of pseudo-labeled samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoPool {
    pub name: String,
    pub samples: Vec<LabeledSample>,
}

/// The training corpus: labeled samples, pseudo-label pools, the exclusion
/// list, and the fraction of draws served from the pseudo pools.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub labeled: Vec<LabeledSample>,
    pub pseudo_pools: Vec<PseudoPool>,
    pub exclusions: Vec<String>,
    pub pseudo_fraction: f64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pseudo_fraction) {
            return Err(PipelineError::InvalidArgument(format!(
                "pseudo_fraction must be in [0, 1], got {}",
                self.pseudo_fraction
            )));
        }
        Ok(())
    }
}

/// Which pool a drawn sample came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PoolKind {
    Labeled,
    Pseudo(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRef {
    pub pool: PoolKind,
    pub id: String,
}

/// Draws an epoch-length sequence of sample references: each draw takes a
/// pseudo-pool sample with probability `pseudo_fraction`, else a labeled
/// sample (exclusions removed). Uniform within each side.
pub fn compose_epoch(
    spec: &DatasetSpec,
    epoch_len: usize,
    rng: &mut SeededRng,
) -> Result<Vec<SampleRef>> {
    spec.validate()?;
    let excluded: HashSet<&str> = spec.exclusions.iter().map(String::as_str).collect();
    let labeled: Vec<&LabeledSample> = spec
        .labeled
        .iter()
        .filter(|s| !excluded.contains(s.meta.id.as_str()))
        .collect();
    let pseudo: Vec<(&str, &LabeledSample)> = spec
        .pseudo_pools
        .iter()
        .flat_map(|pool| pool.samples.iter().map(move |s| (pool.name.as_str(), s)))
        .collect();
    if spec.pseudo_fraction > 0.0 && pseudo.is_empty() {
        return Err(PipelineError::InvalidArgument(
            "pseudo_fraction > 0 with empty pseudo pools".into(),
        ));
    }
    if spec.pseudo_fraction < 1.0 && labeled.is_empty() {
        return Err(PipelineError::InvalidArgument(
            "no labeled samples remain after exclusions".into(),
        ));
    }
    let mut epoch = Vec::with_capacity(epoch_len);
    for _ in 0..epoch_len {
        if rng.bool_with(spec.pseudo_fraction) {
            let (pool, sample) = pseudo[rng.range_usize(pseudo.len())];
            epoch.push(SampleRef {
                pool: PoolKind::Pseudo(pool.to_owned()),
                id: sample.meta.id.clone(),
            });
        } else {
            let sample = labeled[rng.range_usize(labeled.len())];
            epoch.push(SampleRef { pool: PoolKind::Labeled, id: sample.meta.id.clone() });
        }
    }
    Ok(epoch)
}

/// Result of applying the exclusion list.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub spec: DatasetSpec,
    pub removed: Vec<String>,
    /// Exclusion ids that matched nothing; reported, not fatal.
    pub unknown: Vec<String>,
}

/// Drops excluded ids from the labeled list. Unknown exclusion ids are
/// returned as warnings rather than errors.
pub fn filter_samples(spec: DatasetSpec) -> FilterOutcome {
    let known: HashSet<&str> = spec.labeled.iter().map(|s| s.meta.id.as_str()).collect();
    let mut removed = Vec::new();
    let mut unknown = Vec::new();
    for id in &spec.exclusions {
        if known.contains(id.as_str()) {
            removed.push(id.clone());
        } else {
            unknown.push(id.clone());
        }
    }
    let excluded: HashSet<&str> = removed.iter().map(String::as_str).collect();
    let labeled = spec
        .labeled
        .iter()
        .filter(|s| !excluded.contains(s.meta.id.as_str()))
        .cloned()
        .collect();
    FilterOutcome {
        spec: DatasetSpec {
            labeled,
            pseudo_pools: spec.pseudo_pools,
            exclusions: Vec::new(),
            pseudo_fraction: spec.pseudo_fraction,
        },
        removed,
        unknown,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ftu_core::Source;

    fn tile(organ: Organ, image_value: u8, mask_value: u8, id: &str) -> LabeledTile {
        LabeledTile::new(
            ByteImage::filled(8, 8, 3, image_value).unwrap(),
            BinaryMask::filled(8, 8, mask_value).unwrap(),
            organ,
            TileOrigin { sample_id: id.into(), x: 0, y: 0 },
        )
        .unwrap()
    }

    fn meta(id: &str, organ: Organ) -> SampleMeta {
        SampleMeta {
            id: id.into(),
            source: Source::Hpa,
            organ,
            pixel_size: 0.4,
            thickness: None,
            width: 16,
            height: 16,
            age: None,
            sex: None,
        }
    }

    fn sample(id: &str, organ: Organ) -> LabeledSample {
        LabeledSample {
            meta: meta(id, organ),
            image_path: PathBuf::from(format!("{id}.png")),
            mask: MaskRef::Rle(Rle::empty()),
        }
    }

    #[test]
    fn cutmix_full_box_takes_b_with_a_origin() {
        let a = tile(Organ::Lung, 10, 0, "a");
        let b = tile(Organ::Lung, 200, 1, "b");
        let mut rng = SeededRng::new(1);
        let out = cutmix_with_law(&a, &b, CutmixBoxLaw::FixedAreaRatio(1.0), &mut rng).unwrap();
        assert_eq!(out.image, b.image);
        assert_eq!(out.mask, b.mask);
        assert_eq!(out.origin, a.origin);
        assert_eq!(out.organ, Organ::Lung);
    }

    #[test]
    fn cutmix_empty_box_returns_a() {
        let a = tile(Organ::Spleen, 10, 0, "a");
        let b = tile(Organ::Spleen, 200, 1, "b");
        let mut rng = SeededRng::new(2);
        let out = cutmix_with_law(&a, &b, CutmixBoxLaw::FixedAreaRatio(0.0), &mut rng).unwrap();
        assert_eq!(out.image, a.image);
        assert_eq!(out.mask, a.mask);
    }

    #[test]
    fn cutmix_pixels_trace_to_exactly_one_source() {
        let mut rng = SeededRng::new(3);
        for round in 0..200 {
            let a = tile(Organ::Kidney, 10, 0, "a");
            let b = tile(Organ::Kidney, 200, 1, "b");
            let out = cutmix(&a, &b, &mut rng).unwrap();
            for y in 0..8 {
                for x in 0..8 {
                    let from_b_img = out.image.get(x, y, 0) == 200;
                    let from_b_mask = out.mask.get(x, y) == 1;
                    assert!(
                        out.image.get(x, y, 0) == 10 || from_b_img,
                        "round {round}: pixel from neither source"
                    );
                    assert_eq!(
                        from_b_img, from_b_mask,
                        "round {round}: image/mask provenance diverged at ({x},{y})"
                    );
                }
            }
        }
    }

    #[test]
    fn cutmix_rejects_mixed_organs() {
        let mut rng = SeededRng::new(4);
        for (i, oa) in Organ::ALL.iter().enumerate() {
            for ob in &Organ::ALL[i + 1..] {
                let a = tile(*oa, 1, 0, "a");
                let b = tile(*ob, 2, 0, "b");
                assert!(matches!(
                    cutmix(&a, &b, &mut rng),
                    Err(PipelineError::OrganMismatch(_))
                ));
            }
        }
    }

    #[test]
    fn cutmix_rejects_mismatched_dims() {
        let a = tile(Organ::Lung, 1, 0, "a");
        let b = LabeledTile::new(
            ByteImage::filled(4, 4, 3, 2).unwrap(),
            BinaryMask::zeros(4, 4).unwrap(),
            Organ::Lung,
            TileOrigin { sample_id: "b".into(), x: 0, y: 0 },
        )
        .unwrap();
        let mut rng = SeededRng::new(5);
        assert!(cutmix(&a, &b, &mut rng).is_err());
    }

    #[test]
    fn forced_foreground_crop_centers_on_the_pixel() {
        let image = ByteImage::filled(64, 64, 3, 0).unwrap();
        let mut mask = BinaryMask::zeros(64, 64).unwrap();
        mask.set(32, 32, 1);
        let mut rng = SeededRng::new(6);
        let tile = sample_tile(&image, &mask, Organ::Lung, "s", 16, 1.0, &mut rng).unwrap();
        assert_eq!((tile.origin.x, tile.origin.y), (24, 24));
        assert_eq!(tile.mask.get(8, 8), 1);
        assert_eq!(tile.mask.foreground_count(), 1);
    }

    #[test]
    fn empty_mask_falls_back_to_random_crop() {
        let image = ByteImage::filled(32, 32, 3, 0).unwrap();
        let mask = BinaryMask::zeros(32, 32).unwrap();
        let mut rng = SeededRng::new(7);
        let tile = sample_tile(&image, &mask, Organ::Lung, "s", 16, 1.0, &mut rng).unwrap();
        assert!(tile.origin.x <= 16 && tile.origin.y <= 16);
        assert!(tile.mask.is_empty());
    }

    #[test]
    fn small_images_are_reflection_padded() {
        let image = ByteImage::filled(5, 5, 3, 9).unwrap();
        let mask = BinaryMask::filled(5, 5, 1).unwrap();
        let mut rng = SeededRng::new(8);
        let tile = sample_tile(&image, &mask, Organ::Lung, "s", 12, 0.5, &mut rng).unwrap();
        assert_eq!((tile.image.width(), tile.image.height()), (12, 12));
        assert!(tile.image.data().iter().all(|&v| v == 9));
        assert!(tile.mask.data().iter().all(|&v| v == 1));
    }

    #[test]
    fn tile_sampling_is_reproducible() {
        let image = ByteImage::filled(40, 40, 3, 1).unwrap();
        let mut mask = BinaryMask::zeros(40, 40).unwrap();
        mask.set(10, 30, 1);
        let a = sample_tile(&image, &mask, Organ::Lung, "s", 8, 0.5, &mut SeededRng::new(9))
            .unwrap();
        let b = sample_tile(&image, &mask, Organ::Lung, "s", 8, 0.5, &mut SeededRng::new(9))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pure_fractions_draw_from_one_side_only() {
        let spec = DatasetSpec {
            labeled: vec![sample("l1", Organ::Lung), sample("l2", Organ::Lung)],
            pseudo_pools: vec![PseudoPool {
                name: "gtex".into(),
                samples: vec![sample("p1", Organ::Lung)],
            }],
            exclusions: vec![],
            pseudo_fraction: 0.0,
        };
        let mut rng = SeededRng::new(10);
        let epoch = compose_epoch(&spec, 200, &mut rng).unwrap();
        assert!(epoch.iter().all(|s| s.pool == PoolKind::Labeled));

        let spec = DatasetSpec { pseudo_fraction: 1.0, ..spec };
        let epoch = compose_epoch(&spec, 200, &mut rng).unwrap();
        assert!(epoch
            .iter()
            .all(|s| s.pool == PoolKind::Pseudo("gtex".into()) && s.id == "p1"));
    }

    #[test]
    fn pseudo_share_concentrates_at_the_fraction() {
        let spec = DatasetSpec {
            labeled: (0..10).map(|i| sample(&format!("l{i}"), Organ::Kidney)).collect(),
            pseudo_pools: vec![PseudoPool {
                name: "hpa-extra".into(),
                samples: (0..10).map(|i| sample(&format!("p{i}"), Organ::Kidney)).collect(),
            }],
            exclusions: vec![],
            pseudo_fraction: 0.3,
        };
        let mut rng = SeededRng::new(11);
        let epoch = compose_epoch(&spec, 10_000, &mut rng).unwrap();
        let pseudo = epoch.iter().filter(|s| s.pool != PoolKind::Labeled).count() as f64;
        let share = pseudo / 10_000.0;
        // 3 sigma of a binomial(1e4, 0.3) is ~0.014.
        assert!((share - 0.3).abs() < 0.015, "share {share}");
    }

    #[test]
    fn exclusions_never_appear_in_an_epoch() {
        let spec = DatasetSpec {
            labeled: vec![sample("keep", Organ::Lung), sample("drop", Organ::Lung)],
            pseudo_pools: vec![],
            exclusions: vec!["drop".into()],
            pseudo_fraction: 0.0,
        };
        let mut rng = SeededRng::new(12);
        let epoch = compose_epoch(&spec, 500, &mut rng).unwrap();
        assert!(epoch.iter().all(|s| s.id == "keep"));
    }

    #[test]
    fn empty_pseudo_pool_with_positive_fraction_is_an_error() {
        let spec = DatasetSpec {
            labeled: vec![sample("l1", Organ::Lung)],
            pseudo_pools: vec![],
            exclusions: vec![],
            pseudo_fraction: 0.5,
        };
        let mut rng = SeededRng::new(13);
        assert!(compose_epoch(&spec, 10, &mut rng).is_err());
    }

    #[test]
    fn filter_removes_known_and_reports_unknown() {
        let labeled: Vec<LabeledSample> = (0..352)
            .map(|i| {
                let organ = if i < 15 { Organ::Lung } else { Organ::Kidney };
                sample(&format!("s{i}"), organ)
            })
            .collect();
        let exclusions: Vec<String> = (0..15).map(|i| format!("s{i}")).collect();
        let spec = DatasetSpec { labeled, pseudo_pools: vec![], exclusions, pseudo_fraction: 0.0 };
        let outcome = filter_samples(spec);
        assert_eq!(outcome.spec.labeled.len(), 337);
        assert_eq!(outcome.removed.len(), 15);
        assert!(outcome.unknown.is_empty());

        let spec2 = DatasetSpec {
            labeled: vec![sample("a", Organ::Lung)],
            pseudo_pools: vec![],
            exclusions: vec!["ghost".into()],
            pseudo_fraction: 0.0,
        };
        let outcome = filter_samples(spec2);
        assert_eq!(outcome.spec.labeled.len(), 1);
        assert_eq!(outcome.unknown, vec!["ghost".to_owned()]);
    }

    #[test]
    fn empty_exclusion_list_changes_nothing() {
        let spec = DatasetSpec {
            labeled: vec![sample("a", Organ::Lung)],
            pseudo_pools: vec![],
            exclusions: vec![],
            pseudo_fraction: 0.0,
        };
        let outcome = filter_samples(spec.clone());
        assert_eq!(outcome.spec.labeled, spec.labeled);
        assert!(outcome.removed.is_empty() && outcome.unknown.is_empty());
    }

    #[test]
    fn foreground_hit_rate_beats_the_bound() {
        // Left half of the mask is foreground. The centered branch always
        // hits; a uniform crop hits when x0 < 32 out of 0..=48.
        let image = ByteImage::filled(64, 64, 1, 0).unwrap();
        let mut mask = BinaryMask::zeros(64, 64).unwrap();
        for y in 0..64 {
            for x in 0..32 {
                mask.set(x, y, 1);
            }
        }
        let mut rng = SeededRng::new(14);
        let mut hits = 0;
        let draws = 10_000;
        for _ in 0..draws {
            let tile = sample_tile(&image, &mask, Organ::Lung, "s", 16, 0.5, &mut rng).unwrap();
            if !tile.mask.is_empty() {
                hits += 1;
            }
        }
        let rate = hits as f64 / draws as f64;
        assert!(rate >= 0.74, "foreground hit rate {rate}");
    }
}
