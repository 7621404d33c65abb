//! Sliding-window inference: tile planning, stitched prediction, flip
//! test-time augmentation, probability ensembling, checkpoint parameter
//! averaging, and pseudo-label generation.

mod params;
mod predictors;
mod protocol;

pub use params::{
    average_parameters, read_parameter_set, read_parameter_set_file, write_parameter_set,
    write_parameter_set_file, ParameterSet, PARAMETER_SET_MAGIC,
};
pub use predictors::{byte_to_unit, Predictor, ReferencePredictor};
pub use protocol::{
    read_request, read_response, serve_requests, write_error, write_request, write_response,
    ExternalPredictor, TileBatch, ERROR_MAGIC, REQUEST_MAGIC, RESPONSE_MAGIC,
};

use ftu_core::{BinaryMask, ByteImage, ProbMap, SampleMeta};
use rayon::prelude::*;

use crate::error::{PipelineError, Result};
use crate::post::{postprocess, OrganPostConfig};

/// Tiles predicted in parallel between two sequential accumulation steps.
const PREDICT_BATCH: usize = 16;

/// The window placements covering one image. Offsets are in canonical
/// order: row by row, left to right.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileGrid {
    pub window: usize,
    pub stride: usize,
    pub offsets: Vec<(usize, usize)>,
}

fn axis_offsets(dim: usize, window: usize, stride: usize) -> Vec<usize> {
    if window >= dim {
        return vec![0];
    }
    let last = dim - window;
    let mut offsets = Vec::new();
    let mut i = 0usize;
    loop {
        let candidate = (i * stride).min(last);
        offsets.push(candidate);
        if candidate == last {
            break;
        }
        i += 1;
    }
    offsets
}

/// Plans window origins with stride round(window * (1 - overlap)), clamping
/// the final row/column so every pixel is covered. An image smaller than
/// the window gets a single origin; prediction reflection-pads it.
pub fn plan_tiles(width: usize, height: usize, window: usize, overlap: f64) -> Result<TileGrid> {
    if width == 0 || height == 0 || window == 0 {
        return Err(PipelineError::InvalidArgument(
            "plan_tiles dimensions must be >= 1".into(),
        ));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(PipelineError::InvalidArgument(format!(
            "overlap must be in [0, 1), got {overlap}"
        )));
    }
    let stride = ((window as f64 * (1.0 - overlap)).round() as usize).max(1);
    let xs = axis_offsets(width, window, stride);
    let ys = axis_offsets(height, window, stride);
    let mut offsets = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            offsets.push((x, y));
        }
    }
    Ok(TileGrid { window, stride, offsets })
}

fn pad_reflect(image: &ByteImage, target_w: usize, target_h: usize) -> ByteImage {
    fn reflect(i: i64, n: i64) -> usize {
        if n == 1 {
            return 0;
        }
        let m = i.rem_euclid(2 * n);
        if m < n {
            m as usize
        } else {
            (2 * n - 1 - m) as usize
        }
    }
    let (w, h, channels) = (image.width(), image.height(), image.channels());
    let mut data = Vec::with_capacity(target_w * target_h * channels);
    for y in 0..target_h {
        let sy = reflect(y as i64, h as i64);
        for x in 0..target_w {
            let sx = reflect(x as i64, w as i64);
            for c in 0..channels {
                data.push(image.get(sx, sy, c));
            }
        }
    }
    ByteImage::new(target_w, target_h, channels, data).expect("positive target dims")
}

/// Per-pixel cover counts for a grid over the (possibly padded) raster.
pub fn cover_counts(grid: &TileGrid, width: usize, height: usize) -> Vec<u32> {
    let pw = width.max(grid.window);
    let ph = height.max(grid.window);
    let mut counts = vec![0u32; pw * ph];
    for &(x, y) in &grid.offsets {
        for yy in y..y + grid.window {
            for xx in x..x + grid.window {
                counts[yy * pw + xx] += 1;
            }
        }
    }
    counts
}

/// Runs the predictor over every window and averages overlapping
/// predictions. Tiles are predicted in bounded batches (possibly in
/// parallel); accumulation always walks the canonical grid order in f64,
/// so the result is independent of thread count.
pub fn predict_sliding(
    image: &ByteImage,
    predictor: &dyn Predictor,
    grid: &TileGrid,
) -> Result<ProbMap> {
    let (w, h) = (image.width(), image.height());
    let pw = w.max(grid.window);
    let ph = h.max(grid.window);
    let padded;
    let source = if pw != w || ph != h {
        padded = pad_reflect(image, pw, ph);
        &padded
    } else {
        image
    };

    let mut sums = vec![0f64; pw * ph];
    let mut counts = vec![0u32; pw * ph];
    for batch in grid.offsets.chunks(PREDICT_BATCH) {
        let predictions: Vec<Result<ProbMap>> = batch
            .par_iter()
            .map(|&(x, y)| {
                let tile = source.crop(x, y, grid.window, grid.window)?;
                let map = predictor.predict(&tile)?;
                if map.width() != grid.window || map.height() != grid.window {
                    return Err(PipelineError::DimensionMismatch(format!(
                        "predictor {} returned {}x{} for a {}-px window",
                        predictor.name(),
                        map.width(),
                        map.height(),
                        grid.window
                    )));
                }
                Ok(map)
            })
            .collect();
        for (&(x, y), prediction) in batch.iter().zip(predictions) {
            let map = prediction?;
            for ty in 0..grid.window {
                let row = (y + ty) * pw + x;
                let map_row = ty * grid.window;
                for tx in 0..grid.window {
                    sums[row + tx] += map.data()[map_row + tx] as f64;
                    counts[row + tx] += 1;
                }
            }
        }
    }

    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let idx = y * pw + x;
            debug_assert!(counts[idx] > 0, "grid must cover every pixel");
            data.push((sums[idx] / counts[idx] as f64).clamp(0.0, 1.0) as f32);
        }
    }
    Ok(ProbMap::new(w, h, data)?)
}

/// Mean prediction over the original image and its three axis flips, each
/// inverse-flipped before averaging.
pub fn tta_predict(
    image: &ByteImage,
    predict_fn: &dyn Fn(&ByteImage) -> Result<ProbMap>,
) -> Result<ProbMap> {
    let (w, h) = (image.width(), image.height());
    let mut sums = vec![0f64; w * h];
    // (horizontal flip, vertical flip)
    let variants = [(false, false), (true, false), (false, true), (true, true)];
    for (flip_h, flip_v) in variants {
        let mut input = image.clone();
        if flip_h {
            input = input.flip_horizontal();
        }
        if flip_v {
            input = input.flip_vertical();
        }
        let mut map = predict_fn(&input)?;
        if map.width() != w || map.height() != h {
            return Err(PipelineError::DimensionMismatch(format!(
                "tta prediction returned {}x{}, expected {w}x{h}",
                map.width(),
                map.height()
            )));
        }
        if flip_h {
            map = map.flip_horizontal();
        }
        if flip_v {
            map = map.flip_vertical();
        }
        for (sum, &v) in sums.iter_mut().zip(map.data()) {
            *sum += v as f64;
        }
    }
    let data = sums.into_iter().map(|s| (s / 4.0).clamp(0.0, 1.0) as f32).collect();
    Ok(ProbMap::new(w, h, data)?)
}

/// Weighted mean of probability maps; uniform when `weights` is `None`.
pub fn ensemble(maps: &[ProbMap], weights: Option<&[f64]>) -> Result<ProbMap> {
    let first = maps
        .first()
        .ok_or_else(|| PipelineError::InvalidArgument("ensemble of zero maps".into()))?;
    let (w, h) = (first.width(), first.height());
    for map in maps {
        if map.width() != w || map.height() != h {
            return Err(PipelineError::DimensionMismatch(format!(
                "ensemble maps differ: {w}x{h} vs {}x{}",
                map.width(),
                map.height()
            )));
        }
    }
    let uniform = vec![1.0; maps.len()];
    let weights = match weights {
        Some(weights) => {
            if weights.len() != maps.len() {
                return Err(PipelineError::InvalidArgument(format!(
                    "{} weights for {} maps",
                    weights.len(),
                    maps.len()
                )));
            }
            if weights.iter().any(|&wt| !(wt >= 0.0)) {
                return Err(PipelineError::InvalidArgument(
                    "ensemble weights must be non-negative".into(),
                ));
            }
            weights
        }
        None => &uniform,
    };
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(PipelineError::InvalidArgument(
            "ensemble weights must sum to a positive value".into(),
        ));
    }
    let mut sums = vec![0f64; w * h];
    for (map, &weight) in maps.iter().zip(weights) {
        for (sum, &v) in sums.iter_mut().zip(map.data()) {
            *sum += weight * v as f64;
        }
    }
    let data = sums.into_iter().map(|s| (s / total).clamp(0.0, 1.0) as f32).collect();
    Ok(ProbMap::new(w, h, data)?)
}

/// A pseudo-labeled sample: the predicted mask plus the labeling round, so
/// the procedure can be repeated with a newer ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabeled {
    pub id: String,
    pub mask: BinaryMask,
    pub round: u32,
}

/// Labels every pool image with `predict_fn` followed by post-processing.
/// Errors are annotated with the sample id they occurred on.
pub fn pseudo_label(
    pool: &[(ByteImage, SampleMeta)],
    predict_fn: &dyn Fn(&ByteImage) -> Result<ProbMap>,
    post_config: &OrganPostConfig,
    round: u32,
) -> Result<Vec<PseudoLabeled>> {
    pool.iter()
        .map(|(image, meta)| {
            let map = predict_fn(image)
                .map_err(|e| PipelineError::for_sample(&meta.id, e))?;
            let mask = postprocess(&map, meta.organ, post_config)
                .map_err(|e| PipelineError::for_sample(&meta.id, e))?;
            Ok(PseudoLabeled { id: meta.id.clone(), mask, round })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ftu_core::{Organ, SeededRng, Source};

    fn random_image(w: usize, h: usize, seed: u64) -> ByteImage {
        let mut rng = SeededRng::new(seed);
        let data: Vec<u8> = (0..w * h * 3).map(|_| rng.range_usize(256) as u8).collect();
        ByteImage::new(w, h, 3, data).unwrap()
    }

    #[test]
    fn stride_for_quarter_overlap_of_1024_is_256() {
        let grid = plan_tiles(2048, 2048, 1024, 0.75).unwrap();
        assert_eq!(grid.stride, 256);
    }

    #[test]
    fn offsets_clamp_to_the_last_window() {
        let grid = plan_tiles(1500, 1024, 1024, 0.75).unwrap();
        let xs: Vec<usize> = {
            let mut xs: Vec<usize> =
                grid.offsets.iter().map(|&(x, _)| x).collect::<std::collections::BTreeSet<_>>()
                    .into_iter().collect();
            xs.sort_unstable();
            xs
        };
        assert_eq!(xs, vec![0, 256, 476]);
        assert!(grid.offsets.iter().all(|&(_, y)| y == 0));
    }

    #[test]
    fn exact_fit_yields_single_offset() {
        let grid = plan_tiles(512, 512, 512, 0.75).unwrap();
        assert_eq!(grid.offsets, vec![(0, 0)]);
    }

    #[test]
    fn overlap_out_of_range_is_rejected() {
        assert!(plan_tiles(100, 100, 64, 1.0).is_err());
        assert!(plan_tiles(100, 100, 64, -0.1).is_err());
        assert!(plan_tiles(100, 100, 64, 0.0).is_ok());
    }

    #[test]
    fn constant_predictor_is_a_stitching_fixed_point() {
        let image = random_image(300, 200, 1);
        let grid = plan_tiles(300, 200, 128, 0.75).unwrap();
        let map = predict_sliding(&image, &ReferencePredictor::Constant(0.7), &grid).unwrap();
        assert!(map.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn identity_predictor_survives_stitching_exactly() {
        let image = random_image(200, 150, 2);
        let grid = plan_tiles(200, 150, 64, 0.75).unwrap();
        let stitched =
            predict_sliding(&image, &ReferencePredictor::ChannelIdentity, &grid).unwrap();
        let direct = ReferencePredictor::ChannelIdentity.predict(&image).unwrap();
        for (a, b) in stitched.data().iter().zip(direct.data()) {
            assert!((a - b).abs() as f64 <= 1e-12);
        }
    }

    #[test]
    fn single_window_grid_equals_direct_prediction() {
        let image = random_image(64, 64, 3);
        let grid = plan_tiles(64, 64, 64, 0.5).unwrap();
        let predictor = ReferencePredictor::LuminanceSigmoid { gain: 4.0 };
        let stitched = predict_sliding(&image, &predictor, &grid).unwrap();
        let direct = predictor.predict(&image).unwrap();
        for (a, b) in stitched.data().iter().zip(direct.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn small_images_are_padded_through_a_single_window() {
        let image = random_image(40, 30, 4);
        let grid = plan_tiles(40, 30, 64, 0.75).unwrap();
        assert_eq!(grid.offsets, vec![(0, 0)]);
        let stitched =
            predict_sliding(&image, &ReferencePredictor::ChannelIdentity, &grid).unwrap();
        assert_eq!((stitched.width(), stitched.height()), (40, 30));
        let direct = ReferencePredictor::ChannelIdentity.predict(&image).unwrap();
        for (a, b) in stitched.data().iter().zip(direct.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn cover_counts_match_brute_force() {
        for (w, h, window, overlap) in
            [(100, 70, 32, 0.75), (64, 64, 64, 0.5), (33, 47, 16, 0.25), (10, 10, 32, 0.75)]
        {
            let grid = plan_tiles(w, h, window, overlap).unwrap();
            let counts = cover_counts(&grid, w, h);
            let pw = w.max(window);
            let ph = h.max(window);
            for y in 0..ph {
                for x in 0..pw {
                    let brute = grid
                        .offsets
                        .iter()
                        .filter(|&&(ox, oy)| {
                            x >= ox && x < ox + window && y >= oy && y < oy + window
                        })
                        .count() as u32;
                    assert_eq!(counts[y * pw + x], brute);
                    assert!(brute >= 1, "uncovered pixel ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn tta_is_identity_for_equivariant_predictors() {
        let image = random_image(20, 20, 5);
        let constant = ReferencePredictor::Constant(0.3);
        let out = tta_predict(&image, &|img| constant.predict(img)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn corner_delta_predictor_spreads_quarters() {
        let delta = |img: &ByteImage| {
            let mut data = vec![0f32; img.width() * img.height()];
            data[0] = 1.0;
            Ok(ProbMap::new(img.width(), img.height(), data)?)
        };
        let image = random_image(5, 4, 6);
        let out = tta_predict(&image, &delta).unwrap();
        let corners = [(0, 0), (4, 0), (0, 3), (4, 3)];
        for y in 0..4 {
            for x in 0..5 {
                let expected = if corners.contains(&(x, y)) { 0.25 } else { 0.0 };
                assert_eq!(out.get(x, y), expected, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn tta_commutes_with_flips_for_closed_predictor_sets() {
        let predictor = ReferencePredictor::LuminanceSigmoid { gain: 3.0 };
        let image = random_image(9, 7, 7);
        let tta_then_flip = tta_predict(&image, &|img| predictor.predict(img))
            .unwrap()
            .flip_horizontal();
        let flip_then_tta =
            tta_predict(&image.flip_horizontal(), &|img| predictor.predict(img)).unwrap();
        for (a, b) in tta_then_flip.data().iter().zip(flip_then_tta.data()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn ensemble_means_and_weights() {
        let a = ProbMap::filled(2, 2, 0.2).unwrap();
        let b = ProbMap::filled(2, 2, 0.8).unwrap();
        let mean = ensemble(&[a.clone(), b.clone()], None).unwrap();
        // f32 storage of 0.2 and 0.8 is inexact; the mean is 0.5 up to that.
        assert!(mean.data().iter().all(|&v| (v as f64 - 0.5).abs() < 1e-7));

        let identical = ensemble(&[a.clone(), a.clone()], None).unwrap();
        assert_eq!(identical, a);

        let zero = ProbMap::filled(1, 1, 0.0).unwrap();
        let point8 = ProbMap::filled(1, 1, 0.8).unwrap();
        let weighted = ensemble(&[zero, point8], Some(&[1.0, 3.0])).unwrap();
        assert!((weighted.get(0, 0) as f64 - 0.6).abs() < 1e-7);
    }

    #[test]
    fn ensemble_rejects_bad_inputs() {
        assert!(ensemble(&[], None).is_err());
        let a = ProbMap::filled(2, 2, 0.5).unwrap();
        let b = ProbMap::filled(3, 2, 0.5).unwrap();
        assert!(ensemble(&[a.clone(), b], None).is_err());
        assert!(ensemble(&[a.clone()], Some(&[0.0])).is_err());
        assert!(ensemble(&[a.clone()], Some(&[-1.0])).is_err());
        assert!(ensemble(&[a], Some(&[1.0, 2.0])).is_err());
    }

    fn pool_meta(id: &str, organ: Organ) -> SampleMeta {
        SampleMeta {
            id: id.into(),
            source: Source::Gtex,
            organ,
            pixel_size: 0.5,
            thickness: None,
            width: 50,
            height: 50,
            age: None,
            sex: None,
        }
    }

    #[test]
    fn pseudo_label_constant_zero_gives_empty_masks() {
        let pool = vec![
            (random_image(50, 50, 8), pool_meta("g1", Organ::Kidney)),
            (random_image(50, 50, 9), pool_meta("g2", Organ::Lung)),
        ];
        let constant = ReferencePredictor::Constant(0.0);
        let labeled = pseudo_label(
            &pool,
            &|img| constant.predict(img),
            &OrganPostConfig::default(),
            1,
        )
        .unwrap();
        assert!(labeled.iter().all(|p| p.mask.is_empty() && p.round == 1));
    }

    #[test]
    fn pseudo_label_constant_above_threshold_fills_masks() {
        let pool = vec![(random_image(50, 50, 10), pool_meta("g1", Organ::Kidney))];
        let constant = ReferencePredictor::Constant(0.6);
        let labeled = pseudo_label(
            &pool,
            &|img| constant.predict(img),
            &OrganPostConfig::default(),
            2,
        )
        .unwrap();
        assert_eq!(labeled[0].mask.foreground_count(), 2500);
    }

    #[test]
    fn pseudo_label_is_idempotent_for_a_fixed_predictor() {
        let pool = vec![(random_image(40, 40, 11), pool_meta("g1", Organ::Spleen))];
        let predictor = ReferencePredictor::LuminanceSigmoid { gain: 6.0 };
        let cfg = OrganPostConfig::default();
        let round1 = pseudo_label(&pool, &|img| predictor.predict(img), &cfg, 1).unwrap();
        let round2 = pseudo_label(&pool, &|img| predictor.predict(img), &cfg, 2).unwrap();
        assert_eq!(round1[0].mask, round2[0].mask);
    }

    #[test]
    fn pseudo_label_errors_carry_the_sample_id() {
        let pool = vec![(random_image(10, 10, 12), pool_meta("broken", Organ::Lung))];
        let failing = |_: &ByteImage| -> Result<ProbMap> {
            Err(PipelineError::Protocol("boom".into()))
        };
        let err = pseudo_label(&pool, &failing, &OrganPostConfig::default(), 1).unwrap_err();
        match err {
            PipelineError::Sample { id, .. } => assert_eq!(id, "broken"),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
