//! Mask post-processing: probability thresholding, connected-component
//! labeling, and removal of regions whose area ratio falls below a
//! per-organ minimum.

use std::collections::BTreeMap;

use ftu_core::{BinaryMask, Organ, ProbMap};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

/// Pixel adjacency used when forming regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Four,
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(value: u8) -> std::result::Result<Self, String> {
        match value {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(format!("connectivity must be 4 or 8, got {other}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(value: Connectivity) -> u8 {
        match value {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

/// Per-organ post-processing settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrganPost {
    /// Regions with area / image area strictly below this ratio are dropped.
    pub min_region_ratio: f64,
    /// Probability binarization threshold; pixels >= threshold become 1.
    pub threshold: f64,
    pub connectivity: Connectivity,
}

/// The full per-organ post-processing table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OrganPostConfig {
    organs: BTreeMap<Organ, OrganPost>,
}

impl Default for OrganPostConfig {
    fn default() -> Self {
        let entry = |ratio| OrganPost {
            min_region_ratio: ratio,
            threshold: 0.5,
            connectivity: Connectivity::Eight,
        };
        let mut organs = BTreeMap::new();
        organs.insert(Organ::Kidney, entry(0.001));
        organs.insert(Organ::Prostate, entry(0.0005));
        organs.insert(Organ::LargeIntestine, entry(0.0001));
        organs.insert(Organ::Spleen, entry(0.001));
        organs.insert(Organ::Lung, entry(0.000001));
        Self { organs }
    }
}

impl OrganPostConfig {
    pub fn get(&self, organ: Organ) -> Result<&OrganPost> {
        self.organs.get(&organ).ok_or(PipelineError::MissingOrganConfig(organ))
    }

    pub fn set(&mut self, organ: Organ, post: OrganPost) {
        self.organs.insert(organ, post);
    }

    pub fn validate(&self) -> Result<()> {
        for organ in Organ::ALL {
            let post = self.get(organ)?;
            if !(post.min_region_ratio >= 0.0) {
                return Err(PipelineError::InvalidArgument(format!(
                    "post.{organ}.min_region_ratio must be >= 0, got {}",
                    post.min_region_ratio
                )));
            }
            if !(0.0..=1.0).contains(&post.threshold) {
                return Err(PipelineError::InvalidArgument(format!(
                    "post.{organ}.threshold must be in [0, 1], got {}",
                    post.threshold
                )));
            }
        }
        Ok(())
    }
}

/// Pixel = 1 iff probability >= threshold.
pub fn binarize(map: &ProbMap, threshold: f64) -> BinaryMask {
    let data = map
        .data()
        .iter()
        .map(|&p| u8::from(p as f64 >= threshold))
        .collect();
    BinaryMask::new(map.width(), map.height(), data)
        .expect("thresholded data is binary by construction")
}

/// Dense labeling of the foreground regions of a mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabels {
    width: usize,
    height: usize,
    /// 0 for background, region ids from 1, row-major.
    labels: Vec<u32>,
    /// areas[id - 1] = pixel count of region id.
    areas: Vec<usize>,
}

impl ComponentLabels {
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn region_count(&self) -> usize {
        self.areas.len()
    }

    pub fn areas(&self) -> &[usize] {
        &self.areas
    }
}

/// Union-find labeling in two row-major passes. Region ids are dense from 1
/// in order of first encounter.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> ComponentLabels {
    let (w, h) = (mask.width(), mask.height());
    let mut parent: Vec<u32> = (0..(w * h) as u32).collect();

    fn find(parent: &mut [u32], mut i: u32) -> u32 {
        while parent[i as usize] != i {
            parent[i as usize] = parent[parent[i as usize] as usize];
            i = parent[i as usize];
        }
        i
    }
    fn union(parent: &mut [u32], a: u32, b: u32) {
        let (ra, rb) = (find(parent, a), find(parent, b));
        if ra != rb {
            // Anchor to the smaller root so ids follow scan order.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent[hi as usize] = lo;
        }
    }

    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) == 0 {
                continue;
            }
            let here = (y * w + x) as u32;
            if x > 0 && mask.get(x - 1, y) == 1 {
                union(&mut parent, here, here - 1);
            }
            if y > 0 {
                let up = ((y - 1) * w + x) as u32;
                if mask.get(x, y - 1) == 1 {
                    union(&mut parent, here, up);
                }
                if connectivity == Connectivity::Eight {
                    if x > 0 && mask.get(x - 1, y - 1) == 1 {
                        union(&mut parent, here, up - 1);
                    }
                    if x + 1 < w && mask.get(x + 1, y - 1) == 1 {
                        union(&mut parent, here, up + 1);
                    }
                }
            }
        }
    }

    let mut labels = vec![0u32; w * h];
    let mut root_to_id: Vec<u32> = vec![0; w * h];
    let mut areas = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) == 0 {
                continue;
            }
            let root = find(&mut parent, (y * w + x) as u32) as usize;
            if root_to_id[root] == 0 {
                areas.push(0);
                root_to_id[root] = areas.len() as u32;
            }
            let id = root_to_id[root];
            labels[y * w + x] = id;
            areas[(id - 1) as usize] += 1;
        }
    }
    ComponentLabels { width: w, height: h, labels, areas }
}

/// Zeroes every region whose area ratio is strictly below the organ's
/// minimum; regions exactly at the ratio are kept.
pub fn remove_small_regions(
    mask: &BinaryMask,
    organ: Organ,
    config: &OrganPostConfig,
) -> Result<BinaryMask> {
    let post = config.get(organ)?;
    let components = connected_components(mask, post.connectivity);
    let image_area = (mask.width() * mask.height()) as f64;
    let keep: Vec<bool> = components
        .areas()
        .iter()
        .map(|&area| !((area as f64 / image_area) < post.min_region_ratio))
        .collect();
    let data = components
        .labels()
        .iter()
        .map(|&id| u8::from(id != 0 && keep[(id - 1) as usize]))
        .collect();
    Ok(BinaryMask::new(mask.width(), mask.height(), data)?)
}

/// Threshold then drop undersized regions.
pub fn postprocess(map: &ProbMap, organ: Organ, config: &OrganPostConfig) -> Result<BinaryMask> {
    let post = config.get(organ)?;
    remove_small_regions(&binarize(map, post.threshold), organ, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binarize_uses_inclusive_threshold() {
        let map = ProbMap::filled(2, 2, 0.6).unwrap();
        assert!(binarize(&map, 0.5).data().iter().all(|&v| v == 1));
        let map = ProbMap::filled(2, 2, 0.5).unwrap();
        assert!(binarize(&map, 0.5).data().iter().all(|&v| v == 1));
        let map = ProbMap::new(2, 1, vec![0.2, 0.8]).unwrap();
        assert_eq!(binarize(&map, 0.5).data(), &[0, 1]);
    }

    #[test]
    fn empty_mask_has_no_regions() {
        let mask = BinaryMask::zeros(4, 4).unwrap();
        let labels = connected_components(&mask, Connectivity::Eight);
        assert_eq!(labels.region_count(), 0);
    }

    #[test]
    fn diagonal_pixels_depend_on_connectivity() {
        let mut mask = BinaryMask::zeros(3, 3).unwrap();
        mask.set(0, 0, 1);
        mask.set(1, 1, 1);
        assert_eq!(connected_components(&mask, Connectivity::Eight).region_count(), 1);
        assert_eq!(connected_components(&mask, Connectivity::Four).region_count(), 2);
    }

    #[test]
    fn full_mask_is_one_region() {
        let mask = BinaryMask::filled(5, 3, 1).unwrap();
        let labels = connected_components(&mask, Connectivity::Four);
        assert_eq!(labels.region_count(), 1);
        assert_eq!(labels.areas(), &[15]);
    }

    #[test]
    fn ids_are_dense_in_scan_order() {
        // Two separate regions; the first encountered gets id 1.
        let mut mask = BinaryMask::zeros(5, 1).unwrap();
        mask.set(0, 0, 1);
        mask.set(4, 0, 1);
        let labels = connected_components(&mask, Connectivity::Four);
        assert_eq!(labels.label(0, 0), 1);
        assert_eq!(labels.label(4, 0), 2);
        assert_eq!(labels.areas(), &[1, 1]);
    }

    #[test]
    fn kidney_boundary_is_strict_less_than() {
        // 100x100 raster, kidney ratio 0.001: a 9-px region (0.0009) is
        // removed, a 10-px region (exactly 0.001) is kept.
        let mut mask = BinaryMask::zeros(100, 100).unwrap();
        for x in 0..9 {
            mask.set(x, 0, 1);
        }
        for x in 0..10 {
            mask.set(x, 50, 1);
        }
        let out = remove_small_regions(&mask, Organ::Kidney, &OrganPostConfig::default()).unwrap();
        assert_eq!(out.get(0, 0), 0, "9-px region must be removed");
        assert_eq!(out.get(0, 50), 1, "10-px region must be kept");
        assert_eq!(out.foreground_count(), 10);
    }

    #[test]
    fn lung_threshold_keeps_single_pixels() {
        let mut mask = BinaryMask::zeros(100, 100).unwrap();
        mask.set(3, 3, 1);
        let out = remove_small_regions(&mask, Organ::Lung, &OrganPostConfig::default()).unwrap();
        assert_eq!(out.foreground_count(), 1);
    }

    #[test]
    fn empty_mask_stays_empty() {
        let mask = BinaryMask::zeros(10, 10).unwrap();
        let out = remove_small_regions(&mask, Organ::Spleen, &OrganPostConfig::default()).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn postprocess_composes_threshold_and_filter() {
        let cfg = OrganPostConfig::default();
        let full = ProbMap::filled(20, 20, 0.6).unwrap();
        for organ in Organ::ALL {
            let mask = postprocess(&full, organ, &cfg).unwrap();
            assert_eq!(mask.foreground_count(), 400, "{organ}");
        }
        let low = ProbMap::filled(20, 20, 0.4).unwrap();
        assert!(postprocess(&low, Organ::Kidney, &cfg).unwrap().is_empty());
        // A single hot pixel in 200x200 is 1/40000 = 0.000025 < 0.001.
        let mut data = vec![0.0f32; 200 * 200];
        data[17] = 0.9;
        let spot = ProbMap::new(200, 200, data).unwrap();
        assert!(postprocess(&spot, Organ::Kidney, &cfg).unwrap().is_empty());
    }

    #[test]
    fn remove_small_regions_is_idempotent_and_shrinking() {
        let mut mask = BinaryMask::zeros(50, 50).unwrap();
        for i in 0..20 {
            mask.set(i % 50, (i * 7) % 50, 1);
        }
        for y in 20..30 {
            for x in 20..30 {
                mask.set(x, y, 1);
            }
        }
        let cfg = OrganPostConfig::default();
        let once = remove_small_regions(&mask, Organ::Kidney, &cfg).unwrap();
        let twice = remove_small_regions(&once, Organ::Kidney, &cfg).unwrap();
        assert_eq!(once, twice);
        assert!(once.foreground_count() <= mask.foreground_count());
    }

    #[test]
    fn table_defaults_match_shipped_ratios() {
        let cfg = OrganPostConfig::default();
        assert_eq!(cfg.get(Organ::Kidney).unwrap().min_region_ratio, 0.001);
        assert_eq!(cfg.get(Organ::Prostate).unwrap().min_region_ratio, 0.0005);
        assert_eq!(cfg.get(Organ::LargeIntestine).unwrap().min_region_ratio, 0.0001);
        assert_eq!(cfg.get(Organ::Spleen).unwrap().min_region_ratio, 0.001);
        assert_eq!(cfg.get(Organ::Lung).unwrap().min_region_ratio, 0.000001);
    }
}
