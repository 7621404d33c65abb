//! Evaluation: the Dice metric, mask-averaged reporting, the public-score
//! adjustment, and organ-stratified k-fold assignment.

mod loss;
mod schedule;

pub use loss::{
    bce, combined_loss, combined_loss_weighted, focal_loss, jaccard_loss, loss_gradient,
    soft_dice_loss, Loss, PROB_EPSILON,
};
pub use schedule::{lr_plateau_step, LrPlateauState};

use std::collections::{HashMap, HashSet};

use ftu_core::{BinaryMask, Organ, SampleMeta, SeededRng};

use crate::error::{PipelineError, Result};

/// Dice coefficient 2|A n B| / (|A| + |B|). Two empty masks score 1.0:
/// a correctly predicted empty mask is a perfect prediction.
pub fn dice(pred: &BinaryMask, truth: &BinaryMask) -> Result<f64> {
    if pred.width() != truth.width() || pred.height() != truth.height() {
        return Err(PipelineError::DimensionMismatch(format!(
            "dice operands differ: {}x{} vs {}x{}",
            pred.width(),
            pred.height(),
            truth.width(),
            truth.height()
        )));
    }
    let mut intersection = 0u64;
    for (&a, &b) in pred.data().iter().zip(truth.data()) {
        intersection += (a & b) as u64;
    }
    let total = pred.foreground_count() as u64 + truth.foreground_count() as u64;
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * intersection as f64 / total as f64)
}

/// Unweighted mean of per-mask Dice scores.
pub fn mean_dice(pairs: &[(&BinaryMask, &BinaryMask)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(PipelineError::InvalidArgument("mean_dice of zero pairs".into()));
    }
    let mut sum = 0.0;
    for (pred, truth) in pairs {
        sum += dice(pred, truth)?;
    }
    Ok(sum / pairs.len() as f64)
}

/// Rescales a mixed-domain public score by the HuBMAP share of the test
/// set, capped at 1.
pub fn adjust_public_score(raw: f64, hubmap_proportion: f64) -> Result<f64> {
    if !(hubmap_proportion > 0.0) || hubmap_proportion > 1.0 {
        return Err(PipelineError::InvalidArgument(format!(
            "hubmap proportion must be in (0, 1], got {hubmap_proportion}"
        )));
    }
    Ok((raw / hubmap_proportion).min(1.0))
}

/// A complete assignment of sample ids to folds 0..k-1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    k: usize,
    /// (id, fold), in the order the samples were given.
    assignments: Vec<(String, usize)>,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignments(&self) -> &[(String, usize)] {
        &self.assignments
    }

    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignments.iter().find(|(i, _)| i == id).map(|&(_, f)| f)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &(_, fold) in &self.assignments {
            sizes[fold] += 1;
        }
        sizes
    }
}

/// Organ-stratified k-fold split: within each organ the samples are
/// shuffled by a seed-derived stream and dealt round-robin, with the
/// dealing position carried across organs so overall fold sizes also
/// differ by at most one.
pub fn stratified_kfold(metas: &[SampleMeta], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(PipelineError::InvalidArgument(format!("fold count must be >= 2, got {k}")));
    }
    let mut seen = HashSet::new();
    for meta in metas {
        if !seen.insert(meta.id.as_str()) {
            return Err(PipelineError::InvalidArgument(format!(
                "duplicate sample id {:?}",
                meta.id
            )));
        }
    }
    let root = SeededRng::new(seed);
    let mut fold_by_id: HashMap<&str, usize> = HashMap::with_capacity(metas.len());
    let mut cursor = 0usize;
    for organ in Organ::ALL {
        let mut ids: Vec<&str> = metas
            .iter()
            .filter(|m| m.organ == organ)
            .map(|m| m.id.as_str())
            .collect();
        let mut rng = root.split(organ.name());
        rng.shuffle(&mut ids);
        for id in ids {
            fold_by_id.insert(id, cursor);
            cursor = (cursor + 1) % k;
        }
    }
    let assignments = metas
        .iter()
        .map(|m| (m.id.clone(), fold_by_id[m.id.as_str()]))
        .collect();
    Ok(FoldAssignment { k, assignments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ftu_core::Source;

    fn mask(w: usize, h: usize, ones: &[(usize, usize)]) -> BinaryMask {
        let mut m = BinaryMask::zeros(w, h).unwrap();
        for &(x, y) in ones {
            m.set(x, y, 1);
        }
        m
    }

    #[test]
    fn identical_nonempty_masks_score_one() {
        let m = mask(4, 4, &[(0, 0), (1, 1), (2, 3)]);
        assert_eq!(dice(&m, &m).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_masks_score_zero() {
        let a = mask(4, 4, &[(0, 0)]);
        let b = mask(4, 4, &[(3, 3)]);
        assert_eq!(dice(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn hand_counted_fixture() {
        // |pred| = 2, |truth| = 3, intersection 1 -> 2/5.
        let pred = mask(4, 4, &[(0, 0), (1, 0)]);
        let truth = mask(4, 4, &[(1, 0), (2, 0), (3, 0)]);
        assert!((dice(&pred, &truth).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn both_empty_scores_one_and_half_empty_zero() {
        let empty = BinaryMask::zeros(3, 3).unwrap();
        assert_eq!(dice(&empty, &empty).unwrap(), 1.0);
        let nonempty = mask(3, 3, &[(1, 1)]);
        assert_eq!(dice(&nonempty, &empty).unwrap(), 0.0);
        assert_eq!(dice(&empty, &nonempty).unwrap(), 0.0);
    }

    #[test]
    fn dice_is_symmetric_on_random_masks() {
        let mut rng = SeededRng::new(20);
        for _ in 0..200 {
            let data_a: Vec<u8> = (0..36).map(|_| rng.range_usize(2) as u8).collect();
            let data_b: Vec<u8> = (0..36).map(|_| rng.range_usize(2) as u8).collect();
            let a = BinaryMask::new(6, 6, data_a).unwrap();
            let b = BinaryMask::new(6, 6, data_b).unwrap();
            assert_eq!(dice(&a, &b).unwrap(), dice(&b, &a).unwrap());
        }
    }

    #[test]
    fn dice_rejects_mismatched_dims() {
        let a = BinaryMask::zeros(2, 2).unwrap();
        let b = BinaryMask::zeros(3, 2).unwrap();
        assert!(dice(&a, &b).is_err());
    }

    #[test]
    fn mean_dice_averages_and_rejects_empty() {
        let ones = BinaryMask::filled(2, 2, 1).unwrap();
        let zeros = BinaryMask::zeros(2, 2).unwrap();
        let pairs = vec![(&ones, &ones), (&ones, &zeros)];
        assert_eq!(mean_dice(&pairs).unwrap(), 0.5);
        assert_eq!(mean_dice(&[(&ones, &ones)]).unwrap(), 1.0);
        assert!(mean_dice(&[]).is_err());
    }

    #[test]
    fn public_score_adjustment_fixture() {
        let adjusted = adjust_public_score(0.61453, 0.72).unwrap();
        assert!((adjusted - 0.8535).abs() < 1e-4);
        assert_eq!(adjust_public_score(0.5, 1.0).unwrap(), 0.5);
        assert_eq!(adjust_public_score(0.0, 0.72).unwrap(), 0.0);
        assert_eq!(adjust_public_score(0.99, 0.5).unwrap(), 1.0);
        assert!(adjust_public_score(0.5, 0.0).is_err());
        assert!(adjust_public_score(0.5, -0.3).is_err());
    }

    fn meta(id: String, organ: Organ) -> SampleMeta {
        SampleMeta {
            id,
            source: Source::Hpa,
            organ,
            pixel_size: 0.4,
            thickness: None,
            width: 8,
            height: 8,
            age: None,
            sex: None,
        }
    }

    /// Organ counts with the training-set imbalance, totalling 352.
    fn imbalanced_corpus() -> Vec<SampleMeta> {
        let counts = [
            (Organ::Kidney, 99),
            (Organ::Prostate, 93),
            (Organ::LargeIntestine, 58),
            (Organ::Spleen, 53),
            (Organ::Lung, 49),
        ];
        let mut metas = Vec::new();
        for (organ, count) in counts {
            for i in 0..count {
                metas.push(meta(format!("{organ}_{i}"), organ));
            }
        }
        assert_eq!(metas.len(), 352);
        metas
    }

    #[test]
    fn five_folds_over_352_samples_balance() {
        let metas = imbalanced_corpus();
        let folds = stratified_kfold(&metas, 5, 7).unwrap();
        let sizes = folds.fold_sizes();
        assert_eq!(sizes.iter().sum::<usize>(), 352);
        assert!(sizes.iter().all(|&s| s == 70 || s == 71), "{sizes:?}");

        for organ in Organ::ALL {
            let mut per_fold = vec![0usize; 5];
            for m in metas.iter().filter(|m| m.organ == organ) {
                per_fold[folds.fold_of(&m.id).unwrap()] += 1;
            }
            let max = per_fold.iter().max().unwrap();
            let min = per_fold.iter().min().unwrap();
            assert!(max - min <= 1, "{organ}: {per_fold:?}");
        }
    }

    #[test]
    fn one_sample_per_fold_when_counts_match() {
        let metas: Vec<SampleMeta> =
            (0..5).map(|i| meta(format!("s{i}"), Organ::Lung)).collect();
        let folds = stratified_kfold(&metas, 5, 3).unwrap();
        let mut seen: Vec<usize> = folds.assignments().iter().map(|&(_, f)| f).collect();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn same_seed_reproduces_the_assignment() {
        let metas = imbalanced_corpus();
        let a = stratified_kfold(&metas, 5, 99).unwrap();
        let b = stratified_kfold(&metas, 5, 99).unwrap();
        assert_eq!(a, b);
        let c = stratified_kfold(&metas, 5, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn kfold_rejects_degenerate_inputs() {
        let metas = vec![meta("a".into(), Organ::Lung)];
        assert!(stratified_kfold(&metas, 1, 0).is_err());
        let dup = vec![meta("a".into(), Organ::Lung), meta("a".into(), Organ::Lung)];
        assert!(stratified_kfold(&dup, 2, 0).is_err());
    }

    #[test]
    fn kfold_is_a_partition_for_random_distributions() {
        let mut rng = SeededRng::new(21);
        for round in 0..20 {
            let n = 20 + rng.range_usize(200);
            let metas: Vec<SampleMeta> = (0..n)
                .map(|i| {
                    let organ = Organ::ALL[rng.range_usize(5)];
                    meta(format!("r{round}_{i}"), organ)
                })
                .collect();
            let k = 2 + rng.range_usize(6);
            let folds = stratified_kfold(&metas, k, round as u64).unwrap();
            assert_eq!(folds.assignments().len(), n);
            let ids: HashSet<&str> =
                folds.assignments().iter().map(|(id, _)| id.as_str()).collect();
            assert_eq!(ids.len(), n);
            assert!(folds.assignments().iter().all(|&(_, f)| f < k));
            for organ in Organ::ALL {
                let mut per_fold = vec![0usize; k];
                for m in metas.iter().filter(|m| m.organ == organ) {
                    per_fold[folds.fold_of(&m.id).unwrap()] += 1;
                }
                let max = per_fold.iter().max().unwrap();
                let min = per_fold.iter().min().unwrap();
                assert!(max - min <= 1);
            }
        }
    }
}
