//! `ftu evaluate`: Dice between predictions and ground truth, reported per
//! organ with an overall row, optionally broken down by fold.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use ftu_core::io::read_mask_png;
use ftu_core::{rle_decode, BinaryMask, Organ, Rle};
use ftu_pipeline::eval::{dice, mean_dice};

use crate::config::PipelineConfig;
use crate::errors::{CliError, Result};
use crate::manifest::read_manifest;
use crate::stage::write_file_atomic;

pub fn run(
    _config: &PipelineConfig,
    predictions: &Path,
    truths_manifest: &Path,
    output: Option<&Path>,
    folds: Option<&Path>,
) -> Result<()> {
    let truth_entries = read_manifest(truths_manifest)?;
    let mut truths: Vec<(String, Organ, BinaryMask)> = Vec::with_capacity(truth_entries.len());
    for entry in &truth_entries {
        let mask = super::prepare::load_mask(entry)?;
        truths.push((entry.meta.id.clone(), entry.meta.organ, mask));
    }
    let dims: HashMap<&str, (usize, usize)> = truth_entries
        .iter()
        .map(|e| (e.meta.id.as_str(), (e.meta.width, e.meta.height)))
        .collect();

    let predictions = load_predictions(predictions, &dims)?;

    let missing: Vec<&str> = truths
        .iter()
        .map(|(id, _, _)| id.as_str())
        .filter(|id| !predictions.contains_key(*id))
        .collect();
    let extra: Vec<&str> = predictions
        .keys()
        .map(String::as_str)
        .filter(|id| !dims.contains_key(*id))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(CliError::data(format!(
            "prediction/truth id mismatch; missing predictions: [{}], unmatched predictions: [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }

    let mut per_organ: BTreeMap<Organ, Vec<f64>> = BTreeMap::new();
    let mut per_id: HashMap<&str, f64> = HashMap::new();
    for (id, organ, truth) in &truths {
        let score = dice(&predictions[id], truth).map_err(CliError::from)?;
        per_organ.entry(*organ).or_default().push(score);
        per_id.insert(id, score);
    }

    let mut report = String::from("organ,n_samples,mean_dice\n");
    for (organ, scores) in &per_organ {
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        report.push_str(&format!("{organ},{},{}\n", scores.len(), mean));
    }
    let overall: f64 = {
        let pairs: Vec<(&BinaryMask, &BinaryMask)> = truths
            .iter()
            .map(|(id, _, truth)| (&predictions[id], truth))
            .collect();
        mean_dice(&pairs).map_err(CliError::from)?
    };
    report.push_str(&format!("overall,{},{overall}\n", truths.len()));

    if let Some(folds_path) = folds {
        let assignment = read_folds_csv(folds_path)?;
        let mut per_fold: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (id, score) in &per_id {
            let fold = assignment.get(*id).copied().ok_or_else(|| {
                CliError::data(format!("sample {id:?} is missing from the fold assignment"))
            })?;
            per_fold.entry(fold).or_default().push(*score);
        }
        for (fold, scores) in per_fold {
            let mean = scores.iter().sum::<f64>() / scores.len() as f64;
            report.push_str(&format!("fold_{fold},{},{mean}\n", scores.len()));
        }
    }

    match output {
        Some(path) => write_file_atomic(path, report.as_bytes())?,
        None => print!("{report}"),
    }
    Ok(())
}

/// Predictions come either as a directory of `<id>.png` masks or as a
/// submission CSV (`id,rle`) decoded against the truth dimensions.
fn load_predictions(
    path: &Path,
    dims: &HashMap<&str, (usize, usize)>,
) -> Result<HashMap<String, BinaryMask>> {
    if path.is_dir() {
        let mut masks = HashMap::new();
        for (&id, &(w, h)) in dims {
            let file = path.join(format!("{id}.png"));
            if !file.is_file() {
                continue; // reported as an id mismatch by the caller
            }
            let mask = read_mask_png(&file)
                .map_err(|e| CliError::data(format!("{}: {e}", file.display())))?;
            if (mask.width(), mask.height()) != (w, h) {
                return Err(CliError::data(format!(
                    "prediction {id:?} is {}x{} but the truth frame is {w}x{h}",
                    mask.width(),
                    mask.height()
                )));
            }
            masks.insert(id.to_owned(), mask);
        }
        return Ok(masks);
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        .clone();
    if headers.len() < 2 || &headers[0] != "id" {
        return Err(CliError::config(format!(
            "{}: expected a submission CSV with an id,rle header",
            path.display()
        )));
    }
    let mut masks = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let id = record.get(0).unwrap_or_default().to_owned();
        let rle_text = record.get(1).unwrap_or_default();
        let Some(&(w, h)) = dims.get(id.as_str()) else {
            masks.insert(id, BinaryMask::zeros(1, 1).map_err(CliError::from)?);
            continue;
        };
        let rle = Rle::from_text(rle_text)
            .map_err(|e| CliError::data(format!("submission {id:?}: {e}")))?;
        let mask = rle_decode(&rle, w, h)
            .map_err(|e| CliError::data(format!("submission {id:?}: {e}")))?;
        masks.insert(id, mask);
    }
    Ok(masks)
}

fn read_folds_csv(path: &Path) -> Result<HashMap<String, usize>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let mut assignment = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let id = record.get(0).unwrap_or_default().to_owned();
        let fold: usize = record
            .get(1)
            .unwrap_or_default()
            .parse()
            .map_err(|_| CliError::data(format!("{}: bad fold for {id:?}", path.display())))?;
        assignment.insert(id, fold);
    }
    Ok(assignment)
}
