//! `ftu folds`: organ-stratified k-fold assignment written as `id,fold`.

use std::path::Path;

use ftu_pipeline::eval::stratified_kfold;

use crate::config::PipelineConfig;
use crate::errors::{CliError, Result};
use crate::manifest::read_manifest;
use crate::stage::write_file_atomic;

pub fn run(config: &PipelineConfig, manifest_path: &Path, output: &Path, k: usize) -> Result<()> {
    let entries = read_manifest(manifest_path)?;
    let metas: Vec<_> = entries.into_iter().map(|e| e.meta).collect();
    let assignment = stratified_kfold(&metas, k, config.seed).map_err(CliError::from)?;
    let mut body = String::from("id,fold\n");
    for (id, fold) in assignment.assignments() {
        body.push_str(&format!("{id},{fold}\n"));
    }
    write_file_atomic(output, body.as_bytes())
}
