//! `ftu reference-predictor`: serve one of the built-in predictors over
//! the stdin/stdout frame protocol until end of stream.

use std::io::{stdin, stdout};

use ftu_pipeline::infer::{serve_requests, ReferencePredictor};

use crate::errors::{CliError, Result};

pub fn run(kind: &str) -> Result<()> {
    let predictor = ReferencePredictor::parse(kind).map_err(CliError::config)?;
    let mut reader = stdin().lock();
    let mut writer = stdout().lock();
    serve_requests(&predictor, &mut reader, &mut writer)
        .map_err(|e| CliError::Protocol(e.to_string()))
}
