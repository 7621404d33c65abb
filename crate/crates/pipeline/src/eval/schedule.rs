//! Reduce-on-plateau learning-rate schedule as a pure state machine over a
//! lower-is-better validation metric.

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LrPlateauState {
    pub current_lr: f64,
    pub best_metric: f64,
    pub epochs_since_improvement: u32,
    pub patience: u32,
    pub factor: f64,
    pub min_delta: f64,
}

impl LrPlateauState {
    /// Starts with `best_metric` at infinity, so the first observation
    /// counts as an improvement. `min_delta` defaults to 1e-4.
    pub fn new(initial_lr: f64, patience: u32, factor: f64) -> Result<Self> {
        if !(initial_lr > 0.0) {
            return Err(PipelineError::InvalidArgument(format!(
                "initial lr must be > 0, got {initial_lr}"
            )));
        }
        if !(factor > 0.0 && factor < 1.0) {
            return Err(PipelineError::InvalidArgument(format!(
                "factor must be in (0, 1), got {factor}"
            )));
        }
        Ok(Self {
            current_lr: initial_lr,
            best_metric: f64::INFINITY,
            epochs_since_improvement: 0,
            patience,
            factor,
            min_delta: 1e-4,
        })
    }

    pub fn with_min_delta(mut self, min_delta: f64) -> Self {
        self.min_delta = min_delta;
        self
    }
}

/// One epoch step. An improvement (metric < best - min_delta) resets the
/// stall counter; otherwise the counter grows, and once it exceeds the
/// patience the learning rate is multiplied by the factor.
pub fn lr_plateau_step(state: &LrPlateauState, metric: f64) -> LrPlateauState {
    let mut next = state.clone();
    if metric < state.best_metric - state.min_delta {
        next.best_metric = metric;
        next.epochs_since_improvement = 0;
    } else {
        next.epochs_since_improvement += 1;
        if next.epochs_since_improvement > next.patience {
            next.current_lr *= next.factor;
            next.epochs_since_improvement = 0;
        }
    }
    next
}
