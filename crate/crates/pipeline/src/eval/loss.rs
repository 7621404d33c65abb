//! The four training losses and their analytic gradients. Predictions are
//! clamped to [eps, 1 - eps] before any logarithm; gradients chain through
//! the clamp, so they vanish where the clamp is saturated.

use crate::error::{PipelineError, Result};

pub const PROB_EPSILON: f64 = 1e-7;

/// A loss with its shape parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    Bce,
    SoftDice { smooth: f64 },
    Focal { gamma: f64 },
    Jaccard { smooth: f64 },
}

fn validate(p: &[f64], y: &[f64]) -> Result<()> {
    if p.is_empty() || p.len() != y.len() {
        return Err(PipelineError::InvalidArgument(format!(
            "loss operands must be equal-length and non-empty, got {} and {}",
            p.len(),
            y.len()
        )));
    }
    if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(PipelineError::InvalidArgument(format!(
            "targets must be 0 or 1, got {bad}"
        )));
    }
    if let Some(bad) = p.iter().find(|v| !v.is_finite()) {
        return Err(PipelineError::InvalidArgument(format!(
            "predictions must be finite, got {bad}"
        )));
    }
    Ok(())
}

fn check_params(which: Loss) -> Result<()> {
    match which {
        Loss::Focal { gamma } if gamma < 0.0 => Err(PipelineError::InvalidArgument(format!(
            "focal gamma must be >= 0, got {gamma}"
        ))),
        Loss::SoftDice { smooth } | Loss::Jaccard { smooth } if smooth < 0.0 => {
            Err(PipelineError::InvalidArgument(format!("smoothing must be >= 0, got {smooth}")))
        }
        _ => Ok(()),
    }
}

#[inline]
fn clamp(p: f64) -> f64 {
    p.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON)
}

/// Derivative of the clamp: zero where it saturates.
#[inline]
fn clamp_grad(p: f64) -> f64 {
    if (PROB_EPSILON..=1.0 - PROB_EPSILON).contains(&p) {
        1.0
    } else {
        0.0
    }
}

/// Evaluates one loss over flat prediction/target arrays.
pub fn loss(which: Loss, p: &[f64], y: &[f64]) -> Result<f64> {
    validate(p, y)?;
    check_params(which)?;
    let n = p.len() as f64;
    Ok(match which {
        Loss::Bce => {
            let mut sum = 0.0;
            for (&p, &y) in p.iter().zip(y) {
                let p = clamp(p);
                sum += y * p.ln() + (1.0 - y) * (1.0 - p).ln();
            }
            -sum / n
        }
        Loss::Focal { gamma } => {
            let mut sum = 0.0;
            for (&p, &y) in p.iter().zip(y) {
                let p = clamp(p);
                sum += y * (1.0 - p).powf(gamma) * p.ln()
                    + (1.0 - y) * p.powf(gamma) * (1.0 - p).ln();
            }
            -sum / n
        }
        Loss::SoftDice { smooth } => {
            let (sum_p, sum_y, sum_py) = moments(p, y);
            1.0 - (2.0 * sum_py + smooth) / (sum_p + sum_y + smooth)
        }
        Loss::Jaccard { smooth } => {
            let (sum_p, sum_y, sum_py) = moments(p, y);
            1.0 - (sum_py + smooth) / (sum_p + sum_y - sum_py + smooth)
        }
    })
}

fn moments(p: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let mut sum_p = 0.0;
    let mut sum_y = 0.0;
    let mut sum_py = 0.0;
    for (&p, &y) in p.iter().zip(y) {
        let p = clamp(p);
        sum_p += p;
        sum_y += y;
        sum_py += p * y;
    }
    (sum_p, sum_y, sum_py)
}

pub fn bce(p: &[f64], y: &[f64]) -> Result<f64> {
    loss(Loss::Bce, p, y)
}

pub fn soft_dice_loss(p: &[f64], y: &[f64], smooth: f64) -> Result<f64> {
    loss(Loss::SoftDice { smooth }, p, y)
}

pub fn focal_loss(p: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    loss(Loss::Focal { gamma }, p, y)
}

pub fn jaccard_loss(p: &[f64], y: &[f64], smooth: f64) -> Result<f64> {
    loss(Loss::Jaccard { smooth }, p, y)
}

/// Equal-weight mean of the four losses.
pub fn combined_loss(p: &[f64], y: &[f64], gamma: f64, smooth: f64) -> Result<f64> {
    combined_loss_weighted(p, y, gamma, smooth, [1.0; 4])
}

/// Weighted mean, weights ordered as BCE, soft Dice, focal, Jaccard.
pub fn combined_loss_weighted(
    p: &[f64],
    y: &[f64],
    gamma: f64,
    smooth: f64,
    weights: [f64; 4],
) -> Result<f64> {
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|&w| w < 0.0) || !(total > 0.0) {
        return Err(PipelineError::InvalidArgument(
            "loss weights must be non-negative with a positive sum".into(),
        ));
    }
    let values = [
        bce(p, y)?,
        soft_dice_loss(p, y, smooth)?,
        focal_loss(p, y, gamma)?,
        jaccard_loss(p, y, smooth)?,
    ];
    Ok(values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total)
}

/// Analytic per-element gradient of one loss with respect to p.
pub fn loss_gradient(which: Loss, p: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    validate(p, y)?;
    check_params(which)?;
    let n = p.len() as f64;
    Ok(match which {
        Loss::Bce => p
            .iter()
            .zip(y)
            .map(|(&raw, &y)| {
                let p = clamp(raw);
                clamp_grad(raw) * (-y / p + (1.0 - y) / (1.0 - p)) / n
            })
            .collect(),
        Loss::Focal { gamma } => p
            .iter()
            .zip(y)
            .map(|(&raw, &y)| {
                let p = clamp(raw);
                let grad = if y == 1.0 {
                    gamma * (1.0 - p).powf(gamma - 1.0) * p.ln() - (1.0 - p).powf(gamma) / p
                } else {
                    -gamma * p.powf(gamma - 1.0) * (1.0 - p).ln() + p.powf(gamma) / (1.0 - p)
                };
                clamp_grad(raw) * grad / n
            })
            .collect(),
        Loss::SoftDice { smooth } => {
            let (sum_p, sum_y, sum_py) = moments(p, y);
            let denom = sum_p + sum_y + smooth;
            let numer = 2.0 * sum_py + smooth;
            p.iter()
                .zip(y)
                .map(|(&raw, &y)| {
                    clamp_grad(raw) * (numer - 2.0 * y * denom) / (denom * denom)
                })
                .collect()
        }
        Loss::Jaccard { smooth } => {
            let (sum_p, sum_y, sum_py) = moments(p, y);
            let a = sum_py + smooth;
            let b = sum_p + sum_y - sum_py + smooth;
            p.iter()
                .zip(y)
                .map(|(&raw, &y)| {
                    clamp_grad(raw) * -(y * b - a * (1.0 - y)) / (b * b)
                })
                .collect()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ftu_core::SeededRng;

    fn random_instance(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = SeededRng::new(seed);
        let p: Vec<f64> = (0..n).map(|_| rng.range_f64(0.05, 0.95)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.range_usize(2) as f64).collect();
        (p, y)
    }

    #[test]
    fn perfect_prediction_drives_overlap_losses_to_zero() {
        let y = vec![1.0, 0.0, 1.0, 1.0, 0.0];
        let p = y.clone();
        assert!(soft_dice_loss(&p, &y, 1e-9).unwrap() < 1e-6);
        assert!(jaccard_loss(&p, &y, 1e-9).unwrap() < 1e-6);
    }

    #[test]
    fn focal_gamma_zero_reduces_to_bce() {
        let (p, y) = random_instance(64, 30);
        let a = focal_loss(&p, &y, 0.0).unwrap();
        let b = bce(&p, &y).unwrap();
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }

    #[test]
    fn focal_fixture_single_pixel() {
        // y = 1, p = 0.9, gamma = 2: -(0.1)^2 * ln(0.9).
        let value = focal_loss(&[0.9], &[1.0], 2.0).unwrap();
        assert!((value - 0.001053605156578263).abs() < 1e-12);
    }

    #[test]
    fn losses_are_non_negative_and_soft_losses_bounded() {
        for seed in 0..20 {
            let (p, y) = random_instance(32, seed);
            let d = soft_dice_loss(&p, &y, 1.0).unwrap();
            let j = jaccard_loss(&p, &y, 1.0).unwrap();
            assert!(bce(&p, &y).unwrap() >= 0.0);
            assert!(focal_loss(&p, &y, 2.0).unwrap() >= 0.0);
            assert!((0.0..=1.0).contains(&d));
            assert!((0.0..=1.0).contains(&j));
            // J <= D implies jaccard loss >= dice loss.
            assert!(j >= d - 1e-12);
        }
    }

    #[test]
    fn combined_is_the_mean_of_the_four()  {
        let (p, y) = random_instance(16, 50);
        let combined = combined_loss(&p, &y, 2.0, 1.0).unwrap();
        let mean = (bce(&p, &y).unwrap()
            + soft_dice_loss(&p, &y, 1.0).unwrap()
            + focal_loss(&p, &y, 2.0).unwrap()
            + jaccard_loss(&p, &y, 1.0).unwrap())
            / 4.0;
        assert!((combined - mean).abs() < 1e-12);
        assert!(combined_loss_weighted(&p, &y, 2.0, 1.0, [0.0; 4]).is_err());
    }

    #[test]
    fn negative_gamma_is_rejected() {
        assert!(focal_loss(&[0.5], &[1.0], -0.5).is_err());
        assert!(loss_gradient(Loss::Focal { gamma: -1.0 }, &[0.5], &[1.0]).is_err());
    }

    #[test]
    fn non_binary_targets_are_rejected() {
        assert!(bce(&[0.5], &[0.5]).is_err());
        assert!(bce(&[0.5], &[]).is_err());
    }

    #[test]
    fn bce_gradient_fixture() {
        // Single pixel, p = 0.5, y = 1: gradient -1/0.5 = -2.
        let grad = loss_gradient(Loss::Bce, &[0.5], &[1.0]).unwrap();
        assert!((grad[0] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn bce_gradient_vanishes_at_the_optimum() {
        // At p = y the clamp saturates, so the chained gradient is zero.
        let y = vec![1.0, 0.0];
        let grad = loss_gradient(Loss::Bce, &y, &y).unwrap();
        for g in grad {
            assert!(g.abs() <= PROB_EPSILON);
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let losses = [
            Loss::Bce,
            Loss::SoftDice { smooth: 1.0 },
            Loss::Focal { gamma: 2.0 },
            Loss::Jaccard { smooth: 1.0 },
        ];
        let h = 1e-4;
        for seed in 0..10 {
            let (p, y) = random_instance(64, 100 + seed);
            for which in losses {
                let analytic = loss_gradient(which, &p, &y).unwrap();
                for i in 0..p.len() {
                    let mut plus = p.clone();
                    plus[i] += h;
                    let mut minus = p.clone();
                    minus[i] -= h;
                    let numeric =
                        (loss(which, &plus, &y).unwrap() - loss(which, &minus, &y).unwrap())
                            / (2.0 * h);
                    assert!(
                        (analytic[i] - numeric).abs() <= 1e-5,
                        "{which:?} at {i}: analytic {} vs numeric {numeric}",
                        analytic[i]
                    );
                }
            }
        }
    }
}
