//! Focal and dice losses, stage weighting, and the ground-truth mask type.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probability clamp for log/division stability.
pub const PROB_EPS: f64 = 1e-7;
/// Smoothing term in the dice ratio.
pub const DICE_EPS: f64 = 1e-7;

/// Binary anomaly mask, 1 = anomalous pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    mask: Tensor,
}

impl GroundTruth {
    pub fn new(mask: Tensor) -> Result<Self> {
        if mask.rank() != 2 {
            return Err(Error::shape("ground_truth", format!("expected H x W, got {:?}", mask.shape())));
        }
        if mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid("ground_truth", "mask values must be 0 or 1"));
        }
        Ok(Self { mask })
    }

    pub fn mask(&self) -> &Tensor {
        &self.mask
    }

    pub fn anomalous_fraction(&self) -> f64 {
        self.mask.data().iter().sum::<f64>() / self.mask.len() as f64
    }
}

fn check_shapes(p: &Tensor, y: &GroundTruth, op: &'static str) -> Result<()> {
    if p.shape() != y.mask.shape() {
        return Err(Error::shape(op, format!("prediction {:?} vs mask {:?}", p.shape(), y.mask.shape())));
    }
    Ok(())
}

/// Focal loss on foreground probabilities `p`. Each pixel uses the probability of its true class;
/// returns the mean loss and its gradient with respect to `p`.
pub fn focal_loss(p: &Tensor, y: &GroundTruth, gamma: f64) -> Result<(f64, Vec<f64>)> {
    check_shapes(p, y, "focal_loss")?;
    let (value, grad) = focal_core(p.data().iter().map(|&pv| (1.0 - pv, pv)), y, gamma)?;
    let grad = grad.chunks(2).map(|g| g[1] - g[0]).collect();
    Ok((value, grad))
}

/// Focal loss on a two-channel probability map `H x W x 2` (background, foreground). Reading the
/// true-class probability straight from its channel avoids the cancellation in `1 - p` when the
/// foreground probability is close to one. The gradient is with respect to `probs`.
pub fn focal_loss_two_class(probs: &Tensor, y: &GroundTruth, gamma: f64) -> Result<(f64, Vec<f64>)> {
    let s = probs.shape();
    if s.len() != 3 || s[2] != 2 || s[..2] != *y.mask.shape() {
        return Err(Error::shape("focal_loss", format!("probabilities {s:?} vs mask {:?}", y.mask.shape())));
    }
    focal_core(probs.data().chunks(2).map(|c| (c[0], c[1])), y, gamma)
}

/// Shared focal kernel over `(background, foreground)` pairs; the gradient is interleaved the same way.
fn focal_core(pairs: impl Iterator<Item = (f64, f64)>, y: &GroundTruth, gamma: f64) -> Result<(f64, Vec<f64>)> {
    if !(gamma >= 0.0) {
        return Err(Error::invalid("focal_loss", format!("gamma {gamma} must be non-negative")));
    }
    let n = y.mask.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(2 * y.mask.len());
    for ((bg, fg), &yv) in pairs.zip(y.mask.data()) {
        let positive = yv > 0.5;
        let (raw, other) = if positive { (fg, bg) } else { (bg, fg) };
        let pt = raw.clamp(PROB_EPS, 1.0 - PROB_EPS);
        // 1 - p_t, taken from the other channel when it is the more accurate of the two
        let q = if raw == pt { other.clamp(PROB_EPS, 1.0 - PROB_EPS) } else { 1.0 - pt };
        total -= q.powf(gamma) * pt.ln();
        let d_pt = if raw != pt {
            0.0
        } else {
            let decay = if gamma == 0.0 { 0.0 } else { gamma * q.powf(gamma - 1.0) * pt.ln() };
            decay - q.powf(gamma) / pt
        } / n;
        grad.extend(if positive { [0.0, d_pt] } else { [d_pt, 0.0] });
    }
    Ok((total / n, grad))
}

/// `1 - (2 sum(y yhat) + eps) / (sum(y^2) + sum(yhat^2) + eps)` and its gradient in `yhat`.
pub fn dice_loss(yhat: &Tensor, y: &GroundTruth) -> Result<(f64, Vec<f64>)> {
    check_shapes(yhat, y, "dice_loss")?;
    let (mut inter, mut denom, mut gap) = (0.0, DICE_EPS, 0.0);
    for (&a, &b) in yhat.data().iter().zip(y.mask.data()) {
        inter += a * b;
        denom += a * a + b * b;
        gap += (a - b) * (a - b);
    }
    let num = 2.0 * inter + DICE_EPS;
    let grad = yhat
        .data()
        .iter()
        .zip(y.mask.data())
        .map(|(&a, &b)| -(2.0 * b * denom - num * 2.0 * a) / (denom * denom))
        .collect();
    // 1 - num/denom rewritten as sum((y - yhat)^2) / denom, which keeps relative accuracy near zero
    Ok((gap / denom, grad))
}

/// Focal and dice terms of one stage.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageLoss {
    pub focal: f64,
    pub dice: f64,
}

/// `sum_i weight_i * (focal_i + dice_i)`.
pub fn total_loss(stages: &[StageLoss], weights: &[f64]) -> Result<f64> {
    validate_weights(weights, stages.len())?;
    Ok(stages.iter().zip(weights).map(|(s, w)| w * (s.focal + s.dice)).sum())
}

pub fn validate_weights(weights: &[f64], stages: usize) -> Result<()> {
    if weights.len() != stages {
        return Err(Error::config(
            "loss.stage_weights",
            format!("{} weights for {stages} stages", weights.len()),
        ));
    }
    if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::config("loss.stage_weights", "weights must be positive"));
    }
    Ok(())
}
