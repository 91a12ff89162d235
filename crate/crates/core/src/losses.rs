//! ROI-masked Dice and adaptively weighted BCE, the global Dice regularizer,
//! and their analytic gradients with respect to logits.
//!
//! Reductions use a fixed pairwise tree so results are reproducible
//! bit for bit regardless of how the caller schedules work.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regions::{RegionMode, SupervisionRegions};
use crate::volume::{ensure_compatible, BinaryMask, Grid, ScalarVolume};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda_dice: f64,
    pub lambda_bce: f64,
    /// Weight of the global Dice term relative to `lambda_dice`.
    pub alpha: f64,
    pub w_max: f64,
    /// Smoothing for both Dice ratios and the `w⁺` ratio.
    pub epsilon: f64,
    pub region_mode: RegionMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_dice: 1.0,
            lambda_bce: 2.0,
            alpha: 0.1,
            w_max: 10.0,
            epsilon: 1e-5,
            region_mode: RegionMode::Effective,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("lambda_dice", self.lambda_dice),
            ("lambda_bce", self.lambda_bce),
            ("alpha", self.alpha),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Parameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.w_max.is_finite() && self.w_max >= 1.0) {
            return Err(Error::Parameter(format!("w_max must be >= 1, got {}", self.w_max)));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Parameter(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub dice_roi: f64,
    pub wbce_roi: f64,
    pub dice_global: f64,
    /// `λ_Dice · dice_roi + λ_BCE · wbce_roi`
    pub combined: f64,
    /// `combined + α · λ_Dice · dice_global`
    pub total: f64,
    pub w_plus: f64,
    /// Scar voxels inside the ROI.
    pub positives: u64,
    /// Non-scar voxels inside the ROI.
    pub negatives: u64,
    /// `∂total/∂z`, filled by [`total_loss_with_grad`].
    pub grad_logits: Option<ScalarVolume>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedBce {
    pub loss: f64,
    pub w_plus: f64,
    pub positives: u64,
    pub negatives: u64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow; `-log σ(z) = softplus(-z)`.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if values.len() <= BLOCK {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// `clamp(√((N + ε) / (P + ε)), 1, w_max)`.
pub fn adaptive_positive_weight(positives: u64, negatives: u64, w_max: f64, eps: f64) -> f64 {
    ((negatives as f64 + eps) / (positives as f64 + eps))
        .sqrt()
        .clamp(1.0, w_max)
}

fn check_probabilities(prob: &ScalarVolume) -> Result<()> {
    match prob.data().iter().find(|p| !(0.0..=1.0).contains(*p)) {
        Some(p) => Err(Error::Parameter(format!("probability {p} outside [0, 1]"))),
        None => Ok(()),
    }
}

/// Dice loss restricted to `roi`; `roi = None` means the whole grid.
fn masked_dice(prob: &[f64], gt: &[u8], roi: Option<&[u8]>, eps: f64) -> DiceParts {
    let n = prob.len();
    let mut inter = Vec::with_capacity(n);
    let mut pred = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for idx in 0..n {
        let inside = roi.is_none_or(|r| r[idx] != 0);
        if inside {
            let y = gt[idx] as f64;
            inter.push(prob[idx] * y);
            pred.push(prob[idx]);
            truth.push(y);
        } else {
            inter.push(0.0);
            pred.push(0.0);
            truth.push(0.0);
        }
    }
    let numerator = 2.0 * pairwise_sum(&inter) + eps;
    let denominator = pairwise_sum(&pred) + pairwise_sum(&truth) + eps;
    DiceParts {
        loss: 1.0 - numerator / denominator,
        numerator,
        denominator,
    }
}

struct DiceParts {
    loss: f64,
    numerator: f64,
    denominator: f64,
}

impl DiceParts {
    /// `∂loss/∂p` at a voxel inside the region.
    fn grad_prob(&self, y: f64) -> f64 {
        -(2.0 * y * self.denominator - self.numerator) / (self.denominator * self.denominator)
    }
}

/// `1 − (2 Σ R p y + ε) / (Σ R p + Σ R y + ε)`.
pub fn roi_dice_loss(
    prob: &ScalarVolume,
    gt: &BinaryMask,
    roi: &BinaryMask,
    eps: f64,
) -> Result<f64> {
    ensure_compatible(prob, gt, "dice prediction vs ground truth")?;
    ensure_compatible(prob, roi, "dice prediction vs roi")?;
    check_probabilities(prob)?;
    Ok(masked_dice(prob.data(), gt.data(), Some(roi.data()), eps).loss)
}

/// Dice over the full grid.
pub fn global_dice_loss(prob: &ScalarVolume, gt: &BinaryMask, eps: f64) -> Result<f64> {
    ensure_compatible(prob, gt, "dice prediction vs ground truth")?;
    check_probabilities(prob)?;
    Ok(masked_dice(prob.data(), gt.data(), None, eps).loss)
}

fn roi_counts(gt: &[u8], roi: &[u8]) -> (u64, u64) {
    gt.iter()
        .zip(roi)
        .filter(|(_, &r)| r != 0)
        .fold((0, 0), |(p, n), (&y, _)| if y != 0 { (p + 1, n) } else { (p, n + 1) })
}

/// Mean over the ROI of `−w⁺ y log σ(z) − (1 − y) log(1 − σ(z))`, with `w⁺`
/// computed from the label counts inside the ROI.
pub fn roi_weighted_bce(
    logits: &ScalarVolume,
    gt: &BinaryMask,
    roi: &BinaryMask,
    w_max: f64,
    eps: f64,
) -> Result<WeightedBce> {
    ensure_compatible(logits, gt, "logits vs ground truth")?;
    ensure_compatible(logits, roi, "logits vs roi")?;
    let (positives, negatives) = roi_counts(gt.data(), roi.data());
    if positives + negatives == 0 {
        return Err(Error::EmptyRoi);
    }
    let w_plus = adaptive_positive_weight(positives, negatives, w_max, eps);
    let loss = bce_sum(logits.data(), gt.data(), roi.data(), w_plus)
        / (positives + negatives) as f64;
    Ok(WeightedBce {
        loss,
        w_plus,
        positives,
        negatives,
    })
}

fn bce_sum(z: &[f64], gt: &[u8], roi: &[u8], w_plus: f64) -> f64 {
    let terms: Vec<f64> = z
        .iter()
        .zip(gt.iter().zip(roi))
        .map(|(&z, (&y, &r))| match (r != 0, y != 0) {
            (false, _) => 0.0,
            (true, true) => w_plus * softplus(-z),
            (true, false) => softplus(z),
        })
        .collect();
    pairwise_sum(&terms)
}

pub fn total_loss(
    logits: &ScalarVolume,
    gt: &BinaryMask,
    roi: &BinaryMask,
    cfg: &LossConfig,
) -> Result<LossReport> {
    compose(logits, gt, roi, cfg, false)
}

/// As [`total_loss`], also filling `grad_logits`. `w⁺` depends only on the
/// labels and is held constant.
pub fn total_loss_with_grad(
    logits: &ScalarVolume,
    gt: &BinaryMask,
    roi: &BinaryMask,
    cfg: &LossConfig,
) -> Result<LossReport> {
    compose(logits, gt, roi, cfg, true)
}

/// Picks the ROI from `regions` according to `cfg.region_mode`.
pub fn total_loss_for_regions(
    logits: &ScalarVolume,
    gt: &BinaryMask,
    regions: &SupervisionRegions,
    cfg: &LossConfig,
    with_grad: bool,
) -> Result<LossReport> {
    compose(logits, gt, regions.roi(cfg.region_mode), cfg, with_grad)
}

fn compose(
    logits: &ScalarVolume,
    gt: &BinaryMask,
    roi: &BinaryMask,
    cfg: &LossConfig,
    with_grad: bool,
) -> Result<LossReport> {
    cfg.validate()?;
    let bce = roi_weighted_bce(logits, gt, roi, cfg.w_max, cfg.epsilon)?;
    let z = logits.data();
    let prob: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
    let roi_dice = masked_dice(&prob, gt.data(), Some(roi.data()), cfg.epsilon);
    let global = masked_dice(&prob, gt.data(), None, cfg.epsilon);

    let combined = cfg.lambda_dice * roi_dice.loss + cfg.lambda_bce * bce.loss;
    let total = combined + cfg.alpha * cfg.lambda_dice * global.loss;

    let grad_logits = with_grad.then(|| {
        let roi_size = (bce.positives + bce.negatives) as f64;
        let data = z
            .iter()
            .enumerate()
            .map(|(idx, &zi)| {
                let y = gt.data()[idx] as f64;
                // σ'(z) = σ(z)σ(−z)
                let dp_dz = prob[idx] * sigmoid(-zi);
                let mut g = cfg.alpha * cfg.lambda_dice * global.grad_prob(y) * dp_dz;
                if roi.data()[idx] != 0 {
                    g += cfg.lambda_dice * roi_dice.grad_prob(y) * dp_dz;
                    let dbce = if y != 0.0 {
                        -bce.w_plus * sigmoid(-zi)
                    } else {
                        prob[idx]
                    };
                    g += cfg.lambda_bce * dbce / roi_size;
                }
                g
            })
            .collect();
        ScalarVolume::from_raw(logits.dims(), logits.spacing(), data)
    });

    Ok(LossReport {
        dice_roi: roi_dice.loss,
        wbce_roi: bce.loss,
        dice_global: global.loss,
        combined,
        total,
        w_plus: bce.w_plus,
        positives: bce.positives,
        negatives: bce.negatives,
        grad_logits,
    })
}
