//! Localization and saliency metrics: IoU, CorLoc, MAE and F-measure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localization::{BoundingBox, Mask, SupportMap};
use crate::pgm::GrayMap;

/// Default F-measure weighting.
pub const BETA2: f64 = 0.3;
/// PASCAL overlap criterion.
pub const CORLOC_THRESHOLD: f64 = 0.5;

/// Intersection over union with inclusive pixel areas.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let x0 = a.x_min.max(b.x_min);
    let y0 = a.y_min.max(b.y_min);
    let x1 = a.x_max.min(b.x_max);
    let y1 = a.y_max.min(b.y_max);
    let inter = if x0 <= x1 && y0 <= y1 {
        (x1 - x0 + 1) * (y1 - y0 + 1)
    } else {
        0
    };
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub image: String,
    pub predicted: Vec<BoundingBox>,
    pub ground_truth: Vec<BoundingBox>,
}

impl EvalRecord {
    /// Best IoU over all predicted/ground-truth pairs; 0 when either side is empty.
    pub fn best_iou(&self) -> f64 {
        self.predicted
            .iter()
            .flat_map(|p| self.ground_truth.iter().map(move |g| iou(p, g)))
            .fold(0.0, f64::max)
    }

    pub fn is_correct(&self, threshold: f64) -> bool {
        self.best_iou() > threshold
    }
}

/// Fraction of records whose best pair overlaps strictly above `threshold`.
pub fn corloc(records: &[EvalRecord], threshold: f64) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Argument("CorLoc needs at least one record".into()));
    }
    let hits = records.iter().filter(|r| r.is_correct(threshold)).count();
    Ok(hits as f64 / records.len() as f64)
}

/// Min-max rescale to `0..=255`, rounding half away from zero.
///
/// A constant map carries no contrast and becomes all zeros.
pub fn normalize_saliency(map: &SupportMap) -> GrayMap {
    let (lo, hi) = map
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let data = if map.values.is_empty() || hi <= lo {
        vec![0u8; map.values.len()]
    } else {
        let scale = 255.0 / (hi - lo);
        map.values
            .iter()
            .map(|&v| ((v - lo) * scale).round().clamp(0.0, 255.0) as u8)
            .collect()
    };
    GrayMap {
        height: map.height,
        width: map.width,
        data,
    }
}

fn check_dims(sal: &GrayMap, gt: &Mask) -> Result<()> {
    if sal.height != gt.height || sal.width != gt.width {
        return Err(Error::Dimension(format!(
            "saliency {}x{} vs ground truth {}x{}",
            sal.height, sal.width, gt.height, gt.width
        )));
    }
    Ok(())
}

/// Mean absolute error between `sal / 255` and the binary mask.
pub fn mae(sal: &GrayMap, gt: &Mask) -> Result<f64> {
    check_dims(sal, gt)?;
    if sal.data.is_empty() {
        return Err(Error::Dimension("empty saliency map".into()));
    }
    let total: u64 = sal
        .data
        .iter()
        .zip(&gt.cells)
        .map(|(&s, &g)| (s as i64 - if g { 255 } else { 0 }).unsigned_abs())
        .sum();
    Ok(total as f64 / (255.0 * sal.data.len() as f64))
}

/// Weighted harmonic mean of precision and recall. Zero when both are zero.
pub fn f_measure(precision: f64, recall: f64, beta2: f64) -> f64 {
    let denom = beta2 * precision + recall;
    if denom <= 0.0 {
        return 0.0;
    }
    (1.0 + beta2) * precision * recall / denom
}

/// Precision and recall from confusion counts. Precision is 0 with no predictions.
pub fn precision_recall(tp: u64, predicted: u64, positives: u64) -> (f64, f64) {
    let p = if predicted == 0 {
        0.0
    } else {
        tp as f64 / predicted as f64
    };
    (p, tp as f64 / positives as f64)
}

/// Best F-measure over binarizations `sal > t`, `t` from -1 to 255.
///
/// Returns the score and the smallest maximizing threshold, clamped to `0..=255`.
pub fn max_f_measure(sal: &GrayMap, gt: &Mask) -> Result<(f64, u8)> {
    check_dims(sal, gt)?;
    let mut pos = [0u64; 256];
    let mut neg = [0u64; 256];
    for (&s, &g) in sal.data.iter().zip(&gt.cells) {
        if g {
            pos[s as usize] += 1;
        } else {
            neg[s as usize] += 1;
        }
    }
    let positives: u64 = pos.iter().sum();
    if positives == 0 {
        return Err(Error::UndefinedRecall);
    }
    // Counts of pixels with value > t, starting at t = -1 (everything).
    let mut tp = positives;
    let mut fp: u64 = neg.iter().sum();
    let mut best = (f64::NEG_INFINITY, 0u8);
    for t in -1i32..=255 {
        if t >= 0 {
            tp -= pos[t as usize];
            fp -= neg[t as usize];
        }
        let (p, r) = precision_recall(tp, tp + fp, positives);
        let f = f_measure(p, r, BETA2);
        if f > best.0 {
            best = (f, t.max(0) as u8);
        }
    }
    Ok(best)
}
