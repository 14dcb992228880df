//! Confidence-ordered greedy matching of predictions to ground truth.

use std::cmp::Ordering;

use crate::eval::iou::iou3d;
use crate::frame::{BoundingBox3D, Prediction};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct TruePositive<T> {
    pub pred: usize,
    pub gt: usize,
    pub iou: T,
}

/// Outcome of matching one frame. Indices refer to the input slices.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult<T> {
    pub tp: Vec<TruePositive<T>>,
    pub fp: Vec<usize>,
    pub fn_: Vec<usize>,
    /// Predictions in processing order with their TP flag.
    pub ordered: Vec<(usize, bool)>,
}

/// Processing order: confidence descending, then best IoU descending, then input order.
pub fn processing_order<T: Real>(preds: &[Prediction<T>], ious: &[Vec<T>]) -> Vec<usize> {
    let best: Vec<T> = ious
        .iter()
        .map(|row| row.iter().copied().fold(T::zero(), T::max))
        .collect();
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .confidence
            .partial_cmp(&preds[a].confidence)
            .unwrap_or(Ordering::Equal)
            .then(best[b].partial_cmp(&best[a]).unwrap_or(Ordering::Equal))
            .then(a.cmp(&b))
    });
    order
}

pub fn iou_matrix<T: Real>(preds: &[Prediction<T>], gts: &[BoundingBox3D<T>]) -> Vec<Vec<T>> {
    preds
        .iter()
        .map(|p| gts.iter().map(|g| iou3d(&p.bbox, g)).collect())
        .collect()
}

/// Each prediction takes the still-unmatched gt of highest IoU ≥ `iou_thresh`, or becomes FP.
pub fn match_frame<T: Real>(preds: &[Prediction<T>], gts: &[BoundingBox3D<T>], iou_thresh: T) -> MatchResult<T> {
    let ious = iou_matrix(preds, gts);
    match_with_ious(preds, gts.len(), &ious, iou_thresh)
}

pub(crate) fn match_with_ious<T: Real>(
    preds: &[Prediction<T>],
    n_gt: usize,
    ious: &[Vec<T>],
    iou_thresh: T,
) -> MatchResult<T> {
    let mut taken = vec![false; n_gt];
    let mut result = MatchResult {
        tp: Vec::new(),
        fp: Vec::new(),
        fn_: Vec::new(),
        ordered: Vec::with_capacity(preds.len()),
    };
    for p in processing_order(preds, ious) {
        let mut best: Option<(usize, T)> = None;
        for (g, &v) in ious[p].iter().enumerate() {
            if taken[g] || v < iou_thresh || v <= T::zero() {
                continue;
            }
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((g, v));
            }
        }
        match best {
            Some((g, iou)) => {
                taken[g] = true;
                result.tp.push(TruePositive { pred: p, gt: g, iou });
                result.ordered.push((p, true));
            }
            None => {
                result.fp.push(p);
                result.ordered.push((p, false));
            }
        }
    }
    result.fn_ = (0..n_gt).filter(|&g| !taken[g]).collect();
    result
}
