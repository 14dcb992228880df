//! 40-point interpolated average precision.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::eval::matching::match_frame;
use crate::frame::{BoundingBox3D, Prediction};
use crate::scalar::Real;

pub const RECALL_POINTS: usize = 40;

/// Predictions and ground truth of one frame.
#[derive(Debug, Clone)]
pub struct FrameDetections<T> {
    pub preds: Vec<Prediction<T>>,
    pub gts: Vec<BoundingBox3D<T>>,
}

/// A scored prediction with its match outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredDetection<T> {
    pub confidence: T,
    pub tp: bool,
}

/// AP from detections already sorted by descending confidence.
///
/// `AP = 1/40 · Σ_k max{precision(r) : r ≥ k/40}`, in percent, with an empty max = 0.
pub fn ap40_from_sorted<T: Real>(sorted: &[ScoredDetection<T>], n_gt: usize) -> Result<f64> {
    if n_gt == 0 {
        return Err(Error::Undefined(
            "average precision with zero ground-truth boxes".into(),
        ));
    }
    // (tp count, precision) after each prediction
    let mut curve = Vec::with_capacity(sorted.len());
    let mut tp = 0usize;
    for (i, d) in sorted.iter().enumerate() {
        if d.tp {
            tp += 1;
        }
        curve.push((tp, tp as f64 / (i + 1) as f64));
    }
    // suffix max of precision, so the max over r' ≥ r is a lookup
    let mut best_from = vec![0.0f64; curve.len() + 1];
    for i in (0..curve.len()).rev() {
        best_from[i] = best_from[i + 1].max(curve[i].1);
    }
    let mut sum = 0.0;
    for k in 1..=RECALL_POINTS {
        // first point with recall tp/n_gt ≥ k/40, compared in integers
        let first = curve.partition_point(|&(tp, _)| tp * RECALL_POINTS < k * n_gt);
        if first < curve.len() {
            sum += best_from[first];
        }
    }
    Ok(100.0 * sum / RECALL_POINTS as f64)
}

/// Matches every frame, merges all predictions by confidence and returns AP40 in percent.
pub fn average_precision_40<T: Real>(frames: &[FrameDetections<T>], iou_thresh: T) -> Result<f64> {
    let (sorted, n_gt) = scored_detections(frames, iou_thresh);
    ap40_from_sorted(&sorted, n_gt)
}

/// All predictions in global confidence order with TP flags, plus the gt count.
pub fn scored_detections<T: Real>(frames: &[FrameDetections<T>], iou_thresh: T) -> (Vec<ScoredDetection<T>>, usize) {
    let mut all: Vec<(T, usize, usize, bool)> = Vec::new();
    let mut n_gt = 0;
    for (fi, f) in frames.iter().enumerate() {
        n_gt += f.gts.len();
        let m = match_frame(&f.preds, &f.gts, iou_thresh);
        for (rank, &(p, tp)) in m.ordered.iter().enumerate() {
            all.push((f.preds[p].confidence, fi, rank, tp));
        }
    }
    all.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    (
        all.into_iter()
            .map(|(confidence, _, _, tp)| ScoredDetection { confidence, tp })
            .collect(),
        n_gt,
    )
}
