//! Range-bucketed detection reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::ap::{ap40_from_sorted, FrameDetections, ScoredDetection};
use crate::eval::iou::iou3d;
use crate::eval::matching::{match_with_ious, processing_order};
use crate::frame::{BoundingBox3D, FrameLabel, Prediction, RangeBucket};
use crate::scalar::Real;
use crate::transform::bucket_of;

pub const DEFAULT_THRESHOLDS: [f64; 2] = [0.5, 0.7];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub threshold: f64,
    pub bucket: RangeBucket,
    /// Percent.
    pub ap: f64,
    /// Percent.
    pub recall: f64,
    pub gt: usize,
    pub pred: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn get(&self, threshold: f64, bucket: RangeBucket) -> Option<&EvalRow> {
        self.rows
            .iter()
            .find(|r| r.threshold == threshold && r.bucket == bucket)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,bucket,ap,recall,gt,pred,tp,fp,fn\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.4},{:.4},{},{},{},{},{}",
                r.threshold, r.bucket, r.ap, r.recall, r.gt, r.pred, r.tp, r.fp, r.fn_
            );
        }
        out
    }

    /// One line per bucket with AP and recall at every threshold.
    pub fn to_text(&self) -> String {
        let mut thresholds: Vec<f64> = self.rows.iter().map(|r| r.threshold).collect();
        thresholds.dedup();
        thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        thresholds.dedup();
        let mut out = String::from("bucket");
        for t in &thresholds {
            let _ = write!(out, "  AP({t})");
        }
        for t in &thresholds {
            let _ = write!(out, "  recall({t})");
        }
        out.push('\n');
        for bucket in RangeBucket::ALL {
            if !self.rows.iter().any(|r| r.bucket == bucket) {
                continue;
            }
            let _ = write!(out, "{bucket:<6}");
            for t in &thresholds {
                let v = self.get(*t, bucket).map_or("-".into(), |r| format!("{:.2}", r.ap));
                let _ = write!(out, "  {v:>7}");
            }
            for t in &thresholds {
                let v = self.get(*t, bucket).map_or("-".into(), |r| format!("{:.2}", r.recall));
                let _ = write!(out, "  {v:>11}");
            }
            out.push('\n');
        }
        out
    }
}

/// Bucket a prediction is attributed to: that of its best-overlap gt, else of the
/// nearest gt center; `None` when the frame has no in-range gt.
fn attribute<T: Real>(pred: &Prediction<T>, gts: &[(BoundingBox3D<T>, RangeBucket)]) -> Option<RangeBucket> {
    let mut best: Option<(usize, T)> = None;
    for (i, (g, _)) in gts.iter().enumerate() {
        let v = iou3d(&pred.bbox, g);
        if v > T::zero() && best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    if let Some((i, _)) = best {
        return Some(gts[i].1);
    }
    let dist = |g: &BoundingBox3D<T>| {
        let dx = g.center.x - pred.bbox.center.x;
        let dy = g.center.y - pred.bbox.center.y;
        dx * dx + dy * dy
    };
    gts.iter()
        .enumerate()
        .min_by(|a, b| dist(&a.1 .0).partial_cmp(&dist(&b.1 .0)).unwrap().then(a.0.cmp(&b.0)))
        .map(|(_, g)| g.1)
}

struct Prepared<T> {
    gts: Vec<(BoundingBox3D<T>, RangeBucket)>,
    preds: Vec<(Prediction<T>, Option<RangeBucket>)>,
}

fn bucket_view<T: Real>(frames: &[Prepared<T>], bucket: RangeBucket) -> Vec<FrameDetections<T>> {
    frames
        .iter()
        .map(|f| {
            let keep_gt = |b: RangeBucket| bucket == RangeBucket::Full || b == bucket;
            FrameDetections {
                gts: f.gts.iter().filter(|(_, b)| keep_gt(*b)).map(|(g, _)| *g).collect(),
                preds: f
                    .preds
                    .iter()
                    .filter(|(_, b)| bucket == RangeBucket::Full || *b == Some(bucket))
                    .map(|(p, _)| p.clone())
                    .collect(),
            }
        })
        .collect()
}

fn row_for<T: Real>(frames: &[FrameDetections<T>], threshold: f64, bucket: RangeBucket) -> Result<EvalRow> {
    let thresh = T::lit(threshold);
    let per_frame: Vec<_> = frames
        .par_iter()
        .map(|f| {
            let ious: Vec<Vec<T>> = f
                .preds
                .iter()
                .map(|p| f.gts.iter().map(|g| iou3d(&p.bbox, g)).collect())
                .collect();
            let m = match_with_ious(&f.preds, f.gts.len(), &ious, thresh);
            debug_assert_eq!(processing_order(&f.preds, &ious).len(), m.ordered.len());
            m
        })
        .collect();
    let mut all: Vec<(T, usize, usize, bool)> = Vec::new();
    let (mut n_gt, mut tp, mut fp, mut n_pred) = (0, 0, 0, 0);
    for (fi, (f, m)) in frames.iter().zip(&per_frame).enumerate() {
        n_gt += f.gts.len();
        n_pred += f.preds.len();
        tp += m.tp.len();
        fp += m.fp.len();
        for (rank, &(p, is_tp)) in m.ordered.iter().enumerate() {
            all.push((f.preds[p].confidence, fi, rank, is_tp));
        }
    }
    all.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let sorted: Vec<ScoredDetection<T>> = all
        .into_iter()
        .map(|(confidence, _, _, tp)| ScoredDetection { confidence, tp })
        .collect();
    Ok(EvalRow {
        threshold,
        bucket,
        ap: ap40_from_sorted(&sorted, n_gt)?,
        recall: 100.0 * tp as f64 / n_gt as f64,
        gt: n_gt,
        pred: n_pred,
        tp,
        fp,
        fn_: n_gt - tp,
    })
}

/// Evaluates predictions against labels for every threshold and bucket.
///
/// Buckets without ground truth are omitted. Out-of-range gts are ignored.
pub fn evaluate<T: Real>(
    preds: &BTreeMap<String, Vec<Prediction<T>>>,
    labels: &[FrameLabel<T>],
    thresholds: &[f64],
    buckets: &[RangeBucket],
) -> Result<EvalReport> {
    let label_ids: BTreeMap<&str, &FrameLabel<T>> = labels.iter().map(|l| (l.frame_id.as_str(), l)).collect();
    let missing_preds: Vec<&str> = label_ids.keys().filter(|k| !preds.contains_key(**k)).copied().collect();
    let missing_labels: Vec<&str> = preds
        .keys()
        .filter(|k| !label_ids.contains_key(k.as_str()))
        .map(String::as_str)
        .collect();
    if !missing_preds.is_empty() || !missing_labels.is_empty() {
        return Err(Error::Validation(format!(
            "frame mismatch: no predictions for {:?}, no labels for {:?}",
            missing_preds, missing_labels
        )));
    }
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::Config(format!("IoU threshold {t} outside (0, 1]")));
    }
    let frames: Vec<Prepared<T>> = label_ids
        .iter()
        .map(|(id, label)| {
            let gts: Vec<(BoundingBox3D<T>, RangeBucket)> = label
                .boxes
                .iter()
                .filter_map(|b| bucket_of(&b.bbox).ok().map(|k| (b.bbox, k)))
                .collect();
            let preds = preds[*id].iter().map(|p| (p.clone(), attribute(p, &gts))).collect();
            Prepared { gts, preds }
        })
        .collect();
    let mut rows = Vec::new();
    for &bucket in buckets {
        let view = bucket_view(&frames, bucket);
        if view.iter().all(|f| f.gts.is_empty()) {
            continue;
        }
        for &t in thresholds {
            rows.push(row_for(&view, t, bucket)?);
        }
    }
    Ok(EvalReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{LabeledBox, VehicleDims};
    use crate::geometry::Vec3;

    fn bx(x: f64, y: f64) -> BoundingBox3D<f64> {
        BoundingBox3D::new(Vec3::new(x, y, 0.0), VehicleDims::race_car(), 0.0).unwrap()
    }

    fn label(id: &str, boxes: &[BoundingBox3D<f64>]) -> FrameLabel<f64> {
        FrameLabel {
            frame_id: id.into(),
            boxes: boxes
                .iter()
                .map(|b| LabeledBox {
                    vehicle_id: "c".into(),
                    bbox: *b,
                })
                .collect(),
        }
    }

    fn perfect(labels: &[FrameLabel<f64>]) -> BTreeMap<String, Vec<Prediction<f64>>> {
        labels
            .iter()
            .map(|l| {
                (
                    l.frame_id.clone(),
                    l.boxes
                        .iter()
                        .map(|b| Prediction {
                            frame_id: l.frame_id.clone(),
                            bbox: b.bbox,
                            confidence: 0.9,
                        })
                        .collect(),
                )
            })
            .collect()
    }

    #[test]
    fn perfect_predictions_score_100_and_empty_bucket_omitted() {
        let labels = vec![
            label("0", &[bx(10.0, 0.0), bx(40.0, 3.0)]),
            label("1", &[bx(-20.0, 1.0)]),
        ];
        let r = evaluate(&perfect(&labels), &labels, &DEFAULT_THRESHOLDS, &RangeBucket::ALL).unwrap();
        assert!(r.get(0.7, RangeBucket::Long).is_none());
        for row in &r.rows {
            assert_eq!(row.ap, 100.0, "{row:?}");
            assert_eq!(row.recall, 100.0);
        }
        assert_eq!(r.get(0.5, RangeBucket::Full).unwrap().gt, 3);
        assert_eq!(r.get(0.5, RangeBucket::Close).unwrap().gt, 2);
        assert!(r
            .to_csv()
            .starts_with("threshold,bucket,ap,recall,gt,pred,tp,fp,fn\n0.5,full,100.0000"));
    }

    #[test]
    fn frame_mismatch_is_error() {
        let labels = vec![label("0", &[bx(10.0, 0.0)])];
        let mut preds = perfect(&labels);
        preds.insert("9".into(), vec![]);
        let err = evaluate(&preds, &labels, &[0.5], &[RangeBucket::Full]).unwrap_err();
        assert!(err.to_string().contains("\"9\""));
    }

    #[test]
    fn fp_attributed_to_nearest_gt_bucket() {
        let labels = vec![label("0", &[bx(10.0, 0.0), bx(50.0, 0.0)])];
        let mut preds = perfect(&labels);
        // non-overlapping false positive next to the mid-range target
        preds.get_mut("0").unwrap().push(Prediction {
            frame_id: "0".into(),
            bbox: bx(50.0, 6.0),
            confidence: 0.95,
        });
        let r = evaluate(&preds, &labels, &[0.7], &RangeBucket::ALL).unwrap();
        assert_eq!(r.get(0.7, RangeBucket::Close).unwrap().fp, 0);
        assert_eq!(r.get(0.7, RangeBucket::Mid).unwrap().fp, 1);
        assert_eq!(r.get(0.7, RangeBucket::Full).unwrap().fp, 1);
        assert_eq!(r.get(0.7, RangeBucket::Close).unwrap().ap, 100.0);
        assert_eq!(r.get(0.7, RangeBucket::Mid).unwrap().ap, 50.0);
    }
}
