//! Detection evaluation: rotated IoU, greedy matching, AP40 and bucketed reports.

pub mod ap;
pub mod iou;
pub mod matching;
pub mod report;

pub use ap::{ap40_from_sorted, average_precision_40, scored_detections, FrameDetections, ScoredDetection};
pub use iou::{bev_intersection_area, clip_convex, iou3d, polygon_area};
pub use matching::{match_frame, MatchResult, TruePositive};
pub use report::{evaluate, EvalReport, EvalRow, DEFAULT_THRESHOLDS};
