//! Domain types shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Vec3};
use crate::scalar::Real;

/// Horizontal detection range limit in meters.
pub const DETECTION_RANGE: f64 = 100.0;

/// Race car dimensions used for labels and anchors: 4.88 × 1.90 × 1.18 m.
pub const RACE_CAR_LENGTH: f64 = 4.88;
pub const RACE_CAR_WIDTH: f64 = 1.90;
pub const RACE_CAR_HEIGHT: f64 = 1.18;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
    /// Carried through I/O but not used by any metric.
    pub intensity: Option<f32>,
}

impl<T: Real> Point3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self {
            x,
            y,
            z,
            intensity: None,
        }
    }

    pub fn with_intensity(mut self, intensity: f32) -> Self {
        self.intensity = Some(intensity);
        self
    }

    pub fn from_vec(v: Vec3<T>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    #[inline]
    pub fn pos(&self) -> Vec3<T> {
        Vec3::new(self.x, self.y, self.z)
    }

    /// Replaces the coordinates, keeping the intensity.
    #[inline]
    pub fn moved_to(&self, v: Vec3<T>) -> Self {
        Self {
            x: v.x,
            y: v.y,
            z: v.z,
            intensity: self.intensity,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pos().is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud<T> {
    pub points: Vec<Point3<T>>,
    pub frame_id: String,
    pub timestamp: Option<f64>,
}

impl<T: Real> PointCloud<T> {
    pub fn new(frame_id: impl Into<String>, points: Vec<Point3<T>>) -> Self {
        Self {
            points,
            frame_id: frame_id.into(),
            timestamp: None,
        }
    }

    pub fn from_positions(frame_id: impl Into<String>, pts: impl IntoIterator<Item = Vec3<T>>) -> Self {
        Self::new(frame_id, pts.into_iter().map(Point3::from_vec).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3<T>> {
        self.points.iter().map(Point3::pos).collect()
    }

    /// Keeps the points selected by `keep`, preserving order and metadata.
    pub fn filtered(&self, mut keep: impl FnMut(&Point3<T>) -> bool) -> Self {
        Self {
            points: self.points.iter().filter(|p| keep(p)).copied().collect(),
            frame_id: self.frame_id.clone(),
            timestamp: self.timestamp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.points.iter().position(|p| !p.is_finite()) {
            Some(i) => Err(Error::Validation(format!(
                "point {i} of cloud '{}' has a non-finite coordinate",
                self.frame_id
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleDims<T> {
    pub length: T,
    pub width: T,
    pub height: T,
}

impl<T: Real> VehicleDims<T> {
    pub fn new(length: T, width: T, height: T) -> Result<Self> {
        let d = Self { length, width, height };
        d.validate()?;
        Ok(d)
    }

    /// Dimensions of the race car the anchors and labels are sized to.
    pub fn race_car() -> Self {
        Self {
            length: T::lit(RACE_CAR_LENGTH),
            width: T::lit(RACE_CAR_WIDTH),
            height: T::lit(RACE_CAR_HEIGHT),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: T| v.is_finite() && v > T::zero();
        if ok(self.length) && ok(self.width) && ok(self.height) {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "vehicle dimensions must be positive, got {:?}",
                (self.length, self.width, self.height)
            )))
        }
    }

    pub fn half(&self) -> Vec3<T> {
        let h = T::lit(0.5);
        Vec3::new(self.length * h, self.width * h, self.height * h)
    }

    pub fn volume(&self) -> T {
        self.length * self.width * self.height
    }

    pub fn expanded(&self, margin: T) -> Self {
        let m = margin + margin;
        Self {
            length: self.length + m,
            width: self.width + m,
            height: self.height + m,
        }
    }
}

/// Seven degree-of-freedom box: center, extents and yaw. Roll and pitch are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox3D<T> {
    pub center: Vec3<T>,
    pub dims: VehicleDims<T>,
    /// Radians in (−π, π].
    pub yaw: T,
}

impl<T: Real> BoundingBox3D<T> {
    /// Builds a box, validating dimensions and normalizing yaw.
    pub fn new(center: Vec3<T>, dims: VehicleDims<T>, yaw: T) -> Result<Self> {
        dims.validate()?;
        if !center.is_finite() || !yaw.is_finite() {
            return Err(Error::Validation("box center and yaw must be finite".into()));
        }
        Ok(Self {
            center,
            dims,
            yaw: normalize_angle(yaw),
        })
    }

    pub fn with_center(&self, center: Vec3<T>) -> Self {
        Self { center, ..*self }
    }

    pub fn cast<U: Real>(&self) -> BoundingBox3D<U> {
        BoundingBox3D {
            center: self.center.cast(),
            dims: VehicleDims {
                length: U::lit(self.dims.length.as_f64()),
                width: U::lit(self.dims.width.as_f64()),
                height: U::lit(self.dims.height.as_f64()),
            },
            yaw: U::lit(self.yaw.as_f64()),
        }
    }

    pub fn volume(&self) -> T {
        self.dims.volume()
    }

    /// Horizontal distance of the center from the ego origin.
    pub fn range_xy(&self) -> T {
        self.center.norm_xy()
    }

    /// Maps a point into the box frame (x along length, y along width, z up).
    #[inline]
    pub fn to_canonical(&self, p: Vec3<T>) -> Vec3<T> {
        (p - self.center).rotate_z(-self.yaw)
    }

    #[inline]
    pub fn from_canonical(&self, q: Vec3<T>) -> Vec3<T> {
        q.rotate_z(self.yaw) + self.center
    }

    /// Footprint corners in counter-clockwise order, as (x, y) pairs.
    pub fn bev_corners(&self) -> [(T, T); 4] {
        let h = self.dims.half();
        let (s, c) = self.yaw.sin_cos();
        let corner = |lx: T, ly: T| (self.center.x + c * lx - s * ly, self.center.y + s * lx + c * ly);
        [
            corner(h.x, h.y),
            corner(-h.x, h.y),
            corner(-h.x, -h.y),
            corner(h.x, -h.y),
        ]
    }

    pub fn z_bottom(&self) -> T {
        self.center.z - self.dims.height * T::lit(0.5)
    }

    pub fn z_top(&self) -> T {
        self.center.z + self.dims.height * T::lit(0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample<T> {
    /// Seconds.
    pub t: f64,
    pub position: Vec3<T>,
    pub yaw: T,
    pub speed: Option<T>,
}

impl<T: Real> TrajectorySample<T> {
    pub fn new(t: f64, position: Vec3<T>, yaw: T) -> Self {
        Self {
            t,
            position,
            yaw,
            speed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub vehicle_id: String,
    pub samples: Vec<TrajectorySample<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn new(vehicle_id: impl Into<String>, samples: Vec<TrajectorySample<T>>) -> Result<Self> {
        let traj = Self {
            vehicle_id: vehicle_id.into(),
            samples,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() < 2 {
            return Err(Error::Validation(format!(
                "trajectory '{}' needs at least 2 samples, has {}",
                self.vehicle_id,
                self.samples.len()
            )));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if !s.t.is_finite() || !s.position.is_finite() || !s.yaw.is_finite() {
                return Err(Error::Validation(format!(
                    "trajectory '{}' sample {i} is not finite",
                    self.vehicle_id
                )));
            }
        }
        if let Some(i) = self.samples.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(Error::Validation(format!(
                "trajectory '{}' timestamps not strictly increasing at sample {}",
                self.vehicle_id,
                i + 1
            )));
        }
        Ok(())
    }

    /// Closed time span `[first.t, last.t]`.
    pub fn span(&self) -> (f64, f64) {
        (
            self.samples.first().map_or(f64::NAN, |s| s.t),
            self.samples.last().map_or(f64::NAN, |s| s.t),
        )
    }
}

/// A box together with the id of the vehicle it labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBox<T> {
    pub vehicle_id: String,
    pub bbox: BoundingBox3D<T>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameLabel<T> {
    pub frame_id: String,
    pub boxes: Vec<LabeledBox<T>>,
}

impl<T: Real> FrameLabel<T> {
    pub fn new(frame_id: impl Into<String>) -> Self {
        Self {
            frame_id: frame_id.into(),
            boxes: Vec::new(),
        }
    }

    /// Boxes whose centers lie within the detection range.
    pub fn in_range(&self) -> impl Iterator<Item = &LabeledBox<T>> {
        self.boxes
            .iter()
            .filter(|b| b.bbox.range_xy() <= T::lit(DETECTION_RANGE))
    }

    pub fn gt_boxes(&self) -> Vec<BoundingBox3D<T>> {
        self.boxes.iter().map(|b| b.bbox).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub frame_id: String,
    pub bbox: BoundingBox3D<T>,
    pub confidence: T,
}

/// Range section of a target, decided by horizontal distance of its center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeBucket {
    Close,
    Mid,
    Long,
    Full,
}

impl RangeBucket {
    pub const SECTIONS: [RangeBucket; 3] = [RangeBucket::Close, RangeBucket::Mid, RangeBucket::Long];
    pub const ALL: [RangeBucket; 4] = [
        RangeBucket::Full,
        RangeBucket::Close,
        RangeBucket::Mid,
        RangeBucket::Long,
    ];

    /// `(lo, hi)` bounds in meters. Close and Mid are half-open, Long and Full closed.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            RangeBucket::Close => (0.0, 33.3),
            RangeBucket::Mid => (33.3, 66.6),
            RangeBucket::Long => (66.6, DETECTION_RANGE),
            RangeBucket::Full => (0.0, DETECTION_RANGE),
        }
    }

    pub fn contains_distance<T: Real>(self, d: T) -> bool {
        let (lo, hi) = self.bounds();
        let (lo, hi) = (T::lit(lo), T::lit(hi));
        match self {
            RangeBucket::Close | RangeBucket::Mid => d >= lo && d < hi,
            RangeBucket::Long | RangeBucket::Full => d >= lo && d <= hi,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RangeBucket::Close => "close",
            RangeBucket::Mid => "mid",
            RangeBucket::Long => "long",
            RangeBucket::Full => "full",
        }
    }
}

impl std::str::FromStr for RangeBucket {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "close" => Ok(RangeBucket::Close),
            "mid" => Ok(RangeBucket::Mid),
            "long" => Ok(RangeBucket::Long),
            "full" => Ok(RangeBucket::Full),
            other => Err(Error::Validation(format!("unknown range bucket '{other}'"))),
        }
    }
}

impl std::fmt::Display for RangeBucket {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
