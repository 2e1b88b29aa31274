//! Ray-traced finger visibility for a set of sensors.
//!
//! A finger is visible to a sensor when
//!
//! 1. the elbow→wrist vector makes an acute angle with the sensor's forward
//!    direction,
//! 2. every tested marker lies inside the sensor's field-of-view pyramid and
//!    within its range,
//! 3. no ray from the sensor to a marker of the finger crosses the palm
//!    polygon before reaching the marker, and
//! 4. no such ray passes within the phalanx cylinder radius of another finger
//!    before reaching the marker.
//!
//! Conditions 1 and 2 gate the whole hand; 3 and 4 are evaluated per marker
//! and a single occluded marker hides the whole finger.

use nalgebra::{Rotation3, Vector2};
use serde::{Deserialize, Serialize};

use crate::geometry::{
    ray_plane_intersection, regression_plane, segment_proximity, ConvexPolygon, Plane, Ray,
};
use crate::hand_model::{Finger, MarkerFrame, Slot, ELBOW, MARKER_COUNT, WRIST};
use crate::{Error, Result, Vec3};

/// Tolerance for "the ray meets the palm plane at the marker itself".
pub const PLANE_CONTACT_MM: f64 = 1e-6;

/// Pose of one sensor on the table plane (`y = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SensorPlacement {
    pub x_mm: f64,
    pub z_mm: f64,
    /// Rotation about the sensor's long (`x`) axis.
    pub phi_deg: f64,
    /// Rotation about the vertical (`y`) axis.
    pub theta_deg: f64,
}

impl SensorPlacement {
    pub fn new(x_mm: f64, z_mm: f64, phi_deg: f64, theta_deg: f64) -> Self {
        Self {
            x_mm,
            z_mm,
            phi_deg,
            theta_deg,
        }
    }

    pub fn pose(&self) -> SensorPose {
        let rotation = Rotation3::from_axis_angle(&Vec3::y_axis(), self.theta_deg.to_radians())
            * Rotation3::from_axis_angle(&Vec3::x_axis(), self.phi_deg.to_radians());
        SensorPose {
            rotation,
            position: Vec3::new(self.x_mm, 0.0, self.z_mm),
        }
    }
}

/// Rigid world-from-sensor transform. Sensor frame: `y` up out of the
/// device, `x` along the camera baseline, `z` towards the subject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorPose {
    pub rotation: Rotation3<f64>,
    pub position: Vec3,
}

impl SensorPose {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
            position: Vec3::zeros(),
        }
    }

    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        self.rotation.inverse_transform_vector(&(p - self.position))
    }

    pub fn to_world(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.position
    }

    /// Direction the device faces, away from the subject (`-z` in the sensor frame).
    pub fn forward(&self) -> Vec3 {
        self.rotation * Vec3::new(0.0, 0.0, -1.0)
    }

    pub fn up(&self) -> Vec3 {
        self.rotation * Vec3::y()
    }
}

/// Inverted pyramid around the sensor's up axis plus a maximum range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FovSpec", into = "FovSpec")]
pub struct FieldOfView {
    /// Inward plane normals in the sensor frame: `+x`, `-x`, `+z`, `-z` sides.
    pub normals: [Vec3; 4],
    pub range_mm: f64,
    pub horizontal_deg: f64,
    pub vertical_deg: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct FovSpec {
    horizontal_deg: f64,
    vertical_deg: f64,
    range_mm: f64,
}

impl TryFrom<FovSpec> for FieldOfView {
    type Error = Error;
    fn try_from(s: FovSpec) -> Result<Self> {
        make_fov(s.horizontal_deg, s.vertical_deg, s.range_mm)
    }
}

impl From<FieldOfView> for FovSpec {
    fn from(f: FieldOfView) -> Self {
        FovSpec {
            horizontal_deg: f.horizontal_deg,
            vertical_deg: f.vertical_deg,
            range_mm: f.range_mm,
        }
    }
}

/// Pyramid with full opening `horizontal_deg` in the sensor's x–y plane and
/// `vertical_deg` in its z–y plane.
pub fn make_fov(horizontal_deg: f64, vertical_deg: f64, range_mm: f64) -> Result<FieldOfView> {
    for (name, a) in [("horizontal", horizontal_deg), ("vertical", vertical_deg)] {
        if !(a > 0.0 && a < 180.0) {
            return Err(Error::domain(format!(
                "{name} field-of-view angle must lie in (0, 180) deg, got {a}"
            )));
        }
    }
    if !(range_mm > 0.0 && range_mm.is_finite()) {
        return Err(Error::domain(format!("range must be positive, got {range_mm}")));
    }
    let (sh, ch) = (horizontal_deg / 2.0).to_radians().sin_cos();
    let (sv, cv) = (vertical_deg / 2.0).to_radians().sin_cos();
    Ok(FieldOfView {
        normals: [
            Vec3::new(-ch, sh, 0.0),
            Vec3::new(ch, sh, 0.0),
            Vec3::new(0.0, sv, -cv),
            Vec3::new(0.0, sv, cv),
        ],
        range_mm,
        horizontal_deg,
        vertical_deg,
    })
}

impl FieldOfView {
    /// Reduced pyramid used while optimizing placements.
    pub fn optimization() -> Self {
        make_fov(100.0, 100.0, 400.0).expect("valid constants")
    }

    /// Datasheet pyramid used when simulating measurements.
    pub fn datasheet() -> Self {
        make_fov(120.0, 150.0, 600.0).expect("valid constants")
    }

    /// Whether a point given in the sensor frame lies inside.
    pub fn contains_local(&self, p: &Vec3) -> bool {
        p.norm() <= self.range_mm && self.normals.iter().all(|n| n.dot(p) > 0.0)
    }
}

/// Which markers the field-of-view gate checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FovScope {
    /// All 28 markers, elbow included.
    #[default]
    All,
    /// The 25 finger markers.
    FingersOnly,
}

impl FovScope {
    fn markers(self) -> std::ops::Range<usize> {
        match self {
            FovScope::All => 0..MARKER_COUNT,
            FovScope::FingersOnly => 3..MARKER_COUNT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisibilityOptions {
    pub fov_scope: FovScope,
    /// Test the finger's base marker for occlusion too.
    pub include_base_marker: bool,
    /// Phalanx cylinder radius.
    pub finger_radius_mm: f64,
}

impl Default for VisibilityOptions {
    fn default() -> Self {
        Self {
            fov_scope: FovScope::All,
            include_base_marker: true,
            finger_radius_mm: 5.0,
        }
    }
}

impl VisibilityOptions {
    fn tested_slots(&self) -> &'static [Slot] {
        if self.include_base_marker {
            &Slot::ALL
        } else {
            &Slot::ALL[1..]
        }
    }
}

/// Why a finger is not visible to a sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cause {
    /// The hand is absent from the frame.
    HandMissing,
    /// Condition 1: the forearm does not point along the sensor's forward direction.
    ForearmFacing,
    /// Condition 2: a marker is outside the field of view.
    OutOfFov,
    /// Condition 3: the palm blocks a marker.
    PalmOccluded,
    /// Condition 4: another finger blocks a marker.
    FingerOccluded,
}

impl Cause {
    pub fn name(self) -> &'static str {
        match self {
            Cause::HandMissing => "hand-missing",
            Cause::ForearmFacing => "forearm-facing",
            Cause::OutOfFov => "out-of-fov",
            Cause::PalmOccluded => "palm-occluded",
            Cause::FingerOccluded => "finger-occluded",
        }
    }

    /// Whether the cause hides the hand from the sensor as a whole.
    pub fn is_gate(self) -> bool {
        matches!(self, Cause::HandMissing | Cause::ForearmFacing | Cause::OutOfFov)
    }
}

/// Condition 1. `None` when the elbow or wrist marker is missing.
pub fn forearm_facing_test(frame: &MarkerFrame, sensor: &SensorPose) -> Option<bool> {
    let forearm = frame.marker(WRIST) - frame.marker(ELBOW);
    if !forearm.iter().all(|c| c.is_finite()) {
        return None;
    }
    Some(forearm.dot(&sensor.forward()) > 0.0)
}

/// Condition 2 over the markers selected by `scope`.
pub fn fov_containment_test(
    frame: &MarkerFrame,
    sensor: &SensorPose,
    fov: &FieldOfView,
    scope: FovScope,
) -> bool {
    scope
        .markers()
        .all(|i| fov.contains_local(&sensor.to_local(&frame.markers[i])))
}

/// Per-frame geometry shared by every sensor: palm plane and polygon and the
/// phalanx cylinders.
#[derive(Debug, Clone)]
pub struct PreparedFrame {
    pub frame: MarkerFrame,
    pub palm_plane: Plane,
    pub palm_polygon: ConvexPolygon,
    /// Per finger: `(start, unit axis, length)` of its three phalanges.
    phalanges: [[(Vec3, Vec3, f64); 3]; 5],
    /// Per finger: bounding sphere `(centre, radius)` of its phalanges.
    bounds: [(Vec3, f64); 5],
}

/// Distance from `p` to the segment `a`–`b`.
fn segment_point_distance(a: &Vec3, b: &Vec3, p: &Vec3) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.dot(&ab)).clamp(0.0, 1.0);
    if t.is_nan() {
        return (p - a).norm();
    }
    (a + ab * t - p).norm()
}

impl PreparedFrame {
    /// `Ok(None)` for a frame in which the hand is missing.
    pub fn new(frame: &MarkerFrame) -> Result<Option<Self>> {
        if !frame.is_complete() {
            return Ok(None);
        }
        let palm = frame.palm_polygon();
        let palm_plane = regression_plane(&palm)?;
        let palm_polygon = ConvexPolygon::hull_on_plane(&palm, &palm_plane);
        let mut phalanges = [[(Vec3::zeros(), Vec3::zeros(), 0.0); 3]; 5];
        for finger in Finger::ALL {
            let chain = frame.finger_chain(finger);
            for k in 0..3 {
                let (a, b) = (chain[k + 1], chain[k + 2]);
                let len = (b - a).norm();
                if !(len > 0.0) {
                    return Err(Error::degenerate(format!(
                        "{} phalanx {k} has zero length",
                        finger.name()
                    )));
                }
                phalanges[finger.ordinal()][k] = (a, (b - a) / len, len);
            }
        }
        let bounds = Finger::ALL.map(|f| {
            let chain = frame.finger_chain(f);
            let centre = chain[1..].iter().sum::<Vec3>() / 4.0;
            let radius = chain[1..].iter().map(|p| (p - centre).norm()).fold(0.0, f64::max);
            (centre, radius)
        });
        Ok(Some(Self {
            frame: *frame,
            palm_plane,
            palm_polygon,
            phalanges,
            bounds,
        }))
    }

    /// Condition 3 for `marker` seen from `origin`.
    pub fn palm_occludes(&self, origin: &Vec3, marker: &Vec3) -> bool {
        let Ok((ray, t_marker)) = Ray::towards(*origin, *marker) else {
            return false;
        };
        match ray_plane_intersection(&ray, &self.palm_plane) {
            Some((p1, t)) if t > PLANE_CONTACT_MM && t < t_marker - PLANE_CONTACT_MM => {
                let q: Vector2<f64> = self.palm_plane.project(&p1);
                self.palm_polygon.contains_strict(&q)
            }
            _ => false,
        }
    }

    /// Condition 4 for `marker` of finger `owner` seen from `origin`.
    pub fn finger_occludes(&self, origin: &Vec3, marker: &Vec3, owner: Finger, radius: f64) -> bool {
        let Ok((ray, t_marker)) = Ray::towards(*origin, *marker) else {
            return false;
        };
        Finger::ALL
            .into_iter()
            .filter(|&f| f != owner)
            .filter(|&f| {
                let (centre, r) = self.bounds[f.ordinal()];
                segment_point_distance(origin, marker, &centre) < r + radius
            })
            .flat_map(|f| self.phalanges[f.ordinal()].iter())
            .any(|(a, axis, len)| {
                let prox = segment_proximity(&ray, a, axis, *len);
                prox.distance < radius
                    && prox.within_segment
                    && prox.range < t_marker
                    && (prox.closest - ray.origin).dot(&ray.direction) > 0.0
            })
    }

    /// Gate (conditions 1 and 2) for one sensor.
    pub fn gate(&self, sensor: &SensorPose, fov: &FieldOfView, opts: &VisibilityOptions) -> Option<Cause> {
        if forearm_facing_test(&self.frame, sensor) != Some(true) {
            return Some(Cause::ForearmFacing);
        }
        if !fov_containment_test(&self.frame, sensor, fov, opts.fov_scope) {
            return Some(Cause::OutOfFov);
        }
        None
    }

    /// Conditions 3 and 4 for one finger; the first blocking cause found.
    pub fn finger_blocked(&self, sensor: &SensorPose, finger: Finger, opts: &VisibilityOptions) -> Option<Cause> {
        let origin = sensor.position;
        for &slot in opts.tested_slots() {
            let m = self.frame.markers[finger.marker(slot)];
            if self.palm_occludes(&origin, &m) {
                return Some(Cause::PalmOccluded);
            }
            if self.finger_occludes(&origin, &m, finger, opts.finger_radius_mm) {
                return Some(Cause::FingerOccluded);
            }
        }
        None
    }

    pub fn finger_visibility(
        &self,
        sensor: &SensorPose,
        fov: &FieldOfView,
        opts: &VisibilityOptions,
    ) -> FingerVisibility {
        if let Some(cause) = self.gate(sensor, fov, opts) {
            return FingerVisibility::all_hidden(cause);
        }
        FingerVisibility(Finger::ALL.map(|f| match self.finger_blocked(sensor, f, opts) {
            Some(c) => Err(c),
            None => Ok(()),
        }))
    }

    /// Number of sensors that see all markers of the least-visible finger.
    pub fn score(&self, sensors: &[SensorPose], fov: &FieldOfView, opts: &VisibilityOptions) -> u32 {
        let open: Vec<&SensorPose> = sensors
            .iter()
            .filter(|s| self.gate(s, fov, opts).is_none())
            .collect();
        let mut best = open.len() as u32;
        for finger in Finger::ALL {
            if best == 0 {
                break;
            }
            // counting past the current minimum cannot change it
            let mut seen = 0;
            for s in &open {
                if self.finger_blocked(s, finger, opts).is_none() {
                    seen += 1;
                    if seen == best {
                        break;
                    }
                }
            }
            best = best.min(seen);
        }
        best
    }
}

/// Condition 3 for a single marker against `frame`'s palm.
pub fn palm_occlusion_test(marker: &Vec3, frame: &MarkerFrame, sensor: &SensorPose) -> Result<bool> {
    let palm = frame.palm_polygon();
    let plane = regression_plane(&palm)?;
    let polygon = ConvexPolygon::hull_on_plane(&palm, &plane);
    let Ok((ray, t_marker)) = Ray::towards(sensor.position, *marker) else {
        return Ok(false);
    };
    Ok(match ray_plane_intersection(&ray, &plane) {
        Some((p1, t)) if t > PLANE_CONTACT_MM && t < t_marker - PLANE_CONTACT_MM => {
            polygon.contains_strict(&plane.project(&p1))
        }
        _ => false,
    })
}

/// Condition 4 for a single marker belonging to `owner`.
pub fn finger_occlusion_test(
    marker: &Vec3,
    frame: &MarkerFrame,
    owner: Finger,
    sensor: &SensorPose,
    radius_mm: f64,
) -> Result<bool> {
    let prepared = PreparedFrame::new(frame)?
        .ok_or_else(|| Error::Contract("finger occlusion needs a populated frame".into()))?;
    Ok(prepared.finger_occludes(&sensor.position, marker, owner, radius_mm))
}

/// Per-finger verdicts for one sensor: `Ok(())` when visible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FingerVisibility(pub [std::result::Result<(), Cause>; 5]);

impl FingerVisibility {
    pub fn all_hidden(cause: Cause) -> Self {
        Self([Err(cause); 5])
    }

    pub fn visible(&self, finger: Finger) -> bool {
        self.0[finger.ordinal()].is_ok()
    }

    pub fn all_visible(&self) -> bool {
        self.0.iter().all(|v| v.is_ok())
    }

    /// Whether the hand as a whole is hidden (gate failure or missing).
    pub fn hand_hidden(&self) -> bool {
        self.0.iter().all(|v| matches!(v, Err(c) if c.is_gate()))
    }

    pub fn flags(&self) -> [bool; 5] {
        self.0.map(|v| v.is_ok())
    }
}

pub fn finger_visibility(
    frame: &MarkerFrame,
    sensor: &SensorPlacement,
    fov: &FieldOfView,
    opts: &VisibilityOptions,
) -> Result<FingerVisibility> {
    Ok(match PreparedFrame::new(frame)? {
        Some(p) => p.finger_visibility(&sensor.pose(), fov, opts),
        None => FingerVisibility::all_hidden(Cause::HandMissing),
    })
}

/// `F`: the minimum over fingers of the number of sensors seeing the finger.
pub fn frame_score(
    frame: &MarkerFrame,
    sensors: &[SensorPlacement],
    fov: &FieldOfView,
    opts: &VisibilityOptions,
) -> Result<u32> {
    if sensors.is_empty() {
        return Err(Error::Contract("frame score needs at least one sensor".into()));
    }
    let poses: Vec<SensorPose> = sensors.iter().map(|s| s.pose()).collect();
    Ok(match PreparedFrame::new(frame)? {
        Some(p) => p.score(&poses, fov, opts),
        None => 0,
    })
}

/// −1 when the measured frame is wholly missing, otherwise 1 if the fingers
/// were truly in line of sight and 0 if they came from the internal model.
pub fn visibility_rate(measured: &MarkerFrame, truly_visible: bool) -> i8 {
    if measured.is_missing() {
        -1
    } else if truly_visible {
        1
    } else {
        0
    }
}

/// Ground-truth counterpart of [`visibility_rate`] for one sensor.
pub fn rate_from_visibility(vis: &FingerVisibility) -> i8 {
    if vis.hand_hidden() {
        -1
    } else if vis.all_visible() {
        1
    } else {
        0
    }
}

/// Ray-tracing verdicts for one frame and every sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityReport {
    pub frame_idx: usize,
    pub sensors: Vec<(u32, FingerVisibility)>,
    pub score: u32,
}

impl VisibilityReport {
    pub fn rates(&self) -> Vec<(u32, i8)> {
        self.sensors
            .iter()
            .map(|(id, v)| (*id, rate_from_visibility(v)))
            .collect()
    }
}

/// Visibility reports for every frame of `frames` and every sensor.
pub fn raytrace(
    frames: &[MarkerFrame],
    sensors: &[(u32, SensorPlacement)],
    fov: &FieldOfView,
    opts: &VisibilityOptions,
) -> Result<Vec<VisibilityReport>> {
    let poses: Vec<(u32, SensorPose)> = sensors.iter().map(|(id, s)| (*id, s.pose())).collect();
    frames
        .iter()
        .enumerate()
        .map(|(frame_idx, frame)| {
            let prepared = PreparedFrame::new(frame)?;
            let per_sensor: Vec<(u32, FingerVisibility)> = poses
                .iter()
                .map(|(id, pose)| {
                    let vis = match &prepared {
                        Some(p) => p.finger_visibility(pose, fov, opts),
                        None => FingerVisibility::all_hidden(Cause::HandMissing),
                    };
                    (*id, vis)
                })
                .collect();
            let score = Finger::ALL
                .into_iter()
                .map(|f| per_sensor.iter().filter(|(_, v)| v.visible(f)).count() as u32)
                .min()
                .unwrap_or(0);
            Ok(VisibilityReport {
                frame_idx,
                sensors: per_sensor,
                score,
            })
        })
        .collect()
}
