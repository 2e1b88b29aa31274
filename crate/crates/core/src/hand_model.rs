//! 28-marker kinematic hand and Monte Carlo pose datasets.
//!
//! Marker layout: `0` elbow, `1` wrist, `2` palm centre, then five markers per
//! finger (thumb, index, middle, ring, pinky) in chain order
//! `base, MCP, PIP, DIP, tip`. The thumb has no intermediate phalanx; its
//! metacarpal is split at [`HandDimensions::thumb_split_ratio`] so that it
//! shares the five-slot schema. For the thumb the `MCP` slot is the split
//! point, `PIP` is the anatomical MCP joint and `DIP` the interphalangeal
//! joint.
//!
//! Hand-local frame (before the global pose): origin at the wrist, fingers
//! point along `-z`, the palm faces `-y` and the thumb sits on the `-x` side
//! (right hand).

use nalgebra::{Isometry3, Rotation3, Translation3, Unit, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec3};

pub const MARKER_COUNT: usize = 28;
pub const ELBOW: usize = 0;
pub const WRIST: usize = 1;
pub const PALM: usize = 2;

/// Wrist position of the reference trajectories: 250 mm above the table and
/// 250 mm towards the subject, so the forearm and fingers fit the reduced
/// optimization pyramid of a sensor below the hand.
pub const REFERENCE_WRIST_MM: [f64; 3] = [0.0, 250.0, 250.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Finger {
    Thumb,
    Index,
    Middle,
    Ring,
    Pinky,
}

impl Finger {
    pub const ALL: [Finger; 5] = [
        Finger::Thumb,
        Finger::Index,
        Finger::Middle,
        Finger::Ring,
        Finger::Pinky,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Finger::Thumb => "thumb",
            Finger::Index => "index",
            Finger::Middle => "middle",
            Finger::Ring => "ring",
            Finger::Pinky => "pinky",
        }
    }

    pub fn from_name(name: &str) -> Option<Finger> {
        Finger::ALL.into_iter().find(|f| f.name() == name)
    }

    /// Index of `slot` of this finger in the 28-marker frame.
    pub fn marker(self, slot: Slot) -> usize {
        3 + 5 * self.ordinal() + slot as usize
    }

    /// The five marker indices of this finger in chain order.
    pub fn markers(self) -> [usize; 5] {
        Slot::ALL.map(|s| self.marker(s))
    }
}

/// Position of a marker along a finger chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Base,
    Mcp,
    Pip,
    Dip,
    Tip,
}

impl Slot {
    pub const ALL: [Slot; 5] = [Slot::Base, Slot::Mcp, Slot::Pip, Slot::Dip, Slot::Tip];
}

/// Human-readable marker name, e.g. `index_pip`.
pub fn marker_name(index: usize) -> String {
    match index {
        ELBOW => "elbow".into(),
        WRIST => "wrist".into(),
        PALM => "palm".into(),
        i if i < MARKER_COUNT => {
            let finger = Finger::ALL[(i - 3) / 5];
            let slot = ["base", "mcp", "pip", "dip", "tip"][(i - 3) % 5];
            format!("{}_{}", finger.name(), slot)
        }
        _ => format!("m{index}"),
    }
}

/// One timestamped sample of the 28 hand markers.
///
/// Missing coordinates are `NaN`. Frames produced by this crate are either
/// wholly missing or fully populated; frames read from disk may be partial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerFrame {
    pub timestamp_us: i64,
    pub markers: [Vec3; MARKER_COUNT],
}

impl MarkerFrame {
    pub fn new(timestamp_us: i64, markers: [Vec3; MARKER_COUNT]) -> Self {
        Self {
            timestamp_us,
            markers,
        }
    }

    /// A frame in which the hand was not detected.
    pub fn missing(timestamp_us: i64) -> Self {
        Self::new(timestamp_us, [Vec3::repeat(f64::NAN); MARKER_COUNT])
    }

    pub fn is_missing(&self) -> bool {
        self.markers.iter().all(|m| m.iter().all(|c| c.is_nan()))
    }

    pub fn is_complete(&self) -> bool {
        self.markers.iter().all(|m| m.iter().all(|c| c.is_finite()))
    }

    pub fn marker(&self, index: usize) -> Vec3 {
        self.markers[index]
    }

    pub fn finger_chain(&self, finger: Finger) -> [Vec3; 5] {
        finger.markers().map(|i| self.markers[i])
    }

    /// Wrist followed by the five `MCP`-slot markers: the palm polygon.
    pub fn palm_polygon(&self) -> [Vec3; 6] {
        let mut out = [self.markers[WRIST]; 6];
        for (k, f) in Finger::ALL.into_iter().enumerate() {
            out[k + 1] = self.markers[f.marker(Slot::Mcp)];
        }
        out
    }

    pub fn centroid(&self) -> Vec3 {
        self.markers.iter().sum::<Vec3>() / MARKER_COUNT as f64
    }

    /// Applies `f` to every marker, keeping the timestamp.
    pub fn map(&self, mut f: impl FnMut(Vec3) -> Vec3) -> Self {
        Self::new(self.timestamp_us, self.markers.map(&mut f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FingerDims {
    pub metacarpal_mm: f64,
    pub proximal_mm: f64,
    pub intermediate_mm: f64,
    pub distal_mm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThumbDims {
    pub metacarpal_mm: f64,
    pub proximal_mm: f64,
    pub distal_mm: f64,
}

/// Anthropometric profile of the simulated hand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HandDimensions {
    pub forearm_mm: f64,
    pub palm_width_mm: f64,
    pub thumb: ThumbDims,
    pub index: FingerDims,
    pub middle: FingerDims,
    pub ring: FingerDims,
    pub pinky: FingerDims,
    /// Where the thumb metacarpal is split to produce its `MCP`-slot marker.
    pub thumb_split_ratio: f64,
}

impl Default for HandDimensions {
    fn default() -> Self {
        let f = |metacarpal_mm, proximal_mm, intermediate_mm, distal_mm| FingerDims {
            metacarpal_mm,
            proximal_mm,
            intermediate_mm,
            distal_mm,
        };
        Self {
            forearm_mm: 250.0,
            palm_width_mm: 85.0,
            thumb: ThumbDims {
                metacarpal_mm: 46.0,
                proximal_mm: 32.0,
                distal_mm: 25.0,
            },
            index: f(68.0, 40.0, 23.0, 18.0),
            middle: f(65.0, 45.0, 27.0, 19.0),
            ring: f(58.0, 42.0, 26.0, 19.0),
            pinky: f(53.0, 33.0, 18.0, 17.0),
            thumb_split_ratio: 0.5,
        }
    }
}

// Lateral marker offsets across the palm, as fractions of the palm width,
// for index..pinky.
const BASE_SPREAD: [f64; 4] = [-0.15, -0.05, 0.05, 0.15];
const MCP_SPREAD: [f64; 4] = [-0.375, -0.125, 0.125, 0.375];
const THUMB_BASE_SPREAD: f64 = -0.25;
const THUMB_SPLAY_DEG: f64 = 40.0;

impl HandDimensions {
    /// Distances between consecutive chain markers (base→MCP→PIP→DIP→tip).
    pub fn segment_lengths(&self, finger: Finger) -> [f64; 4] {
        match finger {
            Finger::Thumb => {
                let t = &self.thumb;
                let r = self.thumb_split_ratio;
                [
                    t.metacarpal_mm * r,
                    t.metacarpal_mm * (1.0 - r),
                    t.proximal_mm,
                    t.distal_mm,
                ]
            }
            _ => {
                let d = self.finger(finger);
                [d.metacarpal_mm, d.proximal_mm, d.intermediate_mm, d.distal_mm]
            }
        }
    }

    /// Sum of the chain segment lengths.
    pub fn finger_length(&self, finger: Finger) -> f64 {
        self.segment_lengths(finger).iter().sum()
    }

    fn finger(&self, finger: Finger) -> &FingerDims {
        match finger {
            Finger::Index => &self.index,
            Finger::Middle => &self.middle,
            Finger::Ring => &self.ring,
            Finger::Pinky => &self.pinky,
            Finger::Thumb => unreachable!("thumb has its own dimensions"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::domain(format!("{name} must be positive, got {v}")))
            }
        };
        positive("forearm_mm", self.forearm_mm)?;
        positive("palm_width_mm", self.palm_width_mm)?;
        if !(self.thumb_split_ratio > 0.0 && self.thumb_split_ratio < 1.0) {
            return Err(Error::domain(format!(
                "thumb_split_ratio must lie in (0, 1), got {}",
                self.thumb_split_ratio
            )));
        }
        for finger in Finger::ALL {
            for (k, len) in self.segment_lengths(finger).into_iter().enumerate() {
                positive(&format!("{} segment {k}", finger.name()), len)?;
            }
        }
        for (k, finger) in Finger::ALL[1..].iter().enumerate() {
            let dx = (MCP_SPREAD[k] - BASE_SPREAD[k]) * self.palm_width_mm;
            if self.finger(*finger).metacarpal_mm <= dx.abs() {
                return Err(Error::domain(format!(
                    "{} metacarpal too short for palm width {}",
                    finger.name(),
                    self.palm_width_mm
                )));
            }
        }
        Ok(())
    }
}

/// Anatomical joint ranges, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JointBounds {
    pub mcp_deg: [f64; 2],
    pub pip_deg: [f64; 2],
    pub dip_deg: [f64; 2],
    pub wrist_deg: [f64; 2],
}

impl Default for JointBounds {
    fn default() -> Self {
        Self {
            mcp_deg: [0.0, 90.0],
            pip_deg: [0.0, 90.0],
            dip_deg: [0.0, 90.0],
            wrist_deg: [-60.0, 60.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PalmOrientation {
    /// Palm facing down.
    #[default]
    Horizontal,
    /// Palm facing left (towards `-x`), thumb up.
    Vertical,
}

impl PalmOrientation {
    pub fn name(self) -> &'static str {
        match self {
            PalmOrientation::Horizontal => "horizontal",
            PalmOrientation::Vertical => "vertical",
        }
    }
}

/// Flexion of one finger's three joints. For the thumb `pip_deg` must be zero
/// and `dip_deg` drives the interphalangeal joint.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FingerFlexion {
    pub mcp_deg: f64,
    pub pip_deg: f64,
    pub dip_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HandPose {
    /// World position of the wrist marker.
    pub position_mm: Vec3,
    pub orientation: PalmOrientation,
    /// Extra rotation about the forearm axis, degrees.
    pub roll_deg: f64,
    /// Extra rotation about the lateral axis, degrees.
    pub pitch_deg: f64,
    /// Extra rotation about the vertical axis, degrees.
    pub yaw_deg: f64,
    pub wrist_flexion_deg: f64,
    /// Thumb, index, middle, ring, pinky.
    pub fingers: [FingerFlexion; 5],
}

impl Default for HandPose {
    fn default() -> Self {
        Self {
            position_mm: Vec3::new(0.0, 150.0, 60.0),
            orientation: PalmOrientation::Horizontal,
            roll_deg: 0.0,
            pitch_deg: 0.0,
            yaw_deg: 0.0,
            wrist_flexion_deg: 0.0,
            fingers: [FingerFlexion::default(); 5],
        }
    }
}

impl HandPose {
    pub fn finger(&self, finger: Finger) -> &FingerFlexion {
        &self.fingers[finger.ordinal()]
    }

    pub fn finger_mut(&mut self, finger: Finger) -> &mut FingerFlexion {
        &mut self.fingers[finger.ordinal()]
    }

    /// Rigid transform from the hand-local frame to the world frame.
    pub fn world_from_hand(&self) -> Isometry3<f64> {
        let base = match self.orientation {
            PalmOrientation::Horizontal => UnitQuaternion::identity(),
            PalmOrientation::Vertical => {
                UnitQuaternion::from_axis_angle(&Vec3::z_axis(), -90f64.to_radians())
            }
        };
        let rot = base
            * UnitQuaternion::from_axis_angle(&Vec3::z_axis(), self.roll_deg.to_radians())
            * UnitQuaternion::from_axis_angle(&Vec3::x_axis(), self.pitch_deg.to_radians())
            * UnitQuaternion::from_axis_angle(&Vec3::y_axis(), self.yaw_deg.to_radians());
        Isometry3::from_parts(Translation3::from(self.position_mm), rot)
    }

    pub fn validate(&self, bounds: &JointBounds) -> Result<()> {
        let check = |joint: String, v: f64, range: [f64; 2]| {
            if v.is_finite() && v >= range[0] && v <= range[1] {
                Ok(())
            } else {
                Err(Error::domain(format!(
                    "{joint} angle {v} deg outside [{}, {}]",
                    range[0], range[1]
                )))
            }
        };
        check("wrist".into(), self.wrist_flexion_deg, bounds.wrist_deg)?;
        for finger in Finger::ALL {
            let flex = self.finger(finger);
            let name = finger.name();
            check(format!("{name} MCP"), flex.mcp_deg, bounds.mcp_deg)?;
            if finger == Finger::Thumb {
                if flex.pip_deg != 0.0 {
                    return Err(Error::domain("thumb has no PIP joint; thumb pip_deg must be 0"));
                }
            } else {
                check(format!("{name} PIP"), flex.pip_deg, bounds.pip_deg)?;
            }
            check(format!("{name} DIP"), flex.dip_deg, bounds.dip_deg)?;
        }
        for (name, v) in [
            ("roll", self.roll_deg),
            ("pitch", self.pitch_deg),
            ("yaw", self.yaw_deg),
        ] {
            if !v.is_finite() {
                return Err(Error::domain(format!("palm {name} is not finite")));
            }
        }
        if !self.position_mm.iter().all(|c| c.is_finite()) {
            return Err(Error::domain("hand position is not finite"));
        }
        Ok(())
    }
}

fn rotation_towards(from: Vec3, towards: Vec3, angle_deg: f64) -> Rotation3<f64> {
    let axis = Unit::new_normalize(from.cross(&towards));
    Rotation3::from_axis_angle(&axis, angle_deg.to_radians())
}

/// Dimensions plus joint bounds; the unit that runs forward kinematics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct HandModel {
    pub dims: HandDimensions,
    pub bounds: JointBounds,
}

impl HandModel {
    pub fn new(dims: HandDimensions, bounds: JointBounds) -> Result<Self> {
        dims.validate()?;
        Ok(Self { dims, bounds })
    }

    pub fn forward_kinematics(&self, pose: &HandPose) -> Result<[Vec3; MARKER_COUNT]> {
        self.forward_kinematics_in(pose, &pose.world_from_hand())
    }

    /// Forward kinematics with an explicit hand-to-world transform in place of
    /// the one derived from the pose's position and orientation fields.
    pub fn forward_kinematics_in(
        &self,
        pose: &HandPose,
        world_from_hand: &Isometry3<f64>,
    ) -> Result<[Vec3; MARKER_COUNT]> {
        self.dims.validate()?;
        pose.validate(&self.bounds)?;
        let local = self.local_markers(pose);
        Ok(local.map(|p| world_from_hand * nalgebra::Point3::from(p)).map(|p| p.coords))
    }

    pub fn frame(&self, pose: &HandPose, timestamp_us: i64) -> Result<MarkerFrame> {
        Ok(MarkerFrame::new(timestamp_us, self.forward_kinematics(pose)?))
    }

    fn local_markers(&self, pose: &HandPose) -> [Vec3; MARKER_COUNT] {
        let dims = &self.dims;
        let w = dims.palm_width_mm;
        let forward = Vec3::new(0.0, 0.0, -1.0);
        let palm_normal = Vec3::new(0.0, -1.0, 0.0);
        let wrist_rot = rotation_towards(forward, palm_normal, pose.wrist_flexion_deg);

        let mut out = [Vec3::zeros(); MARKER_COUNT];
        out[ELBOW] = Vec3::new(0.0, 0.0, dims.forearm_mm);
        out[WRIST] = Vec3::zeros();

        for finger in Finger::ALL {
            let flex = pose.finger(finger);
            let seg = dims.segment_lengths(finger);
            let (base, dir, target) = match finger {
                Finger::Thumb => {
                    let s = THUMB_SPLAY_DEG.to_radians();
                    let dir = Vec3::new(-s.sin(), 0.0, -s.cos());
                    // flexes down and across the palm
                    let across = palm_normal + Vec3::new(0.8, 0.0, 0.0);
                    let target = (across - dir * dir.dot(&across)).normalize();
                    (Vec3::new(THUMB_BASE_SPREAD * w, 0.0, 0.0), dir, target)
                }
                _ => {
                    let k = finger.ordinal() - 1;
                    let base = Vec3::new(BASE_SPREAD[k] * w, 0.0, 0.0);
                    let dx = (MCP_SPREAD[k] - BASE_SPREAD[k]) * w;
                    let meta = seg[0];
                    let dir = Vec3::new(dx, 0.0, -(meta * meta - dx * dx).sqrt()) / meta;
                    (base, dir, palm_normal)
                }
            };
            // cumulative flexion applied after each chain marker
            let bends = match finger {
                Finger::Thumb => [0.0, 0.0, flex.mcp_deg, flex.mcp_deg + flex.dip_deg],
                _ => [
                    0.0,
                    flex.mcp_deg,
                    flex.mcp_deg + flex.pip_deg,
                    flex.mcp_deg + flex.pip_deg + flex.dip_deg,
                ],
            };
            let mut p = base;
            out[finger.marker(Slot::Base)] = wrist_rot * p;
            for (k, slot) in Slot::ALL[1..].iter().enumerate() {
                let d = rotation_towards(dir, target, bends[k]) * dir;
                p += d * seg[k];
                out[finger.marker(*slot)] = wrist_rot * p;
            }
        }
        // halfway between the wrist and the centre of the four knuckles
        let knuckles: Vec3 = Finger::ALL[1..]
            .iter()
            .map(|f| out[f.marker(Slot::Mcp)])
            .sum::<Vec3>()
            / 4.0;
        out[PALM] = 0.5 * (out[WRIST] + knuckles);
        out
    }
}

/// Where a dataset frame came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSource {
    pub trajectory: String,
    /// Monte Carlo seed, `None` for reference trajectories.
    pub seed: Option<u64>,
    /// Generating pose, when known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pose: Option<HandPose>,
}

/// Ordered marker frames with per-frame provenance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoseDataset {
    pub frames: Vec<MarkerFrame>,
    pub sources: Vec<FrameSource>,
}

impl PoseDataset {
    pub fn new(frames: Vec<MarkerFrame>, sources: Vec<FrameSource>) -> Result<Self> {
        if frames.len() != sources.len() {
            return Err(Error::Contract(format!(
                "{} frames but {} provenance entries",
                frames.len(),
                sources.len()
            )));
        }
        Ok(Self { frames, sources })
    }

    /// Dataset read from disk without pose information.
    pub fn from_frames(frames: Vec<MarkerFrame>, trajectory: &str) -> Self {
        let sources = frames
            .iter()
            .map(|_| FrameSource {
                trajectory: trajectory.to_string(),
                seed: None,
                pose: None,
            })
            .collect();
        Self { frames, sources }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Name of the trajectory the first frame belongs to.
    pub fn name(&self) -> &str {
        self.sources.first().map_or("", |s| s.trajectory.as_str())
    }

    /// Frames whose trajectory name satisfies `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&str) -> bool) -> PoseDataset {
        let (frames, sources) = self
            .frames
            .iter()
            .zip(&self.sources)
            .filter(|(_, s)| keep(&s.trajectory))
            .map(|(f, s)| (*f, s.clone()))
            .unzip();
        PoseDataset { frames, sources }
    }

    /// Run-length summary of the provenance: `(trajectory, seed, first frame, count)`.
    pub fn provenance_runs(&self) -> Vec<ProvenanceRun> {
        let mut runs: Vec<ProvenanceRun> = Vec::new();
        for (i, s) in self.sources.iter().enumerate() {
            match runs.last_mut() {
                Some(r) if r.trajectory == s.trajectory && r.seed == s.seed => r.count += 1,
                _ => runs.push(ProvenanceRun {
                    trajectory: s.trajectory.clone(),
                    seed: s.seed,
                    first_frame: i,
                    count: 1,
                }),
            }
        }
        runs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRun {
    pub trajectory: String,
    pub seed: Option<u64>,
    pub first_frame: usize,
    pub count: usize,
}

/// Inclusive angle sweep `start, start + step, ..., end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub start_deg: f64,
    pub end_deg: f64,
    pub step_deg: f64,
}

impl Sweep {
    pub fn new(start_deg: f64, end_deg: f64, step_deg: f64) -> Self {
        Self {
            start_deg,
            end_deg,
            step_deg,
        }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        let span = self.end_deg - self.start_deg;
        if !(self.step_deg.is_finite() && span.is_finite()) || self.step_deg == 0.0 {
            return Err(Error::domain(format!("empty sweep {self:?}")));
        }
        if span != 0.0 && span.signum() != self.step_deg.signum() {
            return Err(Error::domain(format!("empty sweep {self:?}")));
        }
        let n = (span / self.step_deg + 1e-9).floor() as usize + 1;
        Ok((0..n)
            .map(|i| self.start_deg + i as f64 * self.step_deg)
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    Static,
    IndexFlexion,
    ThumbFlexion,
    WristFlexion,
    /// Combined index and thumb flexion.
    Pinch,
}

impl Motion {
    pub const ALL: [Motion; 5] = [
        Motion::Static,
        Motion::IndexFlexion,
        Motion::ThumbFlexion,
        Motion::WristFlexion,
        Motion::Pinch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Motion::Static => "static",
            Motion::IndexFlexion => "index_flexion",
            Motion::ThumbFlexion => "thumb_flexion",
            Motion::WristFlexion => "wrist_flexion",
            Motion::Pinch => "pinch",
        }
    }

    /// Pose at sweep value `a` (degrees) starting from `base`.
    pub fn apply(self, base: &HandPose, a: f64) -> HandPose {
        let mut pose = *base;
        match self {
            Motion::Static => {}
            Motion::IndexFlexion => {
                *pose.finger_mut(Finger::Index) = FingerFlexion {
                    mcp_deg: a,
                    pip_deg: a,
                    dip_deg: a * 2.0 / 3.0,
                };
            }
            Motion::ThumbFlexion => {
                *pose.finger_mut(Finger::Thumb) = FingerFlexion {
                    mcp_deg: a,
                    pip_deg: 0.0,
                    dip_deg: a,
                };
            }
            Motion::WristFlexion => pose.wrist_flexion_deg = a,
            Motion::Pinch => {
                *pose.finger_mut(Finger::Index) = FingerFlexion {
                    mcp_deg: 0.6 * a,
                    pip_deg: 0.6 * a,
                    dip_deg: 0.4 * a,
                };
                *pose.finger_mut(Finger::Thumb) = FingerFlexion {
                    mcp_deg: 0.5 * a,
                    pip_deg: 0.0,
                    dip_deg: 0.5 * a,
                };
            }
        }
        pose
    }
}

/// Reference trajectory layout: motions × palm orientations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryConfig {
    /// Wrist position of every reference pose.
    pub hand_position_mm: Vec3,
    pub frame_interval_us: i64,
    pub static_frames: usize,
    pub index_flexion: Sweep,
    pub thumb_flexion: Sweep,
    pub wrist_flexion: Sweep,
    pub pinch: Sweep,
    pub motions: Vec<Motion>,
    pub orientations: Vec<PalmOrientation>,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            hand_position_mm: Vec3::from(REFERENCE_WRIST_MM),
            frame_interval_us: 20_000,
            static_frames: 100,
            index_flexion: Sweep::new(0.0, 90.0, 1.0),
            thumb_flexion: Sweep::new(0.0, 90.0, 1.0),
            wrist_flexion: Sweep::new(0.0, 60.0, 0.5),
            pinch: Sweep::new(0.0, 90.0, 1.0),
            motions: Motion::ALL.to_vec(),
            orientations: vec![PalmOrientation::Horizontal, PalmOrientation::Vertical],
        }
    }
}

impl TrajectoryConfig {
    fn sweep_values(&self, motion: Motion) -> Result<Vec<f64>> {
        match motion {
            Motion::Static => {
                if self.static_frames == 0 {
                    return Err(Error::domain("static trajectory needs at least one frame"));
                }
                Ok(vec![0.0; self.static_frames])
            }
            Motion::IndexFlexion => self.index_flexion.values(),
            Motion::ThumbFlexion => self.thumb_flexion.values(),
            Motion::WristFlexion => self.wrist_flexion.values(),
            Motion::Pinch => self.pinch.values(),
        }
    }
}

pub fn trajectory_name(motion: Motion, orientation: PalmOrientation) -> String {
    format!("{}_{}", motion.name(), orientation.name())
}

/// One dataset per (orientation, motion) pair, in orientation-major order.
pub fn generate_reference_trajectories(
    model: &HandModel,
    config: &TrajectoryConfig,
) -> Result<Vec<PoseDataset>> {
    if config.frame_interval_us <= 0 {
        return Err(Error::domain("frame_interval_us must be positive"));
    }
    let mut out = Vec::new();
    for &orientation in &config.orientations {
        let base = HandPose {
            position_mm: config.hand_position_mm,
            orientation,
            ..HandPose::default()
        };
        for &motion in &config.motions {
            let name = trajectory_name(motion, orientation);
            let values = config.sweep_values(motion)?;
            let mut frames = Vec::with_capacity(values.len());
            let mut sources = Vec::with_capacity(values.len());
            for (i, a) in values.into_iter().enumerate() {
                let pose = motion.apply(&base, a);
                frames.push(model.frame(&pose, i as i64 * config.frame_interval_us)?);
                sources.push(FrameSource {
                    trajectory: name.clone(),
                    seed: None,
                    pose: Some(pose),
                });
            }
            out.push(PoseDataset::new(frames, sources)?);
        }
    }
    Ok(out)
}

/// Uniform jitter half-widths for Monte Carlo expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationConfig {
    /// Per-axis position jitter, ± mm.
    pub position_mm: f64,
    /// Joint and palm-orientation jitter, ± degrees.
    pub angle_deg: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            position_mm: 30.0,
            angle_deg: 5.0,
        }
    }
}

fn jitter(rng: &mut ChaCha8Rng, amplitude: f64) -> f64 {
    if amplitude == 0.0 {
        0.0
    } else {
        rng.random_range(-amplitude..=amplitude)
    }
}

fn jitter_clamped(rng: &mut ChaCha8Rng, value: f64, amplitude: f64, range: [f64; 2]) -> f64 {
    (value + jitter(rng, amplitude)).clamp(range[0], range[1])
}

/// Perturbs every reference frame `samples_per_frame` times and concatenates
/// the results. Frames are renumbered on the first trajectory's frame grid.
pub fn monte_carlo_expand(
    model: &HandModel,
    trajectories: &[PoseDataset],
    samples_per_frame: usize,
    perturbation: &PerturbationConfig,
    seed: u64,
) -> Result<PoseDataset> {
    if samples_per_frame == 0 {
        return Err(Error::domain("samples_per_frame must be at least 1"));
    }
    if !(perturbation.position_mm >= 0.0 && perturbation.angle_deg >= 0.0) {
        return Err(Error::domain("perturbation bounds must be non-negative"));
    }
    let interval = trajectories
        .iter()
        .find_map(|t| {
            t.frames
                .windows(2)
                .next()
                .map(|w| w[1].timestamp_us - w[0].timestamp_us)
        })
        .filter(|&dt| dt > 0)
        .unwrap_or(10_000);

    let bounds = &model.bounds;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::new();
    let mut sources = Vec::new();
    for traj in trajectories {
        for source in &traj.sources {
            let pose = source.pose.ok_or_else(|| {
                Error::Contract(format!(
                    "trajectory '{}' has no pose information to perturb",
                    source.trajectory
                ))
            })?;
            for _ in 0..samples_per_frame {
                let mut p = pose;
                let (dp, da) = (perturbation.position_mm, perturbation.angle_deg);
                p.position_mm += Vec3::new(jitter(&mut rng, dp), jitter(&mut rng, dp), jitter(&mut rng, dp));
                p.roll_deg += jitter(&mut rng, da);
                p.pitch_deg += jitter(&mut rng, da);
                p.yaw_deg += jitter(&mut rng, da);
                p.wrist_flexion_deg =
                    jitter_clamped(&mut rng, p.wrist_flexion_deg, da, bounds.wrist_deg);
                for finger in Finger::ALL {
                    let f = p.finger_mut(finger);
                    f.mcp_deg = jitter_clamped(&mut rng, f.mcp_deg, da, bounds.mcp_deg);
                    if finger != Finger::Thumb {
                        f.pip_deg = jitter_clamped(&mut rng, f.pip_deg, da, bounds.pip_deg);
                    }
                    f.dip_deg = jitter_clamped(&mut rng, f.dip_deg, da, bounds.dip_deg);
                }
                let ts = frames.len() as i64 * interval;
                frames.push(model.frame(&p, ts)?);
                sources.push(FrameSource {
                    trajectory: source.trajectory.clone(),
                    seed: Some(seed),
                    pose: Some(p),
                });
            }
        }
    }
    PoseDataset::new(frames, sources)
}
