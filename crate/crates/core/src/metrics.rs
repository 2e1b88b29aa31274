//! Finger lengths, joint angles, range of motion and agreement statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::hand_model::{Finger, MarkerFrame, Slot, ELBOW, PALM, WRIST};
use crate::{Error, Result, Vec3};

/// Sum of the four segment lengths along each finger chain; `NaN` for a
/// finger with a missing marker.
pub fn finger_lengths(frame: &MarkerFrame) -> [f64; 5] {
    Finger::ALL.map(|f| {
        let chain = frame.finger_chain(f);
        chain.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    })
}

/// Mean finger length over the frames in which that finger is populated.
pub fn compute_finger_length(frames: &[MarkerFrame]) -> Result<[f64; 5]> {
    let mut sum = [0.0; 5];
    let mut count = [0usize; 5];
    for frame in frames {
        for (k, len) in finger_lengths(frame).into_iter().enumerate() {
            if len.is_finite() {
                sum[k] += len;
                count[k] += 1;
            }
        }
    }
    if let Some(k) = count.iter().position(|&c| c == 0) {
        return Err(Error::empty(format!(
            "no populated frames for the {} finger",
            Finger::ALL[k].name()
        )));
    }
    Ok(std::array::from_fn(|k| sum[k] / count[k] as f64))
}

/// Angle in degrees between `a - b` and `d - c`.
pub fn compute_joint_angle(a: Vec3, b: Vec3, c: Vec3, d: Vec3) -> Result<f64> {
    let u = a - b;
    let v = d - c;
    let (nu, nv) = (u.norm(), v.norm());
    if !(nu > 0.0 && nv > 0.0) {
        return Err(Error::degenerate("joint angle needs two non-zero segments"));
    }
    // arccos of the normalized dot product, evaluated as atan2 so that
    // nearly straight joints keep full precision
    Ok(u.cross(&v).norm().atan2(u.dot(&v)).to_degrees())
}

/// Flexion reading: 0° for a straight joint.
pub fn flexion_deg(angle_deg: f64) -> f64 {
    180.0 - angle_deg
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointId {
    IndexMcp,
    IndexPip,
    IndexDip,
    ThumbMcp,
    ThumbDip,
    Wrist,
}

impl JointId {
    pub const ALL: [JointId; 6] = [
        JointId::IndexMcp,
        JointId::IndexPip,
        JointId::IndexDip,
        JointId::ThumbMcp,
        JointId::ThumbDip,
        JointId::Wrist,
    ];

    pub fn name(self) -> &'static str {
        match self {
            JointId::IndexMcp => "index_mcp",
            JointId::IndexPip => "index_pip",
            JointId::IndexDip => "index_dip",
            JointId::ThumbMcp => "thumb_mcp",
            JointId::ThumbDip => "thumb_dip",
            JointId::Wrist => "wrist",
        }
    }

    /// Marker indices `(a, b, c, d)`: the angle is taken between `a - b` and `d - c`.
    pub fn default_quadruple(self) -> [usize; 4] {
        let i = |s| Finger::Index.marker(s);
        let t = |s| Finger::Thumb.marker(s);
        match self {
            JointId::IndexMcp => [i(Slot::Base), i(Slot::Mcp), i(Slot::Mcp), i(Slot::Pip)],
            JointId::IndexPip => [i(Slot::Mcp), i(Slot::Pip), i(Slot::Pip), i(Slot::Dip)],
            JointId::IndexDip => [i(Slot::Pip), i(Slot::Dip), i(Slot::Dip), i(Slot::Tip)],
            // thumb slots: CMC, split, MCP, IP, tip
            JointId::ThumbMcp => [t(Slot::Mcp), t(Slot::Pip), t(Slot::Pip), t(Slot::Dip)],
            JointId::ThumbDip => [t(Slot::Pip), t(Slot::Dip), t(Slot::Dip), t(Slot::Tip)],
            JointId::Wrist => [ELBOW, WRIST, WRIST, PALM],
        }
    }
}

/// Marker quadruple per joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointMap(pub BTreeMap<JointId, [usize; 4]>);

impl Default for JointMap {
    fn default() -> Self {
        Self(JointId::ALL.iter().map(|&j| (j, j.default_quadruple())).collect())
    }
}

impl JointMap {
    pub fn quadruple(&self, joint: JointId) -> [usize; 4] {
        self.0.get(&joint).copied().unwrap_or_else(|| joint.default_quadruple())
    }
}

/// Flexion per frame (deg); `NaN` where markers are missing or degenerate.
#[derive(Debug, Clone, PartialEq)]
pub struct JointAngleSeries {
    pub joint: JointId,
    pub flexion_deg: Vec<f64>,
}

impl JointAngleSeries {
    pub fn from_frames(frames: &[MarkerFrame], joint: JointId, map: &JointMap) -> Self {
        let [a, b, c, d] = map.quadruple(joint);
        let flexion_deg = frames
            .iter()
            .map(|f| {
                compute_joint_angle(f.markers[a], f.markers[b], f.markers[c], f.markers[d])
                    .map(flexion_deg)
                    .ok()
                    .filter(|v| v.is_finite())
                    .unwrap_or(f64::NAN)
            })
            .collect();
        Self { joint, flexion_deg }
    }
}

/// Range of motion: max minus min over populated entries.
pub fn compute_rom(series: &[f64]) -> Result<f64> {
    let mut n = 0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in series.iter().filter(|v| v.is_finite()) {
        n += 1;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if n < 2 {
        return Err(Error::empty("range of motion needs at least two populated samples"));
    }
    Ok(hi - lo)
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> Option<MeanStd> {
    let count = values.clone().count();
    if count == 0 {
        return None;
    }
    let mean = values.clone().sum::<f64>() / count as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
    Some(MeanStd {
        mean,
        std: var.sqrt(),
        count,
    })
}

/// Mean ± std of visibility rates in {−1, 0, 1}.
pub fn summarize_visibility(rates: &[i8]) -> Result<MeanStd> {
    mean_std(rates.iter().map(|&r| f64::from(r))).ok_or_else(|| Error::empty("no visibility annotations"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    /// Mean of `a - b` over jointly populated entries.
    pub mean: f64,
    pub std: f64,
    pub count: usize,
    /// Jointly populated entries over all entries.
    pub populated_fraction: f64,
}

pub fn agreement(a: &[f64], b: &[f64]) -> Result<AgreementSummary> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!(
            "agreement needs aligned series, got lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let diffs = a
        .iter()
        .zip(b)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(x, y)| x - y);
    let s = mean_std(diffs).ok_or_else(|| Error::empty("series share no populated entries"))?;
    Ok(AgreementSummary {
        mean: s.mean,
        std: s.std,
        count: s.count,
        populated_fraction: s.count as f64 / a.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBlock {
    pub measured_mm: Option<f64>,
    pub truth_mm: Option<f64>,
    pub agreement: Option<AgreementSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointBlock {
    pub rom_measured_deg: Option<f64>,
    pub rom_truth_deg: Option<f64>,
    pub agreement: Option<AgreementSummary>,
}

/// Measured frames compared with ground truth sampled at the same instants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationBlock {
    pub frames: usize,
    /// Fraction of frames in which the measured hand is fully populated.
    pub populated_fraction: f64,
    pub finger_length: BTreeMap<String, LengthBlock>,
    pub joints: BTreeMap<String, JointBlock>,
}

pub fn evaluate_frames(measured: &[MarkerFrame], truth: &[MarkerFrame], map: &JointMap) -> Result<EvaluationBlock> {
    if measured.len() != truth.len() {
        return Err(Error::Contract("measured and truth frames must be aligned".into()));
    }
    if measured.is_empty() {
        return Err(Error::empty("no frames to evaluate"));
    }
    let populated = measured.iter().filter(|f| f.is_complete()).count();
    let m_len: Vec<[f64; 5]> = measured.iter().map(finger_lengths).collect();
    let t_len: Vec<[f64; 5]> = truth.iter().map(finger_lengths).collect();
    let mut finger_length = BTreeMap::new();
    for finger in Finger::ALL {
        let k = finger.ordinal();
        let a: Vec<f64> = m_len.iter().map(|l| l[k]).collect();
        let b: Vec<f64> = t_len.iter().map(|l| l[k]).collect();
        let mean = |v: &[f64]| mean_std(v.iter().copied().filter(|x| x.is_finite())).map(|s| s.mean);
        finger_length.insert(
            finger.name().to_string(),
            LengthBlock {
                measured_mm: mean(&a),
                truth_mm: mean(&b),
                agreement: agreement(&a, &b).ok(),
            },
        );
    }
    let mut joints = BTreeMap::new();
    for joint in JointId::ALL {
        let a = JointAngleSeries::from_frames(measured, joint, map).flexion_deg;
        let b = JointAngleSeries::from_frames(truth, joint, map).flexion_deg;
        joints.insert(
            joint.name().to_string(),
            JointBlock {
                rom_measured_deg: compute_rom(&a).ok(),
                rom_truth_deg: compute_rom(&b).ok(),
                agreement: agreement(&a, &b).ok(),
            },
        );
    }
    Ok(EvaluationBlock {
        frames: measured.len(),
        populated_fraction: populated as f64 / measured.len() as f64,
        finger_length,
        joints,
    })
}
