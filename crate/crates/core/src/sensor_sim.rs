//! Virtual depth sensor: turns ground-truth poses into measured streams.
//!
//! Per sample instant the sensor
//! * drops the whole frame when the hand fails the forearm or field-of-view
//!   gate (visibility rate −1),
//! * emits occluded fingers from an "internal model": truth pulled towards
//!   the palm centre by a bias plus wide noise (rate 0),
//! * emits everything else with small direct-measurement noise (rate 1 when
//!   every finger is in line of sight),
//! * reports coordinates in its own frame with every axis cut at the axis
//!   threshold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::hand_model::{Finger, MarkerFrame, PoseDataset, ELBOW, MARKER_COUNT, PALM};
use crate::visibility::{
    finger_visibility, visibility_rate, FieldOfView, SensorPlacement, VisibilityOptions,
};
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorModelConfig {
    pub fov: FieldOfView,
    pub visibility: VisibilityOptions,
    /// Per-axis truncation of reported coordinates; `None` disables it.
    pub axis_cut_mm: Option<f64>,
    pub direct_sigma_mm: f64,
    pub internal_sigma_mm: f64,
    /// Pull of internal-model markers towards the palm centre.
    pub internal_bias_mm: f64,
    /// Instantaneous sampling rate range, Hz.
    pub rate_hz: [f64; 2],
    /// World `y` offset of the elbow marker on one sensor.
    pub elbow_bias_mm: f64,
    pub elbow_bias_sensor: Option<u32>,
    pub seed: u64,
}

impl Default for SensorModelConfig {
    fn default() -> Self {
        Self {
            fov: FieldOfView::datasheet(),
            visibility: VisibilityOptions::default(),
            axis_cut_mm: Some(250.0),
            direct_sigma_mm: 1.5,
            internal_sigma_mm: 8.0,
            internal_bias_mm: 5.0,
            rate_hz: [11.0, 34.0],
            elbow_bias_mm: 15.0,
            elbow_bias_sensor: Some(1),
            seed: 2024,
        }
    }
}

impl SensorModelConfig {
    /// No noise, biases or axis cut.
    pub fn noiseless() -> Self {
        Self {
            axis_cut_mm: None,
            direct_sigma_mm: 0.0,
            internal_sigma_mm: 0.0,
            internal_bias_mm: 0.0,
            elbow_bias_mm: 0.0,
            elbow_bias_sensor: None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("direct_sigma_mm", self.direct_sigma_mm),
            ("internal_sigma_mm", self.internal_sigma_mm),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative")));
            }
        }
        validate_rate(self.rate_hz)?;
        if let Some(cut) = self.axis_cut_mm {
            if !(cut > 0.0) {
                return Err(Error::Config("axis_cut_mm must be positive".into()));
            }
        }
        Ok(())
    }
}

fn validate_rate(rate: [f64; 2]) -> Result<()> {
    let [lo, hi] = rate;
    if lo > 0.0 && lo <= hi && hi <= 120.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("sampling rate range {rate:?} must lie within (0, 120] Hz")))
    }
}

/// Samples emitted by one sensor, in its local frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredStream {
    pub sensor_id: u32,
    pub frames: Vec<MarkerFrame>,
    /// Visibility rate (−1, 0, 1) per frame.
    pub annotations: Vec<i8>,
}

impl MeasuredStream {
    /// Timestamp of the first frame in which the hand was detected.
    pub fn first_detection(&self) -> Option<i64> {
        self.frames
            .iter()
            .find(|f| !f.is_missing())
            .map(|f| f.timestamp_us)
    }
}

/// Sample instants with a rate drawn uniformly from `rate_hz` for every
/// interval, starting at `start_us` and not exceeding `start_us + duration_us`.
pub fn variable_clock(rate_hz: [f64; 2], start_us: i64, duration_us: i64, seed: u64) -> Result<Vec<i64>> {
    validate_rate(rate_hz)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let end = start_us + duration_us.max(0);
    let mut out = vec![start_us];
    let mut t = start_us;
    loop {
        let rate = if rate_hz[0] < rate_hz[1] {
            rng.random_range(rate_hz[0]..=rate_hz[1])
        } else {
            rate_hz[0]
        };
        t += (1e6 / rate).round() as i64;
        if t > end {
            break;
        }
        out.push(t);
    }
    Ok(out)
}

/// Ground truth at `t_us`, linearly interpolated between the bracketing
/// frames. Missing outside the dataset's time span.
pub fn ground_truth_at(dataset: &PoseDataset, t_us: i64) -> MarkerFrame {
    let frames = &dataset.frames;
    let idx = frames.partition_point(|f| f.timestamp_us <= t_us);
    if idx == 0 {
        return MarkerFrame::missing(t_us);
    }
    let a = &frames[idx - 1];
    if a.timestamp_us == t_us || idx == frames.len() {
        return if a.timestamp_us == t_us {
            MarkerFrame::new(t_us, a.markers)
        } else {
            MarkerFrame::missing(t_us)
        };
    }
    let b = &frames[idx];
    let w = (t_us - a.timestamp_us) as f64 / (b.timestamp_us - a.timestamp_us) as f64;
    let mut markers = a.markers;
    for (m, nb) in markers.iter_mut().zip(&b.markers) {
        *m += (nb - *m) * w;
    }
    MarkerFrame::new(t_us, markers)
}

/// Clamps every coordinate to `[-cut, cut]`.
pub fn axis_cut(p: &Vec3, cut: f64) -> Vec3 {
    p.map(|c| c.clamp(-cut, cut))
}

fn stream_seed(seed: u64, sensor_id: u32, salt: u64) -> u64 {
    seed ^ (u64::from(sensor_id) + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt
}

pub fn simulate_sensor(
    dataset: &PoseDataset,
    sensor_id: u32,
    sensor: &SensorPlacement,
    config: &SensorModelConfig,
) -> Result<MeasuredStream> {
    config.validate()?;
    let (first, last) = match (dataset.frames.first(), dataset.frames.last()) {
        (Some(a), Some(b)) if b.timestamp_us > a.timestamp_us => (a.timestamp_us, b.timestamp_us),
        _ => {
            return Err(Error::Contract(
                "simulation needs a dataset spanning at least two timestamps".into(),
            ))
        }
    };
    let clock = variable_clock(
        config.rate_hz,
        first,
        last - first,
        stream_seed(config.seed, sensor_id, 0xC10C),
    )?;
    if clock.len() < 2 {
        return Err(Error::Contract(
            "dataset is too short for two samples at the configured rate".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, sensor_id, 0x0153));
    let direct = Normal::new(0.0, config.direct_sigma_mm).map_err(|e| Error::Config(e.to_string()))?;
    let internal =
        Normal::new(0.0, config.internal_sigma_mm).map_err(|e| Error::Config(e.to_string()))?;
    let pose = sensor.pose();
    let noise = |rng: &mut ChaCha8Rng, d: &Normal<f64>| {
        Vec3::new(d.sample(rng), d.sample(rng), d.sample(rng))
    };

    let mut frames = Vec::with_capacity(clock.len());
    let mut annotations = Vec::with_capacity(clock.len());
    for t in clock {
        let truth = ground_truth_at(dataset, t);
        let vis = finger_visibility(&truth, sensor, &config.fov, &config.visibility)?;
        if vis.hand_hidden() {
            let frame = MarkerFrame::missing(t);
            annotations.push(visibility_rate(&frame, false));
            frames.push(frame);
            continue;
        }
        let mut world = truth.markers;
        let palm = truth.markers[PALM];
        let mut hidden = [false; MARKER_COUNT];
        for finger in Finger::ALL {
            if !vis.visible(finger) {
                for i in finger.markers() {
                    hidden[i] = true;
                }
            }
        }
        for (i, m) in world.iter_mut().enumerate() {
            if hidden[i] {
                let pull = palm - *m;
                if pull.norm() > 0.0 {
                    *m += pull.normalize() * config.internal_bias_mm;
                }
                *m += noise(&mut rng, &internal);
            } else {
                *m += noise(&mut rng, &direct);
            }
        }
        if config.elbow_bias_sensor == Some(sensor_id) {
            world[ELBOW].y += config.elbow_bias_mm;
        }
        let local = world.map(|p| {
            let q = pose.to_local(&p);
            match config.axis_cut_mm {
                Some(cut) => axis_cut(&q, cut),
                None => q,
            }
        });
        let frame = MarkerFrame::new(t, local);
        annotations.push(visibility_rate(&frame, vis.all_visible()));
        frames.push(frame);
    }
    Ok(MeasuredStream {
        sensor_id,
        frames,
        annotations,
    })
}
