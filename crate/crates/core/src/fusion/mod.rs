//! Resampling, realignment and multi-sensor fusion of measured streams.
//!
//! Each sensor's irregular stream is interpolated with cubic B-splines onto a
//! common 100 Hz grid starting at the first hand detection, mapped into the
//! world frame, and fed to a bank of independent constant-velocity Kalman
//! filters, one per marker coordinate. Missing values never reach a filter.

pub mod bspline;
pub mod kalman;

use std::collections::{BTreeMap, HashMap};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::hand_model::{MarkerFrame, MARKER_COUNT};
use crate::sensor_sim::{axis_cut, MeasuredStream};
use crate::visibility::SensorPlacement;
use crate::{Error, Result, Vec3};

use bspline::SplineBasis;
use kalman::CvFilter;

pub const COORDS: usize = MARKER_COUNT * 3;

/// One sensor's frames on the common tick grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampledStream {
    pub sensor_id: u32,
    pub epoch_us: i64,
    pub period_us: i64,
    /// Frame `k` is at `epoch_us + k * period_us`.
    pub frames: Vec<MarkerFrame>,
}

impl ResampledStream {
    pub fn tick_time(&self, k: usize) -> i64 {
        self.epoch_us + k as i64 * self.period_us
    }
}

fn coord(frame: &MarkerFrame, c: usize) -> f64 {
    frame.markers[c / 3][c % 3]
}

fn set_coord(frame: &mut MarkerFrame, c: usize, v: f64) {
    frame.markers[c / 3][c % 3] = v;
}

/// Per-coordinate availability: `true` where the value is finite.
pub fn handle_missing(frame: &MarkerFrame) -> [bool; COORDS] {
    std::array::from_fn(|c| coord(frame, c).is_finite())
}

pub fn period_us(rate_hz: f64) -> Result<i64> {
    if !(rate_hz > 0.0 && rate_hz.is_finite()) {
        return Err(Error::Config(format!("resampling rate must be positive, got {rate_hz}")));
    }
    Ok((1e6 / rate_hz).round() as i64)
}

/// Earliest first detection across streams: the common epoch.
pub fn common_epoch(streams: &[MeasuredStream]) -> Option<i64> {
    streams.iter().filter_map(|s| s.first_detection()).min()
}

/// Interpolates `stream` onto ticks `epoch_us + k / rate_hz`, up to its last
/// sample. Runs of samples separated by more than `gap_limit_us` are fitted
/// separately; ticks outside every run, or in runs of fewer than four
/// samples, are missing.
pub fn resample_bspline(
    stream: &MeasuredStream,
    rate_hz: f64,
    epoch_us: i64,
    gap_limit_us: i64,
) -> Result<ResampledStream> {
    let period = period_us(rate_hz)?;
    let mut out = ResampledStream {
        sensor_id: stream.sensor_id,
        epoch_us,
        period_us: period,
        frames: Vec::new(),
    };
    if stream.frames.windows(2).any(|w| w[1].timestamp_us <= w[0].timestamp_us) {
        return Err(Error::Contract(format!(
            "sensor {}: timestamps must be strictly increasing",
            stream.sensor_id
        )));
    }
    let Some(last) = stream
        .frames
        .iter()
        .rev()
        .find(|f| !f.is_missing())
        .map(|f| f.timestamp_us)
    else {
        return Ok(out);
    };
    if last < epoch_us {
        return Ok(out);
    }
    let ticks = ((last - epoch_us) / period + 1) as usize;
    out.frames = (0..ticks)
        .map(|k| MarkerFrame::missing(epoch_us + k as i64 * period))
        .collect();

    // Coordinates with the same availability pattern share one factorization.
    let mut groups: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for c in 0..COORDS {
        let valid: Vec<usize> = (0..stream.frames.len())
            .filter(|&i| coord(&stream.frames[i], c).is_finite())
            .collect();
        groups.entry(valid).or_default().push(c);
    }
    let mut keys: Vec<&Vec<usize>> = groups.keys().collect();
    keys.sort();
    for valid in keys {
        let coords = &groups[valid];
        for run in split_runs(valid, &stream.frames, gap_limit_us) {
            if run.len() < 4 {
                continue;
            }
            let t_first = stream.frames[run[0]].timestamp_us;
            let t_last = stream.frames[run[run.len() - 1]].timestamp_us;
            let times: Vec<f64> = run
                .iter()
                .map(|&i| (stream.frames[i].timestamp_us - t_first) as f64 * 1e-6)
                .collect();
            let basis = SplineBasis::new(&times)?;
            let k_start = if t_first <= epoch_us {
                0
            } else {
                ((t_first - epoch_us + period - 1) / period) as usize
            };
            let k_end = ((t_last - epoch_us) / period) as usize;
            for &c in coords {
                let values: Vec<f64> = run.iter().map(|&i| coord(&stream.frames[i], c)).collect();
                let coef = basis.solve(&values);
                for k in k_start..=k_end.min(ticks - 1) {
                    let t = (out.tick_time(k) - t_first) as f64 * 1e-6;
                    set_coord(&mut out.frames[k], c, basis.eval(&coef, t));
                }
            }
        }
    }
    Ok(out)
}

fn split_runs<'a>(valid: &'a [usize], frames: &[MarkerFrame], gap_limit_us: i64) -> Vec<&'a [usize]> {
    let mut runs = Vec::new();
    let mut start = 0;
    for j in 1..=valid.len() {
        let split = j == valid.len()
            || frames[valid[j]].timestamp_us - frames[valid[j - 1]].timestamp_us > gap_limit_us;
        if split {
            if j > start {
                runs.push(&valid[start..j]);
            }
            start = j;
        }
    }
    runs
}

/// World-from-sensor mapping plus the shift that undoes the axis cut for the
/// workspace the sensor observes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealignmentTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
    pub offset: Vec3,
}

impl RealignmentTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
            offset: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vec3, offset: Vec3) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if !(err <= 1e-12) || rotation.determinant() <= 0.0 {
            return Err(Error::Config("realignment rotation must be a proper orthonormal matrix".into()));
        }
        Ok(Self {
            rotation,
            translation,
            offset,
        })
    }

    /// Transform for a placed sensor. With an axis cut, the offset restores
    /// the part of the workspace centre's local coordinates that the cut removes.
    pub fn for_sensor(sensor: &SensorPlacement, workspace_center: &Vec3, axis_cut_mm: Option<f64>) -> Self {
        let pose = sensor.pose();
        let rotation = *pose.rotation.matrix();
        let offset = match axis_cut_mm {
            Some(cut) => {
                let c = pose.to_local(workspace_center);
                rotation * (c - axis_cut(&c, cut))
            }
            None => Vec3::zeros(),
        };
        Self {
            rotation,
            translation: pose.position,
            offset,
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation + self.offset
    }
}

/// Maps every marker to world coordinates; missing values stay missing.
pub fn realign(frame: &MarkerFrame, transform: &RealignmentTransform) -> MarkerFrame {
    let mask = handle_missing(frame);
    let mut out = frame.map(|p| transform.apply(&p));
    for (c, ok) in mask.iter().enumerate() {
        if !ok {
            set_coord(&mut out, c, f64::NAN);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub rate_hz: f64,
    pub gap_limit_ms: f64,
    /// White-acceleration spectral density, mm²/s³.
    pub process_noise: f64,
    /// Measurement variance, mm².
    pub measurement_noise: f64,
    /// Per-sensor overrides of `measurement_noise`.
    pub sensor_noise: BTreeMap<u32, f64>,
    pub initial_variance: f64,
    pub workspace_center_mm: Vec3,
    pub axis_cut_mm: Option<f64>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            rate_hz: 100.0,
            gap_limit_ms: 100.0,
            process_noise: 1e4,
            measurement_noise: 4.0,
            sensor_noise: BTreeMap::new(),
            initial_variance: 1e4,
            workspace_center_mm: Vec3::new(0.0, 250.0, 175.0),
            axis_cut_mm: Some(250.0),
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        period_us(self.rate_hz)?;
        let positive = [
            ("gap_limit_ms", self.gap_limit_ms),
            ("measurement_noise", self.measurement_noise),
            ("initial_variance", self.initial_variance),
        ];
        for (name, v) in positive.into_iter().chain(self.sensor_noise.values().map(|v| ("sensor_noise", *v))) {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.process_noise >= 0.0 && self.process_noise.is_finite()) {
            return Err(Error::Config("process_noise must be non-negative".into()));
        }
        Ok(())
    }

    pub fn noise_for(&self, sensor_id: u32) -> f64 {
        self.sensor_noise
            .get(&sensor_id)
            .copied()
            .unwrap_or(self.measurement_noise)
    }

    pub fn gap_limit_us(&self) -> i64 {
        (self.gap_limit_ms * 1e3).round() as i64
    }
}

/// Filter bank over all marker coordinates, advanced one tick at a time.
#[derive(Debug, Clone)]
pub struct FusionState {
    config: FusionConfig,
    dt: f64,
    filters: Vec<Option<CvFilter>>,
}

impl FusionState {
    pub fn new(config: &FusionConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            dt: period_us(config.rate_hz)? as f64 * 1e-6,
            config: config.clone(),
            filters: vec![None; COORDS],
        })
    }

    /// Filter for coordinate `c`; `None` before its first measurement.
    pub fn filter(&self, c: usize) -> Option<&CvFilter> {
        self.filters[c].as_ref()
    }

    /// Sum of position variances over initialized coordinates.
    pub fn covariance_trace(&self) -> f64 {
        self.filters.iter().flatten().map(|f| f.p[0][0]).sum()
    }

    /// Predicts, then updates with each world-frame measurement in the order
    /// given. Returns the fused frame and whether no measurement was used.
    pub fn step(&mut self, timestamp_us: i64, measurements: &[(u32, MarkerFrame)]) -> (MarkerFrame, bool) {
        for f in self.filters.iter_mut().flatten() {
            f.predict(self.dt, self.config.process_noise);
        }
        let mut used = false;
        for (id, frame) in measurements {
            let r = self.config.noise_for(*id);
            for (c, ok) in handle_missing(frame).iter().enumerate() {
                if !ok {
                    continue;
                }
                let z = coord(frame, c);
                let f = self.filters[c].get_or_insert_with(|| CvFilter::new(z, self.config.initial_variance));
                f.update(z, r);
                used = true;
            }
        }
        let mut out = MarkerFrame::missing(timestamp_us);
        for (c, f) in self.filters.iter().enumerate() {
            if let Some(f) = f {
                set_coord(&mut out, c, f.x[0]);
            }
        }
        (out, !used)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedStream {
    pub epoch_us: i64,
    pub period_us: i64,
    pub frames: Vec<MarkerFrame>,
    /// Ticks at which no sensor contributed a measurement.
    pub predicted_only: Vec<bool>,
    pub covariance_trace: Vec<f64>,
}

/// Fuses streams on a shared tick grid. Sensors are applied in ascending id
/// order whatever the order of `streams`; each needs a transform.
pub fn kalman_fuse(
    streams: &[ResampledStream],
    transforms: &BTreeMap<u32, RealignmentTransform>,
    config: &FusionConfig,
) -> Result<FusedStream> {
    let mut state = FusionState::new(config)?;
    let period = period_us(config.rate_hz)?;
    let Some(first) = streams.first() else {
        return Err(Error::Contract("fusion needs at least one stream".into()));
    };
    let epoch = first.epoch_us;
    let mut ordered: Vec<&ResampledStream> = streams.iter().collect();
    ordered.sort_by_key(|s| s.sensor_id);
    for w in ordered.windows(2) {
        if w[0].sensor_id == w[1].sensor_id {
            return Err(Error::Contract(format!("duplicate sensor id {}", w[0].sensor_id)));
        }
    }
    for s in &ordered {
        if s.epoch_us != epoch || s.period_us != period {
            return Err(Error::Contract(format!(
                "sensor {} is on a different tick grid (epoch {} us, period {} us; expected {} us, {} us)",
                s.sensor_id, s.epoch_us, s.period_us, epoch, period
            )));
        }
        if !transforms.contains_key(&s.sensor_id) {
            return Err(Error::Contract(format!("no transform for sensor {}", s.sensor_id)));
        }
    }
    let ticks = ordered.iter().map(|s| s.frames.len()).max().unwrap_or(0);
    let mut fused = FusedStream {
        epoch_us: epoch,
        period_us: period,
        frames: Vec::with_capacity(ticks),
        predicted_only: Vec::with_capacity(ticks),
        covariance_trace: Vec::with_capacity(ticks),
    };
    let mut measurements = Vec::with_capacity(ordered.len());
    for k in 0..ticks {
        measurements.clear();
        for s in &ordered {
            if let Some(frame) = s.frames.get(k) {
                measurements.push((s.sensor_id, realign(frame, &transforms[&s.sensor_id])));
            }
        }
        let (frame, predicted) = state.step(epoch + k as i64 * period, &measurements);
        fused.frames.push(frame);
        fused.predicted_only.push(predicted);
        fused.covariance_trace.push(state.covariance_trace());
    }
    Ok(fused)
}

/// Full chain from measured streams to a fused world-frame stream.
pub fn fuse_measured(
    streams: &[MeasuredStream],
    placements: &BTreeMap<u32, SensorPlacement>,
    config: &FusionConfig,
) -> Result<FusedStream> {
    config.validate()?;
    let Some(epoch) = common_epoch(streams) else {
        return Err(Error::empty("no stream ever detects the hand"));
    };
    let mut resampled = Vec::with_capacity(streams.len());
    let mut transforms = BTreeMap::new();
    for s in streams {
        let placement = placements
            .get(&s.sensor_id)
            .ok_or_else(|| Error::Contract(format!("layout has no sensor {}", s.sensor_id)))?;
        transforms.insert(
            s.sensor_id,
            RealignmentTransform::for_sensor(placement, &config.workspace_center_mm, config.axis_cut_mm),
        );
        resampled.push(resample_bspline(s, config.rate_hz, epoch, config.gap_limit_us())?);
    }
    kalman_fuse(&resampled, &transforms, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame_at(t: i64, f: impl Fn(usize) -> Vec3) -> MarkerFrame {
        MarkerFrame::new(t, std::array::from_fn(f))
    }

    fn stream(id: u32, times: &[i64], f: impl Fn(i64, usize) -> Vec3) -> MeasuredStream {
        MeasuredStream {
            sensor_id: id,
            frames: times.iter().map(|&t| frame_at(t, |i| f(t, i))).collect(),
            annotations: vec![1; times.len()],
        }
    }

    #[test]
    fn mask_examples() {
        let full = frame_at(0, |i| Vec3::repeat(i as f64));
        assert!(handle_missing(&full).iter().all(|&b| b));
        assert!(handle_missing(&MarkerFrame::missing(0)).iter().all(|&b| !b));
        let mut one = full;
        one.markers[7].y = f64::NAN;
        let mask = handle_missing(&one);
        assert_eq!(mask.iter().filter(|&&b| !b).count(), 1);
        assert!(!mask[22]);
    }

    #[test]
    fn constant_stream_resamples_to_constant() {
        let times: Vec<i64> = vec![0, 37_000, 80_000, 111_000, 150_000, 190_000];
        let s = stream(1, &times, |_, i| Vec3::new(i as f64, 2.0, -3.0));
        let r = resample_bspline(&s, 100.0, 0, 100_000).unwrap();
        assert_eq!(r.frames.len(), 20);
        for f in &r.frames {
            for (i, m) in f.markers.iter().enumerate() {
                assert!((m - Vec3::new(i as f64, 2.0, -3.0)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn gap_ticks_are_missing() {
        let mut times: Vec<i64> = (0..10).map(|k| k * 30_000).collect();
        times.extend((0..10).map(|k| 770_000 + k * 30_000));
        let s = stream(1, &times, |t, _| Vec3::repeat(t as f64 * 1e-3));
        let r = resample_bspline(&s, 100.0, 0, 100_000).unwrap();
        for (k, f) in r.frames.iter().enumerate() {
            let t = r.tick_time(k);
            let in_gap = t > 270_000 && t < 770_000;
            assert_eq!(f.is_missing(), in_gap, "tick {k}");
        }
    }

    #[test]
    fn all_missing_resamples_to_empty() {
        let s = MeasuredStream {
            sensor_id: 3,
            frames: (0..5).map(|k| MarkerFrame::missing(k * 10_000)).collect(),
            annotations: vec![-1; 5],
        };
        assert!(resample_bspline(&s, 100.0, 0, 100_000).unwrap().frames.is_empty());
    }

    #[test]
    fn on_grid_resampling_is_identity() {
        let times: Vec<i64> = (0..50).map(|k| 5_000 + k * 10_000).collect();
        let s = stream(1, &times, |t, i| {
            let x = t as f64 * 1e-6;
            Vec3::new((7.0 * x).sin() * 40.0, i as f64 + x * x, (x * 3.0).cos())
        });
        let r = resample_bspline(&s, 100.0, 5_000, 100_000).unwrap();
        assert_eq!(r.frames.len(), 50);
        for (a, b) in r.frames.iter().zip(&s.frames) {
            assert_eq!(a.timestamp_us, b.timestamp_us);
            for (p, q) in a.markers.iter().zip(&b.markers) {
                assert!((p - q).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn realign_examples() {
        let f = frame_at(0, |i| Vec3::new(i as f64, -1.0, 2.0));
        assert_eq!(realign(&f, &RealignmentTransform::identity()), f);
        let t = RealignmentTransform::for_sensor(&SensorPlacement::new(60.0, 60.0, 0.0, 0.0), &Vec3::zeros(), Some(250.0));
        let origin = frame_at(0, |_| Vec3::zeros());
        assert_eq!(realign(&origin, &t).markers[0], Vec3::new(60.0, 0.0, 60.0));
        let missing = MarkerFrame::missing(0);
        assert!(realign(&missing, &t).is_missing());
    }

    #[test]
    fn offset_only_beyond_cut() {
        let center = Vec3::new(0.0, 150.0, 0.0);
        let near = RealignmentTransform::for_sensor(&SensorPlacement::new(60.0, 60.0, 0.0, 0.0), &center, Some(250.0));
        assert_eq!(near.offset, Vec3::zeros());
        let far = RealignmentTransform::for_sensor(&SensorPlacement::new(0.0, 0.0, 0.0, 0.0), &Vec3::new(0.0, 300.0, 0.0), Some(250.0));
        assert!((far.offset - Vec3::new(0.0, 50.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_non_orthonormal() {
        let m = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RealignmentTransform::new(m, Vec3::zeros(), Vec3::zeros()).is_err());
        assert!(RealignmentTransform::new(-Matrix3::identity(), Vec3::zeros(), Vec3::zeros()).is_err());
    }

    fn grid(id: u32, frames: Vec<MarkerFrame>) -> ResampledStream {
        ResampledStream {
            sensor_id: id,
            epoch_us: 0,
            period_us: 10_000,
            frames,
        }
    }

    fn identity_transforms(ids: &[u32]) -> BTreeMap<u32, RealignmentTransform> {
        ids.iter().map(|&id| (id, RealignmentTransform::identity())).collect()
    }

    #[test]
    fn consensus_fixed_point() {
        let frames: Vec<MarkerFrame> = (0..20)
            .map(|k| frame_at(k * 10_000, |i| Vec3::new(i as f64, 100.0, -50.0)))
            .collect();
        let streams: Vec<_> = (1..=4).map(|id| grid(id, frames.clone())).collect();
        let fused = kalman_fuse(&streams, &identity_transforms(&[1, 2, 3, 4]), &FusionConfig::default()).unwrap();
        for (a, b) in fused.frames[10..].iter().zip(&frames[10..]) {
            for (p, q) in a.markers.iter().zip(&b.markers) {
                assert!((p - q).norm() < 1e-6);
            }
        }
        assert!(fused.predicted_only.iter().all(|&p| !p));
    }

    #[test]
    fn all_missing_tick_is_predicted_only() {
        let mut frames: Vec<MarkerFrame> = (0..5).map(|k| frame_at(k * 10_000, |_| Vec3::repeat(1.0))).collect();
        frames[3] = MarkerFrame::missing(30_000);
        let fused = kalman_fuse(&[grid(1, frames)], &identity_transforms(&[1]), &FusionConfig::default()).unwrap();
        assert_eq!(fused.predicted_only, vec![false, false, false, true, false]);
        assert!(fused.frames[3].is_complete());
        assert!(fused.covariance_trace[3] > fused.covariance_trace[2]);
    }

    #[test]
    fn misaligned_grids_are_rejected() {
        let a = grid(1, vec![MarkerFrame::missing(0)]);
        let mut b = grid(2, vec![MarkerFrame::missing(5_000)]);
        b.epoch_us = 5_000;
        let err = kalman_fuse(&[a.clone(), b], &identity_transforms(&[1, 2]), &FusionConfig::default());
        assert!(matches!(err, Err(Error::Contract(_))));
        assert!(kalman_fuse(&[a.clone(), a], &identity_transforms(&[1]), &FusionConfig::default()).is_err());
    }
}
