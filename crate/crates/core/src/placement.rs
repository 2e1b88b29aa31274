//! Placement metric and swarm optimization of the sensor layout.
//!
//! Each frame gets a score `F` (see [`crate::visibility`]). The metric sums
//! the number of frames reaching each tier `F ≥ i`, weighted by `N^-i` for a
//! dataset of `N` frames. A tier count never exceeds `N`, so one extra frame
//! in a lower tier outweighs any gain in higher tiers: the layout first
//! eliminates frames with an invisible finger, then adds redundant views.

use serde::{Deserialize, Serialize};

use crate::hand_model::PoseDataset;
use crate::swarm::{self, SwarmParams};
use crate::visibility::{FieldOfView, PreparedFrame, SensorPlacement, SensorPose, VisibilityOptions};
use crate::{Error, Result};

/// Minimum distance between sensor centres (device width).
pub const SENSOR_CLEARANCE_MM: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricForm {
    /// `Σ_i N^-i · |{j : F_j ≥ i}|`, maximized.
    #[default]
    Lexicographic,
    /// `Σ_i Σ_j F_j / N^i` as printed; kept for comparison.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub score: f64,
    /// `tier_counts[i - 1] = |{j : F_j ≥ i}|` for `i = 1..=S`.
    pub tier_counts: Vec<usize>,
    pub frame_count: usize,
    pub form: MetricForm,
}

impl MetricValue {
    /// Builds the metric from per-frame scores.
    pub fn from_scores(scores: &[u32], sensor_count: usize, form: MetricForm) -> Self {
        let n = scores.len();
        let tier_counts: Vec<usize> = (1..=sensor_count)
            .map(|i| scores.iter().filter(|&&f| f as usize >= i).count())
            .collect();
        let nf = n as f64;
        let score = if n == 0 {
            0.0
        } else {
            match form {
                MetricForm::Lexicographic => tier_counts
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| c as f64 / nf.powi(k as i32 + 1))
                    .sum(),
                MetricForm::Literal => {
                    let total: f64 = scores.iter().map(|&f| f as f64).sum();
                    (1..=sensor_count).map(|i| total / nf.powi(i as i32)).sum()
                }
            }
        };
        Self {
            score,
            tier_counts,
            frame_count: n,
            form,
        }
    }
}

/// Box bounds of each sensor's coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementBounds {
    pub x_mm: [f64; 2],
    pub z_mm: [f64; 2],
    pub phi_deg: [f64; 2],
    pub theta_deg: [f64; 2],
}

impl Default for PlacementBounds {
    fn default() -> Self {
        Self {
            x_mm: [-400.0, 400.0],
            z_mm: [-400.0, 400.0],
            phi_deg: [-45.0, 45.0],
            theta_deg: [-90.0, 90.0],
        }
    }
}

impl PlacementBounds {
    fn ranges(&self) -> [[f64; 2]; 4] {
        [self.x_mm, self.z_mm, self.phi_deg, self.theta_deg]
    }

    /// Whether `count` sensors with pairwise clearance fit in the x–z box,
    /// either on the box corners or along its longer side.
    pub fn check_feasible(&self, count: usize, clearance: f64) -> Result<()> {
        if self.ranges().iter().any(|[lo, hi]| !(lo <= hi)) {
            return Err(Error::Config("placement bounds have lower > upper".into()));
        }
        let w = self.x_mm[1] - self.x_mm[0];
        let d = self.z_mm[1] - self.z_mm[0];
        let corners = count <= 4 && (count <= 2 || w.min(d) >= clearance) && w.max(d) >= clearance;
        let line = w.max(d) >= clearance * count.saturating_sub(1) as f64;
        if count <= 1 || corners || line {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "box {w} x {d} mm cannot hold {count} sensors {clearance} mm apart"
            )))
        }
    }

    pub fn clamp(&self, s: &SensorPlacement) -> SensorPlacement {
        SensorPlacement {
            x_mm: s.x_mm.clamp(self.x_mm[0], self.x_mm[1]),
            z_mm: s.z_mm.clamp(self.z_mm[0], self.z_mm[1]),
            phi_deg: s.phi_deg.clamp(self.phi_deg[0], self.phi_deg[1]),
            theta_deg: s.theta_deg.clamp(self.theta_deg[0], self.theta_deg[1]),
        }
    }
}

/// Clamps every coordinate into `bounds`, then pushes overlapping sensors
/// apart along their centre line until every pair is `clearance` apart.
/// Coincident sensors are separated along `x`.
pub fn clamp_and_repair(
    candidate: &[SensorPlacement],
    bounds: &PlacementBounds,
    clearance: f64,
) -> Vec<SensorPlacement> {
    let mut out: Vec<SensorPlacement> = candidate.iter().map(|s| bounds.clamp(s)).collect();
    for _ in 0..1000 {
        let mut moved = false;
        for i in 0..out.len() {
            for j in i + 1..out.len() {
                let dx = out[j].x_mm - out[i].x_mm;
                let dz = out[j].z_mm - out[i].z_mm;
                let dist = dx.hypot(dz);
                if dist >= clearance - 1e-9 {
                    continue;
                }
                let (ux, uz) = if dist > 1e-12 { (dx / dist, dz / dist) } else { (1.0, 0.0) };
                let push = 0.5 * (clearance - dist);
                out[i].x_mm -= ux * push;
                out[i].z_mm -= uz * push;
                out[j].x_mm += ux * push;
                out[j].z_mm += uz * push;
                out[i] = bounds.clamp(&out[i]);
                out[j] = bounds.clamp(&out[j]);
                // against a wall one sensor takes the remaining separation
                for (a, sign) in [(j, 1.0), (i, -1.0)] {
                    let gap = clearance
                        - (out[j].x_mm - out[i].x_mm).hypot(out[j].z_mm - out[i].z_mm);
                    if gap > 1e-9 {
                        out[a].x_mm += sign * ux * gap;
                        out[a].z_mm += sign * uz * gap;
                        out[a] = bounds.clamp(&out[a]);
                    }
                }
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    out
}

/// One sensor in a layout file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutSensor {
    pub id: u32,
    #[serde(flatten)]
    pub placement: SensorPlacement,
}

/// Sensor layout with optional score, as stored in `layout.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub sensors: Vec<LayoutSensor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier_counts: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl Layout {
    pub fn from_placements(placements: &[SensorPlacement]) -> Self {
        Self {
            sensors: placements
                .iter()
                .enumerate()
                .map(|(k, p)| LayoutSensor {
                    id: k as u32 + 1,
                    placement: *p,
                })
                .collect(),
            score: None,
            tier_counts: None,
            seed: None,
            config_hash: None,
        }
    }

    /// Four sensors on the corners of a 120 mm square, unrotated.
    pub fn initial() -> Self {
        Self::from_placements(&[
            SensorPlacement::new(-60.0, 60.0, 0.0, 0.0),
            SensorPlacement::new(60.0, 60.0, 0.0, 0.0),
            SensorPlacement::new(-60.0, -60.0, 0.0, 0.0),
            SensorPlacement::new(60.0, -60.0, 0.0, 0.0),
        ])
    }

    /// Published optimized four-sensor layout.
    pub fn reference_optimized() -> Self {
        Self::from_placements(&[
            SensorPlacement::new(-120.37, 256.29, 29.90, 16.50),
            SensorPlacement::new(-69.97, 342.57, -7.57, -7.04),
            SensorPlacement::new(-190.60, 88.70, -8.72, -4.93),
            SensorPlacement::new(178.88, 100.90, -12.06, 12.38),
        ])
    }

    pub fn placements(&self) -> Vec<SensorPlacement> {
        self.sensors.iter().map(|s| s.placement).collect()
    }

    pub fn with_metric(mut self, metric: &MetricValue) -> Self {
        self.score = Some(metric.score);
        self.tier_counts = Some(metric.tier_counts.clone());
        self
    }
}

/// A dataset with per-frame palm geometry computed once.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    frames: Vec<Option<PreparedFrame>>,
}

impl PreparedDataset {
    pub fn new(dataset: &PoseDataset) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::empty("placement metric needs a non-empty dataset"));
        }
        let frames = dataset
            .frames
            .iter()
            .map(PreparedFrame::new)
            .collect::<Result<_>>()?;
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Per-frame scores `F_j`.
    pub fn scores(&self, poses: &[SensorPose], fov: &FieldOfView, opts: &VisibilityOptions) -> Vec<u32> {
        let score = |f: &Option<PreparedFrame>| f.as_ref().map_or(0, |p| p.score(poses, fov, opts));
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            self.frames.par_iter().map(score).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            self.frames.iter().map(score).collect()
        }
    }

    pub fn metric(
        &self,
        placements: &[SensorPlacement],
        fov: &FieldOfView,
        opts: &VisibilityOptions,
        form: MetricForm,
    ) -> MetricValue {
        let poses: Vec<SensorPose> = placements.iter().map(|p| p.pose()).collect();
        MetricValue::from_scores(&self.scores(&poses, fov, opts), placements.len(), form)
    }
}

/// Placement metric of `placements` over `dataset`.
pub fn placement_metric(
    placements: &[SensorPlacement],
    dataset: &PoseDataset,
    fov: &FieldOfView,
    opts: &VisibilityOptions,
    form: MetricForm,
) -> Result<MetricValue> {
    Ok(PreparedDataset::new(dataset)?.metric(placements, fov, opts, form))
}

/// Optimizer configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwarmConfig {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Velocity limit per coordinate as a fraction of the box width.
    pub max_velocity: f64,
    pub seed: u64,
    pub sensor_count: usize,
    pub bounds: PlacementBounds,
    pub clearance_mm: f64,
    pub metric: MetricForm,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        let p = SwarmParams::default();
        Self {
            particles: p.particles,
            iterations: p.iterations,
            inertia: p.inertia,
            cognitive: p.cognitive,
            social: p.social,
            max_velocity: p.max_velocity,
            seed: p.seed,
            sensor_count: 4,
            bounds: PlacementBounds::default(),
            clearance_mm: SENSOR_CLEARANCE_MM,
            metric: MetricForm::Lexicographic,
        }
    }
}

impl SwarmConfig {
    pub fn params(&self) -> SwarmParams {
        SwarmParams {
            particles: self.particles,
            iterations: self.iterations,
            inertia: self.inertia,
            cognitive: self.cognitive,
            social: self.social,
            max_velocity: self.max_velocity,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimized {
    pub placements: Vec<SensorPlacement>,
    pub metric: MetricValue,
    /// Best score after each iteration; non-decreasing.
    pub trace: Vec<f64>,
}

fn decode(x: &[f64]) -> Vec<SensorPlacement> {
    x.chunks_exact(4)
        .map(|c| SensorPlacement::new(c[0], c[1], c[2], c[3]))
        .collect()
}

fn encode(placements: &[SensorPlacement], out: &mut [f64]) {
    for (c, p) in out.chunks_exact_mut(4).zip(placements) {
        c.copy_from_slice(&[p.x_mm, p.z_mm, p.phi_deg, p.theta_deg]);
    }
}

/// Maximizes the placement metric with a particle swarm.
pub fn pso_optimize(
    dataset: &PreparedDataset,
    fov: &FieldOfView,
    opts: &VisibilityOptions,
    config: &SwarmConfig,
) -> Result<Optimized> {
    if config.sensor_count == 0 {
        return Err(Error::Config("sensor_count must be at least 1".into()));
    }
    config.bounds.check_feasible(config.sensor_count, config.clearance_mm)?;
    let ranges = config.bounds.ranges();
    let lower: Vec<f64> = (0..config.sensor_count).flat_map(|_| ranges.map(|r| r[0])).collect();
    let upper: Vec<f64> = (0..config.sensor_count).flat_map(|_| ranges.map(|r| r[1])).collect();

    let objective = |x: &[f64]| -dataset.metric(&decode(x), fov, opts, config.metric).score;
    let repair = |x: &mut [f64]| {
        let fixed = clamp_and_repair(&decode(x), &config.bounds, config.clearance_mm);
        encode(&fixed, x);
    };
    let res = swarm::minimize(&config.params(), &lower, &upper, objective, repair)?;
    let placements = decode(&res.best);
    let metric = dataset.metric(&placements, fov, opts, config.metric);
    Ok(Optimized {
        placements,
        metric,
        trace: res.trace.iter().map(|c| -c).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_all_zero() {
        let m = MetricValue::from_scores(&[0; 12], 4, MetricForm::Lexicographic);
        assert_eq!(m.score, 0.0);
        assert_eq!(m.tier_counts, vec![0; 4]);
    }

    #[test]
    fn metric_saturated_closed_form() {
        let n = 25usize;
        let m = MetricValue::from_scores(&vec![4; n], 4, MetricForm::Lexicographic);
        assert_eq!(m.tier_counts, vec![n; 4]);
        let nf = n as f64;
        let expected = 1.0 + 1.0 / nf + 1.0 / nf.powi(2) + 1.0 / nf.powi(3);
        assert!((m.score - expected).abs() < 1e-15);
    }

    #[test]
    fn lower_tier_dominates() {
        // 3 of 5 frames with F >= 1 at tier 1 only vs 2 frames at full tier
        let a = MetricValue::from_scores(&[1, 1, 1, 0, 0], 4, MetricForm::Lexicographic);
        let b = MetricValue::from_scores(&[4, 4, 0, 0, 0], 4, MetricForm::Lexicographic);
        assert!(a.score > b.score);
    }

    #[test]
    fn literal_form() {
        let m = MetricValue::from_scores(&[2, 1, 0], 2, MetricForm::Literal);
        assert!((m.score - (3.0 / 3.0 + 3.0 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn repair_identity_in_bounds() {
        let layout = Layout::initial().placements();
        let fixed = clamp_and_repair(&layout, &PlacementBounds::default(), SENSOR_CLEARANCE_MM);
        assert_eq!(fixed, layout);
    }

    #[test]
    fn repair_clamps() {
        let fixed = clamp_and_repair(
            &[SensorPlacement::new(900.0, -500.0, 60.0, -100.0)],
            &PlacementBounds::default(),
            SENSOR_CLEARANCE_MM,
        );
        assert_eq!(fixed[0], SensorPlacement::new(400.0, -400.0, 45.0, -90.0));
    }

    #[test]
    fn repair_separates_coincident() {
        let p = SensorPlacement::new(0.0, 0.0, 0.0, 0.0);
        let fixed = clamp_and_repair(&[p, p], &PlacementBounds::default(), SENSOR_CLEARANCE_MM);
        let d = (fixed[1].x_mm - fixed[0].x_mm).hypot(fixed[1].z_mm - fixed[0].z_mm);
        assert_eq!(d, 80.0);
    }

    #[test]
    fn repair_many_overlapping() {
        let ps: Vec<_> = (0..4)
            .map(|k| SensorPlacement::new(390.0 + k as f64, 390.0, 0.0, 0.0))
            .collect();
        let bounds = PlacementBounds::default();
        let fixed = clamp_and_repair(&ps, &bounds, SENSOR_CLEARANCE_MM);
        for i in 0..4 {
            for j in i + 1..4 {
                let d = (fixed[j].x_mm - fixed[i].x_mm).hypot(fixed[j].z_mm - fixed[i].z_mm);
                assert!(d >= 80.0 - 1e-6, "{i} {j} {d}");
            }
            assert!(fixed[i].x_mm <= 400.0 && fixed[i].z_mm <= 400.0);
        }
    }

    #[test]
    fn infeasible_box() {
        let tiny = PlacementBounds {
            x_mm: [0.0, 50.0],
            z_mm: [0.0, 50.0],
            ..Default::default()
        };
        assert!(tiny.check_feasible(4, 80.0).is_err());
        let strip = PlacementBounds {
            x_mm: [0.0, 240.0],
            z_mm: [0.0, 0.0],
            ..Default::default()
        };
        assert!(strip.check_feasible(4, 80.0).is_ok());
        assert!(PlacementBounds::default().check_feasible(4, 80.0).is_ok());
    }

    #[test]
    fn layout_json_schema() {
        let layout = Layout::initial().with_metric(&MetricValue::from_scores(&[1, 2], 4, MetricForm::Lexicographic));
        let json = serde_json::to_value(&layout).unwrap();
        let s0 = &json["sensors"][0];
        for key in ["id", "x_mm", "z_mm", "phi_deg", "theta_deg"] {
            assert!(s0.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["tier_counts"], serde_json::json!([2, 1, 0, 0]));
        let back: Layout = serde_json::from_value(json).unwrap();
        assert_eq!(back, layout);
    }

    #[test]
    fn reference_layout_values() {
        let l = Layout::reference_optimized();
        assert_eq!(l.sensors[1].placement.z_mm, 342.57);
        assert_eq!(l.sensors[0].placement.phi_deg, 29.90);
        assert_eq!(l.sensors[3].placement.theta_deg, 12.38);
    }
}
