//! Browser demo: score a sensor layout, ray-trace one hand pose, and slice
//! the combined field of view at a chosen height.
//!
//! Every export takes and returns JSON strings. The `*_json` functions hold
//! the logic and run natively; the `#[wasm_bindgen]` wrappers only convert
//! errors.

use std::cell::OnceCell;

use handfield::hand_model::{
    generate_reference_trajectories, monte_carlo_expand, PerturbationConfig, Sweep, TrajectoryConfig,
};
use handfield::placement::{MetricForm, PreparedDataset};
use handfield::visibility::{PreparedFrame, VisibilityOptions};
use handfield::{FieldOfView, Finger, HandModel, HandPose, Layout, SensorPlacement, Vec3};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Coarse stand-in for the reference dataset: 5° sweeps, one perturbed copy
/// of each frame.
fn demo_dataset() -> PreparedDataset {
    let model = HandModel::default();
    let config = TrajectoryConfig {
        static_frames: 10,
        index_flexion: Sweep::new(0.0, 90.0, 5.0),
        thumb_flexion: Sweep::new(0.0, 90.0, 5.0),
        wrist_flexion: Sweep::new(0.0, 60.0, 5.0),
        pinch: Sweep::new(0.0, 90.0, 5.0),
        ..TrajectoryConfig::default()
    };
    let trajectories = generate_reference_trajectories(&model, &config).expect("valid demo config");
    let dataset = monte_carlo_expand(&model, &trajectories, 1, &PerturbationConfig::default(), 11)
        .expect("valid demo perturbation");
    PreparedDataset::new(&dataset).expect("non-empty demo dataset")
}

thread_local! {
    static DATASET: OnceCell<PreparedDataset> = const { OnceCell::new() };
}

fn fov_named(name: &str) -> Result<FieldOfView, String> {
    match name {
        "optimization" => Ok(FieldOfView::optimization()),
        "sensing" => Ok(FieldOfView::datasheet()),
        other => Err(format!("unknown field of view '{other}'")),
    }
}

fn parse<T: serde::de::DeserializeOwned>(what: &str, json: &str) -> Result<T, String> {
    serde_json::from_str(json).map_err(|e| format!("bad {what}: {e}"))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// `initial` or `optimized-table2` as a JSON array of placements.
pub fn preset_layout_json(name: &str) -> Result<String, String> {
    let layout = match name {
        "initial" => Layout::initial(),
        "optimized-table2" => Layout::reference_optimized(),
        other => return Err(format!("unknown layout '{other}'")),
    };
    to_json(&layout.placements())
}

#[derive(Serialize)]
struct Score {
    score: f64,
    tier_counts: Vec<usize>,
    frame_count: usize,
}

/// Placement metric of `sensors` (JSON array of placements) over the demo dataset.
pub fn score_layout_json(sensors: &str, fov: &str) -> Result<String, String> {
    let placements: Vec<SensorPlacement> = parse("sensors", sensors)?;
    if placements.is_empty() {
        return Err("layout needs at least one sensor".into());
    }
    let fov = fov_named(fov)?;
    let m = DATASET.with(|cell| {
        cell.get_or_init(demo_dataset)
            .metric(&placements, &fov, &VisibilityOptions::default(), MetricForm::Lexicographic)
    });
    to_json(&Score {
        score: m.score,
        tier_counts: m.tier_counts,
        frame_count: m.frame_count,
    })
}

#[derive(Serialize)]
struct SensorVerdict {
    visible: [bool; 5],
    /// Reason per finger, empty when visible.
    causes: [&'static str; 5],
}

#[derive(Serialize)]
struct Trace {
    markers: Vec<[f64; 3]>,
    fingers: [&'static str; 5],
    sensors: Vec<SensorVerdict>,
    score: u32,
}

/// Marker positions and per-sensor finger visibility for one pose.
pub fn trace_pose_json(pose: &str, sensors: &str, fov: &str) -> Result<String, String> {
    let pose: HandPose = parse("pose", pose)?;
    let placements: Vec<SensorPlacement> = parse("sensors", sensors)?;
    let fov = fov_named(fov)?;
    let model = HandModel::default();
    let frame = model.frame(&pose, 0).map_err(|e| e.to_string())?;
    let prepared = PreparedFrame::new(&frame)
        .map_err(|e| e.to_string())?
        .ok_or("pose produced no hand")?;
    let opts = VisibilityOptions::default();
    let poses: Vec<_> = placements.iter().map(|p| p.pose()).collect();
    let verdicts = poses
        .iter()
        .map(|s| {
            let v = prepared.finger_visibility(s, &fov, &opts);
            SensorVerdict {
                visible: v.flags(),
                causes: v.0.map(|r| r.err().map_or("", |c| c.name())),
            }
        })
        .collect();
    to_json(&Trace {
        markers: frame.markers.iter().map(|m| [m.x, m.y, m.z]).collect(),
        fingers: Finger::ALL.map(Finger::name),
        sensors: verdicts,
        score: prepared.score(&poses, &fov, &opts),
    })
}

#[derive(Serialize)]
struct Slice {
    cells: usize,
    half_extent_mm: f64,
    y_mm: f64,
    /// Row-major over `z` then `x`, both ascending: sensors containing the cell centre.
    counts: Vec<u8>,
}

/// Number of sensors whose pyramid contains each cell of a horizontal grid
/// at height `y_mm`, centred on the origin.
pub fn fov_slice_json(sensors: &str, fov: &str, y_mm: f64, half_extent_mm: f64, cells: usize) -> Result<String, String> {
    let placements: Vec<SensorPlacement> = parse("sensors", sensors)?;
    let fov = fov_named(fov)?;
    if !(1..=400).contains(&cells) {
        return Err("cells must be between 1 and 400".into());
    }
    if !(half_extent_mm > 0.0 && half_extent_mm.is_finite() && y_mm.is_finite()) {
        return Err("extent must be positive and height finite".into());
    }
    let poses: Vec<_> = placements.iter().map(|p| p.pose()).collect();
    let step = 2.0 * half_extent_mm / cells as f64;
    let centre = |k: usize| -half_extent_mm + (k as f64 + 0.5) * step;
    let mut counts = Vec::with_capacity(cells * cells);
    for iz in 0..cells {
        for ix in 0..cells {
            let p = Vec3::new(centre(ix), y_mm, centre(iz));
            counts.push(poses.iter().filter(|s| fov.contains_local(&s.to_local(&p))).count() as u8);
        }
    }
    to_json(&Slice {
        cells,
        half_extent_mm,
        y_mm,
        counts,
    })
}

#[wasm_bindgen]
pub fn preset_layout(name: &str) -> Result<String, JsError> {
    preset_layout_json(name).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn score_layout(sensors: &str, fov: &str) -> Result<String, JsError> {
    score_layout_json(sensors, fov).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn trace_pose(pose: &str, sensors: &str, fov: &str) -> Result<String, JsError> {
    trace_pose_json(pose, sensors, fov).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn fov_slice(sensors: &str, fov: &str, y_mm: f64, half_extent_mm: f64, cells: usize) -> Result<String, JsError> {
    fov_slice_json(sensors, fov, y_mm, half_extent_mm, cells).map_err(|e| JsError::new(&e))
}
