mod common;

use std::collections::BTreeMap;

use common::*;
use handfield::fusion::{
    kalman_fuse, resample_bspline, FusionConfig, FusionState, RealignmentTransform, ResampledStream,
};
use handfield::geometry::{ray_plane_intersection, ray_segment_distance, regression_plane, Plane, Ray};
use handfield::hand_model::Slot;
use handfield::metrics::{compute_joint_angle, compute_rom, finger_lengths};
use handfield::placement::{clamp_and_repair, placement_metric, MetricForm, PlacementBounds, SENSOR_CLEARANCE_MM};
use handfield::sensor_sim::{axis_cut, ground_truth_at, simulate_sensor, MeasuredStream, SensorModelConfig};
use handfield::visibility::{finger_visibility, frame_score, rate_from_visibility, VisibilityOptions};
use handfield::{
    io, FieldOfView, Finger, HandModel, Layout, MarkerFrame, PoseDataset, SensorPlacement, Vec3,
};
use nalgebra::{Isometry3, Translation3, UnitQuaternion};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn isometry(rng: &mut rand_chacha::ChaCha8Rng) -> Isometry3<f64> {
    let axis = nalgebra::Unit::new_normalize(unit(rng));
    Isometry3::from_parts(
        Translation3::from(point_in_box(rng, Vec3::zeros(), 500.0)),
        UnitQuaternion::from_axis_angle(&axis, rng.random_range(-3.0..3.0)),
    )
}

fn apply(iso: &Isometry3<f64>, p: &Vec3) -> Vec3 {
    (iso * nalgebra::Point3::from(*p)).coords
}

/// A layout that sees the reference hand most of the time, jittered.
fn near_reference(rng: &mut rand_chacha::ChaCha8Rng) -> Vec<SensorPlacement> {
    Layout::reference_optimized()
        .placements()
        .iter()
        .map(|s| {
            SensorPlacement::new(
                s.x_mm + rng.random_range(-30.0..30.0),
                s.z_mm + rng.random_range(-30.0..30.0),
                s.phi_deg + rng.random_range(-8.0..8.0),
                s.theta_deg + rng.random_range(-8.0..8.0),
            )
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kinematics_commute_with_rigid_motions(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let model = HandModel::default();
        let pose = random_pose(&mut rng);
        let iso = isometry(&mut rng);
        let moved = model.forward_kinematics_in(&pose, &(iso * pose.world_from_hand())).unwrap();
        let base = model.forward_kinematics(&pose).unwrap();
        for (m, b) in moved.iter().zip(&base) {
            prop_assert!((m - apply(&iso, b)).norm() < 1e-9);
        }
    }

    #[test]
    fn segment_lengths_are_conserved(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let model = HandModel::default();
        let frame = random_frame(&mut rng);
        for finger in Finger::ALL {
            let chain = frame.finger_chain(finger);
            for (k, expected) in model.dims.segment_lengths(finger).iter().enumerate() {
                prop_assert!(((chain[k + 1] - chain[k]).norm() - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn joint_angle_ignores_rigid_motion_and_scale(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let mut rng = rng(seed);
        let joint = point_in_box(&mut rng, Vec3::zeros(), 200.0);
        let a = joint + unit(&mut rng) * rng.random_range(5.0..60.0);
        let d = joint + unit(&mut rng) * rng.random_range(5.0..60.0);
        let angle = compute_joint_angle(a, joint, joint, d).unwrap();
        let iso = isometry(&mut rng);
        let moved = compute_joint_angle(apply(&iso, &a), apply(&iso, &joint), apply(&iso, &joint), apply(&iso, &d)).unwrap();
        let scaled = |p: Vec3| joint + (p - joint) * scale;
        let zoomed = compute_joint_angle(scaled(a), joint, joint, scaled(d)).unwrap();
        prop_assert!((angle - moved).abs() < 1e-9);
        prop_assert!((angle - zoomed).abs() < 1e-9);
        prop_assert!((0.0..=180.0).contains(&angle));
    }

    #[test]
    fn finger_length_ignores_rigid_motion(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let frame = random_frame(&mut rng);
        let iso = isometry(&mut rng);
        let moved = frame.map(|p| apply(&iso, &p));
        for (a, b) in finger_lengths(&frame).iter().zip(finger_lengths(&moved)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rom_ignores_order_and_offset(mut series in prop::collection::vec(-180.0f64..180.0, 2..200), offset in -1e3f64..1e3, seed in any::<u64>()) {
        let rom = compute_rom(&series).unwrap();
        series.shuffle(&mut rng(seed));
        prop_assert_eq!(compute_rom(&series).unwrap(), rom);
        let shifted: Vec<f64> = series.iter().map(|v| v + offset).collect();
        prop_assert!((compute_rom(&shifted).unwrap() - rom).abs() < 1e-9);
    }

    #[test]
    fn regression_plane_is_equivariant(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let points: Vec<Vec3> = (0..8).map(|_| point_in_box(&mut rng, Vec3::zeros(), 100.0)).collect();
        let iso = isometry(&mut rng);
        let moved: Vec<Vec3> = points.iter().map(|p| apply(&iso, p)).collect();
        let (p, q) = (regression_plane(&points).unwrap(), regression_plane(&moved).unwrap());
        let n = iso.rotation * p.normal;
        prop_assert!(n.cross(&q.normal).norm() < 1e-9);
        prop_assert!((apply(&iso, &p.point) - q.point).norm() < 1e-9);
    }

    #[test]
    fn segment_distance_is_symmetric_in_its_ends(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let ray = Ray::new(point_in_box(&mut rng, Vec3::zeros(), 300.0), unit(&mut rng)).unwrap();
        let a = point_in_box(&mut rng, Vec3::new(0.0, 250.0, 250.0), 150.0);
        let b = a + unit(&mut rng) * rng.random_range(10.0..80.0);
        let (ab, ba) = (ray_segment_distance(&ray, &a, &b).unwrap(), ray_segment_distance(&ray, &b, &a).unwrap());
        prop_assert!((ab.distance - ba.distance).abs() < 1e-9);
        prop_assert!((ab.closest - ba.closest).norm() < 1e-6);
        prop_assert_eq!(ab.within_segment, ba.within_segment);
    }

    #[test]
    fn plane_hits_ahead_have_positive_parameter(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let ray = Ray::new(point_in_box(&mut rng, Vec3::zeros(), 300.0), unit(&mut rng)).unwrap();
        let plane = Plane::new(point_in_box(&mut rng, Vec3::zeros(), 300.0), unit(&mut rng)).unwrap();
        if let Some((p, t)) = ray_plane_intersection(&ray, &plane) {
            let ahead = (p - ray.origin).dot(&ray.direction);
            prop_assert!(plane.signed_distance(&p).abs() < 1e-9 * (1.0 + t.abs()));
            if t.abs() > 1e-9 {
                prop_assert_eq!(t > 0.0, ahead > 0.0);
            }
        }
    }

    #[test]
    fn visibility_ignores_shifting_and_turning_the_scene(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let frame = random_frame(&mut rng);
        let sensors = near_reference(&mut rng);
        let (dx, dz) = (rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0));
        let turn = rng.random_range(-180.0f64..180.0);
        let rot = UnitQuaternion::from_axis_angle(&Vec3::y_axis(), turn.to_radians());
        let shift = Vec3::new(dx, 0.0, dz);
        let moved = frame.map(|p| rot * p + shift);
        let fov = FieldOfView::optimization();
        let opts = VisibilityOptions::default();
        for s in &sensors {
            let p = rot * Vec3::new(s.x_mm, 0.0, s.z_mm) + shift;
            let t = SensorPlacement::new(p.x, p.z, s.phi_deg, s.theta_deg + turn);
            prop_assert_eq!(
                finger_visibility(&frame, s, &fov, &opts).unwrap(),
                finger_visibility(&moved, &t, &fov, &opts).unwrap()
            );
        }
    }

    #[test]
    fn removing_a_sensor_never_raises_the_score(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let frame = random_frame(&mut rng);
        let sensors = near_reference(&mut rng);
        let fov = FieldOfView::optimization();
        let opts = VisibilityOptions::default();
        let full = frame_score(&frame, &sensors, &fov, &opts).unwrap();
        prop_assert!(full as usize <= sensors.len());
        for k in 0..sensors.len() {
            let mut fewer = sensors.clone();
            fewer.remove(k);
            if fewer.is_empty() {
                continue;
            }
            let f = frame_score(&frame, &fewer, &fov, &opts).unwrap();
            prop_assert!(f <= full && f + 1 >= full);
        }
    }

    #[test]
    fn metric_ignores_frame_and_sensor_order(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let mut frames: Vec<MarkerFrame> = (0..12).map(|_| random_frame(&mut rng)).collect();
        let mut sensors = near_reference(&mut rng);
        let fov = FieldOfView::optimization();
        let opts = VisibilityOptions::default();
        let score = |f: &[MarkerFrame], s: &[SensorPlacement]| {
            placement_metric(s, &PoseDataset::from_frames(f.to_vec(), "p"), &fov, &opts, MetricForm::Lexicographic).unwrap()
        };
        let before = score(&frames, &sensors);
        frames.shuffle(&mut rng);
        sensors.shuffle(&mut rng);
        let after = score(&frames, &sensors);
        prop_assert_eq!(before.tier_counts.clone(), after.tier_counts);
        prop_assert_eq!(before.score.to_bits(), after.score.to_bits());
        prop_assert!(before.tier_counts.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn repaired_layouts_are_feasible(seed in any::<u64>(), count in 1usize..6) {
        let mut rng = rng(seed);
        let bounds = PlacementBounds::default();
        let raw: Vec<SensorPlacement> = (0..count)
            .map(|_| SensorPlacement::new(
                rng.random_range(-600.0..600.0),
                rng.random_range(-600.0..600.0),
                rng.random_range(-90.0..90.0),
                rng.random_range(-180.0..180.0),
            ))
            .collect();
        let fixed = clamp_and_repair(&raw, &bounds, SENSOR_CLEARANCE_MM);
        for (i, a) in fixed.iter().enumerate() {
            prop_assert_eq!(bounds.clamp(a), *a);
            for b in &fixed[i + 1..] {
                prop_assert!((a.x_mm - b.x_mm).hypot(a.z_mm - b.z_mm) >= SENSOR_CLEARANCE_MM - 1e-6);
            }
        }
    }

    #[test]
    fn axis_cut_is_idempotent(x in -1e3f64..1e3, y in -1e3f64..1e3, z in -1e3f64..1e3, cut in 1.0f64..500.0) {
        let once = axis_cut(&Vec3::new(x, y, z), cut);
        prop_assert_eq!(axis_cut(&once, cut), once);
        prop_assert!(once.amax() <= cut);
    }

    #[test]
    fn on_grid_streams_resample_to_themselves(seed in any::<u64>(), samples in 4usize..40) {
        let mut rng = rng(seed);
        let frames: Vec<MarkerFrame> = (0..samples)
            .map(|k| MarkerFrame::new(500_000 + k as i64 * 10_000, std::array::from_fn(|_| point_in_box(&mut rng, Vec3::zeros(), 300.0))))
            .collect();
        let stream = MeasuredStream { sensor_id: 3, annotations: vec![1; samples], frames: frames.clone() };
        let out = resample_bspline(&stream, 100.0, 500_000, 100_000).unwrap();
        prop_assert_eq!(out.frames.len(), samples);
        for (a, b) in out.frames.iter().zip(&frames) {
            prop_assert_eq!(a.timestamp_us, b.timestamp_us);
            for (p, q) in a.markers.iter().zip(&b.markers) {
                prop_assert!((p - q).amax() < 1e-9);
            }
        }
    }
}

fn noisy_streams(seed: u64, count: u32, ticks: usize) -> Vec<ResampledStream> {
    let mut rng = rng(seed);
    (1..=count)
        .map(|id| ResampledStream {
            sensor_id: id,
            epoch_us: 0,
            period_us: 10_000,
            frames: (0..ticks)
                .map(|k| {
                    let t = k as i64 * 10_000;
                    if rng.random_bool(0.15) {
                        MarkerFrame::missing(t)
                    } else {
                        let mut f = MarkerFrame::new(t, std::array::from_fn(|i| Vec3::repeat(i as f64 * 10.0 + k as f64)));
                        for m in f.markers.iter_mut() {
                            *m += point_in_box(&mut rng, Vec3::zeros(), 3.0);
                            if rng.random_bool(0.1) {
                                m.y = f64::NAN;
                            }
                        }
                        f
                    }
                })
                .collect(),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn covariance_stays_psd_every_tick(seed in any::<u64>()) {
        let config = FusionConfig::default();
        let mut state = FusionState::new(&config).unwrap();
        let transform = RealignmentTransform::identity();
        for k in 0..120 {
            let measurements: Vec<(u32, MarkerFrame)> = noisy_streams(seed ^ k, 4, 1)
                .into_iter()
                .map(|s| (s.sensor_id, handfield::fusion::realign(&s.frames[0], &transform)))
                .collect();
            state.step(k as i64 * 10_000, &measurements);
            for c in 0..handfield::fusion::COORDS {
                if let Some(f) = state.filter(c) {
                    prop_assert_eq!(f.p[0][1], f.p[1][0]);
                    prop_assert!(f.covariance_eigenvalues()[0] >= -1e-9);
                }
            }
        }
    }

    #[test]
    fn fusion_ignores_stream_order(seed in any::<u64>()) {
        let streams = noisy_streams(seed, 4, 50);
        let transforms: BTreeMap<u32, RealignmentTransform> =
            (1..=4).map(|id| (id, RealignmentTransform::identity())).collect();
        let config = FusionConfig::default();
        let mut shuffled = streams.clone();
        shuffled.shuffle(&mut rng(seed));
        let a = kalman_fuse(&streams, &transforms, &config).unwrap();
        let b = kalman_fuse(&shuffled, &transforms, &config).unwrap();
        prop_assert_eq!(a.predicted_only, b.predicted_only);
        for (x, y) in a.frames.iter().zip(&b.frames) {
            for (p, q) in x.markers.iter().zip(&y.markers) {
                for (u, v) in p.iter().zip(q.iter()) {
                    prop_assert_eq!(u.to_bits(), v.to_bits());
                }
            }
        }
    }
}

#[test]
fn annotations_match_recomputed_visibility() {
    let dataset = reference_dataset(1);
    let subset = PoseDataset::from_frames(dataset.frames[..600].to_vec(), "subset");
    let config = SensorModelConfig::default();
    for (k, sensor) in Layout::reference_optimized().placements().iter().enumerate() {
        let stream = simulate_sensor(&subset, k as u32 + 1, sensor, &config).unwrap();
        for (frame, &rate) in stream.frames.iter().zip(&stream.annotations) {
            let truth = ground_truth_at(&subset, frame.timestamp_us);
            let vis = finger_visibility(&truth, sensor, &config.fov, &config.visibility).unwrap();
            assert_eq!(rate, rate_from_visibility(&vis), "sensor {} at {} us", k + 1, frame.timestamp_us);
        }
    }
}

#[test]
fn frames_round_trip_through_csv() {
    let mut rng = rng(5);
    let mut frames: Vec<MarkerFrame> = (0..20)
        .map(|k| {
            let mut f = random_frame(&mut rng);
            f.timestamp_us = k * 7_919;
            f
        })
        .collect();
    frames[3] = MarkerFrame::missing(frames[3].timestamp_us);
    frames[5].markers[Finger::Index.marker(Slot::Tip)].x = f64::NAN;
    let mut buf = Vec::new();
    io::write_frames(&mut buf, &frames).unwrap();
    let back = io::read_frames(buf.as_slice()).unwrap();
    assert_eq!(back.len(), frames.len());
    for (a, b) in back.iter().zip(&frames) {
        assert_eq!(a.timestamp_us, b.timestamp_us);
        for (p, q) in a.markers.iter().zip(&b.markers) {
            for (u, v) in p.iter().zip(q.iter()) {
                assert!(u.to_bits() == v.to_bits() || (u.is_nan() && v.is_nan()));
            }
        }
    }
}
