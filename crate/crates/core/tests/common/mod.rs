//! Scene generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use handfield::geometry::{Ray, SegmentProximity};
use handfield::hand_model::{
    generate_reference_trajectories, monte_carlo_expand, FingerFlexion, PalmOrientation,
    PerturbationConfig, TrajectoryConfig, REFERENCE_WRIST_MM,
};
use handfield::{Finger, HandModel, HandPose, MarkerFrame, PoseDataset, SensorPlacement, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const REFERENCE_SEED: u64 = 11;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn point_in_box(rng: &mut ChaCha8Rng, centre: Vec3, half: f64) -> Vec3 {
    centre + Vec3::new(
        rng.random_range(-half..half),
        rng.random_range(-half..half),
        rng.random_range(-half..half),
    )
}

/// A pose inside the joint bounds near the reference wrist position.
pub fn random_pose(rng: &mut ChaCha8Rng) -> HandPose {
    let mut pose = HandPose {
        position_mm: point_in_box(rng, Vec3::from(REFERENCE_WRIST_MM), 40.0),
        orientation: if rng.random_bool(0.5) {
            PalmOrientation::Horizontal
        } else {
            PalmOrientation::Vertical
        },
        roll_deg: rng.random_range(-20.0..20.0),
        pitch_deg: rng.random_range(-20.0..20.0),
        yaw_deg: rng.random_range(-20.0..20.0),
        wrist_flexion_deg: rng.random_range(-60.0..=60.0),
        ..HandPose::default()
    };
    for finger in Finger::ALL {
        *pose.finger_mut(finger) = FingerFlexion {
            mcp_deg: rng.random_range(0.0..=90.0),
            pip_deg: if finger == Finger::Thumb {
                0.0
            } else {
                rng.random_range(0.0..=90.0)
            },
            dip_deg: rng.random_range(0.0..=90.0),
        };
    }
    pose
}

pub fn random_frame(rng: &mut ChaCha8Rng) -> MarkerFrame {
    HandModel::default().frame(&random_pose(rng), 0).unwrap()
}

/// A placement anywhere in the default optimization box.
pub fn random_placement(rng: &mut ChaCha8Rng) -> SensorPlacement {
    SensorPlacement::new(
        rng.random_range(-400.0..400.0),
        rng.random_range(-400.0..400.0),
        rng.random_range(-45.0..45.0),
        rng.random_range(-90.0..90.0),
    )
}

/// Reference trajectories expanded with three Monte Carlo samples per frame.
pub fn reference_dataset(samples: usize) -> PoseDataset {
    let model = HandModel::default();
    let trajectories = generate_reference_trajectories(&model, &TrajectoryConfig::default()).unwrap();
    monte_carlo_expand(
        &model,
        &trajectories,
        samples,
        &PerturbationConfig::default(),
        REFERENCE_SEED,
    )
    .unwrap()
}

/// Minimizer of a convex function on `[lo, hi]` by golden-section search.
pub fn golden(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..200 {
        if hi - lo <= 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// Closest approach between the ray line and the segment line found by
/// sampling a 1000 × 1000 grid of `(t, s)` pairs over `±window` mm, then
/// refining around the best sample. Returns the distance and the point on
/// the segment line.
pub fn brute_line_distance(ray: &Ray, a: &Vec3, b: &Vec3, window: f64) -> (f64, Vec3) {
    let u = (b - a).normalize();
    let dist2 = |t: f64, s: f64| (ray.origin + ray.direction * t - (a + u * s)).norm_squared();
    const N: usize = 1000;
    let h = 2.0 * window / (N - 1) as f64;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..N {
        let t = -window + h * i as f64;
        for j in 0..N {
            let s = -window + h * j as f64;
            let d = dist2(t, s);
            if d < best.0 {
                best = (d, t, s);
            }
        }
    }
    let reach = 60.0 * h;
    let inner = |t: f64| {
        let s = golden(best.2 - reach, best.2 + reach, |s| dist2(t, s));
        (dist2(t, s), s)
    };
    let t = golden(best.1 - reach, best.1 + reach, |t| inner(t).0);
    let (d2, s) = inner(t);
    (d2.sqrt(), a + u * s)
}

pub fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (a + ab * t - p).norm()
}

/// Distance from `p` to the filled triangle `abc`, via barycentric
/// coordinates of its projection and the three edges.
pub fn point_triangle_distance(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let n = (b - a).cross(&(c - a));
    let nn = n.norm();
    if nn > 1e-12 {
        let n = n / nn;
        let q = p - n * n.dot(&(p - a));
        let area = |x: &Vec3, y: &Vec3, z: &Vec3| (y - x).cross(&(z - x)).dot(&n);
        let total = area(a, b, c);
        let (l0, l1, l2) = (area(&q, b, c) / total, area(a, &q, c) / total, area(a, b, &q) / total);
        if l0 >= 0.0 && l1 >= 0.0 && l2 >= 0.0 {
            return n.dot(&(p - a)).abs();
        }
    }
    point_segment_distance(p, a, b)
        .min(point_segment_distance(p, b, c))
        .min(point_segment_distance(p, c, a))
}

/// All triangles spanned by three of `points`: their union is the convex
/// hull of planar points.
pub fn triangles(points: &[Vec3]) -> Vec<[Vec3; 3]> {
    let n = points.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                out.push([points[i], points[j], points[k]]);
            }
        }
    }
    out
}

/// Pairs of points whose connecting segment has every other point on one
/// side: the hull edges of planar points with plane normal `normal`.
pub fn hull_edges(points: &[Vec3], normal: &Vec3) -> Vec<(Vec3, Vec3)> {
    let mut out = Vec::new();
    for i in 0..points.len() {
        for j in 0..points.len() {
            if i == j {
                continue;
            }
            let (a, b) = (points[i], points[j]);
            let side = |p: &Vec3| (b - a).cross(&(p - a)).dot(normal);
            if points
                .iter()
                .enumerate()
                .all(|(k, p)| k == i || k == j || side(p) > 1e-9)
            {
                out.push((a, b));
            }
        }
    }
    out
}

/// Outcome of one oracle comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Agree,
    Disagree,
    /// Inside the oracle's boundary band; not compared.
    Banded,
}

/// March `STEPS` interior points from `origin` to `marker` and test whether
/// any of them is within `TOL` of the palm (the filled hull of the six palm
/// markers). Rays passing within `TOL` of the palm boundary, or with an end
/// point within `TOL` of the palm, are banded.
pub fn palm_march_oracle(origin: &Vec3, marker: &Vec3, palm: &[Vec3; 6]) -> (bool, bool) {
    const STEPS: usize = 10_000;
    const TOL: f64 = 0.5;
    let tris = triangles(palm);
    let normal = tris
        .iter()
        .map(|[a, b, c]| (b - a).cross(&(c - a)))
        .max_by(|x, y| x.norm().total_cmp(&y.norm()))
        .unwrap()
        .normalize();
    let edges = hull_edges(palm, &normal);
    let region = |p: &Vec3| {
        tris.iter()
            .map(|[a, b, c]| point_triangle_distance(p, a, b, c))
            .fold(f64::INFINITY, f64::min)
    };
    let boundary = |p: &Vec3| {
        edges
            .iter()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    };
    let mut hit = false;
    let mut banded = region(origin) <= TOL || region(marker) <= TOL;
    for k in 1..STEPS {
        let p = origin + (marker - origin) * (k as f64 / STEPS as f64);
        if normal.dot(&(p - palm[0])).abs() > TOL {
            continue;
        }
        if region(&p) < TOL {
            hit = true;
        }
        if boundary(&p) <= TOL {
            banded = true;
        }
    }
    (hit, banded)
}

/// Condition 4 by sampling every phalanx of the other fingers at 0.1 mm
/// steps and refining the closest sample. Returns the verdict and whether
/// any quantity of the test lies within `band` of its threshold.
pub fn finger_sampling_oracle(
    origin: &Vec3,
    marker: &Vec3,
    frame: &MarkerFrame,
    owner: Finger,
    radius: f64,
    band: f64,
) -> (bool, bool) {
    let t_marker = (marker - origin).norm();
    let dir = (marker - origin) / t_marker;
    let to_ray = |p: &Vec3| {
        let v = p - origin;
        (v - dir * v.dot(&dir)).norm()
    };
    let mut occluded = false;
    let mut banded = false;
    for finger in Finger::ALL.into_iter().filter(|&f| f != owner) {
        let chain = frame.finger_chain(finger);
        for k in 1..4 {
            let (a, b) = (chain[k], chain[k + 1]);
            let len = (b - a).norm();
            let u = (b - a) / len;
            let at = |s: f64| a + u * s;
            let steps = (len / 0.1).ceil() as usize;
            let (mut best_s, mut best_d) = (0.0, f64::INFINITY);
            for i in 0..=steps {
                let s = (i as f64 * 0.1).min(len);
                let d = to_ray(&at(s));
                if d < best_d {
                    best_d = d;
                    best_s = s;
                }
            }
            let s = golden(best_s - 0.1, best_s + 0.1, |s| to_ray(&at(s)));
            let p2 = at(s);
            let d = to_ray(&p2);
            let range = (p2 - origin).norm();
            let ahead = (p2 - origin).dot(&dir);
            if (d - radius).abs() < band
                || s.abs() < band
                || (len - s).abs() < band
                || (range - t_marker).abs() < band
                || ahead.abs() < band
            {
                banded = true;
            }
            if d < radius && s > 0.0 && s < len && range < t_marker && ahead > 0.0 {
                occluded = true;
            }
        }
    }
    (occluded, banded)
}

/// Strict membership of a planar point in the hull of planar `vertices`
/// by enumerating the feasible supports of `Σλᵢvᵢ = p, λ ≥ 0, Σλ = 1`
/// (in the plane every feasible point has a support of three vertices).
/// Points within `band` of any vertex-pair segment are banded.
pub fn hull_feasibility_oracle(p: &Vec3, vertices: &[Vec3], normal: &Vec3, band: f64) -> (bool, bool) {
    let mut inside = false;
    for [a, b, c] in triangles(vertices) {
        let area = |x: &Vec3, y: &Vec3, z: &Vec3| (y - x).cross(&(z - x)).dot(normal);
        let total = area(&a, &b, &c);
        if total.abs() < 1e-9 {
            continue;
        }
        let l = [area(p, &b, &c) / total, area(&a, p, &c) / total, area(&a, &b, p) / total];
        if l.iter().all(|&x| x >= 0.0) {
            inside = true;
        }
    }
    let mut banded = false;
    for i in 0..vertices.len() {
        for j in i + 1..vertices.len() {
            if point_segment_distance(p, &vertices[i], &vertices[j]) <= band {
                banded = true;
            }
        }
    }
    (inside, banded)
}

/// Comparison of the analytic closest approach with [`brute_line_distance`].
pub fn segment_errors(analytic: &SegmentProximity, brute: (f64, Vec3)) -> (f64, f64) {
    ((analytic.distance - brute.0).abs(), (analytic.closest - brute.1).norm())
}
