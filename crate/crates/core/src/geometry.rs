//! Analytic primitives for the visibility engine.

use nalgebra::{DMatrix, Vector2};

use crate::{Error, Result, Vec3};

/// Tolerance on `|n·d|` below which a ray counts as parallel to a plane.
pub const PARALLEL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit direction.
    pub direction: Vec3,
}

impl Ray {
    /// Normalizes `direction`; fails on a zero vector.
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self> {
        let n = direction.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::degenerate("ray direction has zero length"));
        }
        Ok(Self {
            origin,
            direction: direction / n,
        })
    }

    /// Ray from `origin` towards `target` and the ray parameter of `target`.
    pub fn towards(origin: Vec3, target: Vec3) -> Result<(Self, f64)> {
        let d = target - origin;
        let len = d.norm();
        if !(len > 0.0) {
            return Err(Error::degenerate("ray target coincides with its origin"));
        }
        Ok((
            Self {
                origin,
                direction: d / len,
            },
            len,
        ))
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Plane through `point` with unit `normal`; `u`, `v` span the plane so that
/// `(u, v, normal)` is right-handed and orthonormal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub point: Vec3,
    pub u: Vec3,
    pub v: Vec3,
}

impl Plane {
    pub fn new(point: Vec3, normal: Vec3) -> Result<Self> {
        let n = normal.norm();
        if !(n > 0.0) {
            return Err(Error::degenerate("plane normal has zero length"));
        }
        let normal = normal / n;
        let helper = if normal.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let u = helper.cross(&normal).normalize();
        let v = normal.cross(&u);
        Ok(Self {
            normal,
            point,
            u,
            v,
        })
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(&(p - self.point))
    }

    /// In-plane coordinates of `p` (its orthogonal projection).
    pub fn project(&self, p: &Vec3) -> Vector2<f64> {
        let d = p - self.point;
        Vector2::new(self.u.dot(&d), self.v.dot(&d))
    }
}

/// Least-squares plane through `points`: the normal is the right singular
/// vector of the centred point matrix with the smallest singular value; the
/// two others span the plane.
pub fn regression_plane(points: &[Vec3]) -> Result<Plane> {
    if points.len() < 3 {
        return Err(Error::degenerate(format!(
            "regression plane needs at least 3 points, got {}",
            points.len()
        )));
    }
    let centroid = points.iter().sum::<Vec3>() / points.len() as f64;
    let centered = DMatrix::from_fn(points.len(), 3, |r, c| points[r][c] - centroid[c]);
    let svd = centered.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::degenerate("SVD did not converge"))?;
    let mut order = [0usize, 1, 2];
    let s = &svd.singular_values;
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let (s1, s2) = (s[order[0]], s[order[1]]);
    if !(s1 > 0.0) || s2 <= 1e-9 * s1 {
        return Err(Error::degenerate("points are collinear or coincident"));
    }
    let row = |i: usize| Vec3::new(v_t[(i, 0)], v_t[(i, 1)], v_t[(i, 2)]);
    let u = row(order[0]).normalize();
    let normal = row(order[2]).normalize();
    let v = normal.cross(&u);
    Ok(Plane {
        normal,
        point: centroid,
        u,
        v,
    })
}

/// Intersection of `ray`'s supporting line with `plane`: the point and its
/// ray parameter `t` (negative behind the origin). `None` when parallel.
pub fn ray_plane_intersection(ray: &Ray, plane: &Plane) -> Option<(Vec3, f64)> {
    let denom = plane.normal.dot(&ray.direction);
    if denom.abs() < PARALLEL_EPS {
        return None;
    }
    let t = plane.normal.dot(&(plane.point - ray.origin)) / denom;
    Some((ray.at(t), t))
}

/// Convex polygon in a plane's 2D coordinates, counter-clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Vector2<f64>>,
}

fn cross2(o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

impl ConvexPolygon {
    /// Convex hull (monotone chain) of the projections of `points` onto `plane`.
    pub fn hull_on_plane(points: &[Vec3], plane: &Plane) -> Self {
        let projected: Vec<_> = points.iter().map(|p| plane.project(p)).collect();
        Self::hull(projected)
    }

    pub fn hull(mut pts: Vec<Vector2<f64>>) -> Self {
        pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        pts.dedup();
        if pts.len() < 3 {
            return Self { vertices: pts };
        }
        let mut lower: Vec<Vector2<f64>> = Vec::with_capacity(pts.len());
        for p in &pts {
            while lower.len() >= 2 && cross2(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
                lower.pop();
            }
            lower.push(*p);
        }
        let mut upper: Vec<Vector2<f64>> = Vec::with_capacity(pts.len());
        for p in pts.iter().rev() {
            while upper.len() >= 2 && cross2(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
                upper.pop();
            }
            upper.push(*p);
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        Self { vertices: lower }
    }

    pub fn vertices(&self) -> &[Vector2<f64>] {
        &self.vertices
    }

    /// Strict interior test: points on an edge are outside.
    pub fn contains_strict(&self, p: &Vector2<f64>) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        (0..n).all(|i| cross2(&self.vertices[i], &self.vertices[(i + 1) % n], p) > 0.0)
    }
}

/// Whether `point` lies strictly inside the convex hull of `vertices`, all
/// projected onto `plane`.
pub fn point_in_convex_hull(point: &Vec3, vertices: &[Vec3], plane: &Plane) -> bool {
    ConvexPolygon::hull_on_plane(vertices, plane).contains_strict(&plane.project(point))
}

/// Closest approach between a ray's supporting line and a segment's line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentProximity {
    /// Shortest distance between the two lines.
    pub distance: f64,
    /// Closest point on the segment line.
    pub closest: Vec3,
    /// Whether `closest` lies strictly between the segment end points.
    pub within_segment: bool,
    /// Distance from the ray origin to `closest`.
    pub range: f64,
}

/// Shortest distance between the line through `ray` and the line through
/// `seg_a → seg_b`, with the closest point on the segment line.
///
/// Parallel lines have no unique closest point: the point-to-line distance of
/// `seg_a` is returned with `closest = seg_a`, and `within_segment` reports
/// whether `seg_a` projects in front of the ray origin.
pub fn ray_segment_distance(ray: &Ray, seg_a: &Vec3, seg_b: &Vec3) -> Result<SegmentProximity> {
    let axis = seg_b - seg_a;
    let len = axis.norm();
    if !(len > 0.0) {
        return Err(Error::degenerate("zero-length segment"));
    }
    Ok(segment_proximity(ray, seg_a, &(axis / len), len))
}

/// [`ray_segment_distance`] with a precomputed unit axis and length.
pub(crate) fn segment_proximity(ray: &Ray, seg_a: &Vec3, axis: &Vec3, len: f64) -> SegmentProximity {
    let r = &ray.direction;
    let c = axis.cross(r);
    let cc = c.dot(&c);
    let to_origin = ray.origin - seg_a;
    if cc < PARALLEL_EPS * PARALLEL_EPS {
        let along = -to_origin.dot(r);
        let distance = (to_origin + r * along).norm();
        return SegmentProximity {
            distance,
            closest: *seg_a,
            within_segment: along > 0.0,
            range: to_origin.norm(),
        };
    }
    let distance = c.dot(&(seg_a - ray.origin)).abs() / cc.sqrt();
    let s = r.cross(&c).dot(&to_origin) / cc;
    let closest = seg_a + axis * s;
    SegmentProximity {
        distance,
        closest,
        within_segment: s > 0.0 && s < len,
        range: (closest - ray.origin).norm(),
    }
}
