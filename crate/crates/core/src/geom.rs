//! Small planar geometry toolkit: points, segments, polylines.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A point or vector in the plane. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    /// Unit vector at `deg` degrees from the positive x-axis.
    pub fn from_angle_deg(deg: f64) -> Self {
        let t = deg.to_radians();
        Vec2::new(t.cos(), t.sin())
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the planar cross product.
    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    /// Counter-clockwise rotation by 90 degrees.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotate(self, radians: f64) -> Vec2 {
        let (s, c) = radians.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    #[inline]
    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Symmetric 2x2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    #[inline]
    pub fn apply(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.xx * v.x + self.xy * v.y, self.xy * v.x + self.yy * v.y)
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn max_abs(&self) -> f64 {
        self.xx.abs().max(self.xy.abs()).max(self.yy.abs())
    }
}

/// Proper or endpoint intersection of segments `[a0, a1]` and `[b0, b1]`.
///
/// Parameters are half-open: `s, t` in `[0, 1)`, so chains of segments
/// sharing endpoints never report a crossing twice. Parallel segments
/// report nothing.
pub fn segment_intersection(a0: Vec2, a1: Vec2, b0: Vec2, b1: Vec2) -> Option<(f64, f64)> {
    let da = a1 - a0;
    let db = b1 - b0;
    let denom = da.cross(db);
    if denom == 0.0 {
        return None;
    }
    let w = b0 - a0;
    let s = w.cross(db) / denom;
    let t = w.cross(da) / denom;
    if (0.0..1.0).contains(&s) && (0.0..1.0).contains(&t) {
        Some((s, t))
    } else {
        None
    }
}

/// Distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    let len2 = d.norm_sq();
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    p.dist(a + d * t)
}

/// Signed shoelace area of a closed polyline (first vertex may or may not be repeated).
/// Even-odd test against a closed polygon (last vertex may repeat the first).
pub fn point_in_polygon(p: Vec2, vertices: &[Vec2]) -> bool {
    let n = vertices.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (vertices[i], vertices[(i + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

pub fn signed_area(vertices: &[Vec2]) -> f64 {
    if vertices.len() < 3 {
        return 0.0;
    }
    let n = vertices.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        acc += a.cross(b);
    }
    0.5 * acc
}

/// Convex hull by Andrew's monotone chain, counter-clockwise, no repeated endpoint.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vec2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vec2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                if (b - a).cross(p - a) <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Largest distance between any two of `points`.
pub fn diameter(points: &[Vec2]) -> f64 {
    let hull = convex_hull(points);
    let mut best = 0.0f64;
    for i in 0..hull.len() {
        for j in (i + 1)..hull.len() {
            best = best.max(hull[i].dist(hull[j]));
        }
    }
    best
}

/// Axis-aligned bounding box `(min, max)`.
pub fn bbox(points: &[Vec2]) -> (Vec2, Vec2) {
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

/// Whether a closed polyline (first == last) crosses itself.
///
/// Uniform-grid bucketing of segments; adjacent segments that merely share
/// a vertex are not reported.
pub fn closed_polyline_self_intersects(vertices: &[Vec2]) -> bool {
    let n = vertices.len().saturating_sub(1);
    if n < 4 {
        return false;
    }
    let (lo, hi) = bbox(vertices);
    let mut max_len = 0.0f64;
    for i in 0..n {
        max_len = max_len.max(vertices[i].dist(vertices[i + 1]));
    }
    let cell = max_len.max(1e-12) * 2.0;
    let nx = (((hi.x - lo.x) / cell) as usize + 1).min(4096);
    let ny = (((hi.y - lo.y) / cell) as usize + 1).min(4096);
    let mut buckets: std::collections::HashMap<(usize, usize), Vec<usize>> = Default::default();
    let key = |p: Vec2| -> (usize, usize) {
        (
            (((p.x - lo.x) / cell) as usize).min(nx - 1),
            (((p.y - lo.y) / cell) as usize).min(ny - 1),
        )
    };
    for i in 0..n {
        let (a, b) = (key(vertices[i]), key(vertices[i + 1]));
        for bx in a.0.min(b.0)..=a.0.max(b.0) {
            for by in a.1.min(b.1)..=a.1.max(b.1) {
                buckets.entry((bx, by)).or_default().push(i);
            }
        }
    }
    for segs in buckets.values() {
        for (ii, &i) in segs.iter().enumerate() {
            for &j in &segs[ii + 1..] {
                let d = i.abs_diff(j);
                if d <= 1 || d == n - 1 {
                    continue;
                }
                if segment_intersection(vertices[i], vertices[i + 1], vertices[j], vertices[j + 1])
                    .is_some()
                {
                    return true;
                }
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_area_and_hull() {
        let sq = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(0.0, 0.0),
        ];
        assert!((signed_area(&sq) - 1.0).abs() < 1e-15);
        assert_eq!(convex_hull(&sq).len(), 4);
        assert!((diameter(&sq) - 2f64.sqrt()).abs() < 1e-15);
        assert!(!closed_polyline_self_intersects(&sq));
    }

    #[test]
    fn bowtie_self_intersects() {
        let bow = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(0.0, 0.0),
        ];
        assert!(closed_polyline_self_intersects(&bow));
    }

    #[test]
    fn half_open_intersection_counts_shared_vertex_once() {
        let a0 = Vec2::new(-1.0, 0.0);
        let a1 = Vec2::new(0.0, 0.0);
        let a2 = Vec2::new(1.0, 0.0);
        let b0 = Vec2::new(0.0, -1.0);
        let b1 = Vec2::new(0.0, 1.0);
        let hits = [segment_intersection(a0, a1, b0, b1), segment_intersection(a1, a2, b0, b1)];
        assert_eq!(hits.iter().filter(|h| h.is_some()).count(), 1);
    }
}
