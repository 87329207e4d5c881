//! Planar geometry: points, polylines and oriented rectangles.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(radians: f64) -> Self {
        Vec2::new(radians.cos(), radians.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n == 0.0 {
            self
        } else {
            self * (1.0 / n)
        }
    }

    /// Left-hand normal (counterclockwise rotation by 90°).
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl std::ops::Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle in degrees into (-180, 180].
pub fn wrap_degrees(deg: f64) -> f64 {
    let mut d = deg % 360.0;
    if d <= -180.0 {
        d += 360.0;
    } else if d > 180.0 {
        d -= 360.0;
    }
    d
}

pub fn polyline_length(points: &[Vec2]) -> f64 {
    points.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Offsets a polyline sideways; positive `offset` moves it to the left.
pub fn offset_polyline(points: &[Vec2], offset: f64) -> Vec<Vec2> {
    if points.len() < 2 || offset == 0.0 {
        return points.to_vec();
    }
    let seg_normal = |i: usize| (points[i + 1] - points[i]).normalized().perp();
    let last = points.len() - 1;
    (0..points.len())
        .map(|i| {
            let n = if i == 0 {
                seg_normal(0)
            } else if i == last {
                seg_normal(last - 1)
            } else {
                let avg = seg_normal(i - 1) + seg_normal(i);
                let avg = avg.normalized();
                // Miter scaling keeps the offset distance on both adjoining segments.
                let cos_half = avg.dot(seg_normal(i)).max(0.5);
                avg * (1.0 / cos_half)
            };
            points[i] + n * offset
        })
        .collect()
}

/// Arc-length parameterised view over a polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Vec2>,
    cumulative: Vec<f64>,
}

impl Polyline {
    pub fn new(points: Vec<Vec2>) -> Self {
        let mut cumulative = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        for (i, p) in points.iter().enumerate() {
            if i > 0 {
                acc += points[i - 1].distance(*p);
            }
            cumulative.push(acc);
        }
        Polyline { points, cumulative }
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    fn segment_at(&self, s: f64) -> usize {
        if self.points.len() < 2 {
            return 0;
        }
        let idx = self.cumulative.partition_point(|&c| c <= s);
        idx.saturating_sub(1).min(self.points.len() - 2)
    }

    /// Point and tangent direction (radians) at arc length `s`, clamped to the ends.
    pub fn pose_at(&self, s: f64) -> (Vec2, f64) {
        match self.points.len() {
            0 => (Vec2::default(), 0.0),
            1 => (self.points[0], 0.0),
            _ => {
                let s = s.clamp(0.0, self.length());
                let i = self.segment_at(s);
                let a = self.points[i];
                let b = self.points[i + 1];
                let seg_len = a.distance(b);
                let t = if seg_len > 0.0 { (s - self.cumulative[i]) / seg_len } else { 0.0 };
                (a + (b - a) * t, (b - a).angle())
            }
        }
    }

    /// Position at arc length `s` shifted `lateral` meters to the left.
    pub fn point_at(&self, s: f64, lateral: f64) -> Vec2 {
        let (p, heading) = self.pose_at(s);
        p + Vec2::from_angle(heading).perp() * lateral
    }

    /// Projects a point onto the polyline, returning (arc length, signed
    /// lateral offset with left positive).
    pub fn project(&self, p: Vec2) -> (f64, f64) {
        if self.points.len() < 2 {
            let d = self.points.first().map_or(0.0, |q| q.distance(p));
            return (0.0, d);
        }
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..self.points.len() - 1 {
            let a = self.points[i];
            let b = self.points[i + 1];
            let ab = b - a;
            let len2 = ab.dot(ab);
            let t = if len2 > 0.0 { ((p - a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
            let q = a + ab * t;
            let d = q.distance(p);
            if d < best.0 {
                let side = ab.cross(p - a).signum();
                best = (d, self.cumulative[i] + t * len2.sqrt(), side * d);
            }
        }
        (best.1, best.2)
    }
}

/// Rectangle with arbitrary orientation. `heading` is in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub center: Vec2,
    pub length: f64,
    pub width: f64,
    pub heading: f64,
}

impl OrientedRect {
    pub fn new(center: Vec2, length: f64, width: f64, heading: f64) -> Self {
        OrientedRect { center, length, width, heading }
    }

    pub fn axes(&self) -> [Vec2; 2] {
        let fwd = Vec2::from_angle(self.heading);
        [fwd, fwd.perp()]
    }

    /// Corners in counterclockwise order.
    pub fn corners(&self) -> [Vec2; 4] {
        let [fwd, left] = self.axes();
        let hl = fwd * (self.length / 2.0);
        let hw = left * (self.width / 2.0);
        let c = self.center;
        [c + hl - hw, c + hl + hw, c - hl + hw, c - hl - hw]
    }

    fn project_onto(&self, axis: Vec2) -> (f64, f64) {
        let [fwd, left] = self.axes();
        let c = self.center.dot(axis);
        let r = (self.length / 2.0) * fwd.dot(axis).abs() + (self.width / 2.0) * left.dot(axis).abs();
        (c - r, c + r)
    }

    /// Separating-axis test over the four face normals. Returns the smallest
    /// overlap depth when the rectangles intersect with positive area.
    pub fn penetration(&self, other: &OrientedRect) -> Option<f64> {
        let mut depth = f64::INFINITY;
        for axis in self.axes().into_iter().chain(other.axes()) {
            let (a0, a1) = self.project_onto(axis);
            let (b0, b1) = other.project_onto(axis);
            let overlap = a1.min(b1) - a0.max(b0);
            if overlap <= 0.0 {
                return None;
            }
            depth = depth.min(overlap);
        }
        Some(depth)
    }

    pub fn overlaps(&self, other: &OrientedRect) -> bool {
        self.penetration(other).is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_degrees_range() {
        assert_eq!(wrap_degrees(180.0), 180.0);
        assert_eq!(wrap_degrees(-180.0), 180.0);
        assert_eq!(wrap_degrees(270.0), -90.0);
        assert_eq!(wrap_degrees(-450.0), -90.0);
        assert_eq!(wrap_degrees(0.0), 0.0);
    }

    #[test]
    fn polyline_pose_and_projection() {
        let line = Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0), Vec2::new(10.0, 10.0)]);
        assert_eq!(line.length(), 20.0);
        let (p, h) = line.pose_at(15.0);
        assert!((p.x - 10.0).abs() < 1e-12 && (p.y - 5.0).abs() < 1e-12);
        assert!((h - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let (s, lat) = line.project(Vec2::new(5.0, 2.0));
        assert!((s - 5.0).abs() < 1e-12 && (lat - 2.0).abs() < 1e-12);
        let (_, lat) = line.project(Vec2::new(5.0, -1.0));
        assert!((lat + 1.0).abs() < 1e-12);
    }

    #[test]
    fn offset_keeps_distance() {
        let pts = vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)];
        let off = offset_polyline(&pts, -3.2);
        assert_eq!(off[0], Vec2::new(0.0, -3.2));
        assert_eq!(off[1], Vec2::new(10.0, -3.2));
    }

    #[test]
    fn rect_overlap_basics() {
        let a = OrientedRect::new(Vec2::new(0.0, 0.0), 4.5, 1.8, 0.0);
        assert!(a.overlaps(&a));
        let b = OrientedRect::new(Vec2::new(10.0, 0.0), 4.5, 1.8, 0.0);
        assert!(!a.overlaps(&b));
        // touching edges have zero area overlap
        let c = OrientedRect::new(Vec2::new(4.5, 0.0), 4.5, 1.8, 0.0);
        assert!(!a.overlaps(&c));
        let d = OrientedRect::new(Vec2::new(4.0, 0.0), 4.5, 1.8, 0.0);
        assert!((a.penetration(&d).unwrap() - 0.5).abs() < 1e-12);
    }
}
