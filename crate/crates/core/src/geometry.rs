//! Small planar geometry helpers shared by the domain, mesh and map code.

use nalgebra::{Point2, Vector2};

pub type Point = Point2<f64>;
pub type Vector = Vector2<f64>;

#[inline]
pub fn pt(x: f64, y: f64) -> Point {
    Point::new(x, y)
}

#[inline]
pub fn cross(a: Vector, b: Vector) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Twice the signed area of triangle (a, b, c); positive when CCW.
#[inline]
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    cross(b - a, c - a)
}

/// Closest point on segment [a, b] to p, with its parameter in [0, 1].
pub fn project_to_segment(p: Point, a: Point, b: Point) -> (Point, f64) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (a, 0.0);
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (a + ab * t, t)
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    (p - project_to_segment(p, a, b).0).norm()
}

/// True if the closed segments [a, b] and [c, d] share a point.
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: Point, q: Point, r: Point, o: f64| {
        o == 0.0
            && r.x >= p.x.min(q.x)
            && r.x <= p.x.max(q.x)
            && r.y >= p.y.min(q.y)
            && r.y <= p.y.max(q.y)
    };
    on(c, d, a, d1) || on(c, d, b, d2) || on(a, b, c, d3) || on(a, b, d, d4)
}

pub fn segment_segment_distance(a: Point, b: Point, c: Point, d: Point) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

/// Signed area of a closed polygon (shoelace); positive when CCW.
pub fn signed_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s
}

/// Winding number of the closed polygon around p. Points on an edge (within
/// `tol`) are reported separately by the caller; this assumes p is off the edges.
pub fn winding_number(vertices: &[Point], p: Point) -> i32 {
    let n = vertices.len();
    let mut wn = 0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        if a.y <= p.y {
            if b.y > p.y && orient(a, b, p) > 0.0 {
                wn += 1;
            }
        } else if b.y <= p.y && orient(a, b, p) < 0.0 {
            wn -= 1;
        }
    }
    wn
}

/// Distance from p to the closed polyline boundary of a polygon.
pub fn polygon_boundary_distance(vertices: &[Point], p: Point) -> f64 {
    let n = vertices.len();
    (0..n)
        .map(|i| point_segment_distance(p, vertices[i], vertices[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

/// Point-in-polygon with an on-edge tolerance; on-edge resolves to inside.
pub fn polygon_contains(vertices: &[Point], p: Point, tol: f64) -> bool {
    if polygon_boundary_distance(vertices, p) <= tol {
        return true;
    }
    winding_number(vertices, p) != 0
}

/// Minimum distance between the boundaries of two closed polygons.
pub fn polygon_polygon_distance(a: &[Point], b: &[Point]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..a.len() {
        let (p, q) = (a[i], a[(i + 1) % a.len()]);
        for j in 0..b.len() {
            let (r, s) = (b[j], b[(j + 1) % b.len()]);
            best = best.min(segment_segment_distance(p, q, r, s));
        }
    }
    best
}

pub fn polygon_centroid(vertices: &[Point]) -> Point {
    let n = vertices.len();
    let mut cx = 0.0;
    let mut cy = 0.0;
    let mut a2 = 0.0;
    for i in 0..n {
        let p = vertices[i];
        let q = vertices[(i + 1) % n];
        let c = p.x * q.y - q.x * p.y;
        a2 += c;
        cx += (p.x + q.x) * c;
        cy += (p.y + q.y) * c;
    }
    pt(cx / (3.0 * a2), cy / (3.0 * a2))
}

pub fn diameter(vertices: &[Point]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, a) in vertices.iter().enumerate() {
        for b in &vertices[i + 1..] {
            d = d.max((a - b).norm());
        }
    }
    d
}

/// Whether a closed polygon is simple: non-adjacent edges never touch and
/// adjacent edges only share their common vertex.
pub fn is_simple(vertices: &[Point]) -> bool {
    let n = vertices.len();
    for i in 0..n {
        let (a, b) = (vertices[i], vertices[(i + 1) % n]);
        for j in (i + 1)..n {
            let (c, d) = (vertices[j], vertices[(j + 1) % n]);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // adjacent edges may only overlap when folding back on themselves
                let shared = if j == i + 1 { b } else { a };
                let other_i = if j == i + 1 { a } else { b };
                let other_j = if j == i + 1 { d } else { c };
                let u = other_i - shared;
                let v = other_j - shared;
                if cross(u, v).abs() <= 1e-14 * u.norm() * v.norm() && u.dot(&v) > 0.0 {
                    return false;
                }
            } else if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}
