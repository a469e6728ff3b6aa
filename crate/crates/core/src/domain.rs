//! Polygonal domains, boundary parametrization and piecewise-constant
//! conductivity phantoms.
//!
//! A [`Phantom`] is the background conductivity 1 on a [`PolygonDomain`] with
//! a list of disjoint [`Inclusion`]s at levels `kappa`. Construction enforces
//! that every inclusion keeps a positive distance from the outer boundary, so
//! the conductivity is homogeneous near the boundary.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, pt, Point};

/// Tolerance for on-edge membership tests.
pub const ON_EDGE_TOL: f64 = 1e-12;

/// Default minimum clearance and separation, as a fraction of the domain diameter.
pub const DEFAULT_CLEARANCE_FRACTION: f64 = 0.05;

/// Simple, counter-clockwise polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonDomain {
    vertices: Vec<Point>,
    /// cumulative arc length at each vertex; `cumulative[0] == 0`
    cumulative: Vec<f64>,
    perimeter: f64,
    interior_angles: Vec<f64>,
    area: f64,
    diameter: f64,
}

/// A point on the polygon boundary together with its arc-length coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub arc_length: f64,
    pub point: Point,
}

impl PolygonDomain {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::Geometry(format!("polygon needs at least 3 vertices, got {n}")));
        }
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(Error::Geometry("non-finite vertex coordinate".into()));
        }
        for i in 0..n {
            if (vertices[(i + 1) % n] - vertices[i]).norm() == 0.0 {
                return Err(Error::Geometry(format!("repeated vertex at index {i}")));
            }
        }
        let area = geometry::signed_area(&vertices);
        if area <= 0.0 {
            return Err(Error::Geometry("polygon must be counter-clockwise with positive area".into()));
        }
        if !geometry::is_simple(&vertices) {
            return Err(Error::Geometry("polygon is not simple".into()));
        }
        let mut interior_angles = Vec::with_capacity(n);
        for i in 0..n {
            let prev = vertices[(i + n - 1) % n];
            let cur = vertices[i];
            let next = vertices[(i + 1) % n];
            let u = prev - cur;
            let v = next - cur;
            let c = geometry::cross(v, u);
            if c.abs() <= 1e-12 * u.norm() * v.norm() {
                if u.dot(&v) < 0.0 {
                    return Err(Error::Geometry(format!("three consecutive collinear vertices at index {i}")));
                }
                return Err(Error::Geometry(format!("cusp at vertex {i}")));
            }
            // angle swept CCW from the outgoing edge to the incoming edge
            let mut ang = c.atan2(v.dot(&u));
            if ang < 0.0 {
                ang += 2.0 * PI;
            }
            interior_angles.push(ang);
        }
        let mut cumulative = Vec::with_capacity(n + 1);
        let mut s = 0.0;
        cumulative.push(0.0);
        for i in 0..n {
            s += (vertices[(i + 1) % n] - vertices[i]).norm();
            cumulative.push(s);
        }
        let perimeter = s;
        cumulative.pop();
        let diameter = geometry::diameter(&vertices);
        Ok(Self { vertices, cumulative, perimeter, interior_angles, area, diameter })
    }

    /// Regular polygon inscribed in the circle of given radius, vertex 0 at angle `phase`.
    pub fn regular(n: usize, radius: f64, phase: f64) -> Result<Self> {
        let verts = (0..n)
            .map(|k| {
                let t = phase + 2.0 * PI * k as f64 / n as f64;
                pt(radius * t.cos(), radius * t.sin())
            })
            .collect();
        Self::new(verts)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }
    pub fn len(&self) -> usize {
        self.vertices.len()
    }
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }
    pub fn area(&self) -> f64 {
        self.area
    }
    pub fn diameter(&self) -> f64 {
        self.diameter
    }
    /// Interior angle at each vertex, in (0, 2π).
    pub fn interior_angles(&self) -> &[f64] {
        &self.interior_angles
    }
    pub fn centroid(&self) -> Point {
        geometry::polygon_centroid(&self.vertices)
    }
    pub fn edge(&self, k: usize) -> (Point, Point) {
        let n = self.vertices.len();
        (self.vertices[k % n], self.vertices[(k + 1) % n])
    }
    pub fn edge_length(&self, k: usize) -> f64 {
        let (a, b) = self.edge(k);
        (b - a).norm()
    }
    /// Arc length at which vertex k sits.
    pub fn vertex_arc_length(&self, k: usize) -> f64 {
        self.cumulative[k]
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    /// Point at arc length `s` (taken modulo the perimeter) measured CCW from vertex 0.
    pub fn boundary_point_at(&self, s: f64) -> BoundaryPoint {
        let mut s = s.rem_euclid(self.perimeter);
        if s >= self.perimeter {
            s = 0.0;
        }
        let k = match self.cumulative.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(k) => k,
            Err(k) => k - 1,
        };
        let (a, b) = self.edge(k);
        let t = (s - self.cumulative[k]) / self.edge_length(k);
        BoundaryPoint { arc_length: s, point: a + (b - a) * t }
    }

    /// Closest boundary point to `p`, with its arc-length coordinate.
    pub fn closest_boundary_point(&self, p: Point) -> BoundaryPoint {
        let mut best = (f64::INFINITY, 0, 0.0, p);
        for k in 0..self.len() {
            let (a, b) = self.edge(k);
            let (q, t) = geometry::project_to_segment(p, a, b);
            let d = (p - q).norm();
            if d < best.0 {
                best = (d, k, t, q);
            }
        }
        let (_, k, t, q) = best;
        let mut s = self.cumulative[k] + t * self.edge_length(k);
        if s >= self.perimeter {
            s -= self.perimeter;
        }
        BoundaryPoint { arc_length: s, point: q }
    }

    /// Index of the edge containing arc length `s`.
    pub fn edge_at(&self, s: f64) -> usize {
        let s = s.rem_euclid(self.perimeter);
        match self.cumulative.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(k) => k,
            Err(k) => k - 1,
        }
    }

    pub fn boundary_distance(&self, p: Point) -> f64 {
        geometry::polygon_boundary_distance(&self.vertices, p)
    }

    /// Closed-domain membership; on-edge points (within [`ON_EDGE_TOL`]) count as inside.
    pub fn contains(&self, p: Point) -> bool {
        geometry::polygon_contains(&self.vertices, p, ON_EDGE_TOL * self.diameter.max(1.0))
    }

    /// Strict interior membership with a distance margin.
    pub fn contains_interior(&self, p: Point, margin: f64) -> bool {
        geometry::winding_number(&self.vertices, p) != 0 && self.boundary_distance(p) > margin
    }

    /// Parse the plain-text polygon format: one `x y` pair per line, `#` comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut verts = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(y)), None) => verts.push(pt(x, y)),
                _ => {
                    return Err(Error::parse(
                        format!("polygon line {}", lineno + 1),
                        format!("expected `x y`, got `{line}`"),
                    ))
                }
            }
        }
        Self::new(verts)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# x y (counter-clockwise)\n");
        for v in &self.vertices {
            s.push_str(&format!("{} {}\n", v.x, v.y));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Disk { center: Point, radius: f64 },
    /// Simple polygon, stored counter-clockwise.
    Polygon(Vec<Point>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inclusion {
    pub shape: Shape,
    pub kappa: f64,
}

impl Inclusion {
    pub fn disk(center: Point, radius: f64, kappa: f64) -> Self {
        Self { shape: Shape::Disk { center, radius }, kappa }
    }

    pub fn polygon(mut vertices: Vec<Point>, kappa: f64) -> Self {
        if geometry::signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        Self { shape: Shape::Polygon(vertices), kappa }
    }

    /// Axis-aligned rectangle inclusion.
    pub fn rectangle(lo: Point, hi: Point, kappa: f64) -> Self {
        Self::polygon(vec![lo, pt(hi.x, lo.y), hi, pt(lo.x, hi.y)], kappa)
    }

    /// Closed membership; boundary ties resolve to the inclusion.
    pub fn contains(&self, p: Point) -> bool {
        match &self.shape {
            Shape::Disk { center, radius } => (p - center).norm() <= radius + ON_EDGE_TOL,
            Shape::Polygon(v) => geometry::polygon_contains(v, p, ON_EDGE_TOL),
        }
    }

    pub fn centroid(&self) -> Point {
        match &self.shape {
            Shape::Disk { center, .. } => *center,
            Shape::Polygon(v) => geometry::polygon_centroid(v),
        }
    }

    pub fn area(&self) -> f64 {
        match &self.shape {
            Shape::Disk { radius, .. } => PI * radius * radius,
            Shape::Polygon(v) => geometry::signed_area(v),
        }
    }

    /// Distance between the inclusion boundary and a closed polygonal curve.
    fn distance_to_polygon(&self, poly: &[Point]) -> f64 {
        match &self.shape {
            Shape::Disk { center, radius } => {
                (geometry::polygon_boundary_distance(poly, *center) - radius).max(0.0)
            }
            Shape::Polygon(v) => geometry::polygon_polygon_distance(v, poly),
        }
    }

    /// Boundary of the inclusion as a CCW polygon. Disks are inscribed with
    /// `segments` vertices.
    pub fn boundary_polygon(&self, segments: usize) -> Vec<Point> {
        match &self.shape {
            Shape::Disk { center, radius } => (0..segments)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / segments as f64;
                    pt(center.x + radius * t.cos(), center.y + radius * t.sin())
                })
                .collect(),
            Shape::Polygon(v) => v.clone(),
        }
    }

    fn distance_to(&self, other: &Inclusion) -> f64 {
        match (&self.shape, &other.shape) {
            (Shape::Disk { center: c1, radius: r1 }, Shape::Disk { center: c2, radius: r2 }) => {
                ((c1 - c2).norm() - r1 - r2).max(0.0)
            }
            (_, Shape::Polygon(v)) => {
                if v.iter().any(|p| self.contains(*p)) || geometry::winding_number(v, self.centroid()) != 0 {
                    return 0.0;
                }
                self.distance_to_polygon(v)
            }
            (Shape::Polygon(_), Shape::Disk { .. }) => other.distance_to(self),
        }
    }
}

/// Options controlling phantom admissibility checks.
#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(Default)]
pub struct PhantomOptions {
    /// Minimum distance between an inclusion and the outer boundary, and between
    /// two inclusions. `None` means [`DEFAULT_CLEARANCE_FRACTION`] × diameter.
    pub min_clearance: Option<f64>,
}


#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    domain: PolygonDomain,
    inclusions: Vec<Inclusion>,
}

impl Phantom {
    pub fn new(domain: PolygonDomain, inclusions: Vec<Inclusion>) -> Result<Self> {
        Self::with_options(domain, inclusions, PhantomOptions::default())
    }

    pub fn homogeneous(domain: PolygonDomain) -> Self {
        Self { domain, inclusions: Vec::new() }
    }

    pub fn with_options(domain: PolygonDomain, inclusions: Vec<Inclusion>, opts: PhantomOptions) -> Result<Self> {
        let min_gap = opts.min_clearance.unwrap_or(DEFAULT_CLEARANCE_FRACTION * domain.diameter());
        for (i, inc) in inclusions.iter().enumerate() {
            if !(inc.kappa > 0.0 && inc.kappa.is_finite()) {
                return Err(Error::Admissibility(format!("inclusion {i}: kappa must be positive and finite")));
            }
            match &inc.shape {
                Shape::Disk { radius, .. } if !(*radius > 0.0) => {
                    return Err(Error::Geometry(format!("inclusion {i}: radius must be positive")))
                }
                Shape::Polygon(v)
                    if (v.len() < 3 || !geometry::is_simple(v)) => {
                        return Err(Error::Geometry(format!("inclusion {i}: polygon must be simple")));
                    }
                _ => {}
            }
            if !domain.contains_interior(inc.centroid(), 0.0) {
                return Err(Error::Admissibility(format!("inclusion {i} lies outside the domain")));
            }
        }
        let phantom = Self { domain, inclusions };
        let c = phantom.clearance()?;
        if c <= min_gap {
            return Err(Error::Admissibility(format!(
                "clearance {c:.4e} does not exceed the required minimum {min_gap:.4e}"
            )));
        }
        for i in 0..phantom.inclusions.len() {
            for j in (i + 1)..phantom.inclusions.len() {
                let d = phantom.inclusions[i].distance_to(&phantom.inclusions[j]);
                if d <= min_gap {
                    return Err(Error::Admissibility(format!(
                        "inclusions {i} and {j} are separated by {d:.4e}, required more than {min_gap:.4e}"
                    )));
                }
            }
        }
        Ok(phantom)
    }

    pub fn domain(&self) -> &PolygonDomain {
        &self.domain
    }
    pub fn inclusions(&self) -> &[Inclusion] {
        &self.inclusions
    }

    /// Minimum distance from any inclusion to the outer boundary; `+∞` when there
    /// are no inclusions.
    pub fn clearance(&self) -> Result<f64> {
        let mut best = f64::INFINITY;
        for (i, inc) in self.inclusions.iter().enumerate() {
            let d = inc.distance_to_polygon(self.domain.vertices());
            if let Shape::Polygon(v) = &inc.shape {
                if v.iter().any(|p| !self.domain.contains_interior(*p, 0.0)) {
                    return Err(Error::Admissibility(format!("inclusion {i} reaches the boundary")));
                }
            }
            if d <= 0.0 {
                return Err(Error::Admissibility(format!("inclusion {i} touches the boundary")));
            }
            best = best.min(d);
        }
        Ok(best)
    }

    /// Conductivity at a point of the closed domain.
    pub fn evaluate_sigma(&self, p: Point) -> Result<f64> {
        if !self.domain.contains(p) {
            return Err(Error::OutsideDomain { x: p.x, y: p.y });
        }
        Ok(self.sigma_unchecked(p))
    }

    /// Conductivity without the domain-membership check.
    pub fn sigma_unchecked(&self, p: Point) -> f64 {
        self.inclusions.iter().find(|inc| inc.contains(p)).map_or(1.0, |inc| inc.kappa)
    }

    /// Index of the inclusion containing `p`, if any.
    pub fn inclusion_at(&self, p: Point) -> Option<usize> {
        self.inclusions.iter().position(|inc| inc.contains(p))
    }

    /// Same inclusions on a different outer domain (used for geometry perturbation).
    pub fn with_domain(&self, domain: PolygonDomain, opts: PhantomOptions) -> Result<Self> {
        Self::with_options(domain, self.inclusions.clone(), opts)
    }

    pub fn to_file(&self) -> PhantomFile {
        PhantomFile {
            vertices: self.domain.vertices().iter().map(|p| [p.x, p.y]).collect(),
            inclusions: self
                .inclusions
                .iter()
                .map(|inc| match &inc.shape {
                    Shape::Disk { center, radius } => InclusionSpec::Disk {
                        center: [center.x, center.y],
                        radius: *radius,
                        kappa: inc.kappa,
                    },
                    Shape::Polygon(v) => InclusionSpec::Polygon {
                        vertices: v.iter().map(|p| [p.x, p.y]).collect(),
                        kappa: inc.kappa,
                    },
                })
                .collect(),
        }
    }
}

/// On-disk phantom description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomFile {
    pub vertices: Vec<[f64; 2]>,
    #[serde(default)]
    pub inclusions: Vec<InclusionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum InclusionSpec {
    Disk { center: [f64; 2], radius: f64, kappa: f64 },
    Polygon { vertices: Vec<[f64; 2]>, kappa: f64 },
}

impl PhantomFile {
    pub fn build(&self, opts: PhantomOptions) -> Result<Phantom> {
        let domain = PolygonDomain::new(self.vertices.iter().map(|v| pt(v[0], v[1])).collect())?;
        let inclusions = self
            .inclusions
            .iter()
            .map(|spec| match spec {
                InclusionSpec::Disk { center, radius, kappa } => {
                    Inclusion::disk(pt(center[0], center[1]), *radius, *kappa)
                }
                InclusionSpec::Polygon { vertices, kappa } => {
                    Inclusion::polygon(vertices.iter().map(|v| pt(v[0], v[1])).collect(), *kappa)
                }
            })
            .collect();
        Phantom::with_options(domain, inclusions, opts)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("phantom file", e.to_string()))
    }
}
