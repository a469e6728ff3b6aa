//! Triangular meshes of phantoms: generation, validation, refinement and
//! Triangle-format file IO.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use spade::{AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation};

use crate::domain::{Inclusion, Phantom, PolygonDomain, Shape};
use crate::error::{Error, Result};
use crate::geometry::{self, pt, Point};

/// Default minimum interior angle, in degrees.
pub const DEFAULT_MIN_ANGLE: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    /// Node index triples, counter-clockwise.
    pub triangles: Vec<[usize; 3]>,
    /// Whether each node lies on the domain boundary.
    pub boundary: Vec<bool>,
    /// Per-triangle region: `None` for background, `Some(i)` for inclusion i.
    pub regions: Vec<Option<usize>>,
}

/// Numbering convention of Triangle-format files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IndexBase {
    Zero,
    #[default]
    One,
    /// Take the base from the first node index in the `.node` file.
    Auto,
}

/// Polygonization of an inclusion boundary used as mesh constraint: disks
/// are inscribed with chord error at most h²/8 and edges at most h.
pub fn inclusion_polygon(inclusion: &Inclusion, h: f64) -> Vec<Point> {
    match &inclusion.shape {
        Shape::Disk { radius, .. } => {
            let mut m = 8usize;
            while radius * (1.0 - (PI / m as f64).cos()) > h * h / 8.0 || 2.0 * radius * (PI / m as f64).sin() > h {
                m += 1;
            }
            inclusion.boundary_polygon(m)
        }
        Shape::Polygon(v) => v.clone(),
    }
}

fn triangle_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * geometry::orient(a, b, c)
}

fn min_angle_deg(a: Point, b: Point, c: Point) -> f64 {
    let ang = |p: Point, q: Point, r: Point| {
        let (u, v) = (q - p, r - p);
        (u.dot(&v) / (u.norm() * v.norm())).clamp(-1.0, 1.0).acos()
    };
    ang(a, b, c).min(ang(b, c, a)).min(ang(c, a, b)).to_degrees()
}

impl Mesh {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangle_points(t);
        pt((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0)
    }

    pub fn max_edge_length(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| (0..3).map(move |i| (t[i], t[(i + 1) % 3])))
            .map(|(a, b)| (self.nodes[a] - self.nodes[b]).norm())
            .fold(0.0, f64::max)
    }

    pub fn min_angle(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle_points(t);
                min_angle_deg(a, b, c)
            })
            .fold(180.0, f64::min)
    }

    /// Nodes of inclusion-labelled triangles, sorted.
    pub fn region_nodes(&self) -> Vec<usize> {
        let mut flag = vec![false; self.nodes.len()];
        for (t, r) in self.triangles.iter().zip(&self.regions) {
            if r.is_some() {
                for &i in t {
                    flag[i] = true;
                }
            }
        }
        (0..flag.len()).filter(|&i| flag[i]).collect()
    }

    /// Recompute boundary flags and region labels for `phantom`.
    pub fn relabel(&mut self, phantom: &Phantom) {
        let dom = phantom.domain();
        let tol = 1e-9 * dom.diameter();
        self.boundary = self.nodes.iter().map(|&p| dom.boundary_distance(p) <= tol).collect();
        self.regions = (0..self.triangles.len()).map(|t| phantom.inclusion_at(self.centroid(t))).collect();
    }

    /// Check positivity, conformity, boundary coverage and the minimum angle.
    pub fn validate(&self, domain: &PolygonDomain, min_angle: f64) -> Result<()> {
        if self.triangles.is_empty() {
            return Err(Error::Validation("mesh has no triangles".into()));
        }
        if self.boundary.len() != self.nodes.len() || self.regions.len() != self.triangles.len() {
            return Err(Error::Validation("mesh flag arrays have the wrong length".into()));
        }
        let scale = domain.diameter();
        let mut total = 0.0;
        let mut edges: HashMap<(usize, usize), u32> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= self.nodes.len()) {
                return Err(Error::Validation(format!("triangle {t} references a missing node")));
            }
            let [a, b, c] = self.triangle_points(t);
            let area = triangle_area(a, b, c);
            if !(area > 1e-14 * scale * scale) {
                return Err(Error::Validation(format!("triangle {t} has non-positive area {area:e}")));
            }
            total += area;
            let ma = min_angle_deg(a, b, c);
            if ma < min_angle {
                return Err(Error::Validation(format!("triangle {t} has minimum angle {ma:.2}°")));
            }
            for i in 0..3 {
                let (u, v) = (tri[i], tri[(i + 1) % 3]);
                *edges.entry((u.min(v), u.max(v))).or_default() += 1;
            }
        }
        for (&(u, v), &count) in &edges {
            match count {
                1 => {
                    let m = pt(0.5 * (self.nodes[u].x + self.nodes[v].x), 0.5 * (self.nodes[u].y + self.nodes[v].y));
                    if domain.boundary_distance(m) > 1e-9 * scale {
                        return Err(Error::Validation(format!("edge ({u}, {v}) is a hanging interior edge")));
                    }
                }
                2 => {}
                _ => return Err(Error::Validation(format!("edge ({u}, {v}) is shared by {count} triangles"))),
            }
        }
        if (total - domain.area()).abs() > 1e-9 * domain.area() {
            return Err(Error::Validation(format!(
                "triangles cover area {total}, domain has {}",
                domain.area()
            )));
        }
        Ok(())
    }

    /// Red refinement: every triangle is split into four through its edge midpoints.
    pub fn refine_uniform(&self) -> Mesh {
        let mut nodes = self.nodes.clone();
        let mut boundary = self.boundary.clone();
        let mut count: HashMap<(usize, usize), u32> = HashMap::new();
        for tri in &self.triangles {
            for i in 0..3 {
                let (u, v) = (tri[i], tri[(i + 1) % 3]);
                *count.entry((u.min(v), u.max(v))).or_default() += 1;
            }
        }
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |u: usize, v: usize, nodes: &mut Vec<Point>, boundary: &mut Vec<bool>| -> usize {
            let key = (u.min(v), u.max(v));
            *mid.entry(key).or_insert_with(|| {
                let (a, b) = (nodes[u], nodes[v]);
                nodes.push(pt(0.5 * (a.x + b.x), 0.5 * (a.y + b.y)));
                boundary.push(count[&key] == 1);
                nodes.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        let mut regions = Vec::with_capacity(4 * self.triangles.len());
        for (tri, &r) in self.triangles.iter().zip(&self.regions) {
            let [a, b, c] = *tri;
            let ab = midpoint(a, b, &mut nodes, &mut boundary);
            let bc = midpoint(b, c, &mut nodes, &mut boundary);
            let ca = midpoint(c, a, &mut nodes, &mut boundary);
            triangles.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
            regions.extend([r; 4]);
        }
        Mesh { nodes, triangles, boundary, regions }
    }

    pub fn to_triangle_format(&self) -> (String, String) {
        let mut node = String::new();
        writeln!(node, "{} 2 0 1", self.nodes.len()).unwrap();
        for (i, (p, &b)) in self.nodes.iter().zip(&self.boundary).enumerate() {
            writeln!(node, "{} {} {} {}", i + 1, p.x, p.y, u8::from(b)).unwrap();
        }
        let mut ele = String::new();
        writeln!(ele, "{} 3 0", self.triangles.len()).unwrap();
        for (i, t) in self.triangles.iter().enumerate() {
            writeln!(ele, "{} {} {} {}", i + 1, t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
        }
        (node, ele)
    }
}

type Cdt = ConstrainedDelaunayTriangulation<Point2<f64>>;

fn insert(cdt: &mut Cdt, p: Point) -> Result<spade::handles::FixedVertexHandle> {
    cdt.insert(Point2::new(p.x, p.y)).map_err(|e| Error::Mesh(format!("vertex insertion failed: {e:?}")))
}

/// Insert a closed polyline as constraint edges, each edge split into pieces no longer than `max_len`.
fn add_loop(cdt: &mut Cdt, poly: &[Point], max_len: f64) -> Result<()> {
    let n = poly.len();
    let mut handles = Vec::new();
    for k in 0..n {
        let (a, b) = (poly[k], poly[(k + 1) % n]);
        let m = ((b - a).norm() / max_len).ceil().max(1.0) as usize;
        for j in 0..m {
            let t = j as f64 / m as f64;
            handles.push(insert(cdt, a + (b - a) * t)?);
        }
    }
    for k in 0..handles.len() {
        let (u, v) = (handles[k], handles[(k + 1) % handles.len()]);
        if u != v && !cdt.can_add_constraint(u, v) {
            return Err(Error::Mesh("constraint edges intersect".into()));
        }
        cdt.add_constraint(u, v);
    }
    Ok(())
}

fn extract(cdt: &Cdt, phantom: &Phantom) -> Mesh {
    let dom = phantom.domain();
    let mut index: HashMap<usize, usize> = HashMap::new();
    let mut nodes = Vec::new();
    let mut triangles = Vec::new();
    let mut faces: Vec<[(usize, Point); 3]> = cdt
        .inner_faces()
        .map(|f| f.vertices().map(|v| (v.fix().index(), pt(v.position().x, v.position().y))))
        .filter(|vs| {
            let c = pt((vs[0].1.x + vs[1].1.x + vs[2].1.x) / 3.0, (vs[0].1.y + vs[1].1.y + vs[2].1.y) / 3.0);
            geometry::winding_number(dom.vertices(), c) != 0
        })
        .collect();
    faces.sort_by_key(|vs| [vs[0].0, vs[1].0, vs[2].0]);
    for mut vs in faces {
        if triangle_area(vs[0].1, vs[1].1, vs[2].1) < 0.0 {
            vs.swap(1, 2);
        }
        let tri = vs.map(|(id, p)| {
            *index.entry(id).or_insert_with(|| {
                nodes.push(p);
                nodes.len() - 1
            })
        });
        triangles.push(tri);
    }
    let mut mesh = Mesh { nodes, triangles, boundary: vec![], regions: vec![] };
    mesh.relabel(phantom);
    mesh
}

/// Conforming constrained-Delaunay mesh of the phantom with all inclusion
/// boundaries embedded, maximum edge length `h` and minimum angle 20°.
pub fn generate_mesh(phantom: &Phantom, h: f64) -> Result<Mesh> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::OutOfRange(format!("mesh size must be positive, got {h}")));
    }
    let dom = phantom.domain();
    if dom.diameter() / h > 5000.0 {
        return Err(Error::OutOfRange(format!("mesh size {h} is too small for this domain")));
    }
    let mut cdt = Cdt::new();
    // a padding frame keeps hull slivers along nearly straight boundary runs away from the domain
    let (lo, hi) = dom.bounding_box();
    let pad = 0.1 * dom.diameter() + 2.0 * h;
    let frame = [pt(lo.x - pad, lo.y - pad), pt(hi.x + pad, lo.y - pad), pt(hi.x + pad, hi.y + pad), pt(lo.x - pad, hi.y + pad)];
    add_loop(&mut cdt, &frame, 4.0 * h)?;
    add_loop(&mut cdt, dom.vertices(), 0.9 * h)?;
    let polys: Vec<Vec<Point>> = phantom.inclusions().iter().map(|inc| inclusion_polygon(inc, h)).collect();
    for poly in &polys {
        add_loop(&mut cdt, poly, 0.9 * h)?;
    }

    // triangular lattice seeding keeps the refinement from producing graded meshes
    let a = 0.85 * h;
    let dy = a * 3f64.sqrt() / 2.0;
    let mut j = 0;
    loop {
        let y = lo.y + dy * (j as f64 + 0.5);
        if y >= hi.y {
            break;
        }
        let mut x = lo.x + if j % 2 == 0 { 0.25 * a } else { 0.75 * a };
        while x < hi.x {
            let p = pt(x, y);
            if dom.contains_interior(p, 0.45 * h)
                && polys.iter().all(|poly| geometry::polygon_boundary_distance(poly, p) > 0.45 * h)
            {
                insert(&mut cdt, p)?;
            }
            x += a;
        }
        j += 1;
    }

    let params = || {
        RefinementParameters::<f64>::new()
            .with_angle_limit(AngleLimit::from_deg(25.0))
            .with_max_allowed_area(0.3 * h * h)
            .with_max_additional_vertices(2_000_000)
    };
    for round in 0..20 {
        let result = cdt.refine(params());
        if !result.refinement_complete {
            return Err(Error::Mesh("Delaunay refinement ran out of Steiner points".into()));
        }
        let mesh = extract(&cdt, phantom);
        let long: Vec<Point> = mesh
            .triangles
            .iter()
            .flat_map(|t| (0..3).map(move |i| (t[i], t[(i + 1) % 3])))
            .filter(|&(u, v)| (mesh.nodes[u] - mesh.nodes[v]).norm() > h)
            .map(|(u, v)| pt(0.5 * (mesh.nodes[u].x + mesh.nodes[v].x), 0.5 * (mesh.nodes[u].y + mesh.nodes[v].y)))
            .collect();
        if long.is_empty() {
            if mesh.min_angle() < DEFAULT_MIN_ANGLE {
                return Err(Error::Mesh(format!("minimum angle {:.2}° after refinement", mesh.min_angle())));
            }
            mesh.validate(dom, DEFAULT_MIN_ANGLE)?;
            log::debug!(
                "mesh: {} nodes, {} triangles after {} rounds",
                mesh.num_nodes(),
                mesh.num_triangles(),
                round + 1
            );
            return Ok(mesh);
        }
        for p in long {
            insert(&mut cdt, p)?;
        }
    }
    Err(Error::Mesh("edge-length refinement did not converge".into()))
}

fn parse_numbers(line: &str) -> Vec<&str> {
    let line = line.split('#').next().unwrap_or("");
    line.split_whitespace().collect()
}

fn content_lines(text: &str) -> impl Iterator<Item = Vec<&str>> {
    text.lines().map(parse_numbers).filter(|t| !t.is_empty())
}

/// Parse Triangle-format `.node` and `.ele` text, then validate against the
/// phantom and recompute boundary flags and region labels.
pub fn parse_mesh(node_text: &str, ele_text: &str, phantom: &Phantom, base: IndexBase) -> Result<Mesh> {
    let mut lines = content_lines(node_text);
    let header = lines.next().ok_or_else(|| Error::parse(".node", "empty file"))?;
    let count: usize = header[0].parse().map_err(|_| Error::parse(".node", "bad node count"))?;
    if header.get(1).is_some_and(|d| *d != "2") {
        return Err(Error::parse(".node", "only two-dimensional meshes are supported"));
    }
    let mut nodes = Vec::with_capacity(count);
    let mut first_index = None;
    for (row, tok) in lines.take(count).enumerate() {
        if tok.len() < 3 {
            return Err(Error::parse(".node", format!("row {} is too short", row + 1)));
        }
        let idx: usize = tok[0].parse().map_err(|_| Error::parse(".node", format!("bad index on row {}", row + 1)))?;
        first_index.get_or_insert(idx);
        let x: f64 = tok[1].parse().map_err(|_| Error::parse(".node", format!("bad x on row {}", row + 1)))?;
        let y: f64 = tok[2].parse().map_err(|_| Error::parse(".node", format!("bad y on row {}", row + 1)))?;
        nodes.push(pt(x, y));
    }
    if nodes.len() != count {
        return Err(Error::parse(".node", format!("expected {count} nodes, found {}", nodes.len())));
    }
    let offset = match base {
        IndexBase::Zero => 0,
        IndexBase::One => 1,
        IndexBase::Auto => first_index.unwrap_or(1).min(1),
    };

    let mut lines = content_lines(ele_text);
    let header = lines.next().ok_or_else(|| Error::parse(".ele", "empty file"))?;
    let tcount: usize = header[0].parse().map_err(|_| Error::parse(".ele", "bad triangle count"))?;
    if header.get(1).is_some_and(|d| *d != "3") {
        return Err(Error::parse(".ele", "only 3-node triangles are supported"));
    }
    let mut triangles = Vec::with_capacity(tcount);
    for (row, tok) in lines.take(tcount).enumerate() {
        if tok.len() < 4 {
            return Err(Error::parse(".ele", format!("row {} is too short", row + 1)));
        }
        let mut tri = [0usize; 3];
        for k in 0..3 {
            let v: usize = tok[k + 1].parse().map_err(|_| Error::parse(".ele", format!("bad node index on row {}", row + 1)))?;
            tri[k] = v
                .checked_sub(offset)
                .filter(|&i| i < count)
                .ok_or_else(|| Error::parse(".ele", format!("node index {v} out of range on row {}", row + 1)))?;
        }
        let [a, b, c] = tri.map(|i| nodes[i]);
        if triangle_area(a, b, c) < 0.0 {
            tri.swap(1, 2);
        }
        triangles.push(tri);
    }
    if triangles.len() != tcount {
        return Err(Error::parse(".ele", format!("expected {tcount} triangles, found {}", triangles.len())));
    }
    let mut mesh = Mesh { nodes, triangles, boundary: vec![], regions: vec![] };
    mesh.relabel(phantom);
    mesh.validate(phantom.domain(), DEFAULT_MIN_ANGLE)?;
    Ok(mesh)
}

pub fn load_mesh(node_file: &Path, ele_file: &Path, phantom: &Phantom, base: IndexBase) -> Result<Mesh> {
    let node = std::fs::read_to_string(node_file).map_err(|e| Error::io(node_file, e))?;
    let ele = std::fs::read_to_string(ele_file).map_err(|e| Error::io(ele_file, e))?;
    parse_mesh(&node, &ele, phantom, base)
}
