//! Numerical Schwarz–Christoffel maps from the unit disk onto polygons.
//!
//! The disk map is
//!
//! ```text
//! f(w) = z_c + C ∫_0^w Π_k (1 − w'/w_k)^{β_k} dw',   β_k = α_k − 1,
//! ```
//!
//! where α_k π is the interior angle at vertex k and w_k are the prevertices.
//! `f` plays the role of Φ⁻¹; the forward map Φ = f⁻¹ is evaluated by an ODE
//! continuation followed by Newton's method.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{BoundaryPoint, PolygonDomain};
use crate::error::{Error, Result};
use crate::geometry::{self, pt, Point};
use crate::quadrature::GaussJacobi;

/// Quadrature nodes per subinterval.
pub const QUADRATURE_NODES: usize = 24;
/// Target for the parameter problem residual.
pub const PARAMETER_TOL: f64 = 1e-10;

#[inline]
fn c(p: Point) -> C64 {
    C64::new(p.x, p.y)
}

#[inline]
fn p(z: C64) -> Point {
    pt(z.re, z.im)
}

#[inline]
fn unit(t: f64) -> C64 {
    C64::new(t.cos(), t.sin())
}

/// A conformal map between a polygonal domain and the unit disk.
pub trait ConformalMap: Send + Sync {
    fn domain(&self) -> &PolygonDomain;

    /// Φ(z) for z in the closed domain.
    fn to_disk(&self, z: Point) -> Result<Point>;

    /// Φ⁻¹(w) for |w| ≤ 1.
    fn from_disk(&self, w: Point) -> Result<Point>;

    /// Electrodes x_j = Φ⁻¹(e^{2πi(j−1)/n}), j = 1..n.
    fn electrode_positions(&self, n: usize) -> Result<Vec<Electrode>> {
        if n < 4 {
            return Err(Error::OutOfRange(format!("need at least 4 electrodes, got {n}")));
        }
        (0..n)
            .map(|j| {
                let t = 2.0 * PI * j as f64 / n as f64;
                let x = self.from_disk(pt(t.cos(), t.sin()))?;
                Ok(Electrode { boundary: self.domain().closest_boundary_point(x), disk_angle: t })
            })
            .collect()
    }
}

/// A boundary electrode together with its preimage angle on the unit circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Electrode {
    pub boundary: BoundaryPoint,
    pub disk_angle: f64,
}

impl Electrode {
    pub fn point(&self) -> Point {
        self.boundary.point
    }

    pub fn disk_point(&self) -> Point {
        pt(self.disk_angle.cos(), self.disk_angle.sin())
    }
}

/// Electrode at a given boundary point, with its preimage angle taken from the map.
pub fn electrode_at(map: &dyn ConformalMap, boundary: BoundaryPoint) -> Result<Electrode> {
    let w = map.to_disk(boundary.point)?;
    Ok(Electrode { boundary, disk_angle: w.y.atan2(w.x).rem_euclid(2.0 * PI) })
}

/// Interior point sent to 0 and boundary anchor sent to 1.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MapNormalization {
    /// Defaults to the polygon centroid.
    pub center: Option<Point>,
    /// Arc length (from vertex 0) of the boundary point mapped to w = 1.
    pub anchor_arc_length: f64,
}

impl MapNormalization {
    pub fn centered_at(center: Point) -> Self {
        Self { center: Some(center), anchor_arc_length: 0.0 }
    }
}

/// Prevertices, exponents and quadrature rules; everything needed to
/// evaluate the SC integral without the multiplicative constant.
#[derive(Debug, Clone)]
struct Kernel {
    w: Vec<C64>,
    beta: Vec<f64>,
    rules: Vec<GaussJacobi>,
    legendre: GaussJacobi,
    /// distance from each prevertex to its nearest neighbour
    spacing: Vec<f64>,
}

impl Kernel {
    fn new(angles: &[f64], beta: &[f64], rules: &[GaussJacobi], legendre: &GaussJacobi) -> Self {
        let w: Vec<C64> = angles.iter().map(|&t| unit(t)).collect();
        let n = w.len();
        let spacing = (0..n)
            .map(|j| (0..n).filter(|&k| k != j).map(|k| (w[j] - w[k]).norm()).fold(f64::INFINITY, f64::min))
            .collect();
        Self { w, beta: beta.to_vec(), rules: rules.to_vec(), legendre: legendre.clone(), spacing }
    }

    /// Π_k (1 − w/w_k)^{β_k}, skipping index `skip`.
    #[inline]
    fn factor(&self, z: C64, skip: Option<usize>) -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for (k, (&wk, &b)) in self.w.iter().zip(&self.beta).enumerate() {
            if Some(k) == skip {
                continue;
            }
            s += (C64::new(1.0, 0.0) - z / wk).ln() * b;
        }
        s.exp()
    }

    fn nearest_singularity(&self, z: C64) -> f64 {
        self.w.iter().map(|&wk| (z - wk).norm()).fold(f64::INFINITY, f64::min)
    }

    fn legendre_segment(&self, a: C64, b: C64) -> C64 {
        let half = (b - a) * 0.5;
        let mid = (a + b) * 0.5;
        let mut s = C64::new(0.0, 0.0);
        for (&x, &wt) in self.legendre.nodes.iter().zip(&self.legendre.weights) {
            s += self.factor(mid + half * x, None) * wt;
        }
        s * half
    }

    /// ∫ from prevertex j to q, with the (1 − w/w_j)^{β_j} factor absorbed into a Jacobi weight.
    fn singular_segment(&self, j: usize, q: C64) -> C64 {
        let a = self.w[j];
        let delta = q - a;
        let b = self.beta[j];
        // 1 − w/w_j = ((x+1)/2) · c along the segment, with Re c ≥ 0
        let cc = -delta / a;
        let scale = delta * 0.5 * 2f64.powf(-b) * cc.powf(b);
        let rule = &self.rules[j];
        let mut s = C64::new(0.0, 0.0);
        for (&x, &wt) in rule.nodes.iter().zip(&rule.weights) {
            s += self.factor(a + delta * ((x + 1.0) * 0.5), Some(j)) * wt;
        }
        s * scale
    }

    /// ∫_a^b along the straight segment. `a` may be prevertex `sing`; `b` must
    /// not be a prevertex.
    fn integrate(&self, a: C64, sing: Option<usize>, b: C64) -> C64 {
        let mut total = C64::new(0.0, 0.0);
        let mut cur = a;
        if let Some(j) = sing {
            let len = (b - a).norm();
            if len == 0.0 {
                return total;
            }
            let h = len.min(0.5 * self.spacing[j]);
            let q = if h >= len { b } else { a + (b - a) * (h / len) };
            total += self.singular_segment(j, q);
            cur = q;
        }
        loop {
            let rem = (b - cur).norm();
            if rem == 0.0 {
                break;
            }
            let h = 0.5 * self.nearest_singularity(cur);
            let q = if h >= rem || rem <= 1e-15 { b } else { cur + (b - cur) * (h / rem) };
            total += self.legendre_segment(cur, q);
            cur = q;
        }
        total
    }

    /// ∫ along the chord from prevertex j to prevertex k, split at its midpoint.
    fn chord(&self, j: usize, k: usize) -> C64 {
        let mid = (self.w[j] + self.w[k]) * 0.5;
        self.integrate(self.w[j], Some(j), mid) - self.integrate(self.w[k], Some(k), mid)
    }

    /// ∫_0^{w_k}.
    fn to_prevertex(&self, k: usize) -> C64 {
        -self.integrate(self.w[k], Some(k), C64::new(0.0, 0.0))
    }
}

/// Parameter-problem residual for the prevertex angles: log side-length
/// ratios against the polygon's, followed by the center condition.
fn parameter_residual(domain: &PolygonDomain, center: C64, kernel: &Kernel) -> Vec<f64> {
    let n = domain.len();
    let verts = domain.vertices();
    let i0 = kernel.chord(0, 1);
    let l0 = domain.edge_length(0);
    let mut r = Vec::with_capacity(n - 1);
    for k in 1..=n.saturating_sub(3) {
        let ik = kernel.chord(k, k + 1);
        r.push((ik.norm() / i0.norm()).ln() - (domain.edge_length(k) / l0).ln());
    }
    let cst = (c(verts[1]) - c(verts[0])) / i0;
    let zc = c(verts[0]) - cst * kernel.to_prevertex(0);
    let e = (zc - center) / domain.diameter();
    r.push(e.re);
    r.push(e.im);
    r
}

fn angles_from_logits(y: &[f64]) -> Vec<f64> {
    // gaps g_k = 2π softmax(y) with the last logit pinned at 0
    let m = y.iter().cloned().fold(0.0f64, f64::max);
    let ex: Vec<f64> = y.iter().map(|v| (v - m).exp()).chain(std::iter::once((-m).exp())).collect();
    let total: f64 = ex.iter().sum();
    let mut out = Vec::with_capacity(ex.len());
    let mut t = 0.0;
    for e in &ex {
        out.push(t);
        t += 2.0 * PI * e / total;
    }
    out
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cache record for a solved map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapCache {
    pub polygon_hash: String,
    pub center: [f64; 2],
    pub prevertex_angles: Vec<f64>,
    pub constant: [f64; 2],
    pub residual: f64,
}

/// SHA-256 of the polygon's canonical text form.
pub fn polygon_hash(domain: &PolygonDomain) -> String {
    hex::encode(Sha256::digest(domain.to_text().as_bytes()))
}

#[derive(Debug, Clone)]
pub struct SchwarzChristoffelMap {
    domain: PolygonDomain,
    center: C64,
    angles: Vec<f64>,
    kernel: Kernel,
    constant: C64,
    images: Vec<C64>,
    /// (z, w) pairs used to start the inverse continuation
    starts: Vec<(C64, C64)>,
    residual: f64,
}

impl SchwarzChristoffelMap {
    pub fn build(domain: &PolygonDomain, norm: &MapNormalization) -> Result<Self> {
        let n = domain.len();
        let center = norm.center.unwrap_or_else(|| domain.centroid());
        if !domain.contains_interior(center, 1e-9 * domain.diameter()) {
            return Err(Error::Geometry(format!(
                "normalization point ({}, {}) is not inside the polygon",
                center.x, center.y
            )));
        }
        let beta: Vec<f64> = domain.interior_angles().iter().map(|a| a / PI - 1.0).collect();
        let rules = beta
            .iter()
            .map(|&b| GaussJacobi::new(QUADRATURE_NODES, 0.0, b))
            .collect::<Result<Vec<_>>>()?;
        let legendre = GaussJacobi::legendre(QUADRATURE_NODES);
        let zc = c(center);

        // initial guess: prevertex gaps proportional to side lengths
        let last = domain.edge_length(n - 1);
        let mut y: Vec<f64> = (0..n - 1).map(|k| (domain.edge_length(k) / last).ln()).collect();
        let eval = |y: &[f64]| {
            let k = Kernel::new(&angles_from_logits(y), &beta, &rules, &legendre);
            let r = parameter_residual(domain, zc, &k);
            if r.iter().all(|v| v.is_finite()) {
                r
            } else {
                vec![f64::INFINITY; r.len()]
            }
        };
        let mut r = eval(&y);
        let mut lambda = 1e-3;
        let m = y.len();
        for _ in 0..200 {
            if r.iter().fold(0.0f64, |a, v| a.max(v.abs())) < 1e-13 {
                break;
            }
            let mut jac = DMatrix::<f64>::zeros(m, m);
            for col in 0..m {
                let h = 1e-7 * (1.0 + y[col].abs());
                let mut yp = y.clone();
                yp[col] += h;
                let rp = eval(&yp);
                for row in 0..m {
                    jac[(row, col)] = (rp[row] - r[row]) / h;
                }
            }
            let rv = DVector::from_column_slice(&r);
            let jtj = jac.transpose() * &jac;
            let g = jac.transpose() * rv;
            let r0 = norm2(&r);
            let mut accepted = false;
            while lambda < 1e12 {
                let mut a = jtj.clone();
                for i in 0..m {
                    a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
                }
                let Some(delta) = a.lu().solve(&(-&g)) else {
                    lambda *= 4.0;
                    continue;
                };
                let yn: Vec<f64> = y.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
                let rn = eval(&yn);
                if norm2(&rn) < r0 {
                    y = yn;
                    r = rn;
                    lambda = (lambda / 3.0).max(1e-14);
                    accepted = true;
                    break;
                }
                lambda *= 4.0;
            }
            if !accepted {
                break;
            }
        }
        let residual = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !(residual <= PARAMETER_TOL) {
            return Err(Error::MapConstruction {
                residual,
                message: format!("Levenberg–Marquardt stalled for a {n}-gon"),
            });
        }
        let angles = angles_from_logits(&y);
        let mut map = Self::assemble(domain.clone(), zc, angles, beta, rules, legendre, residual);

        if norm.anchor_arc_length.rem_euclid(domain.perimeter()) != 0.0 {
            let anchor = domain.boundary_point_at(norm.anchor_arc_length).point;
            let wa = map.to_disk(anchor)?;
            let ta = wa.y.atan2(wa.x);
            let angles: Vec<f64> = map.angles.iter().map(|t| t - ta).collect();
            let Self { kernel, residual, .. } = map;
            map = Self::assemble(domain.clone(), zc, angles, kernel.beta, kernel.rules, kernel.legendre, residual);
        }
        log::debug!("SC map for {n}-gon: residual {residual:.2e}");
        Ok(map)
    }

    fn assemble(
        domain: PolygonDomain,
        center: C64,
        angles: Vec<f64>,
        beta: Vec<f64>,
        rules: Vec<GaussJacobi>,
        legendre: GaussJacobi,
        residual: f64,
    ) -> Self {
        let kernel = Kernel::new(&angles, &beta, &rules, &legendre);
        let verts = domain.vertices();
        let constant = (c(verts[1]) - c(verts[0])) / kernel.chord(0, 1);
        let images = (0..angles.len()).map(|k| center + constant * kernel.to_prevertex(k)).collect();
        let mut map = Self { domain, center, angles, kernel, constant, images, starts: vec![], residual };
        let mut starts = vec![(center, C64::new(0.0, 0.0))];
        for &r in &[0.3, 0.6, 0.85] {
            for j in 0..24 {
                let w = unit(2.0 * PI * j as f64 / 24.0) * r;
                starts.push((map.eval(w), w));
            }
        }
        map.starts = starts;
        map
    }

    pub fn from_cache(domain: &PolygonDomain, cache: &MapCache) -> Result<Self> {
        if cache.polygon_hash != polygon_hash(domain) {
            return Err(Error::Validation("map cache belongs to a different polygon".into()));
        }
        if cache.prevertex_angles.len() != domain.len() {
            return Err(Error::Validation("map cache has the wrong number of prevertices".into()));
        }
        let beta: Vec<f64> = domain.interior_angles().iter().map(|a| a / PI - 1.0).collect();
        let rules = beta
            .iter()
            .map(|&b| GaussJacobi::new(QUADRATURE_NODES, 0.0, b))
            .collect::<Result<Vec<_>>>()?;
        let legendre = GaussJacobi::legendre(QUADRATURE_NODES);
        let center = C64::new(cache.center[0], cache.center[1]);
        let kernel = Kernel::new(&cache.prevertex_angles, &beta, &rules, &legendre);
        let residual = parameter_residual(domain, center, &kernel).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !(residual <= PARAMETER_TOL) {
            return Err(Error::MapConstruction { residual, message: "cached prevertices do not solve the parameter problem".into() });
        }
        Ok(Self::assemble(domain.clone(), center, cache.prevertex_angles.clone(), beta, rules, legendre, residual))
    }

    pub fn to_cache(&self) -> MapCache {
        MapCache {
            polygon_hash: polygon_hash(&self.domain),
            center: [self.center.re, self.center.im],
            prevertex_angles: self.angles.clone(),
            constant: [self.constant.re, self.constant.im],
            residual: self.residual,
        }
    }

    /// Prevertex angles, strictly increasing within one period.
    pub fn prevertex_angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn prevertex(&self, k: usize) -> Point {
        p(self.kernel.w[k])
    }

    /// Max-norm residual of the parameter problem at the solution.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn center(&self) -> Point {
        p(self.center)
    }

    /// Images of the prevertices under the numerical map; these agree with
    /// the polygon vertices to within the parameter tolerance.
    pub fn vertex_image(&self, k: usize) -> Point {
        p(self.images[k])
    }

    /// Derivative of Φ⁻¹ at w.
    pub fn derivative(&self, w: Point) -> (f64, f64) {
        let d = self.constant * self.kernel.factor(c(w), None);
        (d.re, d.im)
    }

    fn eval(&self, w: C64) -> C64 {
        let mut best = (w.norm(), None);
        for (k, &wk) in self.kernel.w.iter().enumerate() {
            let d = (w - wk).norm();
            if d < best.0 {
                best = (d, Some(k));
            }
        }
        match best {
            (_, None) => self.center + self.constant * self.kernel.integrate(C64::new(0.0, 0.0), None, w),
            (d, Some(k)) if d < 1e-15 => self.images[k],
            (_, Some(k)) => self.images[k] + self.constant * self.kernel.integrate(self.kernel.w[k], Some(k), w),
        }
    }

    fn fprime(&self, w: C64) -> C64 {
        self.constant * self.kernel.factor(w, None)
    }

    fn segment_clear(&self, a: C64, b: C64) -> bool {
        let n = self.domain.len();
        (0..n).all(|k| {
            let (u, v) = self.domain.edge(k);
            !geometry::segments_intersect(p(a), p(b), u, v)
        })
    }

    fn invert_interior(&self, z: C64) -> Result<C64> {
        let (zs, ws) = self
            .starts
            .iter()
            .filter(|(zs, _)| self.segment_clear(*zs, z))
            .min_by(|a, b| (a.0 - z).norm().partial_cmp(&(b.0 - z).norm()).unwrap())
            .copied()
            .unwrap_or((self.center, C64::new(0.0, 0.0)));

        // continuation along the preimage of the straight segment zs → z
        let steps = 20;
        let dz = (z - zs) / steps as f64;
        let clamp = |w: C64| if w.norm() >= 1.0 { w * (0.999999 / w.norm()) } else { w };
        let mut w = ws;
        for _ in 0..steps {
            let k1 = dz / self.fprime(w);
            let k2 = dz / self.fprime(clamp(w + k1 * 0.5));
            let k3 = dz / self.fprime(clamp(w + k2 * 0.5));
            let k4 = dz / self.fprime(clamp(w + k3));
            w = clamp(w + (k1 + k2 * 2.0 + k3 * 2.0 + k4) / 6.0);
        }
        if !(w.re.is_finite() && w.im.is_finite()) {
            w = ws;
        }

        let scale = self.domain.diameter();
        let mut fw = self.eval(w);
        let mut res = (fw - z).norm();
        for _ in 0..80 {
            if res <= 1e-15 * scale {
                break;
            }
            let step = (fw - z) / self.fprime(w);
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-10 {
                let wn = w - step * t;
                if wn.norm() < 1.0 {
                    let fn_ = self.eval(wn);
                    let rn = (fn_ - z).norm();
                    if rn < res {
                        w = wn;
                        fw = fn_;
                        res = rn;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !moved || (step * t).norm() <= 1e-16 {
                break;
            }
        }
        if res > 1e-10 * scale {
            return Err(Error::MapEvaluation(format!(
                "inverse map stalled at ({}, {}) with residual {res:.2e}",
                z.re, z.im
            )));
        }
        Ok(w)
    }

    fn edge_angles(&self, k: usize) -> (f64, f64) {
        let n = self.angles.len();
        let lo = self.angles[k];
        let hi = if k + 1 == n { self.angles[0] + 2.0 * PI } else { self.angles[k + 1] };
        (lo, hi)
    }

    /// Preimage of a boundary point on edge k at fractional position `frac`.
    fn invert_boundary(&self, k: usize, frac: f64) -> C64 {
        let n = self.angles.len();
        let (mut lo, mut hi) = self.edge_angles(k);
        let zk = self.images[k];
        let len = (self.images[(k + 1) % n] - zk).norm();
        let target = frac * len;
        let g = |t: f64| (self.eval(unit(t)) - zk).norm() - target;
        let mut t = lo + frac * (hi - lo);
        for _ in 0..200 {
            let gt = g(t);
            if gt.abs() <= 1e-15 * len {
                break;
            }
            if gt < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            if hi - lo <= 1e-15 {
                break;
            }
            let d = self.fprime(unit(t)).norm();
            let tn = t - gt / d;
            t = if tn.is_finite() && tn > lo && tn < hi { tn } else { 0.5 * (lo + hi) };
        }
        unit(t)
    }
}

impl ConformalMap for SchwarzChristoffelMap {
    fn domain(&self) -> &PolygonDomain {
        &self.domain
    }

    fn to_disk(&self, z: Point) -> Result<Point> {
        if !self.domain.contains(z) {
            return Err(Error::OutsideDomain { x: z.x, y: z.y });
        }
        let scale = self.domain.diameter();
        let verts = self.domain.vertices();
        for (k, v) in verts.iter().enumerate() {
            if (z - v).norm() <= 1e-13 * scale {
                return Ok(p(self.kernel.w[k]));
            }
        }
        let n = verts.len();
        let (mut best, mut edge, mut frac) = (f64::INFINITY, 0, 0.0);
        for k in 0..n {
            let (a, b) = self.domain.edge(k);
            let (q, t) = geometry::project_to_segment(z, a, b);
            let d = (z - q).norm();
            if d < best {
                (best, edge, frac) = (d, k, t);
            }
        }
        if best <= 1e-12 * scale {
            return Ok(p(self.invert_boundary(edge, frac)));
        }
        match self.invert_interior(c(z)) {
            Ok(w) => Ok(p(w)),
            // the numerical polygon differs from the input one by the parameter residual
            Err(_) if best <= 1e-8 * scale => Ok(p(self.invert_boundary(edge, frac))),
            Err(e) => Err(e),
        }
    }

    fn from_disk(&self, w: Point) -> Result<Point> {
        let r = w.coords.norm();
        if !(r <= 1.0 + 1e-12) {
            return Err(Error::OutOfRange(format!("|w| = {r} exceeds 1")));
        }
        let wc = if r > 1.0 { c(w) / r } else { c(w) };
        Ok(p(self.eval(wc)))
    }
}

/// Identity map for polygons inscribed in the unit circle; used for
/// reference simulations on disk-like domains.
#[derive(Debug, Clone)]
pub struct DiskIdentity {
    domain: PolygonDomain,
}

impl DiskIdentity {
    /// Regular `segments`-gon inscribed in the unit circle with a vertex at angle 0.
    pub fn regular(segments: usize) -> Result<Self> {
        Ok(Self { domain: PolygonDomain::regular(segments, 1.0, 0.0)? })
    }

    pub fn new(domain: PolygonDomain) -> Result<Self> {
        if domain.vertices().iter().any(|v| v.coords.norm() > 1.0 + 1e-12) {
            return Err(Error::Geometry("polygon is not inside the closed unit disk".into()));
        }
        Ok(Self { domain })
    }
}

impl ConformalMap for DiskIdentity {
    fn domain(&self) -> &PolygonDomain {
        &self.domain
    }

    fn to_disk(&self, z: Point) -> Result<Point> {
        if !self.domain.contains(z) {
            return Err(Error::OutsideDomain { x: z.x, y: z.y });
        }
        Ok(z)
    }

    fn from_disk(&self, w: Point) -> Result<Point> {
        if w.coords.norm() > 1.0 + 1e-12 {
            return Err(Error::OutOfRange(format!("|w| = {} exceeds 1", w.coords.norm())));
        }
        Ok(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l_shape() -> PolygonDomain {
        PolygonDomain::new(vec![
            pt(0.0, 0.0),
            pt(2.0, 0.0),
            pt(2.0, 1.0),
            pt(1.0, 1.0),
            pt(1.0, 2.0),
            pt(0.0, 2.0),
        ])
        .unwrap()
    }

    fn square() -> PolygonDomain {
        PolygonDomain::new(vec![pt(-1.0, -1.0), pt(1.0, -1.0), pt(1.0, 1.0), pt(-1.0, 1.0)]).unwrap()
    }

    fn halton(i: usize, base: usize) -> f64 {
        let (mut f, mut r, mut i) = (1.0, 0.0, i);
        while i > 0 {
            f /= base as f64;
            r += f * (i % base) as f64;
            i /= base;
        }
        r
    }

    /// Side lengths from ∫ |f'(e^{iθ})| dθ along the circle, independent of the chord integrals.
    fn arc_side_lengths(map: &SchwarzChristoffelMap) -> Vec<f64> {
        let n = map.angles.len();
        (0..n)
            .map(|k| {
                let (lo, hi) = map.edge_angles(k);
                let (bk, bk1) = (map.kernel.beta[k], map.kernel.beta[(k + 1) % n]);
                let rule = GaussJacobi::new(40, bk1, bk).unwrap();
                let half = 0.5 * (hi - lo);
                rule.integrate(|x| {
                    let t = lo + half * (x + 1.0);
                    // divide out the endpoint behaviour absorbed by the Jacobi weight
                    let s = map.fprime(unit(t)).norm();
                    s / ((half * (x + 1.0)).powf(bk) * (half * (1.0 - x)).powf(bk1))
                }) * half.powf(1.0 + bk + bk1)
            })
            .collect()
    }

    #[test]
    fn square_prevertices_equispaced() {
        let map = SchwarzChristoffelMap::build(&square(), &MapNormalization::default()).unwrap();
        assert!(map.residual() <= 1e-10);
        for (k, &t) in map.prevertex_angles().iter().enumerate() {
            let expect = map.prevertex_angles()[0] + k as f64 * PI / 2.0;
            assert!((t - expect).abs() < 1e-8, "{t} vs {expect}");
        }
    }

    #[test]
    fn hexagon_prevertices_equispaced() {
        let hex = PolygonDomain::regular(6, 1.0, 0.3).unwrap();
        let map = SchwarzChristoffelMap::build(&hex, &MapNormalization::default()).unwrap();
        for (k, &t) in map.prevertex_angles().iter().enumerate() {
            assert!((t - k as f64 * PI / 3.0).abs() < 1e-8);
        }
    }

    #[test]
    fn l_shape_parameter_problem_and_side_lengths() {
        let dom = l_shape();
        let map = SchwarzChristoffelMap::build(&dom, &MapNormalization::centered_at(pt(0.5, 0.5))).unwrap();
        assert!(map.residual() < 1e-10);
        let ang = map.prevertex_angles();
        assert!(ang.windows(2).all(|w| w[1] > w[0]) && ang[ang.len() - 1] - ang[0] < 2.0 * PI);
        let sides = arc_side_lengths(&map);
        for k in 0..dom.len() {
            assert!((sides[k] - dom.edge_length(k)).abs() < 1e-8, "side {k}: {} vs {}", sides[k], dom.edge_length(k));
        }
        for k in 0..dom.len() {
            let v = map.from_disk(map.prevertex(k)).unwrap();
            assert!((v - dom.vertices()[k]).norm() < 1e-8);
            let w = map.to_disk(dom.vertices()[k]).unwrap();
            assert!((w - map.prevertex(k)).norm() < 1e-8);
        }
        let w0 = map.to_disk(pt(0.5, 0.5)).unwrap();
        assert!(w0.coords.norm() < 1e-12);
        assert!((map.from_disk(pt(0.0, 0.0)).unwrap() - pt(0.5, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn square_edge_midpoints() {
        let dom = square();
        let map = SchwarzChristoffelMap::build(&dom, &MapNormalization::default()).unwrap();
        for k in 0..4 {
            let (a, b) = dom.edge(k);
            let mid = pt(0.5 * (a.x + b.x), 0.5 * (a.y + b.y));
            let w = map.to_disk(mid).unwrap();
            assert!((w.coords.norm() - 1.0).abs() < 1e-8);
            let (lo, hi) = map.edge_angles(k);
            let t = w.y.atan2(w.x).rem_euclid(2.0 * PI);
            let t = if t < lo - 1e-12 { t + 2.0 * PI } else { t };
            assert!(t > lo && t < hi);
            // symmetry puts the midpoint halfway between prevertices
            assert!((t - 0.5 * (lo + hi)).abs() < 1e-8);
            let back = map.from_disk(unit(0.5 * (lo + hi)).into_point()).unwrap();
            assert!((back - mid).norm() < 1e-8);
        }
    }

    trait IntoPoint {
        fn into_point(self) -> Point;
    }
    impl IntoPoint for C64 {
        fn into_point(self) -> Point {
            p(self)
        }
    }

    #[test]
    fn roundtrip_quasi_random_points() {
        for dom in [l_shape(), square()] {
            let map = SchwarzChristoffelMap::build(&dom, &MapNormalization::default()).unwrap();
            for i in 1..=100 {
                let r = 0.98 * halton(i, 2).sqrt();
                let t = 2.0 * PI * halton(i, 3);
                let w = pt(r * t.cos(), r * t.sin());
                let z = map.from_disk(w).unwrap();
                let back = map.to_disk(z).unwrap();
                assert!((back - w).norm() <= 1e-8, "w={w:?} back={back:?}");
            }
        }
    }

    #[test]
    fn jacobian_is_conformal() {
        for dom in [l_shape(), square()] {
            let map = SchwarzChristoffelMap::build(&dom, &MapNormalization::default()).unwrap();
            let h = 1e-6;
            for i in 1..=20 {
                let w = pt(0.9 * halton(i, 2) - 0.45, 0.9 * halton(i, 3) - 0.45);
                let z = map.from_disk(w).unwrap();
                let f = |x: f64, y: f64| map.to_disk(pt(x, y)).unwrap();
                let dx = (f(z.x + h, z.y) - f(z.x - h, z.y)) / (2.0 * h);
                let dy = (f(z.x, z.y + h) - f(z.x, z.y - h)) / (2.0 * h);
                let det = dx.x * dy.y - dx.y * dy.x;
                // J^T J = det(J) I
                let e11 = dx.norm_squared() - det;
                let e22 = dy.norm_squared() - det;
                let e12 = dx.dot(&dy);
                let err = e11.abs().max(e22.abs()).max(e12.abs()) / det.abs();
                assert!(err < 1e-5, "relative conformality defect {err}");
                assert!(det > 0.0);
            }
        }
    }

    #[test]
    fn anchor_rotation() {
        let dom = square();
        let s = 1.0; // midpoint of the first edge
        let map = SchwarzChristoffelMap::build(&dom, &MapNormalization { center: None, anchor_arc_length: s }).unwrap();
        let w = map.to_disk(pt(0.0, -1.0)).unwrap();
        assert!((w - pt(1.0, 0.0)).norm() < 1e-9);
        let e = map.electrode_positions(4).unwrap();
        let expect = [pt(0.0, -1.0), pt(1.0, 0.0), pt(0.0, 1.0), pt(-1.0, 0.0)];
        for (el, ex) in e.iter().zip(expect) {
            assert!((el.point() - ex).norm() < 1e-8, "{:?}", el.point());
        }
    }

    #[test]
    fn near_identity_electrodes_on_64_gon() {
        let dom = PolygonDomain::regular(64, 1.0, 0.0).unwrap();
        let map = SchwarzChristoffelMap::build(&dom, &MapNormalization::default()).unwrap();
        let e = map.electrode_positions(8).unwrap();
        let spacing = dom.perimeter() / 8.0;
        for (j, el) in e.iter().enumerate() {
            let dev = (el.boundary.arc_length - j as f64 * spacing).abs();
            assert!(dev < 0.02 * spacing);
        }
    }

    #[test]
    fn l_shape_electrodes_cluster_at_reflex_corner() {
        let dom = l_shape();
        let map = SchwarzChristoffelMap::build(&dom, &MapNormalization::default()).unwrap();
        let e = map.electrode_positions(16).unwrap();
        let corner = pt(1.0, 1.0);
        let near = e.iter().filter(|el| (el.point() - corner).norm() < 0.5).count();
        let far_corner = pt(0.0, 0.0);
        let near_far = e.iter().filter(|el| (el.point() - far_corner).norm() < 0.5).count();
        assert!(near > near_far, "{near} vs {near_far}");
    }

    #[test]
    fn cache_roundtrip() {
        let dom = l_shape();
        let map = SchwarzChristoffelMap::build(&dom, &MapNormalization::default()).unwrap();
        let json = serde_json::to_string(&map.to_cache()).unwrap();
        let cache: MapCache = serde_json::from_str(&json).unwrap();
        let again = SchwarzChristoffelMap::from_cache(&dom, &cache).unwrap();
        let w = pt(0.2, -0.3);
        assert_eq!(map.from_disk(w).unwrap(), again.from_disk(w).unwrap());
        assert!(SchwarzChristoffelMap::from_cache(&square(), &cache).is_err());
    }

    #[test]
    fn outside_points_rejected() {
        let map = SchwarzChristoffelMap::build(&l_shape(), &MapNormalization::default()).unwrap();
        assert!(matches!(map.to_disk(pt(1.5, 1.5)), Err(Error::OutsideDomain { .. })));
        assert!(map.from_disk(pt(1.1, 0.0)).is_err());
    }

    /// ∫_D ∇f·∇g for the L-shape via a fan from (0.5, 0.5) and the
    /// edge-midpoint rule, exact for quadratic integrands.
    fn energy_on_polygon(dom: &PolygonDomain, integrand: impl Fn(Point) -> f64) -> f64 {
        let o = pt(0.5, 0.5);
        (0..dom.len())
            .map(|k| {
                let (a, b) = dom.edge(k);
                let area = 0.5 * geometry::orient(o, a, b);
                let m = |u: Point, v: Point| pt(0.5 * (u.x + v.x), 0.5 * (u.y + v.y));
                area * (integrand(m(o, a)) + integrand(m(a, b)) + integrand(m(b, o))) / 3.0
            })
            .sum()
    }

    /// Tensor Gauss rule on the unit disk, graded geometrically toward r = 1 and toward each prevertex angle.
    fn graded_disk_rule(angles: &[f64], levels: i32, pts: usize) -> Vec<(Point, f64)> {
        let gl = GaussJacobi::legendre(pts);
        let mut radial = vec![(0.0, 0.5)];
        for j in 1..=levels {
            radial.push((1.0 - 0.5f64.powi(j), 1.0 - 0.5f64.powi(j + 1)));
        }
        radial.push((1.0 - 0.5f64.powi(levels + 1), 1.0));
        let n = angles.len();
        let mut angular = vec![];
        for k in 0..n {
            let lo = angles[k];
            let hi = if k + 1 == n { angles[0] + 2.0 * PI } else { angles[k + 1] };
            let mid = 0.5 * (lo + hi);
            let half = mid - lo;
            // graded toward lo and toward hi
            let mut cuts = vec![0.0];
            for j in (1..=levels).rev() {
                cuts.push(0.5f64.powi(j));
            }
            cuts.push(1.0);
            for w in cuts.windows(2) {
                angular.push((lo + half * w[0], lo + half * w[1]));
                angular.push((hi - half * w[1], hi - half * w[0]));
            }
        }
        let nodes = |(a, b): (f64, f64)| -> Vec<(f64, f64)> {
            gl.nodes.iter().zip(&gl.weights).map(|(&x, &w)| (a + 0.5 * (b - a) * (x + 1.0), 0.5 * (b - a) * w)).collect()
        };
        let rs: Vec<(f64, f64)> = radial.into_iter().flat_map(nodes).collect();
        let ts: Vec<(f64, f64)> = angular.into_iter().flat_map(nodes).collect();
        let mut out = Vec::with_capacity(rs.len() * ts.len());
        for &(r, wr) in &rs {
            for &(t, wt) in &ts {
                out.push((pt(r * t.cos(), r * t.sin()), r * wr * wt));
            }
        }
        out
    }

    #[test]
    fn dirichlet_energy_is_invariant() {
        let dom = l_shape();
        let map = SchwarzChristoffelMap::build(&dom, &MapNormalization::default()).unwrap();
        // harmonic polynomials: Re z, Re z², Im z²
        let grads: [fn(Point) -> (f64, f64); 3] =
            [|_| (1.0, 0.0), |z| (2.0 * z.x, -2.0 * z.y), |z| (2.0 * z.y, 2.0 * z.x)];
        let pairs = [(0, 0), (1, 1), (0, 2), (1, 2)];
        let rule = graded_disk_rule(map.prevertex_angles(), 14, 6);
        let samples: Vec<(Point, f64, f64)> = rule
            .iter()
            .map(|&(w, wt)| {
                let z = map.from_disk(w).unwrap();
                let (dr, di) = map.derivative(w);
                (z, wt, dr * dr + di * di)
            })
            .collect();
        for (a, b) in pairs {
            let dot = |z: Point| {
                let (ga, gb) = (grads[a](z), grads[b](z));
                ga.0 * gb.0 + ga.1 * gb.1
            };
            let on_d = energy_on_polygon(&dom, dot);
            let on_b: f64 = samples.iter().map(|&(z, wt, jac)| wt * jac * dot(z)).sum();
            let scale = on_d.abs().max(1.0);
            assert!((on_d - on_b).abs() <= 1e-4 * scale, "({a},{b}): {on_d} vs {on_b}");
        }
    }

    #[test]
    fn disk_identity_basics() {
        let m = DiskIdentity::regular(256).unwrap();
        assert_eq!(m.to_disk(pt(0.2, 0.1)).unwrap(), pt(0.2, 0.1));
        let e = m.electrode_positions(16).unwrap();
        for (j, el) in e.iter().enumerate() {
            let t = 2.0 * PI * j as f64 / 16.0;
            assert!((el.point() - pt(t.cos(), t.sin())).norm() < 1e-14);
        }
    }
}
