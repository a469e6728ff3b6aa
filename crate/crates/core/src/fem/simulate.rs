//! Bisweep simulation through the Green-function split u = u_bg + w.
//!
//! The background potential of a boundary point source is known in closed
//! form on the disk and transported to D by the conformal map; only the
//! scattered part w needs a finite element solve, and its right-hand side
//! lives on the nodes touching the inclusions.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::conformal::{ConformalMap, Electrode};
use crate::diskgreens::neumann_green;
use crate::domain::{BoundaryPoint, Phantom};
use crate::error::{Error, Result};
use crate::fem::assembly::{assemble_stiffness, Coefficient, CsrMatrix, StiffnessMatrix};
use crate::fem::mesh::Mesh;
use crate::fem::solver::{solve_projected_cg, DEFAULT_TOLERANCE};
use crate::geometry::{pt, Point};
use crate::pipeline::{BisweepMatrix, BisweepSource};

/// Background potential restricted to the inclusion-adjacent nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorSourceVector {
    pub values: Vec<f64>,
    pub support: Vec<usize>,
}

impl InteriorSourceVector {
    pub fn zeros(n: usize, support: Vec<usize>) -> Self {
        Self { values: vec![0.0; n], support }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `self − other`, keeping the support of `self`.
    pub fn difference(&self, other: &Self) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Self { values, support: self.support.clone() }
    }
}

fn unit_circle_image(map: &dyn ConformalMap, x: Point) -> Result<Point> {
    let w = map.to_disk(x)?;
    let t = w.y.atan2(w.x);
    Ok(pt(t.cos(), t.sin()))
}

fn check_support(mesh: &Mesh, region: &[usize]) -> Result<()> {
    if let Some(&j) = region.iter().find(|&&j| mesh.boundary[j]) {
        return Err(Error::Validation(format!(
            "inclusion-adjacent node {j} lies on the outer boundary; refine the mesh or move the inclusion"
        )));
    }
    Ok(())
}

/// u_j = N(Φ(z_j), Φ(x)) − N(Φ(z_j), Φ(y)) for j in `region`, zero elsewhere.
pub fn interior_source(
    mesh: &Mesh,
    map: &dyn ConformalMap,
    x: BoundaryPoint,
    y: BoundaryPoint,
    region: &[usize],
) -> Result<InteriorSourceVector> {
    if x.point == y.point {
        return Err(Error::DegeneratePair(format!("x = y = ({}, {})", x.point.x, x.point.y)));
    }
    check_support(mesh, region)?;
    let (px, py) = (unit_circle_image(map, x.point)?, unit_circle_image(map, y.point)?);
    let mut u = InteriorSourceVector::zeros(mesh.num_nodes(), region.to_vec());
    for &j in region {
        let z = map.to_disk(mesh.nodes[j])?;
        u.values[j] = neumann_green(z, px)? - neumann_green(z, py)?;
    }
    Ok(u)
}

/// Solve K_σ w = K_{1−σ} u; w has mean zero.
pub fn solve_scatter(k_sigma: &StiffnessMatrix, k_one: &StiffnessMatrix, u: &InteriorSourceVector) -> Result<Vec<f64>> {
    let r = k_one.matrix.matvec(&u.values);
    scatter_rhs(&k_sigma.matrix, &r)
}

fn scatter_rhs(k_sigma: &CsrMatrix, r: &[f64]) -> Result<Vec<f64>> {
    let n = k_sigma.dim();
    let (w, _) = solve_projected_cg(k_sigma, r, DEFAULT_TOLERANCE, 20 * n + 1000)?;
    Ok(w)
}

/// w(x, y, p, q) = u_xyᵀ K_{1−σ} (u_pq + w_pq).
pub fn four_electrode(u_xy: &InteriorSourceVector, u_pq: &InteriorSourceVector, w_pq: &[f64], k_one: &StiffnessMatrix) -> Result<f64> {
    let n = k_one.matrix.dim();
    if u_xy.len() != n || u_pq.len() != n || w_pq.len() != n {
        return Err(Error::Dimension("four-electrode vectors do not match the mesh".into()));
    }
    let total: Vec<f64> = u_pq.values.iter().zip(w_pq).map(|(a, b)| a + b).collect();
    let kt = k_one.matrix.matvec(&total);
    Ok(u_xy.values.iter().zip(&kt).map(|(a, b)| a * b).sum())
}

/// Assembled system for one phantom, mesh and conformal map.
///
/// All pair measurements follow from single-electrode solves by linearity:
/// with u_a = N(Φ(·), x̃_a) on I_Ω and G_ab = u_aᵀ K_{1−σ}(u_b + w_b), the
/// bisweep entry is ς_ij = G_ii − G_ij − G_ji + G_jj.
pub struct BisweepSimulator<'a> {
    map: &'a dyn ConformalMap,
    mesh: Mesh,
    k_sigma: StiffnessMatrix,
    k_one: StiffnessMatrix,
    support: Vec<usize>,
    disk_nodes: Vec<Point>,
    tolerance: f64,
}

impl<'a> BisweepSimulator<'a> {
    pub fn new(phantom: &Phantom, map: &'a dyn ConformalMap, mesh: Mesh) -> Result<Self> {
        let k_sigma = assemble_stiffness(&mesh, phantom, Coefficient::Sigma)?;
        let k_one = assemble_stiffness(&mesh, phantom, Coefficient::OneMinusSigma)?;
        let support = k_one.matrix.nonzero_rows();
        check_support(&mesh, &support)?;
        let disk_nodes = support.par_iter().map(|&j| map.to_disk(mesh.nodes[j])).collect::<Result<Vec<_>>>()?;
        log::debug!(
            "simulator: {} nodes, {} triangles, {} inclusion-adjacent nodes",
            mesh.num_nodes(),
            mesh.num_triangles(),
            support.len()
        );
        Ok(Self { map, mesh, k_sigma, k_one, support, disk_nodes, tolerance: DEFAULT_TOLERANCE })
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn map(&self) -> &dyn ConformalMap {
        self.map
    }

    pub fn k_sigma(&self) -> &StiffnessMatrix {
        &self.k_sigma
    }

    pub fn k_one(&self) -> &StiffnessMatrix {
        &self.k_one
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// N(Φ(z_j), x̃) on I_Ω for the boundary point with disk angle `theta`.
    pub fn single_source(&self, theta: f64) -> Result<InteriorSourceVector> {
        let x = pt(theta.cos(), theta.sin());
        let mut u = InteriorSourceVector::zeros(self.mesh.num_nodes(), self.support.clone());
        for (&j, &z) in self.support.iter().zip(&self.disk_nodes) {
            u.values[j] = neumann_green(z, x)?;
        }
        Ok(u)
    }

    /// Source for the current pair (x, y) given by disk angles.
    pub fn pair_source(&self, x: f64, y: f64) -> Result<InteriorSourceVector> {
        let d = (x - y).rem_euclid(2.0 * PI);
        if d.min(2.0 * PI - d) < 1e-14 {
            return Err(Error::DegeneratePair(format!("angles {x} and {y} coincide")));
        }
        Ok(self.single_source(x)?.difference(&self.single_source(y)?))
    }

    pub fn scatter(&self, u: &InteriorSourceVector) -> Result<Vec<f64>> {
        let r = self.k_one.matrix.matvec(&u.values);
        let n = r.len();
        let (w, _) = solve_projected_cg(&self.k_sigma.matrix, &r, self.tolerance, 20 * n + 1000)?;
        Ok(w)
    }

    /// Raw w(x, y, p, q) from a dedicated solve for the (p, q) pair.
    pub fn four_electrode(&self, x: f64, y: f64, p: f64, q: f64) -> Result<f64> {
        let u_xy = self.pair_source(x, y)?;
        let u_pq = self.pair_source(p, q)?;
        let w_pq = self.scatter(&u_pq)?;
        four_electrode(&u_xy, &u_pq, &w_pq, &self.k_one)
    }

    /// G_ab for electrodes at the given disk angles; one solve per electrode.
    pub fn gram(&self, angles: &[f64]) -> Result<DMatrix<f64>> {
        let n = angles.len();
        let parts: Vec<(Vec<f64>, Vec<f64>)> = angles
            .par_iter()
            .map(|&t| {
                let u = self.single_source(t)?;
                let ku = self.k_one.matrix.matvec(&u.values);
                let w = self.scatter(&u)?;
                let total: Vec<f64> = u.values.iter().zip(&w).map(|(a, b)| a + b).collect();
                Ok((ku, total))
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(n, n, |a, b| {
            parts[a].0.iter().zip(&parts[b].1).map(|(x, y)| x * y).sum()
        }))
    }

    fn bisweep_from_gram(g: &DMatrix<f64>) -> DMatrix<f64> {
        let n = g.nrows();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else {
                (g[(i, i)] - g[(i, j)]) - (g[(j, i)] - g[(j, j)])
            }
        })
    }

    /// Bisweep matrix at the given electrodes.
    pub fn simulate(&self, electrodes: &[Electrode]) -> Result<BisweepMatrix> {
        let angles: Vec<f64> = electrodes.iter().map(|e| e.disk_angle).collect();
        let s = if self.support.is_empty() {
            DMatrix::zeros(angles.len(), angles.len())
        } else {
            Self::bisweep_from_gram(&self.gram(&angles)?)
        };
        BisweepMatrix::from_upper(s).with_electrodes(electrodes.to_vec())
    }
}

impl BisweepSource for BisweepSimulator<'_> {
    fn sweep(&self, fixed: f64, samples: &[f64]) -> Result<Vec<f64>> {
        if self.support.is_empty() {
            return Ok(vec![0.0; samples.len()]);
        }
        let mut angles = vec![fixed];
        angles.extend_from_slice(samples);
        let s = Self::bisweep_from_gram(&self.gram(&angles)?);
        Ok((1..angles.len())
            .map(|l| {
                let d = (samples[l - 1] - fixed).rem_euclid(2.0 * PI);
                if d.min(2.0 * PI - d) < 1e-14 {
                    0.0
                } else {
                    s[(0, l)]
                }
            })
            .collect())
    }
}

/// Mesh the phantom at size `h` and simulate the bisweep matrix.
pub fn simulate_bisweep(phantom: &Phantom, map: &dyn ConformalMap, electrodes: &[Electrode], h: f64) -> Result<BisweepMatrix> {
    let mesh = crate::fem::mesh::generate_mesh(phantom, h)?;
    BisweepSimulator::new(phantom, map, mesh)?.simulate(electrodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::{DiskIdentity, MapNormalization, SchwarzChristoffelMap};
    use crate::domain::{Inclusion, PolygonDomain};
    use crate::fem::mesh::generate_mesh;

    fn disk_phantom(segments: usize, rho: f64, kappa: f64) -> (Phantom, DiskIdentity) {
        let map = DiskIdentity::regular(segments).unwrap();
        let ph = Phantom::new(map.domain().clone(), vec![Inclusion::disk(pt(0.0, 0.0), rho, kappa)]).unwrap();
        (ph, map)
    }

    fn l_phantom() -> Phantom {
        let dom = PolygonDomain::new(vec![
            pt(0.0, 0.0),
            pt(2.0, 0.0),
            pt(2.0, 1.0),
            pt(1.0, 1.0),
            pt(1.0, 2.0),
            pt(0.0, 2.0),
        ])
        .unwrap();
        Phantom::new(
            dom,
            vec![
                Inclusion::disk(pt(0.5, 1.4), 0.25, 0.5),
                Inclusion::rectangle(pt(1.3, 0.3), pt(1.7, 0.7), 0.5),
            ],
        )
        .unwrap()
    }

    #[test]
    fn interior_source_contract() {
        let (ph, map) = disk_phantom(64, 0.5, 0.5);
        let mesh = generate_mesh(&ph, 0.1).unwrap();
        let region = mesh.region_nodes();
        let e = map.electrode_positions(8).unwrap();
        assert!(matches!(
            interior_source(&mesh, &map, e[0].boundary, e[0].boundary, &region),
            Err(Error::DegeneratePair(_))
        ));
        let a = interior_source(&mesh, &map, e[0].boundary, e[3].boundary, &region).unwrap();
        let b = interior_source(&mesh, &map, e[3].boundary, e[0].boundary, &region).unwrap();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| *x == -*y));
        let outside: Vec<usize> = (0..mesh.num_nodes()).filter(|j| !region.contains(j)).collect();
        assert!(outside.iter().all(|&j| a.values[j] == 0.0));
        // a node at the origin sees N(0, ·) = 0 for both antipodal sources
        let o = mesh.nodes.iter().position(|p| p.coords.norm() < 1e-14);
        if let Some(o) = o {
            let c = interior_source(&mesh, &map, e[0].boundary, e[4].boundary, &[o]).unwrap();
            assert!(c.values[o].abs() < 1e-15);
        }
    }

    #[test]
    fn scatter_contract_and_residual() {
        let ph = l_phantom();
        let map = SchwarzChristoffelMap::build(ph.domain(), &MapNormalization::default()).unwrap();
        let mesh = generate_mesh(&ph, 0.08).unwrap();
        let sim = BisweepSimulator::new(&ph, &map, mesh).unwrap();
        let zero = InteriorSourceVector::zeros(sim.mesh().num_nodes(), vec![]);
        assert!(solve_scatter(sim.k_sigma(), sim.k_one(), &zero).unwrap().iter().all(|&v| v == 0.0));
        let u = sim.pair_source(0.3, 2.5).unwrap();
        let w = solve_scatter(sim.k_sigma(), sim.k_one(), &u).unwrap();
        let r = sim.k_one().matrix.matvec(&u.values);
        let kw = sim.k_sigma().matrix.matvec(&w);
        let num: f64 = kw.iter().zip(&r).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(num / den <= 1e-10, "{}", num / den);
        assert!(r.iter().sum::<f64>().abs() <= 1e-9 * r.iter().map(|v| v.abs()).sum::<f64>());
    }

    #[test]
    fn homogeneous_gives_zero_matrix() {
        let map = DiskIdentity::regular(32).unwrap();
        let ph = Phantom::homogeneous(map.domain().clone());
        let e = map.electrode_positions(8).unwrap();
        let s = simulate_bisweep(&ph, &map, &e, 0.2).unwrap();
        assert_eq!(s.max_abs(), 0.0);
        let mesh = generate_mesh(&ph, 0.2).unwrap();
        let sim = BisweepSimulator::new(&ph, &map, mesh).unwrap();
        assert!(sim.sweep(0.0, &[1.0, 2.0]).unwrap().iter().all(|&v| v == 0.0));
        let u = InteriorSourceVector::zeros(sim.mesh().num_nodes(), vec![]);
        assert!(solve_scatter(sim.k_sigma(), sim.k_one(), &u).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn four_electrode_identities() {
        let ph = l_phantom();
        let map = SchwarzChristoffelMap::build(ph.domain(), &MapNormalization::default()).unwrap();
        let sim = BisweepSimulator::new(&ph, &map, generate_mesh(&ph, 0.08).unwrap()).unwrap();
        let (x, y, p, q) = (0.2, 1.9, 3.1, 4.6);
        let a = sim.four_electrode(x, y, p, q).unwrap();
        let b = sim.four_electrode(p, q, x, y).unwrap();
        assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()));
        let c = sim.four_electrode(y, x, p, q).unwrap();
        assert_eq!(a, -c);
        // (x, y) = (p, q) is the bisweep entry
        let e: Vec<Electrode> = [x, y]
            .iter()
            .map(|&t| crate::conformal::electrode_at(&map, map.domain().closest_boundary_point(map.from_disk(pt(t.cos(), t.sin())).unwrap())).unwrap())
            .collect();
        let s = sim.simulate(&e).unwrap();
        let direct = sim.four_electrode(x, y, x, y).unwrap();
        assert!((s.get(0, 1) - direct).abs() <= 1e-8 * direct.abs());
        // cocycle in the first pair
        let z = 5.5;
        let w1 = sim.four_electrode(x, y, p, q).unwrap() + sim.four_electrode(y, z, p, q).unwrap();
        let w2 = sim.four_electrode(x, z, p, q).unwrap();
        assert!((w1 - w2).abs() <= 1e-10 * w2.abs().max(1e-300));
    }

    #[test]
    fn nonnegative_when_conductivity_drops() {
        let ph = l_phantom();
        let map = SchwarzChristoffelMap::build(ph.domain(), &MapNormalization::default()).unwrap();
        let e = map.electrode_positions(12).unwrap();
        let s = simulate_bisweep(&ph, &map, &e, 0.1).unwrap();
        assert!(s.values().iter().all(|&v| v >= -1e-12));
        assert!(s.max_abs() > 0.0);
        assert!(BisweepMatrix::new(s.values().clone()).is_ok());
    }

    #[test]
    fn sweep_matches_matrix_row() {
        let (ph, map) = disk_phantom(48, 0.4, 0.3);
        let sim = BisweepSimulator::new(&ph, &map, generate_mesh(&ph, 0.1).unwrap()).unwrap();
        let e = map.electrode_positions(10).unwrap();
        let s = sim.simulate(&e).unwrap();
        let angles: Vec<f64> = e.iter().map(|e| e.disk_angle).collect();
        let prof = sim.sweep(angles[0], &angles).unwrap();
        let row = crate::pipeline::sweep_restriction(&s, angles[0], &angles).unwrap();
        assert_eq!(prof[0], 0.0);
        for (a, b) in prof.iter().zip(&row) {
            assert!((a - b).abs() <= 1e-10 * s.max_abs());
        }
    }
}
