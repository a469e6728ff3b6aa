//! Compressed-row matrices and P1 stiffness assembly.

use crate::domain::Phantom;
use crate::error::{Error, Result};
use crate::fem::mesh::Mesh;

/// Square sparse matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets; duplicates are summed in input order.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        // stable sort keeps the summation order of duplicates deterministic
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, col_idx, values }
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, row_ptr: vec![0; n + 1], col_idx: vec![], values: vec![] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b].iter().copied().zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    /// Rows holding at least one stored entry.
    pub fn nonzero_rows(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.row_ptr[i + 1] > self.row_ptr[i]).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Which piecewise-constant coefficient a stiffness matrix integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coefficient {
    Sigma,
    OneMinusSigma,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StiffnessMatrix {
    pub matrix: CsrMatrix,
    pub coefficient: Coefficient,
}

/// P1 element stiffness matrix ∫ ∇φ_i·∇φ_j on a CCW triangle.
pub fn element_stiffness(p: [crate::geometry::Point; 3]) -> [[f64; 3]; 3] {
    let area2 = crate::geometry::orient(p[0], p[1], p[2]);
    // ∇φ_i = (y_j − y_k, x_k − x_j) / (2A) for (i, j, k) cyclic
    let g: [(f64, f64); 3] = std::array::from_fn(|i| {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        (p[j].y - p[k].y, p[k].x - p[j].x)
    });
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = (g[i].0 * g[j].0 + g[i].1 * g[j].1) / (2.0 * area2);
        }
    }
    k
}

/// Assemble K_σ or K_{1−σ} with σ read from the mesh region labels.
pub fn assemble_stiffness(mesh: &Mesh, phantom: &Phantom, mode: Coefficient) -> Result<StiffnessMatrix> {
    if mesh.regions.len() != mesh.triangles.len() {
        return Err(Error::Dimension("mesh has no region labels".into()));
    }
    let kappas: Vec<f64> = phantom.inclusions().iter().map(|i| i.kappa).collect();
    let mut trip = Vec::with_capacity(9 * mesh.triangles.len());
    for (t, (tri, region)) in mesh.triangles.iter().zip(&mesh.regions).enumerate() {
        let sigma = match region {
            None => 1.0,
            Some(i) => *kappas.get(*i).ok_or_else(|| Error::Dimension(format!("region label {i} has no inclusion")))?,
        };
        let coef = match mode {
            Coefficient::Sigma => sigma,
            Coefficient::OneMinusSigma => 1.0 - sigma,
        };
        if coef == 0.0 {
            continue;
        }
        let ke = element_stiffness(mesh.triangle_points(t));
        for a in 0..3 {
            for b in 0..3 {
                trip.push((tri[a], tri[b], coef * ke[a][b]));
            }
        }
    }
    Ok(StiffnessMatrix { matrix: CsrMatrix::from_triplets(mesh.nodes.len(), trip), coefficient: mode })
}
