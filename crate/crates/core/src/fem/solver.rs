//! Projected, Jacobi-preconditioned conjugate gradients for singular
//! pure-Neumann systems whose kernel is the constant vector.

use crate::error::{Error, Result};
use crate::fem::assembly::CsrMatrix;

/// Relative residual the scatter solves aim for.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project_mean_zero(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= m;
    }
}

/// Solve K x = b for symmetric positive semidefinite K with kernel span{1}
/// and Σ b = 0. The returned x has mean zero.
pub fn solve_projected_cg(k: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveStats)> {
    let n = k.dim();
    if b.len() != n {
        return Err(Error::Dimension(format!("right-hand side has length {}, matrix is {n}×{n}", b.len())));
    }
    let mut r = b.to_vec();
    project_mean_zero(&mut r);
    let bnorm = dot(&r, &r).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, SolveStats { iterations: 0, relative_residual: 0.0 }));
    }
    let inv_diag: Vec<f64> = k.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let precondition = |r: &[f64], z: &mut Vec<f64>| {
        for i in 0..n {
            z[i] = inv_diag[i] * r[i];
        }
        project_mean_zero(z);
    };
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let mut rel = 1.0;
    for it in 1..=max_iter {
        k.matvec_into(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            break;
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= tol {
            project_mean_zero(&mut x);
            return Ok((x, SolveStats { iterations: it, relative_residual: rel }));
        }
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverNonconvergence { iterations: max_iter, residual: rel })
}
