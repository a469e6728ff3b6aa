//! Closed-form Neumann–Green function of the unit disk and the quantities
//! built from it: single- and point-pair source gradients, and the dipole
//! traces used as factorization-method test functions.
//!
//! Everything is evaluated in real arithmetic on explicit components.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{pt, Point, Vector};

/// Coincidence threshold for the logarithmic singularity.
pub const COINCIDENCE_TOL: f64 = 1e-12;
/// Below this radius the source point is treated as the origin branch.
pub const ORIGIN_TOL: f64 = 1e-14;

/// N(x, y) for x, y in the closed unit disk.
pub fn neumann_green(x: Point, y: Point) -> Result<f64> {
    let dxy = (y - x).norm();
    if dxy < COINCIDENCE_TOL {
        return Err(Error::Singularity(format!(
            "Neumann–Green function evaluated at coincident points ({}, {})",
            x.x, x.y
        )));
    }
    let ry = y.coords.norm();
    if ry < ORIGIN_TOL {
        return Ok(-x.coords.norm().ln() / (2.0 * PI));
    }
    let yhat = y.coords / ry;
    let mirror = (yhat - x.coords * ry).norm();
    Ok(-(dxy.ln() + mirror.ln()) / (2.0 * PI))
}

/// Gradient of N(·, y) at x.
pub fn grad_neumann_green(x: Point, y: Point) -> Result<Vector> {
    let d = x - y;
    let d2 = d.norm_squared();
    if d2.sqrt() < COINCIDENCE_TOL {
        return Err(Error::Singularity(format!(
            "Neumann–Green gradient evaluated at coincident points ({}, {})",
            x.x, x.y
        )));
    }
    let ry = y.coords.norm();
    if ry < ORIGIN_TOL {
        return Ok(-x.coords / (2.0 * PI * x.coords.norm_squared()));
    }
    let yhat = y.coords / ry;
    let m = yhat - x.coords * ry;
    Ok(-(d / d2 - m * (ry / m.norm_squared())) / (2.0 * PI))
}

/// ∇u_bg of the point-pair current δ(θ) − δ(φ) at an interior point x, via the
/// explicit four-pole expression in ξ = x₁ + i x₂ and its conjugate.
pub fn point_pair_gradient(x: Point, theta: f64, phi: f64) -> Vector {
    // 1/(ξ - e^{it}) and 1/(ξ̄ - e^{-it}) as (re, im) pairs
    let pole = |t: f64| -> ((f64, f64), (f64, f64)) {
        let (a, b) = (x.x - t.cos(), x.y - t.sin());
        let r2 = a * a + b * b;
        ((a / r2, -b / r2), (a / r2, b / r2))
    };
    let (p_t, pc_t) = pole(theta);
    let (p_f, pc_f) = pole(phi);
    // first component: -1/(ξ̄-e^{-iθ}) - 1/(ξ-e^{iθ}) + 1/(ξ̄-e^{-iφ}) + 1/(ξ-e^{iφ})
    let c1_re = -pc_t.0 - p_t.0 + pc_f.0 + p_f.0;
    // second component: i/(ξ̄-e^{-iθ}) - i/(ξ-e^{iθ}) - i/(ξ̄-e^{-iφ}) + i/(ξ-e^{iφ});
    // multiplying (re, im) by i gives (-im, re)
    let c2_re = -pc_t.1 + p_t.1 + pc_f.1 - p_f.1;
    Vector::new(c1_re, c2_re) / (2.0 * PI)
}

/// Interior point and unit direction of a dipole test function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleProbe {
    z: Point,
    d: Vector,
}

impl DipoleProbe {
    pub fn new(z: Point, d: Vector) -> Result<Self> {
        if z.coords.norm() >= 1.0 {
            return Err(Error::OutOfRange(format!("dipole point ({}, {}) is not inside the unit disk", z.x, z.y)));
        }
        if (d.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::OutOfRange(format!("dipole direction has norm {}", d.norm())));
        }
        Ok(Self { z, d })
    }

    /// Direction at angle `angle`.
    pub fn at_angle(z: Point, angle: f64) -> Result<Self> {
        Self::new(z, Vector::new(angle.cos(), angle.sin()))
    }

    pub fn point(&self) -> Point {
        self.z
    }
    pub fn direction(&self) -> Vector {
        self.d
    }
}

/// g_{z,d}(x) = (1/π) (z − x)·d / |z − x|² for x on the unit circle.
pub fn dipole_trace(probe: &DipoleProbe, x: Point) -> f64 {
    debug_assert!((x.coords.norm() - 1.0).abs() <= 1e-10, "dipole trace needs |x| = 1");
    let r = probe.z - x;
    r.dot(&probe.d) / (PI * r.norm_squared())
}

/// Coefficients of g_{z,d} in the trigonometric basis for indices 1..=m
/// (cos θ, sin θ, cos 2θ, …; each scaled by 1/√π).
///
/// With x = e^{iθ}, g = (1/π) Re(d/(z − x)) = −(1/π) Σ_k Re(d z^{k−1} e^{−ikθ}),
/// so the k-th cosine and sine coefficients are −Re(d z^{k−1})/√π and
/// −Im(d z^{k−1})/√π.
pub fn dipole_fourier_coeffs(probe: &DipoleProbe, m: usize) -> Vec<f64> {
    let scale = -1.0 / PI.sqrt();
    let mut out = Vec::with_capacity(m);
    // a = d z^{k-1}, advanced by complex multiplication with z
    let (mut are, mut aim) = (probe.d.x, probe.d.y);
    let (zr, zi) = (probe.z.x, probe.z.y);
    while out.len() < m {
        out.push(scale * are);
        if out.len() < m {
            out.push(scale * aim);
        }
        let next = (are * zr - aim * zi, are * zi + aim * zr);
        are = next.0;
        aim = next.1;
    }
    out
}

/// Point on the unit circle at angle `t`.
#[inline]
pub fn circle_point(t: f64) -> Point {
    pt(t.cos(), t.sin())
}
