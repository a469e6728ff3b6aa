//! Gauss–Jacobi quadrature on [-1, 1] for weights (1 - x)^a (1 + x)^b.
//!
//! Nodes and weights come from the Golub–Welsch eigenvalue problem for the
//! symmetric tridiagonal Jacobi matrix of the three-term recurrence.

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussJacobi {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl GaussJacobi {
    /// `n`-point rule for the weight (1 - x)^alpha (1 + x)^beta.
    pub fn new(n: usize, alpha: f64, beta: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::OutOfRange("quadrature needs at least one node".into()));
        }
        if !(alpha > -1.0 && beta > -1.0) {
            return Err(Error::OutOfRange(format!(
                "Jacobi exponents must exceed -1, got ({alpha}, {beta})"
            )));
        }
        let (a, b) = (alpha, beta);
        let ab = a + b;
        let mut jm = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            let kf = k as f64;
            let diag = if k == 0 {
                (b - a) / (ab + 2.0)
            } else {
                (b * b - a * a) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
            };
            jm[(k, k)] = diag;
            if k + 1 < n {
                let m = kf + 1.0;
                // off-diagonal sqrt(beta_m); the m = 1 case is simplified to avoid 0/0 when a + b = -1
                let bm = if m == 1.0 {
                    4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab).powi(2) * (3.0 + ab))
                } else {
                    4.0 * m * (m + a) * (m + b) * (m + ab)
                        / ((2.0 * m + ab).powi(2) * (2.0 * m + ab + 1.0) * (2.0 * m + ab - 1.0))
                };
                let off = bm.sqrt();
                jm[(k, k + 1)] = off;
                jm[(k + 1, k)] = off;
            }
        }
        let log_mu0 = (ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(a + 1.0) + ln_gamma(b + 1.0)
            - ln_gamma(ab + 2.0);
        let mu0 = log_mu0.exp();
        let eig = SymmetricEigen::new(jm);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], mu0 * v0 * v0)
            })
            .collect();
        pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
            alpha,
            beta,
        })
    }

    pub fn legendre(n: usize) -> Self {
        Self::new(n, 0.0, 0.0).expect("Legendre rule is always valid")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// ∫_{-1}^{1} (1-x)^alpha (1+x)^beta f(x) dx.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}
