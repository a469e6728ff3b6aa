//! Data-space conversions: bisweep matrices, the relative NtD matrix in the
//! trigonometric basis, sweep profiles, general current/voltage patterns,
//! and the noise and geometry-perturbation models.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::conformal::Electrode;
use crate::domain::{BoundaryPoint, Phantom, PhantomOptions, PolygonDomain};
use crate::error::{Error, Result};
use crate::geometry::{pt, Point};
use crate::rng::{substream, Stream};

/// The orthonormal basis of L²(∂B): index 0 is 1/√(2π), then
/// cos θ/√π, sin θ/√π, cos 2θ/√π, sin 2θ/√π, …
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrigBasis;

impl TrigBasis {
    /// Frequency of basis function `index`.
    pub fn frequency(index: usize) -> usize {
        index.div_ceil(2)
    }

    pub fn eval(index: usize, theta: f64) -> f64 {
        if index == 0 {
            return 1.0 / (2.0 * PI).sqrt();
        }
        let k = Self::frequency(index) as f64;
        if index % 2 == 1 {
            (k * theta).cos() / PI.sqrt()
        } else {
            (k * theta).sin() / PI.sqrt()
        }
    }

    /// Rows 1..=m of the basis evaluated at `angles`, as an m × len matrix.
    pub fn matrix(m: usize, angles: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(m, angles.len(), |i, l| Self::eval(i + 1, angles[l]))
    }
}

/// Equispaced angles 2π(j−1)/n, j = 1..n.
pub fn equispaced_angles(n: usize) -> Vec<f64> {
    (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect()
}

fn write_matrix_csv(header: usize, m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    writeln!(s, "{header}").unwrap();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        writeln!(s, "{}", row.join(",")).unwrap();
    }
    s
}

fn read_matrix_csv(text: &str, what: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    let n: usize = lines
        .next()
        .ok_or_else(|| Error::parse(what, "empty file"))?
        .parse()
        .map_err(|_| Error::parse(what, "first line must be the matrix size"))?;
    let mut m = DMatrix::zeros(n, n);
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        if i >= n {
            return Err(Error::parse(what, format!("more than {n} rows")));
        }
        let vals: Vec<&str> = line.split(',').map(str::trim).collect();
        if vals.len() != n {
            return Err(Error::parse(what, format!("row {} has {} entries, expected {n}", i + 1, vals.len())));
        }
        for (j, v) in vals.iter().enumerate() {
            m[(i, j)] = v.parse().map_err(|_| Error::parse(what, format!("bad number {v:?} in row {}", i + 1)))?;
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::parse(what, format!("expected {n} rows, found {rows}")));
    }
    Ok(m)
}

/// Symmetric, zero-diagonal matrix of relative two-electrode measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct BisweepMatrix {
    values: DMatrix<f64>,
    electrodes: Option<Vec<Electrode>>,
}

impl BisweepMatrix {
    /// Validate an exactly symmetric, zero-diagonal matrix.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let n = values.nrows();
        if values.ncols() != n {
            return Err(Error::Dimension(format!("bisweep matrix is {}×{}", n, values.ncols())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("bisweep matrix has non-finite entries".into()));
        }
        for i in 0..n {
            if values[(i, i)] != 0.0 {
                return Err(Error::Validation(format!("bisweep diagonal entry {i} is not zero")));
            }
            for j in 0..i {
                if values[(i, j)] != values[(j, i)] {
                    return Err(Error::Validation(format!("bisweep matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { values, electrodes: None })
    }

    /// Keep the strictly upper triangle, mirror it, and zero the diagonal.
    pub fn from_upper(mut values: DMatrix<f64>) -> Self {
        let n = values.nrows();
        for i in 0..n {
            values[(i, i)] = 0.0;
            for j in i + 1..n {
                values[(j, i)] = values[(i, j)];
            }
        }
        Self { values, electrodes: None }
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: DMatrix::zeros(n, n), electrodes: None }
    }

    pub fn with_electrodes(mut self, electrodes: Vec<Electrode>) -> Result<Self> {
        if electrodes.len() != self.n() {
            return Err(Error::Dimension(format!("{} electrodes for a {}-electrode matrix", electrodes.len(), self.n())));
        }
        self.electrodes = Some(electrodes);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn electrodes(&self) -> Option<&[Electrode]> {
        self.electrodes.as_deref()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn to_csv(&self) -> String {
        write_matrix_csv(self.n(), &self.values)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        Self::new(read_matrix_csv(text, "bisweep CSV")?)
    }
}

/// Relative NtD matrix λ̃_ij, i, j = 1..M, in the trigonometric basis.
#[derive(Debug, Clone, PartialEq)]
pub struct NtdMatrix {
    values: DMatrix<f64>,
}

impl NtdMatrix {
    /// Accept a matrix that is symmetric to 1e−9 relative, then symmetrize it exactly.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let m = values.nrows();
        if values.ncols() != m || m == 0 {
            return Err(Error::Dimension(format!("NtD matrix is {}×{}", m, values.ncols())));
        }
        let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let asym = (&values - values.transpose()).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if asym > 1e-9 * scale {
            return Err(Error::Validation(format!("NtD matrix asymmetry {asym:.2e} exceeds tolerance")));
        }
        let sym = (&values + values.transpose()) * 0.5;
        Ok(Self { values: sym })
    }

    pub fn order(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// Leading m × m block.
    pub fn truncate(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.order() {
            return Err(Error::OutOfRange(format!("order {m} outside 1..={}", self.order())));
        }
        Ok(Self { values: self.values.view((0, 0), (m, m)).into_owned() })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { values: &self.values * c }
    }

    pub fn to_csv(&self) -> String {
        write_matrix_csv(self.order(), &self.values)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        Self::new(read_matrix_csv(text, "NtD CSV")?)
    }
}

/// λ̃ = −½ c with c_ij = (4π²/n²) Σ_{k,l} φ_i(x̃_l) φ_j(x̃_k) ς_kl on the
/// equispaced disk grid, truncated to order `m`.
pub fn bisweep_to_ntd(s: &BisweepMatrix, m: usize) -> Result<NtdMatrix> {
    let n = s.n();
    if m == 0 || m + 1 > n {
        return Err(Error::OutOfRange(format!("order {m} outside 1..={}", n.saturating_sub(1))));
    }
    let b = TrigBasis::matrix(m, &equispaced_angles(n));
    let w = 4.0 * PI * PI / (n * n) as f64;
    let c = &b * s.values().transpose() * b.transpose() * w;
    NtdMatrix::new(c * -0.5)
}

/// Truncated series ς(x, y) = Σ λ_ik (φ_k(x)φ_i(x) − 2φ_k(x)φ_i(y) + φ_k(y)φ_i(y))
/// at all pairs of the given disk angles.
pub fn ntd_to_bisweep(l: &NtdMatrix, angles: &[f64]) -> BisweepMatrix {
    let f = TrigBasis::matrix(l.order(), angles);
    let a = f.transpose() * l.values() * &f;
    let p = angles.len();
    let s = DMatrix::from_fn(p, p, |x, y| if x == y { 0.0 } else { (a[(x, x)] - 2.0 * a[(y, x)]) + a[(y, y)] });
    BisweepMatrix::from_upper(s)
}

fn check_patterns(p: &DMatrix<f64>, n: usize, what: &str) -> Result<()> {
    if p.ncols() != n || p.nrows() + 1 != n {
        return Err(Error::Dimension(format!("{what} patterns are {}×{}, expected {}×{n}", p.nrows(), p.ncols(), n - 1)));
    }
    for i in 0..p.nrows() {
        let row = p.row(i);
        let l1: f64 = row.iter().map(|v| v.abs()).sum();
        if row.sum().abs() > 1e-12 * l1.max(f64::MIN_POSITIVE) || l1 == 0.0 {
            return Err(Error::Validation(format!("{what} pattern {i} is not a nonzero mean-free vector")));
        }
    }
    let sv = p.clone().svd(false, false).singular_values;
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    if lo <= 1e-12 * hi {
        return Err(Error::Inversion(format!("{what} patterns are linearly dependent")));
    }
    Ok(())
}

/// Recover ς from measurements m_ij = Q(Σ_k α_ik δ_k, Σ_l β_jl δ_l) = −½ (α ς βᵀ)_ij.
pub fn general_to_bisweep(m: &DMatrix<f64>, alpha: &DMatrix<f64>, beta: &DMatrix<f64>) -> Result<BisweepMatrix> {
    let n = alpha.ncols();
    if n < 2 {
        return Err(Error::Dimension("need at least two electrodes".into()));
    }
    check_patterns(alpha, n, "current")?;
    check_patterns(beta, n, "voltage")?;
    if m.nrows() != n - 1 || m.ncols() != n - 1 {
        return Err(Error::Dimension(format!("measurement matrix is {}×{}, expected {}×{}", m.nrows(), m.ncols(), n - 1, n - 1)));
    }
    let inv = |p: &DMatrix<f64>| {
        (p * p.transpose()).try_inverse().ok_or_else(|| Error::Inversion("pattern Gram matrix is singular".into()))
    };
    let alpha_pinv = alpha.transpose() * inv(alpha)?;
    let beta_t_pinv = inv(beta)? * beta;
    // X = P ς P with P the mean-free projector
    let x = &alpha_pinv * (m * -2.0) * beta_t_pinv;
    let x = (&x + x.transpose()) * 0.5;
    let s = DMatrix::from_fn(n, n, |k, l| if k == l { 0.0 } else { x[(k, l)] - 0.5 * (x[(k, k)] + x[(l, l)]) });
    Ok(BisweepMatrix::from_upper(s))
}

/// Anything that can report ς(x, ·) at disk angles.
pub trait BisweepSource {
    fn sweep(&self, fixed: f64, samples: &[f64]) -> Result<Vec<f64>>;
}

impl BisweepSource for BisweepMatrix {
    /// Angles must lie on the equispaced grid (or on the stored electrode angles).
    fn sweep(&self, fixed: f64, samples: &[f64]) -> Result<Vec<f64>> {
        let angles: Vec<f64> = match &self.electrodes {
            Some(e) => e.iter().map(|e| e.disk_angle).collect(),
            None => equispaced_angles(self.n()),
        };
        let find = |t: f64| {
            angles
                .iter()
                .position(|&a| {
                    let d = (a - t).rem_euclid(2.0 * PI);
                    d.min(2.0 * PI - d) < 1e-9
                })
                .ok_or_else(|| Error::OutOfRange(format!("angle {t} is not an electrode of this matrix")))
        };
        let i = find(fixed)?;
        samples.iter().map(|&t| Ok(self.values[(i, find(t)?)])).collect()
    }
}

/// Sweep data: ς(x₁, ·) at the given disk angles.
pub fn sweep_restriction(source: &dyn BisweepSource, fixed: f64, samples: &[f64]) -> Result<Vec<f64>> {
    source.sweep(fixed, samples)
}

/// Profile CSV with a `theta,value` header.
pub fn sweep_to_csv(angles: &[f64], values: &[f64]) -> String {
    let mut s = String::from("theta,value\n");
    for (t, v) in angles.iter().zip(values) {
        writeln!(s, "{t},{v}").unwrap();
    }
    s
}

/// Add symmetric Gaussian noise with standard deviation `level · max|ς|`.
/// Each upper-triangle entry draws from its own seeded sub-stream.
pub fn add_noise(s: &BisweepMatrix, level: f64, seed: u64) -> Result<BisweepMatrix> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::OutOfRange(format!("noise level must be nonnegative, got {level}")));
    }
    if level == 0.0 {
        return Ok(s.clone());
    }
    let n = s.n();
    let std = level * s.max_abs();
    let mut v = s.values().clone();
    for i in 0..n {
        for j in i + 1..n {
            let z: f64 = substream(seed, Stream::Noise, (i * n + j) as u64).sample(StandardNormal);
            v[(i, j)] += std * z;
        }
    }
    let mut out = BisweepMatrix::from_upper(v);
    out.electrodes = s.electrodes.clone();
    Ok(out)
}

/// Moves original electrode positions onto a perturbed boundary: closest
/// point, then a uniform tangential jitter of at most `jitter` in arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeRule {
    pub domain: PolygonDomain,
    pub jitter: f64,
    pub seed: u64,
}

impl ElectrodeRule {
    pub fn apply(&self, points: &[Point]) -> Vec<BoundaryPoint> {
        points
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                let bp = self.domain.closest_boundary_point(x);
                if self.jitter == 0.0 {
                    return bp;
                }
                let d: f64 = substream(self.seed, Stream::Jitter, j as u64).random_range(-1.0..=1.0);
                self.domain.boundary_point_at(bp.arc_length + d * self.jitter)
            })
            .collect()
    }
}

/// Perturbed phantom D′ (vertices moved by at most `magnitude · diam`, same
/// inclusions) and the electrode displacement rule for it.
pub fn perturb_geometry(phantom: &Phantom, magnitude: f64, seed: u64, opts: PhantomOptions) -> Result<(Phantom, ElectrodeRule)> {
    if !(magnitude >= 0.0 && magnitude.is_finite()) {
        return Err(Error::OutOfRange(format!("perturbation magnitude must be nonnegative, got {magnitude}")));
    }
    let radius = magnitude * phantom.domain().diameter();
    if magnitude == 0.0 {
        let rule = ElectrodeRule { domain: phantom.domain().clone(), jitter: 0.0, seed };
        return Ok((phantom.clone(), rule));
    }
    let mut last = None;
    for attempt in 0..10u64 {
        let verts: Vec<Point> = phantom
            .domain()
            .vertices()
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let mut rng = substream(seed, Stream::Perturbation, attempt << 32 | k as u64);
                let r = radius * rng.random::<f64>().sqrt();
                let t = 2.0 * PI * rng.random::<f64>();
                pt(v.x + r * t.cos(), v.y + r * t.sin())
            })
            .collect();
        match PolygonDomain::new(verts).and_then(|d| phantom.with_domain(d, opts)) {
            Ok(p) => {
                let rule = ElectrodeRule { domain: p.domain().clone(), jitter: radius, seed };
                return Ok((p, rule));
            }
            Err(e) => last = Some(e),
        }
    }
    Err(Error::Admissibility(format!(
        "geometry perturbation failed after 10 attempts: {}",
        last.map(|e| e.to_string()).unwrap_or_default()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Inclusion;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn basis_is_orthonormal_under_trapezoid() {
        let n = 64;
        let ang = equispaced_angles(n);
        for i in 0..n - 1 {
            for j in 0..n - 1 {
                let s: f64 = ang.iter().map(|&t| TrigBasis::eval(i, t) * TrigBasis::eval(j, t)).sum::<f64>() * 2.0 * PI
                    / n as f64;
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((s - e).abs() < 1e-12, "({i},{j}) {s}");
            }
        }
    }

    #[test]
    fn zero_bisweep_gives_zero_ntd() {
        let l = bisweep_to_ntd(&BisweepMatrix::zeros(8), 7).unwrap();
        assert!(l.values().iter().all(|&v| v == 0.0));
        assert!(bisweep_to_ntd(&BisweepMatrix::zeros(8), 8).is_err());
        assert!(bisweep_to_ntd(&BisweepMatrix::zeros(8), 0).is_err());
    }

    #[test]
    fn single_mode_is_recovered() {
        let a = 0.37;
        for n in [8usize, 9, 16, 33] {
            let ang = equispaced_angles(n);
            let s = DMatrix::from_fn(n, n, |k, l| a * (TrigBasis::eval(1, ang[k]) - TrigBasis::eval(1, ang[l])).powi(2));
            let l = bisweep_to_ntd(&BisweepMatrix::from_upper(s), n - 2).unwrap();
            for i in 0..n - 2 {
                for j in 0..n - 2 {
                    let e = if i == 0 && j == 0 { a } else { 0.0 };
                    assert!((l.get(i, j) - e).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn series_diagonal_is_zero() {
        let l = NtdMatrix::new(DMatrix::from_fn(5, 5, |i, j| 1.0 / (1.0 + i as f64 + j as f64))).unwrap();
        let s = ntd_to_bisweep(&l, &equispaced_angles(12));
        assert!((0..12).all(|i| s.get(i, i) == 0.0));
        let z = ntd_to_bisweep(&NtdMatrix::new(DMatrix::zeros(5, 5)).unwrap(), &equispaced_angles(12));
        assert_eq!(z.max_abs(), 0.0);
    }

    /// Largest order for which the discrete basis stays orthonormal on n points.
    fn max_exact_order(n: usize) -> usize {
        if n.is_multiple_of(2) {
            n - 2
        } else {
            n - 1
        }
    }

    proptest! {
        #[test]
        fn series_roundtrip(n in 6usize..40, seed in any::<u64>()) {
            let m = max_exact_order(n);
            let mut rng = substream(seed, Stream::Noise, 0);
            let raw = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
            let l = NtdMatrix::new((&raw + raw.transpose()) * 0.5).unwrap();
            let back = bisweep_to_ntd(&ntd_to_bisweep(&l, &equispaced_angles(n)), m).unwrap();
            let err = (back.values() - l.values()).abs().max();
            prop_assert!(err < 1e-10, "err {}", err);
        }

        #[test]
        fn kernel_identity(n in 6usize..30, seed in any::<u64>()) {
            // fᵀ Λ̃ g = −½ fᵀ ς g for quadrature-weighted, band-limited mean-free grid vectors
            let m = max_exact_order(n);
            let mut rng = substream(seed, Stream::Jitter, 0);
            let s = BisweepMatrix::from_upper(DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)));
            let l = bisweep_to_ntd(&s, m).unwrap();
            let ang = equispaced_angles(n);
            let w = 2.0 * PI / n as f64;
            let b = TrigBasis::matrix(m, &ang);
            let mut draw = || {
                let raw = nalgebra::DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
                // keep only the resolved band
                b.transpose() * (&b * raw) * w
            };
            let (f, g) = (draw(), draw());
            prop_assert!(f.sum().abs() < 1e-12);
            let fc = &b * &f * w;
            let gc = &b * &g * w;
            let lhs = (fc.transpose() * l.values() * gc)[(0, 0)];
            let rhs = -0.5 * (f.transpose() * s.values() * g)[(0, 0)] * w * w;
            prop_assert!((lhs - rhs).abs() <= 1e-8 * (1.0 + rhs.abs()), "{} vs {}", lhs, rhs);
        }

        #[test]
        fn bisweep_matrix_invariants(n in 4usize..20, seed in any::<u64>()) {
            let mut rng = substream(seed, Stream::Noise, 1);
            let s = BisweepMatrix::from_upper(DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)));
            prop_assert!(BisweepMatrix::new(s.values().clone()).is_ok());
            let noisy = add_noise(&s, 0.1, seed).unwrap();
            prop_assert!(BisweepMatrix::new(noisy.values().clone()).is_ok());
        }
    }

    fn adjacent_patterns(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n - 1, n, |i, k| if k == i { 1.0 } else if k == i + 1 { -1.0 } else { 0.0 })
    }

    fn random_bisweep(n: usize, seed: u64) -> BisweepMatrix {
        let mut rng = substream(seed, Stream::Noise, 9);
        BisweepMatrix::from_upper(DMatrix::from_fn(n, n, |_, _| rng.random_range(0.0..1.0)))
    }

    #[test]
    fn general_patterns_adjacent_telescoping() {
        let n = 9;
        let s = random_bisweep(n, 3);
        let a = adjacent_patterns(n);
        let m = &a * s.values() * a.transpose() * -0.5;
        let rec = general_to_bisweep(&m, &a, &a).unwrap();
        // telescoping: δ_k − δ_l = Σ_{i∈[k,l)} (δ_i − δ_{i+1}), so ς_kl = Σ_{i,j∈[k,l)} m_ij
        for k in 0..n {
            for l in k + 1..n {
                let mut t = 0.0;
                for i in k..l {
                    for j in k..l {
                        t += m[(i, j)];
                    }
                }
                let tele = t;
                assert!((rec.get(k, l) - tele).abs() < 1e-11);
                assert!((rec.get(k, l) - s.get(k, l)).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn general_patterns_random_roundtrip() {
        let n = 12;
        let s = random_bisweep(n, 5);
        let mut rng = substream(77, Stream::Noise, 0);
        let mut mk = || {
            let mut p = DMatrix::from_fn(n - 1, n, |_, _| rng.random_range(-1.0..1.0));
            for i in 0..n - 1 {
                let mean = p.row(i).sum() / n as f64;
                for k in 0..n {
                    p[(i, k)] -= mean;
                }
            }
            p
        };
        let (a, b) = (mk(), mk());
        let m = &a * s.values() * b.transpose() * -0.5;
        let rec = general_to_bisweep(&m, &a, &b).unwrap();
        assert!((rec.values() - s.values()).abs().max() < 1e-11);
    }

    #[test]
    fn general_patterns_errors() {
        let n = 6;
        let mut a = adjacent_patterns(n);
        let m = DMatrix::zeros(n - 1, n - 1);
        let mut c = a.clone();
        for k in 0..n {
            c[(0, k)] = 1.0;
        }
        assert!(matches!(general_to_bisweep(&m, &c, &a), Err(Error::Validation(_))));
        // duplicate row → rank deficient
        for k in 0..n {
            a[(1, k)] = a[(0, k)];
        }
        assert!(matches!(general_to_bisweep(&m, &a, &adjacent_patterns(n)), Err(Error::Inversion(_))));
    }

    #[test]
    fn matrix_sweep_rows() {
        let s = random_bisweep(8, 1);
        let ang = equispaced_angles(8);
        let prof = sweep_restriction(&s, ang[0], &ang).unwrap();
        assert_eq!(prof[0], 0.0);
        assert_eq!(prof, s.row(0));
        assert!(s.sweep(0.1, &ang).is_err());
    }

    #[test]
    fn noise_contract() {
        let s = random_bisweep(10, 2);
        assert_eq!(add_noise(&s, 0.0, 1).unwrap(), s);
        assert_eq!(add_noise(&s, 0.02, 1).unwrap(), add_noise(&s, 0.02, 1).unwrap());
        assert_ne!(add_noise(&s, 0.02, 1).unwrap(), add_noise(&s, 0.02, 2).unwrap());
        assert!(add_noise(&s, -0.1, 1).is_err());
    }

    #[test]
    fn noise_statistics() {
        let n = 143; // 143·142/2 = 10153 upper entries
        let mut v = DMatrix::zeros(n, n);
        v[(0, 1)] = 1.0;
        let s = BisweepMatrix::from_upper(v);
        let level = 0.02;
        let noisy = add_noise(&s, level, 42).unwrap();
        let d = noisy.values() - s.values();
        let vals: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| d[(i, j)]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        assert!(vals.len() >= 10_000);
        assert!((var.sqrt() / level - 1.0).abs() < 0.05);
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
        Phantom::new(dom, vec![Inclusion::disk(pt(0.5, 1.4), 0.25, 0.5)]).unwrap()
    }

    #[test]
    fn perturbation_zero_is_identity() {
        let ph = l_phantom();
        let (p2, rule) = perturb_geometry(&ph, 0.0, 3, PhantomOptions::default()).unwrap();
        assert_eq!(p2.domain(), ph.domain());
        let x = ph.domain().boundary_point_at(1.3).point;
        assert_eq!(rule.apply(&[x])[0].point, x);
    }

    #[test]
    fn perturbation_bounds() {
        let ph = l_phantom();
        let mag = 0.01;
        let bound = mag * ph.domain().diameter();
        for seed in 0..5 {
            let (p2, rule) = perturb_geometry(&ph, mag, seed, PhantomOptions::default()).unwrap();
            assert_eq!(p2.domain().len(), ph.domain().len());
            assert!(crate::geometry::is_simple(p2.domain().vertices()));
            // Hausdorff distance by dense sampling of both boundaries
            let sample = |d: &PolygonDomain| -> Vec<Point> {
                (0..4000).map(|i| d.boundary_point_at(d.perimeter() * i as f64 / 4000.0).point).collect()
            };
            let (a, b) = (sample(ph.domain()), sample(p2.domain()));
            let h1 = a.iter().map(|&p| p2.domain().boundary_distance(p)).fold(0.0, f64::max);
            let h2 = b.iter().map(|&p| ph.domain().boundary_distance(p)).fold(0.0, f64::max);
            assert!(h1.max(h2) <= bound * (1.0 + 1e-9));
            let moved = rule.apply(&a[..16]);
            for (orig, m) in a[..16].iter().zip(&moved) {
                assert!(p2.domain().boundary_distance(m.point) < 1e-12);
                assert!((orig - m.point).norm() <= 3.0 * bound);
            }
        }
    }

    #[test]
    fn csv_roundtrip() {
        let s = random_bisweep(7, 11);
        assert_eq!(BisweepMatrix::from_csv(&s.to_csv()).unwrap(), s);
        let l = bisweep_to_ntd(&s, 5).unwrap();
        assert_eq!(NtdMatrix::from_csv(&l.to_csv()).unwrap(), l);
        assert!(BisweepMatrix::from_csv("3\n0,1,2\n1,0,3\n").is_err());
    }
}
