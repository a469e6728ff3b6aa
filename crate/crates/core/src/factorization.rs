//! Factorization-method imaging: truncated SVD of the relative NtD matrix,
//! the truncated Picard quotient for dipole probes, and indicator images.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::conformal::ConformalMap;
use crate::diskgreens::{dipole_fourier_coeffs, DipoleProbe};
use crate::error::{Error, Result};
use crate::geometry::{pt, Point, Vector};
use crate::pipeline::NtdMatrix;

/// Guard radius for probe points in the disk.
pub const DEFAULT_R_MAX: f64 = 0.95;
/// Retained singular values below this fraction of the largest are rejected.
pub const SINGULAR_CUTOFF: f64 = 1e-14;

/// Singular system of the leading M × M block of an NtD matrix, sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    pub singular_values: Vec<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl SpectralData {
    pub fn order(&self) -> usize {
        self.singular_values.len()
    }

    fn check(&self) -> Result<()> {
        let s1 = self.singular_values[0];
        if s1 == 0.0 {
            return Err(Error::ZeroSpectrum);
        }
        if let Some((k, &s)) = self.singular_values.iter().enumerate().find(|(_, &s)| s < SINGULAR_CUTOFF * s1) {
            return Err(Error::TruncationOrder { index: k + 1, value: s });
        }
        Ok(())
    }

    /// Picard quotient for a coefficient vector g (basis indices 1..=M).
    fn quotient(&self, proj: &[f64]) -> Result<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for (p, s) in proj.iter().zip(&self.singular_values) {
            let p2 = p * p;
            num += p2 / s.abs();
            den += p2;
        }
        if den == 0.0 {
            return Err(Error::DegenerateProbe);
        }
        Ok(num / den)
    }

    /// gᵀ v_k for k = 1..M.
    fn project(&self, g: &[f64]) -> Vec<f64> {
        (0..self.order()).map(|k| self.v.column(k).iter().zip(g).map(|(a, b)| a * b).sum()).collect()
    }
}

/// Truncated SVD of λ restricted to its leading M × M block.
pub fn svd_ntd(lambda: &NtdMatrix, m: usize) -> Result<SpectralData> {
    let block = lambda.truncate(m)?;
    // L is symmetric, so L = Q diag(λ) Qᵀ gives the SVD with σ = |λ| and u = sign(λ) q.
    let eig = block.values().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()).then(a.cmp(&b)));
    let q = &eig.eigenvectors;
    let sign = |k: usize| if eig.eigenvalues[k] < 0.0 { -1.0 } else { 1.0 };
    Ok(SpectralData {
        singular_values: order.iter().map(|&k| eig.eigenvalues[k].abs()).collect(),
        u: DMatrix::from_fn(m, m, |i, j| sign(order[j]) * q[(i, order[j])]),
        v: DMatrix::from_fn(m, m, |i, j| q[(i, order[j])]),
    })
}

/// f̃_d(z) = Σ |gᵀv_k|²/|σ_k| / Σ |gᵀv_k|² with g the coefficients of g_{z,d}.
pub fn picard_indicator(spec: &SpectralData, z: Point, d: Vector) -> Result<f64> {
    spec.check()?;
    let probe = DipoleProbe::new(z, d)?;
    let g = dipole_fourier_coeffs(&probe, spec.order());
    spec.quotient(&spec.project(&g))
}

/// Equispaced unit directions at angles 2πk/N_d + offset.
pub fn dipole_directions(n_d: usize, offset: f64) -> Vec<Vector> {
    (0..n_d)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / n_d as f64 + offset;
            Vector::new(t.cos(), t.sin())
        })
        .collect()
}

/// Ind(z) = (1/N_d) Σ_k f̃_{d_k}(z) for an explicit list of directions.
pub fn indicator_at(spec: &SpectralData, z: Point, directions: &[Vector]) -> Result<f64> {
    spec.check()?;
    if directions.is_empty() {
        return Err(Error::OutOfRange("need at least one dipole direction".into()));
    }
    // g_{z,d} is linear in d, so two projections serve all directions
    let gx = spec.project(&dipole_fourier_coeffs(&DipoleProbe::new(z, Vector::new(1.0, 0.0))?, spec.order()));
    let gy = spec.project(&dipole_fourier_coeffs(&DipoleProbe::new(z, Vector::new(0.0, 1.0))?, spec.order()));
    let mut sum = 0.0;
    let mut proj = vec![0.0; gx.len()];
    for d in directions {
        for k in 0..proj.len() {
            proj[k] = d.x * gx[k] + d.y * gy[k];
        }
        sum += spec.quotient(&proj)?;
    }
    Ok(sum / directions.len() as f64)
}

/// Ind over a point set in the disk. Points with |z| > r_max give `None`.
/// The parallel and serial paths evaluate each point identically.
pub fn indicator_field(spec: &SpectralData, points: &[Point], n_d: usize, r_max: f64, parallel: bool) -> Result<Vec<Option<f64>>> {
    if n_d == 0 || n_d.is_multiple_of(2) {
        return Err(Error::OutOfRange(format!("dipole count must be odd and positive, got {n_d}")));
    }
    if !(r_max > 0.0 && r_max < 1.0) {
        return Err(Error::OutOfRange(format!("guard radius must lie in (0, 1), got {r_max}")));
    }
    spec.check()?;
    let dirs = dipole_directions(n_d, 0.0);
    let eval = |z: &Point| -> Result<Option<f64>> {
        if z.coords.norm() > r_max {
            return Ok(None);
        }
        indicator_at(spec, *z, &dirs).map(Some)
    };
    if parallel {
        points.par_iter().map(eval).collect()
    } else {
        points.iter().map(eval).collect()
    }
}

/// Where the sample grid lives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridSpec {
    /// `resolution` × `resolution` points over the bounding box of D.
    Domain { resolution: usize },
    /// `resolution` × `resolution` points over [−1, 1]².
    Disk { resolution: usize },
}

impl GridSpec {
    pub fn resolution(&self) -> usize {
        match *self {
            GridSpec::Domain { resolution } | GridSpec::Disk { resolution } => resolution,
        }
    }
}

/// Parameters of one reconstruction run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionParams {
    pub order: usize,
    pub dipoles: usize,
    pub grid: GridSpec,
    pub r_max: f64,
    /// Explicit cutoffs; `None` picks eight log-spaced levels between the 5th and 95th percentile.
    pub cutoffs: Option<Vec<f64>>,
    pub parallel: bool,
}

impl Default for ReconstructionParams {
    fn default() -> Self {
        Self { order: 12, dipoles: 15, grid: GridSpec::Domain { resolution: 161 }, r_max: DEFAULT_R_MAX, cutoffs: None, parallel: true }
    }
}

/// One grid sample: position in D (if mapped), in B, and its indicator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub domain_point: Option<Point>,
    pub disk_point: Option<Point>,
    pub indicator: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionGrid {
    pub params: ReconstructionParams,
    /// Order actually used, at most `params.order`.
    pub order: usize,
    pub nx: usize,
    pub ny: usize,
    /// Row-major from the bottom-left corner.
    pub samples: Vec<Sample>,
    pub cutoffs: Vec<f64>,
    /// Points inside the domain but beyond the guard radius.
    pub excluded: usize,
}

impl ReconstructionGrid {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().filter_map(|s| s.indicator)
    }

    /// Indices of samples with Ind below `cutoff`.
    pub fn level_set(&self, cutoff: f64) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| self.samples[i].indicator.is_some_and(|v| v < cutoff)).collect()
    }

    /// Sample with the smallest indicator.
    pub fn argmin(&self) -> Option<usize> {
        (0..self.samples.len())
            .filter(|&i| self.samples[i].indicator.is_some())
            .min_by(|&a, &b| self.samples[a].indicator.unwrap().total_cmp(&self.samples[b].indicator.unwrap()))
    }

    /// Rows "x_D,y_D,x_B,y_B,Ind" for evaluated samples.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x_D,y_D,x_B,y_B,Ind\n");
        for smp in &self.samples {
            if let (Some(d), Some(b), Some(v)) = (smp.domain_point, smp.disk_point, smp.indicator) {
                writeln!(s, "{},{},{},{},{}", d.x, d.y, b.x, b.y, v).unwrap();
            }
        }
        s
    }

    /// Plain PGM: gray level = number of cutoffs not exceeding Ind, white outside.
    pub fn to_pgm(&self) -> String {
        let white = self.cutoffs.len() + 1;
        let mut s = String::new();
        writeln!(s, "P2\n{} {}\n{}", self.nx, self.ny, white).unwrap();
        for row in (0..self.ny).rev() {
            let line: Vec<String> = (0..self.nx)
                .map(|col| match self.samples[row * self.nx + col].indicator {
                    None => white,
                    Some(v) => self.cutoffs.iter().filter(|&&c| c <= v).count(),
                })
                .map(|g| g.to_string())
                .collect();
            writeln!(s, "{}", line.join(" ")).unwrap();
        }
        s
    }
}

/// Percentile by linear interpolation between order statistics, p in [0, 100].
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = p / 100.0 * (v.len() - 1) as f64;
    let (i, f) = (pos.floor() as usize, pos.fract());
    if i + 1 < v.len() {
        v[i] * (1.0 - f) + v[i + 1] * f
    } else {
        v[i]
    }
}

/// `count` logarithmically spaced levels between the 5th and 95th percentile.
pub fn default_cutoffs(values: &[f64], count: usize) -> Vec<f64> {
    let (lo, hi) = (percentile(values, 5.0), percentile(values, 95.0));
    match count {
        0 => vec![],
        1 => vec![(lo * hi).sqrt()],
        _ if lo > 0.0 && hi > lo => (0..count).map(|k| lo * (hi / lo).powf(k as f64 / (count - 1) as f64)).collect(),
        _ => (0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect(),
    }
}

fn grid_axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Full imaging pipeline on precomputed NtD data.
pub fn reconstruct(lambda: &NtdMatrix, map: &dyn ConformalMap, params: &ReconstructionParams) -> Result<ReconstructionGrid> {
    let res = params.grid.resolution();
    if res < 2 {
        return Err(Error::OutOfRange(format!("grid resolution must be at least 2, got {res}")));
    }
    let spec = admissible_spectrum(lambda, params.order)?;
    if spec.order() < params.order {
        log::warn!(
            "singular values below {SINGULAR_CUTOFF:e} x sigma_1 beyond order {}; reconstructing with M = {} instead of {}",
            spec.order(),
            spec.order(),
            params.order
        );
    }
    let dom = map.domain();
    let mut samples: Vec<Sample> = match params.grid {
        GridSpec::Domain { .. } => {
            let (lo, hi) = dom.bounding_box();
            let (xs, ys) = (grid_axis(lo.x, hi.x, res), grid_axis(lo.y, hi.y, res));
            let pts: Vec<Point> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| pt(x, y))).collect();
            let to_disk = |p: &Point| -> Result<Sample> {
                if !dom.contains_interior(*p, 1e-9 * dom.diameter()) {
                    return Ok(Sample { domain_point: None, disk_point: None, indicator: None });
                }
                Ok(Sample { domain_point: Some(*p), disk_point: Some(map.to_disk(*p)?), indicator: None })
            };
            if params.parallel {
                pts.par_iter().map(to_disk).collect::<Result<_>>()?
            } else {
                pts.iter().map(to_disk).collect::<Result<_>>()?
            }
        }
        GridSpec::Disk { .. } => {
            let ax = grid_axis(-1.0, 1.0, res);
            let pts: Vec<Point> = ax.iter().flat_map(|&y| ax.iter().map(move |&x| pt(x, y))).collect();
            let from_disk = |w: &Point| -> Result<Sample> {
                if w.coords.norm() > params.r_max {
                    return Ok(Sample { domain_point: None, disk_point: None, indicator: None });
                }
                Ok(Sample { domain_point: Some(map.from_disk(*w)?), disk_point: Some(*w), indicator: None })
            };
            if params.parallel {
                pts.par_iter().map(from_disk).collect::<Result<_>>()?
            } else {
                pts.iter().map(from_disk).collect::<Result<_>>()?
            }
        }
    };
    let disk: Vec<Point> = samples.iter().map(|s| s.disk_point.unwrap_or(pt(2.0, 2.0))).collect();
    let ind = indicator_field(&spec, &disk, params.dipoles, params.r_max, params.parallel)?;
    let mut excluded = 0;
    for (s, v) in samples.iter_mut().zip(ind) {
        if s.disk_point.is_some() && v.is_none() {
            excluded += 1;
        }
        s.indicator = v;
    }
    if excluded > 0 {
        log::info!("{excluded} grid points beyond the guard radius {} were excluded", params.r_max);
    }
    let values: Vec<f64> = samples.iter().filter_map(|s| s.indicator).collect();
    let cutoffs = match &params.cutoffs {
        Some(c) => {
            let mut c = c.clone();
            c.sort_by(f64::total_cmp);
            c
        }
        None => default_cutoffs(&values, 8),
    };
    Ok(ReconstructionGrid { params: params.clone(), order: spec.order(), nx: res, ny: res, samples, cutoffs, excluded })
}

/// Largest leading block of order at most `m` whose spectrum passes the cutoff.
pub fn admissible_spectrum(lambda: &NtdMatrix, m: usize) -> Result<SpectralData> {
    let mut m = m;
    loop {
        let spec = svd_ntd(lambda, m)?;
        match spec.check() {
            Err(Error::TruncationOrder { index, .. }) if index > 1 => m = index - 1,
            other => return other.map(|_| spec),
        }
    }
}

/// ROC AUC of `scores` as a detector of `labels`, where a lower score means "positive".
/// Ties count one half.
pub fn roc_auc_low(scores: &[f64], labels: &[bool]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Mann–Whitney with average ranks
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let r = 0.5 * (i + j) as f64 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    let npos = labels.iter().filter(|&&l| l).count() as f64;
    let nneg = labels.len() as f64 - npos;
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    // positives should have small ranks
    1.0 - (rank_sum - npos * (npos + 1.0) / 2.0) / (npos * nneg)
}

/// 4-connected components of a set of grid cells (indices into an nx-wide row-major grid).
pub fn connected_components(cells: &[usize], nx: usize, ny: usize) -> Vec<Vec<usize>> {
    let mut member = vec![false; nx * ny];
    for &c in cells {
        member[c] = true;
    }
    let mut seen = vec![false; nx * ny];
    let mut comps = Vec::new();
    for &start in cells {
        if seen[start] {
            continue;
        }
        let mut comp = vec![];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(c) = stack.pop() {
            comp.push(c);
            let (r, col) = (c / nx, c % nx);
            let mut nb = Vec::with_capacity(4);
            if col > 0 {
                nb.push(c - 1);
            }
            if col + 1 < nx {
                nb.push(c + 1);
            }
            if r > 0 {
                nb.push(c - nx);
            }
            if r + 1 < ny {
                nb.push(c + nx);
            }
            for m in nb {
                if member[m] && !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}

/// Mean of a set of points.
pub fn mean_point(points: impl IntoIterator<Item = Point>) -> Option<Point> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for p in points {
        sx += p.x;
        sy += p.y;
        n += 1;
    }
    (n > 0).then(|| pt(sx / n as f64, sy / n as f64))
}

/// Picard quotient for an explicit coefficient vector, exposed for diagnostics.
pub fn picard_quotient(spec: &SpectralData, g: &[f64]) -> Result<f64> {
    spec.check()?;
    if g.len() != spec.order() {
        return Err(Error::Dimension(format!("{} coefficients for order {}", g.len(), spec.order())));
    }
    spec.quotient(&spec.project(g))
}

/// ‖L − U Σ Vᵀ‖_F / ‖L‖_F for the leading block.
pub fn svd_reconstruction_error(lambda: &NtdMatrix, spec: &SpectralData) -> f64 {
    let m = spec.order();
    let l = lambda.values().view((0, 0), (m, m)).into_owned();
    let s = DMatrix::from_diagonal(&DVector::from_column_slice(&spec.singular_values));
    let r = &spec.u * s * spec.v.transpose();
    (&l - r).norm() / l.norm().max(f64::MIN_POSITIVE)
}
