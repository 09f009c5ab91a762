//! Dense symmetric and SPD matrix algebra.
//!
//! Every matrix function goes through a sorted symmetric eigendecomposition
//! and symmetrizes its output before returning.

use alloc::format;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Result, SuotError};
use crate::fmath;

/// Eigenvalues at or below this value are treated as non-positive.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Symmetric d×d matrix. Construction symmetrizes, so `m[(i,j)] == m[(j,i)]` exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

/// Symmetric matrix whose smallest eigenvalue is above [`EIGEN_FLOOR`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix {
    s: SymMatrix,
}

/// Spectral decomposition with eigenvalues in descending order.
///
/// Each eigenvector column has its first nonzero component nonnegative.
#[derive(Clone, Debug)]
pub struct EigDecomp {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

impl SymMatrix {
    /// Symmetrizes `m` as (m + mᵀ)/2. Rejects non-square, empty or non-finite input.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(invalid(format!(
                "expected a nonempty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(invalid("matrix has non-finite entries"));
        }
        Ok(Self { m: symmetrize(&m) })
    }

    /// Like [`SymMatrix::from_matrix`] but rejects entries with |m_ij − m_ji| > tol.
    pub fn from_matrix_strict(m: DMatrix<f64>, tol: f64) -> Result<Self> {
        if m.nrows() == m.ncols() {
            let d = m.nrows();
            for i in 0..d {
                for j in (i + 1)..d {
                    let gap = (m[(i, j)] - m[(j, i)]).abs();
                    if !(gap <= tol) {
                        return Err(invalid(format!(
                            "matrix is not symmetric: |m[{i},{j}] - m[{j},{i}]| = {gap:e}"
                        )));
                    }
                }
            }
        }
        Self::from_matrix(m)
    }

    pub fn from_row_slice(d: usize, data: &[f64]) -> Result<Self> {
        if data.len() != d * d {
            return Err(invalid(format!(
                "expected {} entries for d={d}, got {}",
                d * d,
                data.len()
            )));
        }
        Self::from_matrix(DMatrix::from_row_slice(d, d, data))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::from_matrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn identity(d: usize) -> Self {
        Self {
            m: DMatrix::identity(d, d),
        }
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            m: DMatrix::zeros(d, d),
        }
    }

    /// Symmetrizes without validation. For results of internal arithmetic.
    pub(crate) fn symmetrized(m: DMatrix<f64>) -> Self {
        Self { m: symmetrize(&m) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        Self { m: &self.m * s }
    }

    /// Row-major entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                out.push(self.m[(i, j)]);
            }
        }
        out
    }
}

impl Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix { m: &self.m + &rhs.m }
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix { m: &self.m - &rhs.m }
    }
}

impl Mul<f64> for &SymMatrix {
    type Output = SymMatrix;
    fn mul(self, rhs: f64) -> SymMatrix {
        self.scale(rhs)
    }
}

impl AsRef<DMatrix<f64>> for SymMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.m
    }
}

impl SpdMatrix {
    pub fn new(s: SymMatrix) -> Result<Self> {
        let lmin = min_eigenvalue(&s);
        if !(lmin > EIGEN_FLOOR) {
            return Err(SuotError::NotPositiveDefinite {
                min_eigenvalue: lmin,
            });
        }
        Ok(Self { s })
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        Self::new(SymMatrix::from_matrix(m)?)
    }

    pub fn from_row_slice(d: usize, data: &[f64]) -> Result<Self> {
        Self::new(SymMatrix::from_row_slice(d, data)?)
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(SymMatrix::from_diagonal(diag)?)
    }

    pub fn identity(d: usize) -> Self {
        Self {
            s: SymMatrix::identity(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.s.dim()
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.s
    }

    pub fn into_sym(self) -> SymMatrix {
        self.s
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.s.m
    }
}

impl AsRef<DMatrix<f64>> for SpdMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.s.m
    }
}

impl EigDecomp {
    /// U·diag(f(λ))·Uᵀ, symmetrized.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let mapped = self.values.map(f);
        let u = &self.vectors;
        let scaled = u * DMatrix::from_diagonal(&mapped);
        SymMatrix::symmetrized(scaled * u.transpose())
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.map(|l| l)
    }

    pub fn min(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn max(&self) -> f64 {
        self.values[0]
    }
}

pub fn eig(m: &SymMatrix) -> Result<EigDecomp> {
    if m.m.iter().any(|v| !v.is_finite()) {
        return Err(invalid("matrix has non-finite entries"));
    }
    let d = m.dim();
    let mut q = SymmetricEigen::new(m.m.clone()).eigenvectors;
    let mut a = q.transpose() * &m.m * &q;
    jacobi_polish(&mut a, &mut q);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let mut values = DVector::zeros(d);
    let mut vectors = DMatrix::zeros(d, d);
    for (k, &i) in order.iter().enumerate() {
        values[k] = a[(i, i)];
        let mut col = q.column(i).into_owned();
        if let Some(first) = col.iter().copied().find(|v| v.abs() > 1e-14) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
        vectors.set_column(k, &col);
    }
    Ok(EigDecomp { values, vectors })
}

/// Cyclic Jacobi sweeps on a = qᵀMq until its off-diagonal part is at
/// rounding level, accumulating the rotations into q.
///
/// nalgebra's QR iteration can deflate with off-diagonal entries near 1e-10
/// of the norm; starting from its output this takes one or two sweeps.
fn jacobi_polish(a: &mut DMatrix<f64>, q: &mut DMatrix<f64>) {
    let d = a.nrows();
    let scale = a.norm();
    if d < 2 || scale == 0.0 {
        return;
    }
    for _ in 0..16 {
        let mut off = 0.0;
        for p in 0..d {
            for r in p + 1..d {
                off += a[(p, r)] * a[(p, r)];
            }
        }
        if fmath::sqrt(off) <= f64::EPSILON * scale {
            return;
        }
        for p in 0..d {
            for r in p + 1..d {
                let apr = a[(p, r)];
                if apr == 0.0 {
                    continue;
                }
                let theta = (a[(r, r)] - a[(p, p)]) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + fmath::sqrt(1.0 + theta * theta));
                let c = 1.0 / fmath::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..d {
                    let (akp, akr) = (a[(k, p)], a[(k, r)]);
                    a[(k, p)] = c * akp - s * akr;
                    a[(k, r)] = s * akp + c * akr;
                }
                for k in 0..d {
                    let (apk, ark) = (a[(p, k)], a[(r, k)]);
                    a[(p, k)] = c * apk - s * ark;
                    a[(r, k)] = s * apk + c * ark;
                }
                for k in 0..d {
                    let (qkp, qkr) = (q[(k, p)], q[(k, r)]);
                    q[(k, p)] = c * qkp - s * qkr;
                    q[(k, r)] = s * qkp + c * qkr;
                }
            }
        }
    }
}

pub fn min_eigenvalue(m: &SymMatrix) -> f64 {
    match eig(m) {
        Ok(e) => e.min(),
        Err(_) => f64::NAN,
    }
}

/// (λ_min, λ_max).
pub fn spectrum_range(m: &SymMatrix) -> Result<(f64, f64)> {
    let e = eig(m)?;
    Ok((e.min(), e.max()))
}

fn spd_eig(m: &SpdMatrix) -> Result<EigDecomp> {
    let e = eig(m.as_sym())?;
    if !(e.min() > EIGEN_FLOOR) {
        return Err(SuotError::NotPositiveDefinite {
            min_eigenvalue: e.min(),
        });
    }
    Ok(e)
}

fn spd_map(m: &SpdMatrix, f: impl Fn(f64) -> f64) -> Result<SpdMatrix> {
    SpdMatrix::new(spd_eig(m)?.map(f))
}

pub fn sqrt_spd(m: &SpdMatrix) -> Result<SpdMatrix> {
    spd_map(m, fmath::sqrt)
}

pub fn inv_spd(m: &SpdMatrix) -> Result<SpdMatrix> {
    spd_map(m, |l| 1.0 / l)
}

pub fn inv_sqrt_spd(m: &SpdMatrix) -> Result<SpdMatrix> {
    spd_map(m, |l| 1.0 / fmath::sqrt(l))
}

pub fn logdet(m: &SpdMatrix) -> Result<f64> {
    Ok(spd_eig(m)?.values.iter().map(|&l| fmath::ln(l)).sum())
}

pub fn trace(m: &impl AsRef<DMatrix<f64>>) -> f64 {
    m.as_ref().trace()
}

pub fn frobenius(m: &impl AsRef<DMatrix<f64>>) -> f64 {
    m.as_ref().norm()
}

/// Matrix exponential of a symmetric matrix. Fails only if an eigenvalue of the
/// result underflows the floor (λ < about −27.6).
pub fn expm_sym(m: &SymMatrix) -> Result<SpdMatrix> {
    SpdMatrix::new(eig(m)?.map(fmath::exp))
}

/// Solves X·b + b·X = a in the eigenbasis of b.
pub fn lyapunov_solve(b: &SpdMatrix, a: &SymMatrix) -> Result<SymMatrix> {
    if a.dim() != b.dim() {
        return Err(invalid("lyapunov_solve: dimension mismatch"));
    }
    let e = spd_eig(b)?;
    let u = &e.vectors;
    let mut at = u.transpose() * a.as_matrix() * u;
    let d = b.dim();
    for i in 0..d {
        for j in 0..d {
            at[(i, j)] /= e.values[i] + e.values[j];
        }
    }
    Ok(SymMatrix::symmetrized(u * at * u.transpose()))
}

pub fn clamp_to_box(m: &SpdMatrix, rho: f64) -> Result<SpdMatrix> {
    if !(rho > 1.0) {
        return Err(invalid(format!("box parameter rho must exceed 1, got {rho}")));
    }
    let lo = 1.0 / rho;
    spd_map(m, |l| l.clamp(lo, rho))
}

pub fn in_box(m: &SpdMatrix, rho: f64) -> bool {
    match spectrum_range(m.as_sym()) {
        Ok((lo, hi)) => lo >= 1.0 / rho - 1e-12 && hi <= rho + 1e-12,
        Err(_) => false,
    }
}

/// Smallest ρ ≥ 1 with m inside the box [1/ρ, ρ].
pub fn box_radius(m: &SpdMatrix) -> Result<f64> {
    let (lo, hi) = spectrum_range(m.as_sym())?;
    Ok(hi.max(1.0 / lo).max(1.0))
}

/// [a·b]^{1/2} for SPD a, b via the similarity a^{1/2}[a^{1/2} b a^{1/2}]^{1/2} a^{-1/2}.
pub fn sqrt_product(a: &SpdMatrix, b: &SpdMatrix) -> Result<DMatrix<f64>> {
    let ah = sqrt_spd(a)?;
    let aih = inv_sqrt_spd(a)?;
    let inner = SpdMatrix::from_matrix(ah.as_matrix() * b.as_matrix() * ah.as_matrix())?;
    let mid = sqrt_spd(&inner)?;
    Ok(ah.as_matrix() * mid.as_matrix() * aih.as_matrix())
}

/// tr([a^{1/2} b a^{1/2}]^{1/2}) from the spectrum of the congruence.
pub(crate) fn trace_sqrt_congruence(ah: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    let inner = SymMatrix::symmetrized(ah.as_matrix() * b.as_matrix() * ah.as_matrix());
    Ok(eig(&inner)?
        .values
        .iter()
        .map(|&l| fmath::sqrt(l.max(0.0)))
        .sum())
}

/// a·b·a for symmetric a (congruence), symmetrized.
pub(crate) fn congruence(a: &DMatrix<f64>, b: &DMatrix<f64>) -> SymMatrix {
    SymMatrix::symmetrized(a * b * a)
}

pub(crate) fn check_dims(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(invalid(format!("{what}: dimension mismatch ({a} vs {b})")));
    }
    Ok(())
}
