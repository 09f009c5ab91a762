//! Bures–Wasserstein manifold primitives and seeded SPD sampling.
//!
//! Sampling uses `Xoshiro256PlusPlus::seed_from_u64(seed)`. Callers that need
//! several independent matrices derive one stream per item as `seed + index`.

use alloc::format;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{invalid, Result, SuotError};
use crate::gaussian::transport_map;
use crate::spd::{check_dims, congruence, eig, expm_sym, SpdMatrix, SymMatrix, EIGEN_FLOOR};
use crate::fmath;

/// A symmetric direction X attached to a base point Σ.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub base: SpdMatrix,
    pub dir: SymMatrix,
}

impl TangentVector {
    pub fn new(base: SpdMatrix, dir: SymMatrix) -> Result<Self> {
        check_dims(base.dim(), dir.dim(), "TangentVector")?;
        Ok(Self { base, dir })
    }

    pub fn norm(&self) -> f64 {
        tangent_norm(&self.base, &self.dir)
    }
}

/// (Id + X)·Σ·(Id + X).
pub fn exp_map(v: &TangentVector) -> Result<SpdMatrix> {
    exp_at(&v.base, &v.dir)
}

pub(crate) fn exp_at(base: &SpdMatrix, dir: &SymMatrix) -> Result<SpdMatrix> {
    check_dims(base.dim(), dir.dim(), "exp_map")?;
    let d = base.dim();
    let step = SymMatrix::symmetrized(DMatrix::identity(d, d) + dir.as_matrix());
    let lmin = eig(&step)?.min();
    if !(lmin > EIGEN_FLOOR) {
        return Err(SuotError::RetractionOutOfCone {
            min_eigenvalue: lmin,
        });
    }
    SpdMatrix::new(congruence(step.as_matrix(), base.as_matrix()))
}

/// Direction T_{src→dst} − Id at src.
pub fn log_map(src: &SpdMatrix, dst: &SpdMatrix) -> Result<TangentVector> {
    let t = transport_map(src, dst)?;
    let d = src.dim();
    let dir = SymMatrix::symmetrized(t.into_matrix() - DMatrix::identity(d, d));
    Ok(TangentVector {
        base: src.clone(),
        dir,
    })
}

/// tr(A·Σ·B).
///
/// # Panics
/// On dimension mismatch.
pub fn tangent_inner(base: &SpdMatrix, a: &SymMatrix, b: &SymMatrix) -> f64 {
    (a.as_matrix() * base.as_matrix())
        .component_mul(&b.as_matrix().transpose())
        .sum()
}

pub fn tangent_norm(base: &SpdMatrix, a: &SymMatrix) -> f64 {
    fmath::sqrt(tangent_inner(base, a, a).max(0.0))
}

/// Point at time t on the geodesic from src to dst. Rejects t outside [0, 1].
pub fn geodesic(src: &SpdMatrix, dst: &SpdMatrix, t: f64) -> Result<SpdMatrix> {
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid(format!("geodesic time must lie in [0, 1], got {t}")));
    }
    if t == 0.0 {
        return Ok(src.clone());
    }
    if t == 1.0 {
        return Ok(dst.clone());
    }
    let v = log_map(src, dst)?;
    exp_at(src, &v.dir.scale(t))
}

/// expm((A + Aᵀ)/2) with A_ij ~ N(0, σ²) i.i.d., drawn row-major.
pub fn sample_spd(d: usize, sigma: f64, seed: u64) -> Result<SpdMatrix> {
    let a = gaussian_matrix(d, sigma, seed)?;
    expm_sym(&SymMatrix::symmetrized(a))
}

/// Diagonal variant of [`sample_spd`]: keeps only the diagonal of the symmetric draw.
pub fn sample_diag_spd(d: usize, sigma: f64, seed: u64) -> Result<SpdMatrix> {
    let a = gaussian_matrix(d, sigma, seed)?;
    let diag: alloc::vec::Vec<f64> = a.diagonal().iter().map(|&v| fmath::exp(v)).collect();
    SpdMatrix::from_diagonal(&diag)
}

fn gaussian_matrix(d: usize, sigma: f64, seed: u64) -> Result<DMatrix<f64>> {
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(invalid(format!("sigma must be nonnegative, got {sigma}")));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut a = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            a[(i, j)] = sigma * z;
        }
    }
    Ok(a)
}
