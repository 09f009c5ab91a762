//! Scaled Gaussian measures, the 2-Wasserstein distance, generalized KL and
//! optimal transport maps between them.

use alloc::format;
use nalgebra::DVector;

use crate::error::{invalid, Result};
use crate::fmath;
use crate::spd::{
    self, check_dims, congruence, inv_spd, inv_sqrt_spd, logdet, sqrt_spd, SpdMatrix, SymMatrix,
};

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMeasure {
    mass: f64,
    mean: DVector<f64>,
    cov: SpdMatrix,
}

impl GaussianMeasure {
    pub fn new(mass: f64, mean: DVector<f64>, cov: SpdMatrix) -> Result<Self> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(invalid(format!("mass must be positive and finite, got {mass}")));
        }
        check_dims(mean.len(), cov.dim(), "GaussianMeasure mean/cov")?;
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(invalid("mean has non-finite entries"));
        }
        Ok(Self { mass, mean, cov })
    }

    /// Unit mass, zero mean.
    pub fn centered(cov: SpdMatrix) -> Self {
        let d = cov.dim();
        Self {
            mass: 1.0,
            mean: DVector::zeros(d),
            cov,
        }
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &SpdMatrix {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.cov.dim()
    }

    pub fn is_centered(&self) -> bool {
        self.mean.iter().all(|&v| v == 0.0)
    }
}

/// Squared 2-Wasserstein distance between the normalized measures.
pub fn w2_squared(g1: &GaussianMeasure, g2: &GaussianMeasure) -> Result<f64> {
    check_dims(g1.dim(), g2.dim(), "w2_squared")?;
    if g1.mass != 1.0 || g2.mass != 1.0 {
        log::warn!("w2_squared ignores masses {} and {}", g1.mass, g2.mass);
    }
    let shift = (&g1.mean - &g2.mean).norm_squared();
    Ok(shift + w2_squared_cov(&g1.cov, &g2.cov)?)
}

/// tr(Σ + Σ' − 2[Σ^{1/2}Σ'Σ^{1/2}]^{1/2}), clamped at zero.
pub fn w2_squared_cov(s1: &SpdMatrix, s2: &SpdMatrix) -> Result<f64> {
    check_dims(s1.dim(), s2.dim(), "w2_squared")?;
    let h = sqrt_spd(s1)?;
    let cross = spd::trace_sqrt_congruence(&h, s2)?;
    Ok((spd::trace(s1) + spd::trace(s2) - 2.0 * cross).max(0.0))
}

/// Generalized KL: m₁·KL(ḡ₁‖ḡ₂) + m₁log(m₁/m₂) − m₁ + m₂.
pub fn kl_divergence(g1: &GaussianMeasure, g2: &GaussianMeasure) -> Result<f64> {
    check_dims(g1.dim(), g2.dim(), "kl_divergence")?;
    let inv2 = inv_spd(&g2.cov)?;
    let diff = &g1.mean - &g2.mean;
    let quad = (inv2.as_matrix() * &diff).dot(&diff);
    let normalized = normalized_kl(&g1.cov, &g2.cov, &inv2)? + 0.5 * quad;
    let (m1, m2) = (g1.mass, g2.mass);
    let mass_kl = m1 * fmath::ln(m1 / m2) - m1 + m2;
    Ok((m1 * normalized + mass_kl).max(0.0))
}

/// KL(N(0,Σ₁)‖N(0,Σ₂)).
pub fn kl_divergence_cov(s1: &SpdMatrix, s2: &SpdMatrix) -> Result<f64> {
    check_dims(s1.dim(), s2.dim(), "kl_divergence")?;
    let inv2 = inv_spd(s2)?;
    Ok(normalized_kl(s1, s2, &inv2)?.max(0.0))
}

fn normalized_kl(s1: &SpdMatrix, s2: &SpdMatrix, inv2: &SpdMatrix) -> Result<f64> {
    let d = s1.dim() as f64;
    let tr = (inv2.as_matrix() * s1.as_matrix()).trace();
    Ok(0.5 * (tr - d + logdet(s2)? - logdet(s1)?))
}

/// Symmetric T with T·src·T = dst.
pub fn transport_map(src: &SpdMatrix, dst: &SpdMatrix) -> Result<SymMatrix> {
    check_dims(src.dim(), dst.dim(), "transport_map")?;
    let h = sqrt_spd(src)?;
    let ih = inv_sqrt_spd(src)?;
    let inner = SpdMatrix::new(congruence(h.as_matrix(), dst.as_matrix()))?;
    let mid = sqrt_spd(&inner)?;
    Ok(congruence(ih.as_matrix(), mid.as_matrix()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn scalar(mass: f64, mean: f64, var: f64) -> GaussianMeasure {
        GaussianMeasure::new(
            mass,
            DVector::from_element(1, mean),
            SpdMatrix::from_diagonal(&[var]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn w2_examples() {
        let id = GaussianMeasure::centered(SpdMatrix::identity(2));
        assert_eq!(w2_squared(&id, &id).unwrap(), 0.0);
        let shifted = GaussianMeasure::new(
            1.0,
            DVector::from_vec(alloc::vec![3.0, 4.0]),
            SpdMatrix::identity(2),
        )
        .unwrap();
        assert_relative_eq!(w2_squared(&id, &shifted).unwrap(), 25.0, epsilon = 1e-13);
        assert_relative_eq!(
            w2_squared(&scalar(1.0, 0.0, 1.0), &scalar(1.0, 0.0, 4.0)).unwrap(),
            1.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn kl_examples() {
        let g = scalar(1.0, 0.3, 2.0);
        assert_eq!(kl_divergence(&g, &g).unwrap(), 0.0);
        let kl = kl_divergence(&scalar(2.0, 0.0, 1.0), &scalar(1.0, 0.0, 1.0)).unwrap();
        assert_relative_eq!(kl, 2.0 * 2f64.ln() - 1.0, epsilon = 1e-14);
        let kl = kl_divergence(&scalar(1.0, 0.0, 1.0), &scalar(1.0, 0.0, 2.0)).unwrap();
        assert_relative_eq!(kl, 0.5 * (0.5 - 1.0 + 2f64.ln()), epsilon = 1e-14);
        assert_relative_eq!(kl, 0.096574, epsilon = 1e-6);
    }

    #[test]
    fn transport_examples() {
        let s = SpdMatrix::from_row_slice(2, &[2.0, 0.3, 0.3, 1.0]).unwrap();
        let t = transport_map(&s, &s).unwrap();
        assert!((t.as_matrix() - DMatrix::identity(2, 2)).norm() < 1e-14);
        let t = transport_map(&SpdMatrix::identity(2), &SpdMatrix::from_diagonal(&[4.0, 9.0]).unwrap())
            .unwrap();
        assert_relative_eq!(t.as_matrix()[(0, 0)], 2.0, epsilon = 1e-14);
        assert_relative_eq!(t.as_matrix()[(1, 1)], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn dimension_mismatch() {
        let a = GaussianMeasure::centered(SpdMatrix::identity(2));
        let b = GaussianMeasure::centered(SpdMatrix::identity(3));
        assert!(w2_squared(&a, &b).is_err());
        assert!(GaussianMeasure::new(1.0, DVector::zeros(3), SpdMatrix::identity(2)).is_err());
        assert!(GaussianMeasure::new(0.0, DVector::zeros(2), SpdMatrix::identity(2)).is_err());
    }
}
