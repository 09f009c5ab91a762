//! Closed-form semi-unbalanced optimal transport between Gaussians.
//!
//! The first marginal is relaxed by a τ-weighted KL penalty, the second is kept.
//! Write Σ_{α,τ} = Id + (τ/2)Σ_α⁻¹ and Σ_{α,τ,β} = Σ_β^{-1/2}Σ_{α,τ}Σ_β^{-1/2} with
//! eigenvalues μ_i. Everything below is a spectral function of Σ_{α,τ,β}:
//!
//! * S₁ = (τ/2)Σ_{α,τ,β}⁻¹ + ½Σ_{α,τ,β}⁻²(Id + (Id + 2τΣ_{α,τ,β})^{1/2}),
//!   and the relaxed marginal is Σ_x = Σ_β^{-1/2}S₁Σ_β^{-1/2}.
//! * Σ̃ = S₁^{1/2} has eigenvalues t_i = (1 + √(1+2τμ_i))/(2μ_i). These are the
//!   singular values of Σ_β^{1/2}Σ_x^{1/2}, and Σ_β^{-1/2}Σ̃Σ_β^{-1/2} is the
//!   optimal map from Σ_β to Σ_x.
//! * Σ_γ = (τ/2)Id + Σ̃ and
//!   Υ = tr Σ_γ + tr Σ_β − 2·tr([Σ_{α,τ,β}⁻¹Σ_γ]^{1/2})
//!   − (τ/2)·log det[Σ_γ Σ_{α,τ,β}⁻¹ Σ_β⁻¹ Σ_α⁻¹] + (a−b)ᵀM(a−b) − τd/2.
//!
//! For centered inputs Υ equals W₂²(Σ_x, Σ_β) + τ·KL(Σ_x‖Σ_α).
//!
//! The Riemannian gradient of Σ_β ↦ W₂²(Σ_x, Σ_β) + τ·KL(Σ_x‖Σ_α) at the optimal
//! Σ_x is 2(Id − T_{Σ_β→Σ_x}), since only the explicit dependence of W₂² on Σ_β
//! survives at a minimizer.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result, SuotError};
use crate::fmath;
use crate::gaussian::{kl_divergence_cov, w2_squared_cov, GaussianMeasure};
use crate::spd::{
    self, check_dims, congruence, eig, inv_spd, inv_sqrt_spd, sqrt_spd, EigDecomp, SpdMatrix,
    SymMatrix,
};

/// Υ/τ above this saturates exp(−Υ/τ) to zero.
pub const SATURATION_EXPONENT: f64 = 700.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuotParams {
    pub tau: f64,
    pub delta: f64,
}

impl SuotParams {
    pub fn new(tau: f64, delta: f64) -> Result<Self> {
        check_tau(tau)?;
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(invalid(format!("delta must be nonnegative, got {delta}")));
        }
        Ok(Self { tau, delta })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuotPlan {
    pub a_x: DVector<f64>,
    pub sigma_x: SpdMatrix,
    /// Diagonal Λ of singular values of Σ_β^{1/2}Σ_x^{1/2}, descending.
    pub k_xb: DMatrix<f64>,
    /// Cross-covariance in the ambient basis, Σ_x·T_{Σ_x→Σ_β}.
    pub k_ambient: DMatrix<f64>,
    pub m_pi: f64,
    pub upsilon: f64,
    pub cost: f64,
    /// Set when Υ/τ exceeded [`SATURATION_EXPONENT`] and m_pi was forced to zero.
    pub saturated: bool,
}

impl SuotPlan {
    /// [[Σ_x, K],[Kᵀ, Σ_β]] with K in the ambient basis.
    pub fn joint_covariance(&self, sigma_b: &SpdMatrix) -> DMatrix<f64> {
        let d = self.sigma_x.dim();
        let mut j = DMatrix::zeros(2 * d, 2 * d);
        j.view_mut((0, 0), (d, d)).copy_from(self.sigma_x.as_matrix());
        j.view_mut((0, d), (d, d)).copy_from(&self.k_ambient);
        j.view_mut((d, 0), (d, d)).copy_from(&self.k_ambient.transpose());
        j.view_mut((d, d), (d, d)).copy_from(sigma_b.as_matrix());
        j
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(invalid(format!("tau must be positive and finite, got {tau}")));
    }
    Ok(())
}

/// Id + (τ/2)·Σ_α⁻¹.
pub fn sigma_alpha_tau(sigma_a: &SpdMatrix, tau: f64) -> Result<SpdMatrix> {
    check_tau(tau)?;
    let inv = inv_spd(sigma_a)?;
    let d = sigma_a.dim();
    SpdMatrix::from_matrix(DMatrix::identity(d, d) + inv.as_matrix() * (0.5 * tau))
}

/// Spectral data shared by the plan, the cost and the gradient.
struct Relaxed {
    sb_ih: SpdMatrix,
    /// Eigendecomposition of Σ_{α,τ,β}.
    satb: EigDecomp,
    /// Eigenvalues t_i of Σ̃, same eigenvectors.
    t: Vec<f64>,
    sigma_x: SpdMatrix,
}

impl Relaxed {
    fn new(sigma_a: &SpdMatrix, sigma_b: &SpdMatrix, tau: f64) -> Result<Self> {
        check_dims(sigma_a.dim(), sigma_b.dim(), "suot")?;
        let sat = sigma_alpha_tau(sigma_a, tau)?;
        let sb_ih = inv_sqrt_spd(sigma_b)?;
        let satb = eig(&congruence(sb_ih.as_matrix(), sat.as_matrix()))?;
        if !(satb.min() > spd::EIGEN_FLOOR) {
            return Err(SuotError::NotPositiveDefinite {
                min_eigenvalue: satb.min(),
            });
        }
        let s1: Vec<f64> = satb
            .values
            .iter()
            .map(|&mu| {
                let r = fmath::sqrt(1.0 + 2.0 * tau * mu);
                0.5 * tau / mu + 0.5 * (1.0 + r) / (mu * mu)
            })
            .collect();
        let t: Vec<f64> = s1.iter().map(|&s| fmath::sqrt(s)).collect();
        let s1_mat = spectral(&satb, &s1);
        let sigma_x = SpdMatrix::new(congruence(sb_ih.as_matrix(), &s1_mat))?;
        Ok(Self {
            sb_ih,
            satb,
            t,
            sigma_x,
        })
    }

    /// T_{Σ_β→Σ_x} = Σ_β^{-1/2}Σ̃Σ_β^{-1/2}.
    fn transport(&self) -> SymMatrix {
        congruence(self.sb_ih.as_matrix(), &spectral(&self.satb, &self.t))
    }
}

fn spectral(e: &EigDecomp, values: &[f64]) -> DMatrix<f64> {
    let u = &e.vectors;
    let diag = DMatrix::from_diagonal(&DVector::from_column_slice(values));
    spd::symmetrize(&(u * diag * u.transpose()))
}

/// Closed-form SUOT plan between two scaled Gaussians.
pub fn solve_suot(alpha: &GaussianMeasure, beta: &GaussianMeasure, tau: f64) -> Result<SuotPlan> {
    check_dims(alpha.dim(), beta.dim(), "solve_suot")?;
    let (sa, sb) = (alpha.cov(), beta.cov());
    let d = sa.dim();
    let rel = Relaxed::new(sa, sb, tau)?;

    let sat = sigma_alpha_tau(sa, tau)?;
    let sat_inv = inv_spd(&sat)?;
    let diff = beta.mean() - alpha.mean();
    let a_x = sat_inv.as_matrix() * &diff + alpha.mean();
    let m = mean_weight_matrix(sa, tau)?;
    let mean_term = (m.as_matrix() * &diff).dot(&diff);

    let mut tr_gamma = 0.0;
    let mut tr_cross = 0.0;
    let mut logdet_ratio = 0.0;
    for (&mu, &t) in rel.satb.values.iter().zip(&rel.t) {
        let gamma = 0.5 * tau + t;
        tr_gamma += gamma;
        tr_cross += fmath::sqrt(gamma / mu);
        logdet_ratio += fmath::ln(gamma / mu);
    }
    let logdet_full = logdet_ratio - spd::logdet(sb)? - spd::logdet(sa)?;
    let upsilon = tr_gamma + spd::trace(sb) - 2.0 * tr_cross - 0.5 * tau * logdet_full
        + mean_term
        - 0.5 * tau * d as f64;
    if !upsilon.is_finite() {
        return Err(SuotError::NonFinite("solve_suot upsilon"));
    }

    let ratio = upsilon / tau;
    let saturated = ratio > SATURATION_EXPONENT;
    let decay = if saturated { 0.0 } else { fmath::exp(-ratio) };
    let m_alpha = alpha.mass();
    let m_pi = m_alpha * decay;
    let cost = tau * m_alpha * (1.0 - decay);

    let mut desc = rel.t.clone();
    desc.sort_by(|a, b| b.total_cmp(a));
    let k_xb = DMatrix::from_diagonal(&DVector::from_vec(desc));
    let sb_h = sqrt_spd(sb)?;
    let tilde = spectral(&rel.satb, &rel.t);
    let k_ambient = rel.sb_ih.as_matrix() * tilde * sb_h.as_matrix();

    debug_assert!(
        !(alpha.is_centered() && beta.is_centered()) || {
            let direct = w2_squared_cov(&rel.sigma_x, sb)? + tau * kl_divergence_cov(&rel.sigma_x, sa)?;
            (direct - upsilon).abs() <= 1e-8 * direct.abs().max(1.0)
        },
        "closed-form Upsilon disagrees with the direct centered cost"
    );

    Ok(SuotPlan {
        a_x,
        sigma_x: rel.sigma_x,
        k_xb,
        k_ambient,
        m_pi,
        upsilon,
        cost,
        saturated,
    })
}

/// Optimal relaxed marginal covariance Σ_x for centered inputs.
pub fn relaxed_covariance(sigma_a: &SpdMatrix, sigma_b: &SpdMatrix, tau: f64) -> Result<SpdMatrix> {
    Ok(Relaxed::new(sigma_a, sigma_b, tau)?.sigma_x)
}

/// W₂²(Σ_x, Σ_β) + τ·KL(Σ_x‖Σ_α) at the closed-form Σ_x.
pub fn suot_cost_centered(sigma_a: &SpdMatrix, sigma_b: &SpdMatrix, tau: f64) -> Result<f64> {
    let sx = relaxed_covariance(sigma_a, sigma_b, tau)?;
    Ok(w2_squared_cov(&sx, sigma_b)? + tau * kl_divergence_cov(&sx, sigma_a)?)
}

/// (Σ_x, T_{Σ_β→Σ_x}) from a single spectral decomposition.
pub(crate) fn relaxed_parts(
    sigma_a: &SpdMatrix,
    sigma_b: &SpdMatrix,
    tau: f64,
) -> Result<(SpdMatrix, SymMatrix)> {
    let rel = Relaxed::new(sigma_a, sigma_b, tau)?;
    let t = rel.transport();
    Ok((rel.sigma_x, t))
}

/// T_{Σ_β→Σ_x}: the optimal map from the barycenter to the relaxed marginal.
pub fn relaxed_transport(sigma_a: &SpdMatrix, sigma_b: &SpdMatrix, tau: f64) -> Result<SymMatrix> {
    Ok(Relaxed::new(sigma_a, sigma_b, tau)?.transport())
}

/// Riemannian gradient of Σ_β ↦ suot_cost_centered(Σ_α, Σ_β, τ): 2(Id − T_{Σ_β→Σ_x}).
pub fn suot_gradient(sigma_a: &SpdMatrix, sigma_b: &SpdMatrix, tau: f64) -> Result<SymMatrix> {
    let t = relaxed_transport(sigma_a, sigma_b, tau)?;
    let d = sigma_b.dim();
    Ok(SymMatrix::symmetrized(
        (DMatrix::identity(d, d) - t.as_matrix()) * 2.0,
    ))
}

/// M = Σ_{α,τ}⁻² − 2Σ_{α,τ}⁻¹ + Id + (τ/2)Σ_{α,τ}⁻¹Σ_α⁻¹Σ_{α,τ}⁻¹.
///
/// Algebraically this is Id − Σ_{α,τ}⁻¹, which is positive semidefinite.
pub fn mean_weight_matrix(sigma_a: &SpdMatrix, tau: f64) -> Result<SymMatrix> {
    let sat_inv = inv_spd(&sigma_alpha_tau(sigma_a, tau)?)?;
    let sa_inv = inv_spd(sigma_a)?;
    let d = sigma_a.dim();
    let p = sat_inv.as_matrix();
    let m = p * p - p * 2.0 + DMatrix::identity(d, d) + p * sa_inv.as_matrix() * p * (0.5 * tau);
    Ok(SymMatrix::symmetrized(m))
}

/// Entropic SUOT: returns (Σ_x, K) with K = Σ_x^{1/2}Σ_β^{1/2} − (δ/4)Id.
///
/// Fails with `DeltaTooLarge` when a singular value of Σ_β^{1/2}Σ_x^{1/2} is
/// below δ/4. At δ = 0 this reproduces [`relaxed_covariance`].
pub fn solve_entropic_suot(
    sigma_a: &SpdMatrix,
    sigma_b: &SpdMatrix,
    tau: f64,
    delta: f64,
) -> Result<(SpdMatrix, DMatrix<f64>)> {
    let params = SuotParams::new(tau, delta)?;
    check_dims(sigma_a.dim(), sigma_b.dim(), "solve_entropic_suot")?;
    let (tau, delta) = (params.tau, params.delta);
    let d = sigma_a.dim();
    let sa_inv = inv_spd(sigma_a)?;
    let sb_ih = inv_sqrt_spd(sigma_b)?;
    let inner = DMatrix::identity(d, d) + sa_inv.as_matrix() * (0.5 * (tau + delta));
    let e = eig(&congruence(sb_ih.as_matrix(), &inner))?;
    if !(e.min() > spd::EIGEN_FLOOR) {
        return Err(SuotError::NotPositiveDefinite {
            min_eigenvalue: e.min(),
        });
    }
    let vals: Vec<f64> = e
        .values
        .iter()
        .map(|&mu| {
            let s = 1.0 + fmath::sqrt(1.0 + (2.0 * tau + 3.0 * delta) * mu);
            0.5 * tau / mu + 0.5 * s / (mu * mu)
        })
        .collect();
    let sigma_x = SpdMatrix::new(congruence(sb_ih.as_matrix(), &spectral(&e, &vals)))?;

    let sx_h = sqrt_spd(&sigma_x)?;
    let sb_h = sqrt_spd(sigma_b)?;
    let cross = SymMatrix::symmetrized(sb_h.as_matrix() * sigma_x.as_matrix() * sb_h.as_matrix());
    let min_sv = fmath::sqrt(eig(&cross)?.min().max(0.0));
    if min_sv < 0.25 * delta {
        return Err(SuotError::DeltaTooLarge {
            delta,
            min_singular_value: min_sv,
        });
    }
    let k = sx_h.as_matrix() * sb_h.as_matrix() - DMatrix::identity(d, d) * (0.25 * delta);
    Ok((sigma_x, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn s(v: f64) -> SpdMatrix {
        SpdMatrix::from_diagonal(&[v]).unwrap()
    }

    #[test]
    fn sigma_alpha_tau_examples() {
        let x = sigma_alpha_tau(&SpdMatrix::identity(2), 2.0).unwrap();
        assert_relative_eq!(x.as_matrix()[(0, 0)], 2.0, epsilon = 1e-15);
        assert_relative_eq!(x.as_matrix()[(1, 1)], 2.0, epsilon = 1e-15);
        let x = sigma_alpha_tau(&s(2.0), 2.0).unwrap();
        assert_relative_eq!(x.as_matrix()[(0, 0)], 1.5, epsilon = 1e-15);
        assert!(sigma_alpha_tau(&s(2.0), 0.0).is_err());
    }

    #[test]
    fn scalar_plan() {
        let x = relaxed_covariance(&s(1.0), &s(4.0), 2.0).unwrap();
        assert_relative_eq!(x.as_matrix()[(0, 0)], 1.0 + 3f64.sqrt() / 2.0, epsilon = 1e-13);
        let c = suot_cost_centered(&s(1.0), &s(4.0), 2.0).unwrap();
        assert_relative_eq!(c, 0.6441384760662512, epsilon = 1e-12);
        let plan = solve_suot(
            &GaussianMeasure::centered(s(1.0)),
            &GaussianMeasure::centered(s(4.0)),
            2.0,
        )
        .unwrap();
        assert_relative_eq!(plan.upsilon, c, epsilon = 1e-12);
        assert_relative_eq!(plan.cost, 2.0 * (1.0 - (-c / 2.0).exp()), epsilon = 1e-12);
    }

    #[test]
    fn scalar_mean_shift() {
        let alpha = GaussianMeasure::new(1.0, DVector::from_element(1, 0.0), s(1.0)).unwrap();
        let beta = GaussianMeasure::new(1.0, DVector::from_element(1, 1.0), s(1.0)).unwrap();
        let plan = solve_suot(&alpha, &beta, 2.0).unwrap();
        assert_relative_eq!(plan.a_x[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn identical_inputs_are_fixed() {
        let sig = SpdMatrix::from_row_slice(2, &[2.0, 0.4, 0.4, 0.7]).unwrap();
        for tau in [0.1, 1.0, 10.0] {
            let x = relaxed_covariance(&sig, &sig, tau).unwrap();
            assert!((x.as_matrix() - sig.as_matrix()).norm() < 1e-12);
            assert!(suot_cost_centered(&sig, &sig, tau).unwrap() < 1e-12);
            assert!(suot_gradient(&sig, &sig, tau).unwrap().as_matrix().norm() < 1e-12);
        }
    }

    #[test]
    fn mean_weight_examples() {
        let m = mean_weight_matrix(&s(1.0), 2.0).unwrap();
        assert_relative_eq!(m.as_matrix()[(0, 0)], 0.5, epsilon = 1e-15);
        let m = mean_weight_matrix(&SpdMatrix::from_diagonal(&[0.5, 3.0]).unwrap(), 1e-9).unwrap();
        assert!(m.as_matrix().norm() < 1e-8);
    }

    #[test]
    fn saturation_flag() {
        let alpha = GaussianMeasure::new(1.0, DVector::from_element(1, 0.0), s(1.0)).unwrap();
        let beta = GaussianMeasure::new(1.0, DVector::from_element(1, 1e4), s(1.0)).unwrap();
        let plan = solve_suot(&alpha, &beta, 0.5).unwrap();
        assert!(plan.saturated);
        assert_eq!(plan.m_pi, 0.0);
        assert_eq!(plan.cost, 0.5);
    }

    #[test]
    fn entropic_reduces_at_zero_delta() {
        let a = SpdMatrix::from_row_slice(2, &[2.0, 0.4, 0.4, 0.7]).unwrap();
        let b = SpdMatrix::from_row_slice(2, &[1.0, -0.2, -0.2, 1.5]).unwrap();
        let (x, _) = solve_entropic_suot(&a, &b, 0.8, 0.0).unwrap();
        let y = relaxed_covariance(&a, &b, 0.8).unwrap();
        assert!((x.as_matrix() - y.as_matrix()).norm() < 1e-13);
        let (x, _) = solve_entropic_suot(&SpdMatrix::identity(2), &SpdMatrix::identity(2), 2.0, 0.0)
            .unwrap();
        assert!((x.as_matrix() - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn entropic_rejects_large_delta() {
        let r = solve_entropic_suot(&SpdMatrix::identity(2), &SpdMatrix::identity(2), 1.0, 10.0);
        assert!(matches!(r, Err(SuotError::DeltaTooLarge { .. })));
    }
}
