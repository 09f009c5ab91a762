//! Corpus generation.

use nalgebra::{DMatrix, DVector};
use suot_core::bures::{sample_diag_spd, sample_spd};
use suot_core::{GaussianMeasure, SpdMatrix};

use crate::config::{Contamination, ExperimentConfig, Profile};
use crate::error::Result;
use crate::formats::MatrixJson;

/// R(θ)·diag(a, b)·R(θ)ᵀ.
pub fn rotated(theta: f64, a: f64, b: f64) -> SpdMatrix {
    let (s, c) = theta.sin_cos();
    let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    let m = &r * DMatrix::from_diagonal(&DVector::from_vec(vec![a, b])) * r.transpose();
    SpdMatrix::from_matrix(m).expect("rotation of a positive diagonal is SPD")
}

/// Two elongated Gaussians tilted by ±0.5 rad.
pub fn demo_clean() -> Vec<SpdMatrix> {
    vec![rotated(0.5, 1.0, 0.3), rotated(-0.5, 1.0, 0.3)]
}

/// A wide outlier tilted by 1 rad mixed into the first member with weight 0.3.
pub fn demo_contamination() -> Contamination {
    Contamination {
        outlier: MatrixJson::from_spd(&rotated(1.0, 8.0, 0.5)),
        weight: 0.3,
        members: vec![0],
    }
}

/// Second moment of the mixture (1 − w)·N(0, Σ) + w·N(0, Σ_o).
pub fn mix(cov: &SpdMatrix, outlier: &SpdMatrix, w: f64) -> Result<SpdMatrix> {
    if w == 0.0 {
        return Ok(cov.clone());
    }
    Ok(SpdMatrix::from_matrix(
        cov.as_matrix() * (1.0 - w) + outlier.as_matrix() * w,
    )?)
}

pub fn clean_covariances(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<SpdMatrix>> {
    match cfg.profile {
        Profile::Demo2d => Ok(demo_clean()),
        Profile::Random => (0..cfg.n)
            .map(|i| {
                let s = seed.wrapping_add(i as u64);
                let cov = if cfg.diagonal {
                    sample_diag_spd(cfg.d, cfg.sigma, s)?
                } else {
                    sample_spd(cfg.d, cfg.sigma, s)?
                };
                Ok(cov)
            })
            .collect(),
    }
}

/// The contamination in effect: the config's, or the demo default for the demo profile.
pub fn contamination_for(cfg: &ExperimentConfig) -> Option<Contamination> {
    match (&cfg.contamination, cfg.profile) {
        (Some(c), _) => Some(c.clone()),
        (None, Profile::Demo2d) => Some(demo_contamination()),
        (None, Profile::Random) => None,
    }
}

pub fn contaminate(clean: &[SpdMatrix], c: &Contamination) -> Result<Vec<SpdMatrix>> {
    let outlier = c
        .outlier
        .to_spd()
        .map_err(crate::error::HarnessError::Config)?;
    clean
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if c.members.contains(&i) {
                mix(s, &outlier, c.weight)
            } else {
                Ok(s.clone())
            }
        })
        .collect()
}

pub fn centered(covs: Vec<SpdMatrix>) -> Vec<GaussianMeasure> {
    covs.into_iter().map(GaussianMeasure::centered).collect()
}
