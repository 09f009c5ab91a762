//! Independent verifiers. Nothing here calls the closed forms in `suot`; the
//! brute-force search only evaluates W₂² and KL from `gaussian`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{Cholesky, DMatrix, DVector};

use crate::bures::{exp_at, sample_spd};
use crate::error::{invalid, Result, SuotError};
use crate::fmath;
use crate::gaussian::{kl_divergence_cov, w2_squared_cov};
use crate::spd::{congruence, sqrt_spd, SpdMatrix, SymMatrix};

pub const DEFAULT_RESTARTS: usize = 8;
/// Restarts whose FD gradient norm ends above this are discarded.
pub const STATIONARITY_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OracleReport {
    pub instance: String,
    pub closed_form: f64,
    pub oracle: f64,
    pub abs_err: f64,
    /// |closed_form − oracle| / max(|oracle|, 1e-12).
    pub rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    pub fn new(instance: impl Into<String>, closed_form: f64, oracle: f64, tolerance: f64) -> Self {
        let abs_err = (closed_form - oracle).abs();
        let rel_err = abs_err / oracle.abs().max(1e-12);
        Self {
            instance: instance.into(),
            closed_form,
            oracle,
            abs_err,
            rel_err,
            tolerance,
            pass: rel_err <= tolerance,
        }
    }

    /// Same fields, but `pass` compares the absolute error. For targets that are exactly zero.
    pub fn absolute(instance: impl Into<String>, closed_form: f64, oracle: f64, tolerance: f64) -> Self {
        let mut r = Self::new(instance, closed_form, oracle, tolerance);
        r.pass = r.abs_err <= tolerance;
        r
    }
}

/// Σ_x ↦ W₂²(Σ_x, Σ_β) + τ·KL(Σ_x‖Σ_α), the objective the closed form claims to minimize.
pub fn relaxed_objective(sigma_x: &SpdMatrix, sigma_a: &SpdMatrix, sigma_b: &SpdMatrix, tau: f64) -> Result<f64> {
    Ok(w2_squared_cov(sigma_x, sigma_b)? + tau * kl_divergence_cov(sigma_x, sigma_a)?)
}

fn params_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Lower-triangular factor with log-diagonal, row by row.
fn factor_from_params(d: usize, theta: &[f64]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in 0..=i {
            l[(i, j)] = if i == j { fmath::exp(theta[k]) } else { theta[k] };
            k += 1;
        }
    }
    l
}

fn params_from_spd(m: &SpdMatrix) -> Result<Vec<f64>> {
    let d = m.dim();
    let chol = Cholesky::new(m.as_matrix().clone()).ok_or(SuotError::NotPositiveDefinite {
        min_eigenvalue: f64::NAN,
    })?;
    let l = chol.l();
    let mut theta = Vec::with_capacity(params_len(d));
    for i in 0..d {
        for j in 0..=i {
            theta.push(if i == j { fmath::ln(l[(i, j)]) } else { l[(i, j)] });
        }
    }
    Ok(theta)
}

fn spd_from_params(d: usize, theta: &[f64]) -> Result<SpdMatrix> {
    let l = factor_from_params(d, theta);
    SpdMatrix::from_matrix(&l * l.transpose())
}

struct Search<'a> {
    d: usize,
    sigma_a: &'a SpdMatrix,
    sigma_b: &'a SpdMatrix,
    tau: f64,
}

impl Search<'_> {
    fn value(&self, theta: &[f64]) -> f64 {
        spd_from_params(self.d, theta)
            .and_then(|x| relaxed_objective(&x, self.sigma_a, self.sigma_b, self.tau))
            .unwrap_or(f64::INFINITY)
    }

    fn gradient(&self, theta: &[f64]) -> DVector<f64> {
        let h = 1e-6;
        let mut g = DVector::zeros(theta.len());
        let mut probe = theta.to_vec();
        for k in 0..theta.len() {
            probe[k] = theta[k] + h;
            let fp = self.value(&probe);
            probe[k] = theta[k] - h;
            let fm = self.value(&probe);
            probe[k] = theta[k];
            g[k] = (fp - fm) / (2.0 * h);
        }
        g
    }

    /// Quasi-Newton (BFGS) descent with Armijo backtracking.
    fn minimize(&self, start: Vec<f64>) -> (Vec<f64>, f64, f64) {
        let p = start.len();
        let mut x = DVector::from_vec(start);
        let mut f = self.value(x.as_slice());
        let mut g = self.gradient(x.as_slice());
        let mut h_inv = DMatrix::<f64>::identity(p, p);
        let mut flat = 0;
        for _ in 0..500 {
            if !f.is_finite() || g.norm() <= 1e-9 {
                break;
            }
            let mut dir = -(&h_inv * &g);
            let mut slope = g.dot(&dir);
            if slope >= 0.0 {
                h_inv = DMatrix::identity(p, p);
                dir = -g.clone();
                slope = g.dot(&dir);
            }
            let mut step = 1.0;
            let mut accepted = None;
            while step > 1e-14 {
                let cand = &x + &dir * step;
                let fc = self.value(cand.as_slice());
                if fc <= f + 1e-4 * step * slope {
                    accepted = Some((cand, fc));
                    break;
                }
                step *= 0.5;
            }
            let Some((x_new, f_new)) = accepted else {
                break;
            };
            let g_new = self.gradient(x_new.as_slice());
            let s = &x_new - &x;
            let y = &g_new - &g;
            let sy = s.dot(&y);
            if sy > 1e-16 {
                let rho = 1.0 / sy;
                let id = DMatrix::<f64>::identity(p, p);
                let left = &id - &s * y.transpose() * rho;
                let right = &id - &y * s.transpose() * rho;
                h_inv = &left * &h_inv * &right + &s * s.transpose() * rho;
            }
            // FD noise floor: a few consecutive negligible decreases end the search.
            if f - f_new <= 1e-14 * f.abs().max(1.0) {
                flat += 1;
            } else {
                flat = 0;
            }
            x = x_new;
            f = f_new;
            g = g_new;
            if flat >= 3 {
                break;
            }
        }
        let gnorm = g.norm();
        (x.as_slice().to_vec(), f, gnorm)
    }
}

/// Multistart minimization of Σ_x ↦ W₂²(Σ_x, Σ_β) + τ·KL(Σ_x‖Σ_α) over Σ_x = LLᵀ.
///
/// Restart 0 starts at Σ_β, restart 1 at Σ_α, later restarts at c^{1/2}·S·c^{1/2}
/// with S = sample_spd(d, 0.3, seed + k) and c alternating between Σ_β and Σ_α.
/// Returns the lowest value among restarts that pass the stationarity check.
pub fn brute_force_suot(
    sigma_a: &SpdMatrix,
    sigma_b: &SpdMatrix,
    tau: f64,
    restarts: usize,
    seed: u64,
) -> Result<(SpdMatrix, f64)> {
    if sigma_a.dim() != sigma_b.dim() {
        return Err(invalid("brute_force_suot: dimension mismatch"));
    }
    if !(tau > 0.0) || restarts == 0 {
        return Err(invalid("brute_force_suot needs tau > 0 and at least one restart"));
    }
    let d = sigma_a.dim();
    let search = Search {
        d,
        sigma_a,
        sigma_b,
        tau,
    };
    let roots = [sqrt_spd(sigma_b)?, sqrt_spd(sigma_a)?];
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut best_grad = f64::INFINITY;
    for k in 0..restarts {
        let start = match k {
            0 => sigma_b.clone(),
            1 => sigma_a.clone(),
            _ => {
                let noise = sample_spd(d, 0.3, seed.wrapping_add(k as u64))?;
                let root = &roots[k % 2];
                SpdMatrix::new(congruence(root.as_matrix(), noise.as_matrix()))?
            }
        };
        let (theta, f, gnorm) = search.minimize(params_from_spd(&start)?);
        best_grad = best_grad.min(gnorm);
        if gnorm <= STATIONARITY_TOL && best.as_ref().is_none_or(|(_, bf)| f < *bf) {
            best = Some((theta, f));
        }
    }
    match best {
        Some((theta, f)) => Ok((spd_from_params(d, &theta)?, f)),
        None => Err(SuotError::NonConvergence {
            best_grad_norm: best_grad,
        }),
    }
}

/// (f(Exp(base, h·dir)) − f(Exp(base, −h·dir))) / (2h).
pub fn fd_directional_derivative(
    f: impl Fn(&SpdMatrix) -> Result<f64>,
    base: &SpdMatrix,
    dir: &SymMatrix,
    h: f64,
) -> Result<f64> {
    let plus = exp_at(base, &dir.scale(h))?;
    let minus = exp_at(base, &dir.scale(-h))?;
    Ok((f(&plus)? - f(&minus)?) / (2.0 * h))
}

/// Richardson-extrapolated central difference, (4·D(h/2) − D(h))/3.
///
/// Truncation error is O(h⁴), so a larger h can be used and rounding noise
/// stays near ε·|f|/h. Needed when the directional derivative is tiny
/// compared with f.
pub fn fd_directional_derivative_richardson(
    f: impl Fn(&SpdMatrix) -> Result<f64>,
    base: &SpdMatrix,
    dir: &SymMatrix,
    h: f64,
) -> Result<f64> {
    let coarse = fd_directional_derivative(&f, base, dir, h)?;
    let fine = fd_directional_derivative(&f, base, dir, 0.5 * h)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search on a unimodal f. Returns (argmin, min).
pub fn golden_section_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let x = golden_section_argmin_by(|a, b| f(a) - f(b), lo, hi, tol);
    (x, f(x))
}

/// Golden-section search driven by a difference oracle `diff(a, b) = f(a) − f(b)`.
///
/// When the caller can evaluate the difference without cancellation, the
/// bracket keeps shrinking well past the √ε limit of comparing raw values.
pub fn golden_section_argmin_by(
    diff: impl Fn(f64, f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> f64 {
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut c = b - INV_PHI * (b - a);
    let mut e = a + INV_PHI * (b - a);
    let mut iters = 0;
    while (b - a) > tol && iters < 500 {
        if diff(c, e) < 0.0 {
            b = e;
            e = c;
            c = b - INV_PHI * (b - a);
        } else {
            a = c;
            c = e;
            e = a + INV_PHI * (b - a);
        }
        iters += 1;
    }
    0.5 * (a + b)
}

/// Evenly spaced grid values, inclusive of both ends.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}
