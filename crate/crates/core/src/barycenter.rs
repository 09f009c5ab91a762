//! SUOT barycenters of centered Gaussians: exact geodesic descent, the hybrid
//! fixed-point scheme, their single-pass stochastic variants, the closed-form
//! mean, the plain Wasserstein barycenter and a finite-difference baseline.
//!
//! Both deterministic methods move along Σ ← (Id + X)Σ(Id + X). The exact method
//! uses X = −η·G with G = Σ_i w_i·2(Id − T_i), T_i the map from Σ to the relaxed
//! marginal of measure i. The hybrid method uses X = η(Σ_i w_i T_i − Id), so with
//! the default η = 1 it is the Wasserstein fixed-point step applied to the
//! relaxed marginals, and it coincides with the exact method at step η/2.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::bures::{exp_at, tangent_norm};
use crate::error::{invalid, Result, SuotError};
use crate::gaussian::{kl_divergence_cov, transport_map, w2_squared_cov, GaussianMeasure};
use crate::spd::{self, clamp_to_box, eig, in_box, SpdMatrix, SymMatrix, EIGEN_FLOOR};
use crate::suot::{mean_weight_matrix, relaxed_parts};

#[derive(Clone, Debug, PartialEq)]
pub struct BarycenterProblem {
    measures: Vec<GaussianMeasure>,
    weights: Vec<f64>,
    tau: f64,
}

impl BarycenterProblem {
    /// Uniform weights 1/n.
    pub fn new(measures: Vec<GaussianMeasure>, tau: f64) -> Result<Self> {
        let n = measures.len();
        Self::with_weights(measures, alloc::vec![1.0; n.max(1)], tau)
    }

    /// Weights must be nonnegative with a positive sum; they are normalized here.
    pub fn with_weights(measures: Vec<GaussianMeasure>, weights: Vec<f64>, tau: f64) -> Result<Self> {
        if measures.is_empty() {
            return Err(invalid("barycenter problem needs at least one measure"));
        }
        if weights.len() != measures.len() {
            return Err(invalid(format!(
                "{} weights for {} measures",
                weights.len(),
                measures.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(invalid("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(invalid("weights must have a positive sum"));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(invalid(format!("tau must be positive and finite, got {tau}")));
        }
        let d = measures[0].dim();
        if measures.iter().any(|m| m.dim() != d) {
            return Err(invalid("measures have different dimensions"));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self {
            measures,
            weights,
            tau,
        })
    }

    pub fn from_covariances(covs: Vec<SpdMatrix>, tau: f64) -> Result<Self> {
        Self::new(covs.into_iter().map(GaussianMeasure::centered).collect(), tau)
    }

    pub fn measures(&self) -> &[GaussianMeasure] {
        &self.measures
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dim(&self) -> usize {
        self.measures[0].dim()
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::with_weights(self.measures.clone(), self.weights.clone(), tau)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum BoxPolicy {
    /// Fail with `BoxViolation` when an iterate leaves the box.
    Assert,
    /// Record the violation in the trace and continue.
    #[default]
    Warn,
    /// Project every iterate onto the box.
    Clamp,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Mode {
    #[default]
    Deterministic,
    Stochastic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimConfig {
    pub eta: f64,
    pub max_iters: usize,
    /// Stop when |L_{k−1} − L_k| ≤ tol.
    pub tol: f64,
    pub rho: Option<f64>,
    pub box_policy: BoxPolicy,
    pub mode: Mode,
    /// Optional extra stop on ‖G‖_Σ ≤ grad_tol. Off by default.
    pub grad_tol: Option<f64>,
    /// Heavy-ball coefficient, baseline only.
    pub momentum: f64,
    /// Finite-difference step, baseline only.
    pub fd_step: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            max_iters: 500,
            tol: 1e-8,
            rho: None,
            box_policy: BoxPolicy::Warn,
            mode: Mode::Deterministic,
            grad_tol: None,
            momentum: 0.0,
            fd_step: 1e-5,
        }
    }
}

impl OptimConfig {
    pub fn with_eta(eta: f64) -> Self {
        Self {
            eta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(invalid(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.tol > 0.0) {
            return Err(invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if let Some(rho) = self.rho {
            if !(rho > 1.0) {
                return Err(invalid(format!("rho must exceed 1, got {rho}")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.fd_step > 0.0) {
            return Err(invalid("fd_step must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IterRecord {
    pub iter: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub in_box: bool,
    pub ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum RunStatus {
    Converged,
    MaxIters,
    StepRejected,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunTrace {
    pub records: Vec<IterRecord>,
    pub status: RunStatus,
    /// Step size in effect at the end (halved once after a rejected step).
    pub final_eta: f64,
}

impl RunTrace {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn final_loss(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.loss)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BarycenterRun {
    pub sigma: SpdMatrix,
    pub trace: RunTrace,
}

/// Observer for iterates. The harness supplies wall-clock time and streams records.
pub trait Monitor {
    fn elapsed_ms(&mut self) -> f64 {
        0.0
    }

    fn record(&mut self, _rec: &IterRecord, _sigma: &SpdMatrix) {}
}

pub struct NoMonitor;

impl Monitor for NoMonitor {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Method {
    Exact,
    Hybrid,
    ExactSgd,
    HybridSgd,
    Numeric,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Hybrid => "hybrid",
            Method::ExactSgd => "exact-sgd",
            Method::HybridSgd => "hybrid-sgd",
            Method::Numeric => "numeric",
        }
    }
}

/// Weighted SUOT loss, map average and gradient at one point.
struct Evaluation {
    loss: f64,
    /// Σ_i w_i T_i.
    t_bar: DMatrix<f64>,
    grad: SymMatrix,
}

fn evaluate(problem: &BarycenterProblem, sigma: &SpdMatrix) -> Result<Evaluation> {
    let d = sigma.dim();
    let mut loss = 0.0;
    let mut t_bar = DMatrix::zeros(d, d);
    for (m, &w) in problem.measures.iter().zip(&problem.weights) {
        let (sx, t) = relaxed_parts(m.cov(), sigma, problem.tau)?;
        let cost = w2_squared_cov(&sx, sigma)? + problem.tau * kl_divergence_cov(&sx, m.cov())?;
        loss += w * cost;
        t_bar += t.as_matrix() * w;
    }
    if !loss.is_finite() {
        return Err(SuotError::NonFinite("barycenter objective"));
    }
    let grad = SymMatrix::symmetrized((DMatrix::identity(d, d) - &t_bar) * 2.0);
    Ok(Evaluation { loss, t_bar, grad })
}

/// Σ_i w_i · suot_cost_centered(Σ_{α_i}, Σ_β, τ), summed in index order.
pub fn objective(problem: &BarycenterProblem, sigma_b: &SpdMatrix) -> Result<f64> {
    Ok(evaluate(problem, sigma_b)?.loss)
}

/// Σ_i w_i G_i at Σ_β.
pub fn objective_gradient(problem: &BarycenterProblem, sigma_b: &SpdMatrix) -> Result<SymMatrix> {
    Ok(evaluate(problem, sigma_b)?.grad)
}

/// Box bookkeeping shared by all optimizers.
struct BoxGuard {
    rho: Option<f64>,
    policy: BoxPolicy,
    warned: bool,
}

impl BoxGuard {
    fn new(config: &OptimConfig) -> Self {
        Self {
            rho: config.rho,
            policy: config.box_policy,
            warned: false,
        }
    }

    /// Applies the policy; returns the (possibly clamped) iterate and membership.
    fn apply(&mut self, sigma: SpdMatrix, iteration: usize) -> Result<(SpdMatrix, bool)> {
        let Some(rho) = self.rho else {
            return Ok((sigma, true));
        };
        if in_box(&sigma, rho) {
            return Ok((sigma, true));
        }
        match self.policy {
            BoxPolicy::Clamp => Ok((clamp_to_box(&sigma, rho)?, true)),
            BoxPolicy::Assert => {
                let (lo, hi) = spd::spectrum_range(sigma.as_sym())?;
                Err(SuotError::BoxViolation {
                    iteration,
                    min_eigenvalue: lo,
                    max_eigenvalue: hi,
                    rho,
                })
            }
            BoxPolicy::Warn => {
                if !self.warned {
                    log::warn!("iterate {iteration} left the box with rho = {rho}");
                    self.warned = true;
                }
                Ok((sigma, false))
            }
        }
    }
}

struct Recorder<'a> {
    monitor: &'a mut dyn Monitor,
    records: Vec<IterRecord>,
}

impl<'a> Recorder<'a> {
    fn push(&mut self, iter: usize, loss: f64, grad_norm: f64, in_box: bool, sigma: &SpdMatrix) {
        let rec = IterRecord {
            iter,
            loss,
            grad_norm,
            in_box,
            ms: self.monitor.elapsed_ms(),
        };
        self.monitor.record(&rec, sigma);
        self.records.push(rec);
    }
}

fn check_start(problem: &BarycenterProblem, config: &OptimConfig, init: &SpdMatrix) -> Result<()> {
    config.validate()?;
    spd::check_dims(problem.dim(), init.dim(), "barycenter init")
}

/// Deterministic descent along Σ ← (Id + X)Σ(Id + X) with X chosen by `direction`.
fn descend(
    problem: &BarycenterProblem,
    config: &OptimConfig,
    init: &SpdMatrix,
    monitor: &mut dyn Monitor,
    direction: fn(&Evaluation, f64) -> SymMatrix,
) -> Result<BarycenterRun> {
    check_start(problem, config, init)?;
    let mut guard = BoxGuard::new(config);
    let mut rec = Recorder {
        monitor,
        records: Vec::new(),
    };
    let (mut sigma, inside) = guard.apply(init.clone(), 0)?;
    let mut ev = evaluate(problem, &sigma)?;
    rec.push(0, ev.loss, tangent_norm(&sigma, &ev.grad), inside, &sigma);

    let mut eta = config.eta;
    let mut halved = false;
    let mut status = RunStatus::MaxIters;
    for k in 1..=config.max_iters {
        let next = loop {
            match exp_at(&sigma, &direction(&ev, eta)) {
                Ok(s) => break Some(s),
                Err(SuotError::RetractionOutOfCone { .. } | SuotError::NotPositiveDefinite { .. })
                    if !halved =>
                {
                    halved = true;
                    eta *= 0.5;
                    log::warn!("step {k} left the SPD cone, halving eta to {eta}");
                }
                Err(SuotError::RetractionOutOfCone { .. } | SuotError::NotPositiveDefinite { .. }) => {
                    break None
                }
                Err(e) => return Err(e),
            }
        };
        let Some(next) = next else {
            status = RunStatus::StepRejected;
            break;
        };
        let (next, inside) = guard.apply(next, k)?;
        let next_ev = evaluate(problem, &next)?;
        let gnorm = tangent_norm(&next, &next_ev.grad);
        rec.push(k, next_ev.loss, gnorm, inside, &next);
        let change = (ev.loss - next_ev.loss).abs();
        sigma = next;
        ev = next_ev;
        if change <= config.tol || config.grad_tol.is_some_and(|g| gnorm <= g) {
            status = RunStatus::Converged;
            break;
        }
    }
    Ok(BarycenterRun {
        sigma,
        trace: RunTrace {
            records: rec.records,
            status,
            final_eta: eta,
        },
    })
}

fn exact_direction(ev: &Evaluation, eta: f64) -> SymMatrix {
    ev.grad.scale(-eta)
}

fn hybrid_direction(ev: &Evaluation, eta: f64) -> SymMatrix {
    let d = ev.t_bar.nrows();
    SymMatrix::symmetrized((&ev.t_bar - DMatrix::identity(d, d)) * eta)
}

/// Σ ← (Id − ηG)Σ(Id − ηG), the exponential map along the negative gradient.
pub fn exact_geodesic_gd(
    problem: &BarycenterProblem,
    config: &OptimConfig,
    init: &SpdMatrix,
) -> Result<BarycenterRun> {
    exact_geodesic_gd_with(problem, config, init, &mut NoMonitor)
}

pub fn exact_geodesic_gd_with(
    problem: &BarycenterProblem,
    config: &OptimConfig,
    init: &SpdMatrix,
    monitor: &mut dyn Monitor,
) -> Result<BarycenterRun> {
    descend(problem, config, init, monitor, exact_direction)
}

/// S = (1−η)Id + η·Σ_i w_i T_{Σ→Σ_{x_i}}, Σ ← SΣS. η = 1 is the plain hybrid step.
pub fn hybrid_gd(
    problem: &BarycenterProblem,
    config: &OptimConfig,
    init: &SpdMatrix,
) -> Result<BarycenterRun> {
    hybrid_gd_with(problem, config, init, &mut NoMonitor)
}

pub fn hybrid_gd_with(
    problem: &BarycenterProblem,
    config: &OptimConfig,
    init: &SpdMatrix,
    monitor: &mut dyn Monitor,
) -> Result<BarycenterRun> {
    descend(problem, config, init, monitor, hybrid_direction)
}

/// One pass over a seeded permutation, step η/(k+1) at the k-th visited measure.
pub fn exact_sgd(
    problem: &BarycenterProblem,
    config: &OptimConfig,
    init: &SpdMatrix,
    seed: u64,
) -> Result<BarycenterRun> {
    stochastic(problem, config, init, seed, &mut NoMonitor, false)
}

/// Hybrid counterpart of [`exact_sgd`]: S = (1−η_k)Id + η_k T_i.
pub fn hybrid_sgd(
    problem: &BarycenterProblem,
    config: &OptimConfig,
    init: &SpdMatrix,
    seed: u64,
) -> Result<BarycenterRun> {
    stochastic(problem, config, init, seed, &mut NoMonitor, true)
}

/// The visiting order used by the stochastic variants.
pub fn sgd_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut Xoshiro256PlusPlus::seed_from_u64(seed));
    order
}

fn stochastic(
    problem: &BarycenterProblem,
    config: &OptimConfig,
    init: &SpdMatrix,
    seed: u64,
    monitor: &mut dyn Monitor,
    hybrid: bool,
) -> Result<BarycenterRun> {
    check_start(problem, config, init)?;
    let d = problem.dim();
    let mut guard = BoxGuard::new(config);
    let mut rec = Recorder {
        monitor,
        records: Vec::new(),
    };
    let (mut sigma, inside) = guard.apply(init.clone(), 0)?;
    let ev = evaluate(problem, &sigma)?;
    rec.push(0, ev.loss, tangent_norm(&sigma, &ev.grad), inside, &sigma);

    let mut halved = false;
    let mut scale = 1.0;
    let mut status = RunStatus::MaxIters;
    for (k, &i) in sgd_order(problem.len(), seed).iter().enumerate() {
        let (_, t) = relaxed_parts(problem.measures[i].cov(), &sigma, problem.tau)?;
        let toward = t.as_matrix() - DMatrix::identity(d, d);
        let next = loop {
            let eta_k = scale * config.eta / (k as f64 + 1.0);
            // exact: −η_k·2(Id − T); hybrid: η_k(T − Id)
            let factor = if hybrid { eta_k } else { 2.0 * eta_k };
            match exp_at(&sigma, &SymMatrix::symmetrized(&toward * factor)) {
                Ok(s) => break Some(s),
                Err(SuotError::RetractionOutOfCone { .. } | SuotError::NotPositiveDefinite { .. })
                    if !halved =>
                {
                    halved = true;
                    scale = 0.5;
                }
                Err(SuotError::RetractionOutOfCone { .. } | SuotError::NotPositiveDefinite { .. }) => {
                    break None
                }
                Err(e) => return Err(e),
            }
        };
        let Some(next) = next else {
            status = RunStatus::StepRejected;
            break;
        };
        let (next, inside) = guard.apply(next, k + 1)?;
        let ev = evaluate(problem, &next)?;
        rec.push(k + 1, ev.loss, tangent_norm(&next, &ev.grad), inside, &next);
        sigma = next;
    }
    Ok(BarycenterRun {
        sigma,
        trace: RunTrace {
            records: rec.records,
            status,
            final_eta: scale * config.eta,
        },
    })
}

/// Central finite-difference Euclidean gradient over the symmetric basis.
pub fn fd_euclidean_gradient(
    problem: &BarycenterProblem,
    sigma: &SpdMatrix,
    h: f64,
) -> Result<SymMatrix> {
    let d = sigma.dim();
    let mut g = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let mut e = DMatrix::zeros(d, d);
            e[(i, j)] = 1.0;
            e[(j, i)] = 1.0;
            let plus = SpdMatrix::from_matrix(sigma.as_matrix() + &e * h)?;
            let minus = SpdMatrix::from_matrix(sigma.as_matrix() - &e * h)?;
            let deriv = (objective(problem, &plus)? - objective(problem, &minus)?) / (2.0 * h);
            if i == j {
                g[(i, i)] = deriv;
            } else {
                g[(i, j)] = 0.5 * deriv;
                g[(j, i)] = 0.5 * deriv;
            }
        }
    }
    Ok(SymMatrix::symmetrized(g))
}

/// Baseline: R = 2(∇LΣ + (∇LΣ)ᵀ) from a finite-difference ∇L, heavy-ball
/// v ← μv + R, Σ ← (Id − ηv)Σ(Id − ηv).
pub fn numeric_gd_baseline(
    problem: &BarycenterProblem,
    config: &OptimConfig,
    init: &SpdMatrix,
) -> Result<BarycenterRun> {
    numeric_gd_baseline_with(problem, config, init, &mut NoMonitor)
}

pub fn numeric_gd_baseline_with(
    problem: &BarycenterProblem,
    config: &OptimConfig,
    init: &SpdMatrix,
    monitor: &mut dyn Monitor,
) -> Result<BarycenterRun> {
    check_start(problem, config, init)?;
    let d = problem.dim();
    let mut guard = BoxGuard::new(config);
    let mut rec = Recorder {
        monitor,
        records: Vec::new(),
    };
    let (mut sigma, inside) = guard.apply(init.clone(), 0)?;
    let mut loss = objective(problem, &sigma)?;
    let mut egrad = fd_euclidean_gradient(problem, &sigma, config.fd_step)?;
    rec.push(0, loss, tangent_norm(&sigma, &egrad.scale(2.0)), inside, &sigma);

    let mut velocity = DMatrix::<f64>::zeros(d, d);
    let mut eta = config.eta;
    let mut halved = false;
    let mut status = RunStatus::MaxIters;
    for k in 1..=config.max_iters {
        let gs = egrad.as_matrix() * sigma.as_matrix();
        let r = (&gs + gs.transpose()) * 2.0;
        let v = &velocity * config.momentum + r;
        let next = loop {
            match exp_at(&sigma, &SymMatrix::symmetrized(&v * -eta)) {
                Ok(s) => break Some(s),
                Err(SuotError::RetractionOutOfCone { .. } | SuotError::NotPositiveDefinite { .. })
                    if !halved =>
                {
                    halved = true;
                    eta *= 0.5;
                }
                Err(SuotError::RetractionOutOfCone { .. } | SuotError::NotPositiveDefinite { .. }) => {
                    break None
                }
                Err(e) => return Err(e),
            }
        };
        let Some(next) = next else {
            status = RunStatus::StepRejected;
            break;
        };
        velocity = v;
        let (next, inside) = guard.apply(next, k)?;
        let next_loss = objective(problem, &next)?;
        egrad = fd_euclidean_gradient(problem, &next, config.fd_step)?;
        let gnorm = tangent_norm(&next, &egrad.scale(2.0));
        rec.push(k, next_loss, gnorm, inside, &next);
        let change = (loss - next_loss).abs();
        sigma = next;
        loss = next_loss;
        if change <= config.tol || config.grad_tol.is_some_and(|g| gnorm <= g) {
            status = RunStatus::Converged;
            break;
        }
    }
    Ok(BarycenterRun {
        sigma,
        trace: RunTrace {
            records: rec.records,
            status,
            final_eta: eta,
        },
    })
}

/// Dispatches on `method`. `seed` only matters for the stochastic variants.
pub fn run_method(
    method: Method,
    problem: &BarycenterProblem,
    config: &OptimConfig,
    init: &SpdMatrix,
    seed: u64,
    monitor: &mut dyn Monitor,
) -> Result<BarycenterRun> {
    match method {
        Method::Exact => exact_geodesic_gd_with(problem, config, init, monitor),
        Method::Hybrid => hybrid_gd_with(problem, config, init, monitor),
        Method::ExactSgd => stochastic(problem, config, init, seed, monitor, false),
        Method::HybridSgd => stochastic(problem, config, init, seed, monitor, true),
        Method::Numeric => numeric_gd_baseline_with(problem, config, init, monitor),
    }
}

/// b = (Σ_i w_i M_i)⁻¹ Σ_i w_i M_i a_i with M_i from [`mean_weight_matrix`].
pub fn mean_barycenter(
    means: &[DVector<f64>],
    covs: &[SpdMatrix],
    tau: f64,
    weights: &[f64],
) -> Result<DVector<f64>> {
    if means.is_empty() || means.len() != covs.len() || weights.len() != covs.len() {
        return Err(invalid("mean_barycenter: means, covs and weights must have equal nonzero length"));
    }
    let d = covs[0].dim();
    let mut lhs = DMatrix::zeros(d, d);
    let mut rhs = DVector::zeros(d);
    for ((a, s), &w) in means.iter().zip(covs).zip(weights) {
        spd::check_dims(a.len(), d, "mean_barycenter mean")?;
        spd::check_dims(s.dim(), d, "mean_barycenter cov")?;
        let m = mean_weight_matrix(s, tau)?;
        lhs += m.as_matrix() * w;
        rhs += m.as_matrix() * a * w;
    }
    let lhs = SymMatrix::symmetrized(lhs);
    let e = eig(&lhs)?;
    if !(e.min() > EIGEN_FLOOR) {
        return Err(SuotError::SingularSystem {
            min_eigenvalue: e.min(),
        });
    }
    let coords = e.vectors.transpose() * rhs;
    let scaled = DVector::from_iterator(d, coords.iter().zip(e.values.iter()).map(|(c, l)| c / l));
    Ok(&e.vectors * scaled)
}

/// Wasserstein barycenter by the fixed point S = Σ_i w_i T_{Σ→Σ_i}, Σ ← SΣS.
///
/// Starts from the weighted arithmetic mean and stops once ‖S − Id‖_F ≤ tol.
pub fn wasserstein_barycenter(
    covs: &[SpdMatrix],
    weights: &[f64],
    config: &OptimConfig,
) -> Result<SpdMatrix> {
    Ok(wasserstein_barycenter_run(covs, weights, config)?.sigma)
}

/// As [`wasserstein_barycenter`], also returning the trace of Σ_i w_i W₂²(Σ, Σ_i).
pub fn wasserstein_barycenter_run(
    covs: &[SpdMatrix],
    weights: &[f64],
    config: &OptimConfig,
) -> Result<BarycenterRun> {
    if covs.is_empty() || covs.len() != weights.len() {
        return Err(invalid("wasserstein_barycenter: covs and weights must have equal nonzero length"));
    }
    let d = covs[0].dim();
    let total: f64 = weights.iter().sum();
    let mut start = DMatrix::zeros(d, d);
    for (c, &w) in covs.iter().zip(weights) {
        spd::check_dims(c.dim(), d, "wasserstein_barycenter")?;
        start += c.as_matrix() * (w / total);
    }
    let mut sigma = SpdMatrix::from_matrix(start)?;
    let mut records = Vec::new();
    let mut status = RunStatus::MaxIters;
    for k in 0..=config.max_iters {
        let mut s = DMatrix::zeros(d, d);
        let mut loss = 0.0;
        for (c, &w) in covs.iter().zip(weights) {
            s += transport_map(&sigma, c)?.as_matrix() * (w / total);
            loss += (w / total) * w2_squared_cov(&sigma, c)?;
        }
        let step = (&s - DMatrix::identity(d, d)).norm();
        records.push(IterRecord {
            iter: k,
            loss,
            grad_norm: step,
            in_box: true,
            ms: 0.0,
        });
        if step <= config.tol {
            status = RunStatus::Converged;
            break;
        }
        if k == config.max_iters {
            break;
        }
        sigma = SpdMatrix::new(spd::congruence(&s, sigma.as_matrix()))?;
    }
    Ok(BarycenterRun {
        sigma,
        trace: RunTrace {
            records,
            status,
            final_eta: 1.0,
        },
    })
}
