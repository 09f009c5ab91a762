//! Subcommand implementations. Each returns its results as values and writes
//! its files under the context's output directory.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use suot_core::barycenter::{
    mean_barycenter, run_method, wasserstein_barycenter, BarycenterProblem, BarycenterRun, Method,
    RunStatus,
};
use suot_core::bures::{sample_spd, tangent_inner, tangent_norm};
use suot_core::gaussian::w2_squared_cov;
use suot_core::oracle::{fd_directional_derivative_richardson, OracleReport};
use suot_core::spd::{eig, inv_spd};
use suot_core::suot::{solve_entropic_suot, solve_suot, suot_cost_centered, suot_gradient};
use suot_core::{GaussianMeasure, SpdMatrix, SymMatrix};

use crate::config::{Contamination, ExperimentConfig, Init, OptimizerSpec};
use crate::corpus;
use crate::error::{HarnessError, Result};
use crate::formats::{
    ensure_dir, read_corpus, read_json, read_measure, write_contour, write_corpus, write_json,
    write_rows, CsvTrace, MatrixJson,
};

pub struct Context {
    pub cfg: ExperimentConfig,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    config: &'a ExperimentConfig,
}

impl Context {
    fn manifest(&self, command: &str) -> Result<()> {
        ensure_dir(&self.out)?;
        write_json(
            &self.out.join(format!("{command}_config.json")),
            &Manifest {
                command,
                seed: self.seed,
                config: &self.cfg,
            },
        )
    }

    fn init(&self, covs: &[SpdMatrix]) -> Result<SpdMatrix> {
        let d = covs[0].dim();
        Ok(match self.cfg.init {
            Init::Identity => SpdMatrix::identity(d),
            Init::Mean => {
                let sum = covs
                    .iter()
                    .fold(DMatrix::zeros(d, d), |acc, c| acc + c.as_matrix());
                SpdMatrix::from_matrix(sum / covs.len() as f64)?
            }
        })
    }

    fn suot_barycenter(&self, covs: &[SpdMatrix], tau: f64) -> Result<BarycenterRun> {
        let problem = BarycenterProblem::from_covariances(covs.to_vec(), tau)?;
        let cfg = self.cfg.optim_config(1.0);
        let init = self.init(covs)?;
        Ok(run_method(
            Method::Hybrid,
            &problem,
            &cfg,
            &init,
            self.seed,
            &mut suot_core::barycenter::NoMonitor,
        )?)
    }

    fn wasserstein(&self, covs: &[SpdMatrix]) -> Result<SpdMatrix> {
        let w = vec![1.0 / covs.len() as f64; covs.len()];
        Ok(wasserstein_barycenter(covs, &w, &self.cfg.optim_config(1.0))?)
    }
}

#[derive(Debug)]
pub struct GenSummary {
    pub clean: PathBuf,
    pub contaminated: Option<PathBuf>,
}

/// Writes `clean/` and, with a contamination spec, `contaminated/` plus `contamination.json`.
pub fn gen(ctx: &Context) -> Result<GenSummary> {
    ctx.manifest("gen")?;
    let clean = corpus::clean_covariances(&ctx.cfg, ctx.seed)?;
    let clean_dir = ctx.out.join("clean");
    write_corpus(&clean_dir, &corpus::centered(clean.clone()))?;
    let contaminated = match corpus::contamination_for(&ctx.cfg) {
        Some(c) => {
            let dir = ctx.out.join("contaminated");
            write_corpus(&dir, &corpus::centered(corpus::contaminate(&clean, &c)?))?;
            write_json(&ctx.out.join("contamination.json"), &c)?;
            Some(dir)
        }
        None => None,
    };
    Ok(GenSummary {
        clean: clean_dir,
        contaminated,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BarycenterResult {
    pub method: Method,
    pub eta: f64,
    /// converged, max-iters, step-rejected or error.
    pub status: String,
    pub error: Option<String>,
    pub final_eta: f64,
    pub iterations: usize,
    /// Absent when the run failed.
    pub final_loss: Option<f64>,
    pub mean: Vec<f64>,
    pub sigma: Option<MatrixJson>,
    pub trace: PathBuf,
}

impl BarycenterResult {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

fn status_name(s: RunStatus) -> &'static str {
    match s {
        RunStatus::Converged => "converged",
        RunStatus::MaxIters => "max-iters",
        RunStatus::StepRejected => "step-rejected",
    }
}

pub fn run_label(spec: &OptimizerSpec) -> String {
    format!("{}_eta{}", spec.method.name(), spec.eta)
}

/// Runs every configured optimizer on the corpus in `corpus_dir`.
///
/// Writes `trace_<method>_eta<η>.csv`, `barycenter_<method>_eta<η>.json` and a
/// `barycenter.json` summary. Optimizer failures are recorded, not raised.
pub fn barycenter(ctx: &Context, corpus_dir: &Path) -> Result<Vec<BarycenterResult>> {
    ctx.manifest("barycenter")?;
    let measures = read_corpus(corpus_dir)?;
    let covs: Vec<SpdMatrix> = measures.iter().map(|m| m.cov().clone()).collect();
    let problem = BarycenterProblem::new(measures.clone(), ctx.cfg.tau)?;
    let means: Vec<_> = measures.iter().map(|m| m.mean().clone()).collect();
    let mean = mean_barycenter(&means, &covs, ctx.cfg.tau, problem.weights())?;
    let init = ctx.init(&covs)?;

    let mut results = Vec::new();
    for spec in &ctx.cfg.optimizers {
        let method = ctx.cfg.effective_method(spec.method);
        let label = run_label(&OptimizerSpec { method, eta: spec.eta });
        let trace_path = ctx.out.join(format!("trace_{label}.csv"));
        let mut trace = CsvTrace::create(&trace_path)?;
        let run = run_method(
            method,
            &problem,
            &ctx.cfg.optim_config(spec.eta),
            &init,
            ctx.seed,
            &mut trace,
        );
        trace.finish()?;
        let result = match run {
            Ok(run) => BarycenterResult {
                method,
                eta: spec.eta,
                status: status_name(run.trace.status).into(),
                error: None,
                final_eta: run.trace.final_eta,
                iterations: run.trace.records.len().saturating_sub(1),
                final_loss: Some(run.trace.final_loss()),
                mean: mean.iter().copied().collect(),
                sigma: Some(MatrixJson::from_spd(&run.sigma)),
                trace: trace_path,
            },
            Err(e) => BarycenterResult {
                method,
                eta: spec.eta,
                status: "error".into(),
                error: Some(e.to_string()),
                final_eta: spec.eta,
                iterations: 0,
                final_loss: None,
                mean: mean.iter().copied().collect(),
                sigma: None,
                trace: trace_path,
            },
        };
        write_json(&ctx.out.join(format!("barycenter_{label}.json")), &result)?;
        results.push(result);
    }
    write_json(&ctx.out.join("barycenter.json"), &results)?;
    Ok(results)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub w2_to_clean: f64,
    pub w2_to_wasserstein: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareReport {
    pub tau: f64,
    /// w2²(B_W, B_clean).
    pub w2_wasserstein: f64,
    /// w2²(B_SUOT, B_clean).
    pub w2_suot: f64,
    /// w2_suot / w2_wasserstein; absent when the denominator is zero.
    pub ratio: Option<f64>,
    pub clean: MatrixJson,
    pub wasserstein: MatrixJson,
    pub suot: MatrixJson,
    pub sweep: Vec<SweepPoint>,
}

/// Compares the Wasserstein and SUOT barycenters of a contaminated corpus
/// against the Wasserstein barycenter of the clean one. Writes `compare.json`
/// and, for d = 2, contour grids under `contours/`.
pub fn compare(ctx: &Context, clean_dir: &Path, contaminated_dir: &Path) -> Result<CompareReport> {
    ctx.manifest("compare")?;
    let clean: Vec<SpdMatrix> = read_corpus(clean_dir)?.iter().map(|m| m.cov().clone()).collect();
    let dirty: Vec<SpdMatrix> = read_corpus(contaminated_dir)?
        .iter()
        .map(|m| m.cov().clone())
        .collect();
    if clean.len() != dirty.len() || clean[0].dim() != dirty[0].dim() {
        return Err(HarnessError::Config(
            "clean and contaminated corpora differ in size or dimension".into(),
        ));
    }
    let b_clean = ctx.wasserstein(&clean)?;
    let b_w = ctx.wasserstein(&dirty)?;
    let b_s = ctx.suot_barycenter(&dirty, ctx.cfg.tau)?.sigma;
    let w2_wasserstein = w2_squared_cov(&b_w, &b_clean)?;
    let w2_suot = w2_squared_cov(&b_s, &b_clean)?;

    let mut sweep = Vec::new();
    for &tau in &ctx.cfg.tau_grid {
        let b = ctx.suot_barycenter(&dirty, tau)?.sigma;
        sweep.push(SweepPoint {
            tau,
            w2_to_clean: w2_squared_cov(&b, &b_clean)?,
            w2_to_wasserstein: w2_squared_cov(&b, &b_w)?,
        });
    }

    let report = CompareReport {
        tau: ctx.cfg.tau,
        w2_wasserstein,
        w2_suot,
        ratio: (w2_wasserstein > 0.0).then(|| w2_suot / w2_wasserstein),
        clean: MatrixJson::from_spd(&b_clean),
        wasserstein: MatrixJson::from_spd(&b_w),
        suot: MatrixJson::from_spd(&b_s),
        sweep,
    };
    write_json(&ctx.out.join("compare.json"), &report)?;

    if clean[0].dim() == 2 {
        let spec = contamination_near(contaminated_dir).or_else(|| corpus::contamination_for(&ctx.cfg));
        write_contours(&ctx.out.join("contours"), &clean, &dirty, spec.as_ref(), [&b_clean, &b_w, &b_s])?;
    }
    Ok(report)
}

fn contamination_near(dir: &Path) -> Option<Contamination> {
    let path = dir.parent()?.join("contamination.json");
    path.exists().then(|| read_json(&path).ok()).flatten()
}

/// Number of grid points per axis in contour files.
pub const CONTOUR_POINTS: usize = 81;

fn density(cov: &SpdMatrix) -> Result<impl Fn(f64, f64) -> f64> {
    let inv = inv_spd(cov)?;
    let (a, b, c) = (inv.as_matrix()[(0, 0)], inv.as_matrix()[(0, 1)], inv.as_matrix()[(1, 1)]);
    let m = cov.as_matrix();
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let norm = 1.0 / (2.0 * std::f64::consts::PI * det.sqrt());
    Ok(move |x: f64, y: f64| norm * (-0.5 * (a * x * x + 2.0 * b * x * y + c * y * y)).exp())
}

fn write_contours(
    dir: &Path,
    clean: &[SpdMatrix],
    dirty: &[SpdMatrix],
    spec: Option<&Contamination>,
    barycenters: [&SpdMatrix; 3],
) -> Result<()> {
    let outlier = match spec {
        Some(c) => Some(c.outlier.to_spd().map_err(HarnessError::Config)?),
        None => None,
    };
    let mut widest: f64 = 0.0;
    for c in clean.iter().chain(dirty).chain(barycenters).chain(outlier.as_ref()) {
        widest = widest.max(eig(c.as_sym())?.max());
    }
    let half = 3.0 * widest.sqrt();
    let axis = suot_core::oracle::linspace(-half, half, CONTOUR_POINTS);

    for (i, c) in clean.iter().enumerate() {
        write_contour(&dir.join(format!("clean_{i:03}.csv")), &axis, density(c)?)?;
    }
    for (i, c) in dirty.iter().enumerate() {
        let path = dir.join(format!("contaminated_{i:03}.csv"));
        match (spec, &outlier) {
            (Some(s), Some(o)) if s.members.contains(&i) => {
                let (p, q, w) = (density(&clean[i])?, density(o)?, s.weight);
                write_contour(&path, &axis, |x, y| (1.0 - w) * p(x, y) + w * q(x, y))?;
            }
            _ => write_contour(&path, &axis, density(c)?)?,
        }
    }
    for (name, b) in ["clean", "wasserstein", "suot"].iter().zip(barycenters) {
        write_contour(&dir.join(format!("barycenter_{name}.csv")), &axis, density(b)?)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct AblationRow {
    pub tau: f64,
    pub w2_to_wasserstein: f64,
}

/// w2² from the SUOT barycenter at each τ of the grid to the Wasserstein
/// barycenter of the same corpus. Writes `ablate_tau.csv`.
pub fn ablate_tau(ctx: &Context, corpus_dir: &Path) -> Result<Vec<AblationRow>> {
    ctx.manifest("ablate_tau")?;
    let covs: Vec<SpdMatrix> = read_corpus(corpus_dir)?.iter().map(|m| m.cov().clone()).collect();
    let target = ctx.wasserstein(&covs)?;
    let rows = ctx
        .cfg
        .tau_grid
        .iter()
        .map(|&tau| {
            let b = ctx.suot_barycenter(&covs, tau)?.sigma;
            Ok(AblationRow {
                tau,
                w2_to_wasserstein: w2_squared_cov(&b, &target)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_rows(&ctx.out.join("ablate_tau.csv"), &["tau", "w2_to_wasserstein"], &rows)?;
    Ok(rows)
}

/// Unit-Frobenius symmetric direction derived from `seed`.
pub fn random_direction(d: usize, seed: u64) -> Result<SymMatrix> {
    let m = sample_spd(d, 0.7, seed)?;
    let x = m.as_matrix() - DMatrix::identity(d, d);
    let n = x.norm();
    let x = if n > 1e-8 { x / n } else { DMatrix::identity(d, d) / (d as f64).sqrt() };
    Ok(SymMatrix::from_matrix(x)?)
}

/// Step of the Richardson-extrapolated central difference along the exponential map.
pub const GRADCHECK_STEP: f64 = 1e-3;
pub const GRADCHECK_TOL: f64 = 1e-5;
pub const MINIMIZER_TOL: f64 = 1e-7;
const GRADCHECK_TAUS: [f64; 5] = [0.1, 0.3, 1.0, 3.0, 10.0];

fn directional_report(
    name: String,
    sa: &SpdMatrix,
    sb: &SpdMatrix,
    tau: f64,
    dir: &SymMatrix,
) -> Result<OracleReport> {
    let g = suot_gradient(sa, sb, tau)?;
    let exact = tangent_inner(sb, &g, dir);
    let fd = fd_directional_derivative_richardson(|s| suot_cost_centered(sa, s, tau), sb, dir, GRADCHECK_STEP)?;
    Ok(OracleReport::new(name, exact, fd, GRADCHECK_TOL))
}

/// Gradient reports: three fixed instances, then `count` random ones with five directions each.
pub fn gradcheck_reports(seed: u64, count: usize) -> Result<Vec<OracleReport>> {
    let mut reports = Vec::new();

    let a = sample_spd(3, 0.5, seed)?;
    let g = suot_gradient(&a, &a, 1.0)?;
    reports.push(OracleReport::absolute(
        "gradient norm at sigma_b = sigma_a, d=3, tau=1",
        tangent_norm(&a, &g),
        0.0,
        MINIMIZER_TOL,
    ));

    let (sa, sb) = (sample_spd(3, 0.5, seed ^ 0x5a5a)?, sample_spd(3, 0.5, seed ^ 0xa5a5)?);
    reports.push(directional_report(
        "random pair d=3, tau=1".into(),
        &sa,
        &sb,
        1.0,
        &random_direction(3, seed ^ 0x3c3c)?,
    )?);

    reports.push(directional_report(
        "scalar sigma_a=1, sigma_b=4, tau=2".into(),
        &SpdMatrix::from_diagonal(&[1.0])?,
        &SpdMatrix::from_diagonal(&[4.0])?,
        2.0,
        &SymMatrix::identity(1),
    )?);

    for k in 0..count {
        let d = 1 + k % 5;
        let tau = GRADCHECK_TAUS[k % GRADCHECK_TAUS.len()];
        let base = seed.wrapping_add(1000 * (k as u64 + 1));
        let sa = sample_spd(d, 0.5, base)?;
        let sb = sample_spd(d, 0.5, base + 1)?;
        for j in 0..5u64 {
            let dir = random_direction(d, base + 2 + j)?;
            reports.push(directional_report(
                format!("random #{k} d={d} tau={tau} direction {j}"),
                &sa,
                &sb,
                tau,
                &dir,
            )?);
        }
    }
    Ok(reports)
}

/// Writes `gradcheck.json`.
pub fn gradcheck(ctx: &Context, count: usize) -> Result<Vec<OracleReport>> {
    ctx.manifest("gradcheck")?;
    let reports = gradcheck_reports(ctx.seed, count)?;
    write_json(&ctx.out.join("gradcheck.json"), &reports)?;
    Ok(reports)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntropicJson {
    pub delta: f64,
    pub sigma_x: MatrixJson,
    pub k: MatrixJson,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanJson {
    pub tau: f64,
    pub a_x: Vec<f64>,
    pub sigma_x: MatrixJson,
    /// Diagonal cross-covariance in the eigenbasis of Σ_β^{1/2}Σ_xΣ_β^{1/2}.
    pub k_xb: MatrixJson,
    pub k_ambient: MatrixJson,
    pub m_pi: f64,
    pub upsilon: f64,
    pub cost: f64,
    pub saturated: bool,
    pub entropic: Option<EntropicJson>,
}

/// One-shot plan between two measure files.
pub fn suot_plan(alpha: &Path, beta: &Path, tau: f64, delta: Option<f64>) -> Result<PlanJson> {
    let a: GaussianMeasure = read_measure(alpha)?;
    let b: GaussianMeasure = read_measure(beta)?;
    let plan = solve_suot(&a, &b, tau)?;
    let entropic = match delta {
        Some(delta) => {
            let (sx, k) = solve_entropic_suot(a.cov(), b.cov(), tau, delta)?;
            Some(EntropicJson {
                delta,
                sigma_x: MatrixJson::from_spd(&sx),
                k: MatrixJson::from_matrix(&k),
            })
        }
        None => None,
    };
    Ok(PlanJson {
        tau,
        a_x: plan.a_x.iter().copied().collect(),
        sigma_x: MatrixJson::from_spd(&plan.sigma_x),
        k_xb: MatrixJson::from_matrix(&plan.k_xb),
        k_ambient: MatrixJson::from_matrix(&plan.k_ambient),
        m_pi: plan.m_pi,
        upsilon: plan.upsilon,
        cost: plan.cost,
        saturated: plan.saturated,
        entropic,
    })
}
