use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use suot_core::barycenter::Method;

use crate::commands::{self, Context};
use crate::config::{ExperimentConfig, OptimizerSpec};
use crate::error::{HarnessError, Result};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SUOT_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "suot-out";

#[derive(Parser, Debug)]
#[command(name = "suot", version, about = "SUOT barycenters of Gaussian measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a corpus (and its contaminated copy, if configured).
    Gen(Experiment),
    /// Run the configured optimizers on a corpus.
    Barycenter {
        #[command(flatten)]
        exp: Experiment,
        /// Corpus directory [default: <out>/clean]
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Wasserstein vs SUOT barycenter of a contaminated corpus.
    Compare {
        #[command(flatten)]
        exp: Experiment,
        /// [default: <out>/clean]
        #[arg(long)]
        clean: Option<PathBuf>,
        /// [default: <out>/contaminated]
        #[arg(long)]
        contaminated: Option<PathBuf>,
    },
    /// Distance from the SUOT barycenter to the Wasserstein barycenter over a tau grid.
    AblateTau {
        #[command(flatten)]
        exp: Experiment,
        /// [default: <out>/clean]
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Finite-difference check of the SUOT gradient on random instances.
    Gradcheck {
        #[command(flatten)]
        exp: Experiment,
        /// Number of random instances after the three fixed ones.
        #[arg(long, default_value_t = 30)]
        count: usize,
    },
    /// Print the SUOT plan between two measure files as JSON.
    Suot {
        #[arg(long)]
        alpha: PathBuf,
        #[arg(long)]
        beta: PathBuf,
        #[arg(long)]
        tau: f64,
        /// Also solve the entropic problem with this delta.
        #[arg(long)]
        delta: Option<f64>,
    },
}

#[derive(Args, Debug)]
struct Experiment {
    /// JSON experiment config; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    /// Output directory [default: config out_dir, then $SUOT_OUT_DIR, then ./suot-out]
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// Replace the configured optimizers with this single method.
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Step size for --method, or for every configured optimizer.
    #[arg(long)]
    eta: Option<f64>,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("unknown method {s:?}; expected exact, hybrid, exact-sgd, hybrid-sgd or numeric"))
}

impl Experiment {
    fn context(&self) -> Result<Context> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(d, n, sigma, tau, max_iters, tol);
        if self.rho.is_some() {
            cfg.rho = self.rho;
        }
        match (self.method, self.eta) {
            (Some(method), eta) => {
                cfg.optimizers = vec![OptimizerSpec {
                    method,
                    eta: eta.unwrap_or(if method == Method::Hybrid { 1.0 } else { 0.1 }),
                }]
            }
            (None, Some(eta)) => cfg.optimizers.iter_mut().for_each(|o| o.eta = eta),
            (None, None) => {}
        }
        cfg.validate()?;
        let out = self
            .out
            .clone()
            .or_else(|| cfg.out_dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        Ok(Context {
            cfg,
            seed: self.seed,
            out,
        })
    }
}

fn print_json<T: serde::Serialize>(v: &T) {
    use std::io::Write;
    match serde_json::to_string_pretty(v) {
        // A closed pipe is not an error worth reporting.
        Ok(s) => drop(writeln!(std::io::stdout(), "{s}")),
        Err(e) => eprintln!("could not render output: {e}"),
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Gen(exp) => {
            let ctx = exp.context()?;
            let s = commands::gen(&ctx)?;
            println!("clean corpus: {}", s.clean.display());
            if let Some(c) = s.contaminated {
                println!("contaminated corpus: {}", c.display());
            }
            Ok(())
        }
        Command::Barycenter { exp, corpus } => {
            let ctx = exp.context()?;
            let corpus = corpus.unwrap_or_else(|| ctx.out.join("clean"));
            let results = commands::barycenter(&ctx, &corpus)?;
            for r in &results {
                let loss = r.final_loss.map_or_else(|| "-".into(), |l| format!("{l:.10e}"));
                println!(
                    "{:<11} eta={:<5} {:<13} iters={:<4} loss={loss}",
                    r.method.name(),
                    r.eta,
                    r.status,
                    r.iterations,
                );
            }
            let failed: Vec<_> = results.iter().filter(|r| !r.ok()).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(HarnessError::Failed(format!(
                    "{} optimizer run(s) failed: {}",
                    failed.len(),
                    failed.iter().filter_map(|r| r.error.as_deref()).collect::<Vec<_>>().join("; ")
                )))
            }
        }
        Command::Compare {
            exp,
            clean,
            contaminated,
        } => {
            let ctx = exp.context()?;
            let clean = clean.unwrap_or_else(|| ctx.out.join("clean"));
            let dirty = contaminated.unwrap_or_else(|| ctx.out.join("contaminated"));
            let r = commands::compare(&ctx, &clean, &dirty)?;
            let ratio = r.ratio.map_or_else(|| "-".into(), |x| format!("{x:.4}"));
            println!(
                "w2(B_W, B_clean) = {:.6}  w2(B_SUOT, B_clean) = {:.6}  ratio = {ratio}",
                r.w2_wasserstein, r.w2_suot
            );
            Ok(())
        }
        Command::AblateTau { exp, corpus } => {
            let ctx = exp.context()?;
            let corpus = corpus.unwrap_or_else(|| ctx.out.join("clean"));
            for row in commands::ablate_tau(&ctx, &corpus)? {
                println!("tau={:<7} w2={:.6e}", row.tau, row.w2_to_wasserstein);
            }
            Ok(())
        }
        Command::Gradcheck { exp, count } => {
            let ctx = exp.context()?;
            let reports = commands::gradcheck(&ctx, count)?;
            let failed = reports.iter().filter(|r| !r.pass).count();
            let worst = reports
                .iter()
                .filter(|r| r.oracle != 0.0)
                .map(|r| r.rel_err)
                .fold(0.0, f64::max);
            println!("{} checks, {failed} failed, worst relative error {worst:.3e}", reports.len());
            if failed == 0 {
                Ok(())
            } else {
                Err(HarnessError::Failed(format!("{failed} gradient check(s) exceeded tolerance")))
            }
        }
        Command::Suot {
            alpha,
            beta,
            tau,
            delta,
        } => {
            print_json(&commands::suot_plan(&alpha, &beta, tau, delta)?);
            Ok(())
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
