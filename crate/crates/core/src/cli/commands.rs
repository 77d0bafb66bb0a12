use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::cli::csvio::read_dataset;
use crate::cli::report::{figure_csv, rr_table, study_table, write_atomic, ReportEnvelope};
use crate::data::Dataset;
use crate::design::{build_design_matrix, format_terms, parse_terms, DesignMatrix, Term};
use crate::ee::fit_robust_poisson;
use crate::error::{Error, Result};
use crate::inference::{bootstrap_rr, exposure_coefficient_rrs, marginal_rr, LogLinearFit, RrEstimate};
use crate::logbin::{fit_logbin_barrier, fit_logbin_ml};
use crate::sim::figure::{consistency_demo, DEFAULT_SIZES};
use crate::sim::scenario::Scenario;
use crate::sim::study::{run_study, Method, StudyConfig};
use crate::sim::truth::monte_carlo_truth;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(i32)]
pub enum ExitCode {
    Success = 0,
    Usage = 2,
    Data = 3,
    Numerical = 4,
}

impl ExitCode {
    pub fn for_error(e: &Error) -> Self {
        match e {
            Error::Config(_) | Error::Parse { .. } | Error::InvalidTerm(_) => ExitCode::Usage,
            Error::InvalidData(_)
            | Error::Io(_)
            | Error::UnknownColumn(_)
            | Error::DegenerateColumn(_)
            | Error::DuplicateColumn(_)
            | Error::TooFewKnots { .. }
            | Error::NonIncreasingKnots(_)
            | Error::TooManyParameters { .. }
            | Error::Dimension(_) => ExitCode::Data,
            _ => ExitCode::Numerical,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "riskratio", version, about = "Risk ratios for binary outcomes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitMethod {
    RobustPoisson,
    LogbinMl,
    LogbinAb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimandFlag {
    Coefficient,
    Marginal,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Machine,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model to a CSV file and report exposure risk ratios.
    Fit {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        outcome: String,
        #[arg(long)]
        exposure: String,
        /// Formula, e.g. `1 + A + rcs(L1,4) + L1:L2 + cat(G,ref=1)`.
        #[arg(long)]
        spec: String,
        #[arg(long, value_enum, default_value = "robust-poisson")]
        method: FitMethod,
        #[arg(long, value_enum, default_value = "coefficient")]
        estimand: EstimandFlag,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Bootstrap resamples (0 disables).
        #[arg(long, default_value_t = 0)]
        boot: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        /// Record the wall-clock time in machine output.
        #[arg(long)]
        stamp: bool,
    },
    /// Run a replication study from a config file.
    Study {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        #[arg(long)]
        stamp: bool,
    },
    /// Monte Carlo truth of a scenario's marginal risk ratio.
    Truth {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Consistency demonstration; writes `n,rr_hat,ci_low,ci_high` CSV.
    Figure {
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long, default_value_t = 200)]
        replications: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// One row per converged replication instead of per-size means.
        #[arg(long)]
        per_replication: bool,
    },
    /// Check a CSV + formula or a study config without fitting.
    Validate {
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        outcome: Option<String>,
        #[arg(long)]
        exposure: Option<String>,
        #[arg(long)]
        spec: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Output of a command: text for stdout plus an optional file to write.
#[derive(Debug, Default)]
pub struct Output {
    pub stdout: String,
    pub stderr: String,
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(e.to_string()))
            .map(|pool| pool.install(f)),
    }
}

fn emit(out: &mut Output, path: Option<&PathBuf>, format: Format, table: String, machine: String) -> Result<()> {
    match (path, format) {
        (Some(p), _) => {
            write_atomic(p, &machine)?;
            out.stdout.push_str(&table);
        }
        (None, Format::Machine) => out.stdout.push_str(&machine),
        (None, Format::Table) => out.stdout.push_str(&table),
    }
    Ok(())
}

/// Exposure contrasts for marginal ratios: each non-reference level against
/// the reference for categorical exposures, otherwise 1 vs 0.
fn marginal_contrasts(dm: &DesignMatrix, data: &Dataset, terms: &[Term], exposure: &str) -> Result<Vec<(f64, f64)>> {
    let cat = terms.iter().find_map(|t| match t {
        Term::Categorical(c, r) if c == exposure => Some(*r),
        _ => None,
    });
    match cat {
        Some(reference) => {
            let mut levels: Vec<f64> = data.column(exposure)?.to_vec();
            levels.sort_by(f64::total_cmp);
            levels.dedup();
            let reference = reference.unwrap_or(levels[0]);
            Ok(levels
                .into_iter()
                .filter(|&l| l != reference)
                .map(|l| (l, reference))
                .collect())
        }
        None => {
            let _ = dm;
            Ok(vec![(1.0, 0.0)])
        }
    }
}

struct FitOutcome {
    estimates: Vec<RrEstimate>,
    warnings: Vec<String>,
    diagnostics: serde_json::Value,
}

fn estimates_for<F: LogLinearFit>(
    fit: &F,
    dm: &DesignMatrix,
    data: &Dataset,
    terms: &[Term],
    exposure: &str,
    estimand: EstimandFlag,
    level: f64,
) -> Result<Vec<RrEstimate>> {
    let mut out = Vec::new();
    if matches!(estimand, EstimandFlag::Coefficient | EstimandFlag::Both) {
        out.extend(exposure_coefficient_rrs(fit, dm, level));
    }
    if matches!(estimand, EstimandFlag::Marginal | EstimandFlag::Both) {
        for (a1, a0) in marginal_contrasts(dm, data, terms, exposure)? {
            out.push(marginal_rr(fit, &dm.design, data, a1, a0, level)?);
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn fit_once(
    data: &Dataset,
    terms: &[Term],
    exposure: &str,
    method: FitMethod,
    estimand: EstimandFlag,
    level: f64,
) -> Result<(DesignMatrix, FitOutcome)> {
    let dm = build_design_matrix(data, terms, Some(exposure))?;
    let mut warnings = Vec::new();
    if dm.rank_warning() {
        warnings.push(format!("design matrix rank {} < {} columns", dm.rank, dm.p()));
    }
    let outcome = match method {
        FitMethod::RobustPoisson => {
            let fit = fit_robust_poisson(&dm.x, data.y())?;
            if fit.n_mu_gt1 > 0 {
                warnings.push(format!("{} fitted means exceed 1", fit.n_mu_gt1));
            }
            if fit.degenerate_outcome {
                warnings.push("all outcomes are equal".into());
            }
            FitOutcome {
                estimates: estimates_for(&fit, &dm, data, terms, exposure, estimand, level)?,
                warnings,
                diagnostics: json!({
                    "converged": fit.converged,
                    "iterations": fit.iterations,
                    "max_abs_score": fit.max_abs_score,
                    "n_mu_gt1": fit.n_mu_gt1,
                    "condition_estimate": fit.condition_estimate,
                    "labels": dm.labels,
                    "beta": fit.beta.iter().collect::<Vec<_>>(),
                }),
            }
        }
        FitMethod::LogbinMl | FitMethod::LogbinAb => {
            let fit = if method == FitMethod::LogbinMl {
                fit_logbin_ml(&dm.x, data.y())?
            } else {
                fit_logbin_barrier(&dm.x, data.y())?
            };
            if fit.on_boundary {
                warnings.push("log-binomial fit is on the boundary of the parameter space".into());
            }
            FitOutcome {
                estimates: estimates_for(&fit, &dm, data, terms, exposure, estimand, level)?,
                warnings,
                diagnostics: json!({
                    "converged": fit.converged,
                    "on_boundary": fit.on_boundary,
                    "iterations": fit.iterations,
                    "loglik": fit.loglik,
                    "labels": dm.labels,
                    "beta": fit.beta.iter().collect::<Vec<_>>(),
                }),
            }
        }
    };
    Ok((dm, outcome))
}

fn method_name(m: FitMethod) -> &'static str {
    match m {
        FitMethod::RobustPoisson => Method::RobustPoisson.name(),
        FitMethod::LogbinMl => Method::LogbinMl.name(),
        FitMethod::LogbinAb => Method::LogbinAb.name(),
    }
}

/// Runs a parsed command.
pub fn execute(cmd: Command) -> Result<Output> {
    let mut out = Output::default();
    match cmd {
        Command::Fit {
            csv,
            outcome,
            exposure,
            spec,
            method,
            estimand,
            level,
            boot,
            seed,
            threads,
            out: path,
            format,
            stamp,
        } => {
            if !(level > 0.0 && level < 1.0) {
                return Err(Error::Config("--level must be in (0,1)".into()));
            }
            let terms = parse_terms(&spec)?;
            let config = json!({
                "csv": csv.display().to_string(),
                "outcome": outcome,
                "exposure": exposure,
                "spec": format_terms(&terms),
                "method": method_name(method),
                "estimand": format!("{estimand:?}").to_lowercase(),
                "level": level,
                "boot": boot,
                "seed": seed,
            });
            out.stderr.push_str(&format!("resolved config: {config}\n"));
            let data = read_dataset(&csv, &outcome)?;
            let (dm, mut fo) = fit_once(&data, &terms, &exposure, method, estimand, level)?;
            if boot > 0 {
                let boot_est = with_threads(threads, || -> Result<Vec<RrEstimate>> {
                    let mut v = Vec::new();
                    for e in fo.estimates.clone() {
                        let target = e.estimand.clone();
                        let est = |d: &Dataset| -> Result<f64> {
                            let (_, o) = fit_once(d, &terms, &exposure, method, EstimandFlag::Both, level)?;
                            o.estimates
                                .iter()
                                .find(|x| x.estimand == target)
                                .map(|x| x.log_rr)
                                .ok_or(Error::NonFiniteStandardization)
                        };
                        v.push(bootstrap_rr(est, e.estimand.clone(), &data, boot, seed, level)?);
                    }
                    Ok(v)
                })??;
                fo.estimates.extend(boot_est);
            }
            let table = format!(
                "{} fit of `{}` on {} rows ({} columns)\n{}{}",
                method_name(method),
                format_terms(&terms),
                data.n(),
                dm.p(),
                rr_table(&fo.estimates, level),
                fo.warnings
                    .iter()
                    .map(|w| format!("warning: {w}\n"))
                    .collect::<String>()
            );
            let env = ReportEnvelope::new(
                "fit",
                config,
                json!({"estimates": fo.estimates, "diagnostics": fo.diagnostics}),
                fo.warnings,
                stamp,
            );
            emit(&mut out, path.as_ref(), format, table, env.to_machine())?;
        }
        Command::Study {
            config,
            threads,
            out: path,
            format,
            stamp,
        } => {
            let text =
                std::fs::read_to_string(&config).map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
            let cfg = StudyConfig::parse(&text)?;
            out.stderr
                .push_str(&format!("resolved config:\n{}", cfg.to_kv_string()));
            let report = with_threads(threads, || run_study(&cfg))??;
            let warnings = report
                .rows
                .iter()
                .filter(|r| r.na)
                .map(|r| {
                    format!(
                        "{} / {} / {}: {} of {} replications failed (NA)",
                        r.key.method, r.key.specification, r.key.estimand, r.failures, r.replications
                    )
                })
                .collect();
            let env = ReportEnvelope::new(
                "study",
                serde_json::to_value(&cfg).expect("config"),
                serde_json::to_value(&report).expect("report"),
                warnings,
                stamp,
            );
            emit(&mut out, path.as_ref(), format, study_table(&report), env.to_machine())?;
        }
        Command::Truth {
            scenario,
            n,
            seed,
            format,
        } => {
            if n == 0 {
                return Err(Error::Config("--n must be at least 1".into()));
            }
            let t = monte_carlo_truth(scenario, n, seed);
            let table = format!(
                "{scenario}: RR = {:.4} ± {:.4} (MCSE, n = {n}, seed = {seed})\n",
                t.rr_true, t.mcse
            );
            let env = ReportEnvelope::new(
                "truth",
                json!({"scenario": scenario, "n": n, "seed": seed}),
                serde_json::to_value(t).expect("truth"),
                vec![],
                false,
            );
            emit(&mut out, None, format, table, env.to_machine())?;
        }
        Command::Figure {
            sizes,
            replications,
            seed,
            threads,
            out: path,
            per_replication,
        } => {
            let sizes = sizes.unwrap_or_else(|| DEFAULT_SIZES.to_vec());
            out.stderr.push_str(&format!(
                "resolved config: sizes={sizes:?} replications={replications} seed={seed}\n"
            ));
            let demo = with_threads(threads, || consistency_demo(&sizes, replications, seed))??;
            let csv = figure_csv(&demo, per_replication);
            match path {
                Some(p) => {
                    write_atomic(&p, &csv)?;
                    out.stderr
                        .push_str(&format!("true RR = {:.6}; wrote {}\n", demo.truth, p.display()));
                }
                None => out.stdout.push_str(&csv),
            }
        }
        Command::Validate {
            csv,
            outcome,
            exposure,
            spec,
            config,
        } => {
            if let Some(c) = config {
                let text = std::fs::read_to_string(&c).map_err(|e| Error::Config(format!("{}: {e}", c.display())))?;
                let cfg = StudyConfig::parse(&text)?;
                out.stdout.push_str(&format!("config ok:\n{}", cfg.to_kv_string()));
            }
            if let Some(path) = csv {
                let outcome = outcome.ok_or_else(|| Error::Config("--outcome is required with --csv".into()))?;
                let data = read_dataset(&path, &outcome)?;
                out.stdout.push_str(&format!("csv ok: {} rows\n", data.n()));
                if let Some(spec) = spec {
                    let terms = parse_terms(&spec)?;
                    let dm = build_design_matrix(&data, &terms, exposure.as_deref())?;
                    out.stdout.push_str(&format!(
                        "design ok: {} x {} (rank {}), columns: {}\n",
                        dm.n(),
                        dm.p(),
                        dm.rank,
                        dm.labels.join(", ")
                    ));
                    if dm.p() > dm.n() {
                        return Err(Error::TooManyParameters { n: dm.n(), p: dm.p() });
                    }
                }
            } else if spec.is_some() {
                let terms = parse_terms(spec.as_deref().unwrap_or_default())?;
                out.stdout.push_str(&format!("formula ok: {}\n", format_terms(&terms)));
            }
        }
    }
    Ok(out)
}

/// Parses `args`, runs the command and prints its output. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                ExitCode::Usage
            } else {
                ExitCode::Success
            };
            let _ = e.print();
            return code as i32;
        }
    };
    match execute(cli.command) {
        Ok(o) => {
            eprint!("{}", o.stderr);
            print!("{}", o.stdout);
            ExitCode::Success as i32
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::for_error(&e) as i32
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(ExitCode::for_error(&Error::Config("x".into())), ExitCode::Usage);
        assert_eq!(ExitCode::for_error(&Error::InvalidData("x".into())), ExitCode::Data);
        assert_eq!(
            ExitCode::for_error(&Error::NonConvergence {
                iterations: 1,
                max_abs_score: 1.0
            }),
            ExitCode::Numerical
        );
        assert_eq!(run(["riskratio", "fit", "--bogus"]), 2);
        assert_eq!(run(["riskratio", "truth", "--scenario", "nope"]), 2);
    }
}
