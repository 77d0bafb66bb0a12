//! Replication study runner: bias, RMSE and interval coverage of risk-ratio
//! estimators against the Monte Carlo truth.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::design::{build_design_matrix, format_terms, DesignMatrix, Term};
use crate::ee::fit_robust_poisson;
use crate::error::{Error, Result};
use crate::inference::{bootstrap_rr, coefficient_rr, marginal_rr, Estimand, LogLinearFit, RrEstimate};
use crate::logbin::{fit_logbin_barrier, fit_logbin_ml};
use crate::rng;
use crate::sim::scenario::Scenario;
use crate::sim::truth::{monte_carlo_truth, Truth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    RobustPoisson,
    LogbinMl,
    LogbinAb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Specification {
    /// Main terms of the covariates only.
    Simple,
    /// Splines for continuous covariates plus the covariate product.
    Rich,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimandKind {
    Coefficient,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interval {
    Wald,
    Bootstrap,
}

macro_rules! kebab_enum {
    ($t:ty, $($v:path => $s:literal),+ $(,)?) => {
        impl $t {
            pub fn name(self) -> &'static str {
                match self { $($v => $s),+ }
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.pad(self.name())
            }
        }
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($s => Ok($v),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($t), " `{}`"), other
                    ))),
                }
            }
        }
    };
}

kebab_enum!(Method, Method::RobustPoisson => "robust-poisson", Method::LogbinMl => "logbin-ml", Method::LogbinAb => "logbin-ab");
kebab_enum!(Specification, Specification::Simple => "simple", Specification::Rich => "rich");
kebab_enum!(EstimandKind, EstimandKind::Coefficient => "coefficient", EstimandKind::Marginal => "marginal");
kebab_enum!(Interval, Interval::Wald => "wald", Interval::Bootstrap => "bootstrap");

/// Term list of a specification for a scenario's covariates.
pub fn specification_terms(scenario: Scenario, spec: Specification, knots: usize) -> Vec<Term> {
    let covs = scenario.covariates();
    let mut terms = vec![Term::Intercept, Term::main("A")];
    match spec {
        Specification::Simple => terms.extend(covs.iter().map(|c| Term::main(c))),
        Specification::Rich => {
            if scenario.continuous_covariates() {
                terms.extend(covs.iter().map(|c| Term::rcs(c, knots)));
            } else {
                terms.extend(covs.iter().map(|c| Term::main(c)));
            }
            if covs.len() == 2 {
                terms.push(Term::interaction(Term::main(covs[0]), Term::main(covs[1])));
            }
        }
    }
    terms
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub replications: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    pub specifications: Vec<Specification>,
    pub estimands: Vec<EstimandKind>,
    /// Bootstrap resamples per replication; 0 disables bootstrap intervals.
    pub bootstrap_b: usize,
    pub knots: usize,
    pub level: f64,
    pub truth_n: usize,
}

impl StudyConfig {
    pub fn new(scenario: Scenario, n: usize, replications: usize, base_seed: u64) -> Self {
        StudyConfig {
            scenario,
            n,
            replications,
            base_seed,
            methods: vec![Method::RobustPoisson],
            specifications: vec![Specification::Simple, Specification::Rich],
            estimands: vec![EstimandKind::Coefficient, EstimandKind::Marginal],
            bootstrap_b: 0,
            knots: 4,
            level: 0.95,
            truth_n: 1_000_000,
        }
    }

    pub const KEYS: [&'static str; 11] = [
        "scenario",
        "n",
        "replications",
        "base_seed",
        "methods",
        "specifications",
        "estimands",
        "bootstrap.B",
        "knots",
        "level",
        "truth_n",
    ];

    /// Parses the flat `key = value` format (`#` starts a comment, lists are
    /// comma separated). `scenario`, `n`, `replications` and `base_seed`
    /// are required.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let k = k.trim();
            if !Self::KEYS.contains(&k) {
                return Err(Error::Config(format!("line {}: unknown key `{k}`", lineno + 1)));
            }
            if kv.insert(k.to_string(), (lineno + 1, v.trim().to_string())).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", lineno + 1)));
            }
        }
        fn req<'a>(kv: &'a BTreeMap<String, (usize, String)>, k: &str) -> Result<&'a str> {
            kv.get(k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Config(format!("missing required key `{k}`")))
        }
        fn num<T: FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("key `{k}`: invalid value `{v}`")))
        }
        fn list<T: FromStr<Err = Error>>(k: &str, v: &str) -> Result<Vec<T>> {
            let items = v
                .split(',')
                .map(|s| s.parse::<T>().map_err(|e| Error::Config(format!("key `{k}`: {e}"))))
                .collect::<Result<Vec<T>>>()?;
            if items.is_empty() {
                return Err(Error::Config(format!("key `{k}`: empty list")));
            }
            Ok(items)
        }
        let scenario = req(&kv, "scenario")?
            .parse()
            .map_err(|e| Error::Config(format!("key `scenario`: {e}")))?;
        let mut cfg = StudyConfig::new(
            scenario,
            num("n", req(&kv, "n")?)?,
            num("replications", req(&kv, "replications")?)?,
            num("base_seed", req(&kv, "base_seed")?)?,
        );
        for (k, (_, v)) in &kv {
            match k.as_str() {
                "methods" => cfg.methods = list(k, v)?,
                "specifications" => cfg.specifications = list(k, v)?,
                "estimands" => {
                    cfg.estimands = if v.trim() == "both" {
                        vec![EstimandKind::Coefficient, EstimandKind::Marginal]
                    } else {
                        list(k, v)?
                    }
                }
                "bootstrap.B" => cfg.bootstrap_b = num(k, v)?,
                "knots" => cfg.knots = num(k, v)?,
                "level" => cfg.level = num(k, v)?,
                "truth_n" => cfg.truth_n = num(k, v)?,
                _ => {}
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("key `replications`: must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config("key `level`: must be in (0,1)".into()));
        }
        if self.bootstrap_b != 0 && self.bootstrap_b < 100 {
            return Err(Error::Config("key `bootstrap.B`: must be 0 or at least 100".into()));
        }
        if self.truth_n == 0 {
            return Err(Error::Config("key `truth_n`: must be at least 1".into()));
        }
        for spec in &self.specifications {
            let terms = specification_terms(self.scenario, *spec, self.knots);
            for t in &terms {
                t.validate().map_err(|e| Error::Config(format!("key `knots`: {e}")))?;
            }
            let p = richest_width(self.scenario, *spec, self.knots);
            if self.n < p {
                return Err(Error::Config(format!(
                    "key `n`: {} is smaller than the {p} parameters of the {spec} specification",
                    self.n
                )));
            }
        }
        Ok(())
    }

    /// Echo in `key = value` form.
    pub fn to_kv_string(&self) -> String {
        let join = |v: Vec<&str>| v.join(",");
        format!(
            "scenario = {}\nn = {}\nreplications = {}\nbase_seed = {}\nmethods = {}\nspecifications = {}\nestimands = {}\nbootstrap.B = {}\nknots = {}\nlevel = {}\ntruth_n = {}\n",
            self.scenario,
            self.n,
            self.replications,
            self.base_seed,
            join(self.methods.iter().map(|m| m.name()).collect()),
            join(self.specifications.iter().map(|m| m.name()).collect()),
            join(self.estimands.iter().map(|m| m.name()).collect()),
            self.bootstrap_b,
            self.knots,
            self.level,
            self.truth_n,
        )
    }
}

fn richest_width(scenario: Scenario, spec: Specification, knots: usize) -> usize {
    let covs = scenario.covariates().len();
    match (spec, scenario.continuous_covariates()) {
        (Specification::Simple, _) => 2 + covs,
        (Specification::Rich, true) => 2 + covs * (knots.max(1) - 1) + usize::from(covs == 2),
        (Specification::Rich, false) => 2 + covs + usize::from(covs == 2),
    }
}

/// Seed for work unit `index` under `base`; SplitMix64 finalizer.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowKey {
    pub method: Method,
    pub specification: Specification,
    pub estimand: EstimandKind,
    pub interval: Interval,
}

/// Performance of one estimator over the successful replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mean_estimate: f64,
    pub bias: f64,
    /// Variance of the estimates with divisor `R_effective`.
    pub empirical_variance: f64,
    pub rmse: f64,
    /// Percent.
    pub coverage: f64,
    pub mcse_bias: f64,
    pub mcse_rmse: f64,
    /// Percentage points.
    pub mcse_coverage: f64,
    pub mean_se_log_rr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    #[serde(flatten)]
    pub key: RowKey,
    pub replications: usize,
    pub effective: usize,
    pub failures: usize,
    /// More than half of the replications failed.
    pub na: bool,
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub replication: usize,
    pub method: Method,
    pub specification: Specification,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub tool: String,
    pub version: String,
    pub config: StudyConfig,
    pub truth: Truth,
    pub specifications: BTreeMap<String, String>,
    pub rows: Vec<StudyRow>,
    pub failures: Vec<FailureRecord>,
}

impl StudyReport {
    pub fn row(
        &self,
        method: Method,
        spec: Specification,
        estimand: EstimandKind,
        interval: Interval,
    ) -> Option<&StudyRow> {
        self.rows.iter().find(|r| {
            r.key
                == RowKey {
                    method,
                    specification: spec,
                    estimand,
                    interval,
                }
        })
    }
}

/// Bias, RMSE and coverage of `estimates` (ratio scale) for `truth`.
pub fn compute_metrics(estimates: &[RrEstimate], truth: f64) -> Option<Metrics> {
    let r = estimates.len();
    if r == 0 {
        return None;
    }
    let rf = r as f64;
    let rr: Vec<f64> = estimates.iter().map(RrEstimate::rr).collect();
    let mean = rr.iter().sum::<f64>() / rf;
    let bias = mean - truth;
    let empirical_variance = rr.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rf;
    let mse = bias * bias + empirical_variance;
    let rmse = mse.sqrt();
    let sd = if r > 1 {
        (empirical_variance * rf / (rf - 1.0)).sqrt()
    } else {
        0.0
    };
    let mcse_mse = if r > 1 {
        let sq: Vec<f64> = rr.iter().map(|v| (v - truth).powi(2)).collect();
        (sq.iter().map(|s| (s - mse).powi(2)).sum::<f64>() / (rf * (rf - 1.0))).sqrt()
    } else {
        0.0
    };
    let c = estimates.iter().filter(|e| e.covers(truth)).count() as f64 / rf;
    Some(Metrics {
        mean_estimate: mean,
        bias,
        empirical_variance,
        rmse,
        coverage: 100.0 * c,
        mcse_bias: sd / rf.sqrt(),
        mcse_rmse: if rmse > 0.0 { mcse_mse / (2.0 * rmse) } else { 0.0 },
        mcse_coverage: 100.0 * (c * (1.0 - c) / rf).sqrt(),
        mean_se_log_rr: estimates.iter().map(|e| e.se_log_rr).sum::<f64>() / rf,
    })
}

type UnitResult = BTreeMap<RowKey, std::result::Result<RrEstimate, String>>;

fn estimands_for<F: LogLinearFit>(
    fit: &F,
    dm: &DesignMatrix,
    data: &Dataset,
    cfg: &StudyConfig,
    method: Method,
    spec: Specification,
    out: &mut UnitResult,
) {
    for &est in &cfg.estimands {
        let key = RowKey {
            method,
            specification: spec,
            estimand: est,
            interval: Interval::Wald,
        };
        let value = match est {
            EstimandKind::Coefficient => {
                let j = dm.column_index("A").expect("exposure column");
                let e = coefficient_rr(fit, j, "A", cfg.level);
                if e.se_log_rr.is_finite() {
                    Ok(e)
                } else {
                    Err("non-finite covariance".to_string())
                }
            }
            EstimandKind::Marginal => {
                marginal_rr(fit, &dm.design, data, 1.0, 0.0, cfg.level).map_err(|e| e.to_string())
            }
        };
        out.insert(key, value);
    }
}

fn bootstrap_estimate(data: &Dataset, terms: &[Term], estimand: EstimandKind) -> Result<f64> {
    let dm = build_design_matrix(data, terms, Some("A"))?;
    let fit = fit_robust_poisson(&dm.x, data.y())?;
    match estimand {
        EstimandKind::Coefficient => Ok(fit.beta[dm.column_index("A").expect("exposure column")]),
        EstimandKind::Marginal => Ok(marginal_rr(&fit, &dm.design, data, 1.0, 0.0, 0.95)?.log_rr),
    }
}

fn run_replication(cfg: &StudyConfig, index: usize) -> (UnitResult, Vec<FailureRecord>) {
    let mut r = rng::stream(cfg.base_seed, index as u64);
    let data = cfg.scenario.generate_with(cfg.n, &mut r);
    let mut out = UnitResult::new();
    let mut failures = Vec::new();
    for &spec in &cfg.specifications {
        let terms = specification_terms(cfg.scenario, spec, cfg.knots);
        let dm = build_design_matrix(&data, &terms, Some("A"));
        for &method in &cfg.methods {
            let mut fail = |reason: String, out: &mut UnitResult| {
                for &est in &cfg.estimands {
                    for interval in [Interval::Wald, Interval::Bootstrap] {
                        if interval == Interval::Bootstrap && (cfg.bootstrap_b == 0 || method != Method::RobustPoisson)
                        {
                            continue;
                        }
                        out.insert(
                            RowKey {
                                method,
                                specification: spec,
                                estimand: est,
                                interval,
                            },
                            Err(reason.clone()),
                        );
                    }
                }
                failures.push(FailureRecord {
                    replication: index,
                    method,
                    specification: spec,
                    reason,
                });
            };
            let dm = match &dm {
                Ok(dm) => dm,
                Err(e) => {
                    fail(format!("design: {e}"), &mut out);
                    continue;
                }
            };
            match method {
                Method::RobustPoisson => match fit_robust_poisson(&dm.x, data.y()) {
                    Ok(fit) => {
                        estimands_for(&fit, dm, &data, cfg, method, spec, &mut out);
                        if cfg.bootstrap_b > 0 {
                            for &est in &cfg.estimands {
                                let seed = derive_seed(cfg.base_seed, index as u64);
                                let estimand = match est {
                                    EstimandKind::Coefficient => Estimand::Coefficient { column: "A".into() },
                                    EstimandKind::Marginal => Estimand::Marginal { a1: 1.0, a0: 0.0 },
                                };
                                let b = bootstrap_rr(
                                    |d| bootstrap_estimate(d, &terms, est),
                                    estimand,
                                    &data,
                                    cfg.bootstrap_b,
                                    seed,
                                    cfg.level,
                                );
                                out.insert(
                                    RowKey {
                                        method,
                                        specification: spec,
                                        estimand: est,
                                        interval: Interval::Bootstrap,
                                    },
                                    b.map_err(|e| e.to_string()),
                                );
                            }
                        }
                    }
                    Err(e) => fail(e.to_string(), &mut out),
                },
                Method::LogbinMl | Method::LogbinAb => {
                    let fit = if method == Method::LogbinMl {
                        fit_logbin_ml(&dm.x, data.y())
                    } else {
                        fit_logbin_barrier(&dm.x, data.y())
                    };
                    match fit {
                        Ok(f) if f.on_boundary => fail("on boundary".into(), &mut out),
                        Ok(f) if f.cov_model.iter().any(|v| !v.is_finite()) => {
                            fail("non-finite covariance".into(), &mut out)
                        }
                        Ok(f) => estimands_for(&f, dm, &data, cfg, method, spec, &mut out),
                        Err(e) => fail(e.to_string(), &mut out),
                    }
                }
            }
        }
    }
    (out, failures)
}

/// Runs every replication of `cfg`. Replication `r` draws its data from
/// stream `r` of `base_seed`; results are aggregated in replication order,
/// so the report does not depend on the number of threads.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let truth = monte_carlo_truth(cfg.scenario, cfg.truth_n, cfg.base_seed);
    let units: Vec<(UnitResult, Vec<FailureRecord>)> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(cfg, r))
        .collect();

    let mut per_row: BTreeMap<RowKey, (Vec<RrEstimate>, usize)> = BTreeMap::new();
    let mut failures = Vec::new();
    for (unit, fails) in units {
        for (k, v) in unit {
            let entry = per_row.entry(k).or_default();
            match v {
                Ok(e) => entry.0.push(e),
                Err(_) => entry.1 += 1,
            }
        }
        failures.extend(fails);
    }
    let rows: Vec<StudyRow> = per_row
        .into_iter()
        .map(|(key, (ests, failed))| StudyRow {
            key,
            replications: cfg.replications,
            effective: ests.len(),
            failures: failed,
            na: failed * 2 > cfg.replications,
            metrics: compute_metrics(&ests, truth.rr_true),
        })
        .collect();
    if rows.iter().all(|r| r.effective == 0) {
        return Err(Error::AllReplicationsFailed(cfg.replications));
    }
    let specifications = cfg
        .specifications
        .iter()
        .map(|&s| {
            (
                s.name().to_string(),
                format_terms(&specification_terms(cfg.scenario, s, cfg.knots)),
            )
        })
        .collect();
    Ok(StudyReport {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        truth,
        specifications,
        rows,
        failures,
    })
}
