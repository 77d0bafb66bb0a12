//! Report envelope, human-readable tables and atomic file output.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::inference::{Estimand, IntervalMethod, RrEstimate};
use crate::sim::figure::ConsistencyDemo;
use crate::sim::study::StudyReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEnvelope {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Value,
    /// Unix seconds; only recorded when requested so that reports stay
    /// reproducible by default.
    pub created_unix: Option<u64>,
    pub results: Value,
    pub warnings: Vec<String>,
}

impl ReportEnvelope {
    pub fn new(command: &str, config: Value, results: Value, warnings: Vec<String>, stamp: bool) -> Self {
        let created_unix = stamp.then(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        });
        ReportEnvelope {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            created_unix,
            results,
            warnings,
        }
    }

    /// Pretty JSON with a trailing newline. Floats use shortest round-trip
    /// formatting, so parsing and re-emitting reproduces the bytes.
    pub fn to_machine(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable envelope");
        s.push('\n');
        s
    }

    pub fn from_machine(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidData(format!("report: {e}")))
    }
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory followed by a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path)
        .map_err(|e| Error::Io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

fn method_name(m: &IntervalMethod) -> String {
    match m {
        IntervalMethod::WaldSandwich => "wald-sandwich".into(),
        IntervalMethod::WaldModel => "wald-model".into(),
        IntervalMethod::Delta => "delta".into(),
        IntervalMethod::Bootstrap { resamples, failures } => format!("bootstrap({resamples}, failed {failures})"),
    }
}

fn estimand_name(e: &Estimand) -> String {
    match e {
        Estimand::Coefficient { column } => format!("coefficient {column}"),
        Estimand::Marginal { a1, a0 } => format!("marginal {a1} vs {a0}"),
    }
}

/// Risk-ratio table with ratios to two decimals.
pub fn rr_table(estimates: &[RrEstimate], level: f64) -> String {
    let pct = (level * 100.0).round() as i64;
    let mut out = format!(
        "{:<28} {:>6} {:>16} {:>8}  {}\n",
        "Estimand",
        "RR",
        format!("{pct}% CI"),
        "SE(log)",
        "Interval"
    );
    for e in estimates {
        out.push_str(&format!(
            "{:<28} {:>6.2} {:>16} {:>8.4}  {}\n",
            estimand_name(&e.estimand),
            e.rr(),
            format!("{:.2} - {:.2}", e.ci_low, e.ci_high),
            e.se_log_rr,
            method_name(&e.method)
        ));
    }
    out
}

fn fmt2(v: Option<f64>) -> String {
    v.map_or("NA".to_string(), |v| {
        let s = format!("{v:.2}");
        if s == "-0.00" {
            "0.00".into()
        } else {
            s
        }
    })
}

/// Bias / RMSE / coverage table in the layout of a methods-comparison table.
pub fn study_table(report: &StudyReport) -> String {
    let c = &report.config;
    let mut out = format!(
        "scenario {}  n = {}  replications = {}  base_seed = {}\ntrue RR = {:.4} (MCSE {:.4}, {} draws)\n\n",
        c.scenario, c.n, c.replications, c.base_seed, report.truth.rr_true, report.truth.mcse, report.truth.n
    );
    out.push_str(&format!(
        "{:<8} {:<15} {:<12} {:<10} {:>6} {:>6} {:>4}  {:>10} {:>10} {:>9} {:>6} {:>5}\n",
        "Spec",
        "Method",
        "Estimand",
        "Interval",
        "Bias",
        "RMSE",
        "CP",
        "MCSE(bias)",
        "MCSE(RMSE)",
        "MCSE(CP)",
        "R_eff",
        "Fail"
    ));
    for row in &report.rows {
        let m = row.metrics.as_ref().filter(|_| !row.na);
        out.push_str(&format!(
            "{:<8} {:<15} {:<12} {:<10} {:>6} {:>6} {:>4}  {:>10} {:>10} {:>9} {:>6} {:>5}\n",
            row.key.specification,
            row.key.method,
            row.key.estimand,
            row.key.interval,
            fmt2(m.map(|m| m.bias)),
            fmt2(m.map(|m| m.rmse)),
            m.map_or("NA".into(), |m| format!("{:.0}", m.coverage)),
            m.map_or("NA".into(), |m| format!("{:.4}", m.mcse_bias)),
            m.map_or("NA".into(), |m| format!("{:.4}", m.mcse_rmse)),
            m.map_or("NA".into(), |m| format!("{:.2}", m.mcse_coverage)),
            row.effective,
            row.failures,
        ));
    }
    out
}

/// Plot-ready CSV with header `n,rr_hat,ci_low,ci_high`; one row per sample
/// size, or one per converged replication when `per_replication`.
pub fn figure_csv(demo: &ConsistencyDemo, per_replication: bool) -> String {
    let mut out = String::from("n,rr_hat,ci_low,ci_high\n");
    if per_replication {
        for p in &demo.points {
            out.push_str(&format!("{},{},{},{}\n", p.n, p.rr_hat, p.ci_low, p.ci_high));
        }
    } else {
        for r in &demo.rows {
            out.push_str(&format!("{},{},{},{}\n", r.n, r.rr_hat, r.ci_low, r.ci_high));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_round_trips() {
        let env = ReportEnvelope::new(
            "fit",
            serde_json::json!({"spec": "1 + A", "level": 0.95}),
            serde_json::json!({"x": 0.1 + 0.2, "y": [1.0e-300, 12345.678901234567]}),
            vec!["w".into()],
            false,
        );
        let text = env.to_machine();
        let back = ReportEnvelope::from_machine(&text).unwrap();
        assert_eq!(back.to_machine(), text);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.json");
        write_atomic(&p, "a").unwrap();
        write_atomic(&p, "b").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "b");
    }
}
