//! Report assembly and emission as JSON or aligned text tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use scoretest::montecarlo::McReport;
use scoretest::sequential::{Calibration, SequentialOutcome, SequentialSummary};
use scoretest::TestResult;

use crate::args::{Format, RunConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub seed: Option<u64>,
    pub timestamp: String,
}

impl Provenance {
    pub fn now(seed: Option<u64>) -> Self {
        Provenance {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    pub value: f64,
    /// `true` when the value was fixed by the restriction.
    pub fixed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: String,
    pub n: usize,
    pub estimates: Vec<Estimate>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub lagrange_multipliers: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialSection {
    pub calibration: Calibration,
    pub run: Option<SequentialOutcome>,
    pub power: Vec<SequentialSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Output specific to one subcommand, alongside the test results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Details {
    Fit(FitSummary),
    Sequential(SequentialSection),
    MonteCarlo { reports: Vec<McReport> },
    Selftest { checks: Vec<Check> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub run_config_echo: RunConfig,
    pub results: Vec<TestResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<Details>,
    pub provenance: Provenance,
}

/// `%g`-style rendering with six significant digits.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim(format!("{x:.decimals$}"))
    } else {
        let s = format!("{x:.5e}");
        let (mantissa, e) = s.split_once('e').expect("exponent form");
        format!("{}e{e}", trim(mantissa.to_string()))
    }
}

/// Left-aligned first column, right-aligned numeric columns.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(j, (c, &w))| if j == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    for row in rows {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}

fn results_table(results: &[TestResult]) -> String {
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                r.variant.to_string(),
                sig6(r.statistic),
                r.df.map_or("z".into(), |d| d.to_string()),
                sig6(r.p_value),
                r.info_kind.map_or("-".into(), |k| k.to_string()),
            ]
        })
        .collect();
    let mut out = table(&["statistic", "value", "df", "p_value", "info"], &rows);
    for r in results {
        for (k, v) in &r.diagnostics {
            let _ = writeln!(out, "  {} {k} = {}", r.variant, sig6(*v));
        }
        for note in &r.notes {
            let _ = writeln!(out, "  {} note: {note}", r.variant);
        }
    }
    out
}

fn fit_table(f: &FitSummary) -> String {
    let rows: Vec<Vec<String>> = f
        .estimates
        .iter()
        .map(|e| vec![e.name.clone(), sig6(e.value), if e.fixed { "fixed".into() } else { String::new() }])
        .collect();
    let mut out = format!("{} fit, n = {}\n", f.model, f.n);
    out += &table(&["parameter", "estimate", ""], &rows);
    let _ = writeln!(
        out,
        "loglik = {}, converged = {}, iterations = {}, gradient norm = {}",
        sig6(f.loglik),
        f.converged,
        f.iterations,
        sig6(f.gradient_norm)
    );
    if let Some(l) = &f.lagrange_multipliers {
        let s: Vec<String> = l.iter().map(|v| sig6(*v)).collect();
        let _ = writeln!(out, "lagrange multipliers = [{}]", s.join(", "));
    }
    for w in &f.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

fn sequential_table(s: &SequentialSection) -> String {
    let c = &s.calibration;
    let mut out = format!(
        "boundary = {}, tie probability = {}, mc_se = {} ({} calibration paths, seed {})\n",
        sig6(c.boundary.level),
        sig6(c.boundary.tie_prob),
        sig6(c.mc_se),
        c.reps,
        c.seed
    );
    if let Some(run) = &s.run {
        let _ = writeln!(
            out,
            "decision = {}, stopping time = {}, final statistic = {}",
            match run.decision {
                scoretest::sequential::Decision::Reject => "reject",
                scoretest::sequential::Decision::AcceptAtN => "accept",
            },
            run.stopping_time,
            sig6(*run.trajectory.last().unwrap_or(&0.0))
        );
    }
    if !s.power.is_empty() {
        let rows: Vec<Vec<String>> = s
            .power
            .iter()
            .map(|p| {
                vec![sig6(p.theta), sig6(p.rejection_rate), sig6(p.expected_stopping_time), sig6(p.fixed_power), p.reps.to_string()]
            })
            .collect();
        out += &table(&["theta", "sequential", "E[stop]", "fixed", "reps"], &rows);
    }
    out
}

fn mc_table(reports: &[McReport]) -> String {
    let mut rows = Vec::new();
    for r in reports {
        for row in &r.rates {
            rows.push(vec![
                r.config.dgp.to_string(),
                sig6(row.alpha),
                sig6(row.rate),
                format!("[{}, {}]", sig6(row.band_lo), sig6(row.band_hi)),
                if row.within_band { "yes".into() } else { "no".into() },
            ]);
        }
    }
    let mut out = table(&["dgp", "alpha", "rate", "99% band at alpha", "in band"], &rows);
    for r in reports {
        let _ = writeln!(
            out,
            "{}: {} completed, {} failed ({})",
            r.config.dgp,
            r.completed,
            r.failures,
            if r.failure_check_passed() { "within the 1% limit" } else { "over the 1% limit" }
        );
        for (kind, count) in &r.failure_kinds {
            let _ = writeln!(out, "  {kind}: {count}");
        }
        if let Some(q) = &r.quantiles {
            let rows: Vec<Vec<String>> = q.iter().map(|q| vec![sig6(q.level), sig6(q.value), sig6(q.mc_se)]).collect();
            out += &table(&["quantile", "value", "mc_se"], &rows);
        }
    }
    out
}

fn checks_table(checks: &[Check]) -> String {
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| vec![c.name.clone(), sig6(c.residual), sig6(c.tolerance), if c.pass { "pass".into() } else { "FAIL".into() }])
        .collect();
    table(&["identity", "residual", "tolerance", "status"], &rows)
}

impl Report {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(self).expect("report serializes") + "\n",
            Format::Table => {
                let mut out = String::new();
                if !self.results.is_empty() {
                    out += &results_table(&self.results);
                }
                match &self.details {
                    Some(Details::Fit(f)) => out += &fit_table(f),
                    Some(Details::Sequential(s)) => out += &sequential_table(s),
                    Some(Details::MonteCarlo { reports }) => out += &mc_table(reports),
                    Some(Details::Selftest { checks }) => out += &checks_table(checks),
                    None => {}
                }
                let _ = writeln!(out, "scoretest {} seed {} at {}", self.provenance.version, self.provenance.seed.map_or("-".into(), |s| s.to_string()), self.provenance.timestamp);
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(3.841458820694124), "3.84146");
        assert_eq!(sig6(20.0), "20");
        assert_eq!(sig6(0.05), "0.05");
        assert_eq!(sig6(123456789.0), "1.23457e8");
        assert_eq!(sig6(-1.5e-9), "-1.5e-9");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(3.66864e-5), "3.66864e-5");
        assert_eq!(sig6(0.000169742), "0.000169742");
    }

    #[test]
    fn table_aligns_columns() {
        let t = table(&["a", "value"], &[vec!["long-name".into(), "1".into()], vec!["x".into(), "22.5".into()]]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0].len(), lines[1].len());
        assert!(lines[2].ends_with("22.5"));
    }
}
