//! Summary tables: one CSV row per (scenario, method).

use std::fs::File;
use std::io::Write;
use std::path::Path;

use oob_bands::sim::{CoverageReport, ScenarioConfig};

use crate::app::CliError;

pub const HEADER: [&str; 17] = [
    "scenario_id",
    "method",
    "coverage_type",
    "n",
    "p",
    "sn",
    "residual_family",
    "covariance_kind",
    "regression_fn",
    "alpha",
    "coverage",
    "coverage_sd",
    "mean_length",
    "mc_outer",
    "mc_inner",
    "failures",
    "seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario_id: String,
    pub method: String,
    pub coverage_type: String,
    pub n: usize,
    pub p: usize,
    pub sn: f64,
    pub residual_family: String,
    pub covariance_kind: String,
    pub regression_fn: String,
    pub alpha: f64,
    pub coverage: f64,
    /// Spread of the per-outer coverages; only for the nested types.
    pub coverage_sd: Option<f64>,
    pub mean_length: f64,
    pub mc_outer: usize,
    pub mc_inner: usize,
    pub failures: usize,
    pub seed: u64,
}

impl ResultRow {
    pub fn from_report(scenario: &ScenarioConfig, report: &CoverageReport) -> Vec<ResultRow> {
        report
            .methods
            .iter()
            .map(|m| ResultRow {
                scenario_id: report.scenario_id.clone(),
                method: m.method.clone(),
                coverage_type: report.coverage_type.to_string(),
                n: scenario.n,
                p: scenario.p,
                sn: scenario.sn,
                residual_family: scenario.residual.to_string(),
                covariance_kind: scenario.covariance.to_string(),
                regression_fn: scenario.regression.to_string(),
                alpha: scenario.alpha,
                coverage: m.coverage,
                coverage_sd: if report.coverage_type.is_nested() {
                    m.per_outer_sd()
                } else {
                    None
                },
                mean_length: m.mean_length,
                mc_outer: report.mc_outer,
                mc_inner: report.mc_inner,
                failures: report.failures,
                seed: report.seed,
            })
            .collect()
    }

    fn fields(&self) -> [String; 17] {
        [
            self.scenario_id.clone(),
            self.method.clone(),
            self.coverage_type.clone(),
            self.n.to_string(),
            self.p.to_string(),
            format_real(self.sn),
            self.residual_family.clone(),
            self.covariance_kind.clone(),
            self.regression_fn.clone(),
            format_real(self.alpha),
            format_real(self.coverage),
            self.coverage_sd.map(format_real).unwrap_or_default(),
            format_real(self.mean_length),
            self.mc_outer.to_string(),
            self.mc_inner.to_string(),
            self.failures.to_string(),
            self.seed.to_string(),
        ]
    }
}

/// Formats `x` with at most six significant digits, in the style of C's
/// `%g`: trailing zeros dropped, exponent form below 1e-4 and from 1e6 up.
///
/// Rounding is half-to-even on the shortest decimal representation of `x`,
/// so `0.9512345` gives `0.951234` and `0.9512355` gives `0.951236`.
pub fn format_real(x: f64) -> String {
    const DIGITS: usize = 6;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:e}", x.abs());
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let mut exp: i32 = exp.parse().expect("integer exponent");
    let mut digits: Vec<u8> = mantissa.bytes().filter(u8::is_ascii_digit).map(|b| b - b'0').collect();
    if digits.len() > DIGITS {
        let next = digits[DIGITS];
        let sticky = digits[DIGITS + 1..].iter().any(|&d| d != 0);
        digits.truncate(DIGITS);
        let round_up = next > 5 || (next == 5 && (sticky || digits[DIGITS - 1] % 2 == 1));
        if round_up {
            let mut k = DIGITS;
            loop {
                if k == 0 {
                    digits.insert(0, 1);
                    digits.truncate(DIGITS);
                    exp += 1;
                    break;
                }
                k -= 1;
                if digits[k] == 9 {
                    digits[k] = 0;
                } else {
                    digits[k] += 1;
                    break;
                }
            }
        }
    }
    while digits.len() > 1 && digits.last() == Some(&0) {
        digits.pop();
    }
    let text: String = digits.iter().map(|d| char::from(b'0' + d)).collect();
    let sign = if x < 0.0 { "-" } else { "" };
    if exp < -4 || exp >= DIGITS as i32 {
        let (head, tail) = text.split_at(1);
        let dot = if tail.is_empty() { "" } else { "." };
        let esign = if exp < 0 { '-' } else { '+' };
        format!("{sign}{head}{dot}{tail}e{esign}{:02}", exp.abs())
    } else if exp < 0 {
        format!("{sign}0.{}{text}", "0".repeat((-exp - 1) as usize))
    } else {
        let int_len = exp as usize + 1;
        if text.len() <= int_len {
            format!("{sign}{text}{}", "0".repeat(int_len - text.len()))
        } else {
            let (int, frac) = text.split_at(int_len);
            format!("{sign}{int}.{frac}")
        }
    }
}

fn writer_for<W: Write>(sink: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink)
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Writes the summary table; the header is always present.
pub fn write_results(rows: &[ResultRow], path: &Path) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut w = writer_for(file);
    w.write_record(HEADER).map_err(|e| io_error(path, e))?;
    for row in rows {
        w.write_record(row.fields()).map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

/// Reads a table produced by [`write_results`].
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, CliError> {
    let mut r = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| io_error(path, e))?;
    let header = r.headers().map_err(|e| io_error(path, e))?;
    if header.iter().ne(HEADER) {
        return Err(io_error(path, "unexpected header"));
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let rec = record.map_err(|e| io_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |col: usize| io_error(path, format!("line {line}: bad value in column {}", HEADER[col]));
        let int = |col: usize| rec[col].parse::<usize>().map_err(|_| bad(col));
        let real = |col: usize| rec[col].parse::<f64>().map_err(|_| bad(col));
        rows.push(ResultRow {
            scenario_id: rec[0].to_string(),
            method: rec[1].to_string(),
            coverage_type: rec[2].to_string(),
            n: int(3)?,
            p: int(4)?,
            sn: real(5)?,
            residual_family: rec[6].to_string(),
            covariance_kind: rec[7].to_string(),
            regression_fn: rec[8].to_string(),
            alpha: real(9)?,
            coverage: real(10)?,
            coverage_sd: if rec[11].is_empty() { None } else { Some(real(11)?) },
            mean_length: real(12)?,
            mc_outer: int(13)?,
            mc_inner: int(14)?,
            failures: int(15)?,
            seed: rec[16].parse().map_err(|_| bad(16))?,
        });
    }
    Ok(rows)
}

/// Writes every evaluated interval, one row per (scenario, method, replicate).
/// Reals keep full precision here since the file feeds plots.
pub fn write_replicates(reports: &[CoverageReport], path: &Path) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut w = writer_for(file);
    w.write_record([
        "scenario_id",
        "method",
        "outer",
        "inner",
        "lower",
        "upper",
        "point",
        "sigma",
        "response",
        "covered",
    ])
    .map_err(|e| io_error(path, e))?;
    for report in reports {
        for m in &report.methods {
            for r in m.records.iter().flatten() {
                w.write_record([
                    report.scenario_id.clone(),
                    m.method.clone(),
                    r.outer.to_string(),
                    r.inner.to_string(),
                    r.lower.to_string(),
                    r.upper.to_string(),
                    r.point.to_string(),
                    r.sigma.map(|s| s.to_string()).unwrap_or_default(),
                    r.response.to_string(),
                    u8::from(r.covered).to_string(),
                ])
                .map_err(|e| io_error(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| io_error(path, e))
}
