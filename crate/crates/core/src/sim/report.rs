use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::study::{CellSummary, StudyReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Markdown,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(Error::Config(format!("unknown output format '{other}'"))),
        }
    }
}

/// One printed table row. Variances are ×10⁴, widths ×10², relative bias
/// and coverage in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub estimator: String,
    pub m: usize,
    pub mean: f64,
    pub mc_var: f64,
    pub rubin_var: f64,
    pub rubin_rel_bias: f64,
    pub rubin_coverage: f64,
    pub rubin_width: f64,
    pub bs_var: f64,
    pub bs_rel_bias: f64,
    pub bs_quantile_coverage: f64,
    pub bs_quantile_width: f64,
    pub bs_wald_coverage: f64,
    pub bs_wald_width: f64,
}

const COLUMNS: [&str; 14] = [
    "estimator",
    "m",
    "mean",
    "mc_var",
    "rubin_var",
    "rubin_rel_bias",
    "rubin_coverage",
    "rubin_width",
    "bs_var",
    "bs_rel_bias",
    "bs_quantile_coverage",
    "bs_quantile_width",
    "bs_wald_coverage",
    "bs_wald_width",
];

/// Congeniality diagnostics, all ×10⁴.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub estimator: String,
    pub m: usize,
    pub var_n: f64,
    pub var_diff: f64,
    pub cov_diff_n: f64,
    pub cov_diff_n_se: f64,
}

const DIAGNOSTIC_COLUMNS: [&str; 6] = ["estimator", "m", "var_n", "var_diff", "cov_diff_n", "cov_diff_n_se"];

fn round(v: f64, digits: i32) -> f64 {
    let s = 10f64.powi(digits);
    (v * s).round() / s
}

impl TableRow {
    pub fn from_cell(c: &CellSummary) -> Self {
        TableRow {
            estimator: c.estimator.name().to_string(),
            m: c.m,
            mean: round(c.mean_tau, 3),
            mc_var: round(c.mc_variance * 1e4, 1),
            rubin_var: round(c.rubin.mean_variance * 1e4, 1),
            rubin_rel_bias: round(c.rubin.relative_bias, 1),
            rubin_coverage: round(c.rubin.coverage, 1),
            rubin_width: round(c.rubin.mean_width * 1e2, 1),
            bs_var: round(c.bs_wald.mean_variance * 1e4, 1),
            bs_rel_bias: round(c.bs_wald.relative_bias, 1),
            bs_quantile_coverage: round(c.bs_quantile.coverage, 1),
            bs_quantile_width: round(c.bs_quantile.mean_width * 1e2, 1),
            bs_wald_coverage: round(c.bs_wald.coverage, 1),
            bs_wald_width: round(c.bs_wald.mean_width * 1e2, 1),
        }
    }

    fn cells(&self) -> Vec<String> {
        let one = |v: f64| format!("{v:.1}");
        vec![
            self.estimator.clone(),
            self.m.to_string(),
            format!("{:.3}", self.mean),
            one(self.mc_var),
            one(self.rubin_var),
            one(self.rubin_rel_bias),
            one(self.rubin_coverage),
            one(self.rubin_width),
            one(self.bs_var),
            one(self.bs_rel_bias),
            one(self.bs_quantile_coverage),
            one(self.bs_quantile_width),
            one(self.bs_wald_coverage),
            one(self.bs_wald_width),
        ]
    }
}

impl DiagnosticRow {
    pub fn from_cell(c: &CellSummary) -> Self {
        DiagnosticRow {
            estimator: c.estimator.name().to_string(),
            m: c.m,
            var_n: round(c.var_n * 1e4, 2),
            var_diff: round(c.var_diff * 1e4, 2),
            cov_diff_n: round(c.cov_diff_n * 1e4, 2),
            cov_diff_n_se: round(c.cov_diff_n_se * 1e4, 2),
        }
    }

    fn cells(&self) -> Vec<String> {
        let two = |v: f64| format!("{v:.2}");
        vec![
            self.estimator.clone(),
            self.m.to_string(),
            two(self.var_n),
            two(self.var_diff),
            two(self.cov_diff_n),
            two(self.cov_diff_n_se),
        ]
    }
}

pub fn table_rows(report: &StudyReport) -> Vec<TableRow> {
    report.cells.iter().map(TableRow::from_cell).collect()
}

pub fn diagnostic_rows(report: &StudyReport) -> Vec<DiagnosticRow> {
    report.cells.iter().map(DiagnosticRow::from_cell).collect()
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn markdown_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = format!("| {} |\n", header.join(" | "));
    out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
    for r in rows {
        out.push_str(&format!("| {} |\n", r.join(" | ")));
    }
    out
}

/// Serialize the main results table.
pub fn emit_rows(rows: &[TableRow], format: Format) -> Result<String> {
    let cells: Vec<Vec<String>> = rows.iter().map(TableRow::cells).collect();
    match format {
        Format::Csv => csv_text(&COLUMNS, &cells),
        Format::Markdown => Ok(markdown_text(&COLUMNS, &cells)),
        Format::Json => Ok(serde_json::to_string_pretty(rows)?),
    }
}

pub fn emit(report: &StudyReport, format: Format) -> Result<String> {
    emit_rows(&table_rows(report), format)
}

pub fn emit_diagnostics(report: &StudyReport, format: Format) -> Result<String> {
    let rows = diagnostic_rows(report);
    let cells: Vec<Vec<String>> = rows.iter().map(DiagnosticRow::cells).collect();
    match format {
        Format::Csv => csv_text(&DIAGNOSTIC_COLUMNS, &cells),
        Format::Markdown => Ok(markdown_text(&DIAGNOSTIC_COLUMNS, &cells)),
        Format::Json => Ok(serde_json::to_string_pretty(&rows)?),
    }
}

/// Parse the CSV written by [`emit_rows`].
pub fn parse_csv(text: &str) -> Result<Vec<TableRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != COLUMNS {
        return Err(Error::Parse {
            row: 0,
            column: header.join(","),
            message: "unexpected table header".into(),
        });
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                row: i + 1,
                column: String::new(),
                message: e.to_string(),
            })
        })
        .collect()
}
