//! CSV tables and the JSON run manifest.
//!
//! Numbers are written with 17 significant digits, which round-trips every
//! `f64`. Data files carry no timing information, so repeated runs produce
//! identical bytes; the wall-clock duration lives only in the manifest.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tcem::harness::{ErrorReport, MomentTable, PathRecord};
use tcem::subordinator::LaplaceCheck;

/// 17 significant digits in scientific notation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub const ERROR_HEADER: &str =
    "delta,mean_sup_error,rms_error,std_error,log2_delta,log2_rms_error,n_blowups";

/// Write an [`ErrorReport`] followed by `# slope=`, `# r_squared=` and `# seed=` lines.
pub fn emit_csv<W: Write>(report: &ErrorReport, mut out: W) -> io::Result<()> {
    writeln!(out, "{ERROR_HEADER}")?;
    for row in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_f64(row.delta),
            fmt_f64(row.mean_sup_error),
            fmt_f64(row.rms_error),
            fmt_f64(row.std_error),
            fmt_f64(row.delta.log2()),
            fmt_f64(row.rms_error.log2()),
            row.n_blowups
        )?;
    }
    let (slope, r2) = report
        .regression
        .map_or((f64::NAN, f64::NAN), |r| (r.slope, r.r_squared));
    writeln!(out, "# slope={}", fmt_f64(slope))?;
    writeln!(out, "# r_squared={}", fmt_f64(r2))?;
    writeln!(out, "# seed={}", report.seed)?;
    out.flush()
}

pub fn emit_moments_csv<W: Write>(table: &MomentTable, mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "delta,max_sup_norm,mean_sup_moment,plain_max_sup_norm,plain_blowups"
    )?;
    for row in &table.rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(row.delta),
            fmt_f64(row.max_sup_norm),
            fmt_f64(row.mean_sup_moment),
            fmt_f64(row.plain_max_sup_norm),
            row.plain_blowups
        )?;
    }
    writeln!(out, "# max_over_min={}", fmt_f64(table.spread()))?;
    writeln!(out, "# p={}", fmt_f64(table.p))?;
    writeln!(out, "# seed={}", table.seed)?;
    out.flush()
}

/// One cell of the subordinator validation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceRow {
    pub beta: f64,
    pub delta: f64,
    pub r: f64,
    pub n_samples: usize,
    pub check: LaplaceCheck,
}

pub fn emit_laplace_csv<W: Write>(rows: &[LaplaceRow], mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "beta,delta,r,n_samples,empirical,analytic,std_error,z_score"
    )?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt_f64(row.beta),
            fmt_f64(row.delta),
            fmt_f64(row.r),
            row.n_samples,
            fmt_f64(row.check.empirical),
            fmt_f64(row.check.analytic),
            fmt_f64(row.check.std_error),
            fmt_f64(row.check.z_score())
        )?;
    }
    out.flush()
}

pub fn emit_path_csv<W: Write>(record: &PathRecord, mut out: W) -> io::Result<()> {
    let dim = record.states.first().map_or(0, Vec::len);
    let mut header = String::from("rho,t_clipped,E_delta");
    for i in 1..=dim {
        header.push_str(&format!(",x{i}"));
    }
    writeln!(out, "{header}")?;
    for (rho, t, e, x) in record.rows() {
        write!(out, "{},{},{}", fmt_f64(rho), fmt_f64(t), fmt_f64(e))?;
        for v in x {
            write!(out, ",{}", fmt_f64(*v))?;
        }
        writeln!(out)?;
    }
    if let Some(n) = record.blow_up {
        writeln!(out, "# blow_up_step={n}")?;
    }
    out.flush()
}

/// Numeric rows and `# key=value` comments of a CSV written by this module.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedCsv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub comments: Vec<(String, String)>,
}

impl ParsedCsv {
    pub fn comment(&self, key: &str) -> Option<&str> {
        self.comments
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

pub fn parse_csv(text: &str) -> Result<ParsedCsv, String> {
    let mut parsed = ParsedCsv::default();
    for (i, line) in text.lines().enumerate() {
        if let Some(comment) = line.strip_prefix('#') {
            let (k, v) = comment
                .trim()
                .split_once('=')
                .ok_or_else(|| format!("line {}: malformed comment", i + 1))?;
            parsed.comments.push((k.to_string(), v.to_string()));
        } else if parsed.header.is_empty() {
            parsed.header = line.split(',').map(str::to_string).collect();
        } else {
            let row = line
                .split(',')
                .map(|v| v.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| format!("line {}: {e}", i + 1))?;
            parsed.rows.push(row);
        }
    }
    Ok(parsed)
}

/// Everything needed to reproduce a run, written next to its data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest<C, R> {
    pub command: String,
    pub version: String,
    pub config: C,
    pub wall_clock_seconds: f64,
    /// How the strong error is measured.
    pub error_metric: String,
    pub results: R,
}

pub const ERROR_METRIC: &str =
    "E[sup_t |X_ref(t) - X_delta(t)|^pbar]^(1/pbar); the sup is exact over \
     the reference grid points in [0, T], where both step interpolants jump";

impl<C: Serialize, R: Serialize> RunManifest<C, R> {
    pub fn new(command: &str, config: C, wall_clock_seconds: f64, results: R) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            wall_clock_seconds,
            error_metric: ERROR_METRIC.to_string(),
            results,
        }
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        std::fs::write(path, json + "\n")
    }
}

/// `results.csv` gets `results.csv.manifest.json`.
pub fn manifest_path(data: &Path) -> PathBuf {
    let mut name = data.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}
