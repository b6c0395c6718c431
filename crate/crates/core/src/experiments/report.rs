//! Report rows, CSV bodies and JSON summaries.

use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// Reported value, no threshold applied.
    Info,
    /// Not enough samples (or an invalid oracle) to judge the row.
    Insufficient,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Info => "info",
            Status::Insufficient => "insufficient",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Below,
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">")]
    Above,
}

impl Relation {
    pub fn holds(self, value: f64, tolerance: f64) -> bool {
        match self {
            Relation::Below => value < tolerance,
            Relation::AtMost => value <= tolerance,
            Relation::Above => value > tolerance,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::Below => "<",
            Relation::AtMost => "<=",
            Relation::Above => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub n: Option<usize>,
    pub statistic: String,
    pub value: f64,
    pub relation: Option<Relation>,
    pub tolerance: Option<f64>,
    pub status: Status,
}

impl Row {
    pub fn info(n: Option<usize>, statistic: impl Into<String>, value: f64) -> Self {
        Self { n, statistic: statistic.into(), value, relation: None, tolerance: None, status: Status::Info }
    }

    /// A judged row; NaN values fail.
    pub fn check(n: Option<usize>, statistic: impl Into<String>, value: f64, relation: Relation, tolerance: f64) -> Self {
        let status = if relation.holds(value, tolerance) { Status::Pass } else { Status::Fail };
        Self { n, statistic: statistic.into(), value, relation: Some(relation), tolerance: Some(tolerance), status }
    }

    /// A row whose threshold exists but cannot be applied.
    pub fn insufficient(n: Option<usize>, statistic: impl Into<String>, value: f64, relation: Relation, tolerance: f64) -> Self {
        Self {
            n,
            statistic: statistic.into(),
            value,
            relation: Some(relation),
            tolerance: Some(tolerance),
            status: Status::Insufficient,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub environment: String,
    pub seed: u64,
    pub rows: Vec<Row>,
    pub replicates: u64,
    pub aborted: u64,
    /// Metadata only; never written to the CSV body.
    pub wall_time_secs: f64,
}

pub const CSV_HEADER: &str = "experiment,environment,n,statistic,value,relation,tolerance,status";

impl ExperimentReport {
    pub fn new(experiment: &str, environment: String, seed: u64) -> Self {
        Self {
            experiment: experiment.into(),
            environment,
            seed,
            rows: Vec::new(),
            replicates: 0,
            aborted: 0,
            wall_time_secs: 0.0,
        }
    }

    pub fn push(&mut self, row: Row) {
        self.rows.push(row);
    }

    /// No row failed and every judged row had enough data.
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| matches!(r.status, Status::Pass | Status::Info))
    }

    pub fn failures(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(|r| matches!(r.status, Status::Fail | Status::Insufficient))
    }

    pub fn abort_fraction(&self) -> f64 {
        if self.replicates == 0 {
            0.0
        } else {
            self.aborted as f64 / self.replicates as f64
        }
    }

    pub fn find(&self, n: Option<usize>, statistic: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.n == n && r.statistic == statistic)
    }

    /// Writes the header and one line per row. Reals use the shortest
    /// representation that round-trips.
    pub fn write_csv<W: Write>(&self, mut out: W, header: bool) -> Result<()> {
        if header {
            writeln!(out, "{CSV_HEADER}")?;
        }
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                csv_field(&self.experiment),
                csv_field(&self.environment),
                r.n.map(|n| n.to_string()).unwrap_or_default(),
                csv_field(&r.statistic),
                real(r.value),
                r.relation.map(Relation::symbol).unwrap_or_default(),
                r.tolerance.map(real).unwrap_or_default(),
                r.status
            )?;
        }
        Ok(())
    }

    pub fn csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, true).expect("writing to a Vec");
        String::from_utf8(buf).expect("ascii csv")
    }

    pub fn summary(&self, threads: usize) -> serde_json::Value {
        serde_json::json!({
            "experiment": self.experiment,
            "environment": self.environment,
            "seed": self.seed,
            "pass": self.passed(),
            "rows": self.rows.len(),
            "failed_rows": self.failures().count(),
            "replicates": self.replicates,
            "aborted": self.aborted,
            "abort_fraction": self.abort_fraction(),
            "metadata": {
                "wall_time_secs": self.wall_time_secs,
                "threads": threads,
            },
        })
    }
}

/// Shortest round-trip form, switching to exponent notation for tiny or huge magnitudes.
fn real(v: f64) -> String {
    format!("{v:?}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Largest consecutive increment of `values`; negative exactly when the
/// sequence is strictly decreasing.
pub fn max_increment(values: &[f64]) -> f64 {
    values.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
}
