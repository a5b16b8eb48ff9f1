//! Versioned CSV reports.
//!
//! Every file starts with one `# polysign <kind> v<version>` comment line
//! followed by a header row. Floats are written with 17 significant digits.

use crate::domain::GridFunction;
use crate::error::{Error, Result};
use crate::experiments::EstimateReport;
use crate::green::{KernelEstimate, PointPair};

pub const SCHEMA_VERSION: u32 = 1;

pub fn schema_line(kind: &str) -> String {
    format!("# polysign {kind} v{SCHEMA_VERSION}")
}

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn optional(x: Option<f64>) -> String {
    x.map(float).unwrap_or_default()
}

fn csv_error(e: csv::Error) -> Error {
    Error::Internal(format!("csv: {e}"))
}

fn write_table(kind: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(&row).map_err(csv_error)?;
    }
    let body = w.into_inner().map_err(|e| Error::Internal(format!("csv: {e}")))?;
    let body = String::from_utf8(body).map_err(|e| Error::Internal(e.to_string()))?;
    Ok(format!("{}\n{body}", schema_line(kind)))
}

const AXES: [&str; 3] = ["x", "y", "z"];

/// Point coordinates followed by one column per named field.
pub fn grid_csv(kind: &str, fields: &[(&str, &GridFunction)]) -> Result<String> {
    let Some((_, first)) = fields.first() else {
        return Err(Error::Internal("grid_csv needs at least one field".into()));
    };
    let domain = first.domain().clone();
    for (name, f) in fields {
        if !std::sync::Arc::ptr_eq(f.domain(), &domain) {
            return Err(Error::Domain(format!("field `{name}` lives on a different domain")));
        }
    }
    let dim = domain.dimension();
    let header: Vec<String> = AXES[..dim].iter().copied().chain(fields.iter().map(|(n, _)| *n)).map(String::from).collect();
    let rows = domain.points().iter().enumerate().map(|(i, p)| {
        p[..dim].iter().copied().chain(fields.iter().map(|(_, f)| f.values()[i])).map(float).collect()
    });
    write_table(kind, &header, rows)
}

fn pair_columns(pair: Option<&PointPair>, dim: usize) -> Vec<String> {
    match pair {
        Some(p) => [p.x, p.y].iter().flat_map(|c| c[..dim].iter().copied().map(float).collect::<Vec<_>>()).collect(),
        None => vec![String::new(); 2 * dim],
    }
}

fn pair_header(prefix: &str, dim: usize) -> Vec<String> {
    let mut out = Vec::new();
    for point in ["p", "q"] {
        for axis in &AXES[..dim] {
            out.push(format!("{prefix}_{point}{axis}"));
        }
    }
    out
}

/// One row: domain, order, resolution, constants and the extremal pairs.
pub fn kernel_estimate_csv(domain: &str, dim: usize, cells: usize, est: &KernelEstimate) -> Result<String> {
    let mut header: Vec<String> = [
        "domain",
        "m",
        "cells",
        "c2_star",
        "c2_used",
        "c1_hat",
        "c3_hat",
        "exclusion_radius",
        "pairs",
        "min_corrected_offdiag",
        "riesz_ratio_max",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for prefix in ["c2", "c1", "c3"] {
        header.extend(pair_header(prefix, dim));
    }
    let mut row = vec![
        domain.to_string(),
        est.m.to_string(),
        cells.to_string(),
        float(est.c2_star),
        float(est.c2_used),
        float(est.c1_hat),
        float(est.c3_hat),
        float(est.exclusion_radius),
        est.pairs.to_string(),
        float(est.min_corrected_offdiag),
        optional(est.riesz_ratio_max),
    ];
    row.extend(pair_columns(est.c2_pair.as_ref(), dim));
    row.extend(pair_columns(Some(&est.c1_pair), dim));
    row.extend(pair_columns(Some(&est.c3_pair), dim));
    write_table("constants", &header, [row])
}

pub fn experiment_csv(report: &EstimateReport) -> Result<String> {
    let header: Vec<String> = [
        "experiment",
        "domain",
        "m",
        "cells",
        "p_plus",
        "p_minus",
        "q",
        "trials",
        "empirical_constant",
        "refined_cells",
        "refined_constant",
        "refinement_ratio",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let row = vec![
        report.experiment.name().to_string(),
        report.domain.clone(),
        report.m.to_string(),
        report.cells.to_string(),
        float(report.p_plus),
        float(report.p_minus),
        optional(report.q),
        report.trials.iter().filter(|t| t.cells == report.cells).count().to_string(),
        float(report.empirical_constant),
        report.refined_cells.map(|c| c.to_string()).unwrap_or_default(),
        optional(report.refined_constant),
        optional(report.refinement_ratio),
    ];
    write_table("experiment", &header, [row])
}

pub fn trials_csv(report: &EstimateReport) -> Result<String> {
    let header: Vec<String> = ["trial", "seed", "cells", "source_norm_a", "source_norm_b", "target", "bound", "ratio"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = report.trials.iter().map(|t| {
        vec![
            t.trial.to_string(),
            t.seed.to_string(),
            t.cells.to_string(),
            float(t.source_norm_a),
            float(t.source_norm_b),
            float(t.target),
            float(t.bound),
            float(t.ratio),
        ]
    });
    write_table("trials", &header, rows)
}

/// A numeric table read back from a report.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub kind: String,
    pub version: u32,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

/// Parses a report whose cells are all numeric, such as grid and solution files.
pub fn read_table(text: &str) -> Result<Table> {
    let first = text.lines().next().unwrap_or_default();
    let mut words = first.strip_prefix("# polysign ").unwrap_or_default().split_whitespace();
    let (kind, version) = match (words.next(), words.next().and_then(|v| v.strip_prefix('v'))) {
        (Some(k), Some(v)) => (k.to_string(), v.parse::<u32>().map_err(|_| Error::Configuration(format!("bad schema line `{first}`")))?),
        _ => return Err(Error::Configuration(format!("missing schema line, found `{first}`"))),
    };
    if version != SCHEMA_VERSION {
        return Err(Error::Configuration(format!("unsupported {kind} schema version {version}")));
    }
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let columns: Vec<String> = reader.headers().map_err(csv_error)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let row = record
            .iter()
            .map(|cell| cell.parse::<f64>().map_err(|_| Error::Configuration(format!("non-numeric cell `{cell}`"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table {
        kind,
        version,
        columns,
        rows,
    })
}
