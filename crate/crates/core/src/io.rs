//! CSV and JSON input/output.
//!
//! Data files have a header row and one sample per line. A file in which every
//! value is a nonnegative integer is read as counts; anything else is read as
//! proportions.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::inference::TuneReport;
use crate::model::{proportions, Composition, CountDataset, ParamsFile, RppiParams};

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Counts(CountDataset),
    Proportions(Vec<Composition>),
}

impl Dataset {
    pub fn p(&self) -> usize {
        match self {
            Dataset::Counts(c) => c.p(),
            Dataset::Proportions(u) => u[0].p(),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Dataset::Counts(c) => c.n(),
            Dataset::Proportions(u) => u.len(),
        }
    }

    /// Proportions `x_i / m_i` for counts, the data themselves otherwise.
    pub fn compositions(&self) -> Result<Vec<Composition>> {
        match self {
            Dataset::Counts(c) => proportions(c),
            Dataset::Proportions(u) => Ok(u.clone()),
        }
    }

    pub fn counts(&self) -> Option<&CountDataset> {
        match self {
            Dataset::Counts(c) => Some(c),
            Dataset::Proportions(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub data: Dataset,
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse { line: line as usize, message: message.into() }
}

fn csv_to_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => parse_err(line, format!("{kind:?}")),
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    read_table_from(File::open(path)?)
}

pub fn read_table_from<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_to_error)?.iter().map(str::to_string).collect();
    if header.len() < 3 {
        return Err(parse_err(1, format!("header has {} columns; need at least 3", header.len())));
    }
    let mut rows: Vec<(u64, Vec<String>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_to_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(parse_err(line, format!("{} fields, expected {}", rec.len(), header.len())));
        }
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    if rows.is_empty() {
        return Err(parse_err(1, "no data rows"));
    }
    let integral = rows.iter().all(|(_, r)| r.iter().all(|v| v.parse::<u64>().is_ok()));
    let data = if integral {
        let counts = rows.iter().map(|(_, r)| r.iter().map(|v| v.parse().unwrap()).collect()).collect();
        match CountDataset::new(counts) {
            Err(Error::DegenerateRow { row }) => return Err(parse_err(rows[row - 1].0, "row total is zero")),
            other => Dataset::Counts(other?),
        }
    } else {
        let mut out = Vec::with_capacity(rows.len());
        for (line, r) in &rows {
            let u = r
                .iter()
                .map(|v| v.parse::<f64>().map_err(|_| parse_err(*line, format!("`{v}` is not a number"))))
                .collect::<Result<Vec<f64>>>()?;
            let sum: f64 = u.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(parse_err(*line, format!("proportions sum to {sum}, expected 1")));
            }
            out.push(Composition::new(u).map_err(|e| parse_err(*line, e.to_string()))?);
        }
        Dataset::Proportions(out)
    };
    Ok(Table { header, data })
}

/// Default column names `x1, ..., xp`.
pub fn default_header(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

pub fn write_compositions<W: Write>(out: W, header: &[String], data: &[Composition]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_to_error)?;
    for u in data {
        w.write_record(u.as_slice().iter().map(|x| x.to_string())).map_err(csv_to_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_counts<W: Write>(out: W, header: &[String], data: &CountDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_to_error)?;
    for row in data.rows() {
        w.write_record(row.iter().map(|x| x.to_string())).map_err(csv_to_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Row totals, one per line after a header.
pub fn read_totals(path: &Path) -> Result<Vec<u64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path).map_err(csv_to_error)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_to_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let v = rec.get(0).unwrap_or("");
        match v.parse::<u64>() {
            Ok(m) if m > 0 => out.push(m),
            _ => return Err(parse_err(line, format!("`{v}` is not a positive integer total"))),
        }
    }
    if out.is_empty() {
        return Err(parse_err(1, "no totals"));
    }
    Ok(out)
}

pub fn read_params(path: &Path) -> Result<RppiParams> {
    let text = std::fs::read_to_string(path)?;
    let file: ParamsFile = serde_json::from_str(&text)
        .map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
    RppiParams::try_from(file).map_err(|e| Error::Parse { line: 0, message: e.to_string() })
}

pub fn write_json<W: Write, T: serde::Serialize>(mut out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn write_tune_csv(path: &Path, report: &TuneReport) -> Result<()> {
    report.write_csv(File::create(path)?)
}
