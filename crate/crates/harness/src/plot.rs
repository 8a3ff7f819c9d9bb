//! Plot-ready `(x, y, err)` series pulled out of report files.

use std::io::Write;
use std::path::Path;

use gibbs_core::energy::lj_pair;

use crate::error::{HarnessError, HarnessResult};

/// Columns of one series.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Series {
    pub x: String,
    pub y: String,
    /// No error column when absent; the `err` column is then 0.
    pub err: Option<String>,
}

impl Series {
    pub fn new(x: &str, y: &str, err: Option<&str>) -> Self {
        Self {
            x: x.into(),
            y: y.into(),
            err: err.map(Into::into),
        }
    }

    /// Columns of `entropy_curve.csv`.
    pub fn entropy() -> Self {
        Self::new("n", "per_volume", Some("stderr"))
    }
}

pub const HEADER: [&str; 3] = ["x", "y", "err"];

fn bad(path: &Path, message: String) -> HarnessError {
    HarnessError::BadInput {
        path: path.to_path_buf(),
        message,
    }
}

/// Rows `(x, y, err)` of `series` in the CSV at `path`. An empty file or a
/// header-only file gives no rows; every requested column must exist
/// otherwise.
pub fn extract(path: &Path, series: &Series) -> HarnessResult<Vec<[String; 3]>> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| bad(path, e.to_string()))?.clone();
    let mut missing = Vec::new();
    let mut find = |name: &str| {
        let i = headers.iter().position(|h| h.trim() == name);
        if i.is_none() {
            missing.push(name.to_string());
        }
        i
    };
    let ix = find(&series.x);
    let iy = find(&series.y);
    let ie = series.err.as_deref().map(&mut find);
    if !missing.is_empty() {
        return Err(bad(path, format!("missing columns: {}", missing.join(", "))));
    }
    let (ix, iy) = (ix.unwrap(), iy.unwrap());
    let ie = ie.flatten();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| bad(path, e.to_string()))?;
        let get = |i: usize| rec.get(i).unwrap_or("").trim().to_string();
        rows.push([get(ix), get(iy), ie.map(get).unwrap_or_else(|| "0".into())]);
    }
    Ok(rows)
}

pub fn write_series<W: Write>(out: W, rows: &[[String; 3]]) -> HarnessResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| HarnessError::Io {
        path: "<series>".into(),
        source: e.into(),
    };
    w.write_record(HEADER).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.flush().map_err(|e| HarnessError::Io {
        path: "<series>".into(),
        source: e,
    })
}

/// The Lennard-Jones profile on `u = 1.20, 1.21, ..., 3.00`. Grid values
/// are formed as `k / 100`, so `u = 1.5` is hit exactly and its row reads 0.
pub fn lj_sweep() -> Vec<[String; 3]> {
    (120..=300)
        .map(|k| {
            let u = k as f64 / 100.0;
            let phi = lj_pair(u).expect("positive distance");
            [u.to_string(), phi.to_string(), "0".into()]
        })
        .collect()
}
