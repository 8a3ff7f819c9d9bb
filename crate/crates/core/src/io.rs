//! JSON-lines persistence of configurations. Floats are written in
//! shortest round-trip form, so reading back is bit-exact.

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::configuration::{Configuration, Mark, MarkedPoint};
use crate::error::{Error, Result};
use crate::marks::PathMark;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum MarkRecord {
    Radius(f64),
    Path(Vec<[f64; 2]>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointRecord {
    pub x: Vec<f64>,
    pub mark: MarkRecord,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordMeta {
    pub seed: u64,
    pub model_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigurationRecord {
    pub dim: usize,
    pub points: Vec<PointRecord>,
    pub meta: RecordMeta,
}

impl ConfigurationRecord {
    pub fn new(config: &Configuration, meta: RecordMeta) -> Self {
        let points = config
            .points()
            .iter()
            .map(|p| PointRecord {
                x: p.location().to_vec(),
                mark: match p.mark() {
                    Mark::Radius(r) => MarkRecord::Radius(*r),
                    Mark::Path(path) => MarkRecord::Path(path.samples().to_vec()),
                },
            })
            .collect();
        Self {
            dim: config.dim(),
            points,
            meta,
        }
    }

    pub fn to_configuration(&self) -> Result<Configuration> {
        let points = self
            .points
            .iter()
            .map(|p| {
                let mark = match &p.mark {
                    MarkRecord::Radius(r) => Mark::Radius(*r),
                    MarkRecord::Path(s) => Mark::Path(Arc::new(PathMark::new(s.clone())?)),
                };
                MarkedPoint::new(p.x.clone(), mark)
            })
            .collect::<Result<Vec<_>>>()?;
        Configuration::new(self.dim, points)
    }
}

pub fn to_json_line(config: &Configuration, meta: &RecordMeta) -> Result<String> {
    Ok(serde_json::to_string(&ConfigurationRecord::new(config, meta.clone()))?)
}

pub fn from_json_line(line: &str) -> Result<(Configuration, RecordMeta)> {
    let record: ConfigurationRecord = serde_json::from_str(line)?;
    Ok((record.to_configuration()?, record.meta))
}

/// Writes one configuration per line.
pub fn write_jsonl<'a, W, I>(mut out: W, configs: I, meta: &RecordMeta) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a Configuration>,
{
    for c in configs {
        writeln!(out, "{}", to_json_line(c, meta)?)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads every non-blank line; errors name the offending line.
pub fn read_jsonl<Rd: BufRead>(input: Rd) -> Result<Vec<(Configuration, RecordMeta)>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = from_json_line(&line).map_err(|e| match e {
            Error::Json(j) => Error::InvalidParameter(format!("line {}: {j}", i + 1)),
            other => other,
        })?;
        out.push(parsed);
    }
    Ok(out)
}
