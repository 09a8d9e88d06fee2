use std::io::BufRead;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use isvd_chart::Subgroup;

use crate::error::CliError;

/// One subgroup on the wire: `m` x-vectors and `m` y-vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamRecord {
    pub t: u64,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

impl StreamRecord {
    pub fn from_subgroup(g: &Subgroup) -> Self {
        Self {
            t: g.t,
            x: g.xs.iter().map(|v| v.iter().copied().collect()).collect(),
            y: g.ys.iter().map(|v| v.iter().copied().collect()).collect(),
        }
    }

    /// Checks pair counts and finiteness; dimensions are left to the caller.
    pub fn to_subgroup(&self, line: usize) -> Result<Subgroup, CliError> {
        if self.t == 0 {
            return Err(CliError::Input(format!("line {line}: t must be positive")));
        }
        if self.x.is_empty() || self.x.len() != self.y.len() {
            return Err(CliError::Input(format!(
                "line {line}: x and y need the same nonzero number of observations (got {} and {})",
                self.x.len(),
                self.y.len()
            )));
        }
        if self.x.iter().chain(&self.y).flatten().any(|v| !v.is_finite()) {
            return Err(CliError::Input(format!("line {line}: non-finite value")));
        }
        let xs = self.x.iter().map(|v| DVector::from_column_slice(v)).collect();
        let ys = self.y.iter().map(|v| DVector::from_column_slice(v)).collect();
        Subgroup::new(self.t, xs, ys).map_err(|e| CliError::Input(format!("line {line}: {e}")))
    }
}

/// Parses one JSON-lines record; blank lines yield `None`.
pub(crate) fn parse_line(text: &str, line: usize) -> Result<Option<(Subgroup, StreamRecord)>, CliError> {
    if text.trim().is_empty() {
        return Ok(None);
    }
    let rec: StreamRecord = serde_json::from_str(text).map_err(|e| CliError::Input(format!("line {line}: {e}")))?;
    let g = rec.to_subgroup(line)?;
    Ok(Some((g, rec)))
}

/// Reads a whole JSON-lines file of records.
pub fn read_records(reader: impl BufRead) -> Result<Vec<Subgroup>, CliError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        if let Some((g, _)) = parse_line(&line?, i + 1)? {
            out.push(g);
        }
    }
    Ok(out)
}
