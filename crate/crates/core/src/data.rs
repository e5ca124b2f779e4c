//! Datasets of complete endogenous records and the studies built on them.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Pscm, VarId};

/// Complete records over `columns`, stored as distinct configurations with
/// positive counts in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    columns: Vec<VarId>,
    rows: Vec<(Vec<usize>, u64)>,
}

impl Dataset {
    /// Duplicate configurations are merged; zero counts are rejected.
    pub fn new(columns: Vec<VarId>, rows: impl IntoIterator<Item = (Vec<usize>, u64)>) -> Result<Self> {
        let mut merged: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
        for (cfg, count) in rows {
            if cfg.len() != columns.len() {
                return Err(Error::InvalidData(format!(
                    "record of length {} for {} columns",
                    cfg.len(),
                    columns.len()
                )));
            }
            if count == 0 {
                return Err(Error::InvalidData("zero count".into()));
            }
            *merged.entry(cfg).or_default() += count;
        }
        if merged.is_empty() {
            return Err(Error::InvalidData("empty dataset".into()));
        }
        Ok(Dataset {
            columns,
            rows: merged.into_iter().collect(),
        })
    }

    pub fn from_records(columns: Vec<VarId>, records: impl IntoIterator<Item = Vec<usize>>) -> Result<Self> {
        Dataset::new(columns, records.into_iter().map(|r| (r, 1)))
    }

    pub fn columns(&self) -> &[VarId] {
        &self.columns
    }

    pub fn rows(&self) -> &[(Vec<usize>, u64)] {
        &self.rows
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().map(|(_, n)| n).sum()
    }

    pub fn evidence(&self, row: &[usize]) -> BTreeMap<VarId, usize> {
        self.columns.iter().copied().zip(row.iter().copied()).collect()
    }

    /// Check that records are complete over the model's endogenous variables.
    pub fn validate_for(&self, model: &Pscm) -> Result<()> {
        let mut cols = self.columns.clone();
        cols.sort();
        let endo = model.endogenous();
        if cols != endo {
            let names: Vec<&str> = self.columns.iter().map(|&c| model.name(c)).collect();
            return Err(Error::InvalidData(format!(
                "columns {names:?} do not cover exactly the endogenous variables"
            )));
        }
        for (cfg, _) in &self.rows {
            for (&c, &s) in self.columns.iter().zip(cfg) {
                if s >= model.card(c) {
                    return Err(Error::InvalidData(format!(
                        "state {s} out of range for '{}'",
                        model.name(c)
                    )));
                }
            }
        }
        Ok(())
    }

    /// Same records with columns reordered to `order`.
    pub fn reordered(&self, order: &[VarId]) -> Result<Dataset> {
        let pos: Vec<usize> = order
            .iter()
            .map(|v| {
                self.columns
                    .iter()
                    .position(|c| c == v)
                    .ok_or_else(|| Error::InvalidData(format!("missing column {v}")))
            })
            .collect::<Result<_>>()?;
        Dataset::new(
            order.to_vec(),
            self.rows
                .iter()
                .map(|(cfg, n)| (pos.iter().map(|&i| cfg[i]).collect(), *n)),
        )
    }

    /// Read a CSV with a header of variable names and an optional trailing
    /// `count` column. Cells hold state labels or indices.
    pub fn from_csv_reader<R: Read>(reader: R, model: &Pscm, origin: &Path) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::parse(origin, e))?.clone();
        let mut names: Vec<&str> = header.iter().collect();
        let has_count = names.last() == Some(&"count");
        if has_count {
            names.pop();
        }
        let columns: Vec<VarId> = names.iter().map(|n| model.id_of(n)).collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(origin, e))?;
            if rec.len() != header.len() {
                return Err(Error::parse(
                    origin,
                    format!("row {} has {} fields", line + 2, rec.len()),
                ));
            }
            let cfg = columns
                .iter()
                .zip(rec.iter())
                .map(|(&c, cell)| model.var(c).state_index(cell))
                .collect::<Result<Vec<_>>>()?;
            let count = if has_count {
                rec[names.len()]
                    .parse::<u64>()
                    .map_err(|e| Error::parse(origin, format!("row {}: bad count: {e}", line + 2)))?
            } else {
                1
            };
            if count > 0 {
                rows.push((cfg, count));
            }
        }
        let data = Dataset::new(columns, rows).map_err(|e| Error::parse(origin, e))?;
        data.validate_for(model)?;
        Ok(data)
    }

    pub fn from_csv(path: &Path, model: &Pscm) -> Result<Dataset> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Dataset::from_csv_reader(file, model, path)
    }

    /// CSV with labels and a trailing `count` column.
    pub fn to_csv(&self, model: &Pscm) -> String {
        let mut out = String::new();
        let names: Vec<&str> = self.columns.iter().map(|&c| model.name(c)).collect();
        out.push_str(&names.join(","));
        out.push_str(",count\n");
        for (cfg, n) in &self.rows {
            let cells: Vec<String> = self
                .columns
                .iter()
                .zip(cfg)
                .map(|(&c, &s)| model.var(c).state_label(s))
                .collect();
            out.push_str(&cells.join(","));
            out.push_str(&format!(",{n}\n"));
        }
        out
    }
}

/// A dataset together with the intervention it was collected under (empty for
/// observational studies).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Study {
    pub data: Dataset,
    pub intervention: BTreeMap<VarId, usize>,
}

impl Study {
    pub fn observational(data: Dataset) -> Self {
        Study {
            data,
            intervention: BTreeMap::new(),
        }
    }

    /// Records must show the intervened state on every intervened variable.
    pub fn new(data: Dataset, intervention: BTreeMap<VarId, usize>) -> Result<Self> {
        for (&v, &s) in &intervention {
            let Some(col) = data.columns().iter().position(|&c| c == v) else {
                return Err(Error::InvalidData(format!("intervened {v} is not a column")));
            };
            if let Some((cfg, _)) = data.rows().iter().find(|(cfg, _)| cfg[col] != s) {
                return Err(Error::InvalidData(format!(
                    "record {cfg:?} contradicts the intervention on {v}"
                )));
            }
        }
        Ok(Study { data, intervention })
    }

    /// The study's clone of `base`, mutilated by its intervention.
    pub fn model(&self, base: &Pscm) -> Result<Pscm> {
        base.intervene(&self.intervention)
    }

    pub fn validate_for(&self, base: &Pscm) -> Result<()> {
        self.data.validate_for(base)?;
        Study::new(self.data.clone(), self.intervention.clone()).map(|_| ())
    }
}

/// Total number of records over all studies.
pub fn total_records(studies: &[Study]) -> u64 {
    studies.iter().map(|s| s.data.total()).sum()
}
