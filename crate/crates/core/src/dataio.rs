//! Expression matrices, gene-set files and clinical tables.
//!
//! All three inputs are tab-separated text. Identifiers are matched by exact,
//! case-sensitive string equality and missing numeric cells are rejected.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genesets::GeneSetCollection;

/// Survival records are truncated to five years by default.
pub const DEFAULT_CAP_DAYS: u32 = 1825;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpressionUnit {
    /// Raw TPM; transformed to log2(TPM + 1) on load.
    Tpm,
    LogTpm,
}

impl std::str::FromStr for ExpressionUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tpm" => Ok(ExpressionUnit::Tpm),
            "logtpm" => Ok(ExpressionUnit::LogTpm),
            other => Err(Error::Config(format!("unknown expression unit `{other}`"))),
        }
    }
}

/// Genes x samples matrix of logTPM values.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    pub gene_ids: Vec<String>,
    pub sample_ids: Vec<String>,
    /// `[n_genes, n_samples]`
    pub values: Array2<f64>,
}

impl ExpressionMatrix {
    pub fn new(
        gene_ids: Vec<String>,
        sample_ids: Vec<String>,
        values: Array2<f64>,
    ) -> Result<Self> {
        if values.nrows() != gene_ids.len() || values.ncols() != sample_ids.len() {
            return Err(Error::Shape(format!(
                "matrix is {}x{} but there are {} genes and {} samples",
                values.nrows(),
                values.ncols(),
                gene_ids.len(),
                sample_ids.len()
            )));
        }
        if let Some(dup) = first_duplicate(&gene_ids) {
            return Err(Error::Duplicate {
                kind: "gene",
                name: dup.to_string(),
            });
        }
        if let Some(dup) = first_duplicate(&sample_ids) {
            return Err(Error::Duplicate {
                kind: "sample",
                name: dup.to_string(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!(
                "expression value {v} is not a finite non-negative logTPM"
            )));
        }
        Ok(ExpressionMatrix {
            gene_ids,
            sample_ids,
            values,
        })
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    /// Keeps the given sample columns, in the given order.
    pub fn select_samples(&self, idx: &[usize]) -> ExpressionMatrix {
        ExpressionMatrix {
            gene_ids: self.gene_ids.clone(),
            sample_ids: idx.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            values: self.values.select(Axis(1), idx),
        }
    }

    pub fn select_genes(&self, idx: &[usize]) -> ExpressionMatrix {
        ExpressionMatrix {
            gene_ids: idx.iter().map(|&i| self.gene_ids[i].clone()).collect(),
            sample_ids: self.sample_ids.clone(),
            values: self.values.select(Axis(0), idx),
        }
    }

    /// TSV with the same layout `load_expression` reads. Values use the
    /// shortest representation that parses back to the same `f64`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str("gene");
        for s in &self.sample_ids {
            out.push('\t');
            out.push_str(s);
        }
        out.push('\n');
        for (g, row) in self.gene_ids.iter().zip(self.values.rows()) {
            out.push_str(g);
            for v in row {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneSet {
    pub name: String,
    pub description: String,
    /// Unique symbols in first-seen order.
    pub members: Vec<String>,
}

impl GeneSet {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        members: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        let mut seen = HashSet::new();
        let members = members
            .into_iter()
            .map(Into::into)
            .filter(|m: &String| seen.insert(m.clone()))
            .collect();
        GeneSet {
            name: name.into(),
            description: description.into(),
            members,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalRecord {
    pub sample_id: String,
    pub time_days: u32,
    /// `true` when death was observed.
    pub event: bool,
    pub labels: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClinicalTable {
    pub records: Vec<ClinicalRecord>,
    /// Extra header columns, in file order.
    pub label_columns: Vec<String>,
}

impl ClinicalTable {
    pub fn get(&self, sample_id: &str) -> Option<&ClinicalRecord> {
        self.records.iter().find(|r| r.sample_id == sample_id)
    }

    /// Records for `sample_ids`, in that order. Every id must be present.
    pub fn for_samples(&self, sample_ids: &[String]) -> Result<Vec<&ClinicalRecord>> {
        let index: HashMap<&str, &ClinicalRecord> = self
            .records
            .iter()
            .map(|r| (r.sample_id.as_str(), r))
            .collect();
        sample_ids
            .iter()
            .map(|s| {
                index
                    .get(s.as_str())
                    .copied()
                    .ok_or_else(|| Error::Alignment(format!("sample `{s}` has no clinical record")))
            })
            .collect()
    }

    /// Values of one label column for `sample_ids`.
    pub fn labels_for(&self, column: &str, sample_ids: &[String]) -> Result<Vec<String>> {
        if !self.label_columns.iter().any(|c| c == column) {
            return Err(Error::Config(format!(
                "clinical table has no column `{column}`"
            )));
        }
        Ok(self
            .for_samples(sample_ids)?
            .into_iter()
            .map(|r| r.labels.get(column).cloned().unwrap_or_default())
            .collect())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("sample_id\ttime_days\tevent");
        for c in &self.label_columns {
            out.push('\t');
            out.push_str(c);
        }
        out.push('\n');
        for r in &self.records {
            let _ = write!(
                out,
                "{}\t{}\t{}",
                r.sample_id,
                r.time_days,
                u8::from(r.event)
            );
            for c in &self.label_columns {
                out.push('\t');
                out.push_str(r.labels.get(c).map(String::as_str).unwrap_or(""));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }
}

fn first_duplicate(ids: &[String]) -> Option<&str> {
    let mut seen = HashSet::with_capacity(ids.len());
    ids.iter()
        .find(|id| !seen.insert(id.as_str()))
        .map(String::as_str)
}

/// Splits text into `(1-based line number, line)` without the trailing CR,
/// skipping blank lines.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty())
}

pub fn load_expression(path: impl AsRef<Path>, unit: ExpressionUnit) -> Result<ExpressionMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_expression(&text, path, unit)
}

/// Parses an expression TSV: header row of sample ids (first cell ignored),
/// then one row per gene.
pub fn parse_expression(text: &str, path: &Path, unit: ExpressionUnit) -> Result<ExpressionMatrix> {
    let mut rows = lines(text);
    let (_, header) = rows
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty expression file"))?;
    let sample_ids: Vec<String> = header.split('\t').skip(1).map(str::to_string).collect();
    if sample_ids.is_empty() {
        return Err(Error::parse(path, 1, "header has no sample columns"));
    }
    if let Some(dup) = first_duplicate(&sample_ids) {
        return Err(Error::Duplicate {
            kind: "sample",
            name: dup.to_string(),
        });
    }

    let mut gene_ids = Vec::new();
    let mut seen = HashSet::new();
    let mut data = Vec::new();
    for (lineno, line) in rows {
        let mut fields = line.split('\t');
        let gene = fields.next().unwrap_or_default();
        let before = data.len();
        for cell in fields {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("`{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("`{cell}` is not finite"),
                ));
            }
            if v < 0.0 {
                return Err(Error::Domain(format!(
                    "{}:{lineno}: negative expression value {v} for gene `{gene}`",
                    path.display()
                )));
            }
            data.push(match unit {
                ExpressionUnit::Tpm => (v + 1.0).log2(),
                ExpressionUnit::LogTpm => v,
            });
        }
        let got = data.len() - before;
        if got != sample_ids.len() {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {} values, found {got}", sample_ids.len()),
            ));
        }
        if !seen.insert(gene.to_string()) {
            return Err(Error::Duplicate {
                kind: "gene",
                name: gene.to_string(),
            });
        }
        gene_ids.push(gene.to_string());
    }
    if gene_ids.is_empty() {
        return Err(Error::parse(path, 1, "no gene rows"));
    }
    let values = Array2::from_shape_vec((gene_ids.len(), sample_ids.len()), data)
        .map_err(|e| Error::Shape(e.to_string()))?;
    Ok(ExpressionMatrix {
        gene_ids,
        sample_ids,
        values,
    })
}

/// Per-gene mean and sample standard deviation (n - 1 denominator).
pub fn row_mean_sd(values: &Array2<f64>) -> Vec<(f64, f64)> {
    let n = values.ncols() as f64;
    values
        .rows()
        .into_iter()
        .map(|row| {
            let mean = row.sum() / n;
            let ss: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum();
            let sd = if n > 1.0 {
                (ss / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            (mean, sd)
        })
        .collect()
}

/// Keeps genes whose logTPM row mean exceeds `mean_min` and whose sample
/// standard deviation exceeds `sd_min`. Row order is preserved.
pub fn filter_genes(m: &ExpressionMatrix, mean_min: f64, sd_min: f64) -> Result<ExpressionMatrix> {
    if m.n_genes() == 0 || m.n_samples() == 0 {
        return Err(Error::EmptyResult("expression matrix is empty".into()));
    }
    let keep: Vec<usize> = row_mean_sd(&m.values)
        .into_iter()
        .enumerate()
        .filter(|(_, (mean, sd))| *mean > mean_min && *sd > sd_min)
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyResult(format!(
            "no gene passes the expression filter (mean > {mean_min}, sd > {sd_min})"
        )));
    }
    Ok(m.select_genes(&keep))
}

pub fn load_gmt(path: impl AsRef<Path>) -> Result<GeneSetCollection> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_gmt(&text, path)
}

/// One set per line: `name<TAB>description<TAB>gene<TAB>gene...`.
pub fn parse_gmt(text: &str, path: &Path) -> Result<GeneSetCollection> {
    let mut sets = Vec::new();
    let mut names = HashSet::new();
    for (lineno, line) in lines(text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected at least 3 fields, found {}", fields.len()),
            ));
        }
        let name = fields[0];
        if !names.insert(name.to_string()) {
            return Err(Error::Duplicate {
                kind: "gene set",
                name: name.to_string(),
            });
        }
        let set = GeneSet::new(
            name,
            fields[1],
            fields[2..].iter().filter(|g| !g.is_empty()).copied(),
        );
        if set.is_empty() {
            return Err(Error::parse(
                path,
                lineno,
                format!("gene set `{name}` has no members"),
            ));
        }
        sets.push(set);
    }
    GeneSetCollection::new(sets)
}

pub fn load_clinical(path: impl AsRef<Path>, cap_days: u32) -> Result<ClinicalTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_clinical(&text, path, cap_days)
}

pub fn parse_clinical(text: &str, path: &Path, cap_days: u32) -> Result<ClinicalTable> {
    let mut rows = lines(text);
    let (_, header) = rows
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing header"))?;
    let columns: Vec<&str> = header.split('\t').collect();
    let find = |name: &str| {
        columns
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::parse(path, 1, format!("missing column `{name}`")))
    };
    let (id_col, time_col, event_col) = (find("sample_id")?, find("time_days")?, find("event")?);
    let label_cols: Vec<(usize, String)> = columns
        .iter()
        .enumerate()
        .filter(|(i, _)| ![id_col, time_col, event_col].contains(i))
        .map(|(i, c)| (i, c.to_string()))
        .collect();

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in rows {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != columns.len() {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {} fields, found {}", columns.len(), fields.len()),
            ));
        }
        let sample_id = fields[id_col].to_string();
        let time_txt = fields[time_col].trim();
        let time: i64 = time_txt.parse().map_err(|_| {
            Error::parse(path, lineno, format!("time `{time_txt}` is not an integer"))
        })?;
        if time < 0 {
            return Err(Error::Domain(format!(
                "{}:{lineno}: negative survival time {time}",
                path.display()
            )));
        }
        let time_days = u32::try_from(time)
            .map_err(|_| Error::parse(path, lineno, format!("time {time} out of range")))?;
        let event = match fields[event_col].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("event `{other}` is not 0 or 1"),
                ))
            }
        };
        if !seen.insert(sample_id.clone()) {
            return Err(Error::Duplicate {
                kind: "sample",
                name: sample_id,
            });
        }
        let labels = label_cols
            .iter()
            .map(|(i, c)| (c.clone(), fields[*i].to_string()))
            .collect();
        records.push(ClinicalRecord {
            sample_id,
            time_days,
            event,
            labels,
        });
    }
    let table = ClinicalTable {
        records,
        label_columns: label_cols.into_iter().map(|(_, c)| c).collect(),
    };
    Ok(apply_cap(table, cap_days))
}

/// Deaths after `cap_days` become censored at `cap_days`.
pub fn apply_cap(mut table: ClinicalTable, cap_days: u32) -> ClinicalTable {
    for r in &mut table.records {
        if r.time_days > cap_days {
            r.time_days = cap_days;
            r.event = false;
        }
    }
    table
}

/// Restricts expression, gene sets and (optionally) clinical records to
/// their shared genes and samples.
pub fn align(
    m: &ExpressionMatrix,
    c: &GeneSetCollection,
    t: Option<&ClinicalTable>,
) -> Result<(ExpressionMatrix, GeneSetCollection, Option<ClinicalTable>)> {
    let expressed: HashSet<&str> = m.gene_ids.iter().map(String::as_str).collect();
    let sets: Vec<GeneSet> = c
        .sets
        .iter()
        .map(|s| GeneSet {
            name: s.name.clone(),
            description: s.description.clone(),
            members: s
                .members
                .iter()
                .filter(|g| expressed.contains(g.as_str()))
                .cloned()
                .collect(),
        })
        .filter(|s| !s.is_empty())
        .collect();
    let covered: HashSet<&str> = sets
        .iter()
        .flat_map(|s| s.members.iter().map(String::as_str))
        .collect();
    let gene_idx: Vec<usize> = m
        .gene_ids
        .iter()
        .enumerate()
        .filter(|(_, g)| covered.contains(g.as_str()))
        .map(|(i, _)| i)
        .collect();
    if gene_idx.is_empty() {
        return Err(Error::Alignment(
            "expression genes and gene-set members do not overlap".into(),
        ));
    }
    let mut aligned = m.select_genes(&gene_idx);
    let collection = GeneSetCollection::new(sets)?;

    let clinical = match t {
        None => None,
        Some(t) => {
            let by_id: HashMap<&str, &ClinicalRecord> = t
                .records
                .iter()
                .map(|r| (r.sample_id.as_str(), r))
                .collect();
            let sample_idx: Vec<usize> = aligned
                .sample_ids
                .iter()
                .enumerate()
                .filter(|(_, s)| by_id.contains_key(s.as_str()))
                .map(|(i, _)| i)
                .collect();
            if sample_idx.is_empty() {
                return Err(Error::Alignment(
                    "expression samples and clinical records do not overlap".into(),
                ));
            }
            aligned = aligned.select_samples(&sample_idx);
            let records = aligned
                .sample_ids
                .iter()
                .map(|s| by_id[s.as_str()].clone())
                .collect();
            Some(ClinicalTable {
                records,
                label_columns: t.label_columns.clone(),
            })
        }
    };
    Ok((aligned, collection, clinical))
}
