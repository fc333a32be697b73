//! Tabular data model and the CSV exchange format.
//!
//! A [`Dataset`] holds `n` records of `(W, A, Y)`: `d` covariates, one binary
//! treatment and one outcome. The exchange CSV has a header with the exact
//! schema names, covariates first (schema order), then treatment, then
//! outcome.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Covariate,
    Treatment,
    Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: Kind,
    pub role: Role,
}

impl Column {
    pub fn covariate(name: impl Into<String>, kind: Kind) -> Self {
        Column {
            name: name.into(),
            kind,
            role: Role::Covariate,
        }
    }

    pub fn treatment(name: impl Into<String>) -> Self {
        Column {
            name: name.into(),
            kind: Kind::Binary,
            role: Role::Treatment,
        }
    }

    pub fn outcome(name: impl Into<String>, kind: Kind) -> Self {
        Column {
            name: name.into(),
            kind,
            role: Role::Outcome,
        }
    }
}

/// Validated column list in exchange order: covariates, treatment, outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Column>", into = "Vec<Column>")]
pub struct Schema {
    columns: Vec<Column>,
}

impl TryFrom<Vec<Column>> for Schema {
    type Error = Error;

    fn try_from(columns: Vec<Column>) -> Result<Self> {
        Schema::new(columns)
    }
}

impl From<Schema> for Vec<Column> {
    fn from(s: Schema) -> Self {
        s.columns
    }
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let k = columns.len();
        if k < 3 {
            return Err(Error::Schema(format!(
                "need at least one covariate plus treatment and outcome, got {k} columns"
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &columns {
            if c.name.is_empty() || c.name.contains(',') {
                return Err(Error::Schema(format!("invalid column name `{}`", c.name)));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name `{}`", c.name)));
            }
        }
        let treatments = columns.iter().filter(|c| c.role == Role::Treatment).count();
        let outcomes = columns.iter().filter(|c| c.role == Role::Outcome).count();
        if treatments != 1 || outcomes != 1 {
            return Err(Error::Schema(format!(
                "exactly one treatment and one outcome column required (found {treatments} and {outcomes})"
            )));
        }
        if columns[k - 2].role != Role::Treatment || columns[k - 1].role != Role::Outcome {
            return Err(Error::Schema(
                "column order must be covariates, then treatment, then outcome".into(),
            ));
        }
        if columns[k - 2].kind != Kind::Binary {
            return Err(Error::Schema("treatment column must be binary".into()));
        }
        Ok(Schema { columns })
    }

    /// Schema from covariate columns plus treatment/outcome names.
    pub fn from_parts(covariates: Vec<Column>, treatment: &str, outcome: &str, outcome_kind: Kind) -> Result<Self> {
        let mut columns: Vec<Column> = covariates
            .into_iter()
            .map(|c| Column {
                role: Role::Covariate,
                ..c
            })
            .collect();
        columns.push(Column::treatment(treatment));
        columns.push(Column::outcome(outcome, outcome_kind));
        Schema::new(columns)
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn covariates(&self) -> &[Column] {
        &self.columns[..self.columns.len() - 2]
    }

    pub fn covariate_kinds(&self) -> Vec<Kind> {
        self.covariates().iter().map(|c| c.kind).collect()
    }

    pub fn treatment(&self) -> &Column {
        &self.columns[self.columns.len() - 2]
    }

    pub fn outcome(&self) -> &Column {
        &self.columns[self.columns.len() - 1]
    }

    pub fn d(&self) -> usize {
        self.columns.len() - 2
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn with_outcome_kind(&self, kind: Kind) -> Schema {
        let mut s = self.clone();
        let last = s.columns.len() - 1;
        s.columns[last].kind = kind;
        s
    }

    /// Two schemas agree on covariate names and kinds.
    pub fn same_covariates(&self, other: &Schema) -> bool {
        self.covariates() == other.covariates()
    }

    /// Infers a schema from a header and parsed rows: the last two columns
    /// are treatment and outcome; a column is binary when every value is 0/1.
    pub fn infer(header: &[String], rows: &[Vec<f64>]) -> Result<Self> {
        let k = header.len();
        let columns = header
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let binary = rows.iter().all(|r| r[j] == 0.0 || r[j] == 1.0);
                let kind = if binary { Kind::Binary } else { Kind::Continuous };
                let role = if j + 2 == k {
                    Role::Treatment
                } else if j + 1 == k {
                    Role::Outcome
                } else {
                    Role::Covariate
                };
                Column {
                    name: name.clone(),
                    kind,
                    role,
                }
            })
            .collect();
        Schema::new(columns)
    }
}

/// Dense row-major matrix of reals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matrix {
    data: Vec<f64>,
    cols: usize,
}

impl Matrix {
    pub fn from_row_major(data: Vec<f64>, cols: usize) -> Result<Self> {
        if cols == 0 || data.len() % cols != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values cannot be split into rows of {cols}",
                data.len()
            )));
        }
        Ok(Matrix { data, cols })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has {} values, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { data, cols })
    }

    pub fn empty(cols: usize) -> Self {
        Matrix { data: Vec::new(), cols }
    }

    pub fn nrows(&self) -> usize {
        if self.cols == 0 {
            0
        } else {
            self.data.len() / self.cols
        }
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1))
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.cols, "row width mismatch");
        self.data.extend_from_slice(row);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { data, cols: self.cols }
    }
}

/// Validated table of `(W, A, Y)` records. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    covariates: Matrix,
    treatment: Vec<f64>,
    outcome: Vec<f64>,
}

impl Dataset {
    pub fn new(schema: Schema, covariates: Matrix, treatment: Vec<f64>, outcome: Vec<f64>) -> Result<Self> {
        let n = treatment.len();
        if n == 0 {
            return Err(Error::InvalidArgument("dataset must have at least one row".into()));
        }
        if covariates.ncols() != schema.d() || covariates.nrows() != n || outcome.len() != n {
            return Err(Error::Schema(format!(
                "shape mismatch: {} covariate columns x {} rows, {} treatments, {} outcomes for a schema with d = {}",
                covariates.ncols(),
                covariates.nrows(),
                n,
                outcome.len(),
                schema.d()
            )));
        }
        for (i, row) in covariates.rows().enumerate() {
            for (j, (&v, col)) in row.iter().zip(schema.covariates()).enumerate() {
                check_value(i, &schema.columns()[j].name, col.kind, v)?;
            }
        }
        for i in 0..n {
            check_value(i, &schema.treatment().name, Kind::Binary, treatment[i])?;
            check_value(i, &schema.outcome().name, schema.outcome().kind, outcome[i])?;
        }
        Ok(Dataset {
            schema,
            covariates,
            treatment,
            outcome,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n(&self) -> usize {
        self.treatment.len()
    }

    pub fn d(&self) -> usize {
        self.schema.d()
    }

    pub fn covariates(&self) -> &Matrix {
        &self.covariates
    }

    pub fn covariate_row(&self, i: usize) -> &[f64] {
        self.covariates.row(i)
    }

    pub fn treatment(&self) -> &[f64] {
        &self.treatment
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn outcome_is_binary(&self) -> bool {
        self.schema.outcome().kind == Kind::Binary
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            covariates: self.covariates.select_rows(idx),
            treatment: idx.iter().map(|&i| self.treatment[i]).collect(),
            outcome: idx.iter().map(|&i| self.outcome[i]).collect(),
        }
    }

    /// Appends validated rows `(w, a, y)` and returns the enlarged dataset.
    pub fn append(&self, covariates: &Matrix, treatment: &[f64], outcome: &[f64]) -> Result<Dataset> {
        if treatment.is_empty() {
            return Ok(self.clone());
        }
        let mut w = self.covariates.clone();
        for r in covariates.rows() {
            if r.len() != self.d() {
                return Err(Error::Schema("appended rows have the wrong width".into()));
            }
            w.push_row(r);
        }
        let mut a = self.treatment.clone();
        a.extend_from_slice(treatment);
        let mut y = self.outcome.clone();
        y.extend_from_slice(outcome);
        Dataset::new(self.schema.clone(), w, a, y)
    }

    /// Copy with a different outcome vector; the outcome kind is re-derived.
    pub fn with_outcome(&self, outcome: Vec<f64>, kind: Kind) -> Result<Dataset> {
        Dataset::new(
            self.schema.with_outcome_kind(kind),
            self.covariates.clone(),
            self.treatment.clone(),
            outcome,
        )
    }

    /// All `d + 2` columns as one matrix in exchange order.
    pub fn to_joint_matrix(&self) -> Matrix {
        let k = self.d() + 2;
        let mut data = Vec::with_capacity(self.n() * k);
        for i in 0..self.n() {
            data.extend_from_slice(self.covariate_row(i));
            data.push(self.treatment[i]);
            data.push(self.outcome[i]);
        }
        Matrix { data, cols: k }
    }

    /// Inverse of [`Dataset::to_joint_matrix`].
    pub fn from_joint_matrix(schema: Schema, joint: &Matrix) -> Result<Dataset> {
        let d = schema.d();
        if joint.ncols() != d + 2 {
            return Err(Error::Schema("joint matrix width does not match schema".into()));
        }
        let mut w = Matrix::empty(d);
        let mut a = Vec::with_capacity(joint.nrows());
        let mut y = Vec::with_capacity(joint.nrows());
        for r in joint.rows() {
            w.push_row(&r[..d]);
            a.push(r[d]);
            y.push(r[d + 1]);
        }
        Dataset::new(schema, w, a, y)
    }
}

fn check_value(row: usize, column: &str, kind: Kind, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::InvalidValue {
            row,
            column: column.to_string(),
            reason: format!("non-finite value {v}"),
        });
    }
    if kind == Kind::Binary && v != 0.0 && v != 1.0 {
        return Err(Error::InvalidValue {
            row,
            column: column.to_string(),
            reason: format!("binary column holds {v}"),
        });
    }
    Ok(())
}

fn read_raw(reader: impl Read) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut row = Vec::with_capacity(header.len());
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::InvalidValue {
                row: i,
                column: header[j].clone(),
                reason: format!("cannot parse `{field}` as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::InvalidValue {
                    row: i,
                    column: header[j].clone(),
                    reason: format!("non-finite value `{field}`"),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok((header, rows))
}

fn from_raw(schema: Schema, header: &[String], rows: Vec<Vec<f64>>) -> Result<Dataset> {
    let expected: Vec<&str> = schema.names().collect();
    if header.len() != expected.len() || header.iter().zip(&expected).any(|(h, e)| h != e) {
        return Err(Error::Schema(format!(
            "header `{}` does not match schema `{}`",
            header.join(","),
            expected.join(",")
        )));
    }
    let d = schema.d();
    let mut w = Matrix::empty(d);
    let mut a = Vec::with_capacity(rows.len());
    let mut y = Vec::with_capacity(rows.len());
    for r in rows {
        w.push_row(&r[..d]);
        a.push(r[d]);
        y.push(r[d + 1]);
    }
    Dataset::new(schema, w, a, y)
}

pub fn read_table(reader: impl Read, schema: &Schema) -> Result<Dataset> {
    let (header, rows) = read_raw(reader)?;
    from_raw(schema.clone(), &header, rows)
}

/// Loads an exchange CSV and validates it against `schema`.
pub fn load_table(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(f, schema)
}

/// Loads an exchange CSV, inferring the schema from its header and values.
pub fn load_table_inferred(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let (header, rows) = read_raw(f)?;
    let schema = Schema::infer(&header, &rows)?;
    from_raw(schema, &header, rows)
}

/// Loads a covariate-only CSV (as produced by external generators).
pub fn load_covariates(path: impl AsRef<Path>, covariates: &[Column]) -> Result<Matrix> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let (header, rows) = read_raw(f)?;
    let expected: Vec<&str> = covariates.iter().map(|c| c.name.as_str()).collect();
    if header.len() != expected.len() || header.iter().zip(&expected).any(|(h, e)| h != e) {
        return Err(Error::Schema(format!(
            "covariate header `{}` does not match `{}`",
            header.join(","),
            expected.join(",")
        )));
    }
    for (i, r) in rows.iter().enumerate() {
        for (v, c) in r.iter().zip(covariates) {
            check_value(i, &c.name, c.kind, *v)?;
        }
    }
    Matrix::from_rows(&rows, covariates.len())
}

pub fn write_table_to(ds: &Dataset, writer: impl Write) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    wtr.write_record(ds.schema().names())?;
    let mut buf = Vec::with_capacity(ds.d() + 2);
    for i in 0..ds.n() {
        buf.clear();
        buf.extend(ds.covariate_row(i).iter().map(|v| format_value(*v)));
        buf.push(format_value(ds.treatment()[i]));
        buf.push(format_value(ds.outcome()[i]));
        wtr.write_record(&buf)?;
    }
    wtr.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

pub fn write_table(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_table_to(ds, std::io::BufWriter::new(f))
}

pub fn write_covariates(w: &Matrix, columns: &[Column], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(std::io::BufWriter::new(f));
    wtr.write_record(columns.iter().map(|c| c.name.as_str()))?;
    for r in w.rows() {
        wtr.write_record(r.iter().map(|v| format_value(*v)))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_value(v: f64) -> String {
    if v == 0.0 {
        // normalise -0
        "0".to_string()
    } else {
        format!("{v}")
    }
}

/// Per-covariate location/scale for distance computations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub kinds: Vec<Kind>,
}

impl Standardizer {
    pub fn fit(ds: &Dataset) -> Self {
        Self::fit_matrix(ds.covariates(), &ds.schema().covariate_kinds())
    }

    /// Continuous columns get mean and sample sd (n - 1); binary columns and
    /// degenerate columns keep scale 1.
    pub fn fit_matrix(w: &Matrix, kinds: &[Kind]) -> Self {
        let n = w.nrows();
        let mut means = vec![0.0; kinds.len()];
        let mut scales = vec![1.0; kinds.len()];
        for (j, kind) in kinds.iter().enumerate() {
            if *kind == Kind::Binary || n == 0 {
                continue;
            }
            let mean = w.column(j).sum::<f64>() / n as f64;
            let sd = if n > 1 {
                (w.column(j).map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            means[j] = mean;
            scales[j] = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
        }
        Standardizer {
            means,
            scales,
            kinds: kinds.to_vec(),
        }
    }

    /// Identity map (no centring or scaling).
    pub fn identity(kinds: &[Kind]) -> Self {
        Standardizer {
            means: vec![0.0; kinds.len()],
            scales: vec![1.0; kinds.len()],
            kinds: kinds.to_vec(),
        }
    }

    pub fn apply_row(&self, row: &[f64], out: &mut [f64]) {
        for j in 0..row.len() {
            out[j] = match self.kinds[j] {
                Kind::Binary => row[j],
                Kind::Continuous => (row[j] - self.means[j]) / self.scales[j],
            };
        }
    }

    pub fn apply(&self, w: &Matrix) -> Matrix {
        let mut out = vec![0.0; w.as_slice().len()];
        for (src, dst) in w.rows().zip(out.chunks_exact_mut(w.ncols())) {
            self.apply_row(src, dst);
        }
        Matrix {
            data: out,
            cols: w.ncols(),
        }
    }
}

/// Draws `m` rows without replacement; deterministic in `(m, seed)`.
pub fn subsample(ds: &Dataset, m: usize, seed: u64) -> Result<Dataset> {
    if m == 0 || m > ds.n() {
        return Err(Error::InvalidArgument(format!(
            "subsample size {m} must be in 1..={}",
            ds.n()
        )));
    }
    let mut r = rng::stream(seed);
    let idx = rand::seq::index::sample(&mut r, ds.n(), m).into_vec();
    Ok(ds.select(&idx))
}
