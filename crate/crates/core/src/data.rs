//! Observation matrices: CSV ingestion, standardization and the synthetic
//! generators used by the simulation studies.

use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::rng::{standard_normal, stream_rng, student_t};
use crate::{Error, Result};

/// Dense `n x q` matrix of observations stored row-major; rows are
/// observations, columns are features.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n: usize,
    q: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(n: usize, q: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || q == 0 {
            return Err(Error::Dimension(format!("matrix must be non-empty, got {n}x{q}")));
        }
        if values.len() != n * q {
            return Err(Error::Dimension(format!(
                "expected {} values for a {n}x{q} matrix, got {}",
                n * q,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite entry at row {}, column {}",
                pos / q,
                pos % q
            )));
        }
        Ok(Self { n, q, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let q = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(n * q);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != q {
                return Err(Error::Dimension(format!(
                    "row {i} has {} columns, expected {q}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::new(n, q, values)
    }

    /// Wraps values produced internally (already finite and correctly sized).
    pub(crate) fn from_raw(n: usize, q: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n * q);
        Self { n, q, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.q..(i + 1) * self.q]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.q)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.q + j]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `a * X + 1 b^T`.
    pub fn affine(&self, a: f64, b: &[f64]) -> Result<Self> {
        if b.len() != self.q {
            return Err(Error::Dimension(format!(
                "shift has length {}, expected {}",
                b.len(),
                self.q
            )));
        }
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(idx, v)| a * v + b[idx % self.q])
            .collect();
        Self::new(self.n, self.q, values)
    }

    /// Rows reordered so that row `i` of the output is row `order[i]` of `self`.
    pub fn permute_rows(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n {
            return Err(Error::Dimension("permutation length mismatch".into()));
        }
        let mut values = Vec::with_capacity(self.values.len());
        for &i in order {
            values.extend_from_slice(self.row(i));
        }
        Ok(Self::from_raw(self.n, self.q, values))
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        if columns.is_empty() || columns.iter().any(|&c| c >= self.q) {
            return Err(Error::Dimension("column selection out of range".into()));
        }
        let mut values = Vec::with_capacity(self.n * columns.len());
        for row in self.rows() {
            values.extend(columns.iter().map(|&c| row[c]));
        }
        Ok(Self::from_raw(self.n, columns.len(), values))
    }
}

/// Reads a numeric CSV file. Rows are observations; at least three are
/// required since every test needs `m >= 3` points.
pub fn load_csv<P: AsRef<Path>>(path: P, has_header: bool) -> Result<DataMatrix> {
    let file = std::fs::File::open(path)?;
    read_csv(file, has_header)
}

pub fn read_csv<R: Read>(reader: R, has_header: bool) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut q = None;
    let mut n = 0;
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + usize::from(has_header);
        let record = record.map_err(|e| Error::Parse {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        let width = *q.get_or_insert(record.len());
        if record.len() != width {
            return Err(Error::Parse {
                row,
                column: record.len().min(width),
                message: format!("expected {width} columns, found {}", record.len()),
            });
        }
        for (column, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column,
                message: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column,
                    message: "non-finite value".into(),
                });
            }
            values.push(v);
        }
        n += 1;
    }
    if n < 3 {
        return Err(Error::Dimension(format!("need at least 3 observations, found {n}")));
    }
    DataMatrix::new(n, q.unwrap_or(0), values)
}

/// Writes the matrix as headerless CSV using round-trip float formatting.
pub fn write_csv<W: Write>(x: &DataMatrix, mut writer: W) -> Result<()> {
    for row in x.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(writer, "{}", line.join(","))?;
    }
    Ok(())
}

/// Centers every column and scales it to unit sample standard deviation
/// (denominator `n - 1`).
pub fn standardize(x: &DataMatrix) -> Result<DataMatrix> {
    let (n, q) = (x.n(), x.q());
    if n < 2 {
        return Err(Error::Dimension("standardization needs at least 2 rows".into()));
    }
    let mut means = vec![0.0; q];
    let mut sds = vec![0.0; q];
    for j in 0..q {
        let mean = x.column(j).sum::<f64>() / n as f64;
        let ss: f64 = x.column(j).map(|v| (v - mean).powi(2)).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        let scale = x.column(j).fold(0.0f64, |acc, v| acc.max(v.abs()));
        if sd <= 1e-14 * scale.max(f64::MIN_POSITIVE) || sd == 0.0 {
            return Err(Error::DegenerateColumn(j));
        }
        means[j] = mean;
        sds[j] = sd;
    }
    let values = x
        .values()
        .iter()
        .enumerate()
        .map(|(idx, v)| (v - means[idx % q]) / sds[idx % q])
        .collect();
    Ok(DataMatrix::from_raw(n, q, values))
}

/// Isotropic Gaussian mixture: `sizes[c]` rows drawn from
/// `N(means[c], sigma^2 I)`, emitted component by component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub means: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
    pub sigma: f64,
    /// Signal strength the means were built from; informational.
    pub delta: f64,
}

impl MixtureSpec {
    /// A single zero-mean component.
    pub fn null(n: usize, q: usize, sigma: f64) -> Self {
        Self {
            means: vec![vec![0.0; q]],
            sizes: vec![n],
            sigma,
            delta: 0.0,
        }
    }

    /// Two components at `(0,0)` and `(delta,0)`, 15 points each.
    pub fn setting1(delta: f64) -> Self {
        Self {
            means: vec![vec![0.0, 0.0], vec![delta, 0.0]],
            sizes: vec![15, 15],
            sigma: 1.0,
            delta,
        }
    }

    /// Three components on an equilateral triangle of side `delta`.
    pub fn setting2(delta: f64) -> Self {
        Self {
            means: vec![
                vec![0.0, 0.0],
                vec![delta, 0.0],
                vec![delta / 2.0, delta * 3f64.sqrt() / 2.0],
            ],
            sizes: vec![10, 10, 10],
            sigma: 1.0,
            delta,
        }
    }

    /// Three collinear components at `0`, `delta` and `2 delta` on the first axis.
    pub fn setting3(delta: f64) -> Self {
        Self {
            means: vec![vec![0.0, 0.0], vec![delta, 0.0], vec![2.0 * delta, 0.0]],
            sizes: vec![10, 10, 10],
            sigma: 1.0,
            delta,
        }
    }

    pub fn n(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn q(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.means.is_empty() || self.means.len() != self.sizes.len() {
            return Err(Error::InvalidArgument(
                "mixture needs one size per component mean".into(),
            ));
        }
        let q = self.q();
        if q == 0 || self.means.iter().any(|m| m.len() != q) {
            return Err(Error::InvalidArgument("component means must share a dimension".into()));
        }
        if self.sizes.contains(&0) {
            return Err(Error::InvalidArgument("component sizes must be positive".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument("sigma must be finite and nonnegative".into()));
        }
        if self.means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("component means must be finite".into()));
        }
        Ok(())
    }
}

/// Generating component of each row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrueLabels(pub Vec<usize>);

impl TrueLabels {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn gen_mixture(spec: &MixtureSpec, seed: u64) -> Result<(DataMatrix, TrueLabels)> {
    spec.validate()?;
    let (n, q) = (spec.n(), spec.q());
    let mut rng = stream_rng(seed, 0);
    let mut values = Vec::with_capacity(n * q);
    let mut labels = Vec::with_capacity(n);
    for (component, (mean, &size)) in spec.means.iter().zip(&spec.sizes).enumerate() {
        for _ in 0..size {
            for &mu in mean {
                values.push(mu + spec.sigma * standard_normal(&mut rng));
            }
            labels.push(component);
        }
    }
    Ok((DataMatrix::from_raw(n, q, values), TrueLabels(labels)))
}

/// Null-model noise families that break the Gaussian isotropic assumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Misspecification {
    /// i.i.d. Student-t with 5 degrees of freedom.
    T5,
    /// i.i.d. Student-t with 10 degrees of freedom.
    T10,
    /// Mean-zero Gaussian rows with covariance `diag(1, 2)`.
    NonIsotropic,
}

impl Misspecification {
    /// Average per-coordinate noise standard deviation.
    pub fn noise_sd(self) -> f64 {
        match self {
            Misspecification::T5 => (5.0f64 / 3.0).sqrt(),
            Misspecification::T10 => (10.0f64 / 8.0).sqrt(),
            Misspecification::NonIsotropic => 1.5f64.sqrt(),
        }
    }
}

impl FromStr for Misspecification {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t5" => Ok(Self::T5),
            "t10" => Ok(Self::T10),
            "noniso" => Ok(Self::NonIsotropic),
            other => Err(Error::InvalidArgument(format!("unknown misspecification kind {other:?}"))),
        }
    }
}

pub fn gen_misspecified(kind: Misspecification, n: usize, q: usize, seed: u64) -> Result<DataMatrix> {
    if n == 0 || q == 0 {
        return Err(Error::Dimension(format!("matrix must be non-empty, got {n}x{q}")));
    }
    let mut rng = stream_rng(seed, 0);
    let values: Vec<f64> = match kind {
        Misspecification::T5 => (0..n * q).map(|_| student_t(&mut rng, 5)).collect(),
        Misspecification::T10 => (0..n * q).map(|_| student_t(&mut rng, 10)).collect(),
        Misspecification::NonIsotropic => {
            if q != 2 {
                return Err(Error::InvalidArgument("non-isotropic noise is defined for q = 2".into()));
            }
            let sd = [1.0, 2f64.sqrt()];
            (0..n * q).map(|idx| sd[idx % 2] * standard_normal(&mut rng)).collect()
        }
    };
    Ok(DataMatrix::from_raw(n, q, values))
}
