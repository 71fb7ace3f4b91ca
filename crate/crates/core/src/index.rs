//! Pseudo-index estimation and monotonicity diagnostics.
//!
//! The built-in estimator is ordinary least squares of a transformed response
//! on a user-expanded design matrix. Because IDR only sees the ordering of the
//! index, any estimator that orders the covariates correctly will do; other
//! estimators enter as an external index column.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stepdist::StepDistribution;

/// Singular-value ratio below which a design is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Dense row-major covariate matrix with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n_rows: usize,
    columns: Vec<String>,
    data: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(columns: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = columns.len();
        let mut data = Vec::with_capacity(rows.len() * p);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::invalid(format!(
                    "design row {i} has {} entries, expected {p}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(columns, rows.len(), data)
    }

    pub fn from_row_major(columns: Vec<String>, n_rows: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * columns.len() {
            return Err(Error::invalid("design data does not match its shape"));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let p = columns.len().max(1);
            return Err(Error::invalid(format!(
                "non-finite design entry at row {}, column {}",
                pos / p,
                pos % p
            )));
        }
        Ok(Self {
            n_rows,
            columns,
            data,
        })
    }

    /// Design with unnamed columns `x0, x1, ...`.
    pub fn unnamed(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        Self::new((0..p).map(|j| format!("x{j}")).collect(), rows)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.columns.len();
        &self.data[i * p..(i + 1) * p]
    }

    /// New design holding the given rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols());
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        DesignMatrix {
            n_rows: rows.len(),
            columns: self.columns.clone(),
            data,
        }
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_rows, self.n_cols(), &self.data)
    }
}

/// Transformation applied to the response before the least-squares fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseTransform {
    #[default]
    Identity,
    /// `log(y + 1)`, for nonnegative responses.
    Log1p,
}

impl ResponseTransform {
    pub fn apply(self, y: f64) -> Result<f64> {
        match self {
            ResponseTransform::Identity => Ok(y),
            ResponseTransform::Log1p if y >= 0.0 => Ok(y.ln_1p()),
            ResponseTransform::Log1p => Err(Error::invalid(format!(
                "log1p transform needs nonnegative responses, got {y}"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ResponseTransform::Identity => "identity",
            ResponseTransform::Log1p => "log1p",
        }
    }
}

impl std::str::FromStr for ResponseTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(ResponseTransform::Identity),
            "log1p" => Ok(ResponseTransform::Log1p),
            other => Err(Error::invalid(format!("unknown response transform `{other}`"))),
        }
    }
}

/// Linear pseudo-index `x ↦ Σ_k coefficients[k] · x_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexModel {
    pub coefficients: Vec<f64>,
    pub response_transform: ResponseTransform,
    pub columns: Vec<String>,
}

impl IndexModel {
    /// Index values `Xα` for every row.
    pub fn index_values(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.coefficients.len() {
            return Err(Error::invalid(format!(
                "design has {} columns, index model expects {}",
                x.n_cols(),
                self.coefficients.len()
            )));
        }
        Ok((0..x.n_rows())
            .map(|i| {
                x.row(i)
                    .iter()
                    .zip(&self.coefficients)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect())
    }
}

/// OLS of `transform(y)` on `x` through a QR factorization; the rank check
/// uses the singular values of the triangular factor.
pub fn fit_ols_index(
    x: &DesignMatrix,
    y: &[f64],
    transform: ResponseTransform,
) -> Result<IndexModel> {
    let (n, p) = (x.n_rows(), x.n_cols());
    if y.len() != n {
        return Err(Error::invalid(format!("{n} design rows but {} responses", y.len())));
    }
    if p == 0 {
        return Err(Error::invalid("design matrix has no columns"));
    }
    if n < p {
        return Err(Error::invalid(format!("{n} rows cannot identify {p} coefficients")));
    }
    let target = y
        .iter()
        .map(|&v| transform.apply(v))
        .collect::<Result<Vec<_>>>()?;

    let qr = x.to_nalgebra().qr();
    let r = qr.r();
    let sv = r.clone().svd(false, false).singular_values;
    let (smin, smax) = sv
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if ratio.is_nan() || ratio < RANK_TOL {
        return Err(Error::RankDeficient { ratio });
    }
    let qtb = qr.q().transpose() * DVector::from_vec(target);
    let coef = r
        .solve_upper_triangular(&qtb)
        .ok_or(Error::RankDeficient { ratio })?;
    let coefficients: Vec<f64> = coef.iter().copied().collect();
    if coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::RankDeficient { ratio });
    }
    Ok(IndexModel {
        coefficients,
        response_transform: transform,
        columns: x.columns().to_vec(),
    })
}

/// Ranks `1..=n` with ties replaced by their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(index: &[f64], y: &[f64]) -> Result<f64> {
    if index.len() != y.len() {
        return Err(Error::invalid("spearman inputs differ in length"));
    }
    if index.len() < 2 {
        return Err(Error::invalid("spearman needs at least two observations"));
    }
    let ra = average_ranks(index);
    let rb = average_ranks(y);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (a, b) in ra.iter().zip(&rb) {
        sab += (a - ma) * (b - mb);
        saa += (a - ma) * (a - ma);
        sbb += (b - mb) * (b - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "one of the sequences is constant".into(),
        ));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Index interval `[lower, upper)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexBin {
    pub lower: f64,
    pub upper: f64,
}

impl IndexBin {
    pub fn contains(&self, u: f64) -> bool {
        self.lower <= u && u < self.upper
    }
}

/// Empirical CDF of the responses falling in each index bin; empty bins are
/// left out.
pub fn binned_ecdfs(
    index: &[f64],
    y: &[f64],
    bins: &[IndexBin],
) -> Result<Vec<(IndexBin, StepDistribution)>> {
    if index.len() != y.len() {
        return Err(Error::invalid("index and responses differ in length"));
    }
    let mut out = Vec::new();
    for bin in bins {
        let members: Vec<f64> = index
            .iter()
            .zip(y)
            .filter(|(u, _)| bin.contains(**u))
            .map(|(_, &v)| v)
            .collect();
        if !members.is_empty() {
            out.push((*bin, StepDistribution::empirical(&members)?));
        }
    }
    Ok(out)
}

/// `k` bins with (roughly) equal counts, spanning every index value.
pub fn quantile_bins(index: &[f64], k: usize) -> Vec<IndexBin> {
    if index.is_empty() || k == 0 {
        return Vec::new();
    }
    let mut sorted = index.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut edges = vec![f64::NEG_INFINITY];
    for b in 1..k {
        let e = sorted[(b * n / k).min(n - 1)];
        if e > *edges.last().expect("nonempty") {
            edges.push(e);
        }
    }
    edges.push(f64::INFINITY);
    edges
        .windows(2)
        .map(|w| IndexBin {
            lower: w[0],
            upper: w[1],
        })
        .collect()
}
